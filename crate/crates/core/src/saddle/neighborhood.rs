use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{ProbeGrid, SaddleError};
use crate::bundle::{BundleError, BundleSample, CriticalManifold};
use crate::grassmann::Subspace;
use crate::linalg::sym_eigen;

/// Relative slack in `‖v±‖ / r±` for boundary classification.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Default bound on the part of `x − m` outside `X⁻_m ⊕ X⁺_m`.
pub const DEFAULT_FIBER_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Interior,
    /// `‖v⁻‖ = r⁻`, `‖v⁺‖ < r⁺`.
    MinusBoundary,
    /// `‖v⁺‖ = r⁺`, `‖v⁻‖ < r⁻`.
    PlusBoundary,
    Corner,
    Outside,
}

impl Region {
    pub fn in_closure(self) -> bool {
        self != Region::Outside
    }

    pub fn on_minus_boundary(self) -> bool {
        matches!(self, Region::MinusBoundary | Region::Corner)
    }

    pub fn on_plus_boundary(self) -> bool {
        matches!(self, Region::PlusBoundary | Region::Corner)
    }
}

/// `x = m + v⁻ + v⁺ + residual`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub params: Vec<f64>,
    pub foot: DVector<f64>,
    pub v_minus: DVector<f64>,
    pub v_plus: DVector<f64>,
    pub residual: f64,
    /// `‖v⁻‖ / r⁻`.
    pub minus_ratio: f64,
    /// `‖v⁺‖ / r⁺`.
    pub plus_ratio: f64,
}

/// Tubular neighborhood of a sampled critical manifold. Fibers between
/// samples come from interpolating `P⁺ − P⁻` and re-splitting it on the
/// normal space of the exact chart.
#[derive(Debug, Clone)]
pub struct SaddleNeighborhood {
    manifold: CriticalManifold,
    bundle: BundleSample,
    r_minus: f64,
    r_plus: f64,
    fiber_tol: f64,
    signed: Vec<DMatrix<f64>>,
    k_minus: usize,
    k_plus: usize,
}

pub fn build_neighborhood(
    manifold: &CriticalManifold,
    bundle: &BundleSample,
    r_minus: f64,
    r_plus: f64,
    fiber_tol: f64,
) -> Result<SaddleNeighborhood, SaddleError> {
    for r in [r_minus, r_plus] {
        if !(r > 0.0 && r.is_finite()) {
            return Err(SaddleError::InvalidRadius { r_minus, r_plus });
        }
    }
    if bundle.len() != manifold.len() || bundle.ambient_dim() != manifold.ambient_dim() {
        return Err(BundleError::InconsistentScenario("bundle does not belong to the manifold".into()).into());
    }
    let signed = (0..bundle.len()).map(|i| bundle.x_plus[i].projector() - bundle.x_minus[i].projector()).collect();
    let nbhd = SaddleNeighborhood {
        manifold: manifold.clone(),
        bundle: bundle.clone(),
        r_minus,
        r_plus,
        fiber_tol,
        signed,
        k_minus: bundle.x_minus[0].dim(),
        k_plus: bundle.x_plus[0].dim(),
    };
    nbhd.check_injectivity(&ProbeGrid::default())?;
    Ok(nbhd)
}

impl SaddleNeighborhood {
    pub fn manifold(&self) -> &CriticalManifold {
        &self.manifold
    }

    pub fn bundle(&self) -> &BundleSample {
        &self.bundle
    }

    pub fn r_minus(&self) -> f64 {
        self.r_minus
    }

    pub fn r_plus(&self) -> f64 {
        self.r_plus
    }

    pub fn fiber_tol(&self) -> f64 {
        self.fiber_tol
    }

    /// `(dim X⁻, dim X⁺)`.
    pub fn fiber_dims(&self) -> (usize, usize) {
        (self.k_minus, self.k_plus)
    }

    pub fn ambient_dim(&self) -> usize {
        self.manifold.ambient_dim()
    }

    /// `(X⁻, X⁺)` at chart parameters `params`.
    pub fn fibers_at(&self, params: &[f64]) -> (Subspace<f64>, Subspace<f64>) {
        let n = self.ambient_dim();
        let mut s = DMatrix::zeros(n, n);
        for (i, w) in self.manifold.interpolation_weights(params) {
            if w != 0.0 {
                s += &self.signed[i] * w;
            }
        }
        let normal = DMatrix::identity(n, n) - self.manifold.tangent_at(params).projector();
        let eig = sym_eigen(&(&normal * s * &normal));
        let pick = |cols: std::ops::Range<usize>| {
            let mut b = DMatrix::zeros(n, cols.len());
            for (c, j) in cols.enumerate() {
                b.set_column(c, &eig.vectors.column(j));
            }
            Subspace::span(&b)
        };
        (pick(0..self.k_minus), pick(n - self.k_plus..n))
    }

    /// Continuous foot point, then orthogonal fiber coordinates.
    pub fn decompose(&self, x: &DVector<f64>) -> Decomposition {
        let params = self.manifold.foot_params(x);
        let foot = self.manifold.chart(&params);
        let (xm, xp) = self.fibers_at(&params);
        let v = x - &foot;
        let v_minus = xm.project(&v);
        let v_plus = xp.project(&v);
        let residual = (&v - &v_minus - &v_plus).norm();
        Decomposition {
            minus_ratio: v_minus.norm() / self.r_minus,
            plus_ratio: v_plus.norm() / self.r_plus,
            params,
            foot,
            v_minus,
            v_plus,
            residual,
        }
    }

    pub fn region_of(&self, d: &Decomposition) -> Region {
        let (a, b) = (d.minus_ratio, d.plus_ratio);
        if d.residual > self.fiber_tol || a > 1.0 + BOUNDARY_TOL || b > 1.0 + BOUNDARY_TOL {
            return Region::Outside;
        }
        match ((a - 1.0).abs() <= BOUNDARY_TOL, (b - 1.0).abs() <= BOUNDARY_TOL) {
            (true, true) => Region::Corner,
            (true, false) => Region::MinusBoundary,
            (false, true) => Region::PlusBoundary,
            (false, false) => Region::Interior,
        }
    }

    pub fn classify(&self, x: &DVector<f64>) -> Region {
        self.region_of(&self.decompose(x))
    }

    /// Membership in the open neighborhood `B`.
    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.classify(x) == Region::Interior
    }

    pub fn in_closure(&self, x: &DVector<f64>) -> bool {
        self.classify(x).in_closure()
    }

    /// `p_M(x)`.
    pub fn project_to_manifold(&self, x: &DVector<f64>) -> DVector<f64> {
        self.manifold.foot_point(x)
    }

    /// `m_i + X⁻_i c⁻ + X⁺_i c⁺` with fiber coordinates `c±`.
    pub fn point_at(&self, i: usize, c_minus: &DVector<f64>, c_plus: &DVector<f64>) -> DVector<f64> {
        let m = &self.manifold.samples()[i].point;
        m + self.bundle.x_minus[i].basis() * c_minus + self.bundle.x_plus[i].basis() * c_plus
    }

    /// Corner probes `m + r⁻u⁻ + r⁺u⁺` from each sample must decompose back
    /// to the same foot point and fiber coordinates.
    fn check_injectivity(&self, grid: &ProbeGrid) -> Result<(), SaddleError> {
        let mut minus = grid.sphere(self.k_minus);
        minus.push(DVector::zeros(self.k_minus));
        let mut plus = grid.sphere(self.k_plus);
        plus.push(DVector::zeros(self.k_plus));
        let scale = 1.0 + self.manifold.diameter();
        let failures: Vec<(usize, f64)> = grid
            .sample_indices(self.manifold.len())
            .into_par_iter()
            .filter_map(|i| {
                let m = &self.manifold.samples()[i].point;
                let mut worst = 0.0f64;
                for um in &minus {
                    for up in &plus {
                        let x = self.point_at(i, &(um * self.r_minus), &(up * self.r_plus));
                        let d = self.decompose(&x);
                        let offset = (&d.foot - m).norm();
                        let expected = &x - m;
                        let coord_err = (&d.v_minus + &d.v_plus - expected).norm();
                        worst = worst.max(offset.max(coord_err));
                    }
                }
                (worst > 1e-6 * scale).then_some((i, worst))
            })
            .collect();
        match failures.first() {
            Some(&(sample, offset)) => Err(SaddleError::TubularRadiusExceeded { sample, offset }),
            None => Ok(()),
        }
    }
}
