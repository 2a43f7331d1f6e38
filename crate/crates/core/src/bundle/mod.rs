//! Critical manifolds sampled on periodic grids, the Hessian splitting
//! `X = X⁻_m ⊕ T_mM ⊕ X⁺_m` along them, smoothing of operator fields and
//! Galerkin reductions onto spans of `L`-eigenvectors.

mod galerkin;
mod manifold;
mod mollify;

pub use galerkin::{
    check_reduction_limits, galerkin_basis, galerkin_reduce, galerkin_sweep, GalerkinDiagnostics, GalerkinOptions,
    GalerkinReduction, GalerkinSweep, LimitsReport,
};
pub use manifold::{sample_manifold, ChartGeometry, CriticalManifold, ManifoldKind, ManifoldSample, MIN_SAMPLES};
pub use mollify::{mollify_field, smooth_entries, OperatorField};

use rayon::prelude::*;
use thiserror::Error;

use crate::functional::{FunctionalError, HessianMode, SplitFunctional};
use crate::grassmann::{gap_distance, GrassmannError, Subspace};
use crate::spectral::{spectral_split, SpectralError, SymOperator, DEFAULT_ZERO_TOL};

/// Default bound on `‖∇Φ(m)‖` at manifold samples.
pub const DEFAULT_CRIT_TOL: f64 = 1e-8;

/// Default bound on `d(X⁰_m, T_mM)`.
pub const DEFAULT_ND_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BundleError {
    #[error("unsupported manifold kind {0:?}")]
    UnsupportedKind(String),
    #[error("{kind} needs ambient dimension at least {required}, got {ambient_dim}")]
    DimensionTooSmall { kind: ManifoldKind, ambient_dim: usize, required: usize },
    #[error("need at least {minimum} samples per parameter, got {count}")]
    TooFewSamples { count: usize, minimum: usize },
    #[error("chart geometry does not match the ambient dimension or is not orthonormal")]
    InvalidGeometry,
    #[error("sample {sample} is not critical: gradient norm {residual}")]
    NotCritical { sample: usize, residual: f64 },
    #[error("sample {sample} is degenerate: kernel dimension {kernel_dim} (expected {expected}), kernel-to-tangent distance {nd_residual}")]
    Degenerate { sample: usize, kernel_dim: usize, expected: usize, nd_residual: f64 },
    #[error("sample {sample}: contour captured {captured} eigenvalues, expected {expected}")]
    KernelDimensionUnrecoverable { sample: usize, captured: usize, expected: usize },
    #[error("bandwidth {bandwidth} must exceed the grid spacing {spacing}")]
    InvalidBandwidth { bandwidth: f64, spacing: f64 },
    #[error("sample {sample}: kernel collapses in the Galerkin space (pseudodistance {delta})")]
    KernelCollapse { sample: usize, delta: f64 },
    #[error("sample {sample}: reduced operator lost its spectral gap ({reason})")]
    GapLost { sample: usize, reason: String },
    #[error("inconsistent inputs: {0}")]
    InconsistentScenario(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Grassmann(#[from] GrassmannError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberOptions {
    pub zero_tol: f64,
    pub nd_tol: f64,
    pub crit_tol: f64,
    /// `None` uses the analytic Hessian when available, central differences
    /// otherwise.
    pub hessian: Option<HessianMode>,
}

impl Default for FiberOptions {
    fn default() -> Self {
        Self { zero_tol: DEFAULT_ZERO_TOL, nd_tol: DEFAULT_ND_TOL, crit_tol: DEFAULT_CRIT_TOL, hessian: None }
    }
}

/// Per-sample spectral splitting of the Hessian along the manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleSample {
    pub x_minus: Vec<Subspace<f64>>,
    pub x_zero: Vec<Subspace<f64>>,
    pub x_plus: Vec<Subspace<f64>>,
    pub gaps: Vec<f64>,
    pub hessians: Vec<SymOperator<f64>>,
    /// `d(X⁰_m, T_mM)` per sample.
    pub nd_residuals: Vec<f64>,
    /// `max ‖∇Φ(m)‖` over samples.
    pub crit_residual: f64,
    /// `max d(X±_m, X±_{m'})` over adjacent samples.
    pub continuity: f64,
    /// Adjacent sample pairs of the underlying grid.
    pub pairs: Vec<(usize, usize)>,
}

impl BundleSample {
    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.x_zero.first().map_or(0, |s| s.ambient_dim())
    }

    pub fn min_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_nd_residual(&self) -> f64 {
        self.nd_residuals.iter().copied().fold(0.0, f64::max)
    }
}

fn pick_mode(f: &SplitFunctional, mode: Option<HessianMode>) -> HessianMode {
    mode.unwrap_or(if f.has_analytic_hessian() { HessianMode::Analytic } else { HessianMode::CentralFd { step: None } })
}

/// Checks criticality and nondegeneracy at every sample and records the
/// splitting of the Hessian there.
pub fn fiber_splitting(
    f: &SplitFunctional,
    manifold: &CriticalManifold,
    opts: &FiberOptions,
) -> Result<BundleSample, BundleError> {
    let mode = pick_mode(f, opts.hessian);
    let d = manifold.dim();
    let per_sample: Vec<Result<_, BundleError>> = manifold
        .samples()
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let residual = f.gradient(&s.point).norm();
            if residual > opts.crit_tol {
                return Err(BundleError::NotCritical { sample: i, residual });
            }
            let h = f.hessian_at(&s.point, mode)?;
            let split = spectral_split(&h, opts.zero_tol)?;
            let nd = if split.x_zero.dim() == d { gap_distance(&split.x_zero, &s.tangent)? } else { 1.0 };
            if split.x_zero.dim() != d || nd > opts.nd_tol {
                return Err(BundleError::Degenerate {
                    sample: i,
                    kernel_dim: split.x_zero.dim(),
                    expected: d,
                    nd_residual: nd,
                });
            }
            Ok((split, h, nd, residual))
        })
        .collect();

    let mut out = BundleSample {
        x_minus: Vec::new(),
        x_zero: Vec::new(),
        x_plus: Vec::new(),
        gaps: Vec::new(),
        hessians: Vec::new(),
        nd_residuals: Vec::new(),
        crit_residual: 0.0,
        continuity: 0.0,
        pairs: manifold.adjacent_pairs(),
    };
    for r in per_sample {
        let (split, h, nd, residual) = r?;
        out.x_minus.push(split.x_minus);
        out.x_zero.push(split.x_zero);
        out.x_plus.push(split.x_plus);
        out.gaps.push(split.gap);
        out.hessians.push(h);
        out.nd_residuals.push(nd);
        out.crit_residual = out.crit_residual.max(residual);
    }
    out.continuity = out
        .pairs
        .par_iter()
        .map(|&(i, j)| {
            let dm = gap_distance(&out.x_minus[i], &out.x_minus[j]).unwrap_or(1.0);
            let dp = gap_distance(&out.x_plus[i], &out.x_plus[j]).unwrap_or(1.0);
            dm.max(dp)
        })
        .reduce(|| 0.0, f64::max);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use std::sync::Arc;

    fn circle_energy(with_saddle: bool) -> SplitFunctional {
        let l = SymOperator::from_diagonal(&[0.0, 0.0, if with_saddle { -1.0 } else { 0.0 }]);
        SplitFunctional::new(
            l,
            Arc::new(|x: &DVector<f64>| 0.25 * (x[0] * x[0] + x[1] * x[1] - 1.0).powi(2)),
            Arc::new(|x: &DVector<f64>| {
                let s = x[0] * x[0] + x[1] * x[1] - 1.0;
                DVector::from_vec(vec![s * x[0], s * x[1], 0.0])
            }),
        )
        .with_hessian(Arc::new(|x: &DVector<f64>| {
            let s = x[0] * x[0] + x[1] * x[1] - 1.0;
            DMatrix::from_row_slice(
                3,
                3,
                &[
                    s + 2.0 * x[0] * x[0],
                    2.0 * x[0] * x[1],
                    0.0,
                    2.0 * x[0] * x[1],
                    s + 2.0 * x[1] * x[1],
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                ],
            )
        }))
    }

    #[test]
    fn circle_splitting_is_radial_tangent_vertical() {
        let m = sample_manifold(ManifoldKind::Circle, 3, 64, None).unwrap();
        let b = fiber_splitting(&circle_energy(true), &m, &FiberOptions::default()).unwrap();
        assert!(b.max_nd_residual() <= 1e-8);
        for (i, s) in m.samples().iter().enumerate() {
            let radial = Subspace::span(&DMatrix::from_column_slice(3, 1, s.point.as_slice()));
            assert!(gap_distance(&b.x_plus[i], &radial).unwrap() < 1e-12);
            assert!(gap_distance(&b.x_minus[i], &Subspace::coordinate(3, &[2])).unwrap() < 1e-12);
            assert!((b.gaps[i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_saddle_direction_is_degenerate() {
        let m = sample_manifold(ManifoldKind::Circle, 3, 16, None).unwrap();
        match fiber_splitting(&circle_energy(false), &m, &FiberOptions::default()) {
            Err(BundleError::Degenerate { kernel_dim, expected, .. }) => {
                assert_eq!((kernel_dim, expected), (2, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn off_manifold_samples_are_not_critical() {
        let geometry = ChartGeometry { radius: 1.1, ..ChartGeometry::standard(3) };
        let m = sample_manifold(ManifoldKind::Circle, 3, 16, Some(geometry)).unwrap();
        assert!(matches!(
            fiber_splitting(&circle_energy(true), &m, &FiberOptions::default()),
            Err(BundleError::NotCritical { sample: 0, .. })
        ));
    }
}
