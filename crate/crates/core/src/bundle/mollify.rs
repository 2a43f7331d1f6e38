use std::f64::consts::TAU;

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;

use super::{BundleError, BundleSample, CriticalManifold};
use crate::linalg::{sym_eigen, symmetrize};
use crate::spectral::{riesz_projector, ContourPath, SpectralError, SymOperator};

/// Accuracy targeted by automatically sized kernel contours.
const CONTOUR_ACCURACY: f64 = 1e-14;

/// Operators `K_m` along a sampled manifold, with the fixed `L` they perturb.
/// Every `L + K_m` is expected to have a kernel of dimension `kernel_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorField {
    pub base: SymOperator<f64>,
    pub samples: Vec<SymOperator<f64>>,
    pub kernel_dim: usize,
    /// Samples per periodic parameter.
    pub count: usize,
    /// Number of periodic parameters (0 for a single point).
    pub params: usize,
}

impl OperatorField {
    /// `K_m = hess Φ(m) − L` from a computed bundle.
    pub fn from_bundle(
        base: &SymOperator<f64>,
        manifold: &CriticalManifold,
        bundle: &BundleSample,
    ) -> Result<Self, BundleError> {
        if bundle.len() != manifold.len() {
            return Err(BundleError::InconsistentScenario(format!(
                "bundle has {} samples, manifold {}",
                bundle.len(),
                manifold.len()
            )));
        }
        let samples = bundle.hessians.iter().map(|h| h.sub(base)).collect::<Result<Vec<_>, SpectralError>>()?;
        Ok(Self {
            base: base.clone(),
            samples,
            kernel_dim: manifold.dim(),
            count: manifold.count(),
            params: manifold.dim(),
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `L + K_m`.
    pub fn total(&self, i: usize) -> SymOperator<f64> {
        self.base.add(&self.samples[i]).expect("field operators share the base dimension")
    }

    /// `max_m ‖K_m − K'_m‖`.
    pub fn max_distance(&self, other: &Self) -> f64 {
        self.samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a.sub(b).map(|d| d.norm()).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    fn total_from(&self, k: &SymOperator<f64>) -> SymOperator<f64> {
        self.base.add(k).expect("field operators share the base dimension")
    }

    fn spacing(&self) -> f64 {
        TAU / self.count as f64
    }
}

/// Normalized periodic Gaussian weights over offsets `0..count`.
fn periodic_weights(count: usize, bandwidth: f64) -> Vec<f64> {
    let h = TAU / count as f64;
    let raw: Vec<f64> = (0..count)
        .map(|k| {
            let d = k.min(count - k) as f64 * h;
            (-0.5 * (d / bandwidth).powi(2)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Step one of [`mollify_field`]: entrywise periodic Gaussian convolution of
/// `K` over the parameter grid, with standard deviation `bandwidth` in
/// parameter units.
pub fn smooth_entries(field: &OperatorField, bandwidth: f64) -> Result<Vec<SymOperator<f64>>, BundleError> {
    if field.params == 0 {
        return Ok(field.samples.clone());
    }
    let spacing = field.spacing();
    if !(bandwidth > spacing) || !bandwidth.is_finite() {
        return Err(BundleError::InvalidBandwidth { bandwidth, spacing });
    }
    let c = field.count;
    let w = periodic_weights(c, bandwidth);
    let n = field.base.dim();
    let smoothed: Vec<DMatrix<f64>> = (0..field.len())
        .into_par_iter()
        .map(|idx| {
            let mut acc = DMatrix::zeros(n, n);
            if field.params == 1 {
                for (j, k) in field.samples.iter().enumerate() {
                    acc += k.entries() * w[(j + c - idx) % c];
                }
            } else {
                let (i0, j0) = (idx / c, idx % c);
                for (j, k) in field.samples.iter().enumerate() {
                    let (i1, j1) = (j / c, j % c);
                    acc += k.entries() * (w[(i1 + c - i0) % c] * w[(j1 + c - j0) % c]);
                }
            }
            acc
        })
        .collect();
    smoothed.into_iter().map(|m| SymOperator::symmetrized(m).map_err(BundleError::from)).collect()
}

/// Smooths the field and then restores the kernel dimension: with `V_m` the
/// Riesz projector of `L + K̃_m` around 0, the corrected operator acts as
/// `−L` on `V_m` and as `K̃_m` on `V_m^⊥`, so `L + K_m` vanishes exactly on
/// `V_m`.
///
/// Without a contour, a circle of radius half the smallest spectral gap of
/// the input field is used, with nodes sized for each sample.
pub fn mollify_field(
    field: &OperatorField,
    bandwidth: f64,
    contour: Option<ContourPath<f64>>,
) -> Result<OperatorField, BundleError> {
    let smoothed = smooth_entries(field, bandwidth)?;
    let n = field.base.dim();
    let radius = match contour {
        Some(c) => c.radius,
        None => {
            let min_gap = field
                .samples
                .iter()
                .map(|k| smallest_nonzero(&field.total_from(k), field.kernel_dim))
                .fold(f64::INFINITY, f64::min);
            0.5 * min_gap
        }
    };
    let corrected: Vec<Result<SymOperator<f64>, BundleError>> = smoothed
        .par_iter()
        .enumerate()
        .map(|(i, k)| {
            let total = field.base.add(k)?;
            let path = match contour {
                Some(c) => c,
                None => {
                    let mut c = ContourPath::new(Complex::new(0.0, 0.0), radius, crate::spectral::DEFAULT_NODES)?;
                    c.nodes = c.nodes_for(&total.eigenvalues(), CONTOUR_ACCURACY);
                    c
                }
            };
            let p = symmetrize(&riesz_projector(&total, &path)?);
            let eig = sym_eigen(&p);
            let keep: Vec<usize> = (0..n).filter(|&c| eig.values[c] > 0.5).collect();
            if keep.len() != field.kernel_dim {
                return Err(BundleError::KernelDimensionUnrecoverable {
                    sample: i,
                    captured: keep.len(),
                    expected: field.kernel_dim,
                });
            }
            let mut v = DMatrix::zeros(n, keep.len());
            for (c, &k) in keep.iter().enumerate() {
                v.set_column(c, &eig.vectors.column(k));
            }
            let q = DMatrix::identity(n, n) - &v * v.transpose();
            let restored = &q * total.entries() * &q;
            Ok(SymOperator::symmetrized(restored - field.base.entries())?)
        })
        .collect();
    Ok(OperatorField {
        base: field.base.clone(),
        samples: corrected.into_iter().collect::<Result<_, _>>()?,
        kernel_dim: field.kernel_dim,
        count: field.count,
        params: field.params,
    })
}

/// Smallest `|λ|` after discarding the `skip` eigenvalues closest to 0.
fn smallest_nonzero(op: &SymOperator<f64>, skip: usize) -> f64 {
    let mut mags: Vec<f64> = op.eigenvalues().iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    mags.get(skip).copied().unwrap_or(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{fiber_splitting, sample_manifold, FiberOptions, ManifoldKind};
    use crate::functional::SplitFunctional;
    use nalgebra::DVector;
    use std::sync::Arc;

    fn circle_field(count: usize) -> OperatorField {
        let l = SymOperator::from_diagonal(&[0.0, 0.0, -1.0]);
        let f = SplitFunctional::new(
            l.clone(),
            Arc::new(|x: &DVector<f64>| 0.25 * (x[0] * x[0] + x[1] * x[1] - 1.0).powi(2)),
            Arc::new(|x: &DVector<f64>| {
                let s = x[0] * x[0] + x[1] * x[1] - 1.0;
                DVector::from_vec(vec![s * x[0], s * x[1], 0.0])
            }),
        );
        let m = sample_manifold(ManifoldKind::Circle, 3, count, None).unwrap();
        let b = fiber_splitting(&f, &m, &FiberOptions::default()).unwrap();
        OperatorField::from_bundle(&l, &m, &b).unwrap()
    }

    fn kernel_eigenvalue(op: &SymOperator<f64>) -> f64 {
        op.eigenvalues().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn constant_field_is_unchanged() {
        let mut field = circle_field(32);
        let k0 = field.samples[0].clone();
        field.samples.iter_mut().for_each(|k| *k = k0.clone());
        let out = mollify_field(&field, 0.5, None).unwrap();
        // Only the finite-difference residue on the kernel is removed.
        let residue = kernel_eigenvalue(&field.total(0));
        assert!(out.max_distance(&field) <= residue + 1e-12, "{}", out.max_distance(&field));
    }

    #[test]
    fn grid_frequency_noise_is_removed() {
        let clean = circle_field(512);
        let mut noisy = clean.clone();
        for (i, k) in noisy.samples.iter_mut().enumerate() {
            let sign = if i % 2 == 0 { 1e-3 } else { -1e-3 };
            let bump = DMatrix::from_element(3, 3, sign);
            *k = SymOperator::new(k.entries() + bump).unwrap();
        }
        let out = mollify_field(&noisy, 0.02, None).unwrap();
        assert!(out.max_distance(&clean) < 2e-3, "{}", out.max_distance(&clean));
        for i in 0..out.len() {
            assert!(kernel_eigenvalue(&out.total(i)) < 1e-12);
        }
    }

    #[test]
    fn rank_correction_restores_an_exact_kernel() {
        let field = circle_field(64);
        let bandwidth = 0.02;
        let naive = smooth_entries(&field, 0.2).unwrap();
        let shifted = kernel_eigenvalue(&field.base.add(&naive[0]).unwrap());
        assert!(shifted > 1e-5, "naive smoothing should move the kernel, got {shifted}");
        let out = mollify_field(&field, 0.2, None).unwrap();
        for i in 0..out.len() {
            assert!(kernel_eigenvalue(&out.total(i)) <= 1e-12);
        }
        assert!(matches!(smooth_entries(&field, bandwidth), Err(BundleError::InvalidBandwidth { .. })));
    }

    #[test]
    fn smoothing_error_shrinks_with_bandwidth() {
        let field = circle_field(256);
        let errs: Vec<f64> = [0.4, 0.2, 0.1, 0.05]
            .iter()
            .map(|&bw| mollify_field(&field, bw, None).unwrap().max_distance(&field))
            .collect();
        for w in errs.windows(2) {
            assert!(w[1] < w[0], "{errs:?}");
        }
    }

    #[test]
    fn contour_capturing_too_much_is_reported() {
        let field = circle_field(32);
        let wide = ContourPath::real_circle(0.0, 1.5).unwrap();
        assert!(matches!(
            mollify_field(&field, 0.3, Some(wide)),
            Err(BundleError::KernelDimensionUnrecoverable { .. })
        ));
    }
}
