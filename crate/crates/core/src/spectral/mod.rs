//! Spectral splittings `R^n = X⁻ ⊕ X⁰ ⊕ X⁺` of symmetric operators.
//!
//! Splittings come from the dense eigendecomposition; the resolvent contour
//! integral in [`riesz`] is an independent route to the same projectors and
//! serves as a cross-check. [`AdaptedMetric`] rescales the inner product so
//! that the operator becomes `x ↦ x⁺ − x⁻`.

mod metric;
mod operator;
mod riesz;

pub use metric::{adapted_metric, AdaptedMetric};
pub use operator::{SymOperator, SYMMETRY_TOL};
pub use riesz::{riesz_projector, ContourPath, CONTOUR_CLEARANCE, DEFAULT_NODES, MAX_NODES};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::grassmann::Subspace;
use crate::linalg::{spectral_norm, sym_norm};
use crate::scalar::Scalar;

/// Default relative kernel threshold, as a multiple of `‖A‖`.
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

/// Eigenvalues with `|λ|` in `(zero_tol, AMBIGUITY_FACTOR · zero_tol) · ‖A‖`
/// cannot be grouped reliably.
pub const AMBIGUITY_FACTOR: f64 = 10.0;

/// Slack granted to the quadratic-form checks of [`verify_splitting`].
pub const FORM_SLACK: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("matrix is not symmetric: max asymmetry {asymmetry}")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("tolerance must be positive and finite, got {value}")]
    InvalidTolerance { value: f64 },
    #[error("no spectral gap: eigenvalue {eigenvalue} lies in the ambiguity band ({lower}, {upper})")]
    NoSpectralGap { eigenvalue: f64, lower: f64, upper: f64 },
    #[error("contour passes within {distance} of the spectrum")]
    ContourHitsSpectrum { distance: f64 },
    #[error("resolvent is singular at quadrature node {node}")]
    SingularResolvent { node: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid contour: {reason}")]
    InvalidContour { reason: String },
}

/// Orthogonal decomposition into the negative, kernel and positive spectral
/// subspaces of a symmetric operator.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSplitting<T: Scalar> {
    pub x_minus: Subspace<T>,
    pub x_zero: Subspace<T>,
    pub x_plus: Subspace<T>,
    /// Smallest `|λ|` outside the kernel group (1 when there is none).
    pub gap: T,
    /// Absolute kernel threshold `zero_tol · ‖A‖` used for the grouping.
    pub threshold: T,
}

impl<T: Scalar> SpectralSplitting<T> {
    pub fn ambient_dim(&self) -> usize {
        self.x_zero.ambient_dim()
    }

    /// `(dim X⁻, dim X⁰, dim X⁺)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.x_minus.dim(), self.x_zero.dim(), self.x_plus.dim())
    }

    /// Same subspaces with the roles of `X⁻` and `X⁺` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            x_minus: self.x_plus.clone(),
            x_zero: self.x_zero.clone(),
            x_plus: self.x_minus.clone(),
            gap: self.gap,
            threshold: self.threshold,
        }
    }
}

fn check_tol<T: Scalar>(zero_tol: T) -> Result<(), SpectralError> {
    if !(zero_tol > T::zero()) || !zero_tol.is_finite() {
        return Err(SpectralError::InvalidTolerance { value: zero_tol.as_f64() });
    }
    Ok(())
}

/// Groups eigenvalues into `λ < −t`, `|λ| ≤ t` and `λ > t` with
/// `t = zero_tol · ‖A‖`. Eigenvalues strictly inside `(t, 10t)` in absolute
/// value are rejected as ambiguous.
pub fn spectral_split<T: Scalar>(op: &SymOperator<T>, zero_tol: T) -> Result<SpectralSplitting<T>, SpectralError> {
    check_tol(zero_tol)?;
    let n = op.dim();
    let eig = op.eigen();
    let norm = eig.values.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
    let threshold = zero_tol * norm;
    let upper = threshold * T::lit(AMBIGUITY_FACTOR);
    let mut groups: [Vec<usize>; 3] = Default::default();
    let mut gap: Option<T> = None;
    for (i, &lambda) in eig.values.iter().enumerate() {
        let a = lambda.abs();
        if a <= threshold {
            groups[1].push(i);
            continue;
        }
        if a < upper {
            return Err(SpectralError::NoSpectralGap {
                eigenvalue: lambda.as_f64(),
                lower: threshold.as_f64(),
                upper: upper.as_f64(),
            });
        }
        groups[if lambda < T::zero() { 0 } else { 2 }].push(i);
        gap = Some(gap.map_or(a, |g| g.min(a)));
    }
    let pick = |idx: &[usize]| {
        let mut basis = DMatrix::zeros(n, idx.len());
        for (c, &i) in idx.iter().enumerate() {
            basis.set_column(c, &eig.vectors.column(i));
        }
        Subspace::span(&basis)
    };
    Ok(SpectralSplitting {
        x_minus: pick(&groups[0]),
        x_zero: pick(&groups[1]),
        x_plus: pick(&groups[2]),
        gap: gap.unwrap_or_else(T::one),
        threshold,
    })
}

/// Quadratic-form diagnostics of a splitting against an operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplittingReport<T: Scalar> {
    /// `min −⟨Av, v⟩` over unit `v ∈ X⁻`; `None` when `X⁻ = 0`.
    pub min_neg_ratio: Option<T>,
    /// `min ⟨Av, v⟩` over unit `v ∈ X⁺`; `None` when `X⁺ = 0`.
    pub min_pos_ratio: Option<T>,
    /// `max ‖Av⁰‖` over the basis of `X⁰`.
    pub kernel_residual: T,
}

impl<T: Scalar> SplittingReport<T> {
    /// Both form bounds hold with constant `gap` up to [`FORM_SLACK`].
    pub fn bounds_hold(&self, gap: T) -> bool {
        let floor = gap - T::tol(FORM_SLACK) * (T::one() + gap);
        self.min_neg_ratio.is_none_or(|r| r >= floor) && self.min_pos_ratio.is_none_or(|r| r >= floor)
    }
}

/// Exact extremes of the quadratic form on each part of `s`, obtained from
/// the eigenvalues of the compressed operators.
pub fn verify_splitting<T: Scalar>(
    op: &SymOperator<T>,
    s: &SpectralSplitting<T>,
) -> Result<SplittingReport<T>, SpectralError> {
    for part in [&s.x_minus, &s.x_zero, &s.x_plus] {
        if part.ambient_dim() != op.dim() {
            return Err(SpectralError::DimensionMismatch { expected: op.dim(), found: part.ambient_dim() });
        }
    }
    let extreme = |v: &Subspace<T>, negative: bool| -> Result<Option<T>, SpectralError> {
        if v.dim() == 0 {
            return Ok(None);
        }
        let values = op.compress(v)?.eigenvalues();
        Ok(Some(if negative { -values[values.len() - 1] } else { values[0] }))
    };
    let kernel_residual =
        s.x_zero.basis().column_iter().map(|c| (op.entries() * c).norm()).fold(T::zero(), |a, r| a.max(r));
    Ok(SplittingReport {
        min_neg_ratio: extreme(&s.x_minus, true)?,
        min_pos_ratio: extreme(&s.x_plus, false)?,
        kernel_residual,
    })
}

/// Largest deviation between the projectors of `s` and the Riesz projectors
/// of `op` for each nonempty part, each contour sized to `accuracy`.
pub fn riesz_cross_check<T: Scalar>(
    op: &SymOperator<T>,
    s: &SpectralSplitting<T>,
    accuracy: T,
) -> Result<T, SpectralError> {
    let values = op.eigenvalues();
    let mut worst = T::zero();
    for part in [&s.x_minus, &s.x_zero, &s.x_plus] {
        if part.dim() == 0 {
            continue;
        }
        let group = op.compress(part)?.eigenvalues();
        let contour = ContourPath::enclosing(group[0], group[group.len() - 1], &values, accuracy)?;
        let p = riesz_projector(op, &contour)?;
        worst = worst.max(sym_norm(&(p - part.projector())));
    }
    Ok(worst)
}

/// `‖Π_{X⁻} + Π_{X⁰} + Π_{X⁺} − I‖`.
pub fn completeness_defect<T: Scalar>(s: &SpectralSplitting<T>) -> T {
    let n = s.ambient_dim();
    let sum = s.x_minus.projector() + s.x_zero.projector() + s.x_plus.projector();
    spectral_norm(&(sum - DMatrix::identity(n, n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grassmann::{gap_distance, Subspace};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_split() {
        let op = SymOperator::from_diagonal(&[-2.0, 0.0, 3.0]);
        let s = spectral_split(&op, 1e-8).unwrap();
        assert_eq!(s.dims(), (1, 1, 1));
        assert_eq!(s.gap, 2.0);
        let e = |i| Subspace::coordinate(3, &[i]);
        assert!(gap_distance(&s.x_minus, &e(0)).unwrap() < 1e-14);
        assert!(gap_distance(&s.x_zero, &e(1)).unwrap() < 1e-14);
        assert!(gap_distance(&s.x_plus, &e(2)).unwrap() < 1e-14);
    }

    #[test]
    fn identity_is_all_positive() {
        let s = spectral_split(&SymOperator::<f64>::identity(3), 1e-8).unwrap();
        assert_eq!(s.dims(), (0, 0, 3));
        assert_eq!(s.gap, 1.0);
    }

    #[test]
    fn zero_operator_is_all_kernel() {
        let s = spectral_split(&SymOperator::<f64>::zeros(4), 1e-8).unwrap();
        assert_eq!(s.dims(), (0, 4, 0));
    }

    #[test]
    fn conjugated_spectrum_matches_eigenvector_spans() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = Subspace::<f64>::random(8, 8, &mut rng).into_basis();
        let op = SymOperator::from_eigenpairs(&q, &[-3.0, -1.0, 0.0, 0.0, 2.0, 2.0, 5.0, 7.0]).unwrap();
        let s = spectral_split(&op, 1e-8).unwrap();
        assert_eq!(s.dims(), (2, 2, 4));
        assert!((s.gap - 1.0).abs() < 1e-12);
        let cols = |a: usize, k: usize| Subspace::span(&q.columns(a, k).clone_owned());
        assert!(gap_distance(&s.x_minus, &cols(0, 2)).unwrap() <= 1e-8);
        assert!(gap_distance(&s.x_zero, &cols(2, 2)).unwrap() <= 1e-8);
        assert!(gap_distance(&s.x_plus, &cols(4, 4)).unwrap() <= 1e-8);
        assert!(completeness_defect(&s) < 1e-10);
    }

    #[test]
    fn ambiguous_eigenvalue_is_rejected() {
        let op = SymOperator::from_diagonal(&[-1.0, 5e-8, 1.0]);
        assert!(matches!(spectral_split(&op, 1e-8), Err(SpectralError::NoSpectralGap { .. })));
    }

    #[test]
    fn nonpositive_tolerance_is_rejected() {
        let op = SymOperator::from_diagonal(&[1.0]);
        assert!(matches!(spectral_split(&op, 0.0), Err(SpectralError::InvalidTolerance { .. })));
    }

    #[test]
    fn verify_own_and_swapped_splitting() {
        let op = SymOperator::from_diagonal(&[-2.0, 0.0, 3.0]);
        let s = spectral_split(&op, 1e-8).unwrap();
        let r = verify_splitting(&op, &s).unwrap();
        assert_eq!(r.min_neg_ratio, Some(2.0));
        assert_eq!(r.min_pos_ratio, Some(3.0));
        assert_eq!(r.kernel_residual, 0.0);
        assert!(r.bounds_hold(s.gap));
        let bad = verify_splitting(&op, &s.swapped()).unwrap();
        assert!(bad.min_pos_ratio.unwrap() < 0.0);
        assert!(!bad.bounds_hold(s.gap));
    }

    #[test]
    fn verify_rejects_mismatched_dimensions() {
        let op = SymOperator::from_diagonal(&[-2.0, 0.0, 3.0]);
        let s = spectral_split(&SymOperator::from_diagonal(&[1.0, -1.0]), 1e-8).unwrap();
        assert!(matches!(verify_splitting(&op, &s), Err(SpectralError::DimensionMismatch { .. })));
    }

    #[test]
    fn riesz_agrees_with_eigen_splitting() {
        let op = SymOperator::from_diagonal(&[-2.0, 0.0, 3.0]);
        let s = spectral_split(&op, 1e-8).unwrap();
        assert!(riesz_cross_check(&op, &s, 1e-14).unwrap() < 1e-10);
    }
}
