//! Metric geometry on the Grassmannian of subspaces of `R^n`.
//!
//! Two quantities drive everything here:
//!
//! * the gap distance `d(V, W) = ‖Π_W − Π_V‖`, a metric;
//! * the pseudodistance `δ(V, W) = sup_{v ∈ V, ‖v‖ ≤ 1} dist(v, W)`, which is
//!   asymmetric and vanishes exactly when `V ⊆ W`.
//!
//! They are tied together by `d ≤ δ(V,W) + δ(W,V) ≤ 2d`. When `δ(V, W) < 1`
//! the projection `Π_W(V)` has the same dimension as `V` and lies within
//! `2δ/√(1−δ²)` of it; [`project_subspace`] enforces that regime.
//!
//! Norms are evaluated exactly from singular values or symmetric eigenvalues.

mod properties;
mod subspace;

pub use properties::{run_property_suite, PropertyOutcome};
pub use subspace::{Subspace, ORTHONORMAL_TOL, RANK_DROP_TOL};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg::{max_abs, min_singular_value, spectral_norm, sym_norm};
use crate::scalar::Scalar;

/// Two subspaces closer than this in gap distance are treated as equal.
pub const SUBSPACE_EQ_TOL: f64 = 1e-8;

/// `project_subspace` refuses pairs with `δ ≥ 1 − DEGENERACY_MARGIN`.
pub const DEGENERACY_MARGIN: f64 = 1e-6;

/// Largest allowed column overlap for an orthogonal sum.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrassmannError {
    #[error("ambient dimensions differ: {left} vs {right}")]
    AmbientMismatch { left: usize, right: usize },
    #[error("projection degenerate: pseudodistance {delta} is not below 1")]
    ProjectionDegenerate { delta: f64 },
    #[error("subspaces are not orthogonal: max column overlap {overlap}")]
    NotOrthogonal { overlap: f64 },
    #[error("basis is not orthonormal: defect {defect}")]
    NotOrthonormal { defect: f64 },
}

fn same_ambient<T: Scalar>(v: &Subspace<T>, w: &Subspace<T>) -> Result<(), GrassmannError> {
    if v.ambient_dim() != w.ambient_dim() {
        return Err(GrassmannError::AmbientMismatch { left: v.ambient_dim(), right: w.ambient_dim() });
    }
    Ok(())
}

/// Orthogonal projector onto `v`.
pub fn projector<T: Scalar>(v: &Subspace<T>) -> DMatrix<T> {
    v.projector()
}

/// Gap distance `‖Π_W − Π_V‖`.
pub fn gap_distance<T: Scalar>(v: &Subspace<T>, w: &Subspace<T>) -> Result<T, GrassmannError> {
    same_ambient(v, w)?;
    Ok(sym_norm(&(w.projector() - v.projector())))
}

/// Pseudodistance `δ(V, W)`: the norm of `(I − Π_W)` restricted to `V`.
pub fn pseudodistance<T: Scalar>(v: &Subspace<T>, w: &Subspace<T>) -> Result<T, GrassmannError> {
    same_ambient(v, w)?;
    if v.dim() == 0 {
        return Ok(T::zero());
    }
    let residual = v.basis() - w.projector() * v.basis();
    Ok(spectral_norm(&residual))
}

/// `Π_W(V)` with an orthonormal basis. Requires `δ(V, W) < 1`, so that the
/// dimension of `V` survives.
pub fn project_subspace<T: Scalar>(v: &Subspace<T>, w: &Subspace<T>) -> Result<Subspace<T>, GrassmannError> {
    let delta = pseudodistance(v, w)?;
    if delta >= T::one() - T::lit(DEGENERACY_MARGIN) {
        return Err(GrassmannError::ProjectionDegenerate { delta: delta.as_f64() });
    }
    let projected = Subspace::span(&(w.projector() * v.basis()));
    if projected.dim() != v.dim() {
        return Err(GrassmannError::ProjectionDegenerate { delta: delta.as_f64() });
    }
    Ok(projected)
}

/// `V ⊕ W` for mutually orthogonal subspaces.
pub fn orthogonal_sum<T: Scalar>(v: &Subspace<T>, w: &Subspace<T>) -> Result<Subspace<T>, GrassmannError> {
    same_ambient(v, w)?;
    if v.dim() > 0 && w.dim() > 0 {
        let overlap = max_abs(&(v.basis().transpose() * w.basis()));
        if overlap > T::tol(ORTHOGONALITY_TOL) {
            return Err(GrassmannError::NotOrthogonal { overlap: overlap.as_f64() });
        }
    }
    Ok(Subspace::span(&Subspace::stack(&[v, w])))
}

/// Smallest singular value of `Π_W` restricted to `V`, read as a map `V → W`.
/// It is at least `√(1 − d(V,W)²)` when the dimensions agree.
pub fn restricted_projection_floor<T: Scalar>(v: &Subspace<T>, w: &Subspace<T>) -> Result<T, GrassmannError> {
    same_ambient(v, w)?;
    Ok(min_singular_value(&(w.basis().transpose() * v.basis())))
}

/// Gap-distance equality within [`SUBSPACE_EQ_TOL`] (dimensions must agree).
pub fn approx_eq<T: Scalar>(v: &Subspace<T>, w: &Subspace<T>) -> bool {
    v.dim() == w.dim() && gap_distance(v, w).map(|d| d <= T::tol(SUBSPACE_EQ_TOL)).unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(theta: f64) -> Subspace<f64> {
        Subspace::span(&DMatrix::from_column_slice(2, 1, &[theta.cos(), theta.sin()]))
    }

    /// Brute-force sup of ‖(P − Q)x‖ over a fine grid of unit vectors in R².
    fn brute_force_gap(p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
        (0..20_000)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 20_000.0;
                let x = nalgebra::DVector::from_vec(vec![t.cos(), t.sin()]);
                ((p - q) * x).norm()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn projector_examples() {
        let e1 = Subspace::<f64>::coordinate(2, &[0]);
        assert_eq!(projector(&e1), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(projector(&Subspace::<f64>::zero(3)), DMatrix::zeros(3, 3));
    }

    #[test]
    fn gap_distance_of_orthogonal_axes_is_one() {
        let a = Subspace::<f64>::coordinate(3, &[0]);
        let b = Subspace::<f64>::coordinate(3, &[1]);
        assert!((gap_distance(&a, &b).unwrap() - 1.0).abs() < 1e-14);
        assert!(gap_distance(&a, &a).unwrap() < 1e-15);
    }

    #[test]
    fn gap_distance_is_sine_of_angle() {
        let a = line(0.0);
        let b = line(PI / 6.0);
        let brute = brute_force_gap(&a.projector(), &b.projector());
        assert!((brute - 0.5).abs() < 1e-6);
        let d = gap_distance(&a, &b).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
        assert!((d - brute).abs() < 1e-6);
    }

    #[test]
    fn pseudodistance_examples() {
        let e1 = Subspace::<f64>::coordinate(2, &[0]);
        let plane = Subspace::<f64>::full(2);
        assert!(pseudodistance(&e1, &plane).unwrap() < 1e-15);
        assert!((pseudodistance(&plane, &e1).unwrap() - 1.0).abs() < 1e-14);
        let a = line(0.0);
        let b = line(PI / 6.0);
        assert!((pseudodistance(&a, &b).unwrap() - 0.5).abs() < 1e-12);
        assert!((pseudodistance(&b, &a).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn projecting_a_tilted_line_respects_the_bound() {
        let v = line(PI / 6.0);
        let w = line(0.0);
        let p = project_subspace(&v, &w).unwrap();
        assert!(approx_eq(&p, &w));
        let delta = pseudodistance(&v, &w).unwrap();
        let bound = 2.0 * delta / (1.0 - delta * delta).sqrt();
        assert!((bound - 1.1547005383792515).abs() < 1e-12);
        let d = gap_distance(&v, &p).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
        assert!(d <= bound);
    }

    #[test]
    fn projecting_into_a_superspace_is_identity() {
        let v = Subspace::<f64>::coordinate(4, &[1]);
        let w = Subspace::<f64>::coordinate(4, &[0, 1, 2]);
        let p = project_subspace(&v, &w).unwrap();
        assert!(gap_distance(&v, &p).unwrap() < 1e-14);
    }

    #[test]
    fn projecting_onto_orthogonal_line_degenerates() {
        let v = Subspace::<f64>::coordinate(2, &[0]);
        let w = Subspace::<f64>::coordinate(2, &[1]);
        assert!(matches!(project_subspace(&v, &w), Err(GrassmannError::ProjectionDegenerate { .. })));
    }

    #[test]
    fn orthogonal_sum_examples() {
        let e1 = Subspace::<f64>::coordinate(3, &[0]);
        let e2 = Subspace::<f64>::coordinate(3, &[1]);
        let s = orthogonal_sum(&e1, &e2).unwrap();
        assert!(approx_eq(&s, &Subspace::coordinate(3, &[0, 1])));
        let z = Subspace::<f64>::zero(3);
        assert!(approx_eq(&orthogonal_sum(&e1, &z).unwrap(), &e1));
        let tilted = Subspace::span(&DMatrix::from_column_slice(3, 1, &[1e-3f64.cos(), 1e-3f64.sin(), 0.0]));
        assert!(matches!(orthogonal_sum(&e1, &tilted), Err(GrassmannError::NotOrthogonal { .. })));
    }

    #[test]
    fn ambient_mismatch_is_reported() {
        let a = Subspace::<f64>::zero(2);
        let b = Subspace::<f64>::zero(3);
        assert_eq!(gap_distance(&a, &b), Err(GrassmannError::AmbientMismatch { left: 2, right: 3 }));
        assert!(pseudodistance(&a, &b).is_err());
    }

    #[test]
    fn trace_of_projector_is_rank() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let v = Subspace::<f64>::random(9, 5, &mut rng);
        assert!((v.projector().trace() - 5.0).abs() < 1e-10);
    }
}
