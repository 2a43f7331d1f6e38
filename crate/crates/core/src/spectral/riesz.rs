//! Spectral projectors from the resolvent contour integral
//! `P = (1/2πi) ∮ (zI − A)⁻¹ dz`, evaluated with the trapezoidal rule on a
//! circle.
//!
//! For a circle of radius `R` the trapezoidal error contributed by an
//! eigenvalue at distance `ρ` from the center is `q^N / (1 − q^N)` with
//! `q = min(ρ, R) / max(ρ, R)`, so the node count can be sized from the
//! spectrum up front.

use nalgebra::{Complex, DMatrix};

use super::{SpectralError, SymOperator};
use crate::scalar::Scalar;

/// Default number of quadrature nodes.
pub const DEFAULT_NODES: usize = 64;

/// Upper limit for automatically sized contours.
pub const MAX_NODES: usize = 8192;

/// Distance from the circle to the spectrum below which the contour is
/// rejected.
pub const CONTOUR_CLEARANCE: f64 = 1e-10;

/// A positively oriented circle in the complex plane with a trapezoidal node
/// count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourPath<T: Scalar> {
    pub center: Complex<T>,
    pub radius: T,
    pub nodes: usize,
}

impl<T: Scalar> ContourPath<T> {
    pub fn new(center: Complex<T>, radius: T, nodes: usize) -> Result<Self, SpectralError> {
        if !(radius > T::zero()) || nodes < 8 {
            return Err(SpectralError::InvalidContour {
                reason: format!("radius {} and nodes {nodes}", radius.as_f64()),
            });
        }
        Ok(Self { center, radius, nodes })
    }

    /// Circle on the real axis around `center` with the default node count.
    pub fn real_circle(center: T, radius: T) -> Result<Self, SpectralError> {
        Self::new(Complex::new(center, T::zero()), radius, DEFAULT_NODES)
    }

    /// Circle enclosing exactly the eigenvalues of `spectrum` that lie in
    /// `[lo, hi]`: centered at the interval midpoint, with radius the interval
    /// half-width plus 0.6 of the half-gap to the nearest excluded eigenvalue.
    /// The node count starts at [`DEFAULT_NODES`] and is raised until the
    /// predicted trapezoidal error is below `accuracy`.
    pub fn enclosing(lo: T, hi: T, spectrum: &[T], accuracy: T) -> Result<Self, SpectralError> {
        if hi < lo {
            return Err(SpectralError::InvalidContour { reason: "empty interval".into() });
        }
        let center = (lo + hi) * T::lit(0.5);
        let half_width = (hi - lo) * T::lit(0.5);
        let gap = spectrum
            .iter()
            .filter(|&&l| l < lo || l > hi)
            .map(|&l| if l < lo { lo - l } else { l - hi })
            .fold(None, |acc: Option<T>, g| Some(acc.map_or(g, |a| a.min(g))));
        let gap = match gap {
            Some(g) => g,
            // Nothing to exclude: any circle around the interval works.
            None => T::one() + half_width,
        };
        let radius = half_width + T::lit(0.6) * gap * T::lit(0.5);
        let mut contour = Self::new(Complex::new(center, T::zero()), radius, DEFAULT_NODES)?;
        contour.nodes = contour.nodes_for(spectrum, accuracy);
        Ok(contour)
    }

    /// Smallest node count (multiple of 8, at least the current count) for
    /// which the predicted trapezoidal error on `spectrum` is below `accuracy`.
    pub fn nodes_for(&self, spectrum: &[T], accuracy: T) -> usize {
        let worst = spectrum.iter().fold(T::zero(), |acc, &l| {
            let rho = self.distance_from_center(l);
            let q = if rho < self.radius { rho / self.radius } else { self.radius / rho };
            acc.max(q)
        });
        if worst <= T::zero() {
            return self.nodes;
        }
        let needed = (accuracy.ln() / worst.ln()).as_f64().ceil().max(0.0) as usize;
        let rounded = needed.div_ceil(8) * 8;
        rounded.clamp(self.nodes, MAX_NODES)
    }

    /// Distance from the circle to the nearest point of `spectrum`.
    pub fn clearance(&self, spectrum: &[T]) -> T {
        spectrum.iter().fold(T::max_value().unwrap_or(T::lit(f64::MAX)), |acc, &l| {
            let rho = self.distance_from_center(l);
            acc.min((rho - self.radius).abs())
        })
    }

    fn distance_from_center(&self, x: T) -> T {
        let dx = x - self.center.re;
        (dx * dx + self.center.im * self.center.im).sqrt()
    }

    pub fn encloses(&self, x: T) -> bool {
        self.distance_from_center(x) < self.radius
    }
}

/// Spectral projector of `op` for the eigenvalues enclosed by `contour`,
/// by trapezoidal quadrature of the resolvent integral. The imaginary part,
/// which vanishes for contours centered on the real axis, is discarded.
pub fn riesz_projector<T: Scalar>(op: &SymOperator<T>, contour: &ContourPath<T>) -> Result<DMatrix<T>, SpectralError> {
    let n = op.dim();
    let clearance = contour.clearance(&op.eigenvalues());
    if clearance < T::lit(CONTOUR_CLEARANCE) {
        return Err(SpectralError::ContourHitsSpectrum { distance: clearance.as_f64() });
    }
    let a: DMatrix<Complex<T>> = op.entries().map(|v| Complex::new(v, T::zero()));
    let eye = DMatrix::<Complex<T>>::identity(n, n);
    let mut acc = DMatrix::<Complex<T>>::zeros(n, n);
    let count = contour.nodes;
    let two_pi = T::two_pi();
    for k in 0..count {
        let phi = two_pi * T::from_usize(k).unwrap() / T::from_usize(count).unwrap();
        let dir = Complex::new(phi.cos(), phi.sin());
        let z = contour.center + dir * contour.radius;
        let resolvent = (&eye * z - &a).lu().try_inverse().ok_or(SpectralError::SingularResolvent { node: k })?;
        // dz / (2πi) = R e^{iφ} dφ / 2π; the trapezoid weight is 2π / N.
        acc += resolvent * (dir * contour.radius);
    }
    let scale = T::one() / T::from_usize(count).unwrap();
    Ok(acc.map(|c| c.re * scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    #[test]
    fn positive_part_of_diagonal() {
        let op = SymOperator::from_diagonal(&[-1.0, 0.0, 1.0]);
        let c = ContourPath::real_circle(1.0, 0.5).unwrap();
        let p = riesz_projector(&op, &c).unwrap();
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 0.0, 1.0]));
        assert!(max_abs(&(p - expected)) < 1e-10);
    }

    #[test]
    fn kernel_projector_of_diagonal() {
        let op = SymOperator::from_diagonal(&[-1.0, 0.0, 1.0]);
        let c = ContourPath::real_circle(0.0, 0.5).unwrap();
        let p = riesz_projector(&op, &c).unwrap();
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 1.0, 0.0]));
        assert!(max_abs(&(p - expected)) < 1e-10);
    }

    #[test]
    fn contour_through_eigenvalue_is_rejected() {
        let op = SymOperator::from_diagonal(&[-1.0, 0.0, 1.0]);
        let c = ContourPath::real_circle(0.5, 0.5).unwrap();
        assert!(matches!(riesz_projector(&op, &c), Err(SpectralError::ContourHitsSpectrum { .. })));
    }

    #[test]
    fn invalid_contours() {
        assert!(ContourPath::<f64>::real_circle(0.0, -1.0).is_err());
        assert!(ContourPath::<f64>::new(Complex::new(0.0, 0.0), 1.0, 4).is_err());
    }

    #[test]
    fn enclosing_contour_sizes_nodes_from_geometry() {
        let spectrum = [-3.0, -0.2, 0.2, 5.0];
        let c = ContourPath::enclosing(0.2, 5.0, &spectrum, 1e-14).unwrap();
        assert!(c.encloses(0.2) && c.encloses(5.0));
        assert!(!c.encloses(-0.2));
        assert!(c.nodes > DEFAULT_NODES);
        assert_eq!(c.nodes % 8, 0);
    }

    #[test]
    fn single_precision_projector() {
        let op = SymOperator::<f32>::from_diagonal(&[-1.0, 2.0]);
        let c = ContourPath::real_circle(2.0f32, 1.0).unwrap();
        let p = riesz_projector(&op, &c).unwrap();
        assert!((p[(1, 1)] - 1.0).abs() < 1e-5);
        assert!(p[(0, 0)].abs() < 1e-5);
    }
}
