//! `Φ_ε(x, y) = x² − y² + ε^{1/4} f_ε(x + y)`, a uniformly small
//! perturbation of a nondegenerate saddle without critical points near it.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::LabError;
use crate::functional::SplitFunctional;
use crate::spectral::SymOperator;

/// Points per axis of the unit-ball grid.
pub const UNIT_BALL_GRID: usize = 401;

/// `√(ε + z) − √ε` for `z ≥ 0`, extended as an odd function.
pub fn bump(eps: f64, z: f64) -> f64 {
    let a = z.abs();
    let v = (eps + a).sqrt() - eps.sqrt();
    if z < 0.0 {
        -v
    } else {
        v
    }
}

/// `1 / (2√(ε + |z|))`, continuous at zero.
pub fn bump_derivative(eps: f64, z: f64) -> f64 {
    0.5 / (eps + z.abs()).sqrt()
}

/// `−sign(z) / (4(ε + |z|)^{3/2})`, taken as zero at the kink.
pub fn bump_second_derivative(eps: f64, z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    -z.signum() * 0.25 / (eps + z.abs()).powf(1.5)
}

/// `Φ_ε` with `L = diag(2, −2)`.
pub fn counterexample_functional(eps: f64) -> Result<SplitFunctional, LabError> {
    check_eps(eps)?;
    let c = eps.powf(0.25);
    Ok(SplitFunctional::new(
        SymOperator::from_diagonal(&[2.0, -2.0]),
        Arc::new(move |x: &DVector<f64>| c * bump(eps, x[0] + x[1])),
        Arc::new(move |x: &DVector<f64>| DVector::from_element(2, c * bump_derivative(eps, x[0] + x[1]))),
    )
    .with_hessian(Arc::new(move |x: &DVector<f64>| {
        DMatrix::from_element(2, 2, c * bump_second_derivative(eps, x[0] + x[1]))
    })))
}

fn check_eps(eps: f64) -> Result<(), LabError> {
    if eps > 0.0 && eps < 1.0 / 64.0 {
        Ok(())
    } else {
        Err(LabError::EpsilonOutOfRange(eps))
    }
}

/// `λ_ε = 1 / (4 ε^{1/4})`.
pub fn closed_form_lambda(eps: f64) -> f64 {
    0.25 / eps.powf(0.25)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CounterexampleRecord {
    pub eps: f64,
    pub lambda: f64,
    pub x: f64,
    pub y: f64,
    pub norm: f64,
    pub grad_norm: f64,
    pub min_grad_unit_ball: f64,
}

impl CounterexampleRecord {
    pub const HEADER: &'static str = "eps,lambda,x,y,norm,grad_norm,min_grad_unit_ball";

    /// The critical point lies outside the closed unit ball and the gradient
    /// has no zero on the grid.
    pub fn holds(&self) -> bool {
        self.norm > 1.0 && self.min_grad_unit_ball > 0.0
    }
}

impl fmt::Display for CounterexampleRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            self.eps, self.lambda, self.x, self.y, self.norm, self.grad_norm, self.min_grad_unit_ball
        )
    }
}

/// Smallest `‖∇Φ_ε‖` over the `n × n` grid of `[−1, 1]²` restricted to the
/// closed unit ball.
pub fn min_grad_on_unit_ball(f: &SplitFunctional, n: usize) -> f64 {
    let step = 2.0 / (n - 1) as f64;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let x = -1.0 + step * i as f64;
            let mut best = f64::INFINITY;
            for j in 0..n {
                let y = -1.0 + step * j as f64;
                if x * x + y * y <= 1.0 {
                    best = best.min(f.gradient(&DVector::from_vec(vec![x, y])).norm());
                }
            }
            best
        })
        .reduce(|| f64::INFINITY, f64::min)
}

/// Solves `∇Φ_ε = 0`. Both equations force `x + y = 0`, after which
/// `y = −x = ε^{1/4} f_ε'(0) / 2`.
pub fn counterexample(eps: f64) -> Result<CounterexampleRecord, LabError> {
    let f = counterexample_functional(eps)?;
    let y = 0.5 * eps.powf(0.25) * bump_derivative(eps, 0.0);
    let p = DVector::from_vec(vec![-y, y]);
    Ok(CounterexampleRecord {
        eps,
        lambda: y,
        x: -y,
        y,
        norm: p.norm(),
        grad_norm: f.gradient(&p).norm(),
        min_grad_unit_ball: min_grad_on_unit_ball(&f, UNIT_BALL_GRID),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_is_odd_and_c1() {
        let eps = 0.01;
        for z in [0.0, 0.1, 0.7, 3.0] {
            assert_eq!(bump(eps, -z), -bump(eps, z));
            assert_eq!(bump_derivative(eps, -z), bump_derivative(eps, z));
        }
        let h = 1e-9;
        for z in [-0.4, -1e-3, 0.0, 2e-3, 0.5] {
            let fd = (bump(eps, z + h) - bump(eps, z - h)) / (2.0 * h);
            assert!((fd - bump_derivative(eps, z)).abs() < 1e-5, "{z}");
        }
    }

    #[test]
    fn matches_the_closed_form() {
        let r = counterexample(0.01).unwrap();
        assert!((r.lambda - 0.790569415042).abs() < 1e-11);
        assert!(((r.lambda - closed_form_lambda(0.01)) / r.lambda).abs() <= 1e-12);
        assert!((r.norm - 1.118033988750).abs() < 1e-11);
        assert!(r.grad_norm <= 1e-10);
        assert!(r.holds());
    }

    #[test]
    fn rejects_out_of_range_eps() {
        for eps in [0.0, -1.0, 1.0 / 64.0, 0.5, f64::NAN] {
            assert!(matches!(counterexample(eps), Err(LabError::EpsilonOutOfRange(_))));
        }
    }
}
