use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{boundary_points, ProbeGrid, SaddleError, SaddleNeighborhood};
use crate::bundle::galerkin_basis;
use crate::functional::{GradFn, SplitFunctional};
use crate::spectral::DEFAULT_ZERO_TOL;

/// Allowed energy increase per step, relative to `1 + |Φ(x₀)|`.
pub const DESCENT_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PseudogradientMode {
    /// `Z = ∇Ψ`.
    Exact,
    /// `Z = Π_k ∇Ψ` onto the first `k` eigenvectors of `L`.
    FiniteRank { k: usize },
}

/// Vector field `Z` replacing `∇Ψ` in `x' = −(Lx + Z(x))`.
#[derive(Clone)]
pub struct Pseudogradient {
    mode: PseudogradientMode,
    bound: f64,
    field: GradFn,
}

impl fmt::Debug for Pseudogradient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pseudogradient").field("mode", &self.mode).field("bound", &self.bound).finish_non_exhaustive()
    }
}

impl Pseudogradient {
    pub fn exact(f: &SplitFunctional) -> Self {
        let f = f.clone();
        Self { mode: PseudogradientMode::Exact, bound: 0.0, field: Arc::new(move |x| f.psi_gradient(x)) }
    }

    pub fn mode(&self) -> PseudogradientMode {
        self.mode
    }

    /// Sampled `sup ‖Z − ∇Ψ‖` on `∂⁺B \ ∂⁻B`.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.field)(x)
    }
}

/// Builds `Z` and checks `sup ‖Z − ∇Ψ‖ < σ` on the sampled plus boundary.
pub fn pseudogradient(
    f: &SplitFunctional,
    mode: PseudogradientMode,
    nbhd: &SaddleNeighborhood,
    sigma: f64,
    grid: &ProbeGrid,
) -> Result<Pseudogradient, SaddleError> {
    let k = match mode {
        PseudogradientMode::Exact => return Ok(Pseudogradient::exact(f)),
        PseudogradientMode::FiniteRank { k } => k,
    };
    let n = f.dim();
    if k > n {
        return Err(SaddleError::InvalidRank { k, dim: n });
    }
    let basis = galerkin_basis(f.operator(), DEFAULT_ZERO_TOL)?;
    let cols = basis.columns(0, k).clone_owned();
    let proj: DMatrix<f64> = &cols * cols.transpose();
    let bound = boundary_points(nbhd, grid)
        .par_iter()
        .map(|(_, x)| {
            let g = f.psi_gradient(x);
            (&g - &proj * &g).norm()
        })
        .reduce(|| 0.0, f64::max);
    if bound >= sigma {
        return Err(SaddleError::BoundExceedsSigma { bound, sigma });
    }
    let f = f.clone();
    Ok(Pseudogradient { mode, bound, field: Arc::new(move |x| &proj * f.psi_gradient(x)) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    HitSublevel,
    TimeOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    /// Fixed step; `1e-2 · r⁻` with a neighborhood, `1e-2` without.
    pub step: Option<f64>,
    /// Exit level: the flow stops on entering `Φ ≤ c0`.
    pub c0: Option<f64>,
    pub t_max: f64,
    pub time_tol: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { step: None, c0: None, t_max: 1.0, time_tol: 1e-10 }
    }
}

/// Nodes of a fixed-step solution, with velocities for cubic Hermite dense
/// output. The last node is at `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
    pub values: Vec<f64>,
    pub tau: f64,
    pub exit_kind: ExitKind,
}

impl FlowTrajectory {
    pub fn x0(&self) -> &DVector<f64> {
        &self.states[0]
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectories have at least one node")
    }

    /// Cubic Hermite interpolation between stored nodes.
    pub fn dense(&self, t: f64) -> DVector<f64> {
        let t = t.clamp(0.0, self.tau);
        let k = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            p => (p - 1).min(self.times.len().saturating_sub(2)),
        };
        if self.times.len() < 2 {
            return self.states[0].clone();
        }
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        &self.states[k] * h00
            + &self.velocities[k] * (h10 * h)
            + &self.states[k + 1] * h01
            + &self.velocities[k + 1] * (h11 * h)
    }

    /// Largest `Φ(x_{k+1}) − Φ(x_k)` over stored nodes.
    pub fn max_energy_increase(&self) -> f64 {
        self.values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn velocity(f: &SplitFunctional, z: &Pseudogradient, x: &DVector<f64>) -> DVector<f64> {
    -(f.operator().apply(x) + z.eval(x))
}

fn rk4(f: &SplitFunctional, z: &Pseudogradient, x: &DVector<f64>, k1: &DVector<f64>, h: f64) -> DVector<f64> {
    let k2 = velocity(f, z, &(x + k1 * (0.5 * h)));
    let k3 = velocity(f, z, &(x + &k2 * (0.5 * h)));
    let k4 = velocity(f, z, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Classical fourth-order integration of `x' = −(Lx + Z(x))` from `x0`,
/// stopping at the first entry into `Φ ≤ c0`, located by bisection.
pub fn integrate_flow(
    x0: &DVector<f64>,
    f: &SplitFunctional,
    z: &Pseudogradient,
    nbhd: Option<&SaddleNeighborhood>,
    opts: &FlowOptions,
) -> Result<FlowTrajectory, SaddleError> {
    if x0.len() != f.dim() {
        return Err(SaddleError::InconsistentInput(format!(
            "start point has dimension {}, expected {}",
            x0.len(),
            f.dim()
        )));
    }
    let step = opts.step.unwrap_or_else(|| nbhd.map_or(1e-2, |b| 1e-2 * b.r_minus()));
    if !(step > 0.0 && step.is_finite() && opts.t_max > 0.0) {
        return Err(SaddleError::InconsistentInput(format!("invalid step {step}")));
    }
    let steps = (opts.t_max / step).ceil() as usize;
    let h = opts.t_max / steps as f64;
    let phi0 = f.value(x0);
    let slack = DESCENT_SLACK * (1.0 + phi0.abs());

    let mut traj = FlowTrajectory {
        times: vec![0.0],
        states: vec![x0.clone()],
        velocities: vec![velocity(f, z, x0)],
        values: vec![phi0],
        tau: 0.0,
        exit_kind: ExitKind::HitSublevel,
    };
    if opts.c0.is_some_and(|c| phi0 <= c) {
        return Ok(traj);
    }
    if let Some(b) = nbhd {
        if !b.in_closure(x0) {
            return Err(SaddleError::LeftNeighborhood { time: 0.0 });
        }
    }

    for k in 0..steps {
        let t = k as f64 * h;
        let x = traj.states[k].clone();
        let v = traj.velocities[k].clone();
        let mut next = rk4(f, z, &x, &v, h);
        let mut t_next = if k + 1 == steps { opts.t_max } else { t + h };
        let mut phi = f.value(&next);
        let crossed = opts.c0.is_some_and(|c| phi <= c);
        if crossed {
            let c = opts.c0.unwrap_or_default();
            let (mut lo, mut hi) = (0.0, h);
            while hi - lo > opts.time_tol {
                let mid = 0.5 * (lo + hi);
                if f.value(&rk4(f, z, &x, &v, mid)) <= c {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            next = rk4(f, z, &x, &v, hi);
            phi = f.value(&next);
            t_next = t + hi;
        }
        let increase = phi - traj.values[k];
        if increase > slack {
            return Err(SaddleError::StepTooLarge { time: t_next, increase });
        }
        if !crossed {
            if let Some(b) = nbhd {
                if !b.in_closure(&next) {
                    return Err(SaddleError::LeftNeighborhood { time: t_next });
                }
            }
        }
        traj.velocities.push(velocity(f, z, &next));
        traj.states.push(next);
        traj.values.push(phi);
        traj.times.push(t_next);
        if crossed {
            traj.tau = t_next;
            return Ok(traj);
        }
    }
    traj.tau = opts.t_max;
    traj.exit_kind = ExitKind::TimeOut;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_exp;
    use crate::spectral::SymOperator;

    fn linear_error(step: f64) -> f64 {
        let l = SymOperator::from_diagonal(&[1.0, -1.0, 0.0, 1.0]);
        let f = SplitFunctional::quadratic(l.clone());
        let z = Pseudogradient::exact(&f);
        let x0 = DVector::from_vec(vec![0.3, -0.2, 0.5, 1.0]);
        let opts = FlowOptions { step: Some(step), ..FlowOptions::default() };
        let traj = integrate_flow(&x0, &f, &z, None, &opts).unwrap();
        assert_eq!(traj.exit_kind, ExitKind::TimeOut);
        (traj.final_state() - sym_exp(l.entries(), -1.0) * &x0).norm()
    }

    #[test]
    fn linear_flow_is_fourth_order() {
        let ratio = linear_error(1e-2) / linear_error(5e-3);
        assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn start_in_sublevel_exits_immediately() {
        let f = SplitFunctional::quadratic(SymOperator::from_diagonal(&[1.0, -1.0]));
        let z = Pseudogradient::exact(&f);
        let x0 = DVector::from_vec(vec![0.0, 1.0]);
        let opts = FlowOptions { c0: Some(-0.1), ..FlowOptions::default() };
        let traj = integrate_flow(&x0, &f, &z, None, &opts).unwrap();
        assert_eq!((traj.tau, traj.states.len()), (0.0, 1));
    }

    #[test]
    fn crossing_time_is_located() {
        // Φ = −½y² along y' = y: Φ(t) = −½ y₀² e^{2t}.
        let f = SplitFunctional::quadratic(SymOperator::from_diagonal(&[1.0, -1.0]));
        let z = Pseudogradient::exact(&f);
        let x0 = DVector::from_vec(vec![0.0, 0.1]);
        let c0 = -0.5 * 0.01 * 1.5f64.powi(2);
        let opts = FlowOptions { c0: Some(c0), ..FlowOptions::default() };
        let traj = integrate_flow(&x0, &f, &z, None, &opts).unwrap();
        assert_eq!(traj.exit_kind, ExitKind::HitSublevel);
        assert!((traj.tau - 1.5f64.ln()).abs() < 1e-9, "{}", traj.tau);
        assert!(f.value(traj.final_state()) <= c0);
    }

    #[test]
    fn dense_output_matches_the_exact_solution() {
        let f = SplitFunctional::quadratic(SymOperator::from_diagonal(&[1.0, -1.0]));
        let z = Pseudogradient::exact(&f);
        let x0 = DVector::from_vec(vec![1.0, 1.0]);
        let traj = integrate_flow(&x0, &f, &z, None, &FlowOptions::default()).unwrap();
        for t in [0.123f64, 0.5, 0.987] {
            let exact = DVector::from_vec(vec![(-t).exp(), t.exp()]);
            assert!((traj.dense(t) - exact).norm() < 1e-8);
        }
    }
}
