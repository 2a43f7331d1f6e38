use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{integrate_flow, FlowOptions, FlowTrajectory, Pseudogradient, SaddleError, SaddleNeighborhood};
use crate::functional::SplitFunctional;
use crate::linalg::{sym_eigen, SortedEigen};
use crate::spectral::SymOperator;

/// Reconstruction errors above this mean the trajectory is too coarse.
pub const RECONSTRUCTION_LIMIT: f64 = 1e-4;

/// `η(t, x₀) = e^{θL}x₀ + C` at one node, with `t ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationNode {
    pub t: f64,
    pub theta: f64,
    pub c: DVector<f64>,
    pub state: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformationRecord {
    pub x0: DVector<f64>,
    pub tau: f64,
    pub nodes: Vec<DeformationNode>,
    /// `max ‖e^{θL}x₀ + C − η‖` over nodes.
    pub reconstruction_error: f64,
    /// `sup |θ|`.
    pub theta_bound: f64,
}

impl DeformationRecord {
    pub fn final_node(&self) -> &DeformationNode {
        self.nodes.last().expect("records have at least one node")
    }

    pub fn c_max_norm(&self) -> f64 {
        self.nodes.iter().map(|n| n.c.norm()).fold(0.0, f64::max)
    }

    /// `‖e^{θL}x₀ + C − η‖` at every node.
    pub fn node_errors(&self, l: &SymOperator<f64>) -> Vec<f64> {
        let exp = Exponential::new(l);
        self.nodes.iter().map(|n| (exp.at(n.theta) * &self.x0 + &n.c - &n.state).norm()).collect()
    }
}

/// `e^{sL}` from one eigendecomposition.
struct Exponential {
    eig: SortedEigen<f64>,
}

impl Exponential {
    fn new(l: &SymOperator<f64>) -> Self {
        Self { eig: sym_eigen(l.entries()) }
    }

    fn at(&self, s: f64) -> DMatrix<f64> {
        let v = &self.eig.vectors;
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            self.eig.values.len(),
            self.eig.values.iter().map(|&l| (s * l).exp()),
        ));
        v * d * v.transpose()
    }
}

fn reconstruction_error(nodes: &[DeformationNode], x0: &DVector<f64>, exp: &Exponential) -> f64 {
    nodes.iter().map(|n| (exp.at(n.theta) * x0 + &n.c - &n.state).norm()).fold(0.0, f64::max)
}

/// Variation of constants along a trajectory: `θ(t) = −τt` and
/// `C(t) = ∫₀^{τt} e^{−(τt−s)L} b(s) ds` with `b = −Z(x(s))`, by Simpson's
/// rule on each step with the midpoint from dense output.
pub fn decompose_deformation(
    traj: &FlowTrajectory,
    z: &Pseudogradient,
    l: &SymOperator<f64>,
) -> Result<DeformationRecord, SaddleError> {
    let exp = Exponential::new(l);
    let x0 = traj.x0().clone();
    let n = x0.len();
    let tau = traj.tau;
    let normalized = |t: f64| if tau > 0.0 { t / tau } else { 0.0 };
    let mut nodes = vec![DeformationNode { t: 0.0, theta: 0.0, c: DVector::zeros(n), state: x0.clone() }];
    let mut c = DVector::zeros(n);
    let mut b_prev = -z.eval(&traj.states[0]);
    for k in 0..traj.times.len() - 1 {
        let (t0, t1) = (traj.times[k], traj.times[k + 1]);
        let h = t1 - t0;
        let b_mid = -z.eval(&traj.dense(0.5 * (t0 + t1)));
        let b_next = -z.eval(&traj.states[k + 1]);
        let full = exp.at(-h);
        let half = exp.at(-0.5 * h);
        c = &full * &c + (&full * &b_prev + &half * b_mid * 4.0 + &b_next) * (h / 6.0);
        nodes.push(DeformationNode { t: normalized(t1), theta: -t1, c: c.clone(), state: traj.states[k + 1].clone() });
        b_prev = b_next;
    }
    let err = reconstruction_error(&nodes, &x0, &exp);
    if err > RECONSTRUCTION_LIMIT {
        return Err(SaddleError::QuadratureDivergence { error: err });
    }
    Ok(DeformationRecord { x0, tau, theta_bound: tau, nodes, reconstruction_error: err })
}

/// `η₁ ⋆ η₂`: `η₁(2t)` on `[0, ½]`, then `η₂(2t − 1, η₁(1))`, with
/// `θ = θ₁(1) + θ₂` and `C = e^{θ₂L}C₁(1) + C₂` on the second half.
pub fn juxtapose(
    first: &DeformationRecord,
    second: &DeformationRecord,
    l: &SymOperator<f64>,
) -> Result<DeformationRecord, SaddleError> {
    let end = first.final_node();
    if (&end.state - &second.x0).norm() > 1e-12 * (1.0 + second.x0.norm()) {
        return Err(SaddleError::InconsistentInput("second deformation does not start where the first ends".into()));
    }
    let exp = Exponential::new(l);
    let mut nodes: Vec<DeformationNode> =
        first.nodes.iter().map(|n| DeformationNode { t: 0.5 * n.t, ..n.clone() }).collect();
    for n in second.nodes.iter().skip(1) {
        nodes.push(DeformationNode {
            t: 0.5 + 0.5 * n.t,
            theta: end.theta + n.theta,
            c: exp.at(n.theta) * &end.c + &n.c,
            state: n.state.clone(),
        });
    }
    let err = reconstruction_error(&nodes, &first.x0, &exp);
    if err > RECONSTRUCTION_LIMIT {
        return Err(SaddleError::QuadratureDivergence { error: err });
    }
    Ok(DeformationRecord {
        x0: first.x0.clone(),
        tau: first.tau + second.tau,
        theta_bound: nodes.iter().map(|n| n.theta.abs()).fold(0.0, f64::max),
        nodes,
        reconstruction_error: err,
    })
}

/// `η(1, ·)` applied to a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformedSet {
    pub images: Vec<DVector<f64>>,
    pub trajectories: Vec<FlowTrajectory>,
    pub records: Vec<DeformationRecord>,
    pub taus: Vec<f64>,
    pub initial_levels: Vec<f64>,
    pub final_levels: Vec<f64>,
    /// Points already in `Φ ≤ c0`, left in place.
    pub fixed: Vec<bool>,
    /// `max ‖C(t, x)‖` over all nodes and points.
    pub c_max_norm: f64,
    /// Dimension of the affine hull of `{C(1, x)}`.
    pub c_affine_dim: usize,
    /// Largest `Φ(x_{k+1}) − Φ(x_k)` over all trajectories.
    pub max_energy_increase: f64,
}

impl DeformedSet {
    pub fn max_reconstruction_error(&self) -> f64 {
        self.records.iter().map(|r| r.reconstruction_error).fold(0.0, f64::max)
    }
}

fn affine_dim(points: &[&DVector<f64>]) -> usize {
    let Some(first) = points.first() else {
        return 0;
    };
    if points.len() < 2 {
        return 0;
    }
    let n = first.len();
    let m = DMatrix::from_fn(n, points.len() - 1, |r, c| points[c + 1][r] - first[r]);
    let sv = m.singular_values();
    let top = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-9 * top.max(1e-300) && s > 1e-14).count()
}

pub fn deform_set(
    points: &[DVector<f64>],
    f: &SplitFunctional,
    z: &Pseudogradient,
    nbhd: &SaddleNeighborhood,
    opts: &FlowOptions,
) -> Result<DeformedSet, SaddleError> {
    let results: Vec<Result<(FlowTrajectory, DeformationRecord), SaddleError>> = points
        .par_iter()
        .map(|x| {
            let traj = integrate_flow(x, f, z, Some(nbhd), opts)?;
            let rec = decompose_deformation(&traj, z, f.operator())?;
            Ok((traj, rec))
        })
        .collect();
    let mut out = DeformedSet {
        images: Vec::with_capacity(points.len()),
        trajectories: Vec::with_capacity(points.len()),
        records: Vec::with_capacity(points.len()),
        taus: Vec::with_capacity(points.len()),
        initial_levels: Vec::with_capacity(points.len()),
        final_levels: Vec::with_capacity(points.len()),
        fixed: Vec::with_capacity(points.len()),
        c_max_norm: 0.0,
        c_affine_dim: 0,
        max_energy_increase: f64::NEG_INFINITY,
    };
    for r in results {
        let (traj, rec) = r?;
        out.fixed.push(traj.states.len() == 1);
        out.initial_levels.push(traj.values[0]);
        out.final_levels.push(*traj.values.last().expect("nonempty trajectory"));
        out.images.push(traj.final_state().clone());
        out.taus.push(traj.tau);
        out.c_max_norm = out.c_max_norm.max(rec.c_max_norm());
        out.max_energy_increase = out.max_energy_increase.max(traj.max_energy_increase());
        out.trajectories.push(traj);
        out.records.push(rec);
    }
    let finals: Vec<&DVector<f64>> = out.records.iter().map(|r| &r.final_node().c).collect();
    out.c_affine_dim = affine_dim(&finals);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saddle::ExitKind;
    use std::sync::Arc;

    fn pendulum_like() -> SplitFunctional {
        SplitFunctional::new(
            SymOperator::from_diagonal(&[1.0, -1.0]),
            Arc::new(|x: &DVector<f64>| 0.25 * x[0].powi(4) - 0.25 * x[1].powi(4)),
            Arc::new(|x: &DVector<f64>| DVector::from_vec(vec![x[0].powi(3), -x[1].powi(3)])),
        )
    }

    #[test]
    fn zero_field_gives_zero_c() {
        let f = SplitFunctional::quadratic(SymOperator::from_diagonal(&[1.0, -1.0, 0.0]));
        let z = Pseudogradient::exact(&f);
        let x0 = DVector::from_vec(vec![0.4, 0.1, 0.7]);
        let traj = integrate_flow(&x0, &f, &z, None, &FlowOptions::default()).unwrap();
        let rec = decompose_deformation(&traj, &z, f.operator()).unwrap();
        assert_eq!(rec.c_max_norm(), 0.0);
        assert!(rec.reconstruction_error < 1e-9);
        assert_eq!((rec.nodes[0].theta, rec.nodes[0].t), (0.0, 0.0));
        assert!((rec.final_node().theta + 1.0).abs() < 1e-15);
    }

    #[test]
    fn nonlinear_flow_reconstructs() {
        let f = pendulum_like();
        let z = Pseudogradient::exact(&f);
        let x0 = DVector::from_vec(vec![0.3, 0.2]);
        let opts = FlowOptions { c0: Some(-0.05), step: Some(5e-3), ..FlowOptions::default() };
        let traj = integrate_flow(&x0, &f, &z, None, &opts).unwrap();
        assert_eq!(traj.exit_kind, ExitKind::HitSublevel);
        let rec = decompose_deformation(&traj, &z, f.operator()).unwrap();
        assert!(rec.reconstruction_error < 1e-9, "{}", rec.reconstruction_error);
        assert!(rec.c_max_norm() > 0.0);
        assert!((rec.final_node().t - 1.0).abs() < 1e-15);
        let errs = rec.node_errors(f.operator());
        assert_eq!(errs.len(), rec.nodes.len());
        assert_eq!(errs[0], 0.0);
        assert_eq!(errs.iter().copied().fold(0.0, f64::max), rec.reconstruction_error);
    }

    #[test]
    fn juxtaposition_stays_in_form() {
        let f = pendulum_like();
        let z = Pseudogradient::exact(&f);
        let x0 = DVector::from_vec(vec![0.3, 0.2]);
        let first = FlowOptions { c0: Some(-0.03), ..FlowOptions::default() };
        let t1 = integrate_flow(&x0, &f, &z, None, &first).unwrap();
        let r1 = decompose_deformation(&t1, &z, f.operator()).unwrap();
        let second = FlowOptions { c0: Some(-0.06), ..FlowOptions::default() };
        let t2 = integrate_flow(t1.final_state(), &f, &z, None, &second).unwrap();
        let r2 = decompose_deformation(&t2, &z, f.operator()).unwrap();
        let joined = juxtapose(&r1, &r2, f.operator()).unwrap();
        assert!(joined.reconstruction_error <= 2e-6);
        assert!((joined.final_node().theta + t1.tau + t2.tau).abs() < 1e-14);
        assert!(matches!(juxtapose(&r2, &r1, f.operator()), Err(SaddleError::InconsistentInput(_))));
    }
}
