use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::counterexample::{bump, bump_derivative, bump_second_derivative};
use super::{LabError, Scenario};
use crate::functional::SplitFunctional;
use crate::grassmann::Subspace;
use crate::saddle::ProbeGrid;

/// Allowed excess of the measured gradient deviation over the amplitude.
pub const BUDGET_SLACK: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PerturbationKind {
    /// `ε⟨a, x⟩`.
    LinearTilt,
    /// `ε cos⟨a, x⟩`.
    TrigBump,
    /// `(ε/√k) Σ_j sin⟨b_j, x⟩` over orthonormal `b_1..b_k`.
    FiniteRankSmooth,
    /// `ε^{1/4} f_ε(x + y)` in two dimensions; only `C⁰`-small.
    C0Counterexample,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 4] = [
        PerturbationKind::LinearTilt,
        PerturbationKind::TrigBump,
        PerturbationKind::FiniteRankSmooth,
        PerturbationKind::C0Counterexample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::LinearTilt => "linear_tilt",
            PerturbationKind::TrigBump => "trig_bump",
            PerturbationKind::FiniteRankSmooth => "finite_rank_smooth",
            PerturbationKind::C0Counterexample => "c0_counterexample",
        }
    }

    /// Whether the gradient deviation is bounded by the amplitude.
    pub fn is_c1(self) -> bool {
        self != PerturbationKind::C0Counterexample
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbationKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LabError::InvalidParameter(format!("unknown perturbation kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub amplitude: f64,
    /// Unit direction `a`; drawn from `seed` when absent.
    pub direction: Option<DVector<f64>>,
    /// Number of directions for the finite-rank kind.
    pub rank: usize,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, amplitude: f64) -> Self {
        Self { kind, amplitude, direction: None, rank: 2, seed: 0 }
    }

    pub fn with_direction(mut self, a: DVector<f64>) -> Self {
        self.direction = Some(a);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Perturbed functional with its measured `sup ‖∇Ψ − ∇Ψ*‖`.
#[derive(Debug, Clone)]
pub struct Perturbed {
    pub functional: SplitFunctional,
    pub spec: PerturbationSpec,
    pub direction: DVector<f64>,
    pub measured_deviation: f64,
}

fn random_unit(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    loop {
        let v: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let norm = v.norm();
        if norm > 1e-8 {
            return v / norm;
        }
    }
}

type Extra = (crate::functional::ValueFn, crate::functional::GradFn, crate::functional::HessFn);

fn extra_terms(spec: &PerturbationSpec, a: &DVector<f64>, n: usize, rng: &mut ChaCha8Rng) -> Result<Extra, LabError> {
    let eps = spec.amplitude;
    Ok(match spec.kind {
        PerturbationKind::LinearTilt => {
            let (a1, a2) = (a.clone(), a.clone());
            (Arc::new(move |x| eps * a1.dot(x)), Arc::new(move |_| &a2 * eps), Arc::new(move |_| DMatrix::zeros(n, n)))
        }
        PerturbationKind::TrigBump => {
            let (a1, a2, a3) = (a.clone(), a.clone(), a.clone());
            (
                Arc::new(move |x| eps * a1.dot(x).cos()),
                Arc::new(move |x| &a2 * (-eps * a2.dot(x).sin())),
                Arc::new(move |x| &a3 * a3.transpose() * (-eps * a3.dot(x).cos())),
            )
        }
        PerturbationKind::FiniteRankSmooth => {
            let k = spec.rank;
            if k == 0 || k > n {
                return Err(LabError::InvalidParameter(format!("rank {k} outside 1..={n}")));
            }
            let mut cols = DMatrix::zeros(n, k);
            cols.set_column(0, a);
            for j in 1..k {
                cols.set_column(j, &random_unit(n, rng));
            }
            let b = Subspace::span(&cols).into_basis();
            if b.ncols() != k {
                return Err(LabError::InvalidParameter("finite-rank directions are dependent".into()));
            }
            let w = eps / (k as f64).sqrt();
            let (b1, b2, b3) = (b.clone(), b.clone(), b);
            (
                Arc::new(move |x| w * (b1.transpose() * x).iter().map(|t| t.sin()).sum::<f64>()),
                Arc::new(move |x| &b2 * (b2.transpose() * x).map(|t| w * t.cos())),
                Arc::new(move |x| {
                    let d = (b3.transpose() * x).map(|t| -w * t.sin());
                    &b3 * DMatrix::from_diagonal(&d) * b3.transpose()
                }),
            )
        }
        PerturbationKind::C0Counterexample => {
            if n != 2 {
                return Err(LabError::InvalidParameter(
                    "the C0 counterexample term needs a two-dimensional scenario".into(),
                ));
            }
            if !(eps > 0.0) {
                return Err(LabError::EpsilonOutOfRange(eps));
            }
            let c = eps.powf(0.25);
            (
                Arc::new(move |x| c * bump(eps, x[0] + x[1])),
                Arc::new(move |x| DVector::from_element(2, c * bump_derivative(eps, x[0] + x[1]))),
                Arc::new(move |x| DMatrix::from_element(2, 2, c * bump_second_derivative(eps, x[0] + x[1]))),
            )
        }
    })
}

/// Grid points of the neighborhood plus seeded points of its bounding box.
pub fn deviation_probes(s: &Scenario, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let n = s.ambient_dim();
    let grid = ProbeGrid { max_samples: 64, ..ProbeGrid::default() };
    let mut out = Vec::new();
    let radial = (s.r_minus * s.r_minus + s.r_plus * s.r_plus).sqrt();
    for i in grid.sample_indices(s.manifold.len()) {
        let m = &s.manifold.samples()[i].point;
        for d in grid.ball(n) {
            out.push(m + d * radial);
        }
    }
    let extent = s.manifold.samples().iter().map(|p| p.point.amax()).fold(0.0, f64::max) + radial;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        out.push(DVector::from_fn(n, |_, _| rng.random_range(-extent..=extent)));
    }
    out
}

/// `Ψ* + extra` with the same `L`. `C¹` kinds must stay within the amplitude.
pub fn perturb(s: &Scenario, spec: &PerturbationSpec) -> Result<Perturbed, LabError> {
    let eps = spec.amplitude;
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(LabError::InvalidParameter(format!("amplitude must be nonnegative, got {eps}")));
    }
    let n = s.ambient_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let direction = match &spec.direction {
        Some(a) if a.len() == n && a.norm() > 0.0 => a.normalize(),
        Some(a) => {
            return Err(LabError::InvalidParameter(format!(
                "direction has dimension {} and norm {}",
                a.len(),
                a.norm()
            )))
        }
        None => random_unit(n, &mut rng),
    };
    if eps == 0.0 {
        return Ok(Perturbed {
            functional: s.functional.clone(),
            spec: spec.clone(),
            direction,
            measured_deviation: 0.0,
        });
    }
    let (value, grad, hess) = extra_terms(spec, &direction, n, &mut rng)?;
    let functional = s.functional.plus(value, grad.clone(), Some(hess));
    let measured_deviation =
        deviation_probes(s, 256, spec.seed ^ 0x9e37_79b9).par_iter().map(|x| grad(x).norm()).reduce(|| 0.0, f64::max);
    if spec.kind.is_c1() && measured_deviation > eps * (1.0 + BUDGET_SLACK) {
        return Err(LabError::AmplitudeExceedsBudget { measured: measured_deviation, budget: eps });
    }
    Ok(Perturbed { functional, spec: spec.clone(), direction, measured_deviation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::HessianMode;
    use crate::lab::{build_scenario, ScenarioParams};
    use crate::linalg::max_abs;

    fn circle() -> Scenario {
        build_scenario("circle3", &ScenarioParams::default()).unwrap()
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let s = circle();
        let p = perturb(&s, &PerturbationSpec::new(PerturbationKind::TrigBump, 0.0)).unwrap();
        let x = DVector::from_vec(vec![0.3, 0.9, -0.1]);
        assert_eq!(p.functional.value(&x), s.functional.value(&x));
        assert_eq!(p.measured_deviation, 0.0);
    }

    #[test]
    fn tilt_deviation_is_its_amplitude() {
        let s = circle();
        let spec = PerturbationSpec::new(PerturbationKind::LinearTilt, 0.05)
            .with_direction(DVector::from_vec(vec![1.0, 0.0, 0.0]));
        let p = perturb(&s, &spec).unwrap();
        assert!((p.measured_deviation - 0.05).abs() < 1e-15);
    }

    #[test]
    fn smooth_kinds_stay_within_budget_with_consistent_derivatives() {
        let s = build_scenario("torus6", &ScenarioParams::default()).unwrap();
        for kind in [PerturbationKind::TrigBump, PerturbationKind::FiniteRankSmooth] {
            let p = perturb(&s, &PerturbationSpec::new(kind, 0.02).with_seed(9)).unwrap();
            assert!(p.measured_deviation <= 0.02 * 1.01, "{kind}");
            let x = DVector::from_vec(vec![0.9, 0.2, -0.3, 1.0, 0.1, -0.05]);
            let a = p.functional.hessian_at(&x, HessianMode::Analytic).unwrap();
            let d = p.functional.hessian_at(&x, HessianMode::CentralFd { step: None }).unwrap();
            assert!(max_abs(&(a.entries() - d.entries())) < 1e-6, "{kind}");
        }
    }

    #[test]
    fn counterexample_term_needs_two_dimensions() {
        let s = circle();
        assert!(matches!(
            perturb(&s, &PerturbationSpec::new(PerturbationKind::C0Counterexample, 0.01)),
            Err(LabError::InvalidParameter(_))
        ));
        let p = build_scenario("point_saddle", &ScenarioParams::default()).unwrap();
        let out = perturb(&p, &PerturbationSpec::new(PerturbationKind::C0Counterexample, 0.01)).unwrap();
        assert!(out.measured_deviation > 0.01);
    }
}
