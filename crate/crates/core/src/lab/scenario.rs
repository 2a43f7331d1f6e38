use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{cuplength, LabError, Topology};
use crate::bundle::{
    fiber_splitting, sample_manifold, BundleSample, ChartGeometry, CriticalManifold, FiberOptions, ManifoldKind,
};
use crate::functional::SplitFunctional;
use crate::saddle::{
    build_neighborhood, verify_saddle_conditions, SaddleNeighborhood, SaddleOptions, SaddleReport, DEFAULT_FIBER_TOL,
};
use crate::spectral::{adapted_metric, SymOperator, DEFAULT_ZERO_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    Circle3,
    TwistedCircle4,
    Torus6,
    HilbertToy,
    PointSaddle,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Circle3,
        ScenarioKind::TwistedCircle4,
        ScenarioKind::Torus6,
        ScenarioKind::HilbertToy,
        ScenarioKind::PointSaddle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Circle3 => "circle3",
            ScenarioKind::TwistedCircle4 => "twisted_circle4",
            ScenarioKind::Torus6 => "torus6",
            ScenarioKind::HilbertToy => "hilbert_toy",
            ScenarioKind::PointSaddle => "point_saddle",
        }
    }

    /// Default `(r⁻, r⁺)`.
    pub fn default_radii(self) -> (f64, f64) {
        match self {
            ScenarioKind::Circle3 => (0.3, 0.1),
            ScenarioKind::Torus6 => (0.3, 0.08),
            ScenarioKind::PointSaddle => (0.5, 0.25),
            _ => (0.2, 0.05),
        }
    }

    pub fn default_samples(self) -> usize {
        match self {
            ScenarioKind::Torus6 => 32,
            ScenarioKind::PointSaddle => 1,
            _ => 64,
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| LabError::UnknownScenario(s.to_string()))
    }
}

/// Knobs shared by the built-in scenarios. `None` picks the scenario default.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub samples: Option<usize>,
    pub r_minus: Option<f64>,
    pub r_plus: Option<f64>,
    /// Ambient dimension of `hilbert_toy`.
    pub hilbert_dim: usize,
    /// Angle of the first rotation mixing the circle plane into the tail.
    pub rotation: f64,
    /// Ratio between successive rotation angles.
    pub decay: f64,
    /// Strength of the fiber-twisting term in `hilbert_toy`.
    pub coupling: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self { samples: None, r_minus: None, r_plus: None, hilbert_dim: 32, rotation: 0.3, decay: 0.5, coupling: 0.5 }
    }
}

/// `Φ*` with its critical manifold and neighborhood radii.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub functional: SplitFunctional,
    pub manifold: CriticalManifold,
    pub topology: Topology,
    pub r_minus: f64,
    pub r_plus: f64,
    pub notes: String,
}

/// Bundle, neighborhood and verified saddle report of a scenario.
#[derive(Debug, Clone)]
pub struct ScenarioSetup {
    pub bundle: BundleSample,
    pub neighborhood: SaddleNeighborhood,
    pub saddle: SaddleReport,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn ambient_dim(&self) -> usize {
        self.functional.dim()
    }

    pub fn cuplength(&self) -> usize {
        cuplength(&self.topology)
    }

    /// `1 + cl(M)`.
    pub fn bound_required(&self) -> usize {
        1 + self.cuplength()
    }

    pub fn bundle(&self) -> Result<BundleSample, LabError> {
        Ok(fiber_splitting(&self.functional, &self.manifold, &FiberOptions::default())?)
    }

    pub fn setup(&self, opts: &SaddleOptions) -> Result<ScenarioSetup, LabError> {
        let bundle = self.bundle()?;
        let neighborhood = build_neighborhood(&self.manifold, &bundle, self.r_minus, self.r_plus, DEFAULT_FIBER_TOL)?;
        let saddle = verify_saddle_conditions(&neighborhood, &self.functional, opts)?;
        Ok(ScenarioSetup { bundle, neighborhood, saddle })
    }
}

/// `L` in canonical form, checked through the adapted metric.
fn canonical(diag: &[f64]) -> Result<SymOperator<f64>, LabError> {
    let l = SymOperator::from_diagonal(diag);
    Ok(adapted_metric(&l, DEFAULT_ZERO_TOL)?.canonical_operator(&l)?)
}

/// Adds `−½⟨Lx, x⟩` to a full functional so that it splits as `½⟨Lx,x⟩ + Ψ`.
fn split_off(
    l: SymOperator<f64>,
    value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    grad: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    hess: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
) -> SplitFunctional {
    let (l1, l2, l3) = (l.clone(), l.clone(), l.clone());
    SplitFunctional::new(
        l,
        Arc::new(move |x| value(x) - 0.5 * l1.quadratic_form(x)),
        Arc::new(move |x| grad(x) - l2.apply(x)),
    )
    .with_hessian(Arc::new(move |x| hess(x) - l3.entries()))
}

/// `¼(x_i² + x_j² − 1)²` with gradient and Hessian added in place.
fn ring(x: &DVector<f64>, i: usize, j: usize, g: Option<&mut DVector<f64>>, h: Option<&mut DMatrix<f64>>) -> f64 {
    let (a, b) = (x[i], x[j]);
    let s = a * a + b * b - 1.0;
    if let Some(g) = g {
        g[i] += s * a;
        g[j] += s * b;
    }
    if let Some(h) = h {
        h[(i, i)] += s + 2.0 * a * a;
        h[(j, j)] += s + 2.0 * b * b;
        h[(i, j)] += 2.0 * a * b;
        h[(j, i)] += 2.0 * a * b;
    }
    0.25 * s * s
}

/// `Σ ½ d_k x_k²` over the listed coordinates, with derivatives in place.
fn quad(x: &DVector<f64>, terms: &[(usize, f64)], g: Option<&mut DVector<f64>>, h: Option<&mut DMatrix<f64>>) -> f64 {
    if let Some(g) = g {
        for &(k, d) in terms {
            g[k] += d * x[k];
        }
    }
    if let Some(h) = h {
        for &(k, d) in terms {
            h[(k, k)] += d;
        }
    }
    terms.iter().map(|&(k, d)| 0.5 * d * x[k] * x[k]).sum()
}

fn polynomial_scenario(
    n: usize,
    full: impl Fn(&DVector<f64>, Option<&mut DVector<f64>>, Option<&mut DMatrix<f64>>) -> f64
        + Send
        + Sync
        + Clone
        + 'static,
    l: SymOperator<f64>,
) -> SplitFunctional {
    let (fv, fg, fh) = (full.clone(), full.clone(), full);
    split_off(
        l,
        move |x| fv(x, None, None),
        move |x| {
            let mut g = DVector::zeros(n);
            fg(x, Some(&mut g), None);
            g
        },
        move |x| {
            let mut h = DMatrix::zeros(n, n);
            fh(x, None, Some(&mut h));
            h
        },
    )
}

fn circle3() -> Result<SplitFunctional, LabError> {
    let full = |x: &DVector<f64>, mut g: Option<&mut DVector<f64>>, mut h: Option<&mut DMatrix<f64>>| {
        ring(x, 0, 1, g.as_deref_mut(), h.as_deref_mut()) + quad(x, &[(2, -1.0)], g, h)
    };
    Ok(polynomial_scenario(3, full, canonical(&[0.0, 0.0, -1.0])?))
}

fn torus6() -> Result<SplitFunctional, LabError> {
    let full = |x: &DVector<f64>, mut g: Option<&mut DVector<f64>>, mut h: Option<&mut DMatrix<f64>>| {
        ring(x, 0, 1, g.as_deref_mut(), h.as_deref_mut())
            + ring(x, 2, 3, g.as_deref_mut(), h.as_deref_mut())
            + quad(x, &[(4, -1.0), (5, 1.0)], g, h)
    };
    Ok(polynomial_scenario(6, full, canonical(&[0.0, 0.0, 0.0, 0.0, -1.0, 1.0])?))
}

fn point_saddle() -> Result<SplitFunctional, LabError> {
    let full = |x: &DVector<f64>, g: Option<&mut DVector<f64>>, h: Option<&mut DMatrix<f64>>| {
        let (a, b) = (x[0], x[1]);
        if let Some(g) = g {
            g[0] += a + a.powi(3);
            g[1] += -b - b.powi(3);
        }
        if let Some(h) = h {
            h[(0, 0)] += 1.0 + 3.0 * a * a;
            h[(1, 1)] += -1.0 - 3.0 * b * b;
        }
        0.5 * a * a + 0.25 * a.powi(4) - 0.5 * b * b - 0.25 * b.powi(4)
    };
    Ok(polynomial_scenario(2, full, canonical(&[1.0, -1.0])?))
}

/// Ring energy plus `½⟨A(x, y) w, w⟩` on `w = (x₃, x₄)` with
/// `A = [[x² − y², −2xy], [−2xy, y² − x²]]`, which equals
/// `R(α)ᵀ diag(1, −1) R(α)` on the unit circle.
fn twisted_circle4() -> Result<SplitFunctional, LabError> {
    let full = |x: &DVector<f64>, mut g: Option<&mut DVector<f64>>, h: Option<&mut DMatrix<f64>>| {
        let base = ring(x, 0, 1, g.as_deref_mut(), None);
        let (a, b, w1, w2) = (x[0], x[1], x[2], x[3]);
        let p = a * a - b * b;
        let q = 2.0 * a * b;
        let d = w1 * w1 - w2 * w2;
        let c = w1 * w2;
        if let Some(g) = g {
            g[0] += a * d - 2.0 * b * c;
            g[1] += -b * d - 2.0 * a * c;
            g[2] += p * w1 - q * w2;
            g[3] += -p * w2 - q * w1;
        }
        if let Some(h) = h {
            ring(x, 0, 1, None, Some(&mut *h));
            let entries = [
                (0, 0, d),
                (1, 1, -d),
                (0, 1, -2.0 * c),
                (0, 2, 2.0 * a * w1 - 2.0 * b * w2),
                (0, 3, -2.0 * a * w2 - 2.0 * b * w1),
                (1, 2, -2.0 * b * w1 - 2.0 * a * w2),
                (1, 3, 2.0 * b * w2 - 2.0 * a * w1),
                (2, 2, p),
                (3, 3, -p),
                (2, 3, -q),
            ];
            for (i, j, v) in entries {
                h[(i, j)] += v;
                if i != j {
                    h[(j, i)] += v;
                }
            }
        }
        base + 0.5 * (p * d - 2.0 * q * c)
    };
    Ok(polynomial_scenario(4, full, canonical(&[0.0, 0.0, 1.0, -1.0])?))
}

/// Product of rotations in the planes `(0, t)` and `(1, t)` with angles
/// `rotation · decay^{t−2}`.
pub fn hilbert_rotation(n: usize, rotation: f64, decay: f64) -> DMatrix<f64> {
    let mut q = DMatrix::identity(n, n);
    for t in 2..n {
        let angle = rotation * decay.powi(t as i32 - 2);
        let (c, s) = (angle.cos(), angle.sin());
        for a in [0, 1] {
            let mut g = DMatrix::identity(n, n);
            g[(a, a)] = c;
            g[(t, t)] = c;
            g[(a, t)] = -s;
            g[(t, a)] = s;
            q = g * q;
        }
    }
    q
}

/// `Φ*(x) = Φ₀(Qᵀx)` with
/// `Φ₀(y) = ¼(y₀² + y₁² − 1)² + ½⟨S y_t, y_t⟩ + ½γ⟨g, y_t⟩²`, where
/// `S = diag(1, −1, 1, …)` on the tail and `g = y₀g₁ + y₁g₂` twists the
/// tail fibers along the circle.
fn hilbert_toy(n: usize, params: &ScenarioParams) -> Result<(SplitFunctional, DMatrix<f64>), LabError> {
    if n < 4 {
        return Err(LabError::InvalidParameter(format!("hilbert_dim must be at least 4, got {n}")));
    }
    let tail = n - 2;
    let signs: Vec<f64> = (0..tail).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let mut diag = vec![0.0, 0.0];
    diag.extend(&signs);
    let l = canonical(&diag)?;
    let g1 = DVector::from_fn(tail, |k, _| 0.3 * 0.6f64.powi(k as i32) * if k % 2 == 0 { 1.0 } else { -1.0 });
    let g2 = DVector::from_fn(tail, |k, _| 0.3 * 0.6f64.powi(k as i32));
    let gamma = params.coupling;
    let q = hilbert_rotation(n, params.rotation, params.decay);

    let model = Arc::new(move |y: &DVector<f64>, g: Option<&mut DVector<f64>>, h: Option<&mut DMatrix<f64>>| {
        let yt = y.rows(2, tail);
        let (p1, p2) = (g1.dot(&yt), g2.dot(&yt));
        let gv = &g1 * y[0] + &g2 * y[1];
        let u = gv.dot(&yt);
        let r2 = y[0] * y[0] + y[1] * y[1];
        let s = r2 - 1.0;
        let st: f64 = (0..tail).map(|k| signs[k] * yt[k] * yt[k]).sum();
        if let Some(g) = g {
            g[0] = s * y[0] + gamma * u * p1;
            g[1] = s * y[1] + gamma * u * p2;
            for k in 0..tail {
                g[2 + k] = signs[k] * yt[k] + gamma * u * gv[k];
            }
        }
        if let Some(h) = h {
            h.fill(0.0);
            h[(0, 0)] = s + 2.0 * y[0] * y[0] + gamma * p1 * p1;
            h[(1, 1)] = s + 2.0 * y[1] * y[1] + gamma * p2 * p2;
            h[(0, 1)] = 2.0 * y[0] * y[1] + gamma * p1 * p2;
            h[(1, 0)] = h[(0, 1)];
            for k in 0..tail {
                let h0 = gamma * (p1 * gv[k] + u * g1[k]);
                let h1 = gamma * (p2 * gv[k] + u * g2[k]);
                h[(0, 2 + k)] = h0;
                h[(2 + k, 0)] = h0;
                h[(1, 2 + k)] = h1;
                h[(2 + k, 1)] = h1;
                for j in 0..tail {
                    h[(2 + k, 2 + j)] = gamma * gv[k] * gv[j];
                }
                h[(2 + k, 2 + k)] += signs[k];
            }
        }
        0.25 * s * s + 0.5 * st + 0.5 * gamma * u * u
    });
    let (m1, m2, m3) = (model.clone(), model.clone(), model);
    let (q1, q2, q3) = (q.clone(), q.clone(), q.clone());
    let f = split_off(
        l,
        move |x| m1(&(q1.transpose() * x), None, None),
        move |x| {
            let mut g = DVector::zeros(n);
            m2(&(q2.transpose() * x), Some(&mut g), None);
            &q2 * g
        },
        move |x| {
            let mut h = DMatrix::zeros(n, n);
            m3(&(q3.transpose() * x), None, Some(&mut h));
            &q3 * h * q3.transpose()
        },
    );
    Ok((f, q))
}

pub fn build_scenario(name: &str, params: &ScenarioParams) -> Result<Scenario, LabError> {
    let kind: ScenarioKind = name.parse()?;
    let samples = params.samples.unwrap_or(kind.default_samples());
    let (dr_m, dr_p) = kind.default_radii();
    let (r_minus, r_plus) = (params.r_minus.unwrap_or(dr_m), params.r_plus.unwrap_or(dr_p));
    let (functional, manifold, topology, notes) = match kind {
        ScenarioKind::Circle3 => (
            circle3()?,
            sample_manifold(ManifoldKind::Circle, 3, samples, None)?,
            Topology::Circle,
            "¼(x²+y²−1)² − ½z²; unit circle in the (x, y)-plane".to_string(),
        ),
        ScenarioKind::TwistedCircle4 => (
            twisted_circle4()?,
            sample_manifold(ManifoldKind::TwistedCircle, 4, samples, None)?,
            Topology::Circle,
            "ring energy plus a fiber form rotating by the angle along the circle".to_string(),
        ),
        ScenarioKind::Torus6 => (
            torus6()?,
            sample_manifold(ManifoldKind::Torus2, 6, samples, None)?,
            Topology::Torus(2),
            "two ring energies − ½x₅² + ½x₆²; product of unit circles".to_string(),
        ),
        ScenarioKind::HilbertToy => {
            let n = params.hilbert_dim;
            let (f, q) = hilbert_toy(n, params)?;
            let geometry = ChartGeometry { center: DVector::zeros(n), frame: q, radius: 1.0 };
            (
                f,
                sample_manifold(ManifoldKind::Circle, n, samples, Some(geometry))?,
                Topology::Circle,
                format!("rotated circle in R^{n} with twisted tail fibers"),
            )
        }
        ScenarioKind::PointSaddle => (
            point_saddle()?,
            sample_manifold(ManifoldKind::Point, 2, 1, None)?,
            Topology::Point,
            "½x² + ¼x⁴ − ½y² − ¼y⁴ at the origin".to_string(),
        ),
    };
    Ok(Scenario { kind, functional, manifold, topology, r_minus, r_plus, notes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::HessianMode;
    use crate::linalg::max_abs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn all() -> Vec<Scenario> {
        let params = ScenarioParams { hilbert_dim: 8, ..ScenarioParams::default() };
        ScenarioKind::ALL.iter().map(|k| build_scenario(k.name(), &params).unwrap()).collect()
    }

    #[test]
    fn samples_are_critical_and_nondegenerate() {
        for s in all() {
            let b = s.bundle().unwrap();
            assert!(b.crit_residual <= 1e-12, "{}: {}", s.name(), b.crit_residual);
            assert!(b.max_nd_residual() <= 1e-8, "{}", s.name());
            assert_eq!(b.x_zero[0].dim(), s.manifold.dim());
        }
    }

    #[test]
    fn analytic_hessians_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in all() {
            let f = &s.functional;
            let probes: Vec<(DVector<f64>, DVector<f64>)> = (0..6)
                .map(|_| {
                    let x = DVector::from_fn(f.dim(), |_, _| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        0.7 * z
                    });
                    let u = DVector::from_fn(f.dim(), |_, _| StandardNormal.sample(&mut rng)).normalize();
                    (x, u)
                })
                .collect();
            assert!(f.gradient_consistency(&probes) < 1e-7, "{}", s.name());
            for (x, _) in &probes {
                let a = f.hessian_at(x, HessianMode::Analytic).unwrap();
                let d = f.hessian_at(x, HessianMode::CentralFd { step: None }).unwrap();
                assert!(max_abs(&(a.entries() - d.entries())) < 1e-6 * (1.0 + a.norm()), "{}", s.name());
            }
        }
    }

    #[test]
    fn circle_hessian_has_expected_spectrum() {
        let s = build_scenario("circle3", &ScenarioParams::default()).unwrap();
        let h = s.functional.hessian_at(&s.manifold.samples()[0].point, HessianMode::Analytic).unwrap();
        let ev = h.eigenvalues();
        for (got, want) in ev.iter().zip([-1.0, 0.0, 2.0]) {
            assert!((got - want).abs() < 1e-14);
        }
    }

    #[test]
    fn bounds_follow_the_topology() {
        let bounds: Vec<usize> = all().iter().map(|s| s.bound_required()).collect();
        assert_eq!(bounds, vec![2, 2, 3, 2, 1]);
        assert!(matches!(build_scenario("sphere9", &ScenarioParams::default()), Err(LabError::UnknownScenario(_))));
    }

    #[test]
    fn every_scenario_is_a_saddle() {
        for s in all() {
            let setup = s.setup(&SaddleOptions::default());
            assert!(setup.is_ok(), "{}: {:?}", s.name(), setup.err());
        }
    }
}
