//! TOML run configuration. Unknown keys are rejected and every tolerance
//! must be positive.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use critpersist::bundle::{FiberOptions, GalerkinOptions};
use critpersist::lab::{NewtonOptions, PerturbationKind, ScenarioParams, SweepOptions};
use critpersist::saddle::{FlowOptions, ProbeGrid, SaddleOptions, DEFAULT_FIBER_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub rng_seed: u64,
    pub output_dir: PathBuf,
    pub scenario: ScenarioConfig,
    pub sweep: SweepConfig,
    pub tolerances: Tolerances,
    pub flow: FlowConfig,
    pub bundle: BundleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_minus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_plus: Option<f64>,
    pub hilbert_dim: usize,
    pub rotation: f64,
    pub decay: f64,
    pub coupling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub kinds: Vec<String>,
    pub eps_grid: Vec<f64>,
    pub trials: usize,
    pub rank: usize,
    /// Manifold samples seeding the Newton search.
    pub seed_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub zero_tol: f64,
    pub nd_tol: f64,
    pub crit_tol: f64,
    pub fiber_tol: f64,
    pub grad_floor: f64,
    pub cone_step: f64,
    pub newton_tol: f64,
    pub max_iter: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dedup_radius: Option<f64>,
    pub max_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    pub t_max: f64,
    pub time_tol: f64,
    /// Finite-rank pseudogradient; exact `∇Ψ` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    /// Manifold samples whose fiber grids are deformed.
    pub start_samples: usize,
    /// Cap on deformed points, evenly strided over the fiber grids.
    pub max_points: usize,
    /// Level band above `c0` whose points must be pushed into `Φ ≤ c0`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BundleConfig {
    /// Smoothing bandwidth in chart units; 1.5 grid spacings when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    /// Galerkin levels; every even level from the kernel dimension when empty.
    pub levels: Vec<usize>,
    pub s_grid: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rng_seed: 0,
            output_dir: PathBuf::from("out"),
            scenario: ScenarioConfig::default(),
            sweep: SweepConfig::default(),
            tolerances: Tolerances::default(),
            flow: FlowConfig::default(),
            bundle: BundleConfig::default(),
        }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let p = ScenarioParams::default();
        Self {
            name: "circle3".into(),
            samples: p.samples,
            r_minus: p.r_minus,
            r_plus: p.r_plus,
            hilbert_dim: p.hilbert_dim,
            rotation: p.rotation,
            decay: p.decay,
            coupling: p.coupling,
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        let s = SweepOptions::default();
        Self {
            kinds: s.kinds.iter().map(|k| k.name().to_string()).collect(),
            eps_grid: s.eps_grid,
            trials: s.trials,
            rank: s.rank,
            seed_samples: s.newton.grid.max_samples,
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        let fiber = FiberOptions::default();
        let saddle = SaddleOptions::default();
        let newton = NewtonOptions::default();
        Self {
            zero_tol: fiber.zero_tol,
            nd_tol: fiber.nd_tol,
            crit_tol: fiber.crit_tol,
            fiber_tol: DEFAULT_FIBER_TOL,
            grad_floor: saddle.grad_floor,
            cone_step: saddle.cone_step,
            newton_tol: newton.newton_tol,
            max_iter: newton.max_iter,
            dedup_radius: newton.dedup_radius,
            max_samples: saddle.grid.max_samples,
        }
    }
}

impl Default for FlowConfig {
    fn default() -> Self {
        let f = FlowOptions::default();
        Self {
            step: f.step,
            t_max: f.t_max,
            time_tol: f.time_tol,
            rank: None,
            start_samples: 8,
            max_points: 4096,
            delta: None,
        }
    }
}

impl Default for BundleConfig {
    fn default() -> Self {
        Self { bandwidth: None, levels: Vec::new(), s_grid: GalerkinOptions::default().s_grid }
    }
}

/// Every key with its default and meaning, for `--help`.
pub const KNOBS: &[(&str, &str, &str)] = &[
    ("rng_seed", "0", "seed of every random substream"),
    ("output_dir", "\"out\"", "directory for CSV outputs"),
    ("scenario.name", "\"circle3\"", "circle3 | twisted_circle4 | torus6 | hilbert_toy | point_saddle"),
    ("scenario.samples", "per scenario", "manifold samples per periodic parameter"),
    ("scenario.r_minus", "per scenario", "radius of the negative fibers"),
    ("scenario.r_plus", "per scenario", "radius of the positive fibers"),
    ("scenario.hilbert_dim", "32", "ambient dimension of hilbert_toy"),
    ("scenario.rotation", "0.3", "first rotation angle of hilbert_toy"),
    ("scenario.decay", "0.5", "ratio between successive rotation angles"),
    ("scenario.coupling", "0.5", "fiber twisting strength of hilbert_toy"),
    ("sweep.kinds", "[\"linear_tilt\"]", "linear_tilt | trig_bump | finite_rank_smooth | c0_counterexample"),
    ("sweep.eps_grid", "[0.1, 0.05, 0.01]", "perturbation amplitudes"),
    ("sweep.trials", "10", "random draws per kind and amplitude"),
    ("sweep.rank", "2", "directions of finite_rank_smooth"),
    ("sweep.seed_samples", "256", "manifold samples seeding the Newton search"),
    ("tolerances.zero_tol", "1e-8", "kernel threshold relative to the operator norm"),
    ("tolerances.nd_tol", "1e-6", "bound on the kernel-to-tangent distance"),
    ("tolerances.crit_tol", "1e-8", "bound on the gradient at manifold samples"),
    ("tolerances.fiber_tol", "1e-6", "fiber-coordinate tolerance of the neighborhood"),
    ("tolerances.grad_floor", "1e-6", "smallest admissible gradient on the sublevel"),
    ("tolerances.cone_step", "1e-4", "cone probe step relative to min(r-, r+)"),
    ("tolerances.newton_tol", "1e-10", "gradient norm accepted as critical"),
    ("tolerances.max_iter", "100", "Newton iterations per seed"),
    ("tolerances.dedup_radius", "1e-3 x neighborhood size", "cluster merge radius"),
    ("tolerances.max_samples", "256", "manifold samples visited by saddle probe grids"),
    ("flow.step", "1e-2 x r-", "fixed RK4 step"),
    ("flow.t_max", "1.0", "flow time limit"),
    ("flow.time_tol", "1e-10", "accuracy of the sublevel exit time"),
    ("flow.rank", "exact", "rank of the finite-rank pseudogradient"),
    ("flow.start_samples", "8", "manifold samples whose fiber grids are deformed"),
    ("flow.max_points", "4096", "cap on deformed points"),
    ("flow.delta", "(inf on core - c0) / 4", "level band above c0 pushed into the sublevel"),
    ("bundle.bandwidth", "1.5 grid spacings", "mollifier bandwidth in chart units"),
    ("bundle.levels", "even levels", "Galerkin levels"),
    ("bundle.s_grid", "-2..2 step 0.5", "flow parameters for the drift diagnostic"),
];

pub fn knob_help() -> String {
    let mut out = String::from("Config keys (TOML):\n");
    for (key, default, meaning) in KNOBS {
        out.push_str(&format!("  {key:<26} default {default:<26} {meaning}\n"));
    }
    out
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        bail!("{name} must be positive and finite, got {v}")
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn emit(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.zero_tol", t.zero_tol),
            ("tolerances.nd_tol", t.nd_tol),
            ("tolerances.crit_tol", t.crit_tol),
            ("tolerances.fiber_tol", t.fiber_tol),
            ("tolerances.grad_floor", t.grad_floor),
            ("tolerances.cone_step", t.cone_step),
            ("tolerances.newton_tol", t.newton_tol),
            ("flow.t_max", self.flow.t_max),
            ("flow.time_tol", self.flow.time_tol),
        ] {
            positive(name, v)?;
        }
        for (name, v) in [
            ("tolerances.dedup_radius", t.dedup_radius),
            ("scenario.r_minus", self.scenario.r_minus),
            ("scenario.r_plus", self.scenario.r_plus),
            ("flow.step", self.flow.step),
            ("flow.delta", self.flow.delta),
            ("bundle.bandwidth", self.bundle.bandwidth),
        ] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        if t.max_iter == 0
            || t.max_samples == 0
            || self.sweep.trials == 0
            || self.sweep.seed_samples == 0
            || self.flow.start_samples == 0
            || self.flow.max_points == 0
        {
            bail!("tolerances.max_iter, tolerances.max_samples, sweep.trials, sweep.seed_samples, flow.start_samples and flow.max_points must be positive");
        }
        self.kinds()?;
        if let Some(e) = self.sweep.eps_grid.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
            bail!("sweep.eps_grid entries must be nonnegative, got {e}");
        }
        Ok(())
    }

    pub fn kinds(&self) -> Result<Vec<PerturbationKind>> {
        if self.sweep.kinds.is_empty() {
            bail!("sweep.kinds must not be empty");
        }
        self.sweep.kinds.iter().map(|k| k.parse::<PerturbationKind>().map_err(Into::into)).collect()
    }

    pub fn scenario_params(&self) -> ScenarioParams {
        let s = &self.scenario;
        ScenarioParams {
            samples: s.samples,
            r_minus: s.r_minus,
            r_plus: s.r_plus,
            hilbert_dim: s.hilbert_dim,
            rotation: s.rotation,
            decay: s.decay,
            coupling: s.coupling,
        }
    }

    pub fn grid(&self) -> ProbeGrid {
        ProbeGrid { max_samples: self.tolerances.max_samples, seed: self.rng_seed, ..ProbeGrid::default() }
    }

    pub fn fiber_options(&self) -> FiberOptions {
        FiberOptions {
            zero_tol: self.tolerances.zero_tol,
            nd_tol: self.tolerances.nd_tol,
            crit_tol: self.tolerances.crit_tol,
            hessian: None,
        }
    }

    pub fn saddle_options(&self) -> SaddleOptions {
        SaddleOptions {
            grad_floor: self.tolerances.grad_floor,
            cone_step: self.tolerances.cone_step,
            grid: self.grid(),
            ..SaddleOptions::default()
        }
    }

    pub fn newton_options(&self) -> NewtonOptions {
        NewtonOptions {
            newton_tol: self.tolerances.newton_tol,
            max_iter: self.tolerances.max_iter,
            dedup_radius: self.tolerances.dedup_radius,
            grid: ProbeGrid { max_samples: self.sweep.seed_samples, ..self.grid() },
            ..NewtonOptions::default()
        }
    }

    pub fn sweep_options(&self) -> Result<SweepOptions> {
        Ok(SweepOptions {
            kinds: self.kinds()?,
            eps_grid: self.sweep.eps_grid.clone(),
            trials: self.sweep.trials,
            seed: self.rng_seed,
            rank: self.sweep.rank,
            newton: self.newton_options(),
        })
    }

    pub fn flow_options(&self, c0: f64) -> FlowOptions {
        FlowOptions { step: self.flow.step, c0: Some(c0), t_max: self.flow.t_max, time_tol: self.flow.time_tol }
    }

    pub fn galerkin_options(&self) -> GalerkinOptions {
        GalerkinOptions { zero_tol: self.tolerances.zero_tol, s_grid: self.bundle.s_grid.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.emit().unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn full_precision_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.sweep.eps_grid = vec![0.1 + 0.2, 1.0 / 3.0, 5e-324];
        cfg.tolerances.dedup_radius = Some(std::f64::consts::PI * 1e-7);
        cfg.scenario.r_minus = Some(0.30000000000000004);
        let back = RunConfig::parse(&cfg.emit().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("rng_sed = 1").is_err());
        assert!(RunConfig::parse("[scenario]\nnam = \"circle3\"").is_err());
    }

    #[test]
    fn nonpositive_tolerances_are_rejected() {
        assert!(RunConfig::parse("[tolerances]\nnewton_tol = 0.0").is_err());
        assert!(RunConfig::parse("[flow]\nstep = -1e-3").is_err());
        assert!(RunConfig::parse("[sweep]\nkinds = [\"wobble\"]").is_err());
    }

    fn dotted_keys(value: &toml::Value) -> BTreeSet<String> {
        let mut keys = BTreeSet::new();
        for (k, v) in value.as_table().unwrap() {
            match v.as_table() {
                Some(t) => keys.extend(t.keys().map(|s| format!("{k}.{s}"))),
                None => {
                    keys.insert(k.clone());
                }
            }
        }
        keys
    }

    fn knob_keys() -> BTreeSet<String> {
        KNOBS.iter().map(|(k, _, _)| k.to_string()).collect()
    }

    #[test]
    fn every_knob_is_documented_exactly_once() {
        let mut cfg = RunConfig::default();
        cfg.scenario.samples = Some(32);
        cfg.scenario.r_minus = Some(0.3);
        cfg.scenario.r_plus = Some(0.1);
        cfg.tolerances.dedup_radius = Some(1e-4);
        cfg.flow.step = Some(1e-3);
        cfg.flow.rank = Some(2);
        cfg.flow.delta = Some(1e-3);
        cfg.bundle.bandwidth = Some(0.2);
        let text = cfg.emit().unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
        assert_eq!(dotted_keys(&toml::from_str(&text).unwrap()), knob_keys());
        assert_eq!(KNOBS.len(), knob_keys().len());
        let help = knob_help();
        assert!(KNOBS.iter().all(|(k, d, _)| help.contains(k) && help.contains(d)));
    }

    #[test]
    fn schema_lists_every_knob() {
        let schema: serde_json::Value = serde_json::from_str(include_str!("../../../configs/schema.json")).unwrap();
        let mut keys = BTreeSet::new();
        for (k, v) in schema["properties"].as_object().unwrap() {
            match v.get("properties").and_then(|p| p.as_object()) {
                Some(section) => keys.extend(section.keys().map(|s| format!("{k}.{s}"))),
                None => {
                    keys.insert(k.clone());
                }
            }
        }
        assert_eq!(keys, knob_keys());
    }

    #[test]
    fn shipped_configs_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut count = 0;
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                RunConfig::load(&path).unwrap();
                count += 1;
            }
        }
        assert!(count >= 3);
    }
}
