//! Built-in scenarios, gradient-small perturbations, multi-start critical
//! point search with multiplicity verdicts against `1 + cl(M)`, parameter
//! sweeps, and the uniformly small perturbation that destroys a saddle.

mod counterexample;
mod cuplength;
mod newton;
mod perturbation;
mod scenario;
mod sweep;

pub use counterexample::{
    bump, bump_derivative, bump_second_derivative, closed_form_lambda, counterexample, counterexample_functional,
    min_grad_on_unit_ball, CounterexampleRecord, UNIT_BALL_GRID,
};
pub use cuplength::{cuplength, multiplicity_bound, Topology};
pub use newton::{
    default_dedup_radius, find_critical_points, newton_seeds, CriticalPoint, CriticalPointReport, NewtonOptions,
    Verdict,
};
pub use perturbation::{deviation_probes, perturb, PerturbationKind, PerturbationSpec, Perturbed, BUDGET_SLACK};
pub use scenario::{build_scenario, hilbert_rotation, Scenario, ScenarioKind, ScenarioParams, ScenarioSetup};
pub use sweep::{
    persistence_sweep, spearman, substream, EpsSummary, SweepOptions, SweepReport, SweepRow, SWEEP_CSV_HEADER,
    TREND_THRESHOLD,
};

use thiserror::Error;

use crate::bundle::BundleError;
use crate::functional::FunctionalError;
use crate::saddle::SaddleError;
use crate::spectral::SpectralError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("measured gradient deviation {measured} exceeds the amplitude {budget}")]
    AmplitudeExceedsBudget { measured: f64, budget: f64 },
    #[error("epsilon {0} must lie in (0, 1/64)")]
    EpsilonOutOfRange(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Saddle(#[from] SaddleError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}
