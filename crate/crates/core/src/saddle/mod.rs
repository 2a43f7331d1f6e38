//! Fibered saddle neighborhoods `B = {m + v⁻ + v⁺ : ‖v±‖ < r±}` around a
//! critical manifold, their level and cone conditions, the pseudogradient
//! flow `x' = −(Lx + Z(x))` with sublevel exit times, and the
//! `e^{θL}x + C` form of the resulting deformations.

mod conditions;
mod deformation;
mod flow;
mod neighborhood;

pub use conditions::{boundary_points, verify_saddle_conditions, SaddleOptions, SaddleReport};
pub use deformation::{
    decompose_deformation, deform_set, juxtapose, DeformationNode, DeformationRecord, DeformedSet, RECONSTRUCTION_LIMIT,
};
pub use flow::{
    integrate_flow, pseudogradient, ExitKind, FlowOptions, FlowTrajectory, Pseudogradient, PseudogradientMode,
    DESCENT_SLACK,
};
pub use neighborhood::{
    build_neighborhood, Decomposition, Region, SaddleNeighborhood, BOUNDARY_TOL, DEFAULT_FIBER_TOL,
};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::bundle::BundleError;
use crate::functional::FunctionalError;
use crate::spectral::SpectralError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SaddleError {
    #[error("radii must be positive and finite, got r- = {r_minus}, r+ = {r_plus}")]
    InvalidRadius { r_minus: f64, r_plus: f64 },
    #[error("radii exceed the tubular radius: a probe from sample {sample} decomposes with foot point {offset} away")]
    TubularRadiusExceeded { sample: usize, offset: f64 },
    #[error("level gap violated: sup on the minus boundary {sup_minus}, inf on the core {inf_b0}, level {c0}")]
    LevelGapViolated { sup_minus: f64, inf_b0: f64, c0: f64 },
    #[error("gradient norm {grad_norm} on the sublevel is below the floor {floor}")]
    CriticalOnSublevel { grad_norm: f64, floor: f64 },
    #[error("cone condition fails at sample {sample}: {detail}")]
    ConeViolated { sample: usize, detail: String },
    #[error("finite-rank pseudogradient error {bound} is not below sigma {sigma}")]
    BoundExceedsSigma { bound: f64, sigma: f64 },
    #[error("rank {k} exceeds the dimension {dim}")]
    InvalidRank { k: usize, dim: usize },
    #[error("trajectory left the closed neighborhood at t = {time} before reaching the sublevel")]
    LeftNeighborhood { time: f64 },
    #[error("energy increased by {increase} at t = {time}")]
    StepTooLarge { time: f64, increase: f64 },
    #[error("deformation reconstruction error {error} exceeds the limit")]
    QuadratureDivergence { error: f64 },
    #[error("inconsistent inputs: {0}")]
    InconsistentInput(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Deterministic sample grids for suprema and infima over the neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGrid {
    /// At most this many manifold samples are visited, evenly strided.
    pub max_samples: usize,
    /// Directions on a circle fiber sphere.
    pub circle_points: usize,
    /// Seeded random directions added to `±axes` on spheres of dimension ≥ 2.
    pub sphere_random: usize,
    /// Radial fractions for ball grids.
    pub fractions: Vec<f64>,
    pub seed: u64,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        Self {
            max_samples: 256,
            circle_points: 16,
            sphere_random: 8,
            fractions: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            seed: 0x5eed,
        }
    }
}

impl ProbeGrid {
    pub fn sample_indices(&self, len: usize) -> Vec<usize> {
        let stride = len.div_ceil(self.max_samples.max(1)).max(1);
        (0..len).step_by(stride).collect()
    }

    /// Unit vectors in `R^k`: `±1` for `k = 1`, an even circle for `k = 2`,
    /// `±e_j` plus seeded random directions otherwise.
    pub fn sphere(&self, k: usize) -> Vec<DVector<f64>> {
        match k {
            0 => vec![],
            1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
            2 => (0..self.circle_points)
                .map(|i| {
                    let a = std::f64::consts::TAU * i as f64 / self.circle_points as f64;
                    DVector::from_vec(vec![a.cos(), a.sin()])
                })
                .collect(),
            _ => {
                let mut out = Vec::with_capacity(2 * k + self.sphere_random);
                for j in 0..k {
                    for s in [1.0, -1.0] {
                        let mut e = DVector::zeros(k);
                        e[j] = s;
                        out.push(e);
                    }
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ k as u64);
                for _ in 0..self.sphere_random {
                    let v = DVector::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
                    out.push(v.normalize());
                }
                out
            }
        }
    }

    /// Sphere directions scaled by every positive fraction, plus the origin.
    pub fn ball(&self, k: usize) -> Vec<DVector<f64>> {
        let mut out = vec![DVector::zeros(k)];
        if k == 0 {
            return out;
        }
        let dirs = self.sphere(k);
        for &f in self.fractions.iter().filter(|&&f| f > 0.0) {
            out.extend(dirs.iter().map(|d| d * f));
        }
        out
    }
}
