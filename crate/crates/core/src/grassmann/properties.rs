//! Randomized checks of the inequalities relating `d`, `δ` and `Π_W(V)`.
//!
//! Used by the command-line self test and by the test suites.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{gap_distance, orthogonal_sum, project_subspace, pseudodistance, restricted_projection_floor, Subspace};

/// Result of one randomized property over many instances.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub instances: usize,
    /// Largest observed `lhs − rhs` (or, for continuity, the largest ratio).
    pub worst: f64,
    pub threshold: f64,
    pub holds: bool,
}

impl PropertyOutcome {
    fn new(name: &'static str, instances: usize, worst: f64, threshold: f64) -> Self {
        Self { name, instances, worst, threshold, holds: worst <= threshold }
    }
}

fn perturb(v: &Subspace<f64>, size: f64, rng: &mut ChaCha8Rng) -> Subspace<f64> {
    let noise = DMatrix::from_fn(v.ambient_dim(), v.dim(), |_, _| size * rng.sample::<f64, _>(StandardNormal));
    Subspace::span(&(v.basis() + noise))
}

/// Runs every property on `trials` random instances each, within `slack`.
pub fn run_property_suite(trials: usize, seed: u64, slack: f64) -> Vec<PropertyOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let n = rng.random_range(2..=10);
        let pick = |rng: &mut ChaCha8Rng| {
            let k = rng.random_range(0..=n);
            Subspace::<f64>::random(n, k, rng)
        };
        let (v1, v2, v3) = (pick(&mut rng), pick(&mut rng), pick(&mut rng));
        let lhs = pseudodistance(&v1, &v3).unwrap();
        let rhs = pseudodistance(&v1, &v2).unwrap() + pseudodistance(&v2, &v3).unwrap();
        worst = worst.max(lhs - rhs);
    }
    out.push(PropertyOutcome::new("triangle inequality for pseudodistance", trials, worst, slack));

    let mut worst_lo = f64::NEG_INFINITY;
    let mut worst_hi = f64::NEG_INFINITY;
    for _ in 0..trials {
        let n = rng.random_range(2..=10);
        let k = rng.random_range(1..n);
        let v = Subspace::<f64>::random(n, k, &mut rng);
        let w = if rng.random_bool(0.5) {
            Subspace::random(n, k, &mut rng)
        } else {
            perturb(&v, rng.random_range(0.01..0.5), &mut rng)
        };
        let d = gap_distance(&v, &w).unwrap();
        let sum = pseudodistance(&v, &w).unwrap() + pseudodistance(&w, &v).unwrap();
        worst_lo = worst_lo.max(d - sum);
        worst_hi = worst_hi.max(sum - 2.0 * d);
    }
    out.push(PropertyOutcome::new("sandwich d <= delta + delta", trials, worst_lo, slack));
    out.push(PropertyOutcome::new("sandwich delta + delta <= 2d", trials, worst_hi, slack));

    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let n = rng.random_range(2..=10);
        let k1 = rng.random_range(0..n);
        let k2 = rng.random_range(0..=(n - k1));
        let split = |s: Subspace<f64>| {
            let b = s.basis();
            let first = Subspace::from_orthonormal(b.columns(0, k1).clone_owned()).unwrap();
            let second = Subspace::from_orthonormal(b.columns(k1, k2).clone_owned()).unwrap();
            (first, second)
        };
        let (v1, v2) = split(Subspace::random(n, k1 + k2, &mut rng));
        let (w1, w2) = if rng.random_bool(0.5) {
            split(Subspace::random(n, k1 + k2, &mut rng))
        } else {
            let joint = Subspace::span(&Subspace::stack(&[&v1, &v2]));
            split(perturb(&joint, rng.random_range(0.01..0.3), &mut rng))
        };
        let lhs = gap_distance(&orthogonal_sum(&v1, &v2).unwrap(), &orthogonal_sum(&w1, &w2).unwrap()).unwrap();
        let rhs = gap_distance(&v1, &w1).unwrap() + gap_distance(&v2, &w2).unwrap();
        worst = worst.max(lhs - rhs);
    }
    out.push(PropertyOutcome::new("direct-sum subadditivity", trials, worst, slack));

    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    while checked < trials {
        let n = rng.random_range(2..=10);
        let k = rng.random_range(1..=n);
        let kw = rng.random_range(k..=n);
        let v = Subspace::<f64>::random(n, k, &mut rng);
        let w = Subspace::random(n, kw, &mut rng);
        let delta = pseudodistance(&v, &w).unwrap();
        let Ok(projected) = project_subspace(&v, &w) else {
            continue;
        };
        let bound = 2.0 * delta / (1.0 - delta * delta).sqrt();
        worst = worst.max(gap_distance(&v, &projected).unwrap() - bound);
        checked += 1;
    }
    out.push(PropertyOutcome::new("projected-subspace bound", trials, worst, slack));

    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    while checked < trials {
        let n = rng.random_range(2..=10);
        let k = rng.random_range(1..=n);
        let v = Subspace::<f64>::random(n, k, &mut rng);
        let w = perturb(&v, rng.random_range(0.01..1.0), &mut rng);
        let d = gap_distance(&v, &w).unwrap();
        if d >= 1.0 || w.dim() != k {
            continue;
        }
        let floor = restricted_projection_floor(&v, &w).unwrap();
        worst = worst.max((1.0 - d * d).sqrt() - floor);
        checked += 1;
    }
    out.push(PropertyOutcome::new("restricted projection is an isomorphism", trials, worst, slack));

    let mut worst_ratio: f64 = 0.0;
    let mut checked = 0;
    while checked < trials {
        let n = rng.random_range(3..=10);
        let k = rng.random_range(1..n);
        let kw = rng.random_range(k..=n);
        let v = Subspace::<f64>::random(n, k, &mut rng);
        let w = Subspace::random(n, kw, &mut rng);
        if pseudodistance(&v, &w).unwrap() > 0.9 {
            continue;
        }
        let base = project_subspace(&v, &w).unwrap();
        let size = 10f64.powi(-rng.random_range(2..=5));
        let vn = perturb(&v, size, &mut rng);
        let wn = perturb(&w, size, &mut rng);
        let Ok(moved) = project_subspace(&vn, &wn) else {
            continue;
        };
        let shift = gap_distance(&vn, &v).unwrap() + gap_distance(&wn, &w).unwrap();
        if shift > 0.0 {
            worst_ratio = worst_ratio.max(gap_distance(&moved, &base).unwrap() / shift);
        }
        checked += 1;
    }
    out.push(PropertyOutcome::new("continuity of subspace projection", trials, worst_ratio, 10.0));

    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_small_sample() {
        for outcome in run_property_suite(60, 17, 1e-10) {
            assert!(outcome.holds, "{outcome:?}");
        }
    }

    #[test]
    fn suite_is_deterministic() {
        assert_eq!(run_property_suite(10, 1, 1e-10), run_property_suite(10, 1, 1e-10));
    }
}
