use nalgebra::DVector;
use rayon::prelude::*;

use super::{ProbeGrid, Region, SaddleError, SaddleNeighborhood};
use crate::functional::SplitFunctional;

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleOptions {
    /// Fixed separating level; the midpoint of the sampled gap otherwise.
    pub c0: Option<f64>,
    /// Cone half-width; half the smallest boundary gradient otherwise.
    pub sigma: Option<f64>,
    pub grad_floor: f64,
    /// Cone steps are `cone_step · min(r⁻, r⁺)` times the probe vector.
    pub cone_step: f64,
    pub grid: ProbeGrid,
}

impl Default for SaddleOptions {
    fn default() -> Self {
        Self { c0: None, sigma: None, grad_floor: 1e-6, cone_step: 1e-4, grid: ProbeGrid::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaddleReport {
    pub sup_minus: f64,
    pub inf_b0: f64,
    pub c0: f64,
    pub min_grad_on_sublevel: f64,
    /// Smallest `‖∇Φ‖` on the sampled `∂⁺B \ ∂⁻B`.
    pub min_boundary_grad: f64,
    pub sigma: f64,
    pub cone_ok: bool,
    pub cone_points: usize,
    pub cone_probes: usize,
    /// `min(inf_B0 − sup_∂⁻B, min sublevel gradient, min boundary gradient)`.
    pub margin: f64,
}

impl SaddleReport {
    pub fn level_gap(&self) -> f64 {
        self.inf_b0 - self.sup_minus
    }
}

/// Grid on `∂⁺B \ ∂⁻B`: `m + s r⁻ u⁻ + r⁺ u⁺` with `s < 1`, tagged with the
/// sample index.
pub fn boundary_points(nbhd: &SaddleNeighborhood, grid: &ProbeGrid) -> Vec<(usize, DVector<f64>)> {
    let (km, kp) = nbhd.fiber_dims();
    let mut minus: Vec<DVector<f64>> = vec![DVector::zeros(km)];
    let dirs = grid.sphere(km);
    for &f in grid.fractions.iter().filter(|&&f| f > 0.0 && f < 1.0) {
        minus.extend(dirs.iter().map(|d| d * (f * nbhd.r_minus())));
    }
    let plus: Vec<DVector<f64>> = grid.sphere(kp).into_iter().map(|u| u * nbhd.r_plus()).collect();
    grid.sample_indices(nbhd.manifold().len())
        .into_iter()
        .flat_map(|i| {
            let minus = &minus;
            plus.iter().flat_map(move |cp| minus.iter().map(move |cm| (i, nbhd.point_at(i, cm, cp))))
        })
        .collect()
}

fn scaled(dirs: &[DVector<f64>], r: f64) -> Vec<DVector<f64>> {
    dirs.iter().map(|d| d * r).collect()
}

fn extremum<F>(indices: &[usize], f: F, init: f64, pick: fn(f64, f64) -> f64) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    indices.par_iter().map(|&i| f(i)).reduce(|| init, pick)
}

/// Sampled level separation, sublevel gradient floor and cone condition.
pub fn verify_saddle_conditions(
    nbhd: &SaddleNeighborhood,
    f: &SplitFunctional,
    opts: &SaddleOptions,
) -> Result<SaddleReport, SaddleError> {
    let grid = &opts.grid;
    let (km, kp) = nbhd.fiber_dims();
    let (rm, rp) = (nbhd.r_minus(), nbhd.r_plus());
    let indices = grid.sample_indices(nbhd.manifold().len());
    let minus_sphere = scaled(&grid.sphere(km), rm);
    let minus_ball = scaled(&grid.ball(km), rm);
    let plus_ball = scaled(&grid.ball(kp), rp);

    let sup_minus = extremum(
        &indices,
        |i| {
            let mut best = f64::NEG_INFINITY;
            for cm in &minus_sphere {
                for cp in &plus_ball {
                    best = best.max(f.value(&nbhd.point_at(i, cm, cp)));
                }
            }
            best
        },
        f64::NEG_INFINITY,
        f64::max,
    );
    let zero_minus = DVector::zeros(km);
    let inf_b0 = extremum(
        &indices,
        |i| plus_ball.iter().map(|cp| f.value(&nbhd.point_at(i, &zero_minus, cp))).fold(f64::INFINITY, f64::min),
        f64::INFINITY,
        f64::min,
    );
    let c0 = match opts.c0 {
        Some(c) => c,
        None if sup_minus.is_finite() => 0.5 * (sup_minus + inf_b0),
        None => inf_b0 - 1.0,
    };
    if !(sup_minus < c0 && c0 < inf_b0) {
        return Err(SaddleError::LevelGapViolated { sup_minus, inf_b0, c0 });
    }

    let min_grad_on_sublevel = extremum(
        &indices,
        |i| {
            let mut best = f64::INFINITY;
            for cm in &minus_ball {
                for cp in &plus_ball {
                    let x = nbhd.point_at(i, cm, cp);
                    if f.value(&x) <= c0 {
                        best = best.min(f.gradient(&x).norm());
                    }
                }
            }
            best
        },
        f64::INFINITY,
        f64::min,
    );
    if min_grad_on_sublevel <= opts.grad_floor {
        return Err(SaddleError::CriticalOnSublevel { grad_norm: min_grad_on_sublevel, floor: opts.grad_floor });
    }

    let boundary = boundary_points(nbhd, grid);
    let grads: Vec<DVector<f64>> = boundary.par_iter().map(|(_, x)| f.gradient(x)).collect();
    let min_boundary_grad = grads.iter().map(|g| g.norm()).fold(f64::INFINITY, f64::min);
    let sigma = opts.sigma.unwrap_or(0.5 * min_boundary_grad);
    let eps = opts.cone_step * rm.min(rp);
    let n = nbhd.ambient_dim();

    let outcomes: Vec<Result<usize, SaddleError>> = boundary
        .par_iter()
        .zip(&grads)
        .map(|((i, x), g)| {
            let d = nbhd.decompose(x);
            let normal = if d.v_plus.norm() > 0.0 { d.v_plus.normalize() } else { DVector::zeros(n) };
            let mut probes = vec![g.clone()];
            for j in 0..n {
                for s in [1.0, -1.0] {
                    let mut u = DVector::zeros(n);
                    u[j] = s;
                    probes.push(g + u * (0.99 * sigma));
                }
            }
            probes.push(g + &normal * (0.99 * sigma));
            probes.push(g - &normal * (0.99 * sigma));
            for v in &probes {
                let inward = nbhd.classify(&(x - v * eps));
                let outward = nbhd.classify(&(x + v * eps));
                if inward != Region::Interior || outward == Region::Interior {
                    return Err(SaddleError::ConeViolated {
                        sample: *i,
                        detail: format!("x - eps v is {inward:?}, x + eps v is {outward:?}"),
                    });
                }
            }
            Ok(probes.len())
        })
        .collect();
    let mut cone_probes = 0;
    for o in outcomes {
        cone_probes += o?;
    }

    Ok(SaddleReport {
        sup_minus,
        inf_b0,
        c0,
        min_grad_on_sublevel,
        min_boundary_grad,
        sigma,
        cone_ok: true,
        cone_points: boundary.len(),
        cone_probes,
        margin: (inf_b0 - sup_minus).min(min_grad_on_sublevel).min(min_boundary_grad),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{fiber_splitting, sample_manifold, FiberOptions, ManifoldKind};
    use crate::saddle::{build_neighborhood, DEFAULT_FIBER_TOL};
    use crate::spectral::SymOperator;
    use std::sync::Arc;

    fn circle3() -> SplitFunctional {
        SplitFunctional::new(
            SymOperator::from_diagonal(&[0.0, 0.0, -1.0]),
            Arc::new(|x: &DVector<f64>| 0.25 * (x[0] * x[0] + x[1] * x[1] - 1.0).powi(2)),
            Arc::new(|x: &DVector<f64>| {
                let s = x[0] * x[0] + x[1] * x[1] - 1.0;
                DVector::from_vec(vec![s * x[0], s * x[1], 0.0])
            }),
        )
    }

    fn neighborhood(f: &SplitFunctional, r_minus: f64, r_plus: f64) -> SaddleNeighborhood {
        let m = sample_manifold(ManifoldKind::Circle, 3, 64, None).unwrap();
        let b = fiber_splitting(f, &m, &FiberOptions::default()).unwrap();
        build_neighborhood(&m, &b, r_minus, r_plus, DEFAULT_FIBER_TOL).unwrap()
    }

    #[test]
    fn circle_neighborhood_is_a_saddle() {
        let f = circle3();
        let nb = neighborhood(&f, 0.2, 0.05);
        let r = verify_saddle_conditions(&nb, &f, &SaddleOptions::default()).unwrap();
        let expected_sup = 0.25 * (1.05f64.powi(2) - 1.0).powi(2) - 0.02;
        assert!((r.sup_minus - expected_sup).abs() < 1e-12, "{r:?}");
        assert!(r.inf_b0.abs() < 1e-12);
        assert!(r.sup_minus < r.c0 && r.c0 < r.inf_b0);
        assert!(r.cone_ok && r.cone_points > 0);
        assert!(r.min_grad_on_sublevel > 0.1);
    }

    #[test]
    fn equal_radii_break_the_level_gap() {
        let f = circle3();
        let nb = neighborhood(&f, 0.2, 0.2);
        assert!(matches!(
            verify_saddle_conditions(&nb, &f, &SaddleOptions::default()),
            Err(SaddleError::LevelGapViolated { .. })
        ));
    }

    #[test]
    fn flipped_functional_breaks_the_level_gap() {
        let f = circle3();
        let nb = neighborhood(&f, 0.2, 0.05);
        assert!(matches!(
            verify_saddle_conditions(&nb, &f.negated(), &SaddleOptions::default()),
            Err(SaddleError::LevelGapViolated { .. })
        ));
    }

    #[test]
    fn oversized_sigma_breaks_the_cone() {
        let f = circle3();
        let nb = neighborhood(&f, 0.2, 0.05);
        let opts = SaddleOptions { sigma: Some(1.0), ..SaddleOptions::default() };
        assert!(matches!(verify_saddle_conditions(&nb, &f, &opts), Err(SaddleError::ConeViolated { .. })));
    }
}
