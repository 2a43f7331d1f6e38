use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::LabError;
use crate::functional::{HessianMode, SplitFunctional};
use crate::linalg::sym_eigen;
use crate::saddle::{ProbeGrid, SaddleNeighborhood};

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOptions {
    pub newton_tol: f64,
    pub max_iter: usize,
    /// Clusters closer than this merge; scaled from the neighborhood otherwise.
    pub dedup_radius: Option<f64>,
    /// Seed offsets along each fiber axis, as fractions of `r±`.
    pub seed_fraction: f64,
    pub grid: ProbeGrid,
    /// A continuum is declared past this many clusters per required point.
    pub continuum_factor: usize,
    pub continuum_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            max_iter: 100,
            dedup_radius: None,
            seed_fraction: 0.5,
            grid: ProbeGrid::default(),
            continuum_factor: 4,
            continuum_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// `M` itself is critical; the count says nothing about multiplicity.
    Continuum,
}

impl Verdict {
    pub fn passed(self) -> bool {
        self != Verdict::Fail
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Continuum => "continuum",
        })
    }
}

/// Representative of one cluster of converged Newton runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPoint {
    pub location: DVector<f64>,
    pub grad_norm: f64,
    pub distance_to_m: f64,
    pub cluster_id: usize,
    pub members: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalPointReport {
    pub points: Vec<CriticalPoint>,
    pub count_distinct: usize,
    pub bound_required: usize,
    pub verdict: Verdict,
    pub continuum: bool,
    /// Every seed failed to converge inside the closed neighborhood.
    pub no_convergence: bool,
    pub seeds: usize,
    pub converged: usize,
    pub left_neighborhood: usize,
    pub dedup_radius: f64,
}

impl CriticalPointReport {
    pub fn max_distance_to_m(&self) -> f64 {
        self.points.iter().map(|p| p.distance_to_m).fold(f64::NAN, f64::max)
    }

    pub fn min_grad(&self) -> f64 {
        self.points.iter().map(|p| p.grad_norm).fold(f64::NAN, f64::min)
    }
}

enum RunOutcome {
    Converged(DVector<f64>, f64),
    Left,
    Stalled,
}

/// `1e-3 · (diam M + 2√(r⁻² + r⁺²))`.
pub fn default_dedup_radius(nbhd: &SaddleNeighborhood) -> f64 {
    let (rm, rp) = (nbhd.r_minus(), nbhd.r_plus());
    1e-3 * (nbhd.manifold().diameter() + 2.0 * (rm * rm + rp * rp).sqrt())
}

/// Manifold samples, each shifted by nothing and by `±fraction · r±` along
/// every fiber axis.
pub fn newton_seeds(nbhd: &SaddleNeighborhood, opts: &NewtonOptions) -> Vec<DVector<f64>> {
    let (km, kp) = nbhd.fiber_dims();
    let mut offsets = vec![(DVector::zeros(km), DVector::zeros(kp))];
    for s in [1.0, -1.0] {
        for j in 0..km {
            let mut c = DVector::zeros(km);
            c[j] = s * opts.seed_fraction * nbhd.r_minus();
            offsets.push((c, DVector::zeros(kp)));
        }
        for j in 0..kp {
            let mut c = DVector::zeros(kp);
            c[j] = s * opts.seed_fraction * nbhd.r_plus();
            offsets.push((DVector::zeros(km), c));
        }
    }
    opts.grid
        .sample_indices(nbhd.manifold().len())
        .into_iter()
        .flat_map(|i| offsets.iter().map(move |(cm, cp)| nbhd.point_at(i, cm, cp)))
        .collect()
}

fn hessian(f: &SplitFunctional, x: &DVector<f64>) -> Result<DMatrix<f64>, LabError> {
    let mode = if f.has_analytic_hessian() { HessianMode::Analytic } else { HessianMode::CentralFd { step: None } };
    Ok(f.hessian_at(x, mode)?.into_entries())
}

/// Eigenvalues below this fraction of the largest are soft in the corrector.
const STIFF_FRACTION: f64 = 1e-2;
const CORRECTOR_STEPS: usize = 3;

/// Newton steps restricted to the stiff eigenspace of the Hessian. Pulls a
/// trial point back toward the soft valley after a straight step along a
/// curved critical set; stops as soon as the gradient norm stops dropping.
fn stiff_correction(
    f: &SplitFunctional,
    mut x: DVector<f64>,
    mut g: DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), LabError> {
    for _ in 0..CORRECTOR_STEPS {
        let eig = sym_eigen(&hessian(f, &x)?);
        let top = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut step = DVector::zeros(x.len());
        for (j, &l) in eig.values.iter().enumerate() {
            if l.abs() > STIFF_FRACTION * top {
                let v = eig.vectors.column(j);
                step -= v * (v.dot(&g) / l);
            }
        }
        let trial = &x + step;
        let tg = f.gradient(&trial);
        if !(tg.norm() < g.norm()) {
            break;
        }
        x = trial;
        g = tg;
    }
    Ok((x, g))
}

/// Levenberg–Marquardt on `‖∇Φ‖²`: `p = −(H² + μI)⁻¹ H g`, followed by a
/// stiff-subspace correction, accepted only when the gradient norm drops
/// and the trial stays in the closed
/// neighborhood. A run that stalls after rejecting outside trials counts as
/// having left.
fn run_newton(
    f: &SplitFunctional,
    nbhd: &SaddleNeighborhood,
    x0: &DVector<f64>,
    opts: &NewtonOptions,
) -> Result<RunOutcome, LabError> {
    let n = x0.len();
    let mut x = x0.clone();
    let mut g = f.gradient(&x);
    let mut gn = g.norm();
    let mut mu: Option<f64> = None;
    let mut left = false;
    for _ in 0..opts.max_iter {
        if gn <= opts.newton_tol {
            return Ok(RunOutcome::Converged(x, gn));
        }
        let h = hessian(f, &x)?;
        let h2 = &h * &h;
        let scale = 1.0 + h2.diagonal().amax();
        let floor = 1e-15 * scale;
        let mut m = mu.unwrap_or(1e-8 * scale).max(floor);
        let rhs = -(&h * &g);
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = h2.clone();
            for i in 0..n {
                a[(i, i)] += m;
            }
            if let Some(chol) = a.cholesky() {
                let trial = &x + chol.solve(&rhs);
                let tg = f.gradient(&trial);
                let (trial, tg) = stiff_correction(f, trial, tg)?;
                let tn = tg.norm();
                if tn < gn {
                    if !nbhd.in_closure(&trial) {
                        left = true;
                        m *= 10.0;
                        continue;
                    }
                    x = trial;
                    g = tg;
                    gn = tn;
                    mu = Some(m * 0.1);
                    accepted = true;
                    break;
                }
            }
            m *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    Ok(if gn <= opts.newton_tol {
        RunOutcome::Converged(x, gn)
    } else if left {
        RunOutcome::Left
    } else {
        RunOutcome::Stalled
    })
}

/// Multi-start damped Newton inside the closed neighborhood, greedy
/// clustering, and the multiplicity verdict against `bound_required`.
pub fn find_critical_points(
    f: &SplitFunctional,
    nbhd: &SaddleNeighborhood,
    bound_required: usize,
    opts: &NewtonOptions,
) -> Result<CriticalPointReport, LabError> {
    if !(opts.newton_tol > 0.0) || opts.max_iter == 0 {
        return Err(LabError::InvalidParameter("newton_tol and max_iter must be positive".into()));
    }
    if f.dim() != nbhd.ambient_dim() {
        return Err(LabError::InvalidParameter(format!(
            "functional has dimension {}, neighborhood {}",
            f.dim(),
            nbhd.ambient_dim()
        )));
    }
    let dedup_radius = opts.dedup_radius.unwrap_or_else(|| default_dedup_radius(nbhd));
    let seeds = newton_seeds(nbhd, opts);
    let outcomes = seeds.par_iter().map(|s| run_newton(f, nbhd, s, opts)).collect::<Result<Vec<_>, _>>()?;

    let mut left = 0;
    let mut converged: Vec<(DVector<f64>, f64)> = Vec::new();
    for o in outcomes {
        match o {
            RunOutcome::Converged(x, g) => converged.push((x, g)),
            RunOutcome::Left => left += 1,
            RunOutcome::Stalled => {}
        }
    }
    let n_converged = converged.len();
    converged.sort_by(|a, b| a.1.total_cmp(&b.1));

    let mut points: Vec<CriticalPoint> = Vec::new();
    for (x, g) in converged {
        match points.iter_mut().find(|p| (&p.location - &x).norm() < dedup_radius) {
            Some(p) => p.members += 1,
            None => {
                let id = points.len();
                points.push(CriticalPoint {
                    distance_to_m: nbhd.manifold().distance_to(&x),
                    location: x,
                    grad_norm: g,
                    cluster_id: id,
                    members: 1,
                });
            }
        }
    }
    let count_distinct = points.len();
    let continuum = count_distinct > opts.continuum_factor * bound_required
        && points.iter().all(|p| p.distance_to_m <= opts.continuum_tol);
    let verdict = if continuum {
        Verdict::Continuum
    } else if count_distinct >= bound_required {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(CriticalPointReport {
        points,
        count_distinct,
        bound_required,
        verdict,
        continuum,
        no_convergence: n_converged == 0,
        seeds: seeds.len(),
        converged: n_converged,
        left_neighborhood: left,
        dedup_radius,
    })
}
