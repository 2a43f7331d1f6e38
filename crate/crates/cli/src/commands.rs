use std::f64::consts::TAU;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nalgebra::DVector;

use critpersist::bundle::{fiber_splitting, galerkin_sweep, mollify_field, BundleError, BundleSample, OperatorField};
use critpersist::grassmann::run_property_suite;
use critpersist::io::read_operator;
use critpersist::lab::{build_scenario, counterexample, persistence_sweep, Scenario};
use critpersist::saddle::{
    build_neighborhood, deform_set, pseudogradient, verify_saddle_conditions, Pseudogradient, PseudogradientMode,
    SaddleError, SaddleNeighborhood, SaddleReport,
};
use critpersist::spectral::{completeness_defect, riesz_cross_check, spectral_split, verify_splitting};

use crate::config::RunConfig;

/// Largest Riesz-versus-eigendecomposition deviation accepted by `split`.
pub const SPLIT_RIESZ_LIMIT: f64 = 1e-10;
/// Accepted diagnostics at the full Galerkin level.
pub const FULL_LEVEL_LIMIT: f64 = 1e-8;
pub const RECONSTRUCTION_TOL: f64 = 1e-6;
/// Allowed energy rise per step, relative to the range of sampled levels.
pub const ENERGY_SLACK: f64 = 1e-8;
/// Level slack for images of `Φ ≤ c0 + δ`.
pub const LEVEL_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    VerdictFailed,
}

impl Status {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::VerdictFailed
        }
    }
}

fn output_dir(cfg: &RunConfig, out: Option<&Path>) -> Result<PathBuf> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn split(path: &Path, zero_tol: f64, accuracy: f64) -> Result<Status> {
    let op = read_operator(path).with_context(|| format!("reading {}", path.display()))?;
    let s = spectral_split(&op, zero_tol)?;
    let report = verify_splitting(&op, &s)?;
    let riesz = riesz_cross_check(&op, &s, accuracy)?;
    let (dm, d0, dp) = s.dims();
    let opt = |v: Option<f64>| v.map_or("none".to_string(), |v| format!("{v:.12e}"));
    println!("dimension: {}", op.dim());
    println!("dims (minus, zero, plus): {dm} {d0} {dp}");
    println!("gap: {:.12e}", s.gap);
    println!("threshold: {:.12e}", s.threshold);
    println!("min -<Av,v> on X-: {}", opt(report.min_neg_ratio));
    println!("min <Av,v> on X+: {}", opt(report.min_pos_ratio));
    println!("kernel residual: {:.3e}", report.kernel_residual);
    println!("completeness defect: {:.3e}", completeness_defect(&s));
    println!("riesz cross-check residual: {riesz:.3e}");
    let ok = riesz <= SPLIT_RIESZ_LIMIT && report.bounds_hold(s.gap);
    println!("verdict: {}", if ok { "pass" } else { "fail" });
    Ok(Status::from_bool(ok))
}

pub fn grassmann_selftest(trials: usize, seed: u64, slack: f64) -> Result<Status> {
    let outcomes = run_property_suite(trials, seed, slack);
    let mut ok = true;
    for o in &outcomes {
        ok &= o.holds;
        println!(
            "{:<44} {} instances, worst {:.3e} (threshold {:.1e}) {}",
            o.name,
            o.instances,
            o.worst,
            o.threshold,
            if o.holds { "pass" } else { "FAIL" }
        );
    }
    Ok(Status::from_bool(ok))
}

fn scenario(cfg: &RunConfig) -> Result<Scenario> {
    Ok(build_scenario(&cfg.scenario.name, &cfg.scenario_params())?)
}

fn bundle_of(cfg: &RunConfig, s: &Scenario) -> Result<BundleSample> {
    Ok(fiber_splitting(&s.functional, &s.manifold, &cfg.fiber_options())?)
}

pub fn bundle(cfg: &RunConfig, out: Option<&Path>) -> Result<Status> {
    let dir = output_dir(cfg, out)?;
    let s = scenario(cfg)?;
    let bundle = bundle_of(cfg, &s)?;
    let field = OperatorField::from_bundle(s.functional.operator(), &s.manifold, &bundle)?;
    println!("scenario: {} ({} samples, ambient dimension {})", s.name(), s.manifold.len(), s.ambient_dim());
    println!("critical residual: {:.3e}", bundle.crit_residual);
    println!("nondegeneracy residual: {:.3e}", bundle.max_nd_residual());
    println!("smallest spectral gap: {:.6e}", bundle.min_gap());
    let mut mollified = true;
    if field.params > 0 {
        let bandwidth = cfg.bundle.bandwidth.unwrap_or(1.5 * TAU / field.count as f64);
        match mollify_field(&field, bandwidth, None) {
            Ok(smooth) => {
                println!("mollified field: bandwidth {bandwidth:.6e}, max distance {:.6e}", smooth.max_distance(&field))
            }
            Err(e @ BundleError::KernelDimensionUnrecoverable { .. }) => {
                println!("mollification at bandwidth {bandwidth:.6e} fails: {e}");
                mollified = false;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let n = s.ambient_dim();
    let levels = if cfg.bundle.levels.is_empty() {
        let mut v: Vec<usize> = (s.manifold.dim().max(1)..n).filter(|k| k % 2 == 0).collect();
        v.push(n);
        v
    } else {
        cfg.bundle.levels.clone()
    };
    let sweep = galerkin_sweep(&field, &bundle, &levels, &cfg.galerkin_options());
    let path = dir.join("bundle.csv");
    let mut w = create(&path)?;
    writeln!(w, "n,delta_zero,op_gap,fiber_gap,flow_drift,op_gap_bound,min_nonzero_eig,gap,kernel_identity,status")?;
    let mut full_ok = false;
    for (level, outcome) in sweep.levels.iter().zip(&sweep.outcomes) {
        match outcome {
            Ok(r) => {
                let d = r.diagnostics;
                writeln!(
                    w,
                    "{level},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{},ok",
                    d.delta_zero,
                    d.op_gap,
                    d.fiber_gap,
                    d.flow_drift,
                    d.op_gap_bound,
                    d.min_nonzero_eig,
                    d.gap,
                    d.kernel_identity_holds()
                )?;
                if *level == n {
                    full_ok =
                        [d.delta_zero, d.op_gap, d.fiber_gap, d.flow_drift].iter().all(|v| *v <= FULL_LEVEL_LIMIT)
                            && d.kernel_identity_holds();
                }
            }
            Err(e) => writeln!(w, "{level},,,,,,,,,\"{}\"", e.to_string().replace('"', "\"\""))?,
        }
    }
    w.flush()?;
    match sweep.n0 {
        Some(n0) => println!("kernel identity holds from level {n0}"),
        None => println!("kernel identity fails at the largest level"),
    }
    println!("wrote {}", path.display());
    Ok(Status::from_bool(mollified && full_ok && sweep.n0.is_some()))
}

/// Builds and verifies the neighborhood; a failed saddle condition is a
/// verdict, anything else an error.
fn verified(cfg: &RunConfig, s: &Scenario) -> Result<Result<(SaddleNeighborhood, SaddleReport), SaddleError>> {
    let bundle = bundle_of(cfg, s)?;
    let nbhd = build_neighborhood(&s.manifold, &bundle, s.r_minus, s.r_plus, cfg.tolerances.fiber_tol)?;
    match verify_saddle_conditions(&nbhd, &s.functional, &cfg.saddle_options()) {
        Ok(r) => Ok(Ok((nbhd, r))),
        Err(
            e @ (SaddleError::LevelGapViolated { .. }
            | SaddleError::CriticalOnSublevel { .. }
            | SaddleError::ConeViolated { .. }),
        ) => Ok(Err(e)),
        Err(e) => Err(e.into()),
    }
}

fn print_saddle(r: &SaddleReport) {
    println!(
        "saddle: sup on minus boundary {:.6e}, inf on core {:.6e}, c0 {:.6e}, sigma {:.6e}, margin {:.6e}, {} cone points",
        r.sup_minus, r.inf_b0, r.c0, r.sigma, r.margin, r.cone_points
    );
}

pub fn flow(cfg: &RunConfig, out: Option<&Path>) -> Result<Status> {
    let dir = output_dir(cfg, out)?;
    let s = scenario(cfg)?;
    let (nbhd, report) = match verified(cfg, &s)? {
        Ok(v) => v,
        Err(e) => {
            println!("saddle conditions fail: {e}");
            return Ok(Status::VerdictFailed);
        }
    };
    print_saddle(&report);
    let z = match cfg.flow.rank {
        None => Pseudogradient::exact(&s.functional),
        Some(k) => {
            pseudogradient(&s.functional, PseudogradientMode::FiniteRank { k }, &nbhd, report.sigma, &cfg.grid())?
        }
    };
    let grid = critpersist::saddle::ProbeGrid { max_samples: cfg.flow.start_samples, ..cfg.grid() };
    let (km, kp) = nbhd.fiber_dims();
    let (ball_m, ball_p) = (grid.ball(km), grid.ball(kp));
    let samples = grid.sample_indices(s.manifold.len());
    let total = samples.len() * ball_m.len() * ball_p.len();
    let stride = total.div_ceil(cfg.flow.max_points);
    let points: Vec<DVector<f64>> = (0..total)
        .step_by(stride)
        .map(|j| {
            let (i, rest) = (samples[j / (ball_m.len() * ball_p.len())], j % (ball_m.len() * ball_p.len()));
            let (cm, cp) = (&ball_m[rest / ball_p.len()], &ball_p[rest % ball_p.len()]);
            nbhd.point_at(i, &(cm * nbhd.r_minus()), &(cp * nbhd.r_plus()))
        })
        .collect();
    let d = deform_set(&points, &s.functional, &z, &nbhd, &cfg.flow_options(report.c0))?;

    let coords: Vec<String> = (1..=s.ambient_dim()).map(|j| format!("x_{j}")).collect();
    let traj_path = dir.join("trajectories.csv");
    let mut w = create(&traj_path)?;
    writeln!(w, "point,t,{},phi,grad_norm", coords.join(","))?;
    for (p, traj) in d.trajectories.iter().enumerate() {
        for ((t, x), phi) in traj.times.iter().zip(&traj.states).zip(&traj.values) {
            let xs: Vec<String> = x.iter().map(|v| format!("{v:.12e}")).collect();
            writeln!(w, "{p},{t:.12e},{},{phi:.12e},{:.12e}", xs.join(","), s.functional.gradient(x).norm())?;
        }
    }
    w.flush()?;

    let path = dir.join("deformation.csv");
    let mut w = create(&path)?;
    writeln!(w, "point,t,theta,c_norm,recon_err")?;
    for (p, rec) in d.records.iter().enumerate() {
        for (node, err) in rec.nodes.iter().zip(rec.node_errors(s.functional.operator())) {
            writeln!(w, "{p},{:.12e},{:.12e},{:.12e},{err:.3e}", node.t, node.theta, node.c.norm())?;
        }
    }
    w.flush()?;

    let summary = dir.join("deformation_summary.csv");
    let mut w = create(&summary)?;
    writeln!(w, "point,tau,initial_level,final_level,fixed,reconstruction_error,theta_bound,c_max_norm")?;
    for (p, rec) in d.records.iter().enumerate() {
        writeln!(
            w,
            "{p},{:.12e},{:.12e},{:.12e},{},{:.3e},{:.12e},{:.12e}",
            d.taus[p],
            d.initial_levels[p],
            d.final_levels[p],
            d.fixed[p],
            rec.reconstruction_error,
            rec.theta_bound,
            rec.c_max_norm()
        )?;
    }
    w.flush()?;

    let delta = cfg.flow.delta.unwrap_or(0.25 * (report.inf_b0 - report.c0));
    let starts_ok = d.records.iter().all(|r| r.nodes[0].theta == 0.0 && r.nodes[0].c.norm() == 0.0);
    let fixed_ok = d.initial_levels.iter().zip(&d.fixed).all(|(&level, &fixed)| level > report.c0 || fixed);
    let lowered: Vec<f64> = d
        .initial_levels
        .iter()
        .zip(&d.final_levels)
        .filter(|(&a, _)| a <= report.c0 + delta)
        .map(|(_, &b)| b)
        .collect();
    let lowered_ok = lowered.iter().all(|&b| b <= report.c0 + LEVEL_SLACK);
    let range = d.initial_levels.iter().chain(&d.final_levels).fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - d.final_levels.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let energy_ok = d.max_energy_increase <= ENERGY_SLACK * range.max(f64::MIN_POSITIVE);
    println!(
        "deformed {} points: max reconstruction error {:.3e}, max energy rise {:.3e} (level range {:.6e}), sup |C| {:.6e}, C affine dimension {}",
        points.len(),
        d.max_reconstruction_error(),
        d.max_energy_increase,
        range,
        d.c_max_norm,
        d.c_affine_dim
    );
    let mark = |ok: bool| if ok { "holds" } else { "FAILS" };
    println!("identity at t = 0: {}", mark(starts_ok));
    println!("sublevel c0 fixed: {}", mark(fixed_ok));
    println!(
        "delta {delta:.6e}: {} points at or below c0 + delta end within c0 + {LEVEL_SLACK:.0e}: {}",
        lowered.len(),
        mark(lowered_ok)
    );
    println!("wrote {}, {} and {}", traj_path.display(), path.display(), summary.display());
    Ok(Status::from_bool(
        d.max_reconstruction_error() <= RECONSTRUCTION_TOL && energy_ok && starts_ok && fixed_ok && lowered_ok,
    ))
}

pub fn persist(cfg: &RunConfig, out: Option<&Path>) -> Result<Status> {
    let dir = output_dir(cfg, out)?;
    let s = scenario(cfg)?;
    let (nbhd, report) = match verified(cfg, &s)? {
        Ok(v) => v,
        Err(e) => {
            println!("saddle conditions fail: {e}");
            return Ok(Status::VerdictFailed);
        }
    };
    print_saddle(&report);
    let sweep = persistence_sweep(&s, &nbhd, &report, &cfg.sweep_options()?)?;
    let path = dir.join("persist.csv");
    let mut w = create(&path)?;
    sweep.write_csv(&mut w)?;
    w.flush()?;
    for e in &sweep.summaries {
        println!(
            "{} eps {:.3e}: pass rate {:.2}, max distance to M {:.3e}{}",
            e.kind,
            e.eps,
            e.pass_rate,
            e.max_dist_to_m,
            if e.margin_exceeded { " (above the robustness margin)" } else { "" }
        );
    }
    for (kind, t) in &sweep.trends {
        match t {
            Some(r) => println!("{kind} localization trend (Spearman): {r:.3}"),
            None => println!("{kind} localization trend: not enough amplitudes"),
        }
    }
    for (kind, m) in &sweep.empirical_margins {
        match m {
            Some(m) => println!("{kind} empirical margin: {m:.3e}"),
            None => println!("{kind} empirical margin: none"),
        }
    }
    for row in sweep.rows.iter().filter(|r| r.error.is_some()) {
        println!("{} eps {} trial {}: {}", row.kind, row.eps, row.trial, row.error.as_deref().unwrap_or(""));
    }
    println!("wrote {}", path.display());
    Ok(Status::from_bool(sweep.all_passed() && sweep.trend_ok()))
}

pub fn counterexample_record(eps: f64) -> Result<Status> {
    let r = counterexample(eps)?;
    println!("{r}");
    Ok(Status::from_bool(r.holds() && r.grad_norm <= 1e-10))
}
