use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{find_critical_points, perturb, LabError, NewtonOptions, PerturbationKind, PerturbationSpec, Scenario};
use crate::saddle::{SaddleNeighborhood, SaddleReport};

pub const SWEEP_CSV_HEADER: &str = "scenario,kind,eps,trial,n_found,bound,verdict,max_dist_to_M,min_grad";

/// Required rank correlation between `ε` and the largest distance to `M`.
pub const TREND_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub kinds: Vec<PerturbationKind>,
    pub eps_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub rank: usize,
    pub newton: NewtonOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            kinds: vec![PerturbationKind::LinearTilt],
            eps_grid: vec![0.1, 0.05, 0.01],
            trials: 10,
            seed: 0,
            rank: 2,
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scenario: String,
    pub kind: PerturbationKind,
    pub eps: f64,
    pub trial: usize,
    pub n_found: usize,
    pub bound: usize,
    /// `pass`, `fail`, `continuum`, or `error`.
    pub verdict: String,
    pub max_dist_to_m: f64,
    pub min_grad: f64,
    pub measured_deviation: f64,
    /// Deviation above a quarter of the verified saddle margin.
    pub margin_exceeded: bool,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn passed(&self) -> bool {
        self.verdict == "pass" || self.verdict == "continuum"
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:.6e},{},{},{},{},{:.9e},{:.9e}",
            self.scenario,
            self.kind,
            self.eps,
            self.trial,
            self.n_found,
            self.bound,
            self.verdict,
            self.max_dist_to_m,
            self.min_grad
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsSummary {
    pub kind: PerturbationKind,
    pub eps: f64,
    pub trials: usize,
    pub pass_rate: f64,
    pub max_dist_to_m: f64,
    pub margin_exceeded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub scenario: String,
    pub rows: Vec<SweepRow>,
    pub summaries: Vec<EpsSummary>,
    /// Spearman correlation between `ε` and the largest distance to `M`, per
    /// kind; `None` with fewer than two distinct positive grid values.
    pub trends: Vec<(PerturbationKind, Option<f64>)>,
    /// Largest `ε` with a full pass rate, per kind.
    pub empirical_margins: Vec<(PerturbationKind, Option<f64>)>,
    pub robustness_margin: f64,
}

impl SweepReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(SweepRow::passed)
    }

    pub fn trend_ok(&self) -> bool {
        self.trends.iter().all(|(_, t)| t.is_none_or(|r| r >= TREND_THRESHOLD))
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{SWEEP_CSV_HEADER}")?;
        for row in &self.rows {
            writeln!(out, "{}", row.to_csv())?;
        }
        Ok(())
    }
}

/// Independent stream for one `(kind, ε, trial)` cell.
pub fn substream(seed: u64, kind: usize, eps_idx: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((kind as u64) << 48) | ((eps_idx as u64) << 24) | trial as u64);
    rng
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = 0.5 * (i + j) as f64;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return None;
    }
    if syy == 0.0 {
        return Some(0.0);
    }
    Some(sxy / (sxx * syy).sqrt())
}

fn run_cell(
    s: &Scenario,
    nbhd: &SaddleNeighborhood,
    robustness_margin: f64,
    opts: &SweepOptions,
    (ki, ei, trial): (usize, usize, usize),
) -> SweepRow {
    let kind = opts.kinds[ki];
    let eps = opts.eps_grid[ei];
    let mut rng = substream(opts.seed, ki, ei, trial);
    let mut spec = PerturbationSpec::new(kind, eps).with_seed(rng.next_u64());
    spec.rank = opts.rank;
    let mut row = SweepRow {
        scenario: s.name().to_string(),
        kind,
        eps,
        trial,
        n_found: 0,
        bound: s.bound_required(),
        verdict: "error".into(),
        max_dist_to_m: f64::NAN,
        min_grad: f64::NAN,
        measured_deviation: f64::NAN,
        margin_exceeded: false,
        error: None,
    };
    let outcome = perturb(s, &spec).and_then(|p| {
        row.measured_deviation = p.measured_deviation;
        row.margin_exceeded = p.measured_deviation > robustness_margin;
        find_critical_points(&p.functional, nbhd, s.bound_required(), &opts.newton)
    });
    match outcome {
        Ok(r) => {
            row.n_found = r.count_distinct;
            row.verdict = r.verdict.to_string();
            row.max_dist_to_m = r.max_distance_to_m();
            row.min_grad = r.min_grad();
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Every `(kind, ε, trial)` cell in parallel, merged in index order.
pub fn persistence_sweep(
    s: &Scenario,
    nbhd: &SaddleNeighborhood,
    saddle: &SaddleReport,
    opts: &SweepOptions,
) -> Result<SweepReport, LabError> {
    if opts.kinds.is_empty() || opts.eps_grid.is_empty() || opts.trials == 0 {
        return Err(LabError::InvalidParameter("sweep needs kinds, an eps grid and trials".into()));
    }
    if let Some(e) = opts.eps_grid.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
        return Err(LabError::InvalidParameter(format!("eps {e} must be nonnegative")));
    }
    let robustness_margin = saddle.margin / 4.0;
    let cells: Vec<(usize, usize, usize)> = (0..opts.kinds.len())
        .flat_map(|k| (0..opts.eps_grid.len()).flat_map(move |e| (0..opts.trials).map(move |t| (k, e, t))))
        .collect();
    let rows: Vec<SweepRow> = cells.par_iter().map(|&c| run_cell(s, nbhd, robustness_margin, opts, c)).collect();

    let mut summaries = Vec::new();
    let mut trends = Vec::new();
    let mut empirical_margins = Vec::new();
    for (ki, &kind) in opts.kinds.iter().enumerate() {
        let mut eps_vals = Vec::new();
        let mut dists = Vec::new();
        let mut margin: Option<f64> = None;
        for (ei, &eps) in opts.eps_grid.iter().enumerate() {
            let cell = &rows[(ki * opts.eps_grid.len() + ei) * opts.trials..][..opts.trials];
            let passed = cell.iter().filter(|r| r.passed()).count();
            let max_dist = cell.iter().map(|r| r.max_dist_to_m).fold(f64::NAN, f64::max);
            let pass_rate = passed as f64 / opts.trials as f64;
            if passed == opts.trials {
                margin = Some(margin.map_or(eps, |m: f64| m.max(eps)));
            }
            if eps > 0.0 && max_dist.is_finite() {
                eps_vals.push(eps);
                dists.push(max_dist);
            }
            summaries.push(EpsSummary {
                kind,
                eps,
                trials: opts.trials,
                pass_rate,
                max_dist_to_m: max_dist,
                margin_exceeded: cell.iter().any(|r| r.margin_exceeded),
            });
        }
        trends.push((kind, spearman(&eps_vals, &dists)));
        empirical_margins.push((kind, margin));
    }
    Ok(SweepReport { scenario: s.name().to_string(), rows, summaries, trends, empirical_margins, robustness_margin })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::{build_scenario, ScenarioParams};
    use crate::saddle::SaddleOptions;

    #[test]
    fn spearman_of_monotone_data_is_one() {
        assert_eq!(spearman(&[0.1, 0.05, 0.01], &[3.0, 2.0, 1.0]), Some(1.0));
        assert_eq!(spearman(&[0.1, 0.05, 0.01], &[1.0, 2.0, 3.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0], &[1.0]), None);
    }

    #[test]
    fn substreams_differ_and_repeat() {
        let a = substream(7, 0, 1, 2).next_u64();
        assert_eq!(a, substream(7, 0, 1, 2).next_u64());
        assert_ne!(a, substream(7, 0, 2, 1).next_u64());
        assert_ne!(a, substream(7, 1, 1, 2).next_u64());
    }

    #[test]
    fn circle_sweep_is_deterministic_and_localizes() {
        let s = build_scenario("circle3", &ScenarioParams::default()).unwrap();
        let setup = s.setup(&SaddleOptions::default()).unwrap();
        let opts = SweepOptions { trials: 3, seed: 42, ..SweepOptions::default() };
        let a = persistence_sweep(&s, &setup.neighborhood, &setup.saddle, &opts).unwrap();
        let b = persistence_sweep(&s, &setup.neighborhood, &setup.saddle, &opts).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert!(a.all_passed(), "{:?}", a.rows);
        assert!(a.trend_ok(), "{:?}", a.trends);
        assert_eq!(a.empirical_margins[0].1, Some(0.1));
    }

    #[test]
    fn zero_eps_stays_on_the_manifold() {
        let s = build_scenario("circle3", &ScenarioParams::default()).unwrap();
        let setup = s.setup(&SaddleOptions::default()).unwrap();
        let opts = SweepOptions { eps_grid: vec![0.0], trials: 1, ..SweepOptions::default() };
        let r = persistence_sweep(&s, &setup.neighborhood, &setup.saddle, &opts).unwrap();
        assert!(r.rows[0].max_dist_to_m <= 1e-8);
        assert_eq!(r.rows[0].verdict, "continuum");
    }
}
