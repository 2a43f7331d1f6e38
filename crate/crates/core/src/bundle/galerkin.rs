//! Finite-dimensional reduction onto `X_n`, the span of the first `n`
//! eigenvectors of `L`.
//!
//! For each manifold sample `m` with `A = L + K_m`:
//!
//! 1. `F⁰ = Π_{X_n}(X⁰_m)` and `U = X_n ⊖ F⁰`;
//! 2. `T = Π_U A Π_U` read on `X_n`, so that `T` vanishes on `F⁰`;
//! 3. `U±` are the spectral parts of `A` compressed to `U`;
//! 4. `Y± = Π_{X±_m}(U±)` and `Y = Y⁻ ⊕ X⁰_m ⊕ Y⁺`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{BundleError, BundleSample, OperatorField};
use crate::grassmann::{gap_distance, orthogonal_sum, project_subspace, pseudodistance, Subspace};
use crate::linalg::{sym_exp, sym_norm};
use crate::spectral::{spectral_split, SpectralError, SymOperator, DEFAULT_ZERO_TOL};

/// Slack for the monotonicity checks across Galerkin levels.
pub const MONOTONE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinOptions {
    pub zero_tol: f64,
    /// Flow parameters `s` for `d(e^{sL}[Y_m], Y_{m'})`.
    pub s_grid: Vec<f64>,
}

impl Default for GalerkinOptions {
    fn default() -> Self {
        Self { zero_tol: DEFAULT_ZERO_TOL, s_grid: (0..=8).map(|i| -2.0 + 0.5 * i as f64).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GalerkinDiagnostics {
    /// `max_m δ(X⁰_m, X_n)`.
    pub delta_zero: f64,
    /// `max_m ‖T_m − Π_n A_m Π_n‖`.
    pub op_gap: f64,
    /// `max_m 2‖A_m‖ · 2δ/√(1−δ²)` with `δ = δ(X⁰_m, X_n)`.
    pub op_gap_bound: f64,
    /// `max_m max(d(U⁻, Y⁻), d(U⁺, Y⁺))`.
    pub fiber_gap: f64,
    /// `max d(e^{sL}[Y_m], Y_{m'})` over the s-grid, `m' = m` and adjacent.
    pub flow_drift: f64,
    /// Smallest `|λ|` of `T_m` on `U` over all samples.
    pub min_nonzero_eig: f64,
    /// Smallest spectral gap of `A_m` over all samples.
    pub gap: f64,
}

impl GalerkinDiagnostics {
    /// `ker T = F⁰`, witnessed by the nonzero spectrum staying above `gap/2`.
    pub fn kernel_identity_holds(&self) -> bool {
        self.min_nonzero_eig >= 0.5 * self.gap
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinReduction {
    pub n: usize,
    pub x_n: Subspace<f64>,
    pub f_zero: Vec<Subspace<f64>>,
    pub u_minus: Vec<Subspace<f64>>,
    pub u_plus: Vec<Subspace<f64>>,
    pub y_minus: Vec<Subspace<f64>>,
    pub y_plus: Vec<Subspace<f64>>,
    /// `Y⁻ ⊕ X⁰ ⊕ Y⁺` per sample.
    pub y: Vec<Subspace<f64>>,
    /// `T_m` in the coordinates of `X_n`.
    pub t: Vec<SymOperator<f64>>,
    pub diagnostics: GalerkinDiagnostics,
    base: SymOperator<f64>,
    pairs: Vec<(usize, usize)>,
}

impl GalerkinReduction {
    pub fn ambient_dim(&self) -> usize {
        self.x_n.ambient_dim()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn base(&self) -> &SymOperator<f64> {
        &self.base
    }

    /// `δ(L X_n, X_n)`, zero for an `L`-invariant space.
    pub fn forward_invariance_defect(&self) -> f64 {
        let image = self.x_n.image(self.base.entries());
        pseudodistance(&image, &self.x_n).unwrap_or(1.0)
    }
}

/// Orthonormal eigenbasis of `L` in the Galerkin order: kernel vectors
/// first, then by increasing `|λ|`, ties broken by coordinate index. Inside a
/// repeated eigenvalue the basis is obtained by projecting coordinate axes in
/// order, which makes the ordering independent of the eigensolver.
pub fn galerkin_basis(l: &SymOperator<f64>, zero_tol: f64) -> Result<DMatrix<f64>, SpectralError> {
    let split = spectral_split(l, zero_tol)?;
    let n = l.dim();
    let eig = l.eigen();
    let scale = l.norm().max(1.0);
    let cluster_tol = 1e-9 * scale;

    let mut clusters: Vec<(f64, Vec<usize>)> = Vec::new();
    for (i, &v) in eig.values.iter().enumerate() {
        let v = if v.abs() <= split.threshold { 0.0 } else { v };
        match clusters.last_mut() {
            Some((c, members)) if (v - *c).abs() <= cluster_tol => members.push(i),
            _ => clusters.push((v, vec![i])),
        }
    }

    // (kernel flag, |λ| bucket, coordinate index, vector)
    let mut tagged: Vec<(bool, i64, usize, DVector<f64>)> = Vec::new();
    for (value, members) in &clusters {
        let mut vecs = DMatrix::zeros(n, members.len());
        for (c, &i) in members.iter().enumerate() {
            vecs.set_column(c, &eig.vectors.column(i));
        }
        let proj = &vecs * vecs.transpose();
        let mut chosen: Vec<DVector<f64>> = Vec::new();
        for axis in 0..n {
            if chosen.len() == members.len() {
                break;
            }
            let mut v = proj.column(axis).clone_owned();
            for q in &chosen {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
            let norm = v.norm();
            if norm > 1e-6 {
                chosen.push(v / norm);
                let bucket = (value.abs() / scale * 1e9).round() as i64;
                tagged.push((*value != 0.0, bucket, axis, chosen.last().unwrap().clone()));
            }
        }
    }
    tagged.sort_by_key(|t| (t.0, t.1, t.2));
    let mut basis = DMatrix::zeros(n, n);
    for (c, t) in tagged.iter().enumerate() {
        basis.set_column(c, &t.3);
    }
    Ok(basis)
}

struct SampleReduction {
    f_zero: Subspace<f64>,
    u_minus: Subspace<f64>,
    u_plus: Subspace<f64>,
    y_minus: Subspace<f64>,
    y_plus: Subspace<f64>,
    y: Subspace<f64>,
    t: SymOperator<f64>,
    delta: f64,
    op_gap: f64,
    op_gap_bound: f64,
    fiber_gap: f64,
    min_nonzero: f64,
}

fn lift(outer: &Subspace<f64>, local: &Subspace<f64>) -> Subspace<f64> {
    Subspace::span(&(outer.basis() * local.basis()))
}

fn reduce_sample(
    i: usize,
    a: &SymOperator<f64>,
    bundle: &BundleSample,
    x_n: &Subspace<f64>,
    zero_tol: f64,
) -> Result<SampleReduction, BundleError> {
    let x0 = &bundle.x_zero[i];
    let delta = pseudodistance(x0, x_n)?;
    let f_zero = project_subspace(x0, x_n).map_err(|_| BundleError::KernelCollapse { sample: i, delta })?;
    let u = x_n.relative_complement(&f_zero);

    let pu = u.projector();
    let t_amb = &pu * a.entries() * &pu;
    let pn = x_n.projector();
    let op_gap = sym_norm(&(&t_amb - &pn * a.entries() * &pn));
    let op_gap_bound = 2.0 * a.norm() * 2.0 * delta / (1.0 - delta * delta).max(0.0).sqrt();
    let t = SymOperator::symmetrized(x_n.basis().transpose() * &t_amb * x_n.basis())?;

    let n = a.dim();
    let (u_minus, u_plus, min_nonzero) = if u.dim() == 0 {
        (Subspace::zero(n), Subspace::zero(n), f64::INFINITY)
    } else {
        let split = spectral_split(&a.compress(&u)?, zero_tol)
            .map_err(|e| BundleError::GapLost { sample: i, reason: e.to_string() })?;
        if split.x_zero.dim() > 0 {
            return Err(BundleError::GapLost {
                sample: i,
                reason: format!("{} extra kernel directions", split.x_zero.dim()),
            });
        }
        (lift(&u, &split.x_minus), lift(&u, &split.x_plus), split.gap)
    };

    let fiber = |part: &Subspace<f64>, target: &Subspace<f64>| {
        project_subspace(part, target)
            .map_err(|e| BundleError::GapLost { sample: i, reason: format!("fiber projection: {e}") })
    };
    let y_minus = fiber(&u_minus, &bundle.x_minus[i])?;
    let y_plus = fiber(&u_plus, &bundle.x_plus[i])?;
    let fiber_gap = gap_distance(&u_minus, &y_minus)?.max(gap_distance(&u_plus, &y_plus)?);
    let y = orthogonal_sum(&orthogonal_sum(&y_minus, x0)?, &y_plus)?;

    Ok(SampleReduction {
        f_zero,
        u_minus,
        u_plus,
        y_minus,
        y_plus,
        y,
        t,
        delta,
        op_gap,
        op_gap_bound,
        fiber_gap,
        min_nonzero,
    })
}

/// `max d(e^{sL}[Y_m], Y_{m'})` over `s ∈ s_grid` and `m' ∈ {m} ∪ adjacent(m)`.
fn flow_drift(l: &SymOperator<f64>, ys: &[Subspace<f64>], pairs: &[(usize, usize)], s_grid: &[f64]) -> f64 {
    let mut targets: Vec<(usize, usize)> = (0..ys.len()).map(|i| (i, i)).collect();
    for &(i, j) in pairs {
        targets.push((i, j));
        targets.push((j, i));
    }
    s_grid
        .par_iter()
        .map(|&s| {
            let e = sym_exp(l.entries(), s);
            let moved: Vec<Subspace<f64>> = ys.iter().map(|y| y.image(&e)).collect();
            targets.iter().map(|&(i, j)| gap_distance(&moved[i], &ys[j]).unwrap_or(1.0)).fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Galerkin reduction at level `n` for every sample of `field`.
pub fn galerkin_reduce(
    field: &OperatorField,
    bundle: &BundleSample,
    n: usize,
    opts: &GalerkinOptions,
) -> Result<GalerkinReduction, BundleError> {
    let l = &field.base;
    let dim = l.dim();
    if bundle.len() != field.len() || bundle.ambient_dim() != dim {
        return Err(BundleError::InconsistentScenario("operator field and bundle do not match".into()));
    }
    if n > dim {
        return Err(BundleError::InconsistentScenario(format!("level {n} exceeds ambient dimension {dim}")));
    }
    if n < field.kernel_dim {
        return Err(BundleError::KernelCollapse { sample: 0, delta: 1.0 });
    }
    let basis = galerkin_basis(l, opts.zero_tol)?;
    let x_n = Subspace::from_orthonormal(basis.columns(0, n).clone_owned())?;

    let per: Vec<Result<SampleReduction, BundleError>> = (0..field.len())
        .into_par_iter()
        .map(|i| reduce_sample(i, &field.total(i), bundle, &x_n, opts.zero_tol))
        .collect();
    let per: Vec<SampleReduction> = per.into_iter().collect::<Result<_, _>>()?;

    let y: Vec<Subspace<f64>> = per.iter().map(|p| p.y.clone()).collect();
    let drift = flow_drift(l, &y, &bundle.pairs, &opts.s_grid);
    let fold = |g: fn(&SampleReduction) -> f64| per.iter().map(g).fold(0.0, f64::max);
    let diagnostics = GalerkinDiagnostics {
        delta_zero: fold(|p| p.delta),
        op_gap: fold(|p| p.op_gap),
        op_gap_bound: fold(|p| p.op_gap_bound),
        fiber_gap: fold(|p| p.fiber_gap),
        flow_drift: drift,
        min_nonzero_eig: per.iter().map(|p| p.min_nonzero).fold(f64::INFINITY, f64::min),
        gap: bundle.min_gap(),
    };
    let mut out = GalerkinReduction {
        n,
        x_n,
        f_zero: Vec::with_capacity(per.len()),
        u_minus: Vec::with_capacity(per.len()),
        u_plus: Vec::with_capacity(per.len()),
        y_minus: Vec::with_capacity(per.len()),
        y_plus: Vec::with_capacity(per.len()),
        y,
        t: Vec::with_capacity(per.len()),
        diagnostics,
        base: l.clone(),
        pairs: bundle.pairs.clone(),
    };
    for p in per {
        out.f_zero.push(p.f_zero);
        out.u_minus.push(p.u_minus);
        out.u_plus.push(p.u_plus);
        out.y_minus.push(p.y_minus);
        out.y_plus.push(p.y_plus);
        out.t.push(p.t);
    }
    Ok(out)
}

/// Reductions at several levels, with the empirical threshold past which
/// every level succeeds and keeps `ker T = F⁰`.
#[derive(Debug, Clone)]
pub struct GalerkinSweep {
    pub levels: Vec<usize>,
    pub outcomes: Vec<Result<GalerkinReduction, BundleError>>,
    pub n0: Option<usize>,
}

impl GalerkinSweep {
    pub fn successes(&self) -> Vec<&GalerkinReduction> {
        self.outcomes.iter().filter_map(|o| o.as_ref().ok()).collect()
    }
}

pub fn galerkin_sweep(
    field: &OperatorField,
    bundle: &BundleSample,
    levels: &[usize],
    opts: &GalerkinOptions,
) -> GalerkinSweep {
    let mut levels = levels.to_vec();
    levels.sort_unstable();
    levels.dedup();
    let outcomes: Vec<_> = levels.iter().map(|&n| galerkin_reduce(field, bundle, n, opts)).collect();
    let good =
        |o: &Result<GalerkinReduction, BundleError>| o.as_ref().is_ok_and(|r| r.diagnostics.kernel_identity_holds());
    let mut n0 = None;
    for (k, &n) in levels.iter().enumerate().rev() {
        if good(&outcomes[k]) {
            n0 = Some(n);
        } else {
            break;
        }
    }
    GalerkinSweep { levels, outcomes, n0 }
}

/// Limits of the reduced fibers as the level grows.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitsReport {
    pub levels: Vec<usize>,
    /// `max d(e^{sL}[Y_{n,m}], Y_{n,m'})` per level.
    pub flow_limit: Vec<f64>,
    /// `max dist(x, Y_{n,m})` over probes and samples, per level.
    pub density: Vec<f64>,
    pub flow_monotone: bool,
    pub density_monotone: bool,
}

fn nonincreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + MONOTONE_SLACK)
}

/// Checks that the reduced fibers become flow-invariant and dense as `n`
/// grows. Probes are the eigenvectors of `L` and `random_probes` seeded random
/// unit vectors.
pub fn check_reduction_limits(
    reductions: &[GalerkinReduction],
    s_grid: &[f64],
    random_probes: usize,
    seed: u64,
) -> Result<LimitsReport, BundleError> {
    let first = reductions.first().ok_or_else(|| BundleError::InconsistentScenario("no reductions".into()))?;
    for w in reductions.windows(2) {
        if w[1].n <= w[0].n {
            return Err(BundleError::InconsistentScenario("levels must increase".into()));
        }
    }
    for r in reductions {
        if r.ambient_dim() != first.ambient_dim() || r.len() != first.len() || r.base != first.base {
            return Err(BundleError::InconsistentScenario("reductions come from different scenarios".into()));
        }
    }
    if s_grid.iter().any(|s| !(-2.0..=2.0).contains(s)) {
        return Err(BundleError::InconsistentScenario("flow parameters must lie in [-2, 2]".into()));
    }

    let dim = first.ambient_dim();
    let mut probes: Vec<DVector<f64>> = first.base.eigen().vectors.column_iter().map(|c| c.clone_owned()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_probes {
        let v = Subspace::<f64>::random(dim, 1, &mut rng);
        probes.push(v.basis().column(0).clone_owned());
    }

    let flow_limit: Vec<f64> = reductions.iter().map(|r| flow_drift(&r.base, &r.y, &r.pairs, s_grid)).collect();
    let density: Vec<f64> = reductions
        .iter()
        .map(|r| {
            r.y.par_iter().map(|y| probes.iter().map(|x| y.distance_to(x)).fold(0.0, f64::max)).reduce(|| 0.0, f64::max)
        })
        .collect();
    Ok(LimitsReport {
        levels: reductions.iter().map(|r| r.n).collect(),
        flow_monotone: nonincreasing(&flow_limit),
        density_monotone: nonincreasing(&density),
        flow_limit,
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::{fiber_splitting, sample_manifold, ChartGeometry, FiberOptions, ManifoldKind};
    use crate::functional::SplitFunctional;
    use std::sync::Arc;

    const DIAG: [f64; 6] = [0.0, 0.0, 1.0, -1.0, 1.0, -1.0];

    fn rotation(angle: f64) -> DMatrix<f64> {
        let mut q = DMatrix::identity(6, 6);
        for (a, t) in [(0, 2), (1, 3), (0, 4), (1, 5)] {
            let mut g = DMatrix::identity(6, 6);
            let theta = angle * 0.25f64.powi((t as i32 - 2) / 2);
            let (c, s) = (theta.cos(), theta.sin());
            g[(a, a)] = c;
            g[(t, t)] = c;
            g[(a, t)] = -s;
            g[(t, a)] = s;
            q = g * q;
        }
        q
    }

    /// Circle energy in rotated coordinates: `Φ(x) = Φ₀(Qᵀx)` with
    /// `Φ₀(y) = ¼(y₀² + y₁² − 1)² + ½⟨L y, y⟩`.
    fn rotated_scenario(angle: f64, count: usize) -> (OperatorField, BundleSample) {
        let l = SymOperator::from_diagonal(&DIAG);
        let q = rotation(angle);
        let lm = l.entries().clone();
        let (q1, q2, q3, l1, l2, l3) = (q.clone(), q.clone(), q.clone(), lm.clone(), lm.clone(), lm.clone());
        let f = SplitFunctional::new(
            l.clone(),
            Arc::new(move |x: &DVector<f64>| {
                let y = q1.transpose() * x;
                0.25 * (y[0] * y[0] + y[1] * y[1] - 1.0).powi(2) + 0.5 * y.dot(&(&l1 * &y)) - 0.5 * x.dot(&(&l1 * x))
            }),
            Arc::new(move |x: &DVector<f64>| {
                let y = q2.transpose() * x;
                let s = y[0] * y[0] + y[1] * y[1] - 1.0;
                let mut g = &l2 * &y;
                g[0] += s * y[0];
                g[1] += s * y[1];
                &q2 * g - &l2 * x
            }),
        )
        .with_hessian(Arc::new(move |x: &DVector<f64>| {
            let y = q3.transpose() * x;
            let s = y[0] * y[0] + y[1] * y[1] - 1.0;
            let mut h = l3.clone();
            h[(0, 0)] += s + 2.0 * y[0] * y[0];
            h[(1, 1)] += s + 2.0 * y[1] * y[1];
            h[(0, 1)] += 2.0 * y[0] * y[1];
            h[(1, 0)] += 2.0 * y[0] * y[1];
            &q3 * h * q3.transpose() - &l3
        }));
        let geometry = ChartGeometry { center: DVector::zeros(6), frame: q.columns(0, 2).clone_owned(), radius: 1.0 };
        let m = sample_manifold(ManifoldKind::Circle, 6, count, Some(geometry)).unwrap();
        let b = fiber_splitting(&f, &m, &FiberOptions::default()).unwrap();
        (OperatorField::from_bundle(&l, &m, &b).unwrap(), b)
    }

    #[test]
    fn basis_orders_kernel_then_magnitude_then_index() {
        let l = SymOperator::from_diagonal(&[2.0, 0.0, -1.0, 0.0, 1.0]);
        let b = galerkin_basis(&l, 1e-8).unwrap();
        for (col, axis) in [1, 3, 2, 4, 0].into_iter().enumerate() {
            assert!((b[(axis, col)].abs() - 1.0).abs() < 1e-12, "column {col}");
        }
    }

    #[test]
    fn full_level_reproduces_the_bundle() {
        let (field, bundle) = rotated_scenario(0.05, 32);
        let r = galerkin_reduce(&field, &bundle, 6, &GalerkinOptions::default()).unwrap();
        let d = r.diagnostics;
        assert!(d.delta_zero < 1e-12 && d.op_gap < 1e-10 && d.fiber_gap < 1e-10, "{d:?}");
        assert!(d.kernel_identity_holds());
        for y in &r.y {
            assert_eq!(y.dim(), 6);
        }
        assert!(r.forward_invariance_defect() < 1e-12);
    }

    #[test]
    fn diagnostics_shrink_with_level() {
        let (field, bundle) = rotated_scenario(0.05, 32);
        let sweep = galerkin_sweep(&field, &bundle, &[2, 4, 6], &GalerkinOptions::default());
        let reds = sweep.successes();
        assert_eq!(reds.len(), 3);
        for r in &reds {
            let d = r.diagnostics;
            assert!(d.op_gap <= d.op_gap_bound + 1e-12, "{d:?}");
        }
        for w in reds.windows(2) {
            assert!(w[1].diagnostics.delta_zero <= w[0].diagnostics.delta_zero + 1e-12);
            assert!(w[1].diagnostics.fiber_gap <= w[0].diagnostics.fiber_gap + 1e-12);
        }
        assert_eq!(sweep.n0, Some(2));
    }

    #[test]
    fn too_small_level_collapses_the_kernel() {
        let (field, bundle) = rotated_scenario(0.05, 16);
        assert!(matches!(
            galerkin_reduce(&field, &bundle, 1, &GalerkinOptions::default()),
            Err(BundleError::KernelCollapse { .. })
        ));
    }

    #[test]
    fn limits_reach_zero_at_full_level() {
        let (field, bundle) = rotated_scenario(0.05, 32);
        let opts = GalerkinOptions::default();
        let reds: Vec<GalerkinReduction> =
            [2, 4, 6].iter().map(|&n| galerkin_reduce(&field, &bundle, n, &opts).unwrap()).collect();
        let report = check_reduction_limits(&reds, &opts.s_grid, 8, 7).unwrap();
        assert!(report.flow_monotone, "{report:?}");
        assert!(report.density_monotone, "{report:?}");
        assert!(*report.flow_limit.last().unwrap() < 1e-8);
        assert!(*report.density.last().unwrap() < 1e-8);
    }

    #[test]
    fn inconsistent_limit_inputs_are_rejected() {
        let (field, bundle) = rotated_scenario(0.05, 16);
        let opts = GalerkinOptions::default();
        let r4 = galerkin_reduce(&field, &bundle, 4, &opts).unwrap();
        let r2 = galerkin_reduce(&field, &bundle, 2, &opts).unwrap();
        assert!(matches!(
            check_reduction_limits(&[r4.clone(), r2], &opts.s_grid, 0, 0),
            Err(BundleError::InconsistentScenario(_))
        ));
        assert!(matches!(check_reduction_limits(&[r4], &[3.0], 0, 0), Err(BundleError::InconsistentScenario(_))));
    }
}
