//! Experiment drivers: grid scans across the phase transition and
//! fiber sampling experiments.
//!
//! For 3-way heavy-corner margins `(B n^2, n^2, ..., n^2)` the expected table
//! has closed-form limits on each side of `B_c = 1/(2^(2/3) - 1)`:
//! subcritical (`B < B_c`) the corner entry stays bounded at
//! `1/(R^3 - 1)` with `R = (B^{-1}+1)/(B_c^{-1}+1)`, supercritical it grows
//! like `(B - B_c) n^2` while the off-corner entries pin to constants.
//! [`scan_3way`] sweeps `(n, B)` grids with the reduced solver and reports
//! solved entries, limits, and errors per row; [`scan_2way`] probes the
//! two-value bezel margins whose threshold is `1 + sqrt(1 + 1/C)`.

use serde::Serialize;

use crate::fiber::{enumerate_fiber, fiber_weights, WeightKind, DEFAULT_FIBER_BUDGET};
use crate::moves::MoveSet;
use crate::sampler::{
    divergence_uniform_vs_hypergeometric, empirical_distribution, run_chain, tv_distance,
    ChainConfig,
};
use crate::solver::{
    barvinok_solve, critical_ratio_3way, in_near_critical_band, typical_table_2way, Regime,
    SolveOptions,
};
use crate::tensor::MarginSpec;
use crate::{Error, Result};

/// Critical ratio for the 2-way two-value margins: `1 + sqrt(1 + 1/C)`.
pub fn critical_ratio_2way(c: f64) -> f64 {
    1.0 + (1.0 + c.recip()).sqrt()
}

/// Closed-form limiting entries of the solved expected table at ratio `B`.
///
/// `z111` is a level in the subcritical regime and a slope (`Z111/n^2`) in
/// the supercritical regime; exactly at `B_c` neither applies. The limits
/// depend only on `B`. `near_critical` flags `|B - B_c| < 0.05`, where the
/// finite-n error terms blow up and rate checks are unreliable.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LimitEntries3 {
    pub b: f64,
    pub regime: Regime,
    pub near_critical: bool,
    /// Subcritical level of the corner entry.
    pub z111_level: Option<f64>,
    /// Supercritical slope of the corner entry against n^2: `B - B_c`.
    pub z111_slope: Option<f64>,
    pub z121: f64,
    pub z221: f64,
    pub z222: f64,
}

pub fn limit_entries_3way(b: f64) -> Result<LimitEntries3> {
    if !b.is_finite() || b <= 0.0 {
        return Err(Error::InvalidParameter("margin ratio B must be positive"));
    }
    let bc = critical_ratio_3way();
    let regime = Regime::classify(b);
    let cbrt2 = 2f64.cbrt();
    let (z111_level, z111_slope, z121, z221) = match regime {
        Regime::Subcritical => {
            let r = (b.recip() + 1.0) / (bc.recip() + 1.0);
            (
                Some((r.powi(3) - 1.0).recip()),
                None,
                (cbrt2 * r * r - 1.0).recip(),
                (cbrt2 * cbrt2 * r - 1.0).recip(),
            )
        }
        Regime::Supercritical => (
            None,
            Some(b - bc),
            (cbrt2 - 1.0).recip(),
            (cbrt2 * cbrt2 - 1.0).recip(),
        ),
        Regime::NearCritical => (
            None,
            None,
            (cbrt2 - 1.0).recip(),
            (cbrt2 * cbrt2 - 1.0).recip(),
        ),
    };
    Ok(LimitEntries3 {
        b,
        regime,
        near_critical: in_near_critical_band(b),
        z111_level,
        z111_slope,
        z121,
        z221,
        z222: 1.0,
    })
}

/// One `(n, B)` grid point of the 3-way scan.
#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub n: usize,
    pub b: f64,
    pub p: f64,
    pub q: f64,
    pub p_minus_one: f64,
    pub q_minus_one: f64,
    pub z111: f64,
    pub z121: f64,
    pub z221: f64,
    pub z222: f64,
    /// Limit level (subcritical) or slope (supercritical); NaN exactly at B_c.
    pub limit_z111: f64,
    pub limit_z121: f64,
    pub limit_z221: f64,
    pub limit_z222: f64,
    /// `|Z111 - limit|` subcritical, `|Z111/n^2 - slope|` supercritical.
    pub err_z111: f64,
    pub err_z121: f64,
    pub err_z221: f64,
    pub err_z222: f64,
    pub regime: Regime,
    pub near_critical: bool,
    pub residual: f64,
    pub converged: bool,
}

/// Sweeps the grid with the reduced `(P, Q)` solver; rows come back sorted by
/// `(n, B)` regardless of thread count, and non-converged points are flagged
/// rather than dropped.
pub fn scan_3way(n_grid: &[usize], b_grid: &[f64], threads: usize) -> Result<Vec<ScanRow>> {
    if n_grid.is_empty() || b_grid.is_empty() {
        return Err(Error::InvalidParameter("scan grids must be nonempty"));
    }
    let mut items: Vec<(usize, f64)> = Vec::new();
    for &n in n_grid {
        for &b in b_grid {
            items.push((n, b));
        }
    }
    items.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let rows = parallel_map(&items, threads, |&(n, b)| scan_row_3way(n, b));
    rows.into_iter().collect()
}

fn scan_row_3way(n: usize, b: f64) -> Result<ScanRow> {
    let sol = match barvinok_solve(n, b) {
        Ok(s) => s,
        Err(Error::PqNotConverged { best }) => *best,
        Err(e) => return Err(e),
    };
    let lim = limit_entries_3way(b)?;
    let nn = (n * n) as f64;
    let (limit_z111, err_z111) = match (lim.z111_level, lim.z111_slope) {
        (Some(level), _) => (level, (sol.z111 - level).abs()),
        (None, Some(slope)) => (slope, (sol.z111 / nn - slope).abs()),
        (None, None) => (f64::NAN, f64::NAN),
    };
    Ok(ScanRow {
        n,
        b,
        p: sol.p,
        q: sol.q,
        p_minus_one: sol.p_minus_one,
        q_minus_one: sol.q_minus_one,
        z111: sol.z111,
        z121: sol.z121,
        z221: sol.z221,
        z222: sol.z222,
        limit_z111,
        limit_z121: lim.z121,
        limit_z221: lim.z221,
        limit_z222: lim.z222,
        err_z111,
        err_z121: (sol.z121 - lim.z121).abs(),
        err_z221: (sol.z221 - lim.z221).abs(),
        err_z222: (sol.z222 - lim.z222).abs(),
        regime: sol.regime,
        near_critical: sol.near_critical,
        residual: sol.residual,
        converged: sol.converged,
    })
}

/// Floats print with 17 significant digits so CSV output reparses bit-exactly.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub const SCAN_3WAY_HEADER: &str = "n,B,P,Q,pMinusOne,qMinusOne,Z111,Z121,Z221,Z222,\
limitZ111,limitZ121,limitZ221,limitZ222,errZ111,errZ121,errZ221,errZ222,\
regime,nearCritical,residual,converged";

pub fn scan_csv_3way(rows: &[ScanRow]) -> String {
    let mut out = String::from(SCAN_3WAY_HEADER);
    out.push('\n');
    for r in rows {
        let fields = [
            r.n.to_string(),
            fmt_float(r.b),
            fmt_float(r.p),
            fmt_float(r.q),
            fmt_float(r.p_minus_one),
            fmt_float(r.q_minus_one),
            fmt_float(r.z111),
            fmt_float(r.z121),
            fmt_float(r.z221),
            fmt_float(r.z222),
            fmt_float(r.limit_z111),
            fmt_float(r.limit_z121),
            fmt_float(r.limit_z221),
            fmt_float(r.limit_z222),
            fmt_float(r.err_z111),
            fmt_float(r.err_z121),
            fmt_float(r.err_z221),
            fmt_float(r.err_z222),
            r.regime.to_string(),
            r.near_critical.to_string(),
            fmt_float(r.residual),
            r.converged.to_string(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Subcritical => "subcritical",
            Regime::NearCritical => "nearcritical",
            Regime::Supercritical => "supercritical",
        })
    }
}

/// Two-value bezel construction for the 2-way scan.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Scan2Config {
    /// Scale of the light margin (`floor(C n)` per light row/column).
    pub c: f64,
    /// Bezel exponent: the first `floor(n^delta)` rows and columns form the
    /// bezel, the remaining `n` the bulk. Requires `0 < delta < 1`.
    pub delta: f64,
    /// Heavy bezel (default) gives the bezel rows/columns margin
    /// `floor(B C n)`; with `false` the bezel is light and the bulk heavy.
    pub bezel_heavy: bool,
}

impl Default for Scan2Config {
    fn default() -> Self {
        Scan2Config {
            c: 1.0,
            delta: 0.55,
            bezel_heavy: true,
        }
    }
}

/// One `(n, B)` grid point of the 2-way bezel scan.
#[derive(Debug, Clone, Serialize)]
pub struct Scan2Row {
    pub n: usize,
    pub b: f64,
    pub c: f64,
    pub delta: f64,
    pub bezel_heavy: bool,
    /// Number of bezel rows (= columns), `floor(n^delta)`.
    pub bezel: usize,
    pub bezel_margin: i64,
    pub bulk_margin: i64,
    /// The 2-way threshold `1 + sqrt(1 + 1/C)`.
    pub b_critical: f64,
    /// Corner entry of the typical table (bezel x bezel block).
    pub corner: f64,
    /// Bezel x bulk entry.
    pub edge: f64,
    /// Bulk x bulk entry.
    pub bulk: f64,
    /// The entropy-like objective g at the typical table.
    pub objective: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Margins for one 2-way grid point: bezel rows/columns then bulk, identical
/// for rows and columns, so totals balance by construction.
pub fn bezel_margins(n: usize, b: f64, config: &Scan2Config) -> Result<Vec<i64>> {
    if config.delta.is_nan() || config.delta <= 0.0 || config.delta >= 1.0 {
        return Err(Error::InvalidParameter("delta must lie in (0, 1)"));
    }
    if b.is_nan() || b <= 0.0 || config.c.is_nan() || config.c <= 0.0 {
        return Err(Error::InvalidParameter("B and C must be positive"));
    }
    let bezel = (n as f64).powf(config.delta).floor().max(1.0) as usize;
    let heavy = (b * config.c * n as f64).floor() as i64;
    let light = (config.c * n as f64).floor() as i64;
    if heavy < 1 || light < 1 {
        return Err(Error::InvalidParameter(
            "margins must be at least 1; increase n, B, or C",
        ));
    }
    let (bezel_margin, bulk_margin) = if config.bezel_heavy {
        (heavy, light)
    } else {
        (light, heavy)
    };
    let mut margins = vec![bezel_margin; bezel];
    margins.extend(std::iter::repeat_n(bulk_margin, n));
    Ok(margins)
}

pub fn scan_2way(
    n_grid: &[usize],
    b_grid: &[f64],
    config: &Scan2Config,
    threads: usize,
) -> Result<Vec<Scan2Row>> {
    if n_grid.is_empty() || b_grid.is_empty() {
        return Err(Error::InvalidParameter("scan grids must be nonempty"));
    }
    let mut items: Vec<(usize, f64)> = Vec::new();
    for &n in n_grid {
        for &b in b_grid {
            items.push((n, b));
        }
    }
    items.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
    let rows = parallel_map(&items, threads, |&(n, b)| scan_row_2way(n, b, config));
    rows.into_iter().collect()
}

fn scan_row_2way(n: usize, b: f64, config: &Scan2Config) -> Result<Scan2Row> {
    let margins = bezel_margins(n, b, config)?;
    let bezel = margins.len() - n;
    let (typical, converged) =
        match typical_table_2way(margins.clone(), margins.clone(), &SolveOptions::default()) {
            Ok(t) => (t, true),
            Err(Error::NotConverged { report }) => {
                let objective = crate::solver::typical_objective(&report.expected);
                (
                    crate::solver::TypicalTable {
                        solve: *report,
                        objective,
                    },
                    false,
                )
            }
            Err(e) => return Err(e),
        };
    let z = &typical.solve.expected;
    Ok(Scan2Row {
        n,
        b,
        c: config.c,
        delta: config.delta,
        bezel_heavy: config.bezel_heavy,
        bezel,
        bezel_margin: margins[0],
        bulk_margin: margins[bezel],
        b_critical: critical_ratio_2way(config.c),
        corner: z.get(&[0, 0]),
        edge: z.get(&[0, bezel]),
        bulk: z.get(&[bezel, bezel]),
        objective: typical.objective,
        residual: typical.solve.residual_inf,
        iterations: typical.solve.iterations,
        converged,
    })
}

pub const SCAN_2WAY_HEADER: &str = "n,B,C,delta,bezelHeavy,bezel,bezelMargin,bulkMargin,\
Bcritical,corner,edge,bulk,objective,residual,iterations,converged";

pub fn scan_csv_2way(rows: &[Scan2Row]) -> String {
    let mut out = String::from(SCAN_2WAY_HEADER);
    out.push('\n');
    for r in rows {
        let fields = [
            r.n.to_string(),
            fmt_float(r.b),
            fmt_float(r.c),
            fmt_float(r.delta),
            r.bezel_heavy.to_string(),
            r.bezel.to_string(),
            r.bezel_margin.to_string(),
            r.bulk_margin.to_string(),
            fmt_float(r.b_critical),
            fmt_float(r.corner),
            fmt_float(r.edge),
            fmt_float(r.bulk),
            fmt_float(r.objective),
            fmt_float(r.residual),
            r.iterations.to_string(),
            r.converged.to_string(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Knobs for [`fiber_experiment`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FiberExperimentConfig {
    pub steps: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub budget: usize,
}

impl Default for FiberExperimentConfig {
    fn default() -> Self {
        FiberExperimentConfig {
            steps: 10_000,
            burn_in: 1000,
            thin: 1,
            seed: 0,
            budget: DEFAULT_FIBER_BUDGET,
        }
    }
}

/// One chain's summary inside a fiber experiment.
#[derive(Debug, Clone, Serialize)]
pub struct TargetRun {
    pub target: WeightKind,
    pub acceptance_rate: f64,
    pub kept: usize,
    /// TV between the chain's empirical law and the exact law; present only
    /// when the fiber was enumerable.
    pub empirical_tv: Option<f64>,
    /// Corner-cell value histogram over retained samples.
    pub corner_histogram: Vec<(i64, u64)>,
}

/// Exact-vs-sampled comparison on one fiber. When enumeration exceeds the
/// budget the experiment degrades to sampling-only and the exact columns are
/// omitted.
#[derive(Debug, Clone, Serialize)]
pub struct FiberExperiment {
    pub spec: MarginSpec,
    pub enumerable: bool,
    pub fiber_size: Option<usize>,
    pub connected: Option<bool>,
    pub components: Option<usize>,
    pub exact_tv_uniform_vs_hypergeometric: Option<f64>,
    pub runs: Vec<TargetRun>,
}

pub fn fiber_experiment(
    spec: &MarginSpec,
    config: &FiberExperimentConfig,
) -> Result<FiberExperiment> {
    spec.validate()?;
    let fiber = match enumerate_fiber(spec, config.budget) {
        Ok(f) => Some(f),
        Err(Error::BudgetExceeded { .. }) => None,
        Err(e) => return Err(e),
    };
    let moves = MoveSet::for_dims(&spec.dims())?;
    let connectivity = match &fiber {
        Some(f) => Some(crate::fiber::connectivity_check(f, &moves)?),
        None => None,
    };
    let start = spec.greedy_table();
    let mut runs = Vec::new();
    for (offset, target) in [WeightKind::Uniform, WeightKind::Hypergeometric]
        .into_iter()
        .enumerate()
    {
        let chain = ChainConfig {
            start: start.clone(),
            target,
            steps: config.steps,
            burn_in: config.burn_in,
            thin: config.thin,
            seed: config.seed.wrapping_add(offset as u64),
            keep_samples: false,
        };
        let stats = run_chain(&chain, &moves)?;
        let empirical_tv = match &fiber {
            Some(f) => {
                let exact = fiber_weights(f, target)?;
                let freq = empirical_distribution(&stats, f)?;
                Some(tv_distance(&freq, &exact.weights)?)
            }
            None => None,
        };
        let mut histogram = std::collections::BTreeMap::new();
        for &v in &stats.corner_trace {
            *histogram.entry(v).or_insert(0u64) += 1;
        }
        runs.push(TargetRun {
            target,
            acceptance_rate: stats.acceptance_rate,
            kept: stats.kept,
            empirical_tv,
            corner_histogram: histogram.into_iter().collect(),
        });
    }
    Ok(FiberExperiment {
        spec: spec.clone(),
        enumerable: fiber.is_some(),
        fiber_size: fiber.as_ref().map(|f| f.len()),
        connected: connectivity.map(|c| c.connected),
        components: connectivity.map(|c| c.components),
        exact_tv_uniform_vs_hypergeometric: fiber
            .as_ref()
            .map(divergence_uniform_vs_hypergeometric)
            .transpose()?,
        runs,
    })
}

/// Deterministic order-preserving parallel map.
pub(crate) fn parallel_map<T: Sync, U: Send>(
    items: &[T],
    threads: usize,
    f: impl Fn(&T) -> U + Sync,
) -> Vec<U> {
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.iter().map(f).collect();
    }
    let mut out: Vec<Option<U>> = Vec::with_capacity(items.len());
    out.resize_with(items.len(), || None);
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|worker| {
                let f = &f;
                scope.spawn(move || {
                    let mut local = Vec::new();
                    let mut i = worker;
                    while i < items.len() {
                        local.push((i, f(&items[i])));
                        i += threads;
                    }
                    local
                })
            })
            .collect();
        for handle in handles {
            for (i, value) in handle.join().expect("scan worker panicked") {
                out[i] = Some(value);
            }
        }
    });
    out.into_iter().map(|o| o.expect("all slots filled")).collect()
}
