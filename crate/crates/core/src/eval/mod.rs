//! Simulation studies: KL divergence, estimator comparison grids and
//! per-iteration timing.

pub mod config;
pub mod systems;

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::em::{em_fit, EmConfig, FitResult};
use crate::error::{Error, Result};
use crate::gillespie::{simulate_with, subsample_by_jump, StopRule};
use crate::lla::{lla_fit, lla_loglik, LlaConfig};
use crate::network::{LogRates, ReactionNetwork, Trajectory};
use crate::rng::stream;

pub use config::{CellPlan, Estimator, StudyConfig, StudyKind, TimingScenario};
pub use systems::{builtin_system, builtin_systems, BuiltinSystem};

/// Seed offset separating the KL evaluation datasets from the fitted ones.
const KL_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
/// Substreams reserved per replicate for its KL datasets.
const KL_STRIDE: u64 = 1 << 16;

/// Observation design of a dataset: `n_intervals` intervals of `jump` events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GridDesign {
    pub jump: usize,
    pub n_intervals: usize,
}

/// Simulate one dataset with the given design from substream `substream`.
pub fn simulate_dataset(
    net: &ReactionNetwork,
    rates: &LogRates,
    y0: &[f64],
    design: GridDesign,
    master: u64,
    substream: u64,
) -> Result<Trajectory> {
    let mut rng = stream(master, substream);
    let needed = design.jump * design.n_intervals;
    let rec = simulate_with(net, rates, y0, StopRule::events(needed), &mut rng)?;
    subsample_by_jump(net, &rec, design.jump, design.n_intervals)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlEstimate {
    pub kl: f64,
    pub se: f64,
    pub datasets: usize,
}

/// Monte Carlo KL divergence for several estimates on shared datasets.
///
/// Each of `m_reps` fresh datasets is simulated under `beta_true` with the
/// given design; the LLA Gaussian log-density is evaluated at `beta_true`
/// and at every estimate.
#[allow(clippy::too_many_arguments)]
pub fn kl_divergence_many(
    net: &ReactionNetwork,
    beta_true: &LogRates,
    estimates: &[LogRates],
    y0: &[f64],
    design: GridDesign,
    m_reps: usize,
    seed: u64,
    substream_base: u64,
    lla_cfg: &LlaConfig,
) -> Result<Vec<KlEstimate>> {
    if m_reps == 0 {
        return Err(Error::InvalidArgument("KL needs at least one dataset".into()));
    }
    let mut diffs = vec![Vec::with_capacity(m_reps); estimates.len()];
    for k in 0..m_reps as u64 {
        let data = simulate_dataset(net, beta_true, y0, design, seed, substream_base + k)?;
        let base = lla_loglik(net, beta_true, &data, lla_cfg)?;
        for (e, est) in estimates.iter().enumerate() {
            let ll = match lla_loglik(net, est, &data, lla_cfg) {
                Ok(v) => v,
                Err(Error::Singular { .. }) => f64::NEG_INFINITY,
                Err(other) => return Err(other),
            };
            diffs[e].push(base - ll);
        }
    }
    Ok(diffs
        .into_iter()
        .map(|d| {
            let m = d.len() as f64;
            let mean = d.iter().sum::<f64>() / m;
            let se = if d.len() > 1 && mean.is_finite() {
                (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
            } else if mean.is_finite() {
                0.0
            } else {
                f64::INFINITY
            };
            KlEstimate {
                kl: mean,
                se,
                datasets: d.len(),
            }
        })
        .collect())
}

/// Monte Carlo KL divergence of one estimate.
pub fn kl_divergence(
    net: &ReactionNetwork,
    beta_true: &LogRates,
    beta_hat: &LogRates,
    y0: &[f64],
    design: GridDesign,
    m_reps: usize,
    seed: u64,
) -> Result<KlEstimate> {
    let est = kl_divergence_many(
        net,
        beta_true,
        std::slice::from_ref(beta_hat),
        y0,
        design,
        m_reps,
        seed,
        0,
        &LlaConfig::default(),
    )?;
    Ok(est[0])
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub study: String,
    pub system: String,
    pub n_intervals: usize,
    pub jump: usize,
    pub replicate: usize,
    pub estimator: Estimator,
    pub beta: Vec<f64>,
    pub kl: f64,
    pub kl_se: f64,
    pub seconds: f64,
    pub converged: bool,
    pub seed: u64,
    pub substream: u64,
    pub error: String,
}

fn cell_substream(cell: usize, replicate: usize) -> u64 {
    ((cell as u64) << 20) | replicate as u64
}

fn fit_one(
    net: &ReactionNetwork,
    traj: &Trajectory,
    estimators: &[Estimator],
    em_cfg: &EmConfig,
    lla_cfg: &LlaConfig,
) -> Vec<(Estimator, Result<FitResult>, f64)> {
    let started = Instant::now();
    let lla = lla_fit(net, traj, lla_cfg);
    let lla_secs = started.elapsed().as_secs_f64();
    let mut out = Vec::new();
    if estimators.contains(&Estimator::Em) {
        let started = Instant::now();
        let em = match &lla {
            Ok(l) => l.rates().and_then(|init| em_fit(net, traj, &init, em_cfg)),
            Err(e) => Err(Error::InvalidArgument(format!("no LLA start: {e}"))),
        };
        out.push((Estimator::Em, em, started.elapsed().as_secs_f64()));
    }
    if estimators.contains(&Estimator::Lla) {
        out.insert(0, (Estimator::Lla, lla, lla_secs));
    }
    out
}

fn failure_row(base: &ComparisonRow, estimator: Estimator, d: usize, msg: String) -> ComparisonRow {
    ComparisonRow {
        estimator,
        beta: vec![f64::NAN; d],
        kl: f64::NAN,
        kl_se: f64::NAN,
        converged: false,
        error: msg,
        ..base.clone()
    }
}

fn run_replicate(
    cfg: &StudyConfig,
    sys: &BuiltinSystem,
    cell_idx: usize,
    cell: &CellPlan,
    replicate: usize,
) -> Vec<ComparisonRow> {
    let net = &sys.network;
    let d = net.n_params();
    let substream = cell_substream(cell_idx, replicate);
    let design = GridDesign {
        jump: cell.jump,
        n_intervals: cell.n_intervals,
    };
    let base = ComparisonRow {
        study: cfg.study.clone(),
        system: cell.system.clone(),
        n_intervals: cell.n_intervals,
        jump: cell.jump,
        replicate,
        estimator: Estimator::Lla,
        beta: Vec::new(),
        kl: f64::NAN,
        kl_se: f64::NAN,
        seconds: 0.0,
        converged: false,
        seed: cfg.seed,
        substream,
        error: String::new(),
    };
    let mut estimators = cfg.estimators.clone();
    estimators.sort();
    estimators.dedup();

    let traj = match simulate_dataset(net, &sys.beta_true, &sys.y0, design, cfg.seed, substream) {
        Ok(t) => t,
        Err(e) => {
            return estimators
                .iter()
                .map(|&est| failure_row(&base, est, d, format!("simulation: {e}")))
                .collect()
        }
    };
    let fits = fit_one(net, &traj, &estimators, &cfg.em, &cfg.lla);
    let ok: Vec<LogRates> = fits
        .iter()
        .filter_map(|(_, f, _)| f.as_ref().ok().and_then(|f| f.rates().ok()))
        .collect();
    let kl = kl_divergence_many(
        net,
        &sys.beta_true,
        &ok,
        &sys.y0,
        design,
        cfg.kl_reps,
        cfg.seed ^ KL_SALT,
        substream * KL_STRIDE,
        &cfg.lla,
    );
    let mut kl_iter = match &kl {
        Ok(v) => v.clone().into_iter(),
        Err(_) => Vec::new().into_iter(),
    };
    fits.into_iter()
        .map(|(est, fit, secs)| match fit {
            Ok(f) => {
                let (kl_v, kl_se, err) = match (&kl, kl_iter.next()) {
                    (Ok(_), Some(k)) => (k.kl, k.se, String::new()),
                    (Err(e), _) => (f64::NAN, f64::NAN, format!("kl: {e}")),
                    (Ok(_), None) => (f64::NAN, f64::NAN, "kl: missing".into()),
                };
                ComparisonRow {
                    estimator: est,
                    beta: f.beta_hat,
                    kl: kl_v,
                    kl_se,
                    seconds: if cfg.record_timing { secs } else { 0.0 },
                    converged: f.converged,
                    error: err,
                    ..base.clone()
                }
            }
            Err(e) => failure_row(&base, est, d, format!("fit: {e}")),
        })
        .collect()
}

/// Run the estimator comparison grid. Replicates run in parallel; rows come
/// back sorted by `(N, jump, replicate, estimator)`.
pub fn run_comparison(cfg: &StudyConfig) -> Result<Vec<ComparisonRow>> {
    cfg.validate()?;
    if cfg.kind != StudyKind::Comparison {
        return Err(Error::Config("run_comparison needs kind = \"comparison\"".into()));
    }
    let sys = cfg.resolve_system(&cfg.system)?;
    let plan = cfg.plan();
    let tasks: Vec<(usize, usize)> = plan
        .iter()
        .enumerate()
        .flat_map(|(c, cell)| (0..cell.replicates).map(move |r| (c, r)))
        .collect();
    let mut rows: Vec<ComparisonRow> = tasks
        .par_iter()
        .flat_map_iter(|&(c, r)| run_replicate(cfg, &sys, c, &plan[c], r))
        .collect();
    rows.sort_by(|a, b| {
        (a.n_intervals, a.jump, a.replicate, a.estimator).cmp(&(b.n_intervals, b.jump, b.replicate, b.estimator))
    });
    Ok(rows)
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

/// Write comparison rows as tidy CSV.
pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], n_params: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["study", "system", "N", "jump", "replicate", "estimator"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=n_params).map(|m| format!("beta_{m}")));
    header.extend(
        ["kl", "kl_se", "seconds", "converged", "seed", "substream", "error"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![
            row.study.clone(),
            row.system.clone(),
            row.n_intervals.to_string(),
            row.jump.to_string(),
            row.replicate.to_string(),
            row.estimator.as_str().to_string(),
        ];
        rec.extend(row.beta.iter().map(|b| fmt_f64(*b)));
        rec.extend([
            fmt_f64(row.kl),
            fmt_f64(row.kl_se),
            fmt_f64(row.seconds),
            row.converged.to_string(),
            row.seed.to_string(),
            row.substream.to_string(),
            row.error.clone(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Median of the finite values, `NaN` if there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares line through `(x, y)`: `(slope, intercept, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// One row of the timing table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub scenario: String,
    pub system: String,
    pub n_intervals: usize,
    pub jump: usize,
    pub p: usize,
    pub r: usize,
    pub replicates: usize,
    /// Median over replicates of wall time per EM iteration.
    pub seconds_per_iteration: f64,
    pub seed: u64,
    pub error: String,
}

/// Per-iteration EM wall time for every timing cell.
///
/// Fits run one at a time with a fixed iteration count and start from
/// `beta_true`, so that every replicate does the same amount of work.
pub fn run_timing(cfg: &StudyConfig) -> Result<Vec<TimingRow>> {
    cfg.validate()?;
    if cfg.kind != StudyKind::Timing {
        return Err(Error::Config("run_timing needs kind = \"timing\"".into()));
    }
    let em_cfg = EmConfig {
        tol: f64::MIN_POSITIVE,
        maxit: cfg.timing_iterations,
        ..cfg.em
    };
    let mut rows = Vec::new();
    for (c, cell) in cfg.plan().iter().enumerate() {
        let sys = cfg.resolve_system(&cell.system)?;
        let net = &sys.network;
        let design = GridDesign {
            jump: cell.jump,
            n_intervals: cell.n_intervals,
        };
        let mut per_iter = Vec::new();
        let mut error = String::new();
        for rep in 0..cell.replicates {
            let traj = match simulate_dataset(net, &sys.beta_true, &sys.y0, design, cfg.seed, cell_substream(c, rep)) {
                Ok(t) => t,
                Err(e) => {
                    error = format!("simulation: {e}");
                    continue;
                }
            };
            let started = Instant::now();
            match em_fit(net, &traj, &sys.beta_true, &em_cfg) {
                Ok(fit) => per_iter.push(started.elapsed().as_secs_f64() / fit.iterations as f64),
                Err(e) => error = format!("fit: {e}"),
            }
        }
        rows.push(TimingRow {
            scenario: cell.scenario.clone(),
            system: cell.system.clone(),
            n_intervals: cell.n_intervals,
            jump: cell.jump,
            p: net.n_species(),
            r: net.n_reactions(),
            replicates: per_iter.len(),
            seconds_per_iteration: if cfg.record_timing { median(per_iter) } else { 0.0 },
            seed: cfg.seed,
            error,
        });
    }
    Ok(rows)
}

pub fn write_timing_csv<W: Write>(rows: &[TimingRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scenario",
        "system",
        "N",
        "jump",
        "p",
        "r",
        "replicates",
        "seconds_per_iteration",
        "seed",
        "error",
    ])?;
    for row in rows {
        w.write_record([
            row.scenario.clone(),
            row.system.clone(),
            row.n_intervals.to_string(),
            row.jump.to_string(),
            row.p.to_string(),
            row.r.to_string(),
            row.replicates.to_string(),
            fmt_f64(row.seconds_per_iteration),
            row.seed.to_string(),
            row.error.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
