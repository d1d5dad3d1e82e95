//! Comparative statics, Monte Carlo strategy comparisons under common random
//! numbers, and the census of paths where the reference maker had to match
//! the competitor's level.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::OmegaTable;
use crate::error::{Error, Result};
use crate::model::{competitor_depths, ModelParams};
use crate::real::Real;
use crate::rng::PathSeed;
use crate::sim::{run_path, run_path_recorded, PathResult, StepRecord, Strategy};
use crate::stats::{mean, paired_t_test, std_dev, PairedTTest};

pub const DEFAULT_CONFIDENCE: f64 = 0.99;

/// One point of a depth surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticsRow {
    pub t: f64,
    pub q_tilde: i64,
    pub q: i64,
    pub delta_hat_a: Option<f64>,
    pub delta_hat_b: Option<f64>,
    pub competitor_a: f64,
    pub competitor_b: f64,
    pub ask_truncated: bool,
    pub bid_truncated: bool,
}

fn statics_row<T: Real>(
    omega: &OmegaTable<T>,
    t: T,
    q: i64,
    q_tilde: i64,
    z: T,
) -> Result<StaticsRow> {
    let hat = omega.hat_depths(t, q, q_tilde, z)?;
    let comp = competitor_depths(omega.params(), q_tilde, z);
    Ok(StaticsRow {
        t: t.as_f64(),
        q_tilde,
        q,
        delta_hat_a: hat.ask_posted.then(|| hat.ask.as_f64()),
        delta_hat_b: hat.bid_posted.then(|| hat.bid.as_f64()),
        competitor_a: comp.ask.as_f64(),
        competitor_b: comp.bid.as_f64(),
        ask_truncated: hat.ask_posted && hat.ask < comp.ask,
        bid_truncated: hat.bid_posted && hat.bid < comp.bid,
    })
}

/// Unrestrained depths over `(q~, q)` at a fixed time.
pub fn statics_depth_surface<T: Real>(
    omega: &OmegaTable<T>,
    t_fixed: T,
    q_tildes: impl IntoIterator<Item = i64>,
    z: T,
) -> Result<Vec<StaticsRow>> {
    let p = omega.params();
    let mut rows = Vec::new();
    for qt in q_tildes {
        for q in p.q_range() {
            rows.push(statics_row(omega, t_fixed, q, qt, z)?);
        }
    }
    Ok(rows)
}

/// Unrestrained depths over `(t, q)` at fixed competitor state.
pub fn statics_time_surface<T: Real>(
    omega: &OmegaTable<T>,
    times: impl IntoIterator<Item = T>,
    q_tilde: i64,
    z: T,
) -> Result<Vec<StaticsRow>> {
    let p = omega.params();
    let mut rows = Vec::new();
    for t in times {
        for q in p.q_range() {
            rows.push(statics_row(omega, t, q, q_tilde, z)?);
        }
    }
    Ok(rows)
}

/// Per-path numbers the harness aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub objective: f64,
    pub fills_ask: u32,
    pub fills_bid: u32,
    pub generosity_event: bool,
}

impl<T: Real> From<&PathResult<T>> for PathSummary {
    fn from(r: &PathResult<T>) -> Self {
        Self {
            objective: r.objective.as_f64(),
            fills_ask: r.fills_ask,
            fills_bid: r.fills_bid,
            generosity_event: r.generosity_event,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyStats {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub mean_fills_ask: f64,
    pub mean_fills_bid: f64,
    pub generosity_events: usize,
    pub generosity_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub seed: u64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub confidence: f64,
    pub strategies: Vec<StrategyStats>,
    /// Test on `second - first`, path by path.
    pub paired: PairedTTest,
    /// `paired.mean_diff / |first mean|`.
    pub relative_difference: f64,
}

fn summarize(name: &str, col: &[PathSummary]) -> StrategyStats {
    let obj: Vec<f64> = col.iter().map(|s| s.objective).collect();
    let events = col.iter().filter(|s| s.generosity_event).count();
    StrategyStats {
        name: name.to_string(),
        mean: mean(&obj),
        sd: std_dev(&obj),
        mean_fills_ask: mean(&col.iter().map(|s| s.fills_ask as f64).collect::<Vec<_>>()),
        mean_fills_bid: mean(&col.iter().map(|s| s.fills_bid as f64).collect::<Vec<_>>()),
        generosity_events: events,
        generosity_rate: events as f64 / col.len() as f64,
    }
}

/// Run one strategy on `n_paths` seeded paths and aggregate.
pub fn simulate_strategy<T: Real, S: Strategy<T> + ?Sized>(
    params: &ModelParams<T>,
    name: &str,
    strategy: &S,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<StrategyStats> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument(
            "a simulation needs at least one path".into(),
        ));
    }
    let col: Vec<PathSummary> = (0..n_paths as u64)
        .into_par_iter()
        .map(|path| {
            run_path(params, strategy, n_steps, PathSeed::new(seed, path))
                .map(|r| PathSummary::from(&r))
        })
        .collect::<Result<_>>()?;
    Ok(summarize(name, &col))
}

/// Evaluate `eval(strategy_index, path_seed)` for every strategy on every path
/// and aggregate. Paths run in parallel; the report depends only on the inputs.
pub fn compare_with<F>(
    names: &[String],
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    confidence: f64,
    eval: F,
) -> Result<ComparisonReport>
where
    F: Fn(usize, PathSeed) -> Result<PathSummary> + Sync,
{
    if names.len() < 2 {
        return Err(Error::InvalidArgument(
            "a comparison needs at least two strategies".into(),
        ));
    }
    if n_paths < 2 {
        return Err(Error::InvalidArgument(format!(
            "a comparison needs at least two paths, got {n_paths}"
        )));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    let per_path: Vec<Vec<PathSummary>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|path| {
            let ps = PathSeed::new(seed, path);
            (0..names.len())
                .map(|k| eval(k, ps))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let column = |k: usize| -> Vec<PathSummary> { per_path.iter().map(|row| row[k]).collect() };
    let mut strategies = Vec::with_capacity(names.len());
    let mut objectives = Vec::with_capacity(names.len());
    for (k, name) in names.iter().enumerate() {
        let col = column(k);
        strategies.push(summarize(name, &col));
        objectives.push(col.iter().map(|s| s.objective).collect::<Vec<f64>>());
    }
    let paired = paired_t_test(&objectives[0], &objectives[1], confidence);
    let relative_difference = paired.mean_diff / strategies[0].mean.abs();
    Ok(ComparisonReport {
        seed,
        n_paths,
        n_steps,
        confidence,
        strategies,
        paired,
        relative_difference,
    })
}

/// Run every strategy on the same `n_paths` paths and test the first two against each other.
pub fn run_comparison<T: Real>(
    params: &ModelParams<T>,
    strategies: &[(&str, &dyn Strategy<T>)],
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    confidence: f64,
) -> Result<ComparisonReport> {
    let names: Vec<String> = strategies.iter().map(|(n, _)| n.to_string()).collect();
    compare_with(&names, n_paths, n_steps, seed, confidence, |k, ps| {
        run_path(params, strategies[k].1, n_steps, ps).map(|r| PathSummary::from(&r))
    })
}

/// Steps around the first truncation on a flagged path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlaggedWindow {
    pub path: u64,
    pub first_step: usize,
    /// Index of `records[0]` within the path.
    pub window_start: usize,
    pub records: Vec<StepRecord<f64>>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusReport {
    pub seed: u64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub events: usize,
    pub rate: f64,
    pub flagged_paths: Vec<u64>,
    pub windows: Vec<FlaggedWindow>,
}

fn record_to_f64<T: Real>(r: &StepRecord<T>) -> StepRecord<f64> {
    let pair = |d: crate::model::DepthPair<T>| crate::model::DepthPair {
        ask: d.ask.as_f64(),
        bid: d.bid.as_f64(),
        ask_posted: d.ask_posted,
        bid_posted: d.bid_posted,
    };
    StepRecord {
        t: r.t.as_f64(),
        s: r.s.as_f64(),
        z: r.z.as_f64(),
        q: r.q,
        q_tilde: r.q_tilde,
        x: r.x.as_f64(),
        quote: crate::model::PolicyDepths {
            depths: pair(r.quote.depths),
            ask_truncated: r.quote.ask_truncated,
            bid_truncated: r.quote.bid_truncated,
        },
        competitor: pair(r.competitor),
        buy_arrival: r.buy_arrival,
        sell_arrival: r.sell_arrival,
        ask_fill: r.ask_fill,
        bid_fill: r.bid_fill,
        competitor_ask_fill: r.competitor_ask_fill,
        competitor_bid_fill: r.competitor_bid_fill,
    }
}

/// Fraction of paths on which the strategy ever quoted at the competitor's
/// one-tick-better level. The first `max_windows` flagged paths are replayed
/// and their records kept for `margin` steps around the first event.
#[allow(clippy::too_many_arguments)]
pub fn generosity_census<T: Real, S: Strategy<T> + ?Sized>(
    params: &ModelParams<T>,
    strategy: &S,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    max_windows: usize,
    margin: usize,
) -> Result<CensusReport> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument(
            "census needs at least one path".into(),
        ));
    }
    let flags: Vec<bool> = (0..n_paths as u64)
        .into_par_iter()
        .map(|path| {
            run_path(params, strategy, n_steps, PathSeed::new(seed, path))
                .map(|r| r.generosity_event)
        })
        .collect::<Result<_>>()?;
    let flagged_paths: Vec<u64> = flags
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(i, _)| i as u64)
        .collect();
    let mut windows = Vec::new();
    for &path in flagged_paths.iter().take(max_windows) {
        let r = run_path_recorded(params, strategy, n_steps, PathSeed::new(seed, path))?;
        let first = r
            .first_generosity_step
            .expect("flagged path has a first event");
        let traj = r.trajectory.as_deref().unwrap_or(&[]);
        let start = first.saturating_sub(margin);
        let end = (first + margin + 1).min(traj.len());
        windows.push(FlaggedWindow {
            path,
            first_step: first,
            window_start: start,
            records: traj[start..end].iter().map(record_to_f64).collect(),
            objective: r.objective.as_f64(),
        });
    }
    let events = flagged_paths.len();
    Ok(CensusReport {
        seed,
        n_paths,
        n_steps,
        events,
        rate: events as f64 / n_paths as f64,
        flagged_paths,
        windows,
    })
}
