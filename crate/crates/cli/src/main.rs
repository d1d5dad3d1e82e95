mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use pooled_mm::config::{parse_config, RunConfig, StrategySpec};
use pooled_mm::harness::{
    generosity_census, run_comparison, simulate_strategy, statics_depth_surface,
    statics_time_surface,
};
use pooled_mm::hjb::HamiltonianMode;
use pooled_mm::sim::{ConstantDepths, MatchCompetitor};
use pooled_mm::{
    run_path_recorded, solve_backward_with, solve_omega, EulerOptions, OmegaTable64, PathSeed,
    Strategy, ValueGrid64,
};
use serde::Serialize;

use output::{Metadata, Sink};

/// Market making against a rule-of-thumb competitor: solvers, simulator and experiments.
#[derive(Parser, Debug)]
#[command(name = "pooled-mm", version, propagate_version = true)]
struct Cli {
    /// Configuration file (`key = value` lines); the bundled reference values are used when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Bound the number of worker threads.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tabulate omega, g and the unrestrained depths of the closed-form policy.
    SolveClosedForm(SolveClosedFormArgs),
    /// Solve the value equation by explicit Euler; writes the g grid and a convergence report.
    SolveEuler(SolveEulerArgs),
    /// Simulate one strategy and summarise its objective.
    Simulate(SimulateArgs),
    /// Depth surfaces over competitor inventory and over time.
    Statics(StaticsArgs),
    /// Paired comparison of strategies on common random numbers.
    Compare(CompareArgs),
    /// Count paths on which the strategy quoted at the competitor's level.
    Census(CensusArgs),
}

#[derive(Args, Debug)]
struct SolveClosedFormArgs {
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of time intervals in the table.
    #[arg(long)]
    n_time: Option<usize>,
    /// Competitor inventory used for the depth columns.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    q_tilde: i64,
    /// Noise level used for the depth columns.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    z: f64,
}

#[derive(Args, Debug)]
struct SolveEulerArgs {
    /// Output CSV with columns t, q, g (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Convergence report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Number of backward Euler steps.
    #[arg(long)]
    euler_steps: Option<usize>,
    /// Keep every k-th time row; defaults to roughly 1000 stored rows.
    #[arg(long)]
    store_every: Option<usize>,
    /// Integrate the untruncated Hamiltonian (the equation the closed form solves).
    #[arg(long)]
    untruncated: bool,
}

#[derive(Args, Debug, Clone)]
struct PathFlags {
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    run: PathFlags,
    /// closed-form | euler | match-competitor | constant:ASK:BID
    #[arg(long)]
    strategy: Option<String>,
    /// Write the first N full trajectories as CSV.
    #[arg(long, value_name = "N", default_value_t = 0)]
    record_trajectories: usize,
    /// Trajectory CSV path (defaults to trajectories.csv next to --out).
    #[arg(long)]
    trajectories_out: Option<PathBuf>,
    /// JSON summary (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StaticsArgs {
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Time of the competitor-inventory surface.
    #[arg(long, default_value_t = 0.5)]
    t: f64,
    #[arg(long, default_value_t = -5, allow_hyphen_values = true)]
    q_tilde_min: i64,
    #[arg(long, default_value_t = 5, allow_hyphen_values = true)]
    q_tilde_max: i64,
    /// Competitor inventory of the time surface.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    time_q_tilde: i64,
    /// Number of time intervals of the time surface.
    #[arg(long, default_value_t = 100)]
    times: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    z: f64,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    run: PathFlags,
    /// Comma-separated strategies; the paired test is on second minus first.
    #[arg(long, default_value = "closed-form,euler")]
    strategies: String,
    #[arg(long)]
    confidence: Option<f64>,
    /// JSON report (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CensusArgs {
    #[command(flatten)]
    run: PathFlags,
    #[arg(long)]
    strategy: Option<String>,
    /// Flagged paths replayed in full.
    #[arg(long, default_value_t = 3)]
    max_windows: usize,
    /// Steps kept on each side of the first event.
    #[arg(long, default_value_t = 50)]
    margin: usize,
    /// JSON report (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of the replayed windows.
    #[arg(long)]
    windows_out: Option<PathBuf>,
}

/// Bad input: reported with exit code 2.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

fn is_validation(e: &pooled_mm::Error) -> bool {
    use pooled_mm::Error::*;
    matches!(
        e,
        InvalidParam { .. }
            | AsymmetricInventoryBounds { .. }
            | Config(_)
            | InvalidArgument(_)
            | InvalidStep(_)
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let validation = e.downcast_ref::<Invalid>().is_some()
                || e.downcast_ref::<pooled_mm::Error>()
                    .is_some_and(is_validation);
            eprintln!("error: {e:#}");
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring thread pool")?;
    }
    let mut cfg = match &cli.config {
        Some(path) => parse_config(path)?,
        None => RunConfig::reference(),
    };
    match cli.command {
        Command::SolveClosedForm(a) => {
            if let Some(n) = a.n_time {
                cfg.run.n_time = n;
            }
            check_run(&cfg)?;
            solve_closed_form_cmd(&cfg, a)
        }
        Command::SolveEuler(a) => {
            if let Some(n) = a.euler_steps {
                cfg.run.euler_steps = n;
            }
            check_run(&cfg)?;
            solve_euler_cmd(&cfg, a)
        }
        Command::Simulate(a) => {
            apply_paths(&mut cfg, &a.run);
            if let Some(s) = &a.strategy {
                cfg.run.strategy = parse_strategy(s)?;
            }
            check_run(&cfg)?;
            simulate_cmd(&cfg, a)
        }
        Command::Statics(a) => {
            check_run(&cfg)?;
            statics_cmd(&cfg, a)
        }
        Command::Compare(a) => {
            apply_paths(&mut cfg, &a.run);
            if let Some(c) = a.confidence {
                cfg.run.confidence = c;
            }
            check_run(&cfg)?;
            compare_cmd(&cfg, a)
        }
        Command::Census(a) => {
            apply_paths(&mut cfg, &a.run);
            if let Some(s) = &a.strategy {
                cfg.run.strategy = parse_strategy(s)?;
            }
            check_run(&cfg)?;
            census_cmd(&cfg, a)
        }
    }
}

fn apply_paths(cfg: &mut RunConfig, f: &PathFlags) {
    if let Some(n) = f.paths {
        cfg.run.paths = n;
    }
    if let Some(n) = f.steps {
        cfg.run.steps = n;
    }
    if let Some(s) = f.seed {
        cfg.run.seed = s;
    }
}

fn parse_strategy(s: &str) -> Result<StrategySpec> {
    s.parse::<StrategySpec>().map_err(invalid)
}

/// Flag overrides bypass the config parser, so re-check the run block.
fn check_run(cfg: &RunConfig) -> Result<()> {
    let r = &cfg.run;
    let mut problems = Vec::new();
    if r.paths == 0 {
        problems.push("paths must be at least 1".to_string());
    }
    if r.steps == 0 {
        problems.push("steps must be at least 1".to_string());
    }
    if r.n_time == 0 {
        problems.push("n_time must be at least 1".to_string());
    }
    if r.euler_steps == 0 {
        problems.push("euler_steps must be at least 1".to_string());
    }
    if !(r.confidence > 0.0 && r.confidence < 1.0) {
        problems.push(format!(
            "confidence must lie in (0, 1), got {}",
            r.confidence
        ));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(pooled_mm::Error::Config(problems).into())
    }
}

/// Relative output paths land in `out_dir` when the config sets one.
fn resolve(cfg: &RunConfig, path: Option<&Path>) -> Result<Sink> {
    let Some(path) = path else {
        return Ok(Sink::Stdout);
    };
    let full = match &cfg.run.out_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    };
    if let Some(parent) = full.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            return Err(invalid(format!(
                "output directory {} does not exist",
                parent.display()
            )));
        }
    }
    Ok(Sink::File(full))
}

fn default_store_every(n_steps: usize) -> usize {
    let k = (n_steps / 1000).max(1);
    if n_steps.is_multiple_of(k) {
        k
    } else {
        1
    }
}

fn euler_grid(cfg: &RunConfig, mode: HamiltonianMode, store_every: usize) -> Result<ValueGrid64> {
    let opts = EulerOptions {
        n_steps: cfg.run.euler_steps,
        mode,
        store_every,
    };
    Ok(solve_backward_with(&cfg.params, opts)?)
}

enum Built {
    ClosedForm(OmegaTable64),
    Euler(ValueGrid64),
    Constant(ConstantDepths<f64>),
    Match(MatchCompetitor<f64>),
}

impl Built {
    fn strategy(&self) -> &dyn Strategy<f64> {
        match self {
            Built::ClosedForm(s) => s,
            Built::Euler(s) => s,
            Built::Constant(s) => s,
            Built::Match(s) => s,
        }
    }
}

fn build(cfg: &RunConfig, spec: StrategySpec) -> Result<Built> {
    Ok(match spec {
        StrategySpec::ClosedForm => Built::ClosedForm(solve_omega(&cfg.params, cfg.run.n_time)?),
        StrategySpec::Euler => Built::Euler(euler_grid(
            cfg,
            HamiltonianMode::Truncated,
            default_store_every(cfg.run.euler_steps),
        )?),
        StrategySpec::Constant { ask, bid } => {
            Built::Constant(ConstantDepths::new(&cfg.params, ask, bid))
        }
        StrategySpec::MatchCompetitor => Built::Match(MatchCompetitor { params: cfg.params }),
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn solve_closed_form_cmd(cfg: &RunConfig, a: SolveClosedFormArgs) -> Result<()> {
    let table = solve_omega(&cfg.params, cfg.run.n_time)?;
    let meta = Metadata::new("solve-closed-form", cfg);
    let mut rows = Vec::new();
    for (i, &t) in table.time_grid().iter().enumerate() {
        for q in cfg.params.q_range() {
            let hat = table.hat_depths(t, q, a.q_tilde, a.z)?;
            rows.push(format!(
                "{t},{q},{},{},{},{}",
                table.omega_at_node(i, q)?,
                table.g_at_node(i, q)?,
                fmt_opt(hat.ask_posted.then_some(hat.ask)),
                fmt_opt(hat.bid_posted.then_some(hat.bid)),
            ));
        }
    }
    let extra = [("q_tilde", a.q_tilde.to_string()), ("z", a.z.to_string())];
    resolve(cfg, a.out.as_deref())?.write_csv(
        &meta,
        &extra,
        "t,q,omega,g,delta_hat_a,delta_hat_b",
        &rows,
    )
}

#[derive(Serialize)]
struct ResolutionCheck {
    n_steps: usize,
    max_abs_diff: f64,
}

#[derive(Serialize)]
struct NodeValue {
    q: i64,
    g: f64,
}

#[derive(Serialize)]
struct ConvergenceReport {
    n_steps: usize,
    mode: HamiltonianMode,
    store_every: usize,
    capped_evaluations: u64,
    g_at_start: Vec<NodeValue>,
    /// Against the same sweep at half the steps, on the coarse grid's stored times.
    half_resolution: Option<ResolutionCheck>,
    /// Against `(1/kappa) ln omega`, on the stored times.
    closed_form: Option<ResolutionCheck>,
}

fn max_diff_on_times(
    fine: &ValueGrid64,
    times: &[f64],
    other: impl Fn(f64, i64) -> pooled_mm::Result<f64>,
) -> Result<f64> {
    let p = fine.params();
    let mut worst = 0.0f64;
    for &t in times {
        for q in p.q_range() {
            worst = worst.max((fine.g(t, q)? - other(t, q)?).abs());
        }
    }
    Ok(worst)
}

fn solve_euler_cmd(cfg: &RunConfig, a: SolveEulerArgs) -> Result<()> {
    let mode = if a.untruncated {
        HamiltonianMode::Untruncated
    } else {
        HamiltonianMode::Truncated
    };
    let n = cfg.run.euler_steps;
    let store_every = a.store_every.unwrap_or_else(|| default_store_every(n));
    let grid = euler_grid(cfg, mode, store_every)?;
    let meta = Metadata::new("solve-euler", cfg);

    let mut rows = Vec::new();
    for (i, &t) in grid.time_grid().iter().enumerate() {
        for (q, g) in cfg.params.q_range().zip(grid.row(i)) {
            rows.push(format!("{t},{q},{g}"));
        }
    }
    let extra = [
        ("mode", format!("{mode:?}")),
        ("euler_steps", n.to_string()),
    ];
    resolve(cfg, a.out.as_deref())?.write_csv(&meta, &extra, "t,q,g", &rows)?;

    if let Some(path) = a.report.as_deref() {
        let half_resolution = if n >= 2 && n.is_multiple_of(2) {
            let half_store = default_store_every(n / 2);
            let mut half = cfg.clone();
            half.run.euler_steps = n / 2;
            let coarse = euler_grid(&half, mode, half_store)?;
            let max_abs_diff = max_diff_on_times(&grid, coarse.time_grid(), |t, q| coarse.g(t, q))?;
            Some(ResolutionCheck {
                n_steps: n / 2,
                max_abs_diff,
            })
        } else {
            None
        };
        let closed_form = match solve_omega(&cfg.params, cfg.run.n_time) {
            Ok(table) => {
                let max_abs_diff =
                    max_diff_on_times(&grid, grid.time_grid(), |t, q| table.g(t, q))?;
                Some(ResolutionCheck {
                    n_steps: cfg.run.n_time,
                    max_abs_diff,
                })
            }
            Err(pooled_mm::Error::AsymmetricInventoryBounds { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let report = ConvergenceReport {
            n_steps: n,
            mode,
            store_every,
            capped_evaluations: grid.capped_evaluations(),
            g_at_start: cfg
                .params
                .q_range()
                .zip(grid.row(0))
                .map(|(q, &g)| NodeValue { q, g })
                .collect(),
            half_resolution,
            closed_form,
        };
        resolve(cfg, Some(path))?.write_json(&meta, &report)?;
    }
    Ok(())
}

fn simulate_cmd(cfg: &RunConfig, a: SimulateArgs) -> Result<()> {
    let r = &cfg.run;
    let built = build(cfg, r.strategy)?;
    let strategy = built.strategy();
    let name = r.strategy.to_string();
    let stats = simulate_strategy(&cfg.params, &name, strategy, r.paths, r.steps, r.seed)?;
    let meta = Metadata::new("simulate", cfg);

    #[derive(Serialize)]
    struct Summary<'a> {
        strategy: &'a str,
        n_paths: usize,
        n_steps: usize,
        stats: &'a pooled_mm::harness::StrategyStats,
    }
    let summary = Summary {
        strategy: &name,
        n_paths: r.paths,
        n_steps: r.steps,
        stats: &stats,
    };
    resolve(cfg, a.out.as_deref())?.write_json(&meta, &summary)?;

    if a.record_trajectories > 0 {
        let traj_path = match (&a.trajectories_out, &a.out) {
            (Some(p), _) => p.clone(),
            (None, Some(out)) => out.with_file_name("trajectories.csv"),
            (None, None) => {
                return Err(invalid(
                    "--record-trajectories needs --trajectories-out or --out",
                ))
            }
        };
        let mut rows = Vec::new();
        for path in 0..a.record_trajectories.min(r.paths) as u64 {
            let res =
                run_path_recorded(&cfg.params, strategy, r.steps, PathSeed::new(r.seed, path))?;
            for (k, rec) in res.trajectory.unwrap_or_default().iter().enumerate() {
                rows.push(output::record_row(path, k, rec));
            }
        }
        resolve(cfg, Some(&traj_path))?.write_csv(&meta, &[], output::RECORD_HEADER, &rows)?;
    }
    Ok(())
}

fn statics_cmd(cfg: &RunConfig, a: StaticsArgs) -> Result<()> {
    if a.q_tilde_min > a.q_tilde_max {
        return Err(invalid("--q-tilde-min exceeds --q-tilde-max"));
    }
    if a.times == 0 {
        return Err(invalid("--times must be at least 1"));
    }
    let horizon = cfg.params.horizon;
    if !(0.0..=horizon).contains(&a.t) {
        return Err(invalid(format!("--t must lie in [0, {horizon}]")));
    }
    let table = solve_omega(&cfg.params, cfg.run.n_time)?;
    let depth = statics_depth_surface(&table, a.t, a.q_tilde_min..=a.q_tilde_max, a.z)?;
    let times: Vec<f64> = (0..=a.times)
        .map(|i| horizon * i as f64 / a.times as f64)
        .collect();
    let time = statics_time_surface(&table, times, a.time_q_tilde, a.z)?;
    let row = |surface: &str, r: &pooled_mm::harness::StaticsRow| {
        format!(
            "{surface},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.q_tilde,
            r.q,
            fmt_opt(r.delta_hat_a),
            fmt_opt(r.delta_hat_b),
            r.competitor_a,
            r.competitor_b,
            r.ask_truncated,
            r.bid_truncated
        )
    };
    let mut rows: Vec<String> = depth.iter().map(|r| row("depth", r)).collect();
    rows.extend(time.iter().map(|r| row("time", r)));
    let meta = Metadata::new("statics", cfg);
    let extra = [("z", a.z.to_string())];
    resolve(cfg, a.out.as_deref())?.write_csv(
        &meta,
        &extra,
        "surface,t,q_tilde,q,delta_hat_a,delta_hat_b,competitor_a,competitor_b,ask_truncated,bid_truncated",
        &rows,
    )
}

fn compare_cmd(cfg: &RunConfig, a: CompareArgs) -> Result<()> {
    let specs: Vec<StrategySpec> = a
        .strategies
        .split(',')
        .map(parse_strategy)
        .collect::<Result<_>>()?;
    if specs.len() < 2 {
        return Err(invalid("--strategies needs at least two entries"));
    }
    let built: Vec<Built> = specs
        .iter()
        .map(|s| build(cfg, *s))
        .collect::<Result<_>>()?;
    let names: Vec<String> = specs.iter().map(|s| s.to_string()).collect();
    let pairs: Vec<(&str, &dyn Strategy<f64>)> = names
        .iter()
        .zip(&built)
        .map(|(n, b)| (n.as_str(), b.strategy()))
        .collect();
    let r = &cfg.run;
    let report = run_comparison(&cfg.params, &pairs, r.paths, r.steps, r.seed, r.confidence)?;
    for s in &report.strategies {
        eprintln!(
            "{:>20}: mean {:.4} sd {:.4} generosity {:.4}%",
            s.name,
            s.mean,
            s.sd,
            100.0 * s.generosity_rate
        );
    }
    eprintln!(
        "paired difference {:.6} (t = {:.3}, p = {:.3e})",
        report.paired.mean_diff, report.paired.t_statistic, report.paired.p_value
    );
    resolve(cfg, a.out.as_deref())?.write_json(&Metadata::new("compare", cfg), &report)
}

fn census_cmd(cfg: &RunConfig, a: CensusArgs) -> Result<()> {
    let r = &cfg.run;
    let built = build(cfg, r.strategy)?;
    let report = generosity_census(
        &cfg.params,
        built.strategy(),
        r.paths,
        r.steps,
        r.seed,
        a.max_windows,
        a.margin,
    )?;
    eprintln!(
        "{} of {} paths flagged ({:.4}%)",
        report.events,
        report.n_paths,
        100.0 * report.rate
    );
    let meta = Metadata::new("census", cfg);
    resolve(cfg, a.out.as_deref())?.write_json(&meta, &report)?;
    if let Some(path) = a.windows_out.as_deref() {
        let mut rows = Vec::new();
        for w in &report.windows {
            for (k, rec) in w.records.iter().enumerate() {
                rows.push(output::record_row(w.path, w.window_start + k, rec));
            }
        }
        resolve(cfg, Some(path))?.write_csv(&meta, &[], output::RECORD_HEADER, &rows)?;
    }
    Ok(())
}
