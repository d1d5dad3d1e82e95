//! Acceptance criteria 1-8. Runs as a plain binary (`harness = false`) and
//! prints one PASS/FAIL line per criterion; exits non-zero if any fails.

use std::time::Instant;

use pooled_mm::harness::{generosity_census, run_comparison};
use pooled_mm::hjb::{EulerOptions, HamiltonianMode};
use pooled_mm::sim::{run_path, run_path_recorded, MatchCompetitor, Strategy};
use pooled_mm::{
    expm, solve_backward_with, solve_omega, MarketEnv64, ModelParams64, PathSeed, SquareMatrix64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PATHS: usize = 10_000;
const STEPS: usize = 1_000;
const SEED: u64 = 7;
const N_TIME: usize = 1_000;
const EULER_STEPS: usize = 1_000_000;

struct Verdict {
    id: u32,
    pass: bool,
    detail: String,
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn euler_grid(p: &ModelParams64, n_steps: usize, mode: HamiltonianMode) -> pooled_mm::ValueGrid64 {
    let store_every = if n_steps.is_multiple_of(1000) {
        n_steps / 1000
    } else {
        1
    };
    solve_backward_with(
        p,
        EulerOptions {
            n_steps,
            mode,
            store_every,
        },
    )
    .expect("euler sweep")
}

/// Criteria 1 and 2 share one simulation under common random numbers.
fn performance() -> [Verdict; 2] {
    let p = ModelParams64::reference();
    let closed = solve_omega(&p, N_TIME).unwrap();
    let euler = euler_grid(&p, EULER_STEPS, HamiltonianMode::Truncated);
    let strategies: [(&str, &dyn Strategy<f64>); 2] = [("closed-form", &closed), ("euler", &euler)];
    let rep = run_comparison(&p, &strategies, PATHS, STEPS, SEED, 0.99).unwrap();
    let (c, e) = (&rep.strategies[0], &rep.strategies[1]);

    let c_mean_ok = within(c.mean, 3.64, 0.10);
    let c_sd_ok = within(c.sd, 2.57, 0.25);
    let e_mean_ok = within(e.mean, 3.66, 0.10);
    let diff_ok = rep.paired.mean_diff > 0.0;
    let p_ok = rep.paired.p_value < 0.01;
    [
        Verdict {
            id: 1,
            pass: c_mean_ok && c_sd_ok,
            detail: format!(
                "closed-form mean {:.4} (3.64 +- 0.10: {}), sd {:.4} (2.57 +- 0.25: {}); {PATHS} paths x {STEPS} steps, seed {SEED}",
                c.mean,
                ok(c_mean_ok),
                c.sd,
                ok(c_sd_ok)
            ),
        },
        Verdict {
            id: 2,
            pass: e_mean_ok && diff_ok && p_ok,
            detail: format!(
                "euler ({EULER_STEPS} steps) mean {:.4} (3.66 +- 0.10: {}), sd {:.4}; paired diff {:.3e} (> 0: {}), t {:.3}, p {:.3e} (< 0.01: {}), relative {:+.4}%",
                e.mean,
                ok(e_mean_ok),
                e.sd,
                rep.paired.mean_diff,
                ok(diff_ok),
                rep.paired.t_statistic,
                rep.paired.p_value,
                ok(p_ok),
                100.0 * rep.relative_difference
            ),
        },
    ]
}

fn census() -> Verdict {
    let p = ModelParams64::reference();
    let closed = solve_omega(&p, N_TIME).unwrap();
    let rep = generosity_census(&p, &closed, PATHS, STEPS, SEED, 0, 0).unwrap();
    Verdict {
        id: 3,
        pass: (0.0..=0.005).contains(&rep.rate),
        detail: format!(
            "{} of {} paths flagged, rate {:.4}% (interval [0%, 0.5%])",
            rep.events,
            rep.n_paths,
            100.0 * rep.rate
        ),
    }
}

/// Max |g_Euler - g_closed| over the stored Euler rows (which coincide with table nodes).
fn three_state_error(n_steps: usize) -> f64 {
    let p = pooled_mm_validation::three_state();
    let table = solve_omega(&p, 1000).unwrap();
    let grid = euler_grid(&p, n_steps, HamiltonianMode::Untruncated);
    assert_eq!(grid.time_grid().len(), 1001);
    let mut worst = 0.0f64;
    for i in 0..=1000 {
        for q in p.q_range() {
            let d = grid.g_at_node(i, q).unwrap() - table.g_at_node(i, q).unwrap();
            worst = worst.max(d.abs());
        }
    }
    worst
}

fn cross_solver() -> Verdict {
    let e1 = three_state_error(EULER_STEPS);
    let e2 = three_state_error(2 * EULER_STEPS);
    let ratio = e1 / e2;
    let err_ok = e1 <= 1e-4;
    let ratio_ok = (1.6..=2.4).contains(&ratio);
    Verdict {
        id: 4,
        pass: err_ok && ratio_ok,
        detail: format!(
            "3-state untruncated: max err {e1:.3e} at {EULER_STEPS} steps (<= 1e-4: {}), {e2:.3e} at {} steps, ratio {ratio:.3} (in [1.6, 2.4]: {})",
            ok(err_ok),
            2 * EULER_STEPS,
            ok(ratio_ok)
        ),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng) -> SquareMatrix64 {
    let n = rng.random_range(1..=41usize);
    let raw: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let m = SquareMatrix64::from_row_major(n, raw).unwrap();
    let target = rng.random_range(0.0..50.0);
    let norm = m.norm1();
    if norm == 0.0 {
        m
    } else {
        m.scaled(target / norm)
    }
}

fn random_params(rng: &mut ChaCha8Rng) -> ModelParams64 {
    let q_max = rng.random_range(1..=10i64);
    ModelParams64 {
        sigma: rng.random_range(0.1..3.0),
        lambda_a: rng.random_range(0.0..30.0),
        lambda_b: rng.random_range(0.0..30.0),
        kappa: rng.random_range(0.5..4.0),
        beta: rng.random_range(0.001..0.2),
        a_tilde: rng.random_range(0.01..0.5),
        b_tilde: rng.random_range(0.01..0.5),
        gamma: rng.random_range(0.0..0.2),
        phi: rng.random_range(0.0..0.5),
        sigma_z: rng.random_range(0.0..2.0),
        q_min: -q_max,
        q_max,
        horizon: rng.random_range(0.1..1.0),
        ..ModelParams64::reference()
    }
}

fn matrix_exponential() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_rel = 0.0f64;
    let mut worst_at = (0usize, 0.0f64);
    for k in 0..100 {
        let m = random_matrix(&mut rng);
        let n = m.dim();
        let fast = expm(&m).unwrap();
        let reference = pooled_mm_validation::taylor_expm(m.as_slice(), n);
        for (a, b) in fast.as_slice().iter().zip(&reference) {
            let rel = (a - b).abs() / b.abs();
            if rel > worst_rel {
                worst_rel = rel;
                worst_at = (k, *b);
            }
        }
    }
    let expm_ok = worst_rel <= 1e-10;

    let mut positive = 0;
    let mut failures = Vec::new();
    for k in 0..100 {
        let p = random_params(&mut rng);
        match solve_omega(&p, 200) {
            Ok(t) => {
                let all =
                    (0..=200).all(|i| t.omega_row(i).iter().all(|&w| w > 0.0 && w.is_finite()));
                if all {
                    positive += 1;
                } else {
                    failures.push(k);
                }
            }
            Err(_) => failures.push(k),
        }
    }
    let omega_ok = positive == 100;
    Verdict {
        id: 5,
        pass: expm_ok && omega_ok,
        detail: format!(
            "expm vs 60-term double-double Taylor on 100 matrices: worst elementwise relative {worst_rel:.3e} (matrix {}, entry {:.3e}) (<= 1e-10: {}); omega > 0 on {positive}/100 parameter sets{}",
            worst_at.0,
            worst_at.1,
            ok(expm_ok),
            if failures.is_empty() { String::new() } else { format!(" (failed: {failures:?})") }
        ),
    }
}

fn substitution() -> Verdict {
    let p = ModelParams64::reference();
    let n = 10_000;
    let table = solve_omega(&p, n).unwrap();
    let mut worst = 0.0f64;
    for i in 1..n {
        for q in p.q_range() {
            worst = worst.max(table.hjb_residual(i, q).unwrap().abs());
        }
    }
    Verdict {
        id: 6,
        pass: worst <= 1e-6,
        detail: format!(
            "max |residual| of (1/kappa) ln omega at n_time {n}: {worst:.3e} (<= 1e-6)"
        ),
    }
}

fn simulator_properties() -> Verdict {
    let p = ModelParams64::reference();
    let closed = solve_omega(&p, N_TIME).unwrap();
    let matcher = MatchCompetitor { params: p };
    let n_paths = 100u64;
    let mut problems: Vec<String> = Vec::new();
    let mut worst_telescope = 0.0f64;
    for path in 0..n_paths {
        let seed = PathSeed::new(SEED, path);
        let r = run_path_recorded(&p, &closed, STEPS, seed).unwrap();
        let traj = r.trajectory.as_ref().unwrap();

        if traj.iter().any(|s| s.q < p.q_min || s.q > p.q_max)
            || !(p.q_min..=p.q_max).contains(&r.final_state.q)
        {
            problems.push(format!("path {path}: inventory bound"));
        }

        let mut cash = 0.0;
        for s in traj {
            if s.ask_fill {
                cash += s.s + s.quote.depths.ask;
            }
            if s.bid_fill {
                cash -= s.s - s.quote.depths.bid;
            }
        }
        if cash != r.final_state.x {
            problems.push(format!("path {path}: cash {cash} vs {}", r.final_state.x));
        }

        let conserved = traj.iter().all(|s| {
            s.buy_arrival == (s.ask_fill ^ s.competitor_ask_fill)
                && s.sell_arrival == (s.bid_fill ^ s.competitor_bid_fill)
                && (s.buy_arrival || !(s.ask_fill || s.competitor_ask_fill))
                && (s.sell_arrival || !(s.bid_fill || s.competitor_bid_fill))
        });
        if !conserved {
            problems.push(format!("path {path}: flow conservation"));
        }

        let again = run_path_recorded(&p, &closed, STEPS, seed).unwrap();
        if again != r
            || run_path(&p, &closed, STEPS, seed)
                .unwrap()
                .objective
                .to_bits()
                != r.objective.to_bits()
        {
            problems.push(format!("path {path}: determinism"));
        }

        let (mut env, _) = MarketEnv64::reset(&p, seed, STEPS).unwrap();
        let mut total = 0.0;
        while !env.is_done() {
            let st = *env.state();
            let quote = closed.quote(st.t, st.q, st.q_tilde, st.z).unwrap();
            total += env.step_quote(quote).unwrap().reward;
        }
        worst_telescope = worst_telescope.max((total - r.objective).abs());

        let m = run_path_recorded(&p, &matcher, STEPS, seed).unwrap();
        let all_won = m.trajectory.unwrap().iter().all(|s| {
            (!s.buy_arrival || !s.quote.depths.ask_posted || s.ask_fill)
                && (!s.sell_arrival || !s.quote.depths.bid_posted || s.bid_fill)
        });
        if !all_won {
            problems.push(format!(
                "path {path}: competitor-matching quote lost an order"
            ));
        }
    }
    if worst_telescope > 1e-12 {
        problems.push(format!("reward telescoping error {worst_telescope:.3e}"));
    }
    Verdict {
        id: 7,
        pass: problems.is_empty(),
        detail: format!(
            "{n_paths} paths: bounds, exact cash, flow conservation, bit-exact replay, matched-quote fills; telescoping err {worst_telescope:.3e} (<= 1e-12){}",
            if problems.is_empty() { String::new() } else { format!("; problems: {problems:?}") }
        ),
    }
}

fn symmetry() -> Verdict {
    let p = ModelParams64::reference();
    let table = solve_omega(&p, N_TIME).unwrap();
    let mut worst_omega = 0.0f64;
    let mut worst_depth = 0.0f64;
    for (i, &t) in table.time_grid().iter().enumerate() {
        for q in p.q_range() {
            let d = table.omega_at_node(i, q).unwrap() - table.omega_at_node(i, -q).unwrap();
            worst_omega = worst_omega.max(d.abs());
            let here = table.hat_depths(t, q, 0, 0.0).unwrap();
            let mirror = table.hat_depths(t, -q, 0, 0.0).unwrap();
            assert_eq!(here.ask_posted, mirror.bid_posted);
            if here.ask_posted {
                worst_depth = worst_depth.max((here.ask - mirror.bid).abs());
            }
        }
    }
    Verdict {
        id: 8,
        pass: worst_omega <= 1e-12 && worst_depth <= 1e-12,
        detail: format!(
            "max |omega(t,q) - omega(t,-q)| {worst_omega:.3e}, max |ask(t,q) - bid(t,-q)| {worst_depth:.3e} (<= 1e-12)"
        ),
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "NO"
    }
}

fn main() {
    let mut verdicts = Vec::new();
    let mut timed = |f: &dyn Fn() -> Vec<Verdict>| {
        let start = Instant::now();
        let vs = f();
        let secs = start.elapsed().as_secs_f64();
        for v in vs {
            println!(
                "criterion {}: {} ({secs:.1}s) {}",
                v.id,
                if v.pass { "PASS" } else { "FAIL" },
                v.detail
            );
            verdicts.push(v);
        }
    };
    timed(&|| performance().into());
    timed(&|| vec![census()]);
    timed(&|| vec![cross_solver()]);
    timed(&|| vec![matrix_exponential()]);
    timed(&|| vec![substitution()]);
    timed(&|| vec![simulator_properties()]);
    timed(&|| vec![symmetry()]);

    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        verdicts.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" {failed:?}")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
