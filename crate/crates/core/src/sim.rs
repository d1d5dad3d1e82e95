//! Discrete-time simulator of the two-maker market.
//!
//! One step, in order:
//! 1. read the reference depths from the strategy and the competitor depths at
//!    the pre-step state;
//! 2. a buy order arrives with probability `lambda_a dt` and a sell order with
//!    probability `lambda_b dt` (independently; at most one per side);
//! 3. each arrival fills the reference maker with the fill probability (zero on
//!    a suppressed side), otherwise the competitor;
//! 4. the running penalty accrues on the post-fill inventory;
//! 5. price and noise diffuse;
//! 6. time advances.

use serde::{Deserialize, Serialize};

use crate::closed_form::OmegaTable;
use crate::error::{Error, Result};
use crate::hjb::ValueGrid;
use crate::model::{
    competitor_depths, fill_probability, running_value, terminal_value, DepthPair, ModelParams,
    PolicyDepths, SimState,
};
use crate::real::Real;
use crate::rng::{PathSeed, PathStreams, StepDraws};

/// A quoting rule `(t, q, q~, z) -> depths`.
pub trait Strategy<T: Real>: Sync {
    fn quote(&self, t: T, q: i64, q_tilde: i64, z: T) -> Result<PolicyDepths<T>>;
}

impl<T: Real> Strategy<T> for OmegaTable<T> {
    fn quote(&self, t: T, q: i64, q_tilde: i64, z: T) -> Result<PolicyDepths<T>> {
        self.truncated_depths(t, q, q_tilde, z)
    }
}

impl<T: Real> Strategy<T> for ValueGrid<T> {
    fn quote(&self, t: T, q: i64, q_tilde: i64, z: T) -> Result<PolicyDepths<T>> {
        self.policy(t, q, q_tilde, z)
    }
}

impl<T: Real, S: Strategy<T> + ?Sized> Strategy<T> for &S {
    fn quote(&self, t: T, q: i64, q_tilde: i64, z: T) -> Result<PolicyDepths<T>> {
        (**self).quote(t, q, q_tilde, z)
    }
}

/// Fixed depths on both sides (subject to the inventory bounds).
#[derive(Debug, Clone, Copy)]
pub struct ConstantDepths<T> {
    pub ask: T,
    pub bid: T,
    pub q_min: i64,
    pub q_max: i64,
}

impl<T: Real> ConstantDepths<T> {
    pub fn new(params: &ModelParams<T>, ask: T, bid: T) -> Self {
        Self {
            ask,
            bid,
            q_min: params.q_min,
            q_max: params.q_max,
        }
    }
}

impl<T: Real> Strategy<T> for ConstantDepths<T> {
    fn quote(&self, _t: T, q: i64, _q_tilde: i64, _z: T) -> Result<PolicyDepths<T>> {
        Ok(PolicyDepths::untruncated(DepthPair {
            ask: if q > self.q_min { self.ask } else { T::zero() },
            bid: if q < self.q_max { self.bid } else { T::zero() },
            ask_posted: q > self.q_min,
            bid_posted: q < self.q_max,
        }))
    }
}

/// Quote exactly at the competitor's one-tick-better level.
#[derive(Debug, Clone, Copy)]
pub struct MatchCompetitor<T> {
    pub params: ModelParams<T>,
}

impl<T: Real> Strategy<T> for MatchCompetitor<T> {
    fn quote(&self, _t: T, q: i64, q_tilde: i64, z: T) -> Result<PolicyDepths<T>> {
        Ok(PolicyDepths::untruncated(
            competitor_depths(&self.params, q_tilde, z).with_bounds(q, &self.params),
        ))
    }
}

/// Adapts a closure, e.g. an externally trained policy.
pub struct FnStrategy<F>(pub F);

impl<T: Real, F> Strategy<T> for FnStrategy<F>
where
    F: Fn(T, i64, i64, T) -> Result<PolicyDepths<T>> + Sync,
{
    fn quote(&self, t: T, q: i64, q_tilde: i64, z: T) -> Result<PolicyDepths<T>> {
        (self.0)(t, q, q_tilde, z)
    }
}

/// What happened during one step, with the pre-step state it acted on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord<T> {
    pub t: T,
    pub s: T,
    pub z: T,
    pub q: i64,
    pub q_tilde: i64,
    pub x: T,
    pub quote: PolicyDepths<T>,
    pub competitor: DepthPair<T>,
    pub buy_arrival: bool,
    pub sell_arrival: bool,
    /// Reference maker sold at its ask.
    pub ask_fill: bool,
    /// Reference maker bought at its bid.
    pub bid_fill: bool,
    pub competitor_ask_fill: bool,
    pub competitor_bid_fill: bool,
}

fn check_posting<T: Real>(params: &ModelParams<T>, q: i64, quote: &DepthPair<T>) -> Result<()> {
    if quote.ask_posted && q <= params.q_min {
        return Err(Error::SuppressedSide { side: "ask", q });
    }
    if quote.bid_posted && q >= params.q_max {
        return Err(Error::SuppressedSide { side: "bid", q });
    }
    Ok(())
}

/// Advance one step under externally supplied depths.
pub fn advance<T: Real>(
    params: &ModelParams<T>,
    state: &SimState<T>,
    quote: PolicyDepths<T>,
    dt: T,
    draws: &StepDraws<T>,
) -> Result<(SimState<T>, StepRecord<T>)> {
    if dt <= T::zero() || !dt.is_finite() {
        return Err(Error::InvalidStep(format!("dt must be positive, got {dt}")));
    }
    let slack = T::of(1e-9) * params.horizon;
    if state.t + dt > params.horizon + slack {
        return Err(Error::InvalidStep(format!(
            "step from t={} by {dt} passes the horizon",
            state.t
        )));
    }
    let mine = quote.depths;
    check_posting(params, state.q, &mine)?;
    let comp = competitor_depths(params, state.q_tilde, state.z);

    let mut next = *state;
    let buy_arrival = draws.buy_uniform < params.lambda_a * dt;
    let sell_arrival = draws.sell_uniform < params.lambda_b * dt;

    let mut ask_fill = false;
    let mut competitor_ask_fill = false;
    if buy_arrival {
        let p = if mine.ask_posted {
            fill_probability(params, mine.ask, comp.ask)
        } else {
            T::zero()
        };
        if draws.ask_fill_uniform < p {
            ask_fill = true;
            next.x += state.s + mine.ask;
            next.q -= 1;
        } else {
            competitor_ask_fill = true;
            next.q_tilde -= 1;
        }
    }
    let mut bid_fill = false;
    let mut competitor_bid_fill = false;
    if sell_arrival {
        let p = if mine.bid_posted {
            fill_probability(params, mine.bid, comp.bid)
        } else {
            T::zero()
        };
        if draws.bid_fill_uniform < p {
            bid_fill = true;
            next.x -= state.s - mine.bid;
            next.q += 1;
        } else {
            competitor_bid_fill = true;
            next.q_tilde += 1;
        }
    }

    let qf = T::of_int(next.q);
    next.running_penalty += params.phi * qf * qf * dt;
    let sqrt_dt = dt.sqrt();
    next.s += params.sigma * sqrt_dt * draws.price_normal;
    next.z += params.sigma_z * sqrt_dt * draws.noise_normal;
    next.t = state.t + dt;

    let record = StepRecord {
        t: state.t,
        s: state.s,
        z: state.z,
        q: state.q,
        q_tilde: state.q_tilde,
        x: state.x,
        quote,
        competitor: comp,
        buy_arrival,
        sell_arrival,
        ask_fill,
        bid_fill,
        competitor_ask_fill,
        competitor_bid_fill,
    };
    Ok((next, record))
}

/// Advance one step with depths read from `strategy`.
pub fn step<T: Real, S: Strategy<T> + ?Sized>(
    params: &ModelParams<T>,
    state: &SimState<T>,
    strategy: &S,
    dt: T,
    draws: &StepDraws<T>,
) -> Result<(SimState<T>, StepRecord<T>)> {
    let quote = strategy.quote(state.t, state.q, state.q_tilde, state.z)?;
    advance(params, state, quote, dt, draws)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult<T> {
    pub objective: T,
    pub fills_ask: u32,
    pub fills_bid: u32,
    pub comp_fills_ask: u32,
    pub comp_fills_bid: u32,
    pub buy_arrivals: u32,
    pub sell_arrivals: u32,
    /// Some step quoted at the competitor's level because the unrestrained
    /// optimum undercut it.
    pub generosity_event: bool,
    pub first_generosity_step: Option<usize>,
    pub final_state: SimState<T>,
    pub trajectory: Option<Vec<StepRecord<T>>>,
}

/// Simulate one path of `n_steps` uniform steps over `[0, T]`.
pub fn run_path<T: Real, S: Strategy<T> + ?Sized>(
    params: &ModelParams<T>,
    strategy: &S,
    n_steps: usize,
    seed: PathSeed,
) -> Result<PathResult<T>> {
    simulate(params, strategy, n_steps, seed, false)
}

/// As [`run_path`], keeping the per-step records.
pub fn run_path_recorded<T: Real, S: Strategy<T> + ?Sized>(
    params: &ModelParams<T>,
    strategy: &S,
    n_steps: usize,
    seed: PathSeed,
) -> Result<PathResult<T>> {
    simulate(params, strategy, n_steps, seed, true)
}

fn simulate<T: Real, S: Strategy<T> + ?Sized>(
    params: &ModelParams<T>,
    strategy: &S,
    n_steps: usize,
    seed: PathSeed,
    record: bool,
) -> Result<PathResult<T>> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    let dt = params.horizon / T::of(n_steps as f64);
    let mut streams = PathStreams::new(seed);
    let mut state = SimState::initial(params);
    let mut out = PathResult {
        objective: T::zero(),
        fills_ask: 0,
        fills_bid: 0,
        comp_fills_ask: 0,
        comp_fills_bid: 0,
        buy_arrivals: 0,
        sell_arrivals: 0,
        generosity_event: false,
        first_generosity_step: None,
        final_state: state,
        trajectory: record.then(|| Vec::with_capacity(n_steps)),
    };
    for k in 0..n_steps {
        let draws = streams.next_draws();
        let (next, rec) = step(params, &state, strategy, dt, &draws)?;
        out.fills_ask += rec.ask_fill as u32;
        out.fills_bid += rec.bid_fill as u32;
        out.comp_fills_ask += rec.competitor_ask_fill as u32;
        out.comp_fills_bid += rec.competitor_bid_fill as u32;
        out.buy_arrivals += rec.buy_arrival as u32;
        out.sell_arrivals += rec.sell_arrival as u32;
        if rec.quote.any_truncated() && !out.generosity_event {
            out.generosity_event = true;
            out.first_generosity_step = Some(k);
        }
        if let Some(traj) = out.trajectory.as_mut() {
            traj.push(rec);
        }
        state = next;
    }
    out.objective = terminal_value(params, &state);
    out.final_state = state;
    Ok(out)
}

/// Outcome of one [`MarketEnv::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvStep<T> {
    pub state: SimState<T>,
    /// Cash change plus change in the competitor-mid mark of the inventory,
    /// minus the running penalty accrued this step; the terminal inventory
    /// penalty is charged on the final step. Rewards sum to the objective.
    pub reward: T,
    pub done: bool,
    pub record: StepRecord<T>,
}

/// Reset/step environment driving the same dynamics with external depths.
#[derive(Debug, Clone)]
pub struct MarketEnv<T> {
    params: ModelParams<T>,
    n_steps: usize,
    dt: T,
    streams: PathStreams,
    state: SimState<T>,
    steps_taken: usize,
}

impl<T: Real> MarketEnv<T> {
    pub fn reset(
        params: &ModelParams<T>,
        seed: PathSeed,
        n_steps: usize,
    ) -> Result<(Self, SimState<T>)> {
        params.validate()?;
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
        }
        let state = SimState::initial(params);
        let env = Self {
            params: *params,
            n_steps,
            dt: params.horizon / T::of(n_steps as f64),
            streams: PathStreams::new(seed),
            state,
            steps_taken: 0,
        };
        Ok((env, state))
    }

    pub fn state(&self) -> &SimState<T> {
        &self.state
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    pub fn is_done(&self) -> bool {
        self.steps_taken >= self.n_steps
    }

    pub fn step(&mut self, action: DepthPair<T>) -> Result<EnvStep<T>> {
        self.step_quote(PolicyDepths::untruncated(action))
    }

    /// Like [`step`](Self::step) but keeps the strategy's truncation flags in the record.
    pub fn step_quote(&mut self, quote: PolicyDepths<T>) -> Result<EnvStep<T>> {
        if self.is_done() {
            return Err(Error::InvalidStep("episode already finished".into()));
        }
        check_posting(&self.params, self.state.q, &quote.depths)?;
        let draws = self.streams.next_draws();
        let (next, record) = advance(&self.params, &self.state, quote, self.dt, &draws)?;
        self.steps_taken += 1;
        let done = self.is_done();
        let before = running_value(&self.params, &self.state);
        let after = if done {
            terminal_value(&self.params, &next)
        } else {
            running_value(&self.params, &next)
        };
        self.state = next;
        Ok(EnvStep {
            state: next,
            reward: after - before,
            done,
            record,
        })
    }
}
