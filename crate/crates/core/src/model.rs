//! Market constants, the competitor's linear quoting rule, the fill law and
//! the per-path objective.
//!
//! Competitor base levels `a_tilde`/`b_tilde` are stored with the tick already
//! folded in, so the depths returned by [`competitor_depths`] are the levels
//! one tick more generous than the competitor's actual quotes. `tick` is kept
//! only for reporting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub sigma: T,
    pub lambda_a: T,
    pub lambda_b: T,
    pub kappa: T,
    pub beta: T,
    pub a_tilde: T,
    pub b_tilde: T,
    pub gamma: T,
    pub phi: T,
    pub sigma_z: T,
    pub q_min: i64,
    pub q_max: i64,
    pub horizon: T,
    pub s0: T,
    pub tick: T,
}

/// Noise volatility used by the bundled reference configuration; chosen so
/// the closed-form objective has a standard deviation near 2.57.
pub const REFERENCE_SIGMA_Z: f64 = 1.1;

impl<T: Real> ModelParams<T> {
    /// The reference parameter set: S0 = 100, sigma = 1, T = 1, lambda = 10,
    /// inventory in [-10, 10], a~ = b~ = 0.1 (tick absorbed), beta = 0.05,
    /// kappa = 2, tick = 0.01, phi = 0.1, gamma = 0.03.
    pub fn reference() -> Self {
        Self {
            sigma: T::one(),
            lambda_a: T::of(10.0),
            lambda_b: T::of(10.0),
            kappa: T::of(2.0),
            beta: T::of(0.05),
            a_tilde: T::of(0.1),
            b_tilde: T::of(0.1),
            gamma: T::of(0.03),
            phi: T::of(0.1),
            sigma_z: T::of(REFERENCE_SIGMA_Z),
            q_min: -10,
            q_max: 10,
            horizon: T::one(),
            s0: T::of(100.0),
            tick: T::of(0.01),
        }
    }

    /// Every constraint violation, in field order.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut check = |key: &'static str, v: T, strict: bool| {
            let ok = v.is_finite()
                && if strict {
                    v > T::zero()
                } else {
                    v >= T::zero()
                };
            if !ok {
                let rel = if strict { "> 0" } else { ">= 0" };
                out.push((key, format!("must be finite and {rel}, got {v}")));
            }
        };
        check("sigma", self.sigma, true);
        check("lambda_a", self.lambda_a, false);
        check("lambda_b", self.lambda_b, false);
        check("kappa", self.kappa, true);
        check("beta", self.beta, true);
        check("a_tilde", self.a_tilde, true);
        check("b_tilde", self.b_tilde, true);
        check("gamma", self.gamma, false);
        check("phi", self.phi, false);
        check("sigma_z", self.sigma_z, false);
        check("horizon", self.horizon, true);
        check("tick", self.tick, false);
        if !self.s0.is_finite() {
            out.push(("s0", format!("must be finite, got {}", self.s0)));
        }
        if self.q_min >= 0 {
            out.push(("q_min", format!("must be < 0, got {}", self.q_min)));
        }
        if self.q_max <= 0 {
            out.push(("q_max", format!("must be > 0, got {}", self.q_max)));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((key, reason)) => Err(Error::InvalidParam { key, reason }),
        }
    }

    /// Number of admissible inventory levels.
    pub fn n_inventory(&self) -> usize {
        (self.q_max - self.q_min + 1) as usize
    }

    /// Position of inventory `q` in a `q_min..=q_max` indexed vector.
    pub fn q_index(&self, q: i64) -> Result<usize> {
        if q < self.q_min || q > self.q_max {
            return Err(Error::InventoryOutOfRange {
                q,
                q_min: self.q_min,
                q_max: self.q_max,
            });
        }
        Ok((q - self.q_min) as usize)
    }

    pub fn q_range(&self) -> std::ops::RangeInclusive<i64> {
        self.q_min..=self.q_max
    }

    pub fn convert<U: Real>(&self) -> ModelParams<U> {
        let c = |x: T| U::of(x.as_f64());
        ModelParams {
            sigma: c(self.sigma),
            lambda_a: c(self.lambda_a),
            lambda_b: c(self.lambda_b),
            kappa: c(self.kappa),
            beta: c(self.beta),
            a_tilde: c(self.a_tilde),
            b_tilde: c(self.b_tilde),
            gamma: c(self.gamma),
            phi: c(self.phi),
            sigma_z: c(self.sigma_z),
            q_min: self.q_min,
            q_max: self.q_max,
            horizon: c(self.horizon),
            s0: c(self.s0),
            tick: c(self.tick),
        }
    }
}

/// One market snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState<T> {
    pub t: T,
    /// Unaffected price.
    pub s: T,
    /// Cash.
    pub x: T,
    /// Reference inventory, always within `[q_min, q_max]`.
    pub q: i64,
    /// Competitor inventory (unbounded).
    pub q_tilde: i64,
    /// Competitor quote noise.
    pub z: T,
    /// Accumulated `phi * int Q^2 dt`.
    pub running_penalty: T,
}

impl<T: Real> SimState<T> {
    pub fn initial(params: &ModelParams<T>) -> Self {
        Self {
            t: T::zero(),
            s: params.s0,
            x: T::zero(),
            q: 0,
            q_tilde: 0,
            z: T::zero(),
            running_penalty: T::zero(),
        }
    }
}

/// Ask and bid depths plus whether each side is actually on the book.
///
/// A side that is not posted carries a depth of zero, which is never read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthPair<T> {
    pub ask: T,
    pub bid: T,
    pub ask_posted: bool,
    pub bid_posted: bool,
}

impl<T: Real> DepthPair<T> {
    pub fn both(ask: T, bid: T) -> Self {
        Self {
            ask,
            bid,
            ask_posted: true,
            bid_posted: true,
        }
    }

    /// Apply the inventory-bound convention: no ask at `q_min`, no bid at `q_max`.
    pub fn with_bounds(mut self, q: i64, params: &ModelParams<T>) -> Self {
        if q <= params.q_min {
            self.ask_posted = false;
            self.ask = T::zero();
        }
        if q >= params.q_max {
            self.bid_posted = false;
            self.bid = T::zero();
        }
        self
    }
}

/// Depths a strategy posts, with per-side flags marking where the
/// unrestrained optimum undercut the competitor and was lifted to its level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyDepths<T> {
    pub depths: DepthPair<T>,
    pub ask_truncated: bool,
    pub bid_truncated: bool,
}

impl<T: Real> PolicyDepths<T> {
    pub fn untruncated(depths: DepthPair<T>) -> Self {
        Self {
            depths,
            ask_truncated: false,
            bid_truncated: false,
        }
    }

    pub fn any_truncated(&self) -> bool {
        self.ask_truncated || self.bid_truncated
    }

    /// `max(hat, competitor)` on each posted side.
    pub fn truncate(hat: DepthPair<T>, competitor: DepthPair<T>) -> Self {
        let mut depths = hat;
        let ask_truncated = hat.ask_posted && hat.ask < competitor.ask;
        let bid_truncated = hat.bid_posted && hat.bid < competitor.bid;
        if ask_truncated {
            depths.ask = competitor.ask;
        }
        if bid_truncated {
            depths.bid = competitor.bid;
        }
        Self {
            depths,
            ask_truncated,
            bid_truncated,
        }
    }
}

/// Competitor depths one tick more generous than the competitor quotes:
/// `a~ - beta q~ - z` on the ask, `b~ + beta q~ + z` on the bid.
pub fn competitor_depths<T: Real>(params: &ModelParams<T>, q_tilde: i64, z: T) -> DepthPair<T> {
    let shift = params.beta * T::of_int(q_tilde) + z;
    DepthPair::both(params.a_tilde - shift, params.b_tilde + shift)
}

/// `min(exp(-kappa (mine - competitor)), 1)`.
pub fn fill_probability<T: Real>(params: &ModelParams<T>, my_depth: T, competitor_depth: T) -> T {
    let gap = my_depth - competitor_depth;
    if gap <= T::zero() {
        T::one()
    } else {
        (-params.kappa * gap).exp()
    }
}

/// Value of holding `state.q` marked at the competitor's midprice.
pub fn inventory_mark<T: Real>(params: &ModelParams<T>, state: &SimState<T>) -> T {
    let half_skew = (params.a_tilde - params.b_tilde) / T::of(2.0);
    let mid = state.s + half_skew - params.beta * T::of_int(state.q_tilde) - state.z;
    T::of_int(state.q) * mid
}

/// Cash plus mark minus the running penalty accrued so far.
pub(crate) fn running_value<T: Real>(params: &ModelParams<T>, state: &SimState<T>) -> T {
    state.x + inventory_mark(params, state) - state.running_penalty
}

/// Realized objective of a path at the horizon:
/// `x + q (s + (a~-b~)/2 - beta q~ - z) - gamma q^2 - running_penalty`.
pub fn terminal_value<T: Real>(params: &ModelParams<T>, state: &SimState<T>) -> T {
    let q = T::of_int(state.q);
    running_value(params, state) - params.gamma * q * q
}
