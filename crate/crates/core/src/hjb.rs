//! Explicit backward Euler sweep for the exact (truncated) `g` equation on the
//! `(t, q)` grid.
//!
//! Each side contributes `sup_c lambda min(exp(-kappa (c - chi)), 1) (c + dg)`
//! with `chi = a~ - beta/2` (resp. `b~ - beta/2`) and `dg = g(q -/+ 1) - g(q)`.
//! The supremum is the exponential interior optimum when `1/kappa - dg >= chi`
//! and the kink value `lambda (chi + dg)` otherwise.

use serde::{Deserialize, Serialize};

use crate::closed_form::{
    ask_coupling, bid_coupling, grid_position, hat_from_g, inventory_drift, terminal_g,
};
use crate::error::{Error, Result};
use crate::model::{competitor_depths, ModelParams, PolicyDepths};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Ask,
    Bid,
}

/// Which Hamiltonian the sweep integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum HamiltonianMode {
    /// The true problem: optimiser capped at the competitor's level.
    #[default]
    Truncated,
    /// Always the exponential branch; this is the equation the closed form solves.
    Untruncated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerOptions {
    pub n_steps: usize,
    pub mode: HamiltonianMode,
    /// Keep every `store_every`-th time row (the terminal and initial rows are
    /// always kept); `n_steps` must be a multiple of it.
    pub store_every: usize,
}

pub const DEFAULT_EULER_STEPS: usize = 100_000;

impl Default for EulerOptions {
    fn default() -> Self {
        Self {
            n_steps: DEFAULT_EULER_STEPS,
            mode: HamiltonianMode::Truncated,
            store_every: 1,
        }
    }
}

fn side_terms<T: Real>(p: &ModelParams<T>, side: Side) -> (T, T, T) {
    let half_beta = p.beta / T::of(2.0);
    match side {
        Side::Ask => (p.lambda_a, p.a_tilde - half_beta, ask_coupling(p)),
        Side::Bid => (p.lambda_b, p.b_tilde - half_beta, bid_coupling(p)),
    }
}

/// Value of one side's supremum and whether the capped branch was taken.
pub fn hamiltonian_side_branch<T: Real>(
    p: &ModelParams<T>,
    side: Side,
    delta_g: T,
    mode: HamiltonianMode,
) -> (T, bool) {
    let (lambda, chi, coupling) = side_terms(p, side);
    let c_hat = T::one() / p.kappa - delta_g;
    if mode == HamiltonianMode::Truncated && c_hat < chi {
        (lambda * (chi + delta_g), true)
    } else {
        (coupling / p.kappa * (p.kappa * delta_g).exp(), false)
    }
}

/// One side's contribution to the truncated Hamiltonian.
pub fn hamiltonian_side<T: Real>(p: &ModelParams<T>, side: Side, delta_g: T) -> T {
    hamiltonian_side_branch(p, side, delta_g, HamiltonianMode::Truncated).0
}

/// `g(t, q)` on a uniform time grid.
#[derive(Debug, Clone)]
pub struct ValueGrid<T> {
    params: ModelParams<T>,
    mode: HamiltonianMode,
    n_steps: usize,
    store_every: usize,
    time_grid: Vec<T>,
    /// `g[row][q - q_min]`, row 0 at `t = 0`.
    g: Vec<Vec<T>>,
    capped_evaluations: u64,
}

/// Full-resolution truncated sweep.
pub fn solve_backward<T: Real>(params: &ModelParams<T>, n_steps: usize) -> Result<ValueGrid<T>> {
    solve_backward_with(
        params,
        EulerOptions {
            n_steps,
            ..EulerOptions::default()
        },
    )
}

pub fn solve_backward_with<T: Real>(
    params: &ModelParams<T>,
    opts: EulerOptions,
) -> Result<ValueGrid<T>> {
    params.validate()?;
    let EulerOptions {
        n_steps,
        mode,
        store_every,
    } = opts;
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    if store_every == 0 || n_steps % store_every != 0 {
        return Err(Error::InvalidArgument(format!(
            "store_every ({store_every}) must divide n_steps ({n_steps})"
        )));
    }
    let p = params;
    let nq = p.n_inventory();
    let dt = p.horizon / T::of(n_steps as f64);
    let drift: Vec<T> = p.q_range().map(|q| inventory_drift(p, q)).collect();

    let mut cur: Vec<T> = p.q_range().map(|q| terminal_g(p, q)).collect();
    let mut next = vec![T::zero(); nq];
    let n_rows = n_steps / store_every;
    let mut rows = Vec::with_capacity(n_rows + 1);
    rows.push(cur.clone());
    let mut capped = 0u64;

    for k in (0..n_steps).rev() {
        for j in 0..nq {
            let mut rhs = drift[j];
            if j > 0 {
                let (h, c) = hamiltonian_side_branch(p, Side::Ask, cur[j - 1] - cur[j], mode);
                rhs += h;
                capped += c as u64;
            }
            if j + 1 < nq {
                let (h, c) = hamiltonian_side_branch(p, Side::Bid, cur[j + 1] - cur[j], mode);
                rhs += h;
                capped += c as u64;
            }
            next[j] = cur[j] + dt * rhs;
        }
        if next.iter().any(|x| !x.is_finite()) {
            let t = p.horizon.as_f64() * k as f64 / n_steps as f64;
            return Err(Error::BlowUp {
                step: n_steps - k,
                t,
            });
        }
        std::mem::swap(&mut cur, &mut next);
        if k % store_every == 0 {
            rows.push(cur.clone());
        }
    }
    rows.reverse();
    let time_grid = (0..=n_rows)
        .map(|i| {
            if i == n_rows {
                p.horizon
            } else {
                p.horizon * T::of(i as f64 / n_rows as f64)
            }
        })
        .collect();
    Ok(ValueGrid {
        params: *p,
        mode,
        n_steps,
        store_every,
        time_grid,
        g: rows,
        capped_evaluations: capped,
    })
}

impl<T: Real> ValueGrid<T> {
    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn mode(&self) -> HamiltonianMode {
        self.mode
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn store_every(&self) -> usize {
        self.store_every
    }

    /// Times of the stored rows.
    pub fn time_grid(&self) -> &[T] {
        &self.time_grid
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.g[i]
    }

    /// How many side evaluations during the sweep landed on the capped branch.
    pub fn capped_evaluations(&self) -> u64 {
        self.capped_evaluations
    }

    pub fn g_at_node(&self, i: usize, q: i64) -> Result<T> {
        Ok(self.g[i][self.params.q_index(q)?])
    }

    /// `g(t, q)`, linear in time between stored rows.
    pub fn g(&self, t: T, q: i64) -> Result<T> {
        let j = self.params.q_index(q)?;
        let (i, w) = grid_position(t, self.params.horizon, self.time_grid.len() - 1);
        if w == T::zero() {
            return Ok(self.g[i][j]);
        }
        Ok(self.g[i][j] * (T::one() - w) + self.g[i + 1][j] * w)
    }

    /// Optimal depths from the Euler surface, lifted to the competitor's level.
    pub fn policy(&self, t: T, q: i64, q_tilde: i64, z: T) -> Result<PolicyDepths<T>> {
        let p = &self.params;
        let here = self.g(t, q)?;
        let below = if q > p.q_min {
            Some(self.g(t, q - 1)?)
        } else {
            None
        };
        let above = if q < p.q_max {
            Some(self.g(t, q + 1)?)
        } else {
            None
        };
        let hat = hat_from_g(p, q, q_tilde, z, here, below, above);
        Ok(PolicyDepths::truncate(
            hat,
            competitor_depths(p, q_tilde, z),
        ))
    }
}

/// Depths from an Euler value grid; free-function form of [`ValueGrid::policy`].
pub fn euler_policy<T: Real>(
    grid: &ValueGrid<T>,
    t: T,
    q: i64,
    q_tilde: i64,
    z: T,
) -> Result<PolicyDepths<T>> {
    grid.policy(t, q, q_tilde, z)
}
