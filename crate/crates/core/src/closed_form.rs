//! Approximate closed-form quoting policy.
//!
//! Assuming the unrestrained optimal depths never undercut the competitor,
//! the value-function correction `g(t, q)` satisfies an HJB equation that the
//! substitution `omega = exp(kappa g)` turns into the linear system
//! `d omega / dt = -A omega`, `omega(T) = v`. Hence `omega(t) = exp(A (T - t)) v`
//! with `A` tridiagonal and Metzler, so `omega > 0` everywhere.
//!
//! Orientation of `A`: row `q` couples to `omega(q - 1)` through the ask-side
//! rate and to `omega(q + 1)` through the bid-side rate, which is what the ODE
//! for `omega(t, q)` requires.

use crate::error::{Error, Result};
use crate::expm::{SquareMatrix, UniformPropagator};
use crate::model::{competitor_depths, DepthPair, ModelParams, PolicyDepths};
use crate::real::Real;

/// Rate at which an unrestrained ask quote gets hit, net of the optimal
/// exponential discount: `lambda_a exp(-1 - kappa (beta/2 - a~))`.
pub fn ask_coupling<T: Real>(p: &ModelParams<T>) -> T {
    p.lambda_a * (-T::one() - p.kappa * (p.beta / T::of(2.0) - p.a_tilde)).exp()
}

pub fn bid_coupling<T: Real>(p: &ModelParams<T>) -> T {
    p.lambda_b * (-T::one() - p.kappa * (p.beta / T::of(2.0) - p.b_tilde)).exp()
}

/// Terminal condition `g(T, q) = (a~ - b~)/2 q - (gamma - beta/2) q^2`.
pub fn terminal_g<T: Real>(p: &ModelParams<T>, q: i64) -> T {
    let two = T::of(2.0);
    let qf = T::of_int(q);
    (p.a_tilde - p.b_tilde) / two * qf - (p.gamma - p.beta / two) * qf * qf
}

/// Running drift of `g` that does not depend on the controls:
/// `-phi q^2 + (lambda_a - lambda_b) beta q`.
pub fn inventory_drift<T: Real>(p: &ModelParams<T>, q: i64) -> T {
    let qf = T::of_int(q);
    -p.phi * qf * qf + (p.lambda_a - p.lambda_b) * p.beta * qf
}

fn require_symmetric_bounds<T: Real>(p: &ModelParams<T>) -> Result<()> {
    if p.q_max != -p.q_min {
        return Err(Error::AsymmetricInventoryBounds {
            q_min: p.q_min,
            q_max: p.q_max,
        });
    }
    Ok(())
}

/// Tridiagonal generator `A` over inventories `q_min..=q_max`.
pub fn build_generator<T: Real>(p: &ModelParams<T>) -> Result<SquareMatrix<T>> {
    require_symmetric_bounds(p)?;
    let n = p.n_inventory();
    let up = ask_coupling(p);
    let down = bid_coupling(p);
    let mut a = SquareMatrix::zeros(n);
    for (i, q) in p.q_range().enumerate() {
        a[(i, i)] = p.kappa * inventory_drift(p, q);
        if q > p.q_min {
            a[(i, i - 1)] = up;
        }
        if q < p.q_max {
            a[(i, i + 1)] = down;
        }
    }
    Ok(a)
}

/// `v_q = exp(kappa g(T, q))`.
pub fn terminal_vector<T: Real>(p: &ModelParams<T>) -> Vec<T> {
    p.q_range()
        .map(|q| (p.kappa * terminal_g(p, q)).exp())
        .collect()
}

/// Unrestrained depths from a value surface `g` at one `(t, q)`:
/// `1/kappa + g(q) - g(q -/+ 1) + beta/2 -/+ (beta q~ + z)`.
pub(crate) fn hat_from_g<T: Real>(
    p: &ModelParams<T>,
    q: i64,
    q_tilde: i64,
    z: T,
    g_here: T,
    g_below: Option<T>,
    g_above: Option<T>,
) -> DepthPair<T> {
    let base = T::one() / p.kappa + p.beta / T::of(2.0);
    let shift = p.beta * T::of_int(q_tilde) + z;
    let ask = g_below.map(|gb| base + (g_here - gb) - shift);
    let bid = g_above.map(|ga| base + (g_here - ga) + shift);
    DepthPair {
        ask: ask.unwrap_or(T::zero()),
        bid: bid.unwrap_or(T::zero()),
        ask_posted: ask.is_some() && q > p.q_min,
        bid_posted: bid.is_some() && q < p.q_max,
    }
}

/// Both sides of the book see the same market, so `omega(t, q) = omega(t, -q)`.
fn is_mirror_symmetric<T: Real>(p: &ModelParams<T>) -> bool {
    p.lambda_a == p.lambda_b && p.a_tilde == p.b_tilde && p.q_min == -p.q_max
}

/// `omega(t, q)` tabulated on a uniform time grid, stored as `ln omega`.
#[derive(Debug, Clone)]
pub struct OmegaTable<T> {
    params: ModelParams<T>,
    time_grid: Vec<T>,
    /// `ln_omega[i][q - q_min]`.
    ln_omega: Vec<Vec<T>>,
    omega: Vec<Vec<T>>,
}

/// Tabulate `omega(t_i, .) = exp(A (T - t_i)) v` on `n_time + 1` uniform points.
pub fn solve_omega<T: Real>(params: &ModelParams<T>, n_time: usize) -> Result<OmegaTable<T>> {
    params.validate()?;
    if n_time == 0 {
        return Err(Error::InvalidArgument("n_time must be at least 1".into()));
    }
    let a = build_generator(params)?;
    let v = terminal_vector(params);
    let h = params.horizon / T::of(n_time as f64);
    let mut omega = UniformPropagator::new(&a, h)?.trajectory(&v, n_time)?;
    omega.reverse();
    if is_mirror_symmetric(params) {
        // the exact solution is even in q; project out rounding asymmetry
        for row in omega.iter_mut() {
            let n = row.len();
            for j in 0..n / 2 {
                let avg = (row[j] + row[n - 1 - j]) / T::of(2.0);
                row[j] = avg;
                row[n - 1 - j] = avg;
            }
        }
    }
    for (i, row) in omega.iter().enumerate() {
        if let Some(j) = row.iter().position(|&w| w <= T::zero() || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "omega lost positivity at time index {i}, inventory {}",
                params.q_min + j as i64
            )));
        }
    }
    let time_grid = (0..=n_time)
        .map(|i| {
            if i == n_time {
                params.horizon
            } else {
                params.horizon * T::of(i as f64 / n_time as f64)
            }
        })
        .collect();
    let ln_omega = omega
        .iter()
        .map(|row| row.iter().map(|w| w.ln()).collect())
        .collect();
    Ok(OmegaTable {
        params: *params,
        time_grid,
        ln_omega,
        omega,
    })
}

/// Locate `t` on a uniform grid over `[0, horizon]` with `n` intervals:
/// the left index and the weight on the right neighbour.
pub(crate) fn grid_position<T: Real>(t: T, horizon: T, n: usize) -> (usize, T) {
    let x = (t / horizon * T::of(n as f64))
        .max(T::zero())
        .min(T::of(n as f64));
    let i = x.floor().to_usize().unwrap_or(0).min(n.saturating_sub(1));
    (i, x - T::of(i as f64))
}

impl<T: Real> OmegaTable<T> {
    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn time_grid(&self) -> &[T] {
        &self.time_grid
    }

    pub fn n_time(&self) -> usize {
        self.time_grid.len() - 1
    }

    /// Row of `omega` at grid index `i`, indexed by `q - q_min`.
    pub fn omega_row(&self, i: usize) -> &[T] {
        &self.omega[i]
    }

    pub fn omega_at_node(&self, i: usize, q: i64) -> Result<T> {
        Ok(self.omega[i][self.params.q_index(q)?])
    }

    pub fn g_at_node(&self, i: usize, q: i64) -> Result<T> {
        Ok(self.ln_omega[i][self.params.q_index(q)?] / self.params.kappa)
    }

    /// `ln omega(t, q)`, linearly interpolated in time.
    pub fn ln_omega(&self, t: T, q: i64) -> Result<T> {
        let j = self.params.q_index(q)?;
        let (i, w) = grid_position(t, self.params.horizon, self.n_time());
        if w == T::zero() {
            return Ok(self.ln_omega[i][j]);
        }
        Ok(self.ln_omega[i][j] * (T::one() - w) + self.ln_omega[i + 1][j] * w)
    }

    pub fn omega(&self, t: T, q: i64) -> Result<T> {
        Ok(self.ln_omega(t, q)?.exp())
    }

    /// `g(t, q) = ln omega(t, q) / kappa`.
    pub fn g(&self, t: T, q: i64) -> Result<T> {
        Ok(self.ln_omega(t, q)? / self.params.kappa)
    }

    /// Unrestrained optimal depths; a side at its inventory bound is not posted.
    pub fn hat_depths(&self, t: T, q: i64, q_tilde: i64, z: T) -> Result<DepthPair<T>> {
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
        Ok(hat_from_g(p, q, q_tilde, z, here, below, above))
    }

    /// Depths actually quoted: each side lifted to at least the competitor's
    /// one-tick-better level.
    pub fn truncated_depths(&self, t: T, q: i64, q_tilde: i64, z: T) -> Result<PolicyDepths<T>> {
        let hat = self.hat_depths(t, q, q_tilde, z)?;
        Ok(PolicyDepths::truncate(
            hat,
            competitor_depths(&self.params, q_tilde, z),
        ))
    }

    /// Residual of the untruncated `g` equation at interior node `i`, using a
    /// central difference in time.
    pub fn hjb_residual(&self, i: usize, q: i64) -> Result<T> {
        if i == 0 || i >= self.n_time() {
            return Err(Error::InvalidArgument(format!("node {i} is not interior")));
        }
        let p = &self.params;
        let dt = self.time_grid[i + 1] - self.time_grid[i - 1];
        let dg_dt = (self.g_at_node(i + 1, q)? - self.g_at_node(i - 1, q)?) / dt;
        let g = self.g_at_node(i, q)?;
        let mut r = dg_dt + inventory_drift(p, q);
        if q > p.q_min {
            let d = self.g_at_node(i, q - 1)? - g;
            r += ask_coupling(p) / p.kappa * (p.kappa * d).exp();
        }
        if q < p.q_max {
            let d = self.g_at_node(i, q + 1)? - g;
            r += bid_coupling(p) / p.kappa * (p.kappa * d).exp();
        }
        Ok(r)
    }
}
