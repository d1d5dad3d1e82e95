//! Per-path random substreams.
//!
//! Every path owns one ChaCha8 stream per role, keyed by
//! `(master seed, path index, role)`. Two strategies run on the same path see
//! identical price, noise, arrival and fill draws regardless of how their
//! inventories diverge, and paths can be evaluated in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::real::Real;

/// Identifies one simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathSeed {
    pub master: u64,
    pub path: u64,
}

impl PathSeed {
    pub fn new(master: u64, path: u64) -> Self {
        Self { master, path }
    }
}

impl From<u64> for PathSeed {
    fn from(master: u64) -> Self {
        Self { master, path: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamRole {
    Price = 0,
    Noise = 1,
    BuyArrival = 2,
    SellArrival = 3,
    Fill = 4,
}

const ROLES: u64 = 5;

fn stream(seed: PathSeed, role: StreamRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.master);
    rng.set_stream(seed.path.wrapping_mul(ROLES).wrapping_add(role as u64));
    rng
}

/// Random inputs consumed by one simulator step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDraws<T> {
    pub price_normal: T,
    pub noise_normal: T,
    pub buy_uniform: T,
    pub sell_uniform: T,
    pub ask_fill_uniform: T,
    pub bid_fill_uniform: T,
}

impl<T: Real> StepDraws<T> {
    /// No arrivals, no diffusion.
    pub fn quiet() -> Self {
        Self {
            price_normal: T::zero(),
            noise_normal: T::zero(),
            buy_uniform: T::one(),
            sell_uniform: T::one(),
            ask_fill_uniform: T::one(),
            bid_fill_uniform: T::one(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PathStreams {
    price: ChaCha8Rng,
    noise: ChaCha8Rng,
    buy: ChaCha8Rng,
    sell: ChaCha8Rng,
    fill: ChaCha8Rng,
}

impl PathStreams {
    pub fn new(seed: PathSeed) -> Self {
        Self {
            price: stream(seed, StreamRole::Price),
            noise: stream(seed, StreamRole::Noise),
            buy: stream(seed, StreamRole::BuyArrival),
            sell: stream(seed, StreamRole::SellArrival),
            fill: stream(seed, StreamRole::Fill),
        }
    }

    /// Every stream advances by a fixed amount per step, whatever happens.
    pub fn next_draws<T: Real>(&mut self) -> StepDraws<T> {
        let price: f64 = self.price.sample(StandardNormal);
        let noise: f64 = self.noise.sample(StandardNormal);
        StepDraws {
            price_normal: T::of(price),
            noise_normal: T::of(noise),
            buy_uniform: T::of(self.buy.random::<f64>()),
            sell_uniform: T::of(self.sell.random::<f64>()),
            ask_fill_uniform: T::of(self.fill.random::<f64>()),
            bid_fill_uniform: T::of(self.fill.random::<f64>()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_draws() {
        let mut a = PathStreams::new(PathSeed::new(7, 3));
        let mut b = PathStreams::new(PathSeed::new(7, 3));
        for _ in 0..50 {
            assert_eq!(a.next_draws::<f64>(), b.next_draws::<f64>());
        }
    }

    #[test]
    fn paths_and_roles_are_distinct() {
        let a: StepDraws<f64> = PathStreams::new(PathSeed::new(7, 0)).next_draws();
        let b: StepDraws<f64> = PathStreams::new(PathSeed::new(7, 1)).next_draws();
        let c: StepDraws<f64> = PathStreams::new(PathSeed::new(8, 0)).next_draws();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a.buy_uniform, a.sell_uniform);
    }

    #[test]
    fn uniforms_and_normals_look_right() {
        let mut s = PathStreams::new(PathSeed::new(1, 0));
        let n = 20_000;
        let draws: Vec<StepDraws<f64>> = (0..n).map(|_| s.next_draws()).collect();
        let mean_u = draws.iter().map(|d| d.buy_uniform).sum::<f64>() / n as f64;
        let mean_n = draws.iter().map(|d| d.price_normal).sum::<f64>() / n as f64;
        let var_n = draws.iter().map(|d| d.price_normal.powi(2)).sum::<f64>() / n as f64;
        assert!((mean_u - 0.5).abs() < 0.01);
        assert!(mean_n.abs() < 0.03);
        assert!((var_n - 1.0).abs() < 0.04);
        assert!(draws
            .iter()
            .all(|d| (0.0..1.0).contains(&d.ask_fill_uniform)));
    }
}
