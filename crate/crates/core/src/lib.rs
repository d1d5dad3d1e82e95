//! Market making against an aggregated rule-of-thumb competitor.
//!
//! The reference maker posts depths around the unaffected price; the
//! competitor quotes `a~ - beta q~ - z` / `b~ + beta q~ + z` and takes every
//! order the reference maker does not win. The crate provides
//!
//! * [`closed_form`]: the approximate closed-form policy via `omega = exp(A (T-t)) v`,
//! * [`hjb`]: an explicit Euler solver for the exact truncated value equation,
//! * [`sim`]: a seeded two-maker market simulator and a reset/step environment,
//! * [`harness`]: comparative statics, paired strategy comparisons and the
//!   census of paths where the reference maker matched the competitor,
//! * [`config`]: the flat `key = value` configuration format.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the `*64` aliases
//! below fix the scalar to `f64`.

pub mod closed_form;
pub mod config;
pub mod error;
pub mod expm;
pub mod harness;
pub mod hjb;
pub mod model;
pub mod real;
pub mod rng;
pub mod sim;
pub mod stats;

pub use closed_form::{build_generator, solve_omega, terminal_vector, OmegaTable};
pub use error::{Error, Result};
pub use expm::{expm, expm_action, SquareMatrix};
pub use hjb::{solve_backward, solve_backward_with, EulerOptions, HamiltonianMode, ValueGrid};
pub use model::{
    competitor_depths, fill_probability, terminal_value, DepthPair, ModelParams, PolicyDepths,
    SimState,
};
pub use real::Real;
pub use rng::PathSeed;
pub use sim::{run_path, run_path_recorded, MarketEnv, PathResult, Strategy};

pub type ModelParams64 = ModelParams<f64>;
pub type ModelParams32 = ModelParams<f32>;
pub type OmegaTable64 = OmegaTable<f64>;
pub type OmegaTable32 = OmegaTable<f32>;
pub type ValueGrid64 = ValueGrid<f64>;
pub type ValueGrid32 = ValueGrid<f32>;
pub type SimState64 = SimState<f64>;
pub type DepthPair64 = DepthPair<f64>;
pub type PolicyDepths64 = PolicyDepths<f64>;
pub type PathResult64 = PathResult<f64>;
pub type SquareMatrix64 = SquareMatrix<f64>;
pub type MarketEnv64 = MarketEnv<f64>;
