//! Optimal entry and exit timing for a mean-reverting (Ornstein-Uhlenbeck)
//! spread with transaction costs, with and without a stop-loss.
//!
//! The crate is `no_std` and only needs an allocator.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod double_stopping;
pub mod error;
pub mod majorant;
pub mod mc_oracle;
pub mod ou_process;
pub mod params;
pub mod quadrature;
pub mod roots;
pub mod special_fn;
pub mod stoploss;

pub use double_stopping::{OptimalTiming, ThresholdSolution, TradingProblem};
pub use error::{Error, Result};
pub use mc_oracle::{McConfig, McEstimate, PolicySpec};
pub use params::{DiscountSpec, ModelParams};
pub use quadrature::QuadratureConfig;
pub use special_fn::Fundamentals;
pub use stoploss::{RelativeStopLossSpec, StopLossSolution, StopLossTiming};
