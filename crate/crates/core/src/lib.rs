pub mod dynamics;
pub mod error;
pub mod fractional;
pub mod grid1d;
pub mod harness;
pub mod linalg;
pub mod linop;
pub mod modulation;
pub mod par;
pub mod profiles;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases for the generic core.
pub type Grid = grid1d::Grid<f64>;
pub type GridFn = grid1d::GridFn<f64>;
pub type Profile = profiles::Profile<f64>;
pub type SimState = dynamics::SimState<f64>;
pub type PhysState = dynamics::PhysState<f64>;
pub type HalfGrid = fractional::HalfGrid<f64>;
pub type HalfFn = fractional::HalfFn<f64>;

pub use grid1d::{Parity, Weight};
pub use harness::{RunConfig, SweepConfig};
