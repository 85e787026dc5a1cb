//! Minimal acceptable capital in finite scenario-tree markets.
//!
//! An initial capital `x` is acceptable for a family of scenario densities
//! `Zᵢ` with floors `φᵢ` when some predictable strategy reaches a terminal
//! wealth `W` with `E[Zᵢ W] >= φᵢ` for every scenario. The smallest such
//! capital is computed twice: as a primal LP over capital and strategy, and as
//! the largest hull floor attained by a martingale density in the scenario
//! hull. The two values agree whenever that set of martingale densities is
//! non-empty; when it is empty every capital is acceptable.
//!
//! In a finite space the attainable subspace is closed, so acceptability and
//! weak acceptability coincide and the infimum is always attained.

pub mod acceptability;
pub mod error;
pub mod geometry;
pub mod hedging;
pub mod io;
pub mod market;
pub mod opt;
pub mod random;
pub mod risk;
pub mod scenario;
pub mod selftest;

pub use error::{Error, Result};
