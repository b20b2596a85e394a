//! Sparse-signal reconstruction with piecewise nonconvex penalties (SCAD,
//! MCP, and their soft-threshold limit): exact scalar threshold operators,
//! approximate message passing with nonconvexity control, the deterministic
//! state-evolution map with basin-of-attraction analysis, and the
//! replica-symmetric saddle-point machinery that produces reconstruction
//! phase boundaries.

pub mod amp;
pub mod error;
pub mod gauss;
pub mod instance;
pub mod penalty;
pub mod replica;
pub mod se;

pub use error::{Error, Result};
