//! Lower bounds on the largest induced forest of regular graphs with large
//! girth, and the randomized forest-growing process behind them.
//!
//! The crate has three layers:
//!
//! * [`graph`], [`labels`] and [`forest`] run the process on concrete graphs;
//! * [`recurrence`], [`ode`] and [`bounds`] evolve the expected colour
//!   densities and turn their limits into the constant `ξ(r)`;
//! * [`oracle`] checks the density formulas against brute force on
//!   truncated regular trees.

pub mod bounds;
pub mod error;
pub mod forest;
pub mod graph;
pub mod labels;
pub mod ode;
pub mod oracle;
pub mod recurrence;

pub use error::{Error, Result};
pub use graph::{Graph, VertexSet};
pub use recurrence::KineticState;
