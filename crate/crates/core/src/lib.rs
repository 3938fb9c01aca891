//! Goal-directed planning on finite MDPs through a quasimetric.
//!
//! The one-step distance `min_u g(x,u) / p(y|x,u)` turns an MDP into a
//! weighted digraph; shortest paths on it give a quasi-distance to any goal,
//! and the probabilistic gradient of that distance gives a policy. Value
//! Iteration is included as the reference it is compared against.

pub mod belief;
pub mod bench;
pub mod domains;
pub mod dp;
pub mod error;
pub mod generate;
pub mod io;
pub mod model;
pub mod policy;
pub mod quasimetric;
pub mod risk;
pub mod sim;

pub use error::{Error, Result};
pub use model::{MdpModel, ModelBuilder};
