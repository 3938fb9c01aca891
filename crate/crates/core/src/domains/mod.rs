//! Benchmark model builders.

pub mod dubins;
pub mod examples;
pub mod grid;
pub mod maze;
pub mod pendulum;

pub use dubins::{build_dubins, Dubins, DubinsParams};
pub use examples::{build_example_a, build_example_b};
pub use grid::{discretize_gaussian, Axis, Discretized};
pub use maze::{build_maze, random_maze, Direction, Door, MazeSpec};
pub use pendulum::{build_pendulum, Pendulum, PendulumParams};
