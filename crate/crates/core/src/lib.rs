//! Model predictive path tracking for low-speed vehicle maneuvers.
//!
//! The controller linearizes a kinematic bicycle model every tick, lifts it
//! into an incremental (augmented) state-space form, predicts the output
//! trajectory over a finite horizon and solves an input-constrained QP with
//! Hildreth's dual coordinate iteration. [`sim`] closes the loop against the
//! nonlinear kinematic plant.

pub mod angle;
pub mod mpc;
pub mod qp;
pub mod sim;
pub mod trajectory;
pub mod vehicle_model;

mod error;

pub use error::{Error, Result};
pub use mpc::{ControlCommand, ControllerState, MpcConfig, OutputMode};
pub use qp::{solve_hildreth, QpProblem, QpSolution};
pub use sim::{run_closed_loop, Scenario, SimResult};
pub use trajectory::{PreviewMode, Trajectory, Waypoint};
pub use vehicle_model::{ControlInput, VehicleParams, VehicleState};
