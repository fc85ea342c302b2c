//! Globally optimal 3D registration by axis-wise decomposition.
//!
//! The six-degree-of-freedom rigid registration problem is split into three
//! independent two-degree-of-freedom problems, one per output axis. Each is
//! solved to global optimality with branch-and-bound over the unit
//! hemisphere, using interval stabbing for both bounds.

pub mod bnb;
pub mod error;
pub mod geometry;
pub mod interval;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod spcr;
pub mod synth;

pub use bnb::{solve_axis, AxisProblem, AxisSolution, Cell, Hemisphere, SolverConfig};
pub use error::{Error, Result};
pub use geometry::{AxisLabel, RigidTransform, Rotation, Vec3};
pub use interval::{grouped_stab, stab, Interval, StabResult};
pub use pipeline::{register, register_spcr, Correspondence, CorrespondenceSet, RegistrationConfig, RegistrationResult};
pub use spcr::{CandidatePairSet, SpcrProblem};
