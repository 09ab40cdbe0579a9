//! Planar free-floating chain of thruster-driven rigid links: dynamics, IMU
//! synthesis, local weak observability analysis and unscented joint
//! state/parameter estimation.

pub mod chain;
pub mod dynamics;
pub mod emit;
pub mod error;
pub mod forces;
pub mod imu;
pub mod integrate;
pub mod observability;
pub mod registry;
pub mod run;
pub mod scenario;
pub mod thrust;
pub mod ukf;

pub use chain::{ChainParams, ChainState};
pub use dynamics::ChainModel;
pub use error::{Error, Result};
