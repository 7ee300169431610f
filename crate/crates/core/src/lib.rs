//! Distributed receding-horizon formation control for car-like vehicles
//! driving in road-aligned coordinates.

pub mod dynamics;
pub mod error;
pub mod formation;
pub mod mpc;
pub mod obstacle;
pub mod partition;
pub mod reconfig;
pub mod road;
pub mod scenario;
pub mod sim;

pub use error::{Error, FieldError, Result};
