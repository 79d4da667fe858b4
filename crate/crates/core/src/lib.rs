//! Two-stage energy management for an islanded feeder microgrid: a
//! rolling-horizon load-restoration schedule, a short-horizon dispatch
//! correction, dynamic reserve and fuel rationing, and a minute-level
//! plant simulator to run them closed loop.

pub mod error;
pub mod formulation;
pub mod harness;
pub mod optim;
pub mod parallel;
pub mod plant;
pub mod robust;
pub mod scenario;
pub mod stage1;
pub mod stage2;

pub use error::{Error, ReasonCode, Result};
