//! Numerical dual geometry of strictly C-convex hypersurfaces in `C^N`.
//!
//! The crate computes CR frames and shape operators of hypersurfaces given by
//! defining functions, their complex Gauss and dual maps, the induced maps of
//! pencils of hyperplanes, and traces the critical circle of such maps. Probe
//! modules check the resulting fibration picture on sampled data.

pub mod critical;
pub mod dual;
pub mod error;
pub mod fiber;
pub mod geometry;
pub mod linalg;
pub mod oracle;
pub mod pencil;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
pub use geometry::{Builtin, DefiningFunction};
pub use scenario::{run_command, run_scenario, Command, RunReport, ScenarioConfig, Verdict};
