//! Clock-offset resynchronization for time-bin QKD links.
//!
//! Bob recovers a changed clock offset from the single-photon detections of a
//! short, fixed pseudo-random pulse pattern that Alice interleaves into the
//! qubit stream.
//!
//! - [`pattern`] generates and serializes the pulse pattern.
//! - [`recovery`] aligns detections and searches offsets `0, +1, -1, ...`
//!   for the first one whose cross-correlation exceeds the threshold.
//! - [`analytics`] holds the success-probability model and the planner.
//! - [`simulator`] synthesizes detection streams and replays scenarios.
//! - [`cli`] is the command-line front end.

pub mod analytics;
pub mod cli;
pub mod error;
pub mod pattern;
pub mod recovery;
pub mod simulator;

pub use error::{Error, Result};
pub use pattern::{generate_pattern, Pattern};
pub use recovery::{find_offset, DetectionSet, RecoveryOutcome, RecoveryParams, RecoveryStatus};
