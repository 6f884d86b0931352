//! Concrete adversaries: the FWCFP desynchronization experiment and the
//! traceability strategies for the privacy game.

mod desync;
mod trace;

pub use desync::{fwcfp_desync_attack, fwcfp_restore, DesyncError, DesyncOutcome};
pub use trace::{FwcfpBackTrace, FwcfpTrace, LwjxGuessMode, LwjxTrace};
