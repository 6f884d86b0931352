//! Executable models of the FWCFP and LWJX RFID mutual-authentication
//! protocols, the untraceable-privacy game they are analysed in, and the
//! adversaries that break them.

pub mod attacks;
pub mod bits;
pub mod feistel;
pub mod fwcfp;
pub mod game;
pub mod harness;
pub mod hash;
pub mod lwjx;
pub mod rng;
pub mod session;
pub mod transcript;

pub use bits::{BitString, BitsError};
pub use rng::StreamRng;
pub use session::{Outcome, Party, ProtocolKind, RejectReason, SessionVerdict};
