//! Simulator for a quantum key distribution network that addresses single
//! photons by orbital angular momentum and carries key bits in polarization.
//!
//! - [`mode_algebra`]: LG modes in the HG basis and beam-rotation unitaries.
//! - [`polarization`]: the BB84 Jones alphabet and the prism's quarter-wave action.
//! - [`sorter`]: Mach-Zehnder sorter stages and synthesized sorter trees.
//! - [`network`]: user addresses, the in-port multiplexer, noisy transport.
//! - [`protocol`]: BB84 sessions with depth compensation and intercept-resend.
//! - [`scenario`], [`report`], [`runner`], [`verify`]: the command-line surface.

pub mod angle;
pub mod error;
pub mod mode_algebra;
pub mod network;
pub mod polarization;
pub mod protocol;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod sorter;
pub mod verify;

pub use angle::PiAngle;
pub use num_complex::Complex64;
pub use error::{Error, Result};

/// Seedable stream used for every random draw in the simulator.
pub type SimRng = rand_chacha::ChaCha8Rng;
