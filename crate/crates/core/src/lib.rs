//! Far-field speaker verification toolkit.

pub mod audio;
pub mod beamform;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod nn;
pub mod par;
pub mod roomsim;
pub mod synth;
pub mod wpe;

pub use error::{Error, Result};
