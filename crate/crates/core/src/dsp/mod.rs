//! Time-frequency analysis and the acoustic front end.

pub mod mfcc;
pub mod stft;
pub mod vad;

pub use mfcc::{mfcc, FeatureMatrix, MfccConfig, MFCC_DIM};
pub use stft::{istft, stft, ComplexSpectrogram, StftConfig, Window};
pub use vad::{apply_vad, energy_vad, VadConfig, VadMask};
