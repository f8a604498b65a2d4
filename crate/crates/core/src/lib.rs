//! Flux-tunable transmons in a 3D cavity: frequency model, crosstalk
//! calibration, spectroscopy simulation and resonator reflection fits.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calibration;
pub mod error;
pub mod hermitian;
pub mod io;
pub mod map;
pub mod optimize;
pub mod peaks;
pub mod resonator;
pub mod spectrum;
pub mod synth;
pub mod transmon;

pub use calibration::{CalibrationResult, FitOptions, PeakObservation};
pub use error::{Error, Result};
pub use map::{ProbeRange, SpectroscopyMap, Sweep};
pub use resonator::{ReflectionTrace, ResonatorFitResult};
pub use spectrum::{CavityMode, SpectrumSlice, SystemModel};
pub use synth::NoiseSpec;
pub use transmon::{BiasPoint, FluxMap, TransmonParams};
