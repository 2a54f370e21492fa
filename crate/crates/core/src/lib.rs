//! Spiking network simulation, surrogate-gradient training and population
//! oscillation analysis.
//!
//! The crate is organised around the stages of the pipeline:
//!
//! - [`neuron`]: single-neuron adaptive LIF dynamics and the analytic
//!   kernel formulation used as an oracle,
//! - [`topology`]: masked multi-layer network structure and simulation,
//! - [`frontend`]: waveform to Mel features to auditory-nerve stimuli,
//! - [`training`]: BPTT with a boxcar surrogate, CTC loss, readout and
//!   the optimizer loop,
//! - [`oscillation`]: population signals, band-pass filtering and
//!   phase-amplitude coupling statistics,
//! - [`io`]: versioned checkpoint and spike-export containers.

pub mod error;
pub mod frontend;
pub mod io;
pub mod neuron;
pub mod oscillation;
pub mod topology;
pub mod training;

pub use error::{CoreError, Result};
