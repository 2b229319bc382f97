//! Spiking PID controller built from rate-coded CUBA-LIF neurons.
//!
//! * [`neuron`]: LIF, IWTA and leaky-readout step functions.
//! * [`encoding`]: stochastic positive/negative rate encoding.
//! * [`network`]: the proportional, integral (threshold adaptation) and
//!   derivative (fast/slow groups) pathways assembled into a controller.
//! * [`train`]: losses, surrogate gradients and backpropagation through time.
//! * [`plants`]: double integrator, rate plant, reference PID, recurrent
//!   integrator baseline and closed-loop episodes.
//! * [`experiments`]: end-to-end pipelines shared by the CLI and the tests.

pub mod encoding;
pub mod experiments;
pub mod network;
pub mod neuron;
pub mod plants;
pub mod stats;
pub mod train;

pub use encoding::{encode, spike_probability, EncoderParams, RngStream};
pub use network::{ControllerOutput, NetworkSize, PathwayKind, PidNetwork};
pub use neuron::{iwta_step, leaky_readout_step, lif_step, IwtaState, LifParams, LifState, Side, SpikePair};

/// Nominal controller period (500 Hz).
pub const DEFAULT_DT: f64 = 0.002;
