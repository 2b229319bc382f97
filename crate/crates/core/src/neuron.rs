//! Discrete-time neuron dynamics.
//!
//! Three neuron types are used by the controller:
//!
//! * the current-based leaky integrate-and-fire neuron (CUBA-LIF) with soft reset,
//! * the input-weighted threshold adaptation (IWTA) neuron, a LIF whose firing
//!   threshold is moved up or down by the spikes of the encoding layer,
//! * a non-spiking leaky integrator used as readout.
//!
//! ```text
//! v(t+1) = tau_mem * v(t) + i(t)
//! i(t+1) = tau_syn * i(t) + sum_j w_ij s_j(t)
//! s      = H(v(t+1) - threshold),  H(0) = 0
//! v     -= threshold * s
//! ```
//!
//! All step functions are pure in the sense that every piece of state lives in
//! the explicit state records passed in.

use std::f64::consts::PI;

use thiserror::Error;

/// Invalid neuron parameters.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuronError {
    #[error("{name} = {value} is outside [0, 1]")]
    DecayOutOfRange { name: &'static str, value: f64 },
    #[error("threshold must be positive, got {0}")]
    NonPositiveThreshold(f64),
}

/// Constants of a single CUBA-LIF neuron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    /// Membrane decay factor per step.
    pub tau_mem: f64,
    /// Synaptic current decay factor per step.
    pub tau_syn: f64,
    pub threshold: f64,
    pub refractory_steps: u32,
}

impl LifParams {
    pub fn new(
        tau_mem: f64,
        tau_syn: f64,
        threshold: f64,
        refractory_steps: u32,
    ) -> Result<Self, NeuronError> {
        let params = Self {
            tau_mem,
            tau_syn,
            threshold,
            refractory_steps,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), NeuronError> {
        for (name, value) in [("tau_mem", self.tau_mem), ("tau_syn", self.tau_syn)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(NeuronError::DecayOutOfRange { name, value });
            }
        }
        if !(self.threshold > 0.0) {
            return Err(NeuronError::NonPositiveThreshold(self.threshold));
        }
        Ok(())
    }
}

/// Mutable state of a LIF neuron.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LifState {
    /// Membrane potential.
    pub v: f64,
    /// Synaptic current.
    pub i: f64,
    pub refrac_remaining: u32,
}

/// One spike per encoding channel for a single time step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SpikePair {
    pub pos: bool,
    pub neg: bool,
}

impl SpikePair {
    pub fn new(pos: bool, neg: bool) -> Self {
        Self { pos, neg }
    }

    pub fn pos_f64(self) -> f64 {
        f64::from(u8::from(self.pos))
    }

    pub fn neg_f64(self) -> f64 {
        f64::from(u8::from(self.neg))
    }
}

/// Which half of a symmetric neuron pair a neuron belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Positive,
    Negative,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Positive => 1.0,
            Side::Negative => -1.0,
        }
    }

    pub fn mirrored(self) -> Side {
        match self {
            Side::Positive => Side::Negative,
            Side::Negative => Side::Positive,
        }
    }
}

/// State of an IWTA neuron: a LIF plus its adaptive threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IwtaState {
    pub lif: LifState,
    /// Current adaptive threshold, always within `[0, 2 * theta_base]`.
    pub theta: f64,
    /// Threshold change per incoming encoder spike.
    pub theta_add: f64,
    pub theta_base: f64,
    /// Relaxation of the threshold towards `theta_base` per step. Zero disables it.
    pub theta_decay: f64,
}

impl IwtaState {
    pub fn new(theta_base: f64, theta_add: f64) -> Self {
        Self {
            lif: LifState::default(),
            theta: theta_base,
            theta_add,
            theta_base,
            theta_decay: 0.0,
        }
    }
}

/// Forward nonlinearity applied to the pre-activation `u = v - threshold`.
///
/// `Heaviside` is the real spiking network. `Smooth` replaces the step with the
/// arctan primitive of the surrogate derivative so that the whole network is
/// differentiable; it exists for gradient checking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpikeFn {
    Heaviside,
    Smooth { width: f64 },
}

impl SpikeFn {
    #[inline]
    pub fn apply(self, u: f64) -> f64 {
        match self {
            SpikeFn::Heaviside => heaviside(u),
            SpikeFn::Smooth { width } => 0.5 + (0.5 * PI * width * u).atan() / PI,
        }
    }
}

/// `H(u)` with `H(0) = 0`.
#[inline]
pub fn heaviside(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Arctan surrogate derivative of the spike function.
#[inline]
pub fn atan_surrogate(u: f64, width: f64) -> f64 {
    let z = 0.5 * PI * width * u;
    width / (2.0 * (1.0 + z * z))
}

/// Intermediate values of one LIF update, kept for the backward pass.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct LifTrace {
    pub v0: f64,
    pub i0: f64,
    /// Membrane potential before the reset.
    pub v1: f64,
    pub threshold: f64,
    pub spike: f64,
    /// False while the neuron is refractory.
    pub gated: bool,
}

#[inline]
pub(crate) fn lif_kernel(
    state: &mut LifState,
    tau_mem: f64,
    tau_syn: f64,
    threshold: f64,
    refractory_steps: u32,
    input: f64,
    spike_fn: SpikeFn,
) -> LifTrace {
    let v0 = state.v;
    let i0 = state.i;
    let v1 = tau_mem * v0 + i0;
    state.i = tau_syn * i0 + input;

    let gated = state.refrac_remaining == 0;
    let spike = if gated {
        spike_fn.apply(v1 - threshold)
    } else {
        state.refrac_remaining -= 1;
        0.0
    };
    state.v = v1 - threshold * spike;
    if spike > 0.5 {
        state.refrac_remaining = refractory_steps;
    }
    LifTrace {
        v0,
        i0,
        v1,
        threshold,
        spike,
        gated,
    }
}

/// Advance a LIF neuron by one step given the already weighted input spike sum.
pub fn lif_step(state: LifState, params: &LifParams, weighted_spike_sum: f64) -> (LifState, bool) {
    let mut next = state;
    let trace = lif_kernel(
        &mut next,
        params.tau_mem,
        params.tau_syn,
        params.threshold,
        params.refractory_steps,
        weighted_spike_sum,
        SpikeFn::Heaviside,
    );
    (next, trace.spike > 0.5)
}

/// Threshold update of an IWTA neuron.
///
/// Returns the new threshold and whether the clamp was inactive.
#[inline]
pub(crate) fn adapt_threshold(
    theta: f64,
    theta_base: f64,
    theta_add: f64,
    theta_decay: f64,
    side: Side,
    s_pos: f64,
    s_neg: f64,
) -> (f64, bool) {
    // A positive-side neuron is excited by positive encoder spikes, so they
    // lower its threshold.
    let delta = match side {
        Side::Positive => s_neg - s_pos,
        Side::Negative => s_pos - s_neg,
    };
    let raw = theta + theta_decay * (theta_base - theta) + theta_add * delta;
    let upper = 2.0 * theta_base;
    if raw < 0.0 {
        (0.0, false)
    } else if raw > upper {
        (upper, false)
    } else {
        (raw, true)
    }
}

/// Advance an IWTA neuron by one step.
///
/// The threshold is adapted first from this step's encoder spikes, then the
/// LIF update runs with the adapted threshold as both the spike test and the
/// soft-reset amount. `params.threshold` is ignored in favor of the state's
/// adaptive threshold.
pub fn iwta_step(
    state: IwtaState,
    params: &LifParams,
    side: Side,
    syn_drive: f64,
    s_pos: bool,
    s_neg: bool,
) -> (IwtaState, bool) {
    let mut next = state;
    let (theta, _) = adapt_threshold(
        state.theta,
        state.theta_base,
        state.theta_add,
        state.theta_decay,
        side,
        f64::from(u8::from(s_pos)),
        f64::from(u8::from(s_neg)),
    );
    next.theta = theta;
    let trace = lif_kernel(
        &mut next.lif,
        params.tau_mem,
        params.tau_syn,
        theta,
        params.refractory_steps,
        syn_drive,
        SpikeFn::Heaviside,
    );
    (next, trace.spike > 0.5)
}

/// Non-spiking leaky integrator: `decay * value + input`.
#[inline]
pub fn leaky_readout_step(value: f64, decay: f64, weighted_spike_sum: f64) -> f64 {
    decay * value + weighted_spike_sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(tau_mem: f64, tau_syn: f64, threshold: f64, refractory: u32) -> LifParams {
        LifParams::new(tau_mem, tau_syn, threshold, refractory).unwrap()
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let p = params(0.7, 0.3, 1.0, 0);
        let (s, spike) = lif_step(LifState::default(), &p, 0.0);
        assert_eq!(s, LifState::default());
        assert!(!spike);
    }

    #[test]
    fn hand_evaluated_two_steps() {
        let p = params(0.9, 0.5, 0.5, 0);
        let (s, spike) = lif_step(LifState::default(), &p, 1.0);
        assert!(!spike);
        assert_eq!((s.v, s.i), (0.0, 1.0));
        let (s, spike) = lif_step(s, &p, 0.0);
        assert!(spike);
        assert_eq!(s.i, 0.5);
        assert_eq!(s.v, 0.5);
    }

    #[test]
    fn undamped_first_spike_at_step_six() {
        let p = params(1.0, 1.0, 10.0, 0);
        let mut s = LifState::default();
        for n in 1..=6u32 {
            let (next, spike) = lif_step(s, &p, 1.0);
            s = next;
            let expected = f64::from(n * (n - 1) / 2);
            if n < 6 {
                assert!(!spike, "unexpected spike at n={n}");
                assert_eq!(s.v, expected);
            } else {
                assert!(spike);
                assert_eq!(s.v, expected - 10.0);
            }
        }
    }

    #[test]
    fn heaviside_at_zero_is_zero() {
        // v lands exactly on the threshold
        let p = params(1.0, 0.0, 1.0, 0);
        let s = LifState {
            v: 0.0,
            i: 1.0,
            refrac_remaining: 0,
        };
        let (s, spike) = lif_step(s, &p, 0.0);
        assert!(!spike);
        assert_eq!(s.v, 1.0);
    }

    #[test]
    fn refractory_suppresses_spikes_but_keeps_dynamics() {
        let p = params(1.0, 0.0, 0.5, 2);
        let mut s = LifState::default();
        let mut spikes = Vec::new();
        for _ in 0..10 {
            let (next, spike) = lif_step(s, &p, 1.0);
            s = next;
            spikes.push(spike);
            assert!(s.refrac_remaining <= p.refractory_steps);
        }
        // first step has i(0) = 0; afterwards the neuron would fire every step
        assert_eq!(
            spikes,
            [false, true, false, false, true, false, false, true, false, false]
        );
    }

    #[test]
    fn rejects_out_of_range_params() {
        assert!(LifParams::new(1.1, 0.5, 1.0, 0).is_err());
        assert!(LifParams::new(0.5, -0.1, 1.0, 0).is_err());
        assert!(LifParams::new(0.5, 0.5, 0.0, 0).is_err());
    }

    #[test]
    fn iwta_threshold_update_examples() {
        let p = params(1.0, 0.0, 1.0, 0);
        let s = IwtaState::new(1.0, 0.1);
        let (s, _) = iwta_step(s, &p, Side::Positive, 0.0, true, false);
        assert!((s.theta - 0.9).abs() < 1e-15);

        let mut s = IwtaState::new(1.0, 0.1);
        s.theta = 0.05;
        let (s, _) = iwta_step(s, &p, Side::Positive, 0.0, true, false);
        assert_eq!(s.theta, 0.0);

        let mut s = IwtaState::new(1.0, 0.1);
        s.theta = 2.0;
        let (s, _) = iwta_step(s, &p, Side::Positive, 0.0, false, true);
        assert_eq!(s.theta, 2.0);
    }

    #[test]
    fn iwta_negative_side_mirrors_update() {
        let p = params(1.0, 0.0, 1.0, 0);
        let s = IwtaState::new(1.0, 0.1);
        let (s, _) = iwta_step(s, &p, Side::Negative, 0.0, true, false);
        assert!((s.theta - 1.1).abs() < 1e-15);
    }

    #[test]
    fn iwta_zero_threshold_fires_every_step() {
        let p = params(1.0, 0.5, 1.0, 0);
        let mut s = IwtaState::new(1.0, 0.0);
        s.theta = 0.0;
        let mut count = 0;
        for _ in 0..100 {
            let (next, spike) = iwta_step(s, &p, Side::Positive, 1.0, false, false);
            s = next;
            count += usize::from(spike);
        }
        // step 0 only charges the synaptic current
        assert_eq!(count, 99);
    }

    #[test]
    fn threshold_decay_relaxes_towards_base() {
        let (theta, free) = adapt_threshold(1.5, 1.0, 0.0, 0.1, Side::Positive, 0.0, 0.0);
        assert!(free);
        assert!((theta - 1.45).abs() < 1e-15);
    }

    #[test]
    fn leaky_readout_examples() {
        assert_eq!(leaky_readout_step(0.0, 0.9, 1.0), 1.0);
        let mut value = 0.0;
        for _ in 0..2000 {
            value = leaky_readout_step(value, 0.9, 0.1);
        }
        assert!((value - 1.0).abs() < 1e-12);
        let mut prev = value;
        for _ in 0..100 {
            value = leaky_readout_step(value, 0.9, 0.0);
            assert!(value < prev && value >= 0.0);
            prev = value;
        }
    }

    #[test]
    fn smooth_spike_matches_surrogate_derivative() {
        let f = SpikeFn::Smooth { width: 2.0 };
        for &u in &[-1.3, -0.2, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let numeric = (f.apply(u + h) - f.apply(u - h)) / (2.0 * h);
            assert!((numeric - atan_surrogate(u, 2.0)).abs() < 1e-8);
        }
        assert_eq!(atan_surrogate(0.0, 2.0), 1.0);
    }
}
