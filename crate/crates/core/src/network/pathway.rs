//! A single pathway: encoders, neuron groups, and the shared readouts.

use crate::encoding::{tuning_raw, EncoderParams, RngStream};
use crate::neuron::{adapt_threshold, atan_surrogate, leaky_readout_step, lif_kernel, LifState, LifTrace, Side, SpikeFn};

use super::params::{PathwayKind, PathwayParams};

/// Forward nonlinearity plus the surrogate width used by the backward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardMode {
    pub spike_fn: SpikeFn,
    pub surrogate_width: f64,
}

impl ForwardMode {
    /// Real spiking forward pass.
    pub fn hard(surrogate_width: f64) -> Self {
        Self {
            spike_fn: SpikeFn::Heaviside,
            surrogate_width,
        }
    }

    /// Fully differentiable forward pass (gradient checking).
    pub fn smooth(surrogate_width: f64) -> Self {
        Self {
            spike_fn: SpikeFn::Smooth {
                width: surrogate_width,
            },
            surrogate_width,
        }
    }

    /// Encoder spike for `prob - draw` and its derivative w.r.t. the probability.
    ///
    /// With hard spikes the Bernoulli draw is passed straight through
    /// (`E[s] = p`, so `ds/dp = 1`).
    #[inline]
    fn encoder_spike(self, margin: f64) -> (f64, f64) {
        match self.spike_fn {
            SpikeFn::Heaviside => (SpikeFn::Heaviside.apply(margin), 1.0),
            smooth @ SpikeFn::Smooth { width } => (smooth.apply(margin), atan_surrogate(margin, width)),
        }
    }
}

impl Default for ForwardMode {
    fn default() -> Self {
        Self::hard(2.0)
    }
}

/// Mutable state of a pathway.
#[derive(Debug, Clone, PartialEq)]
pub struct PathwayState {
    pub neurons: Vec<LifState>,
    /// Adaptive thresholds (integral pathway only).
    pub thetas: Vec<f64>,
    /// Readouts ordered as `[pos, neg]` per readout pair.
    pub readouts: Vec<f64>,
    /// Spikes of the previous step, one per neuron.
    pub last_spikes: Vec<f64>,
}

impl PathwayState {
    pub fn new(params: &PathwayParams) -> Self {
        let neurons = params.neurons();
        let thetas = if params.kind == PathwayKind::Integral {
            vec![params.threshold; neurons]
        } else {
            Vec::new()
        };
        Self {
            neurons: vec![LifState::default(); neurons],
            thetas,
            readouts: vec![0.0; 2 * params.kind.readout_pairs()],
            last_spikes: vec![0.0; neurons],
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct EncoderRecord {
    /// Whether the tuning curve was in its linear (unclamped) region.
    pub inside: [bool; 2],
    pub dsdp: [f64; 2],
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct NeuronRecord {
    pub trace: LifTrace,
    /// Surrogate derivative at the pre-activation, zero while refractory.
    pub dsdu: f64,
    /// Encoder spike sum multiplying `w_in`.
    pub drive: f64,
    /// Threshold update direction (integral pathway).
    pub delta: f64,
    pub theta_free: bool,
}

/// Forward values of a pathway over a window of steps.
#[derive(Debug, Clone, Default)]
pub(crate) struct Tape {
    pub errors: Vec<f64>,
    pub encoders: Vec<EncoderRecord>,
    pub neurons: Vec<NeuronRecord>,
    /// Readout values at the start of each step.
    pub readouts_prev: Vec<f64>,
    /// `pos - neg` per readout pair after the update of each step.
    pub pair_diffs: Vec<f64>,
    pub outputs: Vec<f64>,
}

impl Tape {
    pub fn steps(&self) -> usize {
        self.errors.len()
    }
}

/// Advance the pathway by one step given the encoder draws of every group.
pub(crate) fn advance(
    p: &PathwayParams,
    st: &mut PathwayState,
    error: f64,
    draws: &[(f64, f64)],
    mode: ForwardMode,
    mut tape: Option<&mut Tape>,
) -> f64 {
    let per_group = p.kind.neurons_per_group();
    let weights = p.kind.weights_per_group();
    let integral = p.kind == PathwayKind::Integral;
    let mut readout_in = [0.0f64; 4];

    if let Some(t) = tape.as_deref_mut() {
        t.errors.push(error);
        t.readouts_prev.extend_from_slice(&st.readouts);
    }

    for g in 0..p.groups {
        let enc = EncoderParams::new(p.alpha[g], p.beta[g]);
        let (draw_pos, draw_neg) = draws[g];
        let raw_pos = tuning_raw(error, enc, Side::Positive);
        let raw_neg = tuning_raw(error, enc, Side::Negative);
        let (s_pos, dsdp_pos) = mode.encoder_spike(raw_pos.clamp(0.0, 1.0) - draw_pos);
        let (s_neg, dsdp_neg) = mode.encoder_spike(raw_neg.clamp(0.0, 1.0) - draw_neg);
        if let Some(t) = tape.as_deref_mut() {
            t.encoders.push(EncoderRecord {
                inside: [raw_pos > 0.0 && raw_pos < 1.0, raw_neg > 0.0 && raw_neg < 1.0],
                dsdp: [dsdp_pos, dsdp_neg],
            });
        }

        for slot in 0..per_group {
            let n = g * per_group + slot;
            let w = g * weights + slot / 2;
            let side = PathwayKind::slot_side(slot);
            let drive = match (integral, side) {
                (true, _) => s_pos + s_neg,
                (false, Side::Positive) => s_pos,
                (false, Side::Negative) => s_neg,
            };
            let input = p.w_in[w] * drive + p.recurrent_weight * st.last_spikes[n];

            let (threshold, theta_free, delta) = if integral {
                let (theta, free) = adapt_threshold(
                    st.thetas[n],
                    p.threshold,
                    p.theta_add[g],
                    p.theta_decay,
                    side,
                    s_pos,
                    s_neg,
                );
                st.thetas[n] = theta;
                let delta = match side {
                    Side::Positive => s_neg - s_pos,
                    Side::Negative => s_pos - s_neg,
                };
                (theta, free, delta)
            } else {
                (p.threshold, true, 0.0)
            };

            let trace = lif_kernel(
                &mut st.neurons[n],
                p.tau_mem[n],
                p.tau_syn[n],
                threshold,
                p.refractory_steps,
                input,
                mode.spike_fn,
            );
            st.last_spikes[n] = trace.spike;
            readout_in[slot] += p.w_out[w] * trace.spike;

            if let Some(t) = tape.as_deref_mut() {
                let dsdu = if trace.gated {
                    atan_surrogate(trace.v1 - trace.threshold, mode.surrogate_width)
                } else {
                    0.0
                };
                t.neurons.push(NeuronRecord {
                    trace,
                    dsdu,
                    drive,
                    delta,
                    theta_free,
                });
            }
        }
    }

    let mut out = 0.0;
    for pair in 0..p.kind.readout_pairs() {
        let decay = p.readout_decay[pair];
        let pos = leaky_readout_step(st.readouts[2 * pair], decay, readout_in[2 * pair]);
        let neg = leaky_readout_step(st.readouts[2 * pair + 1], decay, readout_in[2 * pair + 1]);
        st.readouts[2 * pair] = pos;
        st.readouts[2 * pair + 1] = neg;
        let diff = pos - neg;
        out += p.kind.pair_sign(pair) * diff;
        if let Some(t) = tape.as_deref_mut() {
            t.pair_diffs.push(diff);
        }
    }
    let y = p.gain[0] * out;
    if let Some(t) = tape {
        t.outputs.push(y);
    }
    y
}

/// RNG sub-stream offset of each pathway so that group `g` of a pathway always
/// sees the same noise whatever the size of the other pathways.
pub fn stream_base(kind: PathwayKind) -> u64 {
    match kind {
        PathwayKind::Proportional => 0,
        PathwayKind::Integral => 1 << 32,
        PathwayKind::Derivative => 2 << 32,
    }
}

/// Stream base reserved for the recurrent-integrator baseline.
pub const RECURRENT_STREAM_BASE: u64 = 3 << 32;

/// A pathway with its own state and per-group random streams.
#[derive(Debug, Clone)]
pub struct Pathway {
    pub params: PathwayParams,
    state: PathwayState,
    rngs: Vec<RngStream>,
    draws: Vec<(f64, f64)>,
    stream_base: u64,
    mode: ForwardMode,
}

impl Pathway {
    pub fn new(params: PathwayParams, seed: u64) -> Self {
        let base = stream_base(params.kind);
        Self::with_stream_base(params, seed, base)
    }

    pub fn with_stream_base(params: PathwayParams, seed: u64, stream_base: u64) -> Self {
        let state = PathwayState::new(&params);
        let rngs = (0..params.groups)
            .map(|g| RngStream::substream(seed, stream_base + g as u64))
            .collect();
        let draws = vec![(0.0, 0.0); params.groups];
        Self {
            params,
            state,
            rngs,
            draws,
            stream_base,
            mode: ForwardMode::default(),
        }
    }

    pub fn kind(&self) -> PathwayKind {
        self.params.kind
    }

    /// Advance one step on `error`, returning the decoded output.
    pub fn step(&mut self, error: f64) -> f64 {
        for (d, rng) in self.draws.iter_mut().zip(self.rngs.iter_mut()) {
            *d = rng.draw_pair();
        }
        advance(&self.params, &mut self.state, error, &self.draws, self.mode, None)
    }

    /// Zero all state and restart the random streams from `seed`.
    pub fn reset(&mut self, seed: u64) {
        self.state = PathwayState::new(&self.params);
        for rng in &mut self.rngs {
            rng.reseed(seed);
        }
    }

    /// Swap the positive and negative draw of every group from now on.
    pub fn mirror_streams(&mut self) {
        let seed = self.rngs.first().map(RngStream::seed).unwrap_or(0);
        self.rngs = (0..self.params.groups)
            .map(|g| {
                let mut rng = RngStream::substream(seed, self.stream_base + g as u64).mirrored();
                rng.seek(self.rngs[g].position());
                rng
            })
            .collect();
    }

    pub fn state(&self) -> &PathwayState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut PathwayState {
        &mut self.state
    }

    /// `pos - neg` of the first readout pair, before the output gain.
    pub fn readout_difference(&self) -> f64 {
        self.state.readouts[0] - self.state.readouts[1]
    }

    /// Fraction of neurons that spiked in the last step.
    pub fn spike_fraction(&self) -> f64 {
        let n = self.state.last_spikes.len().max(1);
        self.state.last_spikes.iter().sum::<f64>() / n as f64
    }

    pub fn neuron_count(&self) -> usize {
        self.params.neurons()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_error_zero_alpha_is_silent() {
        let params = PathwayParams::uniform(PathwayKind::Proportional, 8);
        let mut path = Pathway::new(params, 1);
        for _ in 0..200 {
            assert_eq!(path.step(0.0), 0.0);
        }
    }

    #[test]
    fn reset_restores_initial_trajectory() {
        let params = PathwayParams::uniform(PathwayKind::Integral, 4);
        let mut path = Pathway::new(params, 3);
        let first: Vec<f64> = (0..100).map(|k| path.step((k as f64 * 0.1).sin())).collect();
        path.reset(3);
        let again: Vec<f64> = (0..100).map(|k| path.step((k as f64 * 0.1).sin())).collect();
        assert_eq!(first, again);
        assert!(path.state().thetas.iter().all(|t| (0.0..=2.0).contains(t)));
    }

    #[test]
    fn recurrent_weight_zero_matches_plain_pathway() {
        let params = PathwayParams::uniform(PathwayKind::Proportional, 6);
        let mut plain = Pathway::new(params.clone(), 5);
        let mut rec = Pathway::with_stream_base(params, 5, 0);
        rec.params.recurrent_weight = 0.0;
        for k in 0..300 {
            let e = 0.6 * (k as f64 * 0.05).sin();
            assert_eq!(plain.step(e), rec.step(e));
        }
    }
}
