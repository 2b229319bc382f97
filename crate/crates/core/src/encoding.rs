//! Stochastic rate encoding of a scalar into a positive and a negative spike channel.
//!
//! Each channel has a linear tuning curve clamped to a valid probability:
//! `P = clamp(r * beta * x + alpha, 0, 1)` with `r = +1` for the positive and
//! `r = -1` for the negative channel. A spike is emitted when a uniform draw
//! falls strictly below that probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::neuron::{Side, SpikePair};

/// Tuning-curve parameters of one encoding group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderParams {
    /// Offset of the tuning curve (spike probability at zero input).
    pub alpha: f64,
    /// Gain per input unit. Must be positive.
    pub beta: f64,
}

impl EncoderParams {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }
}

/// Unclamped value of the tuning curve.
#[inline]
pub(crate) fn tuning_raw(value: f64, params: EncoderParams, side: Side) -> f64 {
    side.sign() * params.beta * value + params.alpha
}

/// Spike probability of the encoding neuron on `side` for `value`.
#[inline]
pub fn spike_probability(value: f64, params: EncoderParams, side: Side) -> f64 {
    tuning_raw(value, params, side).clamp(0.0, 1.0)
}

/// A reproducible stream of uniform draws.
///
/// A stream is identified by `(seed, stream)`; `position` counts the draws
/// consumed so far. Two streams with the same identity at the same position
/// produce the same future draws.
///
/// A mirrored stream hands out each pair of draws in swapped order, so an
/// encoder fed from it sees the positive-channel draw on the negative channel
/// and vice versa.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    position: u64,
    mirrored: bool,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    /// Independent sub-stream `stream` of `seed`.
    pub fn substream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            seed,
            stream,
            position: 0,
            mirrored: false,
            rng,
        }
    }

    pub fn mirrored(mut self) -> Self {
        self.mirrored = true;
        self
    }

    pub fn is_mirrored(&self) -> bool {
        self.mirrored
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of draws consumed.
    pub fn position(&self) -> u64 {
        self.position
    }

    /// Jump to an absolute draw position.
    pub fn seek(&mut self, position: u64) {
        // each f64 draw consumes one u64, i.e. two 32-bit words
        self.rng.set_word_pos(u128::from(position) * 2);
        self.position = position;
    }

    /// Restart the stream from position zero under a new seed.
    pub fn reseed(&mut self, seed: u64) {
        let mirrored = self.mirrored;
        *self = Self::substream(seed, self.stream);
        self.mirrored = mirrored;
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.position += 1;
        self.rng.gen::<f64>()
    }

    /// Draws for the positive and negative channel, in that order.
    #[inline]
    pub fn draw_pair(&mut self) -> (f64, f64) {
        let first = self.uniform();
        let second = self.uniform();
        if self.mirrored {
            (second, first)
        } else {
            (first, second)
        }
    }
}

/// Encode `value` into one spike per channel using two independent draws.
pub fn encode(value: f64, params: EncoderParams, rng: &mut RngStream) -> SpikePair {
    let (draw_pos, draw_neg) = rng.draw_pair();
    encode_with_draws(value, params, draw_pos, draw_neg)
}

/// Deterministic encoder given the uniform draws of both channels.
#[inline]
pub fn encode_with_draws(value: f64, params: EncoderParams, draw_pos: f64, draw_neg: f64) -> SpikePair {
    SpikePair {
        pos: draw_pos < spike_probability(value, params, Side::Positive),
        neg: draw_neg < spike_probability(value, params, Side::Negative),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn probability_examples() {
        let zero = EncoderParams::new(0.0, 1.0);
        assert_eq!(spike_probability(0.0, zero, Side::Positive), 0.0);
        assert_eq!(spike_probability(0.0, zero, Side::Negative), 0.0);

        let p = EncoderParams::new(0.2, 1.0);
        assert!((spike_probability(0.5, p, Side::Positive) - 0.7).abs() < 1e-15);
        assert_eq!(spike_probability(0.5, p, Side::Negative), 0.0);
        assert_eq!(spike_probability(10.0, p, Side::Positive), 1.0);
    }

    #[test]
    fn certain_probabilities_ignore_draws() {
        let mut rng = RngStream::new(3);
        let p = EncoderParams::new(0.0, 1.0);
        for _ in 0..1000 {
            let s = encode(5.0, p, &mut rng);
            assert!(s.pos && !s.neg);
        }
    }

    #[test]
    fn empirical_rate_within_binomial_band() {
        let p = EncoderParams::new(0.2, 1.0);
        let mut rng = RngStream::new(11);
        let n = 100_000;
        let hits = (0..n).filter(|_| encode(0.5, p, &mut rng).pos).count();
        let rate = hits as f64 / f64::from(n);
        let band = 3.0 * (0.7f64 * 0.3 / f64::from(n)).sqrt();
        assert!((rate - 0.7).abs() < band, "rate {rate}");
    }

    #[test]
    fn seek_reproduces_draws() {
        let mut a = RngStream::substream(5, 2);
        let draws: Vec<f64> = (0..20).map(|_| a.uniform()).collect();
        let mut b = RngStream::substream(5, 2);
        b.seek(7);
        assert_eq!(b.position(), 7);
        let tail: Vec<f64> = (0..13).map(|_| b.uniform()).collect();
        assert_eq!(tail, draws[7..]);
    }

    #[test]
    fn substreams_differ() {
        let mut a = RngStream::substream(5, 0);
        let mut b = RngStream::substream(5, 1);
        assert_ne!(a.uniform(), b.uniform());
    }

    #[test]
    fn mirrored_stream_swaps_pairs() {
        let mut a = RngStream::new(9);
        let mut b = RngStream::new(9).mirrored();
        for _ in 0..10 {
            let (p, n) = a.draw_pair();
            assert_eq!(b.draw_pair(), (n, p));
        }
    }

    proptest! {
        #[test]
        fn tuning_curves_are_mirror_images(v in -10.0f64..10.0, alpha in -1.0f64..1.0, beta in 0.01f64..10.0) {
            let p = EncoderParams::new(alpha, beta);
            prop_assert_eq!(
                spike_probability(v, p, Side::Positive),
                spike_probability(-v, p, Side::Negative)
            );
        }

        #[test]
        fn probability_is_a_probability(v in -1e6f64..1e6, alpha in -2.0f64..2.0, beta in 0.0f64..100.0) {
            let p = EncoderParams::new(alpha, beta);
            for side in [Side::Positive, Side::Negative] {
                let prob = spike_probability(v, p, side);
                prop_assert!((0.0..=1.0).contains(&prob));
            }
        }

        #[test]
        fn offset_sets_rate_at_zero(alpha in -1.0f64..1.0) {
            let p = EncoderParams::new(alpha, 1.0);
            let expected = alpha.clamp(0.0, 1.0);
            prop_assert_eq!(spike_probability(0.0, p, Side::Positive), expected);
            prop_assert_eq!(spike_probability(0.0, p, Side::Negative), expected);
        }
    }
}
