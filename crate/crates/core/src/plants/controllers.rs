//! Controllers that can close the loop: the spiking network in its variants
//! and the conventional PID.

use std::fmt;
use std::str::FromStr;

use crate::network::{ControllerOutput, Pathway, PathwayKind, PathwayParams, PidNetwork, RECURRENT_STREAM_BASE};
use crate::train::{evaluation_seed, TrainingSequence};

use super::oracle::PidOracle;

pub trait Controller {
    /// Zero all state; spiking controllers restart their noise from `seed`.
    fn reset(&mut self, seed: u64);
    fn step(&mut self, setpoint: f64, measurement: f64) -> ControllerOutput;
}

impl Controller for PidOracle {
    fn reset(&mut self, _seed: u64) {
        PidOracle::reset(self);
    }

    fn step(&mut self, setpoint: f64, measurement: f64) -> ControllerOutput {
        PidOracle::step(self, setpoint, measurement)
    }
}

impl Controller for PidNetwork {
    fn reset(&mut self, seed: u64) {
        PidNetwork::reset(self, seed);
    }

    fn step(&mut self, setpoint: f64, measurement: f64) -> ControllerOutput {
        self.controller_step(setpoint, measurement)
    }
}

/// Integrator built from a proportional-style pathway whose neurons also
/// receive their own previous spike through `recurrent_weight`.
///
/// Too small a weight leaks, too large a weight drives every neuron to fire
/// on every step.
#[derive(Debug, Clone)]
pub struct RecurrentIntegrator {
    pathway: Pathway,
}

impl RecurrentIntegrator {
    pub fn new(params: PathwayParams, seed: u64) -> Self {
        Self {
            pathway: Pathway::with_stream_base(params, seed, RECURRENT_STREAM_BASE),
        }
    }

    /// Default proportional parameters with the given recurrent weight.
    pub fn with_weight(groups: usize, recurrent_weight: f64, seed: u64) -> Self {
        let mut params = PathwayParams::uniform(PathwayKind::Proportional, groups);
        params.recurrent_weight = recurrent_weight;
        Self::new(params, seed)
    }

    pub fn params(&self) -> &PathwayParams {
        &self.pathway.params
    }

    pub fn params_mut(&mut self) -> &mut PathwayParams {
        &mut self.pathway.params
    }

    pub fn step(&mut self, error: f64) -> f64 {
        self.pathway.step(error)
    }

    pub fn reset(&mut self, seed: u64) {
        self.pathway.reset(seed);
    }

    /// Fraction of neurons that fired on the last step.
    pub fn spike_fraction(&self) -> f64 {
        self.pathway.spike_fraction()
    }

    /// Least-squares output gain against the integral targets of a dataset.
    pub fn fit_gain(&mut self, dataset: &[TrainingSequence], seed: u64) {
        self.pathway.params.gain[0] = 1.0;
        let (mut num, mut den) = (0.0, 0.0);
        for (k, seq) in dataset.iter().enumerate() {
            self.reset(evaluation_seed(seed, k));
            for (e, target) in seq.errors().into_iter().zip(&seq.i_target) {
                let y = self.step(e);
                num += y * target;
                den += y * y;
            }
        }
        if den > 0.0 {
            self.pathway.params.gain[0] = (num / den).max(0.0);
        }
    }
}

/// Which controller closes the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerVariant {
    /// Spiking P and D pathways, no integral term.
    PdOnly,
    /// Spiking P and D pathways plus the recurrent integrator.
    Recurrent,
    /// The full spiking network with the threshold-adapting integral pathway.
    Iwta,
    /// The conventional PID.
    PidOracle,
}

impl ControllerVariant {
    pub const ALL: [ControllerVariant; 4] = [Self::PdOnly, Self::Recurrent, Self::Iwta, Self::PidOracle];

    pub fn name(self) -> &'static str {
        match self {
            Self::PdOnly => "pd-only",
            Self::Recurrent => "recurrent",
            Self::Iwta => "iwta",
            Self::PidOracle => "pid-oracle",
        }
    }
}

impl fmt::Display for ControllerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown controller variant {0:?} (expected pd-only, recurrent, iwta or pid-oracle)")]
pub struct UnknownVariant(pub String);

impl FromStr for ControllerVariant {
    type Err = UnknownVariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone)]
enum IntegralTerm {
    Off,
    Iwta,
    Recurrent(Box<RecurrentIntegrator>),
}

/// The spiking network with a selectable integral term.
#[derive(Debug, Clone)]
pub struct SpikingController {
    pub network: PidNetwork,
    integral: IntegralTerm,
}

impl SpikingController {
    pub fn pd_only(network: PidNetwork) -> Self {
        Self {
            network,
            integral: IntegralTerm::Off,
        }
    }

    pub fn iwta(network: PidNetwork) -> Self {
        Self {
            network,
            integral: IntegralTerm::Iwta,
        }
    }

    pub fn recurrent(network: PidNetwork, integrator: RecurrentIntegrator) -> Self {
        Self {
            network,
            integral: IntegralTerm::Recurrent(Box::new(integrator)),
        }
    }

    pub fn recurrent_integrator(&self) -> Option<&RecurrentIntegrator> {
        match &self.integral {
            IntegralTerm::Recurrent(r) => Some(r),
            _ => None,
        }
    }
}

impl Controller for SpikingController {
    fn reset(&mut self, seed: u64) {
        self.network.reset(seed);
        if let IntegralTerm::Recurrent(r) = &mut self.integral {
            r.reset(seed);
        }
    }

    fn step(&mut self, setpoint: f64, measurement: f64) -> ControllerOutput {
        let e = setpoint - measurement;
        let p = self.network.p_pathway_step(e);
        let i = match &mut self.integral {
            IntegralTerm::Off => 0.0,
            IntegralTerm::Iwta => self.network.i_pathway_step(e),
            IntegralTerm::Recurrent(r) => r.step(e),
        };
        let d = self.network.d_pathway_step(e);
        ControllerOutput::new(p, i, d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkSize;

    #[test]
    fn variant_names_round_trip() {
        for v in ControllerVariant::ALL {
            assert_eq!(v.name().parse::<ControllerVariant>(), Ok(v));
        }
        assert!("pid".parse::<ControllerVariant>().is_err());
    }

    #[test]
    fn zero_recurrent_weight_is_a_proportional_pathway() {
        let params = PathwayParams::uniform(PathwayKind::Proportional, 8);
        let mut plain = Pathway::with_stream_base(params.clone(), 2, RECURRENT_STREAM_BASE);
        let mut rec = RecurrentIntegrator::new(params, 2);
        for k in 0..500 {
            let e = 0.5 * (k as f64 * 0.02).sin();
            assert_eq!(plain.step(e), rec.step(e));
        }
    }

    #[test]
    fn recurrent_weight_leaks_or_saturates() {
        let run = |w: f64| {
            let mut r = RecurrentIntegrator::with_weight(20, w, 1);
            let mut out = Vec::new();
            for _ in 0..3000 {
                out.push(r.step(0.2));
            }
            (out, r.spike_fraction())
        };
        // undertuned: the output plateaus
        let (leaky, _) = run(0.05);
        let late = |o: &[f64], a: usize, b: usize| o[a..b].iter().sum::<f64>() / (b - a) as f64;
        assert!((late(&leaky, 2000, 2500) - late(&leaky, 2500, 3000)).abs() < 0.1 * late(&leaky, 2500, 3000));
        // overtuned: every neuron fires every step
        let mut r = RecurrentIntegrator::with_weight(20, 5.0, 1);
        let mut fractions = Vec::new();
        for k in 0..3000 {
            r.step(match k {
                0..=49 => 0.5,
                50..=99 => -0.5,
                _ => 0.0,
            });
            fractions.push(r.spike_fraction());
        }
        assert!(fractions[2900..].iter().all(|&f| f == 1.0));
    }

    #[test]
    fn pd_only_has_no_integral_term() {
        let mut c = SpikingController::pd_only(PidNetwork::new(NetworkSize::uniform(4), 3));
        for _ in 0..200 {
            assert_eq!(c.step(0.5, 0.0).i_term, 0.0);
        }
    }
}
