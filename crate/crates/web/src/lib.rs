//! WebAssembly bindings for the single-page demo in `www/`.
//!
//! Three operations: a spike raster of the input encoder, the integral
//! pathway's response to a constant error, and closed-loop flights of the
//! disturbed double integrator. Everything returns flat `f64`/`u8` arrays so
//! the page can plot them without a serialization layer.

use wasm_bindgen::prelude::*;

use snn_pid::experiments::{recurrent_baseline, ExperimentConfig};
use snn_pid::network::{NetworkSize, Pathway, PathwayKind, PathwayParams, PidNetwork};
use snn_pid::plants::{
    run_episode, ControllerVariant, DoubleIntegrator, EpisodeError, PidOracle, Schedule, SpikingController,
};
use snn_pid::train::{calibrate, TrainingSequence};
use snn_pid::{encode, spike_probability, EncoderParams, RngStream, Side};

/// Spike raster of `values`, one encoding per step. Bit 0 is the positive
/// channel, bit 1 the negative one.
#[wasm_bindgen]
pub fn encoder_raster(values: &[f64], alpha: f64, beta: f64, seed: u32) -> Vec<u8> {
    let params = EncoderParams::new(alpha, beta);
    let mut rng = RngStream::substream(u64::from(seed), 0);
    values
        .iter()
        .map(|&x| {
            let s = encode(x, params, &mut rng);
            u8::from(s.pos) | (u8::from(s.neg) << 1)
        })
        .collect()
}

/// Tuning curve `[p_pos, p_neg]` at `value`.
#[wasm_bindgen]
pub fn spike_probabilities(value: f64, alpha: f64, beta: f64) -> Vec<f64> {
    let params = EncoderParams::new(alpha, beta);
    vec![
        spike_probability(value, params, Side::Positive),
        spike_probability(value, params, Side::Negative),
    ]
}

/// Integral pathway driven by a constant error. Returns `steps` outputs
/// followed by `steps` mean positive-side thresholds.
#[wasm_bindgen]
pub fn integral_trace(error: f64, groups: usize, theta_add: f64, steps: usize, seed: u32) -> Vec<f64> {
    let mut params = PathwayParams::uniform(PathwayKind::Integral, groups.max(1));
    params.theta_add.fill(theta_add);
    let mut pathway = Pathway::new(params, u64::from(seed));
    let mut out = Vec::with_capacity(2 * steps);
    let mut thetas = Vec::with_capacity(steps);
    for _ in 0..steps {
        out.push(pathway.step(error));
        let t = &pathway.state().thetas;
        thetas.push(t.iter().step_by(2).sum::<f64>() / (t.len() / 2) as f64);
    }
    out.extend(thetas);
    out
}

/// A calibrated network and the logs it was calibrated on, kept between
/// flights so the page only pays for calibration once.
#[wasm_bindgen]
pub struct Flights {
    cfg: ExperimentConfig,
    network: PidNetwork,
    logs: Vec<TrainingSequence>,
}

#[wasm_bindgen]
impl Flights {
    #[wasm_bindgen(constructor)]
    pub fn new(groups: usize, seed: u32) -> Flights {
        let cfg = ExperimentConfig {
            groups: groups.max(1),
            seed: u64::from(seed),
            sequences: 4,
            ..ExperimentConfig::default()
        };
        let logs = cfg.training_logs();
        let mut network = PidNetwork::new(NetworkSize::uniform(cfg.groups), cfg.seed);
        calibrate(&mut network, &logs, cfg.seed);
        Flights { cfg, network, logs }
    }

    /// Position trace of one controller (`pd-only`, `recurrent`, `iwta` or
    /// `pid-oracle`). A diverged flight returns the prefix it managed.
    pub fn fly(
        &self,
        variant: &str,
        disturbance: f64,
        recurrent_weight: f64,
        steps: usize,
        seed: u32,
    ) -> Result<Vec<f64>, String> {
        let variant: ControllerVariant = variant.parse().map_err(|e| format!("{e}"))?;
        let net = self.network.clone();
        let mut controller: Box<dyn snn_pid::plants::Controller> = match variant {
            ControllerVariant::PdOnly => Box::new(SpikingController::pd_only(net)),
            ControllerVariant::Iwta => Box::new(SpikingController::iwta(net)),
            ControllerVariant::Recurrent => Box::new(SpikingController::recurrent(
                net,
                recurrent_baseline(&self.logs, self.cfg.groups, recurrent_weight, self.cfg.seed),
            )),
            ControllerVariant::PidOracle => Box::new(PidOracle::new(self.cfg.plant.default_gains(), self.cfg.dt)),
        };
        let mut plant = DoubleIntegrator::new(
            self.cfg.initial_position,
            self.cfg.initial_velocity,
            self.cfg.dt,
            disturbance,
        );
        let traj = match run_episode(
            &mut plant,
            controller.as_mut(),
            &Schedule::Constant(self.cfg.setpoint),
            steps,
            u64::from(seed),
        ) {
            Ok(t) => t,
            Err(EpisodeError::Diverged { prefix, .. }) => prefix,
            Err(e) => return Err(e.to_string()),
        };
        Ok(traj.rows.iter().map(|r| r.y).collect())
    }

    pub fn dt(&self) -> f64 {
        self.cfg.dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_matches_the_tuning_curve_at_the_extremes() {
        let r = encoder_raster(&[2.0, -2.0, 0.0], 0.0, 1.0, 1);
        assert_eq!(r, [1, 2, 0]);
        assert_eq!(spike_probabilities(0.5, 0.1, 1.0), [0.6, 0.0]);
    }

    #[test]
    fn integral_output_keeps_growing_under_constant_error() {
        let steps = 400;
        let trace = integral_trace(0.05, 20, 0.01, steps, 3);
        let (out, theta) = trace.split_at(steps);
        let early = out[50..100].iter().sum::<f64>();
        let late = out[300..350].iter().sum::<f64>();
        assert!(late > early, "{early} {late}");
        assert!(theta[steps - 1] < theta[0]);
    }

    #[test]
    fn flights_cover_every_variant_and_reject_unknown_ones() {
        let flights = Flights::new(8, 0);
        for v in ["pd-only", "recurrent", "iwta", "pid-oracle"] {
            let y = flights.fly(v, 4.0, 0.3, 500, 1).unwrap();
            assert!(!y.is_empty() && y.iter().all(|v| v.is_finite()), "{v}");
        }
        assert!(flights.fly("lqr", 4.0, 0.3, 10, 1).is_err());
    }

    #[test]
    fn integral_term_removes_most_of_the_offset() {
        let flights = Flights::new(40, 0);
        let offset = |v: &str| {
            let y = flights.fly(v, 4.0, 0.45, 5000, 1).unwrap();
            (y[4000..].iter().sum::<f64>() / 1000.0).abs()
        };
        let (pd, iwta) = (offset("pd-only"), offset("iwta"));
        assert!(iwta < 0.5 * pd, "pd {pd} iwta {iwta}");
    }
}
