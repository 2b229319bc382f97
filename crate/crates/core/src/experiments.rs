//! End-to-end pipelines shared by the command-line harness, the browser demo
//! and the acceptance tests. Nothing here touches the filesystem.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::encoding::{encode, spike_probability, EncoderParams, RngStream};
use crate::network::{NetworkSize, PathwayKind, PathwayParams, PidNetwork};
use crate::neuron::Side;
use crate::plants::{
    derivative_sine_sweep, run_episode, settle_time, sine_sequences, steady_state_error, synthesize_logs,
    Controller, ControllerVariant, DoubleIntegrator, EpisodeError, PidOracle, PlantKind, RatePlant,
    RecurrentIntegrator, Schedule, SpikingController, SweepPoint, SynthConfig, Trajectory,
};
use crate::stats;
use crate::train::{
    bptt_train, calibrate, evaluate_head, evaluation_seed, fit_gain, EpochLoss, Optimizer, TrainConfig, TrainError,
    TrainReport, TrainingSequence,
};

/// Flat experiment settings. Every key is optional in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Groups per pathway.
    pub groups: usize,
    pub plant: PlantKind,

    pub epochs: usize,
    /// Truncated-BPTT window in steps, 0 for whole sequences.
    pub horizon: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Plain gradient descent with this momentum instead of scaled Adam.
    pub momentum: Option<f64>,
    pub surrogate_width: f64,
    /// Keep each head's best epoch rather than its last.
    pub keep_best: bool,

    /// Synthetic log size.
    pub sequences: usize,
    pub sequence_steps: usize,
    pub dt: f64,

    pub initial_position: f64,
    pub initial_velocity: f64,
    pub disturbance: f64,
    pub setpoint: f64,
    pub episode_steps: usize,
    pub eval_seeds: usize,
    /// Fraction of the episode averaged for the steady-state error.
    pub steady_fraction: f64,
    pub settle_band: f64,
    /// Grid searched for the recurrent-integrator baseline.
    pub recurrent_weights: Vec<f64>,

    pub sweep_freqs: Vec<f64>,
    pub sweep_amplitude: f64,
    pub sweep_steps: usize,
    /// Spacing of the training sines inside a band.
    pub sweep_train_spacing: f64,
    /// Scale of the derivative target.
    pub derivative_gain: f64,

    pub encoder_alpha: f64,
    pub encoder_beta: f64,
    pub encode_draws: usize,

    pub bench_steps: usize,
    pub bench_warmup: usize,
    pub bench_repeats: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            groups: 40,
            plant: PlantKind::DoubleIntegrator,
            epochs: 10,
            horizon: 1000,
            batch_size: 4,
            learning_rate: 0.005,
            momentum: None,
            surrogate_width: 2.0,
            keep_best: true,
            sequences: 8,
            sequence_steps: 2500,
            dt: crate::DEFAULT_DT,
            initial_position: 0.3,
            initial_velocity: 0.0,
            disturbance: 4.0,
            setpoint: 0.0,
            episode_steps: 5000,
            eval_seeds: 5,
            steady_fraction: 0.2,
            settle_band: 0.05,
            recurrent_weights: (0..=12).map(|k| 0.05 * f64::from(k)).collect(),
            sweep_freqs: (2..=10).map(f64::from).collect(),
            sweep_amplitude: 1.0,
            sweep_steps: 2500,
            sweep_train_spacing: 0.5,
            derivative_gain: 1.0 / (2.0 * PI * 6.0),
            encoder_alpha: 0.0,
            encoder_beta: 1.0,
            encode_draws: 10_000,
            bench_steps: 20_000,
            bench_warmup: 2_000,
            bench_repeats: 5,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Invalid(String),
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if self.groups == 0 {
            return bad("groups must be at least 1");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.sequences == 0 || self.sequence_steps < 2 {
            return bad("synthetic logs need at least one sequence of two steps");
        }
        if self.eval_seeds == 0 {
            return bad("eval_seeds must be at least 1");
        }
        if !(self.steady_fraction > 0.0 && self.steady_fraction <= 1.0) {
            return bad("steady_fraction must lie in (0, 1]");
        }
        if self.bench_repeats == 0 {
            return bad("bench_repeats must be at least 1");
        }
        self.train_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            horizon: self.horizon,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: match self.momentum {
                Some(momentum) => Optimizer::Momentum { momentum },
                None => Optimizer::default(),
            },
            surrogate_width: self.surrogate_width,
            seed: self.seed,
            heads: PathwayKind::ALL.to_vec(),
            keep_best: self.keep_best,
        }
    }

    pub fn synth_config(&self, seed: u64) -> SynthConfig {
        SynthConfig {
            sequences: self.sequences,
            steps: self.sequence_steps,
            dt: self.dt,
            seed,
            ..SynthConfig::for_plant(self.plant)
        }
    }

    /// Training logs for the configured plant.
    pub fn training_logs(&self) -> Vec<TrainingSequence> {
        synthesize_logs(&self.synth_config(self.seed))
    }

    /// Logs the network never trains on.
    pub fn held_out_logs(&self) -> Vec<TrainingSequence> {
        synthesize_logs(&SynthConfig {
            sequences: 2,
            ..self.synth_config(self.seed ^ 0x4845_4c44)
        })
    }
}

/// Calibrate a fresh network to the data, then fine-tune it.
///
/// On a numeric failure the error carries the history up to that point.
pub fn train_network(dataset: &[TrainingSequence], cfg: &ExperimentConfig) -> Result<(PidNetwork, TrainReport), TrainError> {
    let mut network = PidNetwork::new(NetworkSize::uniform(cfg.groups), cfg.seed);
    calibrate(&mut network, dataset, cfg.seed);
    let report = bptt_train(&mut network, dataset, &cfg.train_config())?;
    Ok((network, report))
}

fn max_abs_error(dataset: &[TrainingSequence]) -> f64 {
    dataset
        .iter()
        .flat_map(|s| s.errors())
        .fold(0.0, |m: f64, e| m.max(e.abs()))
}

/// Steady-state result of one controller over all evaluation seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantSummary {
    pub variant: ControllerVariant,
    /// Mean steady-state error over seeds.
    pub e_ss: f64,
    pub e_ss_per_seed: Vec<f64>,
    /// Mean settle time over seeds; `None` if any episode diverged.
    pub settle_time_s: Option<f64>,
    /// Weight picked by the grid search (recurrent baseline only).
    pub recurrent_weight: Option<f64>,
    pub diverged: bool,
    /// First-seed trajectory, or its prefix on divergence.
    pub trajectory: Trajectory,
}

/// Outcome of one recurrent weight in the grid search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub weight: f64,
    pub mean_abs_e_ss: f64,
    pub stable: bool,
}

#[derive(Debug, Clone)]
pub struct DoubleIntegratorReport {
    pub variants: Vec<VariantSummary>,
    pub grid: Vec<GridPoint>,
}

impl DoubleIntegratorReport {
    pub fn variant(&self, v: ControllerVariant) -> Option<&VariantSummary> {
        self.variants.iter().find(|s| s.variant == v)
    }
}

fn scenario_plant(cfg: &ExperimentConfig) -> DoubleIntegrator {
    DoubleIntegrator::new(cfg.initial_position, cfg.initial_velocity, cfg.dt, cfg.disturbance)
}

fn episode_seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.eval_seeds).map(|k| evaluation_seed(cfg.seed, k)).collect()
}

fn evaluate_controller<C: Controller + ?Sized>(
    controller: &mut C,
    cfg: &ExperimentConfig,
    seeds: &[u64],
) -> (Vec<f64>, Vec<Option<f64>>, Option<Trajectory>, bool) {
    let schedule = Schedule::Constant(cfg.setpoint);
    let mut e_ss = Vec::new();
    let mut settle = Vec::new();
    let mut first = None;
    let mut diverged = false;
    for &seed in seeds {
        let traj = match run_episode(&mut scenario_plant(cfg), controller, &schedule, cfg.episode_steps, seed) {
            Ok(t) => t,
            Err(EpisodeError::Diverged { prefix, .. }) => {
                diverged = true;
                e_ss.push(f64::NAN);
                settle.push(None);
                first.get_or_insert(prefix);
                continue;
            }
            Err(e) => unreachable!("constant schedule: {e}"),
        };
        e_ss.push(steady_state_error(&traj, cfg.steady_fraction));
        settle.push(settle_time(&traj, cfg.settle_band));
        first.get_or_insert(traj);
    }
    (e_ss, settle, first, diverged)
}

/// Recurrent integrator tuned like the proportional encoder and fit to the
/// integral targets.
pub fn recurrent_baseline(dataset: &[TrainingSequence], groups: usize, weight: f64, seed: u64) -> RecurrentIntegrator {
    let mut r = RecurrentIntegrator::with_weight(groups, weight, seed);
    let max_err = max_abs_error(dataset);
    if max_err > 0.0 {
        r.params_mut().beta.fill(1.0 / max_err);
    }
    r.fit_gain(dataset, seed);
    r
}

/// Grid search of the recurrent weight on selection seeds disjoint from the
/// evaluation seeds. Returns the grid and the best stable weight.
pub fn search_recurrent_weight(
    network: &PidNetwork,
    dataset: &[TrainingSequence],
    cfg: &ExperimentConfig,
) -> (Vec<GridPoint>, Option<f64>) {
    let seeds: Vec<u64> = (0..cfg.eval_seeds)
        .map(|k| evaluation_seed(cfg.seed ^ 0x5345_4c45, k))
        .collect();
    let mut grid = Vec::new();
    for &w in &cfg.recurrent_weights {
        let integrator = recurrent_baseline(dataset, cfg.groups, w, cfg.seed);
        let mut c = SpikingController::recurrent(network.clone(), integrator);
        let (e_ss, _, _, diverged) = evaluate_controller(&mut c, cfg, &seeds);
        let mean_abs = e_ss.iter().map(|e| e.abs()).sum::<f64>() / e_ss.len() as f64;
        grid.push(GridPoint {
            weight: w,
            mean_abs_e_ss: mean_abs,
            stable: !diverged && mean_abs.is_finite(),
        });
    }
    let best = grid
        .iter()
        .filter(|g| g.stable)
        .min_by(|a, b| a.mean_abs_e_ss.total_cmp(&b.mean_abs_e_ss))
        .map(|g| g.weight);
    (grid, best)
}

/// The disturbed double-integrator scenario for each requested controller.
pub fn double_integrator_experiment(
    network: &PidNetwork,
    dataset: &[TrainingSequence],
    variants: &[ControllerVariant],
    cfg: &ExperimentConfig,
) -> DoubleIntegratorReport {
    let seeds = episode_seeds(cfg);
    let mut grid = Vec::new();
    let mut out = Vec::new();
    for &variant in variants {
        let mut weight = None;
        let mut controller: Box<dyn Controller> = match variant {
            ControllerVariant::PdOnly => Box::new(SpikingController::pd_only(network.clone())),
            ControllerVariant::Iwta => Box::new(SpikingController::iwta(network.clone())),
            ControllerVariant::PidOracle => Box::new(PidOracle::new(cfg.plant.default_gains(), cfg.dt)),
            ControllerVariant::Recurrent => {
                let (g, best) = search_recurrent_weight(network, dataset, cfg);
                grid = g;
                let w = best.unwrap_or(0.0);
                weight = Some(w);
                Box::new(SpikingController::recurrent(
                    network.clone(),
                    recurrent_baseline(dataset, cfg.groups, w, cfg.seed),
                ))
            }
        };
        let (e_ss, settle, first, diverged) = evaluate_controller(controller.as_mut(), cfg, &seeds);
        let settle_time_s = settle
            .iter()
            .copied()
            .collect::<Option<Vec<f64>>>()
            .map(|s| stats::mean(&s));
        out.push(VariantSummary {
            variant,
            e_ss: stats::mean(&e_ss),
            e_ss_per_seed: e_ss,
            settle_time_s,
            recurrent_weight: weight,
            diverged,
            trajectory: first.unwrap_or_default(),
        });
    }
    DoubleIntegratorReport { variants: out, grid }
}

/// Inclusive band of training frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Band {
    pub const NARROW: Band = Band {
        low_hz: 5.0,
        high_hz: 7.0,
    };
    pub const WIDE: Band = Band {
        low_hz: 2.0,
        high_hz: 10.0,
    };

    /// Frequencies from `low` to `high` at `spacing`, both ends included.
    pub fn frequencies(&self, spacing: f64) -> Vec<f64> {
        let n = ((self.high_hz - self.low_hz) / spacing + 1e-9).floor() as usize;
        (0..=n).map(|k| self.low_hz + k as f64 * spacing).collect()
    }
}

impl std::str::FromStr for Band {
    type Err = String;

    /// `low:high` in Hz.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("band {s:?} is not of the form low:high"))?;
        let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("band {s:?}: {e}"));
        let band = Band {
            low_hz: parse(a)?,
            high_hz: parse(b)?,
        };
        if !(band.low_hz > 0.0 && band.high_hz >= band.low_hz) {
            return Err(format!("band {s:?} must satisfy 0 < low <= high"));
        }
        Ok(band)
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub band: Band,
    pub params: PathwayParams,
    pub history: Vec<EpochLoss>,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn mean_total(&self) -> f64 {
        stats::mean(&self.points.iter().map(SweepPoint::total).collect::<Vec<_>>())
    }

    pub fn at(&self, freq_hz: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| (p.freq_hz - freq_hz).abs() < 1e-9)
    }
}

/// Train a derivative pathway on sines inside `band`, then sweep it.
pub fn train_derivative_on_band(band: Band, cfg: &ExperimentConfig) -> Result<SweepReport, TrainError> {
    let freqs = band.frequencies(cfg.sweep_train_spacing);
    let data = sine_sequences(&freqs, cfg.sweep_amplitude, cfg.sweep_steps, cfg.dt, cfg.derivative_gain);
    let mut network = PidNetwork::new(NetworkSize::uniform(cfg.groups), cfg.seed);
    let d = network.params_mut(PathwayKind::Derivative);
    if cfg.sweep_amplitude > 0.0 {
        d.beta.fill(1.0 / cfg.sweep_amplitude);
    }
    fit_gain(d, &data, PathwayKind::Derivative, cfg.seed);
    let tc = TrainConfig {
        heads: vec![PathwayKind::Derivative],
        ..cfg.train_config()
    };
    let report = bptt_train(&mut network, &data, &tc)?;
    let params = network.params(PathwayKind::Derivative).clone();
    let points = derivative_sine_sweep(
        &params,
        &cfg.sweep_freqs,
        cfg.sweep_amplitude,
        cfg.sweep_steps,
        cfg.dt,
        cfg.derivative_gain,
        evaluation_seed(cfg.seed, 0),
    );
    Ok(SweepReport {
        band,
        params,
        history: report.history,
        points,
    })
}

/// Held-out tracking quality of one pathway.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MimicryRow {
    pub head: PathwayKind,
    pub mse: f64,
    pub target_variance: f64,
    pub pearson_loss: f64,
}

impl MimicryRow {
    pub fn relative_mse(&self) -> f64 {
        self.mse / self.target_variance
    }
}

/// Per-term comparison against the logged targets of held-out sequences.
pub fn mimicry(network: &PidNetwork, held_out: &[TrainingSequence], seed: u64) -> Vec<MimicryRow> {
    PathwayKind::ALL
        .into_iter()
        .map(|kind| {
            let h = evaluate_head(network, kind, held_out, seed);
            let var = stats::mean(&held_out.iter().map(|s| stats::variance(s.target(kind))).collect::<Vec<_>>());
            MimicryRow {
                head: kind,
                mse: h.mse,
                target_variance: var,
                pearson_loss: h.pearson,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RateTrackReport {
    pub network: PidNetwork,
    pub history: Vec<EpochLoss>,
    pub mimicry: Vec<MimicryRow>,
    /// Closed loop on the first held-out setpoint series.
    pub spiking: Trajectory,
    pub oracle: Trajectory,
}

/// Train on synthetic logs, score per-term mimicry on held-out logs and fly
/// both controllers along a held-out setpoint series.
pub fn rate_track_experiment(cfg: &ExperimentConfig) -> Result<RateTrackReport, TrainError> {
    let data = cfg.training_logs();
    let held = cfg.held_out_logs();
    let (network, report) = train_network(&data, cfg)?;
    let rows = mimicry(&network, &held, cfg.seed);
    let synth = SynthConfig::for_plant(cfg.plant);
    let schedule = Schedule::Series(held[0].setpoint.clone());
    let steps = held[0].len();
    let start = held[0].gyro[0];
    let fly = |c: &mut dyn Controller| -> Trajectory {
        let result = match cfg.plant {
            PlantKind::Rate => run_episode(&mut RatePlant::new(start, 1.0, 0.5, 0.0, cfg.dt), c, &schedule, steps, cfg.seed),
            PlantKind::DoubleIntegrator => {
                run_episode(&mut DoubleIntegrator::new(start, 0.0, cfg.dt, 0.0), c, &schedule, steps, cfg.seed)
            }
        };
        match result {
            Ok(t) => t,
            Err(EpisodeError::Diverged { prefix, .. }) => prefix,
            Err(e) => unreachable!("schedule covers the episode: {e}"),
        }
    };
    let spiking = fly(&mut SpikingController::iwta(network.clone()));
    let oracle = fly(&mut PidOracle::new(synth.gains, cfg.dt));
    Ok(RateTrackReport {
        network,
        history: report.history,
        mimicry: rows,
        spiking,
        oracle,
    })
}

/// One encoded step of the raster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RasterRow {
    pub step: usize,
    pub value: f64,
    pub pos: u8,
    pub neg: u8,
}

/// Empirical spike rate of one channel against the tuning curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateCheck {
    pub value: f64,
    pub side: Side,
    pub expected: f64,
    pub empirical: f64,
    pub draws: usize,
    /// Three binomial standard deviations of the empirical rate.
    pub tolerance: f64,
}

impl RateCheck {
    pub fn within_band(&self) -> bool {
        (self.empirical - self.expected).abs() <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeDemo {
    pub raster: Vec<RasterRow>,
    pub rates: Vec<RateCheck>,
}

/// Encode a value series once per step for the raster, then estimate the
/// spike rate of each distinct value from `draws` fresh encodings.
pub fn encode_demo(values: &[f64], params: EncoderParams, draws: usize, seed: u64) -> EncodeDemo {
    let mut rng = RngStream::substream(seed, 0);
    let raster = values
        .iter()
        .enumerate()
        .map(|(step, &value)| {
            let s = encode(value, params, &mut rng);
            RasterRow {
                step,
                value,
                pos: s.pos as u8,
                neg: s.neg as u8,
            }
        })
        .collect();
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut rates = Vec::new();
    for (k, &value) in distinct.iter().enumerate() {
        let mut rng = RngStream::substream(seed, 1 + k as u64);
        let (mut pos, mut neg) = (0usize, 0usize);
        for _ in 0..draws {
            let s = encode(value, params, &mut rng);
            pos += s.pos as usize;
            neg += s.neg as usize;
        }
        for (side, count) in [(Side::Positive, pos), (Side::Negative, neg)] {
            let p = spike_probability(value, params, side);
            let n = draws.max(1) as f64;
            rates.push(RateCheck {
                value,
                side,
                expected: p,
                empirical: count as f64 / n,
                draws,
                tolerance: 3.0 * (p * (1.0 - p) / n).sqrt(),
            });
        }
    }
    EncodeDemo { raster, rates }
}

/// Evenly spaced probe values from `low` to `high`.
pub fn probe_values(low: f64, high: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![low],
        n => (0..n).map(|k| low + (high - low) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Timing of `controller_step` for one network size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub groups: usize,
    pub neurons: usize,
    /// From the fastest repeat.
    pub steps_per_sec: f64,
    pub ns_per_step_min: f64,
    pub ns_per_step_median: f64,
    /// 99th percentile of single-step latency across all repeats.
    pub p99_latency_us: f64,
}

/// Time `controller_step` on a network with the layout of `template` scaled
/// to each group count.
pub fn bench(group_counts: &[usize], cfg: &ExperimentConfig) -> Vec<BenchRow> {
    group_counts
        .iter()
        .map(|&groups| {
            let mut network = PidNetwork::new(NetworkSize::uniform(groups), cfg.seed);
            bench_network(&mut network, cfg)
        })
        .collect()
}

pub fn bench_network(network: &mut PidNetwork, cfg: &ExperimentConfig) -> BenchRow {
    let input = |k: usize| 0.5 * (2.0 * PI * 1.3 * k as f64 * cfg.dt).sin();
    network.reset(cfg.seed);
    let mut sink = 0.0;
    for k in 0..cfg.bench_warmup {
        sink += network.controller_step(input(k), 0.0).total;
    }
    let mut per_repeat = Vec::with_capacity(cfg.bench_repeats);
    let mut latencies = Vec::with_capacity(cfg.bench_repeats * cfg.bench_steps);
    for _ in 0..cfg.bench_repeats {
        let start = Instant::now();
        for k in 0..cfg.bench_steps {
            let t = Instant::now();
            sink += network.controller_step(input(k), 0.0).total;
            latencies.push(t.elapsed().as_nanos() as f64);
        }
        per_repeat.push(start.elapsed().as_nanos() as f64 / cfg.bench_steps.max(1) as f64);
    }
    std::hint::black_box(sink);
    let min = per_repeat.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sorted = per_repeat.clone();
    sorted.sort_by(f64::total_cmp);
    BenchRow {
        groups: network.size().p,
        neurons: network.neuron_count(),
        steps_per_sec: 1e9 / min,
        ns_per_step_min: min,
        ns_per_step_median: sorted[sorted.len() / 2],
        p99_latency_us: stats::quantile(&latencies, 0.99) / 1e3,
    }
}
