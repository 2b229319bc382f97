//! Unrolled forward pass with a tape, its exact reverse pass, and the
//! training loop built on top.
//!
//! The forward pass is the same kernel the runtime controller uses. Encoder
//! draws are generated up front per sequence and held fixed while
//! differentiating; the Bernoulli spike itself is passed straight through.

use crate::encoding::RngStream;
use crate::network::{advance, stream_base, ForwardMode, PathwayKind, PathwayParams, PathwayState, PidNetwork, Role, Tape};
use crate::neuron::Side;

use super::data::TrainingSequence;
use super::loss::{add_penalty_grad, exterior_penalty, output_loss_grad, pathway_specs, ParamSpec};
use super::TrainError;

/// Encoder draws for `steps` steps of a pathway with `groups` groups, laid out
/// step-major. Group `g` uses sub-stream `stream_base + g` of `seed`, exactly
/// as the runtime pathway does.
pub fn frozen_draws(groups: usize, steps: usize, seed: u64, stream_base: u64) -> Vec<(f64, f64)> {
    let mut draws = vec![(0.0, 0.0); groups * steps];
    for g in 0..groups {
        let mut rng = RngStream::substream(seed, stream_base + g as u64);
        for t in 0..steps {
            draws[t * groups + g] = rng.draw_pair();
        }
    }
    draws
}

fn run_tape(
    p: &PathwayParams,
    state: &mut PathwayState,
    errors: &[f64],
    draws: &[(f64, f64)],
    mode: ForwardMode,
) -> Tape {
    let groups = p.groups;
    let steps = errors.len();
    let mut tape = Tape {
        errors: Vec::with_capacity(steps),
        encoders: Vec::with_capacity(steps * groups),
        neurons: Vec::with_capacity(steps * p.neurons()),
        readouts_prev: Vec::with_capacity(steps * state.readouts.len()),
        pair_diffs: Vec::with_capacity(steps * p.kind.readout_pairs()),
        outputs: Vec::with_capacity(steps),
    };
    for (t, &e) in errors.iter().enumerate() {
        advance(p, state, e, &draws[t * groups..(t + 1) * groups], mode, Some(&mut tape));
    }
    tape
}

/// Reverse pass: gradient of `sum_t dy[t] * y[t]` w.r.t. every trainable
/// parameter. The state at the start of the tape is treated as constant.
pub(crate) fn backward(p: &PathwayParams, tape: &Tape, dy: &[f64]) -> PathwayParams {
    let mut grad = p.zeros_like();
    let steps = tape.steps();
    let groups = p.groups;
    let per_group = p.kind.neurons_per_group();
    let weights = p.kind.weights_per_group();
    let pairs = p.kind.readout_pairs();
    let n_readouts = 2 * pairs;
    let neurons = p.neurons();
    let integral = p.kind == PathwayKind::Integral;
    let gain = p.gain[0];

    // adjoints of the state after step t
    let mut dv = vec![0.0; neurons];
    let mut di = vec![0.0; neurons];
    let mut dtheta = vec![0.0; neurons];
    let mut ds_next = vec![0.0; neurons];
    let mut dr = [0.0f64; 4];

    for t in (0..steps).rev() {
        let mut out_sum = 0.0;
        for pair in 0..pairs {
            let sign = p.kind.pair_sign(pair);
            out_sum += sign * tape.pair_diffs[t * pairs + pair];
            dr[2 * pair] += dy[t] * gain * sign;
            dr[2 * pair + 1] -= dy[t] * gain * sign;
        }
        grad.gain[0] += dy[t] * out_sum;

        let din = dr;
        for r in 0..n_readouts {
            let pair = r / 2;
            grad.readout_decay[pair] += dr[r] * tape.readouts_prev[t * n_readouts + r];
            dr[r] *= p.readout_decay[pair];
        }

        let error = tape.errors[t];
        for g in 0..groups {
            let enc = tape.encoders[t * groups + g];
            let mut ds_enc = [0.0f64; 2];
            for slot in 0..per_group {
                let n = g * per_group + slot;
                let w = g * weights + slot / 2;
                let side = PathwayKind::slot_side(slot);
                let rec = tape.neurons[t * neurons + n];
                let tr = rec.trace;

                // spike feeds the readout and, through recurrence, the next step
                let mut ds = din[slot] * p.w_out[w] + ds_next[n];
                grad.w_out[w] += din[slot] * tr.spike;

                // soft reset: v = v1 - threshold * s
                let dv_out = dv[n];
                ds -= dv_out * tr.threshold;
                let mut dthr = -dv_out * tr.spike;
                let du = ds * rec.dsdu;
                let dv1 = dv_out + du;
                dthr -= du;

                // v1 = tau_mem * v0 + i0, i1 = tau_syn * i0 + x
                grad.tau_mem[n] += dv1 * tr.v0;
                let di1 = di[n];
                grad.tau_syn[n] += di1 * tr.i0;
                dv[n] = dv1 * p.tau_mem[n];
                di[n] = di1 * p.tau_syn[n] + dv1;

                // x = w_in * drive + recurrent_weight * s(t-1)
                let dx = di1;
                grad.w_in[w] += dx * rec.drive;
                let d_drive = dx * p.w_in[w];
                match (integral, side) {
                    (true, _) => {
                        ds_enc[0] += d_drive;
                        ds_enc[1] += d_drive;
                    }
                    (false, Side::Positive) => ds_enc[0] += d_drive,
                    (false, Side::Negative) => ds_enc[1] += d_drive,
                }
                ds_next[n] = dx * p.recurrent_weight;

                if integral {
                    let dtheta1 = dtheta[n] + dthr;
                    if rec.theta_free {
                        dtheta[n] = dtheta1 * (1.0 - p.theta_decay);
                        grad.theta_add[g] += dtheta1 * rec.delta;
                        let d_delta = dtheta1 * p.theta_add[g];
                        match side {
                            Side::Positive => {
                                ds_enc[1] += d_delta;
                                ds_enc[0] -= d_delta;
                            }
                            Side::Negative => {
                                ds_enc[0] += d_delta;
                                ds_enc[1] -= d_delta;
                            }
                        }
                    } else {
                        dtheta[n] = 0.0;
                    }
                }
            }

            for (c, sign) in [(0usize, 1.0f64), (1, -1.0)] {
                if enc.inside[c] {
                    let dprob = ds_enc[c] * enc.dsdp[c];
                    grad.alpha[g] += dprob;
                    grad.beta[g] += dprob * sign * error;
                }
            }
        }
    }
    grad
}

fn windows(len: usize, horizon: usize) -> Vec<(usize, usize)> {
    if horizon == 0 || horizon >= len {
        return vec![(0, len)];
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < len {
        let mut end = (start + horizon).min(len);
        if len - end < 2 {
            end = len;
        }
        out.push((start, end));
        start = end;
    }
    out
}

struct SequenceResult {
    mse: f64,
    pearson: f64,
    grad: PathwayParams,
}

fn sequence_grad(
    p: &PathwayParams,
    errors: &[f64],
    target: &[f64],
    draws: &[(f64, f64)],
    mode: ForwardMode,
    horizon: usize,
) -> SequenceResult {
    let mut state = PathwayState::new(p);
    let spans = windows(errors.len(), horizon);
    let weight = 1.0 / spans.len() as f64;
    let mut grad = p.zeros_like();
    let (mut mse_sum, mut pearson_sum) = (0.0, 0.0);
    for (a, b) in spans {
        let tape = run_tape(p, &mut state, &errors[a..b], &draws[a * p.groups..b * p.groups], mode);
        let (m, r, mut dy) = output_loss_grad(&target[a..b], &tape.outputs);
        dy.iter_mut().for_each(|d| *d *= weight);
        grad.add_scaled(&backward(p, &tape, &dy), 1.0);
        mse_sum += m * weight;
        pearson_sum += r * weight;
    }
    SequenceResult {
        mse: mse_sum,
        pearson: pearson_sum,
        grad,
    }
}

fn check_series(errors: &[f64], target: &[f64], draws: &[(f64, f64)], groups: usize) -> Result<(), TrainError> {
    if errors.len() != target.len() {
        return Err(TrainError::LengthMismatch {
            target: target.len(),
            output: errors.len(),
        });
    }
    if errors.len() < 2 {
        return Err(TrainError::TooShort(errors.len()));
    }
    if draws.len() < errors.len() * groups {
        return Err(TrainError::InvalidConfig(format!(
            "{} draws for {} steps of {} groups",
            draws.len(),
            errors.len(),
            groups
        )));
    }
    Ok(())
}

/// Total loss of a pathway on one sequence from a fresh state.
pub fn pathway_loss(
    p: &PathwayParams,
    errors: &[f64],
    target: &[f64],
    draws: &[(f64, f64)],
    mode: ForwardMode,
    specs: &[ParamSpec],
) -> Result<f64, TrainError> {
    check_series(errors, target, draws, p.groups)?;
    let mut state = PathwayState::new(p);
    let tape = run_tape(p, &mut state, errors, draws, mode);
    let (m, r, _) = output_loss_grad(target, &tape.outputs);
    Ok(m + r + exterior_penalty(p, specs)?)
}

/// Total loss and its gradient w.r.t. every parameter, over the whole sequence.
pub fn pathway_loss_and_grad(
    p: &PathwayParams,
    errors: &[f64],
    target: &[f64],
    draws: &[(f64, f64)],
    mode: ForwardMode,
    specs: &[ParamSpec],
) -> Result<(f64, PathwayParams), TrainError> {
    check_series(errors, target, draws, p.groups)?;
    let mut res = sequence_grad(p, errors, target, draws, mode, 0);
    add_penalty_grad(p, specs, &mut res.grad)?;
    Ok((res.mse + res.pearson + exterior_penalty(p, specs)?, res.grad))
}

/// Loss components of one head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadLoss {
    pub kind: PathwayKind,
    pub mse: f64,
    pub pearson: f64,
    pub penalty: f64,
}

impl HeadLoss {
    pub fn total(&self) -> f64 {
        self.mse + self.pearson + self.penalty
    }
}

/// Losses of every trained head after one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub heads: Vec<HeadLoss>,
}

impl EpochLoss {
    pub fn total(&self) -> f64 {
        self.heads.iter().map(HeadLoss::total).sum()
    }

    pub fn head(&self, kind: PathwayKind) -> Option<&HeadLoss> {
        self.heads.iter().find(|h| h.kind == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Gradient descent with heavy-ball momentum.
    Momentum { momentum: f64 },
    /// Adam with every step scaled by the mean magnitude of the parameter
    /// array, so that arrays of very different scale move at similar
    /// relative rates.
    ScaledAdam { beta1: f64, beta2: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::ScaledAdam {
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Truncated-BPTT window in steps; 0 unrolls whole sequences.
    pub horizon: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub surrogate_width: f64,
    pub seed: u64,
    /// Heads trained against their own logged target.
    pub heads: Vec<PathwayKind>,
    /// Return, per head, the parameters of the epoch that scored best on a
    /// fixed-noise pass over the dataset instead of the last ones.
    pub keep_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            horizon: 1000,
            batch_size: 4,
            learning_rate: 0.005,
            optimizer: Optimizer::default(),
            surrogate_width: 2.0,
            seed: 0,
            heads: PathwayKind::ALL.to_vec(),
            keep_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.horizon == 1 {
            return Err(TrainError::InvalidConfig("horizon must be at least 2".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(TrainError::InvalidConfig(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be positive".into()));
        }
        if !(self.surrogate_width > 0.0) {
            return Err(TrainError::InvalidConfig("surrogate width must be positive".into()));
        }
        if self.heads.is_empty() {
            return Err(TrainError::InvalidConfig("no heads selected".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// One entry per epoch measured during training, then a final evaluation
    /// of the trained parameters.
    pub history: Vec<EpochLoss>,
}

impl TrainReport {
    pub fn final_loss(&self) -> &EpochLoss {
        self.history.last().expect("history always has the final evaluation")
    }
}

/// splitmix64 of a seed combined with two indices.
fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const EVAL_TAG: u64 = 0xE7A1_0000;

/// Seed of the encoder noise for sequence `index` of an evaluation pass.
pub fn evaluation_seed(seed: u64, index: usize) -> u64 {
    mix(seed, EVAL_TAG, index as u64)
}

/// Output of one pathway on a sequence from a fresh state.
pub fn simulate_head(p: &PathwayParams, errors: &[f64], seed: u64) -> Vec<f64> {
    let draws = frozen_draws(p.groups, errors.len(), seed, stream_base(p.kind));
    let mut state = PathwayState::new(p);
    errors
        .iter()
        .enumerate()
        .map(|(t, &e)| {
            advance(
                p,
                &mut state,
                e,
                &draws[t * p.groups..(t + 1) * p.groups],
                ForwardMode::default(),
                None,
            )
        })
        .collect()
}

/// Mean loss components of a head over a dataset, hard spikes, whole sequences.
pub fn evaluate_head(network: &PidNetwork, kind: PathwayKind, dataset: &[TrainingSequence], seed: u64) -> HeadLoss {
    let p = network.params(kind);
    let specs = pathway_specs(p);
    let (mut m, mut r) = (0.0, 0.0);
    for (k, seq) in dataset.iter().enumerate() {
        let y = simulate_head(p, &seq.errors(), evaluation_seed(seed, k));
        let (mk, rk, _) = output_loss_grad(seq.target(kind), &y);
        m += mk;
        r += rk;
    }
    let n = dataset.len().max(1) as f64;
    HeadLoss {
        kind,
        mse: m / n,
        pearson: r / n,
        penalty: exterior_penalty(p, &specs).unwrap_or(f64::NAN),
    }
}

/// Least-squares output gain of a pathway on a dataset (other parameters fixed).
pub fn fit_gain(p: &mut PathwayParams, dataset: &[TrainingSequence], kind: PathwayKind, seed: u64) {
    let mut unit = p.clone();
    unit.gain[0] = 1.0;
    let (mut num, mut den) = (0.0, 0.0);
    for (k, seq) in dataset.iter().enumerate() {
        let y = simulate_head(&unit, &seq.errors(), evaluation_seed(seed, k));
        for (a, b) in seq.target(kind).iter().zip(&y) {
            num += a * b;
            den += b * b;
        }
    }
    if den > 0.0 {
        p.gain[0] = (num / den).max(0.0);
    }
}

/// Data-driven starting point for training.
///
/// Encoder gains are set so that the largest logged error reaches the edge of
/// the tuning curve's linear range, the threshold step of the integral
/// pathway so that the largest logged error integral moves the thresholds by
/// 30% of their base value, and every output gain by least squares.
pub fn calibrate(network: &mut PidNetwork, dataset: &[TrainingSequence], seed: u64) {
    let mut max_err: f64 = 0.0;
    let mut max_sum: f64 = 0.0;
    for seq in dataset {
        let mut sum = 0.0;
        for e in seq.errors() {
            max_err = max_err.max(e.abs());
            sum += e;
            max_sum = max_sum.max(sum.abs());
        }
    }
    if max_err <= 0.0 {
        return;
    }
    for kind in PathwayKind::ALL {
        let p = network.params_mut(kind);
        match kind {
            PathwayKind::Integral => {
                for g in 0..p.groups {
                    let alpha = p.alpha[g].clamp(0.05, 1.0);
                    p.beta[g] = alpha / max_err;
                    if max_sum > 0.0 {
                        p.theta_add[g] = 0.3 * p.threshold / (2.0 * p.beta[g] * max_sum);
                    }
                }
            }
            _ => p.beta.fill(1.0 / max_err),
        }
        fit_gain(p, dataset, kind, seed);
    }
}

struct HeadOptimizer {
    kind: PathwayKind,
    specs: Vec<ParamSpec>,
    first: PathwayParams,
    second: PathwayParams,
    step: i32,
}

impl HeadOptimizer {
    fn new(p: &PathwayParams) -> Self {
        Self {
            kind: p.kind,
            specs: pathway_specs(p),
            first: p.zeros_like(),
            second: p.zeros_like(),
            step: 0,
        }
    }

    fn apply(&mut self, p: &mut PathwayParams, grad: &PathwayParams, lr: f64, optimizer: Optimizer) {
        self.step += 1;
        let scales: Vec<f64> = p
            .arrays()
            .iter()
            .map(|(_, v)| {
                let n = v.len().max(1) as f64;
                (v.iter().map(|x| x.abs()).sum::<f64>() / n).max(1e-3)
            })
            .collect();
        let arrays = p.arrays_mut().into_iter().zip(grad.arrays());
        let moments = self.first.arrays_mut().into_iter().zip(self.second.arrays_mut());
        for (k, (((_, values), (_, g)), ((_, m), (_, v)))) in arrays.zip(moments).enumerate() {
            for j in 0..values.len() {
                let step = match optimizer {
                    Optimizer::Momentum { momentum } => {
                        m[j] = momentum * m[j] - lr * g[j];
                        m[j]
                    }
                    Optimizer::ScaledAdam { beta1, beta2 } => {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                        let m_hat = m[j] / (1.0 - beta1.powi(self.step));
                        let v_hat = v[j] / (1.0 - beta2.powi(self.step));
                        -lr * scales[k] * m_hat / (v_hat.sqrt() + 1e-12)
                    }
                };
                values[j] += step;
            }
        }
        p.clamp_to_ranges();
    }
}

/// Train the selected heads of `network` against their logged targets.
///
/// Every epoch visits the sequences in order, in batches. For each batch and
/// head, fresh encoder draws are generated per sequence, the pathway is
/// unrolled from rest in windows of `horizon` steps (state carried across
/// windows, gradients truncated), gradients are averaged over the batch, the
/// penalty gradient is added, and one optimizer step is taken. Parameters are
/// projected back into their ranges after each step.
pub fn bptt_train(
    network: &mut PidNetwork,
    dataset: &[TrainingSequence],
    config: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for seq in dataset {
        seq.validate()?;
    }
    for &kind in &config.heads {
        if !network.params(kind).layout_ok() {
            return Err(TrainError::InvalidConfig(format!(
                "{kind} parameters do not match the pathway layout"
            )));
        }
    }
    let errors: Vec<Vec<f64>> = dataset.iter().map(TrainingSequence::errors).collect();
    let mode = ForwardMode::hard(config.surrogate_width);
    let mut optimizers: Vec<HeadOptimizer> = config
        .heads
        .iter()
        .map(|&k| HeadOptimizer::new(network.params(k)))
        .collect();
    let mut history = Vec::with_capacity(config.epochs + 1);
    let order: Vec<usize> = (0..dataset.len()).collect();
    let selection_seed = mix(config.seed, u64::MAX, 0);
    let mut best: Vec<(f64, PathwayParams)> = config
        .heads
        .iter()
        .map(|&k| (evaluate_head(network, k, dataset, selection_seed).total(), network.params(k).clone()))
        .collect();

    for epoch in 0..config.epochs {
        let mut heads = Vec::with_capacity(optimizers.len());
        for (opt, best) in optimizers.iter_mut().zip(&mut best) {
            let kind = opt.kind;
            let (mut mse_sum, mut pearson_sum) = (0.0, 0.0);
            for batch in order.chunks(config.batch_size) {
                let mut p = network.params(kind).clone();
                let mut grad = p.zeros_like();
                for &s in batch {
                    let seed = mix(config.seed, epoch as u64, s as u64);
                    let draws = frozen_draws(p.groups, errors[s].len(), seed, stream_base(kind));
                    let res = sequence_grad(&p, &errors[s], dataset[s].target(kind), &draws, mode, config.horizon);
                    if !(res.mse + res.pearson).is_finite() || !res.grad.all_finite() {
                        return Err(TrainError::NonFinite {
                            epoch,
                            sequence: s,
                            head: kind,
                            history,
                        });
                    }
                    mse_sum += res.mse;
                    pearson_sum += res.pearson;
                    grad.add_scaled(&res.grad, 1.0 / batch.len() as f64);
                }
                add_penalty_grad(&p, &opt.specs, &mut grad)?;
                opt.apply(&mut p, &grad, config.learning_rate, config.optimizer);
                *network.params_mut(kind) = p;
            }
            let n = dataset.len() as f64;
            heads.push(HeadLoss {
                kind,
                mse: mse_sum / n,
                pearson: pearson_sum / n,
                penalty: exterior_penalty(network.params(kind), &opt.specs)?,
            });
            if config.keep_best {
                let score = evaluate_head(network, kind, dataset, selection_seed).total();
                // a NaN score never replaces the incumbent
                if score < best.0 {
                    *best = (score, network.params(kind).clone());
                }
            }
        }
        history.push(EpochLoss { epoch, heads });
    }
    if config.keep_best {
        for (&kind, (_, params)) in config.heads.iter().zip(best) {
            *network.params_mut(kind) = params;
        }
    }

    let heads = config
        .heads
        .iter()
        .map(|&k| evaluate_head(network, k, dataset, mix(config.seed, config.epochs as u64, u64::MAX)))
        .collect::<Vec<_>>();
    if heads.iter().any(|h| !h.total().is_finite()) {
        return Err(TrainError::NonFinite {
            epoch: config.epochs,
            sequence: 0,
            head: heads.iter().find(|h| !h.total().is_finite()).map_or(PathwayKind::Proportional, |h| h.kind),
            history,
        });
    }
    history.push(EpochLoss {
        epoch: config.epochs,
        heads,
    });
    // the runtime state no longer matches the parameters
    let seed = network.seed();
    network.reset(seed);
    Ok(TrainReport { history })
}

/// Parameter roles that carry a gradient in `kind`.
pub fn trainable_roles(kind: PathwayKind) -> Vec<Role> {
    Role::ALL
        .into_iter()
        .filter(|&r| r != Role::ThetaAdd || kind == PathwayKind::Integral)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkSize;

    #[test]
    fn windows_cover_the_sequence() {
        assert_eq!(windows(10, 0), [(0, 10)]);
        assert_eq!(windows(10, 4), [(0, 4), (4, 8), (8, 10)]);
        assert_eq!(windows(9, 4), [(0, 4), (4, 9)]);
    }

    #[test]
    fn tape_forward_matches_runtime_pathway() {
        let net = PidNetwork::new(NetworkSize::uniform(5), 21);
        for kind in PathwayKind::ALL {
            let mut runtime = net.pathway(kind).clone();
            let errors: Vec<f64> = (0..300).map(|k| 0.8 * (k as f64 * 0.04).sin()).collect();
            let expected: Vec<f64> = errors.iter().map(|&e| runtime.step(e)).collect();
            let draws = frozen_draws(5, errors.len(), 21, stream_base(kind));
            let mut state = PathwayState::new(&runtime.params);
            let tape = run_tape(&runtime.params, &mut state, &errors, &draws, ForwardMode::default());
            assert_eq!(tape.outputs, expected, "{kind}");
        }
    }

    #[test]
    fn mix_separates_indices() {
        assert_ne!(mix(1, 0, 1), mix(1, 1, 0));
        assert_ne!(mix(1, 0, 0), mix(2, 0, 0));
    }

    fn gradient_errors(kind: PathwayKind, groups: usize, steps: usize) -> Vec<(Role, f64)> {
        let mut p = PathwayParams::uniform(kind, groups);
        // keep every parameter and tuning curve away from its kinks
        p.tau_mem.fill(0.95);
        if kind != PathwayKind::Integral {
            p.alpha.fill(0.1);
        }
        if kind == PathwayKind::Integral {
            p.theta_add.fill(0.05);
            p.theta_decay = 0.01;
        }
        p.recurrent_weight = if kind == PathwayKind::Proportional { 0.2 } else { 0.0 };
        let errors: Vec<f64> = (0..steps).map(|k| 0.4 * (k as f64 * 0.3).sin()).collect();
        let target: Vec<f64> = errors.iter().map(|e| 2.0 * e + 0.1).collect();
        let draws = frozen_draws(groups, steps, 9, stream_base(kind));
        let mode = ForwardMode::smooth(2.0);
        let specs = pathway_specs(&p);
        let (_, grad) = pathway_loss_and_grad(&p, &errors, &target, &draws, mode, &specs).unwrap();
        let h = 1e-5;
        let mut out = Vec::new();
        for role in trainable_roles(kind) {
            let (mut num2, mut diff2, mut an2) = (0.0, 0.0, 0.0);
            for j in 0..p.array(role).len() {
                let mut up = p.clone();
                up.array_mut(role)[j] += h;
                let mut dn = p.clone();
                dn.array_mut(role)[j] -= h;
                let f = |q: &PathwayParams| pathway_loss(q, &errors, &target, &draws, mode, &specs).unwrap();
                let numeric = (f(&up) - f(&dn)) / (2.0 * h);
                let analytic = grad.array(role)[j];
                num2 += numeric * numeric;
                an2 += analytic * analytic;
                diff2 += (numeric - analytic) * (numeric - analytic);
            }
            out.push((role, diff2.sqrt() / num2.sqrt().max(an2.sqrt()).max(1e-12)));
        }
        out
    }

    #[test]
    fn smooth_gradients_match_finite_differences() {
        for kind in PathwayKind::ALL {
            for (role, err) in gradient_errors(kind, 3, 50) {
                assert!(err < 1e-4, "{kind} {role:?}: {err:e}");
            }
        }
    }
}
