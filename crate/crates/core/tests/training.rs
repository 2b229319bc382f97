use snn_pid::experiments::{train_network, ExperimentConfig};
use snn_pid::network::{NetworkSize, PathwayKind, PidNetwork};
use snn_pid::plants::{synthesize_logs, PidGains, PlantKind, SynthConfig};
use snn_pid::train::{bptt_train, evaluate_head, TrainConfig, TrainError, TrainingSequence};

fn rate_logs(gains: PidGains, sequences: usize, steps: usize, seed: u64) -> Vec<TrainingSequence> {
    synthesize_logs(&SynthConfig {
        gains,
        sequences,
        steps,
        seed,
        ..SynthConfig::for_plant(PlantKind::Rate)
    })
}

fn params_bits(net: &PidNetwork) -> Vec<u64> {
    PathwayKind::ALL
        .into_iter()
        .flat_map(|k| {
            net.params(k)
                .arrays()
                .into_iter()
                .flat_map(|(_, v)| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        })
        .collect()
}

#[test]
fn zero_learning_rate_leaves_parameters_bit_identical() {
    let data = rate_logs(PidGains::rate(), 2, 300, 1);
    let mut net = PidNetwork::new(NetworkSize::uniform(6), 2);
    let before = params_bits(&net);
    let cfg = TrainConfig {
        epochs: 3,
        learning_rate: 0.0,
        horizon: 100,
        ..TrainConfig::default()
    };
    bptt_train(&mut net, &data, &cfg).unwrap();
    assert_eq!(before, params_bits(&net));
}

#[test]
fn proportional_head_learns_a_pure_proportional_law() {
    let gains = PidGains {
        kp: 6.0,
        ki: 0.0,
        kd: 0.0,
        integral_limit: 1.0,
    };
    let data = rate_logs(gains, 4, 1000, 3);
    let mut net = PidNetwork::new(NetworkSize::uniform(20), 4);
    let initial = evaluate_head(&net, PathwayKind::Proportional, &data, 9).mse;
    let cfg = TrainConfig {
        epochs: 60,
        batch_size: 1,
        learning_rate: 0.05,
        heads: vec![PathwayKind::Proportional],
        ..TrainConfig::default()
    };
    bptt_train(&mut net, &data, &cfg).unwrap();
    let trained = evaluate_head(&net, PathwayKind::Proportional, &data, 9).mse;
    assert!(trained < 0.1 * initial, "mse {initial} -> {trained}");
}

#[test]
fn loss_halves_on_the_logged_pid_task() {
    let data = rate_logs(PidGains::rate(), 4, 1000, 5);
    let mut net = PidNetwork::new(NetworkSize::uniform(20), 6);
    let cfg = TrainConfig {
        epochs: 40,
        batch_size: 1,
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    let report = bptt_train(&mut net, &data, &cfg).unwrap();
    let first = report.history[0].total();
    let last = report.final_loss().total();
    assert!(last <= 0.5 * first, "loss {first} -> {last}");
}

#[test]
fn training_is_reproducible() {
    let cfg = ExperimentConfig {
        groups: 6,
        epochs: 2,
        sequences: 2,
        sequence_steps: 400,
        horizon: 200,
        ..ExperimentConfig::default()
    };
    let data = cfg.training_logs();
    let (a, ha) = train_network(&data, &cfg).unwrap();
    let (b, hb) = train_network(&data, &cfg).unwrap();
    assert_eq!(params_bits(&a), params_bits(&b));
    assert_eq!(ha, hb);
}

#[test]
fn non_finite_loss_aborts_with_location() {
    let mut data = rate_logs(PidGains::rate(), 2, 300, 7);
    data[1].p_target[10] = f64::NAN;
    let mut net = PidNetwork::new(NetworkSize::uniform(4), 1);
    let cfg = TrainConfig {
        epochs: 2,
        heads: vec![PathwayKind::Proportional],
        ..TrainConfig::default()
    };
    match bptt_train(&mut net, &data, &cfg) {
        Err(TrainError::NonFinite {
            epoch, sequence, head, ..
        }) => {
            assert_eq!((epoch, sequence, head), (0, 1, PathwayKind::Proportional));
        }
        other => panic!("expected a non-finite abort, got {other:?}"),
    }
}
