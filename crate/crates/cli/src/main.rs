//! `snn-pid`: train, evaluate and time the spiking PID controller.
//!
//! Outputs land in `<outdir>/<experiment>/<seed>/`. Exit codes: 0 success,
//! 1 usage, config or i/o error, 2 numeric failure or a diverged episode.

mod output;

use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use snn_pid::experiments::{
    bench, bench_network, double_integrator_experiment, encode_demo, probe_values, rate_track_experiment,
    train_derivative_on_band, train_network, Band, ExperimentConfig,
};
use snn_pid::network::{load_checkpoint, save_checkpoint, PidNetwork};
use snn_pid::plants::{write_sweep_csv, write_trajectory_csv, ControllerVariant, PlantKind, Trajectory};
use snn_pid::train::{load_flight_log, write_flight_log, EpochLoss, TrainError, TrainingSequence};
use snn_pid::{EncoderParams, PathwayKind};

#[derive(Debug, Parser)]
#[command(name = "snn-pid", version, about = "Spiking-neuron PID controller: training, experiments and timing")]
struct Cli {
    /// TOML file of experiment settings; flags below override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    outdir: PathBuf,
    /// Checkpoint to write (train) or to read (run, bench, encode-demo).
    #[arg(long, global = true, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    /// Groups per pathway.
    #[arg(long, global = true)]
    groups: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true, value_parser = parse_plant)]
    plant: Option<PlantKind>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a network to a flight log and write a checkpoint.
    Train {
        /// Flight-log CSV (t_s, setpoint_radps, gyro_radps, p_out, i_out, d_out).
        dataset: Option<PathBuf>,
        /// Generate the log from the reference PID instead.
        #[arg(long)]
        synthesize: bool,
    },
    /// Run one of the experiments.
    Run {
        experiment: Experiment,
        /// Comma-separated controllers for double-integrator.
        #[arg(long, default_value = "pd-only,recurrent,iwta")]
        variants: String,
        /// Training band for sine-sweep, as low:high in Hz.
        #[arg(long, default_value = "5:7")]
        band: String,
        #[command(flatten)]
        encode: EncodeArgs,
    },
    /// Time one controller step for several network sizes.
    Bench {
        /// Comma-separated groups per pathway.
        #[arg(long, value_delimiter = ',', default_value = "0,40,80")]
        sizes: Vec<usize>,
    },
    /// Encode a value series into spikes and check the empirical rates.
    EncodeDemo {
        #[command(flatten)]
        encode: EncodeArgs,
    },
}

#[derive(Debug, Args)]
struct EncodeArgs {
    /// One value per line; a non-numeric first line is taken as a header.
    #[arg(long, value_name = "FILE")]
    value_series: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Experiment {
    DoubleIntegrator,
    SineSweep,
    RateTrack,
    EncodeDemo,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Experiment::DoubleIntegrator => "double-integrator",
            Experiment::SineSweep => "sine-sweep",
            Experiment::RateTrack => "rate-track",
            Experiment::EncodeDemo => "encode-demo",
        }
    }
}

fn parse_plant(s: &str) -> Result<PlantKind, String> {
    s.parse()
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Numeric(String),
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numeric(m) => f.write_str(m),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ExperimentConfig::from_toml_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(groups) = cli.groups {
        cfg.groups = groups;
    }
    if let Some(epochs) = cli.epochs {
        cfg.epochs = epochs;
    }
    if let Some(plant) = cli.plant {
        cfg.plant = plant;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::Train { dataset, synthesize } => cmd_train(cli, &cfg, dataset.as_deref(), *synthesize),
        Command::Run {
            experiment,
            variants,
            band,
            encode,
        } => {
            // Rate tracking is a rate-plant experiment unless a plant is asked for.
            if *experiment == Experiment::RateTrack && cli.plant.is_none() {
                cfg.plant = PlantKind::Rate;
            }
            let dir = experiment_dir(cli, experiment.name(), &cfg)?;
            match experiment {
                Experiment::DoubleIntegrator => run_double_integrator(cli, &cfg, &dir, variants),
                Experiment::SineSweep => run_sine_sweep(&cfg, &dir, band),
                Experiment::RateTrack => run_rate_track(&cfg, &dir),
                Experiment::EncodeDemo => run_encode_demo(cli, &cfg, &dir, encode),
            }
        }
        Command::Bench { sizes } => cmd_bench(cli, &cfg, sizes),
        Command::EncodeDemo { encode } => {
            let dir = experiment_dir(cli, "encode-demo", &cfg)?;
            run_encode_demo(cli, &cfg, &dir, encode)
        }
    }
}

fn experiment_dir(cli: &Cli, experiment: &str, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
    let dir = cli.outdir.join(experiment).join(cfg.seed.to_string());
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_checkpoint(network: &PidNetwork, path: &Path) -> Result<(), CliError> {
    save_checkpoint(network, path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn read_checkpoint(path: &Path) -> Result<PidNetwork, CliError> {
    load_checkpoint(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    write_trajectory_csv(create(path)?, traj).map_err(|e| CliError::io(path, e))
}

/// Train, writing the partial history before reporting a numeric failure.
fn train_or_report(
    dataset: &[TrainingSequence],
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<(PidNetwork, Vec<EpochLoss>), CliError> {
    match train_network(dataset, cfg) {
        Ok((network, report)) => Ok((network, report.history)),
        Err(TrainError::NonFinite {
            epoch,
            sequence,
            head,
            history,
        }) => {
            output::loss_history(&dir.join("loss_history.csv"), &history)?;
            Err(CliError::Numeric(format!(
                "training stopped: non-finite loss in epoch {epoch}, sequence {sequence} ({head} head); \
                 partial history in {}",
                dir.join("loss_history.csv").display()
            )))
        }
        Err(e) => Err(usage(e)),
    }
}

fn cmd_train(cli: &Cli, cfg: &ExperimentConfig, dataset: Option<&Path>, synthesize: bool) -> Result<(), CliError> {
    let data = match (dataset, synthesize) {
        (Some(_), true) => return Err(usage("give either a dataset path or --synthesize, not both")),
        (Some(path), false) => {
            if !path.is_file() {
                return Err(usage(format!("dataset {} does not exist", path.display())));
            }
            load_flight_log(path).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        (None, true) => cfg.training_logs(),
        (None, false) => return Err(usage("no dataset: pass a flight-log CSV or --synthesize")),
    };
    if data.is_empty() {
        return Err(usage("dataset holds no sequence of two or more rows"));
    }
    let dir = experiment_dir(cli, "train", cfg)?;
    if synthesize {
        let path = dir.join("dataset.csv");
        write_flight_log(create(&path)?, &data).map_err(usage)?;
        println!("wrote {}", path.display());
    }
    let (network, history) = train_or_report(&data, cfg, &dir)?;
    let checkpoint = cli.checkpoint.clone().unwrap_or_else(|| dir.join("checkpoint.toml"));
    write_checkpoint(&network, &checkpoint)?;
    output::loss_history(&dir.join("loss_history.csv"), &history)?;
    output::train_summary(&dir.join("summary.csv"), &history)?;
    if let Some(last) = history.last() {
        for h in &last.heads {
            println!(
                "{} head: mse {:.6} pearson loss {:.4} penalty {:.4}",
                h.kind, h.mse, h.pearson, h.penalty
            );
        }
    }
    println!("wrote {}", dir.display());
    Ok(())
}

/// The checkpoint if one is given, else a network trained on synthetic logs
/// (whose checkpoint is saved alongside the results).
fn network_for_run(
    cli: &Cli,
    cfg: &ExperimentConfig,
    data: &[TrainingSequence],
    dir: &Path,
) -> Result<PidNetwork, CliError> {
    if let Some(path) = &cli.checkpoint {
        return read_checkpoint(path);
    }
    let (network, history) = train_or_report(data, cfg, dir)?;
    output::loss_history(&dir.join("loss_history.csv"), &history)?;
    write_checkpoint(&network, &dir.join("checkpoint.toml"))?;
    Ok(network)
}

fn parse_variants(list: &str) -> Result<Vec<ControllerVariant>, CliError> {
    let mut out = Vec::new();
    for name in list.split(',').filter(|s| !s.trim().is_empty()) {
        let v: ControllerVariant = name.parse().map_err(usage)?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(usage("--variants is empty"));
    }
    Ok(out)
}

fn run_double_integrator(cli: &Cli, cfg: &ExperimentConfig, dir: &Path, variants: &str) -> Result<(), CliError> {
    let variants = parse_variants(variants)?;
    let data = cfg.training_logs();
    let network = network_for_run(cli, cfg, &data, dir)?;
    let report = double_integrator_experiment(&network, &data, &variants, cfg);
    for v in &report.variants {
        write_trajectory(&dir.join(format!("trajectory_{}.csv", v.variant)), &v.trajectory)?;
        let settle = v.settle_time_s.map_or("never".to_string(), |t| format!("{t:.3} s"));
        let weight = v.recurrent_weight.map_or(String::new(), |w| format!(" (w_rec {w})"));
        println!("{:<11} e_ss {:+.5} settle {settle}{weight}", v.variant.name(), v.e_ss);
    }
    output::variant_summary(&dir.join("summary.csv"), &report)?;
    if !report.grid.is_empty() {
        output::recurrent_grid(&dir.join("recurrent_grid.csv"), &report)?;
    }
    println!("wrote {}", dir.display());
    let diverged: Vec<&str> = report.variants.iter().filter(|v| v.diverged).map(|v| v.variant.name()).collect();
    if diverged.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!("episode diverged: {}", diverged.join(", "))))
    }
}

fn run_sine_sweep(cfg: &ExperimentConfig, dir: &Path, band: &str) -> Result<(), CliError> {
    let band: Band = band.parse().map_err(usage)?;
    let report = match train_derivative_on_band(band, cfg) {
        Ok(r) => r,
        Err(TrainError::NonFinite { history, .. }) => {
            output::loss_history(&dir.join("loss_history.csv"), &history)?;
            return Err(CliError::Numeric("derivative training produced a non-finite loss".into()));
        }
        Err(e) => return Err(usage(e)),
    };
    let path = dir.join(format!("sweep_{}-{}.csv", band.low_hz, band.high_hz));
    write_sweep_csv(create(&path)?, &report.points).map_err(|e| CliError::io(&path, e))?;
    output::loss_history(&dir.join("loss_history.csv"), &report.history)?;
    for p in &report.points {
        println!("{:>5} Hz  loss {:.4}", p.freq_hz, p.total());
    }
    println!("mean loss {:.4}", report.mean_total());
    println!("wrote {}", path.display());
    Ok(())
}

fn run_rate_track(cfg: &ExperimentConfig, dir: &Path) -> Result<(), CliError> {
    let report = match rate_track_experiment(cfg) {
        Ok(r) => r,
        Err(TrainError::NonFinite { history, .. }) => {
            output::loss_history(&dir.join("loss_history.csv"), &history)?;
            return Err(CliError::Numeric("training produced a non-finite loss".into()));
        }
        Err(e) => return Err(usage(e)),
    };
    write_checkpoint(&report.network, &dir.join("checkpoint.toml"))?;
    output::loss_history(&dir.join("loss_history.csv"), &report.history)?;
    output::mimicry(&dir.join("mimicry.csv"), &report.mimicry)?;
    write_trajectory(&dir.join("trajectory_iwta.csv"), &report.spiking)?;
    write_trajectory(&dir.join("trajectory_pid-oracle.csv"), &report.oracle)?;
    for r in &report.mimicry {
        println!(
            "{} head: mse/var {:.4} pearson loss {:.4}",
            r.head,
            r.relative_mse(),
            r.pearson_loss
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn read_value_series(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut values = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let field = line.split(',').next().unwrap_or("").trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ if k == 0 => {}
            _ => return Err(usage(format!("{} line {}: {field:?} is not a finite number", path.display(), k + 1))),
        }
    }
    if values.is_empty() {
        return Err(usage(format!("{} holds no values", path.display())));
    }
    Ok(values)
}

/// Eleven levels from -1 to 1, held for 50 steps each.
fn default_value_series() -> Vec<f64> {
    probe_values(-1.0, 1.0, 11)
        .into_iter()
        .flat_map(|v| std::iter::repeat(v).take(50))
        .collect()
}

fn run_encode_demo(cli: &Cli, cfg: &ExperimentConfig, dir: &Path, args: &EncodeArgs) -> Result<(), CliError> {
    let values = match &args.value_series {
        Some(path) => read_value_series(path)?,
        None => default_value_series(),
    };
    let params = match &cli.checkpoint {
        Some(path) => {
            let p = read_checkpoint(path)?.params(PathwayKind::Proportional).clone();
            EncoderParams::new(p.alpha[0], p.beta[0])
        }
        None => EncoderParams::new(cfg.encoder_alpha, cfg.encoder_beta),
    };
    let demo = encode_demo(&values, params, cfg.encode_draws, cfg.seed);
    output::raster(&dir.join("raster.csv"), &demo.raster)?;
    output::rates(&dir.join("rates.csv"), &demo.rates)?;
    let inside = demo.rates.iter().filter(|r| r.within_band()).count();
    println!(
        "alpha {} beta {}: {inside} of {} channel rates within 3 sigma of the tuning curve",
        params.alpha,
        params.beta,
        demo.rates.len()
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn cmd_bench(cli: &Cli, cfg: &ExperimentConfig, sizes: &[usize]) -> Result<(), CliError> {
    let dir = experiment_dir(cli, "bench", cfg)?;
    let mut rows = bench(sizes, cfg);
    if let Some(path) = &cli.checkpoint {
        rows.push(bench_network(&mut read_checkpoint(path)?, cfg));
    }
    for r in &rows {
        println!(
            "{:>4} groups {:>5} neurons: {:>10.0} steps/s, median {:>8.1} ns/step, p99 {:.2} us",
            r.groups, r.neurons, r.steps_per_sec, r.ns_per_step_median, r.p99_latency_us
        );
    }
    output::bench(&dir.join("bench.csv"), &rows)?;
    println!("wrote {}", dir.display());
    Ok(())
}
