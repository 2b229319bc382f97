//! Closed-loop episodes, the derivative frequency sweep, and their CSV files.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::network::PathwayParams;
use crate::train::{mse, pearson_loss, simulate_head};

use super::controllers::Controller;
use super::Plant;

/// Setpoint over an episode.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant(f64),
    Series(Vec<f64>),
}

impl Schedule {
    fn at(&self, k: usize) -> f64 {
        match self {
            Schedule::Constant(v) => *v,
            Schedule::Series(s) => s[k],
        }
    }
}

/// One control tick of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t_s: f64,
    pub setpoint: f64,
    pub y: f64,
    pub u: f64,
    pub p_term: f64,
    pub i_term: f64,
    pub d_term: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EpisodeError {
    #[error("setpoint schedule has {len} samples, episode needs {steps}")]
    ScheduleTooShort { len: usize, steps: usize },
    #[error("episode diverged at step {step}")]
    Diverged { step: usize, prefix: Trajectory },
}

/// Magnitude beyond which an episode counts as diverged.
const DIVERGENCE_LIMIT: f64 = 1e6;

/// Closed loop for `steps` ticks: measure, control, apply.
///
/// The controller is reset with `seed` first; the plant is used as given.
pub fn run_episode<P: Plant + ?Sized, C: Controller + ?Sized>(
    plant: &mut P,
    controller: &mut C,
    schedule: &Schedule,
    steps: usize,
    seed: u64,
) -> Result<Trajectory, EpisodeError> {
    if let Schedule::Series(s) = schedule {
        if s.len() < steps {
            return Err(EpisodeError::ScheduleTooShort { len: s.len(), steps });
        }
    }
    controller.reset(seed);
    let dt = plant.dt();
    let mut traj = Trajectory {
        rows: Vec::with_capacity(steps),
    };
    for k in 0..steps {
        let setpoint = schedule.at(k);
        let y = plant.output();
        let out = controller.step(setpoint, y);
        traj.rows.push(TrajectoryRow {
            t_s: k as f64 * dt,
            setpoint,
            y,
            u: out.total,
            p_term: out.p_term,
            i_term: out.i_term,
            d_term: out.d_term,
            error: setpoint - y,
        });
        if !(y.abs() < DIVERGENCE_LIMIT && out.total.abs() < DIVERGENCE_LIMIT) {
            return Err(EpisodeError::Diverged { step: k, prefix: traj });
        }
        plant.step(out.total);
    }
    Ok(traj)
}

/// Mean error over the final `fraction` of the trajectory.
pub fn steady_state_error(traj: &Trajectory, fraction: f64) -> f64 {
    let n = traj.len();
    let take = ((n as f64 * fraction).round() as usize).clamp(1.min(n), n);
    let tail = &traj.rows[n - take..];
    tail.iter().map(|r| r.error).sum::<f64>() / take.max(1) as f64
}

/// First time after which the error stays within `band` of its final value
/// (the mean over the last 20%). `None` if the trajectory is empty.
pub fn settle_time(traj: &Trajectory, band: f64) -> Option<f64> {
    let last = traj.rows.last()?;
    let target = steady_state_error(traj, 0.2);
    let outside = traj.rows.iter().rposition(|r| (r.error - target).abs() > band);
    Some(match outside {
        None => 0.0,
        Some(k) if k + 1 < traj.len() => traj.rows[k + 1].t_s,
        Some(_) => last.t_s,
    })
}

fn csv_error(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

pub fn write_trajectory_csv<W: Write>(writer: W, traj: &Trajectory) -> std::io::Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for row in &traj.rows {
        csv.serialize(row).map_err(csv_error)?;
    }
    if traj.rows.is_empty() {
        csv.write_record(["t_s", "setpoint", "y", "u", "p_term", "i_term", "d_term", "error"])
            .map_err(csv_error)?;
    }
    csv.flush()
}

pub fn read_trajectory_csv<R: Read>(reader: R) -> std::io::Result<Trajectory> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let rows = csv.deserialize().collect::<Result<Vec<TrajectoryRow>, _>>().map_err(csv_error)?;
    Ok(Trajectory { rows })
}

/// Losses of the derivative pathway at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub freq_hz: f64,
    pub mse: f64,
    pub pearson_loss: f64,
}

impl SweepPoint {
    pub fn total(&self) -> f64 {
        self.mse + self.pearson_loss
    }
}

/// Feed `amplitude * sin(2 pi f t)` to a derivative pathway from rest and
/// compare against `kd * d/dt` of the input, for each frequency.
pub fn derivative_sine_sweep(
    params: &PathwayParams,
    freqs: &[f64],
    amplitude: f64,
    steps: usize,
    dt: f64,
    kd: f64,
    seed: u64,
) -> Vec<SweepPoint> {
    freqs
        .iter()
        .map(|&f| {
            let w = 2.0 * PI * f;
            let input: Vec<f64> = (0..steps).map(|k| amplitude * (w * k as f64 * dt).sin()).collect();
            let target: Vec<f64> = (0..steps)
                .map(|k| kd * amplitude * w * (w * k as f64 * dt).cos())
                .collect();
            let out = simulate_head(params, &input, seed);
            SweepPoint {
                freq_hz: f,
                mse: mse(&target, &out).unwrap_or(f64::NAN),
                pearson_loss: pearson_loss(&target, &out).unwrap_or(f64::NAN),
            }
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(writer: W, points: &[SweepPoint]) -> std::io::Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for p in points {
        csv.serialize(p).map_err(csv_error)?;
    }
    if points.is_empty() {
        csv.write_record(["freq_hz", "mse", "pearson_loss"]).map_err(csv_error)?;
    }
    csv.flush()
}

pub fn read_sweep_csv<R: Read>(reader: R) -> std::io::Result<Vec<SweepPoint>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    csv.deserialize().collect::<Result<Vec<SweepPoint>, _>>().map_err(csv_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{NetworkSize, PathwayKind, PidNetwork};
    use crate::plants::{DoubleIntegrator, PidGains, PidOracle, SpikingController};

    #[test]
    fn equilibrium_stays_put() {
        let mut plant = DoubleIntegrator::new(0.4, 0.0, 0.002, 0.0);
        let mut net = PidNetwork::new(NetworkSize::uniform(5), 1);
        net.params_mut(PathwayKind::Integral).alpha.fill(0.0);
        let traj = run_episode(&mut plant, &mut net, &Schedule::Constant(0.4), 2000, 1).unwrap();
        assert!(traj.rows.iter().all(|r| r.y == 0.4 && r.u == 0.0));
    }

    #[test]
    fn oracle_removes_disturbance_offset() {
        let mut plant = DoubleIntegrator::new(0.3, 0.0, 0.002, 4.0);
        let mut pid = PidOracle::new(PidGains::double_integrator(), 0.002);
        let traj = run_episode(&mut plant, &mut pid, &Schedule::Constant(0.0), 5000, 0).unwrap();
        assert!(steady_state_error(&traj, 0.2).abs() < 1e-3);
    }

    #[test]
    fn episodes_are_deterministic() {
        let run = || {
            let mut plant = DoubleIntegrator::new(0.3, 0.0, 0.002, 4.0);
            let mut c = SpikingController::iwta(PidNetwork::new(NetworkSize::uniform(6), 2));
            run_episode(&mut plant, &mut c, &Schedule::Constant(0.0), 1500, 11).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_returns_prefix() {
        let mut plant = DoubleIntegrator::new(0.0, 0.0, 0.002, 0.0);
        let mut pid = PidOracle::new(
            PidGains {
                kp: -1e4,
                ki: 0.0,
                kd: 0.0,
                integral_limit: 1.0,
            },
            0.002,
        );
        match run_episode(&mut plant, &mut pid, &Schedule::Constant(1.0), 1_000_000, 0) {
            Err(EpisodeError::Diverged { step, prefix }) => assert_eq!(prefix.len(), step + 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn short_schedule_rejected() {
        let mut plant = DoubleIntegrator::new(0.0, 0.0, 0.002, 0.0);
        let mut pid = PidOracle::new(PidGains::double_integrator(), 0.002);
        let err = run_episode(&mut plant, &mut pid, &Schedule::Series(vec![0.0; 3]), 4, 0).unwrap_err();
        assert_eq!(err, EpisodeError::ScheduleTooShort { len: 3, steps: 4 });
    }

    #[test]
    fn csv_round_trips() {
        let mut plant = DoubleIntegrator::new(0.3, 0.0, 0.002, 4.0);
        let mut pid = PidOracle::new(PidGains::double_integrator(), 0.002);
        let traj = run_episode(&mut plant, &mut pid, &Schedule::Constant(0.0), 50, 0).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj).unwrap();
        assert!(buf.starts_with(b"t_s,setpoint,y,u,p_term,i_term,d_term,error\n"));
        assert_eq!(read_trajectory_csv(buf.as_slice()).unwrap(), traj);

        let points = vec![SweepPoint {
            freq_hz: 2.0,
            mse: 0.125,
            pearson_loss: 0.5,
        }];
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &points).unwrap();
        assert!(buf.starts_with(b"freq_hz,mse,pearson_loss\n"));
        assert_eq!(read_sweep_csv(buf.as_slice()).unwrap(), points);
    }

    #[test]
    fn zero_amplitude_sweep_is_silent() {
        let p = PathwayParams::uniform(PathwayKind::Derivative, 8);
        for point in derivative_sine_sweep(&p, &[2.0, 6.0], 0.0, 500, 0.002, 1.0, 3) {
            assert_eq!(point.mse, 0.0);
            assert_eq!(point.pearson_loss, 1.0);
        }
    }
}
