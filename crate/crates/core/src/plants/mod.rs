//! Plants, reference controllers and closed-loop episodes.

mod controllers;
mod episode;
mod oracle;
mod synth;

pub use controllers::{Controller, ControllerVariant, RecurrentIntegrator, SpikingController, UnknownVariant};
pub use episode::{
    derivative_sine_sweep, read_sweep_csv, read_trajectory_csv, run_episode, settle_time, steady_state_error,
    write_sweep_csv, write_trajectory_csv, EpisodeError, Schedule, SweepPoint, Trajectory, TrajectoryRow,
};
pub use oracle::{PidGains, PidOracle};
pub use synth::{sine_sequences, synthesize_logs, PlantKind, SynthConfig};

/// A single-input single-output discrete-time plant.
pub trait Plant {
    /// Apply `u` for one period.
    fn step(&mut self, u: f64);
    /// Current measurement.
    fn output(&self) -> f64;
    fn dt(&self) -> f64;
}

/// Point mass under a constant input disturbance `g`; the measurement is the
/// position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoubleIntegrator {
    pub x: f64,
    pub v: f64,
    pub dt: f64,
    pub g: f64,
}

impl DoubleIntegrator {
    pub fn new(x: f64, v: f64, dt: f64, g: f64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        Self { x, v, dt, g }
    }

    /// One step; returns the measurement before the update.
    pub fn step_with_output(&mut self, u: f64) -> f64 {
        let y = self.x;
        let a = u - self.g;
        self.x += self.dt * self.v + 0.5 * self.dt * self.dt * a;
        self.v += self.dt * a;
        y
    }
}

impl Plant for DoubleIntegrator {
    fn step(&mut self, u: f64) {
        self.step_with_output(u);
    }

    fn output(&self) -> f64 {
        self.x
    }

    fn dt(&self) -> f64 {
        self.dt
    }
}

/// Single-axis body rate: `J dw/dt = u - torque_disturbance - damping * w`,
/// forward Euler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePlant {
    pub omega: f64,
    pub inertia: f64,
    pub damping: f64,
    pub torque_disturbance: f64,
    pub dt: f64,
}

impl RatePlant {
    pub fn new(omega: f64, inertia: f64, damping: f64, torque_disturbance: f64, dt: f64) -> Self {
        assert!(inertia > 0.0, "inertia must be positive");
        assert!(dt > 0.0, "dt must be positive");
        Self {
            omega,
            inertia,
            damping,
            torque_disturbance,
            dt,
        }
    }
}

impl Plant for RatePlant {
    fn step(&mut self, u: f64) {
        let accel = (u - self.torque_disturbance - self.damping * self.omega) / self.inertia;
        self.omega += self.dt * accel;
    }

    fn output(&self) -> f64 {
        self.omega
    }

    fn dt(&self) -> f64 {
        self.dt
    }
}
