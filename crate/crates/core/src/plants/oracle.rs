//! Conventional discrete PID used to generate training targets.

use serde::{Deserialize, Serialize};

use crate::network::ControllerOutput;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Anti-windup bound on the accumulated `sum(e * dt)`.
    pub integral_limit: f64,
}

impl PidGains {
    /// Hand-tuned for the double integrator at 500 Hz: closed-loop poles near
    /// -1.35 and -3.8 +/- 3.9i.
    pub fn double_integrator() -> Self {
        Self {
            kp: 40.0,
            ki: 40.0,
            kd: 9.0,
            integral_limit: 1.0,
        }
    }

    /// Hand-tuned for the default rate plant.
    pub fn rate() -> Self {
        Self {
            kp: 6.0,
            ki: 12.0,
            kd: 0.15,
            integral_limit: 2.0,
        }
    }
}

/// Rectangle-rule integral, first-order backward-difference derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct PidOracle {
    pub gains: PidGains,
    pub dt: f64,
    integral: f64,
    prev_error: Option<f64>,
}

impl PidOracle {
    pub fn new(gains: PidGains, dt: f64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        Self {
            gains,
            dt,
            integral: 0.0,
            prev_error: None,
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = None;
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// The derivative term is zero on the first call after a reset.
    pub fn step(&mut self, setpoint: f64, measurement: f64) -> ControllerOutput {
        let e = setpoint - measurement;
        let limit = self.gains.integral_limit;
        self.integral = (self.integral + e * self.dt).clamp(-limit, limit);
        let de = self.prev_error.map_or(0.0, |prev| (e - prev) / self.dt);
        self.prev_error = Some(e);
        ControllerOutput::new(self.gains.kp * e, self.gains.ki * self.integral, self.gains.kd * de)
    }
}
