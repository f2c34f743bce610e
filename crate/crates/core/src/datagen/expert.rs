use serde::{Deserialize, Serialize};

use crate::tracksim::{ActionCommand, DT, RHO_STAR, THETA_STAR};

/// Gains of the two decoupled PID loops (distance → forward speed, bearing →
/// turn rate), in normalized action units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidGains {
    pub kp_rho: f64,
    pub ki_rho: f64,
    pub kd_rho: f64,
    pub kp_theta: f64,
    pub ki_theta: f64,
    pub kd_theta: f64,
    /// Bound on each integrator state (anti-windup).
    pub integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp_rho: 0.8,
            ki_rho: 0.1,
            kd_rho: 0.05,
            kp_theta: 2.0,
            ki_theta: 0.1,
            kd_theta: 0.05,
            integral_limit: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Loop {
    integral: f64,
    prev: Option<f64>,
}

impl Loop {
    fn update(&mut self, err: f64, kp: f64, ki: f64, kd: f64, limit: f64) -> f64 {
        self.integral = (self.integral + err * DT).clamp(-limit, limit);
        let deriv = self.prev.map_or(0.0, |p| (err - p) / DT);
        self.prev = Some(err);
        kp * err + ki * self.integral + kd * deriv
    }
}

/// Stateful PID controller on relative polar coordinates.
#[derive(Clone, Debug)]
pub struct PidExpert {
    pub gains: PidGains,
    rho: Loop,
    theta: Loop,
}

impl PidExpert {
    pub fn new(gains: PidGains) -> Self {
        Self {
            gains,
            rho: Loop::default(),
            theta: Loop::default(),
        }
    }

    pub fn reset(&mut self) {
        self.rho = Loop::default();
        self.theta = Loop::default();
    }

    /// Command for the current distance and bearing (bearing positive to the
    /// left, producing a positive turn).
    pub fn act(&mut self, rho: f64, theta: f64) -> ActionCommand {
        let g = self.gains;
        let v = self.rho.update(rho - RHO_STAR, g.kp_rho, g.ki_rho, g.kd_rho, g.integral_limit);
        let w = self
            .theta
            .update(theta - THETA_STAR, g.kp_theta, g.ki_theta, g.kd_theta, g.integral_limit);
        ActionCommand::new(v, w).clamped()
    }
}
