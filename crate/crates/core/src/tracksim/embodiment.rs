use serde::{Deserialize, Serialize};

/// Physical parameters of a platform. Hidden from the learned policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbodimentConfig {
    /// Camera height above ground (m).
    pub camera_height: f64,
    /// Forward speed bound (m/s).
    pub v_max: f64,
    /// Turn-rate bound (rad/s).
    pub omega_max: f64,
    /// First-order velocity lag constant (s); 0 means commands apply instantly.
    pub inertia_tau: f64,
    /// Horizontal field of view (rad).
    pub fov_h: f64,
    pub mask_w: usize,
    pub mask_h: usize,
}

impl Default for EmbodimentConfig {
    fn default() -> Self {
        Self {
            camera_height: 1.0,
            v_max: 1.0,
            omega_max: 0.8,
            inertia_tau: 0.2,
            fov_h: std::f64::consts::FRAC_PI_2,
            mask_w: 32,
            mask_h: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid embodiment: {0}")]
pub struct EmbodimentError(pub String);

impl EmbodimentConfig {
    pub fn with_height(mut self, h: f64) -> Self {
        self.camera_height = h;
        self
    }

    pub fn with_v_max(mut self, v: f64) -> Self {
        self.v_max = v;
        self
    }

    pub fn validate(&self) -> Result<(), EmbodimentError> {
        let positive = [
            ("camera_height", self.camera_height),
            ("v_max", self.v_max),
            ("omega_max", self.omega_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(EmbodimentError(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.inertia_tau.is_finite() && self.inertia_tau >= 0.0) {
            return Err(EmbodimentError(format!("inertia_tau must be >= 0, got {}", self.inertia_tau)));
        }
        if !(self.fov_h > 0.0 && self.fov_h < std::f64::consts::PI) {
            return Err(EmbodimentError(format!("fov_h must lie in (0, pi), got {}", self.fov_h)));
        }
        if self.mask_w < 7 || self.mask_h < 7 {
            return Err(EmbodimentError(format!(
                "mask must be at least 7x7, got {}x{}",
                self.mask_w, self.mask_h
            )));
        }
        Ok(())
    }
}
