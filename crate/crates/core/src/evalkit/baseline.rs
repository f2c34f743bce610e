use super::{Controller, EvalError};
use crate::datagen::{PidExpert, PidGains};
use crate::tracksim::{self, ActionCommand, Camera, EmbodimentConfig, Mask, Scenario, LABEL_TARGET, RHO_STAR};

/// Classic tracker: bearing from the target centroid column, distance from
/// the target box height relative to a reference frame rendered at the
/// desired pose, both fed to the expert's PID loops. The embodiment is
/// known to this controller (it is calibrated per platform).
#[derive(Clone, Debug)]
pub struct PidTracker {
    expert: PidExpert,
    camera: Option<Camera>,
    /// Box height in pixels at distance `RHO_STAR`, straight ahead.
    reference_rows: f64,
    last: ActionCommand,
    /// +1 when the target was last seen on the left, −1 on the right.
    last_side: f64,
}

impl PidTracker {
    pub fn new(gains: PidGains) -> Self {
        Self {
            expert: PidExpert::new(gains),
            camera: None,
            reference_rows: 1.0,
            last: ActionCommand::new(0.0, 0.0),
            last_side: 1.0,
        }
    }

    /// Distance and bearing estimates from a mask, if the target is visible.
    pub fn estimate(&self, mask: &Mask) -> Option<(f64, f64)> {
        let cam = self.camera?;
        let (_, r0, _, r1) = mask.bounds(LABEL_TARGET)?;
        let col = mask.target_centroid_col()?;
        let rows = (r1 - r0 + 1) as f64;
        let rho = RHO_STAR * self.reference_rows / rows;
        let theta = ((cam.width as f64 / 2.0 - col) / cam.focal).atan();
        Some((rho, theta))
    }
}

impl Default for PidTracker {
    fn default() -> Self {
        Self::new(PidGains::default())
    }
}

impl Controller for PidTracker {
    fn reset(&mut self, _: u64, embodiment: &EmbodimentConfig) {
        self.expert.reset();
        self.camera = Some(Camera::new(embodiment));
        self.last = ActionCommand::new(0.0, 0.0);
        self.last_side = 1.0;
        // the stationary spawn puts the target exactly at the desired pose
        self.reference_rows = tracksim::reset(embodiment, &Scenario::stationary(0))
            .ok()
            .and_then(|(_, m)| m.bounds(LABEL_TARGET))
            .map_or(1.0, |(_, r0, _, r1)| (r1 - r0 + 1) as f64);
    }

    fn act(&mut self, mask: &Mask) -> Result<ActionCommand, EvalError> {
        let cmd = match self.estimate(mask) {
            Some((rho, theta)) => {
                if theta != 0.0 {
                    self.last_side = theta.signum();
                }
                self.expert.act(rho, theta)
            }
            None => ActionCommand::new(self.last.v_norm, self.last_side),
        };
        self.last = cmd;
        Ok(cmd)
    }
}
