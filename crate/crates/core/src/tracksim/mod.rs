//! Kinematic tracking environment: an agent with a hidden embodiment follows a
//! moving target and observes it through rendered segmentation masks.

mod camera;
mod embodiment;
mod mask;
mod scenario;
mod trace;
mod world;

pub use camera::{Camera, ProjectedRect, NEAR_PLANE};
pub use embodiment::{EmbodimentConfig, EmbodimentError};
pub use mask::{Mask, LABEL_BACKGROUND, LABEL_OBSTACLE, LABEL_TARGET};
pub use scenario::{Scenario, ScenarioConfig, TargetMotion};
pub use trace::{read_trace, write_trace, TraceRecord};
pub use world::{
    is_lost, privileged_state, render_mask, reset, reward, step, ActionCommand, Obstacle, Privileged, SimError,
    StepInfo, StepOutcome, Termination, WorldState,
};

/// Control period in seconds.
pub const DT: f64 = 0.1;
/// Episode horizon in steps.
pub const MAX_STEPS: u32 = 500;
/// Consecutive lost steps that end an episode as a failure.
pub const LOST_LIMIT: u32 = 50;
/// Desired tracking distance (m).
pub const RHO_STAR: f64 = 2.5;
/// Desired relative bearing (rad).
pub const THETA_STAR: f64 = 0.0;
/// Distance normalizer and visibility range (m).
pub const RHO_MAX: f64 = 7.5;
/// Bearing normalizer (rad).
pub const THETA_MAX: f64 = std::f64::consts::FRAC_PI_4;

/// Target cylinder dimensions (m).
pub const TARGET_RADIUS: f64 = 0.25;
pub const TARGET_HEIGHT: f64 = 1.7;
/// Obstacle cylinder height (m).
pub const OBSTACLE_HEIGHT: f64 = 1.0;
/// Agent footprint radius used for obstacle blocking (m).
pub const AGENT_RADIUS: f64 = 0.3;

#[cfg(test)]
mod tests;
