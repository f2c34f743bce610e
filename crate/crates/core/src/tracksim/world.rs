use std::f64::consts::PI;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::camera::Camera;
use super::embodiment::{EmbodimentConfig, EmbodimentError};
use super::mask::{Mask, LABEL_OBSTACLE, LABEL_TARGET};
use super::scenario::{Scenario, TargetMotion};
use super::*;
use crate::rng::{self, Rng};

/// Normalized velocity command; both components are clamped to `[-1, 1]`
/// before they reach the dynamics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionCommand {
    pub v_norm: f64,
    pub omega_norm: f64,
}

impl ActionCommand {
    pub fn new(v_norm: f64, omega_norm: f64) -> Self {
        Self { v_norm, omega_norm }
    }

    /// Components clamped to `[-1, 1]`; non-finite values become 0.
    pub fn clamped(self) -> Self {
        let c = |x: f64| if x.is_finite() { x.clamp(-1.0, 1.0) } else { 0.0 };
        Self::new(c(self.v_norm), c(self.omega_norm))
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.v_norm, self.omega_norm]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Success,
    Failure,
}

#[derive(Clone, Debug)]
struct TargetPlan {
    motion: TargetMotion,
    speed: f64,
    waypoint: Option<(f64, f64)>,
    leg: u32,
    rng: Rng,
}

/// Full simulator state. `step` is a pure function of this state, the action
/// and the embodiment.
#[derive(Clone, Debug)]
pub struct WorldState {
    pub agent_x: f64,
    pub agent_y: f64,
    pub agent_yaw: f64,
    pub agent_v: f64,
    pub agent_omega: f64,
    pub target_x: f64,
    pub target_y: f64,
    pub target_vx: f64,
    pub target_vy: f64,
    pub t: u32,
    pub consecutive_lost: u32,
    pub obstacles: Vec<Obstacle>,
    pub termination: Option<Termination>,
    prev_polar: (f64, f64),
    plan: TargetPlan,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub t: u32,
    pub rho: f64,
    pub theta: f64,
    pub lost: bool,
    pub consecutive_lost: u32,
    pub termination: Option<Termination>,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub mask: Mask,
    pub reward: f64,
    pub terminated: bool,
    pub info: StepInfo,
}

/// Exact relative polar state and its finite-difference rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Privileged {
    pub rho: f64,
    pub theta: f64,
    pub rho_dot: f64,
    pub theta_dot: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("episode already terminated ({0:?}); call reset")]
    Terminated(Termination),
    #[error(transparent)]
    Embodiment(#[from] EmbodimentError),
}

fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Step reward for a relative pose. Not clamped; can be negative.
pub fn reward(rho: f64, theta: f64) -> f64 {
    1.0 - (rho - RHO_STAR).abs() / RHO_MAX - (theta - THETA_STAR).abs() / THETA_MAX
}

/// The target is lost when it is beyond the visibility range or outside the
/// horizontal field of view.
pub fn is_lost(rho: f64, theta: f64, fov_h: f64) -> bool {
    rho > RHO_MAX || theta.abs() > fov_h / 2.0
}

impl WorldState {
    /// Relative polar position of the target; `theta` is counter-clockwise
    /// from the agent heading (positive means the target is to the left).
    pub fn polar(&self) -> (f64, f64) {
        let (dx, dy) = (self.target_x - self.agent_x, self.target_y - self.agent_y);
        let rho = dx.hypot(dy);
        if rho < 1e-9 {
            return (rho, 0.0);
        }
        (rho, wrap_angle(dy.atan2(dx) - self.agent_yaw))
    }

    /// Converts a world point into the agent frame (`x` forward, `y` left).
    fn to_agent_frame(&self, wx: f64, wy: f64) -> (f64, f64) {
        let (s, c) = self.agent_yaw.sin_cos();
        let (dx, dy) = (wx - self.agent_x, wy - self.agent_y);
        (dx * c + dy * s, -dx * s + dy * c)
    }

    fn blocked(&self, x: f64, y: f64) -> bool {
        self.obstacles
            .iter()
            .any(|o| (x - o.x).hypot(y - o.y) < o.radius + AGENT_RADIUS)
    }
}

fn sample_obstacles(rng: &mut Rng, count: usize) -> Vec<Obstacle> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let r = rng.random_range(2.0..10.0);
        let a = rng.random_range(-PI..PI);
        let (x, y) = (r * f64::cos(a), r * f64::sin(a));
        let radius = rng.random_range(0.3..0.6);
        // keep the spawn corridor between agent and target free
        if x > -1.0 && x < RHO_STAR + 1.5 && y.abs() < 1.2 + radius {
            continue;
        }
        out.push(Obstacle { x, y, radius });
    }
    out
}

/// Places the agent at the origin facing +x and the target at the desired
/// pose; obstacles and the target plan derive from the scenario seed.
pub fn reset(embodiment: &EmbodimentConfig, scenario: &Scenario) -> Result<(WorldState, Mask), SimError> {
    embodiment.validate()?;
    let obstacles = sample_obstacles(&mut rng::child(scenario.seed, "obstacles", 0), scenario.obstacle_count);
    let speed = match scenario.motion {
        TargetMotion::Stationary => 0.0,
        _ => scenario.target_speed.max(0.0),
    };
    let state = WorldState {
        agent_x: 0.0,
        agent_y: 0.0,
        agent_yaw: 0.0,
        agent_v: 0.0,
        agent_omega: 0.0,
        target_x: RHO_STAR * THETA_STAR.cos(),
        target_y: RHO_STAR * THETA_STAR.sin(),
        target_vx: 0.0,
        target_vy: 0.0,
        t: 0,
        consecutive_lost: 0,
        obstacles,
        termination: None,
        prev_polar: (RHO_STAR, THETA_STAR),
        plan: TargetPlan {
            motion: scenario.motion,
            speed,
            waypoint: None,
            leg: 0,
            rng: rng::child(scenario.seed, "target", 0),
        },
    };
    let mask = render_mask(&state, embodiment);
    Ok((state, mask))
}

const WAYPOINT_DISC: f64 = 5.0;
const S_CURVE_PITCH: f64 = 4.0;
const S_CURVE_OFFSET: f64 = 1.5;

fn next_waypoint(s: &mut WorldState) -> (f64, f64) {
    let plan = &mut s.plan;
    plan.leg += 1;
    match plan.motion {
        TargetMotion::SCurve => {
            let side = if plan.leg % 2 == 1 { 1.0 } else { -1.0 };
            (RHO_STAR + S_CURVE_PITCH * f64::from(plan.leg), side * S_CURVE_OFFSET)
        }
        _ => loop {
            let r = WAYPOINT_DISC * plan.rng.random::<f64>().sqrt();
            let a = plan.rng.random_range(-PI..PI);
            let p = (s.agent_x + r * a.cos(), s.agent_y + r * a.sin());
            if (p.0 - s.target_x).hypot(p.1 - s.target_y) > 1.0 {
                break p;
            }
        },
    }
}

fn advance_target(s: &mut WorldState) {
    let step_len = s.plan.speed * DT;
    if s.plan.motion == TargetMotion::Stationary || step_len <= 0.0 {
        s.target_vx = 0.0;
        s.target_vy = 0.0;
        return;
    }
    let (x0, y0) = (s.target_x, s.target_y);
    let mut remaining = step_len;
    // Bounded so a degenerate plan cannot spin forever.
    for _ in 0..8 {
        let wp = match s.plan.waypoint {
            Some(w) => w,
            None => {
                let w = next_waypoint(s);
                s.plan.waypoint = Some(w);
                w
            }
        };
        let (dx, dy) = (wp.0 - s.target_x, wp.1 - s.target_y);
        let d = dx.hypot(dy);
        if d > remaining {
            s.target_x += dx / d * remaining;
            s.target_y += dy / d * remaining;
            break;
        }
        s.target_x = wp.0;
        s.target_y = wp.1;
        remaining -= d;
        s.plan.waypoint = None;
        if remaining <= 0.0 {
            break;
        }
    }
    s.target_vx = (s.target_x - x0) / DT;
    s.target_vy = (s.target_y - y0) / DT;
}

/// Advances the world by one control period.
pub fn step(state: &mut WorldState, action: ActionCommand, e: &EmbodimentConfig) -> Result<StepOutcome, SimError> {
    if let Some(t) = state.termination {
        return Err(SimError::Terminated(t));
    }
    let a = action.clamped();
    let v_cmd = a.v_norm.max(0.0) * e.v_max;
    let w_cmd = a.omega_norm * e.omega_max;
    let keep = if e.inertia_tau > 0.0 { (-DT / e.inertia_tau).exp() } else { 0.0 };
    state.agent_v = keep * state.agent_v + (1.0 - keep) * v_cmd;
    state.agent_omega = keep * state.agent_omega + (1.0 - keep) * w_cmd;

    state.prev_polar = state.polar();
    let mid_yaw = state.agent_yaw + 0.5 * state.agent_omega * DT;
    let nx = state.agent_x + state.agent_v * mid_yaw.cos() * DT;
    let ny = state.agent_y + state.agent_v * mid_yaw.sin() * DT;
    if !state.blocked(nx, ny) {
        state.agent_x = nx;
        state.agent_y = ny;
    }
    state.agent_yaw = wrap_angle(state.agent_yaw + state.agent_omega * DT);
    advance_target(state);
    state.t += 1;

    let (rho, theta) = state.polar();
    let r = reward(rho, theta);
    let lost = is_lost(rho, theta, e.fov_h);
    state.consecutive_lost = if lost { state.consecutive_lost + 1 } else { 0 };
    state.termination = if state.consecutive_lost >= LOST_LIMIT {
        Some(Termination::Failure)
    } else if state.t >= MAX_STEPS {
        Some(Termination::Success)
    } else {
        None
    };
    Ok(StepOutcome {
        mask: render_mask(state, e),
        reward: r,
        terminated: state.termination.is_some(),
        info: StepInfo {
            t: state.t,
            rho,
            theta,
            lost,
            consecutive_lost: state.consecutive_lost,
            termination: state.termination,
        },
    })
}

/// Rasterizes obstacles, then the target, as projected bounding rectangles.
pub fn render_mask(state: &WorldState, e: &EmbodimentConfig) -> Mask {
    let cam = Camera::new(e);
    let mut mask = Mask::blank(e.mask_w, e.mask_h);
    let mut draw = |wx: f64, wy: f64, radius: f64, height: f64, label: u8| {
        let (x, y) = state.to_agent_frame(wx, wy);
        let Some(rect) = cam.cylinder_rect(x, y, radius, height, e.fov_h) else {
            return;
        };
        if let (Some((c0, c1)), Some((r0, r1))) = (rect.columns(e.mask_w), rect.rows(e.mask_h)) {
            for r in r0..=r1 {
                mask.data[r * e.mask_w + c0..=r * e.mask_w + c1].fill(label);
            }
        }
    };
    for o in &state.obstacles {
        draw(o.x, o.y, o.radius, OBSTACLE_HEIGHT, LABEL_OBSTACLE);
    }
    draw(state.target_x, state.target_y, TARGET_RADIUS, TARGET_HEIGHT, LABEL_TARGET);
    mask
}

/// Ground-truth relative pose and rates. For the data-collection expert
/// only; the learned policy never sees it.
pub fn privileged_state(state: &WorldState) -> Privileged {
    let (rho, theta) = state.polar();
    let (prho, ptheta) = state.prev_polar;
    Privileged {
        rho,
        theta,
        rho_dot: (rho - prho) / DT,
        theta_dot: wrap_angle(theta - ptheta) / DT,
    }
}
