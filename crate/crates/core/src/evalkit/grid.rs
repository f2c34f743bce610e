use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Controller, EvalError};
use crate::policy::Agent;
use crate::rng::derive_seed;
use crate::tracksim::{self, EmbodimentConfig, Scenario, TargetMotion, Termination, TraceRecord};

/// Evaluation grid: camera heights × target speeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub heights: Vec<f64>,
    pub speeds: Vec<f64>,
    pub episodes_per_cell: usize,
    pub seed: u64,
    pub motion: TargetMotion,
    pub obstacle_count: usize,
    /// Embodiment of every cell before the height and speed limit are set.
    pub base: EmbodimentConfig,
    /// A cell's speed limit is `max(v_max_floor, v_max_ratio · target speed)`.
    pub v_max_floor: f64,
    pub v_max_ratio: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            heights: vec![0.3, 1.0, 1.7, 3.0],
            speeds: vec![0.5, 1.0, 2.0, 3.0],
            episodes_per_cell: 10,
            seed: 0,
            motion: TargetMotion::Waypoints,
            obstacle_count: 2,
            base: EmbodimentConfig::default(),
            v_max_floor: 0.8,
            v_max_ratio: 1.25,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::Grid(m.to_string()));
        if self.heights.is_empty() || self.speeds.is_empty() {
            return bad("heights and speeds must be non-empty");
        }
        if self.episodes_per_cell == 0 {
            return bad("episodes_per_cell must be positive");
        }
        if self.speeds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("speeds must be finite and non-negative");
        }
        for (h, s) in self.cells() {
            self.embodiment(h, s).validate().map_err(|e| EvalError::Grid(e.to_string()))?;
        }
        Ok(())
    }

    /// `(height, speed)` pairs in height-major order.
    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.heights
            .iter()
            .flat_map(|&h| self.speeds.iter().map(move |&s| (h, s)))
            .collect()
    }

    pub fn embodiment(&self, height: f64, speed: f64) -> EmbodimentConfig {
        self.base
            .clone()
            .with_height(height)
            .with_v_max(self.v_max_floor.max(self.v_max_ratio * speed))
    }

    /// Seed of episode `episode` in cell `cell`.
    pub fn episode_seed(&self, cell: usize, episode: usize) -> u64 {
        derive_seed(self.seed, &format!("eval.cell{cell}"), episode as u64)
    }

    pub fn scenario(&self, speed: f64, seed: u64) -> Scenario {
        Scenario {
            target_speed: speed,
            motion: self.motion,
            obstacle_count: self.obstacle_count,
            seed,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("grid serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    /// Accumulated reward.
    pub reward: f64,
    pub length: u32,
    pub success: bool,
    /// Per-step records; empty unless requested.
    pub trace: Vec<TraceRecord>,
}

pub fn run_episode<C: Controller + ?Sized>(
    ctrl: &mut C,
    embodiment: &EmbodimentConfig,
    scenario: &Scenario,
    keep_trace: bool,
) -> Result<EpisodeResult, EvalError> {
    let (mut state, mut mask) = tracksim::reset(embodiment, scenario)?;
    ctrl.reset(scenario.seed, embodiment);
    let mut out = EpisodeResult {
        reward: 0.0,
        length: 0,
        success: false,
        trace: Vec::new(),
    };
    loop {
        let action = ctrl.act(&mask)?.clamped();
        let step = tracksim::step(&mut state, action, embodiment)?;
        out.reward += step.reward;
        out.length += 1;
        if keep_trace {
            out.trace.push(TraceRecord {
                t: step.info.t,
                rho: step.info.rho,
                theta: step.info.theta,
                v_norm: action.v_norm,
                omega_norm: action.omega_norm,
                reward: step.reward,
                lost: step.info.lost,
            });
        }
        mask = step.mask;
        if step.terminated {
            out.success = step.info.termination == Some(Termination::Success);
            return Ok(out);
        }
    }
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellReport {
    pub height: f64,
    pub speed: f64,
    pub episodes: usize,
    pub ar: f64,
    pub el: f64,
    pub sr: f64,
}

impl CellReport {
    pub fn from_results(height: f64, speed: f64, results: &[EpisodeResult]) -> Self {
        let n = results.len().max(1) as f64;
        Self {
            height,
            speed,
            episodes: results.len(),
            ar: results.iter().map(|r| r.reward).sum::<f64>() / n,
            el: results.iter().map(|r| f64::from(r.length)).sum::<f64>() / n,
            sr: results.iter().filter(|r| r.success).count() as f64 / n,
        }
    }
}

/// Per-cell means plus grid-level mean ± population std over the cells.
#[derive(Clone, Debug, PartialEq)]
pub struct GridReport {
    pub cells: Vec<CellReport>,
    pub ar: Summary,
    pub el: Summary,
    pub sr: Summary,
}

impl GridReport {
    pub fn from_cells(cells: Vec<CellReport>) -> Self {
        let col = |f: fn(&CellReport) -> f64| Summary::of(&cells.iter().map(f).collect::<Vec<_>>());
        Self {
            ar: col(|c| c.ar),
            el: col(|c| c.el),
            sr: col(|c| c.sr),
            cells,
        }
    }

    pub fn cell(&self, height: f64, speed: f64) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.height == height && c.speed == speed)
    }

    /// One row per cell followed by a `mean` and a `std` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("height,speed,episodes,AR,EL,SR\n");
        for c in &self.cells {
            s.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6}\n",
                c.height, c.speed, c.episodes, c.ar, c.el, c.sr
            ));
        }
        s.push_str(&format!(",,mean,{:.6},{:.6},{:.6}\n", self.ar.mean, self.el.mean, self.sr.mean));
        s.push_str(&format!(",,std,{:.6},{:.6},{:.6}\n", self.ar.std, self.el.std, self.sr.std));
        s
    }

    /// Heights down, speeds across, each cell as `AR/EL/SR`.
    pub fn to_table(&self) -> String {
        let mut heights: Vec<f64> = Vec::new();
        let mut speeds: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !heights.contains(&c.height) {
                heights.push(c.height);
            }
            if !speeds.contains(&c.speed) {
                speeds.push(c.speed);
            }
        }
        let mut rows = vec![std::iter::once("height".to_string())
            .chain(speeds.iter().map(|s| format!("{s} m/s")))
            .collect::<Vec<_>>()];
        for &h in &heights {
            let mut row = vec![format!("{h} m")];
            for &s in &speeds {
                row.push(match self.cell(h, s) {
                    Some(c) => format!("{:.0}/{:.0}/{:.2}", c.ar, c.el, c.sr),
                    None => "-".into(),
                });
            }
            rows.push(row);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in &rows {
            let line: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out.push_str(&format!(
            "mean ± std  AR {:.1} ± {:.1}  EL {:.1} ± {:.1}  SR {:.2} ± {:.2}\n",
            self.ar.mean, self.ar.std, self.el.mean, self.el.std, self.sr.mean, self.sr.std
        ));
        out
    }
}

/// Runs every episode of the grid (in parallel on the current rayon pool)
/// with a fresh controller from `make`, returning per-cell results in cell
/// order.
pub fn run_grid_detailed<C, F>(spec: &GridSpec, make: F, keep_traces: bool) -> Result<(GridReport, Vec<Vec<EpisodeResult>>), EvalError>
where
    C: Controller,
    F: Fn() -> C + Sync,
{
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.episodes_per_cell).map(move |e| (c, e)))
        .collect();
    let results: Vec<EpisodeResult> = jobs
        .par_iter()
        .map(|&(c, e)| {
            let (h, s) = cells[c];
            let mut ctrl = make();
            run_episode(&mut ctrl, &spec.embodiment(h, s), &spec.scenario(s, spec.episode_seed(c, e)), keep_traces)
        })
        .collect::<Result<_, _>>()?;
    let mut per_cell: Vec<Vec<EpisodeResult>> = vec![Vec::new(); cells.len()];
    for ((c, _), r) in jobs.into_iter().zip(results) {
        per_cell[c].push(r);
    }
    let reports = cells
        .iter()
        .zip(&per_cell)
        .map(|(&(h, s), rs)| CellReport::from_results(h, s, rs))
        .collect();
    Ok((GridReport::from_cells(reports), per_cell))
}

pub fn run_grid<C, F>(spec: &GridSpec, make: F) -> Result<GridReport, EvalError>
where
    C: Controller,
    F: Fn() -> C + Sync,
{
    Ok(run_grid_detailed(spec, make, false)?.0)
}

/// Context vector the agent used at every step of one episode.
pub fn context_rollout(agent: &mut Agent, embodiment: &EmbodimentConfig, scenario: &Scenario) -> Result<Vec<Vec<f64>>, EvalError> {
    struct Recorder<'a> {
        agent: &'a mut Agent,
        z: Vec<Vec<f64>>,
    }
    impl Controller for Recorder<'_> {
        fn reset(&mut self, seed: u64, _: &EmbodimentConfig) {
            self.agent.reset(seed);
        }
        fn act(&mut self, mask: &crate::tracksim::Mask) -> Result<crate::tracksim::ActionCommand, EvalError> {
            let a = self.agent.act(mask, true)?;
            self.z.push(self.agent.context().to_vec());
            Ok(a)
        }
    }
    let mut rec = Recorder { agent, z: Vec::new() };
    run_episode(&mut rec, embodiment, scenario, false)?;
    Ok(rec.z)
}

/// `t,z0,z1,…` with one row per step.
pub fn context_csv(z: &[Vec<f64>]) -> String {
    let d = z.first().map_or(0, Vec::len);
    let mut s = String::from("t");
    for i in 0..d {
        s.push_str(&format!(",z{i}"));
    }
    s.push('\n');
    for (t, row) in z.iter().enumerate() {
        s.push_str(&t.to_string());
        for v in row {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}
