//! Python module `ctxtrack`: the tracking simulator, metrics, dataset
//! generation and trained agents.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ctxtrack::datagen::{self, GenConfig};
use ctxtrack::evalkit::{self, GridSpec, PidTracker};
use ctxtrack::numgrad::Checkpoint;
use ctxtrack::policy;
use ctxtrack::tracksim::{self, ActionCommand, EmbodimentConfig, Mask, Scenario, TargetMotion, WorldState};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn mask_from(data: &[u8], width: usize, height: usize) -> PyResult<Mask> {
    if data.len() != width * height {
        return Err(value_err(format!("mask has {} bytes, expected {width}x{height}", data.len())));
    }
    Ok(Mask {
        width,
        height,
        data: data.to_vec(),
    })
}

fn parse_motion(name: &str) -> PyResult<TargetMotion> {
    match name {
        "stationary" => Ok(TargetMotion::Stationary),
        "waypoints" => Ok(TargetMotion::Waypoints),
        "s_curve" => Ok(TargetMotion::SCurve),
        other => Err(value_err(format!("unknown motion `{other}`"))),
    }
}

/// Step reward for distance `rho` (m) and bearing `theta` (rad).
#[pyfunction]
fn reward(rho: f64, theta: f64) -> f64 {
    tracksim::reward(rho, theta)
}

/// Box-stability score of a sequence of row-major label masks.
#[pyfunction]
fn mr_metric(masks: Vec<Vec<u8>>, width: usize, height: usize) -> PyResult<f64> {
    let masks = masks.iter().map(|m| mask_from(m, width, height)).collect::<PyResult<Vec<_>>>()?;
    evalkit::mr_metric(&masks).map_err(value_err)
}

/// One tracking episode. Masks are returned as `bytes` of `height × width`
/// labels (0 background, 128 obstacle, 255 target).
#[pyclass]
struct Simulator {
    embodiment: EmbodimentConfig,
    scenario: Scenario,
    state: Option<WorldState>,
}

#[pymethods]
impl Simulator {
    #[new]
    #[pyo3(signature = (camera_height=1.0, v_max=1.0, target_speed=1.0, seed=0, motion="waypoints", obstacles=2))]
    fn new(camera_height: f64, v_max: f64, target_speed: f64, seed: u64, motion: &str, obstacles: usize) -> PyResult<Self> {
        let embodiment = EmbodimentConfig::default().with_height(camera_height).with_v_max(v_max);
        embodiment.validate().map_err(value_err)?;
        Ok(Self {
            embodiment,
            scenario: Scenario {
                target_speed,
                motion: parse_motion(motion)?,
                obstacle_count: obstacles,
                seed,
            },
            state: None,
        })
    }

    #[getter]
    fn mask_shape(&self) -> (usize, usize) {
        (self.embodiment.mask_h, self.embodiment.mask_w)
    }

    /// Starts the episode and returns the first mask.
    fn reset(&mut self) -> PyResult<Vec<u8>> {
        let (state, mask) = tracksim::reset(&self.embodiment, &self.scenario).map_err(value_err)?;
        self.state = Some(state);
        Ok(mask.data)
    }

    /// Applies a normalized command; returns `(mask, reward, done, info)`.
    fn step<'py>(&mut self, py: Python<'py>, v_norm: f64, omega_norm: f64) -> PyResult<(Vec<u8>, f64, bool, Bound<'py, PyDict>)> {
        let state = self.state.as_mut().ok_or_else(|| PyRuntimeError::new_err("call reset() first"))?;
        let out = tracksim::step(state, ActionCommand::new(v_norm, omega_norm), &self.embodiment).map_err(value_err)?;
        let info = PyDict::new(py);
        info.set_item("t", out.info.t)?;
        info.set_item("rho", out.info.rho)?;
        info.set_item("theta", out.info.theta)?;
        info.set_item("lost", out.info.lost)?;
        info.set_item(
            "termination",
            out.info.termination.map(|t| match t {
                tracksim::Termination::Success => "success",
                tracksim::Termination::Failure => "failure",
            }),
        )?;
        Ok((out.mask.data, out.reward, out.terminated, info))
    }
}

/// A trained agent loaded from a checkpoint file.
#[pyclass]
struct Agent {
    inner: policy::Agent,
}

#[pymethods]
impl Agent {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let ckpt = Checkpoint::load(path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let inner = policy::Agent::from_checkpoint(&ckpt).map_err(value_err)?;
        Ok(Self { inner })
    }

    fn reset(&mut self, seed: u64) {
        self.inner.reset(seed);
    }

    /// `(v_norm, omega_norm)` for a mask of the checkpoint's size.
    #[pyo3(signature = (mask, deterministic=true))]
    fn act(&mut self, mask: Vec<u8>, deterministic: bool) -> PyResult<(f64, f64)> {
        let (w, h) = self.inner.mask_size();
        let a = self.inner.act(&mask_from(&mask, w, h)?, deterministic).map_err(value_err)?;
        Ok((a.v_norm, a.omega_norm))
    }

    /// Context vector behind the latest action.
    fn context(&self) -> Vec<f64> {
        self.inner.context().to_vec()
    }
}

/// Generates an expert dataset at `path`; returns its manifest as TOML.
#[pyfunction]
#[pyo3(signature = (path, episodes_per_cell=12, noise=0.2, seed=0))]
fn generate_dataset(py: Python<'_>, path: &str, episodes_per_cell: usize, noise: f64, seed: u64) -> PyResult<String> {
    let cfg = GenConfig {
        episodes_per_cell,
        noise,
        seed,
        ..GenConfig::default()
    };
    py.detach(|| {
        let episodes = datagen::generate_dataset(&cfg).map_err(value_err)?;
        let m = datagen::save_dataset(path, &cfg, &episodes).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(m.to_toml())
    })
}

/// PID baseline over a grid; returns one dict per cell.
#[pyfunction]
#[pyo3(signature = (heights, speeds, episodes=10, seed=0))]
fn pid_grid<'py>(py: Python<'py>, heights: Vec<f64>, speeds: Vec<f64>, episodes: usize, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let spec = GridSpec {
        heights,
        speeds,
        episodes_per_cell: episodes,
        seed,
        ..GridSpec::default()
    };
    let report = py.detach(|| evalkit::run_grid(&spec, PidTracker::default)).map_err(value_err)?;
    report
        .cells
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("height", c.height)?;
            d.set_item("speed", c.speed)?;
            d.set_item("AR", c.ar)?;
            d.set_item("EL", c.el)?;
            d.set_item("SR", c.sr)?;
            Ok(d)
        })
        .collect()
}

/// `(name, passed, detail)` for every built-in self-check.
#[pyfunction]
fn selftest(py: Python<'_>) -> Vec<(String, bool, String)> {
    py.detach(ctxtrack::cli::run_selftest)
        .into_iter()
        .map(|i| (i.name, i.pass, i.detail))
        .collect()
}

#[pymodule]
#[pyo3(name = "ctxtrack")]
fn ctxtrack_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(reward, m)?)?;
    m.add_function(wrap_pyfunction!(mr_metric, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(pid_grid, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    m.add_class::<Simulator>()?;
    m.add_class::<Agent>()?;
    Ok(())
}
