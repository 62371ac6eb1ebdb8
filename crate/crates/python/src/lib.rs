//! Python module `pyioncavity`.
//!
//! Configs are passed as TOML text; `None` means the built-in defaults.
//! Errors surface as `ValueError` (bad input) or `RuntimeError`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ioncavity::config::{ExperimentConfig, Mode};
use ioncavity::experiment::{self, RunOptions};
use ioncavity::lindblad::{integrate, DensityMatrix};
use ioncavity::model::{effective_decay, effective_rabi};
use ioncavity::trajectory::TrajectorySampler;
use ioncavity::Error;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidParams(_) | Error::Domain(_) | Error::Parse { .. } => {
            PyValueError::new_err(e.to_string())
        }
        Error::Io(_) | Error::MissingInputs(_) => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn config(text: Option<&str>) -> PyResult<ExperimentConfig> {
    match text {
        Some(t) => ExperimentConfig::from_toml(t).map_err(to_py),
        None => Ok(ExperimentConfig::default()),
    }
}

/// Canonical TOML form of a config; raises ValueError listing every problem.
#[pyfunction]
#[pyo3(signature = (text=None))]
pub fn validate_config(text: Option<&str>) -> PyResult<String> {
    config(text)?.to_toml().map_err(to_py)
}

/// Effective Raman Rabi frequency and decay rate, in rad/µs.
#[pyfunction]
#[pyo3(signature = (config_toml=None))]
pub fn effective_parameters(config_toml: Option<&str>) -> PyResult<BTreeMap<String, f64>> {
    let p = config(config_toml)?.params().map_err(to_py)?;
    Ok(BTreeMap::from([
        ("omega_eff".to_string(), effective_rabi(&p).map_err(to_py)?),
        ("gamma_eff".to_string(), effective_decay(&p).map_err(to_py)?),
    ]))
}

/// Master-equation run over one period: (times_us, level_labels,
/// populations[t][level], efficiency).
#[pyfunction]
#[pyo3(signature = (config_toml=None))]
pub fn master_equation(
    py: Python<'_>,
    config_toml: Option<&str>,
) -> PyResult<(Vec<f64>, Vec<String>, Vec<Vec<f64>>, f64)> {
    let cfg = config(config_toml)?;
    let rec = py
        .detach(|| -> ioncavity::Result<_> {
            let p = cfg.params()?;
            integrate(&p, &cfg.sequence, &DensityMatrix::initial(&p)?, cfg.run.output_dt_us, cfg.run.tolerance()?)
        })
        .map_err(to_py)?;
    let eff = rec.efficiency();
    Ok((rec.times, rec.level_labels, rec.populations, eff))
}

/// Emission events `(time_us, channel)` of one trajectory.
#[pyfunction]
#[pyo3(signature = (seed, trial=0, config_toml=None))]
pub fn trajectory(seed: u64, trial: u64, config_toml: Option<&str>) -> PyResult<Vec<(f64, String)>> {
    let cfg = config(config_toml)?;
    let p = cfg.params().map_err(to_py)?;
    let s = TrajectorySampler::new(&p, &cfg.sequence, cfg.run.output_dt_us).map_err(to_py)?;
    let r = s.run(seed, trial).map_err(to_py)?;
    Ok(r.events.iter().map(|e| (e.time_us, e.channel.label().to_string())).collect())
}

/// Runs an experiment into `out` and returns its summary.
#[pyfunction]
#[pyo3(signature = (out, config_toml=None, mode=None, seed=None, n_trials=None))]
pub fn run(
    py: Python<'_>,
    out: PathBuf,
    config_toml: Option<&str>,
    mode: Option<&str>,
    seed: Option<u64>,
    n_trials: Option<u64>,
) -> PyResult<BTreeMap<String, String>> {
    let mut cfg = config(config_toml)?;
    if let Some(m) = mode {
        cfg.mode = Mode::parse(m).map_err(to_py)?;
    }
    if let Some(s) = seed {
        cfg.run.master_seed = s;
    }
    if let Some(n) = n_trials {
        cfg.run.n_trials = n;
    }
    let bundle = py
        .detach(|| experiment::run(&cfg, &out, &RunOptions::default()))
        .map_err(to_py)?;
    Ok(bundle.summary.into_iter().collect())
}

#[pymodule]
fn pyioncavity(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(effective_parameters, m)?)?;
    m.add_function(wrap_pyfunction!(master_equation, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
