//! Python bindings. Divisions are lists of rows, selections are lists of
//! piece indices, player specs and reports are plain dicts.

use std::collections::BTreeMap;
use std::sync::Arc;

use multicake::config::RunConfig;
use multicake::geometry::{CakeConfig, Division, PieceSelection};
use multicake::grid_lemma::run_lemma_checks;
use multicake::preferences::{ModelSpec, PreferenceModel};
use multicake::sperner::solve_different_selections;
use multicake::triangulation::{
    predicted_cell_count, predicted_vertex_count, Triangulation, DEFAULT_CELL_CAP,
};
use multicake::verifier::{
    envy_report, grid_sweep, player_name, preferred_set, SweepMode, DEFAULT_SWEEP_CAP,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let json = obj.py().import("json")?;
    let text: String = json.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

#[pyclass(
    name = "CakeConfig",
    module = "pymulticake",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyCakeConfig {
    inner: CakeConfig,
}

#[pymethods]
impl PyCakeConfig {
    #[new]
    fn new(pieces: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: CakeConfig::new(pieces).map_err(err)?,
        })
    }

    #[getter]
    fn pieces(&self) -> Vec<usize> {
        self.inner.pieces_per_cake().to_vec()
    }

    #[getter]
    fn cakes(&self) -> usize {
        self.inner.cakes()
    }

    #[getter]
    fn selection_count(&self) -> usize {
        self.inner.selection_count()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn selections(&self) -> Vec<Vec<usize>> {
        self.inner
            .selections()
            .map(|s| s.picks().to_vec())
            .collect()
    }

    fn center(&self) -> Vec<Vec<f64>> {
        Division::center(&self.inner).rows().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("CakeConfig({:?})", self.inner.pieces_per_cake())
    }
}

/// Accepts a `CakeConfig` or a plain list of piece counts.
fn config_of(obj: &Bound<'_, PyAny>) -> PyResult<CakeConfig> {
    if let Ok(c) = obj.cast::<PyCakeConfig>() {
        return Ok(c.get().inner.clone());
    }
    CakeConfig::new(obj.extract()?).map_err(err)
}

#[pyclass(name = "Triangulation", module = "pymulticake", frozen)]
struct PyTriangulation {
    inner: Triangulation,
}

#[pymethods]
impl PyTriangulation {
    #[new]
    #[pyo3(signature = (config, mesh, cap=None))]
    fn new(config: &Bound<'_, PyAny>, mesh: u32, cap: Option<u128>) -> PyResult<Self> {
        let config = config_of(config)?;
        Ok(Self {
            inner: Triangulation::build_with_cap(&config, mesh, cap.unwrap_or(DEFAULT_CELL_CAP))
                .map_err(err)?,
        })
    }

    #[getter]
    fn mesh(&self) -> u32 {
        self.inner.mesh()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn vertex_count(&self) -> usize {
        self.inner.vertex_count()
    }

    #[getter]
    fn cell_count(&self) -> u64 {
        self.inner.cell_count()
    }

    fn vertex(&self, id: usize) -> PyResult<Vec<Vec<u32>>> {
        if id >= self.inner.vertex_count() {
            return Err(err(format!("vertex {id} out of range")));
        }
        Ok(self.inner.vertex_coords(id))
    }

    /// `(cell index, vertex ids, barycentric weights)` for every cell
    /// containing the division.
    #[pyo3(signature = (division, tol=1e-12))]
    fn containing_cells(
        &self,
        division: Vec<Vec<f64>>,
        tol: f64,
    ) -> PyResult<Vec<(u64, Vec<usize>, Vec<f64>)>> {
        let division = Division::new(self.inner.config(), division).map_err(err)?;
        Ok(self
            .inner
            .containing_cells(&division, tol)
            .into_iter()
            .map(|(cell, bary)| (cell.index, cell.vertex_ids, bary))
            .collect())
    }
}

fn run_config(
    config: &Bound<'_, PyAny>,
    players: &Bound<'_, PyAny>,
    schedule: Option<Vec<u32>>,
    tol: Option<f64>,
    seed: Option<u64>,
) -> PyResult<RunConfig> {
    let mut run = RunConfig::new(config_of(config)?, from_py(players)?);
    if let Some(schedule) = schedule {
        run.schedule = schedule;
    }
    if let Some(tol) = tol {
        run.tol = tol;
    }
    run.seed = seed;
    run.validate().map_err(err)?;
    if run.players.iter().any(ModelSpec::is_human) {
        return Err(err("human players answer through the session server"));
    }
    Ok(run)
}

/// Refines through `schedule`; returns the solve report as a dict.
#[pyfunction]
#[pyo3(signature = (config, players, schedule=None, tol=None, seed=None))]
fn solve(
    py: Python<'_>,
    config: &Bound<'_, PyAny>,
    players: &Bound<'_, PyAny>,
    schedule: Option<Vec<u32>>,
    tol: Option<f64>,
    seed: Option<u64>,
) -> PyResult<Py<PyAny>> {
    let run = run_config(config, players, schedule, tol, seed)?;
    let report = py.detach(|| run.solve()).map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (config, players, mesh, seed=None))]
fn different_selections(
    py: Python<'_>,
    config: &Bound<'_, PyAny>,
    players: &Bound<'_, PyAny>,
    mesh: u32,
    seed: Option<u64>,
) -> PyResult<Py<PyAny>> {
    let run = run_config(config, players, Some(vec![mesh]), None, seed)?;
    let models = run.build_models().map_err(err)?;
    let found = py
        .detach(|| solve_different_selections(&run.config, &models, mesh))
        .map_err(err)?;
    to_py(py, &found)
}

fn named_models(run: &RunConfig) -> PyResult<BTreeMap<String, Arc<dyn PreferenceModel>>> {
    Ok(run
        .build_models()
        .map_err(err)?
        .into_iter()
        .enumerate()
        .map(|(i, m)| (player_name(i), m))
        .collect())
}

/// Envy report for an allocation given as a list of selections (player
/// order) or a dict keyed by player name.
#[pyfunction]
#[pyo3(signature = (config, players, division, allocation, seed=None))]
fn verify(
    py: Python<'_>,
    config: &Bound<'_, PyAny>,
    players: &Bound<'_, PyAny>,
    division: Vec<Vec<f64>>,
    allocation: &Bound<'_, PyAny>,
    seed: Option<u64>,
) -> PyResult<Py<PyAny>> {
    let run = run_config(config, players, None, None, seed)?;
    let division = Division::new(&run.config, division).map_err(err)?;
    let allocation: BTreeMap<String, PieceSelection> = match allocation.extract::<Vec<Vec<usize>>>()
    {
        Ok(list) => list
            .into_iter()
            .enumerate()
            .map(|(i, s)| (player_name(i), PieceSelection::from_picks(s)))
            .collect(),
        Err(_) => from_py(allocation)?,
    };
    let report =
        envy_report(&run.config, &division, &allocation, &named_models(&run)?).map_err(err)?;
    to_py(py, &report)
}

/// Every most-preferred admissible selection of one player, ties included.
#[pyfunction]
#[pyo3(signature = (config, player, division))]
fn preferred(
    config: &Bound<'_, PyAny>,
    player: &Bound<'_, PyAny>,
    division: Vec<Vec<f64>>,
) -> PyResult<Vec<Vec<usize>>> {
    let config = config_of(config)?;
    let spec: ModelSpec = from_py(player)?;
    let model = spec.build(&config).map_err(err)?;
    let division = Division::new(&config, division).map_err(err)?;
    Ok(preferred_set(model.as_ref(), &config, &division)
        .map_err(err)?
        .into_iter()
        .map(|s| s.picks().to_vec())
        .collect())
}

/// Grid sweep; `mode` is "certify_none" or "collect".
#[pyfunction]
#[pyo3(signature = (config, players, grid, mode="certify_none", cap=None, seed=None))]
fn sweep(
    py: Python<'_>,
    config: &Bound<'_, PyAny>,
    players: &Bound<'_, PyAny>,
    grid: u32,
    mode: &str,
    cap: Option<u128>,
    seed: Option<u64>,
) -> PyResult<Py<PyAny>> {
    let run = run_config(config, players, None, None, seed)?;
    let mode = match mode {
        "certify_none" => SweepMode::CertifyNone,
        "collect" => SweepMode::Collect,
        other => return Err(err(format!("unknown sweep mode {other:?}"))),
    };
    let models = run.build_models().map_err(err)?;
    let [a, b] = models.as_slice() else {
        return Err(err(format!(
            "sweeps compare exactly 2 players, got {}",
            models.len()
        )));
    };
    let cert = py
        .detach(|| {
            grid_sweep(
                &run.config,
                [a, b],
                grid,
                mode,
                cap.unwrap_or(DEFAULT_SWEEP_CAP),
            )
        })
        .map_err(err)?;
    to_py(py, &cert)
}

#[pyfunction]
#[pyo3(signature = (count=10_000, seed=1))]
fn lemma(py: Python<'_>, count: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let run = py.detach(|| run_lemma_checks(count, seed)).map_err(err)?;
    to_py(py, &run)
}

#[pyfunction]
fn vertex_count(config: &Bound<'_, PyAny>, mesh: u32) -> PyResult<u128> {
    Ok(predicted_vertex_count(&config_of(config)?, mesh))
}

#[pyfunction]
fn cell_count(config: &Bound<'_, PyAny>, mesh: u32) -> PyResult<u128> {
    Ok(predicted_cell_count(&config_of(config)?, mesh))
}

#[pymodule]
fn pymulticake(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCakeConfig>()?;
    m.add_class::<PyTriangulation>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(different_selections, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(preferred, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(lemma, m)?)?;
    m.add_function(wrap_pyfunction!(vertex_count, m)?)?;
    m.add_function(wrap_pyfunction!(cell_count, m)?)?;
    Ok(())
}
