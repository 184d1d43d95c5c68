//! Python bindings: load models, explore them, check formulas and sample runs.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use palps_core::ast::Model as CoreModel;
use palps_core::corpus::{corpus_entry, corpus_list};
use palps_core::parser::{parse_formula, pretty};
use palps_core::pctl::{check, CheckOptions, Quantifier, StateFormula};
use palps_core::semantics::ExploreOptions;
use palps_core::simulator::{estimate, simulate, SimOptions};
use palps_core::statespace::{build, BuildOptions};
use palps_core::{load_model, parse_model, Error};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn run_error(e: impl Into<Error>) -> PyErr {
    let e = e.into();
    if e.is_internal() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn explore_options(max_states: Option<usize>, max_ticks: Option<u64>) -> BuildOptions {
    BuildOptions::from(ExploreOptions { max_states, max_ticks, ..Default::default() })
}

/// A parsed population model.
#[pyclass(frozen, name = "Model", module = "palps")]
struct Model {
    inner: CoreModel,
}

#[pymethods]
impl Model {
    /// Parses model text. Replication and predation channels are restricted
    /// at the top level unless `close_channels` is false.
    #[staticmethod]
    #[pyo3(signature = (text, close_channels = true))]
    fn parse(text: &str, close_channels: bool) -> PyResult<Self> {
        let mut inner = parse_model(text).map_err(value_error)?;
        let errors = palps_core::ast::check_wellformed(&inner);
        if !errors.is_empty() {
            return Err(run_error(Error::IllFormed(errors)));
        }
        if close_channels {
            inner.close_channels();
        }
        Ok(Model { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, close_channels = true))]
    fn load(path: PathBuf, close_channels: bool) -> PyResult<Self> {
        Ok(Model { inner: load_model(&path, close_channels).map_err(run_error)? })
    }

    /// One of the bundled example models.
    #[staticmethod]
    fn corpus(name: &str) -> PyResult<Self> {
        let entry = corpus_entry(name).ok_or_else(|| value_error(format!("no corpus model named {name}")))?;
        Ok(Model { inner: entry.load().map_err(value_error)? })
    }

    fn pretty(&self) -> String {
        pretty(&self.inner)
    }

    #[getter]
    fn species(&self) -> Vec<String> {
        self.inner.species_ids().map(|s| s.to_string()).collect()
    }

    #[getter]
    fn locations(&self) -> Vec<String> {
        self.inner.habitat.locations().iter().map(|l| l.to_string()).collect()
    }

    /// Builds the state space and reports its size.
    #[pyo3(signature = (max_states = None, max_ticks = None))]
    fn explore<'py>(
        &self,
        py: Python<'py>,
        max_states: Option<usize>,
        max_ticks: Option<u64>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let (_, r) = build(&self.inner, &[], &explore_options(max_states, max_ticks)).map_err(run_error)?;
        let d = PyDict::new(py);
        d.set_item("states", r.states)?;
        d.set_item("transitions", r.transitions)?;
        d.set_item("truncated", r.truncated)?;
        d.set_item("truncation_reason", r.truncation_reason)?;
        Ok(d)
    }

    /// Checks one formula at the initial state. `quantifier` forces
    /// `"min"` or `"max"` scheduler quantification for every bound.
    #[pyo3(signature = (formula, max_states = None, quantifier = None))]
    fn check<'py>(
        &self,
        py: Python<'py>,
        formula: &str,
        max_states: Option<usize>,
        quantifier: Option<&str>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let f = parse_formula(formula, &self.inner).map_err(value_error)?;
        let quantifier = match quantifier {
            None => None,
            Some("min") => Some(Quantifier::Min),
            Some("max") => Some(Quantifier::Max),
            Some(other) => return Err(value_error(format!("quantifier must be min or max, not {other}"))),
        };
        let (mdp, report) =
            build(&self.inner, &f.atoms(), &explore_options(max_states, None)).map_err(run_error)?;
        let r = check(&mdp, &f, &CheckOptions { quantifier, ..Default::default() }).map_err(run_error)?;
        let d = PyDict::new(py);
        d.set_item("verdict", r.verdict)?;
        d.set_item("approximate", r.approximate)?;
        d.set_item("pmin", r.pmin())?;
        d.set_item("pmax", r.pmax())?;
        d.set_item("states", report.states)?;
        d.set_item("truncated", report.truncated)?;
        Ok(d)
    }

    /// Estimates the probability of the path formula inside a `P` bound
    /// from sampled runs.
    #[pyo3(signature = (formula, samples = 1000, seed = 0, confidence = 0.99, max_ticks = 100))]
    fn estimate<'py>(
        &self,
        py: Python<'py>,
        formula: &str,
        samples: u64,
        seed: u64,
        confidence: f64,
        max_ticks: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let f = parse_formula(formula, &self.inner).map_err(value_error)?;
        let StateFormula::Prob { path, .. } = &f else {
            return Err(value_error("only probability formulas can be estimated"));
        };
        let opts = SimOptions { seed, max_ticks, ..Default::default() };
        let e = py
            .detach(|| estimate(&self.inner, path, samples, confidence, &opts))
            .map_err(run_error)?;
        let d = PyDict::new(py);
        d.set_item("samples", e.samples)?;
        d.set_item("successes", e.successes)?;
        d.set_item("undecided", e.undecided)?;
        d.set_item("p_hat", e.p_hat)?;
        d.set_item("ci_low", e.ci_low)?;
        d.set_item("ci_high", e.ci_high)?;
        d.set_item("scheduler_choices", e.scheduler_choices)?;
        Ok(d)
    }

    /// Sampled runs, each with its end reason and the counts `"s@l"` after
    /// every tick.
    #[pyo3(signature = (samples = 1, seed = 0, max_ticks = 100))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        samples: u64,
        seed: u64,
        max_ticks: u64,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let opts = SimOptions { seed, max_ticks, ..Default::default() };
        let traces = py.detach(|| simulate(&self.inner, &opts, samples)).map_err(run_error)?;
        traces
            .iter()
            .map(|t| {
                let d = PyDict::new(py);
                d.set_item("end", t.end.as_str())?;
                d.set_item("ticks", t.ticks)?;
                d.set_item("steps", t.steps)?;
                let series = t
                    .series
                    .iter()
                    .map(|env| {
                        let counts = PyDict::new(py);
                        for (s, l, n) in env.iter() {
                            counts.set_item(format!("{s}@{l}"), n)?;
                        }
                        Ok(counts)
                    })
                    .collect::<PyResult<Vec<_>>>()?;
                d.set_item("series", series)?;
                Ok(d)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(species={:?}, locations={})",
            self.species(),
            self.inner.habitat.locations().len()
        )
    }
}

/// Names of the bundled example models.
#[pyfunction]
fn corpus_names() -> Vec<&'static str> {
    corpus_list().iter().map(|e| e.name).collect()
}

#[pymodule]
fn palps(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(corpus_names, m)?)?;
    Ok(())
}
