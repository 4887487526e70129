//! Python bindings: architecture graphs, complexity profiles, filter
//! surgery and the pruning loop.

use std::collections::BTreeSet;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use prunekit::complexity::{energy_from_totals, Mode, Totals};
use prunekit::{
    network_complexity, parse_architecture, propagate_shapes, relative_weights as weights, remove_filters,
    serialize_architecture, validate_graph, zoo, NetworkGraph, PruneConfig,
};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    mode.parse().map_err(value_error)
}

fn totals_dict<'py>(py: Python<'py>, t: &Totals) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("flops", t.flops)?;
    d.set_item("memory_bytes", t.memory_bytes)?;
    d.set_item("params", t.params)?;
    Ok(d)
}

/// A shape-resolved architecture graph.
#[pyclass(name = "Graph", module = "prunekit", frozen)]
struct PyGraph {
    inner: NetworkGraph,
}

#[pymethods]
impl PyGraph {
    /// Parse and shape-resolve an architecture JSON document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let g = parse_architecture(text).map_err(value_error)?;
        let inner = propagate_shapes(&g, g.input_shape).map_err(value_error)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn zoo(name: &str) -> PyResult<Self> {
        let inner = zoo::builtin_arch(name).map_err(|e| PyKeyError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> String {
        serialize_architecture(&self.inner)
    }

    /// Violations as `(layer_id, rule, message)` tuples; empty when valid.
    fn validate(&self) -> Vec<(String, String, String)> {
        validate_graph(&self.inner)
            .violations
            .into_iter()
            .map(|v| (v.layer_id, v.rule.to_string(), v.message))
            .collect()
    }

    fn layer_ids(&self) -> Vec<String> {
        self.inner.layers.iter().map(|l| l.id.clone()).collect()
    }

    fn prunable_ids(&self) -> Vec<String> {
        self.inner.prunable_ids()
    }

    fn kind(&self, layer_id: &str) -> PyResult<&'static str> {
        self.layer(layer_id).map(|l| l.kind.as_str())
    }

    fn out_channels(&self, layer_id: &str) -> PyResult<Option<usize>> {
        self.layer(layer_id).map(|l| l.resolved_out_channels())
    }

    fn in_channels(&self, layer_id: &str) -> PyResult<Option<usize>> {
        self.layer(layer_id).map(|l| l.in_channels())
    }

    /// A copy with the given filters removed from `layer_id`.
    fn remove_filters(&self, layer_id: &str, indices: BTreeSet<usize>) -> PyResult<Self> {
        let inner = remove_filters(&self.inner, layer_id, &indices).map_err(value_error)?;
        Ok(Self { inner })
    }

    /// `{"totals": {...}, "per_layer": {id: {...}}}`.
    #[pyo3(signature = (flops_factor = 2))]
    fn complexity<'py>(&self, py: Python<'py>, flops_factor: u32) -> PyResult<Bound<'py, PyDict>> {
        let p = network_complexity(&self.inner, flops_factor).map_err(value_error)?;
        let per_layer = PyDict::new(py);
        for (id, t) in &p.per_layer {
            per_layer.set_item(id, totals_dict(py, t)?)?;
        }
        let d = PyDict::new(py);
        d.set_item("flops_factor", p.flops_factor)?;
        d.set_item("totals", totals_dict(py, &p.totals)?)?;
        d.set_item("per_layer", per_layer)?;
        Ok(d)
    }

    /// Sampling probabilities over the prunable layers.
    #[pyo3(signature = (mode, flops_factor = 2))]
    fn relative_weights(&self, mode: &str, flops_factor: u32) -> PyResult<Vec<(String, f64)>> {
        let p = network_complexity(&self.inner, flops_factor).map_err(value_error)?;
        let w = weights(&p, parse_mode(mode)?, &self.inner.prunable_ids()).map_err(value_error)?;
        Ok(w.iter().map(|(id, p)| (id.to_string(), p)).collect())
    }

    /// `(compute_pj, access_pj, total_pj)`.
    #[pyo3(signature = (flops_factor = 2))]
    fn energy(&self, flops_factor: u32) -> PyResult<(f64, f64, f64)> {
        let p = network_complexity(&self.inner, flops_factor).map_err(value_error)?;
        let e = energy_from_totals(&p.totals);
        Ok((e.compute_pj, e.access_pj, e.total_pj))
    }

    /// Prune to `target` in `mode`; returns the pruned graph and the trace
    /// as JSON.
    #[pyo3(signature = (mode, target, seed, ratio = 0.1, min_filters = 1, flops_factor = 2, max_iterations = prunekit::pruner::DEFAULT_MAX_ITERATIONS))]
    #[allow(clippy::too_many_arguments)]
    fn prune(
        &self,
        mode: &str,
        target: u64,
        seed: u64,
        ratio: f64,
        min_filters: usize,
        flops_factor: u32,
        max_iterations: usize,
    ) -> PyResult<(Self, String)> {
        let config = PruneConfig {
            min_filters,
            flops_factor,
            max_iterations,
            ..PruneConfig::new(parse_mode(mode)?, target, ratio, seed)
        };
        let (inner, trace) = prunekit::prune_to_target(&self.inner, &config).map_err(value_error)?;
        let json = serde_json::to_string(&trace).map_err(value_error)?;
        Ok((Self { inner }, json))
    }

    fn __len__(&self) -> usize {
        self.inner.layers.len()
    }

    fn __repr__(&self) -> String {
        format!("Graph({} layers, {} edges)", self.inner.layers.len(), self.inner.edges.len())
    }
}

impl PyGraph {
    fn layer(&self, id: &str) -> PyResult<&prunekit::LayerSpec> {
        self.inner.layer(id).ok_or_else(|| PyKeyError::new_err(format!("no layer `{id}`")))
    }
}

#[pyfunction]
fn zoo_names() -> Vec<&'static str> {
    zoo::names().collect()
}

/// `(compute_pj, access_pj, total_pj)` for raw counts.
#[pyfunction]
fn energy_estimate(flops: u64, memory_bytes: u64) -> (f64, f64, f64) {
    let e = energy_from_totals(&Totals { flops, memory_bytes, params: 0 });
    (e.compute_pj, e.access_pj, e.total_pj)
}

#[pymodule]
fn prunekit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(zoo_names, m)?)?;
    m.add_function(wrap_pyfunction!(energy_estimate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
