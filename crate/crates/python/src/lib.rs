use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use sagfn::env::Environment;
use sagfn::fragments::Vocabulary;
use sagfn::state_space::{self, StateDag};
use sagfn::symmetry;
use sagfn::training::{self, CorrectionMode, Objective, Schedule};
use sagfn::LabeledGraph;

type TrainOutput = (Vec<(usize, f64, f64)>, Vec<f64>);

fn err(e: sagfn::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Node- and edge-labeled undirected graph.
#[pyclass(name = "Graph", module = "sagfn_py", skip_from_py_object)]
#[derive(Clone)]
struct PyGraph {
    inner: LabeledGraph,
}

#[pymethods]
impl PyGraph {
    #[new]
    #[pyo3(signature = (labels, edges = Vec::new()))]
    fn new(labels: Vec<u32>, edges: Vec<(usize, usize, u32)>) -> PyResult<Self> {
        let inner = LabeledGraph::from_edges(labels, &edges).map_err(err)?;
        Ok(PyGraph { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyGraph {
            inner: LabeledGraph::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn labels(&self) -> Vec<u32> {
        self.inner.labels().to_vec()
    }

    fn edges(&self) -> Vec<(usize, usize, u32)> {
        self.inner.edges().collect()
    }

    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    fn add_node(&mut self, label: u32) -> usize {
        self.inner.add_node(label)
    }

    fn add_edge(&mut self, u: usize, v: usize, label: u32) -> PyResult<()> {
        self.inner.add_edge(u, v, label).map_err(err)
    }

    /// Returns the removed edge's label, or `None` if absent.
    fn remove_edge(&mut self, u: usize, v: usize) -> Option<u32> {
        self.inner.remove_edge(u, v)
    }

    fn permuted(&self, perm: Vec<usize>) -> PyResult<Self> {
        let p = sagfn::Permutation::new(perm).map_err(err)?;
        Ok(PyGraph {
            inner: self.inner.apply_permutation(&p).map_err(err)?,
        })
    }

    fn aut_order(&self) -> u128 {
        symmetry::automorphism_group(&self.inner).order()
    }

    fn node_orbits(&self) -> Vec<Vec<usize>> {
        symmetry::automorphism_group(&self.inner).node_orbits()
    }

    fn canonical_hash(&self) -> String {
        symmetry::canonical_form(&self.inner).hash_hex()
    }

    fn is_isomorphic(&self, other: &PyGraph) -> bool {
        symmetry::are_isomorphic(&self.inner, &other.inner)
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, edges={})", self.inner.n(), self.inner.num_edges())
    }
}

/// Enumerated environment: rules plus its exact state DAG.
#[pyclass(name = "StateSpace", module = "sagfn_py")]
struct PyStateSpace {
    env: Environment,
    dag: StateDag,
}

fn environment(name: &str, max_fragments: usize) -> PyResult<Environment> {
    Ok(match name {
        "illustrative" => Environment::illustrative(),
        "clique" => Environment::clique(),
        "cycle" => Environment::cycle(),
        "fragment" => Environment::fragment(Vocabulary::standard(), max_fragments),
        "catalog" => Environment::catalog(4),
        _ => return Err(PyValueError::new_err(format!("unknown env {name}"))),
    })
}

#[pymethods]
impl PyStateSpace {
    #[new]
    #[pyo3(signature = (env, max_fragments = 3))]
    fn new(py: Python<'_>, env: &str, max_fragments: usize) -> PyResult<Self> {
        let env = environment(env, max_fragments)?;
        let dag = py.detach(|| state_space::enumerate(&env)).map_err(err)?;
        Ok(PyStateSpace { env, dag })
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.dag.len()
    }

    #[getter]
    fn num_terminals(&self) -> usize {
        self.dag.terminals.len()
    }

    /// Terminal graphs in evaluation order.
    fn terminals(&self) -> Vec<PyGraph> {
        self.dag
            .terminals
            .iter()
            .map(|&x| PyGraph {
                inner: self.dag.state(x).graph.clone(),
            })
            .collect()
    }

    /// Normalized `R` over terminals.
    fn target_distribution(&self) -> Vec<f64> {
        self.dag.target_distribution().probs
    }

    /// Legal forward actions of `g`, rendered as strings.
    fn forward_actions(&self, g: &PyGraph) -> Vec<String> {
        self.env.forward_actions(&g.inner).iter().map(|a| a.to_string()).collect()
    }

    /// Trains and returns `(step, l1_error, log_Z)` rows plus the final terminating distribution.
    #[pyo3(signature = (objective = "tb", mode = "reward-scaling", steps = 2000, seed = 0, eval_every = 500))]
    fn train(
        &self,
        py: Python<'_>,
        objective: &str,
        mode: &str,
        steps: usize,
        seed: u64,
        eval_every: usize,
    ) -> PyResult<TrainOutput> {
        let objective: Objective = objective.parse().map_err(err)?;
        let mode: CorrectionMode = mode.parse().map_err(err)?;
        let schedule = Schedule {
            steps,
            seed,
            eval_every,
            ..Schedule::default()
        };
        let res = py
            .detach(|| training::train(&self.env, &self.dag, objective, mode, &schedule))
            .map_err(err)?;
        let rows = res.metrics.iter().map(|r| (r.step, r.l1_error, r.log_z)).collect();
        let dist = sagfn::policy::exact_terminating_distribution(&self.dag, &res.policy);
        Ok((rows, dist.probs))
    }
}

#[pyfunction]
fn aut_order(g: &PyGraph) -> u128 {
    g.aut_order()
}

#[pyfunction]
fn canonical_hash(g: &PyGraph) -> String {
    g.canonical_hash()
}

#[pyfunction]
fn are_isomorphic(a: &PyGraph, b: &PyGraph) -> bool {
    a.is_isomorphic(b)
}

#[pymodule]
fn sagfn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyStateSpace>()?;
    m.add_function(wrap_pyfunction!(aut_order, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_hash, m)?)?;
    m.add_function(wrap_pyfunction!(are_isomorphic, m)?)?;
    Ok(())
}
