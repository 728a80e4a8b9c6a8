//! Python bindings: tables, margin specs, fiber enumeration, chain sampling,
//! and the tilting solvers, exposed as the `fiberwalk_py` module.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fiberwalk::fiber::{self, WeightKind};
use fiberwalk::moves::{self, MoveSet};
use fiberwalk::phase;
use fiberwalk::sampler::{self, ChainConfig};
use fiberwalk::solver::{self, SolveOptions};
use fiberwalk::Error as CoreError;

fn to_py_err(e: CoreError) -> PyErr {
    match &e {
        CoreError::BudgetExceeded { .. }
        | CoreError::NotConverged { .. }
        | CoreError::PqNotConverged { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_target(name: &str) -> PyResult<WeightKind> {
    match name {
        "uniform" => Ok(WeightKind::Uniform),
        "hypergeometric" | "hypergeom" => Ok(WeightKind::Hypergeometric),
        other => Err(PyValueError::new_err(format!(
            "unknown target '{other}'; use 'uniform' or 'hypergeometric'"
        ))),
    }
}

/// A dense nonnegative integer table with plane-sum margins.
#[pyclass(name = "Table", skip_from_py_object)]
#[derive(Clone)]
struct PyTable {
    inner: fiberwalk::Table,
}

#[pymethods]
impl PyTable {
    #[new]
    fn new(dims: Vec<usize>, data: Vec<i64>) -> PyResult<Self> {
        Ok(PyTable {
            inner: fiberwalk::Table::new(dims, data).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims().to_vec()
    }

    #[getter]
    fn data(&self) -> Vec<i64> {
        self.inner.data().to_vec()
    }

    fn margins(&self, axis: usize) -> PyResult<Vec<i64>> {
        self.inner.plane_margins(axis).map_err(to_py_err)
    }

    fn grand_total(&self) -> i64 {
        self.inner.grand_total()
    }

    fn __repr__(&self) -> String {
        format!(
            "Table(dims={:?}, data={:?})",
            self.inner.dims(),
            self.inner.data()
        )
    }

    fn __eq__(&self, other: &PyTable) -> bool {
        self.inner == other.inner
    }
}

/// Plane-sum margins defining a fiber; one vector per axis, equal totals.
#[pyclass(name = "MarginSpec", skip_from_py_object)]
#[derive(Clone)]
struct PySpec {
    inner: fiberwalk::MarginSpec,
}

#[pymethods]
impl PySpec {
    #[new]
    fn new(axis_sums: Vec<Vec<i64>>) -> PyResult<Self> {
        Ok(PySpec {
            inner: fiberwalk::MarginSpec::new(axis_sums).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn axis_sums(&self) -> Vec<Vec<i64>> {
        self.inner.axis_sums().to_vec()
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims()
    }

    fn total(&self) -> i64 {
        self.inner.total()
    }

    /// A member of the fiber (greedy northwest-corner fill).
    fn greedy_table(&self) -> PyTable {
        PyTable {
            inner: self.inner.greedy_table(),
        }
    }

    fn __repr__(&self) -> String {
        format!("MarginSpec({:?})", self.inner.axis_sums())
    }
}

/// Number of moves in the connecting basis for a table shape.
#[pyfunction]
fn move_count(dims: Vec<usize>) -> PyResult<u64> {
    Ok(MoveSet::for_dims(&dims).map_err(to_py_err)?.len())
}

/// Number of distinct-index 3-way moves: (3/2) n1 n2 n3 (n1-1)(n2-1)(n3-1).
#[pyfunction]
fn plane_move_count_3way(n1: usize, n2: usize, n3: usize) -> PyResult<u64> {
    Ok(moves::plane_moves_3way(n1, n2, n3)
        .map_err(to_py_err)?
        .len())
}

/// Distinct-index moves with their +1 cell at the corner: 3 (n1-1)(n2-1)(n3-1).
#[pyfunction]
fn corner_applicable_count(n1: usize, n2: usize, n3: usize) -> PyResult<u64> {
    moves::count_applicable_at_corner(n1, n2, n3).map_err(to_py_err)
}

/// One move as its nonzero cells: ((indices...), sign) pairs.
type SparseMove = Vec<(Vec<usize>, i8)>;

/// Moves of the connecting basis as lists of ((indices...), sign) pairs.
#[pyfunction]
fn basis_moves(dims: Vec<usize>) -> PyResult<Vec<SparseMove>> {
    let set = MoveSet::for_dims(&dims).map_err(to_py_err)?;
    Ok(set
        .moves()
        .map_err(to_py_err)?
        .iter()
        .map(|m| m.entries())
        .collect())
}

/// All tables in the fiber of `spec`, in canonical order.
#[pyfunction]
#[pyo3(signature = (spec, budget = fiber::DEFAULT_FIBER_BUDGET))]
fn enumerate_fiber(spec: &PySpec, budget: usize) -> PyResult<Vec<PyTable>> {
    let f = fiber::enumerate_fiber(&spec.inner, budget).map_err(to_py_err)?;
    Ok(f.tables()
        .iter()
        .map(|t| PyTable { inner: t.clone() })
        .collect())
}

/// Exact conditional weights ('uniform' or 'hypergeometric') over the fiber.
#[pyfunction]
#[pyo3(signature = (spec, kind, budget = fiber::DEFAULT_FIBER_BUDGET))]
fn fiber_weights(spec: &PySpec, kind: &str, budget: usize) -> PyResult<Vec<f64>> {
    let f = fiber::enumerate_fiber(&spec.inner, budget).map_err(to_py_err)?;
    Ok(fiber::fiber_weights(&f, parse_target(kind)?)
        .map_err(to_py_err)?
        .weights)
}

/// Exact TV distance between the uniform and hypergeometric laws.
#[pyfunction]
#[pyo3(signature = (spec, budget = fiber::DEFAULT_FIBER_BUDGET))]
fn uniform_vs_hypergeometric_tv(spec: &PySpec, budget: usize) -> PyResult<f64> {
    let f = fiber::enumerate_fiber(&spec.inner, budget).map_err(to_py_err)?;
    sampler::divergence_uniform_vs_hypergeometric(&f).map_err(to_py_err)
}

/// Whether the connecting basis links every pair of fiber tables.
#[pyfunction]
#[pyo3(signature = (spec, budget = fiber::DEFAULT_FIBER_BUDGET))]
fn connectivity(spec: &PySpec, budget: usize) -> PyResult<(bool, usize)> {
    let f = fiber::enumerate_fiber(&spec.inner, budget).map_err(to_py_err)?;
    let set = MoveSet::for_dims(&spec.inner.dims()).map_err(to_py_err)?;
    let c = fiber::connectivity_check(&f, &set).map_err(to_py_err)?;
    Ok((c.connected, c.components))
}

/// Runs a Metropolis-Hastings chain; returns acceptance rate, kept count,
/// and the corner-cell trace.
#[pyfunction]
#[pyo3(signature = (spec, target = "uniform", steps = 10_000, burnin = 0, thin = 1, seed = 0))]
fn run_chain<'py>(
    py: Python<'py>,
    spec: &PySpec,
    target: &str,
    steps: usize,
    burnin: usize,
    thin: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = ChainConfig {
        start: spec.inner.greedy_table(),
        target: parse_target(target)?,
        steps,
        burn_in: burnin,
        thin,
        seed,
        keep_samples: false,
    };
    let set = MoveSet::for_dims(&spec.inner.dims()).map_err(to_py_err)?;
    let stats = sampler::run_chain(&config, &set).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("acceptance_rate", stats.acceptance_rate)?;
    out.set_item("kept", stats.kept)?;
    out.set_item("corner_trace", stats.corner_trace)?;
    out.set_item("visit_counts", stats.visit_counts)?;
    Ok(out)
}

/// TV distance between a chain's empirical law and the exact target law.
#[pyfunction]
#[pyo3(signature = (spec, target = "uniform", steps = 100_000, burnin = 1000, thin = 1, seed = 0,
                    budget = fiber::DEFAULT_FIBER_BUDGET))]
fn chain_tv(
    spec: &PySpec,
    target: &str,
    steps: usize,
    burnin: usize,
    thin: usize,
    seed: u64,
    budget: usize,
) -> PyResult<f64> {
    let kind = parse_target(target)?;
    let f = fiber::enumerate_fiber(&spec.inner, budget).map_err(to_py_err)?;
    let config = ChainConfig {
        start: spec.inner.greedy_table(),
        target: kind,
        steps,
        burn_in: burnin,
        thin,
        seed,
        keep_samples: false,
    };
    let set = MoveSet::for_dims(&spec.inner.dims()).map_err(to_py_err)?;
    let stats = sampler::run_chain(&config, &set).map_err(to_py_err)?;
    let exact = fiber::fiber_weights(&f, kind).map_err(to_py_err)?;
    let freq = sampler::empirical_distribution(&stats, &f).map_err(to_py_err)?;
    sampler::tv_distance(&freq, &exact.weights).map_err(to_py_err)
}

/// Total variation distance (1/2) sum |p - q|.
#[pyfunction]
fn tv_distance(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    sampler::tv_distance(&p, &q).map_err(to_py_err)
}

/// Maximum-likelihood tilting for a margin spec.
#[pyfunction]
#[pyo3(signature = (spec, tol = 1e-10, max_iter = 500))]
fn solve_mle<'py>(
    py: Python<'py>,
    spec: &PySpec,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let report = solver::solve_mle(&spec.inner, &SolveOptions { tol, max_iter })
        .map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("axes", report.tilting.axes().to_vec())?;
    let expected = PyDict::new(py);
    expected.set_item("dims", report.expected.dims().to_vec())?;
    expected.set_item("data", report.expected.data().to_vec())?;
    out.set_item("expected", expected)?;
    out.set_item("residual_inf", report.residual_inf)?;
    out.set_item("iterations", report.iterations)?;
    out.set_item("converged", report.converged)?;
    Ok(out)
}

/// Solves the reduced heavy-corner system at size n and ratio B.
#[pyfunction]
fn barvinok_solve<'py>(py: Python<'py>, n: usize, b: f64) -> PyResult<Bound<'py, PyDict>> {
    let s = solver::barvinok_solve(n, b).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("n", s.n)?;
    out.set_item("b", s.b)?;
    out.set_item("p", s.p)?;
    out.set_item("q", s.q)?;
    out.set_item("p_minus_one", s.p_minus_one)?;
    out.set_item("q_minus_one", s.q_minus_one)?;
    out.set_item("z111", s.z111)?;
    out.set_item("z121", s.z121)?;
    out.set_item("z221", s.z221)?;
    out.set_item("z222", s.z222)?;
    out.set_item("regime", s.regime.to_string())?;
    out.set_item("near_critical", s.near_critical)?;
    out.set_item("residual", s.residual)?;
    out.set_item("converged", s.converged)?;
    Ok(out)
}

/// Closed-form limiting entries at ratio B.
#[pyfunction]
fn limit_entries_3way<'py>(py: Python<'py>, b: f64) -> PyResult<Bound<'py, PyDict>> {
    let lim = phase::limit_entries_3way(b).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("b", lim.b)?;
    out.set_item("regime", lim.regime.to_string())?;
    out.set_item("near_critical", lim.near_critical)?;
    out.set_item("z111_level", lim.z111_level)?;
    out.set_item("z111_slope", lim.z111_slope)?;
    out.set_item("z121", lim.z121)?;
    out.set_item("z221", lim.z221)?;
    out.set_item("z222", lim.z222)?;
    Ok(out)
}

/// The 2-way typical table for given row and column sums.
#[pyfunction]
fn typical_table_2way<'py>(
    py: Python<'py>,
    rows: Vec<i64>,
    cols: Vec<i64>,
) -> PyResult<Bound<'py, PyDict>> {
    let t = solver::typical_table_2way(rows, cols, &SolveOptions::default())
        .map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("dims", t.solve.expected.dims().to_vec())?;
    out.set_item("data", t.solve.expected.data().to_vec())?;
    out.set_item("objective", t.objective)?;
    out.set_item("residual_inf", t.solve.residual_inf)?;
    Ok(out)
}

/// Critical ratio 1/(2^(2/3) - 1) for 3-way heavy-corner margins.
#[pyfunction]
fn critical_ratio_3way() -> f64 {
    solver::critical_ratio_3way()
}

/// Critical ratio 1 + sqrt(1 + 1/C) for the 2-way two-value margins.
#[pyfunction]
fn critical_ratio_2way(c: f64) -> f64 {
    phase::critical_ratio_2way(c)
}

#[pyfunction]
fn psi(theta: f64) -> PyResult<f64> {
    solver::psi(theta).map_err(to_py_err)
}

#[pyfunction]
fn psi_prime(theta: f64) -> PyResult<f64> {
    solver::psi_prime(theta).map_err(to_py_err)
}

#[pyfunction]
fn psi_double(theta: f64) -> PyResult<f64> {
    solver::psi_double(theta).map_err(to_py_err)
}

#[pymodule]
fn fiberwalk_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTable>()?;
    m.add_class::<PySpec>()?;
    m.add_function(wrap_pyfunction!(move_count, m)?)?;
    m.add_function(wrap_pyfunction!(plane_move_count_3way, m)?)?;
    m.add_function(wrap_pyfunction!(corner_applicable_count, m)?)?;
    m.add_function(wrap_pyfunction!(basis_moves, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_fiber, m)?)?;
    m.add_function(wrap_pyfunction!(fiber_weights, m)?)?;
    m.add_function(wrap_pyfunction!(uniform_vs_hypergeometric_tv, m)?)?;
    m.add_function(wrap_pyfunction!(connectivity, m)?)?;
    m.add_function(wrap_pyfunction!(run_chain, m)?)?;
    m.add_function(wrap_pyfunction!(chain_tv, m)?)?;
    m.add_function(wrap_pyfunction!(tv_distance, m)?)?;
    m.add_function(wrap_pyfunction!(solve_mle, m)?)?;
    m.add_function(wrap_pyfunction!(barvinok_solve, m)?)?;
    m.add_function(wrap_pyfunction!(limit_entries_3way, m)?)?;
    m.add_function(wrap_pyfunction!(typical_table_2way, m)?)?;
    m.add_function(wrap_pyfunction!(critical_ratio_3way, m)?)?;
    m.add_function(wrap_pyfunction!(critical_ratio_2way, m)?)?;
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    m.add_function(wrap_pyfunction!(psi_prime, m)?)?;
    m.add_function(wrap_pyfunction!(psi_double, m)?)?;
    Ok(())
}
