use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use quasishadow::applications::{build_semiconjugacy, find_periodic_center_leaf};
use quasishadow::geometry::{ChartConfig, Point3};
use quasishadow::orbit::{find_near_return, generate_noisy, PseudoOrbit, ReturnMode};
use quasishadow::report::{run, ExperimentConfig};
use quasishadow::solver::{shadow as solve, BoundaryPolicy, SolverConfig, Variant};
use quasishadow::systems::{CatCircle, PartiallyHyperbolicSystem, SplitConfig, SplittingMode};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn point(c: [f64; 3]) -> PyResult<Point3> {
    Point3::wrap(c).map_err(err)
}

fn chart(rho0: f64, rho: f64) -> PyResult<ChartConfig> {
    ChartConfig::new(rho0, rho).map_err(err)
}

fn parse<T: serde::de::DeserializeOwned>(what: &str, name: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(name.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} {name:?}")))
}

/// The cat map on the base skewed by a rotation of the circle fibers.
#[pyclass(name = "CatCircle", frozen, skip_from_py_object)]
struct PyCatCircle {
    inner: CatCircle,
}

#[pymethods]
impl PyCatCircle {
    #[new]
    #[pyo3(signature = (alpha=0.0, kappa=0.0, mode=None, n_split=40, split_tol=1e-12))]
    fn new(alpha: f64, kappa: f64, mode: Option<&str>, n_split: usize, split_tol: f64) -> PyResult<Self> {
        let mode = match mode {
            Some(m) => parse::<SplittingMode>("splitting mode", m)?,
            None if kappa == 0.0 => SplittingMode::Analytic,
            None => SplittingMode::Numerical,
        };
        let split = SplitConfig {
            n_split,
            tol: split_tol,
        };
        Ok(Self {
            inner: CatCircle::new(alpha, kappa, mode, split).map_err(err)?,
        })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.kappa()
    }

    fn forward(&self, x: [f64; 3]) -> PyResult<[f64; 3]> {
        Ok(*self.inner.forward(&point(x)?).coords())
    }

    fn inverse(&self, x: [f64; 3]) -> PyResult<[f64; 3]> {
        Ok(*self.inner.inverse(&point(x)?).coords())
    }

    fn differential(&self, x: [f64; 3]) -> PyResult<Vec<Vec<f64>>> {
        let m = self.inner.differential(&point(x)?);
        Ok((0..3).map(|i| (0..3).map(|j| m[(i, j)]).collect()).collect())
    }

    /// Unit directions `(stable, center, unstable)` at `x`.
    fn splitting(&self, x: [f64; 3]) -> PyResult<Vec<[f64; 3]>> {
        let sp = self.inner.splitting_at(&point(x)?).map_err(err)?;
        Ok(quasishadow::systems::Bundle::ALL
            .iter()
            .map(|b| {
                let d = sp.direction(*b);
                [d[0], d[1], d[2]]
            })
            .collect())
    }

    fn rates<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.rates())
    }

    fn __repr__(&self) -> String {
        format!("CatCircle(alpha={}, kappa={})", self.inner.alpha(), self.inner.kappa())
    }
}

/// Window `x_{-N..N}` of a noisy orbit through `x0`.
#[pyfunction]
#[pyo3(signature = (system, x0, half_width, noise, seed=0, rho0=0.5, rho=0.05))]
fn noisy_orbit(
    system: &PyCatCircle,
    x0: [f64; 3],
    half_width: usize,
    noise: f64,
    seed: u64,
    rho0: f64,
    rho: f64,
) -> PyResult<Vec<[f64; 3]>> {
    let orbit = generate_noisy(&system.inner, &chart(rho0, rho)?, point(x0)?, half_width, noise, seed).map_err(err)?;
    Ok(orbit.points.iter().map(|p| *p.coords()).collect())
}

/// Quasi-shadow a pseudo orbit; returns the result as a dict.
#[pyfunction]
#[pyo3(signature = (system, points, first_index=0, variant="tau1", epsilon=0.04, cyclic=false, rho0=0.5, rho=0.05, probes=16, seed=0))]
#[allow(clippy::too_many_arguments)]
fn shadow<'py>(
    py: Python<'py>,
    system: &PyCatCircle,
    points: Vec<[f64; 3]>,
    first_index: i64,
    variant: &str,
    epsilon: f64,
    cyclic: bool,
    rho0: f64,
    rho: f64,
    probes: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let pts = points.into_iter().map(point).collect::<PyResult<Vec<_>>>()?;
    let sys = &system.inner;
    let orbit = if cyclic {
        PseudoOrbit::cyclic(sys, pts)
    } else {
        PseudoOrbit::window(sys, pts, first_index)
    };
    let cfg = SolverConfig {
        variant: parse::<Variant>("variant", variant)?,
        epsilon,
        boundary_policy: if cyclic { BoundaryPolicy::Cyclic } else { BoundaryPolicy::Truncated },
        probes,
        probe_seed: seed,
        ..Default::default()
    };
    let chart = chart(rho0, rho)?;
    let res = py.detach(|| solve(sys, &chart, &orbit, &cfg)).map_err(err)?;
    to_py(py, &res)
}

/// First `n <= max_n` with a return below `threshold`; `(n, gap)`.
#[pyfunction]
#[pyo3(signature = (system, x0, max_n, threshold, mode="point"))]
fn near_return(system: &PyCatCircle, x0: [f64; 3], max_n: usize, threshold: f64, mode: &str) -> PyResult<(usize, f64)> {
    let mode = parse::<ReturnMode>("return mode", mode)?;
    let r = find_near_return(&system.inner, point(x0)?, max_n, threshold, mode).map_err(err)?;
    Ok((r.return_time, r.gap))
}

/// Periodic center leaf from the first near return of `x0`.
#[pyfunction]
#[pyo3(signature = (system, x0, max_n=5000, threshold=1e-3, mode="point", epsilon=0.04, leaf_tolerance=1e-9))]
#[allow(clippy::too_many_arguments)]
fn close<'py>(
    py: Python<'py>,
    system: &PyCatCircle,
    x0: [f64; 3],
    max_n: usize,
    threshold: f64,
    mode: &str,
    epsilon: f64,
    leaf_tolerance: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let mode = parse::<ReturnMode>("return mode", mode)?;
    let sys = &system.inner;
    let ret = find_near_return(sys, point(x0)?, max_n, threshold, mode).map_err(err)?;
    let cfg = SolverConfig {
        epsilon,
        ..Default::default()
    };
    let leaf = find_periodic_center_leaf(sys, &ChartConfig::default(), &ret, &cfg, leaf_tolerance).map_err(err)?;
    to_py(py, &leaf)
}

/// Semiconjugacy from `g` to `f` on a `grid³` sample.
#[pyfunction]
#[pyo3(signature = (f, g, grid=4, half_width=50, epsilon=0.04, rho=0.05, probes=4))]
#[allow(clippy::too_many_arguments)]
fn semiconjugacy<'py>(
    py: Python<'py>,
    f: &PyCatCircle,
    g: &PyCatCircle,
    grid: usize,
    half_width: usize,
    epsilon: f64,
    rho: f64,
    probes: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let chart = chart(0.5, rho)?;
    let cfg = SolverConfig {
        epsilon,
        probes,
        ..Default::default()
    };
    let map = py
        .detach(|| build_semiconjugacy(&f.inner, &g.inner, &chart, grid, half_width, &cfg))
        .map_err(err)?;
    to_py(py, &map)
}

/// Run an experiment from its JSON config; returns the report.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::from_json(config).map_err(err)?;
    let out = py.detach(|| run(&cfg, Some(config))).map_err(err)?;
    to_py(py, &out.report)
}

#[pymodule]
fn pyquasishadow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCatCircle>()?;
    m.add_function(wrap_pyfunction!(noisy_orbit, m)?)?;
    m.add_function(wrap_pyfunction!(shadow, m)?)?;
    m.add_function(wrap_pyfunction!(near_return, m)?)?;
    m.add_function(wrap_pyfunction!(close, m)?)?;
    m.add_function(wrap_pyfunction!(semiconjugacy, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
