//! Python bindings. Shapes, kernels and anisotropies are small wrapper classes;
//! sweeps and flows return plain dicts and lists.

use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use corerad::curvature::{nonlocal_curvature, CurvatureQuery};
use corerad::flow::{run_flow as core_run_flow, FlowConfig, Scaling};
use corerad::grid::GridSpec;
use corerad::kernels as k;
use corerad::perimeter::{perimeter_sweep as core_sweep, shape_perimeter, HRule, SweepMode, SweepOptions};
use corerad::shapes as sh;

create_exception!(corerad, GuardError, PyValueError);

fn err(e: corerad::Error) -> PyErr {
    match e {
        corerad::Error::Guard(_) => GuardError::new_err(e.to_string()),
        corerad::Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "KernelParams", module = "corerad", skip_from_py_object)]
#[derive(Clone)]
struct PyKernelParams {
    inner: k::KernelParams,
}

#[pymethods]
impl PyKernelParams {
    #[new]
    fn new(d: usize, s: f64, r: f64) -> PyResult<Self> {
        Ok(PyKernelParams { inner: k::KernelParams::new(d, s, r).map_err(err)? })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }

    #[getter]
    fn s(&self) -> f64 {
        self.inner.s
    }

    #[getter]
    fn r(&self) -> f64 {
        self.inner.r
    }

    /// k(t) = min(r, t)^(-d-s)
    fn kernel(&self, t: f64) -> f64 {
        k::eval_kernel(&self.inner, t)
    }

    fn sigma(&self) -> PyResult<f64> {
        k::sigma_scale(&self.inner).map_err(err)
    }

    fn beta(&self) -> PyResult<f64> {
        k::beta_scale(self.inner.d, self.inner.s, self.inner.r).map_err(err)
    }

    #[pyo3(signature = (g = None))]
    fn lambda_total(&self, g: Option<&PyAnisotropy>) -> PyResult<f64> {
        k::lambda_total(&self.inner, &aniso(g)).map_err(err)
    }

    fn field_t(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        k::field_t(&self.inner, &x).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("KernelParams(d={}, s={}, r={})", self.inner.d, self.inner.s, self.inner.r)
    }
}

#[pyclass(name = "Anisotropy", module = "corerad", skip_from_py_object)]
#[derive(Clone)]
struct PyAnisotropy {
    inner: k::Anisotropy,
}

fn aniso(g: Option<&PyAnisotropy>) -> k::Anisotropy {
    g.map(|g| g.inner.clone()).unwrap_or_default()
}

#[pymethods]
impl PyAnisotropy {
    #[staticmethod]
    fn isotropic() -> Self {
        PyAnisotropy { inner: k::Anisotropy::Isotropic }
    }

    /// Values at angles 2πk/n, symmetrized to an even function.
    #[staticmethod]
    fn tabulated(values: Vec<f64>) -> PyResult<Self> {
        Ok(PyAnisotropy { inner: k::Anisotropy::tabulated(values).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (mu, poisson, burgers_angle = 0.0))]
    fn dislocation(mu: f64, poisson: f64, burgers_angle: f64) -> PyResult<Self> {
        let dp = corerad::dislocation::DislocationParams::new(mu, poisson).map_err(err)?.rotated(burgers_angle);
        Ok(PyAnisotropy { inner: k::Anisotropy::Dislocation(dp).validated().map_err(err)? })
    }

    fn eval(&self, xi: Vec<f64>) -> f64 {
        self.inner.eval(&xi)
    }

    #[pyo3(signature = (nu, quad_order = k::DEFAULT_PHI_ORDER))]
    fn phi(&self, nu: Vec<f64>, quad_order: usize) -> PyResult<f64> {
        k::phi_density(&self.inner, &nu, quad_order).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Anisotropy({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

#[pyclass(name = "Shape", module = "corerad", skip_from_py_object)]
#[derive(Clone)]
struct PyShape {
    inner: sh::Shape,
}

#[pymethods]
impl PyShape {
    #[staticmethod]
    fn ball(center: Vec<f64>, radius: f64) -> PyResult<Self> {
        checked(sh::Shape::ball(&center, radius))
    }

    #[staticmethod]
    fn rectangle(min: Vec<f64>, max: Vec<f64>) -> PyResult<Self> {
        checked(sh::Shape::rectangle(&min, &max))
    }

    #[staticmethod]
    fn ellipse(center: Vec<f64>, a: f64, b: f64) -> PyResult<Self> {
        checked(sh::Shape::ellipse(&center, a, b))
    }

    #[staticmethod]
    fn annulus(center: Vec<f64>, r_in: f64, r_out: f64) -> PyResult<Self> {
        checked(sh::Shape::annulus(&center, r_in, r_out))
    }

    /// Same layout as the `shape` block of a runner config.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let s: sh::Shape = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        checked(s)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("shapes serialize")
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn contains(&self, x: Vec<f64>) -> bool {
        self.inner.contains(&x)
    }

    fn area(&self) -> PyResult<f64> {
        sh::exact_area(&self.inner).map_err(err)
    }

    fn perimeter(&self) -> PyResult<f64> {
        sh::exact_perimeter(&self.inner).map_err(err)
    }

    fn aniso_perimeter(&self, g: &PyAnisotropy) -> PyResult<f64> {
        sh::exact_aniso_perimeter(&self.inner, &g.inner).map_err(err)
    }

    fn mean_curvature(&self, x: Vec<f64>) -> PyResult<f64> {
        sh::classical_mean_curvature(&self.inner, &x).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Shape({})", self.to_json())
    }
}

fn checked(s: sh::Shape) -> PyResult<PyShape> {
    s.validate().map_err(err)?;
    Ok(PyShape { inner: s })
}

/// Nonlocal perimeter of the shape rasterized with spacing `h` (r/8 by default).
#[pyfunction]
#[pyo3(signature = (shape, params, g = None, h = None))]
fn perimeter(shape: &PyShape, params: &PyKernelParams, g: Option<&PyAnisotropy>, h: Option<f64>) -> PyResult<f64> {
    let h = h.unwrap_or(params.inner.r / 8.0);
    let cov = SweepOptions::default().coverage;
    Ok(shape_perimeter(&shape.inner, &params.inner, &aniso(g), h, cov).map_err(err)?.value)
}

/// Returns `{"rows": [...], "slope", "intercept", "residual"}`.
#[pyfunction]
#[pyo3(signature = (shape, s, r_list, ratio = 8.0, g = None, telescoping = false))]
fn perimeter_sweep<'py>(
    py: Python<'py>,
    shape: &PyShape,
    s: f64,
    r_list: Vec<f64>,
    ratio: f64,
    g: Option<&PyAnisotropy>,
    telescoping: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let mode = if telescoping { SweepMode::Telescoping } else { SweepMode::Full };
    let opts = SweepOptions { mode, ..SweepOptions::default() };
    let res = py.detach(|| core_sweep(&shape.inner, s, &r_list, HRule::Ratio { ratio }, &aniso(g), opts)).map_err(err)?;
    let rows = res
        .rows
        .iter()
        .map(|row| {
            let d = PyDict::new(py);
            d.set_item("r", row.r)?;
            d.set_item("s", row.s)?;
            d.set_item("h", row.h)?;
            d.set_item("value", row.value)?;
            d.set_item("scaled_value", row.scaled_value)?;
            d.set_item("tail_bound", row.tail_bound)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    let out = PyDict::new(py);
    out.set_item("rows", rows)?;
    out.set_item("slope", res.fit.slope)?;
    out.set_item("intercept", res.fit.intercept)?;
    out.set_item("residual", res.fit.residual)?;
    Ok(out)
}

/// Nonlocal curvature at a boundary point of the shape.
#[pyfunction]
#[pyo3(signature = (shape, x, params, g = None))]
fn curvature(py: Python<'_>, shape: &PyShape, x: Vec<f64>, params: &PyKernelParams, g: Option<&PyAnisotropy>) -> PyResult<f64> {
    let g = aniso(g);
    py.detach(|| nonlocal_curvature(&CurvatureQuery::shape(&shape.inner, &x, params.inner, g)))
        .map(|r| r.value)
        .map_err(err)
}

/// Planar level-set flow; returns snapshot times, radius statistics and contours.
#[pyfunction]
#[pyo3(signature = (shape, lo, hi, h, params, t_end, snapshot_dt, g = None, scaling = "sigma"))]
#[allow(clippy::too_many_arguments)]
fn run_flow<'py>(
    py: Python<'py>,
    shape: &PyShape,
    lo: Vec<f64>,
    hi: Vec<f64>,
    h: f64,
    params: &PyKernelParams,
    t_end: f64,
    snapshot_dt: f64,
    g: Option<&PyAnisotropy>,
    scaling: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = FlowConfig::new(params.inner, t_end, snapshot_dt);
    cfg.g = aniso(g);
    cfg.scaling = match scaling {
        "sigma" => Scaling::Sigma,
        "beta" => Scaling::Beta,
        "none" => Scaling::None,
        other => return Err(PyValueError::new_err(format!("unknown scaling {other:?}"))),
    };
    let grid = GridSpec::covering(&lo, &hi, h, 0).map_err(err)?;
    let traj = py.detach(|| core_run_flow(&shape.inner, &grid, &cfg)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("times", traj.times.clone())?;
    out.set_item("mean_radius", traj.radius_stats.iter().map(|s| s.map(|s| s.mean)).collect::<Vec<_>>())?;
    out.set_item("min_radius", traj.radius_stats.iter().map(|s| s.map(|s| s.min)).collect::<Vec<_>>())?;
    out.set_item("max_radius", traj.radius_stats.iter().map(|s| s.map(|s| s.max)).collect::<Vec<_>>())?;
    let contours: Vec<Vec<Vec<[f64; 2]>>> = traj.contours.iter().map(|c| c.iter().map(|l| l.points.clone()).collect()).collect();
    out.set_item("contours", contours)?;
    out.set_item("extinction_time", traj.extinction_time)?;
    out.set_item("steps", traj.steps)?;
    Ok(out)
}

/// `(name, passed, error, tolerance)` for every kernel identity.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn kernel_selftest(seed: u64) -> PyResult<Vec<(String, bool, f64, f64)>> {
    let rep = corerad::selftest::kernel_selftest(seed).map_err(err)?;
    Ok(rep.checks.into_iter().map(|c| (c.name, c.passed, c.error, c.tolerance)).collect())
}

#[pyfunction]
fn alpha_const(d: usize, s: f64) -> f64 {
    k::alpha_const(d, s)
}

#[pyfunction]
fn beta_scale(d: usize, s: f64, r: f64) -> PyResult<f64> {
    k::beta_scale(d, s, r).map_err(err)
}

#[pyfunction]
fn omega(d: usize) -> f64 {
    k::omega(d)
}

#[pymodule]
#[pyo3(name = "corerad")]
fn corerad_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("GuardError", m.py().get_type::<GuardError>())?;
    m.add_class::<PyKernelParams>()?;
    m.add_class::<PyAnisotropy>()?;
    m.add_class::<PyShape>()?;
    m.add_function(wrap_pyfunction!(perimeter, m)?)?;
    m.add_function(wrap_pyfunction!(perimeter_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(curvature, m)?)?;
    m.add_function(wrap_pyfunction!(run_flow, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_selftest, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_const, m)?)?;
    m.add_function(wrap_pyfunction!(beta_scale, m)?)?;
    m.add_function(wrap_pyfunction!(omega, m)?)?;
    Ok(())
}
