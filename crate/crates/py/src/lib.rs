//! Python bindings for the phasekey certifier.
//!
//! Exposes the calibration closed forms and a `Protocol` class that runs the
//! certified key-rate pipeline in-process:
//!
//!     import phasekey
//!     sigma, q = phasekey.calibrate(0.0019)
//!     proto = phasekey.Protocol(q=q, mu_s_grid=[0.5])
//!     point = proto.key_rate(20.0)
//!     print(point.rate)

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use phasekey_core::calibration;
use phasekey_core::channel::{observation_set, ChannelParams, Intensities};
use phasekey_core::error::Error;
use phasekey_core::rate;
use phasekey_core::ProtocolConfig;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Usage(_) | Error::Config(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Convert a fringe visibility into (sigma, q) under the wrapped-Gaussian
/// phase-diffusion model.
#[pyfunction]
fn calibrate(visibility: f64) -> PyResult<(f64, f64)> {
    let sigma = calibration::sigma_from_visibility(visibility).map_err(to_py)?;
    let minimum = calibration::q_from_visibility(visibility).map_err(to_py)?;
    Ok((sigma, minimum.q))
}

/// q from the phase-difference standard deviation sigma (radians).
#[pyfunction]
fn q_from_sigma(sigma: f64) -> PyResult<f64> {
    Ok(calibration::q_from_sigma(sigma).map_err(to_py)?.q)
}

/// Wrapped Gaussian density on [0, 2pi).
#[pyfunction]
fn wrapped_gaussian_pdf(x: f64, center: f64, sigma: f64) -> PyResult<f64> {
    calibration::wrapped_gaussian_pdf(x, center, sigma).map_err(to_py)
}

/// Lower expectation-transfer bound G-(y, z).
#[pyfunction]
fn g_minus(y: f64, z: f64) -> PyResult<f64> {
    phasekey_core::fidelity::expectation_lower(y, z).map_err(to_py)
}

/// Upper expectation-transfer bound G+(y, z).
#[pyfunction]
fn g_plus(y: f64, z: f64) -> PyResult<f64> {
    phasekey_core::fidelity::expectation_upper(y, z).map_err(to_py)
}

/// Binary entropy in bits.
#[pyfunction]
fn binary_entropy(x: f64) -> PyResult<f64> {
    rate::binary_entropy(x).map_err(to_py)
}

/// One certified sweep entry.
#[pyclass(frozen)]
struct KeyRatePoint {
    #[pyo3(get)]
    loss_db: f64,
    #[pyo3(get)]
    q: f64,
    #[pyo3(get)]
    mu_s_opt: f64,
    #[pyo3(get)]
    yield_lower: f64,
    #[pyo3(get)]
    e_ph_upper: f64,
    #[pyo3(get)]
    gain_z: f64,
    #[pyo3(get)]
    error_z: f64,
    #[pyo3(get)]
    rate: f64,
    #[pyo3(get)]
    reference_rate: f64,
}

#[pymethods]
impl KeyRatePoint {
    fn __repr__(&self) -> String {
        format!(
            "KeyRatePoint(loss_db={}, q={}, mu_s_opt={}, rate={:.6e}, reference_rate={:.6e})",
            self.loss_db, self.q, self.mu_s_opt, self.rate, self.reference_rate
        )
    }
}

impl From<rate::KeyRatePoint> for KeyRatePoint {
    fn from(p: rate::KeyRatePoint) -> Self {
        Self {
            loss_db: p.loss_db,
            q: p.q,
            mu_s_opt: p.mu_s_opt,
            yield_lower: p.yield_lower,
            e_ph_upper: p.e_ph_upper,
            gain_z: p.gain_z,
            error_z: p.error_z,
            rate: p.rate,
            reference_rate: p.reference_rate,
        }
    }
}

/// Protocol configuration plus the certification pipeline.
#[pyclass]
struct Protocol {
    config: ProtocolConfig,
}

#[pymethods]
impl Protocol {
    /// Build a protocol. `q` and `visibility` are mutually exclusive; all
    /// other arguments default to the reference simulation parameters.
    #[new]
    #[pyo3(signature = (q=None, visibility=None, truncation=None, p_d=None, f=None,
                        mu_w_ratio=None, mu_s_grid=None, solver_tol=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        q: Option<f64>,
        visibility: Option<f64>,
        truncation: Option<usize>,
        p_d: Option<f64>,
        f: Option<f64>,
        mu_w_ratio: Option<f64>,
        mu_s_grid: Option<Vec<f64>>,
        solver_tol: Option<f64>,
    ) -> PyResult<Self> {
        if q.is_some() && visibility.is_some() {
            return Err(PyValueError::new_err("give either q or visibility, not both"));
        }
        let mut config = ProtocolConfig::default();
        if let Some(q) = q {
            config.q = q;
        }
        if let Some(v) = visibility {
            config.apply_visibility(v).map_err(to_py)?;
        }
        if let Some(m) = truncation {
            config.truncation = m;
        }
        if let Some(p) = p_d {
            config.p_d = p;
        }
        if let Some(f) = f {
            config.error_correction = f;
        }
        if let Some(r) = mu_w_ratio {
            config.mu_w_ratio = r;
        }
        if let Some(grid) = mu_s_grid {
            config.mu_s_grid = grid;
        }
        if let Some(tol) = solver_tol {
            config.solver_tol = tol;
        }
        config.validate().map_err(to_py)?;
        Ok(Self { config })
    }

    /// The uniformity parameter in use.
    #[getter]
    fn q(&self) -> f64 {
        self.config.q
    }

    /// Certified key rate at one loss point, optimised over the signal
    /// intensity grid.
    fn key_rate(&self, py: Python<'_>, loss_db: f64) -> PyResult<KeyRatePoint> {
        py.detach(|| rate::optimize_mu_s(&self.config, loss_db))
            .map(Into::into)
            .map_err(to_py)
    }

    /// One certified point per loss value.
    fn sweep(&self, py: Python<'_>, losses: Vec<f64>) -> PyResult<Vec<KeyRatePoint>> {
        py.detach(|| {
            losses
                .iter()
                .map(|&loss| rate::optimize_mu_s(&self.config, loss))
                .collect::<Result<Vec<_>, _>>()
        })
        .map(|points| points.into_iter().map(Into::into).collect())
        .map_err(to_py)
    }

    /// Analytic channel observations at one (mu_s, loss) point, as the
    /// versioned CSV the CLI accepts via --observations.
    fn observations_csv(&self, mu_s: f64, loss_db: f64) -> PyResult<String> {
        let params = ChannelParams::new(loss_db, self.config.p_d).map_err(to_py)?;
        let intensities =
            Intensities::new(mu_s, mu_s * self.config.mu_w_ratio, 0.0).map_err(to_py)?;
        Ok(observation_set(&intensities, &params).to_csv())
    }

    fn __repr__(&self) -> String {
        format!(
            "Protocol(q={}, truncation={}, p_d={:.1e}, f={})",
            self.config.q, self.config.truncation, self.config.p_d, self.config.error_correction
        )
    }
}

#[pymodule]
fn phasekey(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(q_from_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(wrapped_gaussian_pdf, m)?)?;
    m.add_function(wrap_pyfunction!(g_minus, m)?)?;
    m.add_function(wrap_pyfunction!(g_plus, m)?)?;
    m.add_function(wrap_pyfunction!(binary_entropy, m)?)?;
    m.add_class::<KeyRatePoint>()?;
    m.add_class::<Protocol>()?;
    Ok(())
}
