//! Python bindings. Curves, functions and forms use the same text syntax as
//! the TOML configs; engine errors surface as `ValueError`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use engine::divisor::{DivisorSum, WeilNorm, WeilSpec};
use engine::expr::{format_rational, parse_curve, parse_form, parse_holo, parse_meromorphic};
use engine::holo::VectorField;
use engine::nevanlinna::{characteristic_t, classic_t as classic, nev_rows, RGrid};
use engine::nevconst::{bundled_candidates, nev_upper_bound};
use engine::quad::QuadSettings;
use engine::stochastic::{exit_time_estimate, PathPolicy};
use engine::surface::SurfaceModel;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn surface(kind: &str, a: f64) -> PyResult<SurfaceModel> {
    match kind {
        "euclidean" => Ok(SurfaceModel::euclidean()),
        "poincare" => SurfaceModel::poincare(a).map_err(value_error),
        other => Err(PyValueError::new_err(format!("unknown surface {other:?}; use \"euclidean\" or \"poincare\""))),
    }
}

fn weil_norm(name: &str) -> PyResult<WeilNorm> {
    match name {
        "euclidean" => Ok(WeilNorm::Euclidean),
        "max" => Ok(WeilNorm::Max),
        other => Err(PyValueError::new_err(format!("unknown norm {other:?}; use \"euclidean\" or \"max\""))),
    }
}

fn divisor(forms: &[String], n: usize) -> PyResult<DivisorSum> {
    let comps = forms
        .iter()
        .map(|f| parse_form(f, n).map(|p| (p, 1)))
        .collect::<engine::error::Result<Vec<_>>>()
        .map_err(value_error)?;
    DivisorSum::new(comps).map_err(value_error)
}

/// Euclidean radius of the geodesic disc of radius `r`.
#[pyfunction]
#[pyo3(signature = (r, surface = "euclidean", a = 1.0))]
fn euclidean_radius(r: f64, surface: &str, a: f64) -> PyResult<f64> {
    self::surface(surface, a)?.euclidean_radius(r).map_err(value_error)
}

/// Fubini–Study characteristic `T_{f,O(degree)}(r)`.
#[pyfunction]
#[pyo3(signature = (curve, r, degree = 1, surface = "euclidean", a = 1.0))]
fn characteristic(curve: &str, r: f64, degree: u32, surface: &str, a: f64) -> PyResult<f64> {
    let f = parse_curve(curve).map_err(value_error)?;
    let s = self::surface(surface, a)?;
    Ok(characteristic_t(&f, degree, &s, r, &QuadSettings::default()).map_err(value_error)?.value)
}

/// One dict per radius with keys `r, rho, T, m, N, residual`.
#[pyfunction]
#[pyo3(signature = (curve, divisor, radii, norm = "euclidean", surface = "euclidean", a = 1.0))]
fn fmt_rows(
    curve: &str,
    divisor: Vec<String>,
    radii: Vec<f64>,
    norm: &str,
    surface: &str,
    a: f64,
) -> PyResult<Vec<BTreeMap<&'static str, f64>>> {
    let f = parse_curve(curve).map_err(value_error)?;
    let spec = WeilSpec::new(self::divisor(&divisor, f.n())?, weil_norm(norm)?);
    let s = self::surface(surface, a)?;
    let grid = RGrid::new(radii, QuadSettings::default()).map_err(value_error)?;
    let rows = nev_rows(&f, &spec, &s, &grid).map_err(value_error)?;
    Ok(rows
        .into_iter()
        .map(|row| {
            BTreeMap::from([
                ("r", row.r),
                ("rho", row.rho),
                ("T", row.t),
                ("m", row.m),
                ("N", row.n),
                ("residual", row.residual),
            ])
        })
        .collect())
}

/// Classical `(T, m, N)` of a meromorphic function.
#[pyfunction]
#[pyo3(signature = (psi, r, surface = "euclidean", a = 1.0))]
fn classic_t(psi: &str, r: f64, surface: &str, a: f64) -> PyResult<(f64, f64, f64)> {
    let f = parse_meromorphic(psi).map_err(value_error)?;
    let c = classic(&f, &self::surface(surface, a)?, r, &QuadSettings::default()).map_err(value_error)?;
    Ok((c.t, c.m, c.n))
}

/// Monte Carlo `E[τ_r]` as `(mean, stderr)`, step `0.005·ρ_e(r)²`.
#[pyfunction]
#[pyo3(signature = (r, n_paths = 20_000, seed = 0, surface = "euclidean", a = 1.0))]
fn exit_time(py: Python<'_>, r: f64, n_paths: usize, seed: u64, surface: &str, a: f64) -> PyResult<(f64, f64)> {
    let s = self::surface(surface, a)?;
    let rho = s.euclidean_radius(r).map_err(value_error)?;
    let policy = PathPolicy { n_paths, seed, base_step: 0.005 * rho * rho, ..PathPolicy::default() };
    let rep = py.detach(|| exit_time_estimate(&s, r, &policy)).map_err(value_error)?;
    Ok((rep.estimate.mean, rep.estimate.stderr))
}

/// Smallest certified upper bound for `Nev(D)` from the bundled monomial
/// candidates, as an exact rational string, or `None` when none verifies.
#[pyfunction]
#[pyo3(signature = (divisor, n, d_l = 1, k_max = 2))]
fn nev_bound(divisor: Vec<String>, n: usize, d_l: u32, k_max: u32) -> PyResult<Option<String>> {
    let d = self::divisor(&divisor, n)?;
    let candidates = bundled_candidates(&d, d_l, k_max).map_err(value_error)?;
    Ok(nev_upper_bound(&d, &candidates).exact.as_ref().map(format_rational))
}

/// Symbolic Wronskian with respect to `d/dz`.
#[pyfunction]
fn wronskian(components: Vec<String>) -> PyResult<String> {
    let fs = components.iter().map(|c| parse_holo(c)).collect::<engine::error::Result<Vec<_>>>().map_err(value_error)?;
    Ok(engine::holo::wronskian(&fs, &VectorField::standard()).to_string())
}

type RunResult = (String, Vec<(String, bool, String)>);

/// Runs an experiment config. Returns the output directory and
/// `(name, passed, detail)` for every assertion.
#[pyfunction]
#[pyo3(signature = (config, out = None))]
fn run_config(py: Python<'_>, config: PathBuf, out: Option<PathBuf>) -> PyResult<RunResult> {
    let summary = py.detach(|| nevlab_cli::run(&config, out.as_deref())).map_err(value_error)?;
    let assertions = summary.assertions.into_iter().map(|a| (a.name, a.passed, a.detail)).collect();
    Ok((summary.out_dir.display().to_string(), assertions))
}

#[pymodule]
fn nevlab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(euclidean_radius, m)?)?;
    m.add_function(wrap_pyfunction!(characteristic, m)?)?;
    m.add_function(wrap_pyfunction!(fmt_rows, m)?)?;
    m.add_function(wrap_pyfunction!(classic_t, m)?)?;
    m.add_function(wrap_pyfunction!(exit_time, m)?)?;
    m.add_function(wrap_pyfunction!(nev_bound, m)?)?;
    m.add_function(wrap_pyfunction!(wronskian, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    Ok(())
}
