//! Characteristic, proximity and counting functions of holomorphic curves,
//! evaluated by deterministic quadrature and exact zero sets.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divisor::{CurveWeil, DivisorSum, HomogeneousPoly, WeilNorm, WeilSpec};
use crate::error::{NevError, Result};
use crate::exact::GaussRat;
use crate::holo::{HoloExpr, MeromorphicFn, ProjectiveCurve, Scaled};
use crate::quad::{circle_mean, green_disc_integral, pairwise_sum, QuadEstimate, QuadSettings};
use crate::surface::{ProfileTag, SurfaceModel};
use crate::zeros::{zeros_in_disc, Zero};

const GOLDEN: f64 = 0.618_033_988_749_894_9;
// beyond this |log|ζ|| the value ζ is not a usable f64
const JENSEN_SWITCH: f64 = 600.0;

/// Increasing geodesic radii with the quadrature settings used at each.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RGrid {
    radii: Vec<f64>,
    pub quad: QuadSettings,
}

impl RGrid {
    pub fn new(radii: Vec<f64>, quad: QuadSettings) -> Result<Self> {
        quad.validate()?;
        if radii.is_empty() {
            return Err(NevError::Config("radius grid is empty".into()));
        }
        if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(NevError::Range("grid radii must be positive and finite".into()));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(NevError::Config("grid radii must be strictly increasing".into()));
        }
        Ok(Self { radii, quad })
    }

    pub fn linear(a: f64, b: f64, count: usize, quad: QuadSettings) -> Result<Self> {
        Self::new(spaced(a, b, count, |x| x, |x| x)?, quad)
    }

    pub fn log_spaced(a: f64, b: f64, count: usize, quad: QuadSettings) -> Result<Self> {
        if !(a > 0.0) {
            return Err(NevError::Range("log-spaced grids need a positive start".into()));
        }
        Self::new(spaced(a, b, count, f64::ln, f64::exp)?, quad)
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn r_max(&self) -> f64 {
        *self.radii.last().expect("grid is never empty")
    }

    /// Fails with the first radius that the surface cannot reach.
    pub fn check_reachable(&self, surface: &SurfaceModel) -> Result<()> {
        for &r in &self.radii {
            surface.euclidean_radius(r)?;
        }
        Ok(())
    }
}

fn spaced(a: f64, b: f64, count: usize, fwd: fn(f64) -> f64, inv: fn(f64) -> f64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(NevError::Config("grid needs at least one radius".into()));
    }
    if count == 1 {
        return Ok(vec![a]);
    }
    let (la, lb) = (fwd(a), fwd(b));
    let mut out: Vec<f64> = (0..count).map(|i| inv(la + (lb - la) * i as f64 / (count - 1) as f64)).collect();
    out[0] = a;
    out[count - 1] = b;
    Ok(out)
}

/// `T_{f,O(d)}(r)`: `d` times the Green-weighted Fubini–Study area of the
/// disc of Euclidean radius `ρ_e(r)`.
pub fn characteristic_t(
    curve: &ProjectiveCurve,
    degree: u32,
    surface: &SurfaceModel,
    r: f64,
    quad: &QuadSettings,
) -> Result<QuadEstimate> {
    let rho = surface.euclidean_radius(r)?;
    if curve.is_constant() {
        return Ok(QuadEstimate { value: 0.0, residual: 0.0, nodes: 0 });
    }
    let est = green_disc_integral(rho, |z| curve.fs_density(z).unwrap_or(f64::NAN), quad).map_err(|e| match e {
        NevError::Numerical(msg) => NevError::Numerical(format!("characteristic at r = {r}: {msg}")),
        other => other,
    })?;
    let d = degree as f64;
    Ok(QuadEstimate { value: d * est.value, residual: d * est.residual, nodes: est.nodes })
}

/// `m_f(r, D)`: mean of `λ_D∘f` over the circle `|z| = ρ_e(r)`.
///
/// Plain trapezoid doubling is tried first with a few node offsets. If that
/// fails, zeros of `Q_j∘f` near the circle are located and their logarithms
/// are subtracted and restored in closed form.
pub fn proximity_m(weil: &CurveWeil, surface: &SurfaceModel, r: f64, quad: &QuadSettings) -> Result<QuadEstimate> {
    let rho = surface.euclidean_radius(r)?;
    singular_circle_mean(
        |z| weil.eval(z).unwrap_or(f64::NAN),
        || boundary_zeros(weil.compositions(), rho),
        rho,
        quad,
    )
    .map_err(|e| match e {
        NevError::Numerical(msg) => NevError::Numerical(format!("proximity quadrature at r = {r}: {msg}")),
        other => other,
    })
}

/// Mean of `eval` over `|z| = rho` for integrands with logarithmic poles.
///
/// `singular` lists `(c, zero)` pairs such that `eval(z) + Σ c·mult·log|z − zero|`
/// is bounded near the circle; it is only called when plain doubling fails.
pub(crate) fn singular_circle_mean<F, S>(eval: F, singular: S, rho: f64, quad: &QuadSettings) -> Result<QuadEstimate>
where
    F: Fn(Complex64) -> f64,
    S: FnOnce() -> Result<Vec<(f64, Zero)>>,
{
    let n_min = quad.boundary_nodes_min;
    let plain_cap = quad.boundary_nodes_max.min(1 << 14).max(2 * n_min);
    let f = |th: f64| eval(Complex64::from_polar(rho, th));
    for attempt in 1..=3 {
        let offset = (attempt as f64 * GOLDEN).fract() * 2.0 * PI / n_min as f64;
        if let Ok(est) = circle_mean(f, n_min, plain_cap, quad.boundary_tol, offset, false) {
            return Ok(est);
        }
    }

    let near = singular()?;
    let restore: f64 = near.iter().map(|(c, z)| c * z.multiplicity as f64 * z.z.norm().max(rho).ln()).sum();
    let g = |th: f64| {
        let z = Complex64::from_polar(rho, th);
        let mut v = eval(z);
        for (c, zk) in &near {
            v += c * zk.multiplicity as f64 * (z - zk.z).norm().ln();
        }
        v
    };
    let mut last = None;
    for attempt in 1..=3 {
        let offset = (attempt as f64 * GOLDEN).fract() * 2.0 * PI / n_min as f64;
        match circle_mean(g, n_min, quad.boundary_nodes_max, quad.boundary_tol, offset, false) {
            Ok(est) => return Ok(QuadEstimate { value: est.value - restore, ..est }),
            Err(e) => last = Some(e),
        }
    }
    let points: Vec<String> = near.iter().map(|(_, z)| format!("{}", z.z)).collect();
    Err(NevError::Numerical(format!(
        "did not converge ({}); support points near the circle: [{}]",
        last.map(|e| e.to_string()).unwrap_or_default(),
        points.join(", ")
    )))
}

/// Zeros of each composed section in a thin annulus around `|z| = rho`,
/// with the section weight attached.
pub(crate) fn boundary_zeros<'a>(
    sections: impl IntoIterator<Item = (&'a HoloExpr, f64)>,
    rho: f64,
) -> Result<Vec<(f64, Zero)>> {
    let mut out = Vec::new();
    for (comp, c) in sections {
        let mut found = None;
        let mut err = None;
        for widen in [1.05, 1.0517, 1.0631] {
            match zeros_in_disc(comp, rho * widen) {
                Ok(z) => {
                    found = Some(z);
                    break;
                }
                Err(e) => err = Some(e),
            }
        }
        let zs = match found {
            Some(z) => z,
            None => return Err(err.expect("at least one attempt")),
        };
        out.extend(zs.into_iter().filter(|z| z.z.norm() > rho / 1.05).map(|z| (c, z)));
    }
    Ok(out)
}

/// `Σ mult · log(rho/|z|)`.
fn green_sum(zeros: &[Zero], rho: f64) -> f64 {
    zeros.iter().map(|z| z.multiplicity as f64 * (rho / z.z.norm()).ln()).sum()
}

/// Zeros in `|z| < rho`. A zero sitting on the circle defeats the winding
/// certificate; the disc is then widened slightly, the boundary zeros carry
/// Green weight 0 and the result is flagged.
fn disc_zeros(f: &HoloExpr, rho: f64) -> Result<(Vec<Zero>, bool)> {
    match zeros_in_disc(f, rho) {
        Ok(z) => Ok((z, false)),
        Err(first @ (NevError::Counting(_) | NevError::Numerical(_))) => {
            let wider = zeros_in_disc(f, rho * (1.0 + 1e-7)).map_err(|_| first)?;
            let flag = wider.iter().any(|z| z.z.norm() >= rho);
            Ok((wider.into_iter().filter(|z| z.z.norm() < rho).collect(), flag))
        }
        Err(e) => Err(e),
    }
}

fn vanishes_at_origin(f: &HoloExpr) -> bool {
    let z0 = Complex64::new(0.0, 0.0);
    let v = f.eval_scaled(z0);
    v.is_zero() || v.log < f.max_term_log(z0) + (1e-13f64).ln()
}

/// Counting function together with the zeros behind it.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CountingResult {
    pub value: f64,
    /// `(component index, zero)` pairs.
    pub zeros: Vec<(usize, Zero)>,
    /// A preimage lies on the boundary circle and was given weight 0.
    pub boundary_flag: bool,
}

/// `N_f(r, D) = Σ_j c_j Σ_{Q_j∘f(z_k)=0, |z_k|<ρ_e} log(ρ_e/|z_k|)`.
///
/// Configurations with `f(0)` on the support of D are rejected.
pub fn counting_n(curve: &ProjectiveCurve, divisor: &DivisorSum, surface: &SurfaceModel, r: f64) -> Result<CountingResult> {
    let rho = surface.euclidean_radius(r)?;
    let mut value = 0.0;
    let mut zeros = Vec::new();
    let mut boundary_flag = false;
    for (j, (q, c)) in divisor.components().iter().enumerate() {
        let comp = q.compose(curve.components())?;
        if comp.is_zero() {
            return Err(NevError::Config(format!("the curve lies inside the support of {q}")));
        }
        if vanishes_at_origin(&comp) {
            return Err(NevError::Precondition(format!(
                "f(0) lies on the support of {q}; the counting function needs f(o) off the divisor"
            )));
        }
        let (zs, flag) = disc_zeros(&comp, rho)?;
        boundary_flag |= flag;
        value += *c as f64 * green_sum(&zs, rho);
        zeros.extend(zs.into_iter().map(|z| (j, z)));
    }
    Ok(CountingResult { value, zeros, boundary_flag })
}

/// One grid row of a first-main-theorem computation.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NevRow {
    pub r: f64,
    pub rho: f64,
    /// Fubini–Study characteristic `T_{f,O(1)}`.
    pub t_fs: f64,
    /// `deg D · t_fs`.
    pub t: f64,
    pub m: f64,
    pub n: f64,
    pub residual: f64,
    /// `m / T`, absent when `T = 0`.
    pub defect_ratio: Option<f64>,
    pub boundary_flag: bool,
}

/// `T`, `m`, `N` and `T − m − N` on every grid radius, computed in parallel.
pub fn nev_rows(curve: &ProjectiveCurve, spec: &WeilSpec, surface: &SurfaceModel, grid: &RGrid) -> Result<Vec<NevRow>> {
    grid.check_reachable(surface)?;
    let weil = CurveWeil::new(spec, curve)?;
    let deg = spec.divisor.degree() as f64;
    grid.radii
        .par_iter()
        .map(|&r| {
            let rho = surface.euclidean_radius(r)?;
            let t_fs = characteristic_t(curve, 1, surface, r, &grid.quad)?.value;
            let m = proximity_m(&weil, surface, r, &grid.quad)?.value;
            let cn = counting_n(curve, &spec.divisor, surface, r)?;
            let t = deg * t_fs;
            Ok(NevRow {
                r,
                rho,
                t_fs,
                t,
                m,
                n: cn.value,
                residual: t - m - cn.value,
                defect_ratio: (t > 0.0).then(|| m / t),
                boundary_flag: cn.boundary_flag,
            })
        })
        .collect()
}

/// `T_{f,D}(r) − m_f(r,D) − N_f(r,D)` on the grid.
pub fn fmt_residual(curve: &ProjectiveCurve, spec: &WeilSpec, surface: &SurfaceModel, grid: &RGrid) -> Result<Vec<f64>> {
    Ok(nev_rows(curve, spec, surface, grid)?.into_iter().map(|row| row.residual).collect())
}

/// `max − min`.
pub fn oscillation(values: &[f64]) -> f64 {
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    hi - lo
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DefectReport {
    /// `(r, m/T_{f,L})` on the whole grid.
    pub trace: Vec<(f64, f64)>,
    /// Minimum of `m/T_{f,L}` over the top decade of radii.
    pub defect: f64,
    /// `1 − max N/T_{f,L}` over the same radii.
    pub alt_defect: f64,
    /// `T_{f,L}(r_max) < 10`: the ratio has not stabilised.
    pub inconclusive: bool,
}

/// Defect estimate from precomputed rows, with `L = O(degree)`.
pub fn defect_from_rows(rows: &[NevRow], degree: u32) -> Result<DefectReport> {
    let last = rows.last().ok_or_else(|| NevError::Config("no grid rows".into()))?;
    let d = degree as f64;
    let r_lo = last.r / 10.0;
    let mut trace = Vec::with_capacity(rows.len());
    let mut defect = f64::INFINITY;
    let mut max_n = f64::NEG_INFINITY;
    for row in rows {
        let t = d * row.t_fs;
        if !(t > 0.0) {
            continue;
        }
        trace.push((row.r, row.m / t));
        if row.r >= r_lo {
            defect = defect.min(row.m / t);
            max_n = max_n.max(row.n / t);
        }
    }
    if trace.is_empty() {
        return Err(NevError::Precondition("the characteristic vanishes on the whole grid".into()));
    }
    Ok(DefectReport { trace, defect, alt_defect: 1.0 - max_n, inconclusive: d * last.t_fs < 10.0 })
}

/// `δ_f(D)` estimated as `liminf m_f(r,D)/T_{f,L}(r)` over the grid.
pub fn defect(curve: &ProjectiveCurve, spec: &WeilSpec, degree: u32, surface: &SurfaceModel, grid: &RGrid) -> Result<DefectReport> {
    defect_from_rows(&nev_rows(curve, spec, surface, grid)?, degree)
}

/// Grid report for one curve, divisor and surface.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct NevReport {
    pub curve: String,
    pub divisor: String,
    pub norm: WeilNorm,
    pub surface: ProfileTag,
    pub quad: QuadSettings,
    pub rows: Vec<NevRow>,
    pub residual_oscillation: f64,
    pub defect: Option<DefectReport>,
}

pub fn nev_report(curve: &ProjectiveCurve, spec: &WeilSpec, surface: &SurfaceModel, grid: &RGrid) -> Result<NevReport> {
    let rows = nev_rows(curve, spec, surface, grid)?;
    let residuals: Vec<f64> = rows.iter().map(|r| r.residual).collect();
    let defect = defect_from_rows(&rows, spec.divisor.degree()).ok();
    Ok(NevReport {
        curve: curve.to_string(),
        divisor: spec.divisor.to_string(),
        norm: spec.norm,
        surface: surface.profile.tag(),
        quad: grid.quad.clone(),
        residual_oscillation: oscillation(&residuals),
        rows,
        defect,
    })
}

/// Characteristics of a meromorphic function.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct MeromT {
    /// `m(r,ψ) + N(r,ψ)`.
    pub t_classic: f64,
    /// Fubini–Study characteristic of `[den : num]`.
    pub t_hat: f64,
    /// `m(r,ψ)`, the mean of `log⁺|ψ|`.
    pub m: f64,
    /// `N(r,ψ)`, counting poles.
    pub n: f64,
    /// Nonconstant, as the logarithmic derivative lemma requires.
    pub admissible: bool,
}

fn pole_divisor() -> DivisorSum {
    DivisorSum::single(HomogeneousPoly::coordinate(1, 0))
}

/// `T(r,ψ) = m(r,ψ) + N(r,ψ)` without the area integral.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct ClassicT {
    pub t: f64,
    pub m: f64,
    pub n: f64,
}

/// `log⁺|ψ|` is the max-norm Weil function of the point `[1:0]` pulled back
/// by `[den : num]`.
pub fn classic_t(psi: &MeromorphicFn, surface: &SurfaceModel, r: f64, quad: &QuadSettings) -> Result<ClassicT> {
    let curve = psi.as_curve()?;
    let spec = WeilSpec::new(pole_divisor(), WeilNorm::Max);
    let weil = CurveWeil::new(&spec, &curve)?;
    let m = proximity_m(&weil, surface, r, quad)?.value;
    let n = counting_n(&curve, &spec.divisor, surface, r)?.value;
    Ok(ClassicT { t: m + n, m, n })
}

/// `T(r,ψ)` and `T̂_ψ(r)`.
pub fn merom_t(psi: &MeromorphicFn, surface: &SurfaceModel, r: f64, quad: &QuadSettings) -> Result<MeromT> {
    let c = classic_t(psi, surface, r, quad)?;
    let t_hat = characteristic_t(&psi.as_curve()?, 1, surface, r, quad)?.value;
    Ok(MeromT { t_classic: c.t, t_hat, m: c.m, n: c.n, admissible: !psi.is_constant() })
}

/// Monte Carlo estimate of the average of `N_ψ(r,ζ)` over `ζ ~ Φ`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct CroftonEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_points: usize,
    /// Samples with `|log|ζ||` too large for root finding, evaluated by
    /// Jensen's formula instead.
    pub jensen_samples: usize,
}

/// Averages `N_ψ(r,ζ)` over `n_points` values `ζ` drawn from the
/// probability measure `dA/(2π²|ζ|²(1+log²|ζ|))`: `arg ζ` is uniform and
/// `log|ζ|` is standard Cauchy. Sample `i` uses stream `i` of a ChaCha8
/// generator seeded with `seed`.
pub fn crofton_t(
    psi: &MeromorphicFn,
    surface: &SurfaceModel,
    r: f64,
    n_points: usize,
    seed: u64,
    quad: &QuadSettings,
) -> Result<CroftonEstimate> {
    if n_points < 100 {
        return Err(NevError::Config(format!("crofton averaging needs at least 100 points, got {n_points}")));
    }
    let rho = surface.euclidean_radius(r)?;
    if psi.is_constant() {
        return Ok(CroftonEstimate { mean: 0.0, stderr: 0.0, n_points, jensen_samples: 0 });
    }
    let cauchy = Cauchy::new(0.0, 1.0).map_err(|e| NevError::Numerical(format!("sampler: {e}")))?;
    let samples: Vec<(f64, bool)> = (0..n_points)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let t: f64 = cauchy.sample(&mut rng);
            let theta = rng.random::<f64>() * 2.0 * PI;
            value_counting(psi, rho, t, theta, quad)
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let n = n_points as f64;
    let mean = pairwise_sum(&values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    Ok(CroftonEstimate {
        mean,
        stderr: (var / n).sqrt(),
        n_points,
        jensen_samples: samples.iter().filter(|s| s.1).count(),
    })
}

/// `N_ψ(r, ζ)` for `ζ = e^{t + iθ}`; the flag marks the Jensen path.
fn value_counting(psi: &MeromorphicFn, rho: f64, t: f64, theta: f64, quad: &QuadSettings) -> Result<(f64, bool)> {
    if t.abs() <= JENSEN_SWITCH {
        let zeta = GaussRat::from_complex(Complex64::from_polar(t.exp(), theta))
            .ok_or_else(|| NevError::Numerical(format!("sampled value e^({t}+{theta}i) is not finite")))?;
        let g = psi.shifted_numerator(&zeta);
        if g.is_zero() {
            return Err(NevError::Numerical("sampled value is attained identically".into()));
        }
        let (zs, _) = disc_zeros(&g, rho)?;
        if zs.iter().any(|z| z.z.norm() < 1e-300) {
            return Err(NevError::Numerical("sampled value equals ψ(0)".into()));
        }
        return Ok((green_sum(&zs, rho), false));
    }
    // Jensen: N = mean of log|num − ζ den| on the circle − log|num(0) − ζ den(0)|
    let zeta = Scaled { phase: Complex64::from_polar(1.0, theta), log: t };
    let g = |z: Complex64| {
        let a = psi.num().eval_scaled(z);
        let b = psi.den().eval_scaled(z).mul(&zeta);
        Scaled::sum(&[a, Scaled { phase: -b.phase, log: b.log }]).log
    };
    let g0 = g(Complex64::new(0.0, 0.0));
    if !g0.is_finite() {
        return Err(NevError::Numerical("sampled value equals ψ(0)".into()));
    }
    let est = circle_mean(
        |th| g(Complex64::from_polar(rho, th)),
        quad.boundary_nodes_min,
        quad.boundary_nodes_max,
        quad.boundary_tol,
        GOLDEN * 2.0 * PI / quad.boundary_nodes_min as f64,
        false,
    )?;
    Ok(((est.value - g0).max(0.0), true))
}
