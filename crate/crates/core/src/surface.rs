//! Radially symmetric conformal surfaces of non-positive curvature.
//!
//! A surface is the plane or the unit disc with metric `h(|z|)·|dz|²`.
//! Geodesic discs about the origin are Euclidean discs, the Green function
//! of `½Δ_S` is `(1/π)·log(ρ_e(r)/|z|)` and the harmonic measure from the
//! centre is `dθ/2π`. Curvature uses `K = −(2/h)∂∂̄ log h`, i.e.
//! `K = −Δ_euc(log h) / (2h)`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NevError, Result};

/// Metric density `h(ρ_e)` as a shared closure.
pub type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const CURVATURE_GRID: usize = 2048;
const CURVATURE_SLACK: f64 = 1e-6;

#[derive(Clone)]
pub enum ProfileKind {
    Euclidean,
    /// Constant curvature `−a²`.
    Poincare { a: f64 },
    Custom { density: DensityFn, fd_step: f64 },
}

impl fmt::Debug for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Euclidean => write!(f, "Euclidean"),
            Self::Poincare { a } => write!(f, "Poincare {{ a: {a} }}"),
            Self::Custom { fd_step, .. } => write!(f, "Custom {{ fd_step: {fd_step} }}"),
        }
    }
}

/// Serializable description of a profile, used in reports.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProfileTag {
    Euclidean,
    Poincare { a: f64 },
    Custom { domain_radius: Option<f64> },
}

#[derive(Clone, Debug)]
pub struct MetricProfile {
    kind: ProfileKind,
    /// `None` for the plane.
    domain_radius: Option<f64>,
}

impl MetricProfile {
    pub fn euclidean() -> Self {
        Self { kind: ProfileKind::Euclidean, domain_radius: None }
    }

    pub fn poincare(a: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(NevError::Config(format!("Poincaré parameter a={a} must be positive")));
        }
        Ok(Self { kind: ProfileKind::Poincare { a }, domain_radius: Some(1.0) })
    }

    /// A custom radial density on the plane (`domain_radius = None`) or on a
    /// disc. Fails unless `h > 0` and the curvature is non-positive on a dense
    /// grid.
    pub fn custom(density: DensityFn, domain_radius: Option<f64>) -> Result<Self> {
        let fd_step = domain_radius.map_or(1e-4, |r| 1e-4 * r);
        let p = Self { kind: ProfileKind::Custom { density, fd_step }, domain_radius };
        p.check_curvature()?;
        Ok(p)
    }

    /// Custom profile from `(ρ_e, h)` samples with monotone cubic
    /// (Fritsch–Carlson) interpolation. Beyond the last sample the surface
    /// is not defined, so the table end becomes the domain radius unless a
    /// larger one is never needed.
    pub fn from_table(table: &[(f64, f64)], domain_radius: Option<f64>) -> Result<Self> {
        let interp = MonotoneCubic::new(table)?;
        let last = interp.xs[interp.xs.len() - 1];
        let dom = match domain_radius {
            Some(d) if d < last => Some(d),
            _ => Some(last),
        };
        let spacing = last / (interp.xs.len() - 1) as f64;
        let density: DensityFn = Arc::new(move |r| interp.eval(r));
        let p = Self {
            kind: ProfileKind::Custom { density, fd_step: spacing.max(1e-5) },
            domain_radius: dom,
        };
        p.check_curvature()?;
        Ok(p)
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn tag(&self) -> ProfileTag {
        match &self.kind {
            ProfileKind::Euclidean => ProfileTag::Euclidean,
            ProfileKind::Poincare { a } => ProfileTag::Poincare { a: *a },
            ProfileKind::Custom { .. } => ProfileTag::Custom { domain_radius: self.domain_radius },
        }
    }

    /// `None` means the plane.
    pub fn domain_radius(&self) -> Option<f64> {
        self.domain_radius
    }

    fn in_domain(&self, rho: f64) -> bool {
        rho >= 0.0 && self.domain_radius.is_none_or(|d| rho < d)
    }

    /// Metric density `h(ρ_e)`.
    pub fn density(&self, rho: f64) -> Result<f64> {
        if !self.in_domain(rho) {
            return Err(NevError::Range(format!("ρ_e = {rho} outside the domain")));
        }
        let h = match &self.kind {
            ProfileKind::Euclidean => 1.0,
            ProfileKind::Poincare { a } => 4.0 / (a * a * (1.0 - rho * rho).powi(2)),
            ProfileKind::Custom { density, .. } => density(rho),
        };
        if !(h > 0.0) || !h.is_finite() {
            return Err(NevError::Evaluation(format!("density h({rho}) = {h} is not positive")));
        }
        Ok(h)
    }

    /// Gauss curvature at Euclidean radius `rho`.
    pub fn curvature(&self, rho: f64) -> Result<f64> {
        if !self.in_domain(rho) {
            return Err(NevError::Range(format!("ρ_e = {rho} outside the domain")));
        }
        match &self.kind {
            ProfileKind::Euclidean => Ok(0.0),
            ProfileKind::Poincare { a } => Ok(-a * a),
            ProfileKind::Custom { fd_step, .. } => {
                let h = self.density(rho)?;
                let lap = self.radial_laplacian_log_h(rho, *fd_step)?;
                let k = -lap / (2.0 * h);
                if !k.is_finite() {
                    return Err(NevError::Evaluation(format!("non-finite curvature at ρ_e = {rho}")));
                }
                Ok(k)
            }
        }
    }

    /// Δ_euc log h for a radial h: u'' + u'/ρ, with u''(0) doubled at the
    /// origin where u'/ρ → u''.
    fn radial_laplacian_log_h(&self, rho: f64, step: f64) -> Result<f64> {
        let u = |x: f64| -> Result<f64> { Ok(self.density(x)?.ln()) };
        let mut hstep = step;
        if let Some(d) = self.domain_radius {
            hstep = hstep.min(0.5 * (d - rho)).max(1e-9);
        }
        if rho < 2.0 * hstep {
            // even extension: u(-x) = u(x)
            let u0 = u(0.0)?;
            let u1 = u(hstep)?;
            let upp = 2.0 * (u1 - u0) / (hstep * hstep);
            if rho < 1e-12 {
                return Ok(2.0 * upp);
            }
            let um = u((rho - hstep).abs())?;
            let up = u(rho + hstep)?;
            let uc = u(rho)?;
            return Ok((up - 2.0 * uc + um) / (hstep * hstep) + (up - um) / (2.0 * hstep * rho));
        }
        let um = u(rho - hstep)?;
        let up = u(rho + hstep)?;
        let uc = u(rho)?;
        Ok((up - 2.0 * uc + um) / (hstep * hstep) + (up - um) / (2.0 * hstep * rho))
    }

    fn check_curvature(&self) -> Result<()> {
        let top = self.domain_radius.map_or(8.0, |d| d * (1.0 - 1e-3));
        for i in 0..=CURVATURE_GRID {
            let rho = top * i as f64 / CURVATURE_GRID as f64;
            let k = self.curvature(rho)?;
            if k > CURVATURE_SLACK {
                return Err(NevError::Config(format!(
                    "curvature K({rho:.6}) = {k:.3e} is positive; surfaces must be non-positively curved"
                )));
            }
        }
        Ok(())
    }
}

/// Fritsch–Carlson monotone cubic interpolation.
#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ms: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(table: &[(f64, f64)]) -> Result<Self> {
        if table.len() < 3 {
            return Err(NevError::Config("custom profile table needs at least 3 rows".into()));
        }
        let xs: Vec<f64> = table.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = table.iter().map(|p| p.1).collect();
        if xs[0] != 0.0 {
            return Err(NevError::Config("custom profile table must start at ρ_e = 0".into()));
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(NevError::Config("custom profile radii must be strictly increasing".into()));
        }
        if ys.iter().any(|&y| !(y > 0.0)) {
            return Err(NevError::Config("custom profile densities must be positive".into()));
        }
        let n = xs.len();
        let d: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])).collect();
        let mut ms = vec![0.0; n];
        ms[0] = 0.0; // radial symmetry
        // one-sided three-point slope; the plain secant bends convex data down
        let (h0, h1) = (xs[n - 2] - xs[n - 3], xs[n - 1] - xs[n - 2]);
        let end = ((2.0 * h1 + h0) * d[n - 2] - h1 * d[n - 3]) / (h0 + h1);
        ms[n - 1] = if end * d[n - 2] <= 0.0 {
            0.0
        } else if d[n - 2] * d[n - 3] <= 0.0 && end.abs() > 3.0 * d[n - 2].abs() {
            3.0 * d[n - 2]
        } else {
            end
        };
        for k in 1..n - 1 {
            ms[k] = if d[k - 1] * d[k] <= 0.0 { 0.0 } else { 0.5 * (d[k - 1] + d[k]) };
        }
        for k in 0..n - 1 {
            if d[k] == 0.0 {
                ms[k] = 0.0;
                ms[k + 1] = 0.0;
                continue;
            }
            let a = ms[k] / d[k];
            let b = ms[k + 1] / d[k];
            let s = a * a + b * b;
            if s > 9.0 {
                let t = 3.0 / s.sqrt();
                ms[k] = t * a * d[k];
                ms[k + 1] = t * b * d[k];
            }
        }
        Ok(Self { xs, ys, ms })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let k = match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[k]
            + (t3 - 2.0 * t2 + t) * h * self.ms[k]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[k + 1]
            + (t3 - t2) * h * self.ms[k + 1]
    }
}

/// A surface with reference point `o = 0`.
#[derive(Clone, Debug)]
pub struct SurfaceModel {
    pub profile: MetricProfile,
}

impl SurfaceModel {
    pub fn new(profile: MetricProfile) -> Self {
        Self { profile }
    }

    pub fn euclidean() -> Self {
        Self::new(MetricProfile::euclidean())
    }

    pub fn poincare(a: f64) -> Result<Self> {
        Ok(Self::new(MetricProfile::poincare(a)?))
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.profile.kind, ProfileKind::Euclidean)
    }

    pub fn density(&self, rho: f64) -> Result<f64> {
        self.profile.density(rho)
    }

    pub fn density_at(&self, z: Complex64) -> Result<f64> {
        self.profile.density(z.norm())
    }

    /// Geodesic radius `r(ρ_e) = ∫₀^{ρ_e} √h`.
    pub fn geodesic_radius(&self, rho: f64) -> Result<f64> {
        if !self.profile.in_domain(rho) {
            return Err(NevError::Range(format!("ρ_e = {rho} outside the domain")));
        }
        match &self.profile.kind {
            ProfileKind::Euclidean => Ok(rho),
            ProfileKind::Poincare { a } => Ok(2.0 / a * rho.atanh()),
            ProfileKind::Custom { .. } => self.radial_length(0.0, rho),
        }
    }

    fn radial_length(&self, lo: f64, hi: f64) -> Result<f64> {
        let f = |x: f64| self.density(x).map(f64::sqrt);
        let Some(d) = self.profile.domain_radius else {
            return adaptive_gl(&f, lo, hi, 1e-14, 30);
        };
        // geometric pieces toward the rim keep each panel well scaled
        let mut acc = 0.0;
        let mut a = lo;
        let mut k = 1;
        while a < hi {
            let mark = d * (1.0 - 0.5f64.powi(k));
            k += 1;
            if mark <= a && k <= 60 {
                continue;
            }
            let b = if k > 60 { hi } else { mark.min(hi) };
            acc += adaptive_gl(&f, a, b, 1e-14, 30)?;
            a = b;
        }
        Ok(acc)
    }

    /// Euclidean radius of the geodesic disc `D(r)`.
    pub fn euclidean_radius(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(NevError::Range(format!("geodesic radius {r} must be finite and non-negative")));
        }
        let rho = match &self.profile.kind {
            ProfileKind::Euclidean => r,
            ProfileKind::Poincare { a } => (a * r / 2.0).tanh(),
            ProfileKind::Custom { .. } => self.invert_custom(r)?,
        };
        if !self.profile.in_domain(rho) {
            return Err(NevError::Range(format!(
                "geodesic radius {r} is not representable inside the domain (ρ_e rounds to {rho})"
            )));
        }
        Ok(rho)
    }

    fn invert_custom(&self, r: f64) -> Result<f64> {
        if r == 0.0 {
            return Ok(0.0);
        }
        // bracket
        let mut lo = 0.0;
        let mut hi = match self.profile.domain_radius {
            None => {
                let mut hi = 1.0;
                while self.geodesic_radius(hi)? < r {
                    lo = hi;
                    hi *= 2.0;
                    if hi > 1e12 {
                        return Err(NevError::Range(format!("geodesic radius {r} unreachable")));
                    }
                }
                hi
            }
            Some(d) => {
                // walk toward the rim geometrically; the length near the rim
                // is resolved piece by piece
                let mut hi = 0.5 * d;
                let mut len = self.geodesic_radius(hi)?;
                let mut k = 1;
                while len < r {
                    k += 1;
                    if k > 48 {
                        return Err(NevError::Range(format!(
                            "geodesic radius {r} exceeds the radial length {len:.6} reachable inside the disc"
                        )));
                    }
                    let next = d * (1.0 - 0.5f64.powi(k));
                    len += self.radial_length(hi, next)?;
                    lo = hi;
                    hi = next;
                }
                hi
            }
        };
        // Newton safeguarded by bisection; dr/dρ = √h
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let g = self.geodesic_radius(x)? - r;
            if g.abs() < 1e-14 * r.max(1.0) {
                return Ok(x);
            }
            if g > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let dx = g / self.density(x)?.sqrt();
            let nx = x - dx;
            x = if nx > lo && nx < hi { nx } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 * hi.max(1e-300) {
                return Ok(x);
            }
        }
        Ok(x)
    }

    /// Green function of `½Δ_S` on `D(r)` with pole at the origin.
    pub fn green(&self, r: f64, z: Complex64) -> Result<f64> {
        let rho = self.euclidean_radius(r)?;
        let a = z.norm();
        if a == 0.0 {
            return Err(NevError::Pole("Green function evaluated at its pole o = 0".into()));
        }
        if a > rho * (1.0 + 1e-14) {
            return Err(NevError::Range(format!("|z| = {a} outside D(r) (ρ_e = {rho})")));
        }
        Ok(((rho / a).ln() / PI).max(0.0))
    }

    /// Harmonic measure density of `∂D(r)` seen from `o`, against dθ.
    pub fn harmonic_measure_density(&self, r: f64, _theta: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(NevError::Range(format!("radius {r} must be positive")));
        }
        self.euclidean_radius(r)?;
        Ok(1.0 / (2.0 * PI))
    }

    pub fn curvature_at(&self, rho: f64) -> Result<f64> {
        self.profile.curvature(rho)
    }

    /// κ(r): minimum curvature over the closed geodesic disc of radius r.
    pub fn kappa(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(NevError::Range(format!("radius {r} must be non-negative")));
        }
        match &self.profile.kind {
            ProfileKind::Euclidean => {
                self.euclidean_radius(r)?;
                Ok(0.0)
            }
            ProfileKind::Poincare { a } => {
                self.euclidean_radius(r)?;
                Ok(-a * a)
            }
            ProfileKind::Custom { .. } => {
                let rho = self.euclidean_radius(r)?;
                let k = |x: f64| self.profile.curvature(x);
                let n = CURVATURE_GRID;
                let mut best = (0usize, f64::INFINITY);
                for i in 0..=n {
                    let v = k(rho * i as f64 / n as f64)?;
                    if v < best.1 {
                        best = (i, v);
                    }
                }
                // golden-section refinement around the grid minimizer
                let h = rho / n as f64;
                let mut a = (best.0 as f64 - 1.0).max(0.0) * h;
                let mut b = ((best.0 + 1) as f64 * h).min(rho);
                let g = 0.618_033_988_749_894_9;
                let mut c = b - g * (b - a);
                let mut d = a + g * (b - a);
                let (mut fc, mut fd) = (k(c)?, k(d)?);
                for _ in 0..60 {
                    if fc < fd {
                        b = d;
                        d = c;
                        fd = fc;
                        c = b - g * (b - a);
                        fc = k(c)?;
                    } else {
                        a = c;
                        c = d;
                        fc = fd;
                        d = a + g * (b - a);
                        fd = k(d)?;
                    }
                }
                Ok(best.1.min(fc).min(fd).min(0.0))
            }
        }
    }
}

/// Adaptive Gauss–Legendre: a 10-point panel is accepted when it agrees
/// with the sum over its two halves.
fn adaptive_gl<F>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    fn panel<F: Fn(f64) -> Result<f64>>(f: &F, a: f64, b: f64) -> Result<f64> {
        let (x, w) = gl10();
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut acc = 0.0;
        for i in 0..10 {
            acc += w[i] * f(c + h * x[i])?;
        }
        Ok(acc * h)
    }
    fn rec<F: Fn(f64) -> Result<f64>>(
        f: &F,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: u32,
        budget: &mut usize,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let left = panel(f, a, m)?;
        let right = panel(f, m, b)?;
        *budget = budget.saturating_sub(1);
        let diff = (left + right - whole).abs();
        if depth == 0 || *budget == 0 || diff <= tol.max(1e-15 * (left + right).abs()) {
            return Ok(left + right);
        }
        Ok(rec(f, a, m, left, 0.5 * tol, depth - 1, budget)? + rec(f, m, b, right, 0.5 * tol, depth - 1, budget)?)
    }
    if b <= a {
        return Ok(0.0);
    }
    let whole = panel(f, a, b)?;
    // rounding noise near a rim singularity can defeat any tolerance
    let mut budget = 4096;
    rec(f, a, b, whole, tol * whole.abs().max(1.0), depth, &mut budget)
}

fn gl10() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();
    RULE.get_or_init(|| crate::quad::gauss_legendre(10))
}

/// Solution of `G'' + κ(t)G = 0`, `G(0) = 0`, `G'(0) = 1` on `[0, r_max]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JacobiSolution {
    pub grid: Vec<f64>,
    pub g_values: Vec<f64>,
    pub g_prime_values: Vec<f64>,
    /// κ at the grid points, kept for the upper-bound check.
    pub kappa_values: Vec<f64>,
}

impl JacobiSolution {
    /// G at an arbitrary point by cubic Hermite interpolation.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.grid.len();
        let k = match self.grid.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.grid[k + 1] - self.grid[k];
        let s = (t - self.grid[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.g_values[k]
            + (s3 - 2.0 * s2 + s) * h * self.g_prime_values[k]
            + (-2.0 * s3 + 3.0 * s2) * self.g_values[k + 1]
            + (s3 - s2) * h * self.g_prime_values[k + 1]
    }

    /// ∫_a^b dt / G(t) for 0 < a ≤ b within the solved range.
    pub fn inverse_integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let panels = (((b - a) / 0.05).ceil() as usize).clamp(4, 20_000);
        crate::quad::gauss_legendre_integral(|t| 1.0 / self.eval(t), a, b, panels, 8)
    }

    pub fn r_max(&self) -> f64 {
        *self.grid.last().unwrap_or(&0.0)
    }

    /// Checks `G(0)=0, G'(0)=1`, monotonicity, `G ≥ t`, `G ≤ t·exp(t√−κ)`
    /// and `∫₁^r dt/G ≤ log r`. Returns the first violation.
    pub fn check_invariants(&self, tol: f64) -> std::result::Result<(), String> {
        if self.g_values[0].abs() > tol || (self.g_prime_values[0] - 1.0).abs() > tol {
            return Err("initial conditions violated".into());
        }
        for i in 1..self.grid.len() {
            let t = self.grid[i];
            let g = self.g_values[i];
            if g <= self.g_values[i - 1] {
                return Err(format!("G not increasing at t = {t}"));
            }
            if g < t * (1.0 - tol) - tol {
                return Err(format!("G({t}) = {g} < t"));
            }
            let upper = t * (t * (-self.kappa_values[i]).max(0.0).sqrt()).exp();
            if g > upper * (1.0 + tol) + tol {
                return Err(format!("G({t}) = {g} exceeds t·exp(t√−κ) = {upper}"));
            }
            if t >= 1.0 {
                let integral = self.inverse_integral(1.0, t);
                if integral > t.ln() + tol {
                    return Err(format!("∫₁^{t} dt/G = {integral} > log t"));
                }
            }
        }
        Ok(())
    }
}

/// Adaptive Dormand–Prince 5(4) solve of the Jacobi comparison equation.
pub fn jacobi_solve<K>(kappa_floor: K, r_max: f64, tol: f64) -> Result<JacobiSolution>
where
    K: Fn(f64) -> f64,
{
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(NevError::Config(format!("r_max = {r_max} must be positive")));
    }
    let tol = if tol > 0.0 { tol } else { 1e-10 };
    // y = (G, G'), y' = (G', -κ G)
    let rhs = |t: f64, y: [f64; 2]| -> [f64; 2] { [y[1], -kappa_floor(t) * y[0]] };
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let mut t = 0.0;
    let mut y = [0.0, 1.0];
    let mut h = (r_max / 100.0).min(0.01);
    let mut sol = JacobiSolution {
        grid: vec![0.0],
        g_values: vec![0.0],
        g_prime_values: vec![1.0],
        kappa_values: vec![kappa_floor(0.0)],
    };
    // step cap keeps interpolation accurate
    let h_max = (r_max / 64.0).min(0.05);
    let mut steps = 0usize;
    while t < r_max {
        if h < 1e-14 * r_max.max(1.0) {
            return Err(NevError::Numerical(format!(
                "Jacobi solver step underflow at t = {t} (h = {h:e})"
            )));
        }
        steps += 1;
        if steps > 10_000_000 {
            return Err(NevError::Numerical("Jacobi solver exceeded step budget".into()));
        }
        let h_step = h.min(r_max - t).min(h_max);
        let mut k = [[0.0; 2]; 7];
        for s in 0..7 {
            let mut ys = y;
            for j in 0..s {
                ys[0] += h_step * A[s][j] * k[j][0];
                ys[1] += h_step * A[s][j] * k[j][1];
            }
            k[s] = rhs(t + C[s] * h_step, ys);
        }
        let mut y5 = y;
        let mut y4 = y;
        for s in 0..7 {
            y5[0] += h_step * B5[s] * k[s][0];
            y5[1] += h_step * B5[s] * k[s][1];
            y4[0] += h_step * B4[s] * k[s][0];
            y4[1] += h_step * B4[s] * k[s][1];
        }
        let scale0 = tol * (1.0 + y5[0].abs());
        let scale1 = tol * (1.0 + y5[1].abs());
        let err = (((y5[0] - y4[0]) / scale0).powi(2) + ((y5[1] - y4[1]) / scale1).powi(2)).sqrt() / 2f64.sqrt();
        if err <= 1.0 {
            t += h_step;
            y = y5;
            sol.grid.push(t);
            sol.g_values.push(y[0]);
            sol.g_prime_values.push(y[1]);
            sol.kappa_values.push(kappa_floor(t));
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = h_step * factor;
    }
    Ok(sol)
}

/// Outcome of the empirical Green lower-bound check.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreenBoundReport {
    pub eta: f64,
    pub r: f64,
    pub samples: usize,
    /// Infimum of `g_r(o,x)·∫_η^r dt/G / ∫_{r(x)}^r dt/G` over sampled x.
    pub infimum: f64,
    pub argmin_radius: f64,
    /// Limit of the ratio as `r(x) → r`.
    pub boundary_limit: f64,
    pub positive: bool,
}

/// Samples points with geodesic radius in (η, r) and evaluates the ratio
/// of the Green lower bound.
pub fn green_lower_bound_check(surface: &SurfaceModel, eta: f64, r: f64, samples: usize) -> Result<GreenBoundReport> {
    if !(eta > 0.0 && eta < r) || samples < 2 {
        return Err(NevError::Config(format!(
            "degenerate grid: need 0 < η < r and ≥ 2 samples (η = {eta}, r = {r}, samples = {samples})"
        )));
    }
    let jac = jacobi_solve(|t| surface.kappa(t).unwrap_or(f64::NEG_INFINITY), r, 1e-10)?;
    let rho_r = surface.euclidean_radius(r)?;
    let total = jac.inverse_integral(eta, r);
    let mut inf = f64::INFINITY;
    let mut arg = eta;
    for i in 0..samples {
        // interior points, denser near the boundary where both sides vanish
        let s = (i as f64 + 0.5) / samples as f64;
        let rx = eta + (r - eta) * (1.0 - (1.0 - s).powi(2));
        let rho_x = surface.euclidean_radius(rx)?;
        let g = (rho_r / rho_x).ln() / PI;
        let ratio = g * total / jac.inverse_integral(rx, r);
        if ratio < inf {
            inf = ratio;
            arg = rx;
        }
    }
    // d/dr log ρ_e = 1/(ρ_e √h): both sides vanish linearly at the boundary
    let boundary_limit = jac.eval(r) * total / (PI * rho_r * surface.density(rho_r)?.sqrt());
    Ok(GreenBoundReport {
        eta,
        r,
        samples,
        infimum: inf,
        argmin_radius: arg,
        boundary_limit,
        positive: inf > 0.0 && boundary_limit > 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn custom_exp_sq() -> MetricProfile {
        MetricProfile::custom(Arc::new(|r: f64| (r * r).exp()), None).unwrap()
    }

    /// h = 16/(1−ρ⁴)² has K(ρ) = −ρ² on the unit disc.
    fn custom_quartic() -> SurfaceModel {
        SurfaceModel::new(MetricProfile::custom(Arc::new(|r: f64| 16.0 / (1.0 - r.powi(4)).powi(2)), Some(1.0)).unwrap())
    }

    #[test]
    fn curvature_closed_forms() {
        assert_eq!(MetricProfile::euclidean().curvature(0.5).unwrap(), 0.0);
        assert_eq!(MetricProfile::poincare(1.0).unwrap().curvature(0.3).unwrap(), -1.0);
    }

    #[test]
    fn custom_curvature_matches_independent_difference_quotient() {
        // oracle: K = -(1/(2h)) (u'' + u'/ρ) with u = log h = ρ², differenced
        // on a coarser step than the implementation uses
        let p = custom_exp_sq();
        let rho: f64 = 0.7;
        let hh = 1e-3;
        let u = |x: f64| x * x;
        let lap = (u(rho + hh) - 2.0 * u(rho) + u(rho - hh)) / (hh * hh) + (u(rho + hh) - u(rho - hh)) / (2.0 * hh * rho);
        let oracle = -lap / (2.0 * (rho * rho).exp());
        assert!((p.curvature(rho).unwrap() - oracle).abs() < 1e-6);
    }

    #[test]
    fn positive_curvature_rejected() {
        // the round sphere metric 4/(1+ρ²)² has K = +1
        let r = MetricProfile::custom(Arc::new(|x: f64| 4.0 / (1.0 + x * x).powi(2)), None);
        assert!(matches!(r, Err(NevError::Config(_))));
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(SurfaceModel::euclidean().kappa(7.0).unwrap(), 0.0);
        assert_eq!(SurfaceModel::poincare(1.0).unwrap().kappa(5.0).unwrap(), -1.0);
        let s = custom_quartic();
        let r = s.geodesic_radius(0.5).unwrap();
        let k = s.kappa(r).unwrap();
        assert!((k + 0.25).abs() < 1e-6, "kappa = {k}");
    }

    #[test]
    fn kappa_is_non_increasing() {
        let s = custom_quartic();
        let mut prev = 0.0;
        for i in 1..20 {
            let k = s.kappa(0.2 * i as f64).unwrap();
            assert!(k <= prev + 1e-12);
            prev = k;
        }
    }

    #[test]
    fn euclidean_radius_examples() {
        assert_eq!(SurfaceModel::euclidean().euclidean_radius(3.0).unwrap(), 3.0);
        let t1 = 1f64.tanh();
        assert!((SurfaceModel::poincare(1.0).unwrap().euclidean_radius(2.0).unwrap() - t1).abs() < 1e-15);
        assert!((SurfaceModel::poincare(2.0).unwrap().euclidean_radius(1.0).unwrap() - t1).abs() < 1e-15);
    }

    #[test]
    fn poincare_radius_matches_numeric_integration() {
        // oracle: Simpson on √h = 2/(1-s²), independent of the closed form
        let n = 20_000;
        let b = 1f64.tanh();
        let h = b / n as f64;
        let f = |s: f64| 2.0 / (1.0 - s * s);
        let mut acc = f(0.0) + f(b);
        for i in 1..n {
            acc += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let r = acc * h / 3.0;
        assert!((r - 2.0).abs() < 1e-10);
    }

    #[test]
    fn custom_radius_round_trip() {
        let s = SurfaceModel::new(custom_exp_sq());
        for &r in &[0.01, 0.1, 1.0, 3.0, 10.0] {
            let rho = s.euclidean_radius(r).unwrap();
            assert!((s.geodesic_radius(rho).unwrap() - r).abs() < 1e-10);
        }
    }

    #[test]
    fn disc_radius_beyond_precision_is_range_error() {
        let s = SurfaceModel::poincare(1.0).unwrap();
        assert!(matches!(s.euclidean_radius(100.0), Err(NevError::Range(_))));
    }

    #[test]
    fn green_examples() {
        let e = SurfaceModel::euclidean();
        let v = e.green(std::f64::consts::E, Complex64::new(1.0, 0.0)).unwrap();
        assert!((v - 1.0 / PI).abs() < 1e-15);
        assert_eq!(e.green(2.0, Complex64::new(0.0, 2.0)).unwrap(), 0.0);
        assert!(matches!(e.green(2.0, Complex64::new(0.0, 0.0)), Err(NevError::Pole(_))));
        assert!(matches!(e.green(2.0, Complex64::new(3.0, 0.0)), Err(NevError::Range(_))));
        let p = SurfaceModel::poincare(1.0).unwrap();
        let v = p.green(2.0, Complex64::new(0.5, 0.0)).unwrap();
        assert!((v - (1f64.tanh() / 0.5).ln() / PI).abs() < 1e-14);
        assert!((v - 0.133_964).abs() < 1e-4);
    }

    #[test]
    fn harmonic_measure_is_uniform() {
        let p = SurfaceModel::poincare(1.0).unwrap();
        assert!((p.harmonic_measure_density(3.0, PI).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-16);
        let total = crate::quad::circle_mean(|t| p.harmonic_measure_density(3.0, t).unwrap(), 64, 1024, 1e-14, 0.0, false)
            .unwrap()
            .value
            * 2.0
            * PI;
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn jacobi_flat_and_hyperbolic() {
        let flat = jacobi_solve(|_| 0.0, 5.0, 1e-10).unwrap();
        assert!((flat.eval(3.3) - 3.3).abs() < 1e-10);
        let hyp = jacobi_solve(|_| -1.0, 5.0, 1e-10).unwrap();
        assert!((hyp.eval(1.0) - 1.175_201_193_643_801_4).abs() < 1e-8);
        hyp.check_invariants(1e-9).unwrap();
        flat.check_invariants(1e-9).unwrap();
    }

    #[test]
    fn jacobi_kappa_minus_four() {
        // oracle: G = sinh(2t)/2
        let sol = jacobi_solve(|_| -4.0, 2.0, 1e-10).unwrap();
        assert!((sol.eval(1.0) - 2f64.sinh() / 2.0).abs() < 1e-8);
        assert!((sol.eval(1.0) - 1.813_430).abs() < 1e-6);
    }

    #[test]
    fn green_lower_bound_euclidean() {
        let e = SurfaceModel::euclidean();
        let rep = green_lower_bound_check(&e, 1.0, 10.0, 200).unwrap();
        assert!(rep.positive && rep.infimum > 0.0);
        // l'Hôpital oracle with G = t: limit = log(r/η)/π
        assert!((rep.boundary_limit - (10f64).ln() / PI).abs() < 1e-8);
        // ratio at a point next to the boundary approaches the limit
        let rx: f64 = 10.0 - 1e-5;
        let ratio = ((10.0 / rx).ln() / PI) * (10f64).ln() / (10.0 / rx).ln();
        assert!((ratio - rep.boundary_limit).abs() < 1e-8);
    }

    #[test]
    fn green_lower_bound_poincare() {
        let p = SurfaceModel::poincare(1.0).unwrap();
        let rep = green_lower_bound_check(&p, 1.0, 5.0, 200).unwrap();
        assert!(rep.positive);
        assert!(green_lower_bound_check(&p, 5.0, 1.0, 10).is_err());
    }

    #[test]
    fn table_profile_interpolates() {
        let table: Vec<(f64, f64)> = (0..=200).map(|i| (i as f64 * 0.004, 1.0)).collect();
        let p = MetricProfile::from_table(&table, None).unwrap();
        assert!((p.density(0.3).unwrap() - 1.0).abs() < 1e-15);
        assert!(p.curvature(0.3).unwrap().abs() < 1e-9);
        assert_eq!(p.domain_radius(), Some(0.8));

        let table: Vec<(f64, f64)> = (0..=400)
            .map(|i| {
                let r = 0.9 * i as f64 / 400.0;
                (r, 4.0 / (1.0 - r * r).powi(2))
            })
            .collect();
        let p = MetricProfile::from_table(&table, None).unwrap();
        assert!((p.curvature(0.5).unwrap() + 1.0).abs() < 1e-3);
    }
}
