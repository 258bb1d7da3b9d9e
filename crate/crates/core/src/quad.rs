//! Quadrature primitives: Gauss–Legendre panels, a product rule for the
//! logarithmic weight on the innermost radial panel, and the periodic
//! trapezoid rule with node doubling used on circles.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NevError, Result};

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Panel rule: Gauss–Legendre nodes on [0, 1] together with product weights
/// for `∫₀¹ log(1/t) g(t) dt`, exact for polynomials of degree < n.
#[derive(Clone, Debug)]
pub struct PanelRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl PanelRule {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let nodes: Vec<f64> = x.iter().map(|v| 0.5 * (v + 1.0)).collect();
        let weights: Vec<f64> = w.iter().map(|v| 0.5 * v).collect();
        // Shifted Legendre basis keeps the moment system well conditioned:
        // sum_i v_i P_k(t_i) = ∫ log(1/t) P_k(t) dt.
        let mut a = DMatrix::<f64>::zeros(n, n);
        for (i, &t) in nodes.iter().enumerate() {
            let vals = shifted_legendre_values(n, t);
            for k in 0..n {
                a[(k, i)] = vals[k];
            }
        }
        let moments = DVector::from_iterator(n, (0..n).map(log_moment_shifted_legendre));
        let log_weights = a
            .lu()
            .solve(&moments)
            .expect("shifted Legendre collocation matrix is nonsingular");
        Self {
            nodes,
            weights,
            log_weights: log_weights.iter().copied().collect(),
        }
    }
}

fn shifted_legendre_values(n: usize, t: f64) -> Vec<f64> {
    let x = 2.0 * t - 1.0;
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    out[0] = 1.0;
    if n > 1 {
        out[1] = x;
    }
    for k in 2..n {
        let kf = k as f64;
        out[k] = ((2.0 * kf - 1.0) * x * out[k - 1] - (kf - 1.0) * out[k - 2]) / kf;
    }
    out
}

/// ∫₀¹ log(1/t) P̃_k(t) dt for the shifted Legendre polynomial P̃_k.
fn log_moment_shifted_legendre(k: usize) -> f64 {
    // P̃_k(t) = Σ_j (-1)^{k+j} C(k,j) C(k+j,j) t^j and ∫ log(1/t) t^j = 1/(j+1)^2.
    let mut s = 0.0;
    for j in 0..=k {
        let c = binom(k, j) * binom(k + j, j);
        let sign = if (k + j).is_multiple_of(2) { 1.0 } else { -1.0 };
        s += sign * c / ((j + 1) as f64).powi(2);
    }
    s
}

fn binom(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r *= (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Settings for circle and disc quadrature.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct QuadSettings {
    /// Initial trapezoid nodes on a boundary circle.
    pub boundary_nodes_min: usize,
    pub boundary_nodes_max: usize,
    /// Absolute tolerance on successive boundary estimates.
    pub boundary_tol: f64,
    /// Initial angular nodes inside area integrals.
    pub angular_nodes_min: usize,
    pub angular_nodes_max: usize,
    /// Relative tolerance on successive angular estimates.
    pub angular_tol: f64,
    /// Minimum number of radial panels and their maximal width.
    pub radial_panels_min: usize,
    pub radial_panel_width: f64,
    /// Order of the logarithmic product rule on the innermost radial panel.
    pub panel_order: usize,
    /// Relative tolerance of the adaptive radial panels.
    pub radial_tol: f64,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            boundary_nodes_min: 64,
            boundary_nodes_max: 1 << 18,
            boundary_tol: 1e-7,
            angular_nodes_min: 128,
            angular_nodes_max: 1 << 16,
            angular_tol: 1e-10,
            radial_panels_min: 8,
            radial_panel_width: 1.0,
            panel_order: 10,
            radial_tol: 1e-10,
        }
    }
}

impl QuadSettings {
    pub fn validate(&self) -> Result<()> {
        if self.boundary_nodes_min < 64 || self.angular_nodes_min < 128 || self.radial_panels_min * self.panel_order < 64 {
            return Err(NevError::Config(
                "quadrature node counts below the minimum (64 boundary, 64x128 area)".into(),
            ));
        }
        if self.boundary_nodes_max < self.boundary_nodes_min || self.angular_nodes_max < self.angular_nodes_min {
            return Err(NevError::Config("node caps below node minimums".into()));
        }
        if !(self.radial_panel_width > 0.0) || !(self.radial_tol > 0.0) || !(self.boundary_tol > 0.0) || !(self.angular_tol > 0.0) {
            return Err(NevError::Config("quadrature widths and tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Result of a converged quadrature with its last successive difference.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct QuadEstimate {
    pub value: f64,
    pub residual: f64,
    pub nodes: usize,
}

/// Trapezoid rule on [0, 2π) with node doubling. `f(theta)` returns the
/// integrand; the result is the mean value (1/2π)∫f dθ. Nodes are offset by
/// `offset` radians so that symmetric singular points are not sampled.
///
/// With `relative` the test is `|Δ| ≤ tol·|mean|`; otherwise it is
/// `|Δ| ≤ tol·max(1, |mean|)`, absolute for means of order one.
pub fn circle_mean<F>(f: F, n_min: usize, n_max: usize, tol: f64, offset: f64, relative: bool) -> Result<QuadEstimate>
where
    F: Fn(f64) -> f64,
{
    let mut n = n_min.max(4);
    let mut sum: f64 = (0..n).map(|k| f(offset + 2.0 * PI * k as f64 / n as f64)).sum();
    let mut prev = sum / n as f64;
    loop {
        if n * 2 > n_max {
            return Err(NevError::Numerical(format!(
                "circle quadrature did not converge with {n} nodes (last estimate {prev})"
            )));
        }
        // midpoints of the current grid
        let add: f64 = (0..n)
            .map(|k| f(offset + 2.0 * PI * (k as f64 + 0.5) / n as f64))
            .sum();
        sum += add;
        n *= 2;
        let cur = sum / n as f64;
        let diff = (cur - prev).abs();
        let scale = if relative { cur.abs().max(1e-300) } else { cur.abs().max(1.0) };
        if !cur.is_finite() {
            return Err(NevError::Numerical("non-finite circle quadrature".into()));
        }
        if diff <= tol * scale {
            return Ok(QuadEstimate { value: cur, residual: diff, nodes: n });
        }
        prev = cur;
    }
}

// Gauss–Kronrod 10/21 pair on [-1, 1]: nodes in decreasing order, the odd
// entries are the Gauss nodes.
const KRONROD_X: [f64; 11] = [
    0.995_657_163_025_808_1,
    0.973_906_528_517_171_7,
    0.930_157_491_355_708_2,
    0.865_063_366_688_984_5,
    0.780_817_726_586_416_9,
    0.679_409_568_299_024_4,
    0.562_757_134_668_604_7,
    0.433_395_394_129_247_2,
    0.294_392_862_701_460_2,
    0.148_874_338_981_631_22,
    0.0,
];
const KRONROD_W: [f64; 11] = [
    0.011_694_638_867_371_874,
    0.032_558_162_307_964_725,
    0.054_755_896_574_351_995,
    0.075_039_674_810_919_96,
    0.093_125_454_583_697_6,
    0.109_387_158_802_297_64,
    0.123_491_976_262_065_84,
    0.134_709_217_311_473_34,
    0.142_775_938_577_060_09,
    0.147_739_104_901_338_49,
    0.149_445_554_002_916_9,
];
const GAUSS10_W: [f64; 5] = [
    0.066_671_344_308_688_14,
    0.149_451_349_150_580_6,
    0.219_086_362_515_982_04,
    0.269_266_719_309_996_35,
    0.295_524_224_714_752_87,
];

const MAX_RADIAL_DEPTH: u32 = 40;

/// Integral over one radial panel with its error estimate; `residual` and
/// `nodes` accumulate the angular quadratures behind it.
#[derive(Clone, Copy, Debug, Default)]
struct Piece {
    value: f64,
    err: f64,
    residual: f64,
    nodes: usize,
}

impl Piece {
    fn plus(self, o: Piece) -> Piece {
        Piece { value: self.value + o.value, err: self.err + o.err, residual: self.residual + o.residual, nodes: self.nodes + o.nodes }
    }
}

struct DiscIntegrand<'a, F> {
    f: &'a F,
    rho: f64,
    settings: &'a QuadSettings,
    rule: PanelRule,
}

impl<F> DiscIntegrand<'_, F>
where
    F: Fn(Complex64) -> f64 + Sync,
{
    /// `A(s) = s ∮ F(s e^{iθ}) dθ` with the residual of the angular mean.
    fn ring(&self, s: f64) -> Result<(f64, f64, usize)> {
        let n_min = self.settings.angular_nodes_min;
        // irrational offsets decorrelate the angular grids across radii
        let offset = ((s / self.rho) * 1_000.0 * 0.618_033_988_749_894_9).fract() * 2.0 * PI / n_min as f64;
        let ring = |th: f64| (self.f)(Complex64::from_polar(s, th));
        let est = circle_mean(ring, n_min, self.settings.angular_nodes_max, self.settings.angular_tol, offset, true)
            .or_else(|e| {
                // an angular mean that is exactly zero never meets a relative test
                circle_mean(ring, n_min, self.settings.angular_nodes_max, 1e-14, offset, false).map_err(|_| e)
            })?;
        Ok((2.0 * PI * s * est.value, 2.0 * PI * s * est.residual, est.nodes))
    }

    /// `∫_a^b log(ρ/s) A(s) ds` on a panel away from the origin, Kronrod 21
    /// against Gauss 10.
    fn kronrod(&self, a: f64, b: f64) -> Result<Piece> {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        let log_rho = self.rho.ln();
        let mut out = Piece::default();
        let mut gauss = 0.0;
        for (i, (&x, &wk)) in KRONROD_X.iter().zip(&KRONROD_W).enumerate() {
            let points: &[f64] = if x == 0.0 { &[c] } else { &[c - h * x, c + h * x] };
            for &s in points {
                let (a_s, res, nodes) = self.ring(s)?;
                let w = log_rho - s.ln();
                out.value += h * wk * w * a_s;
                out.residual += (h * wk * w * res).abs();
                out.nodes += nodes;
                if i % 2 == 1 {
                    gauss += h * GAUSS10_W[i / 2] * w * a_s;
                }
            }
        }
        out.err = (out.value - gauss).abs();
        Ok(out)
    }

    /// `∫_0^b log(ρ/s) A(s) ds` with the logarithmic product rule, no error estimate.
    fn innermost_rule(&self, b: f64) -> Result<Piece> {
        let mut out = Piece::default();
        let log_scale = (self.rho / b).ln();
        for (i, &t) in self.rule.nodes.iter().enumerate() {
            // log(ρ/s) = log(ρ/b) + log(1/t)
            let w = b * (log_scale * self.rule.weights[i] + self.rule.log_weights[i]);
            let (a_s, res, nodes) = self.ring(b * t)?;
            out.value += w * a_s;
            out.residual += (w * res).abs();
            out.nodes += nodes;
        }
        Ok(out)
    }

    /// Innermost panel checked against its bisection.
    fn innermost(&self, b: f64) -> Result<Piece> {
        let coarse = self.innermost_rule(b)?;
        let fine = self.innermost_rule(0.5 * b)?.plus(self.kronrod(0.5 * b, b)?);
        Ok(Piece { err: (coarse.value - fine.value).abs(), nodes: coarse.nodes + fine.nodes, ..fine })
    }

    /// Bisects until the panel error is below `tol` per unit length.
    fn refine(&self, a: f64, b: f64, piece: Piece, tol: f64, depth: u32) -> Result<Piece> {
        // an error estimate below the angular noise cannot be improved
        let noise = 10.0 * piece.residual + 4.0 * f64::EPSILON * piece.value.abs();
        if piece.err <= (tol * (b - a)).max(noise) || depth >= MAX_RADIAL_DEPTH {
            return Ok(Piece { residual: piece.residual + piece.err, err: 0.0, ..piece });
        }
        let m = 0.5 * (a + b);
        let left = if a == 0.0 { self.innermost(m)? } else { self.kronrod(a, m)? };
        let right = self.kronrod(m, b)?;
        let left = self.refine(a, m, left, tol, depth + 1)?;
        let right = self.refine(m, b, right, tol, depth + 1)?;
        Ok(Piece { nodes: piece.nodes + left.nodes + right.nodes, ..left.plus(right) })
    }
}

/// Integrates `∫_{|z|<rho} log(rho/|z|) F(z) dA(z)` in polar coordinates.
///
/// The radius is split into panels of width at most `radial_panel_width`.
/// Outer panels use Gauss–Kronrod 10/21; the innermost one integrates the
/// logarithm against the product weights of [`PanelRule`] and is checked by
/// bisection. Panels are bisected until their error is below
/// `radial_tol` times the integral of `|·|` per unit of relative length.
/// Each radial node carries an angular trapezoid integral refined by doubling.
pub fn green_disc_integral<F>(rho: f64, f: F, settings: &QuadSettings) -> Result<QuadEstimate>
where
    F: Fn(Complex64) -> f64 + Sync,
{
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(NevError::Range(format!("disc radius {rho} must be positive and finite")));
    }
    let integrand = DiscIntegrand { f: &f, rho, settings, rule: PanelRule::new(settings.panel_order) };
    let n_panels = ((rho / settings.radial_panel_width).ceil() as usize).max(settings.radial_panels_min);
    let width = rho / n_panels as f64;
    let bounds = |p: usize| (p as f64 * width, if p + 1 == n_panels { rho } else { (p + 1) as f64 * width });

    let first: Vec<Piece> = (0..n_panels)
        .into_par_iter()
        .map(|p| {
            let (a, b) = bounds(p);
            if p == 0 {
                integrand.innermost(b)
            } else {
                integrand.kronrod(a, b)
            }
        })
        .collect::<Result<_>>()?;
    let scale = first.iter().map(|p| p.value.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let tol = settings.radial_tol * scale / rho;
    let pieces: Vec<Piece> = first
        .into_par_iter()
        .enumerate()
        .map(|(p, piece)| {
            let (a, b) = bounds(p);
            integrand.refine(a, b, piece, tol, 0)
        })
        .collect::<Result<_>>()?;
    let total = pieces.into_iter().fold(Piece::default(), Piece::plus);
    Ok(QuadEstimate { value: total.value, residual: total.residual, nodes: total.nodes })
}

/// Pairwise (cascade) summation; the association order depends only on the
/// slice length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Composite Gauss–Legendre on [a, b] with `panels` panels of order `n`.
pub fn gauss_legendre_integral<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize, n: usize) -> f64 {
    let (x, w) = gauss_legendre(n);
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        for i in 0..n {
            s += 0.5 * h * w[i] * f(lo + 0.5 * h * (x[i] + 1.0));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn log_product_weights_exact_on_monomials() {
        let rule = PanelRule::new(10);
        for j in 0..10 {
            let s: f64 = rule
                .nodes
                .iter()
                .zip(&rule.log_weights)
                .map(|(t, w)| w * t.powi(j))
                .sum();
            let exact = 1.0 / ((j + 1) as f64).powi(2);
            assert!((s - exact).abs() < 1e-12, "j={j}: {s} vs {exact}");
        }
    }

    #[test]
    fn circle_mean_of_smooth_periodic() {
        let est = circle_mean(|t| (t.cos()).exp(), 64, 1 << 12, 1e-13, 0.1, false).unwrap();
        // I_0(1)
        assert!((est.value - 1.266_065_877_752_008_4).abs() < 1e-13);
    }

    #[test]
    fn green_integral_of_one_is_half_rho_squared_times_pi() {
        // ∫ log(rho/|z|) dA = pi rho^2 / 2
        let rho: f64 = 2.0;
        let est = green_disc_integral(rho, |_| 1.0, &QuadSettings::default()).unwrap();
        assert!((est.value - PI * rho * rho / 2.0).abs() < 1e-11);
    }

    #[test]
    fn kronrod_pair_is_consistent() {
        let (x, w) = gauss_legendre(10);
        for i in 0..5 {
            assert!((KRONROD_X[2 * i + 1] - x[9 - i]).abs() < 1e-15);
            assert!((GAUSS10_W[i] - w[9 - i]).abs() < 1e-15);
        }
        // K21 is exact up to degree 31
        for k in (0..=30).step_by(2) {
            let s: f64 = KRONROD_X
                .iter()
                .zip(&KRONROD_W)
                .map(|(x, w)| if *x == 0.0 { w * 0f64.powi(k) } else { 2.0 * w * x.powi(k) })
                .sum();
            assert!((s - 2.0 / (k as f64 + 1.0)).abs() < 1e-14, "degree {k}");
        }
    }

    #[test]
    fn green_integral_resolves_concentrated_densities() {
        // Fubini–Study density of z -> bz; the Green integral is log(1 + b²ρ²)/2
        for b in [1.0, 20.0, 300.0] {
            for rho in [0.5, 10.0, 60.0] {
                let fs = |z: Complex64| b * b / (PI * (1.0 + b * b * z.norm_sqr()).powi(2));
                let est = green_disc_integral(rho, fs, &QuadSettings::default()).unwrap();
                let exact = 0.5 * (1.0 + b * b * rho * rho).ln();
                assert!((est.value - exact).abs() < 1e-8 * exact.max(1.0), "b={b} rho={rho}: {} vs {exact}", est.value);
            }
        }
        // radial monomials: ∫ log(ρ/s) s^{2k} 2πs ds = 2πρ^{2k+2}/(2k+2)²
        for k in [1, 5] {
            let est = green_disc_integral(1.5, |z| z.norm_sqr().powi(k), &QuadSettings::default()).unwrap();
            let m = 2.0 * k as f64 + 2.0;
            assert!((est.value - 2.0 * PI * 1.5f64.powf(m) / (m * m)).abs() < 1e-10);
        }
    }

    #[test]
    fn settings_below_minimum_rejected() {
        let s = QuadSettings { boundary_nodes_min: 16, ..Default::default() };
        assert!(s.validate().is_err());
    }
}
