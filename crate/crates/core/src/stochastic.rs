//! Brownian motion on a radial surface as time-changed planar Brownian
//! motion, with Monte Carlo estimators for occupation times, exit
//! distributions and Nevanlinna functions.
//!
//! Path `i` draws from stream `i` of a ChaCha8 generator seeded with the
//! policy seed (stream `i/2` with negated increments on odd paths when
//! antithetic pairing is on), so estimates do not depend on the number of
//! worker threads.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divisor::{CurveWeil, WeilSpec};
use crate::error::{NevError, Result};
use crate::holo::ProjectiveCurve;
use crate::quad::{green_disc_integral, pairwise_sum, QuadSettings};
use crate::surface::SurfaceModel;

/// A real function on the disc.
pub type Functional<'a> = &'a (dyn Fn(Complex64) -> f64 + Sync);

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PathPolicy {
    /// Largest Euclidean-time step.
    pub base_step: f64,
    /// Near the rim the step is `shrink · dist²`, never below `step_floor`.
    pub shrink: f64,
    pub step_floor: f64,
    pub max_steps: u64,
    pub seed: u64,
    pub antithetic: bool,
    pub n_paths: usize,
    /// Number of batches for batch-means standard errors.
    pub batches: usize,
}

impl Default for PathPolicy {
    fn default() -> Self {
        Self {
            base_step: 1e-3,
            shrink: 0.25,
            step_floor: 1e-6,
            max_steps: 10_000_000,
            seed: 0,
            antithetic: false,
            n_paths: 100_000,
            batches: 50,
        }
    }
}

impl PathPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_step > 0.0) || !(self.step_floor > 0.0) || self.step_floor > self.base_step {
            return Err(NevError::Config("need 0 < step_floor <= base_step".into()));
        }
        if !(self.shrink > 0.0 && self.shrink <= 1.0) {
            return Err(NevError::Config("shrink must lie in (0, 1]".into()));
        }
        if self.max_steps == 0 {
            return Err(NevError::Config("max_steps must be positive".into()));
        }
        if self.batches < 2 || self.n_paths < 2 * self.batches {
            return Err(NevError::Config(format!(
                "need at least 2 batches and 2 paths per batch (n_paths = {}, batches = {})",
                self.n_paths, self.batches
            )));
        }
        if self.antithetic && (self.n_paths / self.batches) % 2 == 1 {
            return Err(NevError::Config("antithetic pairs must not straddle batches: use an even batch size".into()));
        }
        Ok(())
    }

    fn rng_for(&self, path: usize) -> (ChaCha8Rng, f64) {
        let (stream, sign) = if self.antithetic {
            ((path / 2) as u64, if path.is_multiple_of(2) { 1.0 } else { -1.0 })
        } else {
            (path as u64, 1.0)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        (rng, sign)
    }
}

/// Exit angle of Brownian motion started at the centre: uniform.
pub fn sample_exit_angle<R: Rng + ?Sized>(surface: &SurfaceModel, r: f64, rng: &mut R) -> Result<f64> {
    surface.euclidean_radius(r)?;
    Ok(rng.random::<f64>() * 2.0 * PI)
}

/// Mean with its standard error.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

impl McEstimate {
    /// `|self − value| ≤ k·stderr`.
    pub fn agrees_with(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// Aggregate of one path ensemble.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PathBatch {
    pub n_paths: usize,
    pub abandoned: usize,
    /// One estimate per functional, in input order.
    pub estimates: Vec<McEstimate>,
    /// Accumulated surface time `∫ h(Z_s) ds`.
    pub surface_time: McEstimate,
    pub mean_steps: f64,
    /// Largest `||Z_exit| − ρ_e| / ρ_e` over completed paths.
    pub max_exit_offset: f64,
    /// Exit angles in path order; abandoned paths are omitted.
    #[serde(skip)]
    pub exit_angles: Vec<f64>,
}

struct PathOutcome {
    values: Vec<f64>,
    clock: f64,
    steps: u64,
    exit: Complex64,
    abandoned: bool,
}

fn simulate(surface: &SurfaceModel, rho: f64, phis: &[Functional<'_>], policy: &PathPolicy, path: usize) -> Result<PathOutcome> {
    let (mut rng, sign) = policy.rng_for(path);
    let layer = (policy.step_floor / policy.shrink).sqrt();
    let domain = surface.profile.domain_radius().unwrap_or(f64::INFINITY);
    let weights = |z: Complex64, out: &mut Vec<f64>| -> Result<f64> {
        // overshoots are evaluated in place when the density extends there
        let z = if z.norm() < domain { z } else { z * (rho / z.norm()) };
        let h = surface.density(z.norm())?;
        out.clear();
        out.extend(phis.iter().map(|phi| phi(z) * h));
        Ok(h)
    };
    let mut z = Complex64::new(0.0, 0.0);
    let mut prev = Vec::with_capacity(phis.len());
    let mut cur = Vec::with_capacity(phis.len());
    let mut h_prev = weights(z, &mut prev)?;
    let mut acc = vec![0.0; phis.len()];
    let mut clock = 0.0;
    let mut steps = 0u64;
    loop {
        let d = rho - z.norm();
        if d <= layer {
            break;
        }
        if steps >= policy.max_steps {
            return Ok(PathOutcome { values: acc, clock, steps, exit: z, abandoned: true });
        }
        let dt = (policy.shrink * d * d).min(policy.base_step).max(policy.step_floor);
        let n1: f64 = rng.sample(StandardNormal);
        let n2: f64 = rng.sample(StandardNormal);
        z += sign * dt.sqrt() * Complex64::new(n1, n2);
        steps += 1;
        let h_cur = weights(z, &mut cur)?;
        for (a, (p, c)) in acc.iter_mut().zip(prev.iter().zip(cur.iter())) {
            *a += 0.5 * (p + c) * dt;
        }
        clock += 0.5 * (h_prev + h_cur) * dt;
        std::mem::swap(&mut prev, &mut cur);
        h_prev = h_cur;
    }
    // Remaining occupation from z near the rim point ξ: to first order in
    // ρ − |z| it is (ρ² − |z|²)/2 · E_q[w], where q(y) = 2P(y, ξ)/ρ is the
    // Poisson kernel at ξ normalised over the disc: |y| = ρ√U and arg y is
    // wrapped Cauchy about arg ξ with concentration |y|/ρ. Exact for w ≡ 1,
    // and negative after an overshoot.
    let rest = 0.5 * (rho * rho - z.norm_sqr());
    let c = rng.random::<f64>().sqrt();
    let spread = ((1.0 - c) / (1.0 + c)) * (PI * (rng.random::<f64>() - 0.5)).tan();
    let y = Complex64::from_polar(rho * c, z.arg() + 2.0 * spread.atan());
    let h_y = weights(y, &mut cur)?;
    for (a, w) in acc.iter_mut().zip(cur.iter()) {
        *a += w * rest;
    }
    clock += h_y * rest;
    Ok(PathOutcome { values: acc, clock, steps, exit: z, abandoned: false })
}

/// Batch-means estimate: contiguous batches of equal size (a remainder of
/// fewer than `batches` values joins the last batch).
pub fn batch_means(values: &[f64], batches: usize) -> McEstimate {
    let n = values.len();
    let mean = pairwise_sum(values) / n as f64;
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| {
            let lo = b * size;
            let hi = if b + 1 == batches { n } else { lo + size };
            pairwise_sum(&values[lo..hi]) / (hi - lo) as f64
        })
        .collect();
    let dev: Vec<f64> = means.iter().map(|m| (m - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (batches - 1) as f64;
    McEstimate { mean, stderr: (var / batches as f64).sqrt() }
}

/// Simulates one ensemble and estimates `E_o[∫_0^{τ_r} φ(X_t) dt]` for every
/// `φ` on the same paths.
pub fn occupation_estimates(surface: &SurfaceModel, phis: &[Functional<'_>], r: f64, policy: &PathPolicy) -> Result<PathBatch> {
    policy.validate()?;
    let rho = surface.euclidean_radius(r)?;
    let outcomes: Vec<PathOutcome> = (0..policy.n_paths)
        .into_par_iter()
        .map(|i| simulate(surface, rho, phis, policy, i))
        .collect::<Result<_>>()?;
    let done: Vec<&PathOutcome> = outcomes.iter().filter(|o| !o.abandoned).collect();
    let abandoned = outcomes.len() - done.len();
    if abandoned * 100 > policy.n_paths {
        return Err(NevError::Estimator(format!(
            "{abandoned} of {} paths exceeded {} steps",
            policy.n_paths, policy.max_steps
        )));
    }
    let batches = policy.batches.min(done.len() / 2).max(2);
    let estimates = (0..phis.len())
        .map(|j| {
            let v: Vec<f64> = done.iter().map(|o| o.values[j]).collect();
            batch_means(&v, batches)
        })
        .collect();
    let clocks: Vec<f64> = done.iter().map(|o| o.clock).collect();
    let steps: Vec<f64> = outcomes.iter().map(|o| o.steps as f64).collect();
    Ok(PathBatch {
        n_paths: policy.n_paths,
        abandoned,
        estimates,
        surface_time: batch_means(&clocks, batches),
        mean_steps: pairwise_sum(&steps) / steps.len() as f64,
        max_exit_offset: done.iter().map(|o| (o.exit.norm() - rho).abs() / rho).fold(0.0, f64::max),
        exit_angles: done.iter().map(|o| o.exit.arg().rem_euclid(2.0 * PI)).collect(),
    })
}

pub fn occupation_estimate(surface: &SurfaceModel, phi: Functional<'_>, r: f64, policy: &PathPolicy) -> Result<McEstimate> {
    Ok(occupation_estimates(surface, &[phi], r, policy)?.estimates[0])
}

/// Deterministic counterpart: `∫ g_r(o,z) φ(z) h(z) dA(z)` with
/// `g_r = (1/π) log(ρ_e/|z|)`.
pub fn occupation_quadrature(surface: &SurfaceModel, phi: Functional<'_>, r: f64, quad: &QuadSettings) -> Result<f64> {
    let rho = surface.euclidean_radius(r)?;
    let est = green_disc_integral(rho, |z| phi(z) * surface.density(z.norm()).unwrap_or(f64::NAN), quad)?;
    Ok(est.value / PI)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExitTimeReport {
    pub estimate: McEstimate,
    /// `r²/2`.
    pub bound: f64,
    /// `r²/2 − mean`.
    pub margin: f64,
}

/// `E_o[τ_r]` with the margin to `r²/2`.
pub fn exit_time_estimate(surface: &SurfaceModel, r: f64, policy: &PathPolicy) -> Result<ExitTimeReport> {
    let one = |_: Complex64| 1.0;
    let estimate = occupation_estimate(surface, &one, r, policy)?;
    let bound = 0.5 * r * r;
    Ok(ExitTimeReport { estimate, bound, margin: bound - estimate.mean })
}

/// `E_o[u(X_{τ_r})]` by exact exit sampling.
pub fn harmonic_expectation(surface: &SurfaceModel, u: Functional<'_>, r: f64, policy: &PathPolicy) -> Result<McEstimate> {
    policy.validate()?;
    let rho = surface.euclidean_radius(r)?;
    let values: Vec<f64> = (0..policy.n_paths)
        .into_par_iter()
        .map(|i| {
            let (mut rng, _) = policy.rng_for(i);
            let th = sample_exit_angle(surface, r, &mut rng)?;
            let th = if policy.antithetic && i % 2 == 1 { th + PI } else { th };
            Ok(u(Complex64::from_polar(rho, th)))
        })
        .collect::<Result<_>>()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(NevError::Estimator("boundary function is not finite at a sampled exit point".into()));
    }
    Ok(batch_means(&values, policy.batches))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct DynkinReport {
    pub exit_term: McEstimate,
    pub occupation_term: McEstimate,
    /// `E[u(X_τ)] − u(o) − ½ E[∫ Δ_S u(X_t) dt]`.
    pub residual: f64,
    pub combined_stderr: f64,
}

/// Dynkin check for `u` with Euclidean Laplacian `lap_euc`; the surface
/// Laplacian is `lap_euc / h`.
pub fn dynkin_residual(
    surface: &SurfaceModel,
    u: Functional<'_>,
    lap_euc: Functional<'_>,
    r: f64,
    policy: &PathPolicy,
) -> Result<DynkinReport> {
    let exit_term = harmonic_expectation(surface, u, r, policy)?;
    let lap_s = |z: Complex64| lap_euc(z) / surface.density(z.norm()).unwrap_or(f64::NAN);
    let occupation_term = occupation_estimate(surface, &lap_s, r, policy)?;
    let u0 = u(Complex64::new(0.0, 0.0));
    Ok(DynkinReport {
        exit_term,
        occupation_term,
        residual: exit_term.mean - u0 - 0.5 * occupation_term.mean,
        combined_stderr: (exit_term.stderr.powi(2) + 0.25 * occupation_term.stderr.powi(2)).sqrt(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct McNevanlinna {
    /// `π E_o[∫ (fs/h)(X_t) dt]`.
    pub t: McEstimate,
    /// `E_o[λ_D∘f(X_{τ_r})]`.
    pub m: McEstimate,
    /// Always true: the counting function comes from the quadrature engine.
    pub n_from_quadrature: bool,
}

pub fn mc_nevanlinna(curve: &ProjectiveCurve, spec: &WeilSpec, surface: &SurfaceModel, r: f64, policy: &PathPolicy) -> Result<McNevanlinna> {
    let weil = CurveWeil::new(spec, curve)?;
    let origin = Complex64::new(0.0, 0.0);
    if !weil.eval(origin)?.is_finite() {
        return Err(NevError::Precondition("f(0) lies on the support of the divisor".into()));
    }
    let phi = |z: Complex64| PI * curve.fs_density(z).unwrap_or(f64::NAN) / surface.density(z.norm()).unwrap_or(f64::NAN);
    let t = occupation_estimate(surface, &phi, r, policy)?;
    let lambda = |z: Complex64| weil.eval(z).unwrap_or(f64::NAN);
    let m = harmonic_expectation(surface, &lambda, r, policy)?;
    Ok(McNevanlinna { t, m, n_from_quadrature: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divisor::{DivisorSum, HomogeneousPoly, WeilNorm};
    use crate::exact::{ExactPoly, GaussRat};
    use crate::holo::HoloExpr;

    fn policy(n: usize, seed: u64) -> PathPolicy {
        PathPolicy { n_paths: n, seed, base_step: 2e-3, ..PathPolicy::default() }
    }

    #[test]
    fn exit_angles_are_uniform() {
        let e = SurfaceModel::euclidean();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut angles: Vec<f64> = (0..n).map(|_| sample_exit_angle(&e, 1.0, &mut rng).unwrap()).collect();
        let mean: Complex64 = angles.iter().map(|&t| Complex64::from_polar(1.0, t)).sum::<Complex64>() / n as f64;
        assert!(mean.norm() < 3.0 / (n as f64).sqrt());
        angles.sort_by(f64::total_cmp);
        let ks = angles
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let cdf = t / (2.0 * PI);
                (cdf - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 1.36 / (n as f64).sqrt(), "{ks}");
    }

    #[test]
    fn harmonic_expectation_of_radius_squared() {
        let p = SurfaceModel::poincare(1.0).unwrap();
        let u = |z: Complex64| z.norm_sqr();
        let est = harmonic_expectation(&p, &u, 2.0, &policy(1000, 1)).unwrap();
        let rho = 1f64.tanh();
        assert!((est.mean - rho * rho).abs() < 1e-14 && est.stderr < 1e-14);
    }

    #[test]
    fn euclidean_occupation_closed_forms() {
        let e = SurfaceModel::euclidean();
        let one = |_: Complex64| 1.0;
        let r2 = |z: Complex64| z.norm_sqr();
        let b = occupation_estimates(&e, &[&one, &r2], 1.0, &policy(20_000, 5)).unwrap();
        assert_eq!(b.abandoned, 0);
        assert!(b.estimates[0].agrees_with(0.5, 3.0), "{:?}", b.estimates[0]);
        assert!(b.estimates[1].agrees_with(0.125, 3.0), "{:?}", b.estimates[1]);
        assert_eq!(b.surface_time, b.estimates[0]);
        assert!(b.max_exit_offset <= 6.0 * 2e-3f64.sqrt(), "{}", b.max_exit_offset);
    }

    #[test]
    fn poincare_exit_time_below_bound() {
        let p = SurfaceModel::poincare(1.0).unwrap();
        let rep = exit_time_estimate(&p, 1.0, &policy(20_000, 2)).unwrap();
        assert!(rep.margin > 0.0);
        let one = |_: Complex64| 1.0;
        let oracle = occupation_quadrature(&p, &one, 1.0, &QuadSettings::default()).unwrap();
        assert!(rep.estimate.agrees_with(oracle, 3.0), "{:?} vs {oracle}", rep.estimate);
    }

    #[test]
    fn estimates_do_not_depend_on_thread_count() {
        let p = SurfaceModel::poincare(1.0).unwrap();
        let r2 = |z: Complex64| z.norm_sqr();
        let pol = PathPolicy { antithetic: true, ..policy(2_000, 9) };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| occupation_estimates(&p, &[&r2], 0.8, &pol).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.estimates[0].mean.to_bits(), b.estimates[0].mean.to_bits());
        assert_eq!(a.exit_angles, b.exit_angles);
    }

    #[test]
    fn dynkin_residuals_vanish() {
        let e = SurfaceModel::euclidean();
        let u = |z: Complex64| z.norm_sqr();
        let lap = |_: Complex64| 4.0;
        let d = dynkin_residual(&e, &u, &lap, 1.5, &policy(10_000, 4)).unwrap();
        assert!(d.residual.abs() <= 3.0 * d.combined_stderr, "{d:?}");

        let re = |z: Complex64| z.re;
        let zero = |_: Complex64| 0.0;
        let d = dynkin_residual(&e, &re, &zero, 1.0, &PathPolicy { antithetic: true, ..policy(2_000, 4) }).unwrap();
        assert!(d.residual.abs() < 1e-12);

        let p = SurfaceModel::poincare(1.0).unwrap();
        let lg = |z: Complex64| z.norm_sqr().ln_1p();
        let lap = |z: Complex64| 4.0 / (1.0 + z.norm_sqr()).powi(2);
        let d = dynkin_residual(&p, &lg, &lap, 1.5, &policy(20_000, 8)).unwrap();
        assert!(d.residual.abs() <= 3.0 * d.combined_stderr, "{d:?}");
    }

    #[test]
    fn abandonment_is_loud() {
        let e = SurfaceModel::euclidean();
        let one = |_: Complex64| 1.0;
        let pol = PathPolicy { max_steps: 10, ..policy(200, 1) };
        assert!(matches!(occupation_estimate(&e, &one, 1.0, &pol), Err(NevError::Estimator(_))));
    }

    #[test]
    fn mc_nevanlinna_matches_closed_forms() {
        let e = SurfaceModel::euclidean();
        let c = |v| GaussRat::from_int(v);
        let line = ProjectiveCurve::new(vec![HoloExpr::one(), HoloExpr::z()]).unwrap();
        let spec0 = WeilSpec::new(DivisorSum::single(HomogeneousPoly::coordinate(1, 0)), WeilNorm::Euclidean);
        let mc = mc_nevanlinna(&line, &spec0, &e, 1.0, &policy(20_000, 6)).unwrap();
        assert!(mc.t.agrees_with(2f64.sqrt().ln(), 3.0), "{:?}", mc.t);

        let exp = ProjectiveCurve::new(vec![HoloExpr::one(), HoloExpr::exp_poly(ExactPoly::new(vec![c(0), c(1)]))]).unwrap();
        let spec1 = WeilSpec::new(DivisorSum::single(HomogeneousPoly::coordinate(1, 1)), WeilNorm::Max);
        let mc = mc_nevanlinna(&exp, &spec1, &e, PI, &PathPolicy { base_step: 0.05, ..policy(20_000, 6) }).unwrap();
        assert!(mc.m.agrees_with(1.0, 3.0), "{:?}", mc.m);

        let spec_bad = WeilSpec::new(DivisorSum::single(HomogeneousPoly::coordinate(1, 1)), WeilNorm::Max);
        assert!(matches!(mc_nevanlinna(&line, &spec_bad, &e, 1.0, &policy(200, 1)), Err(NevError::Precondition(_))));
    }

    #[test]
    fn policy_validation() {
        assert!(PathPolicy::default().validate().is_ok());
        assert!(PathPolicy { base_step: 0.0, ..PathPolicy::default() }.validate().is_err());
        assert!(PathPolicy { n_paths: 10, ..PathPolicy::default() }.validate().is_err());
        let toml_like: PathPolicy = serde_json::from_str(r#"{"seed": 4, "n_paths": 1000}"#).unwrap();
        assert_eq!(toml_like.seed, 4);
        assert!(serde_json::from_str::<PathPolicy>(r#"{"seeds": 4}"#).is_err());
    }
}
