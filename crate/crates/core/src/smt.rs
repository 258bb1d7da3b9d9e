//! Second-main-theorem style harnesses: each one evaluates both sides of an
//! inequality on a radius grid and records the per-radius decomposition,
//! margins against declared slack, and exceptional-set flags from the Borel
//! growth lemma.

use std::collections::BTreeMap;
use std::f64::consts::{E, PI};
use std::sync::atomic::{AtomicBool, Ordering};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divisor::{general_position_check, CurveWeil, DivisorSum, HomogeneousPoly, WeilNorm, WeilSpec};
use crate::error::{NevError, Result};
use crate::exact::{rank, GaussRat};
use crate::holo::{linear_independence, wronskian, HoloExpr, MeromorphicFn, ProjectiveCurve, VectorField};
use crate::nevanlinna::{
    boundary_zeros, characteristic_t, classic_t, proximity_m, singular_circle_mean, RGrid,
};
use crate::quad::{QuadEstimate, QuadSettings};
use crate::stochastic::{harmonic_expectation, occupation_estimates, occupation_quadrature, Functional, PathPolicy};
use crate::surface::SurfaceModel;

/// Largest number of sections accepted by the subset enumeration.
pub const MAX_SECTIONS: usize = 12;
/// Largest projective dimension accepted by the subset enumeration.
pub const MAX_DIMENSION: usize = 5;

fn log_plus(x: f64) -> f64 {
    if x > 1.0 {
        x.ln()
    } else {
        0.0
    }
}

/// `log⁺ log r`.
pub fn loglog_plus(r: f64) -> f64 {
    log_plus(log_plus(r))
}

/// `max(0, −κ(r))·r²`.
pub fn curvature_term(surface: &SurfaceModel, r: f64) -> Result<f64> {
    Ok((-surface.kappa(r)?).max(0.0) * r * r)
}

/// One radius of an inequality trace.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TraceRow {
    pub r: f64,
    /// The growth quantity used for flags (a characteristic, or `k̂`).
    pub t: f64,
    pub lhs: f64,
    /// Main term of the right-hand side.
    pub main: f64,
    pub log_t: f64,
    /// `|κ(r)|·r²`.
    pub curvature: f64,
    /// `log⁺ log r`.
    pub loglog: f64,
    /// Error form added to `main`, with unit constants unless noted by the harness.
    pub error: f64,
    pub rhs: f64,
    /// `main − lhs`.
    pub margin: f64,
    /// `rhs − lhs`.
    pub rhs_margin: f64,
    /// Declared allowance; a row passes when `rhs_margin + slack ≥ 0`.
    pub slack: f64,
    pub ratio: Option<f64>,
    pub flag: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, f64>,
}

impl TraceRow {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(surface: &SurfaceModel, r: f64, t: f64, lhs: f64, main: f64, error: f64, slack: f64) -> Result<Self> {
        let rhs = main + error;
        Ok(Self {
            r,
            t,
            lhs,
            main,
            log_t: log_plus(t),
            curvature: curvature_term(surface, r)?,
            loglog: loglog_plus(r),
            error,
            rhs,
            margin: main - lhs,
            rhs_margin: rhs - lhs,
            slack,
            ratio: None,
            flag: None,
            extra: BTreeMap::new(),
        })
    }

    pub fn passes(&self) -> bool {
        self.rhs_margin + self.slack >= 0.0
    }

    fn add_flag(&mut self, reason: String) {
        self.flag = Some(match self.flag.take() {
            Some(prev) => format!("{prev}; {reason}"),
            None => reason,
        });
    }
}

/// Both sides of an inequality on a radius grid.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct InequalityTrace {
    pub kind: String,
    pub delta: f64,
    pub rows: Vec<TraceRow>,
    pub borel: Option<BorelReport>,
    pub notes: Vec<String>,
}

impl InequalityTrace {
    pub fn unflagged(&self) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(|r| r.flag.is_none())
    }

    /// Unflagged rows with `rhs_margin + slack < 0`.
    pub fn violations(&self) -> Vec<&TraceRow> {
        self.unflagged().filter(|r| !r.passes()).collect()
    }

    pub fn max_unflagged_ratio(&self) -> Option<f64> {
        self.unflagged().filter_map(|r| r.ratio).reduce(f64::max)
    }

    pub fn min_unflagged_rhs_margin(&self) -> Option<f64> {
        self.unflagged().map(|r| r.rhs_margin).reduce(f64::min)
    }

    /// Total length of the intervals flagged by the Borel test.
    pub fn borel_measure(&self) -> f64 {
        self.borel.as_ref().map_or(0.0, |b| b.measure)
    }

    /// CSV with one line per radius; extra columns follow in key order.
    pub fn to_csv(&self) -> String {
        let keys: Vec<&String> = {
            let mut k: Vec<&String> = self.rows.iter().flat_map(|r| r.extra.keys()).collect();
            k.sort();
            k.dedup();
            k
        };
        let mut out = String::from("r,t,lhs,main,log_t,curvature,loglog,error,rhs,margin,rhs_margin,slack,ratio,flagged");
        for k in &keys {
            out.push(',');
            out.push_str(k);
        }
        out.push('\n');
        for row in &self.rows {
            let ratio = row.ratio.map(|v| format!("{v:e}")).unwrap_or_default();
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
                row.r,
                row.t,
                row.lhs,
                row.main,
                row.log_t,
                row.curvature,
                row.loglog,
                row.error,
                row.rhs,
                row.margin,
                row.rhs_margin,
                row.slack,
                ratio,
                u8::from(row.flag.is_some())
            ));
            for k in &keys {
                out.push(',');
                if let Some(v) = row.extra.get(*k) {
                    out.push_str(&format!("{v:e}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Exceptional set of the growth lemma `T' ≤ T·log^{1+δ}T`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BorelReport {
    pub delta: f64,
    /// Merged grid intervals on which the difference quotient exceeds the bound.
    pub intervals: Vec<(f64, f64)>,
    pub measure: f64,
    /// `c_φ = ∫_e^∞ dt/(t log^{1+δ}t) = 1/δ`.
    pub bound: f64,
    /// Largest grid spacing.
    pub resolution: f64,
    /// Intervals with `T < e`, where the lemma says nothing; not counted in `measure`.
    pub below_e: Vec<(f64, f64)>,
}

impl BorelReport {
    pub fn within_bound(&self) -> bool {
        self.measure <= self.bound + self.resolution
    }

    pub fn contains(&self, r: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| a <= r && r <= b)
    }
}

/// Flags grid intervals `[r_i, r_{i+1}]` whose difference quotient exceeds
/// `T(r_i)·log^{1+δ}T(r_i)`. Intervals starting below `T = e` are listed
/// separately.
pub fn borel_exceptional(samples: &[(f64, f64)], delta: f64) -> Result<BorelReport> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(NevError::Config(format!("δ must be positive, got {delta}")));
    }
    if samples.len() < 2 {
        return Err(NevError::Data("the growth test needs at least two samples".into()));
    }
    for w in samples.windows(2) {
        let ((r0, t0), (r1, t1)) = (w[0], w[1]);
        if !(r1 > r0) {
            return Err(NevError::Data(format!("radii must increase strictly ({r0} then {r1})")));
        }
        if t1 < t0 - 1e-9 * t0.abs().max(1.0) {
            return Err(NevError::Data(format!("samples decrease from {t0} at r = {r0} to {t1} at r = {r1}")));
        }
    }
    if let Some(&(r, t)) = samples.iter().find(|(r, t)| !(*t > 0.0) || !t.is_finite() || !r.is_finite()) {
        return Err(NevError::Data(format!("sample T({r}) = {t} is not positive and finite")));
    }
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut below_e: Vec<(f64, f64)> = Vec::new();
    let mut resolution: f64 = 0.0;
    for w in samples.windows(2) {
        let ((r0, t0), (r1, t1)) = (w[0], w[1]);
        resolution = resolution.max(r1 - r0);
        if t0 < E {
            push_merged(&mut below_e, (r0, r1));
            continue;
        }
        let quotient = (t1 - t0).max(0.0) / (r1 - r0);
        if quotient > t0 * t0.ln().powf(1.0 + delta) {
            push_merged(&mut intervals, (r0, r1));
        }
    }
    let measure = intervals.iter().fold(0.0, |acc, (a, b)| acc + (b - a));
    Ok(BorelReport { delta, intervals, measure, bound: 1.0 / delta, resolution, below_e })
}

fn push_merged(list: &mut Vec<(f64, f64)>, iv: (f64, f64)) {
    match list.last_mut() {
        Some(last) if last.1 >= iv.0 => last.1 = last.1.max(iv.1),
        _ => list.push(iv),
    }
}

/// Flags rows with `T < e`, rows inside Borel intervals and rows with a
/// non-finite margin.
pub(crate) fn apply_flags(rows: &mut [TraceRow], delta: f64) -> Result<Option<BorelReport>> {
    for row in rows.iter_mut() {
        if !(row.t >= E) {
            row.add_flag(format!("T = {:.4} < e: growth lemma out of range", row.t));
        }
    }
    let samples: Vec<(f64, f64)> = rows.iter().filter(|r| r.t >= E).map(|r| (r.r, r.t)).collect();
    let borel = if samples.len() >= 2 { Some(borel_exceptional(&samples, delta)?) } else { None };
    for row in rows.iter_mut() {
        if let Some(b) = &borel {
            if row.t >= E && b.contains(row.r) {
                row.add_flag("Borel exceptional interval".into());
            }
        }
        if !row.rhs_margin.is_finite() {
            row.add_flag("non-finite margin".into());
        }
    }
    Ok(borel)
}

fn grid_rows<F>(grid: &RGrid, f: F) -> Result<Vec<TraceRow>>
where
    F: Fn(f64) -> Result<TraceRow> + Sync,
{
    grid.radii().par_iter().map(|&r| f(r)).collect()
}

fn check_nonconstant(psi: &MeromorphicFn, k: usize) -> Result<()> {
    if psi.is_constant() {
        return Err(NevError::Precondition("ψ must be nonconstant".into()));
    }
    if k == 0 {
        return Err(NevError::Config("derivative order k must be at least 1".into()));
    }
    Ok(())
}

/// `m(r, 𝔛^k(ψ)/ψ)`: boundary mean of `log⁺|𝔛^kψ/ψ|`.
pub fn log_derivative_m(
    psi: &MeromorphicFn,
    field: &VectorField,
    k: usize,
    surface: &SurfaceModel,
    r: f64,
    quad: &QuadSettings,
) -> Result<f64> {
    check_nonconstant(psi, k)?;
    let d = psi.xderive(field, k);
    // 𝔛^kψ/ψ = (A/B)/(N/D) = (A·D)/(B·N)
    let num = d.num() * psi.den();
    let den = d.den() * psi.num();
    if num.is_zero() {
        return Ok(0.0);
    }
    let ratio = MeromorphicFn::new(num, den)?;
    if ratio.is_constant() {
        let v = ratio.eval_scaled(Complex64::new(0.5, 0.25))?;
        return Ok(v.log.max(0.0));
    }
    let curve = ratio.as_curve()?;
    let spec = WeilSpec::new(DivisorSum::single(HomogeneousPoly::coordinate(1, 0)), WeilNorm::Max);
    let weil = CurveWeil::new(&spec, &curve)?;
    Ok(proximity_m(&weil, surface, r, quad)?.value)
}

/// Logarithmic derivative lemma trace. The ratio is
/// `LHS / [(3k/2)log T + |κ|r² + log⁺log r + 1]` and a row passes when it is
/// at most 1.1; `extra.log_t_ratio` is `LHS / log T`.
pub fn ldl_report(
    psi: &MeromorphicFn,
    field: &VectorField,
    k: usize,
    surface: &SurfaceModel,
    grid: &RGrid,
    delta: f64,
) -> Result<InequalityTrace> {
    check_nonconstant(psi, k)?;
    grid.check_reachable(surface)?;
    let kf = k as f64;
    let mut rows = grid_rows(grid, |r| {
        let t = classic_t(psi, surface, r, &grid.quad)?.t;
        let lhs = log_derivative_m(psi, field, k, surface, r, &grid.quad)?;
        let main = 1.5 * kf * log_plus(t);
        let error = curvature_term(surface, r)? + loglog_plus(r) + 1.0;
        let denom = main + error;
        let mut row = TraceRow::new(surface, r, t, lhs, main, error, 0.1 * denom)?;
        row.ratio = Some(lhs / denom);
        if t > 1.0 {
            row.extra.insert("log_t_ratio".into(), lhs / t.ln());
        }
        Ok(row)
    })?;
    let borel = apply_flags(&mut rows, delta)?;
    Ok(InequalityTrace {
        kind: "ldl".into(),
        delta,
        rows,
        borel,
        notes: vec![format!("k = {k}; T is m(r,ψ) + N(r,ψ); slack is 0.1 of the denominator")],
    })
}

/// `T(r, 𝔛^kψ) ≤ 2^k T(r,ψ) + log⁺T + |κ|r² + log⁺log r`, slack 10.
pub fn derivative_growth_check(
    psi: &MeromorphicFn,
    field: &VectorField,
    k: usize,
    surface: &SurfaceModel,
    grid: &RGrid,
    delta: f64,
) -> Result<InequalityTrace> {
    check_nonconstant(psi, k)?;
    grid.check_reachable(surface)?;
    let d = psi.xderive(field, k);
    let scale = 2f64.powi(k as i32);
    let mut rows = grid_rows(grid, |r| {
        let t = classic_t(psi, surface, r, &grid.quad)?.t;
        let lhs = classic_t(&d, surface, r, &grid.quad)?.t;
        let error = log_plus(t) + curvature_term(surface, r)? + loglog_plus(r);
        let mut row = TraceRow::new(surface, r, t, lhs, scale * t, error, 10.0)?;
        row.ratio = (t > 0.0).then(|| lhs / (scale * t));
        Ok(row)
    })?;
    let borel = apply_flags(&mut rows, delta)?;
    Ok(InequalityTrace {
        kind: "derivative-growth".into(),
        delta,
        rows,
        borel,
        notes: vec![format!("k = {k}; slack 10")],
    })
}

/// Constant of the calculus lemma; existential, fixed to 1 here.
pub const CALCULUS_C: f64 = 1.0;

/// `F(k̂, κ, δ) = {log⁺k̂ · log⁺(r e^{r√−κ} k̂ (log⁺k̂)^{1+δ})}^{1+δ}`.
pub fn calculus_f(khat: f64, r: f64, kappa: f64, delta: f64) -> f64 {
    let lp = log_plus(khat);
    let growth = (r * (-kappa).max(0.0).sqrt()).exp();
    let inner = r * growth * khat * lp.powf(1.0 + delta);
    (lp * log_plus(inner)).powf(1.0 + delta)
}

/// Calculus lemma trace.
///
/// `lhs = E[k(X_τ)]` (boundary quadrature), `occupation = E[∫k]` (Green
/// quadrature), `t = k̂ = log r · occupation / C`. The main term is the
/// literal right-hand side with `C = 1`; `ratio` divides by
/// `occupation·e^{r√−κ}·log r·(1+F)` and `extra.plain_ratio` drops the
/// `(1+F)` factor. Rows with `r ≤ 1` are flagged. With a policy, Monte Carlo
/// estimates of both expectations are added as extra columns.
pub fn calculus_lemma_report(
    surface: &SurfaceModel,
    kfun: Functional<'_>,
    grid: &RGrid,
    delta: f64,
    mc: Option<&PathPolicy>,
) -> Result<InequalityTrace> {
    if !(delta > 0.0) {
        return Err(NevError::Config(format!("δ must be positive, got {delta}")));
    }
    grid.check_reachable(surface)?;
    let k0 = kfun(Complex64::new(0.0, 0.0));
    if !k0.is_finite() || k0 < 0.0 {
        return Err(NevError::Precondition(format!(
            "k must be non-negative and bounded at the origin (k(0) = {k0})"
        )));
    }
    let negative = AtomicBool::new(false);
    let checked = |z: Complex64| {
        let v = kfun(z);
        if v < 0.0 {
            negative.store(true, Ordering::Relaxed);
        }
        v
    };
    let mut rows = grid_rows(grid, |r| {
        let rho = surface.euclidean_radius(r)?;
        let lhs = crate::quad::circle_mean(
            |th| checked(Complex64::from_polar(rho, th)),
            grid.quad.boundary_nodes_min,
            grid.quad.boundary_nodes_max,
            grid.quad.boundary_tol,
            0.0,
            false,
        )
        .map_err(|e| NevError::Numerical(format!("boundary mean of k at r = {r}: {e}")))?
        .value;
        let occ = occupation_quadrature(surface, &checked, r, &grid.quad)
            .map_err(|e| NevError::Numerical(format!("occupation integral of k at r = {r} (non-integrable k?): {e}")))?;
        let kappa = surface.kappa(r)?;
        let growth = (r * (-kappa).max(0.0).sqrt()).exp();
        let log_r = r.ln();
        let khat = log_r / CALCULUS_C * occ;
        let f = calculus_f(khat, r, kappa, delta);
        let main = f * growth * log_r / (2.0 * PI * CALCULUS_C) * occ;
        let mut row = TraceRow::new(surface, r, khat, lhs, main, 0.0, 0.0)?;
        let base = occ * growth * log_r;
        if base > 0.0 {
            row.ratio = Some(lhs / (base * (1.0 + f)));
            row.extra.insert("plain_ratio".into(), lhs / base);
        }
        row.extra.insert("occupation".into(), occ);
        row.extra.insert("f".into(), f);
        row.extra.insert("exp_factor".into(), growth);
        if let Some(policy) = mc {
            let batch = occupation_estimates(surface, &[kfun], r, policy)?;
            let boundary = harmonic_expectation(surface, kfun, r, policy)?;
            row.extra.insert("mc_occupation".into(), batch.estimates[0].mean);
            row.extra.insert("mc_occupation_stderr".into(), batch.estimates[0].stderr);
            row.extra.insert("mc_boundary".into(), boundary.mean);
            row.extra.insert("mc_boundary_stderr".into(), boundary.stderr);
        }
        if r <= 1.0 {
            row.add_flag("log r ≤ 0".into());
        }
        Ok(row)
    })?;
    if negative.load(Ordering::Relaxed) {
        return Err(NevError::Precondition("k takes negative values".into()));
    }
    let borel = apply_flags(&mut rows, delta)?;
    Ok(InequalityTrace {
        kind: "calculus".into(),
        delta,
        rows,
        borel,
        notes: vec![format!("C = {CALCULUS_C}; flags use k̂ as the growth quantity")],
    })
}

/// Coefficient rows of a family of forms of equal degree over the union of
/// their monomials.
fn coefficient_rows(sections: &[HomogeneousPoly]) -> Vec<Vec<GaussRat>> {
    let mut keys: Vec<&Vec<u32>> = sections.iter().flat_map(|s| s.terms().keys()).collect();
    keys.sort();
    keys.dedup();
    sections
        .iter()
        .map(|s| keys.iter().map(|k| s.terms().get(*k).cloned().unwrap_or_else(|| GaussRat::from_int(0))).collect())
        .collect()
}

/// Maximal linearly independent subsets (bases of the span), as index lists
/// in lexicographic order.
pub fn maximal_independent_subsets(sections: &[HomogeneousPoly]) -> Result<Vec<Vec<usize>>> {
    let q = sections.len();
    if q == 0 {
        return Err(NevError::Config("no sections given".into()));
    }
    if q > MAX_SECTIONS {
        return Err(NevError::Config(format!("{q} sections exceed the enumeration cap of {MAX_SECTIONS}")));
    }
    let n = sections[0].n();
    if n > MAX_DIMENSION {
        return Err(NevError::Config(format!("P^{n} exceeds the enumeration cap of P^{MAX_DIMENSION}")));
    }
    let d = sections[0].degree();
    if sections.iter().any(|s| s.n() != n || s.degree() != d) {
        return Err(NevError::Config("sections must be forms of one degree on one projective space".into()));
    }
    let rows = coefficient_rows(sections);
    if rows.iter().any(|r| r.iter().all(|c| *c == GaussRat::from_int(0))) {
        return Err(NevError::Config("sections must be nonzero".into()));
    }
    let full = rank(&rows);
    let mut out = Vec::new();
    for mask in 1u32..(1 << q) {
        if mask.count_ones() as usize != full {
            continue;
        }
        let idx: Vec<usize> = (0..q).filter(|i| mask & (1 << i) != 0).collect();
        let sub: Vec<Vec<GaussRat>> = idx.iter().map(|&i| rows[i].clone()).collect();
        if rank(&sub) == full {
            out.push(idx);
        }
    }
    out.sort();
    Ok(out)
}

/// `∫ max_Q Σ_{k∈Q} λ_{s_k}∘f dπ` over the circle of radius `r`, with `Q`
/// ranging over maximal independent subsets of the sections.
pub fn max_sum_weil_boundary(
    curve: &ProjectiveCurve,
    sections: &[HomogeneousPoly],
    norm: WeilNorm,
    surface: &SurfaceModel,
    r: f64,
    quad: &QuadSettings,
) -> Result<QuadEstimate> {
    let bases = maximal_independent_subsets(sections)?;
    if sections[0].n() != curve.n() {
        return Err(NevError::Config(format!("sections live on P^{} but the curve on P^{}", sections[0].n(), curve.n())));
    }
    let weils: Vec<CurveWeil> = sections
        .iter()
        .map(|s| CurveWeil::new(&WeilSpec::new(DivisorSum::single(s.clone()), norm), curve))
        .collect::<Result<_>>()?;
    let rho = surface.euclidean_radius(r)?;
    let eval = |z: Complex64| {
        let vals: Vec<f64> = weils.iter().map(|w| w.eval(z).unwrap_or(f64::NAN)).collect();
        bases
            .iter()
            .map(|b| b.iter().map(|&i| vals[i]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    };
    singular_circle_mean(eval, || boundary_zeros(weils.iter().flat_map(|w| w.compositions()), rho), rho, quad).map_err(
        |e| match e {
            NevError::Numerical(msg) => NevError::Numerical(format!("max-sum quadrature at r = {r}: {msg}")),
            other => other,
        },
    )
}

fn require_nondegenerate(curve: &ProjectiveCurve) -> Result<()> {
    let ind = linear_independence(curve.components());
    if !ind.independent {
        return Err(NevError::Precondition(format!(
            "curve {curve} is linearly degenerate: its Wronskian vanishes identically ({})",
            if ind.exact { "exact normal form" } else { "16 random points" }
        )));
    }
    Ok(())
}

/// Cartan-type bound `max-sum ≤ (n+1)T_f + log⁺T_f + |κ|r² + log⁺log r`.
/// Slack per row is `0.5·log⁺T + 10`.
pub fn cartan_smt_report(
    curve: &ProjectiveCurve,
    hyperplanes: &[HomogeneousPoly],
    norm: WeilNorm,
    surface: &SurfaceModel,
    grid: &RGrid,
    delta: f64,
) -> Result<InequalityTrace> {
    require_nondegenerate(curve)?;
    let n = curve.n();
    if !general_position_check(hyperplanes, n)? {
        return Err(NevError::Precondition("hyperplanes are not in general position".into()));
    }
    grid.check_reachable(surface)?;
    let mut rows = grid_rows(grid, |r| {
        let t = characteristic_t(curve, 1, surface, r, &grid.quad)?.value;
        let lhs = max_sum_weil_boundary(curve, hyperplanes, norm, surface, r, &grid.quad)?.value;
        let error = log_plus(t) + curvature_term(surface, r)? + loglog_plus(r);
        let mut row = TraceRow::new(surface, r, t, lhs, (n + 1) as f64 * t, error, 0.5 * log_plus(t) + 10.0)?;
        row.ratio = (t > 0.0).then(|| lhs / ((n + 1) as f64 * t));
        Ok(row)
    })?;
    let borel = apply_flags(&mut rows, delta)?;
    Ok(InequalityTrace {
        kind: "cartan".into(),
        delta,
        rows,
        borel,
        notes: vec![format!("{} hyperplanes in P^{n}, {norm:?} norm; slack 0.5 log T + 10", hyperplanes.len())],
    })
}

/// `m(r, Δ_𝔛(H_k∘f, k ∈ Q))` for `n+1` hyperplanes. The logarithmic
/// Wronskian is scale invariant in each argument, so normalising the forms
/// changes nothing; it is formed symbolically as `W / Π H_k∘f`.
pub fn log_wronskian_proximity(
    curve: &ProjectiveCurve,
    hyperplanes: &[HomogeneousPoly],
    field: &VectorField,
    surface: &SurfaceModel,
    r: f64,
    quad: &QuadSettings,
) -> Result<f64> {
    let n = curve.n();
    if hyperplanes.len() != n + 1 {
        return Err(NevError::Config(format!("{} hyperplanes given, {} needed", hyperplanes.len(), n + 1)));
    }
    let comps: Vec<HoloExpr> = hyperplanes.iter().map(|h| h.compose(curve.components())).collect::<Result<_>>()?;
    if let Some(i) = comps.iter().position(HoloExpr::is_zero) {
        return Err(NevError::Precondition(format!("{}∘f vanishes identically", hyperplanes[i])));
    }
    let w = wronskian(&comps, field);
    if w.is_zero() {
        return Ok(0.0);
    }
    let prod = comps.iter().skip(1).fold(comps[0].clone(), |acc, c| &acc * c);
    let delta = MeromorphicFn::new(w, prod)?;
    if delta.is_constant() {
        return Ok(delta.eval_scaled(Complex64::new(0.5, 0.25))?.log.max(0.0));
    }
    let spec = WeilSpec::new(DivisorSum::single(HomogeneousPoly::coordinate(1, 0)), WeilNorm::Max);
    let weil = CurveWeil::new(&spec, &delta.as_curve()?)?;
    Ok(proximity_m(&weil, surface, r, quad)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::ExactPoly;
    use crate::nevanlinna::proximity_m;

    fn c(v: i64) -> GaussRat {
        GaussRat::from_int(v)
    }

    fn poly(cs: &[i64]) -> ExactPoly {
        ExactPoly::new(cs.iter().map(|&v| c(v)).collect())
    }

    fn exp_of(cs: &[i64]) -> HoloExpr {
        HoloExpr::exp_poly(poly(cs))
    }

    fn quad() -> QuadSettings {
        QuadSettings::default()
    }

    fn lin(cs: &[i64]) -> HomogeneousPoly {
        HomogeneousPoly::linear(cs.iter().map(|&v| c(v)).collect()).unwrap()
    }

    fn cartan_curve() -> ProjectiveCurve {
        ProjectiveCurve::new(vec![HoloExpr::one(), exp_of(&[0, 1]), exp_of(&[0, 2])]).unwrap()
    }

    #[test]
    fn borel_linear_growth_has_no_exceptional_set() {
        let samples: Vec<(f64, f64)> = (1..=2000).map(|i| (i as f64 * 0.5, i as f64 * 0.5)).collect();
        let rep = borel_exceptional(&samples, 0.1).unwrap();
        assert!(rep.intervals.is_empty());
        assert_eq!(rep.measure, 0.0);
        assert!((rep.bound - 10.0).abs() < 1e-12);
        assert!(!rep.below_e.is_empty());
    }

    #[test]
    fn borel_bound_for_delta_one() {
        let rep = borel_exceptional(&[(1.0, 3.0), (2.0, 4.0)], 1.0).unwrap();
        assert_eq!(rep.bound, 1.0);
    }

    #[test]
    fn borel_double_exponential_and_jump() {
        let samples: Vec<(f64, f64)> = (0..=500).map(|i| 1.0 + i as f64 * 0.01).map(|r| (r, r.exp().exp())).collect();
        let rep = borel_exceptional(&samples, 0.5).unwrap();
        assert!(rep.measure <= rep.bound + rep.resolution);
        // a jump of size 1000 over a short interval genuinely violates the bound
        let mut jump: Vec<(f64, f64)> = (1..=100).map(|i| (i as f64, i as f64 + 3.0)).collect();
        jump.insert(50, (50.5, 53.6));
        for s in jump.iter_mut().skip(51) {
            s.1 += 1000.0;
        }
        let rep = borel_exceptional(&jump, 0.1).unwrap();
        assert_eq!(rep.intervals, vec![(50.5, 51.0)]);
        assert!((rep.measure - 0.5).abs() < 1e-12);
        assert!(rep.within_bound());
    }

    #[test]
    fn borel_rejects_bad_input() {
        assert!(matches!(borel_exceptional(&[(1.0, 5.0), (2.0, 4.0)], 0.1), Err(NevError::Data(_))));
        assert!(matches!(borel_exceptional(&[(2.0, 5.0), (1.0, 6.0)], 0.1), Err(NevError::Data(_))));
        assert!(matches!(borel_exceptional(&[(1.0, 0.0), (2.0, 6.0)], 0.1), Err(NevError::Data(_))));
        assert!(matches!(borel_exceptional(&[(1.0, 5.0), (2.0, 6.0)], 0.0), Err(NevError::Config(_))));
    }

    #[test]
    fn log_derivative_closed_forms() {
        let s = SurfaceModel::euclidean();
        let f = VectorField::standard();
        let ez = MeromorphicFn::from_holo(exp_of(&[0, 1]));
        assert_eq!(log_derivative_m(&ez, &f, 1, &s, 7.0, &quad()).unwrap(), 0.0);
        assert_eq!(log_derivative_m(&ez, &f, 3, &s, 7.0, &quad()).unwrap(), 0.0);
        let ez2 = MeromorphicFn::from_holo(exp_of(&[0, 0, 1]));
        for r in [1.0, 3.0, 10.0] {
            let m = log_derivative_m(&ez2, &f, 1, &s, r, &quad()).unwrap();
            assert!((m - (2.0 * r).ln()).abs() < 1e-7, "{r}: {m}");
        }
        let z = MeromorphicFn::from_holo(HoloExpr::z());
        assert!(log_derivative_m(&z, &f, 1, &s, 2.0, &quad()).unwrap().abs() < 1e-7);
        let m_half = log_derivative_m(&z, &f, 1, &s, 0.5, &quad()).unwrap();
        assert!((m_half - 2f64.ln()).abs() < 1e-7);
        let konst = MeromorphicFn::from_holo(HoloExpr::one());
        assert!(matches!(log_derivative_m(&konst, &f, 1, &s, 2.0, &quad()), Err(NevError::Precondition(_))));
        assert!(log_derivative_m(&z, &f, 0, &s, 2.0, &quad()).is_err());
    }

    #[test]
    fn ldl_trace_for_gaussian_exponential() {
        let s = SurfaceModel::euclidean();
        let psi = MeromorphicFn::from_holo(exp_of(&[0, 0, 1]));
        let grid = RGrid::log_spaced(5.0, 40.0, 6, quad()).unwrap();
        let tr = ldl_report(&psi, &VectorField::standard(), 1, &s, &grid, 0.1).unwrap();
        for row in &tr.rows {
            // T(r, e^{z²}) = r²/π exactly
            assert!((row.t - row.r * row.r / PI).abs() < 1e-6 * row.t, "{row:?}");
            assert!((row.lhs - (2.0 * row.r).ln()).abs() < 1e-7);
        }
        assert!(tr.unflagged().count() == 6);
        assert!(tr.max_unflagged_ratio().unwrap() <= 1.1);
        assert!(tr.violations().is_empty());
        assert!(tr.to_csv().lines().count() == 7);
    }

    #[test]
    fn ldl_on_poincare_disc_is_dominated_by_curvature() {
        let s = SurfaceModel::poincare(1.0).unwrap();
        let psi = MeromorphicFn::from_holo(HoloExpr::z());
        let grid = RGrid::linear(2.0, 10.0, 5, quad()).unwrap();
        let tr = ldl_report(&psi, &VectorField::standard(), 1, &s, &grid, 0.1).unwrap();
        for row in &tr.rows {
            assert!((row.curvature - row.r * row.r).abs() < 1e-12);
            // m(r, 1/z) = log(1/tanh(r/2))
            let rho = (row.r / 2.0).tanh();
            assert!((row.lhs - (1.0 / rho).ln()).abs() < 1e-7);
            assert!(row.ratio.unwrap() < 0.1);
            assert!(row.flag.is_some(), "T(r,z) = 0 stays below e");
        }
    }

    #[test]
    fn derivative_growth_closed_forms() {
        let s = SurfaceModel::euclidean();
        let grid = RGrid::log_spaced(3.0, 30.0, 5, quad()).unwrap();
        let z2 = MeromorphicFn::from_holo(HoloExpr::from_poly(poly(&[0, 0, 1])));
        let tr = derivative_growth_check(&z2, &VectorField::standard(), 1, &s, &grid, 0.1).unwrap();
        for row in &tr.rows {
            assert!((row.t - 2.0 * row.r.ln()).abs() < 1e-7);
            assert!((row.lhs - (2.0 * row.r).ln()).abs() < 1e-7);
            assert!(row.margin > 0.0);
        }
        let ez = MeromorphicFn::from_holo(exp_of(&[0, 1]));
        let tr = derivative_growth_check(&ez, &VectorField::standard(), 1, &s, &grid, 0.1).unwrap();
        for row in &tr.rows {
            assert!((row.lhs - row.t).abs() < 1e-7);
            assert!((row.margin - row.t).abs() < 1e-7);
        }
        let konst = MeromorphicFn::from_holo(HoloExpr::one());
        assert!(derivative_growth_check(&konst, &VectorField::standard(), 1, &s, &grid, 0.1).is_err());
    }

    #[test]
    fn calculus_lemma_closed_forms() {
        let s = SurfaceModel::euclidean();
        let grid = RGrid::log_spaced(2.0, 20.0, 5, quad()).unwrap();
        let one = |_: Complex64| 1.0;
        let tr = calculus_lemma_report(&s, &one, &grid, 0.1, None).unwrap();
        for row in &tr.rows {
            let expect = 1.0 / (row.r * row.r / 2.0 * row.r.ln());
            assert!((row.extra["plain_ratio"] - expect).abs() < 1e-9 * expect);
            assert!((row.extra["occupation"] - row.r * row.r / 2.0).abs() < 1e-9 * row.r * row.r);
        }
        let sq = |z: Complex64| z.norm_sqr();
        let tr = calculus_lemma_report(&s, &sq, &grid, 0.1, None).unwrap();
        for row in &tr.rows {
            let r = row.r;
            assert!((row.lhs - r * r).abs() < 1e-9 * r * r);
            let expect = 8.0 / (r * r * r.ln());
            assert!((row.extra["plain_ratio"] - expect).abs() < 1e-8 * expect);
        }
        let neg = |z: Complex64| z.re;
        assert!(matches!(calculus_lemma_report(&s, &neg, &grid, 0.1, None), Err(NevError::Precondition(_))));
    }

    #[test]
    fn calculus_f_is_literal() {
        // k̂ = e² → log⁺k̂ = 2, inner = r·k̂·2^{1.1} on flat surfaces
        let khat = 2f64.exp();
        let r = 3.0;
        let inner = r * khat * 2f64.powf(1.1);
        let expect = (2.0 * inner.ln()).powf(1.1);
        assert!((calculus_f(khat, r, 0.0, 0.1) - expect).abs() < 1e-12);
        assert_eq!(calculus_f(0.5, r, 0.0, 0.1), 0.0);
    }

    #[test]
    fn independent_subsets() {
        let hs = vec![lin(&[1, 0, 0]), lin(&[0, 1, 0]), lin(&[0, 0, 1]), lin(&[1, 1, 1])];
        let b = maximal_independent_subsets(&hs).unwrap();
        assert_eq!(b, vec![vec![0, 1, 2], vec![0, 1, 3], vec![0, 2, 3], vec![1, 2, 3]]);
        let prop = vec![lin(&[1, 2]), lin(&[2, 4]), lin(&[-1, -2])];
        assert_eq!(maximal_independent_subsets(&prop).unwrap(), vec![vec![0], vec![1], vec![2]]);
        let many: Vec<HomogeneousPoly> = (0..13).map(|i| lin(&[1, i])).collect();
        assert!(matches!(maximal_independent_subsets(&many), Err(NevError::Config(_))));
    }

    #[test]
    fn max_sum_with_one_basis_is_the_plain_sum() {
        let s = SurfaceModel::euclidean();
        let f = cartan_curve();
        let hs = vec![lin(&[1, 0, 0]), lin(&[0, 1, 0]), lin(&[0, 0, 1])];
        for norm in [WeilNorm::Euclidean, WeilNorm::Max] {
            let total = max_sum_weil_boundary(&f, &hs, norm, &s, 5.0, &quad()).unwrap().value;
            let parts: f64 = hs
                .iter()
                .map(|h| {
                    let w = CurveWeil::new(&WeilSpec::new(DivisorSum::single(h.clone()), norm), &f).unwrap();
                    proximity_m(&w, &s, 5.0, &quad()).unwrap().value
                })
                .sum();
            assert!((total - parts).abs() < 1e-9, "{total} vs {parts}");
        }
    }

    #[test]
    fn max_sum_proportional_sections() {
        let s = SurfaceModel::euclidean();
        let f = ProjectiveCurve::new(vec![HoloExpr::one(), exp_of(&[0, 1])]).unwrap();
        let hs = vec![lin(&[1, 0]), lin(&[3, 0])];
        let v = max_sum_weil_boundary(&f, &hs, WeilNorm::Max, &s, PI, &quad()).unwrap().value;
        assert!((v - 1.0).abs() < 1e-7);
    }

    #[test]
    fn max_sum_four_lines_stays_near_three_t() {
        let s = SurfaceModel::euclidean();
        let f = cartan_curve();
        let hs = vec![lin(&[1, 0, 0]), lin(&[0, 1, 0]), lin(&[0, 0, 1]), lin(&[1, 1, 1])];
        let r = 20.0;
        let v = max_sum_weil_boundary(&f, &hs, WeilNorm::Euclidean, &s, r, &quad()).unwrap().value;
        let t = characteristic_t(&f, 1, &s, r, &quad()).unwrap().value;
        assert!(v <= 3.5 * t, "{v} vs T = {t}");
        assert!(v >= 3.0 * t);
    }

    #[test]
    fn log_wronskian_examples() {
        let s = SurfaceModel::euclidean();
        let coords = vec![lin(&[1, 0, 0]), lin(&[0, 1, 0]), lin(&[0, 0, 1])];
        let f = cartan_curve();
        let m = log_wronskian_proximity(&f, &coords, &VectorField::standard(), &s, 3.0, &quad()).unwrap();
        assert!((m - 2f64.ln()).abs() < 1e-12);
        let g = ProjectiveCurve::new(vec![
            HoloExpr::one(),
            HoloExpr::z(),
            HoloExpr::from_poly(poly(&[0, 0, 1])),
        ])
        .unwrap();
        let m = log_wronskian_proximity(&g, &coords, &VectorField::standard(), &s, 2.0, &quad()).unwrap();
        assert!(m.abs() < 1e-7);
        let m = log_wronskian_proximity(&g, &coords, &VectorField::standard(), &s, 1.0, &quad()).unwrap();
        assert!((m - 2f64.ln()).abs() < 1e-7);
        let line = ProjectiveCurve::new(vec![HoloExpr::one(), HoloExpr::z(), HoloExpr::zero()]).unwrap();
        assert!(matches!(
            log_wronskian_proximity(&line, &coords, &VectorField::standard(), &s, 2.0, &quad()),
            Err(NevError::Precondition(_))
        ));
    }

    #[test]
    fn cartan_rejects_degenerate_curves() {
        let s = SurfaceModel::euclidean();
        let grid = RGrid::linear(2.0, 4.0, 2, quad()).unwrap();
        let coords = vec![lin(&[1, 0, 0]), lin(&[0, 1, 0]), lin(&[0, 0, 1])];
        let z = HoloExpr::z();
        let degenerate = ProjectiveCurve::new(vec![HoloExpr::one(), z.clone(), z.scale(&c(2))]).unwrap();
        let err = cartan_smt_report(&degenerate, &coords, WeilNorm::Euclidean, &s, &grid, 0.1).unwrap_err();
        assert!(err.to_string().contains("Wronskian"), "{err}");
        let bad = vec![lin(&[1, 0, 0]), lin(&[0, 1, 0]), lin(&[1, 1, 0])];
        assert!(cartan_smt_report(&cartan_curve(), &bad, WeilNorm::Euclidean, &s, &grid, 0.1).is_err());
    }

    #[test]
    fn cartan_trace_two_points_on_the_line() {
        let s = SurfaceModel::euclidean();
        let f = ProjectiveCurve::new(vec![HoloExpr::one(), exp_of(&[0, 1])]).unwrap();
        let hs = vec![lin(&[1, 0]), lin(&[0, 1])];
        let grid = RGrid::log_spaced(10.0, 40.0, 4, quad()).unwrap();
        let tr = cartan_smt_report(&f, &hs, WeilNorm::Max, &s, &grid, 0.1).unwrap();
        for row in &tr.rows {
            // max norm: m = r/π for each point; kinks limit the trapezoid to second order
            assert!((row.lhs - 2.0 * row.r / PI).abs() < 1e-6 * row.lhs, "{row:?}");
            assert!(row.passes());
        }
    }
}
