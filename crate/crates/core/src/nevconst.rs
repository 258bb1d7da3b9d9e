//! Upper bounds for the Nevanlinna constant `Nev(O(d_L), D)` on Pⁿ through
//! exactly verified triples `(k, V, μ)`, the stratification of D by common
//! zeros of its components, and the full second-main-theorem check.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divisor::{ord_along, CurveWeil, DivisorSum, Exponents, HomogeneousPoly, Irreducibility, WeilSpec};
use crate::error::{NevError, Result};
use crate::exact::{kernel_vector, rank, GaussRat};
use crate::holo::{exact_span_rank, linear_independence, HoloExpr, ProjectiveCurve};
use crate::nevanlinna::{characteristic_t, proximity_m, RGrid};
use crate::smt::{curvature_term, loglog_plus, InequalityTrace, TraceRow};
use crate::surface::SurfaceModel;

/// Largest `k` used by the bundled candidate generator.
pub const MAX_BUNDLED_K: u32 = 6;
const MAX_COMPONENTS: usize = 16;

/// A subset σ of the prime components with a common zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Stratum {
    /// Indices into [`Stratification::components`], increasing.
    pub members: Vec<usize>,
    /// A common zero, when the components are hyperplanes.
    pub witness: Option<Vec<GaussRat>>,
}

/// `Λ`: all subsets of the prime components of D whose common zero locus is
/// nonempty, including the empty subset.
#[derive(Clone, Debug, PartialEq)]
pub struct Stratification {
    pub n: usize,
    pub components: Vec<HomogeneousPoly>,
    pub strata: Vec<Stratum>,
}

impl Stratification {
    pub fn contains(&self, members: &[usize]) -> bool {
        self.strata.iter().any(|s| s.members == members)
    }

    pub fn label(&self, members: &[usize]) -> Vec<String> {
        members.iter().map(|&i| self.components[i].to_string()).collect()
    }
}

fn linear_rows(forms: &[&HomogeneousPoly]) -> Option<Vec<Vec<GaussRat>>> {
    forms.iter().map(|f| f.linear_coeffs()).collect()
}

/// Enumerates Λ. Hyperplane subsets are decided by exact rank; subsets of
/// at most n hypersurfaces always meet. Larger subsets with a nonlinear
/// member are not decided and raise a config error.
pub fn stratify(divisor: &DivisorSum, n: usize) -> Result<Stratification> {
    if divisor.n() != n {
        return Err(NevError::Config(format!("divisor lives on P^{} but P^{n} was given", divisor.n())));
    }
    let components: Vec<HomogeneousPoly> = divisor.components().iter().map(|(e, _)| e.clone()).collect();
    let q = components.len();
    if q > MAX_COMPONENTS {
        return Err(NevError::Config(format!("{q} components exceed the cap of {MAX_COMPONENTS}")));
    }
    for e in &components {
        if e.degree() > 3 {
            return Err(NevError::Config(format!("component {e} has degree above 3")));
        }
        if e.irreducibility() == Irreducibility::Reducible {
            return Err(NevError::Config(format!("component {e} is reducible; list its prime factors")));
        }
    }
    let mut strata = vec![Stratum { members: Vec::new(), witness: None }];
    let mut subsets: Vec<Vec<usize>> =
        (1u32..(1 << q)).map(|mask| (0..q).filter(|i| mask & (1 << i) != 0).collect()).collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    for members in subsets {
        let forms: Vec<&HomogeneousPoly> = members.iter().map(|&i| &components[i]).collect();
        match linear_rows(&forms) {
            Some(rows) => {
                if rank(&rows) <= n {
                    let witness = kernel_vector(&rows, n + 1);
                    strata.push(Stratum { members, witness });
                }
            }
            None if members.len() <= n => strata.push(Stratum { members, witness: None }),
            None => {
                return Err(NevError::Config(format!(
                    "common zeros of {} nonlinear-including components in P^{n} are not decided",
                    members.len()
                )))
            }
        }
    }
    Ok(Stratification { n, components, strata })
}

/// A candidate `(k, V, μ)` with one basis of V per stratum.
#[derive(Clone, Debug, PartialEq)]
pub struct NevTriple {
    pub label: String,
    pub k: u32,
    /// `L = O(d_L)`.
    pub d_l: u32,
    /// A basis of V, forms of degree `k·d_L`.
    pub space: Vec<HomogeneousPoly>,
    /// Bases keyed by stratum members; strata without an entry use `space`.
    pub bases: BTreeMap<Vec<usize>, Vec<HomogeneousPoly>>,
    pub mu: BigRational,
}

impl NevTriple {
    pub fn dim(&self) -> usize {
        self.space.len()
    }

    pub fn basis_for(&self, members: &[usize]) -> &[HomogeneousPoly] {
        self.bases.get(members).map_or(&self.space, |b| b)
    }

    pub fn bound(&self) -> BigRational {
        BigRational::from_integer(self.dim().into()) / &self.mu
    }
}

/// One `(σ, E)` check of a certificate.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CertEntry {
    pub stratum: Vec<String>,
    pub component: String,
    /// `Σ_{s∈𝓑_σ} ord_E(s)`.
    pub order_sum: u64,
    /// `μ·ord_E(kD)`.
    pub required: String,
    pub margin: String,
    pub margin_value: f64,
    pub pass: bool,
}

/// Outcome of [`verify_triple`].
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Certificate {
    pub label: String,
    pub k: u32,
    pub d_l: u32,
    pub dim_v: usize,
    pub mu: String,
    /// `dim V / μ`.
    pub bound: String,
    pub bound_value: f64,
    pub pass: bool,
    pub entries: Vec<CertEntry>,
    pub violations: Vec<String>,
}

fn coefficient_rows(forms: &[&HomogeneousPoly]) -> Vec<Vec<GaussRat>> {
    let mut keys: Vec<&Exponents> = forms.iter().flat_map(|s| s.terms().keys()).collect();
    keys.sort();
    keys.dedup();
    forms
        .iter()
        .map(|s| keys.iter().map(|k| s.terms().get(*k).cloned().unwrap_or_else(GaussRat::zero)).collect())
        .collect()
}

fn check_space(triple: &NevTriple, n: usize, strat: &Stratification) -> Result<()> {
    let dim = triple.dim();
    if dim <= 1 {
        return Err(NevError::Config(format!("{}: dim V must exceed 1", triple.label)));
    }
    if triple.k == 0 || triple.d_l == 0 {
        return Err(NevError::Config(format!("{}: k and d_L must be positive", triple.label)));
    }
    if !(triple.mu > BigRational::zero()) {
        return Err(NevError::Config(format!("{}: μ must be positive", triple.label)));
    }
    let deg = triple.k * triple.d_l;
    let all = triple.space.iter().chain(triple.bases.values().flatten());
    for s in all {
        if s.n() != n || s.degree() != deg {
            return Err(NevError::Config(format!(
                "{}: section {s} is not a form of degree {deg} on P^{n}",
                triple.label
            )));
        }
    }
    let space: Vec<&HomogeneousPoly> = triple.space.iter().collect();
    if rank(&coefficient_rows(&space)) != dim {
        return Err(NevError::Config(format!("{}: the given sections of V are dependent", triple.label)));
    }
    for (key, basis) in &triple.bases {
        if !strat.contains(key) {
            return Err(NevError::Config(format!("{}: basis given for {key:?}, which is not a stratum", triple.label)));
        }
        let mut joint: Vec<&HomogeneousPoly> = space.clone();
        joint.extend(basis.iter());
        let b: Vec<&HomogeneousPoly> = basis.iter().collect();
        if basis.len() != dim || rank(&coefficient_rows(&b)) != dim || rank(&coefficient_rows(&joint)) != dim {
            return Err(NevError::Config(format!(
                "{}: basis for stratum {:?} does not span V",
                triple.label,
                strat.label(key)
            )));
        }
    }
    Ok(())
}

/// Checks `Σ_{s∈𝓑_σ} ord_E(s) ≥ μ·ord_E(kD)` for every stratum σ and every
/// component E in σ. Spanning is checked before any order is computed.
pub fn verify_triple(divisor: &DivisorSum, triple: &NevTriple) -> Result<Certificate> {
    let n = divisor.n();
    let strat = stratify(divisor, n)?;
    check_space(triple, n, &strat)?;
    let mut entries = Vec::new();
    let mut violations = Vec::new();
    for stratum in &strat.strata {
        let basis = triple.basis_for(&stratum.members);
        for &e in &stratum.members {
            let comp = &strat.components[e];
            let mut sum: u64 = 0;
            for s in basis {
                let o = ord_along(s, comp)?
                    .ok_or_else(|| NevError::Config(format!("{}: zero section in a basis", triple.label)))?;
                sum += o as u64;
            }
            let ord_kd = triple.k as u64 * divisor.ord(comp) as u64;
            let required = &triple.mu * BigRational::from_integer(ord_kd.into());
            let margin = BigRational::from_integer(sum.into()) - &required;
            let pass = margin >= BigRational::zero();
            let names = strat.label(&stratum.members);
            if !pass {
                violations.push(format!(
                    "stratum {{{}}}, component {comp}: order sum {sum} < {required} = μ·ord_E(kD)",
                    names.join(", ")
                ));
            }
            entries.push(CertEntry {
                stratum: names,
                component: comp.to_string(),
                order_sum: sum,
                required: required.to_string(),
                margin_value: margin.to_f64().unwrap_or(f64::NAN),
                margin: margin.to_string(),
                pass,
            });
        }
    }
    let bound = triple.bound();
    Ok(Certificate {
        label: triple.label.clone(),
        k: triple.k,
        d_l: triple.d_l,
        dim_v: triple.dim(),
        mu: triple.mu.to_string(),
        bound_value: bound.to_f64().unwrap_or(f64::INFINITY),
        bound: bound.to_string(),
        pass: violations.is_empty(),
        entries,
        violations,
    })
}

/// Verification outcome of one candidate.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CandidateOutcome {
    pub label: String,
    pub certificate: Option<Certificate>,
    pub error: Option<String>,
}

/// `min dim V/μ` over verified candidates, or `+∞`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NevBound {
    /// Exact value; `None` is `+∞`.
    pub value: Option<String>,
    pub value_f64: f64,
    pub best: Option<String>,
    pub outcomes: Vec<CandidateOutcome>,
    pub explanation: String,
    #[serde(skip)]
    pub exact: Option<BigRational>,
}

pub fn nev_upper_bound(divisor: &DivisorSum, candidates: &[NevTriple]) -> NevBound {
    let outcomes: Vec<CandidateOutcome> = candidates
        .par_iter()
        .map(|t| match verify_triple(divisor, t) {
            Ok(c) => CandidateOutcome { label: t.label.clone(), certificate: Some(c), error: None },
            Err(e) => CandidateOutcome { label: t.label.clone(), certificate: None, error: Some(e.to_string()) },
        })
        .collect();
    let mut best: Option<(BigRational, usize)> = None;
    for (i, o) in outcomes.iter().enumerate() {
        if o.certificate.as_ref().is_some_and(|c| c.pass) {
            let b = candidates[i].bound();
            if best.as_ref().is_none_or(|(v, _)| b < *v) {
                best = Some((b, i));
            }
        }
    }
    match best {
        Some((v, i)) => NevBound {
            value: Some(v.to_string()),
            value_f64: v.to_f64().unwrap_or(f64::INFINITY),
            best: Some(candidates[i].label.clone()),
            explanation: format!("{} of {} candidates verified", outcomes.iter().filter(|o| o.certificate.as_ref().is_some_and(|c| c.pass)).count(), candidates.len()),
            outcomes,
            exact: Some(v),
        },
        None => NevBound {
            value: None,
            value_f64: f64::INFINITY,
            best: None,
            explanation: if candidates.is_empty() {
                "no candidate triples given; the bound is +∞".into()
            } else {
                "no candidate triple verified; the bound is +∞".into()
            },
            outcomes,
            exact: None,
        },
    }
}

/// Exponent vectors of total degree `m` in `vars` variables, lexicographically
/// decreasing.
pub fn exponent_vectors(vars: usize, m: u32) -> Vec<Exponents> {
    fn rec(vars: usize, m: u32, prefix: &mut Vec<u32>, out: &mut Vec<Exponents>) {
        if prefix.len() + 1 == vars {
            prefix.push(m);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for a in (0..=m).rev() {
            prefix.push(a);
            rec(vars, m - a, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if vars > 0 {
        rec(vars, m, &mut Vec::new(), &mut out);
    }
    out
}

fn monomials_in(forms: &[HomogeneousPoly], m: u32) -> Result<Vec<HomogeneousPoly>> {
    let n = forms[0].n();
    exponent_vectors(forms.len(), m)
        .into_iter()
        .map(|e| {
            let mut acc = HomogeneousPoly::from_terms(n, [(vec![0; n + 1], GaussRat::from_int(1))])?;
            for (f, &a) in forms.iter().zip(&e) {
                if a > 0 {
                    acc = acc.mul(&f.pow(a))?;
                }
            }
            Ok(acc)
        })
        .collect()
}

/// Linear forms whose first entries are a maximal independent subset of
/// `forms`, completed by coordinates to a basis of all linear forms.
fn adapted_coordinates(forms: &[&HomogeneousPoly], n: usize) -> Vec<HomogeneousPoly> {
    let mut chosen: Vec<HomogeneousPoly> = Vec::new();
    let mut rows: Vec<Vec<GaussRat>> = Vec::new();
    let coords: Vec<HomogeneousPoly> = (0..=n).map(|i| HomogeneousPoly::coordinate(n, i)).collect();
    for f in forms.iter().copied().chain(coords.iter()) {
        let row = f.linear_coeffs().expect("linear");
        rows.push(row);
        if rank(&rows) == rows.len() {
            chosen.push(f.clone());
        } else {
            rows.pop();
        }
    }
    chosen
}

/// Monomial filtration triples for a divisor of hyperplanes: for each
/// `k ≤ k_max`, V is all forms of degree `k·d_L` and the basis at σ is the
/// monomials in coordinates adapted to σ. μ is the largest value the bases
/// support.
pub fn bundled_candidates(divisor: &DivisorSum, d_l: u32, k_max: u32) -> Result<Vec<NevTriple>> {
    if k_max == 0 || k_max > MAX_BUNDLED_K {
        return Err(NevError::Config(format!("k_max must lie in 1..={MAX_BUNDLED_K}")));
    }
    if d_l == 0 {
        return Err(NevError::Config("d_L must be positive".into()));
    }
    let n = divisor.n();
    if divisor.components().iter().any(|(e, _)| !e.is_linear()) {
        return Err(NevError::Config("bundled candidates need hyperplane components".into()));
    }
    let strat = stratify(divisor, n)?;
    let coords: Vec<HomogeneousPoly> = (0..=n).map(|i| HomogeneousPoly::coordinate(n, i)).collect();
    let mut out = Vec::new();
    for k in 1..=k_max {
        let m = k * d_l;
        let space = monomials_in(&coords, m)?;
        let mut bases = BTreeMap::new();
        let mut mu: Option<BigRational> = None;
        for stratum in &strat.strata {
            if stratum.members.is_empty() {
                continue;
            }
            let forms: Vec<&HomogeneousPoly> = stratum.members.iter().map(|&i| &strat.components[i]).collect();
            let ys = adapted_coordinates(&forms, n);
            let basis = monomials_in(&ys, m)?;
            for &e in &stratum.members {
                let comp = &strat.components[e];
                let mut sum: u64 = 0;
                for s in &basis {
                    sum += ord_along(s, comp)?.unwrap_or(0) as u64;
                }
                let need = k as u64 * divisor.ord(comp) as u64;
                let ratio = BigRational::new(sum.into(), need.into());
                if mu.as_ref().is_none_or(|v| ratio < *v) {
                    mu = Some(ratio);
                }
            }
            bases.insert(stratum.members.clone(), basis);
        }
        let mu = mu.unwrap_or_else(|| BigRational::from_integer(1.into()));
        if mu > BigRational::zero() {
            out.push(NevTriple { label: format!("monomial k={k}"), k, d_l, space, bases, mu });
        }
    }
    Ok(out)
}

fn nondegenerate_under_veronese(curve: &ProjectiveCurve, degree: u32) -> Result<()> {
    let n = curve.n();
    let monomials = monomials_in(&(0..=n).map(|i| HomogeneousPoly::coordinate(n, i)).collect::<Vec<_>>(), degree)?;
    let composed: Vec<HoloExpr> = monomials.iter().map(|m| m.compose(curve.components())).collect::<Result<_>>()?;
    let independent = match exact_span_rank(&composed) {
        Some(r) => r == composed.len(),
        None if composed.len() <= 12 => linear_independence(&composed).independent,
        None => {
            return Err(NevError::Config(format!(
                "nondegeneracy of {curve} under the degree-{degree} Veronese map is not decided"
            )))
        }
    };
    if independent {
        Ok(())
    } else {
        Err(NevError::Precondition(format!(
            "the image of {curve} under the degree-{degree} Veronese map is linearly degenerate"
        )))
    }
}

/// `m_f(r,D) ≤ bound·T_{f,L} + 0.1·T_{f,L} + |κ|r² + log⁺log r` with slack
/// 10, where `T_{f,L} = d_L·T_FS`. The curve must be linearly nondegenerate
/// under the Veronese map of degree `veronese_degree` (normally `k·d_L` of
/// the certified triple).
#[allow(clippy::too_many_arguments)]
pub fn smt_full_check(
    curve: &ProjectiveCurve,
    spec: &WeilSpec,
    d_l: u32,
    bound: &BigRational,
    veronese_degree: u32,
    surface: &SurfaceModel,
    grid: &RGrid,
    delta: f64,
) -> Result<InequalityTrace> {
    if spec.divisor.n() != curve.n() {
        return Err(NevError::Config("curve and divisor live in different spaces".into()));
    }
    if d_l == 0 || veronese_degree == 0 {
        return Err(NevError::Config("d_L and the Veronese degree must be positive".into()));
    }
    let b = bound.to_f64().ok_or_else(|| NevError::Config("bound is not representable".into()))?;
    nondegenerate_under_veronese(curve, veronese_degree)?;
    grid.check_reachable(surface)?;
    let weil = CurveWeil::new(spec, curve)?;
    let mut rows: Vec<TraceRow> = grid
        .radii()
        .par_iter()
        .map(|&r| {
            let t = characteristic_t(curve, d_l, surface, r, &grid.quad)?.value;
            let m = proximity_m(&weil, surface, r, &grid.quad)?.value;
            let error = 0.1 * t + curvature_term(surface, r)? + loglog_plus(r);
            let mut row = TraceRow::new(surface, r, t, m, b * t, error, 10.0)?;
            row.ratio = (t > 0.0).then(|| m / t);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let borel = crate::smt::apply_flags(&mut rows, delta)?;
    let mut notes = vec![format!("bound {bound}, d_L = {d_l}, {:?} norm; slack 10", spec.norm)];
    if let Some(last) = rows.last() {
        if last.t > 0.0 {
            notes.push(format!("|κ|r²/T at r = {} is {:.6e}", last.r, last.curvature / last.t));
        }
    }
    Ok(InequalityTrace { kind: "smt".into(), delta, rows, borel, notes })
}
