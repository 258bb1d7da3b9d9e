//! Effective divisors on Pⁿ given by homogeneous polynomials with
//! Gaussian-rational coefficients, their Weil functions, and exact
//! vanishing orders.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{NevError, Result};
use crate::exact::{rank, GaussRat};
use crate::holo::{HoloExpr, ProjPoint, ProjectiveCurve};

/// Monomial exponent vector `(e_0, …, e_n)`.
pub type Exponents = Vec<u32>;

#[derive(Clone, Debug, PartialEq)]
pub struct HomogeneousPoly {
    n: usize,
    degree: u32,
    terms: BTreeMap<Exponents, GaussRat>,
}

/// Result of the irreducibility test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Irreducibility {
    Irreducible,
    Reducible,
    /// Degree too high for the exact test; accepted as declared.
    Trusted,
}

impl HomogeneousPoly {
    /// Builds a form on Pⁿ (n+1 variables) from monomials; rejects the zero
    /// polynomial and mixed degrees.
    pub fn from_terms(n: usize, terms: impl IntoIterator<Item = (Exponents, GaussRat)>) -> Result<Self> {
        let mut map: BTreeMap<Exponents, GaussRat> = BTreeMap::new();
        for (e, c) in terms {
            if e.len() != n + 1 {
                return Err(NevError::Config(format!(
                    "monomial has {} exponents but P^{n} needs {}",
                    e.len(),
                    n + 1
                )));
            }
            let entry = map.entry(e).or_insert_with(GaussRat::zero);
            *entry = &*entry + &c;
        }
        map.retain(|_, c| !c.is_zero());
        let Some(first) = map.keys().next() else {
            return Err(NevError::Config("the zero polynomial does not define a divisor".into()));
        };
        let degree: u32 = first.iter().sum();
        if map.keys().any(|e| e.iter().sum::<u32>() != degree) {
            return Err(NevError::Config("polynomial is not homogeneous".into()));
        }
        Ok(Self { n, degree, terms: map })
    }

    /// `Σ a_i w_i`.
    pub fn linear(coeffs: Vec<GaussRat>) -> Result<Self> {
        let n = coeffs.len().checked_sub(1).ok_or_else(|| NevError::Config("empty linear form".into()))?;
        Self::from_terms(
            n,
            coeffs.into_iter().enumerate().map(|(i, c)| {
                let mut e = vec![0; n + 1];
                e[i] = 1;
                (e, c)
            }),
        )
    }

    /// The coordinate hyperplane `w_i`.
    pub fn coordinate(n: usize, i: usize) -> Self {
        let mut c = vec![GaussRat::zero(); n + 1];
        c[i] = GaussRat::one();
        Self::linear(c).expect("nonzero")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn terms(&self) -> &BTreeMap<Exponents, GaussRat> {
        &self.terms
    }

    pub fn is_linear(&self) -> bool {
        self.degree == 1
    }

    /// Coefficients `(a_0,…,a_n)` of a linear form.
    pub fn linear_coeffs(&self) -> Option<Vec<GaussRat>> {
        if !self.is_linear() {
            return None;
        }
        let mut out = vec![GaussRat::zero(); self.n + 1];
        for (e, c) in &self.terms {
            let i = e.iter().position(|&v| v == 1).expect("linear monomial");
            out[i] = c.clone();
        }
        Some(out)
    }

    pub fn eval(&self, w: &[Complex64]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (e, c) in &self.terms {
            let mut m = c.to_complex();
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    m *= w[i].powu(k);
                }
            }
            acc += m;
        }
        acc
    }

    /// Norm of the coefficient vector.
    pub fn coeff_norm(&self, norm: WeilNorm) -> f64 {
        let abs = self.terms.values().map(|c| c.to_complex().norm());
        match norm {
            WeilNorm::Max => abs.fold(0.0, f64::max),
            WeilNorm::Euclidean => abs.map(|a| a * a).sum::<f64>().sqrt(),
        }
    }

    /// `Q(f_0,…,f_n)` as an exp-polynomial.
    pub fn compose(&self, components: &[HoloExpr]) -> Result<HoloExpr> {
        if components.len() != self.n + 1 {
            return Err(NevError::Config(format!(
                "form on P^{} composed with a curve in P^{}",
                self.n,
                components.len() - 1
            )));
        }
        let mut powers: Vec<Vec<HoloExpr>> = components.iter().map(|f| vec![HoloExpr::one(), f.clone()]).collect();
        let mut acc = HoloExpr::zero();
        for (e, c) in &self.terms {
            let mut m = HoloExpr::constant(c.clone());
            for (i, &k) in e.iter().enumerate() {
                while powers[i].len() <= k as usize {
                    let next = &powers[i][powers[i].len() - 1] * &components[i];
                    powers[i].push(next);
                }
                if k > 0 {
                    m = &m * &powers[i][k as usize];
                }
            }
            acc = &acc + &m;
        }
        Ok(acc)
    }

    pub fn mul(&self, o: &Self) -> Result<Self> {
        self.check_same_space(o)?;
        let mut out: BTreeMap<Exponents, GaussRat> = BTreeMap::new();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &o.terms {
                let e: Exponents = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                let entry = out.entry(e).or_insert_with(GaussRat::zero);
                *entry = &*entry + &(ca * cb);
            }
        }
        Self::from_terms(self.n, out)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::from_terms(self.n, [(vec![0; self.n + 1], GaussRat::one())]).expect("one");
        for _ in 0..k {
            acc = acc.mul(self).expect("same space");
        }
        acc
    }

    fn check_same_space(&self, o: &Self) -> Result<()> {
        if self.n != o.n {
            return Err(NevError::Config(format!("forms on P^{} and P^{} cannot be combined", self.n, o.n)));
        }
        Ok(())
    }

    /// Exact quotient `self / d` if `d` divides `self`.
    pub fn div_exact(&self, d: &Self) -> Result<Option<Self>> {
        self.check_same_space(d)?;
        if d.degree > self.degree {
            return Ok(None);
        }
        let (lead_e, lead_c) = d.terms.iter().next_back().expect("nonzero");
        let lead_inv = lead_c.inv().expect("nonzero");
        let mut rem = self.terms.clone();
        let mut quot: BTreeMap<Exponents, GaussRat> = BTreeMap::new();
        while let Some((re, rc)) = rem.iter().next_back().map(|(e, c)| (e.clone(), c.clone())) {
            if re.iter().zip(lead_e).any(|(a, b)| a < b) {
                return Ok(None);
            }
            let qe: Exponents = re.iter().zip(lead_e).map(|(a, b)| a - b).collect();
            let qc = &rc * &lead_inv;
            for (de, dc) in &d.terms {
                let e: Exponents = qe.iter().zip(de).map(|(a, b)| a + b).collect();
                let entry = rem.entry(e.clone()).or_insert_with(GaussRat::zero);
                *entry = &*entry - &(&qc * dc);
                if entry.is_zero() {
                    rem.remove(&e);
                }
            }
            quot.insert(qe, qc);
        }
        Ok(Some(Self::from_terms(self.n, quot)?))
    }

    /// True if `self = c·o` for a nonzero constant c.
    pub fn is_proportional(&self, o: &Self) -> bool {
        if self.n != o.n || self.degree != o.degree || self.terms.len() != o.terms.len() {
            return false;
        }
        let mut ratio: Option<GaussRat> = None;
        for ((ea, ca), (eb, cb)) in self.terms.iter().zip(o.terms.iter()) {
            if ea != eb {
                return false;
            }
            let r = ca.div(cb).expect("nonzero");
            match &ratio {
                None => ratio = Some(r),
                Some(prev) if *prev != r => return false,
                _ => {}
            }
        }
        true
    }

    /// Exact over ℂ up to degree 2 (a quadric is irreducible iff its
    /// symmetric matrix has rank ≥ 3); binary forms of degree ≥ 2 always
    /// split. Other cases are trusted.
    pub fn irreducibility(&self) -> Irreducibility {
        match self.degree {
            0 => Irreducibility::Reducible,
            1 => Irreducibility::Irreducible,
            _ if self.n == 1 => Irreducibility::Reducible,
            2 => {
                let half = GaussRat::from_ratio(1, 2);
                let mut m = vec![vec![GaussRat::zero(); self.n + 1]; self.n + 1];
                for (e, c) in &self.terms {
                    let idx: Vec<usize> = e
                        .iter()
                        .enumerate()
                        .flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize))
                        .collect();
                    let (i, j) = (idx[0], idx[1]);
                    if i == j {
                        m[i][i] = c.clone();
                    } else {
                        m[i][j] = c * &half;
                        m[j][i] = c * &half;
                    }
                }
                if rank(&m) >= 3 {
                    Irreducibility::Irreducible
                } else {
                    Irreducibility::Reducible
                }
            }
            _ => Irreducibility::Trusted,
        }
    }
}

impl fmt::Display for HomogeneousPoly {
    /// Canonical monomial order (lex, largest first), re-parseable.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (e, c)) in self.terms.iter().rev().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "({c})")?;
            for (i, &p) in e.iter().enumerate() {
                match p {
                    0 => {}
                    1 => write!(f, "*w_{i}")?,
                    _ => write!(f, "*w_{i}^{p}")?,
                }
            }
        }
        Ok(())
    }
}

/// Largest m with `component^m | section`; `None` means the section is zero
/// (infinite order).
pub fn ord_along(section: &HomogeneousPoly, component: &HomogeneousPoly) -> Result<Option<u32>> {
    section.check_same_space(component)?;
    if component.degree == 0 {
        return Err(NevError::Config("component must be non-constant".into()));
    }
    let mut m = 0;
    let mut cur = section.clone();
    while let Some(q) = cur.div_exact(component)? {
        m += 1;
        cur = q;
    }
    Ok(Some(m))
}

/// True iff every subset of at most n+1 of the forms is linearly
/// independent.
pub fn general_position_check(hyperplanes: &[HomogeneousPoly], n: usize) -> Result<bool> {
    let rows: Vec<Vec<GaussRat>> = hyperplanes
        .iter()
        .map(|h| {
            if h.n != n {
                return Err(NevError::Config(format!("hyperplane on P^{} given for P^{n}", h.n)));
            }
            h.linear_coeffs().ok_or_else(|| NevError::Config(format!("{h} is not linear")))
        })
        .collect::<Result<_>>()?;
    let q = rows.len();
    if q > 20 {
        return Err(NevError::Config(format!("{q} hyperplanes exceed the subset enumeration cap")));
    }
    for mask in 1u32..(1 << q) {
        let size = mask.count_ones() as usize;
        if size > n + 1 {
            continue;
        }
        let sub: Vec<Vec<GaussRat>> = (0..q).filter(|i| mask & (1 << i) != 0).map(|i| rows[i].clone()).collect();
        if rank(&sub) < size {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Norms on coordinates and coefficient vectors used by Weil functions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeilNorm {
    /// Compatible with the Fubini–Study characteristic.
    #[default]
    Euclidean,
    Max,
}

impl WeilNorm {
    pub fn log_norm(self, p: &ProjPoint) -> f64 {
        match self {
            WeilNorm::Euclidean => p.log_norm_euclidean(),
            WeilNorm::Max => p.log_norm_max(),
        }
    }
}

/// `D = Σ c_j E_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct DivisorSum {
    components: Vec<(HomogeneousPoly, u32)>,
}

impl DivisorSum {
    pub fn new(components: Vec<(HomogeneousPoly, u32)>) -> Result<Self> {
        if components.is_empty() {
            return Err(NevError::Config("divisor has no components".into()));
        }
        let n = components[0].0.n;
        for (i, (e, c)) in components.iter().enumerate() {
            if *c == 0 {
                return Err(NevError::Config(format!("component {e} has multiplicity 0")));
            }
            if e.n != n {
                return Err(NevError::Config("divisor components live in different spaces".into()));
            }
            if e.degree == 0 {
                return Err(NevError::Config("constant component".into()));
            }
            for (o, _) in &components[..i] {
                if o.is_proportional(e) {
                    return Err(NevError::Config(format!("components {o} and {e} are proportional")));
                }
            }
        }
        Ok(Self { components })
    }

    pub fn single(e: HomogeneousPoly) -> Self {
        Self { components: vec![(e, 1)] }
    }

    pub fn components(&self) -> &[(HomogeneousPoly, u32)] {
        &self.components
    }

    pub fn n(&self) -> usize {
        self.components[0].0.n
    }

    /// `Σ c_j · deg E_j`.
    pub fn degree(&self) -> u32 {
        self.components.iter().map(|(e, c)| c * e.degree).sum()
    }

    /// Multiplicity of `e` in D (0 when absent).
    pub fn ord(&self, e: &HomogeneousPoly) -> u32 {
        self.components.iter().find(|(x, _)| x.is_proportional(e)).map_or(0, |(_, c)| *c)
    }
}

impl fmt::Display for DivisorSum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (e, c)) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            if *c != 1 {
                write!(f, "{c}*")?;
            }
            write!(f, "[{e}]")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeilSpec {
    pub divisor: DivisorSum,
    pub norm: WeilNorm,
}

impl WeilSpec {
    pub fn new(divisor: DivisorSum, norm: WeilNorm) -> Self {
        Self { divisor, norm }
    }

    /// `Σ c_j [d_j log‖w‖ + log‖Q_j‖ − log|Q_j(w)|]`; `+∞` on the support.
    pub fn weil(&self, point: &ProjPoint) -> Result<f64> {
        if point.direction.len() != self.divisor.n() + 1 {
            return Err(NevError::Config("point and divisor live in different spaces".into()));
        }
        let log_w = self.norm.log_norm(point) - point.log_scale;
        let mut acc = 0.0;
        for (q, c) in &self.divisor.components {
            let v = q.eval(&point.direction).norm();
            if v <= 1e-300 {
                return Ok(f64::INFINITY);
            }
            acc += *c as f64 * (q.degree as f64 * log_w + q.coeff_norm(self.norm).ln() - v.ln());
        }
        Ok(acc)
    }
}

/// Weil function of D composed with a curve, evaluated through the exact
/// compositions `Q_j∘f` so that cancellation near the support is resolved.
#[derive(Clone, Debug)]
pub struct CurveWeil {
    curve: ProjectiveCurve,
    norm: WeilNorm,
    parts: Vec<(HoloExpr, f64, f64, f64)>,
}

impl CurveWeil {
    pub fn new(spec: &WeilSpec, curve: &ProjectiveCurve) -> Result<Self> {
        let mut parts = Vec::new();
        for (q, c) in spec.divisor.components() {
            let comp = q.compose(curve.components())?;
            if comp.is_zero() {
                return Err(NevError::Config(format!("the curve lies inside the support of {q}")));
            }
            parts.push((comp, *c as f64, q.degree as f64, q.coeff_norm(spec.norm).ln()));
        }
        Ok(Self { curve: curve.clone(), norm: spec.norm, parts })
    }

    /// `λ_D(f(z))`, `+∞` when `f(z)` lies on the support.
    pub fn eval(&self, z: Complex64) -> Result<f64> {
        let p = self.curve.eval_projective(z)?;
        let log_f = self.norm.log_norm(&p);
        let mut acc = 0.0;
        for (comp, c, d, log_q) in &self.parts {
            let v = comp.eval_scaled(z);
            if v.is_zero() || v.log < comp.max_term_log(z) + (1e-15f64).ln() {
                return Ok(f64::INFINITY);
            }
            acc += c * (d * log_f + log_q - v.log);
        }
        Ok(acc)
    }

    /// Per-component terms `d_j log‖f‖ + log‖Q_j‖ − log|Q_j∘f|` (without
    /// multiplicities).
    pub fn component_values(&self, z: Complex64) -> Result<Vec<f64>> {
        let p = self.curve.eval_projective(z)?;
        let log_f = self.norm.log_norm(&p);
        Ok(self
            .parts
            .iter()
            .map(|(comp, _, d, log_q)| {
                let v = comp.eval_scaled(z);
                if v.is_zero() {
                    f64::INFINITY
                } else {
                    d * log_f + log_q - v.log
                }
            })
            .collect())
    }

    pub fn compositions(&self) -> impl Iterator<Item = (&HoloExpr, f64)> {
        self.parts.iter().map(|(c, m, _, _)| (c, *m))
    }
}
