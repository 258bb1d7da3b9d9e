//! Holomorphic expressions, projective curves, vector-field derivatives and
//! Wronskians.
//!
//! Every expression is kept in the normal form `Σ p_k(z)·exp(q_k(z))` with
//! exact Gaussian-rational polynomials and pairwise distinct exponents. The
//! class is closed under sums, products and `d/dz`, so derivatives and
//! Wronskians stay symbolic. Evaluation returns a unit phase together with
//! a log-magnitude, which cannot overflow.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NevError, Result};
use crate::exact::{ExactPoly, GaussRat};

/// A complex number stored as `phase · exp(log)` with `|phase| = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaled {
    pub phase: Complex64,
    pub log: f64,
}

impl Scaled {
    pub const ZERO: Scaled = Scaled { phase: Complex64 { re: 0.0, im: 0.0 }, log: f64::NEG_INFINITY };

    pub fn new(mant: Complex64, log: f64) -> Self {
        let m = mant.norm();
        if m == 0.0 || !m.is_finite() || log == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        Self { phase: mant / m, log: log + m.ln() }
    }

    pub fn from_complex(c: Complex64) -> Self {
        Self::new(c, 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.log == f64::NEG_INFINITY
    }

    /// `log|x|`, `−∞` for zero.
    pub fn ln_abs(&self) -> f64 {
        self.log
    }

    pub fn to_complex(&self) -> Complex64 {
        if self.is_zero() {
            return Complex64::new(0.0, 0.0);
        }
        self.phase * self.log.exp()
    }

    pub fn mul(&self, o: &Scaled) -> Scaled {
        if self.is_zero() || o.is_zero() {
            return Self::ZERO;
        }
        Scaled::new(self.phase * o.phase, self.log + o.log)
    }

    /// `self / o`; `None` when `o` is zero.
    pub fn div(&self, o: &Scaled) -> Option<Scaled> {
        if o.is_zero() {
            return None;
        }
        if self.is_zero() {
            return Some(Self::ZERO);
        }
        Some(Scaled::new(self.phase / o.phase, self.log - o.log))
    }

    pub fn sum(items: &[Scaled]) -> Scaled {
        let top = items.iter().map(|s| s.log).fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Self::ZERO;
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for s in items {
            if !s.is_zero() {
                acc += s.phase * (s.log - top).exp();
            }
        }
        Scaled::new(acc, top)
    }
}

#[derive(Clone, Debug)]
struct Term {
    coef: ExactPoly,
    arg: ExactPoly,
    fcoef: Vec<Complex64>,
    farg: Vec<Complex64>,
    /// `(phase, log|c|)` when the coefficient is a nonzero constant.
    unit: Option<(Complex64, f64)>,
}

impl Term {
    fn new(coef: ExactPoly, arg: ExactPoly) -> Self {
        let fcoef = coef.to_complex();
        let farg = arg.to_complex();
        let unit = match fcoef.as_slice() {
            [c] if c.norm() > 0.0 => Some((c / c.norm(), c.norm().ln())),
            _ => None,
        };
        Self { coef, arg, fcoef, farg, unit }
    }

    fn eval(&self, z: Complex64) -> Scaled {
        let q = horner(&self.farg, z);
        let (sin, cos) = q.im.sin_cos();
        let rot = Complex64::new(cos, sin);
        if let Some((phase, log)) = self.unit {
            return Scaled { phase: phase * rot, log: log + q.re };
        }
        let p = horner(&self.fcoef, z);
        if p == Complex64::new(0.0, 0.0) {
            return Scaled::ZERO;
        }
        Scaled::new(p * rot, q.re)
    }
}

pub(crate) fn horner(c: &[Complex64], z: Complex64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for v in c.iter().rev() {
        acc = acc * z + v;
    }
    acc
}

/// An exp-polynomial `Σ p_k(z)·exp(q_k(z))`.
#[derive(Clone, Debug)]
pub struct HoloExpr {
    terms: Arc<Vec<Term>>,
}

impl PartialEq for HoloExpr {
    fn eq(&self, other: &Self) -> bool {
        self.terms.len() == other.terms.len()
            && self.terms.iter().zip(other.terms.iter()).all(|(a, b)| a.coef == b.coef && a.arg == b.arg)
    }
}

impl HoloExpr {
    fn from_raw(mut raw: Vec<(ExactPoly, ExactPoly)>) -> Self {
        raw.sort_by(|a, b| a.1.canonical_cmp(&b.1));
        let mut merged: Vec<(ExactPoly, ExactPoly)> = Vec::with_capacity(raw.len());
        for (c, a) in raw {
            match merged.last_mut() {
                Some(last) if last.1.canonical_cmp(&a) == Ordering::Equal => last.0 = last.0.add(&c),
                _ => merged.push((c, a)),
            }
        }
        let terms = merged.into_iter().filter(|(c, _)| !c.is_zero()).map(|(c, a)| Term::new(c, a)).collect();
        Self { terms: Arc::new(terms) }
    }

    /// Builds `Σ coef_k · exp(arg_k)` and brings it to normal form.
    pub fn from_terms(terms: Vec<(ExactPoly, ExactPoly)>) -> Self {
        Self::from_raw(terms)
    }

    pub fn zero() -> Self {
        Self { terms: Arc::new(Vec::new()) }
    }

    pub fn one() -> Self {
        Self::constant(GaussRat::one())
    }

    pub fn constant(c: GaussRat) -> Self {
        Self::from_poly(ExactPoly::constant(c))
    }

    pub fn z() -> Self {
        Self::from_poly(ExactPoly::z())
    }

    pub fn from_poly(p: ExactPoly) -> Self {
        Self::from_raw(vec![(p, ExactPoly::new(vec![]))])
    }

    /// `exp(arg)` for a polynomial argument.
    pub fn exp_poly(arg: ExactPoly) -> Self {
        Self::from_raw(vec![(ExactPoly::constant(GaussRat::one()), arg)])
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    /// `(coefficient, exponent)` pairs of the normal form.
    pub fn terms(&self) -> impl Iterator<Item = (&ExactPoly, &ExactPoly)> {
        self.terms.iter().map(|t| (&t.coef, &t.arg))
    }

    /// The polynomial if the expression has no exponential factor.
    pub fn as_polynomial(&self) -> Option<ExactPoly> {
        match self.terms.len() {
            0 => Some(ExactPoly::new(vec![])),
            1 if self.terms[0].arg.is_zero() => Some(self.terms[0].coef.clone()),
            _ => None,
        }
    }

    /// `(p, q)` when the expression is a single term `p·exp(q)`.
    pub fn single_term(&self) -> Option<(&ExactPoly, &ExactPoly)> {
        (self.terms.len() == 1).then(|| (&self.terms[0].coef, &self.terms[0].arg))
    }

    /// A nonzero constant with no exponential factor.
    pub fn as_constant(&self) -> Option<GaussRat> {
        let p = self.as_polynomial()?;
        (p.coeffs.len() == 1).then(|| p.coeffs[0].clone())
    }

    pub fn scale(&self, c: &GaussRat) -> Self {
        Self::from_raw(self.terms.iter().map(|t| (t.coef.scale(c), t.arg.clone())).collect())
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one();
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// `d/dz`: `(p·e^q)' = (p' + p·q')·e^q`.
    pub fn derivative(&self) -> Self {
        Self::from_raw(
            self.terms
                .iter()
                .map(|t| (t.coef.derivative().add(&t.coef.mul(&t.arg.derivative())), t.arg.clone()))
                .collect(),
        )
    }

    pub fn eval_scaled(&self, z: Complex64) -> Scaled {
        match self.terms.len() {
            0 => Scaled::ZERO,
            1 => self.terms[0].eval(z),
            _ => {
                let parts: Vec<Scaled> = self.terms.iter().map(|t| t.eval(z)).collect();
                Scaled::sum(&parts)
            }
        }
    }

    /// Plain complex value; may overflow for large exponents.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.eval_scaled(z).to_complex()
    }

    /// Largest log-magnitude among the individual terms at `z`. Comparing
    /// against it detects cancellation.
    pub fn max_term_log(&self, z: Complex64) -> f64 {
        self.terms.iter().map(|t| t.eval(z).log).fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when no two exponents differ by a nonzero constant, in which
    /// case the normal form is zero iff the function is.
    pub fn normal_form_is_faithful(&self) -> bool {
        for i in 0..self.terms.len() {
            for j in (i + 1)..self.terms.len() {
                if self.terms[i].arg.sub(&self.terms[j].arg).is_constant() {
                    return false;
                }
            }
        }
        true
    }

    /// True if some term carries an exponential factor.
    pub fn has_exponential(&self) -> bool {
        self.terms.iter().any(|t| !t.arg.is_zero())
    }
}

impl fmt::Display for HoloExpr {
    /// Re-parseable canonical form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, t) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            if t.arg.is_zero() {
                write!(f, "({})", t.coef)?;
            } else {
                write!(f, "({})*exp({})", t.coef, t.arg)?;
            }
        }
        Ok(())
    }
}

impl<'a> Add<&'a HoloExpr> for &'a HoloExpr {
    type Output = HoloExpr;
    fn add(self, o: &HoloExpr) -> HoloExpr {
        let mut raw: Vec<(ExactPoly, ExactPoly)> = self.terms.iter().map(|t| (t.coef.clone(), t.arg.clone())).collect();
        raw.extend(o.terms.iter().map(|t| (t.coef.clone(), t.arg.clone())));
        HoloExpr::from_raw(raw)
    }
}

impl<'a> Sub<&'a HoloExpr> for &'a HoloExpr {
    type Output = HoloExpr;
    fn sub(self, o: &HoloExpr) -> HoloExpr {
        self + &(-o)
    }
}

impl<'a> Mul<&'a HoloExpr> for &'a HoloExpr {
    type Output = HoloExpr;
    fn mul(self, o: &HoloExpr) -> HoloExpr {
        let mut raw = Vec::with_capacity(self.terms.len() * o.terms.len());
        for a in self.terms.iter() {
            for b in o.terms.iter() {
                raw.push((a.coef.mul(&b.coef), a.arg.add(&b.arg)));
            }
        }
        HoloExpr::from_raw(raw)
    }
}

impl Neg for &HoloExpr {
    type Output = HoloExpr;
    fn neg(self) -> HoloExpr {
        HoloExpr::from_raw(self.terms.iter().map(|t| (t.coef.neg(), t.arg.clone())).collect())
    }
}

impl Add for HoloExpr {
    type Output = HoloExpr;
    fn add(self, o: HoloExpr) -> HoloExpr {
        &self + &o
    }
}

impl Sub for HoloExpr {
    type Output = HoloExpr;
    fn sub(self, o: HoloExpr) -> HoloExpr {
        &self - &o
    }
}

impl Mul for HoloExpr {
    type Output = HoloExpr;
    fn mul(self, o: HoloExpr) -> HoloExpr {
        &self * &o
    }
}

impl Neg for HoloExpr {
    type Output = HoloExpr;
    fn neg(self) -> HoloExpr {
        -&self
    }
}

/// `𝔛 = a(z)·∂/∂z` with `a` nowhere zero on the working domain.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    a: HoloExpr,
}

impl Default for VectorField {
    fn default() -> Self {
        Self::standard()
    }
}

impl VectorField {
    /// `∂/∂z`.
    pub fn standard() -> Self {
        Self { a: HoloExpr::one() }
    }

    /// Accepts `a = p·exp(q)` whose polynomial factor has no zero in the
    /// domain (`None` is the plane, `Some(R)` the disc of radius R).
    pub fn new(a: HoloExpr, domain_radius: Option<f64>) -> Result<Self> {
        let Some((p, _)) = a.single_term() else {
            return Err(NevError::Config(format!(
                "vector field coefficient {a} must be a single term p·exp(q) so that its zeros can be certified"
            )));
        };
        if p.degree().unwrap_or(0) > 0 {
            match domain_radius {
                None => {
                    return Err(NevError::Config(format!(
                        "vector field coefficient {a} has zeros in the plane"
                    )))
                }
                Some(r) => {
                    let roots = crate::zeros::polynomial_roots(p)?;
                    if let Some(z) = roots.iter().find(|z| z.z.norm() < r) {
                        return Err(NevError::Config(format!(
                            "vector field coefficient {a} vanishes at {} inside the domain",
                            z.z
                        )));
                    }
                }
            }
        }
        Ok(Self { a })
    }

    pub fn coefficient(&self) -> &HoloExpr {
        &self.a
    }

    pub fn is_standard(&self) -> bool {
        self.a == HoloExpr::one()
    }

    pub fn apply(&self, e: &HoloExpr) -> HoloExpr {
        let d = e.derivative();
        if self.is_standard() {
            d
        } else {
            &self.a * &d
        }
    }
}

/// `𝔛^k(expr)`.
pub fn xderive(expr: &HoloExpr, field: &VectorField, k: usize) -> HoloExpr {
    let mut out = expr.clone();
    for _ in 0..k {
        out = field.apply(&out);
    }
    out
}

/// `[𝔛^j f_k]` for `j = 0..=n`.
fn derivative_table(components: &[HoloExpr], field: &VectorField) -> Vec<Vec<HoloExpr>> {
    let n = components.len();
    components
        .iter()
        .map(|f| {
            let mut col = Vec::with_capacity(n);
            col.push(f.clone());
            for j in 1..n {
                let next = field.apply(&col[j - 1]);
                col.push(next);
            }
            col
        })
        .collect()
}

/// Symbolic `W_𝔛(f_0,…,f_n) = det[𝔛^j f_k]` by Laplace expansion memoised on
/// column subsets.
pub fn wronskian(components: &[HoloExpr], field: &VectorField) -> HoloExpr {
    let n = components.len();
    if n == 0 {
        return HoloExpr::one();
    }
    assert!(n <= 20, "wronskian of more than 20 functions");
    let table = derivative_table(components, field);
    let mut memo: HashMap<u32, HoloExpr> = HashMap::new();
    minor(&table, (1u32 << n) - 1, n, &mut memo)
}

fn minor(table: &[Vec<HoloExpr>], mask: u32, n: usize, memo: &mut HashMap<u32, HoloExpr>) -> HoloExpr {
    if mask == 0 {
        return HoloExpr::one();
    }
    if let Some(v) = memo.get(&mask) {
        return v.clone();
    }
    let row = n - mask.count_ones() as usize;
    let mut raw: Vec<HoloExpr> = Vec::new();
    let mut pos = 0;
    for col in 0..n {
        if mask & (1 << col) == 0 {
            continue;
        }
        let entry = &table[col][row];
        if !entry.is_zero() {
            let sub = minor(table, mask & !(1 << col), n, memo);
            let prod = entry * &sub;
            raw.push(if pos % 2 == 0 { prod } else { -prod });
        }
        pos += 1;
    }
    let mut acc = HoloExpr::zero();
    for r in raw {
        acc = &acc + &r;
    }
    memo.insert(mask, acc.clone());
    acc
}

/// Precomputed `𝔛^j f_k` for repeated evaluation of the logarithmic
/// Wronskian `Δ_𝔛 = det[𝔛^j f_k / f_k]`.
#[derive(Clone, Debug)]
pub struct LogWronskian {
    table: Vec<Vec<HoloExpr>>,
}

impl LogWronskian {
    pub fn new(components: &[HoloExpr], field: &VectorField) -> Self {
        Self { table: derivative_table(components, field) }
    }

    /// Matrix entries are ratios, so they stay finite even when the
    /// components themselves overflow.
    pub fn eval(&self, z: Complex64) -> Result<Complex64> {
        let n = self.table.len();
        let mut m = DMatrix::<Complex64>::zeros(n, n);
        for (k, col) in self.table.iter().enumerate() {
            let fk = col[0].eval_scaled(z);
            if fk.is_zero() || fk.log < col[0].max_term_log(z) + (1e-14f64).ln() {
                return Err(NevError::Singular(format!("component {k} vanishes at z = {z}")));
            }
            for (j, e) in col.iter().enumerate() {
                let r = e.eval_scaled(z).div(&fk).expect("nonzero").to_complex();
                if !r.is_finite() {
                    return Err(NevError::Singular(format!("entry ({j},{k}) overflows at z = {z}")));
                }
                m[(j, k)] = r;
            }
        }
        Ok(m.determinant())
    }
}

/// `Δ_𝔛(f_0,…,f_n)(z) = W_𝔛(f)(z) / Π f_k(z)`.
pub fn log_wronskian_eval(components: &[HoloExpr], field: &VectorField, z: Complex64) -> Result<Complex64> {
    LogWronskian::new(components, field).eval(z)
}

/// Outcome of the linear independence test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Independence {
    pub independent: bool,
    /// False when the decision rests on random evaluation points.
    pub exact: bool,
}

/// Decides linear independence over ℂ through the Wronskian. Exact when the
/// Wronskian's normal form is faithful; otherwise the Wronskian is tested
/// at 16 seeded random points, with cancellation judged relative to its
/// largest term.
pub fn linear_independence(components: &[HoloExpr]) -> Independence {
    let w = wronskian(components, &VectorField::standard());
    if w.normal_form_is_faithful() {
        return Independence { independent: !w.is_zero(), exact: true };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..16 {
        let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let v = w.eval_scaled(z);
        if !v.is_zero() && v.log > w.max_term_log(z) + (1e-10f64).ln() {
            return Independence { independent: true, exact: false };
        }
    }
    Independence { independent: false, exact: false }
}

/// Dimension of the ℂ-span of exp-polynomials, computed exactly from their
/// coefficients in the basis `z^j·exp(q)`. `None` when two exponents differ
/// by a nonzero constant, where that basis is not independent over the
/// Gaussian rationals.
pub fn exact_span_rank(exprs: &[HoloExpr]) -> Option<usize> {
    let mut args: Vec<&ExactPoly> = exprs.iter().flat_map(|e| e.terms.iter().map(|t| &t.arg)).collect();
    args.sort_by(|a, b| a.canonical_cmp(b));
    args.dedup_by(|a, b| a.canonical_cmp(b) == Ordering::Equal);
    for i in 0..args.len() {
        for j in (i + 1)..args.len() {
            if args[i].sub(args[j]).is_constant() {
                return None;
            }
        }
    }
    let mut columns: Vec<(usize, usize)> = Vec::new();
    for e in exprs {
        for t in e.terms.iter() {
            let a = args.iter().position(|x| x.canonical_cmp(&t.arg) == Ordering::Equal).expect("collected");
            for j in 0..t.coef.coeffs.len() {
                columns.push((a, j));
            }
        }
    }
    columns.sort_unstable();
    columns.dedup();
    let rows: Vec<Vec<GaussRat>> = exprs
        .iter()
        .map(|e| {
            let mut row = vec![GaussRat::from_int(0); columns.len()];
            for t in e.terms.iter() {
                let a = args.iter().position(|x| x.canonical_cmp(&t.arg) == Ordering::Equal).expect("collected");
                for (j, c) in t.coef.coeffs.iter().enumerate() {
                    let col = columns.binary_search(&(a, j)).expect("collected");
                    row[col] = c.clone();
                }
            }
            row
        })
        .collect();
    Some(crate::exact::rank(&rows))
}

/// A point of Pⁿ as `exp(log_scale) · direction` with `max |direction_i| = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjPoint {
    pub log_scale: f64,
    pub direction: Vec<Complex64>,
}

impl ProjPoint {
    pub fn from_coords(w: &[Complex64]) -> Result<Self> {
        let scaled: Vec<Scaled> = w.iter().map(|&c| Scaled::from_complex(c)).collect();
        Self::from_scaled(&scaled).ok_or_else(|| NevError::NonReduced("all coordinates vanish".into()))
    }

    fn from_scaled(s: &[Scaled]) -> Option<Self> {
        let top = s.iter().map(|v| v.log).fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return None;
        }
        let direction = s
            .iter()
            .map(|v| if v.is_zero() { Complex64::new(0.0, 0.0) } else { v.phase * (v.log - top).exp() })
            .collect();
        Some(Self { log_scale: top, direction })
    }

    pub fn dim(&self) -> usize {
        self.direction.len() - 1
    }

    pub fn log_norm_euclidean(&self) -> f64 {
        self.log_scale + 0.5 * self.direction.iter().map(|c| c.norm_sqr()).sum::<f64>().ln()
    }

    pub fn log_norm_max(&self) -> f64 {
        self.log_scale + self.direction.iter().map(|c| c.norm()).fold(0.0, f64::max).ln()
    }
}

/// A holomorphic map `[f_0:…:f_n]` into Pⁿ.
#[derive(Clone, Debug)]
pub struct ProjectiveCurve {
    components: Vec<HoloExpr>,
    derivatives: Vec<HoloExpr>,
}

impl ProjectiveCurve {
    pub fn new(components: Vec<HoloExpr>) -> Result<Self> {
        if components.len() < 2 {
            return Err(NevError::Config("a curve in Pⁿ needs at least two components".into()));
        }
        if components.iter().all(HoloExpr::is_zero) {
            return Err(NevError::Config("all components are identically zero".into()));
        }
        let derivatives = components.iter().map(HoloExpr::derivative).collect();
        Ok(Self { components, derivatives })
    }

    pub fn components(&self) -> &[HoloExpr] {
        &self.components
    }

    pub fn n(&self) -> usize {
        self.components.len() - 1
    }

    /// True when the curve is constant in Pⁿ (all 2×2 minors of `(f, f')`
    /// vanish identically).
    pub fn is_constant(&self) -> bool {
        for i in 0..self.components.len() {
            for j in (i + 1)..self.components.len() {
                let m = &(&self.components[i] * &self.derivatives[j]) - &(&self.components[j] * &self.derivatives[i]);
                if !m.is_zero() {
                    return false;
                }
            }
        }
        true
    }

    fn eval_components(&self, z: Complex64) -> Result<Vec<Scaled>> {
        let vals: Vec<Scaled> = self.components.iter().map(|c| c.eval_scaled(z)).collect();
        let all_vanish = self.components.iter().zip(vals.iter()).all(|(c, v)| {
            v.is_zero() || (c.n_terms() > 1 && v.log < c.max_term_log(z) + (1e-14f64).ln())
        });
        if all_vanish {
            return Err(NevError::NonReduced(format!("{z}")));
        }
        Ok(vals)
    }

    pub fn eval_projective(&self, z: Complex64) -> Result<ProjPoint> {
        let vals = self.eval_components(z)?;
        ProjPoint::from_scaled(&vals).ok_or_else(|| NevError::NonReduced(format!("{z}")))
    }

    /// `log‖f(z)‖` in the Euclidean norm.
    pub fn log_norm(&self, z: Complex64) -> Result<f64> {
        Ok(self.eval_projective(z)?.log_norm_euclidean())
    }

    /// Pulled-back Fubini–Study density against Euclidean area,
    /// `(1/π)·Σ_{i<j}|f_i f_j' − f_j f_i'|² / ‖f‖⁴`; a line has total mass 1.
    pub fn fs_density(&self, z: Complex64) -> Result<f64> {
        const STACK: usize = 8;
        let k = self.components.len();
        if k <= STACK {
            let mut f = [Scaled::ZERO; STACK];
            let mut df = [Scaled::ZERO; STACK];
            let mut a = [Complex64::new(0.0, 0.0); STACK];
            let mut b = [Complex64::new(0.0, 0.0); STACK];
            self.fs_density_in(z, &mut f[..k], &mut df[..k], &mut a[..k], &mut b[..k])
        } else {
            let zero = Complex64::new(0.0, 0.0);
            self.fs_density_in(z, &mut vec![Scaled::ZERO; k], &mut vec![Scaled::ZERO; k], &mut vec![zero; k], &mut vec![zero; k])
        }
    }

    fn fs_density_in(
        &self,
        z: Complex64,
        f: &mut [Scaled],
        df: &mut [Scaled],
        a: &mut [Complex64],
        b: &mut [Complex64],
    ) -> Result<f64> {
        let mut all_vanish = true;
        for (i, c) in self.components.iter().enumerate() {
            f[i] = c.eval_scaled(z);
            df[i] = self.derivatives[i].eval_scaled(z);
            if all_vanish && !f[i].is_zero() {
                all_vanish = c.n_terms() > 1 && f[i].log < c.max_term_log(z) + (1e-14f64).ln();
            }
        }
        if all_vanish {
            return Err(NevError::NonReduced(format!("{z}")));
        }
        let top_f = f.iter().map(|v| v.log).fold(f64::NEG_INFINITY, f64::max);
        let top_d = df.iter().map(|v| v.log).fold(f64::NEG_INFINITY, f64::max);
        if top_d == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let unit = |v: &Scaled, top: f64| if v.is_zero() { Complex64::new(0.0, 0.0) } else { v.phase * (v.log - top).exp() };
        for i in 0..f.len() {
            a[i] = unit(&f[i], top_f);
            b[i] = unit(&df[i], top_d);
        }
        let mut num = 0.0;
        for i in 0..a.len() {
            for j in (i + 1)..a.len() {
                num += (a[i] * b[j] - a[j] * b[i]).norm_sqr();
            }
        }
        let norm2: f64 = a.iter().map(|c| c.norm_sqr()).sum();
        Ok((2.0 * (top_d - top_f)).exp() * num / (std::f64::consts::PI * norm2 * norm2))
    }
}

impl fmt::Display for ProjectiveCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, " : ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

/// `ψ = num / den`.
#[derive(Clone, Debug)]
pub struct MeromorphicFn {
    num: HoloExpr,
    den: HoloExpr,
}

impl MeromorphicFn {
    pub fn new(num: HoloExpr, den: HoloExpr) -> Result<Self> {
        if den.is_zero() {
            return Err(NevError::Config("denominator is identically zero".into()));
        }
        Ok(Self { num, den })
    }

    pub fn from_holo(e: HoloExpr) -> Self {
        Self { num: e, den: HoloExpr::one() }
    }

    pub fn num(&self) -> &HoloExpr {
        &self.num
    }

    pub fn den(&self) -> &HoloExpr {
        &self.den
    }

    pub fn eval_scaled(&self, z: Complex64) -> Result<Scaled> {
        let d = self.den.eval_scaled(z);
        self.num
            .eval_scaled(z)
            .div(&d)
            .ok_or_else(|| NevError::Pole(format!("denominator vanishes at z = {z}")))
    }

    /// The curve `[den : num]` in P¹.
    pub fn as_curve(&self) -> Result<ProjectiveCurve> {
        ProjectiveCurve::new(vec![self.den.clone(), self.num.clone()])
    }

    pub fn is_constant(&self) -> bool {
        (&(&self.num.derivative() * &self.den) - &(&self.num * &self.den.derivative())).is_zero()
    }

    pub fn derivative(&self) -> Self {
        if let Some(c) = self.den.as_constant() {
            let _ = c;
            return Self { num: self.num.derivative(), den: self.den.clone() };
        }
        Self {
            num: &(&self.num.derivative() * &self.den) - &(&self.num * &self.den.derivative()),
            den: &self.den * &self.den,
        }
    }

    /// `𝔛^k(ψ)`.
    pub fn xderive(&self, field: &VectorField, k: usize) -> Self {
        let mut out = self.clone();
        for _ in 0..k {
            let d = out.derivative();
            out = if field.is_standard() {
                d
            } else {
                Self { num: field.coefficient() * &d.num, den: d.den }
            };
        }
        out
    }

    /// `ψ − ζ` as a holomorphic numerator over the same denominator.
    pub fn shifted_numerator(&self, zeta: &GaussRat) -> HoloExpr {
        &self.num - &self.den.scale(zeta)
    }
}
