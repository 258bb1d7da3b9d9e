//! Zeros of exp-polynomials in a disc.
//!
//! Polynomials (and single terms `p·e^q`, whose zeros are those of `p`) go
//! through an exact square-free decomposition, companion-matrix eigenvalues
//! and Newton polishing. Genuine sums of exponentials are isolated by
//! argument-principle counts on recursively split rectangles. Either way
//! the total is checked against one winding number on the disc boundary.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{NevError, Result};
use crate::exact::ExactPoly;
use crate::holo::{horner, HoloExpr};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zero {
    pub z: Complex64,
    pub multiplicity: u32,
}

const NEAR_ZERO_REL: f64 = -27.0; // log(1e-12)
const MAX_SEGMENTS: usize = 1 << 20;
// irrational offsets keep split lines away from lattices of zeros
const SPLITS: [f64; 5] = [0.513_274_1, 0.486_837_2, 0.537_914_6, 0.462_190_3, 0.571_428_9];

/// All complex roots of a nonzero polynomial with exact multiplicities.
pub fn polynomial_roots(p: &ExactPoly) -> Result<Vec<Zero>> {
    let Some(deg) = p.degree() else {
        return Err(NevError::Counting("zero polynomial has no isolated zeros".into()));
    };
    if deg == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(deg);
    for (factor, mult) in p.square_free() {
        let coeffs = factor.to_complex();
        let d = coeffs.len() - 1;
        if d == 1 {
            let root = factor.coeffs[0].div(&factor.coeffs[1]).expect("monic");
            out.push(Zero { z: -root.to_complex(), multiplicity: mult });
            continue;
        }
        // monic companion matrix
        let lead = coeffs[d];
        let mut m = DMatrix::<Complex64>::zeros(d, d);
        for i in 1..d {
            m[(i, i - 1)] = Complex64::new(1.0, 0.0);
        }
        for i in 0..d {
            m[(i, d - 1)] = -coeffs[i] / lead;
        }
        let schur = m
            .try_schur(1e-15, 10_000)
            .ok_or_else(|| NevError::Numerical("companion eigenvalue iteration did not converge".into()))?;
        let eig = schur
            .eigenvalues()
            .ok_or_else(|| NevError::Numerical("complex Schur form not triangular".into()))?;
        let dcoeffs: Vec<Complex64> = (1..=d).map(|k| coeffs[k] * k as f64).collect();
        for mut z in eig.iter().copied() {
            for _ in 0..30 {
                let f = horner(&coeffs, z);
                let fp = horner(&dcoeffs, z);
                if fp == Complex64::new(0.0, 0.0) {
                    break;
                }
                let step = f / fp;
                z -= step;
                if step.norm() <= 1e-16 * z.norm().max(1e-300) {
                    break;
                }
            }
            out.push(Zero { z, multiplicity: mult });
        }
    }
    sort_zeros(&mut out);
    Ok(out)
}

fn sort_zeros(z: &mut [Zero]) {
    z.sort_by(|a, b| {
        a.z.norm()
            .total_cmp(&b.z.norm())
            .then(a.z.arg().total_cmp(&b.z.arg()))
    });
}

#[derive(Debug)]
enum WalkError {
    NearZero(Complex64),
    Fatal(NevError),
}

impl From<WalkError> for NevError {
    fn from(e: WalkError) -> Self {
        match e {
            WalkError::NearZero(z) => NevError::Counting(format!("zero on or near the contour at z = {z}")),
            WalkError::Fatal(e) => e,
        }
    }
}

struct Walker<'a> {
    f: &'a HoloExpr,
    /// Bound on |q'| per unit length used to seed the segmentation.
    rate: Box<dyn Fn(f64) -> f64 + 'a>,
    max_poly_degree: usize,
}

impl<'a> Walker<'a> {
    fn new(f: &'a HoloExpr) -> Self {
        let args: Vec<Vec<f64>> = f
            .terms()
            .map(|(_, q)| q.to_complex().iter().map(|c| c.norm()).collect())
            .collect();
        let max_poly_degree = f.terms().map(|(p, _)| p.degree().unwrap_or(0)).max().unwrap_or(0);
        let rate = Box::new(move |rho: f64| {
            args.iter()
                .map(|a| a.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c * rho.powi(k as i32 - 1)).sum::<f64>())
                .fold(0.0, f64::max)
        });
        Self { f, rate, max_poly_degree }
    }

    fn phase(&self, z: Complex64) -> std::result::Result<Complex64, WalkError> {
        let v = self.f.eval_scaled(z);
        if v.is_zero() || v.log < self.f.max_term_log(z) + NEAR_ZERO_REL {
            return Err(WalkError::NearZero(z));
        }
        Ok(v.phase)
    }

    /// Total change of arg f along `path(t)`, t ∈ [0,1].
    fn walk<P>(&self, path: &P, length: f64, rho_max: f64) -> std::result::Result<f64, WalkError>
    where
        P: Fn(f64) -> Complex64,
    {
        let seg = ((length * (2.0 * (self.rate)(rho_max) + 1.0) / 0.25).ceil() as usize
            + 8 * (self.max_poly_degree + 1))
            .clamp(8, MAX_SEGMENTS);
        let mut total = 0.0;
        let mut t0 = 0.0;
        let mut p0 = self.phase(path(0.0))?;
        for k in 1..=seg {
            let t1 = k as f64 / seg as f64;
            let p1 = self.phase(path(t1))?;
            total += self.segment(path, t0, t1, p0, p1, 0)?;
            t0 = t1;
            p0 = p1;
        }
        Ok(total)
    }

    fn segment<P>(&self, path: &P, t0: f64, t1: f64, p0: Complex64, p1: Complex64, depth: u32) -> std::result::Result<f64, WalkError>
    where
        P: Fn(f64) -> Complex64,
    {
        let tm = 0.5 * (t0 + t1);
        let pm = self.phase(path(tm))?;
        let d1 = (pm / p0).arg();
        let d2 = (p1 / pm).arg();
        let whole = (p1 / p0).arg();
        if d1.abs() <= 0.3 && d2.abs() <= 0.3 && (whole - d1 - d2).abs() < 1e-9 {
            return Ok(d1 + d2);
        }
        if depth > 60 {
            return Err(WalkError::Fatal(NevError::Numerical(format!(
                "argument tracking failed to resolve near z = {}",
                path(tm)
            ))));
        }
        Ok(self.segment(path, t0, tm, p0, pm, depth + 1)? + self.segment(path, tm, t1, pm, p1, depth + 1)?)
    }

    fn rect_count(&self, r: &Rect) -> std::result::Result<i64, WalkError> {
        let corners = [
            Complex64::new(r.x0, r.y0),
            Complex64::new(r.x1, r.y0),
            Complex64::new(r.x1, r.y1),
            Complex64::new(r.x0, r.y1),
        ];
        let rho = corners.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut total = 0.0;
        for k in 0..4 {
            let a = corners[k];
            let b = corners[(k + 1) % 4];
            total += self.walk(&|t: f64| a + (b - a) * t, (b - a).norm(), rho)?;
        }
        round_winding(total)
    }

    fn circle_count(&self, radius: f64) -> std::result::Result<i64, WalkError> {
        let total = self.walk(
            &|t: f64| Complex64::from_polar(radius, 2.0 * PI * t),
            2.0 * PI * radius,
            radius,
        )?;
        round_winding(total)
    }
}

fn round_winding(total: f64) -> std::result::Result<i64, WalkError> {
    let w = total / (2.0 * PI);
    let k = w.round();
    if (w - k).abs() > 0.05 {
        return Err(WalkError::Fatal(NevError::Numerical(format!("winding number {w} is not near an integer"))));
    }
    Ok(k as i64)
}

#[derive(Clone, Copy, Debug)]
struct Rect {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Rect {
    fn size(&self) -> f64 {
        (self.x1 - self.x0).max(self.y1 - self.y0)
    }

    fn center(&self) -> Complex64 {
        Complex64::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    fn contains(&self, z: Complex64, slack: f64) -> bool {
        z.re >= self.x0 - slack && z.re <= self.x1 + slack && z.im >= self.y0 - slack && z.im <= self.y1 + slack
    }

    fn split(&self, fx: f64, fy: f64) -> [Rect; 4] {
        let xm = self.x0 + fx * (self.x1 - self.x0);
        let ym = self.y0 + fy * (self.y1 - self.y0);
        [
            Rect { x0: self.x0, x1: xm, y0: self.y0, y1: ym },
            Rect { x0: xm, x1: self.x1, y0: self.y0, y1: ym },
            Rect { x0: self.x0, x1: xm, y0: ym, y1: self.y1 },
            Rect { x0: xm, x1: self.x1, y0: ym, y1: self.y1 },
        ]
    }
}

/// Number of zeros (with multiplicity) inside the circle of radius
/// `radius`, by the argument principle.
pub fn winding_count(f: &HoloExpr, radius: f64) -> Result<i64> {
    if f.is_zero() {
        return Err(NevError::Counting("identically zero function".into()));
    }
    Ok(Walker::new(f).circle_count(radius)?)
}

fn newton(f: &HoloExpr, df: &HoloExpr, mut z: Complex64, iters: usize) -> Option<Complex64> {
    for _ in 0..iters {
        let step = f.eval_scaled(z).div(&df.eval_scaled(z))?.to_complex();
        if !step.is_finite() {
            return None;
        }
        z -= step;
        if step.norm() <= 1e-15 * z.norm().max(1.0) {
            return Some(z);
        }
    }
    let last = f.eval_scaled(z);
    (last.is_zero() || last.log < f.max_term_log(z) + NEAR_ZERO_REL).then_some(z)
}

/// Zeros of `f` with `|z| < radius`, multiplicities included, certified
/// against the boundary winding number.
pub fn zeros_in_disc(f: &HoloExpr, radius: f64) -> Result<Vec<Zero>> {
    if f.is_zero() {
        return Err(NevError::Counting("identically zero function has no isolated zeros".into()));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(NevError::Range(format!("disc radius {radius} must be positive and finite")));
    }
    let mut found = match f.single_term() {
        Some((p, _)) => polynomial_roots(p)?.into_iter().filter(|z| z.z.norm() < radius).collect(),
        None => subdivide(f, radius)?,
    };
    let total: i64 = found.iter().map(|z| z.multiplicity as i64).sum();
    let winding = winding_count(f, radius)?;
    if total != winding {
        return Err(NevError::Counting(format!(
            "found {total} zeros in |z| < {radius} but the boundary winding number is {winding}"
        )));
    }
    sort_zeros(&mut found);
    Ok(found)
}

fn subdivide(f: &HoloExpr, radius: f64) -> Result<Vec<Zero>> {
    let walker = Walker::new(f);
    let df = f.derivative();
    let mut start = None;
    for (k, &s) in SPLITS.iter().enumerate() {
        let half = radius * (1.0 + 0.01 * s + 1e-3 * k as f64);
        let r = Rect { x0: -half, x1: half * (1.0 + 1e-4 * s), y0: -half * (1.0 + 3e-4 * s), y1: half };
        match walker.rect_count(&r) {
            Ok(c) => {
                start = Some((r, c));
                break;
            }
            Err(WalkError::NearZero(_)) => continue,
            Err(WalkError::Fatal(e)) => return Err(e),
        }
    }
    let (root_rect, root_count) =
        start.ok_or_else(|| NevError::Counting("could not place an initial contour free of zeros".into()))?;
    let tiny = 1e-10 * radius.max(1.0);
    let mut stack = vec![(root_rect, root_count)];
    let mut out: Vec<Zero> = Vec::new();
    while let Some((rect, count)) = stack.pop() {
        if count <= 0 {
            if count < 0 {
                return Err(NevError::Counting("negative zero count for a holomorphic function".into()));
            }
            continue;
        }
        if count == 1 {
            if let Some(z) = newton(f, &df, rect.center(), 60) {
                if rect.contains(z, 1e-12 * rect.size()) {
                    out.push(Zero { z, multiplicity: 1 });
                    continue;
                }
            }
        }
        if rect.size() < tiny {
            let z = newton(f, &df, rect.center(), 60).filter(|z| rect.contains(*z, rect.size())).unwrap_or(rect.center());
            out.push(Zero { z, multiplicity: count as u32 });
            continue;
        }
        let mut children = None;
        for &sx in &SPLITS {
            let sy = 1.0 - sx + 0.0071;
            let kids = rect.split(sx, sy);
            let mut counts = [0i64; 4];
            let mut ok = true;
            for (i, k) in kids.iter().enumerate() {
                match walker.rect_count(k) {
                    Ok(c) => counts[i] = c,
                    Err(WalkError::NearZero(_)) => {
                        ok = false;
                        break;
                    }
                    Err(WalkError::Fatal(e)) => return Err(e),
                }
            }
            if ok && counts.iter().sum::<i64>() == count {
                children = Some((kids, counts));
                break;
            }
        }
        let (kids, counts) = children.ok_or_else(|| {
            NevError::Counting(format!("rectangle subdivision lost zeros near {}", rect.center()))
        })?;
        for i in 0..4 {
            stack.push((kids[i], counts[i]));
        }
    }
    Ok(out.into_iter().filter(|z| z.z.norm() < radius).collect())
}
