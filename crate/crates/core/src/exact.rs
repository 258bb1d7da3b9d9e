//! Exact Gaussian-rational arithmetic.
//!
//! `GaussRat` is an element of ℚ(i). It backs vanishing-order computations,
//! rank tests for linear systems and the exact polynomial path of the root
//! finder. Every finite `f64` is a dyadic rational, so floating inputs convert
//! without loss.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GaussRat {
    pub re: BigRational,
    pub im: BigRational,
}

impl GaussRat {
    pub fn new(re: BigRational, im: BigRational) -> Self {
        Self { re, im }
    }

    pub fn from_int(v: i64) -> Self {
        Self::new(BigRational::from_integer(BigInt::from(v)), BigRational::zero())
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        Self::new(
            BigRational::new(BigInt::from(num), BigInt::from(den)),
            BigRational::zero(),
        )
    }

    pub fn real(re: BigRational) -> Self {
        Self::new(re, BigRational::zero())
    }

    pub fn i() -> Self {
        Self::new(BigRational::zero(), BigRational::one())
    }

    /// Exact conversion of a finite complex double.
    pub fn from_complex(z: Complex64) -> Option<Self> {
        Some(Self::new(
            BigRational::from_float(z.re)?,
            BigRational::from_float(z.im)?,
        ))
    }

    pub fn to_complex(&self) -> Complex64 {
        Complex64::new(
            self.re.to_f64().unwrap_or(f64::NAN),
            self.im.to_f64().unwrap_or(f64::NAN),
        )
    }

    pub fn conj(&self) -> Self {
        Self::new(self.re.clone(), -self.im.clone())
    }

    pub fn norm_sqr(&self) -> BigRational {
        &self.re * &self.re + &self.im * &self.im
    }

    pub fn inv(&self) -> Option<Self> {
        let n = self.norm_sqr();
        if n.is_zero() {
            return None;
        }
        Some(Self::new(&self.re / &n, -(&self.im / &n)))
    }

    pub fn div(&self, other: &Self) -> Option<Self> {
        other.inv().map(|inv| self * &inv)
    }

    pub fn is_real(&self) -> bool {
        self.im.is_zero()
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Self::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }
}

impl Zero for GaussRat {
    fn zero() -> Self {
        Self::new(BigRational::zero(), BigRational::zero())
    }
    fn is_zero(&self) -> bool {
        self.re.is_zero() && self.im.is_zero()
    }
}

impl One for GaussRat {
    fn one() -> Self {
        Self::new(BigRational::one(), BigRational::zero())
    }
}

impl<'a> Add<&'a GaussRat> for &'a GaussRat {
    type Output = GaussRat;
    fn add(self, o: &GaussRat) -> GaussRat {
        GaussRat::new(&self.re + &o.re, &self.im + &o.im)
    }
}

impl<'a> Sub<&'a GaussRat> for &'a GaussRat {
    type Output = GaussRat;
    fn sub(self, o: &GaussRat) -> GaussRat {
        GaussRat::new(&self.re - &o.re, &self.im - &o.im)
    }
}

impl<'a> Mul<&'a GaussRat> for &'a GaussRat {
    type Output = GaussRat;
    fn mul(self, o: &GaussRat) -> GaussRat {
        GaussRat::new(
            &self.re * &o.re - &self.im * &o.im,
            &self.re * &o.im + &self.im * &o.re,
        )
    }
}

impl Add for GaussRat {
    type Output = GaussRat;
    fn add(self, o: GaussRat) -> GaussRat {
        &self + &o
    }
}

impl Sub for GaussRat {
    type Output = GaussRat;
    fn sub(self, o: GaussRat) -> GaussRat {
        &self - &o
    }
}

impl Mul for GaussRat {
    type Output = GaussRat;
    fn mul(self, o: GaussRat) -> GaussRat {
        &self * &o
    }
}

impl Neg for GaussRat {
    type Output = GaussRat;
    fn neg(self) -> GaussRat {
        GaussRat::new(-self.re, -self.im)
    }
}

impl Neg for &GaussRat {
    type Output = GaussRat;
    fn neg(self) -> GaussRat {
        GaussRat::new(-self.re.clone(), -self.im.clone())
    }
}

fn fmt_rat(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl fmt::Display for GaussRat {
    /// Canonical form accepted back by the expression grammar.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.re.is_zero(), self.im.is_zero()) {
            (_, true) => write!(f, "{}", fmt_rat(&self.re)),
            (true, false) => write!(f, "{}*i", fmt_rat(&self.im)),
            (false, false) => {
                let sign = if self.im.is_negative() { "-" } else { "+" };
                write!(
                    f,
                    "({}{}{}*i)",
                    fmt_rat(&self.re),
                    sign,
                    fmt_rat(&self.im.abs())
                )
            }
        }
    }
}

/// Rank of a matrix (rows of equal length) by Gaussian
/// elimination over ℚ(i).
pub fn rank(rows: &[Vec<GaussRat>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let mut m: Vec<Vec<GaussRat>> = rows.to_vec();
    let ncols = m[0].len();
    let mut rank = 0;
    for col in 0..ncols {
        let Some(piv) = (rank..m.len()).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, piv);
        let inv = m[rank][col].inv().expect("nonzero pivot");
        let pivot_row: Vec<GaussRat> = m[rank].iter().map(|v| v * &inv).collect();
        for r in (rank + 1)..m.len() {
            if m[r][col].is_zero() {
                continue;
            }
            let factor = m[r][col].clone();
            for c in col..ncols {
                let delta = &factor * &pivot_row[c];
                m[r][c] = &m[r][c] - &delta;
            }
        }
        m[rank] = pivot_row;
        rank += 1;
        if rank == m.len() {
            break;
        }
    }
    rank
}

/// A nonzero vector in the right kernel of `rows`, if one exists.
pub fn kernel_vector(rows: &[Vec<GaussRat>], ncols: usize) -> Option<Vec<GaussRat>> {
    let mut m: Vec<Vec<GaussRat>> = rows.to_vec();
    let mut pivots: Vec<usize> = Vec::new();
    let mut r = 0;
    for col in 0..ncols {
        let Some(piv) = (r..m.len()).find(|&i| !m[i][col].is_zero()) else {
            continue;
        };
        m.swap(r, piv);
        let inv = m[r][col].inv().expect("nonzero pivot");
        m[r] = m[r].iter().map(|v| v * &inv).collect();
        for i in 0..m.len() {
            if i != r && !m[i][col].is_zero() {
                let factor = m[i][col].clone();
                for c in 0..ncols {
                    let delta = &factor * &m[r][c];
                    m[i][c] = &m[i][c] - &delta;
                }
            }
        }
        pivots.push(col);
        r += 1;
        if r == m.len() {
            break;
        }
    }
    let free = (0..ncols).find(|c| !pivots.contains(c))?;
    let mut v = vec![GaussRat::zero(); ncols];
    v[free] = GaussRat::one();
    for (row, &pc) in pivots.iter().enumerate() {
        v[pc] = -&m[row][free];
    }
    Some(v)
}

/// Dense univariate polynomial over ℚ(i), lowest degree first, no trailing zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactPoly {
    pub coeffs: Vec<GaussRat>,
}

impl ExactPoly {
    pub fn new(mut coeffs: Vec<GaussRat>) -> Self {
        while coeffs.last().is_some_and(|c| c.is_zero()) {
            coeffs.pop();
        }
        Self { coeffs }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn derivative(&self) -> Self {
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * &GaussRat::from_int(k as i64))
                .collect(),
        )
    }

    pub fn monic(&self) -> Self {
        match self.coeffs.last() {
            None => self.clone(),
            Some(lead) => {
                let inv = lead.inv().expect("nonzero leading coefficient");
                Self::new(self.coeffs.iter().map(|c| c * &inv).collect())
            }
        }
    }

    /// Euclidean division; `None` when dividing by zero.
    pub fn div_rem(&self, d: &Self) -> Option<(Self, Self)> {
        let dd = d.degree()?;
        let lead_inv = d.coeffs[dd].inv()?;
        let mut rem = self.coeffs.clone();
        let mut quot = vec![GaussRat::zero(); rem.len().saturating_sub(dd).max(1)];
        while rem.len() > dd && !rem.is_empty() {
            let top = rem.len() - 1;
            let c = &rem[top] * &lead_inv;
            let shift = top - dd;
            for (j, dc) in d.coeffs.iter().enumerate() {
                let delta = &c * dc;
                rem[shift + j] = &rem[shift + j] - &delta;
            }
            quot[shift] = c;
            while rem.last().is_some_and(|x| x.is_zero()) {
                rem.pop();
            }
        }
        Some((Self::new(quot), Self::new(rem)))
    }

    pub fn gcd(&self, other: &Self) -> Self {
        let mut a = self.clone();
        let mut b = other.clone();
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b).expect("nonzero divisor");
            a = b;
            b = r;
        }
        a.monic()
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.coeffs.iter().map(GaussRat::to_complex).collect()
    }

    /// Yun's square-free decomposition: returns `(factor, multiplicity)` pairs
    /// with square-free, pairwise coprime, non-constant monic factors.
    pub fn square_free(&self) -> Vec<(ExactPoly, u32)> {
        let mut out = Vec::new();
        if self.degree().unwrap_or(0) == 0 {
            return out;
        }
        let f = self.monic();
        let fp = f.derivative();
        let a = f.gcd(&fp);
        let mut b = f.div_rem(&a).expect("gcd nonzero").0;
        let c = fp.div_rem(&a).expect("gcd nonzero").0;
        let mut d = sub_poly(&c, &b.derivative());
        let mut i = 1u32;
        while b.degree().unwrap_or(0) > 0 {
            let g = b.gcd(&d);
            if g.degree().unwrap_or(0) > 0 {
                out.push((g.clone(), i));
            }
            b = b.div_rem(&g).expect("nonzero").0;
            let c = d.div_rem(&g).expect("nonzero").0;
            d = sub_poly(&c, &b.derivative());
            i += 1;
        }
        out
    }
}

impl GaussRat {
    /// Total order by real then imaginary part, used for canonical sorting.
    pub fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.re.cmp(&other.re).then_with(|| self.im.cmp(&other.im))
    }
}

impl ExactPoly {
    pub fn constant(c: GaussRat) -> Self {
        Self::new(vec![c])
    }

    /// The monomial `z`.
    pub fn z() -> Self {
        Self::new(vec![GaussRat::zero(), GaussRat::one()])
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.coeffs.len().max(other.coeffs.len());
        let zero = GaussRat::zero();
        Self::new(
            (0..n)
                .map(|k| self.coeffs.get(k).unwrap_or(&zero) + other.coeffs.get(k).unwrap_or(&zero))
                .collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        sub_poly(self, other)
    }

    pub fn mul(&self, other: &Self) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::new(vec![]);
        }
        let mut out = vec![GaussRat::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] = &out[i + j] + &(a * b);
            }
        }
        Self::new(out)
    }

    pub fn scale(&self, c: &GaussRat) -> Self {
        Self::new(self.coeffs.iter().map(|v| v * c).collect())
    }

    pub fn neg(&self) -> Self {
        Self::new(self.coeffs.iter().map(|v| -v).collect())
    }

    /// Exact evaluation.
    pub fn eval_exact(&self, z: &GaussRat) -> GaussRat {
        let mut acc = GaussRat::zero();
        for c in self.coeffs.iter().rev() {
            acc = &(&acc * z) + c;
        }
        acc
    }

    /// Canonical order: degree first, then coefficients from the top.
    pub fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.coeffs.len().cmp(&other.coeffs.len()).then_with(|| {
            for (a, b) in self.coeffs.iter().rev().zip(other.coeffs.iter().rev()) {
                let c = a.canonical_cmp(b);
                if c != std::cmp::Ordering::Equal {
                    return c;
                }
            }
            std::cmp::Ordering::Equal
        })
    }

    /// True if the polynomial is a constant (or zero).
    pub fn is_constant(&self) -> bool {
        self.coeffs.len() <= 1
    }
}

impl fmt::Display for ExactPoly {
    /// Sum of `(c)*z^k` terms in increasing degree, re-parseable.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match k {
                0 => write!(f, "({c})")?,
                1 => write!(f, "({c})*z")?,
                _ => write!(f, "({c})*z^{k}")?,
            }
        }
        Ok(())
    }
}

fn sub_poly(a: &ExactPoly, b: &ExactPoly) -> ExactPoly {
    let n = a.coeffs.len().max(b.coeffs.len());
    let zero = GaussRat::zero();
    ExactPoly::new(
        (0..n)
            .map(|k| {
                let x = a.coeffs.get(k).unwrap_or(&zero);
                let y = b.coeffs.get(k).unwrap_or(&zero);
                x - y
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i64]) -> ExactPoly {
        ExactPoly::new(c.iter().map(|&v| GaussRat::from_int(v)).collect())
    }

    #[test]
    fn float_conversion_is_exact() {
        let z = Complex64::new(0.1, -2.5);
        let g = GaussRat::from_complex(z).unwrap();
        assert_eq!(g.to_complex(), z);
    }

    #[test]
    fn rank_of_dependent_rows() {
        let rows = vec![
            vec![GaussRat::from_int(1), GaussRat::from_int(0), GaussRat::from_int(0)],
            vec![GaussRat::from_int(0), GaussRat::from_int(1), GaussRat::from_int(0)],
            vec![GaussRat::from_int(1), GaussRat::from_int(1), GaussRat::from_int(0)],
        ];
        assert_eq!(rank(&rows), 2);
        let k = kernel_vector(&rows, 3).unwrap();
        assert_eq!(k[2], GaussRat::one());
    }

    #[test]
    fn square_free_of_cube_times_linear() {
        // (z-1)^3 (z+2) = z^4 - z^3 - 3z^2 + 5z - 2
        let f = p(&[-2, 5, -3, -1, 1]);
        let sf = f.square_free();
        assert_eq!(sf.len(), 2);
        assert_eq!(sf[0].1, 1);
        assert_eq!(sf[0].0, p(&[2, 1]));
        assert_eq!(sf[1].1, 3);
        assert_eq!(sf[1].0, p(&[-1, 1]));
    }

    #[test]
    fn display_round_trip_shape() {
        let g = GaussRat::new(BigRational::new(1.into(), 2.into()), BigRational::from_integer((-3).into()));
        assert_eq!(g.to_string(), "(1/2-3*i)");
    }
}
