//! Text syntax for expressions, curves and forms.
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('+' | '-') unary | power
//! power  := atom ('^' integer)?
//! atom   := number | 'i' | 'z' | 'w_k' | 'exp' '(' expr ')' | '(' expr ')'
//! number := digits ('.' digits)? (('e' | 'E') ('+' | '-')? digits)?
//! curve  := '[' expr (':' expr)+ ']'
//! ```
//!
//! Numbers are read exactly as rationals. `exp` takes a polynomial argument.
//! Holomorphic expressions may divide by constants only; meromorphic
//! functions may divide by any expression. Forms use the variables
//! `w_0 … w_n` (also written `w0 … wn`) and must be homogeneous.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::divisor::{Exponents, HomogeneousPoly};
use crate::error::{NevError, Result};
use crate::exact::GaussRat;
use crate::holo::{HoloExpr, MeromorphicFn, ProjectiveCurve};

const MAX_POWER: u32 = 64;

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(BigRational),
    Ident(String),
    Sym(char),
    End,
}

fn err<T>(pos: usize, msg: impl Into<String>) -> Result<T> {
    Err(NevError::Parse { pos, msg: msg.into() })
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|x| x.1.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i].1 == 'e' || chars[i].1 == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j].1 == '+' || chars[j].1 == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].1.is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].1.is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().map(|x| x.1).collect();
            out.push((pos, Tok::Num(parse_decimal(&text).ok_or(NevError::Parse {
                pos,
                msg: format!("malformed number '{text}'"),
            })?)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            out.push((pos, Tok::Ident(chars[start..i].iter().map(|x| x.1).collect())));
        } else if "+-*/^()[]:".contains(c) {
            out.push((pos, Tok::Sym(c)));
            i += 1;
        } else {
            return err(pos, format!("unexpected character '{c}'"));
        }
    }
    out.push((src.len(), Tok::End));
    Ok(out)
}

fn parse_decimal(text: &str) -> Option<BigRational> {
    let (mantissa, exp) = match text.find(['e', 'E']) {
        Some(k) => (&text[..k], text[k + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int, frac) = match mantissa.split_once('.') {
        Some((a, b)) => (a, b),
        None => (mantissa, ""),
    };
    if frac.contains('.') || (int.is_empty() && frac.is_empty()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let n: BigInt = digits.parse().ok()?;
    let scale = exp - frac.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    let mut v = BigRational::from_integer(n);
    if scale >= 0 {
        v *= num_traits::pow(ten, scale as usize);
    } else {
        v /= num_traits::pow(ten, (-scale) as usize);
    }
    Some(v)
}

#[derive(Clone, Debug)]
enum Node {
    Num(BigRational),
    I,
    Z,
    W(usize),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>, usize),
    Neg(Box<Node>),
    Pow(Box<Node>, u32),
    Exp(Box<Node>, usize),
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self> {
        Ok(Self { toks: tokenize(src)?, at: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> (usize, Tok) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            err(self.pos(), format!("expected '{c}', found {}", describe(self.peek())))
        }
    }

    fn finish(&mut self) -> Result<()> {
        match self.peek() {
            Tok::End => Ok(()),
            t => err(self.pos(), format!("unexpected {} after expression", describe(t))),
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if *self.peek() == Tok::Sym('/') {
                let pos = self.bump().0;
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?), pos);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat('-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat('^') {
            let pos = self.pos();
            match self.bump().1 {
                Tok::Num(v) if v.is_integer() && v >= BigRational::zero() => {
                    let k: u32 = v.to_integer().try_into().unwrap_or(u32::MAX);
                    if k > MAX_POWER {
                        return err(pos, format!("exponent above {MAX_POWER}"));
                    }
                    Ok(Node::Pow(Box::new(base), k))
                }
                t => err(pos, format!("expected a non-negative integer exponent, found {}", describe(&t))),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Node> {
        let pos = self.pos();
        match self.bump().1 {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::Sym('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "i" => Ok(Node::I),
                "z" => Ok(Node::Z),
                "exp" => {
                    self.expect('(')?;
                    let e = self.expr()?;
                    self.expect(')')?;
                    Ok(Node::Exp(Box::new(e), pos))
                }
                _ => match coordinate_index(&name) {
                    Some(k) => Ok(Node::W(k)),
                    None => err(pos, format!("unknown name '{name}'")),
                },
            },
            t => err(pos, format!("expected an expression, found {}", describe(&t))),
        }
    }
}

fn coordinate_index(name: &str) -> Option<usize> {
    let rest = name.strip_prefix('w')?;
    let rest = rest.strip_prefix('_').unwrap_or(rest);
    if rest.is_empty() || !rest.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("'{s}'"),
        Tok::Sym(c) => format!("'{c}'"),
        Tok::End => "end of input".into(),
    }
}

/// A quotient `num/den` of exp-polynomials.
#[derive(Clone)]
struct Frac {
    num: HoloExpr,
    den: HoloExpr,
}

impl Frac {
    fn holo(e: HoloExpr) -> Self {
        Self { num: e, den: HoloExpr::one() }
    }

    /// Folds a constant denominator into the numerator.
    fn normal(self) -> Self {
        match self.den.as_constant() {
            Some(c) if !(c == GaussRat::one()) => {
                let inv = c.inv().expect("nonzero denominator");
                Self { num: self.num.scale(&inv), den: HoloExpr::one() }
            }
            _ => self,
        }
    }
}

fn rat(v: BigRational) -> GaussRat {
    GaussRat::real(v)
}

fn eval_frac(node: &Node) -> Result<Frac> {
    Ok(match node {
        Node::Num(v) => Frac::holo(HoloExpr::constant(rat(v.clone()))),
        Node::I => Frac::holo(HoloExpr::constant(GaussRat::i())),
        Node::Z => Frac::holo(HoloExpr::z()),
        Node::W(k) => {
            return Err(NevError::Config(format!("coordinate w_{k} is not allowed in a function of z")));
        }
        Node::Add(a, b) | Node::Sub(a, b) => {
            let (x, y) = (eval_frac(a)?, eval_frac(b)?);
            let (p, q) = (&x.num * &y.den, &y.num * &x.den);
            let num = if matches!(node, Node::Add(..)) { &p + &q } else { &p - &q };
            Frac { num, den: &x.den * &y.den }.normal()
        }
        Node::Mul(a, b) => {
            let (x, y) = (eval_frac(a)?, eval_frac(b)?);
            Frac { num: &x.num * &y.num, den: &x.den * &y.den }.normal()
        }
        Node::Div(a, b, pos) => {
            let (x, y) = (eval_frac(a)?, eval_frac(b)?);
            if y.num.is_zero() {
                return err(*pos, "division by zero");
            }
            Frac { num: &x.num * &y.den, den: &x.den * &y.num }.normal()
        }
        Node::Neg(a) => {
            let x = eval_frac(a)?;
            Frac { num: -&x.num, den: x.den }
        }
        Node::Pow(a, k) => {
            let x = eval_frac(a)?;
            Frac { num: x.num.pow(*k), den: x.den.pow(*k) }
        }
        Node::Exp(a, pos) => {
            let x = eval_frac(a)?.normal();
            let p = match (x.den.as_constant(), x.num.as_polynomial()) {
                (Some(_), Some(p)) => p,
                _ if x.num.is_zero() => crate::exact::ExactPoly::new(vec![]),
                _ => return err(*pos, "exp needs a polynomial argument"),
            };
            Frac::holo(HoloExpr::exp_poly(p))
        }
    })
}

fn lower(err: NevError, pos: usize) -> NevError {
    match err {
        NevError::Config(msg) => NevError::Parse { pos, msg },
        e => e,
    }
}

/// Parses a holomorphic exp-polynomial in z.
pub fn parse_holo(src: &str) -> Result<HoloExpr> {
    let mut p = Parser::new(src)?;
    let node = p.expr()?;
    p.finish()?;
    let f = eval_frac(&node).map_err(|e| lower(e, 0))?.normal();
    if f.den.as_constant().is_none() {
        return err(0, "expression has a non-constant denominator; a holomorphic expression is required");
    }
    Ok(f.num)
}

/// Parses a meromorphic function `num/den`.
pub fn parse_meromorphic(src: &str) -> Result<MeromorphicFn> {
    let mut p = Parser::new(src)?;
    let node = p.expr()?;
    p.finish()?;
    let f = eval_frac(&node).map_err(|e| lower(e, 0))?.normal();
    MeromorphicFn::new(f.num, f.den)
}

/// Parses `[f_0 : … : f_n]`.
pub fn parse_curve(src: &str) -> Result<ProjectiveCurve> {
    let mut p = Parser::new(src)?;
    p.expect('[')?;
    let mut comps = Vec::new();
    loop {
        let pos = p.pos();
        let node = p.expr()?;
        let f = eval_frac(&node).map_err(|e| lower(e, pos))?.normal();
        if f.den.as_constant().is_none() {
            return err(pos, "curve components must be holomorphic");
        }
        comps.push(f.num);
        if p.eat(':') {
            continue;
        }
        p.expect(']')?;
        break;
    }
    p.finish()?;
    if comps.len() < 2 {
        return err(0, "a curve needs at least two components");
    }
    ProjectiveCurve::new(comps)
}

type MPoly = BTreeMap<Exponents, GaussRat>;

fn mpoly_const(n: usize, c: GaussRat) -> MPoly {
    let mut m = MPoly::new();
    if !c.is_zero() {
        m.insert(vec![0; n + 1], c);
    }
    m
}

fn mpoly_add(a: &MPoly, b: &MPoly, sign: i64) -> MPoly {
    let mut out = a.clone();
    let s = GaussRat::from_int(sign);
    for (e, c) in b {
        let entry = out.entry(e.clone()).or_insert_with(GaussRat::zero);
        *entry = &*entry + &(&s * c);
    }
    out.retain(|_, c| !c.is_zero());
    out
}

fn mpoly_mul(a: &MPoly, b: &MPoly) -> MPoly {
    let mut out = MPoly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Exponents = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            let entry = out.entry(e).or_insert_with(GaussRat::zero);
            *entry = &*entry + &(ca * cb);
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

fn eval_form(node: &Node, n: usize) -> Result<MPoly> {
    Ok(match node {
        Node::Num(v) => mpoly_const(n, rat(v.clone())),
        Node::I => mpoly_const(n, GaussRat::i()),
        Node::Z => return Err(NevError::Config("z is not allowed in a form; use w_0 … w_n".into())),
        Node::W(k) => {
            if *k > n {
                return Err(NevError::Config(format!("w_{k} does not exist on P^{n}")));
            }
            let mut e = vec![0; n + 1];
            e[*k] = 1;
            MPoly::from([(e, GaussRat::one())])
        }
        Node::Add(a, b) => mpoly_add(&eval_form(a, n)?, &eval_form(b, n)?, 1),
        Node::Sub(a, b) => mpoly_add(&eval_form(a, n)?, &eval_form(b, n)?, -1),
        Node::Mul(a, b) => mpoly_mul(&eval_form(a, n)?, &eval_form(b, n)?),
        Node::Div(a, b, pos) => {
            let d = eval_form(b, n)?;
            let c = match d.len() {
                0 => return err(*pos, "division by zero"),
                1 if d.keys().next().is_some_and(|e| e.iter().all(|&x| x == 0)) => d.values().next().cloned().expect("one"),
                _ => return err(*pos, "forms may only be divided by constants"),
            };
            let inv = c.inv().expect("nonzero");
            eval_form(a, n)?.into_iter().map(|(e, v)| (e, &v * &inv)).collect()
        }
        Node::Neg(a) => mpoly_add(&MPoly::new(), &eval_form(a, n)?, -1),
        Node::Pow(a, k) => {
            let base = eval_form(a, n)?;
            let mut acc = mpoly_const(n, GaussRat::one());
            for _ in 0..*k {
                acc = mpoly_mul(&acc, &base);
            }
            acc
        }
        Node::Exp(_, pos) => return err(*pos, "exp is not allowed in a form"),
    })
}

/// Parses a homogeneous form on Pⁿ.
pub fn parse_form(src: &str, n: usize) -> Result<HomogeneousPoly> {
    let mut p = Parser::new(src)?;
    let node = p.expr()?;
    p.finish()?;
    let poly = eval_form(&node, n).map_err(|e| lower(e, 0))?;
    HomogeneousPoly::from_terms(n, poly).map_err(|e| lower(e, 0))
}

/// Parses an exact rational such as `3/2`, `-0.25` or `7`.
pub fn parse_rational(src: &str) -> Result<BigRational> {
    let mut p = Parser::new(src)?;
    let node = p.expr()?;
    p.finish()?;
    let v = eval_form(&node, 0).map_err(|e| lower(e, 0))?;
    match v.len() {
        0 => Ok(BigRational::zero()),
        1 => {
            let (e, c) = v.into_iter().next().expect("one");
            if e.iter().any(|&x| x != 0) || !c.im.is_zero() {
                return err(0, "expected a real rational number");
            }
            Ok(c.re)
        }
        _ => err(0, "expected a real rational number"),
    }
}

/// Canonical text of a rational, re-readable by [`parse_rational`].
pub fn format_rational(v: &BigRational) -> String {
    if v.denom().is_one() {
        v.numer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() <= 1e-12 * b.norm().max(1.0)
    }

    #[test]
    fn holomorphic_expressions() {
        let e = parse_holo("3*z^2 - exp(2*z) + i/2").unwrap();
        let z = Complex64::new(0.3, -0.7);
        let want = 3.0 * z * z - (2.0 * z).exp() + Complex64::new(0.0, 0.5);
        assert!(close(e.eval(z), want));
        let g = parse_holo("exp(z^2 + 0.5*z)*(1+z)").unwrap();
        assert!(close(g.eval(z), (z * z + 0.5 * z).exp() * (1.0 + z)));
        assert!(parse_holo("1e-3*z").unwrap() == parse_holo("z/1000").unwrap());
    }

    #[test]
    fn parse_errors_carry_positions() {
        match parse_holo("exp(") {
            Err(NevError::Parse { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("{other:?}"),
        }
        match parse_holo("z + $") {
            Err(NevError::Parse { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("{other:?}"),
        }
        match parse_holo("exp(exp(z))") {
            Err(NevError::Parse { pos, msg }) => {
                assert_eq!(pos, 0);
                assert!(msg.contains("polynomial"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_holo("1/z"), Err(NevError::Parse { .. })));
        assert!(matches!(parse_holo("z^-1"), Err(NevError::Parse { .. })));
        assert!(matches!(parse_holo("foo"), Err(NevError::Parse { .. })));
        assert!(matches!(parse_holo("z/0"), Err(NevError::Parse { pos: 1, .. })));
    }

    #[test]
    fn meromorphic_and_curves() {
        let f = parse_meromorphic("(z^2 - 1)/(z + 2)").unwrap();
        let z = Complex64::new(0.4, 0.1);
        assert!(close(f.eval_scaled(z).unwrap().to_complex(), (z * z - 1.0) / (z + 2.0)));
        let c = parse_curve("[1 : exp(z) : exp(2*z)]").unwrap();
        assert_eq!(c.n(), 2);
        assert!(parse_curve("[1]").is_err());
        match parse_curve("[1 : exp(z)") {
            Err(NevError::Parse { pos, .. }) => assert_eq!(pos, 11),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn forms_and_rationals() {
        let h = parse_form("w_0 + w1 + 2*w_2", 2).unwrap();
        assert!(h.is_linear());
        let q = parse_form("(w_0 - i*w_1)^2/2", 1).unwrap();
        assert_eq!(q.degree(), 2);
        assert!(parse_form("w_0 + w_1^2", 1).is_err());
        assert!(parse_form("w_3", 2).is_err());
        assert!(parse_form("z", 1).is_err());
        assert_eq!(parse_rational("3/2").unwrap(), BigRational::new(3.into(), 2.into()));
        assert_eq!(parse_rational("-0.25").unwrap(), BigRational::new((-1).into(), 4.into()));
        assert_eq!(format_rational(&parse_rational("6/4").unwrap()), "3/2");
        assert!(parse_rational("w_0").is_err());
    }

    #[test]
    fn display_round_trip_of_forms() {
        let h = parse_form("3/2*w_0^2 - w_0*w_1 + i*w_1^2", 1).unwrap();
        let again = parse_form(&h.to_string(), 1).unwrap();
        assert_eq!(h, again);
    }
}
