//! Truncated multivariate Taylor jets.
//!
//! A [`Jet`] stores all Taylor coefficients `c_α` of a scalar function with
//! `|α| ≤ order`, so `f(x0 + δ) = Σ c_α δ^α + O(|δ|^{order+1})`. Coefficients
//! are laid out by total degree, which makes a lower-order jet a prefix of a
//! higher-order one. Binary operations between jets of different orders
//! truncate to the lower order, so quantities that consume derivatives lose
//! order automatically.

use smallvec::SmallVec;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::OnceLock;
use thiserror::Error;

pub const MAX_ORDER: usize = 6;
pub const MAX_VARS: usize = 5;


#[derive(Debug, Error, Clone, PartialEq)]
pub enum JetError {
    #[error("division by a jet whose constant term {0:e} is below 1e-14")]
    DivisionByZero(f64),
    #[error("sqrt of nonpositive constant term {0:e}")]
    SqrtNonPositive(f64),
    #[error("logarithm or power of nonpositive constant term {0:e}")]
    LogNonPositive(f64),
    #[error("jet orders differ: {0} vs {1}")]
    OrderMismatch(usize, usize),
    #[error("unsupported jet order {0} (maximum is 6)")]
    UnsupportedOrder(usize),
    #[error("outer jet expanded at a point {0:e} away from the inner value")]
    BasePointMismatch(f64),
    #[error("jet expects {expected} variables, got {got}")]
    VarMismatch { expected: usize, got: usize },
}

struct Table {
    exps: Vec<[u8; MAX_VARS]>,
    /// `deg_end[d]` = number of multi-indices of degree ≤ d.
    deg_end: [usize; MAX_ORDER + 1],
    /// `(i, j, k)` with `exps[i] + exps[j] = exps[k]`, sorted by degree of k.
    triples: Vec<(u16, u16, u16)>,
    tri_end: [usize; MAX_ORDER + 1],
    /// `up[i][v]` = index of `exps[i] + e_v`, or `u16::MAX` past the max order.
    up: Vec<[u16; MAX_VARS]>,
    /// For degree ≥ 1: a variable `v` with `α_v > 0` and the index of `α − e_v`.
    down: Vec<(u8, u16)>,
}

fn degree(e: &[u8; MAX_VARS]) -> usize {
    e.iter().map(|&x| x as usize).sum()
}

fn build_table(nvars: usize) -> Table {
    let mut exps: Vec<[u8; MAX_VARS]> = Vec::new();
    let mut deg_end = [0usize; MAX_ORDER + 1];
    for d in 0..=MAX_ORDER {
        let mut cur = [0u8; MAX_VARS];
        push_degree(nvars, 0, d, &mut cur, &mut exps);
        deg_end[d] = exps.len();
    }
    let index: std::collections::HashMap<[u8; MAX_VARS], usize> =
        exps.iter().enumerate().map(|(i, e)| (*e, i)).collect();

    let mut triples = Vec::new();
    for (i, ei) in exps.iter().enumerate() {
        for (j, ej) in exps.iter().enumerate() {
            if degree(ei) + degree(ej) > MAX_ORDER {
                continue;
            }
            let mut s = [0u8; MAX_VARS];
            for v in 0..MAX_VARS {
                s[v] = ei[v] + ej[v];
            }
            triples.push((i as u16, j as u16, index[&s] as u16));
        }
    }
    triples.sort_by_key(|&(_, _, k)| k);
    let mut tri_end = [0usize; MAX_ORDER + 1];
    for (d, end) in tri_end.iter_mut().enumerate() {
        *end = triples.partition_point(|&(_, _, k)| (k as usize) < deg_end[d]);
    }

    let up = exps
        .iter()
        .map(|e| {
            let mut r = [u16::MAX; MAX_VARS];
            for v in 0..nvars {
                let mut s = *e;
                s[v] += 1;
                if let Some(&k) = index.get(&s) {
                    r[v] = k as u16;
                }
            }
            r
        })
        .collect();
    let down = exps
        .iter()
        .map(|e| match (0..nvars).find(|&v| e[v] > 0) {
            Some(v) => {
                let mut s = *e;
                s[v] -= 1;
                (v as u8, index[&s] as u16)
            }
            None => (0, 0),
        })
        .collect();
    Table { exps, deg_end, triples, tri_end, up, down }
}

fn push_degree(nvars: usize, v: usize, left: usize, cur: &mut [u8; MAX_VARS], out: &mut Vec<[u8; MAX_VARS]>) {
    if v + 1 == nvars {
        cur[v] = left as u8;
        out.push(*cur);
        cur[v] = 0;
        return;
    }
    for k in (0..=left).rev() {
        cur[v] = k as u8;
        push_degree(nvars, v + 1, left - k, cur, out);
    }
    cur[v] = 0;
}

fn table(nvars: usize) -> &'static Table {
    static TABLES: [OnceLock<Table>; MAX_VARS] = [
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
    ];
    assert!((1..=MAX_VARS).contains(&nvars), "jets support 1..=5 variables");
    TABLES[nvars - 1].get_or_init(|| build_table(nvars))
}

/// Number of coefficients of a jet in `nvars` variables truncated at `order`.
pub fn ncoeffs(nvars: usize, order: usize) -> usize {
    table(nvars).deg_end[order]
}

/// Multi-indices of total degree ≤ `order`, in storage order.
pub fn multi_indices(nvars: usize, order: usize) -> &'static [[u8; MAX_VARS]] {
    let t = table(nvars);
    &t.exps[..t.deg_end[order]]
}

/// Storage position of a multi-index.
pub fn index_of(nvars: usize, alpha: &[u8]) -> Option<usize> {
    let mut e = [0u8; MAX_VARS];
    if alpha.len() > nvars {
        return None;
    }
    e[..alpha.len()].copy_from_slice(alpha);
    let d = degree(&e);
    if d > MAX_ORDER {
        return None;
    }
    let t = table(nvars);
    let lo = if d == 0 { 0 } else { t.deg_end[d - 1] };
    t.exps[lo..t.deg_end[d]].iter().position(|x| *x == e).map(|p| p + lo)
}

type Coeffs = SmallVec<[f64; 35]>;

#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    nvars: u8,
    order: u8,
    c: Coeffs,
}

impl Jet {
    pub fn zero(nvars: usize, order: usize) -> Jet {
        assert!(order <= MAX_ORDER, "jet order {order} exceeds {MAX_ORDER}");
        Jet { nvars: nvars as u8, order: order as u8, c: SmallVec::from_elem(0.0, ncoeffs(nvars, order)) }
    }

    pub fn constant(nvars: usize, order: usize, v: f64) -> Jet {
        let mut j = Jet::zero(nvars, order);
        j.c[0] = v;
        j
    }

    /// The coordinate function `x_var` expanded at `x0`.
    pub fn variable(nvars: usize, order: usize, var: usize, x0: f64) -> Jet {
        let mut j = Jet::constant(nvars, order, x0);
        if order >= 1 {
            j.c[1 + var] = 1.0;
        }
        j
    }

    pub fn from_coeffs(nvars: usize, order: usize, coeffs: &[f64]) -> Result<Jet, JetError> {
        if order > MAX_ORDER {
            return Err(JetError::UnsupportedOrder(order));
        }
        let n = ncoeffs(nvars, order);
        if coeffs.len() != n {
            return Err(JetError::VarMismatch { expected: n, got: coeffs.len() });
        }
        Ok(Jet { nvars: nvars as u8, order: order as u8, c: SmallVec::from_slice(coeffs) })
    }

    pub fn nvars(&self) -> usize {
        self.nvars as usize
    }

    pub fn order(&self) -> usize {
        self.order as usize
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.c
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Taylor coefficient `c_α`; zero beyond the carried order.
    pub fn coeff(&self, alpha: &[u8]) -> f64 {
        match index_of(self.nvars(), alpha) {
            Some(i) if i < self.c.len() => self.c[i],
            _ => 0.0,
        }
    }

    /// Partial derivative `∂^α f(x0) = α! c_α`.
    pub fn derivative(&self, alpha: &[u8]) -> f64 {
        let fact: f64 = alpha.iter().map(|&a| (1..=a as u32).product::<u32>() as f64).product();
        self.coeff(alpha) * fact
    }

    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.order() {
            return self.clone();
        }
        Jet { nvars: self.nvars, order: order as u8, c: SmallVec::from_slice(&self.c[..ncoeffs(self.nvars(), order)]) }
    }

    /// `∂f/∂x_var` as a jet of one lower order.
    ///
    /// Panics on an order-0 jet, which carries no derivative information.
    pub fn d(&self, var: usize) -> Jet {
        assert!(self.order > 0, "cannot differentiate an order-0 jet");
        let t = table(self.nvars());
        let order = self.order() - 1;
        let n = t.deg_end[order];
        let mut c: Coeffs = SmallVec::from_elem(0.0, n);
        for (i, ci) in c.iter_mut().enumerate() {
            let k = t.up[i][var] as usize;
            *ci = (t.exps[i][var] as f64 + 1.0) * self.c[k];
        }
        Jet { nvars: self.nvars, order: order as u8, c }
    }

    pub fn scale(&self, s: f64) -> Jet {
        let mut r = self.clone();
        r.c.iter_mut().for_each(|x| *x *= s);
        r
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut r = self.clone();
        r.c[0] += s;
        r
    }

    /// `self += s * other`, truncating to the lower order.
    pub fn axpy(&mut self, s: f64, other: &Jet) {
        if other.order < self.order {
            *self = self.truncate(other.order());
        }
        for (a, b) in self.c.iter_mut().zip(other.c.iter()) {
            *a += s * b;
        }
    }

    /// `self += a * b`, truncating to the lowest order involved.
    pub fn add_mul(&mut self, a: &Jet, b: &Jet) {
        let m = self.order.min(a.order).min(b.order) as usize;
        if m < self.order() {
            *self = self.truncate(m);
        }
        let t = table(self.nvars());
        for &(i, j, k) in &t.triples[..t.tri_end[m]] {
            self.c[k as usize] += a.c[i as usize] * b.c[j as usize];
        }
    }

    pub fn mul_jet(&self, other: &Jet) -> Jet {
        debug_assert_eq!(self.nvars, other.nvars);
        let m = self.order.min(other.order) as usize;
        let mut r = Jet::zero(self.nvars(), m);
        let t = table(self.nvars());
        for &(i, j, k) in &t.triples[..t.tri_end[m]] {
            r.c[k as usize] += self.c[i as usize] * other.c[j as usize];
        }
        r
    }

    /// `Σ_k derivs[k]/k! (f − f(x0))^k`: composition with a univariate function
    /// whose derivatives at `f(x0)` are `derivs`.
    pub fn compose_univariate(&self, derivs: &[f64]) -> Jet {
        let m = self.order();
        debug_assert!(derivs.len() > m);
        let mut tilde = self.clone();
        tilde.c[0] = 0.0;
        let mut fact = 1.0;
        for k in 1..=m {
            fact *= k as f64;
        }
        let mut r = Jet::constant(self.nvars(), m, derivs[m] / fact);
        for k in (0..m).rev() {
            fact /= (k + 1) as f64;
            r = r.mul_jet(&tilde);
            r.c[0] += derivs[k] / fact;
        }
        r
    }

    pub fn recip(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if a == 0.0 || !a.is_finite() {
            return Err(JetError::DivisionByZero(a));
        }
        let mut d = Vec::with_capacity(self.order() + 1);
        let mut v = 1.0 / a;
        for k in 0..=self.order() {
            d.push(v);
            v *= -((k + 1) as f64) / a;
        }
        Ok(self.compose_univariate(&d))
    }

    pub fn div_jet(&self, other: &Jet) -> Result<Jet, JetError> {
        Ok(self.mul_jet(&other.recip()?))
    }

    pub fn sqrt(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if !(a > 0.0 && a.is_finite()) {
            return Err(JetError::SqrtNonPositive(a));
        }
        Ok(self.compose_univariate(&power_derivs(a, 0.5, self.order())))
    }

    /// `f^p` for a real exponent; requires a positive constant term unless
    /// `p` is a nonnegative integer.
    pub fn powf(&self, p: f64) -> Result<Jet, JetError> {
        let a = self.value();
        if p.fract() == 0.0 && p >= 0.0 {
            let mut r = Jet::constant(self.nvars(), self.order(), 1.0);
            for _ in 0..p as usize {
                r = r.mul_jet(self);
            }
            return Ok(r);
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(JetError::LogNonPositive(a));
        }
        Ok(self.compose_univariate(&power_derivs(a, p, self.order())))
    }

    pub fn ln(&self) -> Result<Jet, JetError> {
        let a = self.value();
        if !(a > 0.0 && a.is_finite()) {
            return Err(JetError::LogNonPositive(a));
        }
        let mut d = vec![a.ln()];
        let mut v = 1.0 / a;
        for k in 1..=self.order() {
            d.push(v);
            v *= -(k as f64) / a;
        }
        Ok(self.compose_univariate(&d))
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose_univariate(&vec![e; self.order() + 1])
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        self.compose_univariate(&(0..=self.order()).map(|k| cycle[k % 4]).collect::<Vec<_>>())
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        self.compose_univariate(&(0..=self.order()).map(|k| cycle[k % 4]).collect::<Vec<_>>())
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn power_derivs(a: f64, p: f64, order: usize) -> Vec<f64> {
    let mut d = Vec::with_capacity(order + 1);
    let mut coef = 1.0;
    for k in 0..=order {
        d.push(coef * a.powf(p - k as f64));
        coef *= p - k as f64;
    }
    d
}

impl Add<&Jet> for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        let mut r = self.clone();
        r.axpy(1.0, rhs);
        r
    }
}

impl Sub<&Jet> for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        let mut r = self.clone();
        r.axpy(-1.0, rhs);
        r
    }
}

impl Mul<&Jet> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        self.mul_jet(rhs)
    }
}

impl Mul<f64> for &Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl AddAssign<&Jet> for Jet {
    fn add_assign(&mut self, rhs: &Jet) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&Jet> for Jet {
    fn sub_assign(&mut self, rhs: &Jet) {
        self.axpy(-1.0, rhs);
    }
}

macro_rules! forward_owned {
    ($tr:ident, $m:ident) => {
        impl $tr<Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Jet> for Jet {
            type Output = Jet;
            fn $m(self, rhs: &Jet) -> Jet {
                (&self).$m(rhs)
            }
        }
        impl $tr<Jet> for &Jet {
            type Output = Jet;
            fn $m(self, rhs: Jet) -> Jet {
                self.$m(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JetOp {
    Add,
    Sub,
    Mul,
    Div,
    Sin,
    Cos,
    Sqrt,
    /// `a^b` with a jet exponent.
    Pow,
}

/// Elementary operation on two jets of equal order; unary operations act on `a`.
pub fn jet_arith(a: &Jet, b: &Jet, op: JetOp) -> Result<Jet, JetError> {
    if a.order != b.order {
        return Err(JetError::OrderMismatch(a.order(), b.order()));
    }
    if a.nvars != b.nvars {
        return Err(JetError::VarMismatch { expected: a.nvars(), got: b.nvars() });
    }
    Ok(match op {
        JetOp::Add => a + b,
        JetOp::Sub => a - b,
        JetOp::Mul => a * b,
        JetOp::Div => a.div_jet(b)?,
        JetOp::Sin => a.sin(),
        JetOp::Cos => a.cos(),
        JetOp::Sqrt => a.sqrt()?,
        JetOp::Pow => (b * &a.ln()?).exp(),
    })
}

/// Jet of a map into ℝ⁵.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbientJet {
    pub x: [Jet; 5],
}

impl AmbientJet {
    pub fn order(&self) -> usize {
        self.x.iter().map(Jet::order).min().unwrap_or(0)
    }

    pub fn nvars(&self) -> usize {
        self.x[0].nvars()
    }

    pub fn value(&self) -> [f64; 5] {
        std::array::from_fn(|a| self.x[a].value())
    }

    pub fn truncate(&self, order: usize) -> AmbientJet {
        AmbientJet { x: std::array::from_fn(|a| self.x[a].truncate(order)) }
    }

    pub fn d(&self, var: usize) -> AmbientJet {
        AmbientJet { x: std::array::from_fn(|a| self.x[a].d(var)) }
    }

    /// `∂^α Φ(x0)` as an ambient vector.
    pub fn derivative(&self, alpha: &[u8]) -> [f64; 5] {
        std::array::from_fn(|a| self.x[a].derivative(alpha))
    }

    pub fn max_abs_diff(&self, other: &AmbientJet) -> f64 {
        let mut m: f64 = 0.0;
        for a in 0..5 {
            for (p, q) in self.x[a].coeffs().iter().zip(other.x[a].coeffs()) {
                m = m.max((p - q).abs());
            }
        }
        m
    }
}

/// Jet of a map ℝ⁵ → ℝ⁵ expanded at `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct OuterJet {
    pub base: [f64; 5],
    pub comps: [Jet; 5],
}

/// Faà di Bruno composition `outer ∘ inner`, computed by substituting the
/// nilpotent part of `inner` into the Taylor polynomial of `outer`.
pub fn jet_compose(outer: &OuterJet, inner: &AmbientJet) -> Result<AmbientJet, JetError> {
    let order = inner.order();
    for c in &outer.comps {
        if c.nvars() != 5 {
            return Err(JetError::VarMismatch { expected: 5, got: c.nvars() });
        }
        if c.order() != order {
            return Err(JetError::OrderMismatch(c.order(), order));
        }
    }
    let v0 = inner.value();
    let gap = (0..5).map(|a| (v0[a] - outer.base[a]).powi(2)).sum::<f64>().sqrt();
    if gap > 1e-12 {
        return Err(JetError::BasePointMismatch(gap));
    }
    let nv = inner.nvars();
    let delta: Vec<Jet> = (0..5).map(|a| inner.x[a].add_scalar(-v0[a])).collect();
    let t5 = table(5);
    let nmono = t5.deg_end[order];
    let mut mono: Vec<Jet> = Vec::with_capacity(nmono);
    mono.push(Jet::constant(nv, order, 1.0));
    for b in 1..nmono {
        let (v, prev) = t5.down[b];
        let m = mono[prev as usize].mul_jet(&delta[v as usize]);
        mono.push(m);
    }
    let x = std::array::from_fn(|a| {
        let mut r = Jet::zero(nv, order);
        for (b, m) in mono.iter().enumerate() {
            let c = outer.comps[a].c[b];
            if c != 0.0 {
                r.axpy(c, m);
            }
        }
        r
    });
    Ok(AmbientJet { x })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x1(order: usize, x0: f64) -> Jet {
        Jet::variable(1, order, 0, x0)
    }

    #[test]
    fn sizes_follow_binomials() {
        assert_eq!(ncoeffs(4, 6), 210);
        assert_eq!(ncoeffs(4, 3), 35);
        assert_eq!(ncoeffs(5, 4), 126);
        assert_eq!(multi_indices(4, 1)[1], [1, 0, 0, 0, 0]);
    }

    #[test]
    fn sin_at_zero() {
        let s = x1(2, 0.0).sin();
        assert_eq!(s.coeffs(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn unit_is_multiplicative_identity() {
        let b = Jet::variable(4, 3, 2, 0.7).sin();
        let one = Jet::constant(4, 3, 1.0);
        assert_eq!(jet_arith(&one, &b, JetOp::Mul).unwrap(), b);
    }

    #[test]
    fn sixth_derivative_of_sin() {
        let x0 = 0.3;
        let j = x1(6, x0).sin();
        let stencil = |h: f64| {
            let c = [1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0];
            c.iter().enumerate().map(|(k, ck)| ck * (x0 + (k as f64 - 3.0) * h).sin()).sum::<f64>() / h.powi(6)
        };
        // Steps large enough that the 1/h⁶ roundoff stays below the O(h⁴) residue.
        let (a, b) = (stencil(0.1), stencil(0.05));
        let fd = (4.0 * b - a) / 3.0;
        assert!((j.derivative(&[6]) - fd).abs() < 1e-5);
        assert!((j.derivative(&[6]) + x0.sin()).abs() < 1e-14);
    }

    #[test]
    fn elementary_functions_match_closed_form_derivatives() {
        let x0 = 0.8;
        let j = x1(6, x0);
        let r = j.mul_jet(&j).add_scalar(1.0).recip().unwrap();
        // 1/(1+x²) derivatives from the closed form via cos/sin of atan.
        let t = x0.atan();
        let c = t.cos();
        for k in 0..=6u8 {
            let kf = (1..=k as u32).product::<u32>() as f64;
            let exact = kf * c.powi(k as i32 + 1) * ((k as f64 + 1.0) * (t + std::f64::consts::FRAC_PI_2)).sin();
            let got = r.derivative(&[k]);
            assert!((got - exact).abs() <= 1e-12 * exact.abs().max(1.0), "k={k}: {got} vs {exact}");
        }
        let s = j.sqrt().unwrap();
        let p = j.powf(0.5).unwrap();
        for (a, b) in s.coeffs().iter().zip(p.coeffs()) {
            assert!((a - b).abs() < 1e-15);
        }
        let e = j.exp().ln().unwrap();
        for (a, b) in e.coeffs().iter().zip(j.coeffs()) {
            assert!((a - b).abs() < 1e-14);
        }
        let sc = &(&j.sin() * &j.sin()) + &(&j.cos() * &j.cos());
        assert!((sc.value() - 1.0).abs() < 1e-15);
        assert!(sc.coeffs()[1..].iter().all(|c| c.abs() < 1e-14));
    }

    #[test]
    fn errors_on_degenerate_constant_terms() {
        let z = Jet::zero(4, 2);
        assert!(matches!(z.recip(), Err(JetError::DivisionByZero(_))));
        assert!(matches!(z.add_scalar(-1.0).sqrt(), Err(JetError::SqrtNonPositive(_))));
        let a = Jet::zero(4, 2);
        let b = Jet::zero(4, 3);
        assert!(matches!(jet_arith(&a, &b, JetOp::Add), Err(JetError::OrderMismatch(2, 3))));
    }

    #[test]
    fn derivative_lowers_order_and_commutes() {
        let x = Jet::variable(4, 5, 0, 0.3);
        let y = Jet::variable(4, 5, 1, -0.2);
        let f = (&x * &y.sin()).exp();
        let a = f.d(0).d(1);
        let b = f.d(1).d(0);
        assert_eq!(a.order(), 3);
        for (p, q) in a.coeffs().iter().zip(b.coeffs()) {
            assert!((p - q).abs() < 1e-13);
        }
        let fxy = f.derivative(&[1, 1]);
        assert!((a.value() - fxy).abs() < 1e-13);
    }

    #[test]
    fn pow_with_jet_exponent() {
        let x = Jet::variable(1, 4, 0, 1.5);
        let two = Jet::constant(1, 4, 2.0);
        let p = jet_arith(&x, &two, JetOp::Pow).unwrap();
        let sq = &x * &x;
        for (a, b) in p.coeffs().iter().zip(sq.coeffs()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    fn identity_outer(base: [f64; 5], order: usize) -> OuterJet {
        OuterJet { base, comps: std::array::from_fn(|a| Jet::variable(5, order, a, base[a])) }
    }

    fn sample_inner(order: usize) -> AmbientJet {
        let u: Vec<Jet> = (0..4).map(|i| Jet::variable(4, order, i, 0.1 * i as f64 + 0.2)).collect();
        AmbientJet {
            x: [
                u[0].sin(),
                &u[1] * &u[2],
                u[3].cos(),
                &u[0] + &u[3],
                (&u[1] * &u[1]).add_scalar(1.0),
            ],
        }
    }

    #[test]
    fn compose_with_identity_and_translation() {
        let inner = sample_inner(4);
        let id = identity_outer(inner.value(), 4);
        assert!(jet_compose(&id, &inner).unwrap().max_abs_diff(&inner) < 1e-15);
        let v = [1.0, -2.0, 0.5, 0.0, 3.0];
        let mut tr = identity_outer(inner.value(), 4);
        for a in 0..5 {
            tr.comps[a] = tr.comps[a].add_scalar(v[a]);
        }
        let out = jet_compose(&tr, &inner).unwrap();
        for a in 0..5 {
            assert!((out.x[a].value() - inner.x[a].value() - v[a]).abs() < 1e-15);
            assert_eq!(&out.x[a].coeffs()[1..], &inner.x[a].coeffs()[1..]);
        }
    }

    #[test]
    fn compose_rejects_wrong_base_point() {
        let inner = sample_inner(2);
        let mut b = inner.value();
        b[0] += 1e-6;
        assert!(matches!(jet_compose(&identity_outer(b, 2), &inner), Err(JetError::BasePointMismatch(_))));
    }
}
