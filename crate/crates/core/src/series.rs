//! Truncated power series k[u]/(u^N), with t = u^2.
//!
//! Arithmetic operators panic on a level mismatch; the `ts_*` functions
//! report it as an error instead.

use crate::error::{Error, Result};
use crate::field::{Field, Fq};
use serde::ser::{Serialize, SerializeSeq, Serializer};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone)]
pub struct Series {
    pub f: &'static Field,
    pub c: Vec<Fq>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum TsOp {
    Add,
    Sub,
    Mul,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Galois {
    Tau,
    Sigma,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum TauPredicate {
    TauInvariant,
    InRAlphaPrime,
}

impl PartialEq for Series {
    fn eq(&self, o: &Self) -> bool {
        std::ptr::eq(self.f, o.f) && self.c == o.c
    }
}
impl Eq for Series {}

impl Hash for Series {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.c.hash(h)
    }
}

impl fmt::Debug for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .c
            .iter()
            .enumerate()
            .map(|(i, &x)| match i {
                0 => self.f.fmt_elem(x),
                1 => format!("{}*u", self.f.fmt_elem(x)),
                _ => format!("{}*u^{}", self.f.fmt_elem(x), i),
            })
            .collect();
        write!(f, "{}", terms.join(" + "))
    }
}

impl Serialize for Series {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.c.len()))?;
        for x in &self.c {
            seq.serialize_element(&x.0)?;
        }
        seq.end()
    }
}

impl Series {
    pub fn zero(f: &'static Field, n: usize) -> Self {
        Series { f, c: vec![Fq::ZERO; n] }
    }

    pub fn one(f: &'static Field, n: usize) -> Self {
        Self::constant(f, Fq::ONE, n)
    }

    pub fn constant(f: &'static Field, x: Fq, n: usize) -> Self {
        let mut s = Self::zero(f, n);
        if n > 0 {
            s.c[0] = x;
        }
        s
    }

    /// x * u^k mod u^n
    pub fn monomial(f: &'static Field, x: Fq, k: usize, n: usize) -> Self {
        let mut s = Self::zero(f, n);
        if k < n {
            s.c[k] = x;
        }
        s
    }

    /// Coefficients are padded with zeros or truncated to level n.
    pub fn from_coeffs(f: &'static Field, c: &[Fq], n: usize) -> Self {
        let mut s = Self::zero(f, n);
        for (i, &x) in c.iter().take(n).enumerate() {
            s.c[i] = x;
        }
        s
    }

    pub fn from_ints(f: &'static Field, c: &[i64], n: usize) -> Self {
        let v: Vec<Fq> = c.iter().map(|&k| f.from_int(k)).collect();
        Self::from_coeffs(f, &v, n)
    }

    pub fn level(&self) -> usize {
        self.c.len()
    }

    pub fn coeff(&self, i: usize) -> Fq {
        self.c.get(i).copied().unwrap_or(Fq::ZERO)
    }

    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|x| x.is_zero())
    }

    pub fn is_unit(&self) -> bool {
        !self.c.is_empty() && !self.c[0].is_zero()
    }

    /// u-adic valuation, with the level N standing for zero.
    pub fn valuation(&self) -> usize {
        self.c.iter().position(|x| !x.is_zero()).unwrap_or(self.c.len())
    }

    /// Keep degrees <= lambda, same level.
    pub fn slice(&self, lambda: usize) -> Self {
        let mut s = self.clone();
        for x in s.c.iter_mut().skip(lambda + 1) {
            *x = Fq::ZERO;
        }
        s
    }

    /// Reduce or zero-extend to level n.
    pub fn resize(&self, n: usize) -> Self {
        Self::from_coeffs(self.f, &self.c, n)
    }

    pub fn scale(&self, x: Fq) -> Self {
        Series { f: self.f, c: self.c.iter().map(|&y| self.f.mul(x, y)).collect() }
    }

    /// Multiply by u^k, same level.
    pub fn shift_up(&self, k: usize) -> Self {
        let n = self.level();
        let mut s = Self::zero(self.f, n);
        for i in k..n {
            s.c[i] = self.c[i - k];
        }
        s
    }

    /// Divide by u^k, dropping the bottom k coefficients; level drops by k.
    pub fn shift_down(&self, k: usize) -> Self {
        Series { f: self.f, c: self.c.iter().skip(k).copied().collect() }
    }

    fn check(&self, o: &Self) -> Result<()> {
        if !std::ptr::eq(self.f, o.f) {
            return Err(Error::FieldMismatch);
        }
        if self.level() != o.level() {
            return Err(Error::LevelMismatch(self.level(), o.level()));
        }
        Ok(())
    }

    pub fn try_add(&self, o: &Self) -> Result<Self> {
        self.check(o)?;
        Ok(Series { f: self.f, c: self.c.iter().zip(&o.c).map(|(&a, &b)| self.f.add(a, b)).collect() })
    }

    pub fn try_sub(&self, o: &Self) -> Result<Self> {
        self.check(o)?;
        Ok(Series { f: self.f, c: self.c.iter().zip(&o.c).map(|(&a, &b)| self.f.sub(a, b)).collect() })
    }

    pub fn try_mul(&self, o: &Self) -> Result<Self> {
        self.check(o)?;
        let n = self.level();
        let f = self.f;
        let mut c = vec![Fq::ZERO; n];
        for (i, &a) in self.c.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, &b) in o.c[..n - i].iter().enumerate() {
                c[i + j] = f.add(c[i + j], f.mul(a, b));
            }
        }
        Ok(Series { f, c })
    }

    pub fn inv(&self) -> Result<Self> {
        if !self.is_unit() {
            return Err(Error::NotUnit);
        }
        let f = self.f;
        let n = self.level();
        let i0 = f.inv(self.c[0])?;
        let mut r = vec![Fq::ZERO; n];
        r[0] = i0;
        for k in 1..n {
            let mut acc = Fq::ZERO;
            for j in 1..=k {
                acc = f.add(acc, f.mul(self.c[j], r[k - j]));
            }
            r[k] = f.neg(f.mul(acc, i0));
        }
        Ok(Series { f, c: r })
    }

    pub fn pow(&self, mut e: u64) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one(self.f, self.level());
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            base = &base * &base;
            e >>= 1;
        }
        acc
    }

    pub fn tau(&self) -> Self {
        Series {
            f: self.f,
            c: self.c.iter().enumerate().map(|(i, &x)| if i % 2 == 1 { self.f.neg(x) } else { x }).collect(),
        }
    }

    pub fn sigma(&self) -> Self {
        Series { f: self.f, c: self.c.iter().map(|&x| self.f.sigma(x)).collect() }
    }

    pub fn galois(&self, op: Galois) -> Self {
        match op {
            Galois::Tau => self.tau(),
            Galois::Sigma => self.sigma(),
        }
    }

    pub fn norm_tau(&self) -> Self {
        self * &self.tau()
    }

    pub fn is_tau_invariant(&self) -> bool {
        self.c.iter().skip(1).step_by(2).all(|x| x.is_zero())
    }

    pub fn is_rational(&self) -> bool {
        self.c.iter().all(|&x| self.f.sigma(x) == x)
    }

    /// Even part sum c_{2i} u^{2i}.
    pub fn even_part(&self) -> Self {
        Series {
            f: self.f,
            c: self.c.iter().enumerate().map(|(i, &x)| if i % 2 == 0 { x } else { Fq::ZERO }).collect(),
        }
    }

    /// Coefficients in t = u^2: entry i is the coefficient of u^{2i}.
    pub fn t_coeffs(&self) -> Vec<Fq> {
        self.c.iter().step_by(2).copied().collect()
    }

    /// sum c_i t^i at u-level n.
    pub fn from_t_coeffs(f: &'static Field, c: &[Fq], n: usize) -> Self {
        let mut s = Self::zero(f, n);
        for (i, &x) in c.iter().enumerate() {
            if 2 * i < n {
                s.c[2 * i] = x;
            }
        }
        s
    }

    /// Position in the lexicographic enumeration of k[u]/u^N, c_0 most significant.
    pub fn index(&self) -> usize {
        let q = self.f.q as usize;
        self.c.iter().fold(0, |acc, x| acc * q + x.0 as usize)
    }

    pub fn from_index(f: &'static Field, n: usize, mut idx: usize) -> Self {
        let q = f.q as usize;
        let mut c = vec![Fq::ZERO; n];
        for i in (0..n).rev() {
            c[i] = Fq((idx % q) as u16);
            idx /= q;
        }
        Series { f, c }
    }

    /// Index of a unit among the units of k[u]/u^N, in the same order.
    pub fn unit_index(&self) -> usize {
        self.index() - (self.f.q as usize).pow(self.level() as u32 - 1)
    }

    pub fn from_unit_index(f: &'static Field, n: usize, idx: usize) -> Self {
        Self::from_index(f, n, idx + (f.q as usize).pow(n as u32 - 1))
    }

    pub fn all(f: &'static Field, n: usize) -> impl Iterator<Item = Series> {
        (0..(f.q as usize).pow(n as u32)).map(move |i| Self::from_index(f, n, i))
    }

    pub fn units(f: &'static Field, n: usize) -> impl Iterator<Item = Series> {
        let total = (f.q as usize - 1) * (f.q as usize).pow(n as u32 - 1);
        (0..total).map(move |i| Self::from_unit_index(f, n, i))
    }

    pub fn ints(&self) -> Vec<u16> {
        self.c.iter().map(|x| x.0).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("series serialize")
    }

    pub fn from_json(f: &'static Field, s: &str) -> Result<Self> {
        let v: Vec<u16> = serde_json::from_str(s).map_err(|e| Error::Invalid(e.to_string()))?;
        if v.iter().any(|&x| x as u32 >= f.q) {
            return Err(Error::Invalid("coefficient out of range".into()));
        }
        Ok(Series { f, c: v.into_iter().map(Fq).collect() })
    }
}

impl Add for &Series {
    type Output = Series;
    fn add(self, o: &Series) -> Series {
        self.try_add(o).expect("series add")
    }
}
impl Sub for &Series {
    type Output = Series;
    fn sub(self, o: &Series) -> Series {
        self.try_sub(o).expect("series sub")
    }
}
impl Mul for &Series {
    type Output = Series;
    fn mul(self, o: &Series) -> Series {
        self.try_mul(o).expect("series mul")
    }
}
impl Neg for &Series {
    type Output = Series;
    fn neg(self) -> Series {
        Series { f: self.f, c: self.c.iter().map(|&x| self.f.neg(x)).collect() }
    }
}

pub fn ts_arith(a: &Series, b: &Series, op: TsOp) -> Result<Series> {
    match op {
        TsOp::Add => a.try_add(b),
        TsOp::Sub => a.try_sub(b),
        TsOp::Mul => a.try_mul(b),
    }
}

pub fn ts_inv(a: &Series) -> Result<Series> {
    a.inv()
}

pub fn ts_galois(a: &Series, op: Galois) -> Series {
    a.galois(op)
}

pub fn ts_valuation_slice(a: &Series, lambda: usize) -> (usize, Series) {
    (a.valuation(), a.slice(lambda))
}

pub fn ts_norm_tau(s: &Series) -> Series {
    s.norm_tau()
}

/// Level data for R_alpha = O_E / p_E^{m - 2 alpha}, with n = (m + 1) / 2.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct RAlphaParams {
    pub m: usize,
    pub alpha: usize,
}

impl RAlphaParams {
    pub fn new(m: usize, alpha: usize) -> Result<Self> {
        if m % 2 == 0 || 2 * alpha >= m {
            return Err(Error::Invalid(format!("R_alpha needs odd m > 2 alpha (m={m}, alpha={alpha})")));
        }
        Ok(RAlphaParams { m, alpha })
    }
    pub fn n(&self) -> usize {
        (self.m + 1) / 2
    }
    /// u-level of R_alpha.
    pub fn level(&self) -> usize {
        self.m - 2 * self.alpha
    }
    /// Number of t-coefficients of an element of the tau-invariants.
    pub fn t_level(&self) -> usize {
        self.n() - self.alpha
    }
    /// u-level of the congruence s = +-1 defining the primed subset (0 when vacuous).
    pub fn prime_level(&self) -> usize {
        (self.m + 1).saturating_sub(2 * (2 * self.alpha + 1))
    }

    pub fn tau_invariants(&self, f: &'static Field) -> impl Iterator<Item = Series> {
        let tl = self.t_level();
        let n = self.level();
        (0..(f.q as usize).pow(tl as u32)).map(move |i| {
            let t = Series::from_index(f, tl, i);
            Series::from_t_coeffs(f, &t.c, n)
        })
    }

    pub fn primed(&self, f: &'static Field) -> Vec<Series> {
        let me = *self;
        self.tau_invariants(f).filter(|s| in_r_alpha_prime(s, &me)).collect()
    }
}

pub fn in_r_alpha_prime(s: &Series, p: &RAlphaParams) -> bool {
    if !s.is_tau_invariant() {
        return false;
    }
    let k = p.prime_level().min(s.level());
    if k == 0 {
        return true;
    }
    let f = s.f;
    let one = Series::one(f, k);
    let r = s.resize(k);
    r == one || r == -&one
}

pub fn ts_tau_predicates(s: &Series, p: &RAlphaParams, which: TauPredicate) -> bool {
    match which {
        TauPredicate::TauInvariant => s.is_tau_invariant(),
        TauPredicate::InRAlphaPrime => in_r_alpha_prime(s, p),
    }
}

/// Closed-form membership in the image of s -> s tau(s) on R_alpha:
/// (-1)^{v_t(x)} times the leading t-coefficient is a square (zero included).
pub fn in_norm_image(x: &Series) -> bool {
    if !x.is_tau_invariant() {
        return false;
    }
    let f = x.f;
    let v = x.valuation();
    if v >= x.level() {
        return true;
    }
    let lead = x.c[v];
    let vt = v / 2;
    let y = if vt % 2 == 1 { f.neg(lead) } else { lead };
    f.is_square(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn f3() -> &'static Field {
        Field::prime(3).unwrap()
    }

    #[test]
    fn basic_examples() {
        let f = f3();
        let a = Series::from_ints(f, &[1, 1], 3);
        let b = Series::from_ints(f, &[1, -1], 3);
        assert_eq!(&a * &b, Series::from_ints(f, &[1, 0, -1], 3));
        assert_eq!(a.inv().unwrap(), Series::from_ints(f, &[1, -1, 1], 3));
        let c = Series::from_ints(f, &[1, 0, 1], 4);
        assert_eq!(c.inv().unwrap(), Series::from_ints(f, &[1, 0, -1, 0], 4));
        let u = Series::monomial(f, Fq::ONE, 1, 4);
        assert!((&u * &Series::monomial(f, Fq::ONE, 3, 4)).is_zero());
        assert_eq!(Series::monomial(f, Fq::ONE, 1, 3).inv(), Err(Error::NotUnit));
        assert_eq!(
            ts_arith(&a, &Series::one(f, 4), TsOp::Add),
            Err(Error::LevelMismatch(3, 4))
        );
    }

    #[test]
    fn galois_and_slices() {
        let f = f3();
        let a = Series::from_ints(f, &[1, 1, 1], 3);
        assert_eq!(a.tau(), Series::from_ints(f, &[1, -1, 1], 3));
        let b = Series::from_ints(f, &[0, 1, 1, 1], 4);
        let (v, s) = ts_valuation_slice(&b, 2);
        assert_eq!(v, 1);
        assert_eq!(s, Series::from_ints(f, &[0, 1, 1, 0], 4));
        assert_eq!(s.slice(2), s);
        assert_eq!(Series::zero(f, 4).valuation(), 4);
        assert_eq!(Series::from_ints(f, &[1, 1], 3).norm_tau(), Series::from_ints(f, &[1, 0, -1], 3));
        assert_eq!(Series::from_ints(f, &[2], 3).norm_tau(), Series::from_ints(f, &[1], 3));
    }

    #[test]
    fn tau_sigma_exhaustive() {
        let f = f3();
        let e = f.extension(2).unwrap();
        for n in 1..=4 {
            for a in Series::all(f, n) {
                assert_eq!(a.tau().tau(), a);
                assert!(a.norm_tau().is_tau_invariant());
                assert_eq!(a.sigma(), a);
            }
        }
        for a in Series::all(e, 3) {
            assert_eq!(a.sigma().tau(), a.tau().sigma());
            assert_eq!(a.sigma().sigma(), a);
        }
    }

    #[test]
    fn valuation_rules() {
        let f = f3();
        let n = 4;
        for a in Series::all(f, n) {
            for b in Series::all(f, n).step_by(7) {
                assert_eq!((&a * &b).valuation(), (a.valuation() + b.valuation()).min(n));
                assert!((&a + &b).valuation() >= a.valuation().min(b.valuation()));
            }
        }
    }

    #[test]
    fn index_roundtrip() {
        let f = Field::prime(5).unwrap();
        for i in 0..125 {
            assert_eq!(Series::from_index(f, 3, i).index(), i);
        }
        let units: Vec<Series> = Series::units(f, 3).collect();
        assert_eq!(units.len(), 100);
        for (i, s) in units.iter().enumerate() {
            assert!(s.is_unit());
            assert_eq!(s.unit_index(), i);
        }
    }

    #[test]
    fn json_roundtrip() {
        let f = Field::prime(5).unwrap();
        let a = Series::from_ints(f, &[3, 0, 4], 3);
        let s = a.to_json();
        assert_eq!(s, "[3,0,4]");
        assert_eq!(Series::from_json(f, &s).unwrap(), a);
        assert_eq!(a.to_string(), "3 + 0*u + 4*u^2");
    }

    #[test]
    fn primed_counts() {
        for p in [3u32, 5] {
            let f = Field::prime(p).unwrap();
            let q = p as usize;
            for m in [1usize, 3, 5, 7] {
                let n = (m + 1) / 2;
                for alpha in 0..n {
                    let ra = RAlphaParams::new(m, alpha).unwrap();
                    let expect = if 2 * alpha + 1 >= n { q.pow((n - alpha) as u32) } else { 2 * q.pow(alpha as u32 + 1) };
                    assert_eq!(ra.primed(f).len(), expect, "q={q} m={m} alpha={alpha}");
                }
            }
        }
        let f = f3();
        let ra = RAlphaParams::new(3, 0).unwrap();
        assert!(ts_tau_predicates(&Series::one(f, 3), &ra, TauPredicate::InRAlphaPrime));
        assert!(!ts_tau_predicates(&Series::monomial(f, Fq::ONE, 1, 3), &ra, TauPredicate::TauInvariant));
    }

    #[test]
    fn norm_image_matches_brute_force() {
        for p in [3u32, 5] {
            let f = Field::prime(p).unwrap();
            for lvl in 1..=3usize {
                let image: HashSet<Series> = Series::all(f, lvl).map(|s| s.norm_tau()).collect();
                for x in Series::all(f, lvl).filter(|x| x.is_tau_invariant()) {
                    assert_eq!(in_norm_image(&x), image.contains(&x), "p={p} level={lvl} x={x}");
                }
            }
        }
    }
}
