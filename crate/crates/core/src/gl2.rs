//! 2x2 matrices over truncated Laurent series in u, congruence subgroups,
//! Iwahori factorization and the level-m relative position.
//!
//! Every matrix entry carries its own absolute precision: a `Laurent` is
//! `sum c_i u^{v+i} + O(u^prec)`. Exact polynomials have `prec == EXACT`.
//! Predicates that cannot be decided at the available precision return
//! `Error::Precision` rather than a guess.

use crate::error::{Error, Result};
use crate::field::{Field, Fq};
use crate::series::Series;
use rayon::prelude::*;
use std::fmt;

pub const EXACT: i32 = i32::MAX / 4;

fn padd(p: i32, v: i32) -> i32 {
    if p >= EXACT || v >= EXACT {
        EXACT
    } else {
        (p + v).min(EXACT)
    }
}

#[derive(Clone)]
pub struct Laurent {
    pub f: &'static Field,
    v: i32,
    c: Vec<Fq>,
    prec: i32,
}

impl fmt::Debug for Laurent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Laurent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut terms: Vec<String> = self
            .c
            .iter()
            .enumerate()
            .filter(|(_, x)| !x.is_zero())
            .map(|(i, &x)| format!("{}*u^{}", self.f.fmt_elem(x), self.v + i as i32))
            .collect();
        if terms.is_empty() {
            terms.push("0".into());
        }
        if self.prec < EXACT {
            terms.push(format!("O(u^{})", self.prec));
        }
        write!(f, "{}", terms.join(" + "))
    }
}

impl Laurent {
    fn normalize(mut self) -> Self {
        if self.prec < EXACT {
            let keep = (self.prec - self.v).max(0) as usize;
            self.c.truncate(keep);
        }
        let lead = self.c.iter().position(|x| !x.is_zero());
        match lead {
            None => {
                self.c.clear();
                self.v = self.prec;
            }
            Some(k) => {
                self.c.drain(..k);
                self.v += k as i32;
                if self.prec >= EXACT {
                    while self.c.last().is_some_and(|x| x.is_zero()) {
                        self.c.pop();
                    }
                }
            }
        }
        self
    }

    pub fn zero(f: &'static Field) -> Self {
        Laurent { f, v: EXACT, c: vec![], prec: EXACT }
    }

    pub fn one(f: &'static Field) -> Self {
        Self::monomial(f, Fq::ONE, 0)
    }

    pub fn monomial(f: &'static Field, x: Fq, k: i32) -> Self {
        Laurent { f, v: k, c: vec![x], prec: EXACT }.normalize()
    }

    /// +-u^k
    pub fn signed_power(f: &'static Field, negative: bool, k: i32) -> Self {
        let x = if negative { f.neg(Fq::ONE) } else { Fq::ONE };
        Self::monomial(f, x, k)
    }

    pub fn from_fq(f: &'static Field, x: Fq) -> Self {
        Self::monomial(f, x, 0)
    }

    /// The series u^shift * s, treated as an exact polynomial.
    pub fn from_series(s: &Series, shift: i32) -> Self {
        Laurent { f: s.f, v: shift, c: s.c.clone(), prec: EXACT }.normalize()
    }

    /// The series u^shift * s known only modulo u^{shift + level}.
    pub fn from_series_approx(s: &Series, shift: i32) -> Self {
        Laurent { f: s.f, v: shift, c: s.c.clone(), prec: shift + s.level() as i32 }.normalize()
    }

    pub fn from_ints(f: &'static Field, c: &[i64], shift: i32) -> Self {
        Self::from_series(&Series::from_ints(f, c, c.len()), shift)
    }

    pub fn prec(&self) -> i32 {
        self.prec
    }

    pub fn is_exact(&self) -> bool {
        self.prec >= EXACT
    }

    /// Lowest nonzero degree, or the precision if none is known.
    pub fn val(&self) -> i32 {
        self.v
    }

    pub fn is_known_zero(&self) -> bool {
        self.c.is_empty() && self.is_exact()
    }

    pub fn coeff(&self, k: i32) -> Fq {
        if k < self.v {
            return Fq::ZERO;
        }
        self.c.get((k - self.v) as usize).copied().unwrap_or(Fq::ZERO)
    }

    /// Whether v_u(self) >= k, decided at the available precision.
    pub fn at_least(&self, k: i32) -> Result<bool> {
        if !self.c.is_empty() {
            return Ok(self.v >= k);
        }
        if self.prec >= k {
            Ok(true)
        } else {
            Err(Error::Precision(format!("need O(u^{k}), have O(u^{})", self.prec)))
        }
    }

    /// Whether v_u(self) == k exactly.
    pub fn has_val(&self, k: i32) -> Result<bool> {
        if self.c.is_empty() {
            if self.prec > k {
                return Ok(false);
            }
            return Err(Error::Precision(format!("need O(u^{}), have O(u^{})", k + 1, self.prec)));
        }
        Ok(self.v == k)
    }

    pub fn with_prec(&self, p: i32) -> Self {
        let mut s = self.clone();
        s.prec = s.prec.min(p);
        s.normalize()
    }

    /// Coefficients of degrees lo..lo+n as a series of level n.
    pub fn window(&self, lo: i32, n: usize) -> Result<Series> {
        if self.prec < lo + n as i32 {
            return Err(Error::Precision(format!(
                "need O(u^{}), have O(u^{})",
                lo + n as i32,
                self.prec
            )));
        }
        let c: Vec<Fq> = (0..n as i32).map(|i| self.coeff(lo + i)).collect();
        Ok(Series { f: self.f, c })
    }

    /// Reduction mod u^n of an integral element.
    pub fn to_series(&self, n: usize) -> Result<Series> {
        if !self.at_least(0)? {
            return Err(Error::Invalid(format!("not integral: {self}")));
        }
        self.window(0, n)
    }

    /// Drop all degrees > k (requires precision beyond k).
    pub fn slice(&self, k: i32) -> Result<Self> {
        if self.prec <= k {
            return Err(Error::Precision(format!("slice at {k} with O(u^{})", self.prec)));
        }
        let mut s = self.clone();
        s.prec = EXACT;
        if !s.c.is_empty() {
            let keep = (k - s.v + 1).max(0) as usize;
            s.c.truncate(keep);
        }
        Ok(s.normalize())
    }

    pub fn add(&self, o: &Self) -> Self {
        let prec = self.prec.min(o.prec);
        let ends = |x: &Self| (!x.c.is_empty()).then(|| (x.v, x.v + x.c.len() as i32));
        let (lo, top) = match (ends(self), ends(o)) {
            (None, None) => return Laurent { f: self.f, v: prec, c: vec![], prec },
            (Some(a), None) | (None, Some(a)) => a,
            (Some(a), Some(b)) => (a.0.min(b.0), a.1.max(b.1)),
        };
        if lo >= prec {
            return Laurent { f: self.f, v: prec, c: vec![], prec };
        }
        let hi = if prec >= EXACT { top } else { prec };
        let len = (hi - lo).max(0) as usize;
        let mut c = vec![Fq::ZERO; len];
        for (i, &x) in self.c.iter().enumerate() {
            let k = (self.v - lo) as usize + i;
            if k < len {
                c[k] = x;
            }
        }
        for (i, &x) in o.c.iter().enumerate() {
            let k = (o.v - lo) as usize + i;
            if k < len {
                c[k] = self.f.add(c[k], x);
            }
        }
        Laurent { f: self.f, v: lo, c, prec }.normalize()
    }

    pub fn neg(&self) -> Self {
        Laurent { f: self.f, v: self.v, c: self.c.iter().map(|&x| self.f.neg(x)).collect(), prec: self.prec }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }

    pub fn mul(&self, o: &Self) -> Self {
        let f = self.f;
        let prec = padd(self.prec, o.v).min(padd(o.prec, self.v));
        if self.c.is_empty() || o.c.is_empty() {
            return Laurent { f, v: prec, c: vec![], prec }.normalize();
        }
        let v = self.v + o.v;
        let full = self.c.len() + o.c.len() - 1;
        let len = if prec >= EXACT { full } else { ((prec - v).max(0) as usize).min(full) };
        let mut c = vec![Fq::ZERO; len];
        for (i, &x) in self.c.iter().enumerate() {
            if i >= len {
                break;
            }
            if x.is_zero() {
                continue;
            }
            for (j, &y) in o.c.iter().enumerate() {
                if i + j >= len {
                    break;
                }
                c[i + j] = f.add(c[i + j], f.mul(x, y));
            }
        }
        Laurent { f, v, c, prec }.normalize()
    }

    pub fn scale(&self, x: Fq) -> Self {
        Laurent { f: self.f, v: self.v, c: self.c.iter().map(|&y| self.f.mul(x, y)).collect(), prec: self.prec }
            .normalize()
    }

    /// Multiply by u^k.
    pub fn shift(&self, k: i32) -> Self {
        Laurent { f: self.f, v: self.v + k, c: self.c.clone(), prec: padd(self.prec, k) }
    }

    /// Inverse, carrying at most `rp` terms of relative precision.
    pub fn inv(&self, rp: usize) -> Result<Self> {
        let f = self.f;
        if self.c.is_empty() {
            return if self.is_exact() {
                Err(Error::DivisionByZero)
            } else {
                Err(Error::Precision(format!("inverting O(u^{})", self.prec)))
            };
        }
        if self.is_exact() && self.c.len() == 1 {
            return Ok(Self::monomial(f, f.inv(self.c[0])?, -self.v));
        }
        let rel = if self.is_exact() { rp } else { ((self.prec - self.v) as usize).min(rp) };
        let i0 = f.inv(self.c[0])?;
        let mut r = vec![Fq::ZERO; rel];
        r[0] = i0;
        for k in 1..rel {
            let mut acc = Fq::ZERO;
            for j in 1..=k.min(self.c.len() - 1) {
                acc = f.add(acc, f.mul(self.c[j], r[k - j]));
            }
            r[k] = f.neg(f.mul(acc, i0));
        }
        Ok(Laurent { f, v: -self.v, c: r, prec: -self.v + rel as i32 }.normalize())
    }

    pub fn div(&self, o: &Self, rp: usize) -> Result<Self> {
        Ok(self.mul(&o.inv(rp)?))
    }

    pub fn tau(&self) -> Self {
        let f = self.f;
        Laurent {
            f,
            v: self.v,
            c: self
                .c
                .iter()
                .enumerate()
                .map(|(i, &x)| if (self.v + i as i32).rem_euclid(2) == 1 { f.neg(x) } else { x })
                .collect(),
            prec: self.prec,
        }
    }

    pub fn sigma(&self) -> Self {
        Laurent { f: self.f, v: self.v, c: self.c.iter().map(|&x| self.f.sigma(x)).collect(), prec: self.prec }
    }

    /// Componentwise image under a field embedding.
    pub fn map_field(&self, g: &'static Field, h: impl Fn(Fq) -> Fq) -> Self {
        Laurent { f: g, v: self.v, c: self.c.iter().map(|&x| h(x)).collect(), prec: self.prec }
    }

    /// Whether self - o vanishes to order k.
    pub fn agrees_to(&self, o: &Self, k: i32) -> Result<bool> {
        self.sub(o).at_least(k)
    }
}

#[derive(Clone, Debug)]
pub struct Mat2 {
    pub e: [Laurent; 4],
}

impl fmt::Display for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.e[0], self.e[1], self.e[2], self.e[3])
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Which {
    Tau,
    Sigma,
}

impl Mat2 {
    pub fn new(a: Laurent, b: Laurent, c: Laurent, d: Laurent) -> Self {
        Mat2 { e: [a, b, c, d] }
    }

    pub fn field(&self) -> &'static Field {
        self.e[0].f
    }

    pub fn identity(f: &'static Field) -> Self {
        Self::new(Laurent::one(f), Laurent::zero(f), Laurent::zero(f), Laurent::one(f))
    }

    pub fn scalar(x: &Laurent) -> Self {
        let z = Laurent::zero(x.f);
        Self::new(x.clone(), z.clone(), z, x.clone())
    }

    pub fn mul(&self, o: &Self) -> Self {
        let [a, b, c, d] = &self.e;
        let [x, y, z, w] = &o.e;
        Self::new(
            a.mul(x).add(&b.mul(z)),
            a.mul(y).add(&b.mul(w)),
            c.mul(x).add(&d.mul(z)),
            c.mul(y).add(&d.mul(w)),
        )
    }

    pub fn det(&self) -> Laurent {
        let [a, b, c, d] = &self.e;
        a.mul(d).sub(&b.mul(c))
    }

    pub fn inv(&self, rp: usize) -> Result<Self> {
        let di = self.det().inv(rp)?;
        let [a, b, c, d] = &self.e;
        Ok(Self::new(d.mul(&di), b.neg().mul(&di), c.neg().mul(&di), a.mul(&di)))
    }

    pub fn tau(&self) -> Self {
        Mat2 { e: self.e.clone().map(|x| x.tau()) }
    }

    pub fn sigma(&self) -> Self {
        Mat2 { e: self.e.clone().map(|x| x.sigma()) }
    }

    pub fn apply_galois(&self, w: Which) -> Self {
        match w {
            Which::Tau => self.tau(),
            Which::Sigma => self.sigma(),
        }
    }

    pub fn map_field(&self, g: &'static Field, h: impl Fn(Fq) -> Fq + Copy) -> Self {
        Mat2 { e: self.e.clone().map(|x| x.map_field(g, h)) }
    }

    /// Entrywise congruence to `o` modulo u^k.
    pub fn agrees_to(&self, o: &Self, k: i32) -> Result<bool> {
        for i in 0..4 {
            if !self.e[i].agrees_to(&o.e[i], k)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn with_prec(&self, p: i32) -> Self {
        Mat2 { e: self.e.clone().map(|x| x.with_prec(p)) }
    }
}

/// Building blocks: e_+, e_-, e_0, the Weyl lifts, varpi, iota and y_i.
pub fn e_plus(a: &Laurent) -> Mat2 {
    let f = a.f;
    Mat2::new(Laurent::one(f), a.clone(), Laurent::zero(f), Laurent::one(f))
}

pub fn e_minus(b: &Laurent) -> Mat2 {
    let f = b.f;
    Mat2::new(Laurent::one(f), Laurent::zero(f), b.clone(), Laurent::one(f))
}

pub fn e_zero(c: &Laurent, d: &Laurent) -> Result<Mat2> {
    if !c.has_val(0)? || !d.has_val(0)? {
        return Err(Error::NotUnit);
    }
    let f = c.f;
    Ok(Mat2::new(c.clone(), Laurent::zero(f), Laurent::zero(f), d.clone()))
}

fn antidiag(w2: Laurent, w3: Laurent) -> Mat2 {
    let f = w2.f;
    Mat2::new(Laurent::zero(f), w2, w3, Laurent::zero(f))
}

/// The lift of w = [[0, u^{-n}], [u^n, 0]] with its sign pattern.
pub fn wdot(f: &'static Field, n: usize) -> Mat2 {
    let n = n as i32;
    if n % 2 == 1 {
        let k = (n + 1) / 2;
        antidiag(
            Laurent::signed_power(f, k % 2 == 1, 1 - 2 * k),
            Laurent::signed_power(f, (k + 1) % 2 == 1, 2 * k - 1),
        )
    } else {
        let k = n / 2;
        antidiag(Laurent::signed_power(f, k % 2 == 1, -2 * k), Laurent::signed_power(f, k % 2 == 1, 2 * k))
    }
}

/// The Schubert cell representative v-dot attached to w.
pub fn vdot(f: &'static Field, n: usize) -> Mat2 {
    let n = n as i32;
    if n % 2 == 1 {
        let k = (n + 1) / 2;
        antidiag(Laurent::monomial(f, Fq::ONE, -k), Laurent::monomial(f, Fq::ONE, k))
    } else {
        let k = n / 2;
        antidiag(Laurent::monomial(f, Fq::ONE, -k), Laurent::monomial(f, Fq::ONE, k + 1))
    }
}

pub fn varpi(f: &'static Field) -> Mat2 {
    antidiag(Laurent::one(f), Laurent::monomial(f, Fq::ONE, 2))
}

/// iota(x + u y) = x + y varpi for x, y in F (even series in u).
pub fn iota(e: &Laurent) -> Mat2 {
    let f = e.f;
    let mut x = Laurent::zero(f).with_prec(e.prec);
    let mut y = Laurent::zero(f).with_prec(e.prec - 1);
    if !e.c.is_empty() {
        let mut even = vec![Fq::ZERO; e.c.len()];
        let mut odd = vec![Fq::ZERO; e.c.len()];
        for (i, &cf) in e.c.iter().enumerate() {
            if (e.v + i as i32).rem_euclid(2) == 0 {
                even[i] = cf;
            } else {
                odd[i] = cf;
            }
        }
        x = Laurent { f, v: e.v, c: even, prec: e.prec }.normalize();
        y = Laurent { f, v: e.v - 1, c: odd, prec: padd(e.prec, -1) }.normalize();
    }
    let ty = y.shift(2);
    Mat2::new(x.clone(), y, ty, x)
}

pub fn iota_series(s: &Series) -> Mat2 {
    iota(&Laurent::from_series(s, 0))
}

/// y_i = e_0(u^i, (-u)^i)
pub fn y_i(f: &'static Field, i: i32) -> Mat2 {
    let z = Laurent::zero(f);
    Mat2::new(Laurent::monomial(f, Fq::ONE, i), z.clone(), z, Laurent::signed_power(f, i.rem_euclid(2) == 1, i))
}

#[derive(Clone, Debug)]
pub enum Kind {
    EPlus(Laurent),
    EMinus(Laurent),
    EZero(Laurent, Laurent),
    WDot(usize),
    VDot(usize),
    Varpi,
    Iota(Laurent),
    Y(i32),
}

pub fn mat_build(f: &'static Field, kind: &Kind) -> Result<Mat2> {
    Ok(match kind {
        Kind::EPlus(a) => e_plus(a),
        Kind::EMinus(b) => e_minus(b),
        Kind::EZero(c, d) => e_zero(c, d)?,
        Kind::WDot(n) => wdot(f, *n),
        Kind::VDot(n) => vdot(f, *n),
        Kind::Varpi => varpi(f),
        Kind::Iota(e) => iota(e),
        Kind::Y(i) => y_i(f, *i),
    })
}

pub enum MatOp {
    Mul,
    Inv,
    Det,
    Galois(Which),
}

pub enum MatOut {
    Mat(Mat2),
    Entry(Laurent),
}

pub fn mat_arith(a: &Mat2, b: Option<&Mat2>, op: MatOp, rp: usize) -> Result<MatOut> {
    Ok(match op {
        MatOp::Mul => MatOut::Mat(a.mul(b.ok_or_else(|| Error::Invalid("mul needs two operands".into()))?)),
        MatOp::Inv => MatOut::Mat(a.inv(rp)?),
        MatOp::Det => MatOut::Entry(a.det()),
        MatOp::Galois(w) => MatOut::Mat(a.apply_galois(w)),
    })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Subgroup {
    /// Iwahori [[O^x, O], [p, O^x]]
    I,
    /// [[1 + p^{m+1}, p^m], [p^{m+1}, 1 + p^{m+1}]]
    IM(usize),
    /// Units of the order [[O_F, O_F], [p_F, O_F]]
    UJ,
    /// 1 + varpi^n J
    UJN(usize),
    /// [[1, 0], [p_F, 1]] (all of it; the quotient by p_F^{n+1} is implicit)
    N,
    /// [[1, 0], [p_F^i, 1]]
    NI(usize),
    /// Lower triangular elements of U_J
    BorelLower,
}

fn is_even(x: &Laurent) -> bool {
    x.c.iter().enumerate().all(|(i, c)| c.is_zero() || (x.v + i as i32).rem_euclid(2) == 0)
}

fn one_plus(x: &Laurent, k: i32) -> Result<bool> {
    x.sub(&Laurent::one(x.f)).at_least(k)
}

pub fn in_subgroup(g: &Mat2, s: Subgroup) -> Result<bool> {
    let [a, b, c, d] = &g.e;
    let rational = g.e.iter().all(is_even);
    Ok(match s {
        Subgroup::I => a.has_val(0)? && b.at_least(0)? && c.at_least(1)? && d.has_val(0)?,
        Subgroup::IM(m) => {
            let m = m as i32;
            one_plus(a, m + 1)? && b.at_least(m)? && c.at_least(m + 1)? && one_plus(d, m + 1)?
        }
        Subgroup::UJ => rational && in_subgroup(g, Subgroup::I)?,
        Subgroup::UJN(n) => {
            let n = n as i32;
            let hi = 2 * ((n + 1) / 2);
            let lo = 2 * (n / 2);
            rational && one_plus(a, hi)? && b.at_least(lo)? && c.at_least(lo + 2)? && one_plus(d, hi)?
        }
        Subgroup::N => rational && a.agrees_to(&Laurent::one(a.f), EXACT)? && b.is_known_zero()
            && c.at_least(2)? && d.agrees_to(&Laurent::one(a.f), EXACT)?,
        Subgroup::NI(i) => in_subgroup(g, Subgroup::N)? && c.at_least(2 * i as i32)?,
        Subgroup::BorelLower => rational && b.is_known_zero() && in_subgroup(g, Subgroup::UJ)?,
    })
}

/// Coordinates of y = e_-(E) W e_0(C, D) e_+(A) e_-(B) for antidiagonal W.
#[derive(Clone, Debug)]
pub struct Factorization {
    pub e: Laurent,
    pub c: Laurent,
    pub d: Laurent,
    pub a: Laurent,
    pub b: Laurent,
}

/// Solve for the coordinates. With `e_degree = Some(k)` the part of the
/// lower-left coordinate above degree k is moved into A; with `None`, A = 0.
pub fn iwahori_factorize(y: &Mat2, w: &Mat2, e_degree: Option<i32>, rp: usize) -> Result<Factorization> {
    let [y11, y12, _, y22] = &y.e;
    let w2 = &w.e[1];
    let w3 = &w.e[2];
    if !w.e[0].is_known_zero() || !w.e[3].is_known_zero() {
        return Err(Error::Invalid("Weyl representative must be antidiagonal".into()));
    }
    if y12.c.is_empty() || !y12.has_val(w2.val())? {
        return Err(Error::NotInCell(format!("upper-right entry has valuation {} not {}", y12.val(), w2.val())));
    }
    let d = y12.div(w2, rp)?;
    let b = y11.div(y12, rp)?;
    let det = y.det();
    let c = det.neg().div(&w2.mul(w3).mul(&d), rp)?;
    let xf = y22.div(&w2.mul(&d), rp)?;
    if !c.has_val(0)? || !d.has_val(0)? {
        return Err(Error::NotInCell("diagonal coordinates are not units".into()));
    }
    if !b.at_least(1)? || !xf.at_least(1)? {
        return Err(Error::NotInCell("off-diagonal coordinates are not in p".into()));
    }
    let f = y.field();
    let (e, a) = match e_degree {
        None => (xf, Laurent::zero(f)),
        Some(k) => {
            let e = xf.slice(k)?;
            let a = xf.sub(&e).mul(&w2.div(w3, rp)?).mul(&d.div(&c, rp)?);
            (e, a)
        }
    };
    Ok(Factorization { e, c, d, a, b })
}

pub fn compose(w: &Mat2, fz: &Factorization) -> Result<Mat2> {
    Ok(e_minus(&fz.e).mul(w).mul(&e_zero(&fz.c, &fz.d)?).mul(&e_plus(&fz.a)).mul(&e_minus(&fz.b)))
}

/// An I^m double coset in I w I, or the trivial one.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum DoubleCosetClass {
    Unit,
    W { e: Series, c: Series, d: Series, b: Series },
    Other,
}

impl DoubleCosetClass {
    /// The class of w-dot itself: (E, C, D, B) = (0, 1, 1, 0).
    pub fn w_identity(f: &'static Field, m: usize) -> Self {
        DoubleCosetClass::W {
            e: Series::zero(f, m + 1),
            c: Series::one(f, m + 1),
            d: Series::one(f, m + 1),
            b: Series::zero(f, m + 1),
        }
    }

    /// A representative matrix e_-(E) w e_0(C, D) e_-(B).
    pub fn representative(&self, w: &Mat2) -> Result<Mat2> {
        let f = w.field();
        match self {
            DoubleCosetClass::Unit => Ok(Mat2::identity(f)),
            DoubleCosetClass::W { e, c, d, b } => {
                let l = |s: &Series| Laurent::from_series(s, 0);
                Ok(e_minus(&l(e)).mul(w).mul(&e_zero(&l(c), &l(d))?).mul(&e_minus(&l(b))))
            }
            DoubleCosetClass::Other => Err(Error::Invalid("no representative for other".into())),
        }
    }
}

pub fn classify(z: &Mat2, m: usize, n: usize, rp: usize) -> Result<DoubleCosetClass> {
    if m > 2 * n - 1 {
        return Err(Error::Refused(format!("canonical form needs m <= 2n - 1 (m={m}, n={n})")));
    }
    if in_subgroup(z, Subgroup::IM(m))? {
        return Ok(DoubleCosetClass::Unit);
    }
    let w = wdot(z.field(), n);
    match iwahori_factorize(z, &w, None, rp) {
        Ok(fz) => Ok(DoubleCosetClass::W {
            e: fz.e.to_series(m + 1)?,
            c: fz.c.to_series(m + 1)?,
            d: fz.d.to_series(m + 1)?,
            b: fz.b.to_series(m + 1)?,
        }),
        Err(Error::NotInCell(_)) => Ok(DoubleCosetClass::Other),
        Err(e) => Err(e),
    }
}

/// The level-m relative position of xI^m and yI^m.
pub fn inv_m(x: &Mat2, y: &Mat2, m: usize, n: usize, rp: usize) -> Result<DoubleCosetClass> {
    classify(&x.inv(rp)?.mul(y), m, n, rp)
}

/// Generators of I^m up to depth `depth`, as left multipliers.
pub fn im_generators(f: &'static Field, m: usize, depth: usize) -> Vec<Mat2> {
    let mut out = Vec::new();
    for x in f.units() {
        for j in m..=depth {
            let t = Laurent::monomial(f, x, j as i32);
            out.push(e_plus(&t));
            if j > m {
                out.push(e_minus(&t));
                let one = Laurent::one(f);
                out.push(Mat2::new(one.add(&t), Laurent::zero(f), Laurent::zero(f), one.clone()));
                out.push(Mat2::new(one.clone(), Laurent::zero(f), Laurent::zero(f), one.add(&t)));
            }
        }
    }
    out
}

fn max_neg_val(g: &Mat2) -> i32 {
    g.e.iter().filter(|x| !x.c.is_empty()).map(|x| -x.val()).max().unwrap_or(0).max(0)
}

/// The orbit of zI^m under left multiplication by I^m, as coset representatives.
pub fn im_orbit(z: &Mat2, m: usize, rp: usize, budget: usize) -> Result<Vec<Mat2>> {
    let f = z.field();
    let zi = z.inv(rp)?;
    let spread = max_neg_val(z) + max_neg_val(&zi);
    let depth = m + 1 + 2 * spread as usize;
    let gens = im_generators(f, m, depth);
    let mut reps: Vec<(Mat2, Mat2)> = vec![(z.clone(), zi)];
    let mut frontier = vec![0usize];
    while let Some(k) = frontier.pop() {
        let base = reps[k].0.clone();
        for g in &gens {
            let cand = g.mul(&base);
            let mut seen = false;
            for (_, ri) in &reps {
                if in_subgroup(&ri.mul(&cand), Subgroup::IM(m))? {
                    seen = true;
                    break;
                }
            }
            if !seen {
                if reps.len() >= budget {
                    return Err(Error::Budget(reps.len()));
                }
                let ci = cand.inv(rp)?;
                reps.push((cand, ci));
                frontier.push(reps.len() - 1);
            }
        }
    }
    Ok(reps.into_iter().map(|(r, _)| r).collect())
}

/// Every canonical class at level m: the unit class and all (E, C, D, B).
pub fn all_classes(f: &'static Field, m: usize) -> Vec<DoubleCosetClass> {
    let mut out = vec![DoubleCosetClass::Unit];
    let ps: Vec<Series> = Series::all(f, m + 1).filter(|s| s.c[0].is_zero()).collect();
    let us: Vec<Series> = Series::units(f, m + 1).collect();
    for e in &ps {
        for c in &us {
            for d in &us {
                for b in &ps {
                    out.push(DoubleCosetClass::W { e: e.clone(), c: c.clone(), d: d.clone(), b: b.clone() });
                }
            }
        }
    }
    out
}

/// Independent oracle: the classes whose representative lies in I^m z I^m,
/// found by orbit enumeration and coset-membership tests only.
pub fn inv_m_oracle(x: &Mat2, y: &Mat2, m: usize, n: usize, rp: usize, budget: usize) -> Result<DoubleCosetClass> {
    let z = x.inv(rp)?.mul(y);
    let orbit = im_orbit(&z, m, rp, budget)?;
    let inverses: Vec<Mat2> = orbit.iter().map(|o| o.inv(rp)).collect::<Result<_>>()?;
    let w = wdot(z.field(), n);
    let classes = all_classes(z.field(), m);
    let hits: Vec<DoubleCosetClass> = classes
        .par_iter()
        .map(|cl| -> Result<Option<DoubleCosetClass>> {
            let r = cl.representative(&w)?;
            for oi in &inverses {
                if in_subgroup(&oi.mul(&r), Subgroup::IM(m))? {
                    return Ok(Some(cl.clone()));
                }
            }
            Ok(None)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    match hits.len() {
        0 => Ok(DoubleCosetClass::Other),
        1 => Ok(hits.into_iter().next().unwrap()),
        k => Err(Error::Invalid(format!("{k} canonical classes share one double coset"))),
    }
}

/// Random element of I^m with entries supported below degree `depth`.
pub fn random_im<R: rand::Rng>(f: &'static Field, m: usize, depth: usize, rng: &mut R) -> Mat2 {
    let mut rnd = |lo: usize| -> Laurent {
        let c: Vec<Fq> = (0..depth.saturating_sub(lo)).map(|_| Fq(rng.gen_range(0..f.q) as u16)).collect();
        Laurent::from_series(&Series { f, c }, lo as i32)
    };
    let one = Laurent::one(f);
    let a = one.add(&rnd(m + 1));
    let b = rnd(m);
    let c = rnd(m + 1);
    let d = one.add(&rnd(m + 1));
    Mat2::new(a, b, c, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f3() -> &'static Field {
        Field::prime(3).unwrap()
    }

    fn rand_series<R: Rng>(f: &'static Field, n: usize, rng: &mut R) -> Series {
        Series { f, c: (0..n).map(|_| Fq(rng.gen_range(0..f.q) as u16)).collect() }
    }

    #[test]
    fn laurent_precision_rules() {
        let f = f3();
        let x = Laurent::from_ints(f, &[1, 1], 0);
        let xi = x.inv(5).unwrap();
        assert_eq!(xi.prec(), 5);
        let prod = x.mul(&xi);
        assert!(prod.agrees_to(&Laurent::one(f), 5).unwrap());
        assert!(prod.sub(&Laurent::one(f)).at_least(6).is_err());
        let u = Laurent::monomial(f, Fq::ONE, 1);
        assert_eq!(u.inv(3).unwrap().val(), -1);
        assert!(u.inv(3).unwrap().is_exact());
    }

    #[test]
    fn wdot_signs() {
        let f = f3();
        let w = wdot(f, 1);
        assert!(w.e[1].agrees_to(&Laurent::signed_power(f, true, -1), EXACT).unwrap());
        assert!(w.e[2].agrees_to(&Laurent::signed_power(f, false, 1), EXACT).unwrap());
        let w2 = wdot(f, 2);
        assert!(w2.e[1].agrees_to(&Laurent::signed_power(f, true, -2), EXACT).unwrap());
        assert!(w2.e[2].agrees_to(&Laurent::signed_power(f, true, 2), EXACT).unwrap());
        let e = iota(&Laurent::monomial(f, Fq::ONE, 1));
        assert!(e.agrees_to(&varpi(f), EXACT).unwrap());
    }

    #[test]
    fn commutation_relations() {
        let f = Field::prime(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a = Laurent::from_series(&rand_series(f, 4, &mut rng), 0);
            let b = Laurent::from_series(&rand_series(f, 4, &mut rng), 0);
            let nn = Laurent::one(f).add(&a.mul(&b));
            if !nn.has_val(0).unwrap() {
                continue;
            }
            let ni = nn.inv(20).unwrap();
            let lhs = e_plus(&a).mul(&e_minus(&b));
            let rhs = e_minus(&b.mul(&ni)).mul(&e_plus(&a.mul(&nn))).mul(&e_zero(&nn, &ni).unwrap());
            assert!(lhs.agrees_to(&rhs, 15).unwrap());
            let lhs = e_minus(&b).mul(&e_plus(&a));
            let rhs = e_zero(&ni, &nn).unwrap().mul(&e_plus(&a.mul(&nn))).mul(&e_minus(&b.mul(&ni)));
            assert!(lhs.agrees_to(&rhs, 15).unwrap());
        }
    }

    #[test]
    fn conjugating_e_plus_by_wdot() {
        let f = f3();
        for n in 1..4 {
            let w = wdot(f, n);
            let wi = w.inv(10).unwrap();
            let a = Laurent::from_ints(f, &[1, 2, 1], 0);
            let lhs = w.mul(&e_plus(&a)).mul(&wi);
            let ratio = w.e[2].div(&w.e[1], 10).unwrap();
            assert!(lhs.agrees_to(&e_minus(&ratio.mul(&a)), 30).unwrap());
            assert_eq!(ratio.val(), 2 * n as i32);
        }
    }

    #[test]
    fn subgroup_examples() {
        let f = f3();
        for m in 1..5 {
            assert!(in_subgroup(&Mat2::identity(f), Subgroup::IM(m)).unwrap());
            assert!(in_subgroup(&e_minus(&Laurent::monomial(f, Fq::ONE, m as i32 + 1)), Subgroup::IM(m)).unwrap());
            assert!(!in_subgroup(&e_minus(&Laurent::monomial(f, Fq::ONE, m as i32)), Subgroup::IM(m)).unwrap());
        }
        let g = iota(&Laurent::from_ints(f, &[1, 1], 0));
        assert!(in_subgroup(&g, Subgroup::UJ).unwrap());
        assert!(in_subgroup(&g, Subgroup::UJN(0)).unwrap());
        assert!(!in_subgroup(&g, Subgroup::UJN(2)).unwrap());
        let g = iota(&Laurent::from_ints(f, &[1, 0, 0, 1], 0));
        assert!(in_subgroup(&g, Subgroup::UJN(3)).unwrap());
        assert!(!in_subgroup(&g, Subgroup::UJN(4)).unwrap());
        let nn = e_minus(&Laurent::monomial(f, Fq::ONE, 4));
        assert!(in_subgroup(&nn, Subgroup::NI(2)).unwrap());
        assert!(!in_subgroup(&nn, Subgroup::NI(3)).unwrap());
        assert!(in_subgroup(&nn, Subgroup::BorelLower).unwrap());
    }

    #[test]
    fn subgroups_closed_under_products() {
        let f = f3();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in [1usize, 3] {
            for _ in 0..30 {
                let a = random_im(f, m, 8, &mut rng);
                let b = random_im(f, m, 8, &mut rng);
                assert!(in_subgroup(&a.mul(&b), Subgroup::IM(m)).unwrap());
                assert!(in_subgroup(&a.inv(12).unwrap(), Subgroup::IM(m)).unwrap());
            }
        }
    }

    #[test]
    fn factorization_examples() {
        let f = f3();
        let w = wdot(f, 1);
        let fz = iwahori_factorize(&w, &w, None, 10).unwrap();
        assert!(fz.e.is_known_zero() && fz.b.is_known_zero() && fz.a.is_known_zero());
        assert!(fz.c.agrees_to(&Laurent::one(f), 10).unwrap());
        assert!(fz.d.agrees_to(&Laurent::one(f), 10).unwrap());
        let u = Laurent::monomial(f, Fq::ONE, 1);
        let fz = iwahori_factorize(&e_minus(&u).mul(&w), &w, None, 10).unwrap();
        assert!(fz.e.agrees_to(&u, 10).unwrap());
        assert!(matches!(
            iwahori_factorize(&Mat2::identity(f), &w, None, 10),
            Err(Error::NotInCell(_))
        ));
    }

    #[test]
    fn factorization_roundtrip() {
        let f = Field::prime(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..4usize {
            let v = vdot(f, n);
            for _ in 0..40 {
                let mut e = rand_series(f, n + 1, &mut rng);
                e.c[0] = Fq::ZERO;
                let mut c = rand_series(f, 4, &mut rng);
                c.c[0] = Fq(rng.gen_range(1..5));
                let mut d = rand_series(f, 4, &mut rng);
                d.c[0] = Fq(rng.gen_range(1..5));
                let a = rand_series(f, 3, &mut rng);
                let mut b = rand_series(f, 4, &mut rng);
                b.c[0] = Fq::ZERO;
                let l = |s: &Series| Laurent::from_series(s, 0);
                let fz0 = Factorization { e: l(&e), c: l(&c), d: l(&d), a: l(&a), b: l(&b) };
                let y = compose(&v, &fz0).unwrap();
                let fz = iwahori_factorize(&y, &v, Some(n as i32), 40).unwrap();
                assert!(fz.e.agrees_to(&fz0.e, 30).unwrap());
                assert!(fz.c.agrees_to(&fz0.c, 30).unwrap());
                assert!(fz.d.agrees_to(&fz0.d, 30).unwrap());
                assert!(fz.a.agrees_to(&fz0.a, 20).unwrap());
                assert!(fz.b.agrees_to(&fz0.b, 30).unwrap());
            }
        }
    }

    #[test]
    fn inv_m_examples() {
        let f = f3();
        let w = wdot(f, 1);
        let x = e_minus(&Laurent::monomial(f, Fq::ONE, 1)).mul(&w);
        assert_eq!(inv_m(&x, &x, 1, 1, 20).unwrap(), DoubleCosetClass::Unit);
        assert_eq!(inv_m(&Mat2::identity(f), &w, 1, 1, 20).unwrap(), DoubleCosetClass::w_identity(f, 1));
        assert!(matches!(inv_m(&x, &x, 3, 1, 20), Err(Error::Refused(_))));
    }

    #[test]
    fn inv_m_bi_invariant() {
        let f = f3();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m, n) = (3usize, 2usize);
        let w = wdot(f, n);
        for _ in 0..30 {
            let x = random_im(f, 0, 6, &mut rng).mul(&vdot(f, n));
            let y = x.mul(&e_minus(&Laurent::from_series(&rand_series(f, 3, &mut rng), 1))).mul(&w);
            let base = inv_m(&x, &y, m, n, 40).unwrap();
            let i = random_im(f, m, 9, &mut rng);
            let j = random_im(f, m, 9, &mut rng);
            let moved = inv_m(&x.mul(&i), &y.mul(&j), m, n, 40).unwrap();
            assert_eq!(base, moved);
        }
    }

    #[test]
    fn oracle_invariance() {
        let f = f3();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = wdot(f, 1);
        let x = vdot(f, 1);
        let y = x.mul(&e_minus(&Laurent::monomial(f, Fq(2), 1))).mul(&w);
        let base = inv_m_oracle(&x, &y, 1, 1, 30, 5000).unwrap();
        assert_eq!(base, inv_m(&x, &y, 1, 1, 30).unwrap());
        let i = random_im(f, 1, 6, &mut rng);
        assert_eq!(inv_m_oracle(&x, &y.mul(&i), 1, 1, 30, 5000).unwrap(), base);
        assert_eq!(inv_m_oracle(&x.mul(&i), &y, 1, 1, 30, 5000).unwrap(), base);
        assert_eq!(inv_m_oracle(&x, &x, 1, 1, 30, 5000).unwrap(), DoubleCosetClass::Unit);
    }
}
