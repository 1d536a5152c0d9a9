//! Finite fields F_q with q = p^r, p odd, stored as lookup tables.
//!
//! An element is the index `sum c_i p^i` of its coefficient vector in the
//! basis 1, x, .., x^{r-1}; index order is lexicographic order on the
//! coefficient vector read from the top degree down. The prime subfield sits
//! at indices 0..p.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::{Mutex, OnceLock};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Fq(pub u16);

impl Fq {
    pub const ZERO: Fq = Fq(0);
    pub const ONE: Fq = Fq(1);
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldParams {
    pub p: u32,
    #[serde(default = "one")]
    pub r: u32,
    /// Monic modulus, coefficients from the constant term up.
    #[serde(default)]
    pub modulus: Option<Vec<u32>>,
    /// Degree of the extension used for rationality tests.
    #[serde(default = "two")]
    pub s: u32,
}

fn one() -> u32 {
    1
}
fn two() -> u32 {
    2
}

impl FieldParams {
    pub fn prime(p: u32) -> Self {
        FieldParams { p, r: 1, modulus: None, s: 2 }
    }
    pub fn build(&self) -> Result<&'static Field> {
        Field::new(self.p, self.r, self.modulus.clone())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum FqOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow(u64),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Frobenius {
    /// x -> x^p
    P,
    /// x -> x^q where q is the size of the base field (identity on a base field)
    Q,
}

pub struct Field {
    pub p: u32,
    pub r: u32,
    pub q: u32,
    pub modulus: Vec<u32>,
    sigma_q: u32,
    add: Vec<u16>,
    neg: Vec<u16>,
    log: Vec<u32>,
    exp: Vec<u16>,
    parent: Option<(&'static Field, Vec<Fq>)>,
}

impl std::fmt::Debug for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "F_{}[{:?}]", self.q, self.modulus)
    }
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self, other)
    }
}

static REGISTRY: OnceLock<Mutex<Vec<&'static Field>>> = OnceLock::new();

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

// polynomials over F_p, low-to-high, trimmed
fn poly_trim(mut a: Vec<u32>) -> Vec<u32> {
    while a.last() == Some(&0) {
        a.pop();
    }
    a
}

fn poly_rem(a: &[u32], m: &[u32], p: u32) -> Vec<u32> {
    let mut a = poly_trim(a.to_vec());
    let dm = m.len() - 1;
    let lead_inv = pow_mod(m[dm] as u64, p as u64 - 2, p as u64) as u32;
    while a.len() > dm {
        let da = a.len() - 1;
        let c = (a[da] as u64 * lead_inv as u64 % p as u64) as u32;
        for i in 0..=dm {
            let idx = da - dm + i;
            a[idx] = (a[idx] + p - (c as u64 * m[i] as u64 % p as u64) as u32) % p;
        }
        a = poly_trim(a);
    }
    a
}

fn poly_mulmod(a: &[u32], b: &[u32], m: &[u32], p: u32) -> Vec<u32> {
    if a.is_empty() || b.is_empty() {
        return vec![];
    }
    let mut c = vec![0u32; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            c[i + j] = ((c[i + j] as u64 + x as u64 * y as u64) % p as u64) as u32;
        }
    }
    poly_rem(&c, m, p)
}

pub(crate) fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = r * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    r
}

fn monic_of_index(p: u32, d: u32, mut idx: u64) -> Vec<u32> {
    let mut v = Vec::with_capacity(d as usize + 1);
    for _ in 0..d {
        v.push((idx % p as u64) as u32);
        idx /= p as u64;
    }
    v.push(1);
    v
}

/// Trial division by every monic polynomial of degree at most deg/2.
pub fn is_irreducible(f: &[u32], p: u32) -> bool {
    let f = poly_trim(f.to_vec());
    if f.len() < 2 {
        return false;
    }
    let d = (f.len() - 1) as u32;
    for e in 1..=d / 2 {
        for idx in 0..(p as u64).pow(e) {
            let g = monic_of_index(p, e, idx);
            if poly_rem(&f, &g, p).is_empty() {
                return false;
            }
        }
    }
    true
}

/// The first monic irreducible polynomial of degree d in index order.
pub fn first_irreducible(p: u32, d: u32) -> Vec<u32> {
    (0..(p as u64).pow(d))
        .map(|i| monic_of_index(p, d, i))
        .find(|f| is_irreducible(f, p))
        .expect("irreducible polynomials exist in every degree")
}

impl Field {
    pub fn prime(p: u32) -> Result<&'static Field> {
        Field::new(p, 1, None)
    }

    pub fn new(p: u32, r: u32, modulus: Option<Vec<u32>>) -> Result<&'static Field> {
        Self::intern(p, r, modulus, None)
    }

    fn intern(
        p: u32,
        r: u32,
        modulus: Option<Vec<u32>>,
        parent: Option<&'static Field>,
    ) -> Result<&'static Field> {
        if !is_prime(p as u64) {
            return Err(Error::NotPrime(p));
        }
        if p == 2 {
            return Err(Error::EvenCharacteristic);
        }
        if r == 0 {
            return Err(Error::BadModulus(r));
        }
        let q = (p as u64).pow(r);
        if q > 4096 {
            return Err(Error::FieldTooLarge(q));
        }
        let modulus = match modulus {
            Some(m) => {
                let m: Vec<u32> = m.iter().map(|c| c % p).collect();
                if m.len() != r as usize + 1 || m[r as usize] != 1 || !is_irreducible(&m, p) {
                    return Err(Error::BadModulus(r));
                }
                m
            }
            None => first_irreducible(p, r),
        };
        let sigma_q = parent.map(|f| f.q).unwrap_or(q as u32);
        let reg = REGISTRY.get_or_init(|| Mutex::new(Vec::new()));
        let mut reg = reg.lock().unwrap();
        if let Some(f) = reg
            .iter()
            .find(|f| f.p == p && f.modulus == modulus && f.sigma_q == sigma_q)
        {
            return Ok(f);
        }
        let f: &'static Field = Box::leak(Box::new(Self::build(p, r, modulus, sigma_q, parent)));
        reg.push(f);
        Ok(f)
    }

    fn build(p: u32, r: u32, modulus: Vec<u32>, sigma_q: u32, parent: Option<&'static Field>) -> Field {
        let q = p.pow(r);
        let to_poly = |mut i: u32| -> Vec<u32> {
            let mut v = Vec::new();
            for _ in 0..r {
                v.push(i % p);
                i /= p;
            }
            poly_trim(v)
        };
        let to_idx = |v: &[u32]| -> u32 { v.iter().rev().fold(0, |acc, &c| acc * p + c) };
        let mut add = vec![0u16; (q * q) as usize];
        let mut neg = vec![0u16; q as usize];
        for a in 0..q {
            let pa = to_poly(a);
            let mut na = vec![0; r as usize];
            for (i, c) in pa.iter().enumerate() {
                na[i] = (p - c) % p;
            }
            neg[a as usize] = to_idx(&na) as u16;
            for b in 0..q {
                let pb = to_poly(b);
                let mut s = vec![0; r as usize];
                for i in 0..r as usize {
                    s[i] = (pa.get(i).copied().unwrap_or(0) + pb.get(i).copied().unwrap_or(0)) % p;
                }
                add[(a * q + b) as usize] = to_idx(&s) as u16;
            }
        }
        let mut exp = Vec::new();
        let mut log = vec![0u32; q as usize];
        for g in 1..q {
            let pg = to_poly(g);
            let mut cur = vec![1u32];
            let mut seq = Vec::with_capacity(q as usize - 1);
            loop {
                seq.push(to_idx(&cur) as u16);
                cur = poly_mulmod(&cur, &pg, &modulus, p);
                if cur == [1] {
                    break;
                }
            }
            if seq.len() == q as usize - 1 {
                exp = seq;
                break;
            }
        }
        for (i, &e) in exp.iter().enumerate() {
            log[e as usize] = i as u32;
        }
        let mut f = Field { p, r, q, modulus, sigma_q, add, neg, log, exp, parent: None };
        if let Some(base) = parent {
            let root = f
                .elements()
                .find(|&x| {
                    let mut acc = Fq::ZERO;
                    for &c in base.modulus.iter().rev() {
                        acc = f.add(f.mul(acc, x), Fq(c as u16));
                    }
                    acc.is_zero()
                })
                .expect("base modulus splits in the extension");
            let embed = base
                .elements()
                .map(|y| {
                    let mut acc = Fq::ZERO;
                    for &c in base.coeffs(y).iter().rev() {
                        acc = f.add(f.mul(acc, root), Fq(c as u16));
                    }
                    acc
                })
                .collect();
            f.parent = Some((base, embed));
        }
        f
    }

    /// The degree-s extension, with sigma acting as x -> x^q.
    pub fn extension(&'static self, s: u32) -> Result<&'static Field> {
        if s == 0 {
            return Err(Error::Invalid("extension degree must be positive".into()));
        }
        let d = self.r * s;
        Self::intern(self.p, d, Some(first_irreducible(self.p, d)), Some(self))
    }

    /// The field this one was built as an extension of, if any.
    pub fn base(&self) -> Option<&'static Field> {
        self.parent.as_ref().map(|(b, _)| *b)
    }

    /// Embedding of the base field into this extension.
    pub fn embed(&self, x: Fq) -> Fq {
        match &self.parent {
            Some((_, e)) => e[x.0 as usize],
            None => x,
        }
    }

    /// Inverse of `embed`, defined on sigma-fixed elements.
    pub fn restrict(&self, y: Fq) -> Option<Fq> {
        match &self.parent {
            Some((_, e)) => e.iter().position(|&z| z == y).map(|i| Fq(i as u16)),
            None => Some(y),
        }
    }

    pub fn size(&self) -> usize {
        self.q as usize
    }

    pub fn elements(&self) -> impl Iterator<Item = Fq> + Clone {
        (0..self.q as u16).map(Fq)
    }

    pub fn units(&self) -> impl Iterator<Item = Fq> + Clone {
        (1..self.q as u16).map(Fq)
    }

    pub fn coeffs(&self, a: Fq) -> Vec<u32> {
        let mut i = a.0 as u32;
        (0..self.r)
            .map(|_| {
                let c = i % self.p;
                i /= self.p;
                c
            })
            .collect()
    }

    pub fn from_coeffs(&self, c: &[u32]) -> Fq {
        Fq(c.iter().rev().fold(0u32, |acc, &x| acc * self.p + x % self.p) as u16)
    }

    pub fn from_int(&self, k: i64) -> Fq {
        Fq(k.rem_euclid(self.p as i64) as u16)
    }

    #[inline]
    pub fn add(&self, a: Fq, b: Fq) -> Fq {
        Fq(self.add[a.0 as usize * self.q as usize + b.0 as usize])
    }
    #[inline]
    pub fn neg(&self, a: Fq) -> Fq {
        Fq(self.neg[a.0 as usize])
    }
    #[inline]
    pub fn sub(&self, a: Fq, b: Fq) -> Fq {
        self.add(a, self.neg(b))
    }
    #[inline]
    pub fn mul(&self, a: Fq, b: Fq) -> Fq {
        if a.0 == 0 || b.0 == 0 {
            return Fq::ZERO;
        }
        let l = self.log[a.0 as usize] + self.log[b.0 as usize];
        Fq(self.exp[(l % (self.q - 1)) as usize])
    }
    pub fn inv(&self, a: Fq) -> Result<Fq> {
        if a.0 == 0 {
            return Err(Error::DivisionByZero);
        }
        let l = self.log[a.0 as usize];
        Ok(Fq(self.exp[((self.q - 1 - l) % (self.q - 1)) as usize]))
    }
    pub fn div(&self, a: Fq, b: Fq) -> Result<Fq> {
        Ok(self.mul(a, self.inv(b)?))
    }
    pub fn pow(&self, a: Fq, e: u64) -> Fq {
        if e == 0 {
            return Fq::ONE;
        }
        if a.0 == 0 {
            return Fq::ZERO;
        }
        let l = self.log[a.0 as usize] as u64 * (e % (self.q as u64 - 1));
        Fq(self.exp[(l % (self.q as u64 - 1)) as usize])
    }

    /// A fixed generator of the multiplicative group.
    pub fn primitive(&self) -> Fq {
        Fq(self.exp[1 % self.exp.len()])
    }

    /// Discrete logarithm to the base `primitive()`.
    pub fn log(&self, a: Fq) -> Option<u32> {
        (a.0 != 0).then(|| self.log[a.0 as usize])
    }

    pub fn frobenius(&self, a: Fq, which: Frobenius) -> Fq {
        match which {
            Frobenius::P => self.pow(a, self.p as u64),
            Frobenius::Q => self.pow(a, self.sigma_q as u64),
        }
    }

    /// The coefficient Frobenius x -> x^q.
    #[inline]
    pub fn sigma(&self, a: Fq) -> Fq {
        if self.sigma_q == self.q {
            a
        } else {
            self.pow(a, self.sigma_q as u64)
        }
    }

    pub fn is_square(&self, a: Fq) -> bool {
        a.0 == 0 || self.log[a.0 as usize] % 2 == 0
    }

    /// A square root, when one exists.
    pub fn sqrt(&self, a: Fq) -> Option<Fq> {
        if a.0 == 0 {
            return Some(Fq::ZERO);
        }
        let l = self.log[a.0 as usize];
        (l % 2 == 0).then(|| Fq(self.exp[(l / 2) as usize]))
    }

    /// Absolute trace to the prime field, as an integer in [0, p).
    pub fn trace_to_prime(&self, a: Fq) -> u32 {
        let mut acc = Fq::ZERO;
        let mut x = a;
        for _ in 0..self.r {
            acc = self.add(acc, x);
            x = self.pow(x, self.p as u64);
        }
        acc.0 as u32
    }

    pub fn fmt_elem(&self, a: Fq) -> String {
        if self.r == 1 {
            return a.0.to_string();
        }
        let c = self.coeffs(a);
        let terms: Vec<String> = c
            .iter()
            .enumerate()
            .rev()
            .filter(|(_, &x)| x != 0)
            .map(|(i, &x)| match i {
                0 => x.to_string(),
                1 => format!("{x}x"),
                _ => format!("{x}x^{i}"),
            })
            .collect();
        if terms.is_empty() {
            "0".into()
        } else {
            format!("({})", terms.join("+"))
        }
    }
}

pub fn fq_arith(f: &Field, a: Fq, b: Fq, op: FqOp) -> Result<Fq> {
    Ok(match op {
        FqOp::Add => f.add(a, b),
        FqOp::Sub => f.sub(a, b),
        FqOp::Mul => f.mul(a, b),
        FqOp::Div => f.div(a, b)?,
        FqOp::Pow(e) => f.pow(a, e),
    })
}

pub fn fq_frobenius(f: &Field, a: Fq, which: Frobenius) -> Fq {
    f.frobenius(a, which)
}

pub fn fq_is_square(f: &Field, a: Fq) -> bool {
    f.is_square(a)
}
