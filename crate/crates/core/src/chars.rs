//! Characters of E^x of level <= m with values in a prime field F_l, and the
//! modification machinery: z_x x' decompositions, chi_s, distances and Q_alpha.

use std::collections::{HashSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{is_prime, Field, Fq};
use crate::series::{in_r_alpha_prime, RAlphaParams, Series};

/// F_l with a fixed primitive root; the coefficient ring for all traces.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValueRing {
    pub ell: u64,
    /// Order of the roots of unity allowed as chi(u).
    pub n_prime: u64,
    pub root: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

fn factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

impl ValueRing {
    /// p^e with p^e >= m + 1: the exponent of the principal units mod u^{m+1}.
    pub fn p_part(f: &Field, m: usize) -> u64 {
        let mut e = f.p as u64;
        while e < m as u64 + 1 {
            e *= f.p as u64;
        }
        e
    }

    /// N' = 2 (q - 1) p^{ceil(log_p(m + 1))}.
    pub fn default_n_prime(f: &Field, m: usize) -> u64 {
        2 * (f.q as u64 - 1) * Self::p_part(f, m)
    }

    pub fn bound(f: &Field, m: usize) -> u64 {
        2 * (f.q as u64 - 1) * (f.q as u64).pow(m as u32)
    }

    pub fn new(f: &Field, m: usize, ell: u64) -> Result<Self> {
        let np = Self::default_n_prime(f, m);
        let modulus = lcm(np, f.p as u64);
        if !is_prime(ell) {
            return Err(Error::Invalid(format!("ell' = {ell} is not prime")));
        }
        if ell <= Self::bound(f, m) {
            return Err(Error::Invalid(format!("ell' = {ell} must exceed {}", Self::bound(f, m))));
        }
        if (ell - 1) % modulus != 0 {
            return Err(Error::Invalid(format!("ell' = {ell} is not 1 mod {modulus}")));
        }
        let fs = factors(ell - 1);
        let root = (2..ell)
            .find(|&g| fs.iter().all(|&r| pow_mod(g, (ell - 1) / r, ell) != 1))
            .ok_or_else(|| Error::Invalid("no primitive root".into()))?;
        Ok(ValueRing { ell, n_prime: np, root })
    }

    /// The least admissible prime.
    pub fn auto(f: &Field, m: usize) -> Result<Self> {
        let modulus = lcm(Self::default_n_prime(f, m), f.p as u64);
        let mut ell = modulus + 1;
        while ell <= Self::bound(f, m) || !is_prime(ell) {
            ell += modulus;
        }
        Self::new(f, m, ell)
    }

    pub fn mul(&self, a: u32, b: u32) -> u32 {
        (a as u64 * b as u64 % self.ell) as u32
    }

    pub fn add(&self, a: u32, b: u32) -> u32 {
        ((a as u64 + b as u64) % self.ell) as u32
    }

    pub fn neg(&self, a: u32) -> u32 {
        ((self.ell - a as u64) % self.ell) as u32
    }

    pub fn pow(&self, a: u32, e: u64) -> u32 {
        pow_mod(a as u64, e, self.ell) as u32
    }

    pub fn inv(&self, a: u32) -> u32 {
        self.pow(a, self.ell - 2)
    }

    pub fn from_int(&self, k: i64) -> u32 {
        k.rem_euclid(self.ell as i64) as u32
    }

    /// Representative in (-l/2, l/2).
    pub fn signed(&self, a: u32) -> i64 {
        let a = a as i64;
        if a > self.ell as i64 / 2 {
            a - self.ell as i64
        } else {
            a
        }
    }

    /// A primitive d-th root of unity.
    pub fn zeta(&self, d: u64) -> Result<u32> {
        if d == 0 || (self.ell - 1) % d != 0 {
            return Err(Error::Invalid(format!("{d} does not divide ell' - 1 = {}", self.ell - 1)));
        }
        Ok(pow_mod(self.root, (self.ell - 1) / d, self.ell) as u32)
    }
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % m;
        }
        b = b * b % m;
        e >>= 1;
    }
    acc
}

/// U_E / U_E^{m+1} with canonical generators, indexed by `Series::unit_index`.
#[derive(Clone, Debug)]
pub struct UnitGroup {
    pub f: &'static Field,
    pub m: usize,
    pub elems: Vec<Series>,
    pub gens: Vec<Series>,
    pub orders: Vec<u64>,
    gen_perm: Vec<Vec<u32>>,
    tau_perm: Vec<u32>,
    identity: usize,
}

impl UnitGroup {
    pub fn new(f: &'static Field, m: usize) -> Self {
        let l = m + 1;
        let elems: Vec<Series> = Series::units(f, l).collect();
        let mut gens = vec![Series::constant(f, f.primitive(), l)];
        for j in 1..=m {
            for b in 0..f.r {
                let mut c = vec![0u32; f.r as usize];
                c[b as usize] = 1;
                gens.push(&Series::one(f, l) + &Series::monomial(f, f.from_coeffs(&c), j, l));
            }
        }
        let one = Series::one(f, l);
        let orders = gens
            .iter()
            .map(|g| {
                let mut x = g.clone();
                let mut k = 1;
                while x != one {
                    x = &x * g;
                    k += 1;
                }
                k
            })
            .collect();
        let gen_perm = gens.iter().map(|g| elems.iter().map(|x| (x * g).unit_index() as u32).collect()).collect();
        let tau_perm = elems.iter().map(|x| x.tau().unit_index() as u32).collect();
        UnitGroup { f, m, elems, gens, orders, gen_perm, tau_perm, identity: one.unit_index() }
    }

    pub fn size(&self) -> usize {
        self.elems.len()
    }

    pub fn index(&self, x: &Series) -> usize {
        x.resize(self.m + 1).unit_index()
    }

    /// Indices of U_F U_E^i: units whose odd part has valuation >= i.
    pub fn in_uf_ue(&self, x: &Series, i: usize) -> bool {
        i == 0 || (x - &x.even_part()).valuation() >= i
    }

    /// Indices of U_E^i (i >= 1).
    pub fn in_ue(&self, x: &Series, i: usize) -> bool {
        i == 0 || (x - &Series::one(self.f, self.m + 1)).valuation() >= i
    }
}

/// A character of E^x trivial on U_E^{m+1}: chi(u) and the table on units.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Character {
    pub on_u: u32,
    pub table: Vec<u32>,
}

/// Exponents defining a character on the canonical generators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharSpec {
    pub on_u_exponent: u64,
    pub generator_values: Vec<u64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CharClass {
    pub level: usize,
    pub admissible: bool,
    pub minimal: bool,
}

/// A character of F^x U_E^{2 alpha + 1}: chi(t) and the values on units of the subgroup.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartialChar {
    pub alpha: usize,
    pub on_t: u32,
    pub table: Vec<Option<u32>>,
}

/// (i(theta), alpha_theta, s(theta)).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModificationData {
    pub i_theta: usize,
    pub alpha_theta: usize,
    pub s_theta: Series,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QMode {
    ClosedForm,
    BruteForce,
}

/// Characters together with their ambient group and coefficient ring.
#[derive(Clone, Debug)]
pub struct CharCtx {
    pub vr: ValueRing,
    pub g: UnitGroup,
}

impl CharCtx {
    pub fn new(f: &'static Field, m: usize, vr: ValueRing) -> Self {
        CharCtx { vr, g: UnitGroup::new(f, m) }
    }

    pub fn auto(f: &'static Field, m: usize) -> Result<Self> {
        Ok(Self::new(f, m, ValueRing::auto(f, m)?))
    }

    pub fn f(&self) -> &'static Field {
        self.g.f
    }

    pub fn m(&self) -> usize {
        self.g.m
    }

    pub fn n(&self) -> usize {
        (self.g.m + 1) / 2
    }

    /// Complete generator values along the Cayley graph; None if inconsistent.
    fn extend(&self, vals: &[u32]) -> Option<Vec<u32>> {
        let size = self.g.size();
        let mut table = vec![u32::MAX; size];
        table[self.g.identity] = 1;
        let mut queue = VecDeque::from([self.g.identity]);
        while let Some(x) = queue.pop_front() {
            for (i, perm) in self.g.gen_perm.iter().enumerate() {
                let y = perm[x] as usize;
                let v = self.vr.mul(table[x], vals[i]);
                if table[y] == u32::MAX {
                    table[y] = v;
                    queue.push_back(y);
                } else if table[y] != v {
                    return None;
                }
            }
        }
        Some(table)
    }

    pub fn build(&self, spec: &CharSpec) -> Result<Character> {
        if spec.generator_values.len() != self.g.gens.len() {
            return Err(Error::Invalid(format!(
                "expected {} generator values, got {}",
                self.g.gens.len(),
                spec.generator_values.len()
            )));
        }
        let mut vals = Vec::new();
        for (&e, &o) in spec.generator_values.iter().zip(&self.g.orders) {
            vals.push(self.vr.pow(self.vr.zeta(o)?, e));
        }
        let table = self
            .extend(&vals)
            .ok_or_else(|| Error::Invalid("generator values are inconsistent with the group relations".into()))?;
        let on_u = self.vr.pow(self.vr.zeta(self.vr.n_prime)?, spec.on_u_exponent);
        Ok(Character { on_u, table })
    }

    pub fn trivial(&self) -> Character {
        Character { on_u: 1, table: vec![1; self.g.size()] }
    }

    /// All characters of U_E/U_E^{m+1}, paired with chi(u) = `on_u`.
    pub fn all_with_on_u(&self, on_u: u32) -> Vec<Character> {
        let orders = &self.g.orders;
        let total: u64 = orders.iter().product();
        let zetas: Vec<u32> = orders.iter().map(|&o| self.vr.zeta(o).unwrap()).collect();
        let out: Vec<Character> = (0..total)
            .into_par_iter()
            .filter_map(|mut k| {
                let mut vals = Vec::with_capacity(orders.len());
                for (i, &o) in orders.iter().enumerate() {
                    vals.push(self.vr.pow(zetas[i], k % o));
                    k /= o;
                }
                self.extend(&vals).map(|table| Character { on_u, table })
            })
            .collect();
        debug_assert_eq!(out.len(), self.g.size());
        out
    }

    pub fn eval_unit(&self, chi: &Character, x: &Series) -> u32 {
        chi.table[self.g.index(x)]
    }

    /// chi(u^k x) for a unit x.
    pub fn eval(&self, chi: &Character, k: i64, x: &Series) -> u32 {
        let vu = if k >= 0 { self.vr.pow(chi.on_u, k as u64) } else { self.vr.pow(self.vr.inv(chi.on_u), (-k) as u64) };
        self.vr.mul(vu, self.eval_unit(chi, x))
    }

    pub fn on_t(&self, chi: &Character) -> u32 {
        self.vr.mul(chi.on_u, chi.on_u)
    }

    /// chi o tau; tau(u) = -u.
    pub fn tau(&self, chi: &Character) -> Character {
        let minus = self.g.index(&Series::constant(self.f(), self.f().neg(Fq::ONE), self.m() + 1));
        Character {
            on_u: self.vr.mul(chi.on_u, chi.table[minus]),
            table: self.g.tau_perm.iter().map(|&j| chi.table[j as usize]).collect(),
        }
    }

    pub fn mul(&self, a: &Character, b: &Character) -> Character {
        Character {
            on_u: self.vr.mul(a.on_u, b.on_u),
            table: a.table.iter().zip(&b.table).map(|(&x, &y)| self.vr.mul(x, y)).collect(),
        }
    }

    pub fn is_homomorphism(&self, chi: &Character) -> bool {
        let g = &self.g;
        (0..g.size()).into_par_iter().all(|i| {
            (0..g.size()).all(|j| {
                let k = g.index(&(&g.elems[i] * &g.elems[j]));
                chi.table[k] == self.vr.mul(chi.table[i], chi.table[j])
            })
        })
    }

    fn trivial_on(&self, chi: &Character, pred: impl Fn(&Series) -> bool) -> bool {
        self.g.elems.iter().enumerate().all(|(i, x)| !pred(x) || chi.table[i] == 1)
    }

    pub fn level(&self, chi: &Character) -> usize {
        (0..=self.m()).find(|&l| self.trivial_on(chi, |x| self.g.in_ue(x, l + 1))).unwrap_or(self.m())
    }

    /// Whether chi restricted to U_E^i factors through the norm, i.e. is
    /// trivial on {x tau(x)^{-1} : x in U_E^i}.
    pub fn factors_through_norm(&self, chi: &Character, i: usize) -> bool {
        self.g.elems.iter().filter(|x| self.g.in_ue(x, i)).all(|x| {
            let y = x * &x.tau().inv().expect("unit");
            self.eval_unit(chi, &y) == 1
        })
    }

    pub fn classify(&self, chi: &Character) -> CharClass {
        let level = self.level(chi);
        let admissible = !self.factors_through_norm(chi, 1);
        let minimal = admissible && level >= 1 && !self.factors_through_norm(chi, level);
        CharClass { level, admissible, minimal }
    }

    /// Agreement on F^x U_E^i.
    pub fn agree_on(&self, a: &Character, b: &Character, i: usize) -> bool {
        self.on_t(a) == self.on_t(b)
            && self.g.elems.iter().enumerate().all(|(k, x)| !self.g.in_uf_ue(x, i) || a.table[k] == b.table[k])
    }

    /// x = z_x x' with z_x the even part and x' = 1 + u^{2 alpha + 1} h.
    /// Returns (z_x, h) with h an even series of level m - 2 alpha.
    pub fn decompose_z_xprime(&self, x: &Series, alpha: usize) -> Result<(Series, Series)> {
        let l = self.m() + 1;
        let x = x.resize(l);
        let e = 2 * alpha + 1;
        if !x.is_unit() {
            return Err(Error::NotUnit);
        }
        if !self.g.in_uf_ue(&x, e) {
            return Err(Error::Invalid(format!("{x} is not in U_F U_E^{e}")));
        }
        let z = x.even_part();
        let xp = &x * &z.inv()?;
        Ok((z, xp.shift_down(e)))
    }

    fn check_s(&self, s: &Series, alpha: usize) -> Result<RAlphaParams> {
        let rp = RAlphaParams::new(self.m(), alpha)?;
        if s.level() != rp.level() || !in_r_alpha_prime(s, &rp) {
            return Err(Error::Invalid(format!("{s} is not in R'_{alpha}")));
        }
        Ok(rp)
    }

    /// chi(1 + u^{2 alpha + 1} h s).
    fn twisted(&self, chi: &Character, h: &Series, s: &Series, alpha: usize) -> u32 {
        let y = (h * s).resize(self.m() + 1).shift_up(2 * alpha + 1);
        self.eval_unit(chi, &(&Series::one(self.f(), self.m() + 1) + &y))
    }

    /// chi_s(x) for x in U_F U_E^{2 alpha + 1}.
    pub fn chi_s_value(&self, chi: &Character, s: &Series, alpha: usize, x: &Series) -> Result<u32> {
        self.check_s(s, alpha)?;
        let (z, h) = self.decompose_z_xprime(x, alpha)?;
        Ok(self.vr.mul(self.eval_unit(chi, &z), self.twisted(chi, &h, s, alpha)))
    }

    pub fn elementary_modification(&self, chi: &Character, s: &Series, alpha: usize) -> Result<PartialChar> {
        self.check_s(s, alpha)?;
        let e = 2 * alpha + 1;
        let table = self
            .g
            .elems
            .iter()
            .map(|x| {
                if self.g.in_uf_ue(x, e) {
                    let (z, h) = self.decompose_z_xprime(x, alpha)?;
                    Ok(Some(self.vr.mul(self.eval_unit(chi, &z), self.twisted(chi, &h, s, alpha))))
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        Ok(PartialChar { alpha, on_t: self.on_t(chi), table })
    }

    pub fn partial_is_homomorphism(&self, p: &PartialChar) -> bool {
        let g = &self.g;
        let dom: Vec<usize> = (0..g.size()).filter(|&i| p.table[i].is_some()).collect();
        dom.par_iter().all(|&i| {
            dom.iter().all(|&j| {
                let k = g.index(&(&g.elems[i] * &g.elems[j]));
                p.table[k] == Some(self.vr.mul(p.table[i].unwrap(), p.table[j].unwrap()))
            })
        })
    }

    pub fn restrict(&self, chi: &Character, alpha: usize) -> PartialChar {
        let e = 2 * alpha + 1;
        let table = self.g.elems.iter().enumerate().map(|(i, x)| self.g.in_uf_ue(x, e).then(|| chi.table[i])).collect();
        PartialChar { alpha, on_t: self.on_t(chi), table }
    }

    /// i(theta): least i with theta = chi or chi^tau on F^x U_E^i.
    pub fn index_of_coincidence(&self, chi: &Character, theta: &Character) -> Result<usize> {
        let m = self.m();
        if !self.agree_on(chi, theta, m + 1) {
            return Err(Error::Invalid("theta does not coincide with chi on F^x U_E^{m+1}".into()));
        }
        let ct = self.tau(chi);
        Ok((0..=m + 1).find(|&i| self.agree_on(chi, theta, i) || self.agree_on(&ct, theta, i)).unwrap_or(m + 1))
    }

    /// s(theta, alpha): the unique s in R'_alpha with theta = chi_s on F^x U_E^{2 alpha + 1}.
    pub fn distance_at(&self, chi: &Character, theta: &Character, alpha: usize) -> Result<Series> {
        let rp = RAlphaParams::new(self.m(), alpha)?;
        let k = (self.m() + 1).min(2 * (2 * alpha + 1));
        if !self.agree_on(chi, theta, k) && !self.agree_on(&self.tau(chi), theta, k) {
            return Err(Error::Invalid(format!("theta is not chi or chi^tau on F^x U_E^{k}")));
        }
        let target = self.restrict(theta, alpha);
        let hits: Vec<Series> = rp
            .primed(self.f())
            .into_iter()
            .filter(|s| self.elementary_modification(chi, s, alpha).map(|p| p == target).unwrap_or(false))
            .collect();
        match hits.len() {
            1 => Ok(hits.into_iter().next().unwrap()),
            k => Err(Error::Invalid(format!("{k} modifications match theta"))),
        }
    }

    pub fn index_and_distance(&self, chi: &Character, theta: &Character) -> Result<ModificationData> {
        let i = self.index_of_coincidence(chi, theta)?;
        let alpha = (0..self.n()).find(|&a| 2 * (2 * a + 1) >= i).unwrap_or(0);
        let s = self.distance_at(chi, theta, alpha)?;
        Ok(ModificationData { i_theta: i, alpha_theta: alpha, s_theta: s })
    }

    pub fn is_properly_quadratic(&self, chi: &Character, theta: &Character) -> Result<bool> {
        let d = self.index_and_distance(chi, theta)?;
        Ok(in_q_alpha(&d.s_theta, self.m(), d.alpha_theta))
    }
}

/// Closed-form membership test for s in Q_alpha (s assumed in R'_alpha).
pub fn in_q_alpha(s: &Series, m: usize, alpha: usize) -> bool {
    let f = s.f;
    let n = (m + 1) / 2;
    let l = s.level();
    let one = Series::one(f, l);
    let mone = -&one;
    if *s == one || *s == mone {
        return false;
    }
    let s0 = s.c[0];
    let minus1 = f.neg(Fq::ONE);
    if s0 != Fq::ONE && s0 != minus1 {
        if alpha < n / 2 {
            return false;
        }
        let v = f.sub(f.mul(s0, s0), Fq::ONE);
        return f.is_square(v);
    }
    let eps = if s0 == Fq::ONE { &one } else { &mone };
    let d = s - eps;
    let v = d.valuation();
    let j = v / 2;
    let lo = 1.max(n.saturating_sub(2 * alpha + 1));
    if j < lo || j + alpha + 1 > n {
        return false;
    }
    let mut x = f.add(d.c[v], d.c[v]);
    if s0 == minus1 {
        x = f.neg(x);
    }
    if j % 2 == 1 {
        x = f.neg(x);
    }
    f.is_square(x)
}

pub fn q_alpha_set(f: &'static Field, m: usize, alpha: usize, mode: QMode) -> Result<Vec<Series>> {
    let rp = RAlphaParams::new(m, alpha)?;
    let primed = rp.primed(f);
    let l = rp.level();
    let one = Series::one(f, l);
    let mone = -&one;
    Ok(match mode {
        QMode::ClosedForm => primed.into_iter().filter(|s| in_q_alpha(s, m, alpha)).collect(),
        QMode::BruteForce => {
            let norms: HashSet<Series> = Series::all(f, l).map(|r| r.norm_tau()).collect();
            primed
                .into_par_iter()
                .filter(|s| *s != one && *s != mone && norms.contains(&(&(s * s) - &one)))
                .collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(q: u32, m: usize) -> CharCtx {
        CharCtx::auto(Field::prime(q).unwrap(), m).unwrap()
    }

    #[test]
    fn value_ring_choice() {
        let f3 = Field::prime(3).unwrap();
        let f5 = Field::prime(5).unwrap();
        assert_eq!(ValueRing::auto(f3, 1).unwrap().ell, 13);
        assert_eq!(ValueRing::auto(f5, 1).unwrap().ell, 41);
        assert_eq!(ValueRing::auto(f3, 3).unwrap().ell, 109);
        assert!(ValueRing::new(f3, 1, 7).is_err());
        assert!(ValueRing::new(f3, 1, 37).is_ok());
        let vr = ValueRing::auto(f3, 3).unwrap();
        let z = vr.zeta(36).unwrap();
        assert_eq!(vr.pow(z, 36), 1);
        assert_ne!(vr.pow(z, 18), 1);
        assert_eq!(vr.signed(vr.from_int(-5)), -5);
    }

    #[test]
    fn character_count_and_homomorphism() {
        for (q, m) in [(3, 1), (3, 3), (5, 1)] {
            let c = ctx(q, m);
            let all = c.all_with_on_u(1);
            assert_eq!(all.len(), c.g.size());
            let set: HashSet<_> = all.iter().collect();
            assert_eq!(set.len(), all.len());
            for chi in all.iter().step_by(7) {
                assert!(c.is_homomorphism(chi));
                assert_eq!(c.level(chi), c.level(&c.tau(chi)));
            }
        }
    }

    #[test]
    fn build_from_spec() {
        let c = ctx(3, 3);
        let triv = c.build(&CharSpec { on_u_exponent: 0, generator_values: vec![0; c.g.gens.len()] }).unwrap();
        assert_eq!(triv, c.trivial());
        assert_eq!(c.level(&triv), 0);
        let mut vals = vec![0; c.g.gens.len()];
        vals[1] = 1;
        vals[3] = 1;
        let chi = c.build(&CharSpec { on_u_exponent: 1, generator_values: vals }).unwrap();
        assert_eq!(c.level(&chi), 3);
        assert!(c.is_homomorphism(&chi));
        let mut bad = vec![0; c.g.gens.len()];
        bad[3] = 1;
        assert!(c.build(&CharSpec { on_u_exponent: 0, generator_values: bad }).is_err());
    }

    #[test]
    fn minimal_characters() {
        let c = ctx(3, 1);
        let all = c.all_with_on_u(1);
        let minimal: Vec<_> = all.iter().filter(|x| c.classify(x).minimal).collect();
        assert!(!minimal.is_empty());
        for chi in minimal {
            assert_eq!(c.level(chi), 1);
            let ct = c.tau(chi);
            assert!(c.g.elems.iter().enumerate().any(|(i, x)| c.g.in_ue(x, 1) && chi.table[i] != ct.table[i]));
        }
        let norm_like = all.iter().find(|x| c.factors_through_norm(x, 1) && c.level(x) == 0).unwrap();
        assert!(!c.classify(norm_like).admissible);
    }

    #[test]
    fn decomposition_round_trip() {
        let c = ctx(3, 3);
        let f = c.f();
        for x in &c.g.elems {
            for alpha in 0..2 {
                if let Ok((z, h)) = c.decompose_z_xprime(x, alpha) {
                    assert!(z.is_tau_invariant());
                    assert!(h.is_tau_invariant());
                    let xp = &Series::one(f, 4) + &h.resize(4).shift_up(2 * alpha + 1);
                    assert_eq!(&z * &xp, *x);
                }
            }
        }
        let x = Series::from_ints(f, &[1, 1], 4);
        let (z, h) = c.decompose_z_xprime(&x, 0).unwrap();
        assert_eq!(z, Series::one(f, 4));
        assert_eq!(h.c[0], Fq::ONE);
        let (_, h) = c.decompose_z_xprime(&Series::from_ints(f, &[2, 0, 1], 4), 0).unwrap();
        assert!(h.is_zero());
    }

    #[test]
    fn modifications() {
        for (q, m) in [(3, 1), (3, 3), (5, 3)] {
            let c = ctx(q, m);
            let f = c.f();
            let all = c.all_with_on_u(1);
            let chi = all.iter().find(|x| c.classify(x).minimal && c.level(x) == m).unwrap();
            let ct = c.tau(chi);
            for alpha in 0..c.n() {
                let rp = RAlphaParams::new(m, alpha).unwrap();
                let primed = rp.primed(f);
                let mut seen = HashSet::new();
                for s in &primed {
                    let p = c.elementary_modification(chi, s, alpha).unwrap();
                    assert!(c.partial_is_homomorphism(&p));
                    assert!(seen.insert(p.table.clone()));
                }
                let one = Series::one(f, rp.level());
                assert_eq!(c.elementary_modification(chi, &one, alpha).unwrap(), c.restrict(chi, alpha));
                assert_eq!(c.elementary_modification(chi, &-&one, alpha).unwrap(), c.restrict(&ct, alpha));
            }
            if m > 1 {
                assert!(c.elementary_modification(chi, &Series::from_ints(f, &[1, 1], m), 0).is_err());
            }
        }
    }

    #[test]
    fn distances() {
        let c = ctx(3, 3);
        let f = c.f();
        let all = c.all_with_on_u(1);
        let chi = all.iter().find(|x| c.classify(x).minimal && c.level(x) == 3).unwrap().clone();
        let d = c.index_and_distance(&chi, &chi).unwrap();
        assert_eq!((d.i_theta, d.alpha_theta), (0, 0));
        assert_eq!(d.s_theta, Series::one(f, 3));
        let d = c.index_and_distance(&chi, &c.tau(&chi)).unwrap();
        assert_eq!(d.s_theta, -&Series::one(f, 3));
        assert!(!c.is_properly_quadratic(&chi, &chi).unwrap());
        let mut found = 0;
        for theta in &all {
            if !c.agree_on(&chi, theta, 4) {
                continue;
            }
            found += 1;
            let d = c.index_and_distance(&chi, theta).unwrap();
            assert_eq!(d.i_theta % 2, 0);
            assert!(d.alpha_theta <= c.n() / 2);
            for a2 in d.alpha_theta..c.n() {
                let s2 = c.distance_at(&chi, theta, a2).unwrap();
                assert_eq!(d.s_theta.resize(s2.level()), s2);
            }
        }
        assert_eq!(found, 9);
    }

    #[test]
    fn q_alpha() {
        let f5 = Field::prime(5).unwrap();
        let q0 = q_alpha_set(f5, 1, 0, QMode::BruteForce).unwrap();
        assert_eq!(q0, vec![Series::zero(f5, 1)]);
        for q in [3, 5, 7] {
            let f = Field::prime(q).unwrap();
            for m in [1, 3, 5] {
                let n = (m + 1) / 2;
                for alpha in 0..n {
                    let a = q_alpha_set(f, m, alpha, QMode::ClosedForm).unwrap();
                    let b = q_alpha_set(f, m, alpha, QMode::BruteForce).unwrap();
                    let sa: HashSet<_> = a.iter().cloned().collect();
                    let sb: HashSet<_> = b.iter().cloned().collect();
                    assert_eq!(sa, sb, "q={q} m={m} alpha={alpha}");
                    if alpha == n - 1 {
                        assert_eq!(a.len(), (q as usize - 3) / 2);
                    }
                    if alpha + 2 <= n {
                        let next = RAlphaParams::new(m, alpha + 1).unwrap().level();
                        for pm in [Series::one(f, next), -&Series::one(f, next)] {
                            let k = a.iter().filter(|s| s.resize(next) == pm).count();
                            assert_eq!(k, (q as usize - 1) / 2);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn properly_quadratic_q5() {
        let c = ctx(5, 1);
        let all = c.all_with_on_u(1);
        let chi = all.iter().find(|x| c.classify(x).minimal).unwrap();
        let zero = Series::zero(c.f(), 1);
        let mut hit = false;
        for theta in &all {
            if c.agree_on(chi, theta, 2) {
                let d = c.index_and_distance(chi, theta).unwrap();
                let pq = c.is_properly_quadratic(chi, theta).unwrap();
                assert_eq!(pq, d.s_theta == zero);
                hit |= pq;
            }
        }
        assert!(hit);
    }
}
