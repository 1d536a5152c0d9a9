//! The finite model V_chi of Xi_chi on Y-points, its trace oracles, the
//! closed-form trace formulas, multiplicities and the cuspidal-type side.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::adlv::{enumerate_d_w_tau, h_factor, r_of, LevelParams, PointY, Regime, RightElem};
use crate::chars::{in_q_alpha, q_alpha_set, CharCtx, Character, QMode, ValueRing};
use crate::error::{Error, Result};
use crate::field::{Field, Fq};
use crate::gl2::{in_subgroup, iota_series, varpi, y_i, Laurent, Mat2, Subgroup};
use crate::series::{in_r_alpha_prime, RAlphaParams, Series};

/// A matrix with exactly one nonzero entry per row: row b has `rows[b] = (column, value)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Monomial {
    pub rows: Vec<(usize, u32)>,
}

impl Monomial {
    pub fn trace(&self, vr: &ValueRing) -> u32 {
        self.rows.iter().enumerate().filter(|(b, (c, _))| b == c).fold(0, |acc, (_, &(_, v))| vr.add(acc, v))
    }

    /// self * o
    pub fn compose(&self, o: &Self, vr: &ValueRing) -> Self {
        Monomial { rows: self.rows.iter().map(|&(k, v)| (o.rows[k].0, vr.mul(v, o.rows[k].1))).collect() }
    }
}

/// Half of the u-valuation of det(g).
pub fn e_val(g: &Mat2) -> Result<i32> {
    let d = g.det();
    if d.is_known_zero() {
        return Err(Error::DivisionByZero);
    }
    let v = d.val();
    if v % 2 != 0 {
        return Err(Error::Invalid(format!("det has odd u-valuation {v}")));
    }
    Ok(v / 2)
}

/// t^k as a scalar matrix.
pub fn t_pow(f: &'static Field, k: i32) -> Mat2 {
    Mat2::scalar(&Laurent::monomial(f, Fq::ONE, 2 * k))
}

/// varpi^k = varpi^{k mod 2} t^{k div 2}.
pub fn varpi_pow(f: &'static Field, k: i32) -> Mat2 {
    let t = t_pow(f, k.div_euclid(2));
    if k.rem_euclid(2) == 1 {
        varpi(f).mul(&t)
    } else {
        t
    }
}

/// For x in U_J: the e mod u^k with x in iota(e) U_J^k, if any.
pub fn torus_part(x: &Mat2, k: usize, rp: usize) -> Result<Option<Series>> {
    if !in_subgroup(x, Subgroup::UJ)? {
        return Ok(None);
    }
    let f = x.field();
    let a = x.e[0].to_series(k + 1)?;
    let b = x.e[1].to_series(k + 1)?;
    let mut e = Series::zero(f, k);
    for i in 0..k {
        e.c[i] = if i % 2 == 0 { a.c[i] } else { b.c[i - 1] };
    }
    let j = iota_series(&e).inv(rp)?.mul(x);
    Ok(in_subgroup(&j, Subgroup::UJN(k))?.then_some(e))
}

/// x = varpi^k iota(e0) j with j in U_J^n, when x lies in E^x U_J^n.
#[derive(Clone, Debug)]
pub struct JDecomp {
    pub k: i32,
    pub e0: Series,
    pub j: Mat2,
}

pub fn j_decompose(x: &Mat2, n: usize, rp: usize) -> Result<Option<JDecomp>> {
    let f = x.field();
    let k = e_val(x)?;
    let xp = varpi_pow(f, -k).mul(x);
    let Some(e0) = torus_part(&xp, n, rp)? else {
        return Ok(None);
    };
    let j = iota_series(&e0).inv(rp)?.mul(&xp);
    Ok(Some(JDecomp { k, e0, j }))
}

fn vu(x: &Laurent) -> i64 {
    x.val() as i64
}

fn half(f: &'static Field) -> Fq {
    f.inv(f.from_int(2)).expect("odd characteristic")
}

/// Square root of an even unit series by the coefficient recursion in t.
pub fn sqrt_even(w: &Series) -> Result<Series> {
    let f = w.f;
    let wt = w.t_coeffs();
    let y0 = f.sqrt(wt[0]).ok_or_else(|| Error::Invalid(format!("{} is not a square", f.fmt_elem(wt[0]))))?;
    if y0.is_zero() {
        return Err(Error::NotUnit);
    }
    let inv2y0 = f.inv(f.add(y0, y0))?;
    let mut y = vec![y0];
    for k in 1..wt.len() {
        let mut acc = wt[k];
        for i in 1..k {
            acc = f.sub(acc, f.mul(y[i], y[k - i]));
        }
        y.push(f.mul(acc, inv2y0));
    }
    Ok(Series::from_t_coeffs(f, &y, w.level()))
}

#[derive(Clone, Debug)]
pub enum Conjugacy {
    /// g in U_F U_J^n
    Central,
    /// conjugate = conjugator^{-1} g conjugator lies in U_E U_J^n; depth is v_u(g_3).
    Torus { depth: usize, conjugator: Mat2, conjugate: Mat2 },
    NonTorus,
}

impl Conjugacy {
    pub fn tag(&self) -> &'static str {
        match self {
            Conjugacy::Central => "central",
            Conjugacy::Torus { .. } => "torus",
            Conjugacy::NonTorus => "non-torus",
        }
    }
}

pub fn conjugacy_detect(g: &Mat2, n: usize, rp: usize) -> Result<Conjugacy> {
    if !in_subgroup(g, Subgroup::UJ)? {
        return Err(Error::Invalid("conjugacy test needs g in U_J".into()));
    }
    let f = g.field();
    let [g1, g2, g3, g4] = &g.e;
    let d14 = g1.sub(g4);
    let (v2, v3, v14) = (vu(g2), vu(g3), vu(&d14));
    let n = n as i64;
    if v2 >= n - 1 && v3 > n && v14 >= n {
        return Ok(Conjugacy::Central);
    }
    if !(v3 == v2 + 2 && v3 < n + 1 && v3 <= v14) {
        return Ok(Conjugacy::NonTorus);
    }
    let ratio = f.div(g3.coeff(v3 as i32), g2.coeff(v2 as i32))?;
    if !f.is_square(ratio) {
        return Ok(Conjugacy::NonTorus);
    }
    let a2 = v2 as i32;
    let lvl = 2 * n as usize + 4;
    let g2p = g2.window(a2, lvl)?;
    let g3p = g3.window(a2 + 2, lvl)?;
    let g1p = d14.scale(half(f)).window(a2 + 2, lvl)?;
    let one = Series::one(f, lvl);
    let g3i = g3p.inv()?;
    let c = &g3p * &g2p.inv()?;
    let d = &(&g1p * &g1p) * &(&g3i * &g3i);
    let w = &c * &(&one + &(&c * &d).shift_up(2)).inv()?;
    let y = sqrt_even(&w)?;
    let lam = &(&g1p * &y) * &g3i;
    let l = |s: &Series| Laurent::from_series(s, 0);
    let r = Mat2::new(Laurent::one(f), l(&lam), Laurent::zero(f), l(&y));
    let x = r.inv(rp)?.mul(g).mul(&r);
    if torus_part(&x, n as usize, rp)?.is_none() {
        return Err(Error::Invalid(format!("Hensel witness failed for {g}")));
    }
    Ok(Conjugacy::Torus { depth: v3 as usize, conjugator: r, conjugate: x })
}

fn t_laurent(f: &'static Field, c: &[Fq], t_shift: usize) -> Laurent {
    Laurent::from_series(&Series::from_t_coeffs(f, c, 2 * c.len().max(1)), 2 * t_shift as i32)
}

fn all_vecs(f: &'static Field, len: usize) -> Vec<Vec<Fq>> {
    (0..(f.q as usize).pow(len as u32)).map(|i| Series::from_index(f, len, i).c).collect()
}

fn unit_vecs(f: &'static Field, len: usize) -> Vec<Vec<Fq>> {
    all_vecs(f, len).into_iter().filter(|v| !v[0].is_zero()).collect()
}

fn rand_vec<R: Rng>(f: &'static Field, len: usize, unit: bool, rng: &mut R) -> Vec<Fq> {
    (0..len)
        .map(|i| if i == 0 && unit { Fq(rng.gen_range(1..f.q) as u16) } else { Fq(rng.gen_range(0..f.q) as u16) })
        .collect()
}

/// Representatives of U_J / U_J^k.
pub fn uj_quotient(f: &'static Field, k: usize) -> Vec<Mat2> {
    let (ka, kb) = ((k + 1) / 2, k / 2);
    let units = unit_vecs(f, ka);
    let bs = all_vecs(f, kb);
    let mut out = Vec::new();
    for a in &units {
        for d in &units {
            for b in &bs {
                for c in &bs {
                    out.push(Mat2::new(t_laurent(f, a, 0), t_laurent(f, b, 0), t_laurent(f, c, 1), t_laurent(f, d, 0)));
                }
            }
        }
    }
    out
}

pub fn random_uj<R: Rng>(f: &'static Field, k: usize, rng: &mut R) -> Mat2 {
    let (ka, kb) = ((k + 1) / 2, k / 2);
    let a = rand_vec(f, ka, true, rng);
    let d = rand_vec(f, ka, true, rng);
    let b = rand_vec(f, kb, false, rng);
    let c = rand_vec(f, kb, false, rng);
    Mat2::new(t_laurent(f, &a, 0), t_laurent(f, &b, 0), t_laurent(f, &c, 1), t_laurent(f, &d, 0))
}

/// Random element of U_J^k modulo U_J^{k + 2 depth}.
pub fn random_ujn<R: Rng>(f: &'static Field, k: usize, depth: usize, rng: &mut R) -> Mat2 {
    let (ka, kb) = ((k + 1) / 2, k / 2);
    let one = Laurent::one(f);
    let mut r = |shift: usize| t_laurent(f, &rand_vec(f, depth, false, rng), shift);
    let a = one.add(&r(ka));
    let b = r(kb);
    let c = r(kb + 1);
    let d = one.add(&r(ka));
    Mat2::new(a, b, c, d)
}

/// [[1, 0], [x, 1]] for x in p_F / p_F^{n+1}, listed with their t-coefficients x_1..x_n.
pub fn unipotent_family(f: &'static Field, n: usize) -> Vec<(Vec<Fq>, Mat2)> {
    all_vecs(f, n)
        .into_iter()
        .map(|c| {
            let m = Mat2::new(Laurent::one(f), Laurent::zero(f), t_laurent(f, &c, 1), Laurent::one(f));
            (c, m)
        })
        .collect()
}

/// iota(1 + u^{2 alpha + 1} h) for all alpha < n and h in U_F / U_F^{n - alpha}.
pub fn nonsplit_family(f: &'static Field, m: usize) -> Vec<(usize, Series, Mat2)> {
    let n = (m + 1) / 2;
    let mut out = Vec::new();
    for alpha in 0..n {
        let lvl = m - 2 * alpha;
        for h in unit_vecs(f, n - alpha) {
            let h = Series::from_t_coeffs(f, &h, lvl);
            let e = &Series::one(f, m + 1) + &h.resize(m + 1).shift_up(2 * alpha + 1);
            out.push((alpha, h, iota_series(&e)));
        }
    }
    out
}

/// iota(u e) for e in U_E / U_E^{m+1}.
pub fn varpi_units(ctx: &CharCtx) -> Vec<(Series, Mat2)> {
    let v = varpi(ctx.f());
    ctx.g.elems.iter().map(|e| (e.clone(), v.mul(&iota_series(e)))).collect()
}

/// Lower triangular [[a, 0], [c, d]] with a, d in U_F / U_F^n and c in p_F / p_F^{n+1}.
pub fn borel_family(f: &'static Field, n: usize) -> Vec<Mat2> {
    let units = unit_vecs(f, n);
    let cs = all_vecs(f, n);
    let mut out = Vec::new();
    for a in &units {
        for d in &units {
            for c in &cs {
                out.push(Mat2::new(t_laurent(f, a, 0), Laurent::zero(f), t_laurent(f, c, 1), t_laurent(f, d, 0)));
            }
        }
    }
    out
}

/// r_{y, lambda} = [[1, lambda], [0, y]] with y in U_F / U_F^{floor((n+1)/2)} and lambda in O_F / p_F^{floor(n/2)}.
pub fn coset_reps(f: &'static Field, n: usize) -> Vec<Mat2> {
    let ys = unit_vecs(f, (n + 1) / 2);
    let ls = all_vecs(f, n / 2);
    let mut out = Vec::new();
    for y in &ys {
        for l in &ls {
            let lam = if l.is_empty() { Laurent::zero(f) } else { t_laurent(f, l, 0) };
            out.push(Mat2::new(Laurent::one(f), lam, Laurent::zero(f), t_laurent(f, y, 0)));
        }
    }
    out
}

/// |U_J : U_E U_J^n| counted over representatives of U_J / U_J^n.
pub fn coset_index(f: &'static Field, n: usize, rp: usize) -> Result<usize> {
    let reps = uj_quotient(f, n);
    let inside = reps
        .par_iter()
        .map(|g| torus_part(g, n, rp).map(|e| e.is_some() as usize))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(reps.len() / inside)
}

/// Per-i1 data of the trace formula.
#[derive(Clone, Debug, Serialize)]
pub struct TraceFormula {
    pub value: u32,
    pub counts: Vec<(Series, usize)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TorusTraces {
    /// tr(iota(e)) indexed like `UnitGroup::elems`.
    pub units: Vec<u32>,
    /// tr(iota(u e)).
    pub varpi: Vec<u32>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub id: String,
    pub element: String,
    pub formula: String,
    pub formula_value: u32,
    pub oracle_value: u32,
    pub matched: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SCount {
    pub i1: Series,
    pub count: usize,
    pub predicted: usize,
}

/// Xi_chi realized on functions on Y with f(y c) = chi(c)^{-1} f(y) for c in A = I_{m,w}/I^m.
pub struct RepModel {
    pub p: LevelParams,
    pub ctx: CharCtx,
    pub chi: Character,
    pub bases: Vec<PointY>,
    base_mats: Vec<Mat2>,
    pub right: Vec<RightElem>,
    chi_right: Vec<u32>,
    torsor: Vec<u32>,
    pub dim: usize,
}

impl RepModel {
    pub fn build_xi_chi(p: LevelParams, ctx: CharCtx, chi: Character) -> Result<Self> {
        if ctx.m() != p.m || !std::ptr::eq(ctx.f(), p.f) {
            return Err(Error::Invalid("character context does not match the level parameters".into()));
        }
        if p.regime == Regime::General {
            return Err(Error::Invalid("need the deep (m = 2n - 1) or small (n > m) regime".into()));
        }
        let right: Vec<RightElem> = RightElem::all(&p).collect();
        let na = right.len();
        if ctx.vr.ell % (p.f.p as u64) == 0 || (na as u64) % ctx.vr.ell == 0 {
            return Err(Error::Invalid("|A| is not invertible in the value ring".into()));
        }
        let chi_right = right.iter().map(|i| ctx.eval_unit(&chi, &i.i1_unit)).collect();
        let bases: Vec<PointY> = enumerate_d_w_tau(&p)
            .into_iter()
            .map(|a| PointY::new(a, Series::one(p.f, p.m + 1), Series::zero(p.f, p.m), &p))
            .collect::<Result<_>>()?;
        let base_mats: Vec<Mat2> = bases.iter().map(|b| b.matrix(&p)).collect::<Result<_>>()?;
        let dim = bases.len();
        let hits = (0..dim * na)
            .into_par_iter()
            .map(|k| {
                let (b, ci) = (k / na, k % na);
                let y = PointY::factorize(&base_mats[b].mul(&right[ci].matrix()), &p)?;
                let idx = y.index(&p);
                if idx / na != b {
                    return Err(Error::Invalid(format!("right action moved base point {b} out of its fibre")));
                }
                Ok((idx, ci as u32))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut torsor = vec![u32::MAX; dim * na];
        for (idx, ci) in hits {
            if torsor[idx] != u32::MAX {
                return Err(Error::Invalid("right action is not free".into()));
            }
            torsor[idx] = ci;
        }
        if torsor.contains(&u32::MAX) {
            return Err(Error::Invalid("right action is not transitive on a-fibres".into()));
        }
        Ok(RepModel { p, ctx, chi, bases, base_mats, right, chi_right, torsor, dim })
    }

    pub fn vr(&self) -> &ValueRing {
        &self.ctx.vr
    }

    pub fn f(&self) -> &'static Field {
        self.p.f
    }

    pub fn order_a(&self) -> usize {
        self.right.len()
    }

    /// (a-fibre, c) with x I^m = y_b c.
    pub fn locate(&self, x: &Mat2) -> Result<(usize, usize)> {
        let y = PointY::factorize(x, &self.p)?;
        let idx = y.index(&self.p);
        Ok((idx / self.right.len(), self.torsor[idx] as usize))
    }

    /// Matrix of g in E^x U_J on the basis e_b(y_b c) = chi(c)^{-1}.
    pub fn action(&self, g: &Mat2) -> Result<Monomial> {
        let f = self.f();
        let vr = self.vr();
        let k = e_val(g)?;
        let j = k.div_euclid(2);
        let gg = if j != 0 { g.mul(&t_pow(f, -j)) } else { g.clone() };
        let gi = gg.inv(self.p.rp)?;
        let post = (k.rem_euclid(2) == 1).then(|| y_i(f, 1));
        let scal = self.ctx.eval(&self.chi, k as i64, &Series::one(f, self.p.m + 1));
        let rows = self
            .base_mats
            .par_iter()
            .map(|xb| {
                let mut x = gi.mul(xb);
                if let Some(y1) = &post {
                    x = x.mul(y1);
                }
                let (b, c) = self.locate(&x)?;
                Ok((b, vr.mul(scal, vr.inv(self.chi_right[c]))))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Monomial { rows })
    }

    pub fn trace_oracle(&self, g: &Mat2) -> Result<u32> {
        Ok(self.action(g)?.trace(self.vr()))
    }

    /// |A|^{-1} sum over all of Y of chi(i_y) where g y = y i_y, for g in U_J.
    pub fn trace_fixed_points(&self, g: &Mat2) -> Result<u32> {
        let vr = self.vr();
        let na = self.right.len();
        let total = self.dim * na;
        let terms = (0..total)
            .into_par_iter()
            .map(|idx| {
                let y = PointY::from_index(&self.p, idx);
                let gy = PointY::factorize(&g.mul(&y.matrix(&self.p)?), &self.p)?.index(&self.p);
                if gy / na != idx / na {
                    return Ok(0);
                }
                let (d, c) = (self.torsor[idx] as usize, self.torsor[gy] as usize);
                Ok(vr.mul(self.chi_right[c], vr.inv(self.chi_right[d])))
            })
            .collect::<Result<Vec<u32>>>()?;
        let s = terms.into_iter().fold(0, |a, b| vr.add(a, b));
        Ok(vr.mul(s, vr.inv(vr.from_int(na as i64))))
    }

    /// Dense P_chi on functions on Y, built from the right action by matrix products.
    pub fn projector_dense(&self, budget: usize) -> Result<Vec<Vec<u32>>> {
        let na = self.right.len();
        let ny = self.dim * na;
        if ny * na > budget {
            return Err(Error::Budget(ny * na));
        }
        let vr = self.vr();
        let inv_a = vr.inv(vr.from_int(na as i64));
        let cols = (0..ny)
            .into_par_iter()
            .map(|z| {
                let zm = PointY::from_index(&self.p, z).matrix(&self.p)?;
                let mut col = vec![0u32; ny];
                for (ai, a) in self.right.iter().enumerate() {
                    let y = PointY::factorize(&zm.mul(&a.matrix()), &self.p)?.index(&self.p);
                    col[y] = vr.add(col[y], vr.mul(inv_a, vr.inv(self.chi_right[ai])));
                }
                Ok(col)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((0..ny).map(|y| (0..ny).map(|z| cols[z][y]).collect()).collect())
    }

    /// The basis vector e_b as a function on Y.
    pub fn basis_vector(&self, b: usize) -> Vec<u32> {
        let na = self.right.len();
        (0..self.dim * na)
            .map(|idx| if idx / na == b { self.vr().inv(self.chi_right[self.torsor[idx] as usize]) } else { 0 })
            .collect()
    }

    /// Sum over i1 of #S_{g, i1} chi(i1).
    pub fn trace_formula_generic(&self, g: &Mat2) -> Result<TraceFormula> {
        let p = &self.p;
        if p.m > 2 * p.n + 1 {
            return Err(Error::Refused("trace formula needs m <= 2n + 1".into()));
        }
        if !in_subgroup(g, Subgroup::UJ)? {
            return Err(Error::Refused("trace formula needs g in U_J".into()));
        }
        let f = p.f;
        let l = p.m + 1;
        let ln = p.n + 1;
        let q = |x: &Laurent, k: usize| x.to_series(k);
        let (g1n, g2n, g3n, g4n) = (q(&g.e[0], ln)?, q(&g.e[1], ln)?, q(&g.e[2], ln)?, q(&g.e[3], ln)?);
        let (g1, g2) = (q(&g.e[0], l)?, q(&g.e[1], l)?);
        let det = g.det().to_series(l)?;
        let mut hits: Vec<(Series, usize)> = Vec::new();
        for a in enumerate_d_w_tau(p) {
            let quad = &(&(&(&g2n * &a) * &a) + &(&(&g1n - &g4n) * &a)) - &g3n;
            if !quad.is_zero() {
                continue;
            }
            let fa = &(&g2 * &a.resize(l)) + &g1;
            let h = h_factor(g, &a, p)?.resize(l);
            let r = r_of(&a, l);
            let corr = &Series::one(f, l) + &(&h * &r.inv()?).shift_up(p.n);
            let ti1 = &fa * &corr.inv()?;
            let i1 = ti1.tau();
            if &i1 * &ti1 != det {
                continue;
            }
            match hits.iter_mut().find(|(x, _)| *x == i1) {
                Some(e) => e.1 += 1,
                None => hits.push((i1, 1)),
            }
        }
        hits.sort_by_key(|(x, _)| x.index());
        let vr = self.vr();
        let value = hits.iter().fold(0, |acc, (i1, k)| {
            vr.add(acc, vr.mul(vr.from_int(*k as i64), self.ctx.eval_unit(&self.chi, i1)))
        });
        Ok(TraceFormula { value, counts: hits })
    }

    fn chi_tilde(&self, k: i32, e0: &Series) -> u32 {
        self.ctx.eval(&self.chi, k as i64, &e0.resize(self.p.m + 1))
    }

    fn chi_tilde_tau(&self, k: i32, e0: &Series) -> u32 {
        self.ctx.eval(&self.ctx.tau(&self.chi), k as i64, &e0.resize(self.p.m + 1))
    }

    fn q_pow(&self, e: usize) -> u32 {
        self.vr().from_int((self.f().q as i64).pow(e as u32))
    }

    /// Closed non-split trace for iota(z (1 + u^{2 alpha + 1} h)).
    fn nonsplit_value(&self, e: &Series) -> Result<u32> {
        let vr = self.vr();
        let m = self.p.m;
        let z = e.even_part();
        let xp = e * &z.inv()?;
        let v = (&xp - &Series::one(self.f(), m + 1)).valuation();
        let alpha = (v - 1) / 2;
        let (_, h) = self.ctx.decompose_z_xprime(e, alpha)?;
        let ep = &Series::one(self.f(), m + 1) + &h.resize(m + 1).shift_up(2 * alpha + 1);
        let qa = self.q_pow(alpha);
        let mut inner = vr.add(self.ctx.eval_unit(&self.chi, &ep), self.ctx.eval_unit(&self.chi, &ep.tau()));
        inner = vr.mul(qa, inner);
        let mut qsum = 0;
        for s in q_alpha_set(self.f(), m, alpha, QMode::ClosedForm)? {
            let y = &Series::one(self.f(), m + 1) + &(&h * &s).resize(m + 1).shift_up(2 * alpha + 1);
            qsum = vr.add(qsum, self.ctx.eval_unit(&self.chi, &y));
        }
        inner = vr.add(inner, vr.mul(vr.mul(vr.from_int(2), qa), qsum));
        Ok(vr.mul(self.ctx.eval_unit(&self.chi, &z), inner))
    }

    /// The applicable closed form, with its name.
    pub fn trace_closed_form(&self, g: &Mat2) -> Result<(u32, &'static str)> {
        let f = self.f();
        let vr = self.vr();
        let (m, n, rp) = (self.p.m, self.p.n, self.p.rp);
        let k = e_val(g)?;
        let j = k.div_euclid(2);
        let gg = if j != 0 { g.mul(&t_pow(f, -j)) } else { g.clone() };
        let tj = if j >= 0 { vr.pow(self.ctx.on_t(&self.chi), j as u64) } else { vr.pow(vr.inv(self.ctx.on_t(&self.chi)), (-j) as u64) };
        let scaled = |v: u32| vr.mul(tj, v);
        let dimv = vr.from_int(self.dim as i64);
        if self.p.regime == Regime::Small {
            if k.rem_euclid(2) == 1 {
                for r in coset_reps(f, n) {
                    let x = r.mul(g).mul(&r.inv(rp)?);
                    if let Some(d) = j_decompose(&x, n, rp)? {
                        let v = vr.add(self.chi_tilde(d.k, &d.e0), self.chi_tilde_tau(d.k, &d.e0));
                        return Ok((v, "small-varpi-conjugate"));
                    }
                }
                return Ok((0, "small-varpi-none"));
            }
            return Ok(match conjugacy_detect(&gg, n, rp)? {
                Conjugacy::Central => {
                    let e = torus_part(&gg, n, rp)?.ok_or_else(|| Error::Invalid("central element without torus part".into()))?;
                    (scaled(vr.mul(dimv, self.chi_tilde(0, &e))), "small-central")
                }
                Conjugacy::Torus { depth, conjugate, .. } => {
                    let e = torus_part(&conjugate, n, rp)?.expect("verified witness");
                    let v = vr.add(self.chi_tilde(0, &e), self.chi_tilde_tau(0, &e));
                    (scaled(vr.mul(self.q_pow(depth - 1), v)), "small-torus")
                }
                Conjugacy::NonTorus => (0, "small-non-torus"),
            });
        }
        if k.rem_euclid(2) == 1 {
            let h = varpi(f).inv(rp)?.mul(&gg);
            if let Some(e) = torus_part(&h, m + 1, rp)? {
                let v = vr.add(self.ctx.eval(&self.chi, k as i64, &e), self.ctx.eval(&self.ctx.tau(&self.chi), k as i64, &e));
                return Ok((v, "valuation-1"));
            }
            return Err(Error::Refused("odd valuation outside varpi U_E".into()));
        }
        if let Some(e) = torus_part(&gg, m + 1, rp)? {
            if self.ctx.g.in_uf_ue(&e, m + 1) {
                return Ok((scaled(vr.mul(dimv, self.ctx.eval_unit(&self.chi, &e))), "central"));
            }
            return Ok((scaled(self.nonsplit_value(&e)?), "non-split"));
        }
        if in_subgroup(&gg, Subgroup::N)? {
            let c = &gg.e[2];
            let two_n = 2 * n as i32;
            let v = if c.at_least(two_n + 2)? {
                dimv
            } else if c.at_least(two_n)? {
                vr.neg(self.q_pow(n - 1))
            } else {
                0
            };
            return Ok((scaled(v), "unipotent"));
        }
        if in_subgroup(&gg, Subgroup::UJ)? {
            match conjugacy_detect(&gg, n, rp)? {
                Conjugacy::NonTorus => return Ok((0, "non-torus")),
                Conjugacy::Torus { conjugate, .. } => {
                    if let Some(e) = torus_part(&conjugate, m + 1, rp)? {
                        if !self.ctx.g.in_uf_ue(&e, m + 1) {
                            return Ok((scaled(self.nonsplit_value(&e)?), "non-split-conjugate"));
                        }
                    }
                }
                Conjugacy::Central => {}
            }
        }
        Err(Error::Refused(format!("no closed form applies to {g}")))
    }

    /// S-counts for g = iota(1 + u^{2 alpha + 1} h) against their predicted values.
    pub fn nonsplit_s_counts(&self, alpha: usize, h: &Series) -> Result<Vec<SCount>> {
        let f = self.f();
        let m = self.p.m;
        let e = &Series::one(f, m + 1) + &h.resize(m + 1).shift_up(2 * alpha + 1);
        let tf = self.trace_formula_generic(&iota_series(&e))?;
        let rpar = RAlphaParams::new(m, alpha)?;
        let qa = (f.q as usize).pow(alpha as u32);
        let hi = h.inv()?;
        let one = Series::one(f, rpar.level());
        let predict = |i1: &Series| -> usize {
            let d = i1 - &Series::one(f, m + 1);
            if d.valuation() < 2 * alpha + 1 {
                return 0;
            }
            let s = &d.shift_down(2 * alpha + 1) * &hi;
            if s == one || s == -&one {
                qa
            } else if in_r_alpha_prime(&s, &rpar) && in_q_alpha(&s, m, alpha) {
                2 * qa
            } else {
                0
            }
        };
        let mut out: Vec<SCount> =
            tf.counts.iter().map(|(i1, c)| SCount { i1: i1.clone(), count: *c, predicted: predict(i1) }).collect();
        for i1 in &self.ctx.g.elems {
            if !tf.counts.iter().any(|(x, _)| x == i1) {
                let p = predict(i1);
                if p != 0 {
                    out.push(SCount { i1: i1.clone(), count: 0, predicted: p });
                }
            }
        }
        Ok(out)
    }

    pub fn torus_traces(&self) -> Result<TorusTraces> {
        let v = varpi(self.f());
        let els = &self.ctx.g.elems;
        let units = els.par_iter().map(|e| self.trace_oracle(&iota_series(e))).collect::<Result<Vec<_>>>()?;
        let varpi = els.par_iter().map(|e| self.trace_oracle(&v.mul(&iota_series(e)))).collect::<Result<Vec<_>>>()?;
        Ok(TorusTraces { units, varpi })
    }

    fn lift(&self, v: u32) -> Result<usize> {
        (0..=self.dim)
            .find(|&k| self.vr().from_int(k as i64) == v)
            .ok_or_else(|| Error::Invalid(format!("multiplicity {v} does not lift to [0, {}]", self.dim)))
    }

    /// <theta, Xi_chi> over U_E / U_E^{m+1}.
    pub fn mult_ue(&self, theta: &Character, tt: &TorusTraces) -> Result<usize> {
        let vr = self.vr();
        let s = theta.table.iter().zip(&tt.units).fold(0, |acc, (&th, &tr)| vr.add(acc, vr.mul(vr.inv(th), tr)));
        self.lift(vr.mul(s, vr.inv(vr.from_int(tt.units.len() as i64))))
    }

    /// <theta, Xi_chi> over E^x, through the twist by phi with phi(U_E) = 1 and phi(t) = chi(t)^{-1}.
    pub fn mult_etimes(&self, theta: &Character, tt: &TorusTraces) -> Result<usize> {
        let vr = self.vr();
        if self.ctx.on_t(theta) != self.ctx.on_t(&self.chi) {
            return Ok(0);
        }
        let h0 = tt.units.len() as i64;
        let norm = vr.inv(vr.from_int(2 * h0));
        let mut results = Vec::new();
        for phi_u in [vr.inv(self.chi.on_u), vr.neg(vr.inv(self.chi.on_u))] {
            let tp = vr.mul(theta.on_u, phi_u);
            let mut s = 0;
            for (i, &th) in theta.table.iter().enumerate() {
                s = vr.add(s, vr.mul(vr.inv(th), tt.units[i]));
                let tw = vr.mul(phi_u, tt.varpi[i]);
                s = vr.add(s, vr.mul(vr.inv(vr.mul(tp, th)), tw));
            }
            results.push(self.lift(vr.mul(s, norm))?);
        }
        if results[0] != results[1] {
            return Err(Error::Invalid("E^x multiplicity depends on the twist".into()));
        }
        Ok(results[0])
    }

    /// <psi_c, Xi_chi> over N_n = p_F / p_F^{n+1} with psi_c(x) = psi_0(sum c_j x_j).
    pub fn mult_nn(&self, c: &[Fq], traces: &[(Vec<Fq>, u32)]) -> Result<usize> {
        let f = self.f();
        let vr = self.vr();
        let zp = vr.zeta(f.p as u64)?;
        let mut s = 0;
        for (x, tr) in traces {
            let e = x.iter().zip(c).fold(0u32, |acc, (&a, &b)| (acc + f.trace_to_prime(f.mul(a, b))) % f.p);
            s = vr.add(s, vr.mul(vr.inv(vr.pow(zp, e as u64)), *tr));
        }
        self.lift(vr.mul(s, vr.inv(vr.from_int(traces.len() as i64))))
    }

    pub fn unipotent_traces(&self) -> Result<Vec<(Vec<Fq>, u32)>> {
        unipotent_family(self.f(), self.p.n).into_par_iter().map(|(c, g)| Ok((c, self.trace_oracle(&g)?))).collect()
    }

    /// <Xi_chi, Xi_chi> over the lower Borel subgroup of U_J modulo U_J^{m+1}.
    pub fn borel_self_product(&self) -> Result<usize> {
        let vr = self.vr();
        let fam = borel_family(self.f(), self.p.n);
        let terms = fam
            .par_iter()
            .map(|b| Ok(vr.mul(self.trace_oracle(b)?, self.trace_oracle(&b.inv(self.p.rp)?)?)))
            .collect::<Result<Vec<u32>>>()?;
        let s = terms.into_iter().fold(0, |a, b| vr.add(a, b));
        self.lift(vr.mul(s, vr.inv(vr.from_int(fam.len() as i64))))
    }

    fn on_uf_matches(&self, theta: &Character) -> bool {
        self.ctx.g.elems.iter().enumerate().all(|(k, x)| !self.ctx.g.in_uf_ue(x, self.p.m + 1) || theta.table[k] == self.chi.table[k])
    }

    pub fn predicted_ue(&self, theta: &Character) -> Result<usize> {
        if !self.on_uf_matches(theta) {
            return Ok(0);
        }
        let ct = self.ctx.tau(&self.chi);
        if theta.table == self.chi.table || theta.table == ct.table {
            return Ok(1);
        }
        let th = Character { on_u: self.chi.on_u, table: theta.table.clone() };
        Ok(if self.ctx.is_properly_quadratic(&self.chi, &th)? { 2 } else { 0 })
    }

    pub fn predicted_etimes(&self, theta: &Character) -> Result<usize> {
        if self.ctx.on_t(theta) != self.ctx.on_t(&self.chi) || !self.on_uf_matches(theta) {
            return Ok(0);
        }
        let ct = self.ctx.tau(&self.chi);
        if *theta == self.chi || *theta == ct {
            return Ok(1);
        }
        if theta.table == self.chi.table || theta.table == ct.table {
            return Ok(0);
        }
        Ok(self.ctx.is_properly_quadratic(&self.chi, theta)? as usize)
    }

    /// Recover {chi, chi^tau} from the traces of E^x alone.
    pub fn reconstruct_chi(&self, tt: &TorusTraces) -> Result<Vec<Character>> {
        let vr = self.vr();
        let ctx = &self.ctx;
        let f = self.f();
        let m = self.p.m;
        if self.p.regime != Regime::Deep || !ctx.classify(&self.chi).minimal {
            return Err(Error::Refused("reconstruction needs the deep regime and a minimal chi".into()));
        }
        let dinv = vr.inv(vr.from_int(self.dim as i64));
        let chi_t = vr.mul(self.trace_oracle(&t_pow(f, 1))?, dinv);
        let central: Vec<(usize, u32)> = ctx
            .g
            .elems
            .iter()
            .enumerate()
            .filter(|(_, x)| ctx.g.in_uf_ue(x, m + 1))
            .map(|(k, _)| (k, vr.mul(tt.units[k], dinv)))
            .collect();
        let roots: Vec<u32> = (1..vr.ell as u32).filter(|&w| vr.mul(w, w) == chi_t).collect();
        let mut found = Vec::new();
        for &w in &roots {
            for theta in ctx.all_with_on_u(w) {
                if central.iter().any(|&(k, v)| theta.table[k] != v) {
                    continue;
                }
                let partner = Character { on_u: vr.neg(w), table: theta.table.clone() };
                if self.mult_etimes(&theta, tt)? == 1 && self.mult_etimes(&partner, tt)? == 0 {
                    found.push(theta);
                }
            }
        }
        if found.len() != 2 {
            return Err(Error::Invalid(format!("reconstruction produced {} candidates", found.len())));
        }
        Ok(found)
    }

    /// Oracle and closed form side by side.
    pub fn trace_row(&self, id: String, g: &Mat2) -> Result<TraceRow> {
        let oracle = self.trace_oracle(g)?;
        let (fv, name) = self.trace_closed_form(g)?;
        Ok(TraceRow { id, element: g.to_string(), formula: name.into(), formula_value: fv, oracle_value: oracle, matched: fv == oracle })
    }

    /// Generic trace formula against the oracle.
    pub fn generic_row(&self, id: String, g: &Mat2) -> Result<TraceRow> {
        let oracle = self.trace_oracle(g)?;
        let fv = self.trace_formula_generic(g)?.value;
        Ok(TraceRow {
            id,
            element: g.to_string(),
            formula: "trace-formula".into(),
            formula_value: fv,
            oracle_value: oracle,
            matched: fv == oracle,
        })
    }
}

/// The cuspidal type (J_beta, Lambda) and its induction Theta_chi to E^x U_J.
#[derive(Clone, Debug)]
pub struct CuspidalType {
    pub n: usize,
    pub m: usize,
    pub psi_scale: u32,
    /// None in the small regime, where Lambda is chi pulled back along E^x/U_E^n -> E^x/U_E^{m+1}.
    pub beta: Option<Laurent>,
    pub reps: Vec<Mat2>,
    pub chi: Character,
    zeta_p: u32,
    rp: usize,
}

impl CuspidalType {
    /// Lexicographically first beta for psi_0 = zeta_p^{scale Tr}; `perturb` adds u^{1-n}.
    pub fn deep(ctx: &CharCtx, chi: &Character, psi_scale: u32, perturb: bool, rp: usize) -> Result<Self> {
        let f = ctx.f();
        let (m, n) = (ctx.m(), ctx.n());
        let p = f.p;
        if psi_scale % p == 0 {
            return Err(Error::Invalid("psi_0 must be nontrivial".into()));
        }
        let vr = &ctx.vr;
        let zeta_p = vr.zeta(p as u64)?;
        let dlog = |v: u32| (0..p).find(|&e| vr.pow(zeta_p, e as u64) == v);
        let basis: Vec<Fq> = (0..f.r)
            .map(|b| {
                let mut c = vec![0u32; f.r as usize];
                c[b as usize] = 1;
                f.from_coeffs(&c)
            })
            .collect();
        let two = f.from_int(2);
        let mut coeffs = vec![Fq::ZERO; m - n + 1];
        for j in n..=m {
            let mut targets = Vec::new();
            for &xi in &basis {
                let x = &Series::one(f, m + 1) + &Series::monomial(f, xi, j, m + 1);
                let v = ctx.eval_unit(chi, &x);
                targets.push(dlog(v).ok_or_else(|| Error::Invalid("chi on U_E^n is not p-torsion".into()))?);
            }
            let c = f
                .elements()
                .find(|&c| {
                    basis.iter().zip(&targets).all(|(&xi, &e)| (psi_scale * f.trace_to_prime(f.mul(two, f.mul(c, xi)))) % p == e)
                })
                .ok_or_else(|| Error::Invalid(format!("no beta coefficient in degree -{j}")))?;
            coeffs[m - j] = c;
        }
        let mut beta = Laurent::from_series(&Series::from_coeffs(f, &coeffs, m - n + 1), -(m as i32));
        if perturb {
            beta = beta.add(&Laurent::monomial(f, Fq::ONE, 1 - n as i32));
        }
        let ct = CuspidalType { n, m, psi_scale, beta: Some(beta), reps: coset_reps(f, n), chi: chi.clone(), zeta_p, rp };
        ct.verify_matching(ctx)?;
        Ok(ct)
    }

    pub fn small(ctx: &CharCtx, chi: &Character, n: usize, rp: usize) -> Result<Self> {
        let f = ctx.f();
        Ok(CuspidalType {
            n,
            m: ctx.m(),
            psi_scale: 1,
            beta: None,
            reps: coset_reps(f, n),
            chi: chi.clone(),
            zeta_p: ctx.vr.zeta(f.p as u64)?,
            rp,
        })
    }

    fn psi0(&self, ctx: &CharCtx, c: Fq) -> u32 {
        let f = ctx.f();
        let e = (self.psi_scale * f.trace_to_prime(c)) % f.p;
        ctx.vr.pow(self.zeta_p, e as u64)
    }

    /// chi(1 + x) = psi_E(beta x) for every x in p_E^n / p_E^{m+1}.
    pub fn verify_matching(&self, ctx: &CharCtx) -> Result<()> {
        let Some(beta) = &self.beta else {
            return Ok(());
        };
        let f = ctx.f();
        let (m, n) = (self.m, self.n);
        for x in Series::all(f, m + 1 - n) {
            let xs = x.resize(m + 1).shift_up(n);
            let lhs = ctx.eval_unit(&self.chi, &(&Series::one(f, m + 1) + &xs));
            let bx = beta.mul(&Laurent::from_series(&xs, 0));
            let rhs = self.psi0(ctx, f.mul(f.from_int(2), bx.coeff(0)));
            if lhs != rhs {
                return Err(Error::Invalid(format!("matching fails at x = {xs}")));
            }
        }
        Ok(())
    }

    /// Lambda(x) for x in J_beta = E^x U_J^n, None outside J_beta.
    pub fn lambda_value(&self, ctx: &CharCtx, x: &Mat2) -> Result<Option<u32>> {
        let Some(d) = j_decompose(x, self.n, self.rp)? else {
            return Ok(None);
        };
        let vr = &ctx.vr;
        let mut v = ctx.eval(&self.chi, d.k as i64, &d.e0.resize(self.m + 1));
        if let Some(beta) = &self.beta {
            let f = ctx.f();
            let jm = d.j;
            let one = Laurent::one(f);
            let jm1 = Mat2::new(jm.e[0].sub(&one), jm.e[1].clone(), jm.e[2].clone(), jm.e[3].sub(&one));
            let prod = crate::gl2::iota(beta).mul(&jm1);
            let tr0 = prod.e[0].add(&prod.e[3]).coeff(0);
            v = vr.mul(v, self.psi0(ctx, tr0));
        }
        Ok(Some(v))
    }

    /// Mackey sum over r_{y, lambda} with r g r^{-1} in J_beta.
    pub fn theta_trace(&self, ctx: &CharCtx, g: &Mat2) -> Result<u32> {
        let vr = &ctx.vr;
        let mut s = 0;
        for r in &self.reps {
            let x = r.mul(g).mul(&r.inv(self.rp)?);
            if let Some(v) = self.lambda_value(ctx, &x)? {
                s = vr.add(s, v);
            }
        }
        Ok(s)
    }

    /// Representatives lie in pairwise distinct cosets of J_beta.
    pub fn reps_distinct(&self) -> Result<bool> {
        for (i, a) in self.reps.iter().enumerate() {
            let ai = a.inv(self.rp)?;
            for b in &self.reps[i + 1..] {
                if j_decompose(&ai.mul(b), self.n, self.rp)?.is_some() {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// Small regime comparison: oracle on Xi_{chi,n} against the induced character of chi~.
pub fn small_level_rows<R: Rng>(model: &RepModel, varpi_samples: usize, rng: &mut R) -> Result<Vec<TraceRow>> {
    let f = model.f();
    let n = model.p.n;
    let ct = CuspidalType::small(&model.ctx, &model.chi, n, model.p.rp)?;
    let mut elems: Vec<(String, Mat2)> = uj_quotient(f, n + 1).into_iter().enumerate().map(|(i, g)| (format!("uj-{i}"), g)).collect();
    let v = varpi(f);
    for i in 0..varpi_samples {
        elems.push((format!("varpi-uj-{i}"), v.mul(&random_uj(f, n + 1, rng))));
    }
    let rows = elems
        .into_par_iter()
        .map(|(id, g)| {
            let oracle = model.trace_oracle(&g)?;
            let induced = ct.theta_trace(&model.ctx, &g)?;
            let (cf, name) = model.trace_closed_form(&g)?;
            let element = g.to_string();
            Ok([
                TraceRow {
                    id: id.clone(),
                    element: element.clone(),
                    formula: "induced".into(),
                    formula_value: induced,
                    oracle_value: oracle,
                    matched: induced == oracle,
                },
                TraceRow { id, element, formula: name.into(), formula_value: cf, oracle_value: oracle, matched: cf == oracle },
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Theta_chi against Xi_chi on iota(1 + u^{2 alpha + 1} U_F) and varpi U_E.
pub fn cuspidal_rows(model: &RepModel, ct: &CuspidalType) -> Result<Vec<TraceRow>> {
    let f = model.f();
    let mut elems: Vec<(String, Mat2)> = nonsplit_family(f, model.p.m)
        .into_iter()
        .enumerate()
        .map(|(i, (a, _, g))| (format!("nonsplit-a{a}-{i}"), g))
        .collect();
    elems.extend(varpi_units(&model.ctx).into_iter().enumerate().map(|(i, (_, g))| (format!("varpi-ue-{i}"), g)));
    elems
        .into_par_iter()
        .map(|(id, g)| {
            let oracle = model.trace_oracle(&g)?;
            let th = ct.theta_trace(&model.ctx, &g)?;
            Ok(TraceRow {
                id,
                element: g.to_string(),
                formula: format!("theta(psi-scale {})", ct.psi_scale),
                formula_value: th,
                oracle_value: oracle,
                matched: th == oracle,
            })
        })
        .collect()
}

/// Minimal characters of the context with chi(u) = 1.
pub fn minimal_characters(ctx: &CharCtx) -> Vec<Character> {
    ctx.all_with_on_u(1).into_iter().filter(|c| ctx.classify(c).minimal && ctx.level(c) == ctx.m()).collect()
}
