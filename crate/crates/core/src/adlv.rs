//! The zero-dimensional pieces D_w^tau and Y of the level-m variety, their
//! coordinates, and the left, right and varpi actions on them.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{Field, Fq};
use crate::gl2::{self, e_minus, e_plus, e_zero, iwahori_factorize, DoubleCosetClass, Laurent, Mat2};
use crate::series::Series;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// m = 2n - 1
    Deep,
    /// n >= m + 1
    Small,
    /// m <= 2n - 1 otherwise
    General,
}

/// Sign convention for the tau(A) term of D.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum DSign {
    /// (-1)^n, consistent with the tau condition for both parities.
    #[default]
    Parity,
    /// Always minus.
    Minus,
}

#[derive(Copy, Clone, Debug)]
pub struct LevelParams {
    pub f: &'static Field,
    pub m: usize,
    pub n: usize,
    pub regime: Regime,
    /// Relative precision for inversions of Laurent series.
    pub rp: usize,
    pub sign: DSign,
}

impl LevelParams {
    pub fn new(f: &'static Field, m: usize, n: usize) -> Result<Self> {
        if m % 2 == 0 {
            return Err(Error::Invalid(format!("m must be odd, got {m}")));
        }
        if n == 0 {
            return Err(Error::Invalid("n must be positive".into()));
        }
        if m > 2 * n - 1 {
            return Err(Error::Invalid(format!("need m <= 2n - 1 (m={m}, n={n})")));
        }
        let regime = if m == 2 * n - 1 {
            Regime::Deep
        } else if n > m {
            Regime::Small
        } else {
            Regime::General
        };
        Ok(LevelParams { f, m, n, regime, rp: 4 * (n + m) + 12, sign: DSign::Parity })
    }

    /// The deep regime attached to m.
    pub fn deep(f: &'static Field, m: usize) -> Result<Self> {
        Self::new(f, m, (m + 1) / 2)
    }

    pub fn with_sign(mut self, s: DSign) -> Self {
        self.sign = s;
        self
    }

    pub fn wdot(&self) -> Mat2 {
        gl2::wdot(self.f, self.n)
    }

    pub fn vdot(&self) -> Mat2 {
        gl2::vdot(self.f, self.n)
    }

    pub fn count_y(&self) -> usize {
        let q = self.f.q as usize;
        (q - 1) * (q - 1) * q.pow((self.n - 1 + 2 * self.m) as u32)
    }

    pub fn count_d(&self) -> usize {
        let q = self.f.q as usize;
        (q - 1) * q.pow(self.n as u32 - 1)
    }
}

/// The five coordinates of a point e_-(a) v e_0(C, D) e_+(A) e_-(B) I^m of the cell.
/// Levels: a mod u^{n+1} (constant term zero), C, D, B mod u^{m+1}, A mod u^m.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Coords {
    pub a: Series,
    pub c: Series,
    pub d: Series,
    #[serde(rename = "A")]
    pub aa: Series,
    pub b: Series,
}

impl Coords {
    pub fn field(&self) -> &'static Field {
        self.a.f
    }

    pub fn matrix(&self, p: &LevelParams) -> Result<Mat2> {
        let l = |s: &Series| Laurent::from_series(s, 0);
        let v = gl2::vdot(self.field(), p.n);
        Ok(e_minus(&l(&self.a)).mul(&v).mul(&e_zero(&l(&self.c), &l(&self.d))?).mul(&e_plus(&l(&self.aa))).mul(&e_minus(&l(&self.b))))
    }

    /// Read off the coordinates of xI^m.
    pub fn from_matrix(x: &Mat2, p: &LevelParams) -> Result<Self> {
        let v = gl2::vdot(x.field(), p.n);
        let fz = iwahori_factorize(x, &v, Some(p.n as i32), p.rp)?;
        Ok(Coords {
            a: fz.e.to_series(p.n + 1)?,
            c: fz.c.to_series(p.m + 1)?,
            d: fz.d.to_series(p.m + 1)?,
            aa: fz.a.to_series(p.m)?,
            b: fz.b.to_series(p.m + 1)?,
        })
    }

    pub fn is_rational(&self) -> bool {
        [&self.a, &self.c, &self.d, &self.aa, &self.b].iter().all(|s| s.is_rational())
    }

    pub fn map_field(&self, g: &'static Field, h: impl Fn(Fq) -> Fq + Copy) -> Self {
        let m = |s: &Series| Series { f: g, c: s.c.iter().map(|&x| h(x)).collect() };
        Coords { a: m(&self.a), c: m(&self.c), d: m(&self.d), aa: m(&self.aa), b: m(&self.b) }
    }
}

/// A point of Y, determined by (a, C, A).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct PointY {
    pub a: Series,
    pub c: Series,
    #[serde(rename = "A")]
    pub aa: Series,
}

/// R = u^{-1}(tau(a) - a) at level `level`.
pub fn r_of(a: &Series, level: usize) -> Series {
    let f = a.f;
    let mut r = Series::zero(f, level);
    for i in (1..a.level()).step_by(2) {
        if i - 1 < level {
            r.c[i - 1] = f.neg(f.add(a.c[i], a.c[i]));
        }
    }
    r
}

/// B = u^n C tau(C)^{-1}.
pub fn b_of(c: &Series, n: usize) -> Result<Series> {
    Ok((c * &c.tau().inv()?).shift_up(n))
}

/// D = R^{-1} tau(C) (1 + u^n C tau(C)^{-1} A +- u^n C^{-1} tau(C) tau(A)).
pub fn d_of(a: &Series, c: &Series, aa: &Series, n: usize, sign: DSign) -> Result<Series> {
    let l = c.level();
    let r = r_of(a, l);
    let tc = c.tau();
    let am = aa.resize(l);
    let t1 = &(c * &tc.inv()?) * &am;
    let mut t2 = &(&c.inv()? * &tc) * &am.tau();
    if sign == DSign::Minus || n % 2 == 1 {
        t2 = -&t2;
    }
    let bracket = &Series::one(c.f, l) + &(&t1 + &t2).shift_up(n);
    Ok(&(&r.inv()? * &tc) * &bracket)
}

impl PointY {
    pub fn new(a: Series, c: Series, aa: Series, p: &LevelParams) -> Result<Self> {
        if a.level() != p.n + 1 || c.level() != p.m + 1 || aa.level() != p.m {
            return Err(Error::Invalid("coordinate levels do not match (n+1, m+1, m)".into()));
        }
        if !a.c[0].is_zero() || a.c[1].is_zero() {
            return Err(Error::NotInY("a must have a_0 = 0 and a_1 != 0".into()));
        }
        if !c.is_unit() {
            return Err(Error::NotUnit);
        }
        Ok(PointY { a, c, aa })
    }

    pub fn r(&self) -> Series {
        r_of(&self.a, self.c.level())
    }

    pub fn coords(&self, p: &LevelParams) -> Result<Coords> {
        Ok(Coords {
            a: self.a.clone(),
            c: self.c.clone(),
            d: d_of(&self.a, &self.c, &self.aa, p.n, p.sign)?,
            aa: self.aa.clone(),
            b: b_of(&self.c, p.n)?,
        })
    }

    pub fn matrix(&self, p: &LevelParams) -> Result<Mat2> {
        self.coords(p)?.matrix(p)
    }

    /// Recover a point of Y from cell coordinates, checking the defining relations.
    pub fn from_coords(x: &Coords, p: &LevelParams) -> Result<Self> {
        if !x.is_rational() {
            return Err(Error::NotInY("coordinates are not rational".into()));
        }
        let y = PointY::new(x.a.clone(), x.c.clone(), x.aa.clone(), p)?;
        if b_of(&y.c, p.n)? != x.b {
            return Err(Error::NotInY(format!("B = {} but u^n C/tau(C) = {}", x.b, b_of(&y.c, p.n)?)));
        }
        let d = d_of(&y.a, &y.c, &y.aa, p.n, p.sign)?;
        if d != x.d {
            return Err(Error::NotInY(format!("D = {} but the relation gives {}", x.d, d)));
        }
        Ok(y)
    }

    pub fn factorize(x: &Mat2, p: &LevelParams) -> Result<Self> {
        Self::from_coords(&Coords::from_matrix(x, p)?, p)
    }

    /// Position in the lexicographic (a, C, A) enumeration.
    pub fn index(&self, p: &LevelParams) -> usize {
        let q = p.f.q as usize;
        let nc = (q - 1) * q.pow(p.m as u32);
        let na = q.pow(p.m as u32);
        let ai = self.a.shift_down(1).unit_index();
        (ai * nc + self.c.unit_index()) * na + self.aa.index()
    }

    pub fn from_index(p: &LevelParams, idx: usize) -> Self {
        let q = p.f.q as usize;
        let nc = (q - 1) * q.pow(p.m as u32);
        let na = q.pow(p.m as u32);
        let aa = Series::from_index(p.f, p.m, idx % na);
        let c = Series::from_unit_index(p.f, p.m + 1, (idx / na) % nc);
        let a1 = Series::from_unit_index(p.f, p.n, idx / (na * nc));
        let mut a = Series::zero(p.f, p.n + 1);
        a.c[1..].copy_from_slice(&a1.c);
        PointY { a, c, aa }
    }
}

/// All a in L_{[1,n]}(k) with a_1 != 0, i.e. the points e_-(a) v I of D_w^tau.
pub fn enumerate_d_w_tau(p: &LevelParams) -> Vec<Series> {
    Series::units(p.f, p.n).map(|a1| a1.resize(p.n + 1).shift_up(1)).collect()
}

pub fn d_point_matrix(a: &Series, p: &LevelParams) -> Mat2 {
    e_minus(&Laurent::from_series(a, 0)).mul(&p.vdot())
}

pub fn enumerate_y(p: &LevelParams) -> Vec<PointY> {
    (0..p.count_y()).into_par_iter().map(|i| PointY::from_index(p, i)).collect()
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub enum IwahoriPos {
    One,
    W,
    Other,
}

/// Relative position of xI and yI in {1, w, other}.
pub fn inv_iwahori(x: &Mat2, y: &Mat2, p: &LevelParams) -> Result<IwahoriPos> {
    let z = x.inv(p.rp)?.mul(y);
    if gl2::in_subgroup(&z, gl2::Subgroup::I)? {
        return Ok(IwahoriPos::One);
    }
    match iwahori_factorize(&z, &p.wdot(), None, p.rp) {
        Ok(_) => Ok(IwahoriPos::W),
        Err(Error::NotInCell(_)) => Ok(IwahoriPos::Other),
        Err(e) => Err(e),
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMode {
    TauCondition,
    SigmaCondition,
    SigmaExtension,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub mode: VerifyMode,
    pub passed: bool,
    pub checks: usize,
    pub failures: Vec<String>,
}

pub fn tau_condition(x: &Coords, p: &LevelParams) -> Result<bool> {
    let mx = x.matrix(p)?;
    let cl = gl2::inv_m(&mx, &mx.tau(), p.m, p.n, p.rp)?;
    Ok(cl == DoubleCosetClass::w_identity(x.field(), p.m))
}

pub fn sigma_condition(x: &Coords, p: &LevelParams) -> Result<bool> {
    let mx = x.matrix(p)?;
    let cl = gl2::inv_m(&mx, &mx.sigma(), p.m, p.n, p.rp)?;
    Ok(cl == DoubleCosetClass::Unit)
}

/// Every single-coefficient substitution by an element of F_{q^s}; the sigma
/// condition must hold exactly when the substituted value is rational.
fn sigma_extension(x: &Coords, p: &LevelParams, s: u32) -> Result<(usize, Vec<String>)> {
    let f = x.field();
    let g = f.extension(s)?;
    let base = x.map_field(g, |t| g.embed(t));
    let gp = LevelParams { f: g, ..*p };
    let slots: Vec<(&str, usize, usize)> = [("a", 1, p.n + 1), ("C", 0, p.m + 1), ("D", 0, p.m + 1), ("A", 0, p.m), ("B", 1, p.m + 1)]
        .into_iter()
        .flat_map(|(nm, lo, hi)| (lo..hi).map(move |i| (nm, i, hi)))
        .collect();
    let mut checks = 0;
    let mut fails = Vec::new();
    for (nm, i, _) in slots {
        for z in g.elements() {
            if (i == 0 || (nm == "a" && i == 1))
                && z.is_zero() {
                    continue;
                }
            let mut y = base.clone();
            let slot = match nm {
                "a" => &mut y.a,
                "C" => &mut y.c,
                "D" => &mut y.d,
                "A" => &mut y.aa,
                _ => &mut y.b,
            };
            slot.c[i] = z;
            let rational = g.restrict(z).is_some();
            checks += 1;
            if sigma_condition(&y, &gp)? != rational {
                fails.push(format!("{nm}_{i} = {}: rational = {rational}", g.fmt_elem(z)));
            }
        }
    }
    Ok((checks, fails))
}

pub fn verify_coords(x: &Coords, p: &LevelParams, mode: VerifyMode) -> Result<VerifyReport> {
    let (checks, failures) = match mode {
        VerifyMode::TauCondition => {
            (1, if tau_condition(x, p)? { vec![] } else { vec!["inv(x, tau x) is not the class of w".into()] })
        }
        VerifyMode::SigmaCondition => {
            (1, if sigma_condition(x, p)? { vec![] } else { vec!["inv(x, sigma x) is not 1".into()] })
        }
        VerifyMode::SigmaExtension => sigma_extension(x, p, 2)?,
    };
    Ok(VerifyReport { mode, passed: failures.is_empty(), checks, failures })
}

pub fn verify_point(pt: &PointY, p: &LevelParams, mode: VerifyMode) -> Result<VerifyReport> {
    verify_coords(&pt.coords(p)?, p, mode)
}

/// The auxiliary quantities of the three action formulas.
#[derive(Clone, Debug, Serialize)]
pub struct ActionFactors {
    pub f: Series,
    pub g_dot_a: Series,
    pub h: Series,
    pub n: Series,
    pub hh: Option<Series>,
    pub m_factor: Series,
}

fn entries(g: &Mat2, l: usize) -> Result<[Series; 4]> {
    Ok([g.e[0].to_series(l)?, g.e[1].to_series(l)?, g.e[2].to_series(l)?, g.e[3].to_series(l)?])
}

/// g.a = (g4 a + g3)/(g2 a + g1) mod u^{n+m+1} and f = g2 a + g1.
fn moebius(g: &Mat2, a: &Series, p: &LevelParams) -> Result<(Series, Series)> {
    let l = p.n + p.m + 1;
    let [g1, g2, g3, g4] = entries(g, l)?;
    let a = a.resize(l);
    let f = &(&g2 * &a) + &g1;
    let ga = &(&(&g4 * &a) + &g3) * &f.inv()?;
    Ok((ga, f))
}

/// h(g, a) = u^{-(n+1)}(g.a - g.a|_n) mod u^m.
pub fn h_factor(g: &Mat2, a: &Series, p: &LevelParams) -> Result<Series> {
    let (ga, _) = moebius(g, a, p)?;
    Ok((&ga - &ga.slice(p.n)).shift_down(p.n + 1))
}

pub fn action_factors(g: &Mat2, x: &Coords, i: Option<&RightElem>, p: &LevelParams) -> Result<ActionFactors> {
    let l = p.m + 1;
    let (ga, f) = moebius(g, &x.a, p)?;
    let h = (&ga - &ga.slice(p.n)).shift_down(p.n + 1);
    let fm = f.resize(l);
    let g2 = g.e[1].to_series(l)?;
    let ratio = &(&(&g2 * &fm.inv()?) * &x.c) * &x.d.inv()?;
    let nn = &Series::one(p.f, l) + &(&ratio * &x.aa.resize(l)).shift_up(p.n + 1);
    let hh = i.map(|i| i.h(&x.b)).transpose()?;
    let m_factor = &Series::one(p.f, l) - &(&(&x.c * &x.c.tau().inv()?) * &x.aa.resize(l)).scale(p.f.from_int(2)).shift_up(p.n);
    Ok(ActionFactors { f: fm, g_dot_a: ga, h, n: nn, hh, m_factor })
}

/// The left action of g in I by the closed formulas.
pub fn left_action(g: &Mat2, x: &Coords, p: &LevelParams) -> Result<Coords> {
    let l = p.m + 1;
    let af = action_factors(g, x, None, p)?;
    let [g1, g2, g3, g4] = entries(g, l)?;
    let det = &(&g1 * &g4) - &(&g2 * &g3);
    let f = &af.f;
    let ni = af.n.inv()?;
    let c = &(&(&det * &x.c) * &ni) * &f.inv()?;
    let d = &(f * &x.d) * &af.n;
    let corr = &(&(&(&af.h.resize(l) * f) * f) * &(&x.d * &(&af.n * &af.n))) * &(&det * &x.c).inv()?;
    let aa = (&(&x.aa.resize(l) * &af.n) + &corr).resize(p.m);
    let b = &x.b + &(&(&(&(&g2 * &f.inv()?) * &x.c) * &x.d.inv()?) * &ni).shift_up(p.n + 1);
    Ok(Coords { a: af.g_dot_a.slice(p.n).resize(p.n + 1), c, d, aa, b })
}

/// The left action computed as g x followed by re-factorization.
pub fn left_action_matrix(g: &Mat2, x: &Coords, p: &LevelParams) -> Result<Coords> {
    Coords::from_matrix(&g.mul(&x.matrix(p)?), p)
}

/// diag(i1, tau(i1)) [[1, i2], [0, 1]] with i1 a unit mod u^{m+1} times u^{i1_val}.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct RightElem {
    pub i1_val: i32,
    pub i1_unit: Series,
    pub i2: Series,
}

impl RightElem {
    pub fn new(i1: Series, i2: Series) -> Result<Self> {
        if !i1.is_unit() {
            return Err(Error::NotUnit);
        }
        Ok(RightElem { i1_val: 0, i1_unit: i1, i2 })
    }

    pub fn identity(p: &LevelParams) -> Self {
        RightElem { i1_val: 0, i1_unit: Series::one(p.f, p.m + 1), i2: Series::zero(p.f, p.m) }
    }

    /// Product in the group: (ij)_1 = i1 j1, (ij)_2 = j1^{-1} tau(j1) i2 + j2.
    pub fn compose(&self, o: &Self) -> Result<Self> {
        let m = self.i2.level();
        let j1 = &o.i1_unit;
        let tw = (&j1.inv()? * &j1.tau()).resize(m);
        Ok(RightElem {
            i1_val: self.i1_val + o.i1_val,
            i1_unit: &self.i1_unit * j1,
            i2: &(&tw * &self.i2) + &o.i2,
        })
    }

    pub fn matrix(&self) -> Mat2 {
        let l = |s: &Series| Laurent::from_series(s, 0);
        let i1 = l(&self.i1_unit).shift(self.i1_val);
        let f = i1.f;
        Mat2::new(i1.clone(), i1.mul(&l(&self.i2)), Laurent::zero(f), i1.tau())
    }

    /// H = 1 + i1 tau(i1)^{-1} i2 B.
    pub fn h(&self, b: &Series) -> Result<Series> {
        let l = b.level();
        let i1 = &self.i1_unit;
        Ok(&Series::one(b.f, l) + &(&(&(i1 * &i1.tau().inv()?) * &self.i2.resize(l)) * b))
    }

    pub fn all(p: &LevelParams) -> impl Iterator<Item = RightElem> {
        let f = p.f;
        let m = p.m;
        Series::units(f, m + 1).flat_map(move |i1| {
            Series::all(f, m).map(move |i2| RightElem { i1_val: 0, i1_unit: i1.clone(), i2 })
        })
    }
}

pub fn right_action(x: &Coords, i: &RightElem, p: &LevelParams) -> Result<Coords> {
    if i.i1_val != 0 {
        return Err(Error::Invalid("right action formula needs v(i1) = 0".into()));
    }
    let i1 = &i.i1_unit;
    let ti1 = i1.tau();
    let hh = i.h(&x.b)?;
    let hi = hh.inv()?;
    let rho = &ti1 * &i1.inv()?;
    let l = p.m + 1;
    let aa = &(&(&(&rho * &hh) * &hh) * &x.aa.resize(l)) + &(&i.i2.resize(l) * &hh);
    Ok(Coords {
        a: x.a.clone(),
        c: &(&x.c * i1) * &hi,
        d: &(&x.d * &ti1) * &hh,
        aa: aa.resize(p.m),
        b: &(&(&x.b * i1) * &ti1.inv()?) * &hi,
    })
}

pub fn right_action_matrix(x: &Coords, i: &RightElem, p: &LevelParams) -> Result<Coords> {
    Coords::from_matrix(&x.matrix(p)?.mul(&i.matrix()), p)
}

/// x I^m -> g x y_1^{-1} I^m for g of odd determinant valuation.
pub fn beta_g(g: &Mat2, x: &Coords, p: &LevelParams) -> Result<Coords> {
    let y1i = gl2::y_i(p.f, 1).inv(p.rp)?;
    Coords::from_matrix(&g.mul(&x.matrix(p)?).mul(&y1i), p)
}

/// The closed form of beta_varpi over a = +-u.
pub fn beta_varpi_closed(x: &Coords, p: &LevelParams) -> Result<Coords> {
    let f = p.f;
    let a1 = x.a.c[1];
    let plus = a1 == Fq::ONE;
    if x.a.c.iter().enumerate().any(|(i, c)| i != 1 && !c.is_zero()) || !(plus || a1 == f.neg(Fq::ONE)) {
        return Err(Error::Invalid("closed form needs a = +-u".into()));
    }
    let l = p.m + 1;
    let mf = &Series::one(f, l) - &(&(&x.c * &x.c.tau().inv()?) * &x.aa.resize(l)).scale(f.from_int(2)).shift_up(p.n);
    let s = if plus { f.neg(Fq::ONE) } else { Fq::ONE };
    Ok(Coords {
        a: x.a.clone(),
        c: (&x.c * &mf.inv()?).scale(s),
        d: (&x.d * &mf).scale(s),
        aa: (-&(&x.aa.resize(l) * &mf)).resize(p.m),
        b: x.b.clone(),
    })
}

/// beta_varpi, by the closed form when a = +-u and at matrix level otherwise.
pub fn beta_varpi(x: &Coords, p: &LevelParams) -> Result<Coords> {
    match beta_varpi_closed(x, p) {
        Ok(c) => Ok(c),
        Err(Error::Invalid(_)) => beta_g(&gl2::varpi(p.f), x, p),
        Err(e) => Err(e),
    }
}

/// Closed forms of h(iota(1 + y u^{2 alpha + 1}), a) mod u^n (cases ii and iii);
/// `None` if a' is not of the shape required by case iii.
pub fn h_closed_form(y: &Series, alpha: usize, a: &Series, p: &LevelParams) -> Result<Option<Series>> {
    let n = p.n;
    let f = p.f;
    let l = n;
    let ap = a.shift_down(1).resize(l);
    let y = y.resize(l);
    let one = Series::one(f, l);
    let e = 2 * alpha + 1;
    if alpha >= n / 2 {
        let t = &(&y * &(&one - &(&ap * &ap))) * &(&one - &(&y * &ap).shift_up(e));
        return Ok(Some(t.shift_up(e - n)));
    }
    let k = n - e;
    for (sgn, pm) in [(Fq::ONE, true), (f.neg(Fq::ONE), false)] {
        let diff = &ap - &Series::constant(f, sgn, l);
        if diff.valuation() < k {
            continue;
        }
        let full = a.shift_down(1).resize(n + p.m);
        let b = (&full - &Series::constant(f, sgn, n + p.m)).shift_down(k).resize(l);
        let two_b = if pm { b.scale(f.from_int(-2)) } else { b.scale(f.from_int(2)) };
        let num = &y * &(&two_b - &(&b * &b).shift_up(k));
        let den = &(&one + &y.scale(sgn).shift_up(e)) + &(&y * &b).shift_up(n);
        return Ok(Some(&num * &den.inv()?));
    }
    Ok(None)
}

/// One CSV row per point: a-, C- and A-coefficients.
pub fn export_csv(points: &[PointY], p: &LevelParams) -> String {
    let mut out = String::new();
    let mut head = vec!["index".to_string()];
    head.extend((1..=p.n).map(|i| format!("a{i}")));
    head.extend((0..=p.m).map(|i| format!("C{i}")));
    head.extend((0..p.m).map(|i| format!("A{i}")));
    out.push_str(&head.join(","));
    out.push('\n');
    for pt in points {
        let mut row = vec![pt.index(p).to_string()];
        row.extend(pt.a.c[1..].iter().map(|x| x.0.to_string()));
        row.extend(pt.c.c.iter().map(|x| x.0.to_string()));
        row.extend(pt.aa.c.iter().map(|x| x.0.to_string()));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn export_json(points: &[PointY]) -> serde_json::Value {
    serde_json::to_value(points).unwrap_or(serde_json::Value::Null)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f3() -> &'static Field {
        Field::prime(3).unwrap()
    }

    fn rand_series(f: &'static Field, n: usize, rng: &mut ChaCha8Rng) -> Series {
        Series { f, c: (0..n).map(|_| Fq(rng.gen_range(0..f.q) as u16)).collect() }
    }

    fn rand_unit(f: &'static Field, n: usize, rng: &mut ChaCha8Rng) -> Series {
        let mut s = rand_series(f, n, rng);
        s.c[0] = Fq(rng.gen_range(1..f.q) as u16);
        s
    }

    /// A random element of U_J with entries truncated at `depth`.
    fn rand_uj(f: &'static Field, depth: usize, rng: &mut ChaCha8Rng) -> Mat2 {
        let mut ev = |lo: usize| {
            let mut s = Series::zero(f, depth);
            for i in (lo..depth).step_by(2) {
                s.c[i] = Fq(rng.gen_range(0..f.q) as u16);
            }
            s
        };
        let mut a = ev(0);
        let b = ev(0);
        let c = ev(2);
        let mut d = ev(0);
        a.c[0] = Fq(1 + (a.c[0].0 % (f.q as u16 - 1)));
        d.c[0] = Fq(1 + (d.c[0].0 % (f.q as u16 - 1)));
        let l = |s: &Series| Laurent::from_series(s, 0);
        Mat2::new(l(&a), l(&b), l(&c), l(&d))
    }

    #[test]
    fn counts() {
        let p = LevelParams::new(f3(), 1, 1).unwrap();
        assert_eq!(p.regime, Regime::Deep);
        assert_eq!(enumerate_d_w_tau(&p).len(), 2);
        assert_eq!(enumerate_y(&p).len(), 36);
        let p = LevelParams::new(f3(), 3, 2).unwrap();
        assert_eq!(enumerate_d_w_tau(&p).len(), 6);
        let ys = enumerate_y(&p);
        assert_eq!(ys.len(), 8748);
        for (i, y) in ys.iter().enumerate().step_by(97) {
            assert_eq!(y.index(&p), i);
        }
        assert_eq!(LevelParams::new(f3(), 1, 2).unwrap().regime, Regime::Small);
        assert_eq!(LevelParams::new(f3(), 3, 3).unwrap().regime, Regime::General);
        assert!(LevelParams::new(f3(), 2, 2).is_err());
        assert!(LevelParams::new(f3(), 5, 2).is_err());
    }

    #[test]
    fn iwahori_level_positions() {
        for n in 1..=3 {
            let p = LevelParams::new(f3(), 1, n).unwrap();
            for a in enumerate_d_w_tau(&p) {
                let x = d_point_matrix(&a, &p);
                assert_eq!(inv_iwahori(&x, &x.tau(), &p).unwrap(), IwahoriPos::W);
                assert_eq!(inv_iwahori(&x, &x.sigma(), &p).unwrap(), IwahoriPos::One);
            }
        }
    }

    #[test]
    fn all_points_verify_small() {
        for (m, n) in [(1, 1), (1, 2), (3, 2)] {
            let p = LevelParams::new(f3(), m, n).unwrap();
            let ys = enumerate_y(&p);
            let step = if ys.len() > 500 { 37 } else { 1 };
            for y in ys.iter().step_by(step) {
                assert!(verify_point(y, &p, VerifyMode::TauCondition).unwrap().passed, "{m} {n} {y:?}");
                assert!(verify_point(y, &p, VerifyMode::SigmaCondition).unwrap().passed);
                let x = y.matrix(&p).unwrap();
                assert_eq!(&PointY::factorize(&x, &p).unwrap(), y);
            }
        }
    }

    #[test]
    fn definition_sign_fails_for_even_n() {
        let p = LevelParams::new(f3(), 3, 2).unwrap();
        let q = p.with_sign(DSign::Minus);
        let mut bad = 0;
        for y in enumerate_y(&p).iter().step_by(41) {
            if !tau_condition(&y.coords(&q).unwrap(), &q).unwrap() {
                bad += 1;
            }
        }
        assert!(bad > 0);
    }

    #[test]
    fn perturbations_fail() {
        let p = LevelParams::new(f3(), 3, 2).unwrap();
        let y = PointY::from_index(&p, 1234);
        let mut x = y.coords(&p).unwrap();
        x.b.c[3] = p.f.add(x.b.c[3], Fq::ONE);
        assert!(!tau_condition(&x, &p).unwrap());
        let mut x = y.coords(&p).unwrap();
        x.d.c[2] = p.f.add(x.d.c[2], Fq::ONE);
        assert!(!tau_condition(&x, &p).unwrap());
        assert!(matches!(PointY::from_coords(&x, &p), Err(Error::NotInY(_))));
    }

    #[test]
    fn sigma_extension_mode() {
        let p = LevelParams::new(f3(), 1, 1).unwrap();
        let y = PointY::from_index(&p, 17);
        let r = verify_point(&y, &p, VerifyMode::SigmaExtension).unwrap();
        assert!(r.passed, "{:?}", r.failures);
        assert!(r.checks > 40);
    }

    #[test]
    fn left_action_formula_matches_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (q, m, n) in [(3, 1, 1), (3, 3, 2), (5, 3, 2), (3, 3, 3), (3, 1, 2)] {
            let f = Field::prime(q).unwrap();
            let p = LevelParams::new(f, m, n).unwrap();
            for _ in 0..15 {
                let idx = rng.gen_range(0..p.count_y());
                let x = PointY::from_index(&p, idx).coords(&p).unwrap();
                let g = rand_uj(f, 2 * (n + m) + 2, &mut rng);
                let a = left_action(&g, &x, &p).unwrap();
                let b = left_action_matrix(&g, &x, &p).unwrap();
                assert_eq!(a, b);
                let back = PointY::from_coords(&a, &p).unwrap();
                assert!(back.index(&p) < p.count_y());
            }
            let x = PointY::from_index(&p, 3).coords(&p).unwrap();
            assert_eq!(left_action(&Mat2::identity(f), &x, &p).unwrap(), x);
        }
    }

    #[test]
    fn left_action_is_an_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = f3();
        let p = LevelParams::new(f, 3, 2).unwrap();
        for _ in 0..10 {
            let x = PointY::from_index(&p, rng.gen_range(0..p.count_y())).coords(&p).unwrap();
            let g = rand_uj(f, 12, &mut rng);
            let k = rand_uj(f, 12, &mut rng);
            let lhs = left_action(&g.mul(&k), &x, &p).unwrap();
            let rhs = left_action(&g, &left_action(&k, &x, &p).unwrap(), &p).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn central_element() {
        let f = f3();
        let p = LevelParams::new(f, 3, 2).unwrap();
        let z = Series::from_ints(f, &[2, 0, 1], 8);
        let g = Mat2::scalar(&Laurent::from_series(&z, 0));
        let x = PointY::from_index(&p, 500).coords(&p).unwrap();
        let y = left_action(&g, &x, &p).unwrap();
        let zl = z.resize(4);
        assert_eq!(y.a, x.a);
        assert_eq!(y.c, &x.c * &zl);
        assert_eq!(y.d, &x.d * &zl);
        assert_eq!(y.aa, x.aa);
        assert_eq!(y.b, x.b);
    }

    #[test]
    fn y_stable_under_uj_exhaustive_small() {
        let f = f3();
        let p = LevelParams::new(f, 1, 1).unwrap();
        let ys = enumerate_y(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..12 {
            let g = rand_uj(f, 6, &mut rng);
            let mut seen = vec![false; ys.len()];
            for y in &ys {
                let z = PointY::from_coords(&left_action(&g, &y.coords(&p).unwrap(), &p).unwrap(), &p).unwrap();
                seen[z.index(&p)] = true;
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn right_action_formula_and_group_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (m, n) in [(1, 1), (3, 2), (3, 3)] {
            let f = f3();
            let p = LevelParams::new(f, m, n).unwrap();
            for _ in 0..10 {
                let x = PointY::from_index(&p, rng.gen_range(0..p.count_y())).coords(&p).unwrap();
                let i = RightElem::new(rand_unit(f, m + 1, &mut rng), rand_series(f, m, &mut rng)).unwrap();
                let j = RightElem::new(rand_unit(f, m + 1, &mut rng), rand_series(f, m, &mut rng)).unwrap();
                let xi = right_action(&x, &i, &p).unwrap();
                assert_eq!(xi, right_action_matrix(&x, &i, &p).unwrap());
                PointY::from_coords(&xi, &p).unwrap();
                let lhs = right_action(&xi, &j, &p).unwrap();
                let rhs = right_action(&x, &i.compose(&j).unwrap(), &p).unwrap();
                assert_eq!(lhs, rhs);
                let g = rand_uj(f, 2 * (n + m) + 2, &mut rng);
                let a = right_action(&left_action(&g, &x, &p).unwrap(), &i, &p).unwrap();
                let b = left_action(&g, &xi, &p).unwrap();
                assert_eq!(a, b);
            }
            let x = PointY::from_index(&p, 1).coords(&p).unwrap();
            assert_eq!(right_action(&x, &RightElem::identity(&p), &p).unwrap(), x);
        }
    }

    #[test]
    fn right_stabilizer_sanity() {
        let f = f3();
        let p = LevelParams::new(f, 1, 1).unwrap();
        let x = PointY::from_index(&p, 5).matrix(&p).unwrap();
        let w = DoubleCosetClass::w_identity(f, 1);
        let i = RightElem::new(Series::from_ints(f, &[2, 1], 2), Series::from_ints(f, &[1], 1)).unwrap();
        let xi = x.mul(&i.matrix());
        assert_eq!(gl2::inv_m(&xi, &xi.tau(), 1, 1, p.rp).unwrap(), w);
        let l = Laurent::from_ints(f, &[1, 1], 0);
        let out = Mat2::new(l.clone(), Laurent::zero(f), Laurent::zero(f), l);
        let xo = x.mul(&out);
        assert_ne!(gl2::inv_m(&xo, &xo.tau(), 1, 1, p.rp).unwrap(), w);
    }

    #[test]
    fn beta_varpi_closed_form_and_involution() {
        for (q, m) in [(3, 1), (3, 3), (5, 3)] {
            let f = Field::prime(q).unwrap();
            let p = LevelParams::deep(f, m).unwrap();
            let ys = enumerate_y(&p);
            let step = (ys.len() / 60).max(1);
            for y in ys.iter().step_by(step) {
                let x = y.coords(&p).unwrap();
                let b = beta_g(&gl2::varpi(f), &x, &p).unwrap();
                PointY::from_coords(&b, &p).unwrap();
                if let Ok(c) = beta_varpi_closed(&x, &p) {
                    assert_eq!(b, c);
                }
                let ap = y.a.shift_down(1);
                assert_eq!(b.a.shift_down(1).resize(p.n), ap.inv().unwrap());
                assert_eq!(beta_g(&gl2::varpi(f), &b, &p).unwrap(), x);
            }
        }
    }

    #[test]
    fn beta_varpi_at_a_equal_u_with_a_zero() {
        let f = f3();
        let p = LevelParams::new(f, 1, 1).unwrap();
        let a = Series::from_ints(f, &[0, 1], 2);
        let y = PointY::new(a, Series::from_ints(f, &[1, 2], 2), Series::zero(f, 1), &p).unwrap();
        let x = y.coords(&p).unwrap();
        let b = beta_varpi(&x, &p).unwrap();
        assert_eq!(b.c, -&x.c);
        assert_eq!(b.d, -&x.d);
        assert_eq!(b.aa, x.aa);
        assert_eq!(b.b, x.b);
    }

    #[test]
    fn h_lemma() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = f3();
        for (m, n) in [(3, 2), (5, 3), (7, 4), (5, 4)] {
            let p = LevelParams::new(f, m, n).unwrap();
            let lv = 2 * (n + m) + 4;
            for alpha in 0..n {
                for _ in 0..20 {
                    let mut yt = Series::zero(f, lv);
                    for i in (0..lv).step_by(2) {
                        yt.c[i] = Fq(rng.gen_range(0..3));
                    }
                    yt.c[0] = Fq(rng.gen_range(1..3));
                    let e = &Series::one(f, lv) + &yt.shift_up(2 * alpha + 1);
                    let g = gl2::iota_series(&e);
                    let mut a = Series::zero(f, n + 1);
                    if alpha < n / 2 && rng.gen_bool(0.7) {
                        let s = if rng.gen_bool(0.5) { 1 } else { 2 };
                        a.c[1] = Fq(s);
                        for i in (n - 2 * alpha)..=n {
                            a.c[i] = Fq(rng.gen_range(0..3));
                        }
                    } else {
                        for i in 1..=n {
                            a.c[i] = Fq(rng.gen_range(0..3));
                        }
                        a.c[1] = Fq(rng.gen_range(1..3));
                    }
                    let h = h_factor(&g, &a, &p).unwrap();
                    let (ga, _) = moebius(&g, &a, &p).unwrap();
                    if let Some(cf) = h_closed_form(&yt, alpha, &a, &p).unwrap() {
                        assert_eq!(ga.slice(n).resize(n + 1), a);
                        let k = n.min(m);
                        assert_eq!(cf.resize(k), h.resize(k), "alpha={alpha} a={a}");
                    } else {
                        assert!(alpha < n / 2);
                    }
                }
            }
            let a = Series::from_ints(f, &[0, 1, 2], n + 1);
            assert!(h_factor(&Mat2::identity(f), &a, &p).unwrap().is_zero());
        }
    }

    #[test]
    fn h_deep_congruence_subgroup() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = f3();
        let p = LevelParams::new(f, 3, 2).unwrap();
        for _ in 0..30 {
            let mut ev = |lo: usize| {
                let mut s = Series::zero(f, 14);
                for i in (lo..14).step_by(2) {
                    s.c[i] = Fq(rng.gen_range(0..3));
                }
                Laurent::from_series(&s, 0)
            };
            let one = Laurent::one(f);
            let k = Mat2::new(one.add(&ev(4)), ev(4), ev(6), one.add(&ev(4)));
            assert!(gl2::in_subgroup(&k, gl2::Subgroup::UJN(4)).unwrap());
            let a = PointY::from_index(&p, rng.gen_range(0..p.count_y())).a;
            assert!(h_factor(&k, &a, &p).unwrap().valuation() >= p.n);
        }
    }

    #[test]
    fn export_round() {
        let p = LevelParams::new(f3(), 1, 1).unwrap();
        let ys = enumerate_y(&p);
        let csv = export_csv(&ys, &p);
        assert_eq!(csv.lines().count(), 37);
        assert!(csv.starts_with("index,a1,C0,C1,A0"));
        assert_eq!(export_json(&ys).as_array().unwrap().len(), 36);
    }
}
