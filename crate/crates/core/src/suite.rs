//! The acceptance checks, each returning a pass flag and a one-line summary.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::adlv::{
    d_point_matrix, enumerate_d_w_tau, enumerate_y, inv_iwahori, verify_point, IwahoriPos, LevelParams, PointY,
    VerifyMode,
};
use crate::chars::{q_alpha_set, CharCtx, Character, QMode};
use crate::error::Result;
use crate::field::{Field, Fq};
use crate::gl2::{e_minus, inv_m, inv_m_oracle, random_im, vdot, wdot, Laurent, Mat2};
use crate::rep::{
    cuspidal_rows, minimal_characters, nonsplit_family, random_ujn, small_level_rows, t_pow, unipotent_family,
    varpi_units, CuspidalType, RepModel, TraceRow,
};
use crate::series::{RAlphaParams, Series};

pub const DEEP: [(u32, usize); 3] = [(3, 1), (3, 3), (5, 1)];
pub const SMALL: [(u32, usize, usize); 2] = [(3, 1, 2), (5, 1, 2)];

#[derive(Clone, Debug, Serialize)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Criterion {
    pub fn line(&self) -> String {
        format!("[{}] {:>2} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.name, self.detail)
    }
}

fn crit(id: u8, name: &'static str, r: Result<(bool, String)>) -> Criterion {
    match r {
        Ok((passed, detail)) => Criterion { id, name, passed, detail },
        Err(e) => Criterion { id, name, passed: false, detail: format!("error: {e}") },
    }
}

pub fn field(q: u32) -> Result<&'static Field> {
    Field::new(q_prime(q).0, q_prime(q).1, None)
}

fn q_prime(q: u32) -> (u32, u32) {
    for p in 2..=q {
        if q % p == 0 {
            let mut r = 0;
            let mut x = q;
            while x % p == 0 {
                x /= p;
                r += 1;
            }
            return (p, r);
        }
    }
    (q, 1)
}

/// Xi_chi for a given character at (q, m, n).
pub fn model_for(q: u32, m: usize, n: usize, chi: Option<Character>) -> Result<RepModel> {
    let f = field(q)?;
    let p = LevelParams::new(f, m, n)?;
    let ctx = CharCtx::auto(f, m)?;
    let chi = match chi {
        Some(c) => c,
        None => minimal_characters(&ctx)
            .into_iter()
            .next()
            .ok_or_else(|| crate::Error::Invalid("no minimal character".into()))?,
    };
    RepModel::build_xi_chi(p, ctx, chi)
}

pub fn deep_model(q: u32, m: usize) -> Result<RepModel> {
    model_for(q, m, (m + 1) / 2, None)
}

fn summarize(rows: &[TraceRow]) -> (bool, usize) {
    let bad = rows.iter().filter(|r| !r.matched).count();
    (bad == 0, bad)
}

pub fn point_counts() -> Criterion {
    crit(1, "point counts", (|| {
        let mut ok = true;
        let mut parts = Vec::new();
        for (q, m) in DEEP {
            let f = field(q)?;
            let p = LevelParams::deep(f, m)?;
            let qq = q as usize;
            let d_expect = (qq - 1) * qq.pow(p.n as u32 - 1);
            let y_expect = (qq - 1) * (qq - 1) * qq.pow((p.n - 1 + 2 * m) as u32);
            let mut d_brute = 0;
            for a in Series::all(f, p.n) {
                let a = a.resize(p.n + 1).shift_up(1);
                if inv_iwahori(&d_point_matrix(&a, &p), &d_point_matrix(&a, &p).tau(), &p)? == IwahoriPos::W {
                    d_brute += 1;
                }
            }
            let d_enum = enumerate_d_w_tau(&p).len();
            let ys = enumerate_y(&p);
            let distinct: HashSet<usize> = ys.iter().map(|y| y.index(&p)).collect();
            let good = d_brute == d_expect && d_enum == d_expect && ys.len() == y_expect && distinct.len() == y_expect;
            ok &= good;
            parts.push(format!("({q},{m},{}) |D|={d_brute} |Y|={}", p.n, ys.len()));
        }
        Ok((ok, parts.join("; ")))
    })())
}

pub fn defining_equations(seed: u64) -> Criterion {
    crit(2, "defining equations", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = field(3)?;
        let p1 = LevelParams::new(f, 1, 1)?;
        let all = enumerate_y(&p1);
        let p3 = LevelParams::new(f, 3, 2)?;
        let total = p3.count_y();
        let sampled: Vec<PointY> = (0..1000).map(|_| PointY::from_index(&p3, rng.gen_range(0..total))).collect();
        let check = |ys: &[PointY], p: &LevelParams| -> Result<usize> {
            ys.par_iter()
                .map(|y| {
                    let t = verify_point(y, p, VerifyMode::TauCondition)?.passed;
                    let s = verify_point(y, p, VerifyMode::SigmaCondition)?.passed;
                    Ok((!(t && s)) as usize)
                })
                .collect::<Result<Vec<_>>>()
                .map(|v| v.into_iter().sum())
        };
        let bad1 = check(&all, &p1)?;
        let bad3 = check(&sampled, &p3)?;
        let mut ext_checks = 0;
        let mut ext_bad = 0;
        for y in all.iter().step_by(7) {
            let r = verify_point(y, &p1, VerifyMode::SigmaExtension)?;
            ext_checks += r.checks;
            ext_bad += r.failures.len();
        }
        Ok((
            bad1 == 0 && bad3 == 0 && ext_bad == 0,
            format!(
                "{} points at (3,1,1) with {bad1} failures; 1000 sampled at (3,3,2) with {bad3} failures; {ext_checks} F_9 substitutions with {ext_bad} failures",
                all.len()
            ),
        ))
    })())
}

pub fn inv_m_vs_oracle(seed: u64) -> Criterion {
    crit(3, "inv^m canonical form vs double-coset oracle", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = field(3)?;
        let (m, n, rp) = (1, 1, 30);
        let p = LevelParams::new(f, m, n)?;
        let ys = enumerate_y(&p);
        let w = wdot(f, n);
        let mut pairs = Vec::new();
        for k in 0..100 {
            let x = random_im(f, 0, 5, &mut rng).mul(&vdot(f, n));
            let y = match k % 4 {
                0 => {
                    let pt = ys[rng.gen_range(0..ys.len())].matrix(&p)?;
                    pairs.push((pt.clone(), pt.tau()));
                    continue;
                }
                1 => x.mul(&random_im(f, m, 5, &mut rng)),
                2 => {
                    let b: Vec<i64> = (0..3).map(|_| rng.gen_range(0..3)).collect();
                    x.mul(&e_minus(&Laurent::from_ints(f, &b, 1))).mul(&w).mul(&random_im(f, m, 4, &mut rng))
                }
                _ => x.mul(&random_im(f, 0, 4, &mut rng)),
            };
            pairs.push((x, y));
        }
        let bad = pairs
            .par_iter()
            .map(|(x, y)| Ok((inv_m(x, y, m, n, rp)? != inv_m_oracle(x, y, m, n, rp, 20_000)?) as usize))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum::<usize>();
        Ok((bad == 0, format!("{} random pairs at (3,1,1), {bad} disagreements", pairs.len())))
    })())
}

pub fn dimension_and_centre(seed: u64) -> Criterion {
    crit(4, "dim V_chi, trivial U_J^{m+1}, central character", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ok = true;
        let mut count = 0;
        let f3 = field(3)?;
        let ctx = CharCtx::auto(f3, 1)?;
        let mut models = Vec::new();
        for chi in minimal_characters(&ctx) {
            models.push(model_for(3, 1, 1, Some(chi))?);
        }
        models.push(deep_model(3, 3)?);
        for md in &models {
            let f = md.f();
            let vr = md.vr();
            let q = f.q as usize;
            ok &= md.dim == (q - 1) * q.pow(md.p.n as u32 - 1);
            let id = md.action(&Mat2::identity(f))?;
            for _ in 0..10 {
                ok &= md.action(&random_ujn(f, md.p.m + 1, 3, &mut rng))? == id;
            }
            let ct = md.ctx.on_t(&md.chi);
            let t = md.action(&t_pow(f, 1))?;
            ok &= t.rows.iter().enumerate().all(|(b, &(c, v))| b == c && v == ct);
            for z in md.ctx.g.elems.iter().filter(|x| md.ctx.g.in_uf_ue(x, md.p.m + 1)) {
                let a = md.action(&crate::gl2::iota_series(z))?;
                let cz = md.ctx.eval_unit(&md.chi, z);
                ok &= a.rows.iter().enumerate().all(|(b, &(c, v))| b == c && v == cz);
            }
            ok &= md.trace_oracle(&Mat2::identity(f))? == vr.from_int(md.dim as i64);
            count += 1;
        }
        Ok((ok, format!("{count} models (all minimal chi at (3,1,1), one at (3,3,2)); dims {:?}", models.iter().map(|m| m.dim).collect::<Vec<_>>())))
    })())
}

fn deep_models() -> Result<Vec<RepModel>> {
    DEEP.iter().map(|&(q, m)| deep_model(q, m)).collect()
}

pub fn unipotent_traces() -> Criterion {
    crit(5, "unipotent trace table", (|| {
        let mut ok = true;
        let mut parts = Vec::new();
        for md in deep_models()? {
            let f = md.f();
            let vr = md.vr();
            let n = md.p.n;
            let q = f.q as i64;
            let rows = unipotent_family(f, n)
                .into_par_iter()
                .map(|(c, g)| {
                    let row = md.trace_row(format!("{c:?}"), &g)?;
                    let expect = if c.iter().all(|x| x.is_zero()) {
                        (q - 1) * q.pow(n as u32 - 1)
                    } else if c[..n - 1].iter().all(|x| x.is_zero()) {
                        -q.pow(n as u32 - 1)
                    } else {
                        0
                    };
                    Ok(row.matched && row.oracle_value == vr.from_int(expect))
                })
                .collect::<Result<Vec<bool>>>()?;
            let bad = rows.iter().filter(|b| !**b).count();
            ok &= bad == 0;
            parts.push(format!("(q={},m={}) {} elements, {bad} mismatches", f.q, md.p.m, rows.len()));
        }
        Ok((ok, parts.join("; ")))
    })())
}

pub fn nonsplit_traces() -> Criterion {
    crit(6, "non-split traces and S-counts", (|| {
        let mut ok = true;
        let mut parts = Vec::new();
        for md in deep_models()? {
            let fam = nonsplit_family(md.f(), md.p.m);
            let res = fam
                .par_iter()
                .map(|(alpha, h, g)| {
                    let row = md.trace_row(String::new(), g)?;
                    let gen = md.trace_formula_generic(g)?.value;
                    let sc = md.nonsplit_s_counts(*alpha, h)?;
                    Ok((row.matched && gen == row.oracle_value, sc.iter().all(|s| s.count == s.predicted)))
                })
                .collect::<Result<Vec<_>>>()?;
            let units = md
                .ctx
                .g
                .elems
                .par_iter()
                .filter(|e| !md.ctx.g.in_uf_ue(e, md.p.m + 1))
                .map(|e| Ok(md.trace_row(String::new(), &crate::gl2::iota_series(e))?.matched))
                .collect::<Result<Vec<bool>>>()?;
            let bad_u = units.iter().filter(|b| !**b).count();
            ok &= bad_u == 0;
            let bad_t = res.iter().filter(|r| !r.0).count();
            let bad_s = res.iter().filter(|r| !r.1).count();
            ok &= bad_t == 0 && bad_s == 0;
            parts.push(format!(
                "(q={},m={}) {} elements, {bad_t} trace and {bad_s} S-count mismatches; {} further iota(U_E) elements, {bad_u} mismatches",
                md.f().q,
                md.p.m,
                fam.len(),
                units.len()
            ));
        }
        Ok((ok, parts.join("; ")))
    })())
}

pub fn valuation_one() -> Criterion {
    crit(7, "valuation-1 traces", (|| {
        let mut ok = true;
        let mut parts = Vec::new();
        for md in deep_models()? {
            let vr = md.vr();
            let ct = md.ctx.tau(&md.chi);
            let fam = varpi_units(&md.ctx);
            let bad = fam
                .par_iter()
                .map(|(e, g)| {
                    let want = vr.add(md.ctx.eval(&md.chi, 1, e), md.ctx.eval(&ct, 1, e));
                    Ok((md.trace_oracle(g)? != want) as usize)
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .sum::<usize>();
            ok &= bad == 0;
            parts.push(format!("(q={},m={}) {} elements, {bad} mismatches", md.f().q, md.p.m, fam.len()));
        }
        Ok((ok, parts.join("; ")))
    })())
}

/// Every theta with theta(u) of order dividing N', against the predicted multiplicities.
pub fn theta_sweep(md: &RepModel) -> Result<Vec<(Character, usize, usize, usize, usize)>> {
    let tt = md.torus_traces()?;
    let vr = md.vr();
    let z = vr.zeta(vr.n_prime)?;
    let mut thetas = Vec::new();
    for k in 0..vr.n_prime {
        thetas.extend(md.ctx.all_with_on_u(vr.pow(z, k)));
    }
    thetas
        .into_par_iter()
        .map(|th| {
            let ue = md.mult_ue(&th, &tt)?;
            let et = md.mult_etimes(&th, &tt)?;
            let pue = md.predicted_ue(&th)?;
            let pet = md.predicted_etimes(&th)?;
            Ok((th, ue, pue, et, pet))
        })
        .collect()
}

pub fn multiplicities() -> Criterion {
    crit(8, "multiplicity theorems", (|| {
        let mut ok = true;
        let mut parts = Vec::new();
        for q in [3, 5] {
            let f = field(q)?;
            let ctx = CharCtx::auto(f, 1)?;
            let chis = minimal_characters(&ctx);
            let mut n_two = 0;
            let mut n_pq = 0;
            let mut bad = 0;
            let mut swept = 0;
            for chi in chis.iter().take(if q == 3 { chis.len() } else { 4 }) {
                let md = model_for(q, 1, 1, Some(chi.clone()))?;
                let ct = md.ctx.tau(&md.chi);
                for (th, ue, pue, et, pet) in theta_sweep(&md)? {
                    swept += 1;
                    if ue != pue || et != pet || ue > 2 || et > 1 {
                        bad += 1;
                    }
                    if ue == 2 {
                        n_two += 1;
                    }
                    if et == 1 && th != md.chi && th != ct {
                        n_pq += 1;
                    }
                }
            }
            ok &= bad == 0;
            if q == 5 {
                ok &= n_two > 0 && n_pq > 0;
            }
            parts.push(format!("q={q}: {swept} (chi, theta) pairs, {bad} mismatches, {n_two} with U_E-multiplicity 2, {n_pq} properly quadratic E^x-multiplicity 1"));
        }
        Ok((ok, parts.join("; ")))
    })())
}

pub fn q_alpha() -> Criterion {
    crit(9, "Q_alpha", (|| {
        let mut ok = true;
        let mut parts = Vec::new();
        for q in [3u32, 5] {
            let f = field(q)?;
            for m in [1usize, 3] {
                let n = (m + 1) / 2;
                for alpha in 0..n {
                    let cf: HashSet<Series> = q_alpha_set(f, m, alpha, QMode::ClosedForm)?.into_iter().collect();
                    let bf: HashSet<Series> = q_alpha_set(f, m, alpha, QMode::BruteForce)?.into_iter().collect();
                    ok &= cf == bf;
                    if alpha == n - 1 {
                        ok &= 2 * cf.len() + 3 == q as usize;
                    }
                    if alpha + 2 <= n {
                        let lvl = RAlphaParams::new(m, alpha + 1)?.level();
                        for sign in [Fq::ONE, f.neg(Fq::ONE)] {
                            let target = Series::constant(f, sign, lvl);
                            let fib = cf.iter().filter(|s| s.resize(lvl) == target).count();
                            ok &= 2 * fib + 1 == q as usize;
                        }
                    }
                    parts.push(format!("q={q} m={m} a={alpha}: #Q={}", cf.len()));
                }
            }
        }
        Ok((ok, parts.join(", ")))
    })())
}

pub fn reconstruction() -> Criterion {
    crit(10, "chi reconstruction", (|| {
        let f = field(3)?;
        let ctx = CharCtx::auto(f, 1)?;
        let mut ok = true;
        let chis = minimal_characters(&ctx);
        for chi in &chis {
            let ct = ctx.tau(chi);
            for src in [chi.clone(), ct.clone()] {
                let md = model_for(3, 1, 1, Some(src))?;
                let got = md.reconstruct_chi(&md.torus_traces()?)?;
                let want: HashSet<&Character> = [chi, &ct].into_iter().collect();
                ok &= got.iter().collect::<HashSet<_>>() == want;
            }
        }
        Ok((ok, format!("{} minimal characters at (3,1,1), reconstructed from Xi_chi and Xi_chi^tau", chis.len())))
    })())
}

pub fn cuspidal_comparison() -> Criterion {
    crit(11, "cuspidal type vs Xi_chi", (|| {
        let mut ok = true;
        let mut parts = Vec::new();
        for md in deep_models()? {
            for (scale, perturb) in [(1, false), (2, true)] {
                let ct = CuspidalType::deep(&md.ctx, &md.chi, scale, perturb, md.p.rp)?;
                let (good, bad) = summarize(&cuspidal_rows(&md, &ct)?);
                ok &= good && ct.reps.len() == md.dim;
                parts.push(format!("(q={},m={},scale {scale}) {bad} mismatches", md.f().q, md.p.m));
            }
        }
        Ok((ok, parts.join("; ")))
    })())
}

pub fn small_level(seed: u64) -> Criterion {
    crit(12, "small level vs induced character", (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ok = true;
        let mut parts = Vec::new();
        for (q, m, n) in SMALL {
            let md = model_for(q, m, n, None)?;
            let rows = small_level_rows(&md, 100, &mut rng)?;
            let (good, bad) = summarize(&rows);
            ok &= good;
            parts.push(format!("({q},{m},{n}) {} rows, {bad} mismatches", rows.len()));
        }
        Ok((ok, parts.join("; ")))
    })())
}

pub fn borel_irreducible() -> Criterion {
    crit(13, "B-irreducibility", (|| {
        let mut ok = true;
        let mut parts = Vec::new();
        for md in deep_models()? {
            let v = md.borel_self_product()?;
            ok &= v == 1;
            parts.push(format!("(q={},m={}) <Xi,Xi>_B = {v}", md.f().q, md.p.m));
        }
        Ok((ok, parts.join("; ")))
    })())
}

pub fn run_all(seed: u64) -> Vec<Criterion> {
    vec![
        point_counts(),
        defining_equations(seed),
        inv_m_vs_oracle(seed),
        dimension_and_centre(seed),
        unipotent_traces(),
        nonsplit_traces(),
        valuation_one(),
        multiplicities(),
        q_alpha(),
        reconstruction(),
        cuspidal_comparison(),
        small_level(seed),
        borel_irreducible(),
    ]
}
