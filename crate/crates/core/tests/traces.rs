use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use tamer::chars::CharCtx;
use tamer::gl2::Mat2;
use tamer::rep::{
    conjugacy_detect, coset_index, minimal_characters, random_uj, t_pow, torus_part, uj_quotient, Conjugacy,
    CuspidalType,
};
use tamer::suite::{deep_model, field, model_for, DEEP};
use tamer::{Error, Fq};

#[test]
fn generic_formula_exhaustive_small() {
    let f = field(3).unwrap();
    let ctx = CharCtx::auto(f, 1).unwrap();
    for chi in minimal_characters(&ctx) {
        let md = model_for(3, 1, 1, Some(chi)).unwrap();
        for g in uj_quotient(f, 2) {
            assert_eq!(md.trace_formula_generic(&g).unwrap().value, md.trace_oracle(&g).unwrap(), "{g}");
        }
    }
}

#[test]
fn generic_and_closed_forms_sampled() {
    let md = deep_model(3, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let gs: Vec<Mat2> = (0..600).map(|_| random_uj(md.f(), 4, &mut rng)).collect();
    let applied: usize = gs
        .par_iter()
        .map(|g| {
            let o = md.trace_oracle(g).unwrap();
            assert_eq!(md.trace_formula_generic(g).unwrap().value, o, "{g}");
            match md.trace_closed_form(g) {
                Ok((v, name)) => {
                    assert_eq!(v, o, "{name} at {g}");
                    1
                }
                Err(Error::Refused(_)) => 0,
                Err(e) => panic!("{e}"),
            }
        })
        .sum();
    assert!(applied > 500);
}

#[test]
fn traces_separate_characters() {
    let f = field(3).unwrap();
    let ctx = CharCtx::auto(f, 1).unwrap();
    let chis = minimal_characters(&ctx);
    let a = model_for(3, 1, 1, Some(chis[0].clone())).unwrap();
    let other = chis.iter().find(|c| **c != chis[0] && **c != ctx.tau(&chis[0])).unwrap();
    let b = model_for(3, 1, 1, Some(other.clone())).unwrap();
    let differ = tamer::rep::varpi_units(&ctx)
        .iter()
        .chain(tamer::rep::nonsplit_family(f, 1).iter().map(|(_, _, g)| g).map(|g| (tamer::Series::one(f, 2), g.clone())).collect::<Vec<_>>().iter())
        .any(|(_, g)| a.trace_oracle(g).unwrap() != b.trace_oracle(g).unwrap());
    assert!(differ);
}

#[test]
fn unipotent_decomposition() {
    for md in DEEP.iter().map(|&(q, m)| deep_model(q, m).unwrap()) {
        let n = md.p.n;
        let traces = md.unipotent_traces().unwrap();
        for (c, _) in &traces {
            let mult = md.mult_nn(c, &traces).unwrap();
            assert_eq!(mult, (!c[n - 1].is_zero()) as usize, "{c:?}");
        }
    }
}

#[test]
fn conjugacy_matches_exhaustive_conjugation() {
    let f = field(3).unwrap();
    let rp = 40;
    for n in [1usize, 2] {
        let rs = uj_quotient(f, n);
        let rinv: Vec<Mat2> = rs.iter().map(|r| r.inv(rp).unwrap()).collect();
        uj_quotient(f, n + 1).par_iter().for_each(|g| {
            let tag = conjugacy_detect(g, n, rp).unwrap();
            let brute = rs.iter().zip(&rinv).any(|(r, ri)| torus_part(&ri.mul(g).mul(r), n, rp).unwrap().is_some());
            let central = torus_part(g, n, rp).unwrap().is_some_and(|e| e.c.iter().skip(1).step_by(2).all(|x| x.is_zero()));
            match tag {
                Conjugacy::NonTorus => assert!(!brute, "{g}"),
                Conjugacy::Central => assert!(central, "{g}"),
                Conjugacy::Torus { .. } => assert!(brute, "{g}"),
            }
        });
    }
}

#[test]
fn cuspidal_cosets_and_centre() {
    for md in DEEP.iter().map(|&(q, m)| deep_model(q, m).unwrap()) {
        let vr = md.vr();
        let ct = CuspidalType::deep(&md.ctx, &md.chi, 1, false, md.p.rp).unwrap();
        assert!(ct.reps_distinct().unwrap());
        assert_eq!(ct.reps.len(), coset_index(md.f(), md.p.n, md.p.rp).unwrap());
        let t = t_pow(md.f(), 1);
        let want = vr.mul(md.ctx.on_t(&md.chi), vr.from_int(md.dim as i64));
        assert_eq!(ct.theta_trace(&md.ctx, &t).unwrap(), want);
        assert_eq!(md.trace_oracle(&t).unwrap(), want);
    }
}

#[test]
fn reconstruction_refuses_non_minimal() {
    let f = field(5).unwrap();
    let ctx = CharCtx::auto(f, 1).unwrap();
    let non_minimal: Vec<_> = ctx.all_with_on_u(1).into_iter().filter(|c| !ctx.classify(c).minimal).take(6).collect();
    assert!(!non_minimal.is_empty());
    for chi in non_minimal {
        let md = model_for(5, 1, 1, Some(chi)).unwrap();
        let tt = md.torus_traces().unwrap();
        assert!(matches!(md.reconstruct_chi(&tt), Err(Error::Refused(_))));
    }
}

#[test]
fn second_beta_differs() {
    let md = deep_model(3, 3).unwrap();
    let a = CuspidalType::deep(&md.ctx, &md.chi, 1, false, md.p.rp).unwrap();
    let b = CuspidalType::deep(&md.ctx, &md.chi, 2, true, md.p.rp).unwrap();
    assert_ne!(a.beta.unwrap().coeff(-3), Fq::ZERO);
    assert!(b.verify_matching(&md.ctx).is_ok());
}
