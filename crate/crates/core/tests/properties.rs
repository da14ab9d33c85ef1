//! Property tests for the invariants listed per module. Each case draws a
//! seed and a few sizes; the instance itself is built from the seed.

use extcalc::compressor;
use extcalc::extenders::{build_extension, random_admissible_contraction, random_admissible_unitary};
use extcalc::matkit::{self, subspace_meet};
use extcalc::random;
use extcalc::seqspace::{EvGeoSeq, GeoMode, Side};
use extcalc::suites::{self, SuiteConfig, SuiteName};
use extcalc::symop::{self, DefectData, I};
use extcalc::synthesizer;
use extcalc::{charfn, CMat, CSub, TolerancePolicy, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tol() -> TolerancePolicy {
    TolerancePolicy::default()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const MODELS: [&str; 6] = ["exit:1:1", "exit:2:2", "exit:1:3", "restricted:1:0@2", "restricted:2:0@2,1@-1", "restricted:2:0@2,1@-1,0@4"];

fn defects(idx: usize) -> DefectData {
    DefectData::new(&suites::parse_model(MODELS[idx]).unwrap(), &tol()).unwrap()
}

fn seq(entries: &[(i64, (f64, f64))], mode: Option<(f64, f64, f64)>) -> EvGeoSeq {
    let s = EvGeoSeq::from_entries(entries.iter().map(|&(k, (a, b))| (k, C64::new(a, b))));
    match mode {
        Some((r, phase, c)) => {
            let m = GeoMode::new(Side::Upper, C64::from_polar(r, phase), C64::new(c, 0.0), 3).unwrap();
            s.plus(&EvGeoSeq::from_mode(m))
        }
        None => s,
    }
}

fn entries() -> impl Strategy<Value = Vec<(i64, (f64, f64))>> {
    prop::collection::vec((-6i64..6, (-2.0..2.0f64, -2.0..2.0f64)), 0..6)
}

fn mode() -> impl Strategy<Value = Option<(f64, f64, f64)>> {
    prop::option::of((0.05..0.9f64, 0.0..std::f64::consts::TAU, -2.0..2.0f64))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn defect_completes_the_norm(seed: u64, r in 1usize..6, c in 1usize..6) {
        let mut g = rng(seed);
        let z = random::contraction(r, c, &mut g);
        let (dz, dzs) = matkit::defect_pair(&z, &tol()).unwrap();
        prop_assert!(matkit::op_norm(&(&dz - dz.adjoint())) < 1e-12);
        prop_assert!(matkit::herm_eigen(&dz).0.iter().all(|&e| e > -1e-12));
        let x = random::gaussian_matrix(c, 1, &mut g);
        let lhs = (&z * &x).norm_squared() + (&dz * &x).norm_squared();
        prop_assert!((lhs - x.norm_squared()).abs() < 1e-9 * x.norm_squared());
        // Z^H D_{Z*} = D_Z Z^H.
        prop_assert!(matkit::op_norm(&(z.adjoint() * &dzs - &dz * z.adjoint())) < 1e-9);
    }

    #[test]
    fn svd_reconstructs_rank_deficient_hermitian(seed: u64, n in 2usize..7) {
        let mut g = rng(seed);
        let y = random::contraction_with_norm(n, n, 1.0, &mut g);
        let h = matkit::identity::<f64>(n) - &y * y.adjoint();
        let (u, s, v) = matkit::svd_full(&h);
        let d = CMat::from_fn(n, n, |i, j| if i == j { C64::new(s[i], 0.0) } else { C64::new(0.0, 0.0) });
        prop_assert!(matkit::op_norm(&(&u * d * v.adjoint() - &h)) < 1e-12);
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn meet_is_commutative_and_contained(seed: u64, n in 2usize..6, da in 0usize..5, db in 0usize..5, shared in 0usize..3) {
        let mut g = rng(seed);
        let common = random::gaussian_matrix(n, shared.min(n), &mut g);
        let mk = |d: usize, g: &mut ChaCha8Rng| {
            let extra = random::gaussian_matrix(n, d.min(n), g);
            let mut m = CMat::zeros(n, common.ncols() + extra.ncols());
            m.view_mut((0, 0), (n, common.ncols())).copy_from(&common);
            m.view_mut((0, common.ncols()), (n, extra.ncols())).copy_from(&extra);
            CSub::span(&m, &tol())
        };
        let a = mk(da, &mut g);
        let b = mk(db, &mut g);
        let ab = subspace_meet(&a, &b, &tol()).unwrap();
        let ba = subspace_meet(&b, &a, &tol()).unwrap();
        prop_assert!(ab.same_as(&ba, &tol()));
        prop_assert!(a.contains(&ab, &tol()) && b.contains(&ab, &tol()));
        prop_assert!(ab.dim() >= common.ncols().min(n).min(a.dim()).min(b.dim()).min(shared));
        prop_assert!(matkit::op_norm(&(ab.basis.adjoint() * &ab.basis - matkit::identity::<f64>(ab.dim()))) < 1e-12);
    }

    #[test]
    fn schur_complement_of_block_diagonal(seed: u64, r1 in 1usize..4, r2 in 1usize..4) {
        let mut g = rng(seed);
        let a = random::unitary(r1, &mut g);
        let d = random::gaussian_matrix(r2, r2, &mut g);
        let mut t = CMat::zeros(r1 + r2, r1 + r2);
        t.view_mut((0, 0), (r1, r1)).copy_from(&a);
        t.view_mut((r1, r1), (r2, r2)).copy_from(&d);
        let s = matkit::schur_complement(&t, (r1, r1), &CMat::zeros(r1, r1), &tol()).unwrap();
        prop_assert_eq!(s, d);
    }

    #[test]
    fn sequence_inner_product(e1 in entries(), m1 in mode(), e2 in entries(), m2 in mode()) {
        let x = seq(&e1, m1);
        let y = seq(&e2, m2);
        let xy = x.inner(&y);
        prop_assert!((xy - y.inner(&x).conj()).norm() <= 1e-12 * (1.0 + x.norm() * y.norm()));
        prop_assert!((x.shift(1).inner(&y.shift(1)) - xy).norm() <= 1e-12 * (1.0 + x.norm() * y.norm()));
        let c = x.canonical(&tol());
        prop_assert_eq!(c.canonical(&tol()), c.clone());
        prop_assert!((c.norm() - x.norm()).abs() <= 1e-12 * (1.0 + x.norm()));
        prop_assert!(x.norm_sq() >= 0.0);
    }

    #[test]
    fn admissible_unitaries_compress_selfadjoint(seed: u64, idx in 0usize..6) {
        let dd = defects(idx);
        let mut g = rng(seed);
        let p = random_admissible_unitary(&dd, &mut g, &tol()).unwrap();
        let r = compressor::compress(&dd, &p, &tol()).unwrap();
        prop_assert!(r.classification.selfadjoint);
        let u0 = &r.u0;
        prop_assert!(matkit::op_norm(&(u0.adjoint() * u0 - matkit::identity::<f64>(u0.ncols()))) < 1e-8);
        prop_assert!(matkit::op_norm(&(&r.ustar0 * u0 - matkit::identity::<f64>(u0.ncols()))) < 1e-8);
    }

    #[test]
    fn contractive_compressions_are_dual_and_agree(seed: u64, idx in 0usize..6) {
        let dd = defects(idx);
        let mut g = rng(seed);
        let p = random_admissible_contraction(&dd, &mut g, &tol()).unwrap();
        let a = compressor::compress(&dd, &p, &tol()).unwrap();
        prop_assert!(a.classification.maximal_dissipative && a.classification.dual_pair_adjoint);
        prop_assert!(a.residuals.duality < 1e-9);
        let ext = build_extension(&dd, &p).unwrap();
        let b = compressor::compress_direct(&dd, &ext, &tol()).unwrap();
        prop_assert!(a.discrepancy(&b, &tol()) < 1e-8);
    }

    #[test]
    fn extensions_are_dissipative(seed: u64, idx in 0usize..6, unitary: bool) {
        let dd = defects(idx);
        let mut g = rng(seed);
        let p = if unitary { random_admissible_unitary(&dd, &mut g, &tol()) } else { random_admissible_contraction(&dd, &mut g, &tol()) }.unwrap();
        let ext = build_extension(&dd, &p).unwrap();
        for _ in 0..5 {
            let (f, tf) = ext.sample(&mut g, &tol()).unwrap();
            let im = tf.inner(&f).im;
            let scale = 1.0 + f.norm() * tf.norm();
            prop_assert!(im >= -1e-9 * scale);
            if unitary {
                prop_assert!(im.abs() < 1e-9 * scale);
            }
        }
    }

    #[test]
    fn range_calculus_on_random_contractions(seed: u64, n in 2usize..7, touch: bool) {
        let mut g = rng(seed);
        let y = if touch { random::contraction_with_norm(n, n, 1.0, &mut g) } else { random::contraction(n, n, &mut g) };
        prop_assume!(matkit::sigma_min(&(matkit::identity::<f64>(n) - &y)) >= 1e-6);
        let r = compressor::range_predicates(&y, &tol()).unwrap();
        prop_assert!(r.trivial_together);
        prop_assert_eq!(r.sums_equal, Some(true));
        prop_assert_eq!(r.omega_map_holds, Some(true));
        prop_assert!(r.norm_identity_residual.unwrap() < 1e-9);
        prop_assert_eq!(r.last_equivalence, Some(true));
    }

    #[test]
    fn dissipative_synthesis_round_trips(seed: u64, np in 1usize..4, nmp in 1usize..4) {
        let mut g = rng(seed);
        let spec = synthesizer::random_structured_spec(np, nmp, &mut g, &tol()).unwrap();
        let r = synthesizer::synthesize_dissipative_blocks(&spec, 1, &tol()).unwrap();
        prop_assert!(r.roundtrip_error < 1e-8);
        for m in [&r.blocks.m, &r.blocks.g, &r.blocks.x] {
            prop_assert!(matkit::op_norm(m) <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn selfadjoint_synthesis_round_trips(seed: u64, n in 1usize..4, d in 0usize..4) {
        let mut g = rng(seed);
        let dd = DefectData::new(&symop::Model::exit(n, 1).unwrap(), &tol()).unwrap();
        let target = synthesizer::random_isometric_target(n, n, d.min(n), &mut g);
        let r = synthesizer::synthesize_selfadjoint(&dd, &target, &tol()).unwrap();
        prop_assert!(r.roundtrip_error < 1e-8);
        prop_assert!(r.unitarity_residual < 1e-10);
    }

    #[test]
    fn characteristic_function_routes_agree(x in -2.0..2.0f64, y in 0.2..6.0f64, at_i: bool) {
        let model = suites::parse_model("restricted:1:0@2").unwrap();
        let lambda = if at_i { I } else { C64::new(1.0, 2.0) };
        let z = C64::new(x, y);
        let a = charfn::charfn_via_nz(&model, lambda, z, &tol()).unwrap();
        let b = charfn::charfn_via_cayley(&model, lambda, z, &tol()).unwrap();
        prop_assert!(compressor::max_abs(&(&a.matrix - &b.matrix)) < 1e-9);
        prop_assert!(a.bound_slack() >= -1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn reports_are_deterministic(seed: u64, which in 0usize..10) {
        let suite = SuiteName::ALL[which];
        let cfg = SuiteConfig::new(suite, seed, 2);
        let strip = |mut r: suites::RunReport| {
            r.wall_time_ms = 0.0;
            serde_json::to_string(&r).unwrap()
        };
        prop_assert_eq!(strip(suites::run_suite(&cfg).unwrap()), strip(suites::run_suite(&cfg).unwrap()));
    }
}
