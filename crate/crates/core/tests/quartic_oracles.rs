mod common;

use common::*;
use proptest::prelude::*;
use qadmm::quartic::{
    classify_and_solve_cubic, minimize, minimize_quadratic, minimize_quartic,
    minimize_quartic_on_interval, CubicBranch, CubicRoots, QuarticCoeffs, ReducedCubic,
};
use rand::Rng;

fn coeffs(c: [f64; 5]) -> QuarticCoeffs<f64> {
    QuarticCoeffs::new(c[0], c[1], c[2], c[3], c[4])
}

#[test]
fn cubic_roots_have_small_residual_and_correct_count() {
    let mut rng = rng(11);
    let mut checked_counts = 0;
    for _ in 0..100_000 {
        let (b, c, d): (f64, f64, f64) = (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let roots = classify_and_solve_cubic(b, c, d).unwrap();
        for x in roots.to_vec() {
            let res = ((x + b) * x + c) * x + d;
            assert!(
                res.abs() <= 1e-9 * 1f64.max(x.abs().powi(3)),
                "(b,c,d)=({b},{c},{d}) root {x} residual {res}"
            );
        }
        let (count, disc) = discriminant_root_count(b, c, d);
        let scale = 1.0 + b.abs().max(c.abs()).max(d.abs()).powi(4);
        if disc.abs() < 1e-8 * scale {
            continue;
        }
        checked_counts += 1;
        let got = match roots.branch() {
            CubicBranch::OneReal => 1,
            _ => 3,
        };
        assert_eq!(got, count, "(b,c,d)=({b},{c},{d}) disc={disc}");
        if disc.abs() > 1e-2 * scale {
            assert_eq!(sign_change_count(b, c, d, 20_001), count, "(b,c,d)=({b},{c},{d})");
        }
    }
    assert!(checked_counts > 99_000);
}

#[test]
fn quartic_minimizer_matches_grid_oracle() {
    let mut rng = rng(12);
    for _ in 0..20_000 {
        let c = random_quartic(&mut rng);
        let x = minimize_quartic(&coeffs(c)).unwrap();
        let (_, f_oracle) = quartic_oracle(c, 2_000);
        let f_alg = poly4(c, x);
        assert!(f_alg <= f_oracle + 1e-8 * (1.0 + f_oracle.abs()), "{c:?}: {f_alg} vs {f_oracle}");
    }
}

#[test]
fn quadratic_minimizer_matches_grid_oracle() {
    let mut rng = rng(13);
    for _ in 0..2_000 {
        let a2 = rng.gen_range(0.1..10.0);
        let a1 = rng.gen_range(-10.0..10.0);
        let x = minimize_quadratic(a2, a1).unwrap();
        let (xo, _) = grid_golden_min(|x| a2 * x * x + a1 * x, -60.0, 60.0, 2_001);
        assert!((x - xo).abs() <= 1e-6, "{a2} {a1}: {x} vs {xo}");
        // the golden-section oracle is limited to ~sqrt(eps) in x; in value it is tight
        let fx = a2 * x * x + a1 * x;
        let fo = a2 * xo * xo + a1 * xo;
        assert!(fx <= fo + 1e-10 * (1.0 + fo.abs()));
    }
}

#[test]
fn interval_minimizer_matches_grid_oracle() {
    let mut rng = rng(14);
    for _ in 0..5_000 {
        let mut c = random_quartic(&mut rng);
        if rng.gen_bool(0.2) {
            c[0] = 0.0;
            c[1] = 0.0;
            c[2] = c[2].abs();
        }
        let lo = rng.gen_range(-5.0..5.0);
        let hi = lo + rng.gen_range(0.0..5.0);
        let x = minimize_quartic_on_interval(&coeffs(c), lo, hi).unwrap();
        assert!(x >= lo && x <= hi);
        let (_, fo) = grid_golden_min(|x| poly4(c, x), lo, hi, 4_001);
        let fx = poly4(c, x);
        assert!(fx <= fo + 1e-8 * (1.0 + fo.abs()), "{c:?} on [{lo},{hi}]: {fx} vs {fo}");
    }
}

#[test]
fn triple_root_perturbation_is_continuous() {
    for (b, c, d) in [(-3.0f64, 3.0, -1.0), (0.0, 0.0, 0.0), (6.0, 12.0, 8.0)] {
        let center = -b / 3.0;
        for eps in [1e-6, -1e-6] {
            let roots = classify_and_solve_cubic(b, c, d + eps).unwrap();
            for x in roots.to_vec() {
                // cbrt(1e-6) = 1e-2 exactly, so the bound is attained up to rounding
                assert!((x - center).abs() <= 1e-2 + 1e-12, "({b},{c},{d}+{eps}) -> {x}");
            }
        }
    }
}

#[test]
fn branch_follows_delta_sign() {
    let mut rng = rng(15);
    for _ in 0..10_000 {
        let cubic = ReducedCubic::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let roots = cubic.solve().unwrap();
        let delta = cubic.delta();
        match roots {
            CubicRoots::Single(_) => assert!(delta > 0.0),
            CubicRoots::Triple(_) => assert!(cubic.q() == 0.0 && cubic.r() == 0.0),
            CubicRoots::Three(_) => assert!(delta <= 0.0),
        }
    }
}

proptest! {
    #[test]
    fn argmin_invariant_under_power_of_two_scaling(
        a in 0.1f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0,
        d in -10.0f64..10.0, e in -10.0f64..10.0, p in -20i32..20,
    ) {
        let q = QuarticCoeffs::new(a, b, c, d, e);
        let s = 2f64.powi(p);
        prop_assert_eq!(minimize(&q).unwrap(), minimize(&q.scaled(s)).unwrap());
    }

    #[test]
    fn argmin_value_invariant_under_positive_scaling(
        a in 0.1f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0,
        d in -10.0f64..10.0, s in 1e-3f64..1e3,
    ) {
        let q = QuarticCoeffs::new(a, b, c, d, 0.0);
        let x = minimize(&q).unwrap();
        let xs = minimize(&q.scaled(s)).unwrap();
        // on near-ties the two wells may swap; the objective must not move
        let (f, fs) = (q.eval(x), q.eval(xs));
        prop_assert!((f - fs).abs() <= 1e-9 * (1.0 + f.abs()), "{} vs {}", f, fs);
    }

    #[test]
    fn middle_root_is_a_maximizer(
        a in 0.1f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0, d in -10.0f64..10.0,
    ) {
        let q = QuarticCoeffs::new(a, b, c, d, 0.0);
        if let CubicRoots::Three(mut r) = q.reduced_cubic().solve().unwrap() {
            r.sort_by(|x, y| x.partial_cmp(y).unwrap());
            if r[1] - r[0] > 1e-4 && r[2] - r[1] > 1e-4 {
                prop_assert!(q.second_derivative(r[1]) <= 0.0);
            }
        }
    }
}
