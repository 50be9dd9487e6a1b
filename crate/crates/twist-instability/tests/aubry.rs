mod common;

use twist_instability::aubry::*;
use twist_instability::twistmap::*;

/// Regression baseline for the standard map at k = 1, M = 64, grid 512.
const DELTA0_K1: f64 = 0.149786;

#[test]
fn relaxing_an_equilibrium_leaves_it_alone() {
    let gf = GeneratingFunction::standard(1.0);
    let c = Configuration::constant(-10, 10, 0.0);
    let r = relax_pinned(&gf, &c, &[], 1e-12).unwrap();
    assert_eq!(r, c);
}

#[test]
fn relaxing_a_clamped_ramp() {
    let gf = GeneratingFunction::standard(1.0);
    let vals: Vec<f64> = (-32..=32).map(|j| (j + 32) as f64 / 64.0).collect();
    let c = Configuration::new(-32, vals, 0.0, 1.0);
    let r = relax_pinned(&gf, &c, &[-32, 32], 1e-11).unwrap();
    let g = action_gradient(&gf, &r);
    let free = g[1..g.len() - 1].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(free <= 1e-10, "{free}");
    assert!(r.values.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!((r.get(-32), r.get(32)), (0.0, 1.0));

    let r = relax_pinned(&gf, &c.clone_with(0, 0.5), &[-32, 0, 32], 1e-11).unwrap();
    assert_eq!(r.get(0), 0.5);
}

trait CloneWith {
    fn clone_with(&self, i: i64, v: f64) -> Self;
}

impl CloneWith for Configuration {
    fn clone_with(&self, i: i64, v: f64) -> Self {
        let mut c = self.clone();
        c.set(i, v);
        c
    }
}

#[test]
fn s_function_minimum_and_bounds() {
    let s = common::k1();
    let (gf, fp, pair) = (&s.gf, &s.fp, &s.pair);
    let at_z0 = s_eval(gf, fp, pair.z.get(0), 64).unwrap();
    let grid_min = pair.s_samples.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    assert!(at_z0 <= grid_min + 1e-12, "{at_z0} vs {grid_min}");
    assert!((at_z0 - pair.s_min).abs() < 1e-10);
    for x in [1e-3, 1.0 - 1e-3] {
        let v = s_eval(gf, fp, fp.y0 + x, 64).unwrap();
        assert!(v.is_finite() && v - pair.s_min >= 0.0);
    }
}

#[test]
fn s_at_half_is_stable_in_the_window_size() {
    let s = common::k1();
    let a = s_eval(&s.gf, &s.fp, 0.5, 64).unwrap();
    let b = s_eval(&s.gf, &s.fp, 0.5, 96).unwrap();
    assert!((a - b).abs() <= 1e-6, "{a} {b}");
    assert!(a - s.pair.s_min > 0.0);
}

#[test]
fn homoclinic_quality_at_k1() {
    let s = common::k1();
    let p = &s.pair;
    assert!(residual(&s.gf, &p.z) <= 1e-8);
    assert!(residual(&s.gf, &p.z_tilde) <= 1e-8);
    assert!(ordering_violations(p).is_empty(), "{:?}", ordering_violations(p));
    assert!((p.delta0 - DELTA0_K1).abs() < 1e-6, "{}", p.delta0);
    assert!((delta0_direct(&s.gf, p) - p.delta0).abs() <= 1e-8);
    let (y0, m) = (p.y0(), p.m as i64);
    assert!(0.0 < p.z_tilde.get(0) - y0 && p.z_tilde.get(0) < p.z.get(0) && p.z.get(0) < p.z_tilde.get(1) && p.z_tilde.get(1) < y0 + 1.0);
    // deviations at the rounding level carry no tail information
    let resolved = |d: f64| d > TAIL_NOISE_FLOOR;
    for j in 0..=m {
        let w = p.kappa1 * p.lambda.powi(-(j as i32 + 1));
        for d in [(p.z_tilde.get(-j) - y0).abs(), (p.z_tilde.get(j) - y0 - 1.0).abs()] {
            assert!(!resolved(d) || d <= w * (1.0 + 1e-12), "j = {j}: {d} > {w}");
        }
    }
}

#[test]
fn homoclinics_respect_the_reflection_symmetry() {
    // x -> -x maps the standard family to itself, so the bond-centered
    // minimizer satisfies z_{-1} + z_0 = 1 and the minimax sits at 1/2.
    let p = &common::k1().pair;
    assert!((p.z.get(-1) + p.z.get(0) - 1.0).abs() < 1e-6);
    assert!((p.z_tilde.get(0) - 0.5).abs() < 1e-6);
    assert!((p.z_tilde.get(-1) + p.z_tilde.get(1) - 1.0).abs() < 1e-6);
}

#[test]
fn delta0_grows_with_k() {
    let d: Vec<f64> = [0.5, 1.0, 2.0].iter().map(|&k| common::setup(k).pair.delta0).collect();
    assert!(d[0] > 1e-6 && d[0] < d[1] && d[1] < d[2], "{d:?}");
}

#[test]
fn kappa1_of_exact_geometric_tails() {
    let base = &common::k1().pair;
    let (lam, c, m) = (3.0f64, 0.2, 20i64);
    let values = (-m..=m)
        .map(|j| if j <= 0 { c * lam.powi(-(-j as i32 + 1)) } else { 1.0 - c * lam.powi(-(j as i32 + 1)) })
        .collect();
    let zt = Configuration::new(-m, values, 0.0, 1.0);
    let pair = HomoclinicPair { z_tilde: zt, m: m as usize, ..base.clone() };
    // j = 0 enters both bounds: the right one sees |z~_0 - 1| = 1 - c / lam
    let expected = c.max(lam * (1.0 - c / lam));
    assert!((kappa1_fit(&pair, lam) - expected).abs() < 1e-12);
}

/// The minimax site z~_0 = 1/2 forces kappa1 >= lambda / 2, so kappa1 grows
/// with k along the standard family.
#[test]
fn kappa1_is_stable_and_grows_with_k() {
    let s = common::k1();
    let p96 = compute_homoclinics(&s.gf, &s.fp, 96, 512).unwrap();
    assert!((p96.kappa1 / s.pair.kappa1 - 1.0).abs() <= 0.02);
    let mut last = 0.0;
    for k in [1.0, 2.0, 4.0] {
        let p = if k == 1.0 { s.pair.clone() } else { common::setup(k).pair };
        let floor = (p.z_tilde.get(0) - p.y0()) * p.lambda;
        assert!(p.kappa1 >= floor * (1.0 - 1e-12) && p.kappa1 > last, "k = {k}: {} {floor}", p.kappa1);
        last = p.kappa1;
    }
}

#[test]
fn energy_window_brackets_z0() {
    let s = common::k1();
    let p = &s.pair;
    let e0 = 0.5 * p.delta0;
    let (a0, b0) = energy_window(&s.gf, &s.fp, p, e0).unwrap();
    assert!(p.z_tilde.get(0) < a0 && a0 < p.z.get(0) && p.z.get(0) < b0 && b0 <= p.z_tilde.get(1));
    let sa = s_eval_from(&s.gf, &s.fp, a0, &p.z).unwrap().0 - p.s_min;
    assert!((sa - e0).abs() < 1e-8, "{sa}");
    // a small level gives an interior right endpoint too
    let (_, b) = energy_window(&s.gf, &s.fp, p, 1e-3).unwrap();
    assert!(b < p.z_tilde.get(1));
    let sb = s_eval_from(&s.gf, &s.fp, b, &p.z).unwrap().0 - p.s_min;
    assert!((sb - 1e-3).abs() < 1e-8);
    assert_eq!(energy_window(&s.gf, &s.fp, p, 0.0).unwrap(), (p.z.get(0), p.z.get(0)));
}
