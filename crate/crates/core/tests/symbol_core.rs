use gevml_core::expr::VarSpace;
use gevml_core::fit::*;
use gevml_core::quad::{integrate_1d, QuadSpec};
use gevml_core::symbol_core::*;
use gevml_core::{Error, C64};
use proptest::prelude::*;
use std::f64::consts::E;

fn spec(src: &str, vars: &VarSpace, s: f64, iv: (f64, f64)) -> SymbolSpec {
    SymbolSpec::parse(src, vars, 0.0, s, iv).unwrap()
}

fn x1(src: &str, s: f64, iv: (f64, f64)) -> SymbolSpec {
    spec(src, &VarSpace::spatial(1), s, iv)
}

fn xt(src: &str, s: f64, iv: (f64, f64)) -> SymbolSpec {
    spec(src, &VarSpace::phase_space(1), s, iv)
}

fn fact(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

#[test]
fn quasinorm_of_plane_wave_is_e() {
    let a = x1("exp(i*x1)", 1.0, (-2.0, 2.0));
    let r = quasinorm(&a, 1.0, 1.0, 12, &SampleGrid::tensor(&a.domain_box, 9)).unwrap();
    assert!(r.value_lower <= E && E <= r.value_upper + 1e-14, "{r:?}");
    assert!(r.value_upper - r.value_lower <= r.tail_bound + 1e-15);
    assert!((r.value_upper - E).abs() < 1e-9);
}

#[test]
fn quasinorm_of_constant_is_one() {
    let a = xt("1", 1.0, (-1.0, 1.0));
    for t in [0.1, 1.0, 7.0] {
        let r = quasinorm(&a, t, 0.5, 12, &SampleGrid::tensor(&a.domain_box, 4)).unwrap();
        assert_eq!(r.value_lower, 1.0);
        assert_eq!(r.tail_bound, 0.0);
    }
}

#[test]
fn quasinorm_matches_long_series() {
    let a = xt("sin(x1)*cos(t1)", 2.0, (-1.5, 1.5));
    let grid = SampleGrid::tensor(&a.domain_box, 7);
    let t = 0.5;
    let r = quasinorm(&a, t, 1.0, 12, &grid).unwrap();
    // |∂^k sin| and |∂^k cos| alternate between |sin| and |cos|
    let d = |k: usize, v: f64, base_sin: bool| if (k % 2 == 0) == base_sin { v.sin().abs() } else { v.cos().abs() };
    let mut oracle: f64 = 0.0;
    for p in &grid.points {
        let mut sum = 0.0;
        for a_ in 0..=30 {
            for b in 0..=(30 - a_) {
                sum += t.powi((a_ + b) as i32) * d(a_, p[0], true) * d(b, p[1], false) / (fact(a_) * fact(b)).powi(2);
            }
        }
        oracle = oracle.max(sum);
    }
    assert!(r.value_lower <= oracle + 1e-14 && oracle <= r.value_upper + 1e-14, "{r:?} vs {oracle}");
}

#[test]
fn quasinorm_diverging_tail_is_reported() {
    let a = x1("1/(1 + x1^2)", 1.0, (-1.0, 1.0));
    let r = quasinorm(&a, 2.0, 1.0, 12, &SampleGrid::tensor(&a.domain_box, 5));
    assert!(matches!(r, Err(Error::NonConvergentTail { .. })));
}

#[test]
fn gevrey_constant_of_plane_wave_is_one() {
    let a = x1("exp(i*x1)", 1.0, (-3.0, 3.0));
    let (c, _) = estimate_gevrey_constant(&a, 12, &SampleGrid::tensor(&a.domain_box, 11));
    assert!((c - 1.0).abs() < 1e-12);
}

#[test]
fn gevrey_constant_of_rational_function() {
    let a = x1("1/(1 + x1^2)", 1.0, (-1.0, 1.0));
    let grid = SampleGrid::tensor(&a.domain_box, 41);
    let (c, _) = estimate_gevrey_constant(&a, 12, &grid);
    // ∂^k (1+x²)^{-1} = (-1)^k k! Im[(x - i)^{-k-1}]
    let mut want: f64 = 1.0;
    for k in 0..=12 {
        let mut dk: f64 = 0.0;
        for p in &grid.points {
            let z = C64::new(p[0], -1.0).powi(-(k as i32) - 1);
            dk = dk.max(z.im.abs());
        }
        want = want.max(dk.powf(1.0 / (k as f64 + 1.0)));
    }
    assert!((c - want).abs() < 1e-10 * want, "{c} vs {want}");
    // distance from [-1, 1] to the poles ±i is 1
    assert!(c <= 1.0 + 1e-12);
}

#[test]
fn bump_is_flagged_non_analytic() {
    let grid = SampleGrid::tensor(&[(-0.95, 0.95)], 39);
    let s2 = x1("bump(x1)", 2.0, (-0.95, 0.95));
    let s1 = x1("bump(x1)", 1.0, (-0.95, 0.95));
    let (c2, r2) = estimate_gevrey_constant(&s2, 10, &grid);
    let (_, r1) = estimate_gevrey_constant(&s1, 10, &grid);
    let (_, r1_short) = estimate_gevrey_constant(&s1, 6, &grid);
    assert!(c2.is_finite());
    assert!(r1 > r1_short && r1 > r2, "s=1 {r1_short} -> {r1}, s=2 {r2}");
}

#[test]
fn borel_examples() {
    let five = borel_resum_values(&[C64::new(5.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)], 0.3);
    assert_eq!(five.value, C64::new(5.0, 0.0));
    assert!(!five.immediate_divergence);

    let h = 0.1;
    let euler: Vec<C64> = (0..60).map(|j| C64::new((-1f64).powi(j as i32) * fact(j), 0.0)).collect();
    let r = borel_resum_values(&euler, h);
    let oracle = integrate_1d(|t| C64::new((-t).exp() / (1.0 + h * t), 0.0), 0.0, 60.0, &QuadSpec::default()).unwrap().value.re;
    assert!((oracle - 0.91563).abs() < 1e-5);
    assert!((r.value.re - oracle).abs() < 5e-4, "{} vs {oracle}", r.value.re);

    let terms: Vec<C64> = (0..80).map(|j| C64::new(fact(j) * 0.5f64.powi(j as i32), 0.0)).collect();
    let r = borel_resum_values(&terms, 0.05);
    let moduli: Vec<f64> = (0..80).map(|j| fact(j) * 0.025f64.powi(j as i32)).collect();
    let min = moduli.iter().cloned().fold(f64::INFINITY, f64::min);
    let argmin = moduli.iter().position(|&m| m <= min * (1.0 + 1e-12)).unwrap();
    assert_eq!(r.n_star, argmin + 1);

    let div = borel_resum_values(&[C64::new(1.0, 0.0), C64::new(20.0, 0.0)], 0.1);
    assert!(div.immediate_divergence && div.n_star == 1 && div.value == C64::new(1.0, 0.0));
}

#[test]
fn borel_resum_on_formal_sequence() {
    let specs: Vec<SymbolSpec> = (0..5).map(|j| x1(&format!("{}*x1^{j}", 1.0 / (j as f64 + 1.0)), 1.0, (-1.0, 1.0))).collect();
    let seq = FormalSymbolSeq::from_specs(specs, 2.0, 1.0);
    let r = borel_resum(&seq, 0.1, &[0.5]);
    let want: f64 = (0..5).map(|j| 0.5f64.powi(j) / (j as f64 + 1.0) * 0.1f64.powi(j)).sum();
    assert!((r.value.re - want).abs() < 1e-15 && r.n_star == 5);
}

fn power_sequence(s: f64, c: f64) -> FormalSymbolSeq {
    let specs: Vec<SymbolSpec> = (0..=8)
        .map(|j| x1(&format!("{}*x1^{j}", fact(j).powf(s) / fact(j)), s, (-1.0, 1.0)))
        .collect();
    FormalSymbolSeq::from_specs(specs, c, s)
}

/// Direct evaluation of both sides: sup |∂^k a_j| = j!^s / (j-k)! at |x| = 1.
fn power_sequence_worst(s: f64, c: f64, h: f64, max_order: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..=8usize {
        for k in 0..=max_order.min(j) {
            let lhs = fact(j).powf(s) / fact(j - k);
            let rhs = c.powi((1 + k + j) as i32) * fact(j).powf(s) * fact(k).powf(s) * h.powi(j as i32);
            worst = worst.max(lhs / rhs);
        }
    }
    worst
}

#[test]
fn formal_bounds_against_direct_evaluation() {
    let h = 0.5;
    for c in [1.0, 2.0] {
        let seq = power_sequence(1.0, c);
        let r = check_formal_bounds(&seq, h, 8, 5);
        let want = power_sequence_worst(1.0, c, h, 8);
        assert!((r.worst_ratio - want).abs() < 1e-9 * want, "C={c}: {} vs {want}", r.worst_ratio);
        assert_eq!(r.pass, want <= 1.0);
    }
    assert!(!check_formal_bounds(&power_sequence(1.0, 1.0), h, 8, 5).pass);
    assert!(check_formal_bounds(&power_sequence(1.0, 2.0), h, 8, 5).pass);
}

#[test]
fn formal_bounds_of_zero_sequence() {
    let seq = FormalSymbolSeq::from_specs((0..4).map(|_| x1("0", 1.0, (-1.0, 1.0))).collect(), 1.0, 1.0);
    let r = check_formal_bounds(&seq, 0.1, 6, 5);
    assert!(r.pass && r.worst_ratio == 0.0);
}

#[test]
fn algebraic_fit_recovers_slope() {
    let h = [0.2, 0.1, 0.05, 0.025, 0.0125];
    let r: Vec<f64> = h.iter().map(|v| 3.0 * v * v).collect();
    let f = fit_decay(&h, &r, FitKind::Algebraic).unwrap();
    assert!((f.params.slope.unwrap() - 2.0).abs() < 1e-12 && f.r2 > 0.999999);
}

#[test]
fn stretched_fit_recovers_rate_and_exponent() {
    let h: Vec<f64> = (0..6).map(|k| 0.2 / 2f64.powi(k)).collect();
    let r: Vec<f64> = h.iter().map(|v| (-2.0 * v.powf(-0.5)).exp()).collect();
    let f = fit_decay(&h, &r, FitKind::StretchedExp).unwrap();
    assert!((f.params.c.unwrap() - 2.0).abs() < 1e-3, "{f:?}");
    assert!((f.params.s.unwrap() - 2.0).abs() < 1e-3 && f.r2 > 0.9999);
}

#[test]
fn all_floor_residuals_are_flagged() {
    let h = [0.2, 0.1, 0.05, 0.025];
    assert!(matches!(fit_decay(&h, &[0.0; 4], FitKind::Algebraic), Err(Error::AllAtFloor)));
    let f = fit_decay_or_floor(&h, &[1e-17; 4], FitKind::Algebraic, 1.0).unwrap();
    assert!(f.all_at_floor);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quasinorm_is_submultiplicative(a in -2.0f64..2.0, b in -2.0f64..2.0, t in 0.1f64..0.9) {
        let f = xt(&format!("cos({a}*x1 + t1)"), 1.0, (-1.0, 1.0));
        let g = xt(&format!("exp(i*{b}*t1)*sin(x1)"), 1.0, (-1.0, 1.0));
        let fg = xt(&format!("cos({a}*x1 + t1)*exp(i*{b}*t1)*sin(x1)"), 1.0, (-1.0, 1.0));
        let grid = SampleGrid::tensor(&f.domain_box, 5);
        let nf = quasinorm(&f, t, 1.0, 12, &grid).unwrap();
        let ng = quasinorm(&g, t, 1.0, 12, &grid).unwrap();
        let nfg = quasinorm(&fg, t, 1.0, 12, &grid).unwrap();
        prop_assert!(nfg.value_lower <= nf.value_upper * ng.value_upper * (1.0 + 1e-12));
    }

    #[test]
    fn quasinorm_is_monotone_in_t(t in 0.05f64..1.0, dt in 0.0f64..1.0) {
        let a = xt("exp(-x1^2)*cos(2*t1)", 2.0, (-1.0, 1.0));
        let grid = SampleGrid::tensor(&a.domain_box, 5);
        let lo = quasinorm(&a, t, 1.0, 10, &grid).unwrap();
        let hi = quasinorm(&a, t + dt, 1.0, 10, &grid).unwrap();
        prop_assert!(lo.value_lower <= hi.value_lower);
    }

    #[test]
    fn gevrey_constant_is_translation_invariant(c in -3.0f64..3.0) {
        let a = x1("exp(-x1^2)*sin(3*x1)", 1.0, (-1.0, 1.0));
        let b = x1(&format!("exp(-(x1 - {c})^2)*sin(3*(x1 - {c}))"), 1.0, (-1.0 + c, 1.0 + c));
        let ga = SampleGrid::tensor(&a.domain_box, 9);
        let gb = SampleGrid::from_points(ga.points.iter().map(|p| vec![p[0] + c]).collect());
        let (ca, _) = estimate_gevrey_constant(&a, 10, &ga);
        let (cb, _) = estimate_gevrey_constant(&b, 10, &gb);
        prop_assert!((ca - cb).abs() < 1e-9 * ca);
    }

    #[test]
    fn finite_sequence_resums_exactly(a0 in 0.5f64..2.0, a1 in -1.0f64..1.0, a2 in -1.0f64..1.0, h in 0.01f64..0.1) {
        let v = [C64::new(a0, 0.0), C64::new(a1, 0.0), C64::new(a2, 0.0)];
        let r = borel_resum_values(&v, h);
        let exact = a0 + a1 * h + a2 * h * h;
        prop_assume!(a1.abs() * h < a0 && a2.abs() * h < a1.abs() + 1e-300);
        prop_assert!((r.value.re - exact).abs() < 1e-14);
    }
}
