use gevml_core::calculus::*;
use gevml_core::expr::VarSpace;
use gevml_core::quad::QuadSpec;
use gevml_core::symbol_core::SymbolSpec;
use gevml_core::{Error, C64};
use proptest::prelude::*;

fn vars() -> VarSpace {
    VarSpace::phase_space(1)
}

fn sym(src: &str, iv: (f64, f64)) -> SymbolSpec {
    SymbolSpec::parse(src, &vars(), 0.0, 2.0, iv).unwrap()
}

fn packet(h: f64, n: usize, l: f64, xi0: f64) -> GridFunction {
    GridFunction::from_fn(vec![(-l / 2.0, l / 2.0)], vec![n], h, |x| {
        C64::from_polar((-x[0] * x[0]).exp(), x[0] * xi0 / h)
    })
    .unwrap()
}

fn op(s: &SymbolSpec, h: f64, mode: ApplyMode) -> QuantizedOperator {
    QuantizedOperator::new(s.clone(), h, mode)
}

fn max_diff(a: &GridFunction, b: &GridFunction) -> f64 {
    a.sub(b).norm_sup()
}

#[test]
fn identity_and_multiplication() {
    let h = 0.05;
    let u = packet(h, 256, 16.0, 0.0);
    for mode in [ApplyMode::Fft, ApplyMode::DenseMatrix] {
        let v = apply_pdo(&op(&sym("1", (-1.0, 1.0)), h, mode), &u).unwrap();
        assert!(max_diff(&u, &v) < 1e-10);
        let w = apply_pdo(&op(&sym("x1", (-1.0, 1.0)), h, mode), &u).unwrap();
        let want = GridFunction::from_fn(u.bounds.clone(), u.n_points.clone(), h, |x| C64::new(x[0] * (-x[0] * x[0]).exp(), 0.0)).unwrap();
        assert!(max_diff(&w, &want) < 1e-10);
    }
}

#[test]
fn canonical_commutation() {
    let e = compose_symbols(&sym("t1", (-1.0, 1.0)), &sym("x1", (-1.0, 1.0)), 2, 0.1).unwrap();
    assert!(e.remainder.is_identically_zero());
    let want = sym("x1*t1 - 0.1*i", (-1.0, 1.0));
    for p in [[0.3, -0.2], [1.5, 2.0], [-0.7, 0.4]] {
        assert!((e.expansion.field.eval(&p) - want.field.eval(&p)).norm() < 1e-15);
    }
    let h = 0.05;
    let u = packet(h, 256, 16.0, 0.0);
    let t = op(&sym("t1", (-1.0, 1.0)), h, ApplyMode::Fft);
    let x = op(&sym("x1", (-1.0, 1.0)), h, ApplyMode::Fft);
    let comm = apply_pdo(&t, &apply_pdo(&x, &u).unwrap()).unwrap().sub(&apply_pdo(&x, &apply_pdo(&t, &u).unwrap()).unwrap());
    assert!(max_diff(&comm, &u.scale(C64::new(0.0, -h))) < 1e-8);
}

#[test]
fn polynomial_composition_terminates() {
    let h = 0.2;
    let e = compose_symbols(&sym("t1^2", (-1.0, 1.0)), &sym("x1^2", (-1.0, 1.0)), 3, h).unwrap();
    assert!(e.remainder.is_identically_zero());
    for p in [[0.3, -0.2], [1.5, 2.0]] {
        let (x, t) = (p[0], p[1]);
        let want = C64::new(x * x * t * t - 2.0 * h * h, -4.0 * h * x * t);
        assert!((e.expansion.field.eval(&p) - want).norm() < 1e-13);
    }
}

#[test]
fn frequency_symbol_on_wave_packet() {
    let h = 0.02;
    let xi0 = 0.8;
    let u = packet(h, 1024, 16.0, xi0);
    let s = sym("t1", (-1.0, 1.0));
    let fast = apply_pdo(&op(&s, h, ApplyMode::Fft), &u).unwrap();
    let dense = apply_pdo(&op(&s, h, ApplyMode::DenseMatrix), &u).unwrap();
    assert!(max_diff(&fast, &dense) < 1e-8);
    // centre of the envelope: hD(e^{ixξ0/h} g) = ξ0 u + (h/i) g'
    let mid = u.n_points[0] / 2;
    let ratio = dense.samples[mid] / u.samples[mid];
    assert!((ratio - xi0).norm() < 5.0 * h * 1e-6 + 1e-9, "{ratio}");
    let off = mid + 16;
    let ratio = dense.samples[off] / u.samples[off];
    assert!((ratio - xi0).norm() < 2.0 * h);
}

#[test]
fn fft_and_dense_agree_for_mixed_symbol() {
    let h = 0.05;
    let u = packet(h, 256, 16.0, 0.4);
    let s = sym("exp(i*x1)*bump(x1/3)*cos(t1) + x1*t1^2", (-3.0, 3.0));
    let a = apply_pdo(&op(&s, h, ApplyMode::Fft), &u).unwrap();
    let b = apply_pdo(&op(&s, h, ApplyMode::DenseMatrix), &u).unwrap();
    assert!(max_diff(&a, &b) < 1e-8);
}

#[test]
fn aliasing_is_reported() {
    let h = 0.05;
    let u = GridFunction::from_fn(vec![(-8.0, 8.0)], vec![64], h, |x| C64::new((-x[0] * x[0] * 40.0).exp(), 0.0)).unwrap();
    let r = apply_pdo(&op(&sym("1", (-1.0, 1.0)), h, ApplyMode::Fft), &u);
    assert!(matches!(r, Err(Error::AliasingRisk { .. })));
}

#[test]
fn mismatched_h_is_rejected() {
    let u = packet(0.1, 64, 16.0, 0.0);
    assert!(apply_pdo(&op(&sym("1", (-1.0, 1.0)), 0.2, ApplyMode::Fft), &u).is_err());
}

#[test]
fn grid_function_binary_round_trip() {
    let u = GridFunction::from_fn(vec![(-1.5, 2.0), (0.0, 3.0)], vec![8, 4], 0.125, |x| C64::new(x[0], x[1] * x[0])).unwrap();
    let bytes = u.to_bytes();
    assert_eq!(&bytes[..16], b"GEVREY-GRIDFN\0\0\0");
    let v = GridFunction::from_bytes(&bytes).unwrap();
    assert_eq!(u, v);
    assert!(GridFunction::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    assert!(GridFunction::new(vec![C64::new(0.0, 0.0); 3], vec![(0.0, 1.0)], vec![3], 0.1).is_err());
}

fn bump_pair() -> (SymbolSpec, SymbolSpec) {
    (sym("exp(i*t1)*bump(t1)", (-1.0, 1.0)), sym("exp(i*x1)*bump(x1)", (-1.0, 1.0)))
}

fn operator_remainder(big_n: usize, h: f64, mode: ApplyMode) -> f64 {
    let (q, a) = bump_pair();
    let u = packet(h, 1024, 16.0, 0.0);
    let lhs = apply_pdo(&op(&q, h, mode), &apply_pdo(&op(&a, h, mode), &u).unwrap()).unwrap();
    let e = compose_symbols(&q, &a, big_n, h).unwrap();
    let rhs = apply_pdo(&op(&e.expansion, h, ApplyMode::Fft), &u).unwrap();
    lhs.sub(&rhs).norm_l2() / u.norm_l2()
}

#[test]
fn bump_composition_operator_slopes() {
    let hs = [0.2, 0.1, 0.05, 0.025];
    for big_n in 1..=2 {
        let r = verify_remainder_order(|h| Ok(operator_remainder(big_n, h, ApplyMode::DenseMatrix)), big_n as f64, &hs).unwrap();
        assert!(r.pass && !r.identically_zero, "N={big_n}: {r:?}");
        assert!((r.slope - big_n as f64).abs() < 0.2, "N={big_n}: {}", r.slope);
    }
}

#[test]
fn symbol_level_remainder_has_order_two() {
    let (q, a) = bump_pair();
    let probes = vec![vec![0.1, -0.2], vec![-0.3, 0.25]];
    let quad = QuadSpec { initial_panels: 8, rel_tol: 1e-11, ..QuadSpec::default() };
    let hs = [0.2, 0.1, 0.05, 0.025];
    let r = verify_remainder_order(|h| remainder_magnitude(|h| compose_symbols(&q, &a, 2, h), h, &probes, &quad), 2.0, &hs).unwrap();
    assert!(r.pass && (r.slope - 2.0).abs() < 0.25, "{r:?}");
}

#[test]
fn composed_symbol_quadrature_leading_term() {
    // exact composed symbol of q(θ) and a(x) has leading term q·a
    let (q, a) = bump_pair();
    let p = [0.2, -0.1];
    let v = composed_symbol_quadrature(&q, &a, 0.01, &p, &QuadSpec { initial_panels: 16, ..QuadSpec::default() }).unwrap();
    let lead = q.field.eval(&p) * a.field.eval(&p);
    assert!((v - lead).norm() < 0.05 * lead.norm());
}

#[test]
fn j_t_examples() {
    let e = j_t_apply(&sym("x1*t1", (-1.0, 1.0)), 0.3, 2).unwrap();
    assert!(e.remainder.is_identically_zero());
    assert!((e.expansion.field.eval(&[0.5, 2.0]) - C64::new(1.0, -0.3)).norm() < 1e-15);
    let c = j_t_apply(&sym("2.5", (-1.0, 1.0)), -0.7, 3).unwrap();
    assert!(c.remainder.is_identically_zero());
    assert!((c.expansion.field.eval(&[0.1, 0.1]) - C64::new(2.5, 0.0)).norm() < 1e-15);
    assert!(j_t_apply(&sym("x1", (-1.0, 1.0)), 0.0, 1).is_err());
}

#[test]
fn j_t_first_order_slope() {
    let b = sym("sin(x1)*cos(t1)*bump(x1)*bump(t1)", (-1.0, 1.0));
    let probes = vec![vec![0.3, 0.2], vec![-0.4, 0.5], vec![0.1, -0.6]];
    let quad = QuadSpec { initial_panels: 8, ..QuadSpec::default() };
    let hs = [0.1, 0.05, 0.025, 0.0125];
    let r = verify_remainder_order(|h| remainder_magnitude(|t| j_t_apply(&b, t, 1), h, &probes, &quad), 1.0, &hs).unwrap();
    assert!(r.pass && (r.slope - 1.0).abs() < 0.2, "{r:?}");
}

#[test]
fn remainder_fitter_self_test() {
    let hs = [0.2, 0.1, 0.05, 0.025, 0.0125];
    let bump = (-1.0f64 / (1.0 - 0.3f64 * 0.3)).exp();
    let r = verify_remainder_order(|h| Ok(h.powf(1.5) * bump), 1.5, &hs).unwrap();
    assert!((r.slope - 1.5).abs() < 0.1 && r.pass);
    let z = verify_remainder_order(|_| Ok(0.0), 3.0, &hs).unwrap();
    assert!(z.identically_zero && z.pass);
    assert!(verify_remainder_order(|h| Ok(h), 1.0, &[0.2, 0.1, 0.05]).is_err());
    assert!(verify_remainder_order(|h| Ok(h), 1.0, &[0.2, 0.15, 0.1, 0.05]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn first_order_composition_is_product(x in -1.0f64..1.0, t in -1.0f64..1.0, h in 0.01f64..0.5) {
        let q = sym("cos(t1)*exp(x1/2) + t1^3", (-1.0, 1.0));
        let a = sym("sin(2*x1)*t1 + 1", (-1.0, 1.0));
        let e = compose_symbols(&q, &a, 1, h).unwrap();
        let p = [x, t];
        prop_assert!((e.expansion.field.eval(&p) - q.field.eval(&p) * a.field.eval(&p)).norm() < 1e-12);
    }

    #[test]
    fn composition_is_linear_in_a(x in -1.0f64..1.0, t in -1.0f64..1.0, h in 0.01f64..0.5, n in 1usize..4) {
        let q = sym("exp(i*t1)*cos(x1)", (-1.0, 1.0));
        let a = sym("x1^3*t1", (-1.0, 1.0));
        let b = sym("sin(x1)*exp(t1)", (-1.0, 1.0));
        let ab = sym("x1^3*t1 + sin(x1)*exp(t1)", (-1.0, 1.0));
        let p = [x, t];
        let lhs = compose_symbols(&q, &ab, n, h).unwrap().expansion.field.eval(&p);
        let rhs = compose_symbols(&q, &a, n, h).unwrap().expansion.field.eval(&p)
            + compose_symbols(&q, &b, n, h).unwrap().expansion.field.eval(&p);
        prop_assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn fft_and_dense_modes_agree(x0 in -2.0f64..2.0, xi0 in -0.5f64..0.5, c in -1.0f64..1.0) {
        let h = 0.1;
        let u = GridFunction::from_fn(vec![(-8.0, 8.0)], vec![128], h, |x| {
            let y = x[0] - x0;
            C64::from_polar((-y * y).exp(), x[0] * xi0 / h)
        }).unwrap();
        let s = SymbolSpec::parse(&format!("x1*t1 + {c}*cos(x1)*t1^2"), &vars(), 0.0, 2.0, (-1.0, 1.0)).unwrap();
        let a = apply_pdo(&op(&s, h, ApplyMode::Fft), &u).unwrap();
        let b = apply_pdo(&op(&s, h, ApplyMode::DenseMatrix), &u).unwrap();
        prop_assert!(max_diff(&a, &b) < 1e-8);
    }
}
