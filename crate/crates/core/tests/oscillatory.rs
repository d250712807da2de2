use gevml_core::expr::VarSpace;
use gevml_core::fit::linear_regression;
use gevml_core::oscillatory::*;
use gevml_core::quad::QuadSpec;
use gevml_core::symbol_core::{ScalarField, SymbolSpec};
use gevml_core::tps::Tps;
use gevml_core::{Error, C64};
use nalgebra::DMatrix;
use std::f64::consts::PI;

fn vs(n: usize) -> VarSpace {
    VarSpace::spatial(n)
}

fn phase(src: &str, n: usize) -> Phase {
    Phase::real(ScalarField::parse(src, &vs(n)).unwrap(), n)
}

fn amp(src: &str, n: usize, iv: (f64, f64)) -> SymbolSpec {
    SymbolSpec::parse(src, &vs(n), 0.0, 2.0, iv).unwrap()
}

#[test]
fn gaussian_fresnel_closed_form() {
    let f = phase("x1^2/2", 1);
    let a = amp("exp(-x1^2)", 1, (-8.0, 8.0));
    let h = 0.1;
    let got = oscillatory_integral(&f, &a, h, &[], &QuadSpec::default()).unwrap().value;
    let want = (C64::new(PI, 0.0) / C64::new(1.0, -1.0 / (2.0 * h))).sqrt();
    assert!((got - want).norm() < 1e-8, "{got} vs {want}");
}

#[test]
fn zero_phase_gives_h_independent_value() {
    let f = phase("0", 1);
    let a = amp("bump(x1)", 1, (-1.0, 1.0));
    let v1 = oscillatory_integral(&f, &a, 0.3, &[], &QuadSpec::default()).unwrap().value;
    let v2 = oscillatory_integral(&f, &a, 0.01, &[], &QuadSpec::default()).unwrap().value;
    assert!((v1 - v2).norm() < 1e-13);
    assert!((v1.re - 0.4439938161680794).abs() < 1e-10);
}

#[test]
fn linear_phase_decays_faster_than_powers() {
    let f = phase("x1", 1);
    let a = amp("bump(x1)*exp(3*x1)", 1, (-1.0, 1.0));
    let v: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&h| oscillatory_integral(&f, &a, h, &[], &QuadSpec::default()).unwrap().value.norm())
        .collect();
    // local log-log slopes keep growing
    let s1 = (v[0] / v[1]).ln() / 2f64.ln();
    let s2 = (v[1] / v[2]).ln() / 2f64.ln();
    assert!(s2 > s1 && s1 > 0.0, "{v:?}");
}

#[test]
fn stationary_point_is_rejected_by_decay_fit() {
    let f = phase("x1^2/2", 1);
    let a = amp("bump(x1)", 1, (-1.0, 1.0));
    let r = nonstationary_decay_fit(&f, &a, 2.0, &[0.2, 0.1, 0.05, 0.025], &[], &QuadSpec::default());
    assert!(matches!(r, Err(Error::StationaryPointDetected { .. })));
}

fn dyadic(n: usize, h0: f64) -> Vec<f64> {
    (0..n).map(|k| h0 / 2f64.powi(k as i32)).collect()
}

#[test]
fn bump_rate_controls_gaussian_times_bump() {
    let f = phase("x1", 1);
    let hs = dyadic(6, 0.2);
    let a1 = amp("bump(x1)*exp(3*x1)", 1, (-1.0, 1.0));
    let a2 = amp("bump(x1)*exp(3*x1)*exp(-x1^2)", 1, (-1.0, 1.0));
    let q = QuadSpec::default();
    let r1 = nonstationary_decay_fit(&f, &a1, 2.0, &hs, &[], &q).unwrap();
    let r2 = nonstationary_decay_fit(&f, &a2, 2.0, &hs, &[], &q).unwrap();
    assert!(r1.c > 0.0 && r1.r2 > 0.99, "{r1:?}");
    assert!(r2.r2 > 0.99);
    assert!((r2.c / r1.c - 1.0).abs() < 0.2, "{} {}", r1.c, r2.c);
}

#[test]
fn quadratic_phase_leading_term() {
    let f = phase("x1^2/2", 1);
    let a = amp("bump(x1/6)", 1, (-6.0, 6.0));
    let h = 0.05;
    let e = stationary_phase_expand(&f, &a, &[], &[0.3], 0, h).unwrap();
    let lead = e.prefactor * e.terms[0];
    let want = C64::from_polar((2.0 * PI * h).sqrt(), PI / 4.0) * (-1.0f64).exp();
    assert!((lead - want).norm() < 1e-12);
}

#[test]
fn saddle_signature_cancels() {
    let f = phase("(x1^2 - x2^2)/2", 2);
    let a = amp("bump(x1/3)*bump(x2/3)", 2, (-3.0, 3.0));
    let h = 0.1;
    let e = stationary_phase_expand(&f, &a, &[], &[0.1, -0.1], 0, h).unwrap();
    assert_eq!(e.point.signature_sigma, 0);
    assert!((e.prefactor - C64::new(2.0 * PI * h, 0.0)).norm() < 1e-13);
}

/// Independent reference: L_j u = Σ_{ν-μ=j, 2ν>=3μ} i^{-j} 2^{-ν} ⟨H^{-1}D,D⟩^ν (g^μ u)(x0) / (μ! ν!),
/// with g the phase minus its quadratic Taylor part and D = -i∂.
fn hormander_terms(f: &Phase, a: &SymbolSpec, x0: &[f64], j_max: usize) -> Vec<C64> {
    let n = f.nx;
    let order = 6 * j_max + 2;
    let ft = f.taylor_x(x0, &[], order);
    let mut g = ft.clone();
    for k in 0..g.coeffs().len() {
        if g.table().degree(k) <= 2 {
            g.coeffs_mut()[k] = C64::new(0.0, 0.0);
        }
    }
    let hess = DMatrix::from_fn(n, n, |i, j| ft.diff(i).diff(j).value().re);
    let hinv = hess.try_inverse().unwrap();
    let u = a.field.taylor(x0, order);
    let mut out = Vec::new();
    for j in 0..=j_max {
        let mut s = C64::new(0.0, 0.0);
        for mu in 0..=2 * j {
            let nu = j + mu;
            if 2 * nu < 3 * mu {
                continue;
            }
            let mut t: Tps = u.clone();
            for _ in 0..mu {
                t = t.mul(&g);
            }
            for _ in 0..nu {
                // ⟨H^{-1}D,D⟩ = -⟨H^{-1}∂,∂⟩
                t = apply_quadratic_operator(&t, &hinv).scale(C64::new(-1.0, 0.0));
            }
            let fact = (1..=mu).product::<usize>() as f64 * (1..=nu).product::<usize>() as f64;
            s += C64::new(0.0, -1.0).powi(j as i32) * 0.5f64.powi(nu as i32) * t.value() / fact;
        }
        out.push(s);
    }
    out
}

#[test]
fn morse_route_agrees_with_independent_formula() {
    let f = phase("x1^2/2 + x1^3/6 + x1^4/24", 1);
    let a = amp("exp(-x1^2)*(1 + x1/3)", 1, (-1.0, 1.0));
    let h = 0.07;
    let e = stationary_phase_expand(&f, &a, &[], &[0.05], 3, h).unwrap();
    let l = hormander_terms(&f, &a, &[0.0], 3);
    for j in 0..=3 {
        let want = l[j] * h.powi(j as i32);
        assert!((e.terms[j] - want).norm() < 1e-12 * (1.0 + want.norm()), "j={j}: {} vs {}", e.terms[j], want);
    }
}

#[test]
fn morse_route_agrees_in_two_dimensions() {
    let f = phase("x1^2/2 - x2^2 + x1*x2/4 + x1^3/5 + x1*x2^2/7", 2);
    let a = amp("exp(-x1^2 - x2^2)*cos(x1 - x2/2)", 2, (-1.0, 1.0));
    let h = 0.05;
    let e = stationary_phase_expand(&f, &a, &[], &[0.01, 0.02], 2, h).unwrap();
    let x0 = e.point.chi_y.clone();
    assert!(x0.iter().all(|v| v.abs() < 1e-12));
    let l = hormander_terms(&f, &a, &x0, 2);
    for j in 0..=2 {
        let want = l[j] * h.powi(j as i32);
        assert!((e.terms[j] - want).norm() < 1e-11 * (1.0 + want.norm()), "j={j}: {} vs {}", e.terms[j], want);
    }
}

#[test]
fn cubic_expansion_error_slopes() {
    let f = phase("x1^2/2 + x1^3/6", 1);
    let a = amp("exp(-x1^2)*bump((x1 - 1.4)/2.6)", 1, (-1.2, 4.0));
    let hs = [0.1, 0.05, 0.025];
    let q = QuadSpec::default();
    let exact: Vec<C64> = hs.iter().map(|&h| oscillatory_integral(&f, &a, h, &[], &q).unwrap().value).collect();
    for j in 0..=2 {
        let errs: Vec<f64> = hs
            .iter()
            .zip(&exact)
            .map(|(&h, ex)| (ex - stationary_phase_expand(&f, &a, &[], &[0.1], j, h).unwrap().approx(j + 1)).norm())
            .collect();
        let lx: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
        let ly: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
        let (_, slope, _) = linear_regression(&lx, &ly);
        assert!(slope >= j as f64 + 1.25, "J={j} slope {slope} errs {errs:?}");
    }
}

#[test]
fn degenerate_hessian_is_reported() {
    let f = phase("x1^3", 1);
    let a = amp("bump(x1)", 1, (-1.0, 1.0));
    let r = stationary_point(&f, &[], &[0.0]);
    assert!(matches!(r, Err(Error::DegenerateHessian { .. })));
    let _ = a;
}
