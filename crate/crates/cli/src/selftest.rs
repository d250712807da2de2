//! Small closed-form examples run as named assertions.

use std::f64::consts::{E, PI};

use gevml_core::calculus::{apply_pdo, compose_symbols, j_t_apply, verify_remainder_order, ApplyMode, GridFunction, QuantizedOperator};
use gevml_core::egorov::{
    apply_fio, coherent_state, fio_adjoint_compose, microlocal_inverse, Conjugation, EgorovSetup, FIOSpec,
};
use gevml_core::expr::VarSpace;
use gevml_core::fbi::{fbi_egorov_check, fbi_transform, wavefront_detect, FBISpec, FbiEgorovSetup, FbiModel, ZGrid};
use gevml_core::fit::{fit_decay, FitKind};
use gevml_core::geometry::{check_real_principal_type, generating_phase_check, integrate_flow, mixed_hessian_scan, HamiltonianSystem};
use gevml_core::oscillatory::{nonstationary_decay_fit, oscillatory_integral, stationary_phase_expand, Phase};
use gevml_core::quad::QuadSpec;
use gevml_core::symbol_core::{
    borel_resum_values, check_formal_bounds, estimate_gevrey_constant, quasinorm, FormalSymbolSeq, SampleGrid, ScalarField,
    SymbolSpec,
};
use gevml_core::wkb::{
    solve_eikonal, transport_hierarchy, wkb_residual, AmplitudeLevels, ShiftModel, TransportGrid, WkbAmplitude, WkbProblem,
};
use gevml_core::{Error, C64};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::parse_config;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub runtime_ms: f64,
}

type Outcome = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn core<T>(r: gevml_core::Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| format!("unexpected error: {e}"))
}

fn ps(n: usize) -> VarSpace {
    VarSpace::phase_space(n)
}

fn sym(src: &str, vars: &VarSpace, order_m: f64, s: f64, iv: (f64, f64)) -> std::result::Result<SymbolSpec, String> {
    core(SymbolSpec::parse(src, vars, order_m, s, iv))
}

fn field(src: &str, vars: &VarSpace) -> std::result::Result<ScalarField, String> {
    core(ScalarField::parse(src, vars))
}

fn packet(h: f64, n: usize, l: f64, x0: f64, xi0: f64) -> std::result::Result<GridFunction, String> {
    core(coherent_state(vec![(-l / 2.0, l / 2.0)], vec![n], h, &[x0], &[xi0]))
}

fn fio(phase: &str, amp: &str, eta: (f64, f64)) -> std::result::Result<FIOSpec, String> {
    let v = ps(1);
    let a = core(SymbolSpec::new(field(amp, &v)?, 0.0, 2.0, vec![(-10.0, 10.0), eta]))?;
    core(FIOSpec::new(field(phase, &v)?, a, 0.0))
}

// symbol_core

fn quasinorm_plane_wave() -> Outcome {
    let a = sym("exp(i*x1)", &VarSpace::spatial(1), 0.0, 1.0, (-2.0, 2.0))?;
    let r = core(quasinorm(&a, 1.0, 1.0, 12, &SampleGrid::tensor(&a.domain_box, 9)))?;
    ensure(r.value_lower <= E + 1e-14 && E <= r.value_upper + 1e-14, || format!("[{}, {}] misses e", r.value_lower, r.value_upper))?;
    Ok(format!("[{:.12}, {:.12}]", r.value_lower, r.value_upper))
}

fn quasinorm_constant() -> Outcome {
    let a = sym("1", &ps(1), 0.0, 1.0, (-1.0, 1.0))?;
    let r = core(quasinorm(&a, 3.0, 0.5, 8, &SampleGrid::tensor(&a.domain_box, 4)))?;
    ensure(r.value_lower == 1.0 && r.value_upper == 1.0, || format!("{r:?}"))?;
    Ok("value 1".into())
}

fn gevrey_constant_plane_wave() -> Outcome {
    let a = sym("exp(i*x1)", &VarSpace::spatial(1), 0.0, 1.0, (-3.0, 3.0))?;
    let (c, _) = estimate_gevrey_constant(&a, 12, &SampleGrid::tensor(&a.domain_box, 11));
    ensure((c - 1.0).abs() < 1e-12, || format!("C = {c}"))?;
    Ok(format!("C = {c}"))
}

fn borel_single_term() -> Outcome {
    let z = C64::new(0.0, 0.0);
    for h in [0.3, 0.01] {
        let r = borel_resum_values(&[C64::new(5.0, 0.0), z, z, z], h);
        ensure(r.value == C64::new(5.0, 0.0), || format!("h={h}: {}", r.value))?;
    }
    Ok("value 5".into())
}

fn formal_bounds_zero() -> Outcome {
    let specs: std::result::Result<Vec<_>, _> = (0..4).map(|_| sym("0", &VarSpace::spatial(1), 0.0, 1.0, (-1.0, 1.0))).collect();
    let r = check_formal_bounds(&FormalSymbolSeq::from_specs(specs?, 1.0, 1.0), 0.1, 6, 5);
    ensure(r.pass && r.worst_ratio == 0.0, || format!("{r:?}"))?;
    Ok("worst ratio 0".into())
}

// oscillatory

fn zero_phase_integral() -> Outcome {
    let f = Phase::real(field("0", &VarSpace::spatial(1))?, 1);
    let a = sym("bump(x1)", &VarSpace::spatial(1), 0.0, 2.0, (-1.0, 1.0))?;
    let q = QuadSpec::default();
    let v1 = core(oscillatory_integral(&f, &a, 0.3, &[], &q))?.value;
    let v2 = core(oscillatory_integral(&f, &a, 0.01, &[], &q))?.value;
    ensure((v1 - v2).norm() < 1e-13, || format!("{v1} vs {v2}"))?;
    Ok(format!("{:.12}", v1.re))
}

fn stationary_point_detected() -> Outcome {
    let f = Phase::real(field("x1^2/2", &VarSpace::spatial(1))?, 1);
    let a = sym("bump(x1)", &VarSpace::spatial(1), 0.0, 2.0, (-1.0, 1.0))?;
    match nonstationary_decay_fit(&f, &a, 2.0, &[0.2, 0.1, 0.05, 0.025], &[], &QuadSpec::default()) {
        Err(Error::StationaryPointDetected { .. }) => Ok("StationaryPointDetected".into()),
        other => Err(format!("{other:?}")),
    }
}

fn fresnel_leading_term() -> Outcome {
    let f = Phase::real(field("x1^2/2", &VarSpace::spatial(1))?, 1);
    let a = sym("bump(x1/6)", &VarSpace::spatial(1), 0.0, 2.0, (-6.0, 6.0))?;
    let h = 0.05;
    let e = core(stationary_phase_expand(&f, &a, &[], &[0.3], 0, h))?;
    let lead = e.prefactor * e.terms[0];
    let a0 = (-1.0f64).exp();
    let want = C64::from_polar((2.0 * PI * h).sqrt(), PI / 4.0) * a0;
    ensure((lead - want).norm() < 1e-12, || format!("{lead} vs {want}"))?;
    let full = core(oscillatory_integral(&f, &a, h, &[], &QuadSpec::default()))?.value;
    let err = (full - lead).norm();
    ensure(err < 2.0 * h.powf(1.5), || format!("quadrature gap {err}"))?;
    Ok(format!("gap to quadrature {err:.2e}"))
}

fn saddle_signature() -> Outcome {
    let v = VarSpace::spatial(2);
    let f = Phase::real(field("(x1^2 - x2^2)/2", &v)?, 2);
    let a = sym("bump(x1/3)*bump(x2/3)", &v, 0.0, 2.0, (-3.0, 3.0))?;
    let h = 0.1;
    let e = core(stationary_phase_expand(&f, &a, &[], &[0.1, -0.1], 0, h))?;
    ensure(e.point.signature_sigma == 0, || format!("σ = {}", e.point.signature_sigma))?;
    ensure((e.prefactor - C64::new(2.0 * PI * h, 0.0)).norm() < 1e-13, || format!("prefactor {}", e.prefactor))?;
    let a0 = (-2.0f64).exp();
    ensure((e.prefactor * e.terms[0] - 2.0 * PI * h * a0).norm() < 1e-13, || format!("lead {}", e.terms[0]))?;
    Ok("σ = 0".into())
}

// calculus

fn bl_packet(h: f64) -> std::result::Result<GridFunction, String> {
    core(GridFunction::from_fn(vec![(-8.0, 8.0)], vec![256], h, |x| C64::new((-x[0] * x[0]).exp(), 0.0)))
}

fn identity_symbol() -> Outcome {
    let h = 0.05;
    let u = bl_packet(h)?;
    let op = QuantizedOperator::new(sym("1", &ps(1), 0.0, 2.0, (-1.0, 1.0))?, h, ApplyMode::Fft);
    let d = core(apply_pdo(&op, &u))?.sub(&u).norm_sup();
    ensure(d < 1e-10, || format!("{d}"))?;
    Ok(format!("{d:.1e}"))
}

fn multiplication_symbol() -> Outcome {
    let h = 0.05;
    let u = bl_packet(h)?;
    let op = QuantizedOperator::new(sym("x1", &ps(1), 0.0, 2.0, (-1.0, 1.0))?, h, ApplyMode::Fft);
    let want = core(GridFunction::from_fn(u.bounds.clone(), u.n_points.clone(), h, |x| C64::new(x[0] * (-x[0] * x[0]).exp(), 0.0)))?;
    let d = core(apply_pdo(&op, &u))?.sub(&want).norm_sup();
    ensure(d < 1e-10, || format!("{d}"))?;
    Ok(format!("{d:.1e}"))
}

fn canonical_commutation() -> Outcome {
    let v = ps(1);
    let h = 0.1;
    let e = core(compose_symbols(&sym("t1", &v, 1.0, 1.0, (-1.0, 1.0))?, &sym("x1", &v, 0.0, 1.0, (-1.0, 1.0))?, 2, h))?;
    ensure(e.remainder.is_identically_zero(), || "remainder not identically zero".into())?;
    for p in [[0.3, -0.2], [1.5, 2.0]] {
        let want = C64::new(p[0] * p[1], -h);
        ensure((e.expansion.field.eval(&p) - want).norm() < 1e-15, || format!("at {p:?}"))?;
    }
    Ok("x1 t1 - ih".into())
}

fn polynomial_termination() -> Outcome {
    let v = ps(1);
    let h = 0.2;
    let e = core(compose_symbols(&sym("t1^2", &v, 2.0, 1.0, (-1.0, 1.0))?, &sym("x1^2", &v, 0.0, 1.0, (-1.0, 1.0))?, 3, h))?;
    ensure(e.remainder.is_identically_zero(), || "remainder not identically zero".into())?;
    for p in [[0.3, -0.2], [1.5, 2.0]] {
        let (x, t) = (p[0], p[1]);
        let want = C64::new(x * x * t * t - 2.0 * h * h, -4.0 * h * x * t);
        ensure((e.expansion.field.eval(&p) - want).norm() < 1e-13, || format!("at {p:?}"))?;
    }
    Ok("x1²t1² - 4ih x1 t1 - 2h²".into())
}

fn jt_termination() -> Outcome {
    let v = ps(1);
    let t = 0.3;
    let e = core(j_t_apply(&sym("x1*t1", &v, 1.0, 1.0, (-1.0, 1.0))?, t, 2))?;
    ensure(e.remainder.is_identically_zero(), || "remainder not identically zero".into())?;
    let got = e.expansion.field.eval(&[0.5, 2.0]);
    ensure((got - C64::new(1.0, -t)).norm() < 1e-15, || format!("{got}"))?;
    Ok("x ξ + t/i".into())
}

fn jt_constant() -> Outcome {
    let b = sym("2.5", &ps(1), 0.0, 1.0, (-1.0, 1.0))?;
    for t in [-0.7, 0.2, 1.3] {
        let e = core(j_t_apply(&b, t, 3))?;
        ensure(e.remainder.is_identically_zero(), || format!("t={t}: remainder"))?;
        ensure((e.expansion.field.eval(&[0.1, 0.4]) - C64::new(2.5, 0.0)).norm() < 1e-15, || format!("t={t}"))?;
    }
    Ok("unchanged".into())
}

fn zero_remainder_flagged() -> Outcome {
    let r = core(verify_remainder_order(|_| Ok(0.0), 2.0, &[0.2, 0.1, 0.05, 0.025]))?;
    ensure(r.identically_zero && r.pass, || format!("{r:?}"))?;
    Ok("identically zero, pass".into())
}

// geometry

fn free_translation() -> Outcome {
    let sys = core(HamiltonianSystem::unbounded("t1", 2))?;
    let r = core(integrate_flow(&sys, &[0.1, 0.2, 0.3, 0.4], (0.0, 1.5), 1e-10))?;
    let z = r.states.last().ok_or("empty flow")?;
    let want = [1.6, 0.2, 0.3, 0.4];
    ensure(z.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-12), || format!("{z:?}"))?;
    Ok("x1 + t".into())
}

fn harmonic_oscillator() -> Outcome {
    let sys = core(HamiltonianSystem::unbounded("(x1^2 + t1^2)/2", 1))?;
    let r = core(integrate_flow(&sys, &[1.0, 0.0], (0.0, 2.0 * PI), 1e-10))?;
    let z = r.states.last().ok_or("empty flow")?;
    ensure((z[0] - 1.0).abs() < 1e-8 && z[1].abs() < 1e-8, || format!("{z:?}"))?;
    ensure(r.energy_drift < 1e-9, || format!("drift {}", r.energy_drift))?;
    Ok(format!("drift {:.1e}", r.energy_drift))
}

fn principal_type_free() -> Outcome {
    let r = check_real_principal_type(&core(HamiltonianSystem::unbounded("t1", 1))?, &[0.0, 0.0], 1e-10);
    ensure(r.pass && r.dxi_nonzero, || format!("{r:?}"))?;
    Ok("pass".into())
}

fn principal_type_fold() -> Outcome {
    let r = check_real_principal_type(&core(HamiltonianSystem::unbounded("t1^2 - x1", 1))?, &[0.0, 0.0], 1e-10);
    ensure(r.pass && !r.dxi_nonzero, || format!("{r:?}"))?;
    Ok("pass, ∂ξ p = 0".into())
}

fn principal_type_critical() -> Outcome {
    let r = check_real_principal_type(&core(HamiltonianSystem::unbounded("x1^2 + t1^2", 1))?, &[0.0, 0.0], 1e-10);
    ensure(!r.pass, || format!("{r:?}"))?;
    Ok("fail as expected".into())
}

fn generating_identity() -> Outcome {
    let grid = SampleGrid::tensor(&[(-1.0, 1.0), (-1.0, 1.0)], 5);
    let r = core(generating_phase_check(&field("x1*e1", &VarSpace::new(&["x1", "e1"]))?, 1, &grid))?;
    ensure(r.pass, || format!("{r:?}"))?;
    for s in &r.samples {
        ensure(s.y_eta == s.x_eta && s.x_xi == s.x_eta, || format!("{s:?}"))?;
        ensure(s.mixed_det == 1.0 && s.jacobian_det == 1.0, || format!("{s:?}"))?;
    }
    Ok("det 1, identity".into())
}

fn generating_degenerate() -> Outcome {
    let f = field("x1^2*e1^2", &VarSpace::new(&["x1", "e1"]))?;
    let grid = SampleGrid::tensor(&[(-1.0, 1.0), (-1.0, 1.0)], 5);
    ensure(matches!(generating_phase_check(&f, 1, &grid), Err(Error::DegenerateMixedHessian { .. })), || "not flagged".into())?;
    for (z, det) in mixed_hessian_scan(&f, 1, &grid) {
        let on_axis = z[0] == 0.0 || z[1] == 0.0;
        ensure((det.abs() <= 1e-8) == on_axis, || format!("at {z:?}: {det}"))?;
    }
    Ok("degenerate on axes".into())
}

// wkb

fn eikonal_free() -> Outcome {
    let eta = 0.7;
    let lambda = sym("-t2^2", &ps(2), 2.0, 1.0, (-4.0, 4.0))?;
    let sol = core(solve_eikonal(&lambda, &[eta], &[(-0.5, 0.5), (-1.0, 1.0)], 1e-9))?;
    let mut worst: f64 = 0.0;
    for (x1, xp) in [(0.3, -0.4), (-0.2, 0.8), (0.45, 0.1)] {
        let phi = core(sol.value(&[x1, xp]))?;
        ensure((phi - (xp * eta - x1 * eta * eta)).abs() < 1e-12, || format!("φ({x1}, {xp}) = {phi}"))?;
        worst = worst.max(core(sol.residual_at(&[x1, xp]))?);
    }
    ensure(worst < 1e-9, || format!("residual {worst}"))?;
    Ok(format!("residual {worst:.1e}"))
}

fn eikonal_dilation() -> Outcome {
    let eta = -0.4;
    let lambda = sym("x2*t2", &ps(2), 1.0, 1.0, (-4.0, 4.0))?;
    let sol = core(solve_eikonal(&lambda, &[eta], &[(-0.5, 0.5), (-1.0, 1.0)], 1e-8))?;
    let mut worst: f64 = 0.0;
    for (x1, xp) in [(0.3, -0.4), (-0.2, 0.8), (0.45, 0.1)] {
        let phi = core(sol.value(&[x1, xp]))?;
        ensure((phi - xp * eta * f64::exp(x1)).abs() < 1e-10, || format!("φ({x1}, {xp}) = {phi}"))?;
        worst = worst.max(core(sol.residual_at(&[x1, xp]))?);
    }
    ensure(worst < 1e-8, || format!("residual {worst}"))?;
    Ok(format!("residual {worst:.1e}"))
}

fn tgrid() -> TransportGrid {
    TransportGrid { x1: (-0.5, 1.0), m: 32, xp: (-PI, PI), n: 32 }
}

fn transport_zero_q() -> Outcome {
    let q = sym("0", &ps(2), 0.0, 2.0, (-4.0, 4.0))?;
    let a0 = sym("2 + cos(x2)", &VarSpace::spatial(2), 0.0, 2.0, (-4.0, 4.0))?;
    let th = core(transport_hierarchy(&q, &a0, 3, 0.1, &[0.0, 0.5], &tgrid()))?;
    let xp = tgrid().xp_nodes();
    for row in &th.levels[0] {
        for (v, &y) in row.iter().zip(&xp) {
            ensure((v - C64::new(2.0 + y.cos(), 0.0)).norm() < 1e-13, || format!("a0 = {v} at x'={y}"))?;
        }
    }
    ensure(th.levels[1..].iter().flatten().flatten().all(|v| v.norm() == 0.0), || "nonzero correction".into())?;
    Ok("a0 constant in x1, a_j = 0".into())
}

fn transport_constant_potential() -> Outcome {
    let (h, c) = (0.05, 1.3);
    let q = sym(&format!("{}", h * c), &ps(2), -1.0, 2.0, (-4.0, 4.0))?;
    let a0 = sym("1", &VarSpace::spatial(2), 0.0, 2.0, (-4.0, 4.0))?;
    let th = core(transport_hierarchy(&q, &a0, 2, h, &[0.0, 0.0], &tgrid()))?;
    for (row, &t) in th.levels[0].iter().zip(&tgrid().x1_nodes()) {
        for v in row {
            ensure((v - C64::from_polar(1.0, -c * t)).norm() < 1e-12, || format!("{v} at x1={t}"))?;
            ensure((v.norm() - 1.0).abs() < 1e-12, || format!("|a0| = {}", v.norm()))?;
        }
    }
    Ok("a0 = e^{-ic x1}".into())
}

fn wkb_exact_annihilation() -> Outcome {
    let eta = 0.4;
    let model = core(ShiftModel::new(&sym("0", &ps(2), 0.0, 2.0, (-4.0, 4.0))?))?;
    let eikonal = core(solve_eikonal(&core(model.lambda())?, &[eta], &[(-0.1, 0.6), (-PI, PI)], 1e-8))?;
    let amplitude = core(WkbAmplitude::new(&model, eta, &field("1", &VarSpace::spatial(2))?))?;
    let p = WkbProblem { model, eikonal, amplitude, xp_box: (-PI, PI), n_xp: 256, probes_x1: vec![0.25, 0.5], max_levels: 4 };
    let sw = core(wkb_residual(&p, AmplitudeLevels::Truncated(0), &[0.2, 0.1, 0.05, 0.025]))?;
    let worst = sw.report.residuals.iter().cloned().fold(0.0, f64::max);
    ensure(worst < 1e-12, || format!("{:?}", sw.report.residuals))?;
    Ok(format!("max residual {worst:.1e}"))
}

// egorov

fn fio_identity() -> Outcome {
    let u = packet(0.05, 256, 16.0, 0.4, 0.7)?;
    let v = core(apply_fio(&fio("x1*t1", "1", (-10.0, 10.0))?, &u))?;
    let d = v.sub(&u).norm_sup();
    ensure(d < 1e-12 * u.norm_sup(), || format!("{d}"))?;
    Ok(format!("{d:.1e}"))
}

fn fio_shift() -> Outcome {
    let c = 0.75;
    let u = core(GridFunction::from_fn(vec![(-8.0, 8.0)], vec![256], 0.05, |x| C64::new((-x[0] * x[0] / 0.5).exp(), 0.0)))?;
    let v = core(apply_fio(&fio(&format!("(x1 + {c})*t1"), "1", (-10.0, 10.0))?, &u))?;
    let mut worst: f64 = 0.0;
    for (x, got) in u.axis(0).iter().zip(&v.samples) {
        worst = worst.max((got - C64::new((-(x + c) * (x + c) / 0.5).exp(), 0.0)).norm());
    }
    ensure(worst < 1e-12, || format!("{worst}"))?;
    Ok(format!("{worst:.1e}"))
}

fn fio_gram_identity() -> Outcome {
    let h = 0.05;
    let (n, l) = (128, 8.0);
    let band = PI * h * n as f64 / l;
    let u = packet(h, n, l, 0.0, 0.3)?;
    let r = core(fio_adjoint_compose(&fio("x1*t1", "1", (-band, band))?, &u, l / 4.0))?;
    let d = r.ffstar.sub(&u).norm_sup();
    ensure(d < 1e-12, || format!("FF* - I = {d}"))?;
    ensure(r.k2_estimate < 1e-6 * u.norm_l2(), || format!("K2 {}", r.k2_estimate))?;
    Ok(format!("K2 {:.1e}", r.k2_estimate))
}

fn inverse_of_identity() -> Outcome {
    let u = packet(0.05, 256, 16.0, 0.2, 0.5)?;
    let f = fio("x1*t1", "1", (-10.0, 10.0))?;
    for n in [1, 2, 4] {
        let g = core(microlocal_inverse(&f, (0.2, 0.5), n))?;
        let d = core(g.apply(&u))?.sub(&u).norm_sup();
        ensure(d < 1e-12, || format!("N={n}: {d}"))?;
    }
    Ok("identity".into())
}

fn inverse_ellipticity() -> Outcome {
    match microlocal_inverse(&fio("x1*t1", "x1", (-10.0, 10.0))?, (0.0, 0.5), 2) {
        Err(Error::EllipticityLost { .. }) => Ok("EllipticityLost".into()),
        other => Err(format!("{:?}", other.map(|_| ()))),
    }
}

fn conjugation_pure_evolution() -> Outcome {
    let v2 = ps(2);
    let s = EgorovSetup {
        q: sym("0", &v2, 0.0, 1.0, (-30.0, 30.0))?,
        a0_init: field("1 + 0.5*sin(0.7853981633974483*x2)", &VarSpace::spatial(2))?,
        x1_box: (-3.0, 3.0),
        n1: 64,
        xp_box: (-4.0, 4.0),
        n_xp: 128,
        x0: [0.0, 0.0],
        xi0: [0.0, 0.25],
        levels: 1,
        neumann_terms: None,
    };
    let mut worst: f64 = 0.0;
    for h in [0.1, 0.05] {
        let u = core(coherent_state(vec![s.x1_box, s.xp_box], vec![s.n1, s.n_xp], h, &s.x0, &s.xi0))?;
        worst = worst.max(core(core(Conjugation::new(&s, h))?.residual(&u))?);
    }
    ensure(worst < 1e-12, || format!("{worst}"))?;
    Ok(format!("R {worst:.1e}"))
}

// fbi

fn fbi_zero_input() -> Outcome {
    let grid = core(ZGrid::new(&[((-1.0, 1.0), (-1.0, 1.0))], 9))?;
    let spec = FBISpec::bargmann(1);
    let maps: std::result::Result<Vec<_>, String> = [0.1, 0.05]
        .iter()
        .map(|&h| {
            let u = core(GridFunction::from_fn(vec![(-4.0, 4.0)], vec![256], h, |_| C64::new(0.0, 0.0)))?;
            core(fbi_transform(&spec, &u, &grid))
        })
        .collect();
    let reg = core(wavefront_detect(&maps?, 2.0, 0.5))?;
    ensure(reg.in_region.is_empty(), || format!("{} cells", reg.in_region.len()))?;
    Ok("empty".into())
}

fn fbi_egorov_setup(p: &str) -> std::result::Result<FbiEgorovSetup, String> {
    Ok(FbiEgorovSetup {
        p: sym(p, &ps(1), 1.0, 1.0, (-10.0, 10.0))?,
        spec: FBISpec::bargmann(1),
        y_box: vec![(-4.0, 4.0)],
        n_y: vec![256],
        z_grid: core(ZGrid::new(&[((-1.5, 1.5), (-1.0, 1.0))], 12))?,
        probes: vec![(vec![0.3], vec![0.5])],
    })
}

fn fbi_flat_model() -> Outcome {
    let r = core(fbi_egorov_check(&fbi_egorov_setup("t1")?, &[0.2, 0.1, 0.05, 0.025]))?;
    ensure(r.at_floor, || format!("{:?}", r.report.residuals))?;
    let worst = r.report.residuals.iter().cloned().fold(0.0, f64::max);
    Ok(format!("max residual {worst:.1e}"))
}

fn fbi_cubic_rejected() -> Outcome {
    let p = sym("t1 + x1^3", &ps(1), 1.0, 1.0, (-10.0, 10.0))?;
    match FbiModel::from_symbol(&p) {
        Err(Error::ModelNotSupported(_)) => Ok("ModelNotSupported".into()),
        other => Err(format!("{:?}", other.map(|_| ()))),
    }
}

// fit

fn dyadic(n: usize) -> Vec<f64> {
    (0..n).map(|k| 0.2 / 2f64.powi(k as i32)).collect()
}

fn fit_algebraic_synthetic() -> Outcome {
    let h = dyadic(5);
    let r: Vec<f64> = h.iter().map(|h| 3.0 * h * h).collect();
    let f = core(fit_decay(&h, &r, FitKind::Algebraic))?;
    let slope = f.params.slope.ok_or("no slope")?;
    ensure((slope - 2.0).abs() < 1e-6 && (f.r2 - 1.0).abs() < 1e-12, || format!("{f:?}"))?;
    Ok(format!("slope {slope:.6}"))
}

fn fit_stretched_synthetic() -> Outcome {
    let h = dyadic(6);
    let r: Vec<f64> = h.iter().map(|h| (-2.0 * h.powf(-0.5)).exp()).collect();
    let f = core(fit_decay(&h, &r, FitKind::StretchedExp))?;
    let (c, s) = (f.params.c.ok_or("no c")?, f.params.s.ok_or("no s")?);
    ensure(f.kind == FitKind::StretchedExp && (c - 2.0).abs() < 1e-3 && (s - 2.0).abs() < 1e-3 && f.r2 > 0.9999, || format!("{f:?}"))?;
    Ok(format!("c {c:.4}, s {s:.4}"))
}

// config

fn config_negative_h() -> Outcome {
    match parse_config("[sweep]\nh_list = [0.2, -0.1, 0.05, 0.025]\nresiduals = [1, 1, 1, 1]\nkind = \"algebraic\"\n") {
        Err(e) if e.field.starts_with("sweep.h_list") => Ok(e.to_string()),
        other => Err(format!("{other:?}")),
    }
}

fn config_unknown_variable() -> Outcome {
    match parse_config("[compose]\nq = \"t1*y7\"\n") {
        Err(e) if e.message.contains("y7") => Ok(e.to_string()),
        other => Err(format!("{other:?}")),
    }
}

/// Every check, in a fixed order.
pub fn checks() -> Vec<(&'static str, fn() -> Outcome)> {
    vec![
        ("quasinorm_plane_wave_is_e", quasinorm_plane_wave as fn() -> Outcome),
        ("quasinorm_constant_is_one", quasinorm_constant),
        ("gevrey_constant_plane_wave_is_one", gevrey_constant_plane_wave),
        ("borel_single_term", borel_single_term),
        ("formal_bounds_zero_sequence", formal_bounds_zero),
        ("zero_phase_integral_h_independent", zero_phase_integral),
        ("stationary_point_detected", stationary_point_detected),
        ("fresnel_leading_term", fresnel_leading_term),
        ("saddle_signature_cancels", saddle_signature),
        ("identity_symbol", identity_symbol),
        ("multiplication_symbol", multiplication_symbol),
        ("canonical_commutation", canonical_commutation),
        ("polynomial_composition_terminates", polynomial_termination),
        ("jt_terminates_on_x_xi", jt_termination),
        ("jt_fixes_constants", jt_constant),
        ("zero_remainder_flagged", zero_remainder_flagged),
        ("free_translation_flow", free_translation),
        ("harmonic_oscillator_flow", harmonic_oscillator),
        ("principal_type_free", principal_type_free),
        ("principal_type_fold", principal_type_fold),
        ("principal_type_critical_point", principal_type_critical),
        ("generating_phase_identity", generating_identity),
        ("generating_phase_degenerate_on_axes", generating_degenerate),
        ("eikonal_free_model", eikonal_free),
        ("eikonal_dilation_model", eikonal_dilation),
        ("transport_zero_potential", transport_zero_q),
        ("transport_constant_potential_unitary", transport_constant_potential),
        ("wkb_exact_annihilation", wkb_exact_annihilation),
        ("fio_identity_phase", fio_identity),
        ("fio_shift_phase", fio_shift),
        ("fio_gram_identity", fio_gram_identity),
        ("microlocal_inverse_of_identity", inverse_of_identity),
        ("microlocal_inverse_ellipticity", inverse_ellipticity),
        ("conjugation_pure_evolution", conjugation_pure_evolution),
        ("fbi_zero_input_empty_region", fbi_zero_input),
        ("fbi_flat_model_at_floor", fbi_flat_model),
        ("fbi_cubic_potential_rejected", fbi_cubic_rejected),
        ("fit_algebraic_synthetic", fit_algebraic_synthetic),
        ("fit_stretched_synthetic", fit_stretched_synthetic),
        ("config_negative_h", config_negative_h),
        ("config_unknown_variable", config_unknown_variable),
    ]
}

pub fn run() -> Vec<CheckOutcome> {
    checks()
        .into_par_iter()
        .map(|(name, f)| {
            let t0 = std::time::Instant::now();
            let r = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
            let runtime_ms = t0.elapsed().as_secs_f64() * 1e3;
            match r {
                Ok(detail) => CheckOutcome { name, passed: true, detail, runtime_ms },
                Err(detail) => CheckOutcome { name, passed: false, detail, runtime_ms },
            }
        })
        .collect()
}
