use gevml_core::expr::VarSpace;
use gevml_core::geometry::*;
use gevml_core::symbol_core::{SampleGrid, ScalarField};
use gevml_core::Error;
use std::f64::consts::PI;

#[test]
fn free_translation() {
    let sys = HamiltonianSystem::unbounded("t1", 2).unwrap();
    let r = integrate_flow(&sys, &[0.1, 0.2, 0.3, 0.4], (0.0, 1.5), 1e-10).unwrap();
    let z = r.states.last().unwrap();
    let want = [1.6, 0.2, 0.3, 0.4];
    for (a, b) in z.iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn harmonic_oscillator_period_and_energy() {
    let sys = HamiltonianSystem::unbounded("(x1^2 + t1^2)/2", 1).unwrap();
    let r = integrate_flow(&sys, &[1.0, 0.0], (0.0, 2.0 * PI), 1e-10).unwrap();
    let z = r.states.last().unwrap();
    assert!((z[0] - 1.0).abs() < 1e-8 && z[1].abs() < 1e-8, "{z:?}");
    assert!(r.energy_drift < 1e-9, "{}", r.energy_drift);
    // dense output against the closed form
    let mid = r.trajectory.at(1.0);
    assert!((mid[0] - 1f64.cos()).abs() < 1e-8 && (mid[1] + 1f64.sin()).abs() < 1e-8);
}

#[test]
fn exponential_characteristics() {
    // p = ξ1 - x2 ξ2: ẋ2 = -x2, ξ̇2 = ξ2
    let sys = HamiltonianSystem::unbounded("t1 - x2*t2", 2).unwrap();
    let z0 = [0.0, 0.7, 0.2, -0.4];
    let r = integrate_flow(&sys, &z0, (0.0, 2.0), 1e-11).unwrap();
    for (t, z) in r.times.iter().zip(&r.states) {
        assert!((z[0] - t).abs() < 1e-10);
        assert!((z[1] - 0.7 * (-t).exp()).abs() < 1e-9);
        assert!((z[3] + 0.4 * t.exp()).abs() < 1e-8);
    }
}

#[test]
fn flow_is_reversible() {
    let sys = HamiltonianSystem::unbounded("t1^2/2 + cos(x1)", 1).unwrap();
    let z0 = [0.3, 0.8];
    let tol = 1e-10;
    let fwd = integrate_flow(&sys, &z0, (0.0, 3.0), tol).unwrap();
    let back = integrate_flow(&sys, fwd.states.last().unwrap(), (3.0, 0.0), tol).unwrap();
    let z = back.states.last().unwrap();
    assert!((z[0] - z0[0]).abs() < 10.0 * tol * 10.0 && (z[1] - z0[1]).abs() < 100.0 * tol, "{z:?}");
}

#[test]
fn leaving_the_domain_is_an_error() {
    let sys = HamiltonianSystem::parse("t1", 1, vec![(-1.0, 1.0), (-2.0, 2.0)]).unwrap();
    let r = integrate_flow(&sys, &[0.0, 0.0], (0.0, 5.0), 1e-8);
    assert!(matches!(r, Err(Error::LeftDomain { .. })));
}

#[test]
fn principal_type_examples() {
    let sys = HamiltonianSystem::unbounded("t1", 1).unwrap();
    let r = check_real_principal_type(&sys, &[0.0, 0.0], 1e-10);
    assert!(r.pass && r.dxi_nonzero);
    let sys = HamiltonianSystem::unbounded("t1^2 - x1", 1).unwrap();
    let r = check_real_principal_type(&sys, &[0.0, 0.0], 1e-10);
    assert!(r.pass && !r.dxi_nonzero);
    let sys = HamiltonianSystem::unbounded("x1^2 + t1^2", 1).unwrap();
    assert!(!check_real_principal_type(&sys, &[0.0, 0.0], 1e-10).pass);
}

fn s_field(src: &str) -> ScalarField {
    ScalarField::parse(src, &VarSpace::new(&["x1", "e1"])).unwrap()
}

#[test]
fn generating_phase_identity_and_shear() {
    let grid = SampleGrid::tensor(&[(-1.0, 1.0), (-1.0, 1.0)], 5);
    let r = generating_phase_check(&s_field("x1*e1"), 1, &grid).unwrap();
    assert!(r.pass);
    for s in &r.samples {
        assert_eq!(s.y_eta, s.x_eta);
        assert_eq!(s.x_xi, s.x_eta);
    }
    let r = generating_phase_check(&s_field("x1*e1 + e1^2/2"), 1, &grid).unwrap();
    assert!(r.pass);
    for s in &r.samples {
        let (y, eta) = (s.y_eta[0], s.y_eta[1]);
        assert!((s.x_xi[0] - (y - eta)).abs() < 1e-14 && (s.x_xi[1] - eta).abs() < 1e-14);
        assert!((s.jacobian_det - 1.0).abs() < 1e-13);
    }
}

#[test]
fn degenerate_generating_phase_on_axes() {
    let f = s_field("x1^2*e1^2");
    let grid = SampleGrid::tensor(&[(-1.0, 1.0), (-1.0, 1.0)], 5);
    assert!(matches!(generating_phase_check(&f, 1, &grid), Err(Error::DegenerateMixedHessian { .. })));
    for (z, det) in mixed_hessian_scan(&f, 1, &grid) {
        let on_axis = z[0] == 0.0 || z[1] == 0.0;
        assert_eq!(det.abs() <= 1e-8, on_axis);
    }
}
