use std::f64::consts::PI;

use gevml_core::calculus::GridFunction;
use gevml_core::egorov::coherent_state;
use gevml_core::expr::{bump_real, VarSpace};
use gevml_core::fbi::*;
use gevml_core::fit::fit_stretched_fixed;
use gevml_core::symbol_core::SymbolSpec;
use gevml_core::{Error, C64};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn packet(h: f64, x0: f64, xi0: f64) -> GridFunction {
    coherent_state(vec![(-4.0, 4.0)], vec![1024], h, &[x0], &[xi0]).unwrap()
}

fn within_one_cell(grid: &ZGrid, z: C64, want: C64) -> bool {
    (z.re - want.re).abs() <= grid.spacing(0) && (z.im - want.im).abs() <= grid.spacing(1)
}

#[test]
fn bargmann_normalization_and_geometry() {
    let s = FBISpec::bargmann(1);
    assert!((s.c_phi - 1.0 / (2f64.sqrt() * PI.powf(0.75))).abs() < 1e-15);
    let z = [C64::new(0.4, -1.3)];
    assert!((s.weight(&z) - 0.5 * 1.3 * 1.3).abs() < 1e-14);
    assert!((s.critical_x(&z)[0] - 0.4).abs() < 1e-14);
    let k = s.kappa(&[0.3], &[-0.7]).unwrap();
    assert!((k[0] - C64::new(0.3, 0.7)).norm() < 1e-14);
    let (x, xi) = phase_space_point(&k);
    assert!((x[0] - 0.3).abs() < 1e-14 && (xi[0] + 0.7).abs() < 1e-14);
    let s2 = FBISpec::bargmann(2);
    assert!((s2.c_phi - 1.0 / (2.0 * PI.powf(1.5))).abs() < 1e-15);
}

#[test]
fn phase_invariants_are_enforced() {
    let i = C64::new(0.0, 1.0);
    let m = |v: C64| DMatrix::from_element(1, 1, v);
    assert!(matches!(FBISpec::new(m(i), m(-i), m(C64::new(1.0, -0.5))), Err(Error::InvalidInput(_))));
    assert!(matches!(FBISpec::new(m(i), m(C64::new(0.0, 0.0)), m(i)), Err(Error::DegenerateMixedHessian { .. })));
    assert!(FBISpec::with_c(1, C64::new(-1.0, 0.0)).is_err());
}

#[test]
fn gaussian_transform_matches_closed_form() {
    let s = FBISpec::bargmann(1);
    let grid = ZGrid::new(&[((-1.0, 1.0), (-1.0, 1.0))], 21).unwrap();
    for h in [0.1, 0.05] {
        let u = GridFunction::from_fn(vec![(-4.0, 4.0)], vec![512], h, |x| C64::new((-x[0] * x[0] / (2.0 * h)).exp(), 0.0)).unwrap();
        let m = fbi_transform(&s, &u, &grid).unwrap();
        for i in 0..grid.len() {
            let z = grid.point(i)[0];
            let want = s.c_phi * h.powf(-0.75) * (PI * h).sqrt() * (-z * z / (4.0 * h) - z.im * z.im / (2.0 * h)).exp();
            assert!((m.weighted_t[i] - want).norm() < 1e-12 * want.norm().max(1e-3), "z={z}");
        }
        let p = &m.peaks[0];
        assert!(p.z[0].norm() < 1e-12);
        assert_eq!(m.peaks.len(), 1);
    }
}

#[test]
fn coherent_state_peaks_at_kappa_image() {
    let s = FBISpec::bargmann(1);
    let grid = ZGrid::new(&[((-1.5, 1.5), (-1.5, 1.5))], 128).unwrap();
    let want = s.kappa(&[0.3], &[-0.7]).unwrap()[0];
    for h in [0.05, 0.025] {
        let m = fbi_transform(&s, &packet(h, 0.3, -0.7), &grid).unwrap();
        assert!(within_one_cell(&grid, m.peaks[0].z[0], want), "{:?}", m.peaks[0]);
        assert!(within_one_cell(&grid, m.peaks[0].z[0], C64::new(0.3, 0.7)));
    }
}

#[test]
fn peak_follows_a_non_bargmann_phase() {
    let s = FBISpec::with_c(1, C64::new(1.0, 0.4)).unwrap();
    let grid = ZGrid::new(&[((-1.5, 1.5), (-1.5, 1.5))], 96).unwrap();
    let want = s.kappa(&[-0.4], &[0.5]).unwrap()[0];
    let m = fbi_transform(&s, &packet(0.025, -0.4, 0.5), &grid).unwrap();
    assert!(within_one_cell(&grid, m.peaks[0].z[0], want), "{:?} vs {want}", m.peaks[0]);
}

#[test]
fn two_packets_give_two_peaks() {
    let s = FBISpec::bargmann(1);
    let grid = ZGrid::new(&[((-1.5, 1.5), (-1.5, 1.5))], 64).unwrap();
    let h = 0.025;
    let u = packet(h, -0.6, 0.4).add(&packet(h, 0.5, -0.8));
    let m = fbi_transform(&s, &u, &grid).unwrap();
    assert_eq!(m.peaks.len(), 2, "{:?}", m.peaks);
    let mut found: Vec<C64> = m.peaks.iter().map(|p| p.z[0]).collect();
    found.sort_by(|a, b| a.re.total_cmp(&b.re));
    assert!(within_one_cell(&grid, found[0], C64::new(-0.6, -0.4)));
    assert!(within_one_cell(&grid, found[1], C64::new(0.5, 0.8)));
    assert!(m.peaks[0].height >= m.peaks[1].height);
}

#[test]
fn peak_is_equivariant() {
    let s = FBISpec::bargmann(1);
    let grid = ZGrid::new(&[((-1.6, 1.6), (-1.6, 1.6))], 81).unwrap();
    let h = 0.05;
    let base = fbi_transform(&s, &packet(h, 0.0, 0.0), &grid).unwrap().peaks[0].z[0];
    let moved = fbi_transform(&s, &packet(h, 0.8, 0.0), &grid).unwrap().peaks[0].z[0];
    let kicked = fbi_transform(&s, &packet(h, 0.0, 0.6), &grid).unwrap().peaks[0].z[0];
    assert!(((moved - base) - C64::new(0.8, 0.0)).norm() < 1e-12);
    assert!(((kicked - base) - C64::new(0.0, -0.6)).norm() < 1e-12);
}

#[test]
fn transform_is_isometric() {
    // c_φ makes T unitary onto the weighted space
    let s = FBISpec::bargmann(1);
    let grid = ZGrid::new(&[((-3.0, 3.0), (-3.0, 3.0))], 121).unwrap();
    for (h, x0, xi0) in [(0.1, 0.3, 0.5), (0.05, -0.5, -1.0)] {
        let u = packet(h, x0, xi0);
        let m = fbi_transform(&s, &u, &grid).unwrap();
        assert!((m.weighted_norm() - u.norm_l2()).abs() < 1e-6 * u.norm_l2());
    }
}

#[test]
fn log_weighted_modulus_is_quadratic() {
    let s = FBISpec::bargmann(1);
    let grid = ZGrid::new(&[((-1.0, 1.0), (-1.0, 1.0))], 25).unwrap();
    let h = 0.1;
    let m = fbi_transform(&s, &packet(h, 0.2, 0.3), &grid).unwrap();
    let top = m.max_weighted();
    let rows: Vec<(f64, f64, f64)> = (0..grid.len())
        .filter(|&i| m.weighted_abs(i) > 1e-8 * top)
        .map(|i| {
            let z = grid.point(i)[0];
            (z.re, z.im, m.weighted_abs(i).ln())
        })
        .collect();
    let a = DMatrix::from_fn(rows.len(), 6, |r, c| {
        let (x, y, _) = rows[r];
        [1.0, x, y, x * x, x * y, y * y][c]
    });
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.2));
    let coef = a.clone().svd(true, true).solve(&b, 1e-14).unwrap();
    let resid = (&a * &coef - &b).amax();
    assert!(resid < 1e-6, "{resid}");
    // completed square: -|z - (x0 - iξ0)|²/(4h)
    assert!((coef[3] + 1.0 / (4.0 * h)).abs() < 1e-6 && (coef[5] + 1.0 / (4.0 * h)).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]
    #[test]
    fn transform_is_linear(x1 in -1.0..1.0f64, x2 in -1.0..1.0f64, k1 in -1.0..1.0f64, k2 in -1.0..1.0f64,
                           ar in -2.0..2.0f64, ai in -2.0..2.0f64) {
        let s = FBISpec::bargmann(1);
        let grid = ZGrid::new(&[((-1.5, 1.5), (-1.5, 1.5))], 16).unwrap();
        let h = 0.05;
        let (u, v) = (packet(h, x1, k1), packet(h, x2, k2));
        let a = C64::new(ar, ai);
        let lhs = fbi_transform(&s, &u.scale(a).add(&v), &grid).unwrap();
        let tu = fbi_transform(&s, &u, &grid).unwrap();
        let tv = fbi_transform(&s, &v, &grid).unwrap();
        let mut err: f64 = 0.0;
        let mut size: f64 = 0.0;
        for i in 0..grid.len() {
            err = err.max((lhs.weighted_t[i] - (tu.weighted_t[i] * a + tv.weighted_t[i])).norm());
            size = size.max(lhs.weighted_t[i].norm());
        }
        prop_assert!(err <= 1e-9 * size);
    }
}

#[test]
fn quadrature_preconditions() {
    let s = FBISpec::bargmann(1);
    let grid = ZGrid::new(&[((-1.0, 1.0), (-1.0, 1.0))], 8).unwrap();
    let wide = GridFunction::from_fn(vec![(-1.0, 1.0)], vec![256], 0.1, |x| C64::new((-x[0] * x[0]).exp(), 0.0)).unwrap();
    assert!(matches!(fbi_transform(&s, &wide, &grid), Err(Error::QuadratureNotConverged { .. })));
    let coarse = packet(0.01, 0.0, 0.0);
    let far = ZGrid::new(&[((-1.0, 1.0), (-4.0, 4.0))], 8).unwrap();
    assert!(matches!(fbi_transform(&s, &coarse, &far), Err(Error::QuadratureNotConverged { .. })));
}

fn maps_for(u: impl Fn(f64) -> GridFunction, grid: &ZGrid, hs: &[f64]) -> Vec<WavefrontMap> {
    let s = FBISpec::bargmann(1);
    hs.iter().map(|&h| fbi_transform(&s, &u(h), grid).unwrap()).collect()
}

#[test]
fn coherent_state_wavefront_is_one_cluster() {
    let grid = ZGrid::new(&[((-1.5, 1.5), (-1.5, 1.5))], 31).unwrap();
    let maps = maps_for(|h| packet(h, 0.3, -0.7), &grid, &[0.05, 0.025, 0.0125]);
    let reg = wavefront_detect(&maps, 2.0, 0.5).unwrap();
    assert!(!reg.in_region.is_empty());
    let centre = C64::new(0.3, 0.7);
    let nearest = (0..grid.len()).min_by(|&a, &b| (grid.point(a)[0] - centre).norm().total_cmp(&(grid.point(b)[0] - centre).norm())).unwrap();
    assert!(reg.in_region.contains(&nearest));
    assert!(reg.in_region.iter().all(|&i| (grid.point(i)[0] - centre).norm() < 0.5));
}

#[test]
fn zero_has_empty_wavefront() {
    let grid = ZGrid::new(&[((-1.0, 1.0), (-1.0, 1.0))], 9).unwrap();
    let maps = maps_for(|h| GridFunction::from_fn(vec![(-4.0, 4.0)], vec![256], h, |_| C64::new(0.0, 0.0)).unwrap(), &grid, &[0.1, 0.05]);
    let reg = wavefront_detect(&maps, 2.0, 0.5).unwrap();
    assert!(reg.in_region.is_empty());
    assert!(maps[0].peaks.is_empty());
}

#[test]
fn gevrey_bump_wavefront_and_decay() {
    let bump = |h: f64| GridFunction::from_fn(vec![(-2.0, 2.0)], vec![4096], h, |x| C64::new(bump_real(x[0]), 0.0)).unwrap();
    let grid = ZGrid::new(&[((-1.5, 1.5), (-1.5, 1.5))], 31).unwrap();
    let maps = maps_for(bump, &grid, &[0.05, 0.025, 0.0125]);
    let reg = wavefront_detect(&maps, 2.0, 0.5).unwrap();
    assert!(!reg.in_region.is_empty());
    for &i in &reg.in_region {
        let z = grid.point(i)[0];
        assert!(z.re.abs() <= 1.0 + 1e-9 && z.im.abs() < 0.35, "{z}");
    }
    let on_axis = grid.flat_index(&[15, 15]);
    assert!(reg.in_region.contains(&on_axis));
    // over the endpoint, off the zero section: exp(-c h^{-1/2})
    let hs = [0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125];
    let corner = ZGrid::new(&[((0.99, 1.01), (0.99, 1.01))], 3).unwrap();
    let w: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let u = GridFunction::from_fn(vec![(-2.0, 2.0)], vec![8192], h, |x| C64::new(bump_real(x[0]), 0.0)).unwrap();
            fbi_transform(&FBISpec::bargmann(1), &u, &corner).unwrap().weighted_abs(4)
        })
        .collect();
    let (_, c, r2) = fit_stretched_fixed(&hs, &w, 2.0);
    assert!(c > 0.0 && r2 > 0.98, "c={c} r2={r2} {w:?}");
}

fn egorov_setup(p: &str) -> FbiEgorovSetup {
    FbiEgorovSetup {
        p: SymbolSpec::parse(p, &VarSpace::phase_space(1), 1.0, 1.0, (-10.0, 10.0)).unwrap(),
        spec: FBISpec::bargmann(1),
        y_box: vec![(-4.0, 4.0)],
        n_y: vec![512],
        z_grid: ZGrid::new(&[((-1.5, 1.5), (-1.0, 1.0))], 24).unwrap(),
        probes: vec![(vec![0.3], vec![0.5]), (vec![-0.2], vec![-0.3])],
    }
}

#[test]
fn flat_and_potential_models_intertwine() {
    let hs = [0.1, 0.05, 0.025, 0.0125];
    for p in ["t1", "t1 + x1", "t1 + x1^2 - 0.5*x1 + 2"] {
        let r = fbi_egorov_check(&egorov_setup(p), &hs).unwrap();
        assert!(r.at_floor && r.passes, "{p}: {:?}", r.report.residuals);
    }
}

#[test]
fn intertwining_with_a_general_c() {
    let model = FbiModel::from_symbol(&egorov_setup("t1 + x1").p).unwrap();
    let spec = FBISpec::with_c(1, C64::new(0.8, 0.3)).unwrap();
    let grid = ZGrid::new(&[((-1.0, 1.0), (-1.0, 1.0))], 16).unwrap();
    let r = fbi_egorov_residual(&model, &spec, &packet(0.05, 0.1, 0.2), &grid).unwrap();
    assert!(r < 1e-13, "{r}");
}

#[test]
fn residual_sees_a_missing_potential() {
    // T built for V = 0 against P = D + y1 leaves h T(y1 u): relative size ~ h |y0|
    let op = FbiModel::from_symbol(&egorov_setup("t1 + x1").p).unwrap();
    let flat = FbiModel::from_symbol(&egorov_setup("t1").p).unwrap();
    let grid = ZGrid::new(&[((-1.5, 1.5), (-1.0, 1.0))], 24).unwrap();
    let mut last = f64::INFINITY;
    for h in [0.1, 0.05, 0.025] {
        let r = intertwining_defect(&op, &flat, &FBISpec::bargmann(1), &packet(h, 0.5, 0.2), &grid).unwrap();
        assert!(r > 0.2 * h && r < 2.0 * h, "h={h}: {r}");
        assert!(r < last);
        last = r;
    }
}

#[test]
fn unsupported_models() {
    assert!(matches!(fbi_egorov_check(&egorov_setup("t1 + x1^3"), &[0.1]), Err(Error::ModelNotSupported(_))));
    assert!(matches!(fbi_egorov_check(&egorov_setup("t1^2"), &[0.1]), Err(Error::ModelNotSupported(_))));
    assert!(matches!(fbi_egorov_check(&egorov_setup("t1 + x1*t1"), &[0.1]), Err(Error::ModelNotSupported(_))));
    let model = FbiModel::from_symbol(&egorov_setup("t1").p).unwrap();
    let i = C64::new(0.0, 1.0);
    let m = |v: C64| DMatrix::from_element(1, 1, v);
    let skew = FBISpec::new(m(i * 2.0), m(-i), m(i)).unwrap();
    let grid = ZGrid::new(&[((-1.0, 1.0), (-1.0, 1.0))], 4).unwrap();
    assert!(matches!(fbi_egorov_residual(&model, &skew, &packet(0.1, 0.0, 0.0), &grid), Err(Error::ModelNotSupported(_))));
}
