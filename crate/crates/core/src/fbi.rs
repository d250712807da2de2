//! Quadratic-phase FBI transforms, phase-space weights and wavefront detection.
//!
//! Points of `ℂⁿ` are read as phase-space points through `x = Re z`, `ξ = -Im z`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{fftn, ifftn, theta_of, GridFunction};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fit::{fit_decay_or_floor, fit_stretched_fixed, FitKind, HSweepReport};
use crate::quad::gauss_legendre;
use crate::symbol_core::SymbolSpec;

/// Samples of `u` at the box edge must be below this fraction of `sup |u|`.
pub const EDGE_TOL: f64 = 1e-10;
/// Peaks lower than this fraction of the global maximum are dropped.
pub const PEAK_REL: f64 = 1e-3;
/// Weighted moduli below this fraction of the map maximum are treated as round-off.
pub const MAP_FLOOR: f64 = 1e-13;

/// `φ(z, x) = ½ zᵀA_zz z + zᵀA_zx x + ½ xᵀA_xx x` with its normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct FBISpec {
    pub a_zz: DMatrix<C64>,
    pub a_zx: DMatrix<C64>,
    pub a_xx: DMatrix<C64>,
    pub c_phi: f64,
    im_xx_inv: DMatrix<f64>,
}

impl FBISpec {
    pub fn new(a_zz: DMatrix<C64>, a_zx: DMatrix<C64>, a_xx: DMatrix<C64>) -> Result<Self> {
        let n = a_xx.nrows();
        for m in [&a_zz, &a_zx, &a_xx] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidInput("phase matrices must be square of one size".into()));
            }
        }
        if n == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        let sym = |m: &DMatrix<C64>| (m - m.transpose()).iter().all(|c| c.norm() < 1e-12);
        if !sym(&a_zz) || !sym(&a_xx) {
            return Err(Error::InvalidInput("A_zz and A_xx must be symmetric".into()));
        }
        let im_xx = a_xx.map(|c| c.im);
        let chol = im_xx
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("Im ∂²φ/∂x² must be positive definite".into()))?;
        let det_zx = a_zx.determinant().norm();
        if det_zx < 1e-12 {
            return Err(Error::DegenerateMixedHessian { det: det_zx });
        }
        let det_im = chol.determinant();
        let nf = n as f64;
        let c_phi = det_zx / (2f64.powf(nf / 2.0) * std::f64::consts::PI.powf(0.75 * nf) * det_im.powf(0.25));
        Ok(Self { a_zz, a_zx, a_xx, c_phi, im_xx_inv: chol.inverse() })
    }

    /// `φ₀ = (i/2)(z - x)²` in `n` variables.
    pub fn bargmann(n: usize) -> Self {
        let i = C64::new(0.0, 1.0);
        let id = DMatrix::<C64>::identity(n, n);
        Self::new(id.map(|c| c * i), id.map(|c| -c * i), id.map(|c| c * i)).expect("Bargmann phase is admissible")
    }

    /// `(i/2)(z' - x')² + iC(z1 - x1)²`; `C = 1/2` is the Bargmann phase.
    pub fn with_c(n: usize, c: C64) -> Result<Self> {
        if !(c.re > 0.0) {
            return Err(Error::InvalidInput("Re C must be positive".into()));
        }
        let i = C64::new(0.0, 1.0);
        let mut d = DMatrix::<C64>::identity(n, n).map(|v| v * i);
        d[(0, 0)] = 2.0 * i * c;
        Self::new(d.clone(), -d.clone(), d)
    }

    pub fn dim(&self) -> usize {
        self.a_xx.nrows()
    }

    pub fn phase(&self, z: &[C64], x: &[f64]) -> C64 {
        let z = DVector::from_column_slice(z);
        let x = DVector::from_iterator(x.len(), x.iter().map(|&v| C64::new(v, 0.0)));
        let q = (z.transpose() * &self.a_zz * &z)[0] * 0.5
            + (z.transpose() * &self.a_zx * &x)[0]
            + (x.transpose() * &self.a_xx * &x)[0] * 0.5;
        q
    }

    /// `∂_z φ(z, x)`.
    pub fn phase_dz(&self, z: &[C64], x: &[f64]) -> Vec<C64> {
        let z = DVector::from_column_slice(z);
        let x = DVector::from_iterator(x.len(), x.iter().map(|&v| C64::new(v, 0.0)));
        (&self.a_zz * z + &self.a_zx * x).iter().copied().collect()
    }

    /// The real `x` maximizing `-Im φ(z, x)`: the base point of `Γ` over `z`.
    pub fn critical_x(&self, z: &[C64]) -> Vec<f64> {
        let b = self.linear_im(z);
        (-(&self.im_xx_inv * b)).iter().copied().collect()
    }

    /// `Φ(z) = max_{x ∈ ℝⁿ} -Im φ(z, x)`.
    pub fn weight(&self, z: &[C64]) -> f64 {
        let zv = DVector::from_column_slice(z);
        let b = self.linear_im(z);
        -(zv.transpose() * &self.a_zz * &zv)[0].im * 0.5 + 0.5 * b.dot(&(&self.im_xx_inv * &b))
    }

    fn linear_im(&self, z: &[C64]) -> DVector<f64> {
        let zv = DVector::from_column_slice(z);
        (self.a_zx.transpose() * zv).map(|c| c.im)
    }

    /// First component of `κ_φ(x, ξ)`: the `z` with `-∂_x φ(z, x) = ξ`.
    pub fn kappa(&self, x: &[f64], xi: &[f64]) -> Result<Vec<C64>> {
        let n = self.dim();
        let xv = DVector::from_iterator(n, x.iter().map(|&v| C64::new(v, 0.0)));
        let rhs = -(DVector::from_iterator(n, xi.iter().map(|&v| C64::new(v, 0.0))) + &self.a_xx * xv);
        let z = self
            .a_zx
            .transpose()
            .lu()
            .solve(&rhs)
            .ok_or(Error::DegenerateMixedHessian { det: 0.0 })?;
        Ok(z.iter().copied().collect())
    }
}

/// Phase-space point `(Re z, -Im z)`.
pub fn phase_space_point(z: &[C64]) -> (Vec<f64>, Vec<f64>) {
    (z.iter().map(|c| c.re).collect(), z.iter().map(|c| -c.im).collect())
}

/// Closed tensor grid over `ℂⁿ` with axes ordered `Re z1, Im z1, Re z2, …`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZGrid {
    pub axes: Vec<(f64, f64, usize)>,
}

impl ZGrid {
    /// One `(re, im)` pair of ranges per complex dimension, `n` points per axis.
    pub fn new(boxes: &[((f64, f64), (f64, f64))], n: usize) -> Result<Self> {
        if n < 2 || boxes.is_empty() {
            return Err(Error::InvalidInput("z-grid needs at least 2 points per axis".into()));
        }
        let mut axes = Vec::new();
        for &(re, im) in boxes {
            for (lo, hi) in [re, im] {
                if !(hi > lo) {
                    return Err(Error::InvalidInput("empty z-grid range".into()));
                }
                axes.push((lo, hi, n));
            }
        }
        Ok(Self { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len() / 2
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.2).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let (lo, hi, n) = self.axes[axis];
        (hi - lo) / (n - 1) as f64
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.axes.len()];
        for (a, ax) in self.axes.iter().enumerate().rev() {
            idx[a] = flat % ax.2;
            flat /= ax.2;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.axes).fold(0, |acc, (&i, ax)| acc * ax.2 + i)
    }

    pub fn point(&self, flat: usize) -> Vec<C64> {
        let idx = self.multi_index(flat);
        let coord = |a: usize| {
            let (lo, _, _) = self.axes[a];
            lo + idx[a] as f64 * self.spacing(a)
        };
        (0..self.dim()).map(|j| C64::new(coord(2 * j), coord(2 * j + 1))).collect()
    }

    pub fn cell_area(&self) -> f64 {
        (0..self.axes.len()).map(|a| self.spacing(a)).product()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Peak {
    pub index: usize,
    pub z: Vec<C64>,
    pub height: f64,
}

/// `T u` on a z-grid, stored as `T u(z) e^{-Φ(z)/h}` so that it stays finite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WavefrontMap {
    pub grid: ZGrid,
    pub h: f64,
    pub weighted_t: Vec<C64>,
    pub weights: Vec<f64>,
    /// Local maxima of the weighted modulus, highest first.
    pub peaks: Vec<Peak>,
}

impl WavefrontMap {
    pub fn weighted_abs(&self, i: usize) -> f64 {
        self.weighted_t[i].norm()
    }

    /// `|T u(z)|`; may overflow to infinity where `Φ/h` is large.
    pub fn abs_t(&self, i: usize) -> f64 {
        self.weighted_t[i].norm() * (self.weights[i] / self.h).exp()
    }

    pub fn max_weighted(&self) -> f64 {
        self.weighted_t.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// `(∫ |T u|² e^{-2Φ/h} dm)^{1/2}` by the grid sum.
    pub fn weighted_norm(&self) -> f64 {
        (self.weighted_t.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.grid.cell_area()).sqrt()
    }
}

fn check_edges(u: &GridFunction) -> Result<()> {
    let sup = u.norm_sup();
    if sup == 0.0 {
        return Ok(());
    }
    let dims = &u.n_points;
    let mut edge: f64 = 0.0;
    for (flat, v) in u.samples.iter().enumerate() {
        let mut rem = flat;
        let mut on_edge = false;
        for &n in dims.iter().rev() {
            let i = rem % n;
            rem /= n;
            on_edge |= i == 0 || i + 1 == n;
        }
        if on_edge {
            edge = edge.max(v.norm());
        }
    }
    if edge > EDGE_TOL * sup {
        return Err(Error::QuadratureNotConverged { achieved: edge / sup });
    }
    Ok(())
}

/// Largest kernel wavenumber times `dx/π` over the grid; above 1 the rule aliases.
fn kernel_resolution(spec: &FBISpec, u: &GridFunction, grid: &ZGrid, h: f64) -> f64 {
    let n = spec.dim();
    let spread: f64 = (0..n).map(|j| spec.a_xx[(j, j)].im).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for i in 0..grid.len() {
        let z = grid.point(i);
        let xc = spec.critical_x(&z);
        // ∂_x Re φ at the kernel centre
        let zv = DVector::from_column_slice(&z);
        let xv = DVector::from_iterator(n, xc.iter().map(|&v| C64::new(v, 0.0)));
        let g = self_grad(spec, &zv, &xv);
        for j in 0..n {
            let k = g[j].re.abs() / h + 6.0 * (spread / h).sqrt();
            worst = worst.max(k * u.spacing(j) / std::f64::consts::PI);
        }
    }
    worst
}

fn self_grad(spec: &FBISpec, z: &DVector<C64>, x: &DVector<C64>) -> DVector<C64> {
    spec.a_zx.transpose() * z + &spec.a_xx * x
}

/// `T_φ u(z) = c_φ h^{-3n/4} ∫ e^{iφ(z,x)/h} u(x) dx` by the trapezoid rule on the grid of `u`.
pub fn fbi_transform(spec: &FBISpec, u: &GridFunction, grid: &ZGrid) -> Result<WavefrontMap> {
    let n = spec.dim();
    if u.dim() != n || grid.dim() != n {
        return Err(Error::InvalidInput("u, z-grid and phase dimensions differ".into()));
    }
    let h = u.h;
    check_edges(u)?;
    let res = kernel_resolution(spec, u, grid, h);
    if res > 1.0 {
        return Err(Error::QuadratureNotConverged { achieved: res });
    }
    let i_h = C64::new(0.0, 1.0 / h);
    // (x, i/h ½xᵀA_xx x, u(x)) over the support of u
    let live: Vec<(Vec<f64>, C64, C64)> = (0..u.samples.len())
        .filter(|&i| u.samples[i] != C64::new(0.0, 0.0))
        .map(|i| {
            let x = u.coords(i);
            let q = spec.phase(&vec![C64::new(0.0, 0.0); n], &x);
            (x, i_h * q, u.samples[i])
        })
        .collect();
    let pref = spec.c_phi * h.powf(-0.75 * n as f64) * u.cell_volume();
    let weights: Vec<f64> = (0..grid.len()).map(|i| spec.weight(&grid.point(i))).collect();
    let weighted_t: Vec<C64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let z = grid.point(i);
            let zv = DVector::from_column_slice(&z);
            let c0 = i_h * (zv.transpose() * &spec.a_zz * &zv)[0] * 0.5 - weights[i] / h;
            let lin: Vec<C64> = (spec.a_zx.transpose() * &zv).iter().map(|c| c * i_h).collect();
            let s: C64 = live
                .iter()
                .map(|(x, q, v)| {
                    let e = x.iter().zip(&lin).fold(c0 + q, |acc, (xj, lj)| acc + lj * xj);
                    e.exp() * v
                })
                .sum();
            s * pref
        })
        .collect();
    let mut map = WavefrontMap { grid: grid.clone(), h, weighted_t, weights, peaks: Vec::new() };
    map.peaks = find_peaks(&map);
    Ok(map)
}

fn find_peaks(map: &WavefrontMap) -> Vec<Peak> {
    let g = &map.grid;
    let top = map.max_weighted();
    if top == 0.0 {
        return Vec::new();
    }
    let mut peaks: Vec<Peak> = (0..g.len())
        .filter(|&i| {
            let v = map.weighted_abs(i);
            if v < PEAK_REL * top {
                return false;
            }
            let idx = g.multi_index(i);
            (0..idx.len()).all(|a| {
                [-1i64, 1].iter().all(|&d| {
                    let j = idx[a] as i64 + d;
                    if j < 0 || j >= g.axes[a].2 as i64 {
                        return true;
                    }
                    let mut nb = idx.clone();
                    nb[a] = j as usize;
                    map.weighted_abs(g.flat_index(&nb)) <= v
                })
            })
        })
        .map(|i| Peak { index: i, z: g.point(i), height: map.weighted_abs(i) })
        .collect();
    peaks.sort_by(|a, b| b.height.total_cmp(&a.height));
    peaks
}

/// Per-cell decay classification across several semiclassical parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WavefrontRegion {
    pub s: f64,
    pub c_threshold: f64,
    /// Cells whose fitted `c` is below the threshold.
    pub in_region: Vec<usize>,
    /// Fitted `c` in `|Tu| e^{-Φ/h} ≈ A exp(-c h^{-1/s})`; infinite where every value is round-off.
    pub c: Vec<f64>,
}

/// Fit `-log(|Tu| e^{-Φ/h})` against `h^{-1/s}` cell by cell; a cell is in the region when the
/// fitted rate is below `c_threshold`. Values under [`MAP_FLOOR`] of a map's maximum are dropped.
pub fn wavefront_detect(maps: &[WavefrontMap], s: f64, c_threshold: f64) -> Result<WavefrontRegion> {
    if maps.len() < 2 {
        return Err(Error::InvalidInput("need maps for at least two values of h".into()));
    }
    if !(s >= 1.0) {
        return Err(Error::InvalidInput("s must be at least 1".into()));
    }
    let grid = &maps[0].grid;
    if maps.iter().any(|m| m.grid != *grid) {
        return Err(Error::InvalidInput("maps must share one z-grid".into()));
    }
    let floors: Vec<f64> = maps.iter().map(|m| MAP_FLOOR * m.max_weighted()).collect();
    let c: Vec<f64> = (0..grid.len())
        .map(|i| {
            let (hs, rs): (Vec<f64>, Vec<f64>) = maps
                .iter()
                .zip(&floors)
                .filter(|(m, &f)| m.weighted_abs(i) > f && f > 0.0)
                .map(|(m, _)| (m.h, m.weighted_abs(i)))
                .unzip();
            if hs.len() < 2 {
                f64::INFINITY
            } else {
                fit_stretched_fixed(&hs, &rs, s).1
            }
        })
        .collect();
    let in_region = (0..c.len()).filter(|&i| c[i] < c_threshold).collect();
    Ok(WavefrontRegion { s, c_threshold, in_region, c })
}

/// `P = D_{y1} + V(y)` of degree `m = 1`, given by its symbol over `(y, η)`.
#[derive(Debug, Clone)]
pub struct FbiModel {
    pub n: usize,
    /// `V` over `y`.
    pub potential: Expr,
}

impl FbiModel {
    /// Accepts `p(y, η) = η1 + V(y)` with `V` a polynomial of degree at most 2.
    pub fn from_symbol(p: &SymbolSpec) -> Result<Self> {
        let n = p.arity() / 2;
        if n == 0 || p.arity() != 2 * n {
            return Err(Error::InvalidInput("symbol must be over (y, η)".into()));
        }
        let e = p.field.expr();
        let unsupported = |m: &str| Error::ModelNotSupported(format!("P = D_y1 + V(y) with quadratic V required: {m}"));
        for j in 0..n {
            let d = e.diff(n + j);
            let want = if j == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            if d.as_const() != Some(want) {
                return Err(unsupported("η-dependence other than η1"));
            }
        }
        let mut eta0 = vec![Expr::zero(); 2 * n];
        for (j, s) in eta0.iter_mut().enumerate().take(n) {
            *s = Expr::var(j);
        }
        let v = e.substitute(&eta0);
        for a in 0..n {
            for b in a..n {
                for c in b..n {
                    if !v.diff(a).diff(b).diff(c).is_zero() {
                        return Err(unsupported("V has degree above 2"));
                    }
                }
            }
        }
        Ok(Self { n, potential: v })
    }

    /// `exp(i ∫_0^{y1} V(t, y') dt)`, exact for quadratic `V` with 2-point Gauss–Legendre.
    pub fn amplitude(&self, y: &[f64]) -> C64 {
        let rule = gauss_legendre(2);
        let half = 0.5 * y[0];
        let mut pt = y.to_vec();
        let mut g = C64::new(0.0, 0.0);
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            pt[0] = half * (1.0 + t);
            g += self.potential.eval(&pt) * w * half;
        }
        (C64::new(0.0, 1.0) * g).exp()
    }
}

/// Inputs of the FBI-side conjugation check.
#[derive(Debug, Clone)]
pub struct FbiEgorovSetup {
    /// Symbol `η1 + V(y)` over `(y, η)`.
    pub p: SymbolSpec,
    pub spec: FBISpec,
    pub y_box: Vec<(f64, f64)>,
    pub n_y: Vec<usize>,
    pub z_grid: ZGrid,
    /// Coherent-state probes `(y0, η0)`.
    pub probes: Vec<(Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FbiEgorovReport {
    pub report: HSweepReport,
    /// Every residual sits at the round-off floor of the quadrature.
    pub at_floor: bool,
    /// At floor, or algebraic slope at least 4.
    pub passes: bool,
}

/// Relative size of `hD_{Re z1} T u - h T P u` in the weighted norm.
pub fn fbi_egorov_residual(model: &FbiModel, spec: &FBISpec, u: &GridFunction, grid: &ZGrid) -> Result<f64> {
    intertwining_defect(model, model, spec, u, grid)
}

/// As [`fbi_egorov_residual`] with `P` from `op` and the amplitude of `T` built for `amp`.
pub fn intertwining_defect(op: &FbiModel, amp: &FbiModel, spec: &FBISpec, u: &GridFunction, grid: &ZGrid) -> Result<f64> {
    let n = spec.dim();
    if op.n != n || amp.n != n {
        return Err(Error::InvalidInput("model and phase dimensions differ".into()));
    }
    // the phase must solve φ_{z1} = -φ_{y1}
    let eik = (0..n).all(|j| {
        (spec.a_zz[(0, j)] + spec.a_zx[(j, 0)]).norm() < 1e-12 && (spec.a_zx[(0, j)] + spec.a_xx[(0, j)]).norm() < 1e-12
    });
    if !eik {
        return Err(Error::ModelNotSupported("phase does not solve φ_{z1} + φ_{y1} = 0".into()));
    }
    let h = u.h;
    let with = |f: &dyn Fn(usize) -> C64| -> Result<GridFunction> {
        let v = (0..u.samples.len()).map(|i| f(i) * amp.amplitude(&u.coords(i))).collect();
        GridFunction::new(v, u.bounds.clone(), u.n_points.clone(), h)
    };
    // hD_{Re z1} applied to the kernel gives φ_{z1} = (A_zz z)_1 + (A_zx y)_1
    let au = fbi_transform(spec, &with(&|i| u.samples[i])?, grid)?;
    let beta_u = with(&|i| {
        let y = u.coords(i);
        (0..n).map(|j| spec.a_zx[(0, j)] * y[j]).sum::<C64>() * u.samples[i]
    })?;
    let bu = fbi_transform(spec, &beta_u, grid)?;
    let lhs: Vec<C64> = (0..grid.len())
        .map(|i| {
            let z = grid.point(i);
            let alpha: C64 = (0..n).map(|j| spec.a_zz[(0, j)] * z[j]).sum();
            alpha * au.weighted_t[i] + bu.weighted_t[i]
        })
        .collect();
    // h (D_{y1} + V) u, the derivative spectrally
    let mut d = u.samples.clone();
    fftn(&mut d, &u.n_points);
    let inner: usize = u.n_points[1..].iter().product();
    for (i, c) in d.iter_mut().enumerate() {
        *c *= theta_of(u, 0, i / inner);
    }
    ifftn(&mut d, &u.n_points);
    let rhs = fbi_transform(spec, &with(&|i| d[i] + u.samples[i] * h * op.potential.eval(&u.coords(i)))?, grid)?;
    let diff: f64 = lhs.iter().zip(&rhs.weighted_t).map(|(a, b)| (a - b).norm_sqr()).sum();
    let norm: f64 = au.weighted_t.iter().map(|c| c.norm_sqr()).sum();
    Ok(if norm > 0.0 { (diff / norm).sqrt() } else { 0.0 })
}

/// Sweep `h` and fit the residual decay; the worst probe is kept at each `h`.
pub fn fbi_egorov_check(setup: &FbiEgorovSetup, h_list: &[f64]) -> Result<FbiEgorovReport> {
    let model = FbiModel::from_symbol(&setup.p)?;
    if h_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput("h values must be strictly decreasing".into()));
    }
    let mut residuals = Vec::new();
    let mut runtime_ms = Vec::new();
    for &h in h_list {
        let t0 = Instant::now();
        let mut worst: f64 = 0.0;
        for (y0, eta0) in &setup.probes {
            let u = crate::egorov::coherent_state(setup.y_box.clone(), setup.n_y.clone(), h, y0, eta0)?;
            worst = worst.max(fbi_egorov_residual(&model, &setup.spec, &u, &setup.z_grid)?);
        }
        residuals.push(worst);
        runtime_ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let fit = fit_decay_or_floor(h_list, &residuals, FitKind::Algebraic, 1.0)?;
    let at_floor = fit.all_at_floor;
    let passes = at_floor || fit.params.slope.is_some_and(|s| s >= 4.0);
    Ok(FbiEgorovReport { report: HSweepReport { h_values: h_list.to_vec(), residuals, fit, runtime_ms }, at_floor, passes })
}
