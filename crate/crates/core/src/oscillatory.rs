//! Oscillatory integrals `∫ e^{(i/h) f(x,y)} a(x,y) dx` and their expansions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::fit_stretched_fixed;
use crate::quad::{integrate, QuadResult, QuadSpec};
use crate::symbol_core::{SampleGrid, ScalarField, SymbolSpec};
use crate::tps::Tps;

pub const NEWTON_TOL: f64 = 1e-12;
pub const DEGENERACY_TOL: f64 = 1e-8;

/// Phase `f(x, y)` with `nx` integration variables followed by `ny` parameters.
#[derive(Debug, Clone)]
pub struct Phase {
    pub f: ScalarField,
    pub nx: usize,
    pub ny: usize,
    pub real_valued: bool,
}

impl Phase {
    /// Build a phase, checking realness (when claimed) and `Im f >= 0` on `samples`.
    pub fn new(f: ScalarField, nx: usize, real_valued: bool, samples: &SampleGrid) -> Result<Self> {
        let arity = f.expr().min_arity().max(nx);
        let ny = arity - nx;
        for p in &samples.points {
            let v = f.eval(p);
            if real_valued && v.im.abs() > 1e-12 * (1.0 + v.re.abs()) {
                return Err(Error::InvalidInput("phase declared real has an imaginary part".into()));
            }
            if v.im < -1e-12 {
                return Err(Error::InvalidInput("phase has negative imaginary part".into()));
            }
        }
        Ok(Phase { f, nx, ny, real_valued })
    }

    /// Real phase in `nx` variables without parameter sampling checks.
    pub fn real(f: ScalarField, nx: usize) -> Self {
        let arity = f.expr().min_arity().max(nx);
        Phase { f, nx, ny: arity - nx, real_valued: true }
    }

    fn args(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.nx + self.ny);
        v.extend_from_slice(x);
        v.extend(y.iter().take(self.ny));
        v
    }

    /// Series of `f(x0 + u, y)` in the `u` variables.
    pub fn taylor_x(&self, x0: &[f64], y: &[f64], order: usize) -> Tps {
        let n = self.nx;
        let mut vars: Vec<Tps> = (0..n).map(|i| Tps::variable(n, order, i, x0[i])).collect();
        for k in 0..self.ny {
            vars.push(Tps::constant(n, order, C64::new(y[k], 0.0)));
        }
        if vars.len() < self.f.expr().min_arity() {
            vars.resize(self.f.expr().min_arity(), Tps::zero(n, order));
        }
        self.f.expr().taylor_with(&vars)
    }

    pub fn grad_x(&self, x: &[f64], y: &[f64]) -> Vec<C64> {
        let t = self.taylor_x(x, y, 1);
        (0..self.nx).map(|i| t.diff(i).value()).collect()
    }

    pub fn hessian_x(&self, x: &[f64], y: &[f64]) -> DMatrix<f64> {
        let t = self.taylor_x(x, y, 2);
        DMatrix::from_fn(self.nx, self.nx, |i, j| t.diff(i).diff(j).value().re)
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> C64 {
        self.f.eval(&self.args(x, y))
    }
}

fn amp_args(a: &SymbolSpec, nx: usize, x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.extend(y.iter().take(a.arity().saturating_sub(nx)));
    v
}

/// Adaptive quadrature of `∫ e^{(i/h) f(x,y)} a(x,y) dx` over the amplitude's x-box.
pub fn oscillatory_integral(f: &Phase, a: &SymbolSpec, h: f64, y: &[f64], quad: &QuadSpec) -> Result<QuadResult> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput("h must be positive".into()));
    }
    let nx = f.nx;
    let bounds: Vec<(f64, f64)> = a.domain_box[..nx].to_vec();
    let ih = C64::new(0.0, 1.0 / h);
    integrate(
        |x: &[f64]| {
            let av = a.field.eval(&amp_args(a, nx, x, y));
            if av.re == 0.0 && av.im == 0.0 {
                return av;
            }
            (ih * f.value(x, y)).exp() * av
        },
        &bounds,
        quad,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub c: f64,
    pub r2: f64,
    pub min_grad: f64,
    pub h_values: Vec<f64>,
    pub abs_values: Vec<f64>,
}

/// Smallest `|f'_x|` over a grid of the amplitude support, with a Newton check for
/// critical points between grid nodes.
pub fn min_gradient_on_support(f: &Phase, a: &SymbolSpec, y: &[f64], per_axis: usize) -> (f64, Option<Vec<f64>>) {
    let nx = f.nx;
    let grid = SampleGrid::tensor(&a.domain_box[..nx], per_axis);
    let mut best = f64::INFINITY;
    let mut best_pt = None;
    for p in &grid.points {
        if a.field.eval(&amp_args(a, nx, p, y)).norm() == 0.0 {
            continue;
        }
        let g: f64 = f.grad_x(p, y).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if g < best {
            best = g;
            best_pt = Some(p.clone());
        }
    }
    if let Some(p) = &best_pt {
        if let Ok(x) = newton_critical(f, y, p) {
            let inside = x.iter().zip(&a.domain_box).all(|(v, &(lo, hi))| *v > lo && *v < hi);
            if inside && a.field.eval(&amp_args(a, nx, &x, y)).norm() > 0.0 {
                return (0.0, Some(x));
            }
        }
    }
    (best, best_pt)
}

/// Fit `log|I(h)| = const - c h^{-1/s}` over `h_list`.
pub fn nonstationary_decay_fit(f: &Phase, a: &SymbolSpec, s: f64, h_list: &[f64], y: &[f64], quad: &QuadSpec) -> Result<DecayFit> {
    if h_list.len() < 4 {
        return Err(Error::InvalidInput("need at least 4 h values".into()));
    }
    let (min_grad, _) = min_gradient_on_support(f, a, y, 401);
    if min_grad < 1e-6 {
        return Err(Error::StationaryPointDetected { min_grad });
    }
    let vals: Vec<Result<QuadResult>> = h_list.par_iter().map(|&h| oscillatory_integral(f, a, h, y, quad)).collect();
    let mut abs_values = Vec::with_capacity(vals.len());
    for v in vals {
        abs_values.push(v?.value.norm());
    }
    let (_, c, r2) = fit_stretched_fixed(h_list, &abs_values, s);
    Ok(DecayFit { c, r2, min_grad, h_values: h_list.to_vec(), abs_values })
}

/// Newton iteration for `f'_x(x, y) = 0`.
pub fn newton_critical(f: &Phase, y: &[f64], seed: &[f64]) -> Result<Vec<f64>> {
    let n = f.nx;
    let mut x = seed.to_vec();
    let mut res = f64::INFINITY;
    for _ in 0..60 {
        let t = f.taylor_x(&x, y, 2);
        let g = DVector::from_fn(n, |i, _| t.diff(i).value().re);
        res = g.norm();
        if res < NEWTON_TOL {
            return Ok(x);
        }
        let hm = DMatrix::from_fn(n, n, |i, j| t.diff(i).diff(j).value().re);
        let step = match hm.lu().solve(&g) {
            Some(s) => s,
            None => return Err(Error::NewtonFailed { residual: res }),
        };
        for i in 0..n {
            x[i] -= step[i];
        }
        if !x.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    let g: f64 = f.grad_x(&x, y).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if g < NEWTON_TOL * 10.0 {
        return Ok(x);
    }
    Err(Error::NewtonFailed { residual: res.min(g) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryPoint {
    pub chi_y: Vec<f64>,
    pub signature_sigma: i32,
    pub q0: Vec<Vec<f64>>,
    pub det_q0: f64,
}

/// Stationary phase data: `I(h) ≈ e^{(i/h) phase_value} prefactor Σ_j terms[j]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryExpansion {
    pub point: StationaryPoint,
    pub prefactor: C64,
    pub terms: Vec<C64>,
    pub phase_value: C64,
    pub h: f64,
}

impl StationaryExpansion {
    /// Approximation using the first `j_terms` terms (`j_terms = J + 1`).
    pub fn approx(&self, j_terms: usize) -> C64 {
        let s: C64 = self.terms.iter().take(j_terms).sum();
        (C64::new(0.0, 1.0 / self.h) * self.phase_value).exp() * self.prefactor * s
    }
}

/// Locate and classify the critical point near `seed`.
pub fn stationary_point(f: &Phase, y: &[f64], seed: &[f64]) -> Result<StationaryPoint> {
    let x = newton_critical(f, y, seed)?;
    let q = f.hessian_x(&x, y);
    let eig = SymmetricEigen::new(q.clone());
    let det: f64 = eig.eigenvalues.iter().product();
    if det.abs() <= DEGENERACY_TOL {
        return Err(Error::DegenerateHessian { det });
    }
    let sigma = eig.eigenvalues.iter().map(|&l| if l > 0.0 { 1 } else { -1 }).sum();
    let n = f.nx;
    let q0 = (0..n).map(|i| (0..n).map(|j| q[(i, j)]).collect()).collect();
    Ok(StationaryPoint { chi_y: x, signature_sigma: sigma, q0, det_q0: det })
}

type TpsMatrix = Vec<Vec<Tps>>;

fn mat_mul(a: &TpsMatrix, b: &TpsMatrix) -> TpsMatrix {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut acc = a[i][0].mul(&b[0][j]);
                    for k in 1..n {
                        acc = acc.add(&a[i][k].mul(&b[k][j]));
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Determinant by cofactor expansion (small `n`).
pub fn tps_det(m: &TpsMatrix) -> Tps {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    let mut acc: Option<Tps> = None;
    for j in 0..n {
        let minor: TpsMatrix = (1..n).map(|i| (0..n).filter(|&k| k != j).map(|k| m[i][k].clone()).collect()).collect();
        let mut term = m[0][j].mul(&tps_det(&minor));
        if j % 2 == 1 {
            term = term.scale(C64::new(-1.0, 0.0));
        }
        acc = Some(match acc {
            None => term,
            Some(a) => a.add(&term),
        });
    }
    acc.unwrap()
}

/// Apply `Σ_ij P_ij ∂_i ∂_j` to a series.
pub fn apply_quadratic_operator(t: &Tps, p: &DMatrix<f64>) -> Tps {
    let n = t.nvars();
    let mut acc: Option<Tps> = None;
    for i in 0..n {
        let di = t.diff(i);
        for j in 0..n {
            if p[(i, j)] == 0.0 {
                continue;
            }
            let term = di.diff(j).scale(C64::new(p[(i, j)], 0.0));
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(&term),
            });
        }
    }
    acc.unwrap_or_else(|| Tps::zero(n, t.order().saturating_sub(2)))
}

/// Morse coordinates: `u(x̃)` with `f(x0 + u) - f(x0) = ½ x̃ᵀ Q0 x̃`, to `order`.
pub fn morse_chart(f: &Phase, x0: &[f64], y: &[f64], q0: &DMatrix<f64>, order: usize) -> Vec<Tps> {
    let n = f.nx;
    let ft = f.taylor_x(x0, y, order + 2);
    let q0inv = q0.clone().try_inverse().expect("nonsingular Q0");
    // Q(u) = 2 ∫_0^1 (1-t) f''(x0 + t u) dt, coefficientwise
    let mut qm: TpsMatrix = Vec::with_capacity(n);
    for i in 0..n {
        let di = ft.diff(i);
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            let mut hij = di.diff(j);
            let tab_len = hij.coeffs().len();
            for k in 0..tab_len {
                let d = hij.table().degree(k) as f64;
                hij.coeffs_mut()[k] *= 2.0 / ((d + 1.0) * (d + 2.0));
            }
            row.push(hij);
        }
        qm.push(row);
    }
    // N = Q0^{-1} Q - I, R = (I + N)^{-1/2}
    let nmat: TpsMatrix = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut acc = qm[0][j].scale(C64::new(q0inv[(i, 0)], 0.0));
                    for k in 1..n {
                        acc = acc.add(&qm[k][j].scale(C64::new(q0inv[(i, k)], 0.0)));
                    }
                    if i == j {
                        acc = acc.add_const(C64::new(-1.0, 0.0));
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let ident = |c: f64| -> TpsMatrix {
        (0..n)
            .map(|i| (0..n).map(|j| Tps::constant(n, order, C64::new(if i == j { c } else { 0.0 }, 0.0))).collect())
            .collect()
    };
    let mut r = ident(1.0);
    let mut power = ident(1.0);
    let mut binom = 1.0;
    for k in 1..=order {
        binom *= (-0.5 - (k as f64 - 1.0)) / k as f64;
        power = mat_mul(&power, &nmat);
        for i in 0..n {
            for j in 0..n {
                r[i][j] = r[i][j].add(&power[i][j].scale(C64::new(binom, 0.0)));
            }
        }
    }
    // fixed point u = R(u) x̃
    let xt: Vec<Tps> = (0..n).map(|i| Tps::variable(n, order, i, 0.0)).collect();
    let mut u: Vec<Tps> = xt.clone();
    for _ in 0..=order {
        let rc: TpsMatrix = r.iter().map(|row| row.iter().map(|e| e.compose(&u)).collect()).collect();
        u = (0..n)
            .map(|i| {
                let mut acc = rc[i][0].mul(&xt[0]);
                for j in 1..n {
                    acc = acc.add(&rc[i][j].mul(&xt[j]));
                }
                acc
            })
            .collect();
    }
    u
}

/// Stationary phase expansion with terms `h^j (i/2)^j ⟨Q0^{-1}∂,∂⟩^j ã(0) / j!`,
/// where `ã` is the amplitude pulled back to Morse coordinates.
pub fn stationary_phase_expand(f: &Phase, a: &SymbolSpec, y: &[f64], seed: &[f64], j_max: usize, h: f64) -> Result<StationaryExpansion> {
    if !f.real_valued {
        return Err(Error::InvalidInput("stationary phase expansion needs a real phase".into()));
    }
    let point = stationary_point(f, y, seed)?;
    let n = f.nx;
    let x0 = point.chi_y.clone();
    let q0 = DMatrix::from_fn(n, n, |i, j| point.q0[i][j]);
    let order = 2 * j_max + 1;
    let u = morse_chart(f, &x0, y, &q0, order);
    let jac: TpsMatrix = (0..n).map(|i| (0..n).map(|j| u[i].diff(j)).collect()).collect();
    let det = tps_det(&jac);
    // amplitude at x0 + u(x̃)
    let mut args: Vec<Tps> = (0..n).map(|i| u[i].truncate(2 * j_max).add_const(C64::new(x0[i], 0.0))).collect();
    for k in 0..a.arity().saturating_sub(n) {
        args.push(Tps::constant(n, 2 * j_max, C64::new(y[k], 0.0)));
    }
    let at = a.field.expr().taylor_with(&args).mul(&det.truncate(2 * j_max));
    let q0inv = q0.clone().try_inverse().ok_or(Error::DegenerateHessian { det: point.det_q0 })?;
    let mut terms = Vec::with_capacity(j_max + 1);
    let mut cur = at;
    let mut fact = 1.0;
    for j in 0..=j_max {
        if j > 0 {
            fact *= j as f64;
            cur = apply_quadratic_operator(&cur, &q0inv);
        }
        let coef = C64::new(0.0, 0.5).powi(j as i32) * h.powi(j as i32) / fact;
        terms.push(coef * cur.value());
    }
    let prefactor = C64::from_polar(
        (2.0 * std::f64::consts::PI * h).powf(n as f64 / 2.0) / point.det_q0.abs().sqrt(),
        std::f64::consts::PI * point.signature_sigma as f64 / 4.0,
    );
    let phase_value = f.value(&x0, y);
    Ok(StationaryExpansion { point, prefactor, terms, phase_value, h })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::VarSpace;

    #[test]
    fn morse_chart_normalizes_cubic() {
        let f = Phase::real(ScalarField::parse("x1^2/2 + x1^3/6", &VarSpace::spatial(1)).unwrap(), 1);
        let q0 = DMatrix::from_element(1, 1, 1.0);
        let u = morse_chart(&f, &[0.0], &[], &q0, 7);
        // f(u(x̃)) should equal x̃²/2 through order 7
        let g = f.f.expr().taylor_with(&u);
        for k in 0..=7u16 {
            let want = if k == 2 { 0.5 } else { 0.0 };
            assert!((g.coeff(&[k]) - C64::new(want, 0.0)).norm() < 1e-12, "order {k}");
        }
    }
}
