//! Eikonal equation by characteristics, transport hierarchies and WKB residuals.
//!
//! Operators are in the evolution form `P = hD_{x1} + Op_h(q)` with `q = q(x, ξ')`.
//! The principal symbol is `ξ1 + q`, so the eikonal equation reads
//! `∂φ/∂x1 = λ(x, φ'_{x'})` with `λ = -q`.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::calculus::{apply_pdo, ApplyMode, GridFunction, QuantizedOperator};
use crate::cheb;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fit::{fit_decay_or_floor, FitKind, HSweepReport};
use crate::geometry::{dopri5, Trajectory};
use crate::symbol_core::{
    borel_resum_values, check_formal_bounds, minimal_formal_constant, FormalBoundsReport, FormalSymbolSeq,
    FormalTerm, ScalarField, SmoothField, SymbolSpec,
};
use crate::tps::Tps;

pub const CAUSTIC_TOL: f64 = 1e-3;
pub const ELLIPTIC_TOL: f64 = 1e-6;
pub const MIN_POINTS_PER_WAVELENGTH: f64 = 8.0;
const SHOOT_TOL: f64 = 1e-13;
const ODE_RTOL: f64 = 1e-12;
const ODE_ATOL: f64 = 1e-14;

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Phase `φ(x; η')` solving `∂_{x1}φ = λ(x, φ'_{x'})`, `φ(0, x') = x'·η'`,
/// evaluated on demand by shooting along characteristics.
#[derive(Debug, Clone)]
pub struct EikonalSolution {
    pub lambda: SymbolSpec,
    pub eta: Vec<f64>,
    pub chart: Vec<(f64, f64)>,
    /// Minimum of `|det ∂x'/∂y'|` over the chart sample grid.
    pub max_caustic_indicator: f64,
    /// Eikonal residual on the verification grid (finite differences of `φ`).
    pub residual: f64,
}

/// State of one characteristic at `x1`.
#[derive(Debug, Clone)]
pub struct CharacteristicPoint {
    pub x_prime: Vec<f64>,
    pub xi_prime: Vec<f64>,
    pub phi: f64,
    /// `∂x'/∂y'` (row-major, `m × m`).
    pub jacobian: Vec<f64>,
}

impl EikonalSolution {
    fn n(&self) -> usize {
        self.lambda.arity() / 2
    }

    fn lambda_jet(&self, x1: f64, xp: &[f64], xi: &[f64]) -> Tps {
        let n = self.n();
        let mut p = vec![0.0; 2 * n];
        p[0] = x1;
        p[1..n].copy_from_slice(xp);
        p[n + 1..].copy_from_slice(xi);
        self.lambda.field.taylor(&p, 2)
    }

    /// Integrate the characteristic launched from `y'` up to `x1`.
    pub fn characteristic(&self, y: &[f64], x1: f64) -> Result<CharacteristicPoint> {
        let m = self.n() - 1;
        Ok(Self::unpack(self.trajectory(y, x1)?.last(), m))
    }

    /// Smallest `|det ∂x'/∂y'|` over the accepted steps of the characteristic from `y'` to `x1`.
    fn min_jacobian_along(&self, y: &[f64], x1: f64) -> Result<f64> {
        let m = self.n() - 1;
        let dets: Vec<f64> = self
            .trajectory(y, x1)?
            .states
            .iter()
            .map(|s| DMatrix::from_row_slice(m, m, &s[2 * m + 1..2 * m + 1 + m * m]).determinant())
            .collect();
        // a sign change between steps means a zero was stepped over
        if dets.windows(2).any(|w| w[0] * w[1] <= 0.0) {
            return Ok(0.0);
        }
        Ok(dets.iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min))
    }

    /// `Φ(x1) = φ(x1, x') - x'·η'` at each `x1`, for `λ` independent of `x'` (then `ξ' ≡ η'`
    /// and `φ - x'·η'` does not depend on `x'`).
    pub fn phase_profile(&self, x1: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if (1..n).any(|v| self.lambda.field.expr().depends_on(v)) {
            return Err(Error::ModelNotSupported("phase profile needs λ independent of x'".into()));
        }
        let m = n - 1;
        let lo = x1.iter().cloned().fold(0.0, f64::min);
        let hi = x1.iter().cloned().fold(0.0, f64::max);
        let zero = vec![0.0; m];
        let back = self.trajectory(&zero, lo)?;
        let fwd = self.trajectory(&zero, hi)?;
        Ok(x1
            .iter()
            .map(|&t| {
                let s = if t < 0.0 { back.at(t) } else { fwd.at(t) };
                s[2 * m] - s[..m].iter().zip(&self.eta).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect())
    }

    fn trajectory(&self, y: &[f64], x1: f64) -> Result<Trajectory> {
        let n = self.n();
        let m = n - 1;
        let mut y0 = vec![0.0; 2 * m + 1 + 2 * m * m];
        y0[..m].copy_from_slice(y);
        y0[m..2 * m].copy_from_slice(&self.eta);
        y0[2 * m] = y.iter().zip(&self.eta).map(|(a, b)| a * b).sum();
        for a in 0..m {
            y0[2 * m + 1 + a * m + a] = 1.0;
        }
        if x1 == 0.0 {
            return Ok(Trajectory { times: vec![0.0], states: vec![y0], steps: Vec::new() });
        }
        let rhs = |t: f64, s: &[f64], ds: &mut [f64]| {
            let jet = self.lambda_jet(t, &s[..m], &s[m..2 * m]);
            let d1 = |v: usize| {
                let mut e = vec![0u16; 2 * n];
                e[v] = 1;
                jet.derivative(&e).re
            };
            let d2 = |u: usize, v: usize| {
                let mut e = vec![0u16; 2 * n];
                e[u] += 1;
                e[v] += 1;
                jet.derivative(&e).re
            };
            let lam = jet.value().re;
            let mut xi_dot_lxi = 0.0;
            for a in 0..m {
                let lxi = d1(n + 1 + a);
                ds[a] = -lxi;
                ds[m + a] = d1(1 + a);
                xi_dot_lxi += s[m + a] * lxi;
            }
            ds[2 * m] = lam - xi_dot_lxi;
            let xm = &s[2 * m + 1..2 * m + 1 + m * m];
            let pm = &s[2 * m + 1 + m * m..];
            for a in 0..m {
                for b in 0..m {
                    let mut dx = 0.0;
                    let mut dp = 0.0;
                    for c in 0..m {
                        dx -= d2(n + 1 + a, 1 + c) * xm[c * m + b] + d2(n + 1 + a, n + 1 + c) * pm[c * m + b];
                        dp += d2(1 + a, 1 + c) * xm[c * m + b] + d2(1 + a, n + 1 + c) * pm[c * m + b];
                    }
                    ds[2 * m + 1 + a * m + b] = dx;
                    ds[2 * m + 1 + m * m + a * m + b] = dp;
                }
            }
        };
        dopri5(rhs, 0.0, &y0, x1, ODE_RTOL, ODE_ATOL, |_| true)
    }

    fn unpack(s: &[f64], m: usize) -> CharacteristicPoint {
        CharacteristicPoint {
            x_prime: s[..m].to_vec(),
            xi_prime: s[m..2 * m].to_vec(),
            phi: s[2 * m],
            jacobian: s[2 * m + 1..2 * m + 1 + m * m].to_vec(),
        }
    }

    /// Characteristic reaching `x` (Newton on the launch point).
    pub fn shoot(&self, x: &[f64]) -> Result<CharacteristicPoint> {
        let m = self.n() - 1;
        let target = &x[1..];
        let mut y = target.to_vec();
        for _ in 0..40 {
            let c = self.characteristic(&y, x[0])?;
            let r: Vec<f64> = c.x_prime.iter().zip(target).map(|(a, b)| a - b).collect();
            let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = 1.0 + target.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if rn <= SHOOT_TOL * scale {
                return Ok(c);
            }
            let j = DMatrix::from_row_slice(m, m, &c.jacobian);
            let det = j.determinant();
            if det.abs() < CAUSTIC_TOL {
                return Err(Error::CausticDetected { indicator: det.abs() });
            }
            let step = j.lu().solve(&nalgebra::DVector::from_vec(r)).ok_or(Error::CausticDetected { indicator: 0.0 })?;
            for (a, d) in y.iter_mut().zip(step.iter()) {
                *a -= d;
            }
        }
        Err(Error::NewtonFailed { residual: f64::NAN })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.shoot(x)?.phi)
    }

    /// `(∂_{x1}φ, ∂_{x'}φ)` from the characteristic data.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let c = self.shoot(x)?;
        let jet = self.lambda_jet(x[0], &x[1..], &c.xi_prime);
        let mut g = vec![jet.value().re];
        g.extend(c.xi_prime);
        Ok(g)
    }

    /// `|∂_{x1}φ - λ(x, φ'_{x'})|` with `φ'` from fourth-order central differences of `φ`.
    pub fn residual_at(&self, x: &[f64]) -> Result<f64> {
        let n = self.n();
        let d = 1e-3;
        let mut grad = vec![0.0; n];
        for (v, g) in grad.iter_mut().enumerate() {
            let at = |k: f64| -> Result<f64> {
                let mut p = x.to_vec();
                p[v] += k * d;
                self.value(&p)
            };
            *g = (8.0 * (at(1.0)? - at(-1.0)?) - (at(2.0)? - at(-2.0)?)) / (12.0 * d);
        }
        let mut p = vec![0.0; 2 * n];
        p[..n].copy_from_slice(x);
        p[n + 1..].copy_from_slice(&grad[1..]);
        Ok((grad[0] - self.lambda.field.eval(&p).re).abs())
    }
}

fn tensor_points(chart: &[(f64, f64)], k: usize, offset: f64) -> Vec<Vec<f64>> {
    let mut pts = vec![Vec::new()];
    for &(a, b) in chart {
        let mut next = Vec::new();
        for p in &pts {
            for i in 0..k {
                let t = (i as f64 + offset) / (k as f64 - 1.0 + 2.0 * offset);
                let mut q: Vec<f64> = p.clone();
                q.push(a + (b - a) * t);
                next.push(q);
            }
        }
        pts = next;
    }
    pts
}

/// Solve the eikonal Cauchy problem for `λ(x, ξ')` over the variables `x1..xn, t1..tn`
/// (`t1` must not appear) with `φ(0, x') = x'·η'`.
pub fn solve_eikonal(lambda: &SymbolSpec, eta: &[f64], chart: &[(f64, f64)], tol: f64) -> Result<EikonalSolution> {
    let n = lambda.arity() / 2;
    if n < 2 || lambda.arity() != 2 * n || eta.len() != n - 1 || chart.len() != n {
        return Err(Error::InvalidInput("λ must be over (x1..xn, t1..tn) with n >= 2 and η' of length n-1".into()));
    }
    if lambda.field.expr().depends_on(n) {
        return Err(Error::InvalidInput("λ must not depend on ξ1".into()));
    }
    if !(chart[0].0 <= 0.0 && 0.0 <= chart[0].1) {
        return Err(Error::InvalidInput("chart must contain the slice x1 = 0".into()));
    }
    let probe: Vec<Vec<f64>> = tensor_points(chart, 3, 0.0)
        .into_iter()
        .map(|mut p| {
            p.resize(2 * n, 0.0);
            p[n + 1..].copy_from_slice(eta);
            p
        })
        .collect();
    if !lambda.field.is_real_on(&probe, 1e-12) {
        return Err(Error::InvalidInput("λ must be real-valued".into()));
    }
    let mut sol = EikonalSolution {
        lambda: lambda.clone(),
        eta: eta.to_vec(),
        chart: chart.to_vec(),
        max_caustic_indicator: f64::INFINITY,
        residual: 0.0,
    };
    // fan of characteristics launched from the x' chart, checked at every step in both directions
    let launch = tensor_points(&chart[1..], 5, 0.0);
    let dets: Vec<f64> = launch
        .par_iter()
        .flat_map(|y| [(y.clone(), chart[0].0), (y.clone(), chart[0].1)])
        .map(|(y, end)| sol.min_jacobian_along(&y, end))
        .collect::<Result<Vec<_>>>()?;
    sol.max_caustic_indicator = dets.iter().cloned().fold(f64::INFINITY, f64::min);
    if sol.max_caustic_indicator < CAUSTIC_TOL {
        return Err(Error::CausticDetected { indicator: sol.max_caustic_indicator });
    }
    // verification grid offset from the sample grid, kept inside the chart
    let shrunk: Vec<(f64, f64)> = chart.iter().map(|&(a, b)| (a + 0.01 * (b - a), b - 0.01 * (b - a))).collect();
    let verify = tensor_points(&shrunk, 4, 0.5);
    let res: Vec<f64> = verify.par_iter().map(|x| sol.residual_at(x)).collect::<Result<Vec<_>>>()?;
    sol.residual = res.iter().cloned().fold(0.0, f64::max);
    if sol.residual > tol {
        return Err(Error::InterpolationError(format!("eikonal residual {:.3e} exceeds {:.1e}", sol.residual, tol)));
    }
    Ok(sol)
}

/// `P = hD_{x1} + Op_h(q)` in two variables with `q = c0(x1) + c1 ξ' + c2 ξ'²`,
/// `c1, c2` constant: the class on which the amplitude hierarchy is solved in closed form.
#[derive(Debug, Clone)]
pub struct ShiftModel {
    /// `q` over `(x1, x2, t1, t2)`.
    pub q: SymbolSpec,
    pub c0: ScalarField,
    pub c1: f64,
    pub c2: f64,
}

fn const_value(e: &Expr) -> Option<f64> {
    (0..4).all(|v| !e.depends_on(v)).then(|| e.eval(&[0.0; 4]).re)
}

impl ShiftModel {
    pub fn new(q: &SymbolSpec) -> Result<Self> {
        if q.arity() != 4 {
            return Err(Error::ModelNotSupported("q must be over (x1, x2, t1, t2)".into()));
        }
        let e = q.field.expr();
        if e.depends_on(1) || e.depends_on(2) {
            return Err(Error::ModelNotSupported("q must not depend on x' or ξ1".into()));
        }
        if !e.diff(3).diff(3).diff(3).is_zero() {
            return Err(Error::ModelNotSupported("q must be a polynomial of degree <= 2 in ξ'".into()));
        }
        let at0 = |e: &Expr| e.substitute(&[Expr::var(0), Expr::var(1), Expr::var(2), Expr::zero()]);
        let c0 = at0(e);
        let c1 = const_value(&at0(&e.diff(3)))
            .ok_or_else(|| Error::ModelNotSupported("coefficient of ξ' must be constant".into()))?;
        let c2 = const_value(&at0(&e.diff(3).diff(3)))
            .ok_or_else(|| Error::ModelNotSupported("coefficient of ξ'² must be constant".into()))?
            * 0.5;
        Ok(ShiftModel { q: q.clone(), c0: ScalarField::new(c0, 4)?, c1, c2 })
    }

    /// `λ = -q` as a symbol over `(x1, x2, t1, t2)`.
    pub fn lambda(&self) -> Result<SymbolSpec> {
        let f = ScalarField::new(-self.q.field.expr().clone(), 4)?;
        SymbolSpec::new(f, self.q.order_m, self.q.gevrey_s, self.q.domain_box.clone())
    }

    /// Transport speed `v = c1 + 2 c2 η'`.
    pub fn speed(&self, eta: f64) -> f64 {
        self.c1 + 2.0 * self.c2 * eta
    }

    /// `q(x1, ·, ·)` as a one-dimensional symbol over `(x, θ)`.
    pub fn slice_symbol(&self, x1: f64, xp_box: (f64, f64)) -> Result<SymbolSpec> {
        let e = self.q.field.expr().substitute(&[Expr::real(x1), Expr::var(0), Expr::zero(), Expr::var(1)]);
        SymbolSpec::new(ScalarField::new(e, 2)?, self.q.order_m, self.q.gevrey_s, vec![xp_box, (f64::MIN, f64::MAX)])
    }
}

/// Amplitude levels `a_j(x1, x') = (i c2 x1)^j / j! · g^{(2j)}(x' - v x1)` solving
/// `(∂_{x1} + v ∂_{x'}) a_j = i c2 ∂²_{x'} a_{j-1}`, `a_0(0, ·) = g`, `a_j(0, ·) = 0`.
#[derive(Debug, Clone)]
pub struct WkbAmplitude {
    /// `a0_init` over `(x1, x2)`, read on `x1 = 0`.
    pub a0_init: ScalarField,
    pub c2: f64,
    pub v: f64,
}

/// One level of a [`WkbAmplitude`] as a smooth field over `(x1, x2)`.
#[derive(Debug, Clone)]
pub struct WkbLevel {
    pub amp: WkbAmplitude,
    pub j: usize,
}

impl WkbAmplitude {
    pub fn new(model: &ShiftModel, eta: f64, a0_init: &ScalarField) -> Result<Self> {
        if a0_init.arity() != 2 {
            return Err(Error::InvalidInput("a0_init must be over (x1, x2)".into()));
        }
        Ok(WkbAmplitude { a0_init: a0_init.clone(), c2: model.c2, v: model.speed(eta) })
    }

    /// Normalized derivatives `g^{(k)}(y) / k!`, `k = 0..=order`.
    pub fn g_coeffs(&self, y: f64, order: usize) -> Vec<C64> {
        let t = self.a0_init.taylor(&[0.0, y], order);
        (0..=order).map(|k| t.coeff(&[0, k as u16])).collect()
    }

    /// `a_j` and `∂_{x1} a_j` for `j < levels` at `(x1, x')`, from normalized derivatives of `g`
    /// at `x' - v x1` (length `>= 2 levels`).
    pub fn levels_from(&self, x1: f64, gc: &[C64], levels: usize) -> (Vec<C64>, Vec<C64>) {
        let mut a = Vec::with_capacity(levels);
        let mut d = Vec::with_capacity(levels);
        let i = C64::new(0.0, 1.0);
        for j in 0..levels {
            // g^{(k)} = k! gc[k]
            let gk = |k: usize| gc[k] * ln_factorial(k).exp();
            let pref = |p: usize| (i * self.c2 * x1).powi(p as i32) * (-ln_factorial(p)).exp();
            let aj = pref(j) * gk(2 * j);
            let mut dj = -pref(j) * self.v * gk(2 * j + 1);
            if j > 0 {
                dj += i * self.c2 * pref(j - 1) * gk(2 * j);
            }
            a.push(aj);
            d.push(dj);
        }
        (a, d)
    }

    pub fn level(&self, j: usize) -> WkbLevel {
        WkbLevel { amp: self.clone(), j }
    }

    /// Formal sequence of the first `count` levels on `domain`, with the least constant
    /// for which the formal bounds hold at `h`.
    pub fn formal_sequence(&self, count: usize, domain: &[(f64, f64)], h: f64, s: f64) -> (FormalSymbolSeq, FormalBoundsReport) {
        let terms = (0..count)
            .map(|j| FormalTerm { field: Arc::new(self.level(j)) as Arc<dyn SmoothField>, domain_box: domain.to_vec() })
            .collect();
        let mut seq = FormalSymbolSeq { terms, order_m: 0.0, constant_c: 1.0, gevrey_s: s };
        seq.constant_c = minimal_formal_constant(&seq, h, 6, 5) * (1.0 + 1e-9);
        let report = check_formal_bounds(&seq, h, 6, 5);
        (seq, report)
    }
}

impl SmoothField for WkbLevel {
    fn arity(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64]) -> C64 {
        let gc = self.amp.g_coeffs(x[1] - self.amp.v * x[0], 2 * self.j + 1);
        self.amp.levels_from(x[0], &gc, self.j + 1).0[self.j]
    }

    fn taylor(&self, x: &[f64], order: usize) -> Tps {
        let j = self.j;
        let y = x[1] - self.amp.v * x[0];
        let gc = self.amp.g_coeffs(y, 2 * j + order);
        let mut g = Tps::zero(1, 2 * j + order);
        for (k, c) in gc.iter().enumerate() {
            let idx = g.table().index_of(&[k as u16]).unwrap();
            g.coeffs_mut()[idx] = *c;
        }
        for _ in 0..2 * j {
            g = g.diff(0);
        }
        let dy = Tps::variable(2, order, 1, 0.0).sub(&Tps::variable(2, order, 0, 0.0).scale(C64::new(self.amp.v, 0.0)));
        let shifted = g.compose(&[dy]);
        let pref = Tps::variable(2, order, 0, x[0])
            .scale(C64::new(0.0, self.amp.c2))
            .powi(j as i32)
            .scale(C64::new((-ln_factorial(j)).exp(), 0.0));
        shifted.mul(&pref)
    }
}

/// Which amplitude enters the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeLevels {
    /// `Σ_{j<J} h^j a_j`; `J = 0` means `a0_init` extended constantly in `x1`.
    Truncated(usize),
    /// Least-term truncation of the level sizes `sup |a_j| h^j` over the probes.
    LeastTerm,
}

/// Fixed data of a residual sweep.
#[derive(Debug, Clone)]
pub struct WkbProblem {
    pub model: ShiftModel,
    pub eikonal: EikonalSolution,
    pub amplitude: WkbAmplitude,
    /// Periodic `x'` box and point count of the residual grid.
    pub xp_box: (f64, f64),
    pub n_xp: usize,
    pub probes_x1: Vec<f64>,
    /// Highest level computed for least-term truncation.
    pub max_levels: usize,
}

struct ProbeSlice {
    x1: f64,
    phi: Vec<f64>,
    phi_x1: Vec<f64>,
    gc: Vec<Vec<C64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WkbSweep {
    pub report: HSweepReport,
    /// Number of levels used at each `h`.
    pub levels_used: Vec<usize>,
    /// `sup |a_j|` over the probes.
    pub level_sups: Vec<f64>,
}

/// Sup over the probe slices of `|P(a e^{iφ/h})|` for each `h`
/// (`h` times the normalized residual `h^{-1} e^{-iφ/h} P(a e^{iφ/h})`, with `b = 0`).
pub fn wkb_residual(problem: &WkbProblem, levels: AmplitudeLevels, h_list: &[f64]) -> Result<WkbSweep> {
    let eta = problem.eikonal.eta[0];
    let (lo, hi) = problem.xp_box;
    let len = hi - lo;
    let n = problem.n_xp;
    let dx = len / n as f64;
    let max_levels = match levels {
        AmplitudeLevels::Truncated(j) => j.max(1),
        AmplitudeLevels::LeastTerm => problem.max_levels,
    };
    let xs: Vec<f64> = (0..n).map(|k| lo + k as f64 * dx).collect();
    let slices: Vec<ProbeSlice> = problem
        .probes_x1
        .iter()
        .map(|&x1| -> Result<ProbeSlice> {
            let rows: Vec<(f64, f64, Vec<C64>)> = xs
                .par_iter()
                .map(|&xp| -> Result<(f64, f64, Vec<C64>)> {
                    let g = problem.eikonal.gradient(&[x1, xp])?;
                    let phi = problem.eikonal.value(&[x1, xp])?;
                    let gc = problem.amplitude.g_coeffs(xp - problem.amplitude.v * x1, 2 * max_levels + 1);
                    Ok((phi, g[0], gc))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut s = ProbeSlice { x1, phi: Vec::new(), phi_x1: Vec::new(), gc: Vec::new() };
            for (p, p1, gc) in rows {
                s.phi.push(p);
                s.phi_x1.push(p1);
                s.gc.push(gc);
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    // level values and x1-derivatives, h-independent
    let level_data: Vec<Vec<(Vec<C64>, Vec<C64>)>> = slices
        .iter()
        .map(|s| s.gc.iter().map(|gc| problem.amplitude.levels_from(s.x1, gc, max_levels)).collect())
        .collect();
    let mut level_sups = vec![0.0f64; max_levels];
    for sl in &level_data {
        for (a, _) in sl {
            for (j, v) in a.iter().enumerate() {
                level_sups[j] = level_sups[j].max(v.norm());
            }
        }
    }
    let mut residuals = Vec::new();
    let mut used = Vec::new();
    let mut runtime = Vec::new();
    let mut scale: f64 = 0.0;
    for &h in h_list {
        let t0 = Instant::now();
        let ppw = 2.0 * std::f64::consts::PI * h / (eta.abs().max(1e-300) * dx);
        if ppw < MIN_POINTS_PER_WAVELENGTH {
            return Err(Error::ResolutionInsufficient { points_per_wavelength: ppw });
        }
        let turns = eta * len / (2.0 * std::f64::consts::PI * h);
        if (turns - turns.round()).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("η' L / (2πh) = {turns} is not an integer; the ansatz is not periodic")));
        }
        let count = match levels {
            AmplitudeLevels::Truncated(j) => j,
            AmplitudeLevels::LeastTerm => {
                let sizes: Vec<C64> = level_sups.iter().map(|&v| C64::new(v, 0.0)).collect();
                borel_resum_values(&sizes, h).n_star
            }
        };
        let mut worst: f64 = 0.0;
        for (s, data) in slices.iter().zip(&level_data) {
            let mut u = Vec::with_capacity(n);
            let mut d1u = Vec::with_capacity(n);
            for (k, (a, d)) in data.iter().enumerate() {
                let (amp, damp) = if count == 0 {
                    (s.gc[k][0], C64::new(0.0, 0.0))
                } else {
                    let mut amp = C64::new(0.0, 0.0);
                    let mut damp = C64::new(0.0, 0.0);
                    for j in 0..count {
                        let w = h.powi(j as i32);
                        amp += a[j] * w;
                        damp += d[j] * w;
                    }
                    (amp, damp)
                };
                let e = C64::from_polar(1.0, s.phi[k] / h);
                u.push(amp * e);
                // hD_{x1}(a e^{iφ/h}) = e^{iφ/h}(φ_{x1} a + (h/i) ∂_{x1} a)
                d1u.push(e * (amp * s.phi_x1[k] + damp * C64::new(0.0, -h)));
            }
            scale = scale.max(u.iter().map(|c| c.norm()).fold(0.0, f64::max));
            let gf = GridFunction::new(u, vec![problem.xp_box], vec![n], h)?;
            let op = QuantizedOperator::new(problem.model.slice_symbol(s.x1, problem.xp_box)?, h, ApplyMode::Fft);
            let qu = apply_pdo(&op, &gf)?;
            for (a, b) in qu.samples.iter().zip(&d1u) {
                worst = worst.max((a + b).norm());
            }
        }
        residuals.push(worst);
        used.push(count);
        runtime.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let kind = match levels {
        AmplitudeLevels::Truncated(_) => FitKind::Algebraic,
        AmplitudeLevels::LeastTerm => FitKind::StretchedExp,
    };
    let fit = fit_decay_or_floor(h_list, &residuals, kind, scale.max(1.0))?;
    Ok(WkbSweep {
        report: HSweepReport { h_values: h_list.to_vec(), residuals, fit, runtime_ms: runtime },
        levels_used: used,
        level_sups,
    })
}

/// Chebyshev–Lobatto in `x1` times Fourier in `x'` (periodic box).
#[derive(Debug, Clone)]
pub struct TransportGrid {
    pub x1: (f64, f64),
    /// Chebyshev degree; `m + 1` nodes.
    pub m: usize,
    pub xp: (f64, f64),
    pub n: usize,
}

impl TransportGrid {
    pub fn x1_nodes(&self) -> Vec<f64> {
        cheb::nodes(self.x1.0, self.x1.1, self.m)
    }

    pub fn xp_nodes(&self) -> Vec<f64> {
        let d = (self.xp.1 - self.xp.0) / self.n as f64;
        (0..self.n).map(|k| self.xp.0 + k as f64 * d).collect()
    }

    fn freqs(&self) -> Vec<f64> {
        let len = self.xp.1 - self.xp.0;
        (0..self.n)
            .map(|k| {
                let s = if k <= self.n / 2 { k as f64 } else { k as f64 - self.n as f64 };
                if self.n % 2 == 0 && k == self.n / 2 {
                    0.0
                } else {
                    2.0 * std::f64::consts::PI * s / len
                }
            })
            .collect()
    }

    /// Node values `v[i][k]` at `(x1_i, x'_k)`.
    pub fn sample(&self, f: impl Fn(f64, f64) -> C64) -> Vec<Vec<C64>> {
        let xp = self.xp_nodes();
        self.x1_nodes().iter().map(|&a| xp.iter().map(|&b| f(a, b)).collect()).collect()
    }

    fn d_x1(&self, v: &[Vec<C64>]) -> Vec<Vec<C64>> {
        self.by_columns(v, |c| cheb::differentiate(c, self.x1.0, self.x1.1))
    }

    fn integrate_x1(&self, v: &[Vec<C64>]) -> Vec<Vec<C64>> {
        self.by_columns(v, |c| cheb::cumulative_integral(c, self.x1.0, self.x1.1, 0.0))
    }

    fn by_columns(&self, v: &[Vec<C64>], op: impl Fn(&[C64]) -> Vec<C64>) -> Vec<Vec<C64>> {
        let mut out = vec![vec![C64::new(0.0, 0.0); self.n]; self.m + 1];
        for k in 0..self.n {
            let col: Vec<C64> = v.iter().map(|row| row[k]).collect();
            for (i, val) in op(&col).into_iter().enumerate() {
                out[i][k] = val;
            }
        }
        out
    }

    fn d_xp(&self, v: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(self.n);
        let inv = planner.plan_fft_inverse(self.n);
        let w = self.freqs();
        v.iter()
            .map(|row| {
                let mut r = row.clone();
                fwd.process(&mut r);
                for (c, &t) in r.iter_mut().zip(&w) {
                    *c *= C64::new(0.0, t) / self.n as f64;
                }
                inv.process(&mut r);
                r
            })
            .collect()
    }
}

/// Interpolant of node values on a [`TransportGrid`], with exact Taylor expansions.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: TransportGrid,
    /// Chebyshev coefficients in `x1` of each Fourier mode, `coef[k][p]`.
    coef: Vec<Vec<C64>>,
    freq: Vec<f64>,
}

impl SpectralField {
    pub fn from_values(grid: &TransportGrid, v: &[Vec<C64>]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(grid.n);
        let rows: Vec<Vec<C64>> = v
            .iter()
            .map(|row| {
                let mut r = row.clone();
                fwd.process(&mut r);
                r.iter().map(|c| c / grid.n as f64).collect()
            })
            .collect();
        let coef = (0..grid.n)
            .map(|k| cheb::coefficients(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
            .collect();
        SpectralField { grid: grid.clone(), coef, freq: grid.freqs() }
    }

    /// `∂_{x1}^a ∂_{x'}^b` at a point, for all `a + b <= order`, as a normalized Taylor series.
    fn taylor_impl(&self, x: &[f64], order: usize) -> Tps {
        let (lo, hi) = self.grid.x1;
        let t = cheb::to_unit(x[0], lo, hi);
        let s1 = 2.0 / (hi - lo);
        let mut out = Tps::zero(2, order);
        // per mode: x1-derivatives up to `order`
        let mut d1 = vec![vec![C64::new(0.0, 0.0); order + 1]; self.grid.n];
        for (k, c) in self.coef.iter().enumerate() {
            let mut cur = c.clone();
            for (a, slot) in d1[k].iter_mut().enumerate() {
                *slot = cheb::eval(&cur, t) * s1.powi(a as i32);
                if a < order {
                    cur = cheb::derivative(&cur);
                }
            }
        }
        for a in 0..=order {
            for b in 0..=order - a {
                let mut s = C64::new(0.0, 0.0);
                for (k, &w) in self.freq.iter().enumerate() {
                    let e = C64::from_polar(1.0, w * (x[1] - self.grid.xp.0));
                    s += d1[k][a] * e * C64::new(0.0, w).powi(b as i32);
                }
                let idx = out.table().index_of(&[a as u16, b as u16]).unwrap();
                out.coeffs_mut()[idx] = s * (-ln_factorial(a) - ln_factorial(b)).exp();
            }
        }
        out
    }

    pub fn scaled(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.coef.iter_mut().flatten().for_each(|v| *v *= c);
        out
    }
}

impl SmoothField for SpectralField {
    fn arity(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64]) -> C64 {
        self.taylor_impl(x, 0).value()
    }

    fn taylor(&self, x: &[f64], order: usize) -> Tps {
        self.taylor_impl(x, order)
    }
}

/// Levels `a_j` of `(h/i)∂_{x1}a_0 + q a_0 = 0`, `(h/i)∂_{x1}a_j + q a_j = -r_1(q, a_{j-1})`,
/// `a_0|_{x1=0} = a0_init`, `a_j|_{x1=0} = 0`, at a fixed covector `θ`.
#[derive(Debug, Clone)]
pub struct TransportHierarchy {
    /// `h`-free terms `a_j / h^j`.
    pub a_seq: FormalSymbolSeq,
    pub q_input: SymbolSpec,
    pub a0_initial: SymbolSpec,
    /// `a_j` including the power of `h`, as node values.
    pub levels: Vec<Vec<Vec<C64>>>,
    pub theta: Vec<f64>,
    pub h: f64,
    pub grid: TransportGrid,
    pub bounds: FormalBoundsReport,
    /// Max over the grid of `|(h/i)∂_{x1}a_0 + q a_0|`.
    pub transport_residual: f64,
}

/// Solve the first `levels` transport equations. `q` is over `(x1, x2, t1, t2)` and must be a
/// polynomial of degree at most 2 in `(t1, t2)`, so that `r_1(q, a)` is the finite sum
/// `Σ_{1<=|α|<=2} h^{|α|}/α! D_θ^α q ∂_x^α a`. `a0_init` is over `(x1, x2)`, read on `x1 = 0`.
pub fn transport_hierarchy(
    q: &SymbolSpec,
    a0_init: &SymbolSpec,
    levels: usize,
    h: f64,
    theta: &[f64],
    grid: &TransportGrid,
) -> Result<TransportHierarchy> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("h must be positive, got {h}")));
    }
    if q.arity() != 4 || a0_init.arity() != 2 || theta.len() != 2 {
        return Err(Error::InvalidInput("q over (x1, x2, t1, t2), a0_init over (x1, x2), θ of length 2".into()));
    }
    if grid.x1.0 > 0.0 || grid.x1.1 < 0.0 {
        return Err(Error::InvalidInput("x1 chart must contain 0".into()));
    }
    let e = q.field.expr();
    for a in 2..4 {
        for b in a..4 {
            for c in b..4 {
                if !e.diff(a).diff(b).diff(c).is_zero() {
                    return Err(Error::ModelNotSupported("q must be a polynomial of degree <= 2 in θ".into()));
                }
            }
        }
    }
    let at = |f: &Expr| grid.sample(|x1, xp| f.eval(&[x1, xp, theta[0], theta[1]]));
    let qv = at(e);
    // (α, α!, D_θ^α q) for 1 <= |α| <= 2
    let alphas: [([usize; 2], f64); 5] = [([1, 0], 1.0), ([0, 1], 1.0), ([2, 0], 2.0), ([1, 1], 1.0), ([0, 2], 2.0)];
    let dq: Vec<Option<Vec<Vec<C64>>>> = alphas
        .iter()
        .map(|(al, _)| {
            let mut d = e.clone();
            for _ in 0..al[0] {
                d = d.diff(2);
            }
            for _ in 0..al[1] {
                d = d.diff(3);
            }
            let k = (al[0] + al[1]) as i32;
            (!d.is_zero()).then(|| {
                at(&d).into_iter().map(|r| r.into_iter().map(|v| v * C64::new(0.0, -1.0).powi(k)).collect()).collect()
            })
        })
        .collect();
    let xp = grid.xp_nodes();
    let init: Vec<C64> = xp.iter().map(|&y| a0_init.field.eval(&[0.0, y])).collect();
    if let Some(m) = init.iter().map(|v| v.norm()).reduce(f64::min) {
        if m < ELLIPTIC_TOL {
            return Err(Error::EllipticityLost { min: m });
        }
    }
    let iq = grid.integrate_x1(&qv);
    let a0: Vec<Vec<C64>> = iq
        .iter()
        .map(|row| row.iter().zip(&init).map(|(s, g)| g * (C64::new(0.0, -1.0 / h) * s).exp()).collect())
        .collect();
    let min_a0 = a0.iter().flatten().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
    if min_a0 < ELLIPTIC_TOL {
        return Err(Error::EllipticityLost { min: min_a0 });
    }
    let zip2 = |a: &[Vec<C64>], b: &[Vec<C64>], f: &dyn Fn(C64, C64) -> C64| -> Vec<Vec<C64>> {
        a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| f(*x, *y)).collect()).collect()
    };
    let d1a0 = grid.d_x1(&a0);
    let mut transport_residual: f64 = 0.0;
    for i in 0..=grid.m {
        for k in 0..grid.n {
            let r = d1a0[i][k] * C64::new(0.0, -h) + qv[i][k] * a0[i][k];
            transport_residual = transport_residual.max(r.norm());
        }
    }
    let mut out = vec![a0.clone()];
    for _ in 1..levels.max(1) {
        let prev = out.last().unwrap();
        let mut r = vec![vec![C64::new(0.0, 0.0); grid.n]; grid.m + 1];
        for ((al, fact), d) in alphas.iter().zip(&dq) {
            let Some(d) = d else { continue };
            let mut da = prev.clone();
            for _ in 0..al[0] {
                da = grid.d_x1(&da);
            }
            for _ in 0..al[1] {
                da = grid.d_xp(&da);
            }
            let w = h.powi((al[0] + al[1]) as i32) / fact;
            r = zip2(&r, &zip2(d, &da, &|x, y| x * y * w), &|x, y| x + y);
        }
        let integral = grid.integrate_x1(&zip2(&r, &a0, &|x, y| x / y));
        out.push(zip2(&a0, &integral, &|a, s| C64::new(0.0, -1.0 / h) * a * s));
    }
    out.truncate(levels.max(1));
    let domain = vec![grid.x1, grid.xp];
    let terms = out
        .iter()
        .enumerate()
        .map(|(j, v)| FormalTerm {
            field: Arc::new(SpectralField::from_values(grid, v).scaled(C64::new(h.powi(-(j as i32)), 0.0)))
                as Arc<dyn SmoothField>,
            domain_box: domain.clone(),
        })
        .collect();
    let mut a_seq = FormalSymbolSeq { terms, order_m: 0.0, constant_c: 1.0, gevrey_s: q.gevrey_s };
    a_seq.constant_c = minimal_formal_constant(&a_seq, h, 4, 4) * (1.0 + 1e-9);
    let bounds = check_formal_bounds(&a_seq, h, 4, 4);
    Ok(TransportHierarchy {
        a_seq,
        q_input: q.clone(),
        a0_initial: a0_init.clone(),
        levels: out,
        theta: theta.to_vec(),
        h,
        grid: grid.clone(),
        bounds,
        transport_residual,
    })
}
