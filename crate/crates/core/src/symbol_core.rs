//! Symbols, Gevrey quasinorms, Gevrey-constant estimates and least-term resummation.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{parse, Expr, Tape, VarSpace};
use crate::tps::Tps;

/// Anything that can be evaluated and Taylor-expanded exactly.
pub trait SmoothField: Send + Sync {
    fn arity(&self) -> usize;
    fn eval(&self, x: &[f64]) -> C64;
    fn taylor(&self, x: &[f64], order: usize) -> Tps;
}

/// Expression-backed field in a fixed number of real variables.
#[derive(Debug, Clone)]
pub struct ScalarField {
    expr: Expr,
    arity: usize,
    tape: Tape,
}

impl ScalarField {
    pub fn new(expr: Expr, arity: usize) -> Result<Self> {
        if expr.min_arity() > arity {
            return Err(Error::InvalidInput(format!(
                "expression uses variable {} but arity is {arity}",
                expr.min_arity()
            )));
        }
        let tape = expr.compile();
        Ok(ScalarField { expr, arity, tape })
    }

    pub fn parse(src: &str, vars: &VarSpace) -> Result<Self> {
        let e = parse(src, vars)?;
        Self::new(e, vars.len())
    }

    pub fn constant(c: C64, arity: usize) -> Self {
        Self::new(Expr::constant(c), arity).unwrap()
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn eval(&self, x: &[f64]) -> C64 {
        self.tape.eval(x)
    }

    pub fn eval_with(&self, x: &[f64], scratch: &mut Vec<C64>) -> C64 {
        self.tape.eval_with(x, scratch)
    }

    pub fn taylor(&self, x: &[f64], order: usize) -> Tps {
        self.expr.taylor(x, order)
    }

    pub fn diff(&self, v: usize) -> ScalarField {
        ScalarField::new(self.expr.diff(v), self.arity).unwrap()
    }

    pub fn derivative(&self, alpha: &[usize]) -> ScalarField {
        ScalarField::new(self.expr.diff_multi(alpha), self.arity).unwrap()
    }

    /// True when the imaginary part vanishes on all `points`.
    pub fn is_real_on(&self, points: &[Vec<f64>], tol: f64) -> bool {
        points.iter().all(|p| self.eval(p).im.abs() <= tol)
    }
}

impl SmoothField for ScalarField {
    fn arity(&self) -> usize {
        self.arity
    }

    fn eval(&self, x: &[f64]) -> C64 {
        self.tape.eval(x)
    }

    fn taylor(&self, x: &[f64], order: usize) -> Tps {
        self.expr.taylor(x, order)
    }
}

/// A symbol with its claimed order, Gevrey index and domain.
#[derive(Debug, Clone)]
pub struct SymbolSpec {
    pub field: ScalarField,
    pub order_m: f64,
    pub gevrey_s: f64,
    pub domain_box: Vec<(f64, f64)>,
}

impl SymbolSpec {
    pub fn new(field: ScalarField, order_m: f64, gevrey_s: f64, domain_box: Vec<(f64, f64)>) -> Result<Self> {
        if gevrey_s < 1.0 {
            return Err(Error::InvalidInput(format!("gevrey_s = {gevrey_s} < 1")));
        }
        if domain_box.len() != field.arity {
            return Err(Error::InvalidInput("domain box dimension differs from arity".into()));
        }
        if domain_box.iter().any(|&(a, b)| !(a <= b)) {
            return Err(Error::InvalidInput("empty domain box".into()));
        }
        Ok(SymbolSpec { field, order_m, gevrey_s, domain_box })
    }

    /// Parse over `vars`, with the same interval on every axis.
    pub fn parse(src: &str, vars: &VarSpace, order_m: f64, gevrey_s: f64, interval: (f64, f64)) -> Result<Self> {
        let f = ScalarField::parse(src, vars)?;
        let n = vars.len();
        Self::new(f, order_m, gevrey_s, vec![interval; n])
    }

    pub fn arity(&self) -> usize {
        self.field.arity
    }
}

/// Sample points at which suprema are taken.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pub points: Vec<Vec<f64>>,
}

impl SampleGrid {
    /// Uniform tensor grid with `n` points per axis, endpoints included.
    pub fn tensor(domain: &[(f64, f64)], n: usize) -> Self {
        let axes: Vec<Vec<f64>> = domain
            .iter()
            .map(|&(a, b)| {
                if n <= 1 || a == b {
                    vec![0.5 * (a + b)]
                } else {
                    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
                }
            })
            .collect();
        let mut points = vec![Vec::new()];
        for ax in &axes {
            let mut next = Vec::with_capacity(points.len() * ax.len());
            for p in &points {
                for &x in ax {
                    let mut q = p.clone();
                    q.push(x);
                    next.push(q);
                }
            }
            points = next;
        }
        SampleGrid { points }
    }

    pub fn from_points(points: Vec<Vec<f64>>) -> Self {
        SampleGrid { points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuasinormReport {
    pub t: f64,
    pub m: f64,
    pub truncation_order: usize,
    pub value_lower: f64,
    pub value_upper: f64,
    pub tail_bound: f64,
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

fn multi_factorial_s(e: &[u16], s: f64) -> f64 {
    (s * e.iter().map(|&k| ln_factorial(k as usize)).sum::<f64>()).exp()
}

/// Per-point sums `Σ_{|γ|=k} |∂^γ a| / γ!^s` for `k = 0..=order`.
fn order_sums(f: &dyn SmoothField, p: &[f64], order: usize, s: f64) -> Vec<f64> {
    f.taylor(p, order).degree_sums(|e| 1.0 / multi_factorial_s(e, s))
}

/// Geometric rate of the tail from the last few nonzero order sums.
fn tail_ratio(m: &[f64]) -> Option<f64> {
    let nz: Vec<(usize, f64)> = m.iter().copied().enumerate().skip(1).filter(|&(_, v)| v > 0.0).collect();
    if nz.len() < 2 {
        return None;
    }
    let start = nz.len().saturating_sub(4);
    let tail = &nz[start..];
    let mut rho: f64 = 0.0;
    for w in tail.windows(2) {
        let (j, a) = w[0];
        let (k, b) = w[1];
        rho = rho.max((b / a).powf(1.0 / (k - j) as f64));
    }
    Some(rho)
}

/// Truncated Gevrey quasinorm with a geometric tail estimate.
pub fn quasinorm(a: &SymbolSpec, t: f64, h: f64, max_order: usize, grid: &SampleGrid) -> Result<QuasinormReport> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput("T must be positive".into()));
    }
    let s = a.gevrey_s;
    let hm = h.powf(a.order_m);
    let sums: Vec<Vec<f64>> = grid.points.par_iter().map(|p| order_sums(&a.field, p, max_order, s)).collect();
    let mut value_lower: f64 = 0.0;
    let mut per_order = vec![0.0f64; max_order + 1];
    for row in &sums {
        let mut total = 0.0;
        for (k, v) in row.iter().enumerate() {
            let w = hm * t.powi(k as i32) * v;
            total += w;
            per_order[k] = per_order[k].max(w);
        }
        value_lower = value_lower.max(total);
    }
    let tail_bound = if per_order[max_order] == 0.0 && max_order > 0 && per_order[max_order - 1] == 0.0 {
        0.0
    } else {
        match tail_ratio(&per_order) {
            None => 0.0,
            Some(rho) if rho >= 1.0 => return Err(Error::NonConvergentTail { ratio: rho }),
            Some(rho) => per_order[max_order] * rho / (1.0 - rho),
        }
    };
    Ok(QuasinormReport {
        t,
        m: a.order_m,
        truncation_order: max_order,
        value_lower,
        value_upper: value_lower + tail_bound,
        tail_bound,
    })
}

/// Least `C >= 1` with `sup|∂^α a| <= C^{|α|+1} α!^s` up to `max_order`, plus the
/// RMS residual of a linear fit of `log sup_{|α|=k} |∂^α a|/α!^s` against `k`.
pub fn estimate_gevrey_constant(a: &SymbolSpec, max_order: usize, grid: &SampleGrid) -> (f64, f64) {
    let s = a.gevrey_s;
    let d = derivative_maxima(&a.field, max_order, grid, s);
    gevrey_constant_from_maxima(&d)
}

/// `D_k = max over grid and |α| = k of |∂^α a| / α!^s`.
pub fn derivative_maxima(f: &dyn SmoothField, max_order: usize, grid: &SampleGrid, s: f64) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = grid
        .points
        .par_iter()
        .map(|p| {
            let t = f.taylor(p, max_order);
            let mut d = vec![0.0f64; max_order + 1];
            let table = t.table();
            for (k, c) in t.coeffs().iter().enumerate() {
                let e = table.exponents(k);
                let fact: f64 = e.iter().map(|&x| ln_factorial(x as usize)).sum::<f64>();
                // |∂^e a| / e!^s = |c_e| e!^{1-s}
                let v = c.norm() * ((1.0 - s) * fact).exp();
                let deg = table.degree(k);
                d[deg] = d[deg].max(v);
            }
            d
        })
        .collect();
    let mut out = vec![0.0f64; max_order + 1];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r) {
            *o = o.max(v);
        }
    }
    out
}

pub fn gevrey_constant_from_maxima(d: &[f64]) -> (f64, f64) {
    let mut c: f64 = 1.0;
    for (k, &v) in d.iter().enumerate() {
        if v > 0.0 {
            c = c.max(v.powf(1.0 / (k as f64 + 1.0)));
        }
    }
    let pts: Vec<(f64, f64)> = d.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(k, &v)| (k as f64, v.ln())).collect();
    (c, linear_fit_rms(&pts))
}

fn linear_fit_rms(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    if pts.len() < 3 {
        return 0.0;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ss: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    (ss / n).sqrt()
}

/// One term of a formal symbol.
#[derive(Clone)]
pub struct FormalTerm {
    pub field: Arc<dyn SmoothField>,
    pub domain_box: Vec<(f64, f64)>,
}

impl std::fmt::Debug for FormalTerm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FormalTerm").field("arity", &self.field.arity()).field("domain_box", &self.domain_box).finish()
    }
}

/// Sequence `(a_j)` with `a_j` of order `m - j` and Gevrey constants `(C, s)`.
#[derive(Debug, Clone)]
pub struct FormalSymbolSeq {
    pub terms: Vec<FormalTerm>,
    pub order_m: f64,
    pub constant_c: f64,
    pub gevrey_s: f64,
}

impl FormalSymbolSeq {
    pub fn from_specs(specs: Vec<SymbolSpec>, constant_c: f64, gevrey_s: f64) -> Self {
        let order_m = specs.first().map(|s| s.order_m).unwrap_or(0.0);
        let terms = specs
            .into_iter()
            .map(|s| FormalTerm { domain_box: s.domain_box.clone(), field: Arc::new(s.field) as Arc<dyn SmoothField> })
            .collect();
        FormalSymbolSeq { terms, order_m, constant_c, gevrey_s }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BorelResult {
    pub value: C64,
    pub n_star: usize,
    pub immediate_divergence: bool,
}

/// Relative tolerance under which two consecutive term moduli count as equal.
pub const TIE_RTOL: f64 = 1e-12;

/// Sum `Σ_{j<N*} a_j h^j` where `N*` is the first index at which the nonzero
/// term moduli `|a_j| h^j` stop decreasing.
pub fn borel_resum_values(a: &[C64], h: f64) -> BorelResult {
    let mut value = C64::new(0.0, 0.0);
    let mut prev: Option<f64> = None;
    let mut hj = 1.0;
    for (j, &aj) in a.iter().enumerate() {
        let t = aj.norm() * hj;
        if t > 0.0 {
            if let Some(p) = prev {
                if t >= p * (1.0 - TIE_RTOL) {
                    let immediate = j == 1 && a[0].norm() > 0.0;
                    return BorelResult { value, n_star: j, immediate_divergence: immediate };
                }
            }
            prev = Some(t);
        }
        value += aj * hj;
        hj *= h;
    }
    BorelResult { value, n_star: a.len(), immediate_divergence: false }
}

/// Least-term resummation of `seq` at `point`.
pub fn borel_resum(seq: &FormalSymbolSeq, h: f64, point: &[f64]) -> BorelResult {
    let vals: Vec<C64> = seq.terms.iter().map(|t| t.field.eval(point)).collect();
    borel_resum_values(&vals, h)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormalBoundsReport {
    pub pass: bool,
    pub worst_ratio: f64,
    /// `(j, |α|+|β|)` of the worst ratio.
    pub worst_at: (usize, usize),
}

/// Check `|∂^γ a_j| <= C^{1+|γ|+j} j!^s γ!^s h^{j-m}` on the sample grid.
pub fn check_formal_bounds(seq: &FormalSymbolSeq, h: f64, max_order: usize, points_per_axis: usize) -> FormalBoundsReport {
    let s = seq.gevrey_s;
    let c = seq.constant_c;
    let mut worst = 0.0f64;
    let mut worst_at = (0, 0);
    for (j, term) in seq.terms.iter().enumerate() {
        let grid = SampleGrid::tensor(&term.domain_box, points_per_axis);
        let d = derivative_maxima(term.field.as_ref(), max_order, &grid, s);
        let lj = s * ln_factorial(j) + (j as f64 - seq.order_m) * h.ln();
        for (k, &v) in d.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let bound = ((1 + k + j) as f64 * c.ln() + lj).exp();
            let r = v / bound;
            if r > worst {
                worst = r;
                worst_at = (j, k);
            }
        }
    }
    FormalBoundsReport { pass: worst <= 1.0, worst_ratio: worst, worst_at }
}

/// Least `C >= 1` for which [`check_formal_bounds`] passes at this `h`.
pub fn minimal_formal_constant(seq: &FormalSymbolSeq, h: f64, max_order: usize, points_per_axis: usize) -> f64 {
    let s = seq.gevrey_s;
    let mut c: f64 = 1.0;
    for (j, term) in seq.terms.iter().enumerate() {
        let grid = SampleGrid::tensor(&term.domain_box, points_per_axis);
        let d = derivative_maxima(term.field.as_ref(), max_order, &grid, s);
        let lj = s * ln_factorial(j) + (j as f64 - seq.order_m) * h.ln();
        for (k, &v) in d.iter().enumerate() {
            if v > 0.0 {
                c = c.max(((v.ln() - lj) / (1 + k + j) as f64).exp());
            }
        }
    }
    c
}
