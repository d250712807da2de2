//! Gauss–Legendre quadrature on uniform panels with dyadic refinement.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

fn legendre_rule(n: usize) -> GaussRule {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = x;
                p0 = 1.0;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if n == 1 {
            dp = 1.0;
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n == 1 {
        nodes[0] = 0.0;
        weights[0] = 2.0;
    }
    GaussRule { nodes, weights }
}

/// Cached `n`-point Gauss–Legendre rule.
pub fn gauss_legendre(n: usize) -> Arc<GaussRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut g = cache.lock().unwrap();
    g.entry(n).or_insert_with(|| Arc::new(legendre_rule(n))).clone()
}

/// Quadrature controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSpec {
    /// Points per panel.
    pub order: usize,
    /// Panels per axis at the first level.
    pub initial_panels: usize,
    /// Maximum number of dyadic refinements.
    pub max_levels: usize,
    /// Relative agreement required between successive levels.
    pub rel_tol: f64,
    /// Absolute floor relative to the integral of the modulus.
    pub abs_floor: f64,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { order: 20, initial_panels: 4, max_levels: 9, rel_tol: 1e-10, abs_floor: 1e-15 }
    }
}

/// Result with the achieved agreement between the last two levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: C64,
    pub error: f64,
    pub abs_mass: f64,
    pub panels: usize,
}

/// Tensor-product panel rule on a box; returns (value, integral of modulus).
pub fn tensor_rule<F>(f: &F, bounds: &[(f64, f64)], panels: usize, order: usize) -> (C64, f64)
where
    F: Fn(&[f64]) -> C64 + Sync,
{
    let rule = gauss_legendre(order);
    let d = bounds.len();
    let per_axis: Vec<Vec<(f64, f64)>> = bounds
        .iter()
        .map(|&(a, b)| {
            let w = (b - a) / panels as f64;
            let mut pts = Vec::with_capacity(panels * order);
            for p in 0..panels {
                let c = a + (p as f64 + 0.5) * w;
                for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
                    pts.push((c + 0.5 * w * x, 0.5 * w * wt));
                }
            }
            pts
        })
        .collect();
    if d == 0 {
        let v = f(&[]);
        return (v, v.norm());
    }
    let first = &per_axis[0];
    let rest: usize = per_axis[1..].iter().map(|v| v.len()).product();
    first
        .par_iter()
        .map(|&(x0, w0)| {
            let mut x = vec![0.0; d];
            x[0] = x0;
            let mut acc = C64::new(0.0, 0.0);
            let mut mass = 0.0;
            for flat in 0..rest {
                let mut k = flat;
                let mut w = w0;
                for ax in (1..d).rev() {
                    let len = per_axis[ax].len();
                    let (xa, wa) = per_axis[ax][k % len];
                    k /= len;
                    x[ax] = xa;
                    w *= wa;
                }
                let v = f(&x);
                acc += v * w;
                mass += v.norm() * w;
            }
            (acc, mass)
        })
        .reduce(|| (C64::new(0.0, 0.0), 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
}

/// Integrate over a box, doubling the panel count until two levels agree.
pub fn integrate<F>(f: F, bounds: &[(f64, f64)], spec: &QuadSpec) -> Result<QuadResult>
where
    F: Fn(&[f64]) -> C64 + Sync,
{
    let mut panels = spec.initial_panels.max(1);
    let (mut prev, _) = tensor_rule(&f, bounds, panels, spec.order);
    let mut err = f64::INFINITY;
    for _ in 0..spec.max_levels {
        panels *= 2;
        let (cur, mass) = tensor_rule(&f, bounds, panels, spec.order);
        err = (cur - prev).norm();
        if err <= spec.rel_tol * cur.norm() || err <= spec.abs_floor * mass.max(f64::MIN_POSITIVE) {
            return Ok(QuadResult { value: cur, error: err, abs_mass: mass, panels });
        }
        prev = cur;
    }
    Err(Error::QuadratureNotConverged { achieved: err / prev.norm().max(f64::MIN_POSITIVE) })
}

/// One-dimensional convenience wrapper.
pub fn integrate_1d<F>(f: F, a: f64, b: f64, spec: &QuadSpec) -> Result<QuadResult>
where
    F: Fn(f64) -> C64 + Sync,
{
    integrate(|x: &[f64]| f(x[0]), &[(a, b)], spec)
}

/// Fixed composite rule on `[a, b]`, returned as (nodes, weights).
pub fn composite_nodes(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let rule = gauss_legendre(order);
    let w = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * w;
        for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
            xs.push(c + 0.5 * w * x);
            ws.push(0.5 * w * wt);
        }
    }
    (xs, ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let r = gauss_legendre(10);
        let s: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
        assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_gaussian_in_two_dimensions() {
        let r = integrate(|x: &[f64]| C64::new((-x[0] * x[0] - x[1] * x[1]).exp(), 0.0), &[(-7.0, 7.0), (-7.0, 7.0)], &QuadSpec::default()).unwrap();
        assert!((r.value.re - std::f64::consts::PI).abs() < 1e-12);
    }
}
