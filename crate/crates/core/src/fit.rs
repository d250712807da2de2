//! Decay-law regression for h-sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitKind {
    /// `r ≈ A h^slope`
    Algebraic,
    /// `r ≈ A exp(-c h^{-1/s})`
    StretchedExp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: FitKind,
    pub params: FitParams,
    pub r2: f64,
    /// Indices of points excluded as numerical floor.
    pub floor_points: Vec<usize>,
    /// True when every point sat at the floor and no fit was possible.
    pub all_at_floor: bool,
}

/// Measured residuals with the fitted law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HSweepReport {
    pub h_values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub fit: FitResult,
    pub runtime_ms: Vec<f64>,
}

impl HSweepReport {
    pub fn slope(&self) -> Option<f64> {
        self.fit.params.slope
    }
}

/// Ordinary least squares `y ≈ a + b x`; returns `(a, b, r2)`.
pub fn linear_regression(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
    let r2 = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    (a, b, r2)
}

/// Default numerical floor for residuals of size `scale`.
pub fn floor_for_scale(scale: f64) -> f64 {
    100.0 * f64::EPSILON * scale
}

fn split_floor(h: &[f64], r: &[f64], floor: f64) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let mut hs = Vec::new();
    let mut rs = Vec::new();
    let mut fl = Vec::new();
    for (i, (&hv, &rv)) in h.iter().zip(r).enumerate() {
        if rv <= floor {
            fl.push(i);
        } else {
            hs.push(hv);
            rs.push(rv);
        }
    }
    (hs, rs, fl)
}

/// Stretched-exponential fit at fixed `s`: `log r = a - c h^{-1/s}`.
pub fn fit_stretched_fixed(h: &[f64], r: &[f64], s: f64) -> (f64, f64, f64) {
    let x: Vec<f64> = h.iter().map(|v| v.powf(-1.0 / s)).collect();
    let y: Vec<f64> = r.iter().map(|v| v.ln()).collect();
    let (a, b, r2) = linear_regression(&x, &y);
    (a, -b, r2)
}

/// Fit a decay law, excluding points at or below `100 eps scale`.
pub fn fit_decay_scaled(h: &[f64], r: &[f64], kind: FitKind, scale: f64) -> Result<FitResult> {
    if h.len() != r.len() {
        return Err(Error::InvalidInput("h and residual lengths differ".into()));
    }
    if h.len() < 4 {
        return Err(Error::InvalidInput("need at least 4 points".into()));
    }
    if r.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidInput("residuals must be nonnegative".into()));
    }
    let (hs, rs, floor_points) = split_floor(h, r, floor_for_scale(scale));
    if hs.is_empty() {
        return Err(Error::AllAtFloor);
    }
    if hs.len() < 2 {
        return Err(Error::InvalidInput("fewer than two residuals above the floor".into()));
    }
    match kind {
        FitKind::Algebraic => {
            let x: Vec<f64> = hs.iter().map(|v| v.ln()).collect();
            let y: Vec<f64> = rs.iter().map(|v| v.ln()).collect();
            let (a, b, r2) = linear_regression(&x, &y);
            Ok(FitResult {
                kind,
                params: FitParams { slope: Some(b), c: None, s: None, intercept: a },
                r2,
                floor_points,
                all_at_floor: false,
            })
        }
        FitKind::StretchedExp => {
            let grid = [1.0, 1.5, 2.0, 3.0];
            let score = |s: f64| fit_stretched_fixed(&hs, &rs, s).2;
            let (ibest, _) = grid
                .iter()
                .enumerate()
                .map(|(i, &s)| (i, score(s)))
                .fold((0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
            let lo = if ibest == 0 { 0.75 } else { grid[ibest - 1] };
            let hi = if ibest + 1 == grid.len() { 4.0 } else { grid[ibest + 1] };
            let s_gold = golden_max(score, lo, hi, 1e-6);
            let s = if score(s_gold) >= score(grid[ibest]) { s_gold } else { grid[ibest] };
            let (a, c, r2) = fit_stretched_fixed(&hs, &rs, s);
            Ok(FitResult {
                kind,
                params: FitParams { slope: None, c: Some(c), s: Some(s), intercept: a },
                r2,
                floor_points,
                all_at_floor: false,
            })
        }
    }
}

/// Fit with unit problem scale; an all-floor sweep yields a flagged pass.
pub fn fit_decay(h: &[f64], r: &[f64], kind: FitKind) -> Result<FitResult> {
    fit_decay_scaled(h, r, kind, 1.0)
}

/// Like [`fit_decay_scaled`] but maps [`Error::AllAtFloor`] to a flagged result.
pub fn fit_decay_or_floor(h: &[f64], r: &[f64], kind: FitKind, scale: f64) -> Result<FitResult> {
    match fit_decay_scaled(h, r, kind, scale) {
        Err(Error::AllAtFloor) => Ok(FitResult {
            kind,
            params: FitParams { slope: None, c: None, s: None, intercept: 0.0 },
            r2: 1.0,
            floor_points: (0..h.len()).collect(),
            all_at_floor: true,
        }),
        other => other,
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_residuals_report_floor() {
        let h = [0.2, 0.1, 0.05, 0.025];
        assert_eq!(fit_decay(&h, &[0.0; 4], FitKind::Algebraic), Err(Error::AllAtFloor));
        let r = fit_decay_or_floor(&h, &[0.0; 4], FitKind::Algebraic, 1.0).unwrap();
        assert!(r.all_at_floor);
    }
}
