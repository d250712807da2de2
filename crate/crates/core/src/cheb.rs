//! Chebyshev–Lobatto interpolation on an interval.

use num_complex::Complex64 as C64;

/// Lobatto nodes `cos(πi/M)` mapped to `[lo, hi]`, `i = 0..=M` (descending).
pub fn nodes(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    (0..=m)
        .map(|i| {
            let t = (std::f64::consts::PI * i as f64 / m as f64).cos();
            0.5 * (hi + lo) + 0.5 * (hi - lo) * t
        })
        .collect()
}

/// Coefficients `c_p` of `Σ c_p T_p` interpolating `values` at the Lobatto nodes.
pub fn coefficients(values: &[C64]) -> Vec<C64> {
    let m = values.len() - 1;
    let mut c = vec![C64::new(0.0, 0.0); m + 1];
    for (p, cp) in c.iter_mut().enumerate() {
        let mut s = C64::new(0.0, 0.0);
        for (i, v) in values.iter().enumerate() {
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            s += v * w * (std::f64::consts::PI * (p * i) as f64 / m as f64).cos();
        }
        let scale = if p == 0 || p == m { 1.0 } else { 2.0 };
        *cp = s * scale / m as f64;
    }
    c
}

/// Coefficients of the derivative with respect to `t ∈ [-1, 1]`.
pub fn derivative(c: &[C64]) -> Vec<C64> {
    let n = c.len();
    let mut d = vec![C64::new(0.0, 0.0); n];
    if n < 2 {
        return d;
    }
    for p in (0..n - 1).rev() {
        let next = if p + 2 < n { d[p + 2] } else { C64::new(0.0, 0.0) };
        d[p] = next + c[p + 1] * (2.0 * (p + 1) as f64);
    }
    d[0] *= 0.5;
    d
}

/// Coefficients of the antiderivative in `t`, one degree higher, with arbitrary constant.
pub fn antiderivative(c: &[C64]) -> Vec<C64> {
    let n = c.len();
    let mut out = vec![C64::new(0.0, 0.0); n + 1];
    for p in 0..n {
        match p {
            0 => out[1] += c[0],
            1 => out[2] += c[1] * 0.25,
            _ => {
                out[p + 1] += c[p] / (2.0 * (p + 1) as f64);
                out[p - 1] -= c[p] / (2.0 * (p - 1) as f64);
            }
        }
    }
    out
}

/// Clenshaw evaluation at `t ∈ [-1, 1]`.
pub fn eval(c: &[C64], t: f64) -> C64 {
    let mut b1 = C64::new(0.0, 0.0);
    let mut b2 = C64::new(0.0, 0.0);
    for cp in c.iter().skip(1).rev() {
        let b0 = cp + b1 * (2.0 * t) - b2;
        b2 = b1;
        b1 = b0;
    }
    c.first().copied().unwrap_or_default() + b1 * t - b2
}

/// Map `x ∈ [lo, hi]` to `t ∈ [-1, 1]`.
pub fn to_unit(x: f64, lo: f64, hi: f64) -> f64 {
    (2.0 * x - hi - lo) / (hi - lo)
}

/// Values at the nodes of `∫_{x0}^{x} f`, given node values of `f`.
pub fn cumulative_integral(values: &[C64], lo: f64, hi: f64, x0: f64) -> Vec<C64> {
    let c = coefficients(values);
    let mut a = antiderivative(&c);
    let half = 0.5 * (hi - lo);
    a.iter_mut().for_each(|v| *v *= half);
    let base = eval(&a, to_unit(x0, lo, hi));
    let m = values.len() - 1;
    nodes(lo, hi, m).iter().map(|&x| eval(&a, to_unit(x, lo, hi)) - base).collect()
}

/// Values at the nodes of `df/dx`, given node values of `f`.
pub fn differentiate(values: &[C64], lo: f64, hi: f64) -> Vec<C64> {
    let d = derivative(&coefficients(values));
    let s = 2.0 / (hi - lo);
    let m = values.len() - 1;
    nodes(lo, hi, m).iter().map(|&x| eval(&d, to_unit(x, lo, hi)) * s).collect()
}
