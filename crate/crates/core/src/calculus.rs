//! Left quantization on periodic grids, symbol composition and the `J^t` family.

use std::io::{Read, Write};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::fit::linear_regression;
use crate::quad::{integrate, QuadSpec};
use crate::symbol_core::{ScalarField, SymbolSpec};

pub const GRID_MAGIC: &[u8; 16] = b"GEVREY-GRIDFN\0\0\0";

/// Samples on a periodic tensor grid `x_k = lo + k (hi - lo) / N`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub samples: Vec<C64>,
    pub bounds: Vec<(f64, f64)>,
    pub n_points: Vec<usize>,
    pub h: f64,
}

impl GridFunction {
    pub fn new(samples: Vec<C64>, bounds: Vec<(f64, f64)>, n_points: Vec<usize>, h: f64) -> Result<Self> {
        if bounds.len() != n_points.len() {
            return Err(Error::InvalidInput("box and counts differ in dimension".into()));
        }
        if n_points.iter().any(|&n| n == 0 || !n.is_power_of_two()) {
            return Err(Error::InvalidInput("grid counts must be powers of two".into()));
        }
        if samples.len() != n_points.iter().product::<usize>() {
            return Err(Error::InvalidInput("sample count does not match grid".into()));
        }
        if samples.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        Ok(GridFunction { samples, bounds, n_points, h })
    }

    pub fn from_fn<F: Fn(&[f64]) -> C64 + Sync>(bounds: Vec<(f64, f64)>, n_points: Vec<usize>, h: f64, f: F) -> Result<Self> {
        let total: usize = n_points.iter().product();
        let proto = GridFunction { samples: Vec::new(), bounds: bounds.clone(), n_points: n_points.clone(), h };
        let samples = (0..total).into_par_iter().map(|i| f(&proto.coords(i))).collect();
        Self::new(samples, bounds, n_points, h)
    }

    pub fn dim(&self) -> usize {
        self.n_points.len()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.bounds[axis].1 - self.bounds[axis].0) / self.n_points[axis] as f64
    }

    pub fn axis(&self, axis: usize) -> Vec<f64> {
        let d = self.spacing(axis);
        (0..self.n_points[axis]).map(|k| self.bounds[axis].0 + k as f64 * d).collect()
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        let mut k = flat;
        for ax in (0..self.dim()).rev() {
            let n = self.n_points[ax];
            out[ax] = self.bounds[ax].0 + (k % n) as f64 * self.spacing(ax);
            k /= n;
        }
        out
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn norm_l2(&self) -> f64 {
        (self.samples.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.cell_volume()).sqrt()
    }

    pub fn norm_sup(&self) -> f64 {
        self.samples.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn inner(&self, other: &GridFunction) -> C64 {
        self.samples.iter().zip(&other.samples).map(|(a, b)| a * b.conj()).sum::<C64>() * self.cell_volume()
    }

    pub fn map_samples(&self, f: impl Fn(C64) -> C64) -> GridFunction {
        GridFunction { samples: self.samples.iter().map(|&c| f(c)).collect(), ..self.clone() }
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        let samples = self.samples.iter().zip(&other.samples).map(|(a, b)| a - b).collect();
        GridFunction { samples, ..self.clone() }
    }

    pub fn add(&self, other: &GridFunction) -> GridFunction {
        let samples = self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect();
        GridFunction { samples, ..self.clone() }
    }

    pub fn scale(&self, c: C64) -> GridFunction {
        self.map_samples(|v| v * c)
    }

    /// Binary form: magic, one ASCII header line, then little-endian `re, im` pairs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 16 * self.samples.len());
        out.extend_from_slice(GRID_MAGIC);
        let bx: Vec<String> = self.bounds.iter().map(|(a, b)| format!("{a:?},{b:?}")).collect();
        let cn: Vec<String> = self.n_points.iter().map(|n| n.to_string()).collect();
        let header = format!("n={} box={} counts={} h={:?}\n", self.dim(), bx.join(";"), cn.join(","), self.h);
        out.extend_from_slice(header.as_bytes());
        for c in &self.samples {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::InvalidInput(format!("grid function format: {m}"));
        if bytes.len() < 16 || &bytes[..16] != GRID_MAGIC {
            return Err(bad("missing magic"));
        }
        let rest = &bytes[16..];
        let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("missing header line"))?;
        let header = std::str::from_utf8(&rest[..nl]).map_err(|_| bad("header not utf-8"))?;
        let mut n = None;
        let mut bounds = Vec::new();
        let mut counts = Vec::new();
        let mut h = None;
        for field in header.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| bad("header field"))?;
            match k {
                "n" => n = v.parse::<usize>().ok(),
                "box" => {
                    for pair in v.split(';') {
                        let (a, b) = pair.split_once(',').ok_or_else(|| bad("box"))?;
                        bounds.push((a.parse().map_err(|_| bad("box"))?, b.parse().map_err(|_| bad("box"))?));
                    }
                }
                "counts" => {
                    for c in v.split(',') {
                        counts.push(c.parse::<usize>().map_err(|_| bad("counts"))?);
                    }
                }
                "h" => h = v.parse::<f64>().ok(),
                _ => return Err(bad("unknown header field")),
            }
        }
        let n = n.ok_or_else(|| bad("n"))?;
        let h = h.ok_or_else(|| bad("h"))?;
        if bounds.len() != n || counts.len() != n {
            return Err(bad("dimension mismatch"));
        }
        let data = &rest[nl + 1..];
        let total: usize = counts.iter().product();
        if data.len() != 16 * total {
            return Err(bad("payload length"));
        }
        let samples = data
            .chunks_exact(16)
            .map(|c| C64::new(f64::from_le_bytes(c[..8].try_into().unwrap()), f64::from_le_bytes(c[8..].try_into().unwrap())))
            .collect();
        Self::new(samples, bounds, counts, h)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::from_bytes(&buf)
    }
}

/// Signed frequency index of FFT bin `k`.
pub fn signed_freq(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

fn fft_axis(data: &mut [C64], dims: &[usize], axis: usize, inverse: bool) {
    let n = dims[axis];
    if n == 1 {
        return;
    }
    let stride: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut planner = FftPlanner::new();
    let plan = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut line = vec![C64::new(0.0, 0.0); n];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * n * stride + s;
            for k in 0..n {
                line[k] = data[base + k * stride];
            }
            plan.process(&mut line);
            for k in 0..n {
                data[base + k * stride] = line[k];
            }
        }
    }
}

/// Unnormalized forward DFT over every axis.
pub fn fftn(data: &mut [C64], dims: &[usize]) {
    for ax in 0..dims.len() {
        fft_axis(data, dims, ax, false);
    }
}

/// Inverse DFT over every axis, normalized by the total size.
pub fn ifftn(data: &mut [C64], dims: &[usize]) {
    for ax in 0..dims.len() {
        fft_axis(data, dims, ax, true);
    }
    let total: usize = dims.iter().product();
    let s = 1.0 / total as f64;
    data.iter_mut().for_each(|c| *c *= s);
}

/// Frequency-grid value `θ = h 2π k / L` for bin `k` on `axis`.
pub fn theta_of(u: &GridFunction, axis: usize, k: usize) -> f64 {
    let l = u.bounds[axis].1 - u.bounds[axis].0;
    u.h * 2.0 * std::f64::consts::PI * signed_freq(k, u.n_points[axis]) as f64 / l
}

/// Fraction of spectral energy in the top 10% of frequencies along any axis.
pub fn top_band_fraction(u: &GridFunction) -> f64 {
    let mut spec = u.samples.clone();
    fftn(&mut spec, &u.n_points);
    let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let d = u.dim();
    let mut top = 0.0;
    for (i, c) in spec.iter().enumerate() {
        let mut k = i;
        let mut high = false;
        for ax in (0..d).rev() {
            let n = u.n_points[ax];
            let f = signed_freq(k % n, n).unsigned_abs() as f64;
            if f > 0.9 * (n as f64 / 2.0) {
                high = true;
            }
            k /= n;
        }
        if high {
            top += c.norm_sqr();
        }
    }
    top / total
}

/// Band-limit threshold used by [`apply_pdo`].
pub const BAND_LIMIT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplyMode {
    Fft,
    DenseMatrix,
}

/// `Op_h(a)` with `a(x, θ)` over `n` position and `n` frequency variables.
#[derive(Debug, Clone)]
pub struct QuantizedOperator {
    pub symbol: SymbolSpec,
    pub h: f64,
    pub mode: ApplyMode,
}

impl QuantizedOperator {
    pub fn new(symbol: SymbolSpec, h: f64, mode: ApplyMode) -> Self {
        QuantizedOperator { symbol, h, mode }
    }

    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        apply_pdo(self, u)
    }
}

fn x_independent(e: &Expr, n: usize) -> bool {
    (0..n).all(|v| !e.depends_on(v))
}

/// `(Op_h(a) u)(x) = (2πh)^{-n} ∬ e^{iθ(x-y)/h} a(x, θ) u(y) dy dθ` on the periodic grid.
pub fn apply_pdo(op: &QuantizedOperator, u: &GridFunction) -> Result<GridFunction> {
    if (op.h - u.h).abs() > 1e-15 * op.h.abs().max(1.0) {
        return Err(Error::InvalidInput("operator and grid function carry different h".into()));
    }
    let n = u.dim();
    if op.symbol.arity() != 2 * n {
        return Err(Error::InvalidInput("symbol arity must be twice the grid dimension".into()));
    }
    let frac = top_band_fraction(u);
    if frac > BAND_LIMIT_TOL {
        return Err(Error::AliasingRisk { fraction: frac });
    }
    let dims = u.n_points.clone();
    let mut uhat = u.samples.clone();
    fftn(&mut uhat, &dims);
    let total = uhat.len();
    let thetas: Vec<Vec<f64>> = (0..n).map(|ax| (0..dims[ax]).map(|k| theta_of(u, ax, k)).collect()).collect();
    let theta_at = |flat: usize| -> Vec<f64> {
        let mut out = vec![0.0; n];
        let mut k = flat;
        for ax in (0..n).rev() {
            out[ax] = thetas[ax][k % dims[ax]];
            k /= dims[ax];
        }
        out
    };
    if op.mode == ApplyMode::DenseMatrix {
        let m = dense_matrix(op, u)?;
        let out: Vec<C64> = (0..u.samples.len()).into_par_iter().map(|i| m[i].iter().zip(&u.samples).map(|(a, b)| a * b).sum()).collect();
        return GridFunction::new(out, u.bounds.clone(), dims, u.h);
    }
    let sym = &op.symbol.field;
    if x_independent(sym.expr(), n) {
        let x0 = vec![0.0; n];
        let mut out = uhat;
        out.par_iter_mut().enumerate().for_each(|(k, c)| {
            let mut arg = x0.clone();
            arg.extend(theta_at(k));
            *c *= sym.eval(&arg);
        });
        ifftn(&mut out, &dims);
        return GridFunction::new(out, u.bounds.clone(), dims, u.h);
    }
    // general symbol: row m sums a(x_m, θ_k) e^{2πi k·m/N} û_k / N
    let inv_total = 1.0 / total as f64;
    let out: Vec<C64> = (0..total)
        .into_par_iter()
        .map_init(Vec::new, |scratch, m| {
            let x = u.coords(m);
            let mut idx = vec![0usize; n];
            let mut rem = m;
            for ax in (0..n).rev() {
                idx[ax] = rem % dims[ax];
                rem /= dims[ax];
            }
            let mut arg = x.clone();
            arg.resize(2 * n, 0.0);
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..total {
                let mut kk = k;
                let mut phase = 0.0;
                for ax in (0..n).rev() {
                    let kax = kk % dims[ax];
                    kk /= dims[ax];
                    arg[n + ax] = thetas[ax][kax];
                    phase += (kax * idx[ax] % dims[ax]) as f64 / dims[ax] as f64;
                }
                let a = sym.eval_with(&arg, scratch);
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                acc += a * C64::from_polar(1.0, 2.0 * std::f64::consts::PI * phase) * uhat[k];
            }
            acc * inv_total
        })
        .collect();
    GridFunction::new(out, u.bounds.clone(), dims, u.h)
}

/// Matrix `K[m][j]` of `Op_h(a)` on the grid of `u` (one spatial dimension).
pub fn dense_matrix(op: &QuantizedOperator, u: &GridFunction) -> Result<Vec<Vec<C64>>> {
    if u.dim() != 1 {
        return Err(Error::InvalidInput("dense matrix mode is one-dimensional".into()));
    }
    let nn = u.n_points[0];
    let xs = u.axis(0);
    let th: Vec<f64> = (0..nn).map(|k| theta_of(u, 0, k)).collect();
    let mut planner = FftPlanner::new();
    let plan = planner.plan_fft_inverse(nn);
    let rows: Vec<Vec<C64>> = (0..nn)
        .into_par_iter()
        .map(|m| {
            let mut line: Vec<C64> = th.iter().map(|&t| op.symbol.field.eval(&[xs[m], t])).collect();
            plan.process(&mut line);
            // line[l] = Σ_k a_mk e^{2πi k l / N}; K[m][j] = line[(m - j) mod N] / N
            (0..nn).map(|j| line[(m + nn - j) % nn] / nn as f64).collect()
        })
        .collect();
    Ok(rows)
}

/// Multi-indices of total degree `k` in `n` variables.
pub fn multi_indices(n: usize, k: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return if k == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in (0..=k).rev() {
        for mut rest in multi_indices(n - 1, k - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn factorial_multi(a: &[usize]) -> f64 {
    a.iter().map(|&k| (1..=k).product::<usize>() as f64).product()
}

/// Lazily evaluated remainder of an expansion.
#[derive(Debug, Clone)]
pub enum RemainderEvaluator {
    /// Remainder vanishes identically (every order-`N` term is symbolically zero).
    Zero,
    /// `(q # a)(x, θ) - expansion(x, θ)` with the composed symbol by quadrature.
    Composition { q: SymbolSpec, a: SymbolSpec, expansion: ScalarField, h: f64 },
    /// `(J^t b)(x, ξ) - expansion(x, ξ)` with `J^t b` by quadrature.
    JT { b: SymbolSpec, t: f64, expansion: ScalarField },
}

impl RemainderEvaluator {
    pub fn is_identically_zero(&self) -> bool {
        matches!(self, RemainderEvaluator::Zero)
    }

    /// Remainder at `(x, θ)`.
    pub fn eval(&self, point: &[f64], quad: &QuadSpec) -> Result<C64> {
        match self {
            RemainderEvaluator::Zero => Ok(C64::new(0.0, 0.0)),
            RemainderEvaluator::Composition { q, a, expansion, h } => {
                Ok(composed_symbol_quadrature(q, a, *h, point, quad)? - expansion.eval(point))
            }
            RemainderEvaluator::JT { b, t, expansion } => Ok(jt_quadrature(b, *t, point, quad)? - expansion.eval(point)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Expansion {
    pub expansion: SymbolSpec,
    pub remainder: RemainderEvaluator,
}

/// Exact symbol `(2πh)^{-n} ∬ e^{-i z·ζ/h} q(x, θ+ζ) a(x+z, θ) dz dζ` by quadrature.
pub fn composed_symbol_quadrature(q: &SymbolSpec, a: &SymbolSpec, h: f64, point: &[f64], quad: &QuadSpec) -> Result<C64> {
    let n = point.len() / 2;
    let (x, th) = point.split_at(n);
    let mut bounds = Vec::with_capacity(2 * n);
    for i in 0..n {
        let (lo, hi) = a.domain_box[i];
        bounds.push((lo - x[i], hi - x[i]));
    }
    for i in 0..n {
        let (lo, hi) = q.domain_box[n + i];
        bounds.push((lo - th[i], hi - th[i]));
    }
    if bounds.iter().any(|(lo, hi)| !(lo < hi)) {
        return Ok(C64::new(0.0, 0.0));
    }
    let r = integrate(
        |v: &[f64]| {
            let (z, zeta) = v.split_at(n);
            let mut qa: Vec<f64> = x.to_vec();
            qa.extend(th.iter().zip(zeta).map(|(t, s)| t + s));
            let qv = q.field.eval(&qa);
            if qv.re == 0.0 && qv.im == 0.0 {
                return qv;
            }
            let mut aa: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
            aa.extend_from_slice(th);
            let av = a.field.eval(&aa);
            let ph: f64 = z.iter().zip(zeta).map(|(a, b)| a * b).sum::<f64>() / h;
            qv * av * C64::from_polar(1.0, -ph)
        },
        &bounds,
        quad,
    )?;
    Ok(r.value / (2.0 * std::f64::consts::PI * h).powi(n as i32))
}

/// Expansion `Σ_{|α|<N} h^{|α|}/α! D_θ^α q ∂_x^α a` of the composed symbol.
pub fn compose_symbols(q: &SymbolSpec, a: &SymbolSpec, big_n: usize, h: f64) -> Result<Expansion> {
    if big_n < 1 {
        return Err(Error::InvalidInput("N must be at least 1".into()));
    }
    if q.arity() != a.arity() || q.arity() % 2 != 0 {
        return Err(Error::InvalidInput("q and a must share the (x, θ) variables".into()));
    }
    let n = q.arity() / 2;
    let term = |alpha: &[usize]| -> Expr {
        let mut dq = q.field.expr().clone();
        let mut da = a.field.expr().clone();
        for (i, &k) in alpha.iter().enumerate() {
            for _ in 0..k {
                dq = dq.diff(n + i);
                da = da.diff(i);
            }
        }
        let k: usize = alpha.iter().sum();
        let c = C64::new(0.0, -1.0).powi(k as i32) * h.powi(k as i32) / factorial_multi(alpha);
        Expr::product(vec![Expr::constant(c), dq, da])
    };
    let mut terms = Vec::new();
    for k in 0..big_n {
        for alpha in multi_indices(n, k) {
            terms.push(term(&alpha));
        }
    }
    let expr = Expr::sum(terms);
    let field = ScalarField::new(expr, q.arity())?;
    let domain: Vec<(f64, f64)> =
        q.domain_box.iter().zip(&a.domain_box).map(|(&(a0, a1), &(b0, b1))| (a0.max(b0), a1.min(b1))).collect();
    let domain = domain.into_iter().map(|(lo, hi)| if lo <= hi { (lo, hi) } else { (lo, lo) }).collect();
    let expansion = SymbolSpec::new(field.clone(), q.order_m + a.order_m, q.gevrey_s.max(a.gevrey_s), domain)?;
    let zero = multi_indices(n, big_n).iter().all(|al| term(al).is_zero());
    let remainder = if zero {
        RemainderEvaluator::Zero
    } else {
        RemainderEvaluator::Composition { q: q.clone(), a: a.clone(), expansion: field, h }
    };
    Ok(Expansion { expansion, remainder })
}

/// `(J^t b)(x, ξ) = (2π|t|)^{-n} ∬ e^{-i y·η/t} b(x+y, ξ+η) dy dη` by quadrature.
pub fn jt_quadrature(b: &SymbolSpec, t: f64, point: &[f64], quad: &QuadSpec) -> Result<C64> {
    let n = point.len() / 2;
    let mut bounds = Vec::with_capacity(2 * n);
    for i in 0..2 * n {
        let (lo, hi) = b.domain_box[i];
        bounds.push((lo - point[i], hi - point[i]));
    }
    let r = integrate(
        |v: &[f64]| {
            let arg: Vec<f64> = point.iter().zip(v).map(|(p, d)| p + d).collect();
            let bv = b.field.eval(&arg);
            if bv.re == 0.0 && bv.im == 0.0 {
                return bv;
            }
            let ph: f64 = (0..n).map(|i| v[i] * v[n + i]).sum::<f64>() / t;
            bv * C64::from_polar(1.0, -ph)
        },
        &bounds,
        quad,
    )?;
    Ok(r.value / (2.0 * std::f64::consts::PI * t.abs()).powi(n as i32))
}

/// Expansion `Σ_{|α|<N} t^{|α|}/α! D_ξ^α ∂_x^α b` of `J^t b`.
pub fn j_t_apply(b: &SymbolSpec, t: f64, big_n: usize) -> Result<Expansion> {
    if t == 0.0 || big_n < 1 {
        return Err(Error::InvalidInput("need t != 0 and N >= 1".into()));
    }
    if b.arity() % 2 != 0 {
        return Err(Error::InvalidInput("symbol must be over (x, ξ)".into()));
    }
    let n = b.arity() / 2;
    let term = |alpha: &[usize]| -> Expr {
        let mut e = b.field.expr().clone();
        for (i, &k) in alpha.iter().enumerate() {
            for _ in 0..k {
                e = e.diff(i).diff(n + i);
            }
        }
        let k: usize = alpha.iter().sum();
        let c = C64::new(0.0, -1.0).powi(k as i32) * t.powi(k as i32) / factorial_multi(alpha);
        Expr::product(vec![Expr::constant(c), e])
    };
    let mut terms = Vec::new();
    for k in 0..big_n {
        for alpha in multi_indices(n, k) {
            terms.push(term(&alpha));
        }
    }
    let field = ScalarField::new(Expr::sum(terms), b.arity())?;
    let expansion = SymbolSpec::new(field.clone(), b.order_m, b.gevrey_s, b.domain_box.clone())?;
    let zero = multi_indices(n, big_n).iter().all(|al| term(al).is_zero());
    let remainder = if zero { RemainderEvaluator::Zero } else { RemainderEvaluator::JT { b: b.clone(), t, expansion: field } };
    Ok(Expansion { expansion, remainder })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemainderOrderReport {
    pub h_values: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub slope: f64,
    pub r2: f64,
    pub claimed_order: f64,
    pub identically_zero: bool,
    pub pass: bool,
}

/// Log-log slope of `max over probes |remainder|` against `h`; passes iff
/// `slope >= claimed - 0.25`. An identically zero remainder passes with a flag.
pub fn verify_remainder_order<F>(magnitude_at: F, claimed_order: f64, h_list: &[f64]) -> Result<RemainderOrderReport>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if h_list.len() < 4 {
        return Err(Error::InvalidInput("need at least 4 h values".into()));
    }
    let hmax = h_list.iter().cloned().fold(f64::MIN, f64::max);
    let hmin = h_list.iter().cloned().fold(f64::MAX, f64::min);
    if hmax / hmin < 8.0 {
        return Err(Error::InvalidInput("h values must span at least a factor 8".into()));
    }
    let mags: Vec<f64> = h_list.par_iter().map(|&h| magnitude_at(h)).collect::<Result<Vec<_>>>()?;
    if mags.iter().all(|&m| m == 0.0) {
        return Ok(RemainderOrderReport {
            h_values: h_list.to_vec(),
            magnitudes: mags,
            slope: f64::INFINITY,
            r2: 1.0,
            claimed_order,
            identically_zero: true,
            pass: true,
        });
    }
    let pts: Vec<(f64, f64)> = h_list.iter().zip(&mags).filter(|(_, &m)| m > 0.0).map(|(&h, &m)| (h.ln(), m.ln())).collect();
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let (_, slope, r2) = linear_regression(&x, &y);
    Ok(RemainderOrderReport {
        h_values: h_list.to_vec(),
        magnitudes: mags,
        slope,
        r2,
        claimed_order,
        identically_zero: false,
        pass: slope >= claimed_order - 0.25,
    })
}

/// Remainder magnitude at `h` over `probes` for the symbol expansion produced by `build`.
pub fn remainder_magnitude<B>(build: B, h: f64, probes: &[Vec<f64>], quad: &QuadSpec) -> Result<f64>
where
    B: Fn(f64) -> Result<Expansion>,
{
    let e = build(h)?;
    let mut m: f64 = 0.0;
    for p in probes {
        m = m.max(e.remainder.eval(p, quad)?.norm());
    }
    Ok(m)
}
