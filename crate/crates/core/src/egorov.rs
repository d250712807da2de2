//! Semiclassical Fourier integral operators, microlocal inverses and conjugation of
//! evolution operators to `hD_{x1}`.
//!
//! Discretization: on a periodic grid of `N` points and length `L`, the `η` integral is the
//! sum over the grid frequencies `η_k = 2πhk/L`, so that
//! `Fu(x_m) = N^{-1} Σ_k e^{iS(x_m, η_k)/h} a(x_m, η_k) Σ_j e^{-i y_j η_k / h} u_j`.

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::{
    apply_pdo, fftn, ifftn, signed_freq, theta_of, top_band_fraction, ApplyMode, GridFunction, QuantizedOperator,
    BAND_LIMIT_TOL,
};
use crate::error::{Error, Result};
use crate::expr::Tape;
use crate::fit::{fit_decay_or_floor, FitKind, HSweepReport};
use crate::quad::composite_nodes;
use crate::symbol_core::{ScalarField, SmoothField, SymbolSpec};
use crate::wkb::{solve_eikonal, ShiftModel, ELLIPTIC_TOL};
use crate::C64;

/// `Fu(x) = (2πh)^{-1} ∬ e^{(i/h)(S(x,η) - yη)} a(x,η) u(y) dy dη` in one dimension.
#[derive(Debug, Clone)]
pub struct FIOSpec {
    /// `S` over `(x, η)`.
    pub phase: ScalarField,
    /// `a` over `(x, η)`; the second axis of its box is taken as the `η`-support.
    pub amplitude: SymbolSpec,
    pub order_m: f64,
}

impl FIOSpec {
    pub fn new(phase: ScalarField, amplitude: SymbolSpec, order_m: f64) -> Result<Self> {
        if phase.arity() != 2 || amplitude.arity() != 2 {
            return Err(Error::InvalidInput("phase and amplitude must be over (x, η)".into()));
        }
        Ok(FIOSpec { phase, amplitude, order_m })
    }
}

fn check_probe(u: &GridFunction) -> Result<()> {
    if u.dim() != 1 {
        return Err(Error::InvalidInput("FIOs act on one-dimensional grids".into()));
    }
    let f = top_band_fraction(u);
    if f > BAND_LIMIT_TOL {
        return Err(Error::AliasingRisk { fraction: f });
    }
    Ok(())
}

/// `k(x_m, η_k)` for every grid point and frequency.
fn kernel_table(u: &GridFunction, k: impl Fn(f64, f64, &mut Vec<C64>) -> C64 + Sync) -> Vec<Vec<C64>> {
    let xs = u.axis(0);
    let eta: Vec<f64> = (0..u.n_points[0]).map(|j| theta_of(u, 0, j)).collect();
    xs.par_iter()
        .map(|&x| {
            let mut scratch = Vec::new();
            eta.iter().map(|&e| k(x, e, &mut scratch)).collect()
        })
        .collect()
}

/// `û_k = Σ_j u_j e^{-i y_j η_k / h}`.
fn partial_hat(u: &GridFunction) -> Vec<C64> {
    let mut s = u.samples.clone();
    fftn(&mut s, &u.n_points);
    let lo = u.bounds[0].0;
    s.iter().enumerate().map(|(k, c)| c * C64::from_polar(1.0, -lo * theta_of(u, 0, k) / u.h)).collect()
}

/// Inverse of [`partial_hat`].
fn partial_unhat(v: &[C64], like: &GridFunction) -> Vec<C64> {
    let lo = like.bounds[0].0;
    let mut s: Vec<C64> =
        v.iter().enumerate().map(|(k, c)| c * C64::from_polar(1.0, lo * theta_of(like, 0, k) / like.h)).collect();
    ifftn(&mut s, &like.n_points);
    s
}

/// A FIO frozen on a grid.
#[derive(Debug, Clone)]
pub struct DiscreteFio {
    table: Vec<Vec<C64>>,
    pub h: f64,
}

impl DiscreteFio {
    pub fn new(f: &FIOSpec, like: &GridFunction) -> Self {
        let phase = f.phase.expr().compile();
        let amp = f.amplitude.field.expr().compile();
        let h = like.h;
        let table = kernel_table(like, |x, e, sc| {
            amp.eval_with(&[x, e], sc) * C64::from_polar(1.0, phase.eval_with(&[x, e], sc).re / h)
        });
        DiscreteFio { table, h }
    }

    pub fn apply(&self, u: &GridFunction) -> GridFunction {
        let n = u.n_points[0] as f64;
        let uh = partial_hat(u);
        let samples = self.table.par_iter().map(|row| row.iter().zip(&uh).map(|(t, v)| t * v).sum::<C64>() / n).collect();
        GridFunction { samples, ..u.clone() }
    }

    /// Exact adjoint of [`Self::apply`] in the grid inner product.
    pub fn adjoint(&self, v: &GridFunction) -> GridFunction {
        let n = v.n_points[0];
        let inner: Vec<C64> = (0..n)
            .into_par_iter()
            .map(|k| self.table.iter().zip(&v.samples).map(|(row, w)| row[k].conj() * w).sum::<C64>())
            .collect();
        // N^{-1} Σ_k e^{i x η_k / h} (·)_k is the inverse of the hat transform
        GridFunction { samples: partial_unhat(&inner, v), ..v.clone() }
    }
}

pub fn apply_fio(f: &FIOSpec, u: &GridFunction) -> Result<GridFunction> {
    check_probe(u)?;
    Ok(DiscreteFio::new(f, u).apply(u))
}

/// `F^*u(x) = (2πh)^{-1} ∬ e^{(i/h)(xη - S(y,η))} conj(a(y,η)) u(y) dy dη`.
pub fn apply_fio_adjoint(f: &FIOSpec, u: &GridFunction) -> Result<GridFunction> {
    check_probe(u)?;
    Ok(DiscreteFio::new(f, u).adjoint(u))
}

/// `1` on `|t| <= 1/2`, `0` on `|t| >= 1`, Gevrey-2 in between.
pub fn gevrey_cutoff(t: f64) -> f64 {
    let s = 2.0 * t.abs() - 1.0;
    if s <= 0.0 {
        return 1.0;
    }
    if s >= 1.0 {
        return 0.0;
    }
    let f = |v: f64| (-1.0 / v).exp();
    f(1.0 - s) / (f(1.0 - s) + f(s))
}

#[derive(Debug, Clone)]
pub struct AdjointComposition {
    /// `FF^*u` computed from the two discrete operators.
    pub ffstar: GridFunction,
    /// `K_1 u` from the cut-off kernel in the reduced variable `η = Σ(x, y, ξ)`.
    pub k1: GridFunction,
    /// `‖FF^*u - K_1u‖_{L^2}`, an estimate of `‖K_2 u‖`.
    pub k2_estimate: f64,
}

/// `Σ(x, y, ξ) = ∫_0^1 S_x(y + t(x - y), ξ) dt` and `∂_ξ Σ`.
fn sigma(sx: &Tape, sxe: &Tape, x: f64, y: f64, xi: f64, nodes: &[f64], weights: &[f64], scratch: &mut Vec<C64>) -> (f64, f64) {
    let mut s = 0.0;
    let mut d = 0.0;
    for (t, w) in nodes.iter().zip(weights) {
        let p = [y + t * (x - y), xi];
        s += w * sx.eval_with(&p, scratch).re;
        d += w * sxe.eval_with(&p, scratch).re;
    }
    (s, d)
}

/// `FF^*u` directly and `K_1 u` with cutoff `χ((x - y)/δ)`:
/// `K_1u(x) = (2πh)^{-1} ∬ χ((x-y)/δ) e^{i(x-y)η/h} a(x, ξ) conj(a(y, ξ)) |∂_η ξ| u(y) dy dη`,
/// `ξ = Σ^{-1}(x, y, η)`, the inverse taken by Newton over the `η`-support of `a`.
pub fn fio_adjoint_compose(f: &FIOSpec, u: &GridFunction, delta: f64) -> Result<AdjointComposition> {
    check_probe(u)?;
    let h = u.h;
    let op = DiscreteFio::new(f, u);
    let ffstar = op.apply(&op.adjoint(u));
    let sx = f.phase.expr().diff(0).compile();
    let sxe = f.phase.expr().diff(0).diff(1).compile();
    let amp = f.amplitude.field.expr().compile();
    let (xi_lo, xi_hi) = f.amplitude.domain_box[1];
    let (gn, gw) = composite_nodes(0.0, 1.0, 1, 8);
    let skip = 1e-14 * u.norm_sup();
    let xs = u.axis(0);
    let dy = u.spacing(0);
    let samples: Vec<C64> = xs
        .par_iter()
        .map(|&x| -> Result<C64> {
            let mut scratch = Vec::new();
            let mut acc = C64::new(0.0, 0.0);
            for (&y, &uy) in xs.iter().zip(&u.samples) {
                let chi = gevrey_cutoff((x - y) / delta);
                if chi == 0.0 || uy.norm() <= skip {
                    continue;
                }
                let (e0, _) = sigma(&sx, &sxe, x, y, xi_lo, &gn, &gw, &mut scratch);
                let (e1, _) = sigma(&sx, &sxe, x, y, xi_hi, &gn, &gw, &mut scratch);
                let (lo, hi) = if e0 <= e1 { (e0, e1) } else { (e1, e0) };
                let cycles = (x - y).abs() * (hi - lo) / (2.0 * std::f64::consts::PI * h);
                let panels = cycles.ceil() as usize + 2;
                let (en, ew) = composite_nodes(lo, hi, panels, 12);
                let mut xi = if e0 <= e1 { xi_lo } else { xi_hi };
                let mut k = C64::new(0.0, 0.0);
                for (&eta, &w) in en.iter().zip(&ew) {
                    // ξ = Σ^{-1}(x, y, η), warm-started from the previous node
                    let mut d = 1.0;
                    for it in 0..50 {
                        let (s, ds) = sigma(&sx, &sxe, x, y, xi, &gn, &gw, &mut scratch);
                        if ds.abs() < 1e-12 {
                            return Err(Error::DegenerateMixedHessian { det: ds });
                        }
                        let step = (s - eta) / ds;
                        xi -= step;
                        d = ds;
                        if step.abs() < 1e-14 * (1.0 + xi.abs()) {
                            break;
                        }
                        if it == 49 {
                            return Err(Error::NewtonFailed { residual: step.abs() });
                        }
                    }
                    let aa = amp.eval_with(&[x, xi], &mut scratch) * amp.eval_with(&[y, xi], &mut scratch).conj();
                    k += C64::from_polar(w / d.abs(), (x - y) * eta / h) * aa;
                }
                acc += k * chi * uy * dy / (2.0 * std::f64::consts::PI * h);
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let k1 = GridFunction { samples, ..u.clone() };
    let k2_estimate = ffstar.sub(&k1).norm_l2();
    Ok(AdjointComposition { ffstar, k1, k2_estimate })
}

/// `G = Σ_{k<N} (I - G_0F)^k G_0` with `G_0 = F_c^*`, `c = |S_{xη}| / conj(a)` (set to zero where
/// `|a| < ELLIPTIC_TOL`), so that `GF = I - (I - G_0F)^N`.
#[derive(Debug, Clone)]
pub struct MicrolocalInverse {
    pub forward: FIOSpec,
    pub terms: usize,
}

pub fn microlocal_inverse(f: &FIOSpec, working_point: (f64, f64), n: usize) -> Result<MicrolocalInverse> {
    let a0 = f.amplitude.field.eval(&[working_point.0, working_point.1]);
    if a0.norm() < ELLIPTIC_TOL {
        return Err(Error::EllipticityLost { min: a0.norm() });
    }
    Ok(MicrolocalInverse { forward: f.clone(), terms: n.max(1) })
}

impl MicrolocalInverse {
    /// Amplitude `c` of `G_0 = F_c^*` at `(x, η)`.
    pub fn g0_amplitude(&self, x: f64, eta: f64) -> C64 {
        let a = self.forward.amplitude.field.eval(&[x, eta]);
        if a.norm() < ELLIPTIC_TOL {
            return C64::new(0.0, 0.0);
        }
        let sxe = self.forward.phase.taylor(&[x, eta], 2).derivative(&[1, 1]).re;
        sxe.abs() / a.conj()
    }

    fn g0_table(&self, like: &GridFunction) -> DiscreteFio {
        let phase = self.forward.phase.expr().compile();
        let h = like.h;
        let table = kernel_table(like, |x, e, sc| {
            self.g0_amplitude(x, e) * C64::from_polar(1.0, phase.eval_with(&[x, e], sc).re / h)
        });
        DiscreteFio { table, h }
    }

    pub fn apply(&self, w: &GridFunction) -> Result<GridFunction> {
        check_probe(w)?;
        let g0 = self.g0_table(w);
        let f = DiscreteFio::new(&self.forward, w);
        let mut t = g0.adjoint(w);
        let mut acc = t.clone();
        for _ in 1..self.terms {
            t = t.sub(&g0.adjoint(&f.apply(&t)));
            acc = acc.add(&t);
        }
        Ok(acc)
    }
}

/// `h^{-n/4} e^{(i/h)(x-x0)·ξ0 - |x-x0|²/(2h)}` on a grid.
pub fn coherent_state(bounds: Vec<(f64, f64)>, n_points: Vec<usize>, h: f64, x0: &[f64], xi0: &[f64]) -> Result<GridFunction> {
    let d = x0.len() as f64;
    GridFunction::from_fn(bounds, n_points, h, |x| {
        let mut ph = 0.0;
        let mut r2 = 0.0;
        for ((a, b), c) in x.iter().zip(x0).zip(xi0) {
            ph += (a - b) * c;
            r2 += (a - b) * (a - b);
        }
        C64::from_polar(h.powf(-d / 4.0) * (-r2 / (2.0 * h)).exp(), ph / h)
    })
}

/// Conjugation of `P = hD_{x1} + Op_h(q)` in two variables, `q` in the class of [`ShiftModel`].
#[derive(Debug, Clone)]
pub struct EgorovSetup {
    /// `q` over `(x1, x2, t1, t2)`.
    pub q: SymbolSpec,
    /// Amplitude of `F` on `x1 = 0`, over `(x1, x2)`, periodic on `xp_box`.
    pub a0_init: ScalarField,
    pub x1_box: (f64, f64),
    pub n1: usize,
    pub xp_box: (f64, f64),
    pub n_xp: usize,
    /// Working point of the coherent-state probes.
    pub x0: [f64; 2],
    pub xi0: [f64; 2],
    /// Transport levels in the amplitude of `F`.
    pub levels: usize,
    /// Neumann terms in `G`; defaults to `levels + 2`.
    pub neumann_terms: Option<usize>,
}

/// Partial FIO `Fu(x1, x') = N'^{-1} Σ_k e^{iφ(x1, x', η_k)/h} A(x1, x', η_k) û(x1, η_k)` with
/// `φ = x'η + Φ(x1; η)` and `A(x1_i, x', η_k) = P_i(x' - v_k x1_i)`, stored as the Fourier
/// coefficients of each row profile `P_i`.
#[derive(Debug, Clone)]
pub struct PartialFio {
    pub n1: usize,
    pub n_xp: usize,
    pub h: f64,
    pub x1: Vec<f64>,
    /// `Φ(x1_i; η_k) / h`.
    phase: Vec<Vec<f64>>,
    /// `v_k`.
    speed: Vec<f64>,
    /// `w_p = 2π p / L'` (signed).
    wave: Vec<f64>,
    /// Significant `(p, P̂_i(p))` per row.
    profile: Vec<Vec<(usize, C64)>>,
}

fn fft_rows(data: &mut [C64], n_row: usize, inverse: bool) {
    let mut planner = rustfft::FftPlanner::new();
    let plan = if inverse { planner.plan_fft_inverse(n_row) } else { planner.plan_fft_forward(n_row) };
    for row in data.chunks_mut(n_row) {
        plan.process(row);
        if inverse {
            row.iter_mut().for_each(|c| *c /= n_row as f64);
        }
    }
}

/// Rows carrying more than `1e-17` of the largest entry; both operators act row by row,
/// so the others are mapped to zero.
fn live_rows(data: &[C64], n_row: usize) -> Vec<bool> {
    let m = data.iter().map(|c| c.norm()).fold(0.0, f64::max);
    data.chunks(n_row).map(|r| r.iter().any(|c| c.norm() > 1e-17 * m)).collect()
}

fn significant(coef: &[C64]) -> Vec<(usize, C64)> {
    let m = coef.iter().map(|c| c.norm()).fold(0.0, f64::max);
    coef.iter().enumerate().filter(|(_, c)| c.norm() > 1e-16 * m).map(|(p, c)| (p, *c)).collect()
}

impl PartialFio {
    /// Same frozen phase with row profiles given by samples `p[i][m] = P_i(y_m)`.
    pub fn with_profiles(&self, samples: &[Vec<C64>]) -> PartialFio {
        let profile = samples
            .iter()
            .map(|row| {
                let mut r = row.clone();
                fft_rows(&mut r, self.n_xp, false);
                r.iter_mut().for_each(|c| *c /= self.n_xp as f64);
                significant(&r)
            })
            .collect();
        PartialFio { profile, ..self.clone() }
    }

    /// Row profile samples `P_i(y_m)`.
    pub fn profile_samples(&self) -> Vec<Vec<C64>> {
        self.profile
            .iter()
            .map(|modes| {
                let mut r = vec![C64::new(0.0, 0.0); self.n_xp];
                for &(p, c) in modes {
                    r[p] = c * self.n_xp as f64;
                }
                fft_rows(&mut r, self.n_xp, true);
                r
            })
            .collect()
    }

    fn check(&self, u: &GridFunction) -> Result<()> {
        if u.n_points != [self.n1, self.n_xp] {
            return Err(Error::InvalidInput("grid differs from the one the FIO was frozen on".into()));
        }
        Ok(())
    }

    pub fn apply(&self, u: &GridFunction) -> Result<GridFunction> {
        self.check(u)?;
        let n = self.n_xp;
        let mut s = u.samples.clone();
        fft_rows(&mut s, n, false);
        let mut out = vec![C64::new(0.0, 0.0); s.len()];
        let live = live_rows(&s, n);
        out.par_chunks_mut(n).zip(s.par_chunks(n)).enumerate().filter(|(i, _)| live[*i]).for_each(|(i, (o, uh))| {
            let x1 = self.x1[i];
            for (k, &uk) in uh.iter().enumerate() {
                if uk == C64::new(0.0, 0.0) {
                    continue;
                }
                let base = uk * C64::from_polar(1.0, self.phase[i][k]);
                for &(p, c) in &self.profile[i] {
                    o[(k + p) % n] += base * c * C64::from_polar(1.0, -self.wave[p] * self.speed[k] * x1);
                }
            }
        });
        fft_rows(&mut out, n, true);
        Ok(GridFunction { samples: out, ..u.clone() })
    }

    /// Exact adjoint of [`Self::apply`].
    pub fn adjoint(&self, v: &GridFunction) -> Result<GridFunction> {
        self.check(v)?;
        let n = self.n_xp;
        let mut s = v.samples.clone();
        fft_rows(&mut s, n, false);
        let mut out = vec![C64::new(0.0, 0.0); s.len()];
        let live = live_rows(&s, n);
        out.par_chunks_mut(n).zip(s.par_chunks(n)).enumerate().filter(|(i, _)| live[*i]).for_each(|(i, (o, vh))| {
            let x1 = self.x1[i];
            for (k, ok) in o.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for &(p, c) in &self.profile[i] {
                    acc += c.conj() * C64::from_polar(1.0, self.wave[p] * self.speed[k] * x1) * vh[(k + p) % n];
                }
                *ok = acc * C64::from_polar(1.0, -self.phase[i][k]);
            }
        });
        fft_rows(&mut out, n, true);
        Ok(GridFunction { samples: out, ..v.clone() })
    }
}

/// `hD_{x1}` by FFT along the first axis.
pub fn hd1(u: &GridFunction) -> GridFunction {
    let (n1, n2) = (u.n_points[0], u.n_points[1]);
    let mut planner = rustfft::FftPlanner::new();
    let fwd = planner.plan_fft_forward(n1);
    let inv = planner.plan_fft_inverse(n1);
    let mut out = u.samples.clone();
    let mut col = vec![C64::new(0.0, 0.0); n1];
    for m in 0..n2 {
        for i in 0..n1 {
            col[i] = out[i * n2 + m];
        }
        fwd.process(&mut col);
        for (k, c) in col.iter_mut().enumerate() {
            *c *= theta_of(u, 0, k) / n1 as f64;
        }
        inv.process(&mut col);
        for i in 0..n1 {
            out[i * n2 + m] = col[i];
        }
    }
    GridFunction { samples: out, ..u.clone() }
}

/// Frozen pieces of the conjugation at one `h`.
pub struct Conjugation {
    pub model: ShiftModel,
    pub f: PartialFio,
    /// `G_0 = F_c^*` with `c = |det φ_{x'η}| / conj(a) = 1 / conj(a)`, stored as the FIO `F_c`.
    pub g0: PartialFio,
    pub neumann_terms: usize,
    pub xp_box: (f64, f64),
}

impl Conjugation {
    pub fn new(setup: &EgorovSetup, h: f64) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidInput(format!("h must be positive, got {h}")));
        }
        let model = ShiftModel::new(&setup.q)?;
        let lambda = model.lambda()?;
        let chart = [setup.x1_box, setup.xp_box];
        let base = solve_eikonal(&lambda, &[setup.xi0[1]], &chart, 1e-8)?;
        let like = GridFunction {
            samples: Vec::new(),
            bounds: chart.to_vec(),
            n_points: vec![setup.n1, setup.n_xp],
            h,
        };
        let x1 = like.axis(0);
        let eta: Vec<f64> = (0..setup.n_xp).map(|k| theta_of(&like, 1, k)).collect();
        let by_k: Vec<Vec<f64>> = eta
            .par_iter()
            .map(|&e| {
                let mut sol = base.clone();
                sol.eta = vec![e];
                sol.phase_profile(&x1)
            })
            .collect::<Result<Vec<_>>>()?;
        let phase = (0..setup.n1).map(|i| by_k.iter().map(|p| p[i] / h).collect()).collect();
        let len = setup.xp_box.1 - setup.xp_box.0;
        let wave = (0..setup.n_xp)
            .map(|p| 2.0 * std::f64::consts::PI * signed_freq(p, setup.n_xp) as f64 / len)
            .collect();
        // with no transport level the amplitude is a0_init, not moved along x1
        let speed = eta.iter().map(|&e| if setup.levels == 0 { 0.0 } else { model.speed(e) }).collect();
        // P_i(y) = Σ_{j<J} h^j (i c2 x1_i)^j / j! g^{(2j)}(y), from the Fourier coefficients of g
        let ys = like.axis(1);
        let mut g: Vec<C64> = ys.iter().map(|&y| setup.a0_init.eval(&[0.0, y])).collect();
        fft_rows(&mut g, setup.n_xp, false);
        // drop round-off modes before the level sum multiplies them by powers of w²
        let mut ghat: Vec<C64> = g.iter().map(|c| c / setup.n_xp as f64).collect();
        let keep = significant(&ghat);
        ghat.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
        for (p, c) in keep {
            ghat[p] = c;
        }
        let shell = PartialFio { n1: setup.n1, n_xp: setup.n_xp, h, x1: x1.clone(), phase, speed, wave, profile: Vec::new() };
        let profile = x1
            .iter()
            .map(|&t| {
                let coef: Vec<C64> = ghat
                    .iter()
                    .zip(&shell.wave)
                    .map(|(c, &w)| {
                        if setup.levels == 0 {
                            return *c;
                        }
                        // (i c2 x1 h)^j (iw)^{2j} / j!
                        let z = C64::new(0.0, -model.c2 * t * h * w * w);
                        let mut term = C64::new(1.0, 0.0);
                        let mut sum = C64::new(0.0, 0.0);
                        for j in 0..setup.levels {
                            sum += term;
                            term *= z / (j + 1) as f64;
                        }
                        c * sum
                    })
                    .collect();
                significant(&coef)
            })
            .collect();
        let f = PartialFio { profile, ..shell };
        let samples = f.profile_samples();
        let min = samples.iter().flatten().map(|c| c.norm()).fold(f64::INFINITY, f64::min);
        if min < ELLIPTIC_TOL {
            return Err(Error::EllipticityLost { min });
        }
        let inv: Vec<Vec<C64>> = samples.iter().map(|r| r.iter().map(|c| 1.0 / c.conj()).collect()).collect();
        let g0 = f.with_profiles(&inv);
        Ok(Conjugation {
            model,
            f,
            g0,
            neumann_terms: setup.neumann_terms.unwrap_or(setup.levels + 2).max(1),
            xp_box: setup.xp_box,
        })
    }

    /// `G w = Σ_{k<N_G} (I - G_0F)^k G_0 w`.
    pub fn inverse(&self, w: &GridFunction) -> Result<GridFunction> {
        let mut t = self.g0.adjoint(w)?;
        let mut acc = t.clone();
        for _ in 1..self.neumann_terms {
            t = t.sub(&self.g0.adjoint(&self.f.apply(&t)?)?);
            acc = acc.add(&t);
        }
        Ok(acc)
    }

    /// `P w = hD_{x1} w + Op_h(q(x1, ·)) w` row by row.
    pub fn apply_p(&self, w: &GridFunction) -> Result<GridFunction> {
        let mut out = hd1(w);
        let n = w.n_points[1];
        for (i, &x1) in self.f.x1.iter().enumerate() {
            let row = GridFunction::new(w.samples[i * n..(i + 1) * n].to_vec(), vec![self.xp_box], vec![n], w.h)?;
            let op = QuantizedOperator::new(self.model.slice_symbol(x1, self.xp_box)?, w.h, ApplyMode::Fft);
            let qr = apply_pdo(&op, &row)?;
            for (o, v) in out.samples[i * n..(i + 1) * n].iter_mut().zip(&qr.samples) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// `‖(GPF - hD_{x1})u‖ / ‖u‖`.
    pub fn residual(&self, u: &GridFunction) -> Result<f64> {
        let gpf = self.inverse(&self.apply_p(&self.f.apply(u)?)?)?;
        Ok(gpf.sub(&hd1(u)).norm_l2() / u.norm_l2())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjugationReport {
    pub report: HSweepReport,
    pub levels: usize,
    pub neumann_terms: usize,
}

/// Residual of `GPF - hD_{x1}` on coherent states at the working point, fitted against `h`.
pub fn egorov_conjugate(setup: &EgorovSetup, h_list: &[f64]) -> Result<ConjugationReport> {
    let mut residuals = Vec::new();
    let mut runtime = Vec::new();
    let mut terms = 0;
    for &h in h_list {
        let t0 = std::time::Instant::now();
        let c = Conjugation::new(setup, h)?;
        terms = c.neumann_terms;
        let u = coherent_state(vec![setup.x1_box, setup.xp_box], vec![setup.n1, setup.n_xp], h, &setup.x0, &setup.xi0)?;
        let f = top_band_fraction(&u);
        if f > BAND_LIMIT_TOL {
            return Err(Error::AliasingRisk { fraction: f });
        }
        residuals.push(c.residual(&u)?);
        runtime.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let fit = fit_decay_or_floor(h_list, &residuals, FitKind::Algebraic, 1.0)?;
    Ok(ConjugationReport {
        report: HSweepReport { h_values: h_list.to_vec(), residuals, fit, runtime_ms: runtime },
        levels: setup.levels,
        neumann_terms: terms,
    })
}
