//! Hamiltonian flows and generating-function checks.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::{Tape, VarSpace};
use crate::symbol_core::{SampleGrid, ScalarField};
use crate::tps::Tps;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Accepted step with its dense-output polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStep {
    pub t0: f64,
    pub dt: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let th = (t - self.t0) / self.dt;
        let th1 = 1.0 - th;
        let r = &self.rcont;
        (0..r[0].len())
            .map(|i| r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i]))))
            .collect()
    }
}

/// Output of an adaptive integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub steps: Vec<DenseStep>,
}

impl Trajectory {
    /// Dense interpolation at any `t` inside the integrated span.
    pub fn at(&self, t: f64) -> Vec<f64> {
        if self.steps.is_empty() {
            return self.states[0].clone();
        }
        let fwd = self.steps[0].dt > 0.0;
        let idx = self
            .steps
            .iter()
            .position(|s| if fwd { t <= s.t0 + s.dt } else { t >= s.t0 + s.dt })
            .unwrap_or(self.steps.len() - 1);
        self.steps[idx].eval(t)
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().unwrap()
    }
}

/// Dormand–Prince 5(4) with step control on the mixed tolerance `atol + rtol |y|`.
/// `inside` is checked on every accepted state; `false` aborts with [`Error::LeftDomain`].
pub fn dopri5<F, G>(f: F, t0: f64, y0: &[f64], t1: f64, rtol: f64, atol: f64, inside: G) -> Result<Trajectory>
where
    F: Fn(f64, &[f64], &mut [f64]),
    G: Fn(&[f64]) -> bool,
{
    let n = y0.len();
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    f(t, &y, &mut k[0]);
    let span = (t1 - t0).abs();
    let mut dt = dir * (span * 1e-3).max(1e-6).min(span.max(1e-300));
    let mut out = Trajectory { times: vec![t], states: vec![y.clone()], steps: Vec::new() };
    if span == 0.0 {
        return Ok(out);
    }
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut nsteps = 0usize;
    while dir * (t1 - t) > 1e-14 * span {
        nsteps += 1;
        if nsteps > 2_000_000 {
            return Err(Error::InvalidInput("step budget exhausted".into()));
        }
        if dir * (t + dt - t1) > 0.0 {
            dt = t1 - t;
        }
        let (k0, rest) = k.split_at_mut(1);
        let k1 = &k0[0];
        for i in 0..n {
            tmp[i] = y[i] + dt * A21 * k1[i];
        }
        f(t + C2 * dt, &tmp, &mut rest[0]);
        for i in 0..n {
            tmp[i] = y[i] + dt * (A31 * k1[i] + A32 * rest[0][i]);
        }
        f(t + C3 * dt, &tmp, &mut rest[1]);
        for i in 0..n {
            tmp[i] = y[i] + dt * (A41 * k1[i] + A42 * rest[0][i] + A43 * rest[1][i]);
        }
        f(t + C4 * dt, &tmp, &mut rest[2]);
        for i in 0..n {
            tmp[i] = y[i] + dt * (A51 * k1[i] + A52 * rest[0][i] + A53 * rest[1][i] + A54 * rest[2][i]);
        }
        f(t + C5 * dt, &tmp, &mut rest[3]);
        for i in 0..n {
            tmp[i] = y[i] + dt * (A61 * k1[i] + A62 * rest[0][i] + A63 * rest[1][i] + A64 * rest[2][i] + A65 * rest[3][i]);
        }
        f(t + dt, &tmp, &mut rest[4]);
        for i in 0..n {
            ynew[i] = y[i] + dt * (A71 * k1[i] + A73 * rest[1][i] + A74 * rest[2][i] + A75 * rest[3][i] + A76 * rest[4][i]);
        }
        f(t + dt, &ynew, &mut rest[5]);
        let mut err = 0.0;
        for i in 0..n {
            let e = dt * (E1 * k1[i] + E3 * rest[1][i] + E4 * rest[2][i] + E5 * rest[3][i] + E6 * rest[4][i] + E7 * rest[5][i]);
            let sc = atol + rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            dt *= 0.2;
            continue;
        }
        if err <= 1.0 {
            let ydiff: Vec<f64> = (0..n).map(|i| ynew[i] - y[i]).collect();
            let bspl: Vec<f64> = (0..n).map(|i| dt * k1[i] - ydiff[i]).collect();
            let r4: Vec<f64> = (0..n).map(|i| ydiff[i] - dt * rest[5][i] - bspl[i]).collect();
            let r5: Vec<f64> = (0..n)
                .map(|i| dt * (D1 * k1[i] + D3 * rest[1][i] + D4 * rest[2][i] + D5 * rest[3][i] + D6 * rest[4][i] + D7 * rest[5][i]))
                .collect();
            out.steps.push(DenseStep { t0: t, dt, rcont: [y.clone(), ydiff, bspl, r4, r5] });
            t += dt;
            y.copy_from_slice(&ynew);
            let last = rest[5].clone();
            k[0].copy_from_slice(&last);
            out.times.push(t);
            out.states.push(y.clone());
            if !inside(&y) {
                return Err(Error::LeftDomain { t });
            }
        }
        let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
        dt *= fac;
    }
    Ok(out)
}

/// `p(x, ξ)` in `n` position and `n` momentum variables.
#[derive(Debug, Clone)]
pub struct HamiltonianSystem {
    pub p: ScalarField,
    pub n: usize,
    pub domain: Vec<(f64, f64)>,
    grads: Vec<Tape>,
}

impl HamiltonianSystem {
    pub fn new(p: ScalarField, n: usize, domain: Vec<(f64, f64)>) -> Result<Self> {
        if domain.len() != 2 * n {
            return Err(Error::InvalidInput("domain must cover (x, ξ)".into()));
        }
        let grads = (0..2 * n).map(|v| p.expr().diff(v).compile()).collect();
        Ok(HamiltonianSystem { p, n, domain, grads })
    }

    /// Parse with variables `x1..xn, t1..tn` (the `t` names stand for ξ).
    pub fn parse(src: &str, n: usize, domain: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(ScalarField::parse(src, &VarSpace::phase_space(n))?, n, domain)
    }

    /// Unbounded domain.
    pub fn unbounded(src: &str, n: usize) -> Result<Self> {
        Self::parse(src, n, vec![(f64::NEG_INFINITY, f64::INFINITY); 2 * n])
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        self.p.eval(z).re
    }

    /// `dp` as `(∂p/∂x, ∂p/∂ξ)`.
    pub fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut s = Vec::new();
        self.grads.iter().map(|g| g.eval_with(z, &mut s).re).collect()
    }

    /// `H_p = (∂p/∂ξ, -∂p/∂x)`.
    pub fn hamilton_field(&self, z: &[f64], out: &mut [f64]) {
        let n = self.n;
        let mut s = Vec::new();
        for i in 0..n {
            out[i] = self.grads[n + i].eval_with(z, &mut s).re;
            out[n + i] = -self.grads[i].eval_with(z, &mut s).re;
        }
    }

    fn inside(&self, z: &[f64]) -> bool {
        z.iter().zip(&self.domain).all(|(v, &(a, b))| *v >= a && *v <= b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub energy_drift: f64,
    pub trajectory: Trajectory,
}

impl FlowResult {
    /// CSV with columns `t, x1.., xi1.., p_value`.
    pub fn to_csv(&self, sys: &HamiltonianSystem) -> String {
        let n = sys.n;
        let mut s = String::from("t");
        for i in 1..=n {
            s.push_str(&format!(",x{i}"));
        }
        for i in 1..=n {
            s.push_str(&format!(",xi{i}"));
        }
        s.push_str(",p_value\n");
        for (t, z) in self.times.iter().zip(&self.states) {
            s.push_str(&format!("{t}"));
            for v in z {
                s.push_str(&format!(",{v}"));
            }
            s.push_str(&format!(",{}\n", sys.value(z)));
        }
        s
    }
}

/// Integrate `ż = H_p(z)` from `t_span.0` to `t_span.1`.
pub fn integrate_flow(sys: &HamiltonianSystem, z0: &[f64], t_span: (f64, f64), tol: f64) -> Result<FlowResult> {
    if z0.len() != 2 * sys.n {
        return Err(Error::InvalidInput("initial point has wrong dimension".into()));
    }
    if !sys.inside(z0) {
        return Err(Error::LeftDomain { t: t_span.0 });
    }
    let traj = dopri5(|_, z, out| sys.hamilton_field(z, out), t_span.0, z0, t_span.1, tol, tol, |z| sys.inside(z))?;
    let p0 = sys.value(z0);
    let energy_drift = traj.states.iter().map(|z| (sys.value(z) - p0).abs()).fold(0.0, f64::max);
    Ok(FlowResult { times: traj.times.clone(), states: traj.states.clone(), energy_drift, trajectory: traj })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrincipalTypeReport {
    pub p_value: f64,
    pub dp_norm: f64,
    pub dxi_norm: f64,
    pub pass: bool,
    pub dxi_nonzero: bool,
}

/// Characteristic point with nonvanishing differential; also flags `∂_ξ p ≠ 0`.
pub fn check_real_principal_type(sys: &HamiltonianSystem, z0: &[f64], tol: f64) -> PrincipalTypeReport {
    let p = sys.p.eval(z0);
    let g = sys.gradient(z0);
    let dp_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dxi_norm = g[sys.n..].iter().map(|v| v * v).sum::<f64>().sqrt();
    PrincipalTypeReport {
        p_value: p.re,
        dp_norm,
        dxi_norm,
        pass: p.norm() < tol && dp_norm > tol,
        dxi_nonzero: dxi_norm > tol,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CanonicalSample {
    /// `(x, η)` sample.
    pub x_eta: Vec<f64>,
    /// `(y, η)` preimage.
    pub y_eta: Vec<f64>,
    /// `(x, ξ)` image.
    pub x_xi: Vec<f64>,
    pub mixed_det: f64,
    pub jacobian_det: f64,
    pub symplectic_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratingPhaseReport {
    pub min_abs_det: f64,
    pub max_symplectic_defect: f64,
    pub pass: bool,
    pub samples: Vec<CanonicalSample>,
}

/// Second-order data of `S` at `(x, η)`: `(S_xx, S_xη, S_ηη, S_x, S_η)`.
fn second_order(s: &ScalarField, n: usize, z: &[f64]) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, Vec<f64>, Vec<f64>) {
    let t: Tps = s.taylor(z, 2);
    let d2 = |i: usize, j: usize| t.diff(i).diff(j).value().re;
    let sxx = DMatrix::from_fn(n, n, |i, j| d2(i, j));
    let sxe = DMatrix::from_fn(n, n, |i, j| d2(i, n + j));
    let see = DMatrix::from_fn(n, n, |i, j| d2(n + i, n + j));
    let sx = (0..n).map(|i| t.diff(i).value().re).collect();
    let se = (0..n).map(|i| t.diff(n + i).value().re).collect();
    (sxx, sxe, see, sx, se)
}

/// `det S''_{xη}` at each sample point `(x, η)`.
pub fn mixed_hessian_scan(s: &ScalarField, n: usize, grid: &SampleGrid) -> Vec<(Vec<f64>, f64)> {
    grid.points.iter().map(|z| (z.clone(), second_order(s, n, z).1.determinant())).collect()
}

/// Check the generating function `S(x, η)` and the canonicity of the map it induces.
pub fn generating_phase_check(s: &ScalarField, n: usize, grid: &SampleGrid) -> Result<GeneratingPhaseReport> {
    let mut samples = Vec::with_capacity(grid.points.len());
    let mut min_det = f64::INFINITY;
    let mut max_def: f64 = 0.0;
    let mut omega = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        omega[(i, n + i)] = 1.0;
        omega[(n + i, i)] = -1.0;
    }
    for z in &grid.points {
        let (sxx, sxe, see, sx, se) = second_order(s, n, z);
        let det = sxe.determinant();
        min_det = min_det.min(det.abs());
        if det.abs() <= 1e-8 {
            return Err(Error::DegenerateMixedHessian { det });
        }
        // ∂(y,η)/∂(x,η) and ∂(x,ξ)/∂(x,η)
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        let mut b = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = sxe[(j, i)];
                a[(i, n + j)] = see[(i, j)];
                b[(n + i, j)] = sxx[(i, j)];
                b[(n + i, n + j)] = sxe[(i, j)];
            }
            a[(n + i, n + i)] = 1.0;
            b[(i, i)] = 1.0;
        }
        let jac = &b * a.try_inverse().ok_or(Error::DegenerateMixedHessian { det })?;
        let defect = (jac.transpose() * &omega * &jac - &omega).abs().max();
        max_def = max_def.max(defect);
        let mut y_eta = se.clone();
        y_eta.extend_from_slice(&z[n..]);
        let mut x_xi = z[..n].to_vec();
        x_xi.extend_from_slice(&sx);
        samples.push(CanonicalSample {
            x_eta: z.clone(),
            y_eta,
            x_xi,
            mixed_det: det,
            jacobian_det: jac.determinant(),
            symplectic_defect: defect,
        });
    }
    Ok(GeneratingPhaseReport { min_abs_det: min_det, max_symplectic_defect: max_def, pass: max_def < 1e-9, samples })
}
