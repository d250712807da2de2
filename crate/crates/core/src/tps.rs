//! Truncated multivariate power series.
//!
//! A [`Tps`] stores the Taylor coefficients `c_e = ∂^e f(p) / e!` of a function
//! around a base point for every multi-index `e` with `|e| <= order`. Arithmetic
//! on series is exact up to the truncation order, which is how every high-order
//! derivative in this crate is computed.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64 as C64;

/// Monomial bookkeeping shared by every series with the same `(nvars, order)`.
#[derive(Debug)]
pub struct MonomialTable {
    pub nvars: usize,
    pub order: usize,
    exps: Vec<Vec<u16>>,
    degree: Vec<usize>,
    index: HashMap<Vec<u16>, usize>,
    /// `pairs[i]` lists `(j, k)` such that `exps[i] + exps[j] = exps[k]`.
    pair_start: Vec<usize>,
    pairs: Vec<(u32, u32)>,
    /// `dec[v][k]`: index of `exps[k] - e_v` when `exps[k][v] > 0`.
    dec: Vec<Vec<Option<u32>>>,
    /// `inc[v][k]`: index of `exps[k] + e_v` when it stays within the order.
    inc: Vec<Vec<Option<u32>>>,
}

impl MonomialTable {
    fn build(nvars: usize, order: usize) -> Self {
        let mut exps: Vec<Vec<u16>> = Vec::new();
        for d in 0..=order {
            let mut cur = vec![0u16; nvars];
            push_degree(&mut exps, &mut cur, 0, d);
        }
        let degree: Vec<usize> = exps.iter().map(|e| e.iter().map(|&x| x as usize).sum()).collect();
        let index: HashMap<Vec<u16>, usize> =
            exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let m = exps.len();
        let mut pair_start = Vec::with_capacity(m + 1);
        let mut pairs = Vec::new();
        let mut sum = vec![0u16; nvars];
        for i in 0..m {
            pair_start.push(pairs.len());
            for j in 0..m {
                if degree[i] + degree[j] > order {
                    // exps sorted by degree, so later j only grow
                    break;
                }
                for v in 0..nvars {
                    sum[v] = exps[i][v] + exps[j][v];
                }
                let k = index[&sum];
                pairs.push((j as u32, k as u32));
            }
        }
        pair_start.push(pairs.len());
        let mut dec = vec![vec![None; m]; nvars];
        let mut inc = vec![vec![None; m]; nvars];
        for k in 0..m {
            for v in 0..nvars {
                let mut e = exps[k].clone();
                if e[v] > 0 {
                    e[v] -= 1;
                    dec[v][k] = Some(index[&e] as u32);
                    e[v] += 1;
                }
                e[v] += 1;
                if let Some(&t) = index.get(&e) {
                    inc[v][k] = Some(t as u32);
                }
            }
        }
        MonomialTable { nvars, order, exps, degree, index, pair_start, pairs, dec, inc }
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn exponents(&self, k: usize) -> &[u16] {
        &self.exps[k]
    }

    pub fn degree(&self, k: usize) -> usize {
        self.degree[k]
    }

    pub fn index_of(&self, e: &[u16]) -> Option<usize> {
        self.index.get(e).copied()
    }
}

fn push_degree(out: &mut Vec<Vec<u16>>, cur: &mut Vec<u16>, pos: usize, remaining: usize) {
    let n = cur.len();
    if n == 0 {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos == n - 1 {
        cur[pos] = remaining as u16;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        cur[pos] = k as u16;
        push_degree(out, cur, pos + 1, remaining - k);
    }
    cur[pos] = 0;
}

/// Shared, lazily built monomial table for `(nvars, order)`.
pub fn table(nvars: usize, order: usize) -> Arc<MonomialTable> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<MonomialTable>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().unwrap().get(&(nvars, order)) {
        return t.clone();
    }
    let t = Arc::new(MonomialTable::build(nvars, order));
    cache.lock().unwrap().entry((nvars, order)).or_insert(t).clone()
}

/// Truncated Taylor series in `nvars` variables.
#[derive(Clone, Debug)]
pub struct Tps {
    table: Arc<MonomialTable>,
    coeffs: Vec<C64>,
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

impl Tps {
    pub fn zero(nvars: usize, order: usize) -> Self {
        let table = table(nvars, order);
        let coeffs = vec![C64::new(0.0, 0.0); table.len()];
        Tps { table, coeffs }
    }

    pub fn constant(nvars: usize, order: usize, c: C64) -> Self {
        let mut t = Self::zero(nvars, order);
        t.coeffs[0] = c;
        t
    }

    /// The coordinate function `x_v` expanded around `base`.
    pub fn variable(nvars: usize, order: usize, v: usize, base: f64) -> Self {
        let mut t = Self::constant(nvars, order, C64::new(base, 0.0));
        if order >= 1 {
            let mut e = vec![0u16; nvars];
            e[v] = 1;
            let k = t.table.index_of(&e).expect("first-order monomial");
            t.coeffs[k] = C64::new(1.0, 0.0);
        }
        t
    }

    pub fn nvars(&self) -> usize {
        self.table.nvars
    }

    pub fn order(&self) -> usize {
        self.table.order
    }

    pub fn table(&self) -> &MonomialTable {
        &self.table
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn value(&self) -> C64 {
        self.coeffs[0]
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    /// Taylor coefficient for multi-index `e` (zero beyond the order).
    pub fn coeff(&self, e: &[u16]) -> C64 {
        self.table.index_of(e).map(|k| self.coeffs[k]).unwrap_or_default()
    }

    /// The partial derivative `∂^e f` at the base point.
    pub fn derivative(&self, e: &[u16]) -> C64 {
        let f: f64 = e.iter().map(|&k| factorial(k as usize)).product();
        self.coeff(e) * f
    }

    /// Re-expand with a lower truncation order.
    pub fn truncate(&self, order: usize) -> Tps {
        if order >= self.order() {
            return self.clone();
        }
        let mut out = Tps::zero(self.nvars(), order);
        for k in 0..out.coeffs.len() {
            let e = out.table.exponents(k).to_vec();
            out.coeffs[k] = self.coeff(&e);
        }
        out
    }

    fn align(&self, other: &Tps) -> (Tps, Tps) {
        let o = self.order().min(other.order());
        (self.truncate(o), other.truncate(o))
    }

    pub fn add(&self, other: &Tps) -> Tps {
        let (mut a, b) = self.align(other);
        for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x += y;
        }
        a
    }

    pub fn sub(&self, other: &Tps) -> Tps {
        let (mut a, b) = self.align(other);
        for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x -= y;
        }
        a
    }

    pub fn scale(&self, c: C64) -> Tps {
        let mut a = self.clone();
        a.coeffs.iter_mut().for_each(|x| *x *= c);
        a
    }

    pub fn add_const(&self, c: C64) -> Tps {
        let mut a = self.clone();
        a.coeffs[0] += c;
        a
    }

    pub fn mul(&self, other: &Tps) -> Tps {
        let (a, b) = self.align(other);
        let t = &a.table;
        let mut out = vec![C64::new(0.0, 0.0); t.len()];
        for i in 0..t.len() {
            let ai = a.coeffs[i];
            if ai.re == 0.0 && ai.im == 0.0 {
                continue;
            }
            for &(j, k) in &t.pairs[t.pair_start[i]..t.pair_start[i + 1]] {
                out[k as usize] += ai * b.coeffs[j as usize];
            }
        }
        Tps { table: a.table.clone(), coeffs: out }
    }

    /// Evaluate `Σ_k f_k (self - self(0))^k` by Horner's rule.
    pub fn compose_univariate(&self, f: &[C64]) -> Tps {
        let mut delta = self.clone();
        delta.coeffs[0] = C64::new(0.0, 0.0);
        let kmax = self.order().min(f.len().saturating_sub(1));
        let mut acc = Tps::constant(self.nvars(), self.order(), f[kmax]);
        for k in (0..kmax).rev() {
            acc = acc.mul(&delta).add_const(f[k]);
        }
        acc
    }

    pub fn exp(&self) -> Tps {
        let u0 = self.value();
        let e = u0.exp();
        let f: Vec<C64> = (0..=self.order()).map(|k| e / factorial(k)).collect();
        self.compose_univariate(&f)
    }

    pub fn sin(&self) -> Tps {
        let u0 = self.value();
        let (s, c) = (u0.sin(), u0.cos());
        let cyc = [s, c, -s, -c];
        let f: Vec<C64> = (0..=self.order()).map(|k| cyc[k % 4] / factorial(k)).collect();
        self.compose_univariate(&f)
    }

    pub fn cos(&self) -> Tps {
        let u0 = self.value();
        let (s, c) = (u0.sin(), u0.cos());
        let cyc = [c, -s, -c, s];
        let f: Vec<C64> = (0..=self.order()).map(|k| cyc[k % 4] / factorial(k)).collect();
        self.compose_univariate(&f)
    }

    pub fn recip(&self) -> Tps {
        let u0 = self.value();
        let inv = C64::new(1.0, 0.0) / u0;
        let mut f = Vec::with_capacity(self.order() + 1);
        let mut p = inv;
        for _ in 0..=self.order() {
            f.push(p);
            p *= -inv;
        }
        self.compose_univariate(&f)
    }

    pub fn sqrt(&self) -> Tps {
        let u0 = self.value();
        let r = u0.sqrt();
        let mut f = Vec::with_capacity(self.order() + 1);
        let mut binom = 1.0;
        let mut p = r;
        for k in 0..=self.order() {
            f.push(p * binom);
            binom *= (0.5 - k as f64) / (k as f64 + 1.0);
            p /= u0;
        }
        self.compose_univariate(&f)
    }

    pub fn powi(&self, n: i32) -> Tps {
        if n < 0 {
            return self.recip().powi(-n);
        }
        let mut result = Tps::constant(self.nvars(), self.order(), C64::new(1.0, 0.0));
        let mut base = self.clone();
        let mut e = n as u32;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    /// Partial derivative in variable `v`; the result has order one less.
    pub fn diff(&self, v: usize) -> Tps {
        let order = self.order().saturating_sub(1);
        let mut out = Tps::zero(self.nvars(), order);
        for k in 0..self.coeffs.len() {
            let ev = self.table.exps[k][v];
            if ev == 0 || self.table.degree[k] == 0 {
                continue;
            }
            let src = self.table.dec[v][k].unwrap() as usize;
            let e = self.table.exps[src].clone();
            if let Some(t) = out.table.index_of(&e) {
                out.coeffs[t] += self.coeffs[k] * ev as f64;
            }
        }
        out
    }

    /// Antiderivative in variable `v` vanishing on `x_v = base`; truncated to the same order.
    pub fn integrate(&self, v: usize) -> Tps {
        let mut out = Tps::zero(self.nvars(), self.order());
        for k in 0..self.coeffs.len() {
            if let Some(t) = self.table.inc[v][k] {
                let e = self.table.exps[t as usize][v] as f64;
                out.coeffs[t as usize] += self.coeffs[k] / e;
            }
        }
        out
    }

    /// Value of the Taylor polynomial at displacement `delta` from the base point.
    pub fn eval_at(&self, delta: &[f64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.re == 0.0 && c.im == 0.0 {
                continue;
            }
            let mut m = 1.0;
            for (v, &e) in self.table.exps[k].iter().enumerate() {
                m *= delta[v].powi(e as i32);
            }
            acc += c * m;
        }
        acc
    }

    /// Substitute series `deltas[v]` (zero constant terms) for the displacement variables.
    pub fn compose(&self, deltas: &[Tps]) -> Tps {
        assert_eq!(deltas.len(), self.nvars());
        let nv = deltas[0].nvars();
        let order = deltas.iter().map(|d| d.order()).min().unwrap().min(self.order());
        let mut powers: Vec<Vec<Tps>> = Vec::with_capacity(deltas.len());
        for d in deltas {
            let mut d0 = d.truncate(order);
            d0.coeffs[0] = C64::new(0.0, 0.0);
            let mut pw = vec![Tps::constant(nv, order, C64::new(1.0, 0.0))];
            for p in 1..=order {
                let next = pw[p - 1].mul(&d0);
                pw.push(next);
            }
            powers.push(pw);
        }
        let mut acc = Tps::zero(nv, order);
        for (k, c) in self.coeffs.iter().enumerate() {
            if (c.re == 0.0 && c.im == 0.0) || self.table.degree[k] > order {
                continue;
            }
            let mut term = Tps::constant(nv, order, *c);
            for (v, &e) in self.table.exps[k].iter().enumerate() {
                if e > 0 {
                    term = term.mul(&powers[v][e as usize]);
                }
            }
            acc = acc.add(&term);
        }
        acc
    }

    /// Sum of `|∂^e f|` weighted per multi-index, grouped by total degree.
    pub fn degree_sums<F: Fn(&[u16]) -> f64>(&self, weight: F) -> Vec<f64> {
        let mut sums = vec![0.0; self.order() + 1];
        for k in 0..self.coeffs.len() {
            let e = &self.table.exps[k];
            let d: f64 = e.iter().map(|&x| factorial(x as usize)).product();
            sums[self.table.degree[k]] += (self.coeffs[k] * d).norm() * weight(e);
        }
        sums
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn exp_of_variable_has_inverse_factorial_coefficients() {
        let x = Tps::variable(1, 10, 0, 0.0);
        let e = x.exp();
        for k in 0..=10 {
            assert!((e.derivative(&[k as u16]) - c(1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn product_rule_in_two_variables() {
        let x = Tps::variable(2, 6, 0, 0.3);
        let y = Tps::variable(2, 6, 1, -0.2);
        let f = x.sin().mul(&y.cos());
        // ∂x∂y (sin x cos y) = -cos x sin y
        let d = f.derivative(&[1, 1]);
        assert!((d - c(-(0.3f64).cos() * (-0.2f64).sin())).norm() < 1e-13);
        let d = f.derivative(&[3, 2]);
        assert!((d - c(-(0.3f64).cos() * -(-0.2f64).cos())).norm() < 1e-13);
    }

    #[test]
    fn recip_and_sqrt_match_closed_forms() {
        let x = Tps::variable(1, 8, 0, 0.5);
        let r = x.mul(&x).add_const(c(1.0)).recip();
        // 1/(1+x^2) derivative at 0.5: -2x/(1+x^2)^2
        assert!((r.derivative(&[1]) - c(-1.0 / 1.5625)).norm() < 1e-13);
        let s = x.sqrt();
        assert!((s.derivative(&[2]) - c(-0.25 * 0.5f64.powf(-1.5))).norm() < 1e-12);
    }

    #[test]
    fn diff_then_integrate_recovers_series_up_to_constant() {
        let x = Tps::variable(2, 7, 0, 0.1);
        let y = Tps::variable(2, 7, 1, 0.4);
        let f = x.mul(&y).exp();
        let g = f.diff(0).integrate(0);
        let mut fz = f.truncate(7);
        // remove x-independent part
        for k in 0..fz.coeffs.len() {
            if fz.table.exps[k][0] == 0 {
                fz.coeffs[k] = c(0.0);
            }
        }
        for k in 0..g.coeffs.len() {
            if g.table.degree[k] < 7 {
                assert!((g.coeffs[k] - fz.coeffs[k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn composition_with_identity_is_identity() {
        let x = Tps::variable(2, 5, 0, 0.0);
        let y = Tps::variable(2, 5, 1, 0.0);
        let f = x.mul(&y).add(&x.powi(3)).exp();
        let g = f.compose(&[x.clone(), y.clone()]);
        for (a, b) in f.coeffs.iter().zip(&g.coeffs) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
