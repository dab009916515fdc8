//! Exact dynamic programming for exponential service times.
//!
//! With exponential service the elapsed service time carries no
//! information, so the state at an arrival epoch is just (client `i`,
//! clients present `k`). Idle mass, waiting mass and transition
//! probabilities over a window of length `t` are closed form, and the
//! interarrival time is optimized continuously.
//!
//! Two kernels implement [`ExpKernel`]: [`HomKernel`] (one rate) and
//! [`HetKernel`] (a rate per client, clients served in index order).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::optim::{bisect, minimize_halfline, OptimizerConfig};
use crate::probkernels::{pois_cdf, PoissonRow};
use crate::{CostWeights, WaitAccounting};

/// `f_k(t)`: expected idle time in `[0, t]` with `k` clients present at `0+`.
pub fn f_hom(k: usize, t: f64, mu: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let x = mu * t;
    t * (1.0 - pois_cdf(k as i64 - 1, x)) - k as f64 / mu * (1.0 - pois_cdf(k as i64, x))
}

/// `g_k(t)`: expected total waiting accrued in `[0, t]`.
pub fn g_hom(k: usize, t: f64, mu: f64) -> f64 {
    let kf = k as f64;
    if t.is_infinite() {
        return kf * (kf - 1.0) / (2.0 * mu);
    }
    if t <= 0.0 || k < 2 {
        return 0.0;
    }
    let x = mu * t;
    (kf - 1.0) * t * pois_cdf(k as i64 - 1, x) - 0.5 * mu * t * t * pois_cdf(k as i64 - 2, x)
        + kf * (kf - 1.0) / (2.0 * mu) * (1.0 - pois_cdf(k as i64, x))
}

fn check_kt(k: usize, t: f64, mu: f64) -> Result<()> {
    if k < 1 || !(t >= 0.0) || !(mu > 0.0) {
        return domain(format!("need k >= 1, t >= 0, mu > 0; got k={k}, t={t}, mu={mu}"));
    }
    Ok(())
}

/// Checked [`f_hom`].
pub fn idle_mass_hom(k: usize, t: f64, mu: f64) -> Result<f64> {
    check_kt(k, t, mu)?;
    Ok(f_hom(k, t, mu))
}

/// Checked [`g_hom`]; `t` may be infinite.
pub fn wait_mass_hom(k: usize, t: f64, mu: f64) -> Result<f64> {
    check_kt(k, t, mu)?;
    Ok(g_hom(k, t, mu))
}

/// `h_k = (k-1)/mu`: total wait of a client arriving to find `k-1` ahead.
pub fn wait_tail_hom(k: usize, mu: f64) -> Result<f64> {
    check_kt(k, 0.0, mu)?;
    Ok((k as f64 - 1.0) / mu)
}

/// Transition probabilities `p_{k,l}(t)` for `l = 1..=k+1`, as a vector indexed `l-1`.
pub fn trans_probs_hom(k: usize, t: f64, mu: f64) -> Result<Vec<f64>> {
    check_kt(k, t, mu)?;
    let mut out = Vec::new();
    HomKernel { n: k + 1, mu }.trans(k, k, t, &mut out);
    Ok(out)
}

/// Neumaier-compensated sum.
#[derive(Default, Clone, Copy)]
pub(crate) struct KahanSum {
    s: f64,
    c: f64,
}

impl KahanSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.s + x;
        if self.s.abs() >= x.abs() {
            self.c += (self.s - t) + x;
        } else {
            self.c += (x - t) + self.s;
        }
        self.s = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.s + self.c
    }
}

/// Double-double number `hi + lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dd(f64, f64);

#[inline]
fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn fast_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd(s, b - (s - a))
}

impl Dd {
    fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        let t = two_sum(self.1, o.1);
        let r = fast_two_sum(s.0, s.1 + t.0);
        fast_two_sum(r.0, r.1 + t.1)
    }

    fn mul(self, o: Dd) -> Dd {
        let p = self.0 * o.0;
        let e = self.0.mul_add(o.0, -p) + (self.0 * o.1 + self.1 * o.0);
        fast_two_sum(p, e)
    }

    fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self.add(o.mul(Dd(-q1, 0.0)));
        let q2 = r.0 / o.0;
        let r = r.add(o.mul(Dd(-q2, 0.0)));
        fast_two_sum(q1, q2).add(Dd(r.0 / o.0, 0.0))
    }
}

/// Product-form coefficients in double-double. Rate differences are exact,
/// so only the products round, at about `1e-32` each.
fn dd_mix(rates: &[f64]) -> Vec<Dd> {
    (0..rates.len())
        .map(|j| {
            let (mut num, mut den) = (Dd(rates[j], 0.0), Dd(1.0, 0.0));
            for (i, &m) in rates.iter().enumerate() {
                if i != j {
                    num = num.mul(Dd(m, 0.0));
                    den = den.mul(two_sum(m, -rates[j]));
                }
            }
            num.div(den)
        })
        .collect()
}

/// Window functionals of an exponential service model.
///
/// The state is `(i, k)`: client `i` has just arrived and `k` clients are
/// present, so clients `i-k+1..=i` are in the system and `i-k+1` is in service.
pub trait ExpKernel: Sync {
    /// Number of clients.
    fn n(&self) -> usize;
    /// Expected idle time in `[0, t]`.
    fn idle(&self, i: usize, k: usize, t: f64) -> f64;
    /// Expected waiting accrued in `[0, t]`.
    fn wait(&self, i: usize, k: usize, t: f64) -> f64;
    /// Expected total wait of client `i`.
    fn wait_tail(&self, i: usize, k: usize) -> f64;
    /// Expected waiting still to come for all present clients if nobody else arrives.
    fn remaining_wait(&self, i: usize, k: usize) -> f64;
    /// Probabilities of `l = 1..=k+1` clients present just after the next
    /// arrival, written to `out[l-1]`.
    fn trans(&self, i: usize, k: usize, t: f64, out: &mut Vec<f64>);
    /// A typical service time, used to scale searches.
    fn time_scale(&self) -> f64;
    /// Service rate of client `c`.
    fn rate(&self, c: usize) -> f64;
}

/// All clients share rate `mu`.
#[derive(Debug, Clone, Copy)]
pub struct HomKernel {
    pub n: usize,
    pub mu: f64,
}

impl ExpKernel for HomKernel {
    fn n(&self) -> usize {
        self.n
    }

    fn idle(&self, _i: usize, k: usize, t: f64) -> f64 {
        f_hom(k, t, self.mu)
    }

    fn wait(&self, _i: usize, k: usize, t: f64) -> f64 {
        g_hom(k, t, self.mu)
    }

    fn wait_tail(&self, _i: usize, k: usize) -> f64 {
        (k as f64 - 1.0) / self.mu
    }

    fn remaining_wait(&self, _i: usize, k: usize) -> f64 {
        g_hom(k, f64::INFINITY, self.mu)
    }

    fn trans(&self, _i: usize, k: usize, t: f64, out: &mut Vec<f64>) {
        out.clear();
        out.resize(k + 1, 0.0);
        let row = PoissonRow::new(self.mu * t.max(0.0), k);
        out[0] = row.tail_at(k as i64);
        for l in 2..=k + 1 {
            out[l - 1] = row.pmf[k + 1 - l];
        }
    }

    fn time_scale(&self) -> f64 {
        1.0 / self.mu
    }

    fn rate(&self, _c: usize) -> f64 {
        self.mu
    }
}

/// Coefficients of the hypoexponential density `phi(s) = sum_j c_j e^{-mu_j s}`
/// of `E(mu_start) + .. + E(mu_{start+span})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErlangMixCoeffs {
    pub start: usize,
    pub span: usize,
    pub rates: Vec<f64>,
    pub coeffs: Vec<f64>,
    /// Rounding residue of each coefficient; `coeffs[j] + lo[j]` carries
    /// about 32 digits. Windows of close rates have terms of size `1e7` and
    /// more cancelling to one, which `f64` alone cannot resolve.
    #[serde(default)]
    pub lo: Vec<f64>,
}

impl ErlangMixCoeffs {
    /// `sum_j c_j / mu_j`, which must be one.
    pub fn mass(&self) -> f64 {
        let mut s = Dd(0.0, 0.0);
        for (j, (c, m)) in self.coeffs.iter().zip(&self.rates).enumerate() {
            let c = Dd(*c, self.lo.get(j).copied().unwrap_or(0.0));
            s = s.add(c.div(Dd(*m, 0.0)));
        }
        s.0 + s.1
    }

    /// `max_j |c_j| / mu_j`: the size of the terms that cancel.
    pub fn conditioning(&self) -> f64 {
        self.coeffs.iter().zip(&self.rates).map(|(c, m)| (c / m).abs()).fold(0.0, f64::max)
    }

    pub fn density(&self, s: f64) -> f64 {
        let mut acc = KahanSum::default();
        for (c, m) in self.coeffs.iter().zip(&self.rates) {
            acc.add(c * (-m * s).exp());
        }
        acc.value()
    }
}

fn check_rates(rates: &[f64]) -> Result<()> {
    if rates.is_empty() {
        return domain("empty rate vector");
    }
    for &r in rates {
        if !(r > 0.0) || !r.is_finite() {
            return domain(format!("rates must be positive, got {r}"));
        }
    }
    for (a, &x) in rates.iter().enumerate() {
        for &y in &rates[a + 1..] {
            if (x - y).abs() <= 1e-9 * x.max(y) {
                return Err(Error::DegenerateRates(format!("rates {x} and {y} coincide")));
            }
        }
    }
    Ok(())
}

/// Forward recursion for the coefficients, window indices relative to `start`.
fn mix_recursion_table(rates: &[f64]) -> Vec<Vec<f64>> {
    // table[l][j] for span l, j = 0..=l
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(rates.len());
    table.push(vec![rates[0]]);
    for l in 0..rates.len() - 1 {
        let next = rates[l + 1];
        let prev = &table[l];
        let mut row = Vec::with_capacity(l + 2);
        let mut last = KahanSum::default();
        for (j, &c) in prev.iter().enumerate() {
            row.push(c * next / (next - rates[j]));
            last.add(c * next / (rates[j] - next));
        }
        row.push(last.value());
        table.push(row);
    }
    table
}

/// Coefficients for the window of rates given (the window starts at index 0).
pub fn erlang_mix_coeffs(rates: &[f64]) -> Result<ErlangMixCoeffs> {
    check_rates(rates)?;
    let c = dd_mix(rates);
    Ok(ErlangMixCoeffs {
        start: 0,
        span: rates.len() - 1,
        rates: rates.to_vec(),
        coeffs: c.iter().map(|x| x.0).collect(),
        lo: c.iter().map(|x| x.1).collect(),
    })
}

/// The same coefficients by the forward recursion over spans, in `f64`.
pub fn erlang_mix_recursion(rates: &[f64]) -> Result<Vec<f64>> {
    check_rates(rates)?;
    Ok(mix_recursion_table(rates).pop().unwrap())
}

/// Product closed form `c_j = mu_j prod_{i != j} mu_i/(mu_i - mu_j)`.
pub fn erlang_mix_product(rates: &[f64]) -> Vec<f64> {
    (0..rates.len())
        .map(|j| {
            let mut c = rates[j];
            for (i, &m) in rates.iter().enumerate() {
                if i != j {
                    c *= m / (m - rates[j]);
                }
            }
            c
        })
        .collect()
}

/// Clients with individual exponential rates, served in index order.
#[derive(Debug, Clone)]
pub struct HetKernel {
    rates: Vec<f64>,
    // mix[a][l][j]: window starting at client a (0-based) of span l, coefficient of rate a+j
    mix: Vec<Vec<Vec<f64>>>,
    // worst[a][l]: largest cancelling term over spans 0..=l of the window at a
    worst: Vec<Vec<f64>>,
}

/// Above this term size the closed forms lose more than about `1e-12` and
/// the window is evaluated by uniformization instead.
const MAX_CONDITIONING: f64 = 1e4;

impl HetKernel {
    pub fn new(rates: &[f64]) -> Result<Self> {
        check_rates(rates)?;
        let n = rates.len();
        let mut mix = Vec::with_capacity(n);
        let mut worst = Vec::with_capacity(n);
        for a in 0..n {
            let rows: Vec<Vec<f64>> = (a..n).map(|b| dd_mix(&rates[a..=b]).iter().map(|x| x.0).collect()).collect();
            let mut w = 0.0f64;
            let ws = rows
                .iter()
                .map(|row| {
                    w = w.max(row.iter().zip(&rates[a..]).map(|(c, m)| (c / m).abs()).fold(0.0, f64::max));
                    w
                })
                .collect();
            mix.push(rows);
            worst.push(ws);
        }
        Ok(Self { rates: rates.to_vec(), mix, worst })
    }

    /// The closed forms are accurate for the `k` present at stage `i`.
    fn closed_form_ok(&self, i: usize, k: usize) -> bool {
        self.worst[i - k][k - 1] <= MAX_CONDITIONING
    }

    /// Queue length after `t` and the idle and waiting time accrued, by
    /// uniformizing the pure-death chain of the `k` present at stage `i`.
    /// Every term is nonnegative, so nothing cancels.
    fn uniformized(&self, i: usize, k: usize, t: f64) -> (Vec<f64>, f64, f64) {
        let rate = |j: usize| self.mu(i + 1 - j);
        let lam = (1..=k).map(rate).fold(0.0, f64::max);
        let x = lam * t;
        // Poisson weights up to where the remaining mass is negligible
        let top = (x + 12.0 * x.sqrt() + 40.0).ceil() as usize;
        let w: Vec<f64> = if x < 600.0 {
            let mut v = Vec::with_capacity(top + 1);
            let mut p = (-x).exp();
            for m in 0..=top {
                if m > 0 {
                    p *= x / m as f64;
                }
                v.push(p);
            }
            v
        } else {
            (0..=top).map(|m| crate::probkernels::pois_pmf(m, x)).collect()
        };
        // tail[m] = P(Pois(x) > m), summed from the far end
        let mut tail = vec![0.0; top + 1];
        let mut acc = 0.0;
        for m in (0..top).rev() {
            acc += w[m + 1];
            tail[m] = acc;
        }
        let stay: Vec<f64> = (0..=k).map(|j| if j == 0 { 1.0 } else { 1.0 - rate(j) / lam }).collect();
        let go: Vec<f64> = (0..=k).map(|j| if j == 0 { 0.0 } else { rate(j) / lam }).collect();
        let mut pi = vec![0.0; k + 1];
        pi[k] = 1.0;
        let mut p = vec![0.0; k + 1];
        let (mut idle, mut wait) = (KahanSum::default(), KahanSum::default());
        for m in 0..=top {
            let q: f64 = (2..=k).map(|j| (j - 1) as f64 * pi[j]).sum();
            idle.add(pi[0] * tail[m]);
            wait.add(q * tail[m]);
            for j in 0..=k {
                p[j] += w[m] * pi[j];
            }
            for j in 0..k {
                pi[j] = pi[j] * stay[j] + pi[j + 1] * go[j + 1];
            }
            pi[k] *= stay[k];
        }
        (p, idle.value() / lam, wait.value() / lam)
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Coefficients for clients `a..=a+span` (1-based `a`).
    pub fn coeffs(&self, a: usize, span: usize) -> &[f64] {
        &self.mix[a - 1][span]
    }

    #[inline]
    fn mu(&self, client: usize) -> f64 {
        self.rates[client - 1]
    }

    // density of the (d+1)-th departure counted from head a, divided by its rate:
    // P(exactly d departures by t)
    fn p_exact(&self, a: usize, d: usize, t: f64) -> f64 {
        let c = self.coeffs(a, d);
        let mut s = KahanSum::default();
        for (j, &cj) in c.iter().enumerate() {
            s.add(cj * (-self.mu(a + j) * t).exp());
        }
        (s.value() / self.mu(a + d)).max(0.0)
    }
}

#[inline]
fn psi(mu: f64, t: f64) -> f64 {
    -(-mu * t).exp_m1() / mu
}

impl ExpKernel for HetKernel {
    fn n(&self) -> usize {
        self.rates.len()
    }

    fn idle(&self, i: usize, k: usize, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if !self.closed_form_ok(i, k) {
            return self.uniformized(i, k, t).1;
        }
        let a = i + 1 - k;
        let c = self.coeffs(a, k - 1);
        let mut s = KahanSum::default();
        s.add(t);
        for (j, &cj) in c.iter().enumerate() {
            let m = self.mu(a + j);
            s.add(-cj / m * psi(m, t));
        }
        s.value().max(0.0)
    }

    fn wait(&self, i: usize, k: usize, t: f64) -> f64 {
        if t <= 0.0 || k < 2 {
            return 0.0;
        }
        if t.is_infinite() {
            return self.remaining_wait(i, k);
        }
        if !self.closed_form_ok(i, k) {
            return self.uniformized(i, k, t).2;
        }
        let a = i + 1 - k;
        let mut total = 0.0;
        for l in 0..k - 1 {
            let c = self.coeffs(a, l);
            let mut s = KahanSum::default();
            for (j, &cj) in c.iter().enumerate() {
                s.add(cj * psi(self.mu(a + j), t));
            }
            total += (k - l - 1) as f64 / self.mu(a + l) * s.value();
        }
        total.max(0.0)
    }

    fn wait_tail(&self, i: usize, k: usize) -> f64 {
        (i + 1 - k..i).map(|c| 1.0 / self.mu(c)).sum()
    }

    fn remaining_wait(&self, i: usize, k: usize) -> f64 {
        let a = i + 1 - k;
        (0..k).map(|l| (k - l - 1) as f64 / self.mu(a + l)).sum()
    }

    fn trans(&self, i: usize, k: usize, t: f64, out: &mut Vec<f64>) {
        out.clear();
        out.resize(k + 1, 0.0);
        let a = i + 1 - k;
        if t <= 0.0 {
            out[k] = 1.0;
            return;
        }
        if !self.closed_form_ok(i, k) {
            *out = self.uniformized(i, k, t).0;
            return;
        }
        let mut rest = KahanSum::default();
        rest.add(1.0);
        for l in 2..=k + 1 {
            let p = self.p_exact(a, k + 1 - l, t);
            out[l - 1] = p;
            rest.add(-p);
        }
        out[0] = rest.value().max(0.0);
    }

    fn time_scale(&self) -> f64 {
        self.rates.iter().map(|r| 1.0 / r).sum::<f64>() / self.rates.len() as f64
    }

    fn rate(&self, c: usize) -> f64 {
        self.mu(c)
    }
}

/// Optimal dynamic schedule for an exponential model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpDpSolution {
    pub n: usize,
    pub rates: Vec<f64>,
    pub omega: f64,
    pub accounting: WaitAccounting,
    /// `C_1(1)`.
    pub cost: f64,
    /// `tau[i-1][k-1]` for `i = 1..n-1`, `k = 1..=i`.
    pub tau: Vec<Vec<f64>>,
    /// `value[i-1][k-1]` for `i = 1..=n`, `k = 1..=i`.
    pub value: Vec<Vec<f64>>,
}

impl ExpDpSolution {
    /// Interarrival time after client `i` arrives with `k` present.
    pub fn tau(&self, i: usize, k: usize) -> f64 {
        self.tau[i - 1][k - 1]
    }

    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.value[i - 1][k - 1]
    }

    /// Terminal values `C_n(k)`.
    pub fn terminal(&self) -> &[f64] {
        &self.value[self.n - 1]
    }
}

fn stage_terms<K: ExpKernel>(kernel: &K, w: CostWeights, acc: WaitAccounting, i: usize, k: usize, t: f64, next: &[f64], buf: &mut Vec<f64>) -> f64 {
    let wait = match acc {
        WaitAccounting::Slot => kernel.wait(i, k, t),
        WaitAccounting::Tail => kernel.wait_tail(i, k),
    };
    kernel.trans(i, k, t, buf);
    let mut v = w.idle() * kernel.idle(i, k, t) + w.wait() * wait;
    for (l, p) in buf.iter().enumerate() {
        v += p * next[l];
    }
    v
}

/// Derivative of [`stage_terms`] in `t`.
///
/// With `P_j` the chance that `j` clients remain after the slot and `r_j`
/// the rate of whoever is in service when `j` remain, `P_j' = r_{j+1}
/// P_{j+1} - r_j P_j`, the idle rate is `P_0` and the waiting rate is
/// `sum (j-1) P_j`.
fn stage_slope<K: ExpKernel>(kernel: &K, w: CostWeights, acc: WaitAccounting, i: usize, k: usize, t: f64, next: &[f64], buf: &mut Vec<f64>) -> f64 {
    kernel.trans(i, k, t, buf);
    let mut s = KahanSum::default();
    s.add(w.idle() * buf[0]);
    for j in 1..=k {
        let p = buf[j];
        if p == 0.0 {
            continue;
        }
        if acc == WaitAccounting::Slot {
            s.add(w.wait() * (j - 1) as f64 * p);
        }
        s.add(kernel.rate(i + 1 - j) * p * (next[j - 1] - next[j]));
    }
    s.value()
}

/// Move a bracketed minimum onto the zero of the slope.
///
/// Function values alone pin a flat minimum only to about the square root
/// of their rounding noise; the slope crosses zero much more sharply.
#[allow(clippy::too_many_arguments)]
fn polish<K: ExpKernel>(kernel: &K, w: CostWeights, acc: WaitAccounting, i: usize, k: usize, next: &[f64], t0: f64, v0: f64, xtol: f64, buf: &mut Vec<f64>) -> (f64, f64) {
    let mut slope = |t: f64| stage_slope(kernel, w, acc, i, k, t, next, buf);
    if t0 == 0.0 && slope(0.0) >= 0.0 {
        return (t0, v0);
    }
    let mut h = 16.0 * xtol.max(1e-9);
    let (mut lo, mut hi) = ((t0 - h).max(0.0), t0 + h);
    let mut tries = 0;
    while slope(lo) > 0.0 || slope(hi) < 0.0 {
        tries += 1;
        if tries > 8 {
            return (t0, v0);
        }
        h *= 4.0;
        lo = (t0 - h).max(0.0);
        hi = t0 + h;
    }
    if slope(lo) > 0.0 {
        return (t0, v0);
    }
    let t = bisect(|x| slope(x) >= 0.0, lo, hi, 1e-13 * (1.0 + t0));
    let v = stage_terms(kernel, w, acc, i, k, t, next, buf);
    if v <= v0 + 1e-12 * v0.abs().max(1.0) {
        (t, v)
    } else {
        (t0, v0)
    }
}

/// Backward recursion over clients for any exponential kernel.
pub fn solve_kernel<K: ExpKernel>(kernel: &K, w: CostWeights, acc: WaitAccounting, opt: OptimizerConfig) -> Result<ExpDpSolution> {
    let n = kernel.n();
    if n == 0 {
        return domain("need at least one client");
    }
    let scale = kernel.time_scale();
    let mut value: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut tau: Vec<Vec<f64>> = vec![Vec::new(); n.saturating_sub(1)];
    value[n - 1] = (1..=n)
        .map(|k| {
            w.wait()
                * match acc {
                    WaitAccounting::Slot => kernel.remaining_wait(n, k),
                    WaitAccounting::Tail => kernel.wait_tail(n, k),
                }
        })
        .collect();
    for i in (1..n).rev() {
        let next = &value[i];
        let cells: Vec<Result<(f64, f64)>> = (1..=i)
            .into_par_iter()
            .map(|k| {
                let mut buf = Vec::with_capacity(k + 1);
                let guess = k as f64 * scale;
                let (t0, v0) = minimize_halfline(|t| stage_terms(kernel, w, acc, i, k, t, next, &mut buf), guess, 0.25 * scale, opt.xtol)?;
                Ok(polish(kernel, w, acc, i, k, next, t0, v0, opt.xtol, &mut buf))
            })
            .collect();
        let mut vi = Vec::with_capacity(i);
        let mut ti = Vec::with_capacity(i);
        for c in cells {
            let (t, v) = c?;
            ti.push(t);
            vi.push(v);
        }
        value[i - 1] = vi;
        tau[i - 1] = ti;
    }
    let rates = (1..=n).map(|c| kernel.rate(c)).collect();
    Ok(ExpDpSolution { n, rates, omega: w.omega(), accounting: acc, cost: value[0][0], tau, value })
}

/// Homogeneous solver with slot accounting.
pub fn solve_homogeneous(n: usize, mu: f64, w: CostWeights, opt: OptimizerConfig) -> Result<ExpDpSolution> {
    if !(mu > 0.0) {
        return domain(format!("mu must be positive, got {mu}"));
    }
    solve_kernel(&HomKernel { n, mu }, w, WaitAccounting::Slot, opt)
}

/// Per-client rates, clients served in the given order.
pub fn solve_heterogeneous(rates: &[f64], w: CostWeights, opt: OptimizerConfig) -> Result<ExpDpSolution> {
    solve_kernel(&HetKernel::new(rates)?, w, WaitAccounting::Slot, opt)
}

/// Expected cost of running `gap(i, k)` forward from one client at time zero.
///
/// Returns `(total, sum of E I_i, sum of E W_i)`.
pub fn forward_cost<K: ExpKernel, G: Fn(usize, usize) -> f64>(kernel: &K, w: CostWeights, gap: G) -> (f64, f64, f64) {
    let n = kernel.n();
    let mut dist = vec![1.0f64];
    let (mut idle, mut wait) = (0.0, 0.0);
    let mut buf = Vec::new();
    for i in 1..n {
        let mut next = vec![0.0; i + 1];
        for (km1, &pk) in dist.iter().enumerate() {
            if pk == 0.0 {
                continue;
            }
            let k = km1 + 1;
            let t = gap(i, k);
            idle += pk * kernel.idle(i, k, t);
            wait += pk * kernel.wait(i, k, t);
            kernel.trans(i, k, t, &mut buf);
            for (l, p) in buf.iter().enumerate() {
                next[l] += pk * p;
            }
        }
        dist = next;
    }
    for (km1, &pk) in dist.iter().enumerate() {
        wait += pk * kernel.remaining_wait(n, km1 + 1);
    }
    (w.idle() * idle + w.wait() * wait, idle, wait)
}

/// Long-run optimal state-dependent interarrival times.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationarySchedule {
    pub mu: f64,
    pub omega: f64,
    /// `tau[k-1]` for `k = 1..=K_trunc`.
    pub tau: Vec<f64>,
    /// Stationary law of the number present at arrival epochs.
    pub pi: Vec<f64>,
    /// Long-run cost per client.
    pub cost: f64,
}

impl StationarySchedule {
    pub fn tau(&self, k: usize) -> f64 {
        self.tau[k.min(self.tau.len()) - 1]
    }
}

/// Default chain truncation for the stationary schedule.
pub fn default_truncation(w: CostWeights) -> usize {
    if w.omega() <= 0.5 {
        8
    } else {
        12
    }
}

fn stationary_kernel(k_trunc: usize, mu: f64, x: &[f64]) -> Vec<Vec<f64>> {
    let kern = HomKernel { n: k_trunc + 1, mu };
    let mut buf = Vec::new();
    (1..=k_trunc)
        .map(|k| {
            kern.trans(k, k, x[k - 1], &mut buf);
            let mut row = vec![0.0; k_trunc];
            for (l, p) in buf.iter().enumerate() {
                row[l.min(k_trunc - 1)] += p;
            }
            row
        })
        .collect()
}

fn stage_cost(k: usize, x: f64, mu: f64, w: CostWeights) -> f64 {
    w.idle() * f_hom(k, x, mu) + w.wait() * g_hom(k, x, mu)
}

/// Stationary law of a row-stochastic matrix.
pub(crate) fn stationary_law(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = p.len();
    // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            a[(r, c)] = p[c][r] - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..n {
        a[(n - 1, c)] = 1.0;
    }
    let mut b = nalgebra::DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let pi = a.lu().solve(&b).ok_or_else(|| Error::Singular("stationarity equations; increase K_trunc".into()))?;
    Ok(pi.iter().map(|v| v.max(0.0)).collect())
}

/// Long-run average cost of `x` and its stationary law.
pub fn stationary_cost(mu: f64, w: CostWeights, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let p = stationary_kernel(x.len(), mu, x);
    let pi = stationary_law(&p)?;
    let c = pi.iter().enumerate().map(|(km1, pk)| pk * stage_cost(km1 + 1, x[km1], mu, w)).sum();
    Ok((c, pi))
}

/// Minimizes the long-run per-client cost over state-dependent gaps by
/// average-cost policy iteration on the truncated chain.
pub fn stationary_schedule(mu: f64, w: CostWeights, k_trunc: usize) -> Result<StationarySchedule> {
    if k_trunc < 2 {
        return domain("K_trunc must be at least 2");
    }
    if !(mu > 0.0) {
        return domain("mu must be positive");
    }
    let kt = k_trunc;
    let mut x: Vec<f64> = (1..=kt).map(|k| k as f64 / mu).collect();
    let mut last = f64::INFINITY;
    for _ in 0..500 {
        // evaluation: g + h_k = c_k + sum_l P_kl h_l, h_1 = 0
        let p = stationary_kernel(kt, mu, &x);
        let mut a = nalgebra::DMatrix::<f64>::zeros(kt, kt);
        let mut b = nalgebra::DVector::<f64>::zeros(kt);
        for k in 0..kt {
            // unknown 0 is g, unknown j>0 is h_{j+1}
            a[(k, 0)] = 1.0;
            if k > 0 {
                a[(k, k)] += 1.0;
            }
            for l in 1..kt {
                a[(k, l)] -= p[k][l];
            }
            b[k] = stage_cost(k + 1, x[k], mu, w);
        }
        let sol = a.lu().solve(&b).ok_or_else(|| Error::Singular("relative value equations; increase K_trunc".into()))?;
        let gain = sol[0];
        let mut h = vec![0.0; kt];
        h[1..kt].copy_from_slice(&sol.as_slice()[1..kt]);
        // improvement
        let mut moved = 0.0f64;
        let mut buf = Vec::new();
        let kern = HomKernel { n: kt + 1, mu };
        for k in 1..=kt {
            let mut obj = |t: f64| {
                let mut b2 = std::mem::take(&mut buf);
                kern.trans(k, k, t, &mut b2);
                let mut v = stage_cost(k, t, mu, w);
                for (l, q) in b2.iter().enumerate() {
                    v += q * h[l.min(kt - 1)];
                }
                buf = b2;
                v
            };
            let cur = obj(x[k - 1]);
            let (t, v) = minimize_halfline(&mut obj, x[k - 1], 0.25 / mu, 1e-10)?;
            // keep the incumbent unless the improvement is real, so the loop terminates
            if v < cur - 1e-13 * cur.abs().max(1.0) {
                moved = moved.max((t - x[k - 1]).abs());
                x[k - 1] = t;
            }
        }
        if moved < 1e-9 || (last - gain).abs() < 1e-15 {
            break;
        }
        last = gain;
    }
    let (cost, pi) = stationary_cost(mu, w, &x)?;
    Ok(StationarySchedule { mu, omega: w.omega(), tau: x, pi, cost })
}
