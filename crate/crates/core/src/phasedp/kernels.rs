//! Window functionals for phase-type service.
//!
//! Everything here conditions on the latent phase `z` of the client in
//! service (0-based). The solver mixes over `z` with the posterior given the
//! observed age.

use crate::error::{domain, Result};
use crate::expdp::f_hom;
use crate::probkernels::{binom_row, erlang_cdf, ln_factorial, pois_pmf, PhaseLaw, PhaseTypeFit, PoissonRow};

/// `P(t-v <= E(k,mu) <= t, E(k,mu) + E(l-k,mu) > t)` for `1 <= k < l`.
///
/// Counts Poisson events: at most `k-1` before `t-v`, between `k` and
/// `l-1` before `t`.
pub fn psi(v: f64, t: f64, k: usize, l: usize, mu: f64) -> f64 {
    if t <= 0.0 || v <= 0.0 || k >= l || k == 0 {
        return 0.0;
    }
    let v = v.min(t);
    let tot = PoissonRow::new(mu * t, l);
    let early = PoissonRow::new(mu * (t - v), l);
    let late = PoissonRow::new(mu * v, l);
    let mut late_cdf = vec![0.0; l + 1];
    let mut acc = 0.0;
    for (x, c) in late_cdf.iter_mut().enumerate() {
        acc += late.pmf_at(x as i64);
        *c = acc;
    }
    let mut s = tot.tail_at(k as i64) - tot.tail_at(l as i64);
    for n1 in k..l {
        s -= early.pmf_at(n1 as i64) * late_cdf[l - 1 - n1];
    }
    s.max(0.0)
}

/// Table of `psi(v, t, a, a+w, mu)` for `a = 0..=amax` and the two widths
/// `w = K, K+1`, sharing the Poisson rows. Index 0 is unused.
pub(crate) struct PsiRows {
    pub narrow: Vec<f64>,
    pub wide: Vec<f64>,
}

/// `cdf_t[x] = P(Pois(mu t) <= x)`.
pub(crate) fn poisson_cdf_row(lambda: f64, xmax: usize) -> Vec<f64> {
    let row = PoissonRow::new(lambda, xmax);
    let mut out = Vec::with_capacity(xmax + 1);
    let mut acc = 0.0;
    for x in 0..=xmax {
        acc += row.pmf_at(x as i64);
        out.push(acc.min(1.0));
    }
    out
}

pub(crate) fn psi_rows(mu: f64, v: f64, t: f64, kph: usize, amax: usize, cdf_t: &[f64]) -> PsiRows {
    let jmax = amax + kph + 1;
    let early = PoissonRow::new(mu * (t - v).max(0.0), jmax);
    let late = poisson_cdf_row(mu * v, kph + 1);
    let c = |x: i64| if x < 0 { 0.0 } else { cdf_t[x as usize] };
    let mut narrow = vec![0.0; amax + 1];
    let mut wide = vec![0.0; amax + 1];
    for a in 1..=amax {
        for (w, out) in [(kph, &mut narrow), (kph + 1, &mut wide)] {
            let b = a + w;
            let mut s = c(b as i64 - 1) - c(a as i64 - 1);
            for n1 in a..b {
                s -= early.pmf[n1] * late[b - 1 - n1];
            }
            out[a] = s.max(0.0);
        }
    }
    PsiRows { narrow, wide }
}

/// `rho_t[m,k]` as a positive series in `(mu1 - mu2) t`, for `mu1 >= mu2`.
fn rho_series(t: f64, m: usize, k: usize, mu1: f64, mu2: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let c = (mu1 - mu2) * t;
    // term_j = c^j (k+j)! / (j! (m+k+j+1)!), relative to term_0
    let (mf, kf) = (m as f64, k as f64);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut j = 0usize;
    loop {
        let jf = j as f64;
        term *= c * (kf + jf + 1.0) / ((jf + 1.0) * (mf + kf + jf + 2.0));
        sum += term;
        j += 1;
        if (jf > c && term < 1e-17 * sum) || term == 0.0 || j > 100_000 {
            break;
        }
    }
    // t e^{-mu1 t} (mu1 t)^m (mu2 t)^k / (m+k+1)!
    let lnp = t.ln() - mu1 * t + mf * (mu1 * t).ln() + kf * (mu2 * t).ln() - ln_factorial(m + k + 1);
    (lnp + sum.ln()).exp()
}

/// `rho_t[m,k] = int_0^t P(Pois(mu1 u)=m) P(Pois(mu2 (t-u))=k) du`.
///
/// Evaluated by a positive series, so it stays accurate when the two rates
/// are close or equal.
pub fn rho(t: f64, m: usize, k: usize, mu1: f64, mu2: f64) -> f64 {
    if mu1 >= mu2 {
        rho_series(t, m, k, mu1, mu2)
    } else {
        rho_series(t, k, m, mu2, mu1)
    }
}

/// `rho_t[m][i]` for `m <= mmax`, `i <= imax`, assuming `mu1 > mu2`.
///
/// The top row comes from the series; lower rows follow from a recursion
/// in which every term is positive.
pub fn rho_table(t: f64, mmax: usize, imax: usize, mu1: f64, mu2: f64) -> Vec<Vec<f64>> {
    let mut tab = vec![vec![0.0; imax + 1]; mmax + 1];
    if t <= 0.0 {
        return tab;
    }
    for i in 0..=imax {
        tab[mmax][i] = rho_series(t, mmax, i, mu1, mu2);
    }
    let d = mu1 - mu2;
    for m in (1..=mmax).rev() {
        let top = pois_pmf(m, mu1 * t);
        tab[m - 1][0] = (top + d * tab[m][0]) / mu1;
        for i in 1..=imax {
            tab[m - 1][i] = (d * tab[m][i] + mu2 * tab[m][i - 1]) / mu1;
        }
    }
    tab
}

/// `rho_t` by the upward recursion from the closed-form edges. Loses
/// accuracy when the rates are close; kept as a cross-check.
pub fn rho_table_recursive(t: f64, mmax: usize, imax: usize, mu1: f64, mu2: f64) -> Result<Vec<Vec<f64>>> {
    if mu1 == mu2 {
        return domain("recursion needs distinct rates");
    }
    let d = mu1 - mu2;
    let mut tab = vec![vec![0.0; imax + 1]; mmax + 1];
    // rho[m,0] and rho[0,k] in closed form
    for (m, row) in tab.iter_mut().enumerate() {
        let tail = 1.0 - exp_series_head(d * t, m);
        row[0] = mu1.powi(m as i32) * (-mu2 * t).exp() / d.powi(m as i32 + 1) * tail;
    }
    for k in 1..=imax {
        let tail = 1.0 - exp_series_head(-d * t, k);
        tab[0][k] = mu2.powi(k as i32) * (-mu1 * t).exp() / (-d).powi(k as i32 + 1) * tail;
    }
    for m in 1..=mmax {
        for k in 1..=imax {
            tab[m][k] = (mu1 * tab[m - 1][k] - mu2 * tab[m][k - 1]) / d;
        }
    }
    Ok(tab)
}

/// `sum_{i<=n} e^{-x} x^i / i!` for any real `x`.
fn exp_series_head(x: f64, n: usize) -> f64 {
    let mut term = (-x).exp();
    let mut s = term;
    for i in 1..=n {
        term *= x / i as f64;
        s += term;
    }
    s
}

/// Hyperexponential rates with the faster one first.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HeRates {
    pub p: f64,
    pub mu1: f64,
    pub mu2: f64,
}

/// `sigma_t[m,k] = int_0^t P(E(m,mu1) + E(k,mu2) <= s) ds`, given `rho_t`.
pub(crate) fn sigma_with(t: f64, m: usize, k: usize, r: &HeRates, rho_t: &[Vec<f64>]) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    match (m, k) {
        (0, 0) => t,
        (m, 0) => f_hom(m, t, r.mu1),
        (0, k) => f_hom(k, t, r.mu2),
        (m, k) => {
            let mut acc = 0.0;
            for (i, x) in rho_t[m - 1][..k].iter().enumerate() {
                acc += (k - i) as f64 * x;
            }
            (t - k as f64 / r.mu2) * erlang_cdf(m as i64, r.mu1, t) - m as f64 / r.mu1 * erlang_cdf(m as i64 + 1, r.mu1, t)
                + r.mu1 / r.mu2 * acc
        }
    }
}

/// Integrated CDF of `E(m,mu1) + E(k,mu2)` over `[0, t]`.
pub fn sigma(t: f64, m: usize, k: usize, mu1: f64, mu2: f64) -> f64 {
    let r = HeRates { p: 0.5, mu1, mu2 };
    let tab = if m >= 1 { (0..m).map(|mm| (0..k.max(1)).map(|i| rho(t, mm, i, mu1, mu2)).collect()).collect() } else { Vec::new() };
    sigma_with(t, m, k, &r, &tab)
}

/// `P(E(a,mu1) + E(b,mu2) <= t)` given `rho_t`.
pub(crate) fn sum_cdf_with(t: f64, a: usize, b: usize, r: &HeRates, rho_t: &[Vec<f64>]) -> f64 {
    if a == 0 {
        return erlang_cdf(b as i64, r.mu2, t);
    }
    let mut s = erlang_cdf(a as i64, r.mu1, t);
    for x in &rho_t[a - 1][..b] {
        s -= r.mu1 * x;
    }
    s.clamp(0.0, 1.0)
}

/// `P(t-v <= E(k,mu1)+E(l,mu2) <= t, E(k,mu1)+E(l,mu2)+E(1,mu_i) > t)`;
/// `i` is 1 or 2.
pub fn chi(v: f64, t: f64, i: u8, k: usize, l: usize, mu1: f64, mu2: f64) -> f64 {
    if v <= 0.0 || t <= 0.0 {
        return 0.0;
    }
    let v = v.min(t);
    let r = HeRates { p: 0.5, mu1, mu2 };
    let top = k.max(l) + 1;
    let tab = |tt: f64| -> Vec<Vec<f64>> { (0..=top).map(|m| (0..=top).map(|j| rho(tt, m, j, mu1, mu2)).collect()).collect() };
    chi_with(v, t, i, k, l, &r, &tab(t), &tab(t - v))
}

pub(crate) fn chi_with(v: f64, t: f64, i: u8, k: usize, l: usize, r: &HeRates, rho_t: &[Vec<f64>], rho_tv: &[Vec<f64>]) -> f64 {
    let frac = 1.0 - (1.0 - v / t).max(0.0);
    let out = match (i, k, l) {
        (_, 0, 0) => {
            let mu = if i == 1 { r.mu1 } else { r.mu2 };
            if v >= t {
                (-mu * t).exp()
            } else {
                0.0
            }
        }
        (1, k, 0) => pois_pmf(k, r.mu1 * t) * (1.0 - (1.0 - frac).powi(k as i32)),
        (1, k, l) => r.mu2 * (rho_t[k][l - 1] - (-r.mu1 * v).exp() * rho_tv[k][l - 1]),
        (_, 0, l) => pois_pmf(l, r.mu2 * t) * (1.0 - (1.0 - frac).powi(l as i32)),
        (_, k, l) => r.mu1 * (rho_t[k - 1][l] - (-r.mu2 * v).exp() * rho_tv[k - 1][l]),
    };
    out.max(0.0)
}

/// Service law in the form the window functionals need.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Model {
    /// Erlang(K) w.p. `p`, Erlang(K+1) otherwise. Phases `0..=K`.
    We { kph: usize, p: f64, mu: f64 },
    He(HeRates),
}

/// Per-window context that does not depend on the age split point `v`.
pub(crate) enum WindowCtx {
    We { cdf_t: Vec<f64> },
    He { rho_t: Vec<Vec<f64>> },
}

impl Model {
    pub fn from_fit(fit: &PhaseTypeFit) -> Self {
        match fit.law {
            PhaseLaw::Exponential { rate } => Model::We { kph: 1, p: 1.0, mu: rate },
            PhaseLaw::WeightedErlang { phases, weight, rate } => Model::We { kph: phases as usize, p: weight, mu: rate },
            PhaseLaw::HyperExp { weight, rate_fast, rate_slow } => Model::He(HeRates { p: weight, mu1: rate_fast, mu2: rate_slow }),
        }
    }

    /// Number of latent phases.
    pub fn d(&self) -> usize {
        match self {
            Model::We { kph, .. } => kph + 1,
            Model::He(_) => 2,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Model::We { kph, p, mu } => (kph as f64 + 1.0 - p) / mu,
            Model::He(r) => r.p / r.mu1 + (1.0 - r.p) / r.mu2,
        }
    }

    /// Mean remaining service in phase `z`.
    pub fn residual(&self, z: usize) -> f64 {
        match *self {
            Model::We { kph, p, mu } => {
                if z < kph {
                    ((kph - z) as f64 + 1.0 - p) / mu
                } else {
                    1.0 / mu
                }
            }
            Model::He(r) => {
                if z == 0 {
                    1.0 / r.mu1
                } else {
                    1.0 / r.mu2
                }
            }
        }
    }

    /// Total wait still to come for the clients present, phase `z` in service.
    pub fn remaining_wait(&self, k: usize, z: usize) -> f64 {
        let kf = k as f64 - 1.0;
        kf * self.residual(z) + kf * (kf - 1.0) / 2.0 * self.mean()
    }

    /// Wait of the client who arrived last, phase `z` in service.
    pub fn wait_of_last(&self, k: usize, z: usize) -> f64 {
        if k < 2 {
            0.0
        } else {
            self.residual(z) + (k - 2) as f64 * self.mean()
        }
    }

    pub fn ctx(&self, kmax: usize, t: f64) -> WindowCtx {
        match *self {
            Model::We { kph, mu, .. } => WindowCtx::We { cdf_t: poisson_cdf_row(mu * t, (kmax + 1) * (kph + 1) + 2) },
            Model::He(r) => WindowCtx::He { rho_t: rho_table(t, kmax + 1, kmax + 1, r.mu1, r.mu2) },
        }
    }

    /// Idle mass `f_{kz}(t)` for every phase.
    pub fn idle(&self, k: usize, t: f64, ctx: &WindowCtx, out: &mut [f64]) {
        match (*self, ctx) {
            (Model::We { kph, p, mu }, _) => {
                let b = binom_row(k, 1.0 - p);
                for (z, o) in out.iter_mut().enumerate().take(kph) {
                    *o = b.iter().enumerate().map(|(m, w)| w * f_hom(k * kph - z + m, t, mu)).sum();
                }
                let b = binom_row(k - 1, 1.0 - p);
                out[kph] = b.iter().enumerate().map(|(m, w)| w * f_hom((k - 1) * kph + 1 + m, t, mu)).sum();
            }
            (Model::He(r), WindowCtx::He { rho_t }) => {
                let b = binom_row(k - 1, r.p);
                out[0] = b.iter().enumerate().map(|(m, w)| w * sigma_with(t, m + 1, k - 1 - m, &r, rho_t)).sum();
                out[1] = b.iter().enumerate().map(|(m, w)| w * sigma_with(t, m, k - m, &r, rho_t)).sum();
            }
            _ => unreachable!("context built for another model"),
        }
    }

    /// `P(system empty at t | k present, phase z)` for every phase.
    pub fn empty(&self, k: usize, t: f64, ctx: &WindowCtx, out: &mut [f64]) {
        match (*self, ctx) {
            (Model::We { kph, p, mu }, _) => {
                let b = binom_row(k, 1.0 - p);
                for (z, o) in out.iter_mut().enumerate().take(kph) {
                    *o = b.iter().enumerate().map(|(m, w)| w * erlang_cdf((k * kph - z + m) as i64, mu, t)).sum();
                }
                let b = binom_row(k - 1, 1.0 - p);
                out[kph] = b.iter().enumerate().map(|(m, w)| w * erlang_cdf(((k - 1) * kph + 1 + m) as i64, mu, t)).sum();
            }
            (Model::He(r), WindowCtx::He { rho_t }) => {
                let b = binom_row(k - 1, r.p);
                out[0] = b.iter().enumerate().map(|(m, w)| w * sum_cdf_with(t, m + 1, k - 1 - m, &r, rho_t)).sum();
                out[1] = b.iter().enumerate().map(|(m, w)| w * sum_cdf_with(t, m, k - m, &r, rho_t)).sum();
            }
            _ => unreachable!("context built for another model"),
        }
    }

    /// `q_{kl,z,v}(t) = P(l present after the next arrival, age <= v | k, z)`
    /// for `l = 2..=k`, written to `out[(l-2)*d + z]`.
    ///
    /// `bins[n]` must hold the binomial row of size `n` for the model's
    /// uncertain-phase probability.
    pub fn q_at(&self, k: usize, v: f64, t: f64, ctx: &WindowCtx, bins: &[Vec<f64>], out: &mut [f64]) {
        let d = self.d();
        out.iter_mut().for_each(|x| *x = 0.0);
        if k < 2 || v <= 0.0 {
            return;
        }
        match (*self, ctx) {
            (Model::We { kph, p, mu }, WindowCtx::We { cdf_t }) => {
                let amax = (k - 1) * (kph + 1);
                let rows = psi_rows(mu, v, t, kph, amax, cdf_t);
                let mix = |a: usize| p * rows.narrow[a] + (1.0 - p) * rows.wide[a];
                for l in 2..=k {
                    let dep = k - l;
                    let base = (l - 2) * d;
                    for z in 0..kph {
                        // phase z is 0-based here
                        let first = (dep + 1) * kph - z;
                        out[base + z] = bins[dep + 1].iter().enumerate().map(|(m, w)| w * mix(first + m)).sum();
                    }
                    let first = dep * kph + 1;
                    out[base + kph] = bins[dep].iter().enumerate().map(|(m, w)| w * mix(first + m)).sum();
                }
            }
            (Model::He(r), WindowCtx::He { rho_t }) => {
                let rho_tv = rho_table(t - v, k, k, r.mu1, r.mu2);
                let both = |a: usize, b: usize| {
                    r.p * chi_with(v, t, 1, a, b, &r, rho_t, &rho_tv) + (1.0 - r.p) * chi_with(v, t, 2, a, b, &r, rho_t, &rho_tv)
                };
                for l in 2..=k {
                    let dep = k - l;
                    let base = (l - 2) * d;
                    out[base] = bins[dep].iter().enumerate().map(|(m, w)| w * both(m + 1, dep - m)).sum();
                    out[base + 1] = bins[dep].iter().enumerate().map(|(m, w)| w * both(m, dep - m + 1)).sum();
                }
            }
            _ => unreachable!("context built for another model"),
        }
    }

    /// Binomial rows `0..=n` for the uncertain-phase counts used by [`Model::q_at`].
    pub fn bin_rows(&self, n: usize) -> Vec<Vec<f64>> {
        let q = match *self {
            Model::We { p, .. } => 1.0 - p,
            Model::He(r) => r.p,
        };
        (0..=n).map(|j| binom_row(j, q)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_small_cases() {
        assert_eq!(psi(0.0, 2.0, 1, 3, 1.0), 0.0);
        let (v, t, mu) = (0.7, 2.0, 1.3);
        assert!((psi(v, t, 1, 2, mu) - mu * v * (-mu * t).exp()).abs() < 1e-14);
    }

    #[test]
    fn rho_edges() {
        let (t, a, b): (f64, f64, f64) = (1.7, 2.0, 0.5);
        let want = ((-b * t).exp() - (-a * t).exp()) / (a - b);
        assert!((rho(t, 0, 0, a, b) - want).abs() < 1e-14);
        assert_eq!(rho(0.0, 1, 2, a, b), 0.0);
        // equal rates: closed form
        let mu: f64 = 1.1;
        let want = (-mu * t).exp() * mu.powi(3) * t.powi(4) / 24.0;
        assert!((rho(t, 1, 2, mu, mu) - want).abs() < 1e-14);
    }

    #[test]
    fn rho_table_matches_series_and_recursion() {
        let (t, a, b) = (3.3, 1.6, 0.4);
        let tab = rho_table(t, 8, 8, a, b);
        let rec = rho_table_recursive(t, 8, 8, a, b).unwrap();
        for m in 0..=8 {
            for k in 0..=8 {
                let s = rho(t, m, k, a, b);
                assert!((tab[m][k] - s).abs() <= 1e-13 * s.max(1e-3), "{m} {k}");
                assert!((rec[m][k] - s).abs() <= 1e-9, "{m} {k}");
            }
        }
    }

    #[test]
    fn chi_edges() {
        let (a, b) = (1.577, 0.423);
        assert_eq!(chi(0.0, 2.0, 1, 1, 2, a, b), 0.0);
        let (v, t) = (0.5, 2.0);
        let want = (-a * t).exp() * a * a / 2.0 * (t * t - (t - v) * (t - v));
        assert!((chi(v, t, 1, 2, 0, a, b) - want).abs() < 1e-14);
    }
}
