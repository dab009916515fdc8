//! Poisson, Erlang and binomial terms, plus the two-moment phase-type fit.
//!
//! Everything downstream sums thousands of these terms, so the Poisson
//! routines anchor at the largest term in log space and recurse outward
//! rather than starting from `e^{-lambda}`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const LN_FACT_TABLE: usize = 2048;
const TAIL_EPS: f64 = 1e-17;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE);
        let mut acc = 0.0f64;
        t.push(0.0);
        for n in 1..LN_FACT_TABLE {
            acc += (n as f64).ln();
            t.push(acc);
        }
        t
    })
}

/// `ln(n!)`.
pub fn ln_factorial(n: usize) -> f64 {
    if n < LN_FACT_TABLE {
        ln_fact_table()[n]
    } else {
        statrs::function::gamma::ln_gamma(n as f64 + 1.0)
    }
}

/// `ln C(n, m)`.
pub fn ln_choose(n: usize, m: usize) -> f64 {
    ln_factorial(n) - ln_factorial(m) - ln_factorial(n - m)
}

/// `P(Pois(lambda) = j)` without range checks.
pub fn pois_pmf(j: usize, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return if j == 0 { 1.0 } else { 0.0 };
    }
    (-lambda + j as f64 * lambda.ln() - ln_factorial(j)).exp()
}

/// `P(Pois(lambda) <= k)`; zero for negative `k`.
pub fn pois_cdf(k: i64, lambda: f64) -> f64 {
    if k < 0 {
        return 0.0;
    }
    if lambda <= 0.0 {
        return 1.0;
    }
    if (k as f64) < lambda {
        lower_sum(k as usize, lambda)
    } else {
        1.0 - upper_sum(k as usize + 1, lambda)
    }
}

/// `P(Pois(lambda) > k)`; one for negative `k`.
pub fn pois_sf(k: i64, lambda: f64) -> f64 {
    if k < 0 {
        return 1.0;
    }
    if lambda <= 0.0 {
        return 0.0;
    }
    if (k as f64) < lambda {
        1.0 - lower_sum(k as usize, lambda)
    } else {
        upper_sum(k as usize + 1, lambda)
    }
}

// sum_{j<=k} pmf(j) for k < lambda; terms shrink going down from k
fn lower_sum(k: usize, lambda: f64) -> f64 {
    let mut term = pois_pmf(k, lambda);
    let mut sum = term;
    let mut j = k;
    while j > 0 {
        term *= j as f64 / lambda;
        sum += term;
        if term < TAIL_EPS * sum {
            break;
        }
        j -= 1;
    }
    sum
}

// sum_{j>=k} pmf(j) for k > lambda; terms shrink going up from k
fn upper_sum(k: usize, lambda: f64) -> f64 {
    let mut term = pois_pmf(k, lambda);
    let mut sum = term;
    let mut j = k;
    loop {
        j += 1;
        term *= lambda / j as f64;
        sum += term;
        if term <= TAIL_EPS * sum || term == 0.0 {
            break;
        }
    }
    sum
}

/// Checked `P(Pois(lambda) <= k)`.
pub fn poisson_cdf(k: i64, lambda: f64) -> Result<f64> {
    if k < 0 || !(lambda >= 0.0) || !lambda.is_finite() {
        return domain(format!("poisson_cdf needs k >= 0 and lambda >= 0, got k={k}, lambda={lambda}"));
    }
    Ok(pois_cdf(k, lambda))
}

/// `P(E(n, rate) <= t)` for an Erlang sum of `n` exponentials; one for `n <= 0`.
pub fn erlang_cdf(n: i64, rate: f64, t: f64) -> f64 {
    if n <= 0 {
        return 1.0;
    }
    pois_sf(n - 1, rate * t)
}

/// A row of Poisson probabilities with upper tails, `tail[j] = P(X >= j)`.
#[derive(Debug, Clone)]
pub struct PoissonRow {
    pub lambda: f64,
    pub pmf: Vec<f64>,
    pub tail: Vec<f64>,
}

impl PoissonRow {
    /// Probabilities for `j = 0..=jmax`; tails are exact sums over the whole support.
    pub fn new(lambda: f64, jmax: usize) -> Self {
        if lambda <= 0.0 {
            let mut pmf = vec![0.0; jmax + 1];
            pmf[0] = 1.0;
            let mut tail = vec![0.0; jmax + 2];
            tail[0] = 1.0;
            return Self { lambda, pmf, tail };
        }
        let reach = (lambda + 14.0 * lambda.sqrt() + 40.0).ceil() as usize;
        let len = jmax.max(reach) + 2;
        let mode = (lambda.floor() as usize).min(len - 1);
        let mut p = vec![0.0; len];
        p[mode] = pois_pmf(mode, lambda);
        for j in (0..mode).rev() {
            p[j] = p[j + 1] * (j + 1) as f64 / lambda;
        }
        for j in mode + 1..len {
            p[j] = p[j - 1] * lambda / j as f64;
        }
        let mut tail = vec![0.0; len + 1];
        for j in (0..len).rev() {
            tail[j] = tail[j + 1] + p[j];
        }
        p.truncate(jmax + 1);
        tail.truncate(jmax + 2);
        Self { lambda, pmf: p, tail }
    }

    #[inline]
    pub fn pmf_at(&self, j: i64) -> f64 {
        if j < 0 {
            0.0
        } else {
            self.pmf.get(j as usize).copied().unwrap_or(0.0)
        }
    }

    /// `P(X >= j)`.
    #[inline]
    pub fn tail_at(&self, j: i64) -> f64 {
        if j <= 0 {
            1.0
        } else {
            self.tail.get(j as usize).copied().unwrap_or(0.0)
        }
    }
}

/// `P(Bin(n, q) = m)` for `m = 0..=n`.
pub fn binom_row(n: usize, q: f64) -> Vec<f64> {
    let mut row = vec![0.0; n + 1];
    if q <= 0.0 {
        row[0] = 1.0;
        return row;
    }
    if q >= 1.0 {
        row[n] = 1.0;
        return row;
    }
    let (lq, lr) = (q.ln(), (-q).ln_1p());
    for (m, r) in row.iter_mut().enumerate() {
        *r = (ln_choose(n, m) + m as f64 * lq + (n - m) as f64 * lr).exp();
    }
    row
}

/// The fitted service-time law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum PhaseLaw {
    Exponential { rate: f64 },
    /// Erlang(K) with probability `weight`, Erlang(K+1) otherwise, common rate.
    WeightedErlang { phases: u32, weight: f64, rate: f64 },
    /// Exponential(rate_fast) with probability `weight`, Exponential(rate_slow) otherwise.
    HyperExp { weight: f64, rate_fast: f64, rate_slow: f64 },
}

/// A phase-type law together with the (mean, SCV) it was fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTypeFit {
    pub law: PhaseLaw,
    pub source_mean: f64,
    pub source_scv: f64,
}

/// Posterior law of the phase in progress given the elapsed service time.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePosterior {
    pub weights: Vec<f64>,
}

/// Largest SCV accepted by [`fit_phase_type`].
pub const MAX_SCV: f64 = 50.0;

/// Two-moment fit: weighted Erlang below SCV 1, exponential at 1,
/// balanced-means hyperexponential above.
pub fn fit_phase_type(mean: f64, scv: f64) -> Result<PhaseTypeFit> {
    if !(mean > 0.0) || !mean.is_finite() {
        return domain(format!("mean must be positive, got {mean}"));
    }
    if !(scv > 0.0) || scv > MAX_SCV {
        return domain(format!("scv must lie in (0, {MAX_SCV}], got {scv}"));
    }
    let law = if (scv - 1.0).abs() <= 1e-12 {
        PhaseLaw::Exponential { rate: 1.0 / mean }
    } else if scv < 1.0 {
        let inv = 1.0 / scv;
        // snap near-integer 1/scv so the boundary case lands on a pure Erlang
        let k = if (inv - inv.round()).abs() <= 1e-12 * inv { inv.round() } else { inv.floor() };
        let radicand = ((k + 1.0) * (1.0 - k * scv)).max(0.0);
        let p = (((k + 1.0) * scv - radicand.sqrt()) / (scv + 1.0)).clamp(0.0, 1.0);
        PhaseLaw::WeightedErlang { phases: k as u32, weight: p, rate: (k + 1.0 - p) / mean }
    } else {
        let p = 0.5 * (1.0 + ((scv - 1.0) / (scv + 1.0)).sqrt());
        let mu = 1.0 / mean;
        PhaseLaw::HyperExp { weight: p, rate_fast: 2.0 * p * mu, rate_slow: 2.0 * (1.0 - p) * mu }
    };
    Ok(PhaseTypeFit { law, source_mean: mean, source_scv: scv })
}

impl PhaseTypeFit {
    /// Number of phases tracked by the posterior.
    pub fn n_phases(&self) -> usize {
        match self.law {
            PhaseLaw::Exponential { .. } => 1,
            PhaseLaw::WeightedErlang { phases, .. } => phases as usize + 1,
            PhaseLaw::HyperExp { .. } => 2,
        }
    }

    fn moments(&self) -> (f64, f64) {
        match self.law {
            PhaseLaw::Exponential { rate } => (1.0 / rate, 2.0 / (rate * rate)),
            PhaseLaw::WeightedErlang { phases, weight: p, rate } => {
                let k = phases as f64;
                let m1 = (p * k + (1.0 - p) * (k + 1.0)) / rate;
                let m2 = (p * k * (k + 1.0) + (1.0 - p) * (k + 1.0) * (k + 2.0)) / (rate * rate);
                (m1, m2)
            }
            PhaseLaw::HyperExp { weight: p, rate_fast: a, rate_slow: b } => {
                (p / a + (1.0 - p) / b, 2.0 * p / (a * a) + 2.0 * (1.0 - p) / (b * b))
            }
        }
    }

    /// Analytic mean of the fitted law.
    pub fn mean(&self) -> f64 {
        self.moments().0
    }

    /// Analytic squared coefficient of variation of the fitted law.
    pub fn scv(&self) -> f64 {
        let (m1, m2) = self.moments();
        m2 / (m1 * m1) - 1.0
    }

    /// Same shape, time axis stretched so the mean becomes `mean`.
    pub fn rescaled(&self, mean: f64) -> Result<Self> {
        fit_phase_type(mean, self.source_scv)
    }

    /// `P(B > t)`, unchecked.
    pub fn sf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        match self.law {
            PhaseLaw::Exponential { rate } => (-rate * t).exp(),
            PhaseLaw::WeightedErlang { phases, weight: p, rate } => {
                let x = rate * t;
                pois_cdf(phases as i64 - 1, x) + (1.0 - p) * pois_pmf(phases as usize, x)
            }
            PhaseLaw::HyperExp { weight: p, rate_fast, rate_slow } => {
                p * (-rate_fast * t).exp() + (1.0 - p) * (-rate_slow * t).exp()
            }
        }
    }

    /// `P(B > t)`.
    pub fn survival(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return domain(format!("survival needs t >= 0, got {t}"));
        }
        Ok(self.sf(t))
    }

    /// Density of `B` at `t`.
    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self.law {
            PhaseLaw::Exponential { rate } => rate * (-rate * t).exp(),
            PhaseLaw::WeightedErlang { phases, weight: p, rate } => {
                let x = rate * t;
                let k = phases as usize;
                rate * (p * pois_pmf(k - 1, x) + (1.0 - p) * pois_pmf(k, x))
            }
            PhaseLaw::HyperExp { weight: p, rate_fast: a, rate_slow: b } => {
                p * a * (-a * t).exp() + (1.0 - p) * b * (-b * t).exp()
            }
        }
    }

    /// Posterior over phases given `B > u`, unchecked.
    pub fn posterior(&self, u: f64) -> Vec<f64> {
        let u = u.max(0.0);
        let mut logw: Vec<f64> = match self.law {
            PhaseLaw::Exponential { .. } => return vec![1.0],
            PhaseLaw::WeightedErlang { phases, weight: p, rate } => {
                let k = phases as usize;
                let x = rate * u;
                if x == 0.0 {
                    let mut w = vec![0.0; k + 1];
                    w[0] = 1.0;
                    return w;
                }
                let lx = x.ln();
                let mut lw: Vec<f64> = (0..k).map(|z| z as f64 * lx - ln_factorial(z)).collect();
                lw.push(if p >= 1.0 { f64::NEG_INFINITY } else { (1.0 - p).ln() + k as f64 * lx - ln_factorial(k) });
                lw
            }
            PhaseLaw::HyperExp { weight: p, rate_fast, rate_slow } => {
                vec![p.ln() - rate_fast * u, (1.0 - p).ln() - rate_slow * u]
            }
        };
        let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for w in logw.iter_mut() {
            *w = (*w - top).exp();
            s += *w;
        }
        logw.iter_mut().for_each(|w| *w /= s);
        logw
    }

    /// Posterior over phases given `B > u`.
    pub fn phase_posterior(&self, u: f64) -> Result<PhasePosterior> {
        if !(u >= 0.0) {
            return domain(format!("phase_posterior needs u >= 0, got {u}"));
        }
        Ok(PhasePosterior { weights: self.posterior(u) })
    }

    /// Mean remaining service time given the current phase `z` (0-based).
    pub fn mean_residual(&self, z: usize) -> f64 {
        match self.law {
            PhaseLaw::Exponential { rate } => 1.0 / rate,
            PhaseLaw::WeightedErlang { phases, weight: p, rate } => {
                let k = phases as usize;
                if z < k {
                    ((k - z) as f64 + 1.0 - p) / rate
                } else {
                    1.0 / rate
                }
            }
            PhaseLaw::HyperExp { rate_fast, rate_slow, .. } => {
                if z == 0 {
                    1.0 / rate_fast
                } else {
                    1.0 / rate_slow
                }
            }
        }
    }

    /// Smallest `t` with `P(B <= t) >= q`, by bisection.
    pub fn quantile(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return 0.0;
        }
        let target = 1.0 - q;
        let mut hi = self.mean().max(1e-12);
        while self.sf(hi) > target {
            hi *= 2.0;
            if hi > 1e9 {
                return hi;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.sf(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-13 * hi.max(1e-300) {
                break;
            }
        }
        hi
    }
}
