//! Discrete-time DP for arbitrary service-time laws.
//!
//! Service times live on a grid of step `s` and take values `1, 2, .., H`
//! cells. At an arrival the state is `(i, k, m)`: client `i` just arrived,
//! `k` present, the one in service has been served `m` cells and is not
//! done yet. With residual `r` and i.i.d. services `B_1, B_2, ..` put
//! `S_j = r + B_1 + .. + B_j`. Over a window of `t` cells:
//!
//! - `j` departures and new age `a`: `P(S_{j-1} = t - a) P(B > a)`,
//! - expected idle time: `sum_{x<t} P(S_{k-1} <= x)`,
//! - expected waiting: `sum_{j<=k-2} sum_{x<t} P(S_j > x)`.
//!
//! The departure term is a convolution in `t`, so the objective is formed
//! for every `t` at once with FFTs and minimized by a scan.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Error, Result};
use crate::optim::bisect;
use crate::phasedp::Grid;
use crate::probkernels::PhaseTypeFit;
use crate::CostWeights;

/// Above this support length on both sides [`convolve`] goes through the FFT.
pub const DIRECT_MAX: usize = 256;

/// Probability mass on `1, 2, .., H` grid cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePmf {
    pub step: f64,
    /// `masses[j-1] = P(B = j step)`.
    pub masses: Vec<f64>,
    /// Mass beyond the last cell that was folded into it.
    pub tail_mass: f64,
}

impl DiscretePmf {
    pub fn new(step: f64, masses: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) {
            return domain(format!("step must be positive, got {step}"));
        }
        if masses.is_empty() || masses.iter().any(|p| !(*p >= 0.0)) {
            return domain("masses must be non-empty and non-negative");
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return domain(format!("masses sum to {total}"));
        }
        Ok(Self { step, masses, tail_mass: 0.0 })
    }

    /// Number of cells `H`.
    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Masses indexed by cell, with a zero at cell 0.
    pub fn by_cell(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len() + 1);
        v.push(0.0);
        v.extend_from_slice(&self.masses);
        v
    }

    /// `P(B > a cells)` for `a = 0..=H`.
    pub fn sf_cells(&self) -> Vec<f64> {
        let mut sf = vec![0.0; self.len() + 1];
        for a in (0..self.len()).rev() {
            sf[a] = sf[a + 1] + self.masses[a];
        }
        sf
    }

    pub fn mean(&self) -> f64 {
        self.step * self.masses.iter().enumerate().map(|(j, p)| (j + 1) as f64 * p).sum::<f64>()
    }

    pub fn scv(&self) -> f64 {
        let m = self.mean() / self.step;
        let m2: f64 = self.masses.iter().enumerate().map(|(j, p)| ((j + 1) as f64).powi(2) * p).sum();
        (m2 - m * m) / (m * m)
    }

    /// Write as CSV: a `step,<value>` header, then one mass per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,{:e}", self.step)?;
        for p in &self.masses {
            writeln!(out, "{p:e}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let head = lines.next().ok_or_else(|| Error::Domain("empty pmf file".into()))??;
        let step = head
            .strip_prefix("step,")
            .and_then(|s| s.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::Domain(format!("bad pmf header {head:?}")))?;
        let mut masses = Vec::new();
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            masses.push(line.parse::<f64>().map_err(|e| Error::Domain(format!("bad mass {line:?}: {e}")))?);
        }
        Self::new(step, masses)
    }
}

/// Continuous service-time laws parametrized by mean and SCV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServiceLaw {
    Lognormal { mean: f64, scv: f64 },
    Weibull { mean: f64, scv: f64 },
    PhaseType(PhaseTypeFit),
}

/// Weibull shape with the given SCV.
pub fn weibull_shape(scv: f64) -> Result<f64> {
    if !(scv > 0.0) {
        return domain(format!("scv must be positive, got {scv}"));
    }
    // ln(1 + scv) = lnG(1+2/k) - 2 lnG(1+1/k), decreasing in k
    let g = |k: f64| ln_gamma(1.0 + 2.0 / k) - 2.0 * ln_gamma(1.0 + 1.0 / k) - (1.0 + scv).ln();
    let (lo, hi) = (0.02, 500.0);
    if !(g(lo) > 0.0 && g(hi) < 0.0) {
        return domain(format!("weibull shape not bracketed for scv={scv}"));
    }
    Ok(bisect(|k| g(k) <= 0.0, lo, hi, 1e-13))
}

impl ServiceLaw {
    pub fn check(&self) -> Result<()> {
        match *self {
            ServiceLaw::Lognormal { mean, scv } | ServiceLaw::Weibull { mean, scv } => {
                if !(mean > 0.0 && scv > 0.0) {
                    return domain(format!("mean and scv must be positive, got {mean}, {scv}"));
                }
                if let ServiceLaw::Weibull { .. } = self {
                    weibull_shape(scv)?;
                }
                Ok(())
            }
            ServiceLaw::PhaseType(_) => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ServiceLaw::Lognormal { mean, .. } | ServiceLaw::Weibull { mean, .. } => mean,
            ServiceLaw::PhaseType(f) => f.mean(),
        }
    }

    pub fn scv(&self) -> f64 {
        match *self {
            ServiceLaw::Lognormal { scv, .. } | ServiceLaw::Weibull { scv, .. } => scv,
            ServiceLaw::PhaseType(f) => f.scv(),
        }
    }

    fn lognormal(mean: f64, scv: f64) -> LogNormal {
        let s2 = (1.0 + scv).ln();
        LogNormal::new(mean.ln() - 0.5 * s2, s2.sqrt()).expect("positive scale")
    }

    fn weibull(mean: f64, scv: f64) -> (f64, f64) {
        let k = weibull_shape(scv).expect("checked shape");
        (k, mean / ln_gamma(1.0 + 1.0 / k).exp())
    }

    /// A sampler for repeated draws; solves the Weibull shape once.
    pub fn sampler(&self) -> Result<LawSampler> {
        self.check()?;
        Ok(match *self {
            ServiceLaw::Lognormal { mean, scv } => LawSampler::Lognormal(Self::lognormal(mean, scv)),
            ServiceLaw::Weibull { mean, scv } => {
                let (k, lam) = Self::weibull(mean, scv);
                LawSampler::Weibull { shape: k, scale: lam }
            }
            ServiceLaw::PhaseType(f) => LawSampler::Phase(f),
        })
    }
}

/// Survival function and quantile of a [`ServiceLaw`] with parameters resolved.
#[derive(Debug, Clone)]
pub enum LawSampler {
    Lognormal(LogNormal),
    Weibull { shape: f64, scale: f64 },
    Phase(PhaseTypeFit),
}

impl LawSampler {
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        match self {
            LawSampler::Lognormal(d) => d.sf(x),
            LawSampler::Weibull { shape, scale } => (-(x / scale).powf(*shape)).exp(),
            LawSampler::Phase(f) => f.sf(x),
        }
    }

    /// Inverse CDF at `q` in `(0, 1)`.
    pub fn quantile(&self, q: f64) -> f64 {
        match self {
            LawSampler::Lognormal(d) => d.inverse_cdf(q),
            LawSampler::Weibull { shape, scale } => scale * (-(-q).ln_1p()).powf(1.0 / shape),
            LawSampler::Phase(f) => f.quantile(q),
        }
    }
}

/// Cell masses `P((j-1) step < B <= j step)` for `j = 1..=H`; the tail goes into cell `H`.
pub fn discretize(law: &ServiceLaw, step: f64, cells: usize) -> Result<DiscretePmf> {
    if !(step > 0.0) || cells == 0 {
        return domain(format!("need step > 0 and at least one cell, got {step}, {cells}"));
    }
    let s = law.sampler()?;
    let sf: Vec<f64> = (0..=cells).map(|j| s.sf(j as f64 * step)).collect();
    let mut masses: Vec<f64> = sf.windows(2).map(|w| (w[0] - w[1]).max(0.0)).collect();
    let tail = sf[cells];
    masses[cells - 1] += tail;
    let total: f64 = masses.iter().sum();
    for p in &mut masses {
        *p /= total;
    }
    Ok(DiscretePmf { step, masses, tail_mass: tail })
}

/// Default grid: step `0.01 mean`, `50 mean / step` cells.
pub fn discretize_default(law: &ServiceLaw) -> Result<DiscretePmf> {
    discretize(law, 0.01 * law.mean(), 5000)
}

/// Law of the residual service given more than `k` cells already served.
pub fn residual_pmf(pmf: &DiscretePmf, k: usize) -> Result<DiscretePmf> {
    if k == 0 {
        return Ok(pmf.clone());
    }
    let sf = pmf.sf_cells();
    if k >= pmf.len() || sf[k] <= 0.0 {
        return domain(format!("no service exceeds {k} cells"));
    }
    let masses: Vec<f64> = pmf.masses[k..].iter().map(|p| p / sf[k]).collect();
    Ok(DiscretePmf { step: pmf.step, masses, tail_mass: 0.0 })
}

/// Direct linear convolution.
pub fn convolve_direct(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Forward and inverse transforms of one fixed size.
#[derive(Clone)]
pub struct Spectral {
    size: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("size", &self.size).finish()
    }
}

impl Spectral {
    /// Transforms large enough for linear convolutions of total length `len`.
    pub fn for_len(len: usize) -> Self {
        let size = len.next_power_of_two();
        let mut planner = FftPlanner::new();
        Self { size, fwd: planner.plan_fft_forward(size), inv: planner.plan_fft_inverse(size) }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn forward(&self, x: &[f64]) -> Vec<Complex<f64>> {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        buf.resize(self.size, Complex::new(0.0, 0.0));
        self.fwd.process(&mut buf);
        buf
    }

    /// Real part of the inverse transform, first `len` entries.
    pub fn inverse(&self, mut spec: Vec<Complex<f64>>, len: usize) -> Vec<f64> {
        self.inv.process(&mut spec);
        let scale = 1.0 / self.size as f64;
        spec.iter().take(len).map(|c| c.re * scale).collect()
    }
}

/// Linear convolution; FFT when both supports exceed [`DIRECT_MAX`].
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.len() <= DIRECT_MAX || b.len() <= DIRECT_MAX {
        return convolve_direct(a, b);
    }
    let len = a.len() + b.len() - 1;
    let sp = Spectral::for_len(len);
    let mut fa = sp.forward(a);
    let fb = sp.forward(b);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    sp.inverse(fa, len)
}

/// Convolution of two mass vectors, truncated to `len`, with FFT noise
/// clipped at zero and the total mass restored.
pub fn convolve_pmf(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mass = a.iter().sum::<f64>() * b.iter().sum::<f64>();
    let mut c = convolve(a, b);
    for x in &mut c {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let got: f64 = c.iter().sum();
    if got > 0.0 {
        let f = mass / got;
        for x in &mut c {
            *x *= f;
        }
    }
    c.resize(len, 0.0);
    c
}

/// Expected cost of a static schedule under a discrete law, by the
/// waiting-time recursion `W' = (W + B - x)^+`. Gaps are rounded to cells.
/// Returns `(total, sum E I, sum E W)`.
pub fn static_cost_lindley(pmf: &DiscretePmf, gaps: &[f64], w: CostWeights) -> (f64, f64, f64) {
    let b = pmf.by_cell();
    let mut wait_law = vec![1.0];
    let (mut idle, mut wait) = (0.0, 0.0);
    for g in gaps {
        let x = (g / pmf.step).round().max(0.0) as usize;
        let d = convolve_pmf(&wait_law, &b, wait_law.len() + b.len() - 1);
        let mut next = vec![0.0; d.len().saturating_sub(x).max(1)];
        for (v, p) in d.iter().enumerate() {
            if v >= x {
                next[v - x] += p;
            } else {
                idle += p * (x - v) as f64;
            }
        }
        wait += next.iter().enumerate().map(|(v, p)| v as f64 * p).sum::<f64>();
        wait_law = next;
    }
    let (idle, wait) = (idle * pmf.step, wait * pmf.step);
    (w.idle() * idle + w.wait() * wait, idle, wait)
}

/// Stored values and decisions of the discrete DP, same layout as the
/// phase-type solution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvDpSolution {
    pub pmf: DiscretePmf,
    pub n: usize,
    pub omega: f64,
    /// Step equals the pmf step.
    pub grid: Grid,
    /// `xi[i-1][k-1][g]`, time units.
    pub xi: Vec<Vec<Vec<f64>>>,
    /// `tau[i-1][k-1][g]` in cells, stages `1..n`.
    pub tau: Vec<Vec<Vec<u32>>>,
    pub cost: f64,
}

impl ConvDpSolution {
    /// Interarrival time at `(i, k, u)`, linear in `u`, flat past the last
    /// stored age; out-of-range indices are clamped.
    pub fn tau_at(&self, i: usize, k: usize, u: f64) -> f64 {
        if self.n <= 1 {
            return 0.0;
        }
        let i = i.clamp(1, self.n - 1);
        let k = k.clamp(1, i);
        let steps: Vec<f64> = self.tau[i - 1][k - 1].iter().map(|&t| t as f64 * self.grid.delta).collect();
        self.grid.interp(&steps, u.max(0.0) / self.grid.delta)
    }

    pub fn value_at(&self, i: usize, k: usize, u: f64) -> f64 {
        self.grid.interp(&self.xi[i - 1][k - 1], u.max(0.0) / self.grid.delta)
    }
}

/// Default grid for a pmf: its step, ages `0, 10, .., 250` cells and then
/// every 50 cells up to 1500. Laws like the lognormal keep changing shape
/// with age long after a phase-type posterior has settled, so flat
/// extrapolation past 250 cells would misprice old services.
pub fn default_grid(pmf: &DiscretePmf) -> Grid {
    let m_values = (0..=25).map(|m| 10 * m).chain((6..=30).map(|m| 50 * m)).collect();
    Grid { delta: pmf.step, m_values, t_max_steps: None }
}

/// Where the system goes during one gap, on the cell lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTransition {
    /// Nobody left: `k+1` present, age `m + t`.
    pub up: f64,
    /// Everyone left: the arrival finds the server free.
    pub down: f64,
    /// `moves[j-1][a]`: `j` departures, the client in service has age `a`
    /// cells, `j = 1..k-1`, `a = 0..t`.
    pub moves: Vec<Vec<f64>>,
}

impl CellTransition {
    pub fn total(&self) -> f64 {
        self.up + self.down + self.moves.iter().flatten().sum::<f64>()
    }
}

/// Transition law used by [`convolution_dp`] from `k` present, age `m`
/// cells, gap `t` cells; computed directly rather than spectrally.
pub fn cell_transition(pmf: &DiscretePmf, k: usize, m: usize, t: usize) -> Result<CellTransition> {
    if k == 0 {
        return domain("need k >= 1");
    }
    let b = pmf.by_cell();
    let sf = pmf.sf_cells();
    let sf_at = |a: usize| sf.get(a).copied().unwrap_or(0.0);
    if sf_at(m) <= 0.0 {
        return domain(format!("age {m} cells is impossible"));
    }
    let len = t + 1;
    let mut s: Vec<f64> = (0..len).map(|x| if x == 0 { 0.0 } else { b.get(m + x).copied().unwrap_or(0.0) / sf_at(m) }).collect();
    let mut moves = Vec::with_capacity(k.saturating_sub(1));
    for _ in 1..k {
        moves.push((0..len).map(|a| if a < t { s[t - a] * sf_at(a) } else { 0.0 }).collect());
        s = convolve_pmf(&s, &b[..b.len().min(len)], len);
    }
    Ok(CellTransition { up: sf_at(m + t) / sf_at(m), down: s.iter().sum(), moves })
}

/// Per-age data shared by every stage.
struct AgeLaw {
    /// Whether the age can occur at all.
    live: bool,
    /// `p[j][x] = P(S_j = x)`, `j = 0..n-2`, `x = 0..=T`.
    p: Vec<Vec<f64>>,
    /// `P(r > x)`, `x = 0..=T`.
    r_sf: Vec<f64>,
}

/// Solve the discrete DP. `grid.delta` must equal the pmf step; the search
/// horizon is `grid.t_max_steps` or `ceil(2.5 (n+2) mean / step)`, doubled
/// once if the optimum sits on it.
pub fn convolution_dp(pmf: &DiscretePmf, n: usize, w: CostWeights, grid: &Grid) -> Result<ConvDpSolution> {
    if n == 0 {
        return domain("need at least one client");
    }
    if ((grid.delta - pmf.step) / pmf.step).abs() > 1e-9 {
        return domain(format!("grid step {} differs from pmf step {}", grid.delta, pmf.step));
    }
    let base = grid.t_max_steps.unwrap_or_else(|| (2.5 * (n as f64 + 2.0) * pmf.mean() / pmf.step).ceil() as u32);
    match conv_once(pmf, n, w, grid, base) {
        Err(Error::HorizonTooSmall { .. }) => conv_once(pmf, n, w, grid, base.saturating_mul(2)),
        r => r,
    }
}

fn conv_once(pmf: &DiscretePmf, n: usize, w: CostWeights, grid: &Grid, horizon: u32) -> Result<ConvDpSolution> {
    let t_len = horizon as usize + 1;
    let b = pmf.by_cell();
    let sf = pmf.sf_cells();
    let sf_at = |a: usize| sf.get(a).copied().unwrap_or(0.0);
    let ages = &grid.m_values;
    let max_age = *ages.last().unwrap() as usize;
    let step = pmf.step;

    // B^{*j} on [0, T]
    let mut folds = vec![{
        let mut d = vec![0.0; t_len];
        d[0] = 1.0;
        d
    }];
    for j in 1..n.saturating_sub(1) {
        let next = convolve_pmf(&folds[j - 1], &b[..b.len().min(t_len)], t_len);
        folds.push(next);
    }
    let laws: Vec<AgeLaw> = ages
        .par_iter()
        .map(|&m| {
            let m = m as usize;
            let live = sf_at(m) > 0.0;
            if !live || n < 2 {
                return AgeLaw { live, p: Vec::new(), r_sf: Vec::new() };
            }
            let mut r = vec![0.0; t_len];
            for (x, slot) in r.iter_mut().enumerate().skip(1) {
                *slot = b.get(m + x).copied().unwrap_or(0.0) / sf_at(m);
            }
            let r_sf: Vec<f64> = (0..t_len).map(|x| sf_at(m + x) / sf_at(m)).collect();
            let p = folds.iter().map(|f| convolve_pmf(&r, f, t_len)).collect();
            AgeLaw { live, p, r_sf }
        })
        .collect();

    // mean residual in cells at every age needed by the terminal stage
    let span = max_age + t_len + 1;
    let mut resid = vec![0.0; span];
    {
        let mut acc: f64 = (span..sf.len()).map(|y| sf[y]).sum();
        for a in (0..span).rev() {
            acc += sf_at(a);
            resid[a] = if sf_at(a) > 0.0 { acc / sf_at(a) } else { 0.0 };
        }
    }
    let mean_cells = pmf.mean() / step;
    let terminal = |l: usize, a: usize| {
        let l = l as f64;
        step * ((l - 1.0) * resid[a] + 0.5 * (l - 1.0) * (l - 2.0) * mean_cells)
    };

    let sp = Spectral::for_len(2 * t_len - 1);
    let mut xi: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    let mut tau: Vec<Vec<Vec<u32>>> = vec![Vec::new(); n.saturating_sub(1)];
    xi[n - 1] = (1..=n).map(|l| ages.iter().map(|&m| w.wait() * terminal(l, m as usize)).collect()).collect();

    for i in (1..n).rev() {
        // next-stage values as dense rows over ages 0..span
        let dense: Vec<Vec<f64>> = (1..=i + 1)
            .map(|l| {
                if i + 1 == n {
                    (0..span).map(|a| w.wait() * terminal(l, a)).collect()
                } else {
                    (0..span).map(|a| grid.interp(&xi[i][l - 1], a as f64)).collect()
                }
            })
            .collect();
        // spectra of h_l(a) = P(B > a) value(l, a), l = 2..=i
        let h_spec: Vec<Vec<Complex<f64>>> = (2..=i)
            .map(|l| sp.forward(&(0..t_len).map(|a| sf_at(a) * dense[l - 1][a]).collect::<Vec<_>>()))
            .collect();
        let rows: Vec<Result<Vec<(f64, u32)>>> = ages
            .par_iter()
            .enumerate()
            .map(|(g, &m)| {
                let law = &laws[g];
                let m = m as usize;
                if !law.live {
                    return Ok(vec![(f64::NAN, 0); i]);
                }
                let p_spec: Vec<Vec<Complex<f64>>> = law.p[..i.saturating_sub(1)].iter().map(|p| sp.forward(p)).collect();
                let mut wait = vec![0.0; t_len];
                let mut out = Vec::with_capacity(i);
                for k in 1..=i {
                    if k >= 2 {
                        // add client k's wait: sum_{x<t} P(S_{k-2} > x)
                        let mut cdf = 0.0;
                        let mut acc = 0.0;
                        for t in 1..t_len {
                            cdf += law.p[k - 2][t - 1];
                            acc += 1.0 - cdf;
                            wait[t] += acc;
                        }
                    }
                    let mut v = vec![0.0; t_len];
                    if k >= 2 {
                        let mut s = vec![Complex::new(0.0, 0.0); sp.size()];
                        for j in 1..k {
                            let (ps, hs) = (&p_spec[j - 1], &h_spec[k - j - 1]);
                            for ((o, a), c) in s.iter_mut().zip(ps).zip(hs) {
                                *o += a * c;
                            }
                        }
                        v = sp.inverse(s, t_len);
                    }
                    let (mut cdf, mut idle) = (0.0, 0.0);
                    let empty = &law.p[k - 1];
                    let mut best = (f64::INFINITY, 0u32);
                    for t in 0..t_len {
                        if t > 0 {
                            cdf += empty[t - 1];
                            idle += cdf;
                        }
                        let done = cdf + empty[t];
                        let val = w.idle() * idle * step
                            + w.wait() * wait[t] * step
                            + v[t]
                            + law.r_sf[t] * dense[k][m + t]
                            + done * dense[0][0];
                        if val < best.0 - 1e-13 {
                            best = (val, t as u32);
                        }
                    }
                    if best.1 as usize == t_len - 1 {
                        return Err(Error::HorizonTooSmall { stage: i, k, steps: horizon });
                    }
                    out.push(best);
                }
                Ok(out)
            })
            .collect();
        let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
        let mut xs = vec![vec![0.0; ages.len()]; i];
        let mut ts = vec![vec![0u32; ages.len()]; i];
        for k in 0..i {
            for g in 0..ages.len() {
                // unreachable ages borrow the previous stored age
                let (v, t) = if rows[g][k].0.is_nan() && g > 0 { (xs[k][g - 1], ts[k][g - 1]) } else { rows[g][k] };
                xs[k][g] = v;
                ts[k][g] = t;
            }
        }
        xi[i - 1] = xs;
        tau[i - 1] = ts;
    }
    let cost = if n == 1 { 0.0 } else { xi[0][0][0] };
    Ok(ConvDpSolution { pmf: pmf.clone(), n, omega: w.omega(), grid: grid.clone(), xi, tau, cost })
}
