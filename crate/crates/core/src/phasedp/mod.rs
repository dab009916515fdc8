//! Dynamic programming for phase-type service times.
//!
//! The state at an arrival epoch is `(i, k, u)` with `u` the elapsed
//! service of the client in service. The phase of that client is latent;
//! all window functionals are computed per phase and mixed with the
//! posterior given `u`. Ages and interarrival times live on a grid of step
//! `delta`; the value function is stored at a sparse set of ages and
//! interpolated linearly in between (flat beyond the last one).
//!
//! The solver runs in three steps: an exponential solve seeds a coarse
//! solve of the last two stages, which seeds a fine solve of everything.

pub mod kernels;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::expdp::solve_homogeneous;
use crate::optim::{integer_descent, Descent, OptimizerConfig};
use crate::probkernels::{PhaseLaw, PhaseTypeFit};
use crate::{CostWeights, WaitAccounting};

pub use kernels::{chi, psi, rho, rho_table, rho_table_recursive, sigma};
use kernels::{Model, WindowCtx};

/// Stopping tolerance of the integer descent over `t`.
pub const DESCENT_EPS: f64 = 1e-5;

/// Time grid of the discretized recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Step for ages and interarrival times.
    pub delta: f64,
    /// Ages, in steps, at which the value function is stored. Starts at 0.
    pub m_values: Vec<u32>,
    /// Largest interarrival time searched, in steps. `None` picks
    /// `ceil(4 (k+2) mean / delta)` per queue length.
    pub t_max_steps: Option<u32>,
}

impl Grid {
    pub fn new(delta: f64, m_values: Vec<u32>, t_max_steps: Option<u32>) -> Result<Self> {
        if !(delta > 0.0) {
            return domain(format!("grid step must be positive, got {delta}"));
        }
        if m_values.first() != Some(&0) || m_values.windows(2).any(|w| w[1] <= w[0]) {
            return domain("stored ages must start at 0 and increase strictly");
        }
        Ok(Self { delta, m_values, t_max_steps })
    }

    /// Step `0.01 mean`, ages `0, 10, .., 250` steps.
    pub fn fine(mean: f64) -> Self {
        Self { delta: 0.01 * mean, m_values: (0..=25).map(|m| 10 * m).collect(), t_max_steps: None }
    }

    /// Same ages in time as [`Grid::fine`], step ten times larger.
    pub fn coarse(mean: f64) -> Self {
        Self { delta: 0.1 * mean, m_values: (0..=25).collect(), t_max_steps: None }
    }

    /// A grid with step `factor` times larger covering the same ages.
    pub fn coarsened(&self, factor: u32) -> Self {
        let mut m: Vec<u32> = self.m_values.iter().map(|&x| (x as f64 / factor as f64).round() as u32).collect();
        m.dedup();
        Self { delta: self.delta * factor as f64, m_values: m, t_max_steps: self.t_max_steps.map(|t| t.div_ceil(factor)) }
    }

    /// Largest stored age, in time units.
    pub fn max_age(&self) -> f64 {
        *self.m_values.last().unwrap() as f64 * self.delta
    }

    pub(crate) fn horizon(&self, k: usize, mean: f64, stretch: u32) -> u32 {
        let base = self.t_max_steps.unwrap_or_else(|| (4.0 * (k as f64 + 2.0) * mean / self.delta).ceil() as u32);
        base.saturating_mul(stretch)
    }

    /// Linear interpolation weights of an age (in steps) over the stored ages.
    pub(crate) fn hat(&self, age: f64) -> (usize, usize, f64) {
        let m = &self.m_values;
        let last = m.len() - 1;
        if age >= m[last] as f64 {
            return (last, last, 0.0);
        }
        let hi = m.partition_point(|&x| (x as f64) <= age);
        let lo = hi - 1;
        let frac = (age - m[lo] as f64) / (m[hi] - m[lo]) as f64;
        (lo, hi, frac)
    }

    pub(crate) fn interp(&self, row: &[f64], age: f64) -> f64 {
        let (lo, hi, f) = self.hat(age);
        if f == 0.0 {
            row[lo]
        } else {
            row[lo] * (1.0 - f) + row[hi] * f
        }
    }
}

/// Transition law over one window, mixed over phases for a given age.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBundle {
    /// No departure: `k+1` present, age `u + t delta`.
    pub up: f64,
    /// Everyone left: one present, age zero.
    pub down: f64,
    /// `q[l-2][j]`: `l` present with age in step `j`, `l = 2..=k`, `j = 0..=t`.
    pub q: Vec<Vec<f64>>,
}

impl TransitionBundle {
    pub fn total(&self) -> f64 {
        self.up + self.down + self.q.iter().flatten().sum::<f64>()
    }
}

fn model_for(fit: &PhaseTypeFit) -> Model {
    Model::from_fit(fit)
}

fn check_state(k: usize, u: f64, t: f64) -> Result<()> {
    if k == 0 || !(u >= 0.0) || !(t >= 0.0) {
        return domain(format!("need k >= 1, u >= 0, t >= 0; got k={k}, u={u}, t={t}"));
    }
    Ok(())
}

fn mix(gamma: &[f64], per_phase: &[f64]) -> f64 {
    gamma.iter().zip(per_phase).map(|(g, x)| g * x).sum()
}

fn per_phase_idle(model: &Model, k: usize, t: f64, ctx: &WindowCtx) -> Vec<f64> {
    let mut out = vec![0.0; model.d()];
    model.idle(k, t, ctx, &mut out);
    out
}

/// Per-phase waiting accrued in `[0,t]`: `(k-1) t - sum_{j<k} f_{jz}(t)`.
fn per_phase_wait(model: &Model, k: usize, t: f64, ctx: &WindowCtx) -> Vec<f64> {
    let d = model.d();
    let mut out = vec![(k as f64 - 1.0) * t; d];
    let mut buf = vec![0.0; d];
    for j in 1..k {
        model.idle(j, t, ctx, &mut buf);
        for z in 0..d {
            out[z] -= buf[z];
        }
    }
    out
}

/// Expected idle time in `[0, t]` given `k` present and age `u`.
pub fn idle_mass(fit: &PhaseTypeFit, k: usize, u: f64, t: f64) -> Result<f64> {
    check_state(k, u, t)?;
    let model = model_for(fit);
    let ctx = model.ctx(k, t);
    Ok(mix(&fit_posterior(fit, u), &per_phase_idle(&model, k, t, &ctx)))
}

/// Expected total waiting accrued in `[0, t]`; `t` may be infinite.
pub fn wait_mass(fit: &PhaseTypeFit, k: usize, u: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return domain(format!("t must be nonnegative, got {t}"));
    }
    check_state(k, u, 0.0)?;
    let model = model_for(fit);
    let gamma = fit_posterior(fit, u);
    if t.is_infinite() {
        let per: Vec<f64> = (0..model.d()).map(|z| model.remaining_wait(k, z)).collect();
        return Ok(mix(&gamma, &per));
    }
    let ctx = model.ctx(k, t);
    Ok(mix(&gamma, &per_phase_wait(&model, k, t, &ctx)))
}

/// Expected wait of the client who just arrived as the `k`-th present.
pub fn wait_tail(fit: &PhaseTypeFit, k: usize, u: f64) -> Result<f64> {
    check_state(k, u, 0.0)?;
    let model = model_for(fit);
    let per: Vec<f64> = (0..model.d()).map(|z| model.wait_of_last(k, z)).collect();
    Ok(mix(&fit_posterior(fit, u), &per))
}

/// `P(system empties within x)` given `k` present and age `u`.
pub fn emptying_cdf(fit: &PhaseTypeFit, k: usize, u: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let model = model_for(fit);
    let ctx = model.ctx(k, x);
    let mut per = vec![0.0; model.d()];
    model.empty(k, x, &ctx, &mut per);
    mix(&fit_posterior(fit, u), &per).clamp(0.0, 1.0)
}

/// Posterior in the layout of the window functionals (exponential gets a
/// dummy second phase).
fn fit_posterior(fit: &PhaseTypeFit, u: f64) -> Vec<f64> {
    match fit.law {
        PhaseLaw::Exponential { .. } => vec![1.0, 0.0],
        _ => fit.posterior(u),
    }
}

fn ensure_we(fit: &PhaseTypeFit) -> Result<()> {
    match fit.law {
        PhaseLaw::WeightedErlang { .. } | PhaseLaw::Exponential { .. } => Ok(()),
        _ => domain("expected a weighted-Erlang (or exponential) fit"),
    }
}

/// Weighted-Erlang idle mass.
pub fn we_idle_mass(k: usize, u: f64, t: f64, fit: &PhaseTypeFit) -> Result<f64> {
    ensure_we(fit)?;
    idle_mass(fit, k, u, t)
}

/// Weighted-Erlang waiting mass.
pub fn we_wait_mass(k: usize, u: f64, t: f64, fit: &PhaseTypeFit) -> Result<f64> {
    ensure_we(fit)?;
    wait_mass(fit, k, u, t)
}

/// Weighted-Erlang wait of the last arrival.
pub fn we_wait_tail(k: usize, u: f64, fit: &PhaseTypeFit) -> Result<f64> {
    ensure_we(fit)?;
    wait_tail(fit, k, u)
}

/// Weighted-Erlang transition bundle.
pub fn we_transition_bundle(k: usize, m: u32, t_steps: u32, fit: &PhaseTypeFit, grid: &Grid) -> Result<TransitionBundle> {
    ensure_we(fit)?;
    transition_bundle(fit, k, m, t_steps, grid)
}

/// Hyperexponential window functionals for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct HeComponents {
    pub idle: f64,
    pub wait_tail: f64,
    pub up: f64,
    pub down: f64,
    /// `q[l-2][z]` at `v = t`: probability of `l` present after the window, phase `z`.
    pub q_full: Vec<[f64; 2]>,
}

/// Hyperexponential idle mass, wait tail and transition masses.
pub fn he_components(k: usize, u: f64, t: f64, fit: &PhaseTypeFit) -> Result<HeComponents> {
    if !matches!(fit.law, PhaseLaw::HyperExp { .. }) {
        return domain("expected a hyperexponential fit");
    }
    check_state(k, u, t)?;
    let model = model_for(fit);
    let ctx = model.ctx(k, t);
    let gamma = fit.posterior(u);
    let mut down = vec![0.0; 2];
    model.empty(k, t, &ctx, &mut down);
    let mut q = vec![0.0; 2 * k.saturating_sub(1)];
    model.q_at(k, t, t, &ctx, &model.bin_rows(k), &mut q);
    Ok(HeComponents {
        idle: mix(&gamma, &per_phase_idle(&model, k, t, &ctx)),
        wait_tail: wait_tail(fit, k, u)?,
        up: fit.sf(u + t) / fit.sf(u),
        down: mix(&gamma, &down),
        q_full: q.chunks(2).map(|c| [c[0], c[1]]).collect(),
    })
}

/// Raw per-phase window data on the grid: masses of the age bins
/// `[(j-1/2) delta, (j+1/2) delta]` clipped to `[0, t delta]`.
struct RawWindow {
    idle: Vec<f64>,
    wait: Vec<f64>,
    down: Vec<f64>,
    /// `bins[((l-2) * d + z) * (t+1) + j]`
    bins: Vec<f64>,
}

fn raw_window(model: &Model, k: usize, t_steps: u32, delta: f64, with_wait: bool) -> RawWindow {
    let d = model.d();
    let t = t_steps as f64 * delta;
    let ctx = model.ctx(k, t);
    let idle = per_phase_idle(model, k, t, &ctx);
    let wait = if with_wait { per_phase_wait(model, k, t, &ctx) } else { vec![0.0; d] };
    let mut down = vec![0.0; d];
    model.empty(k, t, &ctx, &mut down);
    let nb = t_steps as usize + 1;
    let width = (k.max(1) - 1) * d;
    let mut bins = vec![0.0; width * nb];
    if k >= 2 && t_steps > 0 {
        let rows = model.bin_rows(k);
        let mut prev = vec![0.0; width];
        let mut cur = vec![0.0; width];
        for j in 0..nb {
            let upper = if j + 1 == nb { t } else { ((j as f64 + 0.5) * delta).min(t) };
            model.q_at(k, upper, t, &ctx, &rows, &mut cur);
            for c in 0..width {
                bins[c * nb + j] = (cur[c] - prev[c]).max(0.0);
            }
            std::mem::swap(&mut prev, &mut cur);
        }
    }
    RawWindow { idle, wait, down, bins }
}

/// Transition bundle from `(k, m delta)` over `t_steps` grid steps.
pub fn transition_bundle(fit: &PhaseTypeFit, k: usize, m: u32, t_steps: u32, grid: &Grid) -> Result<TransitionBundle> {
    check_state(k, 0.0, 0.0)?;
    let model = model_for(fit);
    let d = model.d();
    let u = m as f64 * grid.delta;
    let gamma = fit_posterior(fit, u);
    let raw = raw_window(&model, k, t_steps, grid.delta, false);
    let nb = t_steps as usize + 1;
    let q = (2..=k)
        .map(|l| (0..nb).map(|j| (0..d).map(|z| gamma[z] * raw.bins[((l - 2) * d + z) * nb + j]).sum()).collect())
        .collect();
    Ok(TransitionBundle { up: fit.sf(u + t_steps as f64 * grid.delta) / fit.sf(u), down: mix(&gamma, &raw.down), q })
}

/// Window data with the age bins folded onto the stored ages.
struct Bundle {
    idle: Vec<f64>,
    wait: Vec<f64>,
    down: Vec<f64>,
    /// `proj[((l-2) * d + z) * G + g]`
    proj: Vec<f64>,
}

struct BundleCache {
    per_k: Vec<Mutex<HashMap<u32, Arc<Bundle>>>>,
}

impl BundleCache {
    fn new(kmax: usize) -> Self {
        Self { per_k: (0..=kmax + 1).map(|_| Mutex::new(HashMap::new())).collect() }
    }
}

/// One pass of the discretized recursion on a fixed grid.
struct Engine<'a> {
    fit: &'a PhaseTypeFit,
    model: Model,
    grid: &'a Grid,
    w: CostWeights,
    acc: WaitAccounting,
    n: usize,
    mean: f64,
    cache: BundleCache,
    stretch: u32,
}

impl<'a> Engine<'a> {
    fn new(fit: &'a PhaseTypeFit, grid: &'a Grid, n: usize, w: CostWeights, acc: WaitAccounting, stretch: u32) -> Self {
        Self { fit, model: model_for(fit), grid, w, acc, n, mean: fit.mean(), cache: BundleCache::new(n), stretch }
    }

    fn bundle(&self, k: usize, t: u32) -> Arc<Bundle> {
        if let Some(b) = self.cache.per_k[k].lock().unwrap().get(&t) {
            return b.clone();
        }
        let d = self.model.d();
        let g = self.grid.m_values.len();
        let raw = raw_window(&self.model, k, t, self.grid.delta, self.acc == WaitAccounting::Slot);
        let nb = t as usize + 1;
        let width = (k - 1) * d;
        let mut proj = vec![0.0; width * g];
        for j in 0..nb {
            let (lo, hi, f) = self.grid.hat(j as f64);
            for c in 0..width {
                let mass = raw.bins[c * nb + j];
                if mass == 0.0 {
                    continue;
                }
                proj[c * g + lo] += mass * (1.0 - f);
                if f > 0.0 {
                    proj[c * g + hi] += mass * f;
                }
            }
        }
        let b = Arc::new(Bundle { idle: raw.idle, wait: raw.wait, down: raw.down, proj });
        self.cache.per_k[k].lock().unwrap().insert(t, b.clone());
        b
    }

    /// Terminal values at the stored ages.
    fn terminal(&self) -> Vec<Vec<f64>> {
        let d = self.model.d();
        (1..=self.n)
            .map(|k| {
                self.grid
                    .m_values
                    .iter()
                    .map(|&m| {
                        let gamma = fit_posterior(self.fit, m as f64 * self.grid.delta);
                        let per: Vec<f64> = (0..d)
                            .map(|z| match self.acc {
                                WaitAccounting::Slot => self.model.remaining_wait(k, z),
                                WaitAccounting::Tail => self.model.wait_of_last(k, z),
                            })
                            .collect();
                        self.w.wait() * mix(&gamma, &per)
                    })
                    .collect()
            })
            .collect()
    }

    /// Stage objective for interarrival `t` steps from `(k, age m)`.
    fn objective(&self, k: usize, m: u32, t: u32, gamma: &[f64], sf_u: f64, next: &[Vec<f64>]) -> f64 {
        let b = self.bundle(k, t);
        let d = self.model.d();
        let g = self.grid.m_values.len();
        let wait_now: Vec<f64>;
        let wait = match self.acc {
            WaitAccounting::Slot => &b.wait,
            WaitAccounting::Tail => {
                wait_now = (0..d).map(|z| self.model.wait_of_last(k, z)).collect();
                &wait_now
            }
        };
        let mut v = 0.0;
        for z in 0..d {
            if gamma[z] == 0.0 {
                continue;
            }
            let mut s = self.w.idle() * b.idle[z] + self.w.wait() * wait[z] + b.down[z] * next[0][0];
            for l in 2..=k {
                let row = &b.proj[((l - 2) * d + z) * g..((l - 2) * d + z + 1) * g];
                s += row.iter().zip(&next[l - 1]).map(|(a, x)| a * x).sum::<f64>();
            }
            v += gamma[z] * s;
        }
        let u_end = (m + t) as f64;
        let up = self.fit.sf(u_end * self.grid.delta) / sf_u;
        v + up * self.grid.interp(&next[k], u_end)
    }

    /// Optimize one cell from `seed`.
    fn cell(&self, i: usize, k: usize, m: u32, seed: u32, next: &[Vec<f64>]) -> Result<(u32, f64)> {
        let u = m as f64 * self.grid.delta;
        let gamma = fit_posterior(self.fit, u);
        let sf_u = self.fit.sf(u);
        let cap = self.grid.horizon(k, self.mean, self.stretch);
        match integer_descent(|t| self.objective(k, m, t, &gamma, sf_u, next), seed.min(cap), cap, DESCENT_EPS) {
            Descent::Converged { t, value } => Ok((t, value)),
            Descent::HitCap { .. } => Err(Error::HorizonTooSmall { stage: i, k, steps: cap }),
        }
    }

    /// Evaluate a cell at a prescribed `t`.
    fn cell_fixed(&self, k: usize, m: u32, t: u32, next: &[Vec<f64>]) -> f64 {
        let u = m as f64 * self.grid.delta;
        self.objective(k, m, t, &fit_posterior(self.fit, u), self.fit.sf(u), next)
    }

    /// Stage `i` for `k = 1..=i` at the ages selected by `ages` (indices
    /// into the stored ages); the rest are left as NaN.
    fn stage<S>(&self, i: usize, next: &[Vec<f64>], ages: &[usize], seed: S) -> Result<(Vec<Vec<f64>>, Vec<Vec<u32>>)>
    where
        S: Fn(usize, usize, Option<u32>) -> u32 + Sync,
    {
        let g = self.grid.m_values.len();
        let rows: Vec<Result<(Vec<f64>, Vec<u32>)>> = (1..=i)
            .into_par_iter()
            .map(|k| {
                let mut xi = vec![f64::NAN; g];
                let mut tau = vec![0u32; g];
                let mut prev: Option<u32> = None;
                for &gi in ages {
                    let (t, v) = self.cell(i, k, self.grid.m_values[gi], seed(k, gi, prev), next)?;
                    xi[gi] = v;
                    tau[gi] = t;
                    prev = Some(t);
                }
                Ok((xi, tau))
            })
            .collect();
        let mut xs = Vec::with_capacity(i);
        let mut ts = Vec::with_capacity(i);
        for r in rows {
            let (x, t) = r?;
            xs.push(x);
            ts.push(t);
        }
        Ok((xs, ts))
    }
}

/// Settings for [`solve_phase_dp_with`].
#[derive(Debug, Clone)]
pub struct PhaseDpConfig {
    pub grid: Grid,
    /// Grid for the seeding pass over the last two stages; `None` skips it.
    pub coarse: Option<Grid>,
    pub accounting: WaitAccounting,
}

impl PhaseDpConfig {
    pub fn new(grid: Grid) -> Self {
        let coarse = Some(grid.coarsened(10));
        Self { grid, coarse, accounting: WaitAccounting::Slot }
    }
}

/// Result of the discretized recursion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDpSolution {
    pub fit: PhaseTypeFit,
    pub n: usize,
    pub omega: f64,
    pub grid: Grid,
    pub accounting: WaitAccounting,
    /// `xi[i-1][k-1][g]`: value at stored age `g`, `i = 1..=n`.
    pub xi: Vec<Vec<Vec<f64>>>,
    /// `tau[i-1][k-1][g]`: optimal interarrival in grid steps, `i = 1..n`.
    pub tau: Vec<Vec<Vec<u32>>>,
    /// `xi_1(1, 0)`.
    pub cost: f64,
}

/// Answer to a state query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauQuery {
    pub tau: f64,
    pub cost_to_go: f64,
    /// The age lies beyond the last stored age.
    pub extrapolated: bool,
}

impl PhaseDpSolution {
    fn check(&self, i: usize, k: usize, u: f64) -> Result<()> {
        if i == 0 || i >= self.n || k == 0 || k > i || !(u >= 0.0) {
            return domain(format!("need 1 <= k <= i < n = {} and u >= 0; got i={i}, k={k}, u={u}", self.n));
        }
        Ok(())
    }

    /// Interpolated interarrival time and value at `(i, k, u)`.
    pub fn query_tau(&self, i: usize, k: usize, u: f64) -> Result<TauQuery> {
        self.check(i, k, u)?;
        Ok(self.query_unchecked(i, k, u))
    }

    fn query_unchecked(&self, i: usize, k: usize, u: f64) -> TauQuery {
        let age = u / self.grid.delta;
        let steps: Vec<f64> = self.tau[i - 1][k - 1].iter().map(|&t| t as f64 * self.grid.delta).collect();
        TauQuery {
            tau: self.grid.interp(&steps, age),
            cost_to_go: self.grid.interp(&self.xi[i - 1][k - 1], age),
            extrapolated: u > self.grid.max_age() + 1e-12,
        }
    }

    /// Interarrival time for the policy handle; out-of-range states are clamped.
    pub fn tau_at(&self, i: usize, k: usize, u: f64) -> f64 {
        let i = i.clamp(1, self.n.saturating_sub(1).max(1));
        self.query_unchecked(i, k.clamp(1, i), u.max(0.0)).tau
    }

    /// Value at `(i, k, u)`, including the terminal stage.
    pub fn value_at(&self, i: usize, k: usize, u: f64) -> f64 {
        self.grid.interp(&self.xi[i - 1][k - 1], u / self.grid.delta)
    }

    /// The solution for `n' < n` clients, by index shift.
    pub fn truncated(&self, n_new: usize) -> Result<Self> {
        if n_new == 0 || n_new > self.n {
            return domain(format!("cannot derive {n_new} clients from {}", self.n));
        }
        let s = self.n - n_new;
        let xi: Vec<Vec<Vec<f64>>> = (1..=n_new).map(|i| self.xi[i + s - 1][..i].to_vec()).collect();
        let tau = (1..n_new).map(|i| self.tau[i + s - 1][..i].to_vec()).collect();
        let cost = xi[0][0][0];
        Ok(Self { n: n_new, xi, tau, cost, ..self.clone() })
    }
}

/// Solve with the default configuration for `grid`.
pub fn solve_phase_dp(fit: &PhaseTypeFit, n: usize, w: CostWeights, grid: &Grid) -> Result<PhaseDpSolution> {
    solve_phase_dp_with(fit, n, w, &PhaseDpConfig::new(grid.clone()))
}

/// Solve, retrying once with a doubled search horizon if it was too small.
pub fn solve_phase_dp_with(fit: &PhaseTypeFit, n: usize, w: CostWeights, cfg: &PhaseDpConfig) -> Result<PhaseDpSolution> {
    match solve_once(fit, n, w, cfg, 1) {
        Err(Error::HorizonTooSmall { .. }) => solve_once(fit, n, w, cfg, 2),
        r => r,
    }
}

fn solve_once(fit: &PhaseTypeFit, n: usize, w: CostWeights, cfg: &PhaseDpConfig, stretch: u32) -> Result<PhaseDpSolution> {
    if n == 0 {
        return domain("need at least one client");
    }
    let grid = &cfg.grid;
    let mean = fit.mean();
    let gsz = grid.m_values.len();
    let all: Vec<usize> = (0..gsz).collect();

    // step 1: exponential schedule with the same mean
    let exp = solve_homogeneous(n, 1.0 / mean, w, OptimizerConfig::default())?;

    // step 2: coarse pass over the last two stages
    let ratio_seed = |tau_time: f64| (tau_time / grid.delta).round().max(0.0) as u32;
    let mut coarse_last: Option<(Grid, Vec<Vec<u32>>)> = None;
    let mut coarse_prev: Option<Vec<u32>> = None;
    if let (Some(cg), true) = (&cfg.coarse, n >= 2) {
        let eng = Engine::new(fit, cg, n, w, cfg.accounting, stretch);
        let term = eng.terminal();
        let cg_all: Vec<usize> = (0..cg.m_values.len()).collect();
        let exp = &exp;
        let seed_exp = |i: usize| move |k: usize, _g: usize, prev: Option<u32>| prev.unwrap_or((exp.tau(i, k) / cg.delta).round() as u32);
        let (xi1, tau1) = eng.stage(n - 1, &term, &cg_all, seed_exp(n - 1))?;
        if n >= 3 {
            let (_, tau2) = eng.stage(n - 2, &xi1, &[0], seed_exp(n - 2))?;
            coarse_prev = Some(tau2.iter().map(|r| r[0]).collect());
        }
        coarse_last = Some((cg.clone(), tau1));
    }

    // step 3: fine pass
    let eng = Engine::new(fit, grid, n, w, cfg.accounting, stretch);
    let mut xi: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n];
    let mut tau: Vec<Vec<Vec<u32>>> = vec![Vec::new(); n - 1];
    xi[n - 1] = eng.terminal();
    for i in (1..n).rev() {
        let seed = |k: usize, g: usize, prev: Option<u32>| -> u32 {
            if i == n - 1 {
                if let Some((cg, t1)) = &coarse_last {
                    let age = grid.m_values[g] as f64 * grid.delta / cg.delta;
                    let row: Vec<f64> = t1[k - 1].iter().map(|&x| x as f64 * cg.delta).collect();
                    return ratio_seed(cg.interp(&row, age));
                }
            } else if let (Some(t2), None, Some((cg, _))) = (&coarse_prev, prev, &coarse_last) {
                return ratio_seed(t2[k - 1] as f64 * cg.delta);
            }
            prev.unwrap_or_else(|| ratio_seed(exp.tau(i, k)))
        };
        let (x, t) = eng.stage(i, &xi[i], &all, seed)?;
        xi[i - 1] = x;
        tau[i - 1] = t;
    }
    let cost = xi[0][0][0];
    Ok(PhaseDpSolution { fit: *fit, n, omega: w.omega(), grid: grid.clone(), accounting: cfg.accounting, xi, tau, cost })
}

/// Expected cost of an arbitrary policy on the discretized model.
///
/// `gap(i, k, u)` is rounded to the nearest grid step.
pub fn evaluate_policy<F>(fit: &PhaseTypeFit, n: usize, w: CostWeights, grid: &Grid, gap: F) -> Result<f64>
where
    F: Fn(usize, usize, f64) -> f64 + Sync,
{
    Ok(evaluate_policy_table(fit, n, w, grid, gap)?[0][0][0])
}

/// Value of a policy at every stored state, laid out like [`PhaseDpSolution::xi`].
pub fn evaluate_policy_table<F>(fit: &PhaseTypeFit, n: usize, w: CostWeights, grid: &Grid, gap: F) -> Result<Vec<Vec<Vec<f64>>>>
where
    F: Fn(usize, usize, f64) -> f64 + Sync,
{
    if n == 0 {
        return domain("need at least one client");
    }
    let eng = Engine::new(fit, grid, n, w, WaitAccounting::Slot, 1);
    let mut out = vec![eng.terminal()];
    for i in (1..n).rev() {
        let next = out.last().unwrap();
        let rows: Vec<Vec<f64>> = (1..=i)
            .into_par_iter()
            .map(|k| {
                grid.m_values
                    .iter()
                    .map(|&m| {
                        let x = gap(i, k, m as f64 * grid.delta).max(0.0);
                        eng.cell_fixed(k, m, (x / grid.delta).round() as u32, next)
                    })
                    .collect()
            })
            .collect();
        out.push(rows);
    }
    out.reverse();
    Ok(out)
}

#[cfg(test)]
mod tests;
