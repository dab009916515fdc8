//! Baseline policies and the common policy handle.
//!
//! - Static: all appointment times fixed at time zero.
//! - Sequential: each gap is the `(1-omega)`-quantile of the time until
//!   the system empties, ignoring everything after the next arrival.
//! - Stationary: the long-run optimal gap for the current queue length.
//!
//! Static schedules are optimized against an exact forward evaluator: the
//! closed-form chain for exponential kernels, a uniformized continuous-time
//! chain over (clients present, service phase) for phase-type laws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::expdp::{ExpDpSolution, ExpKernel, StationarySchedule};
use crate::optim::{bisect, minimize_halfline};
use crate::oracle::ConvDpSolution;
use crate::phasedp::{emptying_cdf, evaluate_policy, Grid, PhaseDpSolution};
use crate::probkernels::{PhaseLaw, PhaseTypeFit, PoissonRow};
use crate::CostWeights;

/// Observable state at an arrival epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    /// Index of the client that just arrived, 1-based.
    pub i: usize,
    /// Clients present, including the arrival.
    pub k: usize,
    /// Elapsed service time of the client in service.
    pub u: f64,
}

/// A model that can be pushed forward through a fixed schedule.
pub trait ForwardModel: Sync {
    type State: Clone + Send;
    fn n(&self) -> usize;
    /// State just after client 1 arrives at time zero.
    fn start(&self) -> Self::State;
    /// Let `gap` elapse after client `i`'s arrival and admit client `i+1`.
    /// Returns the new state, expected idle time and expected waiting accrued.
    fn advance(&self, i: usize, s: &Self::State, gap: f64) -> (Self::State, f64, f64);
    /// Expected waiting still to come once nobody else arrives.
    fn terminal_wait(&self, s: &Self::State) -> f64;
    fn time_scale(&self) -> f64;
}

/// Forward evaluation of an exponential kernel; the state is the law of `k`.
pub struct ExpForward<'a, K: ExpKernel>(pub &'a K);

impl<K: ExpKernel> ForwardModel for ExpForward<'_, K> {
    type State = Vec<f64>;

    fn n(&self) -> usize {
        self.0.n()
    }

    fn start(&self) -> Vec<f64> {
        vec![1.0]
    }

    fn advance(&self, i: usize, s: &Vec<f64>, gap: f64) -> (Vec<f64>, f64, f64) {
        let mut next = vec![0.0; s.len() + 1];
        let (mut idle, mut wait) = (0.0, 0.0);
        let mut buf = Vec::new();
        for (km1, &pk) in s.iter().enumerate() {
            if pk == 0.0 {
                continue;
            }
            let k = km1 + 1;
            idle += pk * self.0.idle(i, k, gap);
            wait += pk * self.0.wait(i, k, gap);
            self.0.trans(i, k, gap, &mut buf);
            for (l, p) in buf.iter().enumerate() {
                next[l] += pk * p;
            }
        }
        (next, idle, wait)
    }

    fn terminal_wait(&self, s: &Vec<f64>) -> f64 {
        let n = self.0.n();
        s.iter().enumerate().map(|(km1, p)| p * self.0.remaining_wait(n, km1 + 1)).sum()
    }

    fn time_scale(&self) -> f64 {
        self.0.time_scale()
    }
}

/// Phase-type service as a continuous-time chain on (clients present, phase).
///
/// Window functionals come from uniformization, so every term is a
/// positive sum and no matrix exponential is needed.
pub struct PhaseForward {
    n: usize,
    d: usize,
    fit: PhaseTypeFit,
    // sub-generator rates: move[z] = (target phase, rate); exit[z] = completion rate
    moves: Vec<Vec<(usize, f64)>>,
    exit: Vec<f64>,
    alpha: Vec<f64>,
    lambda: f64,
}

impl PhaseForward {
    pub fn new(fit: PhaseTypeFit, n: usize) -> Self {
        let d = fit.n_phases();
        let mut moves = vec![Vec::new(); d];
        let mut exit = vec![0.0; d];
        let mut alpha = vec![0.0; d];
        match fit.law {
            PhaseLaw::Exponential { rate } => {
                exit[0] = rate;
                alpha[0] = 1.0;
            }
            PhaseLaw::WeightedErlang { phases, weight: p, rate } => {
                let k = phases as usize;
                alpha[0] = 1.0;
                for z in 0..k - 1 {
                    moves[z].push((z + 1, rate));
                }
                moves[k - 1].push((k, rate * (1.0 - p)));
                exit[k - 1] = rate * p;
                exit[k] = rate;
            }
            PhaseLaw::HyperExp { weight: p, rate_fast, rate_slow } => {
                exit = vec![rate_fast, rate_slow];
                alpha = vec![p, 1.0 - p];
            }
        }
        let lambda = (0..d).map(|z| exit[z] + moves[z].iter().map(|m| m.1).sum::<f64>()).fold(0.0, f64::max);
        Self { n, d, fit, moves, exit, alpha, lambda }
    }

    #[inline]
    fn idx(&self, k: usize, z: usize) -> usize {
        1 + (k - 1) * self.d + z
    }

    fn jump(&self, v: &[f64], kmax: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        out[0] = v[0];
        for k in 1..=kmax {
            for z in 0..self.d {
                let m = v[self.idx(k, z)];
                if m == 0.0 {
                    continue;
                }
                let mut stay = 1.0;
                for &(z2, r) in &self.moves[z] {
                    out[self.idx(k, z2)] += m * r / self.lambda;
                    stay -= r / self.lambda;
                }
                let e = self.exit[z] / self.lambda;
                stay -= e;
                if e > 0.0 {
                    if k == 1 {
                        out[0] += m * e;
                    } else {
                        for (z2, a) in self.alpha.iter().enumerate() {
                            out[self.idx(k - 1, z2)] += m * e * a;
                        }
                    }
                }
                out[self.idx(k, z)] += m * stay.max(0.0);
            }
        }
    }
}

impl ForwardModel for PhaseForward {
    type State = Vec<f64>;

    fn n(&self) -> usize {
        self.n
    }

    fn start(&self) -> Vec<f64> {
        let mut v = vec![0.0; 1 + self.d];
        for (z, a) in self.alpha.iter().enumerate() {
            v[1 + z] = *a;
        }
        v
    }

    fn advance(&self, _i: usize, s: &Vec<f64>, gap: f64) -> (Vec<f64>, f64, f64) {
        let kmax = (s.len() - 1) / self.d;
        let lx = self.lambda * gap.max(0.0);
        let row = PoissonRow::new(lx, (lx + 12.0 * lx.sqrt() + 30.0) as usize);
        let mut v = s.clone();
        let mut tmp = vec![0.0; s.len()];
        let mut end = vec![0.0; s.len()];
        let (mut idle, mut wait) = (0.0, 0.0);
        for j in 0..row.pmf.len() {
            let pj = row.pmf[j];
            // integral weight of visit j over [0, gap]: P(Pois > j) / lambda
            let wj = row.tail_at(j as i64 + 1) / self.lambda;
            for (x, e) in v.iter().zip(end.iter_mut()) {
                *e += pj * x;
            }
            idle += wj * v[0];
            let mut busy = 0.0;
            for k in 2..=kmax {
                let mut m = 0.0;
                for z in 0..self.d {
                    m += v[self.idx(k, z)];
                }
                busy += (k - 1) as f64 * m;
            }
            wait += wj * busy;
            if wj < 1e-16 && row.tail_at(j as i64 + 1) < 1e-15 {
                break;
            }
            self.jump(&v, kmax, &mut tmp);
            std::mem::swap(&mut v, &mut tmp);
        }
        // admit the next client
        let mut next = vec![0.0; 1 + (kmax + 1) * self.d];
        for (z, a) in self.alpha.iter().enumerate() {
            next[1 + z] += end[0] * a;
        }
        for k in 1..=kmax {
            for z in 0..self.d {
                next[self.idx(k + 1, z)] += end[self.idx(k, z)];
            }
        }
        (next, idle, wait)
    }

    fn terminal_wait(&self, s: &Vec<f64>) -> f64 {
        let kmax = (s.len() - 1) / self.d;
        let eb = self.fit.mean();
        let mut w = 0.0;
        for k in 2..=kmax {
            let kf = (k - 1) as f64;
            for z in 0..self.d {
                w += s[self.idx(k, z)] * (kf * self.fit.mean_residual(z) + kf * (kf - 1.0) / 2.0 * eb);
            }
        }
        w
    }

    fn time_scale(&self) -> f64 {
        self.fit.mean()
    }
}

/// Expected cost of a static schedule given as gaps `x_2..x_n`.
/// Returns `(total, sum E I, sum E W)`.
pub fn evaluate_gaps<M: ForwardModel>(model: &M, w: CostWeights, gaps: &[f64]) -> (f64, f64, f64) {
    let mut s = model.start();
    let (mut idle, mut wait) = (0.0, 0.0);
    for (j, &g) in gaps.iter().enumerate() {
        let (ns, di, dw) = model.advance(j + 1, &s, g);
        s = ns;
        idle += di;
        wait += dw;
    }
    wait += model.terminal_wait(&s);
    (w.idle() * idle + w.wait() * wait, idle, wait)
}

/// Appointment times fixed in advance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticSchedule {
    /// `t_1 = 0 <= t_2 <= .. <= t_n`.
    pub times: Vec<f64>,
    pub omega: f64,
    /// Expected cost of the schedule.
    pub cost: f64,
}

impl StaticSchedule {
    pub fn gaps(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Gap between client `i` and `i+1`.
    pub fn gap(&self, i: usize) -> f64 {
        self.times[i] - self.times[i - 1]
    }
}

/// Settings for [`optimize_static`].
#[derive(Debug, Clone, Copy)]
pub struct StaticConfig {
    /// Stop once a full sweep improves the cost by less than this.
    pub sweep_tol: f64,
    pub xtol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub max_sweeps: usize,
}

impl Default for StaticConfig {
    fn default() -> Self {
        Self { sweep_tol: 1e-7, xtol: 1e-6, restarts: 3, seed: 0x5eed, max_sweeps: 2000 }
    }
}

fn descend<M: ForwardModel>(model: &M, w: CostWeights, gaps: &mut [f64], cfg: &StaticConfig) -> f64 {
    let n = model.n();
    let scale = model.time_scale();
    // states[j]: state after client j+1 arrived; prefix[j]: cost accrued before it
    let mut states = Vec::with_capacity(n);
    let mut prefix = Vec::with_capacity(n);
    states.push(model.start());
    prefix.push(0.0);
    for j in 0..n - 1 {
        let (s, di, dw) = model.advance(j + 1, &states[j], gaps[j]);
        prefix.push(prefix[j] + w.idle() * di + w.wait() * dw);
        states.push(s);
    }
    let total = |states: &Vec<M::State>, prefix: &Vec<f64>| prefix[n - 1] + w.wait() * model.terminal_wait(&states[n - 1]);
    let mut best = total(&states, &prefix);
    for _ in 0..cfg.max_sweeps {
        let before = best;
        for j in 0..n - 1 {
            let suffix = |x: f64| {
                let (mut s, di, dw) = model.advance(j + 1, &states[j], x);
                let mut c = prefix[j] + w.idle() * di + w.wait() * dw;
                for (jj, &g) in gaps.iter().enumerate().skip(j + 1) {
                    let (ns, di, dw) = model.advance(jj + 1, &s, g);
                    c += w.idle() * di + w.wait() * dw;
                    s = ns;
                }
                c + w.wait() * model.terminal_wait(&s)
            };
            // parabolic step from a central difference; bracket search if it fails
            let x0 = gaps[j];
            let h = (1e-3 * scale).min(x0.max(1e-3 * scale));
            let (fm, fp) = (suffix((x0 - h).max(0.0)), suffix(x0 + h));
            let curv = fp - 2.0 * best + fm;
            let newton = (curv > 0.0 && x0 >= h).then(|| {
                let step = (h * (fp - fm) / (2.0 * curv)).clamp(-0.5 * scale, 0.5 * scale);
                let x = (x0 - step).max(0.0);
                (x, suffix(x))
            });
            let (x, v) = match newton {
                Some((x, v)) if v <= best && (x - x0).abs() < 0.25 * scale => (x, v),
                _ => match minimize_halfline(suffix, x0, 0.05 * scale, cfg.xtol) {
                    Ok(r) => r,
                    Err(_) => continue,
                },
            };
            if v < best {
                gaps[j] = x;
                best = v;
                for jj in j..n - 1 {
                    let (s, di, dw) = model.advance(jj + 1, &states[jj], gaps[jj]);
                    prefix[jj + 1] = prefix[jj] + w.idle() * di + w.wait() * dw;
                    states[jj + 1] = s;
                }
                best = best.min(total(&states, &prefix));
            }
        }
        if before - best < cfg.sweep_tol {
            break;
        }
    }
    best
}

/// Cyclic coordinate descent over the gaps, seeded with gaps equal to the
/// mean service time, plus seeded random restarts.
pub fn optimize_static<M: ForwardModel>(model: &M, w: CostWeights, cfg: &StaticConfig) -> StaticSchedule {
    let n = model.n();
    if n <= 1 {
        return StaticSchedule { times: vec![0.0; n.max(1)], omega: w.omega(), cost: 0.0 };
    }
    let scale = model.time_scale();
    let mut gaps = vec![scale; n - 1];
    let mut cost = descend(model, w, &mut gaps, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.restarts {
        let mut g2: Vec<f64> = gaps.iter().map(|g| g * rng.gen_range(0.8..1.2)).collect();
        let c2 = descend(model, w, &mut g2, cfg);
        if c2 < cost {
            cost = c2;
            gaps = g2;
        }
    }
    let mut times = vec![0.0];
    for g in &gaps {
        times.push(times.last().unwrap() + g);
    }
    StaticSchedule { times, omega: w.omega(), cost }
}

/// Static schedule for phase-type service.
pub fn static_schedule(fit: &PhaseTypeFit, n: usize, w: CostWeights) -> Result<StaticSchedule> {
    if n == 0 {
        return domain("need at least one client");
    }
    Ok(optimize_static(&PhaseForward::new(*fit, n), w, &StaticConfig::default()))
}

/// Static schedule for an exponential kernel.
pub fn static_schedule_exp<K: ExpKernel>(kernel: &K, w: CostWeights) -> StaticSchedule {
    optimize_static(&ExpForward(kernel), w, &StaticConfig::default())
}

/// Sequential rule: the `(1-omega)`-quantile of the time until the system
/// is empty, given `k` present and elapsed service `u`.
pub fn sequential_next(fit: &PhaseTypeFit, k: usize, u: f64, w: CostWeights) -> Result<f64> {
    if k == 0 || !(u >= 0.0) {
        return domain(format!("need k >= 1 and u >= 0, got k={k}, u={u}"));
    }
    let target = w.wait();
    let mut hi = fit.mean() * (k as f64 + 1.0);
    while emptying_cdf(fit, k, u, hi) < target {
        hi *= 2.0;
    }
    Ok(bisect(|x| emptying_cdf(fit, k, u, x) >= target, 0.0, hi, 1e-10 * fit.mean()))
}

/// Expected total cost of the sequential rule, evaluated exactly on the
/// phase DP's grid (the rule is queried at stored ages, interpolated between).
pub fn sequential_policy_cost(fit: &PhaseTypeFit, n: usize, w: CostWeights, grid: &Grid) -> Result<f64> {
    evaluate_policy(fit, n, w, grid, |_, k, u| sequential_next(fit, k, u, w).unwrap_or(0.0))
}

/// Anything that maps an arrival-epoch state to the next gap.
#[derive(Debug, Clone)]
pub enum PolicyHandle {
    DynamicPhase(std::sync::Arc<PhaseDpSolution>),
    DynamicExp(std::sync::Arc<ExpDpSolution>),
    DynamicDiscrete(std::sync::Arc<ConvDpSolution>),
    Static(StaticSchedule),
    Stationary(StationarySchedule),
    Sequential { fit: PhaseTypeFit, weights: CostWeights },
}

impl PolicyHandle {
    /// Gap until the next appointment.
    pub fn next_gap(&self, s: &SystemState) -> f64 {
        match self {
            PolicyHandle::DynamicPhase(sol) => sol.tau_at(s.i, s.k, s.u),
            PolicyHandle::DynamicExp(sol) => sol.tau(s.i, s.k),
            PolicyHandle::DynamicDiscrete(sol) => sol.tau_at(s.i, s.k, s.u),
            PolicyHandle::Static(sch) => sch.gap(s.i),
            PolicyHandle::Stationary(st) => st.tau(s.k),
            PolicyHandle::Sequential { fit, weights } => sequential_next(fit, s.k, s.u, *weights).unwrap_or(0.0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyHandle::DynamicPhase(_) => "dynamic-dp",
            PolicyHandle::DynamicExp(_) => "dynamic-exp",
            PolicyHandle::DynamicDiscrete(_) => "dynamic-discrete",
            PolicyHandle::Static(_) => "static",
            PolicyHandle::Stationary(_) => "stationary",
            PolicyHandle::Sequential { .. } => "sequential",
        }
    }
}
