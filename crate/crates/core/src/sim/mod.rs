//! Monte Carlo evaluation of a policy under a given service law.
//!
//! Run `r` draws its service times from its own ChaCha stream (seed,
//! stream `r`), by inverse CDF. Two policies simulated with the same seed
//! and law therefore see identical service times.

pub mod experiments;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::oracle::{DiscretePmf, LawSampler, ServiceLaw};
use crate::policies::{PolicyHandle, SystemState};
use crate::probkernels::PhaseTypeFit;
use crate::CostWeights;

/// The law service times actually follow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrueLaw {
    Phase(PhaseTypeFit),
    Discrete(DiscretePmf),
    Lognormal { mean: f64, scv: f64 },
    Weibull { mean: f64, scv: f64 },
}

impl TrueLaw {
    fn sampler(&self) -> Result<Sampler> {
        Ok(match self {
            TrueLaw::Phase(f) => Sampler::Cont(ServiceLaw::PhaseType(*f).sampler()?),
            TrueLaw::Lognormal { mean, scv } => Sampler::Cont(ServiceLaw::Lognormal { mean: *mean, scv: *scv }.sampler()?),
            TrueLaw::Weibull { mean, scv } => Sampler::Cont(ServiceLaw::Weibull { mean: *mean, scv: *scv }.sampler()?),
            TrueLaw::Discrete(p) => {
                let mut acc = 0.0;
                let cdf = p.masses.iter().map(|m| {
                    acc += m;
                    acc
                });
                Sampler::Disc { step: p.step, cdf: cdf.collect() }
            }
        })
    }
}

enum Sampler {
    Cont(LawSampler),
    Disc { step: f64, cdf: Vec<f64> },
}

impl Sampler {
    fn draw(&self, q: f64) -> f64 {
        match self {
            Sampler::Cont(s) => s.quantile(q),
            Sampler::Disc { step, cdf } => {
                let j = cdf.partition_point(|&c| c < q).min(cdf.len() - 1);
                (j + 1) as f64 * step
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub runs: usize,
    pub seed: u64,
    pub n: usize,
    pub omega: f64,
    pub law: TrueLaw,
}

impl SimConfig {
    pub fn new(n: usize, omega: f64, law: TrueLaw) -> Self {
        Self { runs: 10_000, seed: 1, n, omega, law }
    }
}

/// One simulated day. Index `j` is client `j+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub arrival: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub wait: Vec<f64>,
    /// Server idle time just before the client arrived.
    pub idle: Vec<f64>,
}

impl Trajectory {
    pub fn total_idle(&self) -> f64 {
        self.idle.iter().sum()
    }

    pub fn total_wait(&self) -> f64 {
        self.wait.iter().sum()
    }

    pub fn cost(&self, w: CostWeights) -> f64 {
        w.idle() * self.total_idle() + w.wait() * self.total_wait()
    }

    /// `|sum I + sum B - (t_n + W_n + B_n)|`; zero up to rounding.
    pub fn makespan_gap(&self) -> f64 {
        let n = self.arrival.len();
        let busy: f64 = self.start.iter().zip(&self.end).map(|(s, e)| e - s).sum();
        let last = self.arrival[n - 1] + self.wait[n - 1] + (self.end[n - 1] - self.start[n - 1]);
        (self.total_idle() + busy - last).abs()
    }
}

/// Run one day with given service times, asking `policy` for each gap.
pub fn run_day(policy: &PolicyHandle, services: &[f64]) -> Trajectory {
    let n = services.len();
    let mut t = Trajectory {
        arrival: Vec::with_capacity(n),
        start: Vec::with_capacity(n),
        end: Vec::with_capacity(n),
        wait: Vec::with_capacity(n),
        idle: Vec::with_capacity(n),
    };
    let mut head = 0;
    let mut now = 0.0;
    for (j, &b) in services.iter().enumerate() {
        let free = if j == 0 { 0.0 } else { t.end[j - 1] };
        let start = if now > free { now } else { free };
        t.arrival.push(now);
        t.start.push(start);
        t.end.push(start + b);
        t.wait.push(start - now);
        t.idle.push(if j == 0 { 0.0 } else { (now - free).max(0.0) });
        if j + 1 == n {
            break;
        }
        while t.end[head] <= now {
            head += 1;
        }
        let state = SystemState { i: j + 1, k: j + 1 - head, u: now - t.start[head] };
        assert!(state.k >= 1 && state.k <= state.i, "state out of range: {state:?}");
        now += policy.next_gap(&state).max(0.0);
    }
    t
}

/// Mean and variance accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, o: &Welford) -> Welford {
        if self.count == 0 {
            return *o;
        }
        if o.count == 0 {
            return *self;
        }
        let count = self.count + o.count;
        let d = o.mean - self.mean;
        let mean = self.mean + d * o.count as f64 / count as f64;
        let m2 = self.m2 + o.m2 + d * d * (self.count as f64 * o.count as f64) / count as f64;
        Welford { count, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_err(&self) -> f64 {
        (self.variance() / self.count.max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub runs: usize,
    pub seed: u64,
    pub mean_cost: f64,
    pub std_err: f64,
    pub mean_idle: f64,
    pub mean_wait: f64,
    /// Largest makespan-identity residual over all runs.
    pub max_makespan_gap: f64,
}

/// Service times of run `run`.
pub fn draw_services(law: &TrueLaw, n: usize, seed: u64, run: u64) -> Result<Vec<f64>> {
    let s = law.sampler()?;
    Ok(draws(&s, n, seed, run))
}

fn draws(s: &Sampler, n: usize, seed: u64, run: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    (0..n).map(|_| s.draw(rng.gen_range(f64::EPSILON..1.0))).collect()
}

/// Estimate the expected cost of `policy` over `cfg.runs` independent days.
pub fn simulate(policy: &PolicyHandle, cfg: &SimConfig) -> Result<SimSummary> {
    if cfg.runs == 0 || cfg.n == 0 {
        return domain("need at least one run and one client");
    }
    let w = CostWeights::new(cfg.omega)?;
    let sampler = cfg.law.sampler()?;
    let per_run: Vec<(f64, f64, f64, f64)> = (0..cfg.runs as u64)
        .into_par_iter()
        .map(|r| {
            let tr = run_day(policy, &draws(&sampler, cfg.n, cfg.seed, r));
            (tr.cost(w), tr.total_idle(), tr.total_wait(), tr.makespan_gap())
        })
        .collect();
    // sequential reduction keeps the result independent of the thread count
    let (mut c, mut i, mut wt) = (Welford::default(), Welford::default(), Welford::default());
    let mut gap: f64 = 0.0;
    for (a, b, d, g) in per_run {
        c.push(a);
        i.push(b);
        wt.push(d);
        gap = gap.max(g);
    }
    Ok(SimSummary {
        runs: cfg.runs,
        seed: cfg.seed,
        mean_cost: c.mean,
        std_err: c.std_err(),
        mean_idle: i.mean,
        mean_wait: wt.mean,
        max_makespan_gap: gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit_phase_type;
    use crate::policies::StaticSchedule;

    fn exp_law() -> TrueLaw {
        TrueLaw::Phase(fit_phase_type(1.0, 1.0).unwrap())
    }

    #[test]
    fn single_client_costs_nothing() {
        let p = PolicyHandle::Static(StaticSchedule { times: vec![0.0], omega: 0.5, cost: 0.0 });
        let s = simulate(&p, &SimConfig { runs: 50, ..SimConfig::new(1, 0.5, exp_law()) }).unwrap();
        assert_eq!(s.mean_cost, 0.0);
    }

    #[test]
    fn hand_checked_day() {
        let p = PolicyHandle::Static(StaticSchedule { times: vec![0.0, 1.0, 2.0], omega: 0.5, cost: 0.0 });
        let t = run_day(&p, &[1.5, 0.2, 0.5]);
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12);
        assert!(close(&t.wait, &[0.0, 0.5, 0.0]), "{:?}", t.wait);
        assert!(close(&t.idle, &[0.0, 0.0, 0.3]), "{:?}", t.idle);
        assert!(t.makespan_gap() < 1e-12);
    }

    #[test]
    fn welford_merge_matches_push() {
        let xs: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 * 0.3).collect();
        let mut all = Welford::default();
        let (mut a, mut b) = (Welford::default(), Welford::default());
        for (j, x) in xs.iter().enumerate() {
            all.push(*x);
            if j < 40 { a.push(*x) } else { b.push(*x) }
        }
        let m = a.merge(&b);
        assert!((m.mean - all.mean).abs() < 1e-12 && (m.variance() - all.variance()).abs() < 1e-10);
    }

    #[test]
    fn same_seed_same_draws() {
        let law = TrueLaw::Lognormal { mean: 1.0, scv: 0.5 };
        assert_eq!(draw_services(&law, 5, 9, 3).unwrap(), draw_services(&law, 5, 9, 3).unwrap());
        assert_ne!(draw_services(&law, 5, 9, 3).unwrap(), draw_services(&law, 5, 9, 4).unwrap());
    }

    #[test]
    fn discrete_draws_land_on_cells() {
        let pmf = DiscretePmf::new(0.5, vec![0.25, 0.5, 0.25]).unwrap();
        let d = draw_services(&TrueLaw::Discrete(pmf), 200, 1, 0).unwrap();
        assert!(d.iter().all(|x| [0.5, 1.0, 1.5].contains(x)));
    }
}
