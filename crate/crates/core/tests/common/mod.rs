//! Independent references shared by the integration tests.
//!
//! The quadrature integrands are written from Erlang densities and Poisson
//! masses only and share no code with the library kernels.

#![allow(dead_code)]

use std::sync::Arc;

use dynsched_core::expdp::{erlang_mix_coeffs, solve_kernel, trans_probs_hom, ExpKernel, HetKernel, HomKernel};
use dynsched_core::optim::OptimizerConfig;
use dynsched_core::oracle::{cell_transition, convolution_dp, default_grid, discretize, ServiceLaw};
use dynsched_core::phasedp::kernels::{chi, psi, rho, sigma};
use dynsched_core::phasedp::{solve_phase_dp, solve_phase_dp_with, transition_bundle, Grid, PhaseDpConfig};
use dynsched_core::policies::PolicyHandle;
use dynsched_core::sim::{simulate, SimConfig, TrueLaw};
use dynsched_core::{fit_phase_type, CostWeights, WaitAccounting};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn w(omega: f64) -> CostWeights {
    CostWeights::new(omega).unwrap()
}

/// Rates on [0.2, 3] kept at least `gap` apart.
pub fn distinct_rates(rng: &mut ChaCha8Rng, n: usize, gap: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(n);
    while out.len() < n {
        let r = rng.gen_range(0.2..3.0);
        if out.iter().all(|x| (x - r).abs() >= gap) {
            out.push(r);
        }
    }
    out
}

/// Worst `|sum_j c_j/mu_j - 1|` over every contiguous window of 15 random
/// 15-rate vectors.
pub fn worst_mix_mass(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..15 {
        let rates = distinct_rates(&mut rng, 15, 0.05);
        for a in 0..rates.len() {
            for b in a..rates.len() {
                let c = erlang_mix_coeffs(&rates[a..=b]).unwrap();
                worst = worst.max((c.mass() - 1.0).abs());
            }
        }
    }
    worst
}

/// The fine step with stored ages continued to ten means, so that flat
/// extrapolation past the last age sees a saturated posterior.
pub fn long_age_grid(coarsen: u32) -> Grid {
    let base = Grid::fine(1.0).coarsened(coarsen);
    let mut ms = base.m_values.clone();
    let step = ms[1] - ms[0];
    while (*ms.last().unwrap() as f64) * base.delta < 10.0 {
        let last = *ms.last().unwrap();
        ms.push(last + step);
    }
    Grid::new(base.delta, ms, None).unwrap()
}

/// Largest cost and interarrival differences between slot and tail
/// accounting over 20 random exponential instances, half heterogeneous.
pub fn exp_accounting_gap(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut dc, mut dt) = (0.0f64, 0.0f64);
    for case in 0..20 {
        let n = rng.gen_range(2..16);
        let omega = rng.gen_range(0.05..0.95);
        let opt = OptimizerConfig::default();
        let run = |k: &dyn Fn(WaitAccounting) -> dynsched_core::expdp::ExpDpSolution| (k(WaitAccounting::Slot), k(WaitAccounting::Tail));
        let (a, b) = if case % 2 == 0 {
            let k = HomKernel { n, mu: rng.gen_range(0.5..2.0) };
            run(&|acc| solve_kernel(&k, w(omega), acc, opt).unwrap())
        } else {
            let k = HetKernel::new(&distinct_rates(&mut rng, n, 0.05)).unwrap();
            run(&|acc| solve_kernel(&k, w(omega), acc, opt).unwrap())
        };
        dc = dc.max((a.cost - b.cost).abs());
        for (x, y) in a.tau.iter().flatten().zip(b.tau.iter().flatten()) {
            dt = dt.max((x - y).abs());
        }
    }
    (dc, dt)
}

/// Phase-type counterpart on the long-age grid at `5 x` the fine step:
/// `(worst cost gap / allowed, worst interarrival gap in steps)`.
/// The allowance is `1e-4` scaled by the step relative to the fine one.
pub fn phase_accounting_gap(seed: u64) -> (f64, u32) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = long_age_grid(5);
    let allowed = 1e-4 * grid.delta / 0.01;
    let (mut dc, mut dt) = (0.0f64, 0u32);
    for _ in 0..20 {
        let n = rng.gen_range(2..7);
        let scv = [0.3, 0.5, 0.8, 1.0, 1.3, 1.8][rng.gen_range(0..6)];
        let omega = rng.gen_range(0.1..0.9);
        let fit = fit_phase_type(1.0, scv).unwrap();
        let mut cfg = PhaseDpConfig::new(grid.clone());
        let a = solve_phase_dp_with(&fit, n, w(omega), &cfg).unwrap();
        cfg.accounting = WaitAccounting::Tail;
        let b = solve_phase_dp_with(&fit, n, w(omega), &cfg).unwrap();
        dc = dc.max((a.cost - b.cost).abs() / allowed);
        for (x, y) in a.tau.iter().flatten().flatten().zip(b.tau.iter().flatten().flatten()) {
            dt = dt.max(x.abs_diff(*y));
        }
    }
    (dc, dt)
}

/// Relative gaps between the phase-type recursion and the convolution
/// oracle on the discretized fitted law, `n <= 5`.
pub fn oracle_gaps() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for scv in [0.3, 0.6, 1.0, 1.5, 2.0] {
        let fit = fit_phase_type(1.0, scv).unwrap();
        let pmf = discretize(&ServiceLaw::PhaseType(fit), 0.01, 5000).unwrap();
        let cgrid = default_grid(&pmf);
        for omega in [0.2, 0.5, 0.8] {
            for n in [2, 3, 5] {
                let conv = convolution_dp(&pmf, n, w(omega), &cgrid).unwrap().cost;
                let phase = solve_phase_dp(&fit, n, w(omega), &Grid::fine(1.0)).unwrap().cost;
                out.push((format!("scv={scv} omega={omega} n={n}"), (phase - conv).abs() / conv));
            }
        }
    }
    out
}

/// A policy simulated against its own model next to the DP value.
pub struct SimPoint {
    pub label: String,
    pub dp: f64,
    pub mean: f64,
    pub se: f64,
    /// Largest makespan-identity residual over the runs.
    pub makespan_gap: f64,
}

impl SimPoint {
    pub fn within(&self, ses: f64) -> bool {
        (self.mean - self.dp).abs() <= ses * self.se
    }
}

/// Dynamic policies simulated for 10,000 days each: the exponential model
/// and phase-type fits on both sides of SCV one.
pub fn sim_points() -> Vec<SimPoint> {
    let mut out = Vec::new();
    let cfg = |law: TrueLaw| SimConfig { runs: 10_000, seed: 7, n: 10, omega: 0.5, law };
    let exp = solve_kernel(&HomKernel { n: 10, mu: 1.0 }, w(0.5), WaitAccounting::Slot, OptimizerConfig::default()).unwrap();
    let dp = exp.cost;
    let s = simulate(&PolicyHandle::DynamicExp(Arc::new(exp)), &cfg(TrueLaw::Phase(fit_phase_type(1.0, 1.0).unwrap()))).unwrap();
    out.push(SimPoint { label: "exponential".into(), dp, mean: s.mean_cost, se: s.std_err, makespan_gap: s.max_makespan_gap });
    for scv in [0.5, 1.5] {
        let fit = fit_phase_type(1.0, scv).unwrap();
        let sol = solve_phase_dp(&fit, 10, w(0.5), &Grid::fine(1.0)).unwrap();
        let dp = sol.cost;
        let s = simulate(&PolicyHandle::DynamicPhase(Arc::new(sol)), &cfg(TrueLaw::Phase(fit))).unwrap();
        out.push(SimPoint { label: format!("phase scv={scv}"), dp, mean: s.mean_cost, se: s.std_err, makespan_gap: s.max_makespan_gap });
    }
    out
}

/// Worst deviation from one of the row sums of every transition object
/// over a random lattice of states, with the number of states visited.
pub fn transition_mass(seed: u64) -> Vec<(&'static str, usize, f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut buf = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (k, t, mu) = (rng.gen_range(1..40), rng.gen_range(0.0..30.0), rng.gen_range(0.1..5.0));
        let p = trans_probs_hom(k, t, mu).unwrap();
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs()).max(if p.iter().all(|&x| x >= 0.0) { 0.0 } else { 1.0 });
    }
    out.push(("homogeneous", 1000, worst, 1e-12));

    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(2..12);
        let kern = HetKernel::new(&distinct_rates(&mut rng, n, 0.05)).unwrap();
        let i = rng.gen_range(1..n);
        let k = rng.gen_range(1..=i);
        kern.trans(i, k, rng.gen_range(0.0..20.0), &mut buf);
        worst = worst.max((buf.iter().sum::<f64>() - 1.0).abs()).max(if buf.iter().all(|&x| x >= 0.0) { 0.0 } else { 1.0 });
    }
    out.push(("heterogeneous", 1000, worst, 1e-9));

    let grid = Grid::fine(1.0);
    let fits: Vec<_> = [0.3, 0.7, 1.4, 2.0].iter().map(|&s| fit_phase_type(1.0, s).unwrap()).collect();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let fit = &fits[rng.gen_range(0..fits.len())];
        let b = transition_bundle(fit, rng.gen_range(1..=10), grid.m_values[rng.gen_range(0..grid.m_values.len())], rng.gen_range(0..1000), &grid).unwrap();
        worst = worst.max((b.total() - 1.0).abs());
    }
    out.push(("phase bundle", 1000, worst, 1e-8));

    let pmf = discretize(&ServiceLaw::Lognormal { mean: 1.0, scv: 0.8 }, 0.05, 400).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let row = cell_transition(&pmf, rng.gen_range(1..8), rng.gen_range(0..120), rng.gen_range(0..150)).unwrap();
        let neg = row.moves.iter().flatten().any(|&x| x < 0.0);
        worst = worst.max((row.total() - 1.0).abs()).max(if neg { 1.0 } else { 0.0 });
    }
    out.push(("oracle row", 1000, worst, 1e-10));
    out
}

// ---- quadrature references for the window kernels ----

fn ln_fact(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

fn pois(j: usize, lam: f64) -> f64 {
    if lam == 0.0 {
        return if j == 0 { 1.0 } else { 0.0 };
    }
    (j as f64 * lam.ln() - lam - ln_fact(j)).exp()
}

fn erlang_pdf(k: usize, mu: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return if k == 1 { mu } else { 0.0 };
    }
    mu * pois(k - 1, mu * x)
}

fn erlang_sf(k: usize, mu: f64, x: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    (0..k).map(|j| pois(j, mu * x.max(0.0))).sum()
}

/// Composite Simpson with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for j in 1..n {
        s += if j % 2 == 1 { 4.0 } else { 2.0 } * f(a + j as f64 * h);
    }
    s * h / 3.0
}

/// Density of `E(a, mu1) + E(b, mu2)`, `a + b >= 1`.
fn sum_pdf(a: usize, b: usize, mu1: f64, mu2: f64, s: f64) -> f64 {
    match (a, b) {
        (0, b) => erlang_pdf(b, mu2, s),
        (a, 0) => erlang_pdf(a, mu1, s),
        (a, b) => simpson(|y| erlang_pdf(a, mu1, y) * erlang_pdf(b, mu2, s - y), 0.0, s, 400),
    }
}

/// A kernel value next to its quadrature reference.
pub struct Point {
    pub label: String,
    pub kernel: f64,
    pub quadrature: f64,
}

impl Point {
    pub fn close(&self) -> bool {
        (self.kernel - self.quadrature).abs() <= 1e-7 + 1e-6 * self.quadrature.abs()
    }
}

pub fn psi_points() -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..30)
        .map(|_| {
            let mu: f64 = rng.gen_range(0.3..4.0);
            let t: f64 = rng.gen_range(0.05..8.0);
            let v = rng.gen_range(0.0..1.2) * t;
            let k = rng.gen_range(1..8);
            let l = k + rng.gen_range(1..6);
            // first k events in [t-v, t], the remaining l-k not all done by t
            let q = simpson(|s| erlang_pdf(k, mu, s) * erlang_sf(l - k, mu, t - s), (t - v).max(0.0), t, 4000);
            Point { label: format!("psi(v={v}, t={t}, k={k}, l={l}, mu={mu})"), kernel: psi(v, t, k, l, mu), quadrature: q }
        })
        .collect()
}

pub fn rho_points() -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    (0..30)
        .map(|j| {
            let mu1 = rng.gen_range(0.2..5.0);
            // a few equal-rate points exercise the series where recursions break down
            let mu2 = if j % 6 == 0 { mu1 } else { rng.gen_range(0.2..5.0) };
            let t = rng.gen_range(0.05..10.0);
            let (m, k) = (rng.gen_range(0..10), rng.gen_range(0..10));
            let q = simpson(|u| pois(m, mu1 * u) * pois(k, mu2 * (t - u)), 0.0, t, 4000);
            Point { label: format!("rho(t={t}, m={m}, k={k}, {mu1}, {mu2})"), kernel: rho(t, m, k, mu1, mu2), quadrature: q }
        })
        .collect()
}

pub fn sigma_points() -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    (0..24)
        .map(|j| {
            let mu1 = rng.gen_range(0.5..4.0);
            let mu2 = rng.gen_range(0.2..mu1);
            let t: f64 = rng.gen_range(0.1..6.0);
            let (m, k) = match j % 4 {
                0 => (rng.gen_range(1..5), 0),
                1 => (0, rng.gen_range(1..5)),
                _ => (rng.gen_range(1..5), rng.gen_range(1..5)),
            };
            // int_0^t P(S <= s) ds = E[(t - S)^+]
            let q = simpson(|s| (t - s) * sum_pdf(m, k, mu1, mu2, s), 0.0, t, 400);
            Point { label: format!("sigma(t={t}, m={m}, k={k}, {mu1}, {mu2})"), kernel: sigma(t, m, k, mu1, mu2), quadrature: q }
        })
        .collect()
}

pub fn chi_points() -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut out: Vec<Point> = (0..30)
        .map(|j| {
            let mu1 = rng.gen_range(0.5..4.0);
            let mu2 = rng.gen_range(0.2..mu1);
            let t: f64 = rng.gen_range(0.1..6.0);
            let v = rng.gen_range(0.05..1.3) * t;
            let i = 1 + (j % 2) as u8;
            let (k, l) = match j % 5 {
                0 => (rng.gen_range(1..5), 0),
                1 => (0, rng.gen_range(1..5)),
                _ => (rng.gen_range(1..5), rng.gen_range(1..5)),
            };
            let mu_i = if i == 1 { mu1 } else { mu2 };
            let q = simpson(|s| sum_pdf(k, l, mu1, mu2, s) * (-mu_i * (t - s)).exp(), (t - v).max(0.0), t, 400);
            Point { label: format!("chi(v={v}, t={t}, i={i}, k={k}, l={l}, {mu1}, {mu2})"), kernel: chi(v, t, i, k, l, mu1, mu2), quadrature: q }
        })
        .collect();
    // S = 0: the window must reach back to 0 and the extra phase outlast t
    for (v, t) in [(1.0, 1.0), (2.0, 1.5), (0.5, 1.0)] {
        let q = if v >= t { (-1.3f64 * t).exp() } else { 0.0 };
        out.push(Point { label: format!("chi(v={v}, t={t}, k=l=0)"), kernel: chi(v, t, 1, 0, 0, 1.3, 0.4), quadrature: q });
    }
    out
}
