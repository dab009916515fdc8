//! Drivers that regenerate the published tables and figure data, each with
//! its own pass/fail checks against [`crate::reference`].

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{simulate, SimConfig, SimSummary, TrueLaw};
use crate::error::{Error, Result};
use crate::expdp::{self, HetKernel, HomKernel};
use crate::optim::OptimizerConfig;
use crate::oracle::{convolution_dp, default_grid, discretize, ServiceLaw};
use crate::phasedp::{solve_phase_dp, Grid, PhaseDpSolution};
use crate::policies::{sequential_policy_cost, static_schedule, static_schedule_exp, PolicyHandle};
use crate::reference::{self as r, OMEGAS};
use crate::{fit_phase_type, CostWeights};

/// Table identifiers accepted by [`experiment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TableId {
    /// Optimal interarrival times, exponential, 15 clients.
    Tab1,
    /// Dynamic vs precalculated cost, exponential.
    Tab2,
    /// Stationary schedule.
    Tab2a,
    /// Heterogeneous rates on [0.5, 1.5].
    Het1,
    /// Heterogeneous rates, varying spread.
    Het2,
    /// Heterogeneous rates, service order.
    Het3,
    /// Phase-type: dynamic vs precalculated cost.
    Exp1,
    /// Interarrival time and cost against elapsed service.
    Exp2,
    /// Cost of assuming exponential service.
    Exp3,
    /// Phase-type policies under lognormal and Weibull service.
    T7,
    /// Sequential rule against the dynamic schedule.
    Gamma,
}

impl TableId {
    pub const ALL: [TableId; 11] = [
        TableId::Tab1,
        TableId::Tab2,
        TableId::Tab2a,
        TableId::Het1,
        TableId::Het2,
        TableId::Het3,
        TableId::Exp1,
        TableId::Exp2,
        TableId::Exp3,
        TableId::T7,
        TableId::Gamma,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TableId::Tab1 => "tab1",
            TableId::Tab2 => "tab2",
            TableId::Tab2a => "tab2a",
            TableId::Het1 => "het1",
            TableId::Het2 => "het2",
            TableId::Het3 => "het3",
            TableId::Exp1 => "exp1",
            TableId::Exp2 => "exp2",
            TableId::Exp3 => "exp3",
            TableId::T7 => "t7",
            TableId::Gamma => "gamma",
        }
    }
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TableId::ALL
            .iter()
            .find(|t| t.name() == s)
            .copied()
            .ok_or_else(|| Error::Domain(format!("unknown table {s:?}")))
    }
}

/// A single pass/fail line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub label: String,
    /// Computed value; `None` for pure conditions.
    pub got: Option<f64>,
    pub expected: Option<f64>,
    pub tol: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn value(label: impl Into<String>, got: f64, expected: f64, tol: f64) -> Self {
        let pass = (got - expected).abs() <= tol + 1e-12;
        Self { label: label.into(), got: Some(got), expected: Some(expected), tol: Some(tol), pass }
    }

    pub fn holds(label: impl Into<String>, pass: bool) -> Self {
        Self { label: label.into(), got: None, expected: None, tol: None, pass }
    }

    pub fn line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        match (self.got, self.expected, self.tol) {
            (Some(g), Some(e), Some(t)) => format!("{verdict} {}: got {g:.4}, expected {e} +- {t:.4}", self.label),
            _ => format!("{verdict} {}", self.label),
        }
    }
}

/// Rows for CSV output plus the checks.
#[derive(Debug, Clone, Serialize)]
pub struct TableReport {
    pub id: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub checks: Vec<Check>,
}

impl TableReport {
    fn new(id: TableId, header: &[&str]) -> Self {
        Self { id: id.name(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new(), checks: Vec::new() }
    }

    fn row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# table={}\n{}\n", self.id, self.header.join(","));
        for row in &self.rows {
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }
}

/// Knobs for the heavier tables.
#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    /// Simulation runs per cell.
    pub runs: usize,
    pub seed: u64,
    /// Phase DP step is `0.01 * coarsen` mean service times.
    pub coarsen: u32,
    /// Restrict phase-type tables to these SCVs.
    pub scvs: Option<Vec<f64>>,
    /// Restrict to these weights.
    pub omegas: Option<Vec<f64>>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self { runs: 10_000, seed: 1, coarsen: 1, scvs: None, omegas: None }
    }
}

impl ExperimentOptions {
    fn keep_scv(&self, scv: f64) -> bool {
        self.scvs.as_ref().map_or(true, |v| v.iter().any(|s| (s - scv).abs() < 1e-9))
    }

    fn keep_omega(&self, w: f64) -> bool {
        self.omegas.as_ref().map_or(true, |v| v.iter().any(|s| (s - w).abs() < 1e-9))
    }

    fn grid(&self) -> Grid {
        Grid::fine(1.0).coarsened(self.coarsen.max(1))
    }

    /// Table tolerance widened for coarse smoke runs.
    fn phase_tol(&self, fine: f64) -> f64 {
        if self.coarsen > 1 {
            fine.max(0.2)
        } else {
            fine
        }
    }
}

fn f4(x: f64) -> String {
    format!("{x:.4}")
}

fn cw(w: f64) -> Result<CostWeights> {
    CostWeights::new(w)
}

/// Rates equally spaced on `[lo, hi]`, increasing.
pub fn spaced_rates(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect()
}

/// Regenerate one table.
pub fn experiment(id: TableId, opts: &ExperimentOptions) -> Result<TableReport> {
    match id {
        TableId::Tab1 => tab1(),
        TableId::Tab2 => tab2(opts),
        TableId::Tab2a => tab2a(),
        TableId::Het1 => het_costs(id, opts),
        TableId::Het2 => het_costs(id, opts),
        TableId::Het3 => het3(opts),
        TableId::Exp1 => exp1(opts),
        TableId::Exp2 => exp2(opts),
        TableId::Exp3 => exp3(opts),
        TableId::T7 => t7(opts),
        TableId::Gamma => gamma(opts),
    }
}

fn tab1() -> Result<TableReport> {
    let mut rep = TableReport::new(TableId::Tab1, &["i", "k", "tau", "published"]);
    let s = expdp::solve_homogeneous(15, 1.0, cw(0.5)?, OptimizerConfig::default())?;
    for (i, row) in r::tau_table_hom15().iter().enumerate() {
        for (k, e) in row.iter().enumerate() {
            let t = s.tau(i + 1, k + 1);
            rep.row(vec![(i + 1).to_string(), (k + 1).to_string(), f4(t), e.to_string()]);
            rep.checks.push(Check::value(format!("tau_{}({})", i + 1, k + 1), t, *e, 0.01));
        }
    }
    rep.checks.push(Check::value("K_dyn(15, 0.5)", s.cost, 6.05, 0.02));
    Ok(rep)
}

fn tab2(opts: &ExperimentOptions) -> Result<TableReport> {
    let mut rep = TableReport::new(TableId::Tab2, &["n", "omega", "K_dyn", "K_pre", "ratio", "K_dyn_pub", "K_pre_pub"]);
    for (n, kd, kp) in r::HOM_COSTS {
        for (j, &w) in OMEGAS.iter().enumerate() {
            if !opts.keep_omega(w) {
                continue;
            }
            let dyn_ = expdp::solve_homogeneous(n, 1.0, cw(w)?, OptimizerConfig::default())?.cost;
            let pre = static_schedule_exp(&HomKernel { n, mu: 1.0 }, cw(w)?).cost;
            rep.row(vec![n.to_string(), w.to_string(), f4(dyn_), f4(pre), f4(dyn_ / pre), kd[j].to_string(), kp[j].to_string()]);
            rep.checks.push(Check::value(format!("K_dyn({n}, {w})"), dyn_, kd[j], 0.02));
            rep.checks.push(Check::value(format!("K_pre({n}, {w})"), pre, kp[j], 0.05));
            if n == 30 {
                rep.checks.push(Check::value(format!("r(30, {w})"), dyn_ / pre, r::HOM_RATIO_30[j], 0.02));
            }
        }
    }
    Ok(rep)
}

fn tab2a() -> Result<TableReport> {
    let mut rep = TableReport::new(TableId::Tab2a, &["omega", "k", "tau", "published"]);
    for (j, &w) in OMEGAS.iter().enumerate() {
        let ww = cw(w)?;
        let st = expdp::stationary_schedule(1.0, ww, expdp::default_truncation(ww))?;
        for k in 1..=6 {
            let e = r::STATIONARY_TAU[k - 1][j];
            rep.row(vec![w.to_string(), k.to_string(), f4(st.tau(k)), e.to_string()]);
            rep.checks.push(Check::value(format!("tau({k}) at omega {w}"), st.tau(k), e, 0.02));
        }
    }
    Ok(rep)
}

fn het_costs(id: TableId, opts: &ExperimentOptions) -> Result<TableReport> {
    let mut rep = TableReport::new(id, &["n", "spread", "omega", "K_dyn", "K_pre", "K_dyn_pub", "K_pre_pub"]);
    let cases: Vec<(usize, f64, [f64; 9], [f64; 9])> = match id {
        TableId::Het1 => r::HET_COSTS.iter().map(|(n, d, p)| (*n, 1.0, *d, *p)).collect(),
        _ => r::HET_SPREAD.iter().map(|(s, d, p)| (10, *s, *d, *p)).collect(),
    };
    for (n, spread, kd, kp) in cases {
        let rates = spaced_rates(n, 1.0 - spread / 2.0, 1.0 + spread / 2.0);
        for (j, &w) in OMEGAS.iter().enumerate() {
            if !opts.keep_omega(w) {
                continue;
            }
            let dyn_ = expdp::solve_heterogeneous(&rates, cw(w)?, OptimizerConfig::default())?.cost;
            let pre = static_schedule_exp(&HetKernel::new(&rates)?, cw(w)?).cost;
            rep.row(vec![n.to_string(), spread.to_string(), w.to_string(), f4(dyn_), f4(pre), kd[j].to_string(), kp[j].to_string()]);
            rep.checks.push(Check::value(format!("K_dyn(n={n}, s={spread}, {w})"), dyn_, kd[j], 0.03));
            rep.checks.push(Check::value(format!("K_pre(n={n}, s={spread}, {w})"), pre, kp[j], 0.05));
        }
    }
    Ok(rep)
}

/// Ten clients with rates on [0.5, 1.5] in three service orders.
/// The random order is a seeded shuffle; the published one is unknown.
pub fn order_costs(w: CostWeights, seed: u64) -> Result<[f64; 3]> {
    let inc = spaced_rates(10, 0.5, 1.5);
    let dec: Vec<f64> = inc.iter().rev().copied().collect();
    let mut rnd = inc.clone();
    rnd.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let c = |rates: &[f64]| expdp::solve_heterogeneous(rates, w, OptimizerConfig::default()).map(|s| s.cost);
    Ok([c(&inc)?, c(&rnd)?, c(&dec)?])
}

fn het3(opts: &ExperimentOptions) -> Result<TableReport> {
    let mut rep = TableReport::new(TableId::Het3, &["omega", "increasing", "random", "decreasing", "inc_pub", "rnd_pub", "dec_pub"]);
    for (j, &w) in OMEGAS.iter().enumerate() {
        if !opts.keep_omega(w) {
            continue;
        }
        let [inc, rnd, dec] = order_costs(cw(w)?, opts.seed)?;
        rep.row(vec![
            w.to_string(),
            f4(inc),
            f4(rnd),
            f4(dec),
            r::HET_ORDER_INCREASING[j].to_string(),
            r::HET_ORDER_RANDOM[j].to_string(),
            r::HET_ORDER_DECREASING[j].to_string(),
        ]);
        rep.checks.push(Check::value(format!("increasing at {w}"), inc, r::HET_ORDER_INCREASING[j], 0.03));
        rep.checks.push(Check::value(format!("decreasing at {w}"), dec, r::HET_ORDER_DECREASING[j], 0.03));
        rep.checks.push(Check::holds(format!("decreasing < random < increasing at {w}"), dec < rnd && rnd < inc));
    }
    Ok(rep)
}

fn exp1(opts: &ExperimentOptions) -> Result<TableReport> {
    let mut rep = TableReport::new(TableId::Exp1, &["scv", "omega", "K_dyn", "K_pre", "ratio", "K_dyn_pub", "K_pre_pub"]);
    let tol = opts.phase_tol(0.1);
    let grid = opts.grid();
    for (scv, kd, kp) in r::PHASE_COSTS {
        if !opts.keep_scv(scv) {
            continue;
        }
        let fit = fit_phase_type(1.0, scv)?;
        for (j, &w) in OMEGAS.iter().enumerate() {
            if !opts.keep_omega(w) {
                continue;
            }
            let dyn_ = solve_phase_dp(&fit, 15, cw(w)?, &grid)?.cost;
            let pre = static_schedule(&fit, 15, cw(w)?)?.cost;
            let ratio = dyn_ / pre;
            rep.row(vec![scv.to_string(), w.to_string(), f4(dyn_), f4(pre), f4(ratio), kd[j].to_string(), kp[j].to_string()]);
            rep.checks.push(Check::value(format!("K_dyn(scv={scv}, {w})"), dyn_, kd[j], tol));
            rep.checks.push(Check::value(format!("K_pre(scv={scv}, {w})"), pre, kp[j], tol));
            if (scv, w) == (1.75, 0.9) || (scv, w) == (1.25, 0.5) {
                let e = ((kd[j] / kp[j]) * 100.0).round() / 100.0;
                rep.checks.push(Check::value(format!("r(scv={scv}, {w})"), ratio, e, 0.02));
            }
        }
    }
    Ok(rep)
}

/// Curves of `tau_14(1, u)` and `C_14(1, u)` over the stored ages.
pub fn age_curves(sol: &PhaseDpSolution) -> Vec<(f64, f64, f64)> {
    sol.grid
        .m_values
        .iter()
        .enumerate()
        .map(|(g, &m)| (m as f64 * sol.grid.delta, sol.tau[13][0][g] as f64 * sol.grid.delta, sol.xi[13][0][g]))
        .collect()
}

/// `+1` nondecreasing, `-1` nonincreasing, `0` constant.
pub fn monotone(xs: &[f64], dir: i32, tol: f64) -> bool {
    xs.windows(2).all(|p| match dir {
        1 => p[1] >= p[0] - tol,
        -1 => p[1] <= p[0] + tol,
        _ => (p[1] - p[0]).abs() <= tol,
    })
}

fn exp2(opts: &ExperimentOptions) -> Result<TableReport> {
    let mut rep = TableReport::new(TableId::Exp2, &["scv", "u", "tau_14(1,u)", "C_14(1,u)"]);
    let grid = opts.grid();
    for scv in [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75] {
        if !opts.keep_scv(scv) {
            continue;
        }
        let fit = fit_phase_type(1.0, scv)?;
        let sol = solve_phase_dp(&fit, 15, cw(0.5)?, &grid)?;
        let curve: Vec<_> = age_curves(&sol).into_iter().filter(|c| c.0 <= 2.5 + 1e-9).collect();
        for (u, t, c) in &curve {
            rep.row(vec![scv.to_string(), f4(*u), f4(*t), f4(*c)]);
        }
        let dir = if scv < 1.0 {
            -1
        } else if scv > 1.0 {
            1
        } else {
            0
        };
        let word = ["nonincreasing", "constant", "nondecreasing"][(dir + 1) as usize];
        let taus: Vec<f64> = curve.iter().map(|c| c.1).collect();
        let costs: Vec<f64> = curve.iter().map(|c| c.2).collect();
        rep.checks.push(Check::holds(format!("tau_14(1,u) {word} at scv={scv}"), monotone(&taus, dir, 1e-9)));
        rep.checks.push(Check::holds(format!("C_14(1,u) {word} at scv={scv}"), monotone(&costs, dir, 1e-6)));
    }
    Ok(rep)
}

fn sim_cfg(opts: &ExperimentOptions, n: usize, w: f64, law: TrueLaw) -> SimConfig {
    SimConfig { runs: opts.runs, seed: opts.seed, n, omega: w, law }
}

fn exp3(opts: &ExperimentOptions) -> Result<TableReport> {
    let mut rep = TableReport::new(
        TableId::Exp3,
        &["scv", "omega", "dyn_correct", "static_exp_sim", "static_exp_se", "dyn_exp_sim", "dyn_exp_se", "ratio_static", "ratio_dynamic"],
    );
    let grid = opts.grid();
    let omegas = opts.omegas.clone().unwrap_or_else(|| vec![0.1, 0.5, 0.9]);
    for scv in [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75] {
        if !opts.keep_scv(scv) {
            continue;
        }
        let fit = fit_phase_type(1.0, scv)?;
        for &w in &omegas {
            let ww = cw(w)?;
            let best = solve_phase_dp(&fit, 15, ww, &grid)?.cost;
            let st = PolicyHandle::Static(static_schedule_exp(&HomKernel { n: 15, mu: 1.0 }, ww));
            let dx = PolicyHandle::DynamicExp(Arc::new(expdp::solve_homogeneous(15, 1.0, ww, OptimizerConfig::default())?));
            let cfg = sim_cfg(opts, 15, w, TrueLaw::Phase(fit));
            let a = simulate(&st, &cfg)?;
            let b = simulate(&dx, &cfg)?;
            rep.row(vec![
                scv.to_string(),
                w.to_string(),
                f4(best),
                f4(a.mean_cost),
                f4(a.std_err),
                f4(b.mean_cost),
                f4(b.std_err),
                f4(best / a.mean_cost),
                f4(best / b.mean_cost),
            ]);
            let ok = |s: &SimSummary| best <= s.mean_cost + 3.0 * s.std_err;
            rep.checks.push(Check::holds(format!("correct-SCV dynamic beats exponential static at scv={scv}, {w}"), ok(&a)));
            rep.checks.push(Check::holds(format!("correct-SCV dynamic beats exponential dynamic at scv={scv}, {w}"), ok(&b)));
            if scv == 1.0 {
                rep.checks.push(Check::value(format!("exponential dynamic at scv=1, {w}"), b.mean_cost, best, 3.0 * b.std_err));
            }
        }
    }
    Ok(rep)
}

/// Policies built for the phase fit, the lognormal and the Weibull law.
pub struct RobustnessPolicies {
    pub phase: PolicyHandle,
    pub lognormal: PolicyHandle,
    pub weibull: PolicyHandle,
}

pub fn robustness_policies(scv: f64, opts: &ExperimentOptions) -> Result<RobustnessPolicies> {
    let w = cw(0.5)?;
    let fit = fit_phase_type(1.0, scv)?;
    let phase = PolicyHandle::DynamicPhase(Arc::new(solve_phase_dp(&fit, 15, w, &opts.grid())?));
    let step = 0.01 * opts.coarsen.max(1) as f64;
    let cells = (50.0 / step).round() as usize;
    let disc = |law: ServiceLaw| -> Result<PolicyHandle> {
        let pmf = discretize(&law, step, cells)?;
        let grid = default_grid(&pmf);
        Ok(PolicyHandle::DynamicDiscrete(Arc::new(convolution_dp(&pmf, 15, w, &grid)?)))
    };
    Ok(RobustnessPolicies {
        phase,
        lognormal: disc(ServiceLaw::Lognormal { mean: 1.0, scv })?,
        weibull: disc(ServiceLaw::Weibull { mean: 1.0, scv })?,
    })
}

fn t7(opts: &ExperimentOptions) -> Result<TableReport> {
    let names = ["PL", "LL", "PW", "WW", "PP"];
    let mut header = vec!["scv"];
    for nm in &names {
        header.push(nm);
    }
    let ses: Vec<String> = names.iter().map(|n| format!("{n}_se")).collect();
    header.extend(ses.iter().map(|s| s.as_str()));
    let mut rep = TableReport::new(TableId::T7, &header);
    for (scv, published) in r::ROBUSTNESS {
        if !opts.keep_scv(scv) {
            continue;
        }
        let p = robustness_policies(scv, opts)?;
        let ln = TrueLaw::Lognormal { mean: 1.0, scv };
        let wb = TrueLaw::Weibull { mean: 1.0, scv };
        let ph = TrueLaw::Phase(fit_phase_type(1.0, scv)?);
        let runs = [(&p.phase, ln.clone()), (&p.lognormal, ln), (&p.phase, wb.clone()), (&p.weibull, wb), (&p.phase, ph)];
        let mut row = vec![scv.to_string()];
        let mut se_cells = Vec::new();
        for (j, (pol, law)) in runs.into_iter().enumerate() {
            let s = simulate(pol, &sim_cfg(opts, 15, 0.5, law))?;
            row.push(f4(s.mean_cost));
            se_cells.push(f4(s.std_err));
            rep.checks.push(Check::value(format!("gamma_{}(scv={scv})", names[j]), s.mean_cost, published[j], 2.0 * s.std_err));
        }
        row.extend(se_cells);
        rep.row(row);
    }
    Ok(rep)
}

fn gamma(opts: &ExperimentOptions) -> Result<TableReport> {
    let mut rep = TableReport::new(TableId::Gamma, &["scv", "gamma_minus", "gamma", "ratio", "gamma_minus_pub", "gamma_pub", "ratio_pub"]);
    let w = cw(0.9)?;
    let grid = opts.grid();
    for (scv, gm, g, ratio) in r::SEQUENTIAL {
        if !opts.keep_scv(scv) {
            continue;
        }
        let fit = fit_phase_type(1.0, scv)?;
        let seq = sequential_policy_cost(&fit, 10, w, &grid)?;
        let best = solve_phase_dp(&fit, 10, w, &grid)?.cost;
        let got = best / seq;
        rep.row(vec![scv.to_string(), f4(seq), f4(best), f4(got), gm.to_string(), g.to_string(), ratio.to_string()]);
        rep.checks.push(Check::value(format!("gamma_minus(scv={scv})"), seq, gm, 0.05));
        rep.checks.push(Check::value(format!("gamma(scv={scv})"), best, g, 0.05));
        let rt = if scv == 0.25 { 0.02 } else { 0.05 };
        rep.checks.push(Check::value(format!("ratio(scv={scv})"), got, ratio, rt));
        if scv <= 0.75 {
            rep.checks.push(Check::holds(format!("ratio >= 0.96 at scv={scv}"), got >= 0.96));
        }
        rep.checks.push(Check::holds(format!("dynamic <= sequential at scv={scv}"), best <= seq + 1e-9));
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_ids_round_trip() {
        for t in TableId::ALL {
            assert_eq!(t.name().parse::<TableId>().unwrap(), t);
        }
        assert!("tab9".parse::<TableId>().is_err());
    }

    #[test]
    fn spaced_rates_ends() {
        let r = spaced_rates(10, 0.5, 1.5);
        assert_eq!(r.len(), 10);
        assert!((r[0] - 0.5).abs() < 1e-15 && (r[9] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn monotone_directions() {
        assert!(monotone(&[3.0, 2.0, 2.0], -1, 0.0));
        assert!(!monotone(&[3.0, 2.0, 2.5], -1, 0.0));
        assert!(monotone(&[1.0, 1.0], 0, 0.0));
    }
}
