//! Acceptance suite. Prints one PASS/FAIL line per criterion on stderr
//! (visible without `--nocapture`) and fails unless every failing
//! criterion is a documented deviation.
//!
//! Runs in a few minutes on one core; the full phase-type table dominates.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use common::{chi_points, exp_accounting_gap, oracle_gaps, phase_accounting_gap, psi_points, rho_points, sigma_points, sim_points, transition_mass, w, worst_mix_mass};
use dynsched_core::expdp::solve_homogeneous;
use dynsched_core::fit_phase_type;
use dynsched_core::optim::OptimizerConfig;
use dynsched_core::phasedp::{solve_phase_dp, Grid};
use dynsched_core::sim::experiments::{experiment, ExperimentOptions, TableId, TableReport};

/// Criteria known to fail, each explained in the project notes:
/// 7: the sequential rule costs less than the published value at SCV 1,
/// so its ratio to the dynamic optimum misses by more than 0.05.
const DOCUMENTED: &[u32] = &[7];

struct Outcome {
    id: u32,
    pass: bool,
}

fn say(line: &str) {
    let mut e = std::io::stderr().lock();
    let _ = writeln!(e, "{line}");
}

fn verdict(out: &mut Vec<Outcome>, id: u32, title: &str, pass: bool, detail: String) {
    say(&format!("{} [{id:>2}] {title}: {detail}", if pass { "PASS" } else { "FAIL" }));
    out.push(Outcome { id, pass });
}

fn run(id: TableId, opts: &ExperimentOptions) -> (TableReport, Duration) {
    let t = Instant::now();
    let rep = experiment(id, opts).expect("table runs");
    (rep, t.elapsed())
}

/// Checks whose label starts with `prefix`; all must pass and at least one exist.
fn select<'a>(rep: &'a TableReport, prefix: &str) -> Vec<&'a dynsched_core::sim::experiments::Check> {
    rep.checks.iter().filter(|c| c.label.starts_with(prefix)).collect()
}

fn show_failures(rep: &TableReport) {
    for c in rep.failures() {
        say(&format!("       {}", c.line()));
    }
}

#[test]
fn acceptance() {
    let mut out = Vec::new();
    let d = ExperimentOptions::default();
    let only = |scvs: &[f64]| ExperimentOptions { scvs: Some(scvs.to_vec()), ..ExperimentOptions::default() };

    // 1
    let (rep, dt) = run(TableId::Tab1, &d);
    show_failures(&rep);
    let taus = select(&rep, "tau_").len();
    verdict(
        &mut out,
        1,
        "interarrival table, exponential, n=15",
        rep.all_pass() && taus == 105 && dt < Duration::from_secs(10),
        format!("{taus} entries, {} failed, {:.2} s", rep.failures().count(), dt.as_secs_f64()),
    );

    // 2
    let (rep, dt) = run(TableId::Tab2, &d);
    show_failures(&rep);
    verdict(
        &mut out,
        2,
        "dynamic vs precalculated cost, exponential",
        rep.all_pass() && dt < Duration::from_secs(300),
        format!("{} checks, {} failed, {:.1} s", rep.checks.len(), rep.failures().count(), dt.as_secs_f64()),
    );

    // 3
    let (rep, dt) = run(TableId::Tab2a, &d);
    show_failures(&rep);
    verdict(
        &mut out,
        3,
        "stationary schedule",
        rep.all_pass() && rep.checks.len() == 54 && dt < Duration::from_secs(60),
        format!("{} entries, {} failed, {:.2} s", rep.checks.len(), rep.failures().count(), dt.as_secs_f64()),
    );

    // 4
    let (het1, _) = run(TableId::Het1, &d);
    let (het3, _) = run(TableId::Het3, &d);
    let anchor = select(&het1, "K_dyn(n=10, s=1, 0.5)");
    let ranking = select(&het3, "decreasing < random < increasing");
    for c in anchor.iter().chain(&ranking).filter(|c| !c.pass) {
        say(&format!("       {}", c.line()));
    }
    verdict(
        &mut out,
        4,
        "heterogeneous rates: cost anchor and order ranking",
        anchor.len() == 1 && anchor[0].pass && ranking.len() == 9 && ranking.iter().all(|c| c.pass),
        format!("K_dyn {:.4}, ranking holds at {}/{} weights", anchor[0].got.unwrap(), ranking.iter().filter(|c| c.pass).count(), ranking.len()),
    );

    // 5
    let (full, dt_full) = run(TableId::Exp1, &d);
    let smoke_opts = ExperimentOptions { coarsen: 5, ..ExperimentOptions::default() };
    let (smoke, dt_smoke) = run(TableId::Exp1, &smoke_opts);
    show_failures(&full);
    show_failures(&smoke);
    let cells = full.rows.len().max(1) as f64;
    let (per_full, per_smoke) = (dt_full.as_secs_f64() / cells, dt_smoke.as_secs_f64() / smoke.rows.len().max(1) as f64);
    verdict(
        &mut out,
        5,
        "phase-type dynamic vs precalculated cost",
        full.all_pass() && smoke.all_pass() && per_full <= 1800.0 && per_smoke <= 120.0,
        format!(
            "{} cells; {} checks, {} failed at the default step ({per_full:.1} s/cell); coarse smoke {} failed ({per_smoke:.1} s/cell)",
            full.rows.len(),
            full.checks.len(),
            full.failures().count(),
            smoke.failures().count()
        ),
    );

    // 6
    let (rep, _) = run(TableId::T7, &only(&[1.0]));
    let named: Vec<_> = ["gamma_PL(scv=1)", "gamma_LL(scv=1)", "gamma_PP(scv=1)"].iter().flat_map(|l| select(&rep, l)).collect();
    for c in &named {
        say(&format!("       {}", c.line()));
    }
    verdict(&mut out, 6, "robustness under lognormal and Weibull service, SCV 1", named.len() == 3 && named.iter().all(|c| c.pass), "within 2 standard errors".into());

    // 7
    let (rep, _) = run(TableId::Gamma, &only(&[0.25, 0.5, 0.75, 1.0]));
    let named: Vec<_> = ["gamma_minus(scv=1)", "ratio(scv=1)", "ratio >= 0.96"].iter().flat_map(|l| select(&rep, l)).collect();
    for c in &named {
        say(&format!("       {}", c.line()));
    }
    verdict(&mut out, 7, "sequential rule vs dynamic schedule", named.len() == 5 && named.iter().all(|c| c.pass), format!("{} of {} checks pass", named.iter().filter(|c| c.pass).count(), named.len()));

    // 8
    let worst = worst_mix_mass(8);
    verdict(&mut out, 8, "mixture coefficients carry unit mass on every window", worst <= 1e-9, format!("worst deviation {worst:.2e}"));

    // 9
    let rows = transition_mass(21);
    let ok = rows.iter().all(|(_, n, err, tol)| *n >= 1000 && err <= tol);
    let detail = rows.iter().map(|(what, n, err, tol)| format!("{what} {err:.1e}/{tol:.0e} over {n}")).collect::<Vec<_>>().join("; ");
    verdict(&mut out, 9, "transition objects sum to one", ok, detail);

    // 10
    let (ec, et) = exp_accounting_gap(10);
    let (pc, pt) = phase_accounting_gap(11);
    verdict(
        &mut out,
        10,
        "slot and tail waiting accounting agree",
        ec <= 1e-5 && et <= 1e-5 && pc <= 1.0 && pt <= 1,
        format!("exponential cost {ec:.1e}, tau {et:.1e}; phase cost {pc:.2} x allowance, tau {pt} step(s)"),
    );

    // 11
    let grid = Grid::fine(1.0);
    let mut worst = 0.0f64;
    for omega in [0.2, 0.5, 0.8] {
        let p = solve_phase_dp(&fit_phase_type(1.0, 1.0).unwrap(), 15, w(omega), &grid).unwrap();
        let e = solve_homogeneous(15, 1.0, w(omega), OptimizerConfig::default()).unwrap();
        for i in 1..15 {
            for k in 1..=i {
                worst = worst.max((p.query_tau(i, k, 0.0).unwrap().tau - e.tau(i, k)).abs());
            }
        }
    }
    verdict(&mut out, 11, "unit-SCV phase recursion reproduces the exponential one", worst <= 2.0 * grid.delta, format!("worst gap {worst:.4} (2 steps = {:.2})", 2.0 * grid.delta));

    // 12
    let sets = [("psi", psi_points()), ("rho", rho_points()), ("sigma", sigma_points()), ("chi", chi_points())];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, pts) in &sets {
        let bad = pts.iter().filter(|p| !p.close()).count();
        for p in pts.iter().filter(|p| !p.close()) {
            say(&format!("       {}: kernel {} vs quadrature {}", p.label, p.kernel, p.quadrature));
        }
        ok &= bad == 0 && pts.len() >= 20;
        parts.push(format!("{name} {}/{}", pts.len() - bad, pts.len()));
    }
    verdict(&mut out, 12, "window kernels against quadrature", ok, parts.join(", "));

    // 13
    let gaps = oracle_gaps();
    let (label, worst) = gaps.iter().fold((String::new(), 0.0f64), |a, (l, g)| if *g > a.1 { (l.clone(), *g) } else { a });
    verdict(&mut out, 13, "phase recursion vs convolution oracle, n <= 5", worst <= 0.03, format!("{} instances, worst {:.2}% at {label}", gaps.len(), 100.0 * worst));

    // 14
    let (rep, _) = run(TableId::Exp2, &only(&[0.5, 1.0, 1.5]));
    let named = select(&rep, "tau_14(1,u)");
    for c in named.iter().filter(|c| !c.pass) {
        say(&format!("       {}", c.line()));
    }
    verdict(&mut out, 14, "interarrival monotone in elapsed service", named.len() == 3 && named.iter().all(|c| c.pass), named.iter().map(|c| c.label.clone()).collect::<Vec<_>>().join("; "));

    // 15
    let pts = sim_points();
    let ok = pts.iter().all(|p| p.within(3.0) && p.makespan_gap <= 1e-9);
    let detail = pts.iter().map(|p| format!("{} {:.4} +- {:.4} vs {:.4}", p.label, p.mean, p.se, p.dp)).collect::<Vec<_>>().join("; ");
    verdict(&mut out, 15, "simulation matches the DP value; makespan identity per day", ok, detail);

    let failed: Vec<u32> = out.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    say(&format!("acceptance: {} of {} criteria pass; failing {failed:?}, documented {DOCUMENTED:?}", out.len() - failed.len(), out.len()));
    let unexpected: Vec<u32> = failed.iter().copied().filter(|id| !DOCUMENTED.contains(id)).collect();
    assert!(unexpected.is_empty(), "undocumented failures: {unexpected:?}");
}
