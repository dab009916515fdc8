use super::*;
use crate::expdp::{f_hom, g_hom};
use crate::fit_phase_type;
use crate::probkernels::binom_row;

fn we(k: u32, p: f64, mu: f64) -> PhaseTypeFit {
    PhaseTypeFit { law: PhaseLaw::WeightedErlang { phases: k, weight: p, rate: mu }, source_mean: (k as f64 + 1.0 - p) / mu, source_scv: 0.0 }
}

#[test]
fn degenerate_fit_matches_exponential_kernels() {
    let fit = we(1, 1.0, 1.7);
    for k in 1..6 {
        for &(u, t) in &[(0.0, 0.4), (1.3, 2.2), (5.0, 0.9)] {
            assert!((idle_mass(&fit, k, u, t).unwrap() - f_hom(k, t, 1.7)).abs() < 1e-12);
            assert!((wait_mass(&fit, k, u, t).unwrap() - g_hom(k, t, 1.7)).abs() < 1e-12);
        }
    }
}

#[test]
fn wait_tail_example() {
    let fit = we(2, 0.5, 2.5);
    assert!((wait_tail(&fit, 3, 0.0).unwrap() - 2.0).abs() < 1e-12);
    assert_eq!(wait_tail(&fit, 1, 3.0).unwrap(), 0.0);
}

/// The explicit per-phase waiting formula, written out term by term.
fn g_explicit(k: usize, z: usize, t: f64, kph: usize, p: f64, mu: f64) -> f64 {
    let f = |j: i64| if j <= 0 { t } else { f_hom(j as usize, t, mu) };
    let kk = kph as i64;
    let mut s = 0.0;
    if z < kph {
        let z1 = z as i64 + 1;
        for l in 0..k {
            let c = (k - l - 1) as f64;
            let a: f64 = binom_row(l, 1.0 - p).iter().enumerate().map(|(m, w)| w * f(l as i64 * kk - z1 + 1 + m as i64)).sum();
            let b: f64 = binom_row(l + 1, 1.0 - p).iter().enumerate().map(|(m, w)| w * f((l as i64 + 1) * kk - z1 + 1 + m as i64)).sum();
            s += c * (a - b);
        }
    } else {
        for l in 1..k {
            let c = (k - l - 1) as f64;
            let a: f64 = binom_row(l - 1, 1.0 - p).iter().enumerate().map(|(m, w)| w * f((l as i64 - 1) * kk + 1 + m as i64)).sum();
            let b: f64 = binom_row(l, 1.0 - p).iter().enumerate().map(|(m, w)| w * f(l as i64 * kk + 1 + m as i64)).sum();
            s += c * (a - b);
        }
        s += (k - 1) as f64 * (1.0 - (-mu * t).exp()) / mu;
    }
    s
}

#[test]
fn waiting_identity_matches_explicit_formula() {
    let (kph, p, mu) = (3usize, 0.35, 3.4);
    let model = Model::We { kph, p, mu };
    for k in 1..7 {
        for &t in &[0.3, 1.1, 4.0] {
            let ctx = model.ctx(k, t);
            let got = per_phase_wait(&model, k, t, &ctx);
            for z in 0..=kph {
                let want = g_explicit(k, z, t, kph, p, mu);
                assert!((got[z] - want).abs() < 1e-11, "k={k} z={z} t={t}: {} vs {want}", got[z]);
            }
        }
    }
}

#[test]
fn zero_window_bundle() {
    let fit = fit_phase_type(1.0, 0.5).unwrap();
    let b = transition_bundle(&fit, 3, 10, 0, &Grid::fine(1.0)).unwrap();
    assert_eq!(b.up, 1.0);
    assert_eq!(b.down, 0.0);
    assert!(b.q.iter().flatten().all(|&x| x == 0.0));
}

#[test]
fn bundles_sum_to_one() {
    let grid = Grid::fine(1.0);
    for scv in [0.3, 0.5, 0.8, 1.0, 1.5, 2.0] {
        let fit = fit_phase_type(1.0, scv).unwrap();
        for k in [1, 2, 4, 7] {
            for (m, t) in [(0, 35), (40, 120), (250, 300)] {
                let b = transition_bundle(&fit, k, m, t, &grid).unwrap();
                assert!((b.total() - 1.0).abs() < 1e-8, "scv={scv} k={k} m={m} t={t}: {}", b.total());
            }
        }
    }
}

#[test]
fn emptying_cdf_exponential_single() {
    let fit = fit_phase_type(0.5, 1.0).unwrap();
    for x in [0.1, 0.7, 2.0] {
        assert!((emptying_cdf(&fit, 1, 3.0, x) - (1.0 - (-2.0 * x).exp())).abs() < 1e-13);
    }
}

#[test]
fn small_solve_runs_and_shifts() {
    let fit = fit_phase_type(1.0, 0.5).unwrap();
    let grid = Grid::fine(1.0).coarsened(5);
    let w = CostWeights::new(0.5).unwrap();
    let big = solve_phase_dp(&fit, 6, w, &grid).unwrap();
    let small = solve_phase_dp(&fit, 4, w, &grid).unwrap();
    let cut = big.truncated(4).unwrap();
    assert_eq!(cut.xi, small.xi);
    assert_eq!(cut.tau, small.tau);
    assert!(big.cost > 0.0);
}
