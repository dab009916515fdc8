//! One-dimensional searches used by every solver.
//!
//! The DP objectives are smooth and unimodal in the interarrival time on
//! the range that matters, so a bracket followed by golden-section search
//! is enough. The grid solvers instead walk integer steps.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const MAX_EXPANSIONS: usize = 200;

/// Tolerances for the continuous minimizers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    /// Absolute tolerance on the argument.
    pub xtol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { xtol: 1e-6 }
    }
}

/// Golden-section search on `[a, b]`. Returns `(argmin, min)`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > xtol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Minimize `f` over `[0, inf)` starting near `guess`, with initial step `scale`.
///
/// The bracket grows geometrically away from the guess; the left end is
/// clamped at zero, where a boundary minimum is accepted.
pub fn minimize_halfline<F: FnMut(f64) -> f64>(mut f: F, guess: f64, scale: f64, xtol: f64) -> Result<(f64, f64)> {
    let mut h = scale.max(xtol * 4.0);
    let mut b = guess.max(0.0);
    let mut fb = f(b);
    let mut c = b + h;
    let mut fc = f(c);
    let (a, c) = if fc < fb {
        // walk right
        let mut a = b;
        b = c;
        fb = fc;
        let mut n = 0;
        loop {
            h *= 1.618;
            c = b + h;
            fc = f(c);
            if fc >= fb {
                break (a, c);
            }
            a = b;
            b = c;
            fb = fc;
            n += 1;
            if n > MAX_EXPANSIONS || !c.is_finite() {
                return Err(Error::NoBracket(format!("objective still decreasing at t={c}")));
            }
        }
    } else {
        // walk left, possibly down to zero
        let mut n = 0;
        loop {
            let a = (b - h).max(0.0);
            let fa = f(a);
            if fa >= fb {
                break (a, c);
            }
            if a == 0.0 {
                break (0.0, b);
            }
            c = b;
            b = a;
            fb = fa;
            h *= 1.618;
            n += 1;
            if n > MAX_EXPANSIONS {
                return Err(Error::NoBracket("left walk did not terminate".into()));
            }
        }
    };
    let (x, fx) = golden_section(&mut f, a, c, xtol);
    // a minimum sitting on the clamped boundary is not interior to the golden probes
    if a == 0.0 {
        let f0 = f(0.0);
        if f0 <= fx {
            return Ok((0.0, f0));
        }
    }
    Ok((x, fx))
}

/// Outcome of an integer descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Descent {
    Converged { t: u32, value: f64 },
    /// The walk hit `max` while still improving.
    HitCap { t: u32, value: f64 },
}

/// Nearest-neighbour descent on `t in {0, .., max}` from `seed`.
///
/// Picks the better improving neighbour (ties go to the smaller `t`), then
/// keeps stepping that way while the objective drops, stopping after a
/// step whose decrease is below `eps`.
pub fn integer_descent<F: FnMut(u32) -> f64>(mut f: F, seed: u32, max: u32, eps: f64) -> Descent {
    let mut t = seed.min(max);
    let mut ft = f(t);
    let left = (t > 0).then(|| f(t - 1));
    let right = (t < max).then(|| f(t + 1));
    let (dir, mut next) = match (left, right) {
        (Some(l), Some(r)) if l <= r && l < ft => (-1i64, l),
        (_, Some(r)) if r < ft => (1, r),
        (Some(l), None) if l < ft => (-1, l),
        _ => {
            if t == max && left.is_some_and(|l| l > ft) {
                return Descent::HitCap { t, value: ft };
            }
            return Descent::Converged { t, value: ft };
        }
    };
    loop {
        let gain = ft - next;
        t = (t as i64 + dir) as u32;
        ft = next;
        if dir > 0 && t == max {
            return Descent::HitCap { t, value: ft };
        }
        if gain < eps || (dir < 0 && t == 0) {
            return Descent::Converged { t, value: ft };
        }
        next = f((t as i64 + dir) as u32);
        if next >= ft {
            return Descent::Converged { t, value: ft };
        }
    }
}

/// Bisection for the smallest `x` in `[lo, hi]` with `pred(x)` true, assuming monotone `pred`.
pub fn bisect<F: FnMut(f64) -> bool>(mut pred: F, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_quadratic() {
        let (x, _) = golden_section(|x| (x - 1.3) * (x - 1.3), 0.0, 5.0, 1e-9);
        assert!((x - 1.3).abs() < 1e-8);
    }

    #[test]
    fn halfline_interior_and_boundary() {
        let (x, _) = minimize_halfline(|x| (x - 7.0).powi(2), 0.5, 0.1, 1e-8).unwrap();
        assert!((x - 7.0).abs() < 1e-7);
        let (x, _) = minimize_halfline(|x| (x - 0.2).powi(2), 5.0, 1.0, 1e-8).unwrap();
        assert!((x - 0.2).abs() < 1e-7);
        let (x, fx) = minimize_halfline(|x| x + 1.0, 3.0, 0.5, 1e-8).unwrap();
        assert_eq!(x, 0.0);
        assert_eq!(fx, 1.0);
        assert!(minimize_halfline(|x| -x, 1.0, 1.0, 1e-8).is_err());
    }

    #[test]
    fn descent_finds_integer_minimum() {
        let f = |t: u32| (t as f64 - 37.4).powi(2);
        for seed in [0, 10, 37, 80] {
            match integer_descent(f, seed, 100, 1e-12) {
                Descent::Converged { t, .. } => assert_eq!(t, 37),
                d => panic!("{d:?}"),
            }
        }
        assert!(matches!(integer_descent(|t| -(t as f64), 3, 20, 1e-9), Descent::HitCap { t: 20, .. }));
    }

    #[test]
    fn descent_plateau_prefers_smaller() {
        let f = |t: u32| if (5..=9).contains(&t) { 0.0 } else { 1.0 };
        match integer_descent(f, 7, 20, 1e-9) {
            Descent::Converged { t, .. } => assert!(t <= 7),
            d => panic!("{d:?}"),
        }
    }

    #[test]
    fn bisect_root() {
        let x = bisect(|x| x * x >= 2.0, 0.0, 2.0, 1e-12);
        assert!((x - 2f64.sqrt()).abs() < 1e-11);
    }
}
