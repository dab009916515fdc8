//! Dynamic appointment scheduling for a single server with punctual clients.
//!
//! The crate computes, for every decision epoch (client `i` just arrived,
//! `k` clients present, elapsed service `u`), the interarrival time to the
//! next client that minimizes a weighted sum of expected server idle time
//! and expected client waiting time.
//!
//! Layout:
//! - [`probkernels`]: Poisson/Erlang terms and the two-moment phase-type fit.
//! - [`expdp`]: closed-form DP for exponential service (equal or per-client rates).
//! - [`phasedp`]: discretized DP for weighted-Erlang and hyperexponential service.
//! - [`policies`]: static schedules, the sequential quantile rule, a common policy handle.
//! - [`oracle`]: discrete-time convolution DP for arbitrary service laws.
//! - [`sim`]: Monte Carlo policy evaluation.
//! - [`store`]: archive format and the precomputed parameter lattice.

pub mod error;
pub mod expdp;
pub mod optim;
pub mod oracle;
pub mod phasedp;
pub mod policies;
pub mod probkernels;
pub mod reference;
pub mod sim;
pub mod store;

pub use error::{Error, Result};
pub use probkernels::{fit_phase_type, PhaseLaw, PhasePosterior, PhaseTypeFit};

/// Weight on idle time; waiting time gets `1 - omega`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CostWeights {
    omega: f64,
}

impl CostWeights {
    pub fn new(omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega < 1.0) {
            return Err(Error::Domain(format!("omega must lie in (0,1), got {omega}")));
        }
        Ok(Self { omega })
    }

    #[inline]
    pub fn omega(&self) -> f64 {
        self.omega
    }

    #[inline]
    pub fn idle(&self) -> f64 {
        self.omega
    }

    #[inline]
    pub fn wait(&self) -> f64 {
        1.0 - self.omega
    }
}

/// How waiting cost is booked by the recursions.
///
/// `Slot` charges the waiting accrued inside each interarrival window.
/// `Tail` charges, at each arrival, the total wait of the arriving client.
/// Both give the same optimal schedule; the stage values differ by a
/// state-dependent constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum WaitAccounting {
    #[default]
    Slot,
    Tail,
}
