//! Resource allocation for a multi-relay OFDM downlink with decode-and-forward
//! relay beamforming, maximizing energy efficiency under proportional rate
//! fairness.
//!
//! The solver runs in three steps per channel realization:
//!
//! 1. [`virtual_link`] — per (user, subcarrier) pair, pick the helping relay
//!    set and transmission mode, collapsing each pair into a virtual direct
//!    link with CNR Υ.
//! 2. [`subcarrier`] — assign each subcarrier to one user, greedily, at equal
//!    power, steering toward the proportional-rate target.
//! 3. [`power`] — water-fill power across each user's subcarriers as a
//!    function of the common fairness ratio δ, then pick the δ that maximizes
//!    energy efficiency within the power budget.
//!
//! [`pipeline`] wires the steps together, adds an exhaustive-search oracle,
//! two baselines, and Monte-Carlo sweeps. [`channel`] generates seeded
//! Rayleigh-fading channel realizations and (de)serializes them.

pub mod channel;
mod error;
mod par;
pub mod pipeline;
pub mod power;
pub mod subcarrier;
pub mod virtual_link;

pub use error::{Error, Result};

/// Routes data-parallel work onto a global thread pool of `jobs` threads.
///
/// Returns `false` when the `parallel` feature is disabled or a pool already
/// exists (the first successful call wins). `jobs = 0` keeps the default.
pub fn configure_thread_pool(jobs: usize) -> bool {
    if jobs == 0 {
        return false;
    }
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .is_ok()
    }
    #[cfg(not(feature = "parallel"))]
    {
        false
    }
}

/// True when the crate was built with the `parallel` feature.
pub fn parallelism_enabled() -> bool {
    cfg!(feature = "parallel")
}
