//! Microstate generators for the test systems.
//!
//! * [`ising`]: 2-D Ising model on an L×L torus, heat-bath Glauber dynamics.
//! * [`tasep`]: open-boundary TASEP with random-sequential updates.
//! * [`oracle`]: two blocks of independent spins, an exponential family with closed-form
//!   log-partition function used as an exact reference.

pub mod ising;
pub mod oracle;
pub mod tasep;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ising::{ising_sample, ising_stats, GlauberChain, IsingInit, IsingState};
pub use oracle::{oracle_sample, oracle_stats, OracleModel};
pub use tasep::{tasep_sample, tasep_stats, TasepState};

/// Parameters for a single sampler run.
///
/// `point` is `(T, H)` for Ising, `(alpha, beta)` for TASEP and `(h1, h2)` for the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams {
    pub point: [f64; 2],
    pub sweeps: usize,
    pub seed: u64,
}

impl SamplerParams {
    pub fn new(point: [f64; 2], sweeps: usize, seed: u64) -> Self {
        Self {
            point,
            sweeps,
            seed,
        }
    }
}

/// Which system to sample and how to reduce a microstate to a feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "lowercase")]
pub enum SamplerSpec {
    /// Features `(e, m)` of [`ising_stats`].
    Ising {
        side: usize,
        sweeps: usize,
        #[serde(default)]
        init: IsingInit,
    },
    /// Features of [`tasep_stats`]; `sweeps` counts blocks of `sites` move attempts
    /// and defaults to `8 * sites` (8·M² attempts).
    Tasep {
        sites: usize,
        #[serde(default)]
        sweeps: Option<usize>,
        bins: usize,
    },
    /// Features are the two block means of the spins.
    Oracle { n_spins: usize },
}

impl SamplerSpec {
    pub fn feature_dim(&self) -> usize {
        match self {
            SamplerSpec::Ising { .. } => 2,
            SamplerSpec::Tasep { bins, .. } => bins + 2,
            SamplerSpec::Oracle { .. } => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SamplerSpec::Ising { side, sweeps, .. } => {
                if side < 2 {
                    return Err(Error::invalid(format!("ising side {side} < 2")));
                }
                if sweeps == 0 {
                    return Err(Error::invalid("ising sweeps must be >= 1"));
                }
            }
            SamplerSpec::Tasep { sites, sweeps, bins } => {
                if sites < 2 {
                    return Err(Error::invalid(format!("tasep sites {sites} < 2")));
                }
                if bins == 0 || sites % bins != 0 {
                    return Err(Error::invalid(format!("bins {bins} must divide sites {sites}")));
                }
                if let Some(s) = sweeps {
                    tasep::check_attempts(sites, s)?;
                }
            }
            SamplerSpec::Oracle { n_spins } => {
                if n_spins == 0 || n_spins % 2 != 0 {
                    return Err(Error::invalid(format!("oracle n_spins {n_spins} must be even and positive")));
                }
            }
        }
        Ok(())
    }

    /// Draws one microstate at `point` and returns its feature vector.
    pub fn features(&self, point: [f64; 2], seed: u64) -> Result<Vec<f64>> {
        match *self {
            SamplerSpec::Ising { side, sweeps, init } => {
                let state = ising::ising_sample_with(&SamplerParams::new(point, sweeps, seed), side, init)?;
                let (e, m) = ising_stats(&state);
                Ok(vec![e, m])
            }
            SamplerSpec::Tasep { sites, sweeps, bins } => {
                let sweeps = sweeps.unwrap_or(8 * sites);
                let state = tasep_sample(&SamplerParams::new(point, sweeps, seed), sites)?;
                tasep_stats(&state, bins)
            }
            SamplerSpec::Oracle { n_spins } => {
                let x = oracle_sample(&SamplerParams::new(point, 1, seed), n_spins)?;
                let half = (n_spins / 2) as f64;
                let [f1, f2] = oracle_stats(&x);
                Ok(vec![f1 / half, f2 / half])
            }
        }
    }
}
