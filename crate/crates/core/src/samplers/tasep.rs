//! Open-boundary TASEP, random-sequential updates.
//!
//! One move attempt picks one of `M + 1` slots uniformly: slot 0 injects at the left end
//! with probability alpha, slot M extracts at the right end with probability beta, and slot
//! k in 1..M tries the hop k-1 → k.

use rand::{Rng, RngCore};

use super::SamplerParams;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TasepState {
    occupancy: Vec<u8>,
}

impl TasepState {
    pub fn from_occupancy(occupancy: Vec<u8>) -> Result<Self> {
        if occupancy.len() < 2 {
            return Err(Error::invalid(format!("tasep needs >= 2 sites, got {}", occupancy.len())));
        }
        if occupancy.iter().any(|&o| o > 1) {
            return Err(Error::invalid("occupancy entries must be 0 or 1"));
        }
        Ok(Self { occupancy })
    }

    pub fn occupancy(&self) -> &[u8] {
        &self.occupancy
    }

    pub fn sites(&self) -> usize {
        self.occupancy.len()
    }

    pub fn particles(&self) -> usize {
        self.occupancy.iter().map(|&o| o as usize).sum()
    }
}

pub(crate) fn check_attempts(sites: usize, sweeps: usize) -> Result<()> {
    let attempts = sweeps as u128 * sites as u128;
    let required = 8 * (sites as u128) * (sites as u128);
    if attempts < required {
        return Err(Error::invalid(format!(
            "{attempts} move attempts is below 8·M² = {required} for M = {sites}"
        )));
    }
    Ok(())
}

fn check_rate(name: &str, r: f64) -> Result<()> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::invalid(format!("{name} = {r} outside (0, 1]")));
    }
    Ok(())
}

#[inline]
fn threshold(p: f64) -> u64 {
    (p * 4_294_967_296.0).round() as u64
}

/// Runs `attempts` move attempts in place.
pub fn tasep_evolve(state: &mut TasepState, alpha: f64, beta: f64, attempts: u64, rng: &mut impl RngCore) -> Result<()> {
    check_rate("alpha", alpha)?;
    check_rate("beta", beta)?;
    let occ = &mut state.occupancy;
    let m = occ.len();
    let slots = (m + 1) as u64;
    let (a_th, b_th) = (threshold(alpha), threshold(beta));
    for _ in 0..attempts {
        let u = rng.next_u64();
        let slot = (((u >> 32) * slots) >> 32) as usize;
        let r = u & 0xffff_ffff;
        if slot == 0 {
            if r < a_th {
                occ[0] = 1;
            }
        } else if slot == m {
            if r < b_th {
                occ[m - 1] = 0;
            }
        } else {
            let (a, b) = (occ[slot - 1], occ[slot]);
            let mv = a & !b & 1;
            occ[slot - 1] = a ^ mv;
            occ[slot] = b | mv;
        }
    }
    Ok(())
}

/// Stationary configuration after `params.sweeps × sites` move attempts from a random start.
/// At least 8·M² attempts are required.
pub fn tasep_sample(params: &SamplerParams, sites: usize) -> Result<TasepState> {
    let [alpha, beta] = params.point;
    check_rate("alpha", alpha)?;
    check_rate("beta", beta)?;
    if sites < 2 {
        return Err(Error::invalid(format!("tasep needs >= 2 sites, got {sites}")));
    }
    check_attempts(sites, params.sweeps)?;
    let mut rng = rng_from_seed(params.seed);
    let occupancy = (0..sites).map(|_| rng.random::<bool>() as u8).collect();
    let mut state = TasepState { occupancy };
    tasep_evolve(&mut state, alpha, beta, (params.sweeps * sites) as u64, &mut rng)?;
    Ok(state)
}

/// Per-bin mean occupancy followed by the occupancy of the first and last site.
pub fn tasep_stats(state: &TasepState, bins: usize) -> Result<Vec<f64>> {
    let m = state.sites();
    if bins == 0 || m % bins != 0 {
        return Err(Error::invalid(format!("bins {bins} does not divide sites {m}")));
    }
    let width = m / bins;
    let mut out: Vec<f64> = state
        .occupancy
        .chunks(width)
        .map(|c| c.iter().map(|&o| o as f64).sum::<f64>() / width as f64)
        .collect();
    out.push(state.occupancy[0] as f64);
    out.push(state.occupancy[m - 1] as f64);
    Ok(out)
}
