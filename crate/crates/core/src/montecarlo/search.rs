//! Empirical ε-outage capacity by bisection over the rate with common random numbers.
//!
//! Every candidate rate is evaluated on the same bank of unit-mean draws, so
//! the empirical outage probability is a deterministic, monotone
//! nondecreasing step function of the rate and the bisection is well defined.

use rayon::prelude::*;

use super::{TrialPlan, CHUNK};
use crate::analytic::{c_eps_baf_k, optimal_relay_position, relay_grid, Placement};
use crate::channel::{
    draws_per_trial, resolve_tau, variances_from_geometry, ChannelDraw, LinkVariances, NetworkGeometry, SystemParams,
    TrialStreams,
};
use crate::error::{convergence, invalid, Result};
use crate::protocol::{Decoder, RelayOrder};

pub const MAX_BISECTION_ITERATIONS: usize = 60;
const MAX_BRACKET_STEPS: usize = 60;
const RELATIVE_WIDTH: f64 = 1e-4;
/// Minimum expected number of outage events `ε·n` for a capacity search.
pub const MIN_TARGET_EVENTS: f64 = 100.0;

/// Unit-mean exponential draws of every trial, shared by all candidate rates.
#[derive(Debug, Clone)]
pub struct CommonDraws {
    k_relays: usize,
    n_trials: u64,
    unit: Vec<f64>,
}

impl CommonDraws {
    pub fn generate(k_relays: usize, plan: TrialPlan) -> Self {
        let per = draws_per_trial(k_relays);
        let streams = TrialStreams::new(plan.master_seed);
        let mut unit = vec![0.0; plan.n_trials as usize * per];
        unit.par_chunks_mut(CHUNK as usize * per).enumerate().for_each(|(c, chunk)| {
            let first = c as u64 * CHUNK;
            for (j, trial) in chunk.chunks_exact_mut(per).enumerate() {
                streams.fill_unit(first + j as u64, trial);
            }
        });
        Self { k_relays, n_trials: plan.n_trials, unit }
    }

    pub fn k_relays(&self) -> usize {
        self.k_relays
    }

    pub fn n_trials(&self) -> u64 {
        self.n_trials
    }
}

/// Number of trials in the bank that end in outage under `decoder`.
pub fn outage_count(draws: &CommonDraws, variances: &LinkVariances, decoder: &Decoder) -> u64 {
    let k = draws.k_relays;
    let per = draws_per_trial(k);
    draws
        .unit
        .par_chunks(CHUNK as usize * per)
        .map(|chunk| {
            let mut draw = ChannelDraw::zeros(k);
            let mut count = 0u64;
            for trial in chunk.chunks_exact(per) {
                draw.fill_scaled(variances, trial);
                count += u64::from(decoder.is_outage(&draw));
            }
            count
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSearchResult {
    /// Largest rate found whose empirical outage is below ε (the lower bracket end).
    pub rate: f64,
    pub achieved_outage: f64,
    pub iterations: usize,
    pub bracketing: (f64, f64),
}

struct RateProbe<'a> {
    draws: &'a CommonDraws,
    variances: &'a LinkVariances,
    params: &'a SystemParams,
}

impl RateProbe<'_> {
    fn events(&self, rate: f64) -> Result<u64> {
        if rate == 0.0 {
            return Ok(0);
        }
        let p = self.params.with_rate(rate);
        let tau = resolve_tau(&p)?.value;
        Ok(outage_count(self.draws, self.variances, &Decoder::new(&p, tau, RelayOrder::FixedIndex)))
    }
}

fn non_monotone(r_a: f64, e_a: u64, r_b: f64, e_b: u64) -> crate::Error {
    convergence(format!("empirical outage not monotone in rate: {e_a} events at R={r_a:e} but {e_b} at R={r_b:e}"))
}

/// Bisection for the ε-outage capacity on a fixed bank of draws.
pub fn eps_capacity_with_draws(draws: &CommonDraws, variances: &LinkVariances, params: &SystemParams) -> Result<RateSearchResult> {
    let k = params.k_relays;
    if k == 0 || draws.k_relays != k {
        return Err(invalid(format!("draw bank holds {} relays but {k} were requested", draws.k_relays)));
    }
    let variances = variances.truncated(k)?;
    let n = draws.n_trials;
    let eps = params.epsilon;
    let probe = RateProbe { draws, variances: &variances, params };
    // feasible iff p̂ < ε
    let feasible = |events: u64| (events as f64) < eps * n as f64;

    let guess = c_eps_baf_k(&variances, params.snr, eps, k).unwrap_or(0.0);
    let guess = if guess > 0.0 && guess.is_finite() { guess } else { 1e-3 };
    let g_events = probe.events(guess)?;

    let (mut lo, mut e_lo, mut hi, mut e_hi);
    if feasible(g_events) {
        (lo, e_lo) = (guess, g_events);
        hi = 2.0 * guess;
        e_hi = probe.events(hi)?;
        let mut steps = 1;
        while feasible(e_hi) {
            if e_hi < e_lo {
                return Err(non_monotone(lo, e_lo, hi, e_hi));
            }
            if steps >= MAX_BRACKET_STEPS {
                return Err(invalid(format!("no rate with outage >= {eps} found below R={hi:e}")));
            }
            (lo, e_lo) = (hi, e_hi);
            hi *= 2.0;
            e_hi = probe.events(hi)?;
            steps += 1;
        }
    } else {
        (hi, e_hi) = (guess, g_events);
        (lo, e_lo) = (0.0, 0);
        let mut candidate = 0.5 * guess;
        for _ in 0..MAX_BRACKET_STEPS {
            let e = probe.events(candidate)?;
            if e > e_hi {
                return Err(non_monotone(candidate, e, hi, e_hi));
            }
            if feasible(e) {
                (lo, e_lo) = (candidate, e);
                break;
            }
            (hi, e_hi) = (candidate, e);
            candidate *= 0.5;
        }
        if !feasible(e_lo) {
            return Err(invalid(format!("outage target {eps} is not met even as the rate tends to zero")));
        }
    }

    let mut iterations = 0;
    while iterations < MAX_BISECTION_ITERATIONS && hi - lo >= RELATIVE_WIDTH * hi {
        let mid = 0.5 * (lo + hi);
        let e = probe.events(mid)?;
        if e < e_lo {
            return Err(non_monotone(lo, e_lo, mid, e));
        }
        if e > e_hi {
            return Err(non_monotone(mid, e, hi, e_hi));
        }
        if feasible(e) {
            (lo, e_lo) = (mid, e);
        } else {
            (hi, e_hi) = (mid, e);
        }
        iterations += 1;
    }
    Ok(RateSearchResult { rate: lo, achieved_outage: e_lo as f64 / n as f64, iterations, bracketing: (lo, hi) })
}

/// Largest rate whose simulated outage probability stays below `params.epsilon`.
pub fn empirical_eps_outage_capacity(variances: &LinkVariances, params: &SystemParams, plan: TrialPlan) -> Result<RateSearchResult> {
    plan.check()?;
    check_target_events(params.epsilon, plan.n_trials)?;
    let draws = CommonDraws::generate(params.k_relays, plan);
    eps_capacity_with_draws(&draws, variances, params)
}

fn check_target_events(epsilon: f64, n_trials: u64) -> Result<()> {
    if epsilon * (n_trials as f64) < MIN_TARGET_EVENTS {
        Err(invalid(format!(
            "epsilon * trials = {} is below {MIN_TARGET_EVENTS}; increase the trial count",
            epsilon * n_trials as f64
        )))
    } else {
        Ok(())
    }
}

/// Relay-position sweep on a unit source–destination segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementScan {
    pub positions: Vec<f64>,
    pub analytic: Placement,
    /// Empirical ε-outage capacity at every grid position.
    pub mc_capacity: Vec<f64>,
    pub mc_index: usize,
    pub mc_position: f64,
}

/// Sweeps one relay over the grid and locates the analytic and empirical capacity maxima.
///
/// The same draw bank is used at every position.
pub fn placement_scan(pathloss_exponent: f64, grid_resolution: usize, params: &SystemParams, plan: TrialPlan) -> Result<PlacementScan> {
    let analytic = optimal_relay_position(pathloss_exponent, grid_resolution)?;
    if params.k_relays != 1 {
        return Err(invalid("placement sweeps a single relay"));
    }
    plan.check()?;
    check_target_events(params.epsilon, plan.n_trials)?;
    let draws = CommonDraws::generate(1, plan);
    let positions = relay_grid(grid_resolution);
    let mut mc_capacity = Vec::with_capacity(positions.len());
    for &d in &positions {
        let v = variances_from_geometry(&NetworkGeometry::single_relay(d, pathloss_exponent)?)?;
        mc_capacity.push(eps_capacity_with_draws(&draws, &v, params)?.rate);
    }
    let mc_index = mc_capacity
        .iter()
        .enumerate()
        .fold(0, |best, (i, &c)| if c > mc_capacity[best] { i } else { best });
    Ok(PlacementScan { mc_position: positions[mc_index], positions, analytic, mc_capacity, mc_index })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::TauPolicy;
    use crate::montecarlo::estimate_outage;

    fn params(snr: f64, epsilon: f64) -> SystemParams {
        SystemParams::new(snr, 0.01, epsilon, 1, TauPolicy::SqrtRSnr).unwrap()
    }

    #[test]
    fn bank_matches_streamed_outage_count() {
        let v = LinkVariances::one_relay(1.0, 2.0, 0.5).unwrap();
        let plan = TrialPlan::new(30_000, 5);
        let p = SystemParams::new(0.1, 0.004, 0.01, 1, TauPolicy::SqrtRSnr).unwrap();
        let bank = CommonDraws::generate(1, plan);
        let tau = resolve_tau(&p).unwrap().value;
        let events = outage_count(&bank, &v, &Decoder::new(&p, tau, RelayOrder::FixedIndex));
        let est = estimate_outage(&v, &p, plan).unwrap();
        assert_eq!(events as f64 / plan.n_trials as f64, est.mean);
    }

    #[test]
    fn zero_epsilon_has_no_bracket() {
        let plan = TrialPlan::new(20_000, 1);
        let bank = CommonDraws::generate(1, plan);
        let r = eps_capacity_with_draws(&bank, &LinkVariances::unit(1), &params(0.1, 0.0));
        assert!(matches!(r, Err(crate::Error::InvalidParameter(_))));
        assert!(empirical_eps_outage_capacity(&LinkVariances::unit(1), &params(0.1, 0.0), plan).is_err());
    }

    #[test]
    fn search_result_brackets_target() {
        let plan = TrialPlan::new(50_000, 8);
        let eps = 0.01;
        let r = empirical_eps_outage_capacity(&LinkVariances::unit(1), &params(0.1, eps), plan).unwrap();
        assert!(r.bracketing.0 <= r.rate && r.rate <= r.bracketing.1);
        assert!(r.achieved_outage < eps);
        assert!(r.bracketing.1 - r.bracketing.0 < RELATIVE_WIDTH * r.bracketing.1);
        let above = estimate_outage(&LinkVariances::unit(1), &params(0.1, eps).with_rate(r.bracketing.1), plan).unwrap();
        assert!(above.mean >= eps);
    }

    #[test]
    fn too_few_events_rejected() {
        let r = empirical_eps_outage_capacity(&LinkVariances::unit(1), &params(0.1, 1e-3), TrialPlan::new(50_000, 1));
        assert!(matches!(r, Err(crate::Error::InvalidParameter(_))));
    }

    #[test]
    fn bank_size_and_determinism() {
        let plan = TrialPlan::new(10_001, 77);
        let a = CommonDraws::generate(2, plan);
        let b = CommonDraws::generate(2, plan);
        assert_eq!(a.unit.len(), 10_001 * 5);
        assert_eq!(a.unit, b.unit);
        let mut manual = [0.0; 5];
        TrialStreams::new(77).fill_unit(10_000, &mut manual);
        assert_eq!(&a.unit[10_000 * 5..], &manual);
    }
}
