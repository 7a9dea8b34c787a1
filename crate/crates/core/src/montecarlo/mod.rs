//! Monte Carlo estimation over the feedback protocol.
//!
//! Trials are split into fixed-size chunks that rayon may schedule on any
//! number of workers. Every trial draws from its own substream and every
//! accumulator is an integer count, so results are bit-identical for a given
//! `(master_seed, n_trials)` regardless of the worker count.

mod quadrature;
mod search;

pub use quadrature::{integrate, quadrature_outage_oracle, Integral, ORACLE_REL_TOL, TRUNCATION_MEANS};
pub use search::{
    eps_capacity_with_draws, empirical_eps_outage_capacity, outage_count, placement_scan, CommonDraws, PlacementScan,
    RateSearchResult, MAX_BISECTION_ITERATIONS,
};

use rayon::prelude::*;

use crate::channel::{draws_per_trial, resolve_tau, ChannelDraw, LinkVariances, SystemParams, TrialStreams};
use crate::error::{convergence, invalid, Result};
use crate::protocol::{Decoder, RelayOrder};

/// Trials per work item. Fixed so that chunking never depends on the worker count.
pub(crate) const CHUNK: u64 = 4096;

/// Smallest trial budget accepted by the estimators.
pub const MIN_TRIALS: u64 = 10_000;

/// Fewest events accepted at the smallest threshold of the Lemma-1 experiment.
pub const MIN_LEMMA_EVENTS: u64 = 100;

const Z95: f64 = 1.959_963_984_540_054;

/// Trial budget and master seed of one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialPlan {
    pub n_trials: u64,
    pub master_seed: u64,
}

impl TrialPlan {
    pub fn new(n_trials: u64, master_seed: u64) -> Self {
        Self { n_trials, master_seed }
    }

    fn check(&self) -> Result<()> {
        if self.n_trials < MIN_TRIALS {
            Err(invalid(format!("at least {MIN_TRIALS} trials are required, got {}", self.n_trials)))
        } else {
            Ok(())
        }
    }
}

/// A Monte Carlo statistic with its standard error and normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_trials: u64,
    pub ci95: (f64, f64),
}

impl Estimate {
    /// Binomial proportion `events/n` with stderr `√(p̂(1−p̂)/n)`, interval clipped to `[0, 1]`.
    pub fn proportion(events: u64, n: u64) -> Self {
        let nf = n as f64;
        let p = events as f64 / nf;
        let stderr = (p * (1.0 - p) / nf).sqrt();
        Self { mean: p, stderr, n_trials: n, ci95: ((p - Z95 * stderr).max(0.0), (p + Z95 * stderr).min(1.0)) }
    }

    /// Sample mean and its stderr from integer first and second moments.
    pub fn from_integer_moments(sum: u64, sum_sq: u64, n: u64) -> Self {
        let nf = n as f64;
        let mean = sum as f64 / nf;
        // n·Σx² − (Σx)² is exact in u128 for the sizes used here
        let centered = (n as u128 * sum_sq as u128).saturating_sub(sum as u128 * sum as u128) as f64;
        let variance = if n > 1 { centered / (nf * (nf - 1.0)) } else { 0.0 };
        let stderr = (variance / nf).sqrt();
        Self { mean, stderr, n_trials: n, ci95: (mean - Z95 * stderr, mean + Z95 * stderr) }
    }

    /// Multiplies mean, stderr and interval by a positive constant.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            mean: self.mean * factor,
            stderr: self.stderr * factor,
            n_trials: self.n_trials,
            ci95: (self.ci95.0 * factor, self.ci95.1 * factor),
        }
    }

    /// `|mean − value|` in units of stderr; infinite when stderr is zero and the values differ.
    pub fn z_score(&self, value: f64) -> f64 {
        let diff = (self.mean - value).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.stderr
        }
    }
}

/// Integer tallies over simulated blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BlockTally {
    pub trials: u64,
    pub outages: u64,
    /// Blocks where the source burst alone was not enough.
    pub source_failures: u64,
    pub sum_n: u64,
    pub sum_n_sq: u64,
}

impl BlockTally {
    fn merge(self, o: Self) -> Self {
        Self {
            trials: self.trials + o.trials,
            outages: self.outages + o.outages,
            source_failures: self.source_failures + o.source_failures,
            sum_n: self.sum_n + o.sum_n,
            sum_n_sq: self.sum_n_sq + o.sum_n_sq,
        }
    }

    pub fn outage(&self) -> Estimate {
        Estimate::proportion(self.outages, self.trials)
    }

    pub fn expected_n(&self) -> Estimate {
        Estimate::from_integer_moments(self.sum_n, self.sum_n_sq, self.trials)
    }
}

/// Runs `n_trials` independent chunks and merges their results in chunk order.
pub(crate) fn par_chunks<T, F>(n_trials: u64, identity: T, per_chunk: F, merge: fn(T, T) -> T) -> T
where
    T: Send + Sync + Copy,
    F: Fn(std::ops::Range<u64>) -> T + Sync,
{
    let n_chunks = n_trials.div_ceil(CHUNK);
    (0..n_chunks)
        .into_par_iter()
        .map(|c| per_chunk(c * CHUNK..((c + 1) * CHUNK).min(n_trials)))
        .reduce(|| identity, merge)
}

/// Simulates `plan.n_trials` blocks and tallies outage and sub-block usage.
pub fn run_blocks(variances: &LinkVariances, params: &SystemParams, order: RelayOrder, plan: TrialPlan) -> Result<BlockTally> {
    plan.check()?;
    let k = params.k_relays;
    if k == 0 {
        return Err(invalid("at least one relay is required"));
    }
    let variances = variances.truncated(k)?;
    let tau = resolve_tau(params)?.value;
    let decoder = Decoder::new(params, tau, order);
    let streams = TrialStreams::new(plan.master_seed);
    let tally = par_chunks(
        plan.n_trials,
        BlockTally::default(),
        |range| {
            let mut unit = vec![0.0; draws_per_trial(k)];
            let mut draw = ChannelDraw::zeros(k);
            let mut t = BlockTally::default();
            for i in range {
                streams.fill_unit(i, &mut unit);
                draw.fill_scaled(&variances, &unit);
                let out = decoder.run(&draw);
                let n = out.sub_blocks_used as u64;
                t.trials += 1;
                t.outages += u64::from(!out.decoded);
                t.source_failures += u64::from(n > 1);
                t.sum_n += n;
                t.sum_n_sq += n * n;
            }
            t
        },
        BlockTally::merge,
    );
    Ok(tally)
}

/// Fraction of simulated blocks that end in outage.
pub fn estimate_outage(variances: &LinkVariances, params: &SystemParams, plan: TrialPlan) -> Result<Estimate> {
    Ok(run_blocks(variances, params, RelayOrder::FixedIndex, plan)?.outage())
}

/// Sample mean of the number of sub-blocks used per message.
pub fn estimate_expected_n(variances: &LinkVariances, params: &SystemParams, plan: TrialPlan) -> Result<Estimate> {
    Ok(run_blocks(variances, params, RelayOrder::FixedIndex, plan)?.expected_n())
}

/// How the noise term `x` of the Lemma-1 experiment follows the threshold `g`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum LemmaCoupling {
    /// `x = τ/SNR` under `τ = √(R·SNR)`: with `s = √(R/SNR)` the threshold is
    /// `g = s(2^{2s} − 1)` and `x = s`.
    #[default]
    BurstPolicy,
    /// `x = c·g`.
    Proportional(f64),
    Fixed(f64),
}

impl LemmaCoupling {
    pub fn noise_term(&self, g: f64) -> f64 {
        match *self {
            LemmaCoupling::BurstPolicy => policy_noise_term(g),
            LemmaCoupling::Proportional(c) => c * g,
            LemmaCoupling::Fixed(x) => x,
        }
    }
}

/// Solves `s(2^{2s} − 1) = g` for `s ≥ 0`; the left side is increasing in `s`.
pub fn policy_noise_term(g: f64) -> f64 {
    if g <= 0.0 {
        return 0.0;
    }
    let f = |s: f64| s * (2.0 * s * std::f64::consts::LN_2).exp_m1();
    // s(2^{2s}−1) ≥ 2 ln2 s², so s ≤ √(g / (2 ln2)); and ≥ s for s ≥ ½
    let mut hi = (g / (2.0 * std::f64::consts::LN_2)).sqrt().max(g.min(1.0));
    while f(hi) < g {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < g {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One point of the Lemma-1 experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaPoint {
    pub g: f64,
    pub noise_term: f64,
    pub events: u64,
    /// Estimate of `Pr(U + VW/(V+W+x) < g)/g²`.
    pub ratio: Estimate,
}

/// Estimates `Pr(U + VW/(V+W+x) < g)/g²` along a decreasing threshold sequence,
/// reusing the same draws for every `g`.
pub fn lemma1_ratio_experiment(
    sigma_u2: f64,
    sigma_v2: f64,
    sigma_w2: f64,
    g_sequence: &[f64],
    coupling: LemmaCoupling,
    plan: TrialPlan,
) -> Result<Vec<LemmaPoint>> {
    plan.check()?;
    if g_sequence.is_empty() {
        return Err(invalid("threshold sequence is empty"));
    }
    if g_sequence.iter().any(|&g| !(g > 0.0 && g.is_finite())) || g_sequence.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("threshold sequence must be positive and strictly decreasing"));
    }
    let variances = LinkVariances::one_relay(sigma_u2, sigma_v2, sigma_w2)?;
    let xs: Vec<f64> = g_sequence.iter().map(|&g| coupling.noise_term(g)).collect();
    if xs.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(invalid("noise term must be finite and nonnegative"));
    }
    let streams = TrialStreams::new(plan.master_seed);
    let m = g_sequence.len();

    let counts = {
        let per_chunk = |range: std::ops::Range<u64>| {
            let mut unit = [0.0; 3];
            let mut draw = ChannelDraw::zeros(1);
            let mut c = vec![0u64; m];
            for i in range {
                streams.fill_unit(i, &mut unit);
                draw.fill_scaled(&variances, &unit);
                for (j, (&g, &x)) in g_sequence.iter().zip(&xs).enumerate() {
                    if draw.aggregate(x) < g {
                        c[j] += 1;
                    }
                }
            }
            c
        };
        let n_chunks = plan.n_trials.div_ceil(CHUNK);
        (0..n_chunks)
            .into_par_iter()
            .map(|ch| per_chunk(ch * CHUNK..((ch + 1) * CHUNK).min(plan.n_trials)))
            .reduce(|| vec![0u64; m], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect())
    };

    let last = counts[m - 1];
    if last < MIN_LEMMA_EVENTS {
        return Err(convergence(format!(
            "only {last} events at g = {}; at least {MIN_LEMMA_EVENTS} are needed, increase the trial count",
            g_sequence[m - 1]
        )));
    }
    Ok(g_sequence
        .iter()
        .zip(&xs)
        .zip(&counts)
        .map(|((&g, &x), &events)| LemmaPoint {
            g,
            noise_term: x,
            events,
            ratio: Estimate::proportion(events, plan.n_trials).scaled(1.0 / (g * g)),
        })
        .collect())
}
