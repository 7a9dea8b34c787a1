//! Network geometry, path loss, and block-Rayleigh channel draws.
//!
//! Link gains are zero-mean circularly-symmetric complex Gaussians, so every
//! squared magnitude `|h|²` is exponentially distributed with mean equal to
//! the link variance. Variances follow the path-loss law `σ² = d^(-α)` with
//! the proportionality constant fixed to one; only ratios of variances enter
//! the capacity expressions.
//!
//! Random draws are reproducible per trial: every trial owns a ChaCha8
//! stream selected by `(master_seed, trial_index)`, so the draws of a trial
//! never depend on how trials are scheduled across workers.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{invalid, Result};

/// One source, `K` relays on the source–destination segment, one destination.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGeometry {
    pub sd_distance: f64,
    /// Relay distances from the source, each strictly inside `(0, sd_distance)`.
    pub relay_positions: Vec<f64>,
    pub pathloss_exponent: f64,
}

impl NetworkGeometry {
    pub fn new(sd_distance: f64, relay_positions: Vec<f64>, pathloss_exponent: f64) -> Result<Self> {
        if !(sd_distance > 0.0 && sd_distance.is_finite()) {
            return Err(invalid(format!("source-destination distance must be positive, got {sd_distance}")));
        }
        if !(pathloss_exponent >= 0.0 && pathloss_exponent.is_finite()) {
            return Err(invalid(format!("path-loss exponent must be nonnegative, got {pathloss_exponent}")));
        }
        for (k, &d) in relay_positions.iter().enumerate() {
            if !(d > 0.0 && d < sd_distance) {
                return Err(invalid(format!(
                    "relay {k} at position {d} is not strictly between source and destination"
                )));
            }
        }
        Ok(Self { sd_distance, relay_positions, pathloss_exponent })
    }

    /// Unit source–destination distance with a single relay at `position`.
    pub fn single_relay(position: f64, pathloss_exponent: f64) -> Result<Self> {
        Self::new(1.0, vec![position], pathloss_exponent)
    }

    pub fn k_relays(&self) -> usize {
        self.relay_positions.len()
    }
}

/// Variances of the source–destination, source–relay and relay–destination links.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkVariances {
    sigma_sd2: f64,
    sigma_sr2: Vec<f64>,
    sigma_rd2: Vec<f64>,
}

fn check_variance(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl LinkVariances {
    pub fn new(sigma_sd2: f64, sigma_sr2: Vec<f64>, sigma_rd2: Vec<f64>) -> Result<Self> {
        check_variance("sigma_sd2", sigma_sd2)?;
        if sigma_sr2.len() != sigma_rd2.len() {
            return Err(invalid(format!(
                "relay variance lists differ in length ({} source-relay vs {} relay-destination)",
                sigma_sr2.len(),
                sigma_rd2.len()
            )));
        }
        for (k, (&sr, &rd)) in sigma_sr2.iter().zip(&sigma_rd2).enumerate() {
            check_variance(&format!("sigma_sr2[{k}]"), sr)?;
            check_variance(&format!("sigma_rd2[{k}]"), rd)?;
        }
        Ok(Self { sigma_sd2, sigma_sr2, sigma_rd2 })
    }

    pub fn one_relay(sigma_sd2: f64, sigma_sr2: f64, sigma_rd2: f64) -> Result<Self> {
        Self::new(sigma_sd2, vec![sigma_sr2], vec![sigma_rd2])
    }

    /// All `2K + 1` links with unit variance.
    pub fn unit(k_relays: usize) -> Self {
        Self { sigma_sd2: 1.0, sigma_sr2: vec![1.0; k_relays], sigma_rd2: vec![1.0; k_relays] }
    }

    pub fn sigma_sd2(&self) -> f64 {
        self.sigma_sd2
    }

    pub fn sigma_sr2(&self) -> &[f64] {
        &self.sigma_sr2
    }

    pub fn sigma_rd2(&self) -> &[f64] {
        &self.sigma_rd2
    }

    pub fn k_relays(&self) -> usize {
        self.sigma_sr2.len()
    }

    /// `(σ_sd², σ_sr², σ_rd²)` of the first relay.
    pub fn first_relay(&self) -> Result<(f64, f64, f64)> {
        match (self.sigma_sr2.first(), self.sigma_rd2.first()) {
            (Some(&sr), Some(&rd)) => Ok((self.sigma_sd2, sr, rd)),
            _ => Err(invalid("at least one relay is required")),
        }
    }

    /// Keeps only the first `k` relays.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k > self.k_relays() {
            return Err(invalid(format!("cannot keep {k} relays out of {}", self.k_relays())));
        }
        Ok(Self {
            sigma_sd2: self.sigma_sd2,
            sigma_sr2: self.sigma_sr2[..k].to_vec(),
            sigma_rd2: self.sigma_rd2[..k].to_vec(),
        })
    }
}

/// Maps distances to link variances through `σ² = d^(-α)`.
pub fn variances_from_geometry(geom: &NetworkGeometry) -> Result<LinkVariances> {
    let alpha = geom.pathloss_exponent;
    let sd = geom.sd_distance;
    let sigma_sd2 = sd.powf(-alpha);
    let mut sr = Vec::with_capacity(geom.k_relays());
    let mut rd = Vec::with_capacity(geom.k_relays());
    for (k, &d) in geom.relay_positions.iter().enumerate() {
        if !(d > 0.0 && d < sd) {
            return Err(invalid(format!("relay {k} at position {d} gives an infinite link variance")));
        }
        sr.push(d.powf(-alpha));
        rd.push((sd - d).powf(-alpha));
    }
    LinkVariances::new(sigma_sd2, sr, rd)
}

/// How the burst fraction τ is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauPolicy {
    /// `τ = min(√(R·SNR), 1)`.
    SqrtRSnr,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Linear `P/N₀`.
    pub snr: f64,
    /// Target rate in bit/s/Hz.
    pub rate: f64,
    /// Target outage probability.
    pub epsilon: f64,
    pub k_relays: usize,
    pub tau_policy: TauPolicy,
}

impl SystemParams {
    /// Validates `snr > 0`, `rate ≥ 0` and `0 ≤ ε < 1`.
    ///
    /// The degenerate `rate = 0` and `ε = 0` values are admitted: the first
    /// never goes into outage and the second has zero outage capacity.
    pub fn new(snr: f64, rate: f64, epsilon: f64, k_relays: usize, tau_policy: TauPolicy) -> Result<Self> {
        if !(snr > 0.0 && snr.is_finite()) {
            return Err(invalid(format!("snr must be positive and finite, got {snr}")));
        }
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(invalid(format!("rate must be nonnegative and finite, got {rate}")));
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(invalid(format!("epsilon must lie in [0, 1), got {epsilon}")));
        }
        if let TauPolicy::Fixed(v) = tau_policy {
            check_fixed_tau(v)?;
        }
        Ok(Self { snr, rate, epsilon, k_relays, tau_policy })
    }

    pub fn with_rate(&self, rate: f64) -> Self {
        Self { rate, ..self.clone() }
    }
}

fn check_fixed_tau(v: f64) -> Result<()> {
    if v > 0.0 && v <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("fixed burst fraction must lie in (0, 1], got {v}")))
    }
}

/// A burst fraction together with whether it had to be clamped to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedTau {
    pub value: f64,
    /// Set when `√(R·SNR) > 1`, i.e. the operating point is outside the
    /// bursty low-SNR regime.
    pub clamped: bool,
}

pub fn resolve_tau(params: &SystemParams) -> Result<ResolvedTau> {
    match params.tau_policy {
        TauPolicy::SqrtRSnr => {
            let raw = (params.rate * params.snr).sqrt();
            if raw > 1.0 {
                Ok(ResolvedTau { value: 1.0, clamped: true })
            } else {
                Ok(ResolvedTau { value: raw, clamped: false })
            }
        }
        TauPolicy::Fixed(v) => {
            check_fixed_tau(v)?;
            Ok(ResolvedTau { value: v, clamped: false })
        }
    }
}

/// Squared channel magnitudes of one fading block.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelDraw {
    pub g_sd: f64,
    pub g_sr: Vec<f64>,
    pub g_rd: Vec<f64>,
}

impl ChannelDraw {
    pub fn new(g_sd: f64, g_sr: Vec<f64>, g_rd: Vec<f64>) -> Self {
        debug_assert_eq!(g_sr.len(), g_rd.len());
        Self { g_sd, g_sr, g_rd }
    }

    pub fn zeros(k_relays: usize) -> Self {
        Self { g_sd: 0.0, g_sr: vec![0.0; k_relays], g_rd: vec![0.0; k_relays] }
    }

    pub fn k_relays(&self) -> usize {
        self.g_sr.len()
    }

    /// Contribution `g_rd·g_sr / (g_rd + g_sr + x)` of relay `k`, where `x = τ/SNR`.
    #[inline]
    pub fn relay_term(&self, k: usize, noise_term: f64) -> f64 {
        let (sr, rd) = (self.g_sr[k], self.g_rd[k]);
        let den = rd + sr + noise_term;
        if den > 0.0 {
            rd * sr / den
        } else {
            0.0
        }
    }

    /// Channel aggregate `g_sd + Σ_k g_rd·g_sr/(g_rd + g_sr + x)`.
    pub fn aggregate(&self, noise_term: f64) -> f64 {
        (0..self.k_relays()).fold(self.g_sd, |acc, k| acc + self.relay_term(k, noise_term))
    }

    /// Overwrites `self` with unit-mean draws scaled by `variances`.
    ///
    /// `unit` is laid out as `[sd, sr_1, rd_1, sr_2, rd_2, ...]`, so the draws of
    /// the first `k` relays do not depend on how many relays follow.
    pub fn fill_scaled(&mut self, variances: &LinkVariances, unit: &[f64]) {
        let k = variances.k_relays();
        debug_assert_eq!(unit.len(), draws_per_trial(k));
        self.g_sr.resize(k, 0.0);
        self.g_rd.resize(k, 0.0);
        self.g_sd = unit[0] * variances.sigma_sd2;
        for i in 0..k {
            self.g_sr[i] = unit[1 + 2 * i] * variances.sigma_sr2[i];
            self.g_rd[i] = unit[2 + 2 * i] * variances.sigma_rd2[i];
        }
    }
}

/// Number of exponential variates consumed by one trial with `k` relays.
pub const fn draws_per_trial(k_relays: usize) -> usize {
    1 + 2 * k_relays
}

/// Per-trial ChaCha8 substreams derived from a 64-bit master seed.
#[derive(Debug, Clone)]
pub struct TrialStreams {
    base: ChaCha8Rng,
    master_seed: u64,
}

impl TrialStreams {
    pub fn new(master_seed: u64) -> Self {
        Self { base: ChaCha8Rng::seed_from_u64(master_seed), master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// The stream owned by `trial_index`; a pure function of `(master_seed, trial_index)`.
    pub fn stream(&self, trial_index: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(trial_index);
        rng
    }

    /// Unit-mean exponential variates of one trial.
    pub fn fill_unit(&self, trial_index: u64, out: &mut [f64]) {
        let mut rng = self.stream(trial_index);
        fill_unit_exponentials(&mut rng, out);
    }
}

pub fn fill_unit_exponentials<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample::<f64, _>(Exp1);
    }
}

/// Draws one block of squared channel magnitudes from `rng`.
pub fn draw_channels<R: Rng + ?Sized>(variances: &LinkVariances, rng: &mut R) -> ChannelDraw {
    let mut unit = vec![0.0; draws_per_trial(variances.k_relays())];
    fill_unit_exponentials(rng, &mut unit);
    let mut draw = ChannelDraw::zeros(variances.k_relays());
    draw.fill_scaled(variances, &unit);
    draw
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn midpoint_relay_cubic_pathloss() {
        let geom = NetworkGeometry::single_relay(0.5, 3.0).unwrap();
        let v = variances_from_geometry(&geom).unwrap();
        assert_eq!(v.sigma_sd2(), 1.0);
        assert_relative_eq!(v.sigma_sr2()[0], 8.0, max_relative = 1e-15);
        assert_relative_eq!(v.sigma_rd2()[0], 8.0, max_relative = 1e-15);
    }

    #[test]
    fn zero_exponent_gives_unit_variances() {
        let v = variances_from_geometry(&NetworkGeometry::single_relay(0.5, 0.0).unwrap()).unwrap();
        assert_eq!(v, LinkVariances::unit(1));
    }

    #[test]
    fn quarter_position_fourth_power() {
        let v = variances_from_geometry(&NetworkGeometry::single_relay(0.25, 4.0).unwrap()).unwrap();
        assert_relative_eq!(v.sigma_sr2()[0], 256.0, max_relative = 1e-15);
        assert_relative_eq!(v.sigma_rd2()[0], 3.160_493_827_160_494, max_relative = 1e-12);
    }

    #[test]
    fn relay_on_endpoint_is_rejected() {
        let geom = NetworkGeometry { sd_distance: 1.0, relay_positions: vec![0.0], pathloss_exponent: 3.0 };
        assert!(matches!(variances_from_geometry(&geom), Err(crate::Error::InvalidParameter(_))));
        let geom = NetworkGeometry { sd_distance: 1.0, relay_positions: vec![1.0], pathloss_exponent: 3.0 };
        assert!(variances_from_geometry(&geom).is_err());
        assert!(NetworkGeometry::single_relay(1.0, 3.0).is_err());
    }

    #[test]
    fn symmetric_placement_swaps_relay_links() {
        for &alpha in &[2.0, 3.0, 3.7, 5.0] {
            // positions whose mirror 1 - d is exact in binary floating point
            for &d in &[0.125, 0.25, 0.3125, 0.375, 0.4375] {
                let a = variances_from_geometry(&NetworkGeometry::single_relay(d, alpha).unwrap()).unwrap();
                let b = variances_from_geometry(&NetworkGeometry::single_relay(1.0 - d, alpha).unwrap()).unwrap();
                assert_eq!(a.sigma_sr2()[0], b.sigma_rd2()[0]);
                assert_eq!(a.sigma_rd2()[0], b.sigma_sr2()[0]);
            }
        }
    }

    #[test]
    fn nonpositive_variance_rejected() {
        assert!(LinkVariances::one_relay(0.0, 1.0, 1.0).is_err());
        assert!(LinkVariances::one_relay(1.0, -1.0, 1.0).is_err());
        assert!(LinkVariances::one_relay(1.0, 1.0, f64::INFINITY).is_err());
        assert!(LinkVariances::new(1.0, vec![1.0], vec![]).is_err());
    }

    fn params(snr: f64, rate: f64, policy: TauPolicy) -> SystemParams {
        SystemParams::new(snr, rate, 0.01, 1, policy).unwrap()
    }

    #[test]
    fn tau_sqrt_policy() {
        let t = resolve_tau(&params(1.0, 0.01, TauPolicy::SqrtRSnr)).unwrap();
        assert_relative_eq!(t.value, 0.1, max_relative = 1e-15);
        assert!(!t.clamped);
    }

    #[test]
    fn tau_clamps_with_warning() {
        let t = resolve_tau(&params(1.0, 4.0, TauPolicy::SqrtRSnr)).unwrap();
        assert_eq!(t, ResolvedTau { value: 1.0, clamped: true });
    }

    #[test]
    fn tau_fixed_passthrough_and_range() {
        let t = resolve_tau(&params(1.0, 0.01, TauPolicy::Fixed(0.5))).unwrap();
        assert_eq!(t.value, 0.5);
        assert!(SystemParams::new(1.0, 0.01, 0.01, 1, TauPolicy::Fixed(0.0)).is_err());
        assert!(SystemParams::new(1.0, 0.01, 0.01, 1, TauPolicy::Fixed(1.5)).is_err());
        let mut p = params(1.0, 0.01, TauPolicy::SqrtRSnr);
        p.tau_policy = TauPolicy::Fixed(2.0);
        assert!(resolve_tau(&p).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::new(0.0, 0.1, 0.01, 1, TauPolicy::SqrtRSnr).is_err());
        assert!(SystemParams::new(1.0, -0.1, 0.01, 1, TauPolicy::SqrtRSnr).is_err());
        assert!(SystemParams::new(1.0, 0.1, 1.0, 1, TauPolicy::SqrtRSnr).is_err());
    }

    #[test]
    fn same_trial_same_draw() {
        let v = LinkVariances::new(1.3, vec![0.5, 2.0], vec![4.0, 0.7]).unwrap();
        let streams = TrialStreams::new(42);
        let a = draw_channels(&v, &mut streams.stream(17));
        let b = draw_channels(&v, &mut TrialStreams::new(42).stream(17));
        assert_eq!(a, b);
        let c = draw_channels(&v, &mut streams.stream(18));
        assert_ne!(a, c);
        assert!(a.g_sd >= 0.0 && a.g_sr.iter().chain(&a.g_rd).all(|&g| g >= 0.0));
    }

    #[test]
    fn fewer_relays_is_a_prefix_of_more_relays() {
        let streams = TrialStreams::new(9);
        let two = draw_channels(&LinkVariances::unit(2), &mut streams.stream(3));
        let one = draw_channels(&LinkVariances::unit(1), &mut streams.stream(3));
        assert_eq!(one.g_sd, two.g_sd);
        assert_eq!(one.g_sr[0], two.g_sr[0]);
        assert_eq!(one.g_rd[0], two.g_rd[0]);
    }

    #[test]
    fn exponential_mean_and_cdf() {
        let v = LinkVariances::one_relay(2.0, 1.0, 1.0).unwrap();
        let streams = TrialStreams::new(2024);
        let n = 1_000_000u64;
        let mut draw = ChannelDraw::zeros(1);
        let mut unit = [0.0; 3];
        let (mut sum_sd, mut below_one) = (0.0, 0u64);
        for i in 0..n {
            streams.fill_unit(i, &mut unit);
            draw.fill_scaled(&v, &unit);
            sum_sd += draw.g_sd;
            if draw.g_sr[0] <= 1.0 {
                below_one += 1;
            }
        }
        let mean = sum_sd / n as f64;
        assert!((mean - 2.0).abs() < 0.01, "mean {mean}");
        let cdf = below_one as f64 / n as f64;
        assert!((cdf - (1.0 - (-1.0f64).exp())).abs() < 0.002, "cdf {cdf}");
    }

    #[test]
    fn aggregate_matches_hand_value() {
        let d = ChannelDraw::new(0.0, vec![1.0], vec![1.0]);
        assert_relative_eq!(d.aggregate(0.1), 1.0 / 2.1, max_relative = 1e-15);
        assert_eq!(ChannelDraw::zeros(3).aggregate(0.0), 0.0);
    }
}
