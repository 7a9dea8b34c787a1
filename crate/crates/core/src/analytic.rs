//! Closed-form capacities, outage thresholds and bounds for bursty
//! amplify-and-forward (BAF) relaying with incremental feedback.
//!
//! All capacities are in bit/s/Hz and all SNRs are linear. Functions that
//! need the burst fraction resolve it from the [`SystemParams`] policy.

use crate::channel::{resolve_tau, ChannelDraw, LinkVariances, SystemParams};
use crate::error::{invalid, Result};

/// `log₂(1 + x)`, accurate for small `x`.
#[inline]
pub(crate) fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// Which form of the outage threshold on the channel aggregate to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    /// Inverts the capacity expression: `τ(2^{(K+1)R/τ} − 1)/SNR`.
    #[default]
    Exact,
    /// Low-SNR linearization `(K+1)·R / (log₂(e)·SNR)`.
    Linearized,
}

/// How `E(N)` is evaluated in the one-relay case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExpectedNMode {
    /// `1 + Pr(S→D fails)` from the exponential CDF at the exact threshold.
    #[default]
    Exact,
    /// `1 + log₂(e)·R/(σ_sd²·SNR)`, clamped to `[1, 2]`.
    PaperApprox,
}

/// Instantaneous BAF capacity `(τ/(K+1))·log₂(1 + (SNR/τ)·α_K)` of one block.
///
/// The number of relays is taken from the draw.
pub fn instantaneous_capacity(draw: &ChannelDraw, params: &SystemParams, tau: f64) -> f64 {
    if tau <= 0.0 {
        return 0.0;
    }
    let k = draw.k_relays();
    let aggregate = draw.aggregate(tau / params.snr);
    tau / (k + 1) as f64 * log2_1p(params.snr / tau * aggregate)
}

/// Threshold `g` such that the block is in outage iff the channel aggregate is below `g`.
pub fn outage_threshold_g(params: &SystemParams, k_relays: usize, mode: ThresholdMode) -> Result<f64> {
    let slots = (k_relays + 1) as f64;
    match mode {
        ThresholdMode::Exact => {
            let tau = resolve_tau(params)?.value;
            Ok(exact_threshold(params.rate, params.snr, tau, slots))
        }
        ThresholdMode::Linearized => Ok(slots * params.rate * std::f64::consts::LN_2 / params.snr),
    }
}

/// `τ(2^{slots·R/τ} − 1)/SNR`; zero rate never needs any aggregate.
#[inline]
pub(crate) fn exact_threshold(rate: f64, snr: f64, tau: f64, slots: f64) -> f64 {
    if rate == 0.0 {
        return 0.0;
    }
    tau * (slots * rate / tau * std::f64::consts::LN_2).exp_m1() / snr
}

/// The limit `(σ_v² + σ_w²)/(2σ_u²σ_v²σ_w²)` of `Pr(U + VW/(V+W+x) < g)/g²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaConstant {
    pub value: f64,
}

pub fn lemma1_constant(sigma_u2: f64, sigma_v2: f64, sigma_w2: f64) -> Result<LemmaConstant> {
    for (name, v) in [("sigma_u2", sigma_u2), ("sigma_v2", sigma_v2), ("sigma_w2", sigma_w2)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(LemmaConstant { value: (sigma_v2 + sigma_w2) / (2.0 * sigma_u2 * sigma_v2 * sigma_w2) })
}

/// Effective SNR multiplier inside the ε-outage capacity expressions:
/// `[(K+1)!·σ_sd²·∏σ_rd²σ_sr²·ε / ∏(σ_rd² + σ_sr²)]^{1/(K+1)}` over the first `k` relays.
fn outage_gain(variances: &LinkVariances, epsilon: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(invalid("at least one relay is required"));
    }
    if k > variances.k_relays() {
        return Err(invalid(format!("{k} relays requested but only {} variances given", variances.k_relays())));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(invalid(format!("epsilon must lie in [0, 1), got {epsilon}")));
    }
    let factorial: f64 = (2..=k + 1).map(|i| i as f64).product();
    let (sr, rd) = (&variances.sigma_sr2()[..k], &variances.sigma_rd2()[..k]);
    let num = sr.iter().zip(rd).fold(factorial * variances.sigma_sd2(), |acc, (&s, &r)| acc * (r * s));
    let den: f64 = sr.iter().zip(rd).map(|(&s, &r)| r + s).product();
    let inner = num * epsilon / den;
    Ok(if k == 1 { inner.sqrt() } else { inner.powf(1.0 / (k + 1) as f64) })
}

/// ε-outage capacity of one-relay BAF without feedback,
/// `½·log₂(1 + SNR·√(2σ_sd²σ_rd²σ_sr²ε/(σ_rd² + σ_sr²)))`. Uses the first relay.
pub fn c_eps_baf_no_feedback(variances: &LinkVariances, snr: f64, epsilon: f64) -> Result<f64> {
    let gain = outage_gain(variances, epsilon, 1)?;
    Ok(0.5 * log2_1p(snr * gain))
}

/// `E(N) = 1 + Pr(S→D fails)` for one relay.
pub fn expected_n_one_relay(variances: &LinkVariances, params: &SystemParams, mode: ExpectedNMode) -> Result<f64> {
    let sigma_sd2 = variances.sigma_sd2();
    match mode {
        ExpectedNMode::Exact => {
            let t = outage_threshold_g(params, 1, ThresholdMode::Exact)?;
            Ok(1.0 - (-t / sigma_sd2).exp_m1())
        }
        ExpectedNMode::PaperApprox => {
            let p = std::f64::consts::LOG2_E * params.rate / (sigma_sd2 * params.snr);
            Ok((1.0 + p).clamp(1.0, 2.0))
        }
    }
}

/// `(2/E(N))·C_ε` for a given `E(N) ∈ [1, 2]`.
pub fn c_eps_baf_incremental_given_n(variances: &LinkVariances, snr: f64, epsilon: f64, expected_n: f64) -> Result<f64> {
    check_expected_n(expected_n, 1)?;
    Ok(2.0 / expected_n * c_eps_baf_no_feedback(variances, snr, epsilon)?)
}

/// ε-outage capacity of one-relay BAF with incremental relaying.
pub fn c_eps_baf_incremental(variances: &LinkVariances, params: &SystemParams, mode: ExpectedNMode) -> Result<f64> {
    let en = expected_n_one_relay(variances, params, mode)?;
    c_eps_baf_incremental_given_n(variances, params.snr, params.epsilon, en)
}

/// Cut-set bound with incremental relaying (broadcast and multiple-access cuts only),
/// `(1/(1+Kε))·log₂(1 + SNR·[...]^{1/(K+1)})`. For `K = 1` this is the one-relay bound.
pub fn c_eps_cutset(variances: &LinkVariances, snr: f64, epsilon: f64, k: usize) -> Result<f64> {
    let gain = outage_gain(variances, epsilon, k)?;
    Ok(log2_1p(snr * gain) / (1.0 + k as f64 * epsilon))
}

/// Upper bound on the K-relay ε-outage capacity without feedback. Equals
/// [`c_eps_baf_no_feedback`] bit-for-bit at `K = 1`.
pub fn c_eps_baf_k(variances: &LinkVariances, snr: f64, epsilon: f64, k: usize) -> Result<f64> {
    let gain = outage_gain(variances, epsilon, k)?;
    Ok(1.0 / (k + 1) as f64 * log2_1p(snr * gain))
}

/// `((K+1)/E_K(N))·C_{ε,K}` with `K = params.k_relays`.
pub fn c_eps_baf_ir_k(variances: &LinkVariances, params: &SystemParams, expected_n_k: f64) -> Result<f64> {
    let k = params.k_relays;
    check_expected_n(expected_n_k, k)?;
    Ok((k + 1) as f64 / expected_n_k * c_eps_baf_k(variances, params.snr, params.epsilon, k)?)
}

fn check_expected_n(expected_n: f64, k: usize) -> Result<()> {
    let hi = (k + 1) as f64;
    if (1.0..=hi).contains(&expected_n) {
        Ok(())
    } else {
        Err(invalid(format!("expected sub-block count {expected_n} outside [1, {hi}]")))
    }
}

/// Upper bound on Δ_K(ε) and whether ε is compatible with `E_K(N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaRatio {
    /// `(1 + Kε)/E_K(N)`.
    pub upper: f64,
    /// `ε ≤ (E_K(N) − 1)/K`.
    pub feasible: bool,
}

pub fn delta_ratio(epsilon: f64, expected_n: f64, k: usize) -> Result<DeltaRatio> {
    if k == 0 {
        return Err(invalid("at least one relay is required"));
    }
    check_expected_n(expected_n, k)?;
    let kf = k as f64;
    Ok(DeltaRatio { upper: (1.0 + kf * epsilon) / expected_n, feasible: epsilon <= (expected_n - 1.0) / kf })
}

/// Bundle of the one-relay capacities at one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityReport {
    pub c_baf_no_fb: f64,
    pub c_baf_ir: f64,
    pub c_csb_ir: f64,
    pub delta_ratio_upper: f64,
    pub expected_n: f64,
}

pub fn capacity_report(variances: &LinkVariances, params: &SystemParams, mode: ExpectedNMode) -> Result<CapacityReport> {
    let expected_n = expected_n_one_relay(variances, params, mode)?;
    let c_baf_no_fb = c_eps_baf_no_feedback(variances, params.snr, params.epsilon)?;
    Ok(CapacityReport {
        c_baf_no_fb,
        c_baf_ir: 2.0 / expected_n * c_baf_no_fb,
        c_csb_ir: c_eps_cutset(variances, params.snr, params.epsilon, 1)?,
        delta_ratio_upper: delta_ratio(params.epsilon, expected_n, 1)?.upper,
        expected_n,
    })
}

/// `n` equally spaced relay positions strictly inside `(0, 1)`: `i/(n+1)`, `i = 1..=n`.
pub fn relay_grid(n: usize) -> Vec<f64> {
    let step = (n + 1) as f64;
    (1..=n).map(|i| i as f64 / step).collect()
}

/// `2σ_sd²σ_rd²σ_sr²/(σ_rd² + σ_sr²)` for a relay at `d` on a unit segment.
pub fn placement_objective(position: f64, pathloss_exponent: f64) -> f64 {
    let sr = position.powf(-pathloss_exponent);
    let rd = (1.0 - position).powf(-pathloss_exponent);
    2.0 * rd * sr / (rd + sr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub position: f64,
    pub index: usize,
    pub objective: f64,
}

/// Grid search for the relay position maximizing the one-relay ε-outage capacity.
///
/// The grid has an odd number of points so that it contains the midpoint.
pub fn optimal_relay_position(pathloss_exponent: f64, grid_resolution: usize) -> Result<Placement> {
    if !(pathloss_exponent > 1.0 && pathloss_exponent.is_finite()) {
        return Err(invalid(format!("path-loss exponent must exceed 1, got {pathloss_exponent}")));
    }
    if grid_resolution < 101 || grid_resolution.is_multiple_of(2) {
        return Err(invalid(format!("grid must have an odd number of points >= 101, got {grid_resolution}")));
    }
    let mut best = Placement { position: f64::NAN, index: 0, objective: f64::NEG_INFINITY };
    for (index, position) in relay_grid(grid_resolution).into_iter().enumerate() {
        let objective = placement_objective(position, pathloss_exponent);
        if objective > best.objective {
            best = Placement { position, index, objective };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinBound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluates `min{x, y} ≥ xy/(x + y + δ)`.
pub fn min_bound_check(x: f64, y: f64, delta: f64) -> Result<MinBound> {
    if !(x > 0.0 && y > 0.0 && delta > 0.0) {
        return Err(invalid(format!("min bound needs positive arguments, got ({x}, {y}, {delta})")));
    }
    let lhs = x.min(y);
    let rhs = x * y / (x + y + delta);
    Ok(MinBound { lhs, rhs, holds: lhs >= rhs })
}

/// `α'_K = g_sd + Σ min(g_rd, g_sr)`, an upper bound on the channel aggregate.
pub fn aggregate_min_bound(draw: &ChannelDraw) -> f64 {
    draw.g_sr.iter().zip(&draw.g_rd).fold(draw.g_sd, |acc, (&sr, &rd)| acc + sr.min(rd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::TauPolicy;
    use approx::assert_relative_eq;

    fn params(snr: f64, rate: f64, epsilon: f64, k: usize) -> SystemParams {
        SystemParams::new(snr, rate, epsilon, k, TauPolicy::SqrtRSnr).unwrap()
    }

    #[test]
    fn capacity_of_zero_channel_is_zero() {
        assert_eq!(instantaneous_capacity(&ChannelDraw::zeros(2), &params(1.0, 0.01, 0.01, 2), 0.1), 0.0);
    }

    #[test]
    fn capacity_hand_value() {
        // 0.05 * log2(1 + 10/2.1)
        let d = ChannelDraw::new(0.0, vec![1.0], vec![1.0]);
        let c = instantaneous_capacity(&d, &params(1.0, 0.01, 0.01, 1), 0.1);
        assert_relative_eq!(c, 0.126_327_290_724_791_7, max_relative = 1e-12);
    }

    #[test]
    fn dead_relay_leaves_direct_link() {
        let d = ChannelDraw::new(0.7, vec![0.0], vec![3.0]);
        let (snr, tau) = (0.5, 0.2);
        let c = instantaneous_capacity(&d, &params(snr, 0.01, 0.01, 1), tau);
        assert_relative_eq!(c, tau / 2.0 * (1.0 + 0.7 * snr / tau).log2(), max_relative = 1e-14);
    }

    #[test]
    fn exact_threshold_one_relay() {
        let g = outage_threshold_g(&params(1.0, 0.01, 0.01, 1), 1, ThresholdMode::Exact).unwrap();
        assert_relative_eq!(g, 0.014_869_835_499_703_5, max_relative = 1e-12);
    }

    #[test]
    fn linearized_threshold_two_relays() {
        let g = outage_threshold_g(&params(1.0, 0.01, 0.01, 2), 2, ThresholdMode::Linearized).unwrap();
        assert_relative_eq!(g, 0.020_794_415_416_798_36, max_relative = 1e-12);
    }

    #[test]
    fn exact_threshold_approaches_two_ln2() {
        let target = 2.0 * std::f64::consts::LN_2;
        let mut last = f64::INFINITY;
        for &ratio in &[1e-2, 1e-4, 1e-6] {
            let snr = 0.5;
            let g = outage_threshold_g(&params(snr, ratio * snr, 0.01, 1), 1, ThresholdMode::Exact).unwrap();
            let err = (g * snr / (ratio * snr) - target).abs();
            assert!(err < last, "error {err} did not decrease from {last}");
            last = err;
        }
        assert!(last < 1e-2);
    }

    #[test]
    fn lemma_constants() {
        assert_eq!(lemma1_constant(1.0, 1.0, 1.0).unwrap().value, 1.0);
        assert_eq!(lemma1_constant(2.0, 1.0, 1.0).unwrap().value, 0.5);
        assert_eq!(lemma1_constant(1.0, 2.0, 2.0).unwrap().value, 0.5);
        assert!(lemma1_constant(0.0, 1.0, 1.0).is_err());
        assert!(lemma1_constant(1.0, -2.0, 1.0).is_err());
    }

    #[test]
    fn no_feedback_capacity_values() {
        let unit = LinkVariances::unit(1);
        // ½ log2(1.01)
        assert_relative_eq!(c_eps_baf_no_feedback(&unit, 0.1, 0.01).unwrap(), 0.007_177_646_488_535, max_relative = 1e-10);
        assert_eq!(c_eps_baf_no_feedback(&unit, 0.1, 0.0).unwrap(), 0.0);
        let v = LinkVariances::one_relay(1.0, 4.0, 4.0).unwrap();
        // ½ log2(1 + √0.08)
        assert_relative_eq!(c_eps_baf_no_feedback(&v, 1.0, 0.02).unwrap(), 0.179_672_147_238_998, max_relative = 1e-10);
    }

    #[test]
    fn expected_n_exact_from_cdf() {
        let unit = LinkVariances::unit(1);
        let en = expected_n_one_relay(&unit, &params(0.1, 0.001, 0.01, 1), ExpectedNMode::Exact).unwrap();
        assert_relative_eq!(en, 1.014_759_825_447_945, max_relative = 1e-12);
        let en0 = expected_n_one_relay(&unit, &params(0.1, 0.0, 0.01, 1), ExpectedNMode::Exact).unwrap();
        assert_eq!(en0, 1.0);
    }

    #[test]
    fn expected_n_paper_approx_and_clamp() {
        let unit = LinkVariances::unit(1);
        let en = expected_n_one_relay(&unit, &params(1.0, 0.009, 0.001, 1), ExpectedNMode::PaperApprox).unwrap();
        assert_relative_eq!(en, 1.012_984_255_368_000_6, max_relative = 1e-12);
        let big = expected_n_one_relay(&unit, &params(0.1, 0.5, 0.001, 1), ExpectedNMode::PaperApprox).unwrap();
        assert_eq!(big, 2.0);
    }

    #[test]
    fn incremental_scaling_limits() {
        let unit = LinkVariances::unit(1);
        let base = c_eps_baf_no_feedback(&unit, 0.1, 0.01).unwrap();
        assert_eq!(c_eps_baf_incremental_given_n(&unit, 0.1, 0.01, 1.0).unwrap(), 2.0 * base);
        assert_eq!(c_eps_baf_incremental_given_n(&unit, 0.1, 0.01, 2.0).unwrap(), base);
        assert!(c_eps_baf_incremental_given_n(&unit, 0.1, 0.01, 2.5).is_err());
        let p = params(0.1, base, 0.01, 1);
        let ir = c_eps_baf_incremental(&unit, &p, ExpectedNMode::Exact).unwrap();
        assert!(ir > base && ir < 2.0 * base);
    }

    #[test]
    fn cutset_values() {
        let unit1 = LinkVariances::unit(1);
        // log2(1.01)/1.01
        assert_relative_eq!(c_eps_cutset(&unit1, 0.1, 0.01, 1).unwrap(), 0.014_213_161_363_435_7, max_relative = 1e-10);
        // log2(1 + 0.0015^{1/3})/1.002
        let unit2 = LinkVariances::unit(2);
        assert_relative_eq!(c_eps_cutset(&unit2, 1.0, 0.001, 2).unwrap(), 0.156_047_530_407_512, max_relative = 1e-10);
        let ratio = c_eps_cutset(&unit1, 0.1, 1e-9, 1).unwrap() / c_eps_baf_no_feedback(&unit1, 0.1, 1e-9).unwrap();
        assert_relative_eq!(ratio, 2.0, max_relative = 1e-8);
    }

    #[test]
    fn k_relay_bounds() {
        let unit2 = LinkVariances::unit(2);
        let c = c_eps_baf_k(&unit2, 1.0, 0.001, 2).unwrap();
        assert_relative_eq!(c, 0.052_119_875_156_109_1, max_relative = 1e-10);
        assert_eq!(c_eps_baf_k(&unit2, 1.0, 0.0, 2).unwrap(), 0.0);
        let p = params(1.0, 0.01, 0.001, 2);
        assert_eq!(c_eps_baf_ir_k(&unit2, &p, 3.0).unwrap(), c);
        assert_relative_eq!(c_eps_baf_ir_k(&unit2, &p, 1.0).unwrap(), 3.0 * c, max_relative = 1e-15);
        assert_relative_eq!(c_eps_baf_ir_k(&unit2, &p, 1.5).unwrap(), 0.104_239_750_312_218, max_relative = 1e-10);
        assert!(c_eps_baf_ir_k(&unit2, &p, 0.9).is_err());
        assert!(c_eps_baf_ir_k(&unit2, &p, 3.1).is_err());
    }

    #[test]
    fn k_equals_one_reduces_exactly() {
        let v = LinkVariances::one_relay(0.7, 2.3, 5.1).unwrap();
        assert_eq!(c_eps_baf_k(&v, 0.37, 0.004, 1).unwrap(), c_eps_baf_no_feedback(&v, 0.37, 0.004).unwrap());
    }

    #[test]
    fn delta_values() {
        let d = delta_ratio(0.001, 1.012_984_255_368_000_6, 1).unwrap();
        assert_relative_eq!(d.upper, 0.988_169_356_725_443_8, max_relative = 1e-12);
        assert!(d.feasible);
        let eq = delta_ratio(0.01, 1.01, 1).unwrap();
        assert_relative_eq!(eq.upper, 1.0, max_relative = 1e-15);
        let d2 = delta_ratio(0.001, 1.5, 2).unwrap();
        assert_relative_eq!(d2.upper, 0.668, max_relative = 1e-15);
        let infeasible = delta_ratio(0.1, 1.05, 1).unwrap();
        assert!(!infeasible.feasible && infeasible.upper > 1.0);
    }

    #[test]
    fn midpoint_is_optimal() {
        for &alpha in &[2.0, 3.0, 4.0, 5.0] {
            let p = optimal_relay_position(alpha, 201).unwrap();
            assert_eq!(p.position, 0.5);
            assert_eq!(p.index, 100);
        }
        assert!(optimal_relay_position(3.0, 200).is_err());
        assert!(optimal_relay_position(3.0, 99).is_err());
        assert!(optimal_relay_position(1.0, 201).is_err());
    }

    #[test]
    fn placement_objective_is_symmetric() {
        for &alpha in &[2.0, 3.3, 5.0] {
            for &d in &[0.05, 0.2, 0.41] {
                assert_relative_eq!(placement_objective(d, alpha), placement_objective(1.0 - d, alpha), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn min_bound_values() {
        let b = min_bound_check(1.0, 1.0, 0.01).unwrap();
        assert_eq!(b.lhs, 1.0);
        assert_relative_eq!(b.rhs, 1.0 / 2.01, max_relative = 1e-15);
        assert!(b.holds);
        let far = min_bound_check(2.0, 1e12, 0.01).unwrap();
        assert!(far.holds && (far.rhs - 2.0).abs() < 1e-9);
        assert!(min_bound_check(0.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn min_aggregate_dominates() {
        let d = ChannelDraw::new(0.3, vec![0.5, 2.0], vec![1.5, 0.1]);
        assert!(aggregate_min_bound(&d) >= d.aggregate(1e-9));
        assert_relative_eq!(aggregate_min_bound(&d), 0.9, max_relative = 1e-15);
    }
}
