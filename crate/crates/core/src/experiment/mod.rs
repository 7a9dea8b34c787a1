//! Experiment driver behind the `baf` command-line tool.
//!
//! Every command turns an [`ExperimentConfig`] into a list of [`ResultRow`]s
//! in sweep order; [`write_rows`] serialises them as CSV or JSON lines.

mod config;

use std::io::Write;

use serde::Serialize;

pub use config::{
    db_to_linear, ExperimentConfig, LinkSpec, OutputFormat, Settings, SnrSweep, Subcommand, DEFAULT_G_SEQUENCE,
    DEFAULT_GRID, DEFAULT_PATHLOSS, DEFAULT_SEED, DEFAULT_TRIALS, KNOWN_KEYS,
};

use crate::analytic::{
    c_eps_baf_incremental, c_eps_baf_k, c_eps_baf_no_feedback, c_eps_cutset, delta_ratio, expected_n_one_relay,
    lemma1_constant, outage_threshold_g, ExpectedNMode, ThresholdMode,
};
use crate::channel::{resolve_tau, SystemParams, TauPolicy};
use crate::error::{invalid, Error, Result};
use crate::montecarlo::{
    empirical_eps_outage_capacity, lemma1_ratio_experiment, placement_scan, quadrature_outage_oracle, run_blocks,
    LemmaCoupling, TrialPlan,
};
use crate::protocol::RelayOrder;

/// Smallest outage probability the `outage` command reports.
pub const MIN_REPORTED_OUTAGE: f64 = 1e-6;

pub const CSV_HEADER: &str = "snr_db,rate,epsilon,k_relays,metric_name,value,stderr,n_trials,seed";

/// Names of every quantity a command can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// One-relay ε-outage capacity without feedback.
    CBafNoFb,
    /// One-relay ε-outage capacity with incremental relaying, exact E(N).
    CBafIr,
    /// One-relay cut-set bound with incremental relaying.
    CCsb,
    /// K-relay capacity bound without feedback.
    CBafK,
    /// K-relay cut-set bound.
    CCsbK,
    ExpectedNExact,
    /// E(N) from the low-SNR approximation, clamped to [1, 2].
    ExpectedNPaper,
    /// Outage threshold on the aggregate gain in the selected `--mode`.
    GThreshold,
    /// Upper bound on Δ(ε) from the approximate E(N).
    DeltaUpper,
    /// Emitted instead of `delta_upper` when ε exceeds Pr(S→D fails); the value is that probability.
    DeltaInfeasible,
    POut,
    /// Quadrature value of the one-relay outage probability.
    POutOracle,
    ExpectedNMc,
    CEpsEmpirical,
    OutageAtCapacity,
    Lemma1G,
    Lemma1NoiseTerm,
    Lemma1Ratio,
    Lemma1Constant,
    PlacementArgmaxAnalytic,
    PlacementArgmaxMc,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::CBafNoFb => "c_baf_no_fb",
            Metric::CBafIr => "c_baf_ir",
            Metric::CCsb => "c_csb",
            Metric::CBafK => "c_baf_k",
            Metric::CCsbK => "c_csb_k",
            Metric::ExpectedNExact => "expected_n_exact",
            Metric::ExpectedNPaper => "expected_n_paper",
            Metric::GThreshold => "g_threshold",
            Metric::DeltaUpper => "delta_upper",
            Metric::DeltaInfeasible => "delta_infeasible",
            Metric::POut => "p_out",
            Metric::POutOracle => "p_out_oracle",
            Metric::ExpectedNMc => "expected_n_mc",
            Metric::CEpsEmpirical => "c_eps_empirical",
            Metric::OutageAtCapacity => "outage_at_capacity",
            Metric::Lemma1G => "lemma1_g",
            Metric::Lemma1NoiseTerm => "lemma1_noise_term",
            Metric::Lemma1Ratio => "lemma1_ratio",
            Metric::Lemma1Constant => "lemma1_constant",
            Metric::PlacementArgmaxAnalytic => "placement_argmax_analytic",
            Metric::PlacementArgmaxMc => "placement_argmax_mc",
        }
    }
}

/// One output line. Empty fields are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub snr_db: Option<f64>,
    pub rate: Option<f64>,
    pub epsilon: Option<f64>,
    pub k_relays: Option<usize>,
    pub metric_name: Metric,
    pub value: f64,
    pub stderr: Option<f64>,
    pub n_trials: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Copy)]
struct Point {
    snr_db: Option<f64>,
    rate: Option<f64>,
    epsilon: Option<f64>,
    k_relays: Option<usize>,
}

impl Point {
    fn analytic(&self, metric: Metric, value: f64) -> ResultRow {
        ResultRow {
            snr_db: self.snr_db,
            rate: self.rate,
            epsilon: self.epsilon,
            k_relays: self.k_relays,
            metric_name: metric,
            value,
            stderr: None,
            n_trials: None,
            seed: None,
        }
    }

    fn simulated(&self, metric: Metric, value: f64, stderr: f64, plan: TrialPlan) -> ResultRow {
        ResultRow { stderr: Some(stderr), n_trials: Some(plan.n_trials), seed: Some(plan.master_seed), ..self.analytic(metric, value) }
    }
}

fn params_at(cfg: &ExperimentConfig, snr_db: f64, rate: f64, k: usize) -> Result<SystemParams> {
    let p = SystemParams::new(db_to_linear(snr_db), rate, cfg.epsilon, k, TauPolicy::SqrtRSnr)?;
    if resolve_tau(&p)?.clamped {
        eprintln!("warning: sqrt(R*SNR) > 1 at SNR={snr_db} dB, R={rate}; burst fraction clamped to 1");
    }
    Ok(p)
}

fn plan(cfg: &ExperimentConfig) -> TrialPlan {
    TrialPlan::new(cfg.n_trials, cfg.master_seed)
}

/// Runs the configured command.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    match cfg.subcommand {
        Subcommand::Analytic => cmd_analytic(cfg),
        Subcommand::Outage => cmd_outage(cfg),
        Subcommand::Capacity => cmd_capacity(cfg),
        Subcommand::Ratio => cmd_ratio(cfg),
        Subcommand::Lemma1 => cmd_lemma1(cfg),
        Subcommand::Placement => cmd_placement(cfg),
    }
}

/// Closed-form capacities and sub-block counts at every (SNR, rate) point.
///
/// One-relay metrics use the first relay; `c_baf_k` and `c_csb_k` use all
/// `K` relays.
pub fn cmd_analytic(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let v = cfg.links.variances()?;
    let k = cfg.k_relays;
    let mut rows = Vec::new();
    for snr_db in cfg.snr_sweep.points_db() {
        for &rate in &cfg.rates {
            let p1 = params_at(cfg, snr_db, rate, 1)?;
            let pk = SystemParams { k_relays: k, ..p1.clone() };
            let at = Point { snr_db: Some(snr_db), rate: Some(rate), epsilon: Some(cfg.epsilon), k_relays: Some(k) };
            let snr = p1.snr;
            rows.push(at.analytic(Metric::CBafNoFb, c_eps_baf_no_feedback(&v, snr, cfg.epsilon)?));
            rows.push(at.analytic(Metric::CBafIr, c_eps_baf_incremental(&v, &p1, ExpectedNMode::Exact)?));
            rows.push(at.analytic(Metric::CCsb, c_eps_cutset(&v, snr, cfg.epsilon, 1)?));
            rows.push(at.analytic(Metric::CBafK, c_eps_baf_k(&v, snr, cfg.epsilon, k)?));
            rows.push(at.analytic(Metric::CCsbK, c_eps_cutset(&v, snr, cfg.epsilon, k)?));
            rows.push(at.analytic(Metric::ExpectedNExact, expected_n_one_relay(&v, &p1, ExpectedNMode::Exact)?));
            rows.push(at.analytic(Metric::ExpectedNPaper, expected_n_one_relay(&v, &p1, ExpectedNMode::PaperApprox)?));
            rows.push(at.analytic(Metric::GThreshold, outage_threshold_g(&pk, k, cfg.mode)?));
        }
    }
    Ok(rows)
}

/// Δ(ε) upper bound per (SNR, rate) using the approximate E(N).
pub fn cmd_ratio(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    if cfg.k_relays != 1 {
        return Err(invalid("ratio is defined for a single relay"));
    }
    let v = cfg.links.variances()?;
    let mut rows = Vec::new();
    for snr_db in cfg.snr_sweep.points_db() {
        for &rate in &cfg.rates {
            let p = params_at(cfg, snr_db, rate, 1)?;
            let at = Point { snr_db: Some(snr_db), rate: Some(rate), epsilon: Some(cfg.epsilon), k_relays: Some(1) };
            let en = expected_n_one_relay(&v, &p, ExpectedNMode::PaperApprox)?;
            let delta = delta_ratio(cfg.epsilon, en, 1)?;
            if delta.feasible {
                rows.push(at.analytic(Metric::DeltaUpper, delta.upper));
            } else {
                eprintln!("warning: epsilon={} exceeds Pr(S->D fails)={} at SNR={snr_db} dB, R={rate}", cfg.epsilon, en - 1.0);
                rows.push(at.analytic(Metric::DeltaInfeasible, en - 1.0));
            }
        }
    }
    Ok(rows)
}

/// Simulated outage probability and sub-block count, with the quadrature
/// value alongside for one relay.
pub fn cmd_outage(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let v = cfg.links.variances()?;
    let k = cfg.k_relays;
    let plan = plan(cfg);
    let mut rows = Vec::new();
    for snr_db in cfg.snr_sweep.points_db() {
        for &rate in &cfg.rates {
            let p = params_at(cfg, snr_db, rate, k)?;
            let at = Point { snr_db: Some(snr_db), rate: Some(rate), epsilon: None, k_relays: Some(k) };
            let tally = run_blocks(&v, &p, RelayOrder::FixedIndex, plan)?;
            let outage = tally.outage();
            if rate > 0.0 && outage.mean < MIN_REPORTED_OUTAGE {
                return Err(invalid(format!(
                    "simulated outage {} at SNR={snr_db} dB, R={rate} is below {MIN_REPORTED_OUTAGE:e}; \
                     plain Monte Carlo cannot resolve it, raise the rate, lower the SNR or use the analytic command",
                    outage.mean
                )));
            }
            rows.push(at.simulated(Metric::POut, outage.mean, outage.stderr, plan));
            let en = tally.expected_n();
            rows.push(at.simulated(Metric::ExpectedNMc, en.mean, en.stderr, plan));
            if k == 1 {
                let t = outage_threshold_g(&p, 1, ThresholdMode::Exact)?;
                let x = resolve_tau(&p)?.value / p.snr;
                rows.push(at.analytic(Metric::POutOracle, quadrature_outage_oracle(&v, t, x)?));
            }
        }
    }
    Ok(rows)
}

/// Empirical ε-outage capacity per SNR, next to the closed-form bound.
pub fn cmd_capacity(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let v = cfg.links.variances()?;
    let k = cfg.k_relays;
    let plan = plan(cfg);
    let mut rows = Vec::new();
    for snr_db in cfg.snr_sweep.points_db() {
        let p = SystemParams::new(db_to_linear(snr_db), 0.0, cfg.epsilon, k, TauPolicy::SqrtRSnr)?;
        let at = Point { snr_db: Some(snr_db), rate: None, epsilon: Some(cfg.epsilon), k_relays: Some(k) };
        let r = empirical_eps_outage_capacity(&v, &p, plan)?;
        let half_width = 0.5 * (r.bracketing.1 - r.bracketing.0);
        rows.push(at.simulated(Metric::CEpsEmpirical, r.rate, half_width, plan));
        let se = (r.achieved_outage * (1.0 - r.achieved_outage) / plan.n_trials as f64).sqrt();
        rows.push(at.simulated(Metric::OutageAtCapacity, r.achieved_outage, se, plan));
        rows.push(at.analytic(Metric::CBafK, c_eps_baf_k(&v, p.snr, cfg.epsilon, k)?));
    }
    Ok(rows)
}

/// Lemma-1 ratio along the configured threshold sequence for the first relay.
pub fn cmd_lemma1(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let (su, sv, sw) = cfg.links.variances()?.first_relay()?;
    let coupling = match cfg.x_over_g {
        Some(c) => LemmaCoupling::Proportional(c),
        None => LemmaCoupling::BurstPolicy,
    };
    let plan = plan(cfg);
    let points = lemma1_ratio_experiment(su, sv, sw, &cfg.g_sequence, coupling, plan)?;
    let at = Point { snr_db: None, rate: None, epsilon: None, k_relays: Some(1) };
    let mut rows = Vec::new();
    for pt in &points {
        rows.push(at.analytic(Metric::Lemma1G, pt.g));
        rows.push(at.analytic(Metric::Lemma1NoiseTerm, pt.noise_term));
        rows.push(at.simulated(Metric::Lemma1Ratio, pt.ratio.mean, pt.ratio.stderr, plan));
    }
    rows.push(at.analytic(Metric::Lemma1Constant, lemma1_constant(su, sv, sw)?.value));
    Ok(rows)
}

/// Relay position maximising the analytic and the empirical capacity, per SNR.
pub fn cmd_placement(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    if cfg.k_relays != 1 {
        return Err(invalid("placement sweeps a single relay"));
    }
    let plan = plan(cfg);
    let mut rows = Vec::new();
    for snr_db in cfg.snr_sweep.points_db() {
        let p = SystemParams::new(db_to_linear(snr_db), 0.0, cfg.epsilon, 1, TauPolicy::SqrtRSnr)?;
        let scan = placement_scan(cfg.pathloss_exponent, cfg.grid_resolution, &p, plan)?;
        let at = Point { snr_db: Some(snr_db), rate: None, epsilon: Some(cfg.epsilon), k_relays: Some(1) };
        rows.push(at.analytic(Metric::PlacementArgmaxAnalytic, scan.analytic.position));
        let step = 1.0 / (cfg.grid_resolution + 1) as f64;
        rows.push(at.simulated(Metric::PlacementArgmaxMc, scan.mc_position, step, plan));
    }
    Ok(rows)
}

/// Writes rows as CSV (with header) or JSON lines.
pub fn write_rows<W: Write>(rows: &[ResultRow], format: OutputFormat, out: W) -> Result<()> {
    let io = |e: std::io::Error| invalid(format!("cannot write output: {e}"));
    match format {
        OutputFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
            for row in rows {
                w.serialize(row).map_err(|e| invalid(format!("cannot write output: {e}")))?;
            }
            if rows.is_empty() {
                w.write_record(CSV_HEADER.split(',')).map_err(|e| invalid(format!("cannot write output: {e}")))?;
            }
            w.flush().map_err(io)?;
        }
        OutputFormat::Jsonl => {
            let mut out = std::io::BufWriter::new(out);
            for row in rows {
                serde_json::to_writer(&mut out, row).map_err(|e| invalid(format!("cannot write output: {e}")))?;
                out.write_all(b"\n").map_err(io)?;
            }
            out.flush().map_err(io)?;
        }
    }
    Ok(())
}

/// Process exit code for an error: 1 for invalid parameters, 2 for convergence failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter(_) => 1,
        Error::Convergence(_) => 2,
    }
}
