//! Incremental-relaying state machine for one fading block.
//!
//! The block is split into `K + 1` sub-blocks. The source bursts first; after
//! every sub-block the destination tries to decode from the accumulated
//! channel aggregate and returns one feedback bit. On `FB = 0` the next relay
//! in line forwards its amplified receive signal, adding
//! `g_rd·g_sr/(g_rd + g_sr + τ/SNR)` to the aggregate. On `FB = 1` the block
//! ends and the source moves on. If the destination still cannot decode
//! after relay `K`, the block is in outage.
//!
//! Decoding succeeds at sub-block `n` iff
//! `(τ/(K+1))·log₂(1 + (SNR/τ)·α_n) ≥ R`, which is evaluated as the
//! equivalent comparison `α_n ≥ τ(2^{(K+1)R/τ} − 1)/SNR` against a threshold
//! computed once per operating point.

use smallvec::SmallVec;

use crate::analytic::exact_threshold;
use crate::channel::{ChannelDraw, SystemParams};

/// Order in which relays are asked to forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelayOrder {
    #[default]
    FixedIndex,
    /// Descending incremental aggregate term, ties broken by lower index.
    BestRelayFirst,
}

pub type FeedbackTrace = SmallVec<[bool; 8]>;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutcome {
    pub decoded: bool,
    /// Sub-blocks consumed, `N ∈ [1, K+1]`.
    pub sub_blocks_used: usize,
    /// Aggregate after the last sub-block used.
    pub final_aggregate: f64,
    /// One bit per decode attempt; `true` is a positive acknowledgement.
    pub feedback_trace: FeedbackTrace,
}

impl BlockOutcome {
    pub fn outage(&self) -> bool {
        !self.decoded
    }
}

/// Permutation of relay indices giving the forwarding order.
pub fn relay_order(draw: &ChannelDraw, policy: RelayOrder, noise_term: f64) -> SmallVec<[usize; 8]> {
    let mut order: SmallVec<[usize; 8]> = (0..draw.k_relays()).collect();
    if policy == RelayOrder::BestRelayFirst {
        // stable sort keeps lower indices first on ties
        order.sort_by(|&a, &b| {
            draw.relay_term(b, noise_term).partial_cmp(&draw.relay_term(a, noise_term)).unwrap_or(std::cmp::Ordering::Equal)
        });
    }
    order
}

/// Decode rule of one operating point `(R, SNR, τ)`, reusable across draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoder {
    threshold: f64,
    noise_term: f64,
    order: RelayOrder,
}

impl Decoder {
    pub fn new(params: &SystemParams, tau: f64, order: RelayOrder) -> Self {
        let slots = (params.k_relays + 1) as f64;
        Self {
            threshold: exact_threshold(params.rate, params.snr, tau, slots),
            noise_term: tau / params.snr,
            order,
        }
    }

    /// Minimum aggregate the destination needs to decode.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// `τ/SNR`.
    pub fn noise_term(&self) -> f64 {
        self.noise_term
    }

    pub fn run(&self, draw: &ChannelDraw) -> BlockOutcome {
        let mut trace = FeedbackTrace::new();
        let mut aggregate = draw.g_sd;
        if aggregate >= self.threshold {
            trace.push(true);
            return BlockOutcome { decoded: true, sub_blocks_used: 1, final_aggregate: aggregate, feedback_trace: trace };
        }
        trace.push(false);
        let order = relay_order(draw, self.order, self.noise_term);
        for &k in &order {
            aggregate += draw.relay_term(k, self.noise_term);
            let decoded = aggregate >= self.threshold;
            trace.push(decoded);
            if decoded {
                return BlockOutcome { decoded, sub_blocks_used: trace.len(), final_aggregate: aggregate, feedback_trace: trace };
            }
        }
        BlockOutcome { decoded: false, sub_blocks_used: trace.len(), final_aggregate: aggregate, feedback_trace: trace }
    }

    /// Outage only, without building the trace.
    #[inline]
    pub fn is_outage(&self, draw: &ChannelDraw) -> bool {
        // relay order never changes the final aggregate
        draw.aggregate(self.noise_term) < self.threshold
    }
}

/// Runs the feedback protocol over one block with relays in index order.
pub fn simulate_block(draw: &ChannelDraw, params: &SystemParams, tau: f64) -> BlockOutcome {
    Decoder::new(params, tau, RelayOrder::FixedIndex).run(draw)
}

pub fn simulate_block_ordered(draw: &ChannelDraw, params: &SystemParams, tau: f64, order: RelayOrder) -> BlockOutcome {
    Decoder::new(params, tau, order).run(draw)
}
