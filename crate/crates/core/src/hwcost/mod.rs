//! Hardware cost backends: `HW(genome, workload) -> (E_tok, TTFT, TPOT)`.
//!
//! Two backends share [`HwBackend`]: an analytical roofline over a single
//! accelerator ([`SubstrateSpec`]) and a multi-chip ring co-search
//! ([`RingConfig`]) that picks a chip template and layer partition per genome.

mod profile;
mod ring;
mod substrate;

pub use profile::{profile_genome, profile_layer, LayerProfile, Workload, MAX_TOKENS};
pub use ring::{
    balanced_contiguous_pack, chip_grid_search, chip_grid_sweep, greedy_contiguous_partition,
    ring_simulate, ring_top_k, ChipBase, ChipGrid, ChipLimits, ChipTemplate, GridOutcome,
    PackResult, RingCandidate, RingConfig, RingPlan, Stage,
};
pub use substrate::{substrate_cost, Dataflow, SubstrateSpec};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::genome::ArchGenome;

/// Per-token hardware objectives. Infeasible designs carry `inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HwMetrics {
    pub e_tok_uj: f64,
    pub ttft_ms: f64,
    pub tpot_ms: f64,
}

impl HwMetrics {
    pub const INFEASIBLE: Self = Self {
        e_tok_uj: f64::INFINITY,
        ttft_ms: f64::INFINITY,
        tpot_ms: f64::INFINITY,
    };

    /// From SI units (J, s, s).
    pub fn from_si(e_tok_j: f64, ttft_s: f64, tpot_s: f64) -> Self {
        Self {
            e_tok_uj: e_tok_j * 1e6,
            ttft_ms: ttft_s * 1e3,
            tpot_ms: tpot_s * 1e3,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.e_tok_uj.is_finite() && self.ttft_ms.is_finite() && self.tpot_ms.is_finite()
    }
}

/// Result of one backend call.
#[derive(Debug, Clone, PartialEq)]
pub struct HwEval {
    pub metrics: HwMetrics,
    pub feasible: bool,
    /// Ring backend only: the retained (chip, plan) pairs.
    pub ring: Vec<RingCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HwBackend {
    Substrate(SubstrateSpec),
    Ring(RingConfig),
}

impl HwBackend {
    pub fn name(&self) -> String {
        match self {
            Self::Substrate(s) => s.name.clone(),
            Self::Ring(_) => "ring".to_owned(),
        }
    }

    pub fn evaluate(&self, g: &ArchGenome, wl: &Workload) -> Result<HwEval> {
        match self {
            Self::Substrate(spec) => {
                let metrics = substrate_cost(g, spec, wl)?;
                Ok(HwEval {
                    metrics,
                    feasible: true,
                    ring: Vec::new(),
                })
            }
            Self::Ring(cfg) => {
                let ring = chip_grid_search(g, wl, cfg)?;
                // The genome's objectives come from its best retained pair,
                // ordered by energy, then TPOT, then TTFT.
                let best = ring.iter().min_by(|a, b| {
                    let key = |c: &RingCandidate| {
                        [c.metrics.e_tok_uj, c.metrics.tpot_ms, c.metrics.ttft_ms]
                    };
                    key(a).partial_cmp(&key(b)).expect("finite ring metrics")
                });
                let metrics = best.map_or(HwMetrics::INFEASIBLE, |c| c.metrics);
                Ok(HwEval {
                    metrics,
                    feasible: best.is_some(),
                    ring,
                })
            }
        }
    }
}
