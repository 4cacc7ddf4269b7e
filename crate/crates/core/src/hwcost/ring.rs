//! Multi-chip ring backend: contiguous layer partitioning over homogeneous
//! chips, a token-level pipeline simulator and the chip-template grid.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::profile::{profile_genome, LayerProfile, Workload};
use super::HwMetrics;
use crate::error::{Error, Result};
use crate::genome::ArchGenome;
use crate::metrics::{crowding_distance, pareto_front};

const KIB: u64 = 1024;

/// Per-chip capacities seen by the partitioner: weight memory, KV cache and
/// scratchpad in bytes, plus the context length the KV cache must hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChipLimits {
    pub w: u64,
    pub k: u64,
    pub a: u64,
    pub t: u64,
}

impl ChipLimits {
    fn admits(&self, l: &LayerProfile) -> bool {
        l.w <= self.w && l.kappa.saturating_mul(self.t) <= self.k && l.a <= self.a
    }
}

/// Scans layers in order, growing the open stage while weight, KV and ops
/// budgets hold and sealing it otherwise. `None` if some layer alone does not
/// fit the chip or the budget.
pub fn greedy_contiguous_partition(
    profiles: &[LayerProfile],
    chip: &ChipLimits,
    budget: u64,
) -> Option<Vec<Range<usize>>> {
    let mut stages = Vec::new();
    let mut start = 0;
    let (mut w, mut k, mut o) = (0u64, 0u64, 0u64);
    for (i, l) in profiles.iter().enumerate() {
        let dk = l.kappa.saturating_mul(chip.t);
        if l.w > chip.w || dk > chip.k || l.o > budget || l.a > chip.a {
            return None;
        }
        let fits = w.saturating_add(l.w) <= chip.w
            && k.saturating_add(dk) <= chip.k
            && o.saturating_add(l.o) <= budget;
        if fits {
            w += l.w;
            k += dk;
            o += l.o;
        } else {
            stages.push(start..i);
            start = i;
            (w, k, o) = (l.w, dk, l.o);
        }
    }
    if start < profiles.len() {
        stages.push(start..profiles.len());
    }
    Some(stages)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackResult {
    pub stages: Vec<Range<usize>>,
    /// Smallest accepted ops budget.
    pub budget: u64,
}

impl PackResult {
    /// Largest per-stage ops total.
    pub fn bottleneck(&self, profiles: &[LayerProfile]) -> u64 {
        self.stages
            .iter()
            .map(|r| profiles[r.clone()].iter().map(|l| l.o).sum())
            .max()
            .unwrap_or(0)
    }
}

/// Binary search for the smallest per-stage ops budget whose greedy
/// partition exists and uses at most `cap` stages.
pub fn balanced_contiguous_pack(
    profiles: &[LayerProfile],
    chip: &ChipLimits,
    cap: usize,
) -> Option<PackResult> {
    if profiles.is_empty() || cap == 0 || !profiles.iter().all(|l| chip.admits(l)) {
        return None;
    }
    let mut lo = profiles.iter().map(|l| l.o).max().unwrap_or(0);
    let mut hi = profiles.iter().fold(0u64, |s, l| s.saturating_add(l.o));
    let mut best = None;
    while lo <= hi {
        let mid = lo + (hi - lo) / 2;
        match greedy_contiguous_partition(profiles, chip, mid) {
            Some(p) if p.len() <= cap => {
                best = Some(PackResult {
                    stages: p,
                    budget: mid,
                });
                if mid == 0 {
                    break;
                }
                hi = mid - 1;
            }
            _ => lo = mid + 1,
        }
    }
    best
}

/// Constants shared by every chip in the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChipBase {
    pub k_core_kb: u32,
    pub scratchpad_bytes: u64,
    pub clock_hz: f64,
    pub e_mac_j: f64,
    pub e_sram_j_per_byte: f64,
    pub hop_latency_s: f64,
    pub hop_energy_j_per_byte: f64,
    /// Upper limit on cores per chip when deriving the tile split.
    pub max_cores: u32,
    pub bytes_per_elem: u64,
}

impl Default for ChipBase {
    fn default() -> Self {
        Self {
            k_core_kb: 8,
            scratchpad_bytes: 64 * KIB,
            clock_hz: 1.0e9,
            e_mac_j: 0.2e-12,
            e_sram_j_per_byte: 2.0e-12,
            hop_latency_s: 1.0e-6,
            hop_energy_j_per_byte: 20.0e-12,
            max_cores: 4096,
            bytes_per_elem: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChipGrid {
    pub n_mac: Vec<u32>,
    pub w_core_kb: Vec<u32>,
    pub n_chips_max: Vec<usize>,
}

impl Default for ChipGrid {
    fn default() -> Self {
        Self {
            n_mac: vec![16, 32, 64],
            w_core_kb: vec![24, 48, 96, 192, 384],
            n_chips_max: vec![8, 16, 32],
        }
    }
}

impl ChipGrid {
    pub fn len(&self) -> usize {
        self.n_mac.len() * self.w_core_kb.len() * self.n_chips_max.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(n_mac, w_core_kb, n_chips_max)` in sweep order.
    pub fn points(&self) -> impl Iterator<Item = (u32, u32, usize)> + '_ {
        self.n_mac.iter().flat_map(move |&m| {
            self.w_core_kb
                .iter()
                .flat_map(move |&w| self.n_chips_max.iter().map(move |&c| (m, w, c)))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RingConfig {
    pub grid: ChipGrid,
    pub chip: ChipBase,
    pub top_k: usize,
}

impl Default for RingConfig {
    fn default() -> Self {
        Self {
            grid: ChipGrid::default(),
            chip: ChipBase::default(),
            top_k: 3,
        }
    }
}

impl RingConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.chip;
        let positive = [c.clock_hz, c.e_mac_j, c.e_sram_j_per_byte];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite()))
            || c.hop_latency_s < 0.0
            || c.hop_energy_j_per_byte < 0.0
        {
            return Err(Error::domain("ring chip constants must be positive"));
        }
        if c.k_core_kb == 0 || c.scratchpad_bytes == 0 || c.max_cores == 0 || c.bytes_per_elem == 0
        {
            return Err(Error::domain("ring chip sizes must be positive"));
        }
        let g = &self.grid;
        if g.is_empty()
            || g.n_mac.contains(&0)
            || g.w_core_kb.contains(&0)
            || g.n_chips_max.contains(&0)
        {
            return Err(Error::domain(
                "ring grid axes must be non-empty and positive",
            ));
        }
        if self.top_k == 0 {
            return Err(Error::domain("top_k must be at least 1"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("ring config serializes")
    }
}

/// One concrete chip: grid point plus the derived tile split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipTemplate {
    pub n_mac: u32,
    pub w_core_kb: u32,
    pub k_core_kb: u32,
    pub n_dxt: u32,
    pub n_vac: u32,
    pub scratchpad_bytes: u64,
    pub max_context: u64,
    pub n_chips_max: usize,
    pub clock_hz: f64,
    pub e_mac_j: f64,
    pub e_sram_j_per_byte: f64,
    pub hop_latency_s: f64,
    pub hop_energy_j_per_byte: f64,
}

impl ChipTemplate {
    /// SRAM of the reference single-chip template: 128 cores x (24 + 8) KB.
    pub const REFERENCE_SRAM_BYTES: u64 = 128 * 32 * KIB;

    pub fn cores(&self) -> u64 {
        self.n_dxt as u64 * self.n_vac as u64
    }

    pub fn limits(&self) -> ChipLimits {
        ChipLimits {
            w: self.cores().saturating_mul(self.w_core_kb as u64 * KIB),
            k: self.cores().saturating_mul(self.k_core_kb as u64 * KIB),
            a: self.scratchpad_bytes,
            t: self.max_context,
        }
    }

    /// MACs per second.
    pub fn throughput(&self) -> f64 {
        self.cores() as f64 * self.n_mac as f64 * self.clock_hz
    }

    pub fn sram_bytes(&self) -> u64 {
        self.cores()
            .saturating_mul((self.w_core_kb as u64 + self.k_core_kb as u64) * KIB)
    }

    /// Silicon area relative to the reference template.
    pub fn area(&self) -> f64 {
        self.sram_bytes() as f64 / Self::REFERENCE_SRAM_BYTES as f64
    }
}

/// Power-of-2 split of `cores` with `n_vac >= n_dxt`.
fn tile_split(cores: u64) -> (u32, u32) {
    let m = cores.trailing_zeros();
    (1 << (m / 2), 1 << m.div_ceil(2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    /// Indices into the genome's active-layer list.
    pub layers: Range<usize>,
    pub w: u64,
    /// KV bytes per token.
    pub kappa: u64,
    pub o: u64,
    pub a: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingPlan {
    pub chip: ChipTemplate,
    pub stages: Vec<Stage>,
    pub budget: u64,
    /// Activation bytes passed between neighbouring chips per token.
    pub hop_bytes: u64,
}

impl RingPlan {
    pub fn from_pack(
        chip: ChipTemplate,
        pack: &PackResult,
        profiles: &[LayerProfile],
        hop_bytes: u64,
    ) -> Self {
        let stages = pack
            .stages
            .iter()
            .map(|r| {
                let ls = &profiles[r.clone()];
                Stage {
                    layers: r.clone(),
                    w: ls.iter().map(|l| l.w).sum(),
                    kappa: ls.iter().map(|l| l.kappa).sum(),
                    o: ls.iter().map(|l| l.o).sum(),
                    a: ls.iter().map(|l| l.a).max().unwrap_or(0),
                }
            })
            .collect();
        Self {
            chip,
            stages,
            budget: pack.budget,
            hop_bytes,
        }
    }

    pub fn n_chips(&self) -> usize {
        self.stages.len()
    }

    pub fn area_total(&self) -> f64 {
        self.n_chips() as f64 * self.chip.area()
    }

    /// Per-stage table: layer range, resources and decode latency.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "stage",
            "first_layer",
            "last_layer",
            "w_bytes",
            "kv_bytes",
            "ops",
            "act_bytes",
            "latency_s",
        ])?;
        let rate = self.chip.throughput();
        for (i, s) in self.stages.iter().enumerate() {
            w.write_record([
                i.to_string(),
                s.layers.start.to_string(),
                (s.layers.end - 1).to_string(),
                s.w.to_string(),
                (s.kappa * self.chip.max_context).to_string(),
                s.o.to_string(),
                s.a.to_string(),
                format!("{:e}", s.o as f64 / rate),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Token-level pipelined ring. Single-chip plans pay no hop terms.
pub fn ring_simulate(plan: &RingPlan, wl: &Workload) -> HwMetrics {
    let c = &plan.chip;
    let rate = c.throughput();
    let n = plan.n_chips();
    let hops = if n > 1 { n as f64 } else { 0.0 };
    let slowest = plan
        .stages
        .iter()
        .map(|s| s.o as f64 / rate)
        .fold(0.0, f64::max);
    let total_ops: f64 = plan.stages.iter().map(|s| s.o as f64).sum();
    let tpot = slowest + if n > 1 { c.hop_latency_s } else { 0.0 };
    let ttft =
        wl.prefill_len as f64 * total_ops / rate + (n.saturating_sub(1)) as f64 * c.hop_latency_s;
    let ctx = wl.decode_context() as f64;
    let energy: f64 = plan
        .stages
        .iter()
        .map(|s| s.o as f64 * c.e_mac_j + (s.w as f64 + s.kappa as f64 * ctx) * c.e_sram_j_per_byte)
        .sum::<f64>()
        + hops * plan.hop_bytes as f64 * c.hop_energy_j_per_byte;
    HwMetrics::from_si(energy, ttft, tpot)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingCandidate {
    pub plan: RingPlan,
    pub metrics: HwMetrics,
    pub area_total: f64,
}

impl RingCandidate {
    /// `(TTFT, TPOT, E_tok, A_total)`.
    pub fn objectives(&self) -> [f64; 4] {
        [
            self.metrics.ttft_ms,
            self.metrics.tpot_ms,
            self.metrics.e_tok_uj,
            self.area_total,
        ]
    }
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Smallest power-of-2 core count for which the layers pack within the
/// chip cap, starting from the count implied by the largest layer and by the
/// whole model spread across `cap` chips.
fn pack_with_derived_cores(
    profiles: &[LayerProfile],
    base: &ChipBase,
    n_mac: u32,
    w_core_kb: u32,
    cap: usize,
    max_context: u64,
) -> Option<(ChipTemplate, PackResult)> {
    let w_core = w_core_kb as u64 * KIB;
    let k_core = base.k_core_kb as u64 * KIB;
    let max_w = profiles.iter().map(|l| l.w).max()?;
    let max_k = profiles
        .iter()
        .map(|l| l.kappa.saturating_mul(max_context))
        .max()?;
    let sum_w = profiles.iter().fold(0u64, |s, l| s.saturating_add(l.w));
    let sum_k = profiles.iter().fold(0u64, |s, l| {
        s.saturating_add(l.kappa.saturating_mul(max_context))
    });
    let cap64 = cap as u64;
    let need = [
        ceil_div(max_w, w_core),
        ceil_div(max_k, k_core),
        ceil_div(sum_w, w_core.saturating_mul(cap64)),
        ceil_div(sum_k, k_core.saturating_mul(cap64)),
        1,
    ]
    .into_iter()
    .max()?;
    let mut cores = need.checked_next_power_of_two()?;
    while cores <= base.max_cores as u64 {
        let (n_dxt, n_vac) = tile_split(cores);
        let chip = ChipTemplate {
            n_mac,
            w_core_kb,
            k_core_kb: base.k_core_kb,
            n_dxt,
            n_vac,
            scratchpad_bytes: base.scratchpad_bytes,
            max_context,
            n_chips_max: cap,
            clock_hz: base.clock_hz,
            e_mac_j: base.e_mac_j,
            e_sram_j_per_byte: base.e_sram_j_per_byte,
            hop_latency_s: base.hop_latency_s,
            hop_energy_j_per_byte: base.hop_energy_j_per_byte,
        };
        if let Some(p) = balanced_contiguous_pack(profiles, &chip.limits(), cap) {
            return Some((chip, p));
        }
        cores *= 2;
    }
    None
}

/// One grid point and what it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub n_mac: u32,
    pub w_core_kb: u32,
    pub n_chips_max: usize,
    /// `None` when no core count within the limit packs the genome.
    pub candidate: Option<RingCandidate>,
}

/// Evaluates every grid point, in grid order.
pub fn chip_grid_sweep(
    g: &ArchGenome,
    wl: &Workload,
    cfg: &RingConfig,
) -> Result<Vec<GridOutcome>> {
    cfg.validate()?;
    wl.validate()?;
    let profiles = profile_genome(g, wl, cfg.chip.bytes_per_elem)?;
    if profiles.is_empty() {
        return Err(Error::domain("genome has no active layers"));
    }
    let hop_bytes = (g.global.d_model as u64).saturating_mul(cfg.chip.bytes_per_elem);
    Ok(cfg
        .grid
        .points()
        .map(|(n_mac, w_core_kb, cap)| {
            let candidate = pack_with_derived_cores(
                &profiles,
                &cfg.chip,
                n_mac,
                w_core_kb,
                cap,
                wl.max_context(),
            )
            .map(|(chip, pack)| {
                let plan = RingPlan::from_pack(chip, &pack, &profiles, hop_bytes);
                let metrics = ring_simulate(&plan, wl);
                let area_total = plan.area_total();
                RingCandidate {
                    plan,
                    metrics,
                    area_total,
                }
            });
            GridOutcome {
                n_mac,
                w_core_kb,
                n_chips_max: cap,
                candidate,
            }
        })
        .collect())
}

/// Pareto filter on `(TTFT, TPOT, E_tok, A_total)`, then up to `k`
/// survivors by descending crowding distance.
pub fn ring_top_k(all: Vec<RingCandidate>, k: usize) -> Vec<RingCandidate> {
    let objectives: Vec<[f64; 4]> = all.iter().map(RingCandidate::objectives).collect();
    let front = pareto_front(&objectives);
    let front_pts: Vec<[f64; 4]> = front.iter().map(|&i| objectives[i]).collect();
    let crowd = crowding_distance(&front_pts);
    let mut order: Vec<usize> = (0..front.len()).collect();
    order.sort_by(|&a, &b| crowd[b].total_cmp(&crowd[a]));
    order.truncate(k);
    let mut picked: Vec<Option<RingCandidate>> = all.into_iter().map(Some).collect();
    order
        .into_iter()
        .map(|i| picked[front[i]].take().expect("distinct indices"))
        .collect()
}

/// Sweeps the chip grid and returns [`ring_top_k`] of the feasible points.
/// An empty list means no grid point can host the genome.
pub fn chip_grid_search(
    g: &ArchGenome,
    wl: &Workload,
    cfg: &RingConfig,
) -> Result<Vec<RingCandidate>> {
    let all = chip_grid_sweep(g, wl, cfg)?
        .into_iter()
        .filter_map(|o| o.candidate)
        .collect();
    Ok(ring_top_k(all, cfg.top_k))
}
