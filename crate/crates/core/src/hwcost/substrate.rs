//! Roofline model of a single accelerator.
//!
//! Each decode step of a layer takes `max(compute, memory)` time, where the
//! DRAM traffic depends on the dataflow: weight-stationary keeps a share of
//! the weights resident, row-stationary cuts activation traffic, and a
//! flexible mapper picks whichever moves fewer bytes for that layer.

use serde::{Deserialize, Serialize};

use super::profile::{profile_genome, LayerProfile, Workload};
use super::HwMetrics;
use crate::error::{Error, Result};
use crate::genome::ArchGenome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dataflow {
    WeightStationary,
    RowStationary,
    Flexible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstrateSpec {
    pub name: String,
    pub macs: u64,
    pub sram_bytes: u64,
    pub dataflow: Dataflow,
    pub clock_hz: f64,
    pub e_mac_j: f64,
    pub e_sram_j_per_byte: f64,
    pub e_dram_j_per_byte: f64,
    pub dram_bw_bytes_per_s: f64,
    /// Fraction of SRAM-resident weight bytes still re-fetched per token
    /// under weight-stationary mapping.
    pub ws_weight_refetch: f64,
    /// Fraction of activation bytes that reach DRAM under row-stationary
    /// mapping.
    pub rs_activation_traffic: f64,
    #[serde(default = "one")]
    pub bytes_per_elem: u64,
}

fn one() -> u64 {
    1
}

const KIB: u64 = 1024;

impl SubstrateSpec {
    fn preset(
        name: &str,
        macs: u64,
        sram_bytes: u64,
        dataflow: Dataflow,
        clock_hz: f64,
        bw: f64,
    ) -> Self {
        Self {
            name: name.to_owned(),
            macs,
            sram_bytes,
            dataflow,
            clock_hz,
            e_mac_j: 0.2e-12,
            e_sram_j_per_byte: 2.0e-12,
            e_dram_j_per_byte: 80.0e-12,
            dram_bw_bytes_per_s: bw,
            ws_weight_refetch: 0.1,
            rs_activation_traffic: 0.25,
            bytes_per_elem: 1,
        }
    }

    /// 16x16 systolic array, 768 KB SRAM, weight-stationary.
    pub fn gemmini() -> Self {
        Self::preset(
            "gemmini",
            256,
            768 * KIB,
            Dataflow::WeightStationary,
            1.0e9,
            16.0e9,
        )
    }

    /// 14x12 PE array, ~200 KB SRAM, row-stationary.
    pub fn eyeriss() -> Self {
        Self::preset(
            "eyeriss",
            168,
            200 * KIB,
            Dataflow::RowStationary,
            0.5e9,
            8.0e9,
        )
    }

    /// 32x32 PE array, 200 KB shared buffer, flexible mapping.
    pub fn flat() -> Self {
        Self::preset("flat", 1024, 200 * KIB, Dataflow::Flexible, 1.0e9, 32.0e9)
    }

    /// 8 tiles x 16 cores x 16 MACs, 4 MB SRAM, weight-stationary.
    pub fn dxe() -> Self {
        Self::preset(
            "dxe",
            2048,
            4096 * KIB,
            Dataflow::WeightStationary,
            1.0e9,
            64.0e9,
        )
    }

    pub fn presets() -> Vec<Self> {
        vec![Self::gemmini(), Self::eyeriss(), Self::flat(), Self::dxe()]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Self::presets()
            .into_iter()
            .find(|s| s.name.eq_ignore_ascii_case(name))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.clock_hz,
            self.e_mac_j,
            self.e_sram_j_per_byte,
            self.e_dram_j_per_byte,
            self.dram_bw_bytes_per_s,
        ];
        if self.macs == 0
            || self.sram_bytes == 0
            || self.bytes_per_elem == 0
            || positive.iter().any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(Error::domain(format!(
                "substrate {:?}: every constant must be positive",
                self.name
            )));
        }
        for (what, v) in [
            ("ws_weight_refetch", self.ws_weight_refetch),
            ("rs_activation_traffic", self.rs_activation_traffic),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::domain(format!(
                    "substrate {:?}: {what} = {v} outside (0, 1]",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("substrate serializes")
    }

    fn weight_stationary_bytes(&self, p: &LayerProfile, kv: f64) -> f64 {
        let w = p.w as f64;
        let resident = if w > 0.0 {
            (self.sram_bytes as f64 / w).min(1.0)
        } else {
            1.0
        };
        let refetch = 1.0 - (1.0 - self.ws_weight_refetch) * resident;
        w * refetch + kv + p.a as f64
    }

    fn row_stationary_bytes(&self, p: &LayerProfile, kv: f64) -> f64 {
        p.w as f64 + kv + p.a as f64 * self.rs_activation_traffic
    }

    /// DRAM bytes per decode token for one layer.
    pub fn dram_bytes(&self, p: &LayerProfile, wl: &Workload) -> f64 {
        let kv = p.kappa as f64 * wl.decode_context() as f64;
        match self.dataflow {
            Dataflow::WeightStationary => self.weight_stationary_bytes(p, kv),
            Dataflow::RowStationary => self.row_stationary_bytes(p, kv),
            Dataflow::Flexible => self
                .weight_stationary_bytes(p, kv)
                .min(self.row_stationary_bytes(p, kv)),
        }
    }
}

/// `(E_tok, TTFT, TPOT)` for `g` on a single accelerator.
pub fn substrate_cost(g: &ArchGenome, spec: &SubstrateSpec, wl: &Workload) -> Result<HwMetrics> {
    spec.validate()?;
    wl.validate()?;
    let profiles = profile_genome(g, wl, spec.bytes_per_elem)?;
    if profiles.is_empty() {
        return Err(Error::domain("genome has no active layers"));
    }
    let rate = spec.macs as f64 * spec.clock_hz;
    let (mut tpot, mut ttft, mut energy) = (0.0, 0.0, 0.0);
    for p in &profiles {
        let bytes = spec.dram_bytes(p, wl);
        let onchip = p.w as f64 + p.kappa as f64 * wl.decode_context() as f64 + p.a as f64;
        tpot += (p.o as f64 / rate).max(bytes / spec.dram_bw_bytes_per_s);
        // Prefill streams each layer's weights once for the whole prompt.
        ttft +=
            (wl.prefill_len as f64 * p.o as f64 / rate).max(p.w as f64 / spec.dram_bw_bytes_per_s);
        energy += p.o as f64 * spec.e_mac_j
            + bytes * spec.e_dram_j_per_byte
            + onchip * spec.e_sram_j_per_byte;
    }
    Ok(HwMetrics::from_si(energy, ttft, tpot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{random_genome, GlobalConfig, LayerGene, SpaceRanges};
    use crate::metrics::dominates;

    fn genome(layers: &[LayerGene]) -> ArchGenome {
        ArchGenome::from_active(GlobalConfig::default(), layers)
    }

    fn metrics_vec(m: HwMetrics) -> [f64; 3] {
        [m.e_tok_uj, m.ttft_ms, m.tpot_ms]
    }

    #[test]
    fn presets_validate_and_round_trip() {
        for s in SubstrateSpec::presets() {
            s.validate().unwrap();
            assert_eq!(SubstrateSpec::from_toml(&s.to_toml()).unwrap(), s);
        }
        assert_eq!(SubstrateSpec::gemmini().macs, 256);
        assert_eq!(SubstrateSpec::dxe().sram_bytes, 4 * 1024 * 1024);
        assert!(SubstrateSpec::from_toml("name = 'x'").is_err());
        let bad = SubstrateSpec {
            macs: 0,
            ..SubstrateSpec::flat()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn memory_bound_ignores_macs_and_compute_bound_scales() {
        let g = genome(&[LayerGene::active(12, 12, 64, 64, 3072); 4]);
        let wl = Workload::default();
        let slow_mem = SubstrateSpec {
            dram_bw_bytes_per_s: 1e6,
            ..SubstrateSpec::gemmini()
        };
        let a = substrate_cost(&g, &slow_mem, &wl).unwrap();
        let b = substrate_cost(
            &g,
            &SubstrateSpec {
                macs: 512,
                ..slow_mem.clone()
            },
            &wl,
        )
        .unwrap();
        assert_eq!(a.tpot_ms, b.tpot_ms);

        let fast_mem = SubstrateSpec {
            dram_bw_bytes_per_s: 1e18,
            ..SubstrateSpec::gemmini()
        };
        let c = substrate_cost(&g, &fast_mem, &wl).unwrap();
        let d = substrate_cost(
            &g,
            &SubstrateSpec {
                macs: 512,
                ..fast_mem
            },
            &wl,
        )
        .unwrap();
        assert!((c.tpot_ms / d.tpot_ms - 2.0).abs() < 1e-12);
    }

    #[test]
    fn extra_layer_raises_everything() {
        let wl = Workload::default();
        for seed in 0..20 {
            let g = random_genome(&GlobalConfig::default(), &SpaceRanges::default(), seed);
            let Some(free) = g.layers.iter().position(|l| !l.mask) else {
                continue;
            };
            let mut bigger = g.clone();
            bigger.layers[free] = LayerGene {
                attn: seed % 2 == 0,
                ..LayerGene::active(4, 2, 64, 64, 512)
            };
            for s in SubstrateSpec::presets() {
                let a = metrics_vec(substrate_cost(&g, &s, &wl).unwrap());
                let b = metrics_vec(substrate_cost(&bigger, &s, &wl).unwrap());
                assert!(
                    a.iter().zip(&b).all(|(x, y)| x < y),
                    "{}: {a:?} vs {b:?}",
                    s.name
                );
            }
        }
    }

    #[test]
    fn substrates_can_disagree_on_dominance() {
        let wl = Workload::default();
        let gs: Vec<_> = (0..60)
            .map(|s| {
                random_genome(
                    &GlobalConfig {
                        max_layers: 8,
                        ..Default::default()
                    },
                    &SpaceRanges::default(),
                    s,
                )
            })
            .collect();
        let specs = SubstrateSpec::presets();
        let table: Vec<Vec<[f64; 3]>> = specs
            .iter()
            .map(|s| {
                gs.iter()
                    .map(|g| metrics_vec(substrate_cost(g, s, &wl).unwrap()))
                    .collect()
            })
            .collect();
        let mut found = false;
        'outer: for i in 0..gs.len() {
            for j in 0..gs.len() {
                for s in 0..specs.len() {
                    for t in 0..specs.len() {
                        if dominates(&table[s][i], &table[s][j])
                            && dominates(&table[t][j], &table[t][i])
                        {
                            found = true;
                            break 'outer;
                        }
                    }
                }
            }
        }
        assert!(found);
    }
}
