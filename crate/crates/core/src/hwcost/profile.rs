use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{ArchGenome, GlobalConfig, LayerGene};

/// Upper limit on either workload length.
pub const MAX_TOKENS: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    pub prefill_len: u64,
    pub decode_len: u64,
}

impl Default for Workload {
    fn default() -> Self {
        Self {
            prefill_len: 256,
            decode_len: 256,
        }
    }
}

impl Workload {
    /// Default for the ring co-search.
    pub fn ring() -> Self {
        Self {
            prefill_len: 512,
            decode_len: 256,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.prefill_len == 0 || self.decode_len == 0 {
            return Err(Error::domain(
                "prefill and decode lengths must be at least 1",
            ));
        }
        if self.prefill_len > MAX_TOKENS || self.decode_len > MAX_TOKENS {
            return Err(Error::domain(format!(
                "prefill and decode lengths are limited to {MAX_TOKENS} tokens"
            )));
        }
        Ok(())
    }

    /// Mean context seen by a decode step.
    pub fn decode_context(&self) -> u64 {
        self.prefill_len + self.decode_len / 2
    }

    /// Longest context that must be held in the KV cache.
    pub fn max_context(&self) -> u64 {
        self.prefill_len + self.decode_len
    }
}

/// Per-layer resource footprint. All quantities are integers so partition
/// budgets compare exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerProfile {
    /// Weight bytes.
    pub w: u64,
    /// KV-cache bytes per token.
    pub kappa: u64,
    /// MACs per decode token.
    pub o: u64,
    /// Peak activation bytes (double-buffered).
    pub a: u64,
}

pub fn profile_layer(
    gene: &LayerGene,
    global: &GlobalConfig,
    wl: &Workload,
    bytes_per_elem: u64,
) -> Result<LayerProfile> {
    if !gene.mask {
        return Err(Error::domain("cannot profile a pruned layer"));
    }
    let weights = gene.weight_count(global.d_model);
    let head_width = gene.d_qk as u64 + gene.d_v as u64;
    let (kappa, attn_ops) = if gene.attn {
        let kappa = (gene.n_kv as u64)
            .saturating_mul(head_width)
            .saturating_mul(bytes_per_elem);
        let ops = (gene.n_h as u64)
            .saturating_mul(head_width)
            .saturating_mul(wl.decode_context());
        (kappa, ops)
    } else {
        (0, 0)
    };
    let widest = (global.d_model as u64)
        .max(gene.n_h as u64 * gene.d_v as u64)
        .max(gene.d_mlp as u64);
    Ok(LayerProfile {
        w: weights.saturating_mul(bytes_per_elem),
        kappa,
        o: weights.saturating_add(attn_ops),
        a: widest.saturating_mul(bytes_per_elem).saturating_mul(2),
    })
}

/// Profiles of the active layers in slot order.
pub fn profile_genome(
    g: &ArchGenome,
    wl: &Workload,
    bytes_per_elem: u64,
) -> Result<Vec<LayerProfile>> {
    g.active_layers()
        .map(|(_, l)| profile_layer(l, &g.global, wl, bytes_per_elem))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huge_shapes_saturate_instead_of_wrapping() {
        let g = GlobalConfig {
            d_model: u32::MAX,
            ..Default::default()
        };
        let l = LayerGene::active(u32::MAX, u32::MAX, u32::MAX, u32::MAX, u32::MAX);
        let wl = Workload {
            prefill_len: MAX_TOKENS,
            decode_len: MAX_TOKENS,
        };
        wl.validate().unwrap();
        let p = profile_layer(&l, &g, &wl, u64::MAX).unwrap();
        assert_eq!((p.w, p.o, p.a), (u64::MAX, u64::MAX, u64::MAX));
        let too_long = Workload {
            prefill_len: MAX_TOKENS + 1,
            ..wl
        };
        assert!(too_long.validate().is_err());
    }

    #[test]
    fn kv_bytes_follow_group_width() {
        let g = GlobalConfig::default();
        let l = LayerGene::active(6, 3, 64, 96, 1024);
        let p = profile_layer(&l, &g, &Workload::default(), 1).unwrap();
        assert_eq!(p.kappa, 480);
        let id = LayerGene { attn: false, ..l };
        assert_eq!(
            profile_layer(&id, &g, &Workload::default(), 1)
                .unwrap()
                .kappa,
            0
        );
        assert!(profile_layer(&LayerGene::pruned(), &g, &Workload::default(), 1).is_err());
    }

    #[test]
    fn mlp_width_is_linear() {
        let g = GlobalConfig::default();
        let wl = Workload::default();
        let base = profile_layer(&LayerGene::active(4, 2, 64, 64, 0), &g, &wl, 1).unwrap();
        let one = profile_layer(&LayerGene::active(4, 2, 64, 64, 512), &g, &wl, 1).unwrap();
        let two = profile_layer(&LayerGene::active(4, 2, 64, 64, 1024), &g, &wl, 1).unwrap();
        assert_eq!(two.w - base.w, 2 * (one.w - base.w));
        assert_eq!(two.o - base.o, 2 * (one.o - base.o));
        // attention ops at the mean decode context of 384
        assert_eq!(base.o - base.w, 4 * 128 * 384);
        assert_eq!(one.a, 2 * 768);
    }
}
