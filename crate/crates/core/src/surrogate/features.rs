use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{ArchGenome, LayerGene};

/// Number of scalar fields per layer token.
pub const N_FIELDS: usize = 9;

/// Field order of a token row.
pub const FIELD_NAMES: [&str; N_FIELDS] = [
    "n_h",
    "n_kv",
    "d_qk",
    "d_v",
    "d_mlp",
    "mask",
    "attn",
    "d_model",
    "block_size",
];

fn raw_fields(l: &LayerGene, g: &ArchGenome) -> [f64; N_FIELDS] {
    [
        l.n_h as f64,
        l.n_kv as f64,
        l.d_qk as f64,
        l.d_v as f64,
        l.d_mlp as f64,
        l.mask as u8 as f64,
        l.attn as u8 as f64,
        g.global.d_model as f64,
        g.global.block_size as f64,
    ]
}

/// Per-field min/max statistics of the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldNormalizer {
    pub min: [f64; N_FIELDS],
    pub max: [f64; N_FIELDS],
}

impl FieldNormalizer {
    /// Fits over every active layer of `genomes`.
    pub fn fit<'a>(genomes: impl IntoIterator<Item = &'a ArchGenome>) -> Result<Self> {
        let mut min = [f64::INFINITY; N_FIELDS];
        let mut max = [f64::NEG_INFINITY; N_FIELDS];
        for g in genomes {
            for (_, l) in g.active_layers() {
                for (k, v) in raw_fields(l, g).into_iter().enumerate() {
                    min[k] = min[k].min(v);
                    max[k] = max[k].max(v);
                }
            }
        }
        if min.iter().any(|v| v.is_infinite()) {
            return Err(Error::domain(
                "cannot fit a normalizer on zero active layers",
            ));
        }
        Ok(Self { min, max })
    }

    /// Maps `v` of field `k` linearly so the training range becomes `[0, 1]`.
    /// Degenerate fields map to 0.
    pub fn apply(&self, k: usize, v: f64) -> f64 {
        let span = self.max[k] - self.min[k];
        if span > 0.0 {
            (v - self.min[k]) / span
        } else {
            0.0
        }
    }
}

/// Packed, normalized token rows padded to the encoder length.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    /// `max_len x N_FIELDS`; padding rows are zero.
    pub tokens: Array2<f64>,
    /// `true` for real tokens.
    pub mask: Vec<bool>,
}

impl Features {
    pub fn active_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| i)
    }

    pub fn active_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

/// Packs the active layers of `g` in slot order and pads to `max_len`.
pub fn featurize(g: &ArchGenome, norm: &FieldNormalizer, max_len: usize) -> Result<Features> {
    let active: Vec<&LayerGene> = g.active_layers().map(|(_, l)| l).collect();
    if active.len() > max_len {
        return Err(Error::domain(format!(
            "{} active layers exceed the encoder length {max_len}",
            active.len()
        )));
    }
    let mut tokens = Array2::zeros((max_len, N_FIELDS));
    let mut mask = vec![false; max_len];
    for (p, l) in active.into_iter().enumerate() {
        for (k, v) in raw_fields(l, g).into_iter().enumerate() {
            tokens[[p, k]] = norm.apply(k, v);
        }
        mask[p] = true;
    }
    Ok(Features { tokens, mask })
}
