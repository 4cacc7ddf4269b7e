//! Labeled genome corpora and the synthetic validation-loss oracle.
//!
//! Labels produced here are synthetic: a closed-form function of parameter
//! count, depth and identity-attention fraction plus seeded Gaussian noise.
//! They stand in for real pretraining runs.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{count_params, random_genome_with, ArchGenome, GlobalConfig, SpaceRanges};
use crate::util;

pub const DEFAULT_NOISE_STD: f64 = 0.02;

/// Synthetic validation loss of `g`. Noise is seeded by the genome
/// fingerprint and `noise_seed`; pass `noise_std = 0` to disable it.
pub fn synth_oracle(g: &ArchGenome, noise_seed: u64, noise_std: f64) -> f64 {
    let p = count_params(g, 0) as f64;
    let active = g.active_count();
    let identity = g.active_layers().filter(|(_, l)| !l.attn).count();
    let f_id = if active == 0 {
        0.0
    } else {
        identity as f64 / active as f64
    };
    let mut y = 4.2 - 0.30 * (p / 1e6).ln_1p() + 0.5 / (active as f64).sqrt() + 0.05 * f_id;
    if noise_std > 0.0 {
        let mut rng = util::rng(util::mix_seed(g.fingerprint(), noise_seed));
        y += Normal::new(0.0, noise_std)
            .expect("finite std")
            .sample(&mut rng);
    }
    y
}

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub genome: ArchGenome,
    /// `null` for a failed or missing measurement.
    pub val_loss: Option<f64>,
}

/// Train/test index sets; disjoint and sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledCorpus {
    pub rows: Vec<(ArchGenome, f64)>,
    /// Rows discarded for non-finite or missing labels.
    pub dropped: usize,
}

impl LabeledCorpus {
    pub fn from_records(records: impl IntoIterator<Item = CorpusRecord>) -> Self {
        let mut out = Self::default();
        for r in records {
            match r.val_loss {
                Some(y) if y.is_finite() => out.rows.push((r.genome, y)),
                _ => out.dropped += 1,
            }
        }
        out
    }

    /// One JSON record per line; blank lines are skipped.
    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: CorpusRecord = serde_json::from_str(line)
                .map_err(|e| Error::Parse(format!("corpus line {}: {e}", i + 1)))?;
            r.genome
                .check_slots()
                .map_err(|e| Error::Parse(format!("corpus line {}: {e}", i + 1)))?;
            records.push(r);
        }
        Ok(Self::from_records(records))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (g, y) in &self.rows {
            let rec = CorpusRecord {
                genome: g.clone(),
                val_loss: Some(*y),
            };
            let value = serde_json::to_value(&rec).expect("record serializes");
            out.push_str(&value.to_string());
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Seeded shuffle, then the first `round(train_fraction * n)` rows (at
    /// least one) go to training.
    pub fn split(&self, seed: u64, train_fraction: f64) -> Result<Split> {
        if !(train_fraction > 0.0 && train_fraction <= 1.0) {
            return Err(Error::domain(format!(
                "train fraction {train_fraction} outside (0, 1]"
            )));
        }
        if self.rows.is_empty() {
            return Err(Error::domain("cannot split an empty corpus"));
        }
        let n = self.rows.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut util::rng(seed));
        let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n);
        let mut train = idx[..n_train].to_vec();
        let mut test = idx[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok(Split { train, test })
    }
}

/// `n` random genomes labeled by [`synth_oracle`].
pub fn synthesize_corpus(
    n: usize,
    global: &GlobalConfig,
    ranges: &SpaceRanges,
    seed: u64,
    noise_std: f64,
) -> LabeledCorpus {
    let mut rng = util::rng(seed);
    let rows = (0..n)
        .map(|_| {
            let g = random_genome_with(global, ranges, &mut rng);
            let y = synth_oracle(&g, seed, noise_std);
            (g, y)
        })
        .collect();
    LabeledCorpus { rows, dropped: 0 }
}
