use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EncoderConfig, EncoderSurrogate, FieldNormalizer, Regressor};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "ihanas-encoder-surrogate/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

/// Provenance of the training run that produced the weights.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckpointMeta {
    pub split_seed: Option<u64>,
    pub train_fraction: Option<f64>,
    pub train_seed: Option<u64>,
    pub label_source: Option<String>,
}

/// Self-describing encoder snapshot: hyperparameters, normalizer and named
/// tensors. Floats round-trip exactly through the JSON text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: EncoderConfig,
    pub normalizer: FieldNormalizer,
    #[serde(default)]
    pub meta: CheckpointMeta,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_encoder(s: &EncoderSurrogate, meta: CheckpointMeta) -> Self {
        let tensors = s
            .tensors()
            .iter()
            .map(|t| TensorRecord {
                name: t.name.clone(),
                shape: [t.rows, t.cols],
                data: s.params()[t.range()].to_vec(),
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.to_owned(),
            config: s.config().clone(),
            normalizer: s.normalizer().clone(),
            meta,
            tensors,
        }
    }

    /// Rebuilds the encoder, checking every tensor name and shape against the
    /// layout implied by the stored hyperparameters.
    pub fn to_encoder(&self) -> Result<EncoderSurrogate> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Parse(format!(
                "unknown checkpoint format {:?}",
                self.format
            )));
        }
        if self
            .normalizer
            .min
            .iter()
            .zip(&self.normalizer.max)
            .any(|(lo, hi)| !(lo <= hi))
        {
            return Err(Error::Parse("normalizer has min > max".into()));
        }
        // Compare against the stored data before allocating anything sized
        // by the (untrusted) hyperparameters.
        let stored: usize = self.tensors.iter().map(|t| t.data.len()).sum();
        if super::encoder::checked_param_count(&self.config) != Some(stored) {
            return Err(Error::Parse(format!(
                "{stored} stored parameters do not match the declared encoder size"
            )));
        }
        let probe = EncoderSurrogate::from_parts(
            self.config.clone(),
            self.normalizer.clone(),
            vec![0.0; super::encoder_param_count(&self.config)],
        )?;
        let layout = probe.tensors();
        if layout.len() != self.tensors.len() {
            return Err(Error::Parse(format!(
                "{} tensors stored, {} expected",
                self.tensors.len(),
                layout.len()
            )));
        }
        let mut params = Vec::with_capacity(probe.param_count());
        for (want, got) in layout.iter().zip(&self.tensors) {
            if want.name != got.name
                || [want.rows, want.cols] != got.shape
                || got.data.len() != want.len()
            {
                return Err(Error::Parse(format!(
                    "tensor {:?} {:?} with {} values does not match {:?} {:?}",
                    got.name,
                    got.shape,
                    got.data.len(),
                    want.name,
                    [want.rows, want.cols]
                )));
            }
            params.extend_from_slice(&got.data);
        }
        EncoderSurrogate::from_parts(self.config.clone(), self.normalizer.clone(), params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{random_genome, GlobalConfig, SpaceRanges};
    use crate::surrogate::Dropout;

    #[test]
    fn reload_predicts_bit_identically() {
        let gs: Vec<_> = (0..4)
            .map(|i| random_genome(&GlobalConfig::default(), &SpaceRanges::default(), 100 + i))
            .collect();
        let norm = FieldNormalizer::fit(&gs).unwrap();
        let s = EncoderSurrogate::new(EncoderConfig::default(), norm, 12).unwrap();
        let ck = Checkpoint::from_encoder(
            &s,
            CheckpointMeta {
                split_seed: Some(3),
                ..Default::default()
            },
        );
        let back = Checkpoint::from_json(&ck.to_json())
            .unwrap()
            .to_encoder()
            .unwrap();
        assert_eq!(back, s);
        for g in &gs {
            let x = s.featurize(g).unwrap();
            assert_eq!(
                s.forward(&x, Dropout::On { seed: 1 }).unwrap().to_bits(),
                back.forward(&x, Dropout::On { seed: 1 }).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn tampered_shapes_are_rejected() {
        let g = random_genome(&GlobalConfig::default(), &SpaceRanges::default(), 1);
        let norm = FieldNormalizer::fit([&g]).unwrap();
        let cfg = EncoderConfig {
            d_enc: 8,
            n_heads: 2,
            ..Default::default()
        };
        let s = EncoderSurrogate::new(cfg, norm, 0).unwrap();
        let mut ck = Checkpoint::from_encoder(&s, CheckpointMeta::default());
        ck.tensors[3].shape = [1, 1];
        assert!(ck.to_encoder().is_err());
        let mut ck = Checkpoint::from_encoder(&s, CheckpointMeta::default());
        ck.tensors.pop();
        assert!(ck.to_encoder().is_err());
        let mut ck = Checkpoint::from_encoder(&s, CheckpointMeta::default());
        ck.format = "other".into();
        assert!(ck.to_encoder().is_err());
        let mut ck = Checkpoint::from_encoder(&s, CheckpointMeta::default());
        ck.config.d_enc = usize::MAX / 2;
        assert!(ck.to_encoder().is_err());
        let mut ck = Checkpoint::from_encoder(&s, CheckpointMeta::default());
        ck.config.max_len = 1 << 40;
        assert!(ck.to_encoder().is_err());
    }

    #[test]
    fn seed_checkpoint_in_fuzz_corpus_loads() {
        let path = concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../fuzz/corpus/checkpoint/tiny.json"
        );
        let ck = Checkpoint::load(Path::new(path)).unwrap();
        assert_eq!(ck.to_encoder().unwrap().param_count(), 257);
    }
}
