//! Learned validation-loss predictors over architecture genomes.
//!
//! [`EncoderSurrogate`] is a small transformer over packed layer tokens;
//! [`MlpBaseline`] is a flat predictor on the padded feature vector. Both
//! implement [`Regressor`], so training, MC-dropout and fine-tuning are shared.

mod checkpoint;
mod corpus;
mod encoder;
mod features;
mod layout;
mod mlp;
mod train;

pub use checkpoint::{Checkpoint, CheckpointMeta, TensorRecord, CHECKPOINT_FORMAT};
pub use corpus::{
    synth_oracle, synthesize_corpus, CorpusRecord, LabeledCorpus, Split, DEFAULT_NOISE_STD,
};
pub use encoder::{encoder_param_count, EncoderConfig, EncoderSurrogate};
pub use features::{featurize, Features, FieldNormalizer, FIELD_NAMES, N_FIELDS};
pub use layout::Slot;
pub use mlp::{MlpBaseline, MlpConfig};
pub use train::{
    fine_tune, mc_predict, mean_l1, replay_split, train, EpochStats, FineTuneConfig,
    FineTuneReport, Sample, TrainConfig, TrainReport,
};

use crate::error::Result;
use crate::genome::ArchGenome;

/// Whether stochastic layers are active for a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dropout {
    Off,
    /// Masks are drawn from a generator seeded with `seed`.
    On {
        seed: u64,
    },
}

/// A scalar regressor with a flat parameter vector.
pub trait Regressor: Clone {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn normalizer(&self) -> &FieldNormalizer;
    fn max_len(&self) -> usize;
    fn forward(&self, x: &Features, dropout: Dropout) -> Result<f64>;

    /// Runs forward, asks `dloss` for the loss derivative at the prediction,
    /// and accumulates `dloss * d(pred)/d(params)` into `grad`.
    fn forward_backward(
        &self,
        x: &Features,
        dropout: Dropout,
        dloss: &mut dyn FnMut(f64) -> f64,
        grad: &mut [f64],
    ) -> Result<f64>;

    fn featurize(&self, g: &ArchGenome) -> Result<Features> {
        featurize(g, self.normalizer(), self.max_len())
    }

    /// Deterministic prediction with dropout off.
    fn predict(&self, g: &ArchGenome) -> Result<f64> {
        self.forward(&self.featurize(g)?, Dropout::Off)
    }
}
