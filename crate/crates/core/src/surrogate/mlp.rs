use ndarray::{Array1, ArrayView1, Axis};
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::encoder::{gelu, gelu_grad};
use super::features::{Features, N_FIELDS};
use super::layout::{Allocator, Slot};
use super::{Dropout, FieldNormalizer, Regressor};
use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: usize,
    pub max_len: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            max_len: 40,
        }
    }
}

/// Two GELU hidden layers over the flattened padded token matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpBaseline {
    config: MlpConfig,
    normalizer: FieldNormalizer,
    slots: [Slot; 6],
    params: Vec<f64>,
}

impl MlpBaseline {
    pub fn new(config: MlpConfig, normalizer: FieldNormalizer, seed: u64) -> Result<Self> {
        if config.hidden == 0 || config.max_len == 0 {
            return Err(Error::domain("MLP sizes must be positive"));
        }
        let input = config.max_len * N_FIELDS;
        let h = config.hidden;
        let mut a = Allocator::default();
        let slots = [
            a.take("fc1.weight", input, h),
            a.take("fc1.bias", 1, h),
            a.take("fc2.weight", h, h),
            a.take("fc2.bias", 1, h),
            a.take("out.weight", h, 1),
            a.take("out.bias", 1, 1),
        ];
        let mut params = vec![0.0; a.total];
        let mut rng = util::rng(seed);
        for (i, fan_in) in [input, input, h, h, h, h].into_iter().enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            for v in &mut params[slots[i].range()] {
                *v = dist.sample(&mut rng);
            }
        }
        Ok(Self {
            config,
            normalizer,
            slots,
            params,
        })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check(&self, x: &Features) -> Result<ArrayView1<'_, f64>> {
        if x.tokens.dim() != (self.config.max_len, N_FIELDS) {
            return Err(Error::Dimension(format!(
                "token matrix {:?} for MLP length {}",
                x.tokens.dim(),
                self.config.max_len
            )));
        }
        if x.active_count() == 0 {
            return Err(Error::domain("all-padding input"));
        }
        Ok(self.slots[5].vec(&self.params))
    }

    fn flat(x: &Features) -> Array1<f64> {
        x.tokens.iter().copied().collect()
    }
}

impl Regressor for MlpBaseline {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn normalizer(&self) -> &FieldNormalizer {
        &self.normalizer
    }

    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn forward(&self, x: &Features, _dropout: Dropout) -> Result<f64> {
        let b3 = self.check(x)?[0];
        let p = &self.params;
        let s = &self.slots;
        let z1 = Self::flat(x).dot(&s[0].mat(p)) + s[1].vec(p);
        let z2 = z1.mapv(gelu).dot(&s[2].mat(p)) + s[3].vec(p);
        Ok(z2.mapv(gelu).dot(&s[4].mat(p).column(0)) + b3)
    }

    fn forward_backward(
        &self,
        x: &Features,
        _dropout: Dropout,
        dloss: &mut dyn FnMut(f64) -> f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let b3 = self.check(x)?[0];
        let p = &self.params;
        let s = &self.slots;
        let input = Self::flat(x);
        let z1 = input.dot(&s[0].mat(p)) + s[1].vec(p);
        let a1 = z1.mapv(gelu);
        let z2 = a1.dot(&s[2].mat(p)) + s[3].vec(p);
        let a2 = z2.mapv(gelu);
        let y = a2.dot(&s[4].mat(p).column(0)) + b3;
        let dy = dloss(y);
        if dy == 0.0 {
            return Ok(y);
        }
        s[4].vec_mut(grad).scaled_add(dy, &a2);
        grad[s[5].offset] += dy;
        let dz2 = s[4].vec(p).to_owned() * dy * z2.mapv(gelu_grad);
        outer_add(&mut s[2].mat_mut(grad), &a1, &dz2);
        s[3].vec_mut(grad).scaled_add(1.0, &dz2);
        let dz1 = s[2].mat(p).dot(&dz2) * z1.mapv(gelu_grad);
        outer_add(&mut s[0].mat_mut(grad), &input, &dz1);
        s[1].vec_mut(grad).scaled_add(1.0, &dz1);
        Ok(y)
    }
}

fn outer_add(m: &mut ndarray::ArrayViewMut2<f64>, col: &Array1<f64>, row: &Array1<f64>) {
    for (mut r, &c) in m.axis_iter_mut(Axis(0)).zip(col) {
        if c != 0.0 {
            r.scaled_add(c, row);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{random_genome, GlobalConfig, SpaceRanges};
    use crate::surrogate::featurize;

    #[test]
    fn count_and_gradient() {
        let gs: Vec<_> = (0..3)
            .map(|i| random_genome(&GlobalConfig::default(), &SpaceRanges::default(), i))
            .collect();
        let norm = FieldNormalizer::fit(&gs).unwrap();
        let fs: Vec<_> = gs
            .iter()
            .map(|g| featurize(g, &norm, 40).unwrap())
            .collect();
        let cfg = MlpConfig {
            hidden: 6,
            max_len: 40,
        };
        let m = MlpBaseline::new(cfg, norm.clone(), 3).unwrap();
        assert_eq!(m.param_count(), 360 * 6 + 6 + 36 + 6 + 6 + 1);
        assert_eq!(
            MlpBaseline::new(MlpConfig::default(), norm, 0)
                .unwrap()
                .param_count(),
            62_849
        );

        let mut grad = vec![0.0; m.param_count()];
        for f in &fs {
            m.forward_backward(f, Dropout::Off, &mut |_| 1.0, &mut grad)
                .unwrap();
        }
        let mut probe = m.clone();
        for i in 0..probe.param_count() {
            let orig = probe.params[i];
            let mut eval = |v: f64| {
                probe.params[i] = v;
                fs.iter()
                    .map(|f| probe.forward(f, Dropout::Off).unwrap())
                    .sum::<f64>()
            };
            let fd = (eval(orig + 1e-5) - eval(orig - 1e-5)) / 2e-5;
            probe.params[i] = orig;
            let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            assert!(err < 1e-4, "param {i}: {} vs {fd}", grad[i]);
        }
    }
}
