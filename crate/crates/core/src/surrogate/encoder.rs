//! Pre-LN transformer encoder over packed layer tokens, with a hand-written
//! backward pass.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::features::{Features, N_FIELDS};
use super::layout::{Allocator, Slot};
use super::{Dropout, FieldNormalizer, Regressor};
use crate::error::{Error, Result};
use crate::iha_ref::softmax_rows;
use crate::util;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_enc: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub ffn_ratio: usize,
    pub dropout: f64,
    pub max_len: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_enc: 64,
            n_blocks: 4,
            n_heads: 4,
            ffn_ratio: 4,
            dropout: 0.2,
            max_len: 40,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_enc == 0
            || self.n_blocks == 0
            || self.n_heads == 0
            || self.ffn_ratio == 0
            || self.max_len == 0
        {
            return Err(Error::domain("encoder sizes must be positive"));
        }
        if self.d_enc % self.n_heads != 0 {
            return Err(Error::domain(format!(
                "d_enc {} not divisible by {} heads",
                self.d_enc, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::domain(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BlockSlots {
    ln1_g: Slot,
    ln1_b: Slot,
    wq: Slot,
    bq: Slot,
    wk: Slot,
    bk: Slot,
    wv: Slot,
    bv: Slot,
    wo: Slot,
    bo: Slot,
    ln2_g: Slot,
    ln2_b: Slot,
    w1: Slot,
    b1: Slot,
    w2: Slot,
    b2: Slot,
}

#[derive(Debug, Clone, PartialEq)]
struct EncoderLayout {
    lift_w: Slot,
    lift_b: Slot,
    pos: Slot,
    blocks: Vec<BlockSlots>,
    head_w: Slot,
    head_b: Slot,
    all: Vec<Slot>,
    total: usize,
}

impl EncoderLayout {
    fn new(c: &EncoderConfig) -> Self {
        let d = c.d_enc;
        let f = c.ffn_ratio * d;
        let mut a = Allocator::default();
        let lift_w = a.take("lift.weight", N_FIELDS, d);
        let lift_b = a.take("lift.bias", N_FIELDS, d);
        let pos = a.take("pos", c.max_len, d);
        let blocks = (0..c.n_blocks)
            .map(|i| {
                let mut t = |n: &str, r, c| a.take(format!("block{i}.{n}"), r, c);
                BlockSlots {
                    ln1_g: t("ln1.gain", 1, d),
                    ln1_b: t("ln1.shift", 1, d),
                    wq: t("attn.wq", d, d),
                    bq: t("attn.bq", 1, d),
                    wk: t("attn.wk", d, d),
                    bk: t("attn.bk", 1, d),
                    wv: t("attn.wv", d, d),
                    bv: t("attn.bv", 1, d),
                    wo: t("attn.wo", d, d),
                    bo: t("attn.bo", 1, d),
                    ln2_g: t("ln2.gain", 1, d),
                    ln2_b: t("ln2.shift", 1, d),
                    w1: t("ffn.w1", d, f),
                    b1: t("ffn.b1", 1, f),
                    w2: t("ffn.w2", f, d),
                    b2: t("ffn.b2", 1, d),
                }
            })
            .collect();
        let head_w = a.take("head.weight", d, 1);
        let head_b = a.take("head.bias", 1, 1);
        Self {
            lift_w,
            lift_b,
            pos,
            blocks,
            head_w,
            head_b,
            all: a.slots,
            total: a.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSurrogate {
    config: EncoderConfig,
    normalizer: FieldNormalizer,
    layout: EncoderLayout,
    params: Vec<f64>,
}

// ---- small dense helpers -------------------------------------------------

pub(super) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

pub(super) fn gelu_grad(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2)) + x * pdf
}

fn linear(x: &Array2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut y = x.dot(&w);
    y += &b;
    y
}

/// Accumulates weight and bias gradients and returns the input gradient.
fn linear_back(
    x: &Array2<f64>,
    dy: &Array2<f64>,
    w: ArrayView2<f64>,
    (mut dw, mut db): (ArrayViewMut2<f64>, ArrayViewMut1<f64>),
) -> Array2<f64> {
    general_mat_mul(1.0, &x.t(), dy, 1.0, &mut dw);
    db += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, g: ArrayView1<f64>, b: ArrayView1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row -= mean;
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *is = 1.0 / (var + LN_EPS).sqrt();
        row *= *is;
    }
    let mut y = &xhat * &g;
    y += &b;
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_back(
    dy: &Array2<f64>,
    c: &LnCache,
    g: ArrayView1<f64>,
    mut dg: ArrayViewMut1<f64>,
    mut db: ArrayViewMut1<f64>,
) -> Array2<f64> {
    dg += &(dy * &c.xhat).sum_axis(Axis(0));
    db += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * &g;
    for ((mut row, xh), is) in dx
        .rows_mut()
        .into_iter()
        .zip(c.xhat.rows())
        .zip(c.inv_std.iter())
    {
        let mean = row.sum() / d;
        let proj = row.dot(&xh) / d;
        row.zip_mut_with(&xh, |v, &h| *v = (*v - mean - h * proj) * is);
    }
    dx
}

/// Inverted-dropout multiplier mask: entries are 0 or `1 / (1 - p)`.
fn drop_mask(rng: &mut util::Rng, shape: (usize, usize), p: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep })
}

// ---- forward cache ---------------------------------------------------------

struct BlockCache {
    ln1: LnCache,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    attn_masks: Option<Vec<Array2<f64>>>,
    o: Array2<f64>,
    ln2: LnCache,
    h2: Array2<f64>,
    f1: Array2<f64>,
    act: Array2<f64>,
    ffn_mask: Option<Array2<f64>>,
}

struct ForwardCache {
    tokens: Array2<f64>,
    positions: Vec<usize>,
    blocks: Vec<BlockCache>,
    pooled: Array1<f64>,
}

impl EncoderSurrogate {
    /// Fresh surrogate. Linear weights and biases are uniform in
    /// `±1/sqrt(fan_in)`, the positional table is standard normal, and
    /// layer norms start at identity.
    pub fn new(config: EncoderConfig, normalizer: FieldNormalizer, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = EncoderLayout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = util::rng(seed);
        let mut uniform = |slot: &Slot, fan_in: usize, buf: &mut [f64]| {
            let a = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
            for v in &mut buf[slot.range()] {
                *v = dist.sample(&mut rng);
            }
        };
        let d = config.d_enc;
        uniform(&layout.lift_w, 1, &mut params);
        uniform(&layout.lift_b, 1, &mut params);
        for b in &layout.blocks {
            for (w, bias) in [
                (&b.wq, &b.bq),
                (&b.wk, &b.bk),
                (&b.wv, &b.bv),
                (&b.wo, &b.bo),
                (&b.w1, &b.b1),
            ] {
                uniform(w, d, &mut params);
                uniform(bias, d, &mut params);
            }
            uniform(&b.w2, d * config.ffn_ratio, &mut params);
            uniform(&b.b2, d * config.ffn_ratio, &mut params);
            params[b.ln1_g.range()].fill(1.0);
            params[b.ln2_g.range()].fill(1.0);
        }
        uniform(&layout.head_w, d, &mut params);
        uniform(&layout.head_b, d, &mut params);
        let mut rng = util::rng(util::mix_seed(seed, 1));
        for v in &mut params[layout.pos.range()] {
            *v = StandardNormal.sample(&mut rng);
        }
        Ok(Self {
            config,
            normalizer,
            layout,
            params,
        })
    }

    /// Rebuilds a surrogate around an existing flat parameter vector.
    pub fn from_parts(
        config: EncoderConfig,
        normalizer: FieldNormalizer,
        params: Vec<f64>,
    ) -> Result<Self> {
        config.validate()?;
        let layout = EncoderLayout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Dimension(format!(
                "{} parameters supplied, layout needs {}",
                params.len(),
                layout.total
            )));
        }
        Ok(Self {
            config,
            normalizer,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn normalizer(&self) -> &FieldNormalizer {
        &self.normalizer
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    /// Named tensors in storage order.
    pub fn tensors(&self) -> &[Slot] {
        &self.layout.all
    }

    /// A copy of this model with dropout disabled or changed.
    pub fn with_dropout(&self, p: f64) -> Result<Self> {
        let config = EncoderConfig {
            dropout: p,
            ..self.config.clone()
        };
        Self::from_parts(config, self.normalizer.clone(), self.params.clone())
    }

    fn run(&self, x: &Features, dropout: Dropout) -> Result<(f64, ForwardCache)> {
        let c = &self.config;
        if x.tokens.dim() != (c.max_len, N_FIELDS) || x.mask.len() != c.max_len {
            return Err(Error::Dimension(format!(
                "token matrix {:?} / mask {} for encoder length {}",
                x.tokens.dim(),
                x.mask.len(),
                c.max_len
            )));
        }
        let positions: Vec<usize> = x.active_rows().collect();
        if positions.is_empty() {
            return Err(Error::domain("all-padding input"));
        }
        let n = positions.len();
        let p = &self.params;
        let l = &self.layout;
        let tokens = x.tokens.select(Axis(0), &positions);

        let mut h = tokens.dot(&l.lift_w.mat(p));
        h += &l.lift_b.mat(p).sum_axis(Axis(0));
        let pos = l.pos.mat(p);
        for (mut row, &pi) in h.rows_mut().into_iter().zip(&positions) {
            row += &pos.row(pi);
        }

        let mut rng = match dropout {
            Dropout::On { seed } if c.dropout > 0.0 => Some(util::rng(seed)),
            _ => None,
        };
        let dh = c.d_enc / c.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut blocks = Vec::with_capacity(c.n_blocks);
        for b in &l.blocks {
            let x_in = h;
            let (h1, ln1) = layer_norm(&x_in, b.ln1_g.vec(p), b.ln1_b.vec(p));
            let q = linear(&h1, b.wq.mat(p), b.bq.vec(p));
            let k = linear(&h1, b.wk.mat(p), b.bk.vec(p));
            let v = linear(&h1, b.wv.mat(p), b.bv.vec(p));
            let mut o = Array2::zeros((n, c.d_enc));
            let mut probs = Vec::with_capacity(c.n_heads);
            let mut masks = rng.as_ref().map(|_| Vec::with_capacity(c.n_heads));
            for hd in 0..c.n_heads {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let mut sc = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                softmax_rows(&mut sc);
                let out = match (&mut rng, &mut masks) {
                    (Some(r), Some(ms)) => {
                        let m = drop_mask(r, (n, n), c.dropout);
                        let out = (&sc * &m).dot(&v.slice(cols));
                        ms.push(m);
                        out
                    }
                    _ => sc.dot(&v.slice(cols)),
                };
                o.slice_mut(cols).assign(&out);
                probs.push(sc);
            }
            let x_mid = &x_in + &linear(&o, b.wo.mat(p), b.bo.vec(p));
            let (h2, ln2) = layer_norm(&x_mid, b.ln2_g.vec(p), b.ln2_b.vec(p));
            let f1 = linear(&h2, b.w1.mat(p), b.b1.vec(p));
            let act = f1.mapv(gelu);
            let mut f2 = linear(&act, b.w2.mat(p), b.b2.vec(p));
            let ffn_mask = rng.as_mut().map(|r| drop_mask(r, (n, c.d_enc), c.dropout));
            if let Some(m) = &ffn_mask {
                f2 *= m;
            }
            h = &x_mid + &f2;
            blocks.push(BlockCache {
                ln1,
                h1,
                q,
                k,
                v,
                probs,
                attn_masks: masks,
                o,
                ln2,
                h2,
                f1,
                act,
                ffn_mask,
            });
        }
        let pooled = h.mean_axis(Axis(0)).expect("non-empty");
        let y = pooled.dot(&l.head_w.mat(p).column(0)) + p[l.head_b.offset];
        Ok((
            y,
            ForwardCache {
                tokens,
                positions,
                blocks,
                pooled,
            },
        ))
    }

    fn backprop(&self, cache: ForwardCache, dy: f64, grad: &mut [f64]) {
        let c = &self.config;
        let p = &self.params;
        let l = &self.layout;
        let n = cache.positions.len();
        let dh = c.d_enc / c.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();

        l.head_w
            .mat_mut(grad)
            .column_mut(0)
            .scaled_add(dy, &cache.pooled);
        grad[l.head_b.offset] += dy;
        let dpool = l.head_w.mat(p).column(0).to_owned() * (dy / n as f64);
        let mut dx = Array2::from_shape_fn((n, c.d_enc), |(_, j)| dpool[j]);

        for (b, bc) in l.blocks.iter().zip(cache.blocks).rev() {
            // feed-forward half
            let mut df2 = dx.clone();
            if let Some(m) = &bc.ffn_mask {
                df2 *= m;
            }
            let dact = linear_back(&bc.act, &df2, b.w2.mat(p), split_wb(grad, &b.w2, &b.b2));
            let df1 = dact * &bc.f1.mapv(gelu_grad);
            let dh2 = linear_back(&bc.h2, &df1, b.w1.mat(p), split_wb(grad, &b.w1, &b.b1));
            let ln2 = &bc.ln2;
            let dmid = {
                let (dg, db) = split_two(grad, &b.ln2_g, &b.ln2_b);
                layer_norm_back(&dh2, ln2, b.ln2_g.vec(p), dg, db)
            };
            dx += &dmid;

            // attention half
            let d_o = linear_back(&bc.o, &dx, b.wo.mat(p), split_wb(grad, &b.wo, &b.bo));
            let mut dq = Array2::zeros((n, c.d_enc));
            let mut dk = Array2::zeros((n, c.d_enc));
            let mut dv = Array2::zeros((n, c.d_enc));
            for hd in 0..c.n_heads {
                let cols = s![.., hd * dh..(hd + 1) * dh];
                let probs = &bc.probs[hd];
                let dropped = match &bc.attn_masks {
                    Some(ms) => probs * &ms[hd],
                    None => probs.clone(),
                };
                let do_h = d_o.slice(cols);
                dv.slice_mut(cols).assign(&dropped.t().dot(&do_h));
                let mut dp = do_h.dot(&bc.v.slice(cols).t());
                if let Some(ms) = &bc.attn_masks {
                    dp *= &ms[hd];
                }
                let mut ds = dp;
                for (mut row, prow) in ds.rows_mut().into_iter().zip(probs.rows()) {
                    let inner = row.dot(&prow);
                    row.zip_mut_with(&prow, |v, &pr| *v = pr * (*v - inner) * scale);
                }
                dq.slice_mut(cols).assign(&ds.dot(&bc.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&bc.q.slice(cols)));
            }
            let mut dh1 = linear_back(&bc.h1, &dq, b.wq.mat(p), split_wb(grad, &b.wq, &b.bq));
            dh1 += &linear_back(&bc.h1, &dk, b.wk.mat(p), split_wb(grad, &b.wk, &b.bk));
            dh1 += &linear_back(&bc.h1, &dv, b.wv.mat(p), split_wb(grad, &b.wv, &b.bv));
            let din = {
                let (dg, db) = split_two(grad, &b.ln1_g, &b.ln1_b);
                layer_norm_back(&dh1, &bc.ln1, b.ln1_g.vec(p), dg, db)
            };
            dx += &din;
        }

        general_mat_mul(
            1.0,
            &cache.tokens.t(),
            &dx,
            1.0,
            &mut l.lift_w.mat_mut(grad),
        );
        let col_sum = dx.sum_axis(Axis(0));
        for mut row in l.lift_b.mat_mut(grad).rows_mut() {
            row += &col_sum;
        }
        let mut dpos = l.pos.mat_mut(grad);
        for (row, &pi) in dx.rows().into_iter().zip(&cache.positions) {
            let mut target = dpos.row_mut(pi);
            target += &row;
        }
    }
}

/// Disjoint weight-matrix and bias views into `grad`; `w` must precede `b`.
fn split_wb<'a>(
    grad: &'a mut [f64],
    w: &Slot,
    b: &Slot,
) -> (ArrayViewMut2<'a, f64>, ArrayViewMut1<'a, f64>) {
    debug_assert!(w.offset + w.len() <= b.offset);
    let (lo, hi) = grad.split_at_mut(b.offset);
    (w.mat_mut(lo), ArrayViewMut1::from(&mut hi[..b.len()]))
}

/// Two disjoint mutable vector views into `grad`; `a` must precede `b`.
fn split_two<'a>(
    grad: &'a mut [f64],
    a: &Slot,
    b: &Slot,
) -> (ArrayViewMut1<'a, f64>, ArrayViewMut1<'a, f64>) {
    debug_assert!(a.offset + a.len() <= b.offset);
    let (lo, hi) = grad.split_at_mut(b.offset);
    (
        ArrayViewMut1::from(&mut lo[a.range()]),
        ArrayViewMut1::from(&mut hi[..b.len()]),
    )
}

impl Regressor for EncoderSurrogate {
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

    fn forward(&self, x: &Features, dropout: Dropout) -> Result<f64> {
        self.run(x, dropout).map(|(y, _)| y)
    }

    fn forward_backward(
        &self,
        x: &Features,
        dropout: Dropout,
        dloss: &mut dyn FnMut(f64) -> f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let (y, cache) = self.run(x, dropout)?;
        let dy = dloss(y);
        if dy != 0.0 {
            self.backprop(cache, dy, grad);
        }
        Ok(y)
    }
}

/// Scalar count by enumerating tensor shapes directly from the hyperparameters.
pub fn encoder_param_count(c: &EncoderConfig) -> usize {
    checked_param_count(c).expect("encoder size overflows usize")
}

/// [`encoder_param_count`], or `None` when the count does not fit a `usize`.
pub fn checked_param_count(c: &EncoderConfig) -> Option<usize> {
    let d = c.d_enc;
    let f = c.ffn_ratio.checked_mul(d)?;
    let dd = d.checked_mul(d)?;
    let df = d.checked_mul(f)?;
    let lifts = (2 * N_FIELDS).checked_mul(d)?;
    let pos = c.max_len.checked_mul(d)?;
    let block = [
        d.checked_mul(4)?,
        dd.checked_add(d)?.checked_mul(4)?,
        df.checked_add(f)?,
        df.checked_add(d)?,
    ]
    .into_iter()
    .try_fold(0usize, usize::checked_add)?;
    let head = d.checked_add(1)?;
    lifts
        .checked_add(pos)?
        .checked_add(c.n_blocks.checked_mul(block)?)?
        .checked_add(head)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{random_genome, ArchGenome, GlobalConfig, SpaceRanges};
    use crate::surrogate::featurize;

    fn sample_inputs(n: usize, seed: u64) -> (FieldNormalizer, Vec<Features>) {
        let gs: Vec<ArchGenome> = (0..n)
            .map(|i| {
                random_genome(
                    &GlobalConfig::default(),
                    &SpaceRanges::default(),
                    seed + i as u64,
                )
            })
            .collect();
        let norm = FieldNormalizer::fit(&gs).unwrap();
        let fs = gs
            .iter()
            .map(|g| featurize(g, &norm, 40).unwrap())
            .collect();
        (norm, fs)
    }

    #[test]
    fn default_count_is_203713() {
        let (norm, _) = sample_inputs(2, 0);
        let s = EncoderSurrogate::new(EncoderConfig::default(), norm, 0).unwrap();
        assert_eq!(s.param_count(), 203_713);
        assert_eq!(encoder_param_count(&EncoderConfig::default()), 203_713);
        let total: usize = s.tensors().iter().map(Slot::len).sum();
        assert_eq!(total, 203_713);
    }

    #[test]
    fn halving_width_matches_shape_enumeration() {
        let (norm, _) = sample_inputs(2, 0);
        let cfg = EncoderConfig {
            d_enc: 32,
            ..Default::default()
        };
        let s = EncoderSurrogate::new(cfg.clone(), norm, 0).unwrap();
        // lifts 576 + pos 1280 + 4 x (128 + 4224 + 8352) + 33
        assert_eq!(s.param_count(), 576 + 1280 + 4 * (128 + 4224 + 8352) + 33);
        assert_eq!(s.param_count(), encoder_param_count(&cfg));
    }

    #[test]
    fn forward_is_deterministic() {
        let (norm, fs) = sample_inputs(3, 5);
        let s = EncoderSurrogate::new(EncoderConfig::default(), norm, 1).unwrap();
        for f in &fs {
            let a = s.forward(f, Dropout::Off).unwrap();
            assert_eq!(a.to_bits(), s.forward(f, Dropout::Off).unwrap().to_bits());
            let b = s.forward(f, Dropout::On { seed: 9 }).unwrap();
            assert_eq!(
                b.to_bits(),
                s.forward(f, Dropout::On { seed: 9 }).unwrap().to_bits()
            );
            assert_ne!(a, b);
        }
    }

    #[test]
    fn padding_content_is_ignored() {
        let (norm, fs) = sample_inputs(1, 6);
        let s = EncoderSurrogate::new(EncoderConfig::default(), norm, 2).unwrap();
        let f = &fs[0];
        let base = s.forward(f, Dropout::Off).unwrap();
        let mut g = f.clone();
        let first_pad = g.mask.iter().position(|m| !m).expect("some padding");
        let real = g.tokens.row(0).to_owned();
        for r in first_pad..40 {
            g.tokens.row_mut(r).assign(&real);
        }
        assert!((s.forward(&g, Dropout::Off).unwrap() - base).abs() <= 1e-12);
    }

    #[test]
    fn all_padding_is_rejected() {
        let (norm, fs) = sample_inputs(1, 7);
        let s = EncoderSurrogate::new(EncoderConfig::default(), norm, 3).unwrap();
        let mut f = fs[0].clone();
        f.mask.iter_mut().for_each(|m| *m = false);
        assert!(matches!(s.forward(&f, Dropout::Off), Err(Error::Domain(_))));
    }

    #[test]
    fn gelu_grad_matches_difference_quotient() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let (norm, fs) = sample_inputs(2, 11);
        let cfg = EncoderConfig {
            d_enc: 8,
            n_heads: 2,
            n_blocks: 2,
            ..Default::default()
        };
        let s = EncoderSurrogate::new(cfg, norm, 4).unwrap();
        for dropout in [Dropout::Off, Dropout::On { seed: 77 }] {
            let objective = |m: &EncoderSurrogate| -> f64 {
                fs.iter().map(|f| m.forward(f, dropout).unwrap()).sum()
            };
            let mut grad = vec![0.0; s.param_count()];
            for f in &fs {
                s.forward_backward(f, dropout, &mut |_| 1.0, &mut grad)
                    .unwrap();
            }
            let mut m = s.clone();
            for i in 0..m.param_count() {
                let orig = m.params[i];
                m.params[i] = orig + 1e-5;
                let up = objective(&m);
                m.params[i] = orig - 1e-5;
                let down = objective(&m);
                m.params[i] = orig;
                let fd = (up - down) / 2e-5;
                let err = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
                assert!(
                    err < 1e-4,
                    "param {i}: analytic {} vs numeric {fd}",
                    grad[i]
                );
            }
        }
    }
}
