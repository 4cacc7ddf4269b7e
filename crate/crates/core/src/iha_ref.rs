//! Double-precision reference kernel for per-layer independent attention.
//!
//! Each of the `n_h` query heads attends with its own `d_qk`-wide query slice
//! against the key/value slices of the group it maps to; head outputs (each
//! `d_v` wide) are concatenated and projected back to `d_model`.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::genome::{group_map, LayerGene};

#[derive(Debug, Clone, PartialEq)]
pub struct AttnWeights {
    /// `d_model x (n_h * d_qk)`
    pub wq: Array2<f64>,
    /// `d_model x (n_kv * d_qk)`
    pub wk: Array2<f64>,
    /// `d_model x (n_kv * d_v)`
    pub wv: Array2<f64>,
    /// `(n_h * d_v) x d_model`
    pub wo: Array2<f64>,
}

impl AttnWeights {
    /// Gaussian weights scaled by `1 / sqrt(fan_in)`.
    pub fn random<R: Rng + ?Sized>(gene: &LayerGene, d_model: usize, rng: &mut R) -> Self {
        let (n_h, n_kv) = (gene.n_h as usize, gene.n_kv as usize);
        let (d_qk, d_v) = (gene.d_qk as usize, gene.d_v as usize);
        let mut draw = |rows: usize, cols: usize| {
            let scale = 1.0 / (rows as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| {
                let z: f64 = StandardNormal.sample(rng);
                z * scale
            })
        };
        Self {
            wq: draw(d_model, n_h * d_qk),
            wk: draw(d_model, n_kv * d_qk),
            wv: draw(d_model, n_kv * d_v),
            wo: draw(n_h * d_v, d_model),
        }
    }

    fn check(&self, gene: &LayerGene, d_model: usize) -> Result<()> {
        let (n_h, n_kv) = (gene.n_h as usize, gene.n_kv as usize);
        let (d_qk, d_v) = (gene.d_qk as usize, gene.d_v as usize);
        let expect = [
            ("Wq", self.wq.dim(), (d_model, n_h * d_qk)),
            ("Wk", self.wk.dim(), (d_model, n_kv * d_qk)),
            ("Wv", self.wv.dim(), (d_model, n_kv * d_v)),
            ("Wo", self.wo.dim(), (n_h * d_v, d_model)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Dimension(format!(
                    "{name} is {got:?}, expected {want:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Row-wise softmax with max subtraction. `-inf` entries become exact zeros.
pub(crate) fn softmax_rows(scores: &mut Array2<f64>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Output of [`iha_forward_traced`]: the layer output plus each head's
/// attention probability matrix (`T x T`).
#[derive(Debug, Clone)]
pub struct AttnTrace {
    pub output: Array2<f64>,
    pub probs: Vec<Array2<f64>>,
}

pub fn iha_forward(
    x: ArrayView2<f64>,
    gene: &LayerGene,
    w: &AttnWeights,
    causal: bool,
) -> Result<Array2<f64>> {
    iha_forward_traced(x, gene, w, causal).map(|t| t.output)
}

pub fn iha_forward_traced(
    x: ArrayView2<f64>,
    gene: &LayerGene,
    w: &AttnWeights,
    causal: bool,
) -> Result<AttnTrace> {
    let (t, d_model) = x.dim();
    if !gene.attn {
        return Ok(AttnTrace {
            output: x.to_owned(),
            probs: Vec::new(),
        });
    }
    w.check(gene, d_model)?;
    let (n_h, n_kv) = (gene.n_h, gene.n_kv);
    let (d_qk, d_v) = (gene.d_qk as usize, gene.d_v as usize);

    let q = x.dot(&w.wq);
    let k = x.dot(&w.wk);
    let v = x.dot(&w.wv);
    let scale = 1.0 / (d_qk as f64).sqrt();

    let mut concat = Array2::<f64>::zeros((t, n_h as usize * d_v));
    let mut probs = Vec::with_capacity(n_h as usize);
    for h in 0..n_h as usize {
        let g = group_map(h as u32 + 1, n_h, n_kv)? as usize - 1;
        let q_h = q.slice(s![.., h * d_qk..(h + 1) * d_qk]);
        let k_g = k.slice(s![.., g * d_qk..(g + 1) * d_qk]);
        let v_g = v.slice(s![.., g * d_v..(g + 1) * d_v]);
        let mut scores = q_h.dot(&k_g.t()) * scale;
        if causal {
            for i in 0..t {
                scores.slice_mut(s![i, i + 1..]).fill(f64::NEG_INFINITY);
            }
        }
        softmax_rows(&mut scores);
        concat
            .slice_mut(s![.., h * d_v..(h + 1) * d_v])
            .assign(&scores.dot(&v_g));
        probs.push(scores);
    }
    Ok(AttnTrace {
        output: concat.dot(&w.wo),
        probs,
    })
}

/// True iff every row of every probability matrix is non-negative and sums
/// to one within `1e-9`.
pub fn attention_rows_stochastic(probs: &[Array2<f64>]) -> bool {
    probs.iter().all(|p| {
        p.iter().all(|&v| v >= 0.0) && p.sum_axis(Axis(1)).iter().all(|&s| (s - 1.0).abs() <= 1e-9)
    })
}

/// True iff every entry above the diagonal is exactly zero.
pub fn causal_mask_respected(probs: &[Array2<f64>]) -> bool {
    probs
        .iter()
        .all(|p| p.indexed_iter().all(|((i, j), &v)| j <= i || v == 0.0))
}

/// Reference MHA with explicit loops and K/V shared by replication: every
/// head reads the K/V columns of group `h / (n_h / n_kv)`.
pub fn replicated_gqa_reference(
    x: ArrayView2<f64>,
    gene: &LayerGene,
    w: &AttnWeights,
    causal: bool,
) -> Array2<f64> {
    let (t, d_model) = x.dim();
    let (n_h, n_kv) = (gene.n_h as usize, gene.n_kv as usize);
    let (d_qk, d_v) = (gene.d_qk as usize, gene.d_v as usize);
    let per = n_h / n_kv;
    let proj = |wm: &Array2<f64>, col: usize, i: usize| {
        (0..d_model).map(|m| x[[i, m]] * wm[[m, col]]).sum::<f64>()
    };
    let mut heads = Array2::<f64>::zeros((t, n_h * d_v));
    for h in 0..n_h {
        let g = h / per;
        for i in 0..t {
            let visible = if causal { i + 1 } else { t };
            let scores: Vec<f64> = (0..visible)
                .map(|j| {
                    (0..d_qk)
                        .map(|c| proj(&w.wq, h * d_qk + c, i) * proj(&w.wk, g * d_qk + c, j))
                        .sum::<f64>()
                        / (d_qk as f64).sqrt()
                })
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..d_v {
                heads[[i, h * d_v + c]] = (0..visible)
                    .map(|j| e[j] / z * proj(&w.wv, g * d_v + c, j))
                    .sum();
            }
        }
    }
    let mut out = Array2::<f64>::zeros((t, d_model));
    for i in 0..t {
        for m in 0..d_model {
            out[[i, m]] = (0..n_h * d_v).map(|k| heads[[i, k]] * w.wo[[k, m]]).sum();
        }
    }
    out
}

/// Outcome of one property in [`property_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Largest elementwise deviation seen (0 for exact checks).
    pub max_err: f64,
    pub draws: usize,
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    if a.dim() != b.dim() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Random small layer shapes with `n_kv | n_h`.
fn random_gene<R: Rng + ?Sized>(rng: &mut R) -> LayerGene {
    let n_kv = rng.random_range(1..=3u32);
    let n_h = n_kv * rng.random_range(1..=3u32);
    LayerGene::active(
        n_h,
        n_kv,
        rng.random_range(1..=6),
        rng.random_range(1..=6),
        0,
    )
}

/// Randomized checks of the kernel: output shape, equality with the looped
/// reference (both an MHA-shaped gene and general grouped genes), head
/// permutation equivariance, the identity gate and causal row-stochastic
/// probabilities. Tolerance 1e-10 elementwise.
pub fn property_suite(draws: usize, seed: u64) -> Result<Vec<PropertyCheck>> {
    const TOL: f64 = 1e-10;
    let mut rng = crate::util::rng(seed);
    let mut errs = [0.0f64; 6];
    let mut ok = [true; 6];
    for _ in 0..draws {
        let t = rng.random_range(1..=6usize);
        let d_model = rng.random_range(1..=8usize);
        let causal = rng.random_bool(0.5);
        let x = Array2::from_shape_fn((t, d_model), |_| StandardNormal.sample(&mut rng));

        let gene = random_gene(&mut rng);
        let w = AttnWeights::random(&gene, d_model, &mut rng);
        let trace = iha_forward_traced(x.view(), &gene, &w, causal)?;
        ok[0] &= trace.output.dim() == (t, d_model);

        let e = max_abs_diff(
            &trace.output,
            &replicated_gqa_reference(x.view(), &gene, &w, causal),
        );
        errs[1] = errs[1].max(e);

        let heads = rng.random_range(1..=4u32);
        let mha = LayerGene::active(heads, heads, d_model as u32, d_model as u32, 0);
        let wm = AttnWeights::random(&mha, d_model, &mut rng);
        let e = max_abs_diff(
            &iha_forward(x.view(), &mha, &wm, causal)?,
            &replicated_gqa_reference(x.view(), &mha, &wm, causal),
        );
        errs[2] = errs[2].max(e);

        // Swap two groups together with their query heads and Wo rows.
        let per = (gene.n_h / gene.n_kv) as usize;
        let (d_qk, d_v) = (gene.d_qk as usize, gene.d_v as usize);
        let mut wp = w.clone();
        let n_kv = gene.n_kv as usize;
        let order: Vec<usize> = (0..n_kv).rev().collect();
        for (dst, &src) in order.iter().enumerate() {
            for k in 0..per {
                let (hd, hs) = (dst * per + k, src * per + k);
                wp.wq
                    .slice_mut(s![.., hd * d_qk..(hd + 1) * d_qk])
                    .assign(&w.wq.slice(s![.., hs * d_qk..(hs + 1) * d_qk]));
                wp.wo
                    .slice_mut(s![hd * d_v..(hd + 1) * d_v, ..])
                    .assign(&w.wo.slice(s![hs * d_v..(hs + 1) * d_v, ..]));
            }
            wp.wk
                .slice_mut(s![.., dst * d_qk..(dst + 1) * d_qk])
                .assign(&w.wk.slice(s![.., src * d_qk..(src + 1) * d_qk]));
            wp.wv
                .slice_mut(s![.., dst * d_v..(dst + 1) * d_v])
                .assign(&w.wv.slice(s![.., src * d_v..(src + 1) * d_v]));
        }
        errs[3] = errs[3].max(max_abs_diff(
            &trace.output,
            &iha_forward(x.view(), &gene, &wp, causal)?,
        ));

        let gated = LayerGene {
            attn: false,
            ..gene
        };
        ok[4] &= iha_forward(x.view(), &gated, &w, causal)? == x;

        ok[5] &= attention_rows_stochastic(&trace.probs)
            && (!causal || causal_mask_respected(&trace.probs));
    }
    let names = [
        "output shape",
        "grouped vs replicated reference",
        "MHA vs looped reference",
        "head permutation",
        "identity gate",
        "row-stochastic probabilities",
    ];
    Ok(names
        .iter()
        .enumerate()
        .map(|(i, &name)| PropertyCheck {
            name,
            passed: ok[i] && errs[i] <= TOL,
            max_err: errs[i],
            draws,
        })
        .collect())
}
