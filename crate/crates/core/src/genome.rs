//! Architecture design space.
//!
//! A candidate is a [`GlobalConfig`] plus a fixed-length sequence of
//! [`LayerGene`] slots. Every slot carries its own head count, KV-group count,
//! query/key width, value width and MLP width; the only coupling kept between
//! them is that the number of KV groups divides the number of query heads.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util;

/// Default vocabulary used when embeddings are included in parameter counts.
pub const DEFAULT_VOCAB: u64 = 50_257;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GlobalConfig {
    pub d_model: u32,
    pub block_size: u32,
    pub max_layers: u32,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            d_model: 768,
            block_size: 1024,
            max_layers: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerGene {
    /// Layer gating; a pruned slot ignores every other field.
    #[serde(with = "bit")]
    pub mask: bool,
    /// Attention gating; when off the attention block is the identity.
    #[serde(with = "bit")]
    pub attn: bool,
    pub n_h: u32,
    pub n_kv: u32,
    pub d_qk: u32,
    pub d_v: u32,
    pub d_mlp: u32,
}

impl LayerGene {
    pub fn active(n_h: u32, n_kv: u32, d_qk: u32, d_v: u32, d_mlp: u32) -> Self {
        Self {
            mask: true,
            attn: true,
            n_h,
            n_kv,
            d_qk,
            d_v,
            d_mlp,
        }
    }

    pub fn pruned() -> Self {
        Self {
            mask: false,
            ..Self::active(1, 1, 64, 64, 512)
        }
    }

    /// Weight-matrix parameter count of this layer (biases and norms excluded).
    pub fn weight_count(&self, d_model: u32) -> u64 {
        // Saturates instead of wrapping for absurd shapes read from files.
        let d = d_model as u64;
        let mlp = (2 * d).saturating_mul(self.d_mlp as u64);
        if !self.attn {
            return mlp;
        }
        let (n_h, n_kv) = (self.n_h as u64, self.n_kv as u64);
        let (d_qk, d_v) = (self.d_qk as u64, self.d_v as u64);
        [n_h * d_qk, n_kv * d_qk, n_kv * d_v, n_h * d_v]
            .into_iter()
            .fold(mlp, |acc, w| acc.saturating_add(d.saturating_mul(w)))
    }
}

mod bit {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(*v as u8)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(D::Error::custom(format!(
                "expected bit 0 or 1, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchGenome {
    pub global: GlobalConfig,
    pub layers: Vec<LayerGene>,
}

impl ArchGenome {
    /// Builds a genome whose first slots are `active` and the rest pruned.
    pub fn from_active(global: GlobalConfig, active: &[LayerGene]) -> Self {
        let mut layers = vec![LayerGene::pruned(); global.max_layers as usize];
        for (slot, gene) in layers.iter_mut().zip(active) {
            *slot = *gene;
        }
        Self { global, layers }
    }

    pub fn active_layers(&self) -> impl Iterator<Item = (usize, &LayerGene)> {
        self.layers.iter().enumerate().filter(|(_, l)| l.mask)
    }

    pub fn active_count(&self) -> usize {
        self.layers.iter().filter(|l| l.mask).count()
    }

    /// Canonical JSON document: object keys sorted, pretty-printed.
    pub fn to_json(&self) -> String {
        // serde_json::Value keeps object keys in a BTreeMap, so going through
        // it yields lexicographic key order independent of field order.
        let value = serde_json::to_value(self).expect("genome serializes");
        serde_json::to_string_pretty(&value).expect("value serializes")
    }

    /// Parses a genome document. Structural checks only; run [`validate`]
    /// for design-space membership.
    pub fn from_json(text: &str) -> Result<Self> {
        let g: ArchGenome = serde_json::from_str(text)?;
        g.check_slots()?;
        Ok(g)
    }

    /// Fails unless there is exactly one layer slot per `max_layers`.
    pub fn check_slots(&self) -> Result<()> {
        if self.layers.len() != self.global.max_layers as usize {
            return Err(Error::Parse(format!(
                "genome has {} layer slots but max_layers = {}",
                self.layers.len(),
                self.global.max_layers
            )));
        }
        Ok(())
    }

    /// Stable 64-bit fingerprint of the canonical document.
    pub fn fingerprint(&self) -> u64 {
        util::stable_hash(self.to_json().as_bytes())
    }
}

/// Arithmetic grid `{min, min + step, ..., <= max}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridRange {
    pub min: u32,
    pub step: u32,
    pub max: u32,
}

impl GridRange {
    pub const fn new(min: u32, step: u32, max: u32) -> Self {
        Self { min, step, max }
    }

    pub fn is_well_formed(&self) -> bool {
        self.step > 0 && self.min <= self.max
    }

    /// Largest grid value, which differs from `max` when the grid does not land on it.
    pub fn top(&self) -> u32 {
        self.min + (self.max - self.min) / self.step * self.step
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1) as usize
    }

    pub fn contains(&self, v: u32) -> bool {
        v >= self.min && v <= self.max && (v - self.min) % self.step == 0
    }

    pub fn values(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.len() as u32).map(move |k| self.min + k * self.step)
    }

    /// Clamps into `[min, max]` and rounds to the nearest grid point; ties go
    /// to the smaller value.
    pub fn snap(&self, v: u32) -> u32 {
        let v = v.clamp(self.min, self.top());
        let offset = v - self.min;
        let below = offset / self.step;
        let rem = offset % self.step;
        // rem * 2 > step means strictly closer to the upper neighbour.
        let k = if rem as u64 * 2 > self.step as u64 {
            below + 1
        } else {
            below
        };
        self.min + k * self.step
    }

    /// Moves `v` by `delta` grid steps, clamped to the grid.
    pub fn shift(&self, v: u32, delta: i32) -> u32 {
        let k = ((self.snap(v) - self.min) / self.step) as i64 + delta as i64;
        let k = k.clamp(0, self.len() as i64 - 1) as u32;
        self.min + k * self.step
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.min + rng.random_range(0..self.len() as u32) * self.step
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionVariant {
    /// Grouped-query attention: `n_h | d_model`, `n_kv | n_h`, `d_qk = d_v = d_model / n_h`.
    Gqa,
    /// Independent shapes; only `n_kv | n_h` is kept.
    Iha,
}

impl fmt::Display for AttentionVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionVariant::Gqa => "GQA",
            AttentionVariant::Iha => "IHA",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceRanges {
    pub n_h: GridRange,
    pub n_kv: GridRange,
    pub d_qk: GridRange,
    pub d_v: GridRange,
    pub d_mlp: GridRange,
    pub variant: AttentionVariant,
}

impl Default for SpaceRanges {
    fn default() -> Self {
        Self {
            n_h: GridRange::new(1, 1, 16),
            n_kv: GridRange::new(1, 1, 16),
            d_qk: GridRange::new(64, 32, 512),
            d_v: GridRange::new(64, 32, 512),
            d_mlp: GridRange::new(512, 256, 4096),
            variant: AttentionVariant::Iha,
        }
    }
}

impl SpaceRanges {
    pub fn with_variant(mut self, variant: AttentionVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn is_well_formed(&self) -> bool {
        [self.n_h, self.n_kv, self.d_qk, self.d_v, self.d_mlp]
            .iter()
            .all(GridRange::is_well_formed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    NH,
    NKv,
    DQk,
    DV,
    DMlp,
    DModel,
    BlockSize,
    MaxLayers,
    Layers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// Value outside `[min, max]`.
    OutOfRange,
    /// Inside the range but not on the step grid.
    OffGrid,
    /// `n_kv` does not divide `n_h`.
    GroupDivisibility,
    /// GQA: `n_h` does not divide `d_model`.
    HeadDivisibility,
    /// GQA: `d_qk` or `d_v` differs from `d_model / n_h`.
    HeadDimCoupling,
    /// A global dimension is zero.
    NonPositive,
    /// Slot count differs from `max_layers`.
    SlotCount,
    /// Every slot is pruned.
    NoActiveLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// `None` for genome-level violations.
    pub layer: Option<usize>,
    pub field: Field,
    pub rule: Rule,
    pub value: u64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer {
            Some(i) => write!(
                f,
                "layer {i}: {:?} = {} violates {:?}",
                self.field, self.value, self.rule
            ),
            None => write!(
                f,
                "{:?} = {} violates {:?}",
                self.field, self.value, self.rule
            ),
        }
    }
}

fn check_grid(out: &mut Vec<Violation>, layer: usize, field: Field, range: &GridRange, v: u32) {
    let rule = if v < range.min || v > range.max {
        Rule::OutOfRange
    } else if !range.contains(v) {
        Rule::OffGrid
    } else {
        return;
    };
    out.push(Violation {
        layer: Some(layer),
        field,
        rule,
        value: v as u64,
    });
}

/// Lists every design-space violation of `g`. Pruned slots are not checked.
pub fn validate(g: &ArchGenome, r: &SpaceRanges) -> Vec<Violation> {
    let mut out = Vec::new();
    let global = &g.global;
    for (field, v) in [
        (Field::DModel, global.d_model),
        (Field::BlockSize, global.block_size),
        (Field::MaxLayers, global.max_layers),
    ] {
        if v == 0 {
            out.push(Violation {
                layer: None,
                field,
                rule: Rule::NonPositive,
                value: 0,
            });
        }
    }
    if g.layers.len() != global.max_layers as usize {
        out.push(Violation {
            layer: None,
            field: Field::Layers,
            rule: Rule::SlotCount,
            value: g.layers.len() as u64,
        });
    }
    if g.active_count() == 0 {
        out.push(Violation {
            layer: None,
            field: Field::Layers,
            rule: Rule::NoActiveLayer,
            value: 0,
        });
    }

    for (i, l) in g.active_layers() {
        check_grid(&mut out, i, Field::NH, &r.n_h, l.n_h);
        check_grid(&mut out, i, Field::NKv, &r.n_kv, l.n_kv);
        check_grid(&mut out, i, Field::DMlp, &r.d_mlp, l.d_mlp);
        if l.n_kv == 0 || l.n_h % l.n_kv != 0 {
            out.push(Violation {
                layer: Some(i),
                field: Field::NKv,
                rule: Rule::GroupDivisibility,
                value: l.n_kv as u64,
            });
        }
        match r.variant {
            AttentionVariant::Iha => {
                check_grid(&mut out, i, Field::DQk, &r.d_qk, l.d_qk);
                check_grid(&mut out, i, Field::DV, &r.d_v, l.d_v);
            }
            AttentionVariant::Gqa => {
                if l.n_h == 0 || global.d_model % l.n_h != 0 {
                    out.push(Violation {
                        layer: Some(i),
                        field: Field::NH,
                        rule: Rule::HeadDivisibility,
                        value: l.n_h as u64,
                    });
                } else {
                    let head = global.d_model / l.n_h;
                    for (field, v) in [(Field::DQk, l.d_qk), (Field::DV, l.d_v)] {
                        if v != head {
                            out.push(Violation {
                                layer: Some(i),
                                field,
                                rule: Rule::HeadDimCoupling,
                                value: v as u64,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn is_valid(g: &ArchGenome, r: &SpaceRanges) -> bool {
    validate(g, r).is_empty()
}

/// Picks a divisor of `n` on `grid`: the largest one `<= cap`, or failing that
/// the smallest one on the grid. Returns `None` if the grid holds no divisor.
fn divisor_at_most(n: u32, cap: u32, grid: &GridRange) -> Option<u32> {
    let divides = |d: &u32| *d > 0 && n % *d == 0;
    grid.values()
        .filter(|d| *d <= cap)
        .filter(divides)
        .max()
        .or_else(|| grid.values().find(divides))
}

fn repair_layer(l: &mut LayerGene, d_model: u32, r: &SpaceRanges) {
    // clamp + grid snap
    l.n_h = r.n_h.snap(l.n_h);
    l.n_kv = r.n_kv.snap(l.n_kv);
    l.d_mlp = r.d_mlp.snap(l.d_mlp);
    match r.variant {
        AttentionVariant::Iha => {
            l.d_qk = r.d_qk.snap(l.d_qk);
            l.d_v = r.d_v.snap(l.d_v);
        }
        AttentionVariant::Gqa => {
            if let Some(n_h) = divisor_at_most(d_model, l.n_h, &r.n_h).filter(|_| d_model > 0) {
                l.n_h = n_h;
                l.d_qk = d_model / n_h;
                l.d_v = d_model / n_h;
            }
        }
    }
    // divisor lowering
    if let Some(n_kv) = divisor_at_most(l.n_h, l.n_kv, &r.n_kv) {
        l.n_kv = n_kv;
    }
}

/// Projects `g` back into the design space: clamp, snap to grid, then lower
/// `n_kv` to the largest admissible divisor of `n_h`. Idempotent.
pub fn repair(g: &ArchGenome, r: &SpaceRanges) -> ArchGenome {
    let mut out = g.clone();
    let global = &mut out.global;
    global.d_model = global.d_model.max(1);
    global.block_size = global.block_size.max(1);
    global.max_layers = global.max_layers.max(1);
    out.layers
        .resize(global.max_layers as usize, LayerGene::pruned());
    let d_model = global.d_model;
    for l in &mut out.layers {
        repair_layer(l, d_model, r);
    }
    if out.active_count() == 0 {
        out.layers[0].mask = true;
    }
    out
}

/// KV group serving query head `h` (both 1-based).
pub fn group_map(h: u32, n_h: u32, n_kv: u32) -> Result<u32> {
    if n_kv == 0 || n_h == 0 || n_h % n_kv != 0 {
        return Err(Error::domain(format!(
            "n_kv = {n_kv} does not divide n_h = {n_h}"
        )));
    }
    if h == 0 || h > n_h {
        return Err(Error::domain(format!("head index {h} outside 1..={n_h}")));
    }
    let per_group = n_h / n_kv;
    Ok(1 + (h - 1) / per_group)
}

/// Total weight-matrix parameters. Embedding and unembedding matrices are
/// counted once as `vocab * d_model`; pass `vocab = 0` to exclude them.
pub fn count_params(g: &ArchGenome, vocab: u64) -> u64 {
    let d = g.global.d_model;
    g.active_layers()
        .fold(vocab.saturating_mul(d as u64), |acc, (_, l)| {
            acc.saturating_add(l.weight_count(d))
        })
}

/// Number of distinct per-layer attention shapes `(n_h, n_kv, d_qk, d_v)`.
pub fn count_attention_configs(variant: AttentionVariant, d_model: u32, r: &SpaceRanges) -> u64 {
    let pairs = |n_h: u32| {
        r.n_kv
            .values()
            .filter(|&kv| kv > 0 && n_h % kv == 0)
            .count() as u64
    };
    match variant {
        AttentionVariant::Iha => {
            let heads: u64 = r.n_h.values().map(pairs).sum();
            heads * r.d_qk.len() as u64 * r.d_v.len() as u64
        }
        AttentionVariant::Gqa => r
            .n_h
            .values()
            .filter(|&n_h| n_h > 0 && d_model % n_h == 0)
            .map(pairs)
            .sum(),
    }
}

/// Uniform independent draw per field followed by [`repair`].
pub fn random_genome_with<R: Rng + ?Sized>(
    global: &GlobalConfig,
    r: &SpaceRanges,
    rng: &mut R,
) -> ArchGenome {
    let layers = (0..global.max_layers)
        .map(|_| LayerGene {
            mask: rng.random_bool(0.5),
            attn: rng.random_bool(0.5),
            n_h: r.n_h.sample(rng),
            n_kv: r.n_kv.sample(rng),
            d_qk: r.d_qk.sample(rng),
            d_v: r.d_v.sample(rng),
            d_mlp: r.d_mlp.sample(rng),
        })
        .collect();
    repair(
        &ArchGenome {
            global: *global,
            layers,
        },
        r,
    )
}

pub fn random_genome(global: &GlobalConfig, r: &SpaceRanges, seed: u64) -> ArchGenome {
    random_genome_with(global, r, &mut util::rng(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_layer(gene: LayerGene) -> ArchGenome {
        ArchGenome::from_active(GlobalConfig::default(), &[gene])
    }

    #[test]
    fn divisible_grouping_is_valid() {
        let g = one_layer(LayerGene::active(8, 4, 64, 64, 512));
        assert!(validate(&g, &SpaceRanges::default()).is_empty());
    }

    #[test]
    fn indivisible_grouping_is_one_violation() {
        let g = one_layer(LayerGene::active(8, 3, 64, 64, 512));
        let v = validate(&g, &SpaceRanges::default());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].rule, Rule::GroupDivisibility);
        assert_eq!(v[0].layer, Some(0));
    }

    #[test]
    fn off_grid_width_is_one_violation() {
        let g = one_layer(LayerGene::active(8, 4, 65, 64, 512));
        let v = validate(&g, &SpaceRanges::default());
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].field, v[0].rule), (Field::DQk, Rule::OffGrid));
    }

    #[test]
    fn pruned_slots_are_not_checked() {
        let mut g = one_layer(LayerGene::active(8, 4, 64, 64, 512));
        g.layers[5] = LayerGene {
            mask: false,
            ..LayerGene::active(99, 7, 1, 1, 1)
        };
        assert!(is_valid(&g, &SpaceRanges::default()));
    }

    #[test]
    fn repair_examples() {
        let r = SpaceRanges::default();
        let g = repair(&one_layer(LayerGene::active(8, 3, 70, 64, 512)), &r);
        assert_eq!(g.layers[0].n_kv, 2);
        assert_eq!(g.layers[0].d_qk, 64);
        let valid = one_layer(LayerGene::active(12, 4, 256, 96, 1024));
        assert_eq!(repair(&valid, &r), valid);
    }

    #[test]
    fn snap_ties_go_down() {
        let grid = GridRange::new(64, 32, 512);
        assert_eq!(grid.snap(80), 64);
        assert_eq!(grid.snap(81), 96);
        assert_eq!(grid.snap(0), 64);
        assert_eq!(grid.snap(10_000), 512);
        assert_eq!(grid.shift(512, 1), 512);
        // a grid whose max is not a grid point
        let ragged = GridRange::new(0, 10, 25);
        assert_eq!(ragged.snap(25), 20);
    }

    #[test]
    fn repair_reactivates_empty_genome() {
        let mut g = ArchGenome::from_active(GlobalConfig::default(), &[]);
        g.layers.truncate(3);
        let fixed = repair(&g, &SpaceRanges::default());
        assert_eq!(fixed.layers.len(), 40);
        assert_eq!(fixed.active_count(), 1);
        assert!(is_valid(&fixed, &SpaceRanges::default()));
    }

    #[test]
    fn gqa_repair_couples_head_dims() {
        let r = SpaceRanges::default().with_variant(AttentionVariant::Gqa);
        let g = repair(&one_layer(LayerGene::active(5, 5, 64, 512, 512)), &r);
        let l = g.layers[0];
        assert_eq!((l.n_h, l.n_kv, l.d_qk, l.d_v), (4, 4, 192, 192));
        assert!(is_valid(&g, &r));
    }

    #[test]
    fn group_map_examples() {
        assert_eq!(group_map(3, 8, 4).unwrap(), 2);
        assert_eq!(group_map(1, 12, 3).unwrap(), 1);
        assert_eq!(group_map(8, 8, 2).unwrap(), 2);
        assert!(group_map(1, 8, 3).is_err());
        assert!(group_map(9, 8, 2).is_err());
        assert!(group_map(0, 8, 2).is_err());
    }

    #[test]
    fn param_count_examples() {
        // Oracle: sum of the matrix areas of each projection.
        let d = 768u64;
        let areas = [
            d * 9 * 64,
            d * 3 * 64,
            d * 3 * 96,
            9 * 96 * d,
            d * 1536,
            1536 * d,
        ];
        let expected: u64 = areas.iter().sum();
        assert_eq!(expected, 3_833_856);

        let gene = LayerGene::active(9, 3, 64, 96, 1536);
        assert_eq!(count_params(&one_layer(gene), 0), expected);
        let no_attn = LayerGene {
            attn: false,
            ..gene
        };
        assert_eq!(count_params(&one_layer(no_attn), 0), 2_359_296);
        assert_eq!(count_params(&one_layer(no_attn), 10), 2_359_296 + 7680);
    }

    #[test]
    fn config_counts() {
        let r = SpaceRanges::default();
        assert_eq!(count_attention_configs(AttentionVariant::Gqa, 768, &r), 27);
        assert_eq!(
            count_attention_configs(AttentionVariant::Iha, 768, &r),
            11_250
        );
        let tiny = SpaceRanges {
            n_h: GridRange::new(1, 1, 2),
            ..r
        };
        assert_eq!(count_attention_configs(AttentionVariant::Gqa, 64, &tiny), 3);
    }

    #[test]
    fn random_genome_is_deterministic_and_valid() {
        let (global, r) = (GlobalConfig::default(), SpaceRanges::default());
        let a = random_genome(&global, &r, 7);
        assert_eq!(a, random_genome(&global, &r, 7));
        assert_ne!(a, random_genome(&global, &r, 8));
        for seed in 0..50 {
            assert!(is_valid(&random_genome(&global, &r, seed), &r));
        }
        let gqa = r.with_variant(AttentionVariant::Gqa);
        for seed in 0..50 {
            assert!(is_valid(&random_genome(&global, &gqa, seed), &gqa));
        }
    }

    #[test]
    fn head_count_draws_are_uniform() {
        let r = SpaceRanges::default();
        let mut rng = util::rng(2024);
        let mut counts = [0u32; 16];
        let n = 10_000;
        for _ in 0..n {
            counts[(r.n_h.sample(&mut rng) - 1) as usize] += 1;
        }
        let p = 1.0 / 16.0;
        let mean = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!(
                (c as f64 - mean).abs() <= 3.0 * sigma,
                "count {c} outside 3 sigma"
            );
        }
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - mean).powi(2) / mean)
            .sum();
        // 15 degrees of freedom, 99.9th percentile
        assert!(chi2 < 37.7, "chi2 = {chi2}");
    }

    #[test]
    fn json_round_trip_is_byte_stable() {
        let g = random_genome(&GlobalConfig::default(), &SpaceRanges::default(), 3);
        let text = g.to_json();
        let back = ArchGenome::from_json(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_json(), text);
        assert!(text.contains("\"max_layers\": 40"));
        assert!(text.contains("\"mask\": 1") || text.contains("\"mask\": 0"));
    }

    #[test]
    fn json_rejects_bad_documents() {
        assert!(ArchGenome::from_json("{}").is_err());
        let mut g = ArchGenome::from_active(
            GlobalConfig::default(),
            &[LayerGene::active(1, 1, 64, 64, 512)],
        );
        g.layers.pop();
        let text = serde_json::to_string(&g).unwrap();
        assert!(ArchGenome::from_json(&text).is_err());
        let bad_bit = GOOD_SMALL.replace("\"mask\": 1", "\"mask\": 2");
        assert!(ArchGenome::from_json(&bad_bit).is_err());
        assert!(ArchGenome::from_json(GOOD_SMALL).is_ok());
    }

    const GOOD_SMALL: &str = r#"{"global": {"d_model": 64, "block_size": 16, "max_layers": 1},
        "layers": [{"mask": 1, "attn": 1, "n_h": 2, "n_kv": 1, "d_qk": 64, "d_v": 64, "d_mlp": 512}]}"#;

    fn arb_gene() -> impl Strategy<Value = LayerGene> {
        (
            any::<bool>(),
            any::<bool>(),
            0u32..40,
            0u32..40,
            0u32..700,
            0u32..700,
            0u32..5000,
        )
            .prop_map(|(mask, attn, n_h, n_kv, d_qk, d_v, d_mlp)| LayerGene {
                mask,
                attn,
                n_h,
                n_kv,
                d_qk,
                d_v,
                d_mlp,
            })
    }

    fn arb_genome() -> impl Strategy<Value = ArchGenome> {
        (prop::collection::vec(arb_gene(), 1..12), 1u32..1024).prop_map(|(layers, d_model)| {
            ArchGenome {
                global: GlobalConfig {
                    d_model,
                    block_size: 128,
                    max_layers: layers.len() as u32,
                },
                layers,
            }
        })
    }

    proptest! {
        #[test]
        fn repair_is_idempotent_and_valid(g in arb_genome(), gqa in any::<bool>()) {
            let variant = if gqa { AttentionVariant::Gqa } else { AttentionVariant::Iha };
            let r = SpaceRanges::default().with_variant(variant);
            let once = repair(&g, &r);
            prop_assert_eq!(repair(&once, &r), once.clone());
            prop_assert!(validate(&once, &r).is_empty(), "{:?}", validate(&once, &r));
        }

        #[test]
        fn group_map_is_balanced(n_h in 1u32..=16, pick in 0usize..8) {
            let divisors: Vec<u32> = (1..=n_h).filter(|d| n_h % d == 0).collect();
            let n_kv = divisors[pick % divisors.len()];
            let mut counts = vec![0u32; n_kv as usize];
            for h in 1..=n_h {
                counts[(group_map(h, n_h, n_kv).unwrap() - 1) as usize] += 1;
            }
            prop_assert!(counts.iter().all(|&c| c == n_h / n_kv));
        }

        #[test]
        fn gqa_never_exceeds_iha(d_model in 1u32..2048, hi in 1u32..20, qk_hi in 64u32..600) {
            let r = SpaceRanges {
                n_h: GridRange::new(1, 1, hi),
                d_qk: GridRange::new(64, 32, qk_hi),
                ..SpaceRanges::default()
            };
            prop_assert!(count_attention_configs(AttentionVariant::Gqa, d_model, &r)
                <= count_attention_configs(AttentionVariant::Iha, d_model, &r));
        }

        #[test]
        fn params_monotone_in_each_field(field in 0usize..5, base in 0u32..6) {
            let mut gene = LayerGene::active(4, 2, 128, 128, 1024);
            let bump = |g: &mut LayerGene, k: u32| match field {
                0 => g.d_qk += 32 * k,
                1 => g.d_v += 32 * k,
                2 => g.d_mlp += 256 * k,
                3 => g.n_h += 4 * k,
                _ => g.n_kv += k,
            };
            bump(&mut gene, base);
            let before = count_params(&one_layer(gene), 0);
            bump(&mut gene, 1);
            prop_assert!(count_params(&one_layer(gene), 0) >= before);
        }
    }
}
