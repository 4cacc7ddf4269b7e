//! NSGA-II architecture search with an optional co-evolving surrogate.
//!
//! [`run_search`] breeds offspring by tournament selection, single-point
//! crossover and four mutation operators, scores them with a validation-loss
//! evaluator and a hardware backend, and keeps the population by
//! constraint-dominated non-dominated sorting. When `refine_every > 0`, a
//! refinement event every `K` generations labels an exploit/explore batch
//! with the oracle and refits the surrogate from its frozen baseline.

mod ablation;
mod archive;
mod operators;
mod output;

pub use ablation::{ablation_suite, AblationCurve, AblationRecipe, AblationReport, CurveSummary};
pub use archive::ParetoArchive;
pub use operators::{
    acquisition_select, crossover, crossover_at, delete_op, duplicate_op, mutate, nsga_survival,
    perturb_op, rank_population, reflect_active, rotate_active, rotate_or_reflect_op,
    tournament_select, tournament_winner, Lineage, OperatorRates, Ranking,
};
pub use output::{archive_csv, events_jsonl, generations_csv, individuals_csv};

use std::collections::HashSet;
use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{
    count_params, random_genome_with, validate, ArchGenome, GlobalConfig, LayerGene, SpaceRanges,
    DEFAULT_VOCAB,
};
use crate::hwcost::{HwBackend, HwMetrics, RingConfig, SubstrateSpec, Workload};
use crate::metrics::{fast_non_dominated_sort, hypervolume_2d, Constrained, ObjectiveVector};
use crate::surrogate::{
    fine_tune, mc_predict, synth_oracle, synthesize_corpus, train, EncoderConfig, EncoderSurrogate,
    FieldNormalizer, FineTuneConfig, LabeledCorpus, Regressor, Sample, TrainConfig, TrainReport,
    DEFAULT_NOISE_STD,
};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvaluatorKind {
    Surrogate,
    Oracle,
}

/// How offspring are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recipe {
    /// Tournament, crossover and mutation.
    #[default]
    Nsga,
    /// Fresh uniform draws from the space; survival is unchanged.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub noise_std: f64,
    pub noise_seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            noise_std: DEFAULT_NOISE_STD,
            noise_seed: 0,
        }
    }
}

/// Fine-tuning knobs for refinement events; the replay ratio lives on
/// [`SearchConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefitConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for RefitConfig {
    fn default() -> Self {
        let d = FineTuneConfig::default();
        Self {
            epochs: d.epochs,
            lr: d.lr,
            batch_size: d.batch_size,
        }
    }
}

/// Where the baseline surrogate comes from. Paths are resolved by the
/// caller; the library only consumes a ready [`SurrogateState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSource {
    pub checkpoint: Option<PathBuf>,
    /// Training corpus, used as replay data during refinement.
    pub corpus: Option<PathBuf>,
    /// Without a checkpoint: size of the synthetic corpus to train on.
    pub bootstrap_samples: usize,
    pub bootstrap_epochs: usize,
}

impl Default for SurrogateSource {
    fn default() -> Self {
        Self {
            checkpoint: None,
            corpus: None,
            bootstrap_samples: 200,
            bootstrap_epochs: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub population: usize,
    pub offspring: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    /// Candidates need `val_loss < val_loss_max` to be feasible.
    pub val_loss_max: f64,
    pub evaluator: EvaluatorKind,
    /// `analytic:NAME` or `ring`.
    pub backend: String,
    #[serde(default)]
    pub seed: u64,
    /// Refinement cadence `K`; 0 disables refinement.
    #[serde(default)]
    pub refine_every: usize,
    #[serde(default = "default_refine_batch")]
    pub refine_batch: usize,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    #[serde(default = "default_replay_ratio")]
    pub replay_ratio: f64,
    #[serde(default)]
    pub recipe: Recipe,
    #[serde(default)]
    pub workload: Workload,
    #[serde(default)]
    pub operators: OperatorRates,
    #[serde(default)]
    pub global: GlobalConfig,
    #[serde(default)]
    pub space: SpaceRanges,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub refit: RefitConfig,
    #[serde(default)]
    pub surrogate: SurrogateSource,
    /// Custom accelerator for `analytic:NAME` when NAME is not a preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub substrate: Option<SubstrateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ring: Option<RingConfig>,
    /// Hypervolume reference in (val_loss, params in millions). Defaults to
    /// `(val_loss_max, largest model in the space)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hv_reference: Option<[f64; 2]>,
}

fn default_refine_batch() -> usize {
    8
}

fn default_n_mc() -> usize {
    10
}

fn default_replay_ratio() -> f64 {
    5.0
}

impl SearchConfig {
    /// Surrogate-driven preset with periodic refinement on Gemmini.
    pub fn surrogate_preset() -> Self {
        Self {
            population: 24,
            offspring: 48,
            generations: 40,
            crossover_rate: 0.6,
            mutation_rate: 0.3,
            val_loss_max: 3.8,
            evaluator: EvaluatorKind::Surrogate,
            backend: "analytic:gemmini".to_owned(),
            seed: 0,
            refine_every: 5,
            refine_batch: default_refine_batch(),
            n_mc: default_n_mc(),
            replay_ratio: default_replay_ratio(),
            recipe: Recipe::Nsga,
            workload: Workload::default(),
            operators: OperatorRates::default(),
            global: GlobalConfig::default(),
            space: SpaceRanges::default(),
            oracle: OracleConfig::default(),
            refit: RefitConfig::default(),
            surrogate: SurrogateSource::default(),
            substrate: None,
            ring: None,
            hv_reference: None,
        }
    }

    /// Ring co-search preset; every candidate is labeled by the oracle.
    pub fn ring_preset() -> Self {
        Self {
            offspring: 12,
            generations: 20,
            val_loss_max: 3.5,
            evaluator: EvaluatorKind::Oracle,
            backend: "ring".to_owned(),
            refine_every: 0,
            workload: Workload::ring(),
            ..Self::surrogate_preset()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("search config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, msg: String| Err(Error::domain(format!("{field}: {msg}")));
        for (field, v) in [
            ("population", self.population),
            ("offspring", self.offspring),
            ("generations", self.generations),
        ] {
            if v == 0 {
                return fail(field, "must be at least 1".into());
            }
        }
        for (field, p) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(field, format!("{p} outside [0, 1]"));
            }
        }
        if !self.operators.is_valid() {
            return fail("operators", "every rate must lie in [0, 1]".into());
        }
        if !self.val_loss_max.is_finite() {
            return fail("val_loss_max", "must be finite".into());
        }
        if !self.space.is_well_formed() {
            return fail("space", "every range needs step > 0 and min <= max".into());
        }
        if self.global.max_layers == 0 || self.global.d_model == 0 {
            return fail("global", "d_model and max_layers must be positive".into());
        }
        if self.global.max_layers > MAX_LAYERS {
            return fail("global.max_layers", format!("at most {MAX_LAYERS} slots"));
        }
        self.workload.validate()?;
        if !(self.oracle.noise_std >= 0.0 && self.oracle.noise_std.is_finite()) {
            return fail("oracle.noise_std", "must be finite and non-negative".into());
        }
        if self.refine_every > 0 {
            if self.evaluator != EvaluatorKind::Surrogate {
                return fail(
                    "refine_every",
                    "refinement needs evaluator = \"surrogate\"".into(),
                );
            }
            if self.refine_batch == 0 || self.n_mc == 0 {
                return fail(
                    "refine_batch",
                    "refine_batch and n_mc must be at least 1".into(),
                );
            }
            if self.refit.batch_size == 0 || !(self.refit.lr > 0.0) {
                return fail("refit", "batch_size and lr must be positive".into());
            }
            if !(self.replay_ratio >= 0.0 && self.replay_ratio.is_finite()) {
                return fail("replay_ratio", "must be finite and non-negative".into());
            }
        }
        if let Some([l, p]) = self.hv_reference {
            if !(l.is_finite() && p.is_finite()) {
                return fail("hv_reference", "must be finite".into());
            }
        }
        if let Some(r) = &self.ring {
            r.validate()?;
        }
        self.backend()?;
        Ok(())
    }

    /// Resolves the `backend` selector.
    pub fn backend(&self) -> Result<HwBackend> {
        if self.backend == "ring" {
            let cfg = self.ring.clone().unwrap_or_default();
            cfg.validate()?;
            return Ok(HwBackend::Ring(cfg));
        }
        let Some(name) = self.backend.strip_prefix("analytic:") else {
            return Err(Error::domain(format!(
                "backend: expected \"analytic:NAME\" or \"ring\", got {:?}",
                self.backend
            )));
        };
        let spec = match &self.substrate {
            Some(s) if s.name.eq_ignore_ascii_case(name) => s.clone(),
            _ => SubstrateSpec::by_name(name).ok_or_else(|| {
                Error::domain(format!(
                    "backend: unknown substrate {name:?} and no [substrate] table with that name"
                ))
            })?,
        };
        spec.validate()?;
        Ok(HwBackend::Substrate(spec))
    }

    /// Hypervolume reference in (val_loss, params in millions).
    pub fn hv_reference(&self) -> (f64, f64) {
        match self.hv_reference {
            Some([l, p]) => (l, p),
            None => (
                self.val_loss_max,
                max_params(&self.global, &self.space) as f64 / 1e6,
            ),
        }
    }
}

/// Parameter count of the largest genome the space admits: every slot
/// active with every range at its top.
pub fn max_params(global: &GlobalConfig, r: &SpaceRanges) -> u64 {
    let top = LayerGene::active(
        r.n_h.top(),
        r.n_kv.top(),
        r.d_qk.top(),
        r.d_v.top(),
        r.d_mlp.top(),
    );
    let g = ArchGenome::from_active(*global, &vec![top; global.max_layers as usize]);
    count_params(&g, DEFAULT_VOCAB)
}

/// Upper limit on genome slots accepted from a config file.
pub const MAX_LAYERS: u32 = 4096;

/// Baseline surrogate plus the corpus it was trained on.
#[derive(Debug, Clone)]
pub struct SurrogateState {
    pub baseline: EncoderSurrogate,
    pub replay: Vec<Sample>,
}

impl SurrogateState {
    pub fn from_corpus(baseline: EncoderSurrogate, corpus: &LabeledCorpus) -> Result<Self> {
        let replay = corpus
            .rows
            .iter()
            .map(|(g, y)| Ok((baseline.featurize(g)?, *y)))
            .collect::<Result<_>>()?;
        Ok(Self { baseline, replay })
    }

    /// Trains a default encoder on `samples` synthetic genomes for `epochs`.
    pub fn bootstrap(
        global: &GlobalConfig,
        space: &SpaceRanges,
        samples: usize,
        epochs: usize,
        seed: u64,
    ) -> Result<(Self, TrainReport)> {
        let corpus = synthesize_corpus(samples, global, space, seed, DEFAULT_NOISE_STD);
        let norm = FieldNormalizer::fit(corpus.rows.iter().map(|(g, _)| g))?;
        let cfg = EncoderConfig {
            max_len: global.max_layers as usize,
            ..EncoderConfig::default()
        };
        let model = EncoderSurrogate::new(cfg, norm, seed)?;
        let state = Self::from_corpus(model, &corpus)?;
        let tc = TrainConfig {
            epochs,
            seed,
            ..TrainConfig::default()
        };
        let (trained, report) = train(state.baseline.clone(), &state.replay, &[], &tc)?;
        Ok((
            Self {
                baseline: trained,
                replay: state.replay,
            },
            report,
        ))
    }
}

/// One evaluated candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    /// Evaluation order, unique within a run.
    pub id: u64,
    pub genome: ArchGenome,
    pub objectives: ObjectiveVector,
    /// Parameters including embeddings.
    pub params: u64,
    /// Generation in which it was created; 0 for the initial population.
    pub born: usize,
    pub lineage: Lineage,
}

/// Per-generation summary. Row 0 describes the initial population; row
/// `t + 1` the state after generation `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub evaluations: usize,
    /// Lowest feasible validation loss in the population (`inf` if none).
    pub best_val_loss: f64,
    pub feasible_in_population: usize,
    pub archive_size: usize,
    /// Hypervolume of every feasible candidate so far in (val_loss, params [M]).
    pub hypervolume: f64,
}

/// A surrogate-refinement event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementEvent {
    pub generation: usize,
    pub exploit: Vec<u64>,
    pub explore: Vec<u64>,
    /// `(individual id, oracle label)` for every acquired candidate.
    pub labels: Vec<(u64, f64)>,
    pub dropped: usize,
    pub buffer_size: usize,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub archive: ParetoArchive,
    pub generations: Vec<GenerationStats>,
    pub events: Vec<RefinementEvent>,
    /// Every candidate in evaluation order.
    pub evaluated: Vec<Individual>,
    pub population: Vec<Individual>,
    /// Working surrogate at the end of the run, if one was used.
    pub surrogate: Option<EncoderSurrogate>,
}

struct Evaluator<'a> {
    cfg: &'a SearchConfig,
    backend: HwBackend,
    model: Option<EncoderSurrogate>,
    next_id: u64,
}

impl Evaluator<'_> {
    fn val_loss(&self, g: &ArchGenome) -> Result<f64> {
        match (self.cfg.evaluator, &self.model) {
            (EvaluatorKind::Oracle, _) => Ok(synth_oracle(
                g,
                self.cfg.oracle.noise_seed,
                self.cfg.oracle.noise_std,
            )),
            (EvaluatorKind::Surrogate, Some(m)) => m.predict(g),
            (EvaluatorKind::Surrogate, None) => Err(Error::domain(
                "evaluator = \"surrogate\" needs a surrogate state",
            )),
        }
    }

    fn evaluate(
        &mut self,
        genome: ArchGenome,
        born: usize,
        lineage: Lineage,
    ) -> Result<Individual> {
        if let Some(v) = validate(&genome, &self.cfg.space).first() {
            return Err(Error::domain(format!(
                "search produced an invalid genome: {v}"
            )));
        }
        let val_loss = self.val_loss(&genome)?;
        // A backend error marks the candidate infeasible instead of aborting.
        let (hw, hw_ok) = match self.backend.evaluate(&genome, &self.cfg.workload) {
            Ok(e) => (e.metrics, e.feasible),
            Err(_) => (HwMetrics::INFEASIBLE, false),
        };
        let limit = self.cfg.val_loss_max;
        let loss_violation = if val_loss.is_finite() {
            (val_loss - limit).max(0.0)
        } else {
            f64::INFINITY
        };
        let feasible = hw_ok && val_loss.is_finite() && val_loss < limit;
        let violation = if feasible {
            0.0
        } else {
            loss_violation + if hw_ok { 0.0 } else { 1.0 }
        };
        let objectives = ObjectiveVector {
            val_loss,
            e_tok_uj: hw.e_tok_uj,
            ttft_ms: hw.ttft_ms,
            tpot_ms: hw.tpot_ms,
            feasible,
            violation,
        };
        let id = self.next_id;
        self.next_id += 1;
        let params = count_params(&genome, DEFAULT_VOCAB);
        Ok(Individual {
            id,
            genome,
            objectives,
            params,
            born,
            lineage,
        })
    }
}

fn constrained_view(pop: &[Individual]) -> (Vec<[f64; 4]>, Vec<(bool, f64)>) {
    let values = pop.iter().map(|i| i.objectives.values()).collect();
    let flags = pop
        .iter()
        .map(|i| (i.objectives.feasible, i.objectives.violation))
        .collect();
    (values, flags)
}

fn as_constrained<'a>(values: &'a [[f64; 4]], flags: &[(bool, f64)]) -> Vec<Constrained<'a>> {
    values
        .iter()
        .zip(flags)
        .map(|(v, &(feasible, violation))| Constrained {
            objectives: v,
            feasible,
            violation,
        })
        .collect()
}

/// Running 2-D front of (val_loss, params [M]) over feasible candidates.
#[derive(Debug, Default)]
struct HvTracker {
    points: Vec<(f64, f64)>,
}

impl HvTracker {
    fn add(&mut self, ind: &Individual) {
        if ind.objectives.feasible {
            let p = (ind.objectives.val_loss, ind.params as f64 / 1e6);
            if !self.points.iter().any(|q| q.0 <= p.0 && q.1 <= p.1) {
                self.points.retain(|q| !(p.0 <= q.0 && p.1 <= q.1));
                self.points.push(p);
            }
        }
    }

    fn value(&self, reference: (f64, f64)) -> f64 {
        hypervolume_2d(&self.points, reference).value
    }
}

fn stats(
    generation: usize,
    evaluations: usize,
    pop: &[Individual],
    archive: &ParetoArchive,
    hv: &HvTracker,
    reference: (f64, f64),
) -> GenerationStats {
    let feasible: Vec<&Individual> = pop.iter().filter(|i| i.objectives.feasible).collect();
    GenerationStats {
        generation,
        evaluations,
        best_val_loss: feasible
            .iter()
            .map(|i| i.objectives.val_loss)
            .fold(f64::INFINITY, f64::min),
        feasible_in_population: feasible.len(),
        archive_size: archive.len(),
        hypervolume: hv.value(reference),
    }
}

fn breed<R: Rng + ?Sized>(
    cfg: &SearchConfig,
    pop: &[Individual],
    rng: &mut R,
) -> Vec<(ArchGenome, Lineage)> {
    match cfg.recipe {
        Recipe::Random => (0..cfg.offspring)
            .map(|_| {
                (
                    random_genome_with(&cfg.global, &cfg.space, rng),
                    Lineage {
                        sampled: true,
                        ..Lineage::default()
                    },
                )
            })
            .collect(),
        Recipe::Nsga => {
            let (values, flags) = constrained_view(pop);
            let points = as_constrained(&values, &flags);
            let pool = tournament_select(&points, cfg.population, rng);
            (0..cfg.offspring)
                .map(|_| {
                    let p1 = &pop[pool[rng.random_range(0..pool.len())]].genome;
                    let p2 = &pop[pool[rng.random_range(0..pool.len())]].genome;
                    let mut lineage = Lineage::default();
                    let mut child = if rng.random_bool(cfg.crossover_rate) {
                        lineage.crossover = true;
                        crossover(p1, p2, &cfg.space, rng)
                    } else {
                        p1.clone()
                    };
                    if rng.random_bool(cfg.mutation_rate) {
                        let (m, l) = mutate(&child, &cfg.space, &cfg.operators, rng);
                        child = m;
                        lineage = Lineage {
                            crossover: lineage.crossover,
                            ..l
                        };
                    }
                    (crate::genome::repair(&child, &cfg.space), lineage)
                })
                .collect()
        }
    }
}

/// Runs the search. `surrogate` is required when `cfg.evaluator` is
/// `surrogate`; its baseline is never modified.
pub fn run_search(cfg: &SearchConfig, surrogate: Option<&SurrogateState>) -> Result<SearchOutcome> {
    cfg.validate()?;
    if cfg.evaluator == EvaluatorKind::Surrogate {
        let s = surrogate
            .ok_or_else(|| Error::domain("evaluator = \"surrogate\" needs a surrogate state"))?;
        if s.baseline.config().max_len < cfg.global.max_layers as usize {
            return Err(Error::domain(format!(
                "surrogate accepts {} layers but global.max_layers = {}",
                s.baseline.config().max_len,
                cfg.global.max_layers
            )));
        }
    }
    let mut eval = Evaluator {
        cfg,
        backend: cfg.backend()?,
        model: surrogate
            .filter(|_| cfg.evaluator == EvaluatorKind::Surrogate)
            .map(|s| s.baseline.clone()),
        next_id: 0,
    };
    let reference = cfg.hv_reference();
    let mut rng = util::rng(cfg.seed);
    let mut evaluated = Vec::new();
    let mut archive = ParetoArchive::new();
    let mut hv = HvTracker::default();

    let mut pop = Vec::with_capacity(cfg.population);
    for _ in 0..cfg.population {
        let g = random_genome_with(&cfg.global, &cfg.space, &mut rng);
        pop.push(eval.evaluate(g, 0, Lineage::default())?);
    }
    evaluated.extend(pop.iter().cloned());
    archive.update(&pop);
    pop.iter().for_each(|i| hv.add(i));
    let mut generations = vec![stats(0, evaluated.len(), &pop, &archive, &hv, reference)];

    let mut events = Vec::new();
    let mut buffer: Vec<(ArchGenome, f64)> = Vec::new();
    let mut labeled: HashSet<ArchGenome> = HashSet::new();
    let mut pending: Option<EncoderSurrogate> = None;

    for t in 0..cfg.generations {
        if let Some(m) = pending.take() {
            eval.model = Some(m);
        }
        let children = breed(cfg, &pop, &mut rng);
        let mut offspring = Vec::with_capacity(children.len());
        for (g, lineage) in children {
            offspring.push(eval.evaluate(g, t + 1, lineage)?);
        }
        evaluated.extend(offspring.iter().cloned());
        offspring.iter().for_each(|i| hv.add(i));

        let mut combined = pop;
        combined.extend(offspring);
        let next: Vec<Individual> = {
            let (values, flags) = constrained_view(&combined);
            let points = as_constrained(&values, &flags);
            nsga_survival(&points, cfg.population)
                .into_iter()
                .map(|i| combined[i].clone())
                .collect()
        };
        archive.update(&combined);
        pop = next;

        if cfg.refine_every > 0 && t > 0 && t % cfg.refine_every == 0 {
            let state = surrogate.expect("checked above");
            let model = eval.model.as_ref().expect("surrogate evaluator");
            let event_seed = util::mix_seed(cfg.seed, 0x5EED_0000 + t as u64);
            let mut mu = Vec::with_capacity(pop.len());
            let mut sigma = Vec::with_capacity(pop.len());
            for (k, ind) in pop.iter().enumerate() {
                let x = model.featurize(&ind.genome)?;
                let (m, s) = mc_predict(model, &x, cfg.n_mc, util::mix_seed(event_seed, k as u64))?;
                mu.push(m);
                sigma.push(s);
            }
            let (values, flags) = constrained_view(&pop);
            let first: HashSet<usize> = fast_non_dominated_sort(&as_constrained(&values, &flags))
                .into_iter()
                .next()
                .unwrap_or_default()
                .into_iter()
                .collect();
            // Only the first copy of each not-yet-labeled genome is eligible.
            let mut seen = HashSet::new();
            let eligible: Vec<bool> = pop
                .iter()
                .map(|ind| !labeled.contains(&ind.genome) && seen.insert(&ind.genome))
                .collect();
            let fresh = |i: &usize| eligible[*i];
            let front: Vec<usize> = (0..pop.len())
                .filter(|i| first.contains(i))
                .filter(fresh)
                .collect();
            let rest: Vec<usize> = (0..pop.len())
                .filter(|i| !first.contains(i))
                .filter(fresh)
                .collect();
            let (exploit, explore) =
                acquisition_select(&front, &rest, &mu, &sigma, cfg.refine_batch);

            let mut labels = Vec::new();
            for &i in exploit.iter().chain(&explore) {
                let g = &pop[i].genome;
                let y = synth_oracle(g, cfg.oracle.noise_seed, cfg.oracle.noise_std);
                labels.push((pop[i].id, y));
                labeled.insert(g.clone());
                if y.is_finite() {
                    buffer.push((g.clone(), y));
                }
            }
            let dropped = labels.iter().filter(|(_, y)| !y.is_finite()).count();
            let mut steps = 0;
            if !buffer.is_empty() {
                let ft = FineTuneConfig {
                    replay_ratio: cfg.replay_ratio,
                    epochs: cfg.refit.epochs,
                    lr: cfg.refit.lr,
                    batch_size: cfg.refit.batch_size,
                    seed: event_seed,
                };
                let (refit, report) = fine_tune(&state.baseline, &buffer, &state.replay, &ft)?;
                steps = report.steps;
                pending = Some(refit);
            }
            events.push(RefinementEvent {
                generation: t,
                exploit: exploit.iter().map(|&i| pop[i].id).collect(),
                explore: explore.iter().map(|&i| pop[i].id).collect(),
                labels,
                dropped,
                buffer_size: buffer.len(),
                steps,
            });
        }
        generations.push(stats(
            t + 1,
            evaluated.len(),
            &pop,
            &archive,
            &hv,
            reference,
        ));
    }
    if let Some(m) = pending.take() {
        eval.model = Some(m);
    }

    Ok(SearchOutcome {
        archive,
        generations,
        events,
        evaluated,
        population: pop,
        surrogate: eval.model,
    })
}
