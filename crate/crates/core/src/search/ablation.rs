//! Hypervolume-versus-generation curves for search recipes over seeds.

use serde::{Deserialize, Serialize};

use super::{run_search, Recipe, SearchConfig, SurrogateState};
use crate::error::{Error, Result};
use crate::genome::AttentionVariant;
use crate::metrics::mean_std;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationRecipe {
    NsgaIha,
    RandomIha,
    NsgaGqa,
}

impl AblationRecipe {
    pub const ALL: [Self; 3] = [Self::NsgaIha, Self::RandomIha, Self::NsgaGqa];

    pub fn label(&self) -> &'static str {
        match self {
            Self::NsgaIha => "NSGA+IHA",
            Self::RandomIha => "Random+IHA",
            Self::NsgaGqa => "NSGA+GQA",
        }
    }

    /// `base` with this recipe's offspring rule and attention variant.
    pub fn apply(&self, base: &SearchConfig) -> SearchConfig {
        let mut cfg = base.clone();
        let (recipe, variant) = match self {
            Self::NsgaIha => (Recipe::Nsga, AttentionVariant::Iha),
            Self::RandomIha => (Recipe::Random, AttentionVariant::Iha),
            Self::NsgaGqa => (Recipe::Nsga, AttentionVariant::Gqa),
        };
        cfg.recipe = recipe;
        cfg.space.variant = variant;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCurve {
    pub recipe: AblationRecipe,
    pub seed: u64,
    /// One value per stats row (generation 0 through G).
    pub hypervolume: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub recipe: AblationRecipe,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub median_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub reference: (f64, f64),
    pub curves: Vec<AblationCurve>,
    pub summaries: Vec<CurveSummary>,
}

impl AblationReport {
    pub fn summary(&self, recipe: AblationRecipe) -> Option<&CurveSummary> {
        self.summaries.iter().find(|s| s.recipe == recipe)
    }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Runs every recipe once per seed. All runs share `base`'s hypervolume
/// reference so the curves are comparable.
pub fn ablation_suite(
    base: &SearchConfig,
    recipes: &[AblationRecipe],
    seeds: &[u64],
    surrogate: Option<&SurrogateState>,
) -> Result<AblationReport> {
    if seeds.len() < 2 {
        return Err(Error::domain("an ablation needs at least two seeds"));
    }
    let reference = base.hv_reference();
    let mut curves = Vec::new();
    let mut summaries = Vec::new();
    for &recipe in recipes {
        let mut runs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut cfg = recipe.apply(base);
            cfg.seed = seed;
            cfg.hv_reference = Some([reference.0, reference.1]);
            let out = run_search(&cfg, surrogate)?;
            runs.push(
                out.generations
                    .iter()
                    .map(|g| g.hypervolume)
                    .collect::<Vec<_>>(),
            );
        }
        let rows = runs[0].len();
        let cols: Vec<_> = (0..rows)
            .map(|t| mean_std(&runs.iter().map(|r| r[t]).collect::<Vec<_>>()))
            .collect();
        summaries.push(CurveSummary {
            recipe,
            mean: cols.iter().map(|c| c.mean).collect(),
            std: cols.iter().map(|c| c.std).collect(),
            median_final: median(&runs.iter().map(|r| r[rows - 1]).collect::<Vec<_>>()),
        });
        curves.extend(
            seeds
                .iter()
                .zip(runs)
                .map(|(&seed, hypervolume)| AblationCurve {
                    recipe,
                    seed,
                    hypervolume,
                }),
        );
    }
    Ok(AblationReport {
        reference,
        curves,
        summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn one_seed_is_rejected() {
        let cfg = SearchConfig {
            evaluator: super::super::EvaluatorKind::Oracle,
            refine_every: 0,
            ..SearchConfig::surrogate_preset()
        };
        assert!(ablation_suite(&cfg, &AblationRecipe::ALL, &[0], None).is_err());
    }
}
