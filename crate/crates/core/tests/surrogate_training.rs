use ihanas::genome::{GlobalConfig, SpaceRanges};
use ihanas::metrics::kendall_tau;
use ihanas::surrogate::{
    synthesize_corpus, train, EncoderConfig, EncoderSurrogate, FieldNormalizer, LabeledCorpus,
    MlpBaseline, MlpConfig, Regressor, Sample, TrainConfig, DEFAULT_NOISE_STD,
};

fn samples<M: Regressor>(m: &M, corpus: &LabeledCorpus, idx: &[usize]) -> Vec<Sample> {
    idx.iter()
        .map(|&i| {
            let (g, y) = &corpus.rows[i];
            (m.featurize(g).unwrap(), *y)
        })
        .collect()
}

fn tau<M: Regressor>(m: &M, data: &[Sample]) -> f64 {
    let pred: Vec<f64> = data
        .iter()
        .map(|(x, _)| m.forward(x, ihanas::surrogate::Dropout::Off).unwrap())
        .collect();
    let truth: Vec<f64> = data.iter().map(|(_, y)| *y).collect();
    kendall_tau(&pred, &truth).unwrap()
}

fn corpus(n: usize, seed: u64) -> LabeledCorpus {
    synthesize_corpus(
        n,
        &GlobalConfig::default(),
        &SpaceRanges::default(),
        seed,
        DEFAULT_NOISE_STD,
    )
}

#[test]
fn default_recipe_halves_train_l1_on_200_samples() {
    let c = corpus(200, 0);
    let all: Vec<usize> = (0..c.len()).collect();
    let norm = FieldNormalizer::fit(c.rows.iter().map(|(g, _)| g)).unwrap();
    let m = EncoderSurrogate::new(EncoderConfig::default(), norm, 0).unwrap();
    let data = samples(&m, &c, &all);
    let (_, report) = train(m, &data, &[], &TrainConfig::default()).unwrap();
    assert_eq!(report.epochs.len(), 200);
    assert!(
        report.final_train_l1 < 0.5 * report.initial_train_l1,
        "{} -> {}",
        report.initial_train_l1,
        report.final_train_l1
    );
}

#[test]
fn single_sample_is_memorized() {
    let c = corpus(1, 4);
    let norm = FieldNormalizer::fit(c.rows.iter().map(|(g, _)| g)).unwrap();
    let m = EncoderSurrogate::new(EncoderConfig::default(), norm, 1)
        .unwrap()
        .with_dropout(0.0)
        .unwrap();
    let data = samples(&m, &c, &[0]);
    let cfg = TrainConfig {
        epochs: 500,
        ..Default::default()
    };
    let (fit, _) = train(m, &data, &[], &cfg).unwrap();
    let err = (fit.predict(&c.rows[0].0).unwrap() - c.rows[0].1).abs();
    assert!(err < 0.01, "L1 {err}");
}

/// Slow: five full 200-epoch runs of both models. Run with `--ignored`.
#[test]
#[ignore]
fn encoder_ranks_better_than_mlp_over_five_seeds() {
    let c = corpus(200, 0);
    let mut enc = Vec::new();
    let mut mlp = Vec::new();
    for seed in 0..5 {
        let split = c.split(seed, 0.8).unwrap();
        let norm = FieldNormalizer::fit(split.train.iter().map(|&i| &c.rows[i].0)).unwrap();
        let cfg = TrainConfig {
            seed,
            ..Default::default()
        };

        let e = EncoderSurrogate::new(EncoderConfig::default(), norm.clone(), seed).unwrap();
        let (tr, te) = (samples(&e, &c, &split.train), samples(&e, &c, &split.test));
        let (e, _) = train(e, &tr, &te, &cfg).unwrap();
        enc.push(tau(&e, &te));

        let m = MlpBaseline::new(MlpConfig::default(), norm, seed).unwrap();
        let (tr, te) = (samples(&m, &c, &split.train), samples(&m, &c, &split.test));
        let (m, _) = train(m, &tr, &te, &cfg).unwrap();
        mlp.push(tau(&m, &te));
        println!(
            "seed {seed}: encoder tau {:.4}, mlp tau {:.4}",
            enc[seed as usize], mlp[seed as usize]
        );
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (e, m) = (median(&mut enc), median(&mut mlp));
    println!("median tau: encoder {e:.4}, mlp {m:.4}");
    assert!(e > m);
}
