use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use ihanas::genome::{
    count_attention_configs, validate, ArchGenome, AttentionVariant, GlobalConfig, GridRange,
    SpaceRanges,
};
use ihanas::hwcost::{chip_grid_sweep, ring_top_k, RingConfig, Workload};
use ihanas::iha_ref::property_suite;
use ihanas::metrics::MetricsReport;
use ihanas::search::{
    archive_csv, events_jsonl, generations_csv, individuals_csv, run_search, EvaluatorKind,
    SearchConfig, SurrogateState,
};
use ihanas::surrogate::{
    mc_predict, synthesize_corpus, train, Checkpoint, CheckpointMeta, CorpusRecord, EncoderConfig,
    EncoderSurrogate, FieldNormalizer, LabeledCorpus, MlpBaseline, MlpConfig, Regressor, Sample,
    TrainConfig, TrainReport,
};

use crate::artifacts::{prepare_out, read_input, thousands, write, Manifest, MANIFEST};
use crate::svg::{front_svg, Point};
use crate::{
    CheckIhaArgs, CliResult, CorpusArgs, CountArgs, EvalArgs, Failure, McArgs, PackArgs,
    SearchArgs, TrainArgs,
};

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_corpus(path: &Path) -> CliResult<LabeledCorpus> {
    let text = read_input(path)?;
    LabeledCorpus::parse_jsonl(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::input)
}

fn load_checkpoint(path: &Path) -> CliResult<(Checkpoint, EncoderSurrogate)> {
    let ck = Checkpoint::from_json(&read_input(path)?)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::input)?;
    let model = ck.to_encoder().map_err(Failure::input)?;
    Ok((ck, model))
}

fn surrogate_state(cfg: &SearchConfig, base: &Path, verbose: u8) -> CliResult<SurrogateState> {
    let src = &cfg.surrogate;
    match &src.checkpoint {
        Some(ck) => {
            let (_, model) = load_checkpoint(&resolve(base, ck))?;
            let corpus = match &src.corpus {
                Some(p) => load_corpus(&resolve(base, p))?,
                None => {
                    if cfg.refine_every > 0 {
                        eprintln!("warning: no surrogate.corpus given; refinement runs without replay rows");
                    }
                    LabeledCorpus::default()
                }
            };
            SurrogateState::from_corpus(model, &corpus).map_err(Failure::input)
        }
        None => {
            if verbose > 0 || src.bootstrap_epochs > 0 {
                eprintln!(
                    "training a baseline surrogate on {} synthetic genomes for {} epochs",
                    src.bootstrap_samples, src.bootstrap_epochs
                );
            }
            let (state, report) = SurrogateState::bootstrap(
                &cfg.global,
                &cfg.space,
                src.bootstrap_samples,
                src.bootstrap_epochs,
                cfg.seed,
            )
            .map_err(Failure::runtime)?;
            if verbose > 0 {
                eprintln!(
                    "baseline train L1 {:.4} -> {:.4}",
                    report.initial_train_l1, report.final_train_l1
                );
            }
            Ok(state)
        }
    }
}

pub fn search(a: SearchArgs, verbose: u8) -> CliResult {
    let text = read_input(&a.config)?;
    let mut cfg: SearchConfig = toml::from_str(&text)
        .map_err(|e| Failure::input(anyhow!("{}: {}", a.config.display(), e.message())))?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(b) = a.backend {
        cfg.backend = b;
    }
    if let Some(e) = a.evaluator {
        cfg.evaluator = match e.as_str() {
            "surrogate" => EvaluatorKind::Surrogate,
            "oracle" => EvaluatorKind::Oracle,
            other => {
                return Err(Failure::input(anyhow!(
                    "--evaluator: expected surrogate or oracle, got {other:?}"
                )))
            }
        };
        if cfg.evaluator == EvaluatorKind::Oracle {
            cfg.refine_every = 0;
        }
    }
    cfg.validate()
        .map_err(|e| Failure::input(anyhow!("{}: {e}", a.config.display())))?;
    prepare_out(&a.out.out, a.out.force)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let state = match cfg.evaluator {
        EvaluatorKind::Surrogate => Some(surrogate_state(&cfg, base, verbose)?),
        EvaluatorKind::Oracle => None,
    };

    let out = run_search(&cfg, state.as_ref()).map_err(Failure::runtime)?;

    let dir = &a.out.out;
    write(
        dir,
        MANIFEST,
        &Manifest::new("search", cfg.seed, &cfg).to_toml()?,
    )?;
    write(dir, "generations.csv", &generations_csv(&out.generations))?;
    write(dir, "archive.csv", &archive_csv(&out.archive))?;
    write(dir, "evaluated.csv", &individuals_csv(&out.evaluated))?;
    write(dir, "events.jsonl", &events_jsonl(&out.events))?;
    for m in out.archive.members() {
        write(
            dir,
            &format!("genomes/{:06}.json", m.id),
            &m.genome.to_json(),
        )?;
    }
    let points: Vec<Point> = out
        .archive
        .members()
        .iter()
        .map(|m| Point {
            val_loss: m.objectives.val_loss,
            e_tok_uj: m.objectives.e_tok_uj,
            ttft_ms: m.objectives.ttft_ms,
            tpot_ms: m.objectives.tpot_ms,
        })
        .collect();
    let title = format!("final front, backend {}", cfg.backend);
    write(dir, "front.svg", &front_svg(&points, &title))?;

    let last = out.generations.last().expect("stats row for generation 0");
    println!(
        "generations {}  evaluations {}  archive {}  hypervolume {:.4}  refinement events {}",
        cfg.generations,
        last.evaluations,
        out.archive.len(),
        last.hypervolume,
        out.events.len()
    );
    if cfg.evaluator == EvaluatorKind::Oracle || !out.events.is_empty() {
        println!(
            "note: validation-loss labels come from the synthetic oracle, not from training runs"
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn pack(a: PackArgs) -> CliResult {
    let genome = ArchGenome::from_json(&read_input(&a.genome)?)
        .with_context(|| format!("parsing {}", a.genome.display()))
        .map_err(Failure::input)?;
    if let Some(v) = validate(&genome, &SpaceRanges::default()).first() {
        return Err(Failure::input(anyhow!(
            "{}: invalid genome: {v}",
            a.genome.display()
        )));
    }
    let cfg = match &a.grid {
        Some(p) => RingConfig::from_toml(&read_input(p)?)
            .with_context(|| format!("parsing {}", p.display()))
            .map_err(Failure::input)?,
        None => RingConfig::default(),
    };
    let wl = Workload {
        prefill_len: a.prefill,
        decode_len: a.decode,
    };
    wl.validate().map_err(Failure::input)?;

    let sweep = chip_grid_sweep(&genome, &wl, &cfg).map_err(Failure::runtime)?;
    println!("grid points: {}", sweep.len());
    println!(
        "{:>6} {:>10} {:>10}  {:<10} {:>6} {:>8}",
        "n_mac", "w_core_kb", "chips_max", "status", "cores", "n_chips"
    );
    for o in &sweep {
        match &o.candidate {
            Some(c) => println!(
                "{:>6} {:>10} {:>10}  {:<10} {:>6} {:>8}",
                o.n_mac,
                o.w_core_kb,
                o.n_chips_max,
                "feasible",
                c.plan.chip.cores(),
                c.plan.n_chips()
            ),
            None => println!(
                "{:>6} {:>10} {:>10}  {:<10} {:>6} {:>8}",
                o.n_mac, o.w_core_kb, o.n_chips_max, "infeasible", "-", "-"
            ),
        }
    }
    let feasible: Vec<_> = sweep.into_iter().filter_map(|o| o.candidate).collect();
    let top = ring_top_k(feasible, cfg.top_k);
    if top.is_empty() {
        eprintln!("warning: no grid point can host this genome; nothing to report");
        return Ok(());
    }
    println!();
    println!(
        "{:>4} {:>6} {:>10} {:>6} {:>8} {:>12} {:>12} {:>12} {:>8}",
        "rank", "n_mac", "w_core_kb", "cores", "n_chips", "ttft_ms", "tpot_ms", "e_tok_uj", "area"
    );
    for (k, c) in top.iter().enumerate() {
        println!(
            "{:>4} {:>6} {:>10} {:>6} {:>8} {:>12.4} {:>12.6} {:>12.4} {:>8.3}",
            k,
            c.plan.chip.n_mac,
            c.plan.chip.w_core_kb,
            c.plan.chip.cores(),
            c.plan.n_chips(),
            c.metrics.ttft_ms,
            c.metrics.tpot_ms,
            c.metrics.e_tok_uj,
            c.area_total
        );
    }
    if let Some(dir) = &a.out {
        prepare_out(dir, a.force)?;
        let manifest = PackManifest {
            genome: a.genome.display().to_string(),
            workload: wl,
            ring: cfg.clone(),
        };
        write(
            dir,
            MANIFEST,
            &Manifest::new("pack", 0, &manifest).to_toml()?,
        )?;
        for (k, c) in top.iter().enumerate() {
            let csv = c.plan.to_csv().map_err(Failure::runtime)?;
            let name = if k == 0 {
                "ring_plan.csv".to_owned()
            } else {
                format!("ring_plan_{k}.csv")
            };
            write(dir, &name, &csv)?;
        }
        println!("wrote {}", dir.display());
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct PackManifest {
    genome: String,
    workload: Workload,
    ring: RingConfig,
}

#[derive(serde::Serialize)]
struct TrainManifest<'a> {
    corpus: String,
    epochs: usize,
    train_fraction: f64,
    encoder: &'a EncoderConfig,
    with_mlp: bool,
}

fn samples<M: Regressor>(m: &M, corpus: &LabeledCorpus, idx: &[usize]) -> CliResult<Vec<Sample>> {
    idx.iter()
        .map(|&i| {
            let (g, y) = &corpus.rows[i];
            Ok((m.featurize(g).map_err(Failure::input)?, *y))
        })
        .collect()
}

fn curve_csv(r: &TrainReport) -> String {
    let mut s = String::from("epoch,train_l1,test_l1\n");
    for e in &r.epochs {
        let test = e.test_l1.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{}\n", e.epoch, e.train_l1, test));
    }
    s
}

fn eval_report<M: Regressor>(m: &M, test: &[Sample]) -> CliResult<MetricsReport> {
    let pred = test
        .iter()
        .map(|(x, _)| m.forward(x, ihanas::surrogate::Dropout::Off))
        .collect::<Result<Vec<_>, _>>()
        .map_err(Failure::runtime)?;
    let truth: Vec<f64> = test.iter().map(|(_, y)| *y).collect();
    MetricsReport::compute(&pred, &truth).map_err(Failure::runtime)
}

fn print_report(name: &str, r: &MetricsReport, n: usize) {
    println!("{name} on {n} held-out rows");
    println!("  kendall tau   {:.4}", r.tau);
    println!("  spearman rho  {:.4}", r.rho);
    println!("  MAE           {:.4}", r.mae);
    println!("  MAE@5%        {:.4}", r.mae_at_5pct);
    println!("  k@1%          {}", r.k_at_1pct);
    println!("  k@5%          {}", r.k_at_5pct);
}

pub fn surrogate_train(a: TrainArgs, verbose: u8) -> CliResult {
    let corpus = load_corpus(&a.corpus)?;
    let split = corpus
        .split(a.seed, a.train_fraction)
        .map_err(Failure::input)?;
    let norm = FieldNormalizer::fit(split.train.iter().map(|&i| &corpus.rows[i].0))
        .map_err(Failure::input)?;
    let max_layers = corpus
        .rows
        .iter()
        .map(|(g, _)| g.layers.len())
        .max()
        .unwrap_or(0);
    let enc_cfg = EncoderConfig {
        max_len: max_layers.max(EncoderConfig::default().max_len),
        ..EncoderConfig::default()
    };
    let model =
        EncoderSurrogate::new(enc_cfg.clone(), norm.clone(), a.seed).map_err(Failure::input)?;
    println!(
        "encoder parameters: {}",
        thousands(model.param_count() as u64)
    );
    prepare_out(&a.out.out, a.out.force)?;

    let train_set = samples(&model, &corpus, &split.train)?;
    let test_set = samples(&model, &corpus, &split.test)?;
    let tc = TrainConfig {
        epochs: a.epochs,
        seed: a.seed,
        ..TrainConfig::default()
    };
    if verbose > 0 {
        eprintln!(
            "training on {} rows, testing on {}",
            train_set.len(),
            test_set.len()
        );
    }
    let (trained, report) = train(model, &train_set, &test_set, &tc).map_err(Failure::runtime)?;
    let meta = CheckpointMeta {
        split_seed: Some(a.seed),
        train_fraction: Some(a.train_fraction),
        train_seed: Some(a.seed),
        label_source: Some("synthetic oracle or user corpus".to_owned()),
    };
    let dir = &a.out.out;
    write(
        dir,
        "checkpoint.json",
        &Checkpoint::from_encoder(&trained, meta).to_json(),
    )?;
    write(dir, "curve.csv", &curve_csv(&report))?;
    println!(
        "train L1 {:.4} -> {:.4}; best held-out L1 {:.4} at epoch {}",
        report.initial_train_l1,
        report.final_train_l1,
        report.best_l1,
        report
            .best_epoch
            .map_or("init".to_owned(), |e| e.to_string())
    );
    if test_set.len() >= 2 {
        print_report(
            "encoder",
            &eval_report(&trained, &test_set)?,
            test_set.len(),
        );
    }
    if a.with_mlp {
        let mlp_cfg = MlpConfig {
            max_len: enc_cfg.max_len,
            ..MlpConfig::default()
        };
        let mlp = MlpBaseline::new(mlp_cfg, norm, a.seed).map_err(Failure::input)?;
        println!("mlp parameters: {}", thousands(mlp.param_count() as u64));
        let (mlp, mlp_report) = train(mlp, &train_set, &test_set, &tc).map_err(Failure::runtime)?;
        write(dir, "curve_mlp.csv", &curve_csv(&mlp_report))?;
        if test_set.len() >= 2 {
            print_report("mlp", &eval_report(&mlp, &test_set)?, test_set.len());
        }
    }
    let manifest = TrainManifest {
        corpus: a.corpus.display().to_string(),
        epochs: a.epochs,
        train_fraction: a.train_fraction,
        encoder: &enc_cfg,
        with_mlp: a.with_mlp,
    };
    write(
        dir,
        MANIFEST,
        &Manifest::new("surrogate train", a.seed, &manifest).to_toml()?,
    )?;
    println!("wrote {}", dir.display());
    Ok(())
}

pub fn surrogate_eval(a: EvalArgs) -> CliResult {
    let (ck, model) = load_checkpoint(&a.checkpoint)?;
    let corpus = load_corpus(&a.corpus)?;
    let seed = a.seed.or(ck.meta.split_seed).unwrap_or(0);
    let fraction = a.train_fraction.or(ck.meta.train_fraction).unwrap_or(0.8);
    let split = corpus.split(seed, fraction).map_err(Failure::input)?;
    if split.test.len() < 2 {
        return Err(Failure::input(anyhow!(
            "held-out split has {} rows; at least 2 are needed",
            split.test.len()
        )));
    }
    let test = samples(&model, &corpus, &split.test)?;
    print_report("encoder", &eval_report(&model, &test)?, test.len());
    Ok(())
}

pub fn surrogate_mc(a: McArgs) -> CliResult {
    let (_, model) = load_checkpoint(&a.checkpoint)?;
    let text = read_input(&a.genomes)?;
    println!("{:>5} {:>10} {:>10}", "line", "mu", "sigma");
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let g = match serde_json::from_str::<CorpusRecord>(line) {
            Ok(r) => r.genome,
            Err(_) => ArchGenome::from_json(line)
                .with_context(|| format!("{} line {}", a.genomes.display(), i + 1))
                .map_err(Failure::input)?,
        };
        let x = model.featurize(&g).map_err(Failure::input)?;
        let (mu, sigma) = mc_predict(&model, &x, a.n_mc, a.seed).map_err(Failure::input)?;
        println!("{:>5} {:>10.5} {:>10.5}", i + 1, mu, sigma);
    }
    Ok(())
}

pub fn count(a: CountArgs) -> CliResult {
    let d = GridRange::new(a.d_min, a.d_step, a.d_max);
    let r = SpaceRanges {
        n_h: GridRange::new(1, 1, a.n_h_max),
        n_kv: GridRange::new(1, 1, a.n_kv_max),
        d_qk: d,
        d_v: d,
        ..SpaceRanges::default()
    };
    if !r.is_well_formed() || a.d_model == 0 || a.n_h_max == 0 || a.n_kv_max == 0 {
        return Err(Failure::input(anyhow!(
            "ranges need positive maxima, d_step > 0 and d_min <= d_max"
        )));
    }
    let gqa = count_attention_configs(AttentionVariant::Gqa, a.d_model, &r);
    let iha = count_attention_configs(AttentionVariant::Iha, a.d_model, &r);
    let ratio = if gqa == 0 {
        "n/a".to_owned()
    } else {
        format!("{:.1}", iha as f64 / gqa as f64)
    };
    println!("GQA: {gqa}, IHA: {iha}, ratio ≈ {ratio}×");
    Ok(())
}

pub fn check_iha(a: CheckIhaArgs) -> CliResult {
    if a.draws == 0 {
        return Err(Failure::input(anyhow!("--draws must be at least 1")));
    }
    let checks = property_suite(a.draws, a.seed).map_err(Failure::runtime)?;
    let mut failed = 0;
    for c in &checks {
        println!(
            "{} {:<34} max err {:.2e} over {} draws",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.max_err,
            c.draws
        );
        failed += usize::from(!c.passed);
    }
    if failed > 0 {
        return Err(Failure::runtime(anyhow!("{failed} property checks failed")));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}

pub fn corpus(a: CorpusArgs) -> CliResult {
    if a.out.exists() && !a.force {
        return Err(Failure::input(anyhow!(
            "{} exists; pass --force to overwrite",
            a.out.display()
        )));
    }
    if !(a.noise_std >= 0.0 && a.noise_std.is_finite()) || a.max_layers == 0 || a.n == 0 {
        return Err(Failure::input(anyhow!(
            "need n >= 1, max_layers >= 1 and a finite non-negative noise_std"
        )));
    }
    let global = GlobalConfig {
        max_layers: a.max_layers,
        ..GlobalConfig::default()
    };
    let c = synthesize_corpus(a.n, &global, &SpaceRanges::default(), a.seed, a.noise_std);
    std::fs::write(&a.out, c.to_jsonl())
        .with_context(|| format!("writing {}", a.out.display()))
        .map_err(Failure::runtime)?;
    println!("wrote {} synthetic rows to {}", c.len(), a.out.display());
    Ok(())
}
