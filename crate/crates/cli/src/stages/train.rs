use std::path::PathBuf;

use cd_core::attribution::{decomposition_accuracy, vocab_baseline};
use cd_core::decomposer::{cd_tune, init_decomposition, save_decomposition, CdLoss, CdTuneResult, ConceptBasis};
use cd_core::embedding::{save_embeddings, LabeledText};
use cd_core::numerics::{dot, mean, variance};
use cd_core::transformer::{
    argmax, p_tune, pretrain_backbone, save_model, CurvePoint, Example, ToyTransformer, MANIFEST,
};
use cd_core::Matrix;
use serde::Serialize;

use crate::context::{write_json, write_text, Context, CD_DIR, MODEL_DIR, PROMPT_FILE, VOCAB_DIR};
use crate::data::{all_examples, examples, read_pretrain, split, vocabulary};
use crate::error::{CliError, CliResult};
use crate::stages::prepare::select_with;

#[derive(Serialize)]
struct PretrainSummary {
    texts: usize,
    accuracy: f64,
    curve: Vec<CurvePoint>,
}

/// Loads the backbone from the output directory, pretraining it first when
/// absent. A fresh backbone is saved and reloaded so every later stage sees
/// the same single-precision weights.
fn backbone(ctx: &Context, artifacts: &mut Vec<PathBuf>) -> CliResult<ToyTransformer> {
    let dir = ctx.path(MODEL_DIR);
    if !dir.join(MANIFEST).exists() {
        let corpus_path = ctx.cfg.require(&ctx.cfg.paths.pretrain, "pretrain")?;
        let corpus = read_pretrain(corpus_path, ctx.cfg.model.num_classes)?;
        let mut model = ToyTransformer::new(ctx.cfg.model.clone())?;
        let inputs = corpus
            .iter()
            .map(|(t, l)| Ok((model.encode_text(t)?, l.clone())))
            .collect::<cd_core::Result<Vec<_>>>()?;
        let report = pretrain_backbone(&mut model, &inputs, &ctx.cfg.pretrain)?;
        println!("backbone pretrained on {} texts, held-out accuracy {:.3}", corpus.len(), report.accuracy);
        save_model(&dir, &model)?;
        write_json(
            &dir.join("pretrain.json"),
            &PretrainSummary {
                texts: corpus.len(),
                accuracy: report.accuracy,
                curve: report.curve,
            },
        )?;
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.sort();
        artifacts.extend(files);
    }
    ctx.model()
}

#[derive(Serialize)]
struct TrainSummary {
    steps: usize,
    curve: Vec<CurvePoint>,
}

#[derive(Serialize)]
struct CdSummary {
    concepts: usize,
    initial: CdLoss,
    best: CdLoss,
    steps: usize,
    curve: Vec<CurvePoint>,
}

impl From<&CdTuneResult> for CdSummary {
    fn from(r: &CdTuneResult) -> Self {
        CdSummary {
            concepts: r.decomposition.n_concepts(),
            initial: r.initial,
            best: r.best,
            steps: r.steps,
            curve: r.curve.clone(),
        }
    }
}

#[derive(Serialize)]
struct TuneSummary {
    seed: u64,
    shots: String,
    n_train: usize,
    n_val: usize,
    p_tuning: TrainSummary,
    cd: CdSummary,
    vocab: CdSummary,
    vocab_concepts: Vec<String>,
}

/// Basis of vocabulary tokens, each assigned to its most similar label.
fn vocab_basis(ctx: &Context, train: &[LabeledText], n: usize) -> CliResult<ConceptBasis> {
    let encoder = ctx.cfg.encoder()?;
    let vocab = vocabulary(train);
    let tokens = vocab_baseline(&encoder, &ctx.labels, &vocab, n.min(vocab.len()))?;
    let label_emb = ctx
        .labels
        .names()
        .iter()
        .map(|l| encoder.embed(l))
        .collect::<cd_core::Result<Vec<_>>>()?;
    let classes = tokens
        .iter()
        .map(|t| {
            let e = encoder.embed(t)?;
            Ok(argmax(&label_emb.iter().map(|l| dot(l, &e)).collect::<Vec<_>>()))
        })
        .collect::<cd_core::Result<Vec<_>>>()?;
    Ok(ConceptBasis {
        ids: (0..tokens.len() as u32).collect(),
        classes,
        texts: tokens,
    })
}

struct SeedData {
    train: Vec<Example>,
    val: Vec<Example>,
}

fn seed_data(ctx: &Context, model: &ToyTransformer, data: &[LabeledText], seed: u64) -> CliResult<SeedData> {
    let s = split(data, &ctx.labels, ctx.cfg.shots, ctx.cfg.val_fraction, seed);
    if s.train.is_empty() {
        return Err(CliError::validation("training split is empty"));
    }
    Ok(SeedData {
        train: examples(model, &ctx.labels, data, &s.train)?,
        val: examples(model, &ctx.labels, data, &s.val)?,
    })
}

fn tune_seed(
    ctx: &Context,
    model: &ToyTransformer,
    basis: &ConceptBasis,
    vbasis: &ConceptBasis,
    data: &[LabeledText],
    seed: u64,
) -> CliResult<Vec<PathBuf>> {
    let dir = ctx.seed_dir(seed);
    let sd = seed_data(ctx, model, data, seed)?;
    let mut pcfg = ctx.cfg.p_tune;
    pcfg.seed = seed;
    let pt = p_tune(model, &sd.train, &sd.val, ctx.cfg.prompt_len, &pcfg)?;
    let prompt_path = dir.join(PROMPT_FILE);
    std::fs::create_dir_all(&dir)?;
    save_embeddings(&prompt_path, &pt.prompt)?;

    let mut tcfg = ctx.cfg.tune;
    tcfg.train.seed = seed;
    let init = init_decomposition(model, &pt.prompt, basis)?;
    let cd = cd_tune(model, &pt.prompt, &init, &sd.train, &sd.val, &tcfg)?;
    save_decomposition(dir.join(CD_DIR), &cd.decomposition, Some(tcfg.mu), Some(seed))?;

    let mut vcfg = tcfg;
    vcfg.freeze_c = true;
    let vinit = init_decomposition(model, &pt.prompt, vbasis)?;
    let vocab = cd_tune(model, &pt.prompt, &vinit, &sd.train, &sd.val, &vcfg)?;
    save_decomposition(dir.join(VOCAB_DIR), &vocab.decomposition, Some(vcfg.mu), Some(seed))?;

    let summary = TuneSummary {
        seed,
        shots: ctx.cfg.shots.to_string(),
        n_train: sd.train.len(),
        n_val: sd.val.len(),
        p_tuning: TrainSummary {
            steps: pt.steps,
            curve: pt.curve,
        },
        cd: (&cd).into(),
        vocab: (&vocab).into(),
        vocab_concepts: vbasis.texts.clone(),
    };
    let summary_path = dir.join("tune.json");
    write_json(&summary_path, &summary)?;
    println!(
        "seed {seed}: p-tuning {} steps, cd loss {:.4} -> {:.4}, vocab loss {:.4} -> {:.4}",
        pt.steps, cd.initial.total, cd.best.total, vocab.initial.total, vocab.best.total
    );
    let d = |w: &str| dir.join(w);
    Ok(vec![
        prompt_path,
        d(CD_DIR).join("decomposition.json"),
        d(CD_DIR).join("C.cdem"),
        d(CD_DIR).join("Q.cdem"),
        d(VOCAB_DIR).join("decomposition.json"),
        d(VOCAB_DIR).join("C.cdem"),
        d(VOCAB_DIR).join("Q.cdem"),
        summary_path,
    ])
}

pub fn tune(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let basis = ctx.basis()?;
    let data = ctx.train_data()?;
    let mut artifacts = Vec::new();
    let model = backbone(ctx, &mut artifacts)?;
    let n_vocab = ctx.cfg.vocab_concepts.unwrap_or(basis.len());
    let vbasis = vocab_basis(ctx, &data, n_vocab)?;
    for &seed in &ctx.seeds {
        artifacts.extend(tune_seed(ctx, &model, &basis, &vbasis, &data, seed)?);
    }
    Ok(artifacts)
}

#[derive(Serialize)]
struct SweepRow {
    k: usize,
    /// Smallest selected set over the classes.
    min_class_size: usize,
    accuracy: f64,
    variance: f64,
    seeds: usize,
}

pub fn sweep_k(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let mut pool = ctx.pool()?;
    let model = ctx.model()?;
    let data = ctx.train_data()?;
    let test = all_examples(&model, &ctx.labels, &ctx.test_data()?)?;
    let prompts: Vec<(u64, Matrix)> = ctx
        .seeds
        .iter()
        .map(|&s| Ok((s, ctx.prompt(s)?)))
        .collect::<CliResult<_>>()?;
    let mut rows = Vec::new();
    for &k in &ctx.cfg.sweep_k {
        let cfg = cd_core::submodular::SelectionConfig {
            k,
            ..ctx.cfg.selection
        };
        let selected = select_with(ctx, &mut pool, &cfg)?;
        let basis = ConceptBasis::from_selection(&pool, &selected)?;
        let mut accs = Vec::new();
        for (seed, p_star) in &prompts {
            let sd = seed_data(ctx, &model, &data, *seed)?;
            let mut tcfg = ctx.cfg.tune;
            tcfg.train.seed = *seed;
            let init = init_decomposition(&model, p_star, &basis)?;
            let res = cd_tune(&model, p_star, &init, &sd.train, &sd.val, &tcfg)?;
            accs.push(decomposition_accuracy(&model, &res.decomposition, &test)?);
        }
        let row = SweepRow {
            k,
            min_class_size: selected.iter().map(|s| s.ids.len()).min().unwrap_or(0),
            accuracy: mean(&accs),
            variance: variance(&accs),
            seeds: accs.len(),
        };
        println!("k = {k}: accuracy {:.4} (variance {:.6})", row.accuracy, row.variance);
        rows.push(row);
    }
    let mut csv = String::from("k,min_class_size,accuracy,variance,seeds\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{:.6},{:.6},{}\n",
            r.k, r.min_class_size, r.accuracy, r.variance, r.seeds
        ));
    }
    let csv_path = ctx.path("sweep_k.csv");
    let json_path = ctx.path("sweep_k.json");
    write_text(&csv_path, &csv)?;
    write_json(&json_path, &rows)?;
    Ok(vec![csv_path, json_path])
}
