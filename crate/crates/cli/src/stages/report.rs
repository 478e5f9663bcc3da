use std::path::PathBuf;

use cd_core::attribution::{
    accuracy, concept_correlation, decomposition_accuracy, grad_attribution, integrated_gradients,
    shapley_attribution, AttributionScores, CorrelationReport, CorrelationRow, LogitObjective,
};
use cd_core::decomposer::{write_explanations, AttackInput, Decomposition, Explainer};
use cd_core::numerics::{mean, variance};
use cd_core::transformer::{Example, ToyTransformer};
use serde::Serialize;

use crate::context::{write_json, write_text, Context, CD_DIR, VOCAB_DIR};
use crate::data::all_examples;
use crate::error::CliResult;

pub fn explain(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let model = ctx.model()?;
    let basis = ctx.basis()?;
    let encoder = ctx.cfg.encoder()?;
    let test = ctx.test_data()?;
    let examples = all_examples(&model, &ctx.labels, &test)?;
    let explainer = Explainer {
        model: &model,
        labels: &ctx.labels,
        basis: &basis,
        encoder: &encoder,
    };
    let mut artifacts = Vec::new();
    for &seed in &ctx.seeds {
        let dec = ctx.decomposition(seed, CD_DIR)?;
        let reports = test
            .iter()
            .zip(&examples)
            .enumerate()
            .map(|(i, (t, ex))| explainer.explain(&dec, i, &t.text, ex, ctx.cfg.explain_top_k))
            .collect::<cd_core::Result<Vec<_>>>()?;
        let path = ctx.seed_dir(seed).join("explanations.jsonl");
        write_explanations(&path, &reports)?;
        println!("seed {seed}: {} explanations", reports.len());
        artifacts.push(path);
    }
    Ok(artifacts)
}

/// Attacks every misclassified test input.
pub fn attack(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let model = ctx.model()?;
    let basis = ctx.basis()?;
    let encoder = ctx.cfg.encoder()?;
    let test = ctx.test_data()?;
    let examples = all_examples(&model, &ctx.labels, &test)?;
    let inputs: Vec<AttackInput> = test
        .iter()
        .zip(&examples)
        .enumerate()
        .map(|(id, (t, example))| AttackInput {
            id,
            text: &t.text,
            example,
        })
        .collect();
    let explainer = Explainer {
        model: &model,
        labels: &ctx.labels,
        basis: &basis,
        encoder: &encoder,
    };
    let mut artifacts = Vec::new();
    for &seed in &ctx.seeds {
        let dec = ctx.decomposition(seed, CD_DIR)?;
        let outcome = explainer.causal_attack(&dec, &inputs, ctx.cfg.attack.y_prime, ctx.cfg.attack.top_k)?;
        match &outcome {
            cd_core::decomposer::AttackOutcome::EmptyReport => println!("seed {seed}: no misclassified inputs"),
            cd_core::decomposer::AttackOutcome::Report(r) => println!(
                "seed {seed}: {} cases, similarity {:.4} -> {:.4}",
                r.cases.len(),
                r.mean_pre,
                r.mean_post
            ),
        }
        let path = ctx.seed_dir(seed).join("attack.json");
        write_json(&path, &outcome)?;
        artifacts.push(path);
    }
    Ok(artifacts)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    /// A seed, `Avg` or `σ²`.
    pub row: String,
    pub p_tuning: f64,
    pub cd: f64,
    pub vocab: f64,
}

#[derive(Serialize)]
struct EvalReport {
    dataset: String,
    shots: String,
    prompt_len: usize,
    rows: Vec<EvalRow>,
}

pub const METHODS: [&str; 3] = ["grad", "ig", "shapley"];

/// Mean correlation per (method, top-k) over the scored inputs of one seed.
fn seed_correlations(
    ctx: &Context,
    model: &ToyTransformer,
    dec: &Decomposition,
    examples: &[Example],
    seed: u64,
) -> CliResult<Vec<Vec<Option<f64>>>> {
    let a = &ctx.cfg.attribution;
    let top_ks = &a.top_ks;
    let mut sums = vec![vec![(0.0, 0usize); top_ks.len()]; METHODS.len()];
    for (i, ex) in examples.iter().take(a.max_inputs).enumerate() {
        let obj = LogitObjective::predicted(model, dec, ex)?;
        let mode = a.shapley_mode(dec.n_concepts(), seed.wrapping_mul(1_000_003).wrapping_add(i as u64));
        let scores: [AttributionScores; 3] = [
            grad_attribution(&obj, &dec.q)?,
            integrated_gradients(&obj, &dec.q, a.ig_steps)?,
            shapley_attribution(&obj, &dec.q, mode)?,
        ];
        for (m, s) in scores.iter().enumerate() {
            for (j, &k) in top_ks.iter().enumerate() {
                if k > dec.n_concepts() {
                    continue;
                }
                if let Some(r) = concept_correlation(dec, &s.scores, k)? {
                    sums[m][j].0 += r;
                    sums[m][j].1 += 1;
                }
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|row| row.into_iter().map(|(s, n)| (n > 0).then(|| s / n as f64)).collect())
        .collect())
}

pub fn eval(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let model = ctx.model()?;
    let test = all_examples(&model, &ctx.labels, &ctx.test_data()?)?;
    let mut rows = Vec::new();
    let mut per_seed_corr = Vec::new();
    for &seed in &ctx.seeds {
        let prompt = ctx.prompt(seed)?;
        let cd = ctx.decomposition(seed, CD_DIR)?;
        let vocab = ctx.decomposition(seed, VOCAB_DIR)?;
        rows.push(EvalRow {
            row: seed.to_string(),
            p_tuning: accuracy(&model, &prompt, &test)?,
            cd: decomposition_accuracy(&model, &cd, &test)?,
            vocab: decomposition_accuracy(&model, &vocab, &test)?,
        });
        per_seed_corr.push(seed_correlations(ctx, &model, &cd, &test, seed)?);
    }
    let column = |f: fn(&EvalRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let cols = [column(|r| r.p_tuning), column(|r| r.cd), column(|r| r.vocab)];
    let agg = |name: &str, f: fn(&[f64]) -> f64| EvalRow {
        row: name.into(),
        p_tuning: f(&cols[0]),
        cd: f(&cols[1]),
        vocab: f(&cols[2]),
    };
    rows.push(agg("Avg", mean));
    rows.push(agg("σ²", variance));

    let mut csv = String::from("row,p_tuning,cd,vocab\n");
    for r in &rows {
        csv.push_str(&format!("{},{:.6},{:.6},{:.6}\n", r.row, r.p_tuning, r.cd, r.vocab));
        println!("{:>6}  p-tuning {:.4}  cd {:.4}  vocab {:.4}", r.row, r.p_tuning, r.cd, r.vocab);
    }
    let eval_csv = ctx.path("eval.csv");
    let eval_json = ctx.path("eval.json");
    write_text(&eval_csv, &csv)?;
    write_json(
        &eval_json,
        &EvalReport {
            dataset: ctx.cfg.name.clone(),
            shots: ctx.cfg.shots.to_string(),
            prompt_len: ctx.cfg.prompt_len,
            rows,
        },
    )?;

    let mut report = CorrelationReport::default();
    for (m, method) in METHODS.iter().enumerate() {
        for (j, &k) in ctx.cfg.attribution.top_ks.iter().enumerate() {
            let values: Vec<Option<f64>> = per_seed_corr.iter().map(|s| s[m][j]).collect();
            report.rows.push(CorrelationRow::from_values(&ctx.cfg.name, method, k, &values));
        }
    }
    let corr_csv = ctx.path("correlation.csv");
    let corr_json = ctx.path("correlation.json");
    write_text(&corr_csv, &report.to_csv())?;
    write_json(&corr_json, &report)?;
    Ok(vec![eval_csv, eval_json, corr_csv, corr_json])
}
