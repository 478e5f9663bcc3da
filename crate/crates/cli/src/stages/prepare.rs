use std::path::PathBuf;

use cd_core::candidate_gen::{default_templates, generate_candidates, GeneratorClient};
use cd_core::embedding::{mean_class_embedding, write_concepts, CandidatePool};
use cd_core::submodular::{select_all, SelectedSet, SelectionConfig};
use cd_core::Error;

use crate::context::{write_json, Context, POOL_FILE, SELECTED_FILE};
use crate::error::{CliError, CliResult};

fn client(ctx: &Context) -> CliResult<GeneratorClient> {
    let g = &ctx.cfg.generation;
    let mut client = match g.generator.as_str() {
        "external" => GeneratorClient::external_from_env().map_err(|e| CliError::generation(e.to_string()))?,
        _ => {
            let stub = ctx.cfg.require(&ctx.cfg.paths.stub, "stub")?;
            if !stub.exists() {
                return Err(CliError::generation(format!("generator stub {} not found", stub.display())));
            }
            GeneratorClient::stub(stub)
        }
    };
    client.samples_per_prompt = g.samples_per_prompt;
    client.instruction = g.instruction.clone();
    Ok(client)
}

pub fn gen(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let client = client(ctx)?;
    let pool = generate_candidates(&client, &default_templates(), &ctx.cfg.classes, &ctx.cfg.generation.leak)
        .map_err(|e| match e {
            Error::InvalidInput(_) | Error::Template(_) => CliError::from(e),
            other => CliError::generation(other.to_string()),
        })?;
    for label in ctx.labels.names() {
        println!("{label}: {} candidates", pool.class_members(label).len());
    }
    let path = ctx.path(POOL_FILE);
    write_concepts(&path, &pool.records())?;
    Ok(vec![path])
}

/// Greedy selection with `cfg`, class embeddings taken from the training texts.
pub fn select_with(ctx: &Context, pool: &mut CandidatePool, cfg: &SelectionConfig) -> CliResult<Vec<SelectedSet>> {
    let encoder = ctx.cfg.encoder()?;
    let train = ctx.train_data()?;
    pool.embed_all(&encoder)?;
    let class_embs = ctx
        .labels
        .names()
        .iter()
        .map(|l| mean_class_embedding(&encoder, &train, l))
        .collect::<cd_core::Result<Vec<_>>>()?;
    Ok(select_all(pool, &class_embs, cfg)?)
}

pub fn select(ctx: &Context) -> CliResult<Vec<PathBuf>> {
    let mut pool = ctx.pool()?;
    let selected = select_with(ctx, &mut pool, &ctx.cfg.selection)?;
    for s in &selected {
        println!("{}: {} concepts, objective {:.4}", s.class, s.ids.len(), s.objective);
    }
    let path = ctx.path(SELECTED_FILE);
    write_json(&path, &selected)?;
    Ok(vec![path])
}
