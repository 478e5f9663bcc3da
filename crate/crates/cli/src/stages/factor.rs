use std::path::{Path, PathBuf};

use cd_core::decomposer::{frobenius_fit, FitInit};
use cd_core::embedding::load_embeddings;
use serde::Serialize;

use crate::context::{write_json, write_text, Context, PROMPT_FILE};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct FactorRow {
    pub n_c: usize,
    pub residual: f64,
    pub residual_sq: f64,
    /// Eckart–Young optimum of the squared residual.
    pub optimum_sq: f64,
    pub within_epsilon: bool,
}

/// Truncated-SVD fits of `P` for `N_c = 1..=min(d, N_q)`.
pub fn factor_rows(p: &cd_core::Matrix, epsilon: f64) -> CliResult<Vec<FactorRow>> {
    let (d, n_q) = p.shape();
    (1..=d.min(n_q))
        .map(|n_c| {
            let r = frobenius_fit(p, n_c, epsilon, &FitInit::Svd)?;
            Ok(FactorRow {
                n_c,
                residual: r.residual,
                residual_sq: r.residual_sq,
                optimum_sq: r.optimum_sq,
                within_epsilon: !r.not_within_epsilon,
            })
        })
        .collect()
}

pub fn factor(ctx: &Context, prompt: Option<&Path>, epsilon: f64) -> CliResult<Vec<PathBuf>> {
    let path = match prompt {
        Some(p) => p.to_path_buf(),
        None => ctx.seed_dir(ctx.seeds[0]).join(PROMPT_FILE),
    };
    if !path.exists() {
        return Err(CliError::validation(format!(
            "prompt tensor {} not found; pass --prompt or run `tune` first",
            path.display()
        )));
    }
    let p = load_embeddings(&path)
        .map_err(|e| CliError::validation(format!("bad tensor file {}: {e}", path.display())))?;
    let rows = factor_rows(&p, epsilon)?;
    let mut csv = String::from("n_c,residual,residual_sq,optimum_sq,within_epsilon\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{:e},{:e},{:e},{}\n",
            r.n_c, r.residual, r.residual_sq, r.optimum_sq, r.within_epsilon
        ));
        println!(
            "N_c = {:>3}: residual^2 {:.3e}, bound {:.3e}{}",
            r.n_c,
            r.residual_sq,
            r.optimum_sq,
            if r.within_epsilon { " (within epsilon)" } else { "" }
        );
    }
    let csv_path = ctx.path("factor.csv");
    let json_path = ctx.path("factor.json");
    write_text(&csv_path, &csv)?;
    write_json(&json_path, &rows)?;
    Ok(vec![csv_path, json_path])
}
