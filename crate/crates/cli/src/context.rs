use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use cd_core::decomposer::{load_decomposition, ConceptBasis, Decomposition, DECOMPOSITION_FILE};
use cd_core::embedding::{load_dataset, read_concepts, CandidatePool, LabelSet, LabeledText};
use cd_core::submodular::SelectedSet;
use cd_core::transformer::{load_model, ToyTransformer, MANIFEST};
use serde::{Deserialize, Serialize};

use crate::config::{LoadedConfig, RunConfig};
use crate::error::{CliError, CliResult};

pub const POOL_FILE: &str = "pool.jsonl";
pub const SELECTED_FILE: &str = "selected.json";
pub const MODEL_DIR: &str = "model";
pub const PROMPT_FILE: &str = "prompt.cdem";
pub const CD_DIR: &str = "cd";
pub const VOCAB_DIR: &str = "vocab";
pub const RUN_MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seconds: f64,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub git_describe: String,
    pub stages: BTreeMap<String, StageRecord>,
}

pub struct Context {
    pub cfg: RunConfig,
    pub config_hash: String,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    pub labels: LabelSet,
}

impl Context {
    pub fn new(loaded: LoadedConfig, out: Option<PathBuf>, seed: Option<u64>) -> CliResult<Self> {
        let LoadedConfig { config: cfg, hash } = loaded;
        cfg.validate()?;
        let out = out
            .or_else(|| cfg.paths.out.clone())
            .ok_or_else(|| CliError::validation("no output directory: pass --out or set paths.out"))?;
        fs::create_dir_all(&out)?;
        let seeds = seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s]);
        let labels = LabelSet::new(cfg.classes.iter().map(|c| c.label.clone()))?;
        Ok(Context {
            cfg,
            config_hash: hash,
            out,
            seeds,
            labels,
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.out.join(format!("seed_{seed}"))
    }

    /// Relative form of an artifact path, for the manifest.
    pub fn relative(&self, p: &Path) -> String {
        p.strip_prefix(&self.out).unwrap_or(p).to_string_lossy().replace('\\', "/")
    }

    pub fn train_data(&self) -> CliResult<Vec<LabeledText>> {
        let p = self.cfg.require(&self.cfg.paths.train, "train")?;
        load_dataset(p, &self.labels).map_err(|e| CliError::validation(e.to_string()))
    }

    pub fn test_data(&self) -> CliResult<Vec<LabeledText>> {
        let p = self.cfg.require(&self.cfg.paths.test, "test")?;
        load_dataset(p, &self.labels).map_err(|e| CliError::validation(e.to_string()))
    }

    pub fn pool(&self) -> CliResult<CandidatePool> {
        let p = self.path(POOL_FILE);
        if !p.exists() {
            return Err(CliError::missing(&p, "gen"));
        }
        Ok(CandidatePool::from_records(self.labels.clone(), read_concepts(&p)?)?)
    }

    pub fn selected(&self) -> CliResult<Vec<SelectedSet>> {
        let p = self.path(SELECTED_FILE);
        if !p.exists() {
            return Err(CliError::missing(&p, "select"));
        }
        serde_json::from_str(&fs::read_to_string(&p)?)
            .map_err(|e| CliError::validation(format!("{}: {e}", p.display())))
    }

    pub fn basis(&self) -> CliResult<ConceptBasis> {
        let pool = self.pool()?;
        Ok(ConceptBasis::from_selection(&pool, &self.selected()?)?)
    }

    pub fn model(&self) -> CliResult<ToyTransformer> {
        let dir = self.path(MODEL_DIR);
        if !dir.join(MANIFEST).exists() {
            return Err(CliError::missing(&dir, "tune"));
        }
        Ok(load_model(&dir)?)
    }

    pub fn prompt(&self, seed: u64) -> CliResult<cd_core::Matrix> {
        let p = self.seed_dir(seed).join(PROMPT_FILE);
        if !p.exists() {
            return Err(CliError::missing(&p, "tune"));
        }
        Ok(cd_core::embedding::load_embeddings(&p)?)
    }

    pub fn decomposition(&self, seed: u64, which: &str) -> CliResult<Decomposition> {
        let dir = self.seed_dir(seed).join(which);
        if !dir.join(DECOMPOSITION_FILE).exists() {
            return Err(CliError::missing(&dir, "tune"));
        }
        Ok(load_decomposition(&dir)?.0)
    }

    /// Runs one stage and records its timing and artifacts in the manifest.
    pub fn stage<F>(&self, name: &str, body: F) -> CliResult<()>
    where
        F: FnOnce(&Self) -> CliResult<Vec<PathBuf>>,
    {
        let start = Instant::now();
        let artifacts = body(self)?;
        let record = StageRecord {
            seconds: start.elapsed().as_secs_f64(),
            artifacts: artifacts.iter().map(|p| self.relative(p)).collect(),
        };
        let path = self.path(RUN_MANIFEST);
        let mut manifest: RunManifest = fs::read_to_string(&path)
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok())
            .unwrap_or_default();
        manifest.config_hash = self.config_hash.clone();
        manifest.git_describe = git_describe();
        manifest.stages.insert(name.to_string(), record);
        write_json(&path, &manifest)?;
        log::info!("{name} finished in {:.2}s", start.elapsed().as_secs_f64());
        Ok(())
    }
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError {
        code: crate::error::exit::INTERNAL,
        message: e.to_string(),
    })?;
    write_text(path, &(text + "\n"))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).map_err(|e| CliError {
        code: crate::error::exit::IO,
        message: format!("{}: {e}", path.display()),
    })
}
