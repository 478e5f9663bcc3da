use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use cd_core::attribution::ShapleyMode;
use cd_core::candidate_gen::{ClassSpec, LeakConfig, DEFAULT_INSTRUCTION};
use cd_core::decomposer::{TuneConfig, YPrimeRule, DEFAULT_TOP_K};
use cd_core::embedding::Encoder;
use cd_core::submodular::SelectionConfig;
use cd_core::transformer::{ModelConfig, PretrainConfig, TrainConfig};
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEEDS: [u64; 5] = [1, 42, 100, 999, 1756];
pub const SHOT_SETTINGS: [usize; 4] = [4, 8, 16, 32];

/// Training examples kept per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shots {
    PerClass(usize),
    Full,
}

impl fmt::Display for Shots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shots::PerClass(n) => write!(f, "{n}"),
            Shots::Full => f.write_str("full"),
        }
    }
}

impl std::str::FromStr for Shots {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "full" {
            return Ok(Shots::Full);
        }
        let n: usize = s.parse().map_err(|_| format!("invalid shot setting {s:?}"))?;
        if SHOT_SETTINGS.contains(&n) {
            Ok(Shots::PerClass(n))
        } else {
            Err(format!("shot setting {n} is not one of 4, 8, 16, 32, full"))
        }
    }
}

impl Serialize for Shots {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Shots::PerClass(n) => s.serialize_u64(*n as u64),
            Shots::Full => s.serialize_str("full"),
        }
    }
}

impl<'de> Deserialize<'de> for Shots {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => n.to_string().parse().map_err(de::Error::custom),
            Raw::Str(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Training split, JSON lines of `{"text", "label"}`.
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Generator stub answers.
    pub stub: Option<PathBuf>,
    /// Backbone corpus, JSON lines of `{"text", "labels": [..]}`.
    pub pretrain: Option<PathBuf>,
    /// Text index and CDEM matrix for a file-backed encoder.
    pub embedding_texts: Option<PathBuf>,
    pub embedding_matrix: Option<PathBuf>,
    /// Output directory; `--out` wins.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HashEncoderConfig {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashEncoderConfig {
    fn default() -> Self {
        HashEncoderConfig { dim: 64, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    /// `stub` or `external`.
    pub generator: String,
    pub samples_per_prompt: usize,
    pub instruction: String,
    pub leak: LeakConfig,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            generator: "stub".into(),
            samples_per_prompt: 50,
            instruction: DEFAULT_INSTRUCTION.into(),
            leak: LeakConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub y_prime: YPrimeRule,
    pub top_k: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            y_prime: YPrimeRule::RunnerUp,
            top_k: DEFAULT_TOP_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionConfig {
    pub top_ks: Vec<usize>,
    pub ig_steps: usize,
    /// Shapley sampling used when there are too many concepts to enumerate.
    pub mc_samples: usize,
    /// Test inputs scored per seed.
    pub max_inputs: usize,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            top_ks: vec![3, 5, 10],
            ig_steps: 64,
            mc_samples: 200,
            max_inputs: 20,
        }
    }
}

impl AttributionConfig {
    pub fn shapley_mode(&self, n_players: usize, seed: u64) -> ShapleyMode {
        if n_players <= cd_core::attribution::EXACT_SHAPLEY_MAX {
            ShapleyMode::Exact
        } else {
            ShapleyMode::MonteCarlo {
                samples: self.mc_samples,
                seed,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset name used in report rows.
    pub name: String,
    pub paths: Paths,
    pub classes: Vec<ClassSpec>,
    pub generation: GenerationConfig,
    pub encoder: HashEncoderConfig,
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    pub selection: SelectionConfig,
    /// Prompt length `N_q`.
    pub prompt_len: usize,
    pub p_tune: TrainConfig,
    pub tune: TuneConfig,
    /// Vocabulary-baseline concepts; defaults to the size of the selected basis.
    pub vocab_concepts: Option<usize>,
    pub seeds: Vec<u64>,
    pub shots: Shots,
    /// Share of each class held out of the training split for validation.
    pub val_fraction: f64,
    pub explain_top_k: usize,
    pub attack: AttackConfig,
    pub attribution: AttributionConfig,
    pub sweep_k: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "dataset".into(),
            paths: Paths::default(),
            classes: Vec::new(),
            generation: GenerationConfig::default(),
            encoder: HashEncoderConfig::default(),
            model: ModelConfig::default(),
            pretrain: PretrainConfig::default(),
            selection: SelectionConfig::default(),
            prompt_len: 1,
            p_tune: TrainConfig::default(),
            tune: TuneConfig::default(),
            vocab_concepts: None,
            seeds: DEFAULT_SEEDS.to_vec(),
            shots: Shots::Full,
            val_fraction: 0.2,
            explain_top_k: DEFAULT_TOP_K,
            attack: AttackConfig::default(),
            attribution: AttributionConfig::default(),
            sweep_k: vec![1, 5, 10, 15, 20],
        }
    }
}

/// A parsed config with its paths resolved against the config directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// SHA-256 of the config file bytes.
    pub hash: String,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<LoadedConfig> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::validation(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve(base);
        Ok(LoadedConfig {
            config,
            hash: hex(&Sha256::digest(&bytes)),
        })
    }

    fn resolve(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.train,
            &mut p.test,
            &mut p.stub,
            &mut p.pretrain,
            &mut p.embedding_texts,
            &mut p.embedding_matrix,
            &mut p.out,
        ] {
            if let Some(path) = slot.as_mut() {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }

    /// Checks everything that does not depend on which stage runs.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::validation(m));
        if self.classes.len() < 2 {
            return bad("config needs at least two classes".into());
        }
        if self.model.num_classes != self.classes.len() {
            return bad(format!(
                "model.num_classes = {} but {} classes are configured",
                self.model.num_classes,
                self.classes.len()
            ));
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        if self.prompt_len == 0 {
            return bad("prompt_len must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad(format!("val_fraction = {} is outside [0, 1)", self.val_fraction));
        }
        if self.explain_top_k == 0 || self.attack.top_k == 0 {
            return bad("explanation sizes must be positive".into());
        }
        if self.attribution.ig_steps == 0 || self.attribution.mc_samples < 2 {
            return bad("ig_steps must be positive and mc_samples at least 2".into());
        }
        if self.sweep_k.contains(&0) {
            return bad("sweep_k values must be positive".into());
        }
        if !matches!(self.generation.generator.as_str(), "stub" | "external") {
            return bad(format!("unknown generator {:?}", self.generation.generator));
        }
        self.model.validate()?;
        self.selection.validate()?;
        self.tune.validate()?;
        self.p_tune.validate()?;
        let p = &self.paths;
        for path in [&p.train, &p.test, &p.pretrain, &p.embedding_texts, &p.embedding_matrix]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return bad(format!("{} does not exist", path.display()));
            }
        }
        if p.embedding_texts.is_some() != p.embedding_matrix.is_some() {
            return bad("embedding_texts and embedding_matrix must be given together".into());
        }
        Ok(())
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
        path.as_deref()
            .ok_or_else(|| CliError::validation(format!("config is missing paths.{key}")))
    }

    pub fn encoder(&self) -> CliResult<Encoder> {
        match (&self.paths.embedding_texts, &self.paths.embedding_matrix) {
            (Some(t), Some(m)) => Ok(Encoder::from_files(t, m)?),
            _ => Ok(Encoder::hash(self.encoder.dim, self.encoder.seed)),
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
