//! The `concept-decomp` pipeline: candidate generation, concept selection,
//! prompt and decomposition tuning, explanations, attacks and evaluation,
//! all driven by one JSON config.
//!
//! Stages communicate only through files in the output directory, and each
//! invocation updates `manifest.json` there with timings and artifact paths.

pub mod config;
pub mod context;
pub mod data;
pub mod error;
pub mod stages;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{RunConfig, Shots};
pub use context::{Context, RunManifest};
pub use error::{exit, CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "concept-decomp", version, about = "Decompose continuous prompts into concepts")]
pub struct Cli {
    /// Run config (JSON); relative paths inside it resolve against its directory.
    #[arg(long, global = true, default_value = "config.json")]
    pub config: PathBuf,
    /// Run only this seed instead of the configured list.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `paths.out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Generate the candidate concept pool.
    Gen,
    /// Select concepts per class.
    Select {
        /// Concepts per class.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Fit truncated-SVD factorizations of a prompt tensor.
    Factor {
        /// CDEM prompt tensor; defaults to the first seed's tuned prompt.
        #[arg(long)]
        prompt: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-10)]
        epsilon: f64,
    },
    /// Pretrain the backbone if needed, then tune prompts and decompositions.
    Tune {
        /// Shots per class: 4, 8, 16, 32 or full.
        #[arg(long)]
        shots: Option<Shots>,
        /// Fidelity weight.
        #[arg(long)]
        mu: Option<f64>,
    },
    /// Write ranked concept explanations for the test set.
    Explain {
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Run the causal attack on misclassified test inputs.
    Attack,
    /// Accuracy and attribution-correlation tables across seeds.
    Eval,
    /// Accuracy as a function of concepts per class.
    SweepK,
}

/// Runs one command.
pub fn run(cli: Cli) -> CliResult<()> {
    let mut loaded = RunConfig::load(&cli.config)?;
    let cfg = &mut loaded.config;
    match &cli.command {
        Cmd::Select { k: Some(k) } => cfg.selection.k = *k,
        Cmd::Tune { shots, mu } => {
            if let Some(s) = shots {
                cfg.shots = *s;
            }
            if let Some(m) = mu {
                cfg.tune.mu = *m;
            }
        }
        Cmd::Explain { top_k: Some(k) } => cfg.explain_top_k = *k,
        _ => {}
    }
    let ctx = Context::new(loaded, cli.out, cli.seed)?;
    match cli.command {
        Cmd::Gen => ctx.stage("gen", stages::prepare::gen),
        Cmd::Select { .. } => ctx.stage("select", stages::prepare::select),
        Cmd::Factor { prompt, epsilon } => {
            ctx.stage("factor", |c| stages::factor::factor(c, prompt.as_deref(), epsilon))
        }
        Cmd::Tune { .. } => ctx.stage("tune", stages::train::tune),
        Cmd::Explain { .. } => ctx.stage("explain", stages::report::explain),
        Cmd::Attack => ctx.stage("attack", stages::report::attack),
        Cmd::Eval => ctx.stage("eval", stages::report::eval),
        Cmd::SweepK => ctx.stage("sweep-k", stages::train::sweep_k),
    }
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::VALIDATION } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
