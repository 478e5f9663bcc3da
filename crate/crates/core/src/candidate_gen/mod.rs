//! Candidate concept generation: template rendering, a pluggable text
//! generator, and label-leak filtering.

mod client;
mod leakage;
mod templates;

pub use client::{
    generate_candidates, read_stub, GeneratorClient, GeneratorKind, StubRecord, DEFAULT_INSTRUCTION,
    ENV_TOKEN, ENV_URL,
};
pub use leakage::{filter_leakage, LeakConfig, LeakFilter};
pub use templates::{default_templates, render_prompts, ClassSpec, PromptTemplate, RenderedPrompt, PLACEHOLDER};
