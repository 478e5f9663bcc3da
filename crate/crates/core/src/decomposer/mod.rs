//! Prompt decomposition `P ~ CQ`: exact Frobenius fits, CD tuning against a
//! teacher prompt, concept-ranked explanations and the causal attack.

mod artifact;
mod explain;
mod fit;
mod tune;

pub use artifact::{
    load_decomposition, save_decomposition, DecompositionManifest, C_FILE, DECOMPOSITION_FILE, Q_FILE,
};
pub use explain::{
    ranked_class_columns, read_explanations, write_explanations, AttackCase, AttackFields, AttackInput,
    AttackOutcome, AttackReport, ExplainedConcept, Explainer, ExplanationReport, YPrimeRule, DEFAULT_TOP_K,
};
pub use fit::{concept_keys, frobenius_fit, solve_q_gd, Decomposition, FitInit, FitReport, Provenance, LSTSQ_RCOND};
pub use tune::{
    cd_loss, cd_tune, concept_embeddings, init_decomposition, CdLoss, CdTuneResult, ConceptBasis, TuneConfig,
};
