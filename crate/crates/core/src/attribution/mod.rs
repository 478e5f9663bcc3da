//! Evaluation: accuracy, concept correlation against attribution scores,
//! concept-level attribution methods and the vocabulary baseline.

mod methods;
mod metrics;

pub use methods::{
    grad_attribution, integrated_gradients, shapley_attribution, shapley_exact, shapley_monte_carlo,
    AttributionScores, CoefficientObjective, LinearObjective, LogitObjective, Method, ShapleyMode,
    EXACT_SHAPLEY_MAX,
};
pub use metrics::{
    accuracy, concept_correlation, correlation_top_k, decomposition_accuracy, top_k_by_key, vocab_baseline,
    CorrelationReport, CorrelationRow,
};
