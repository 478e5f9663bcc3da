//! Interpreting continuous prompts by decomposing them into human-readable
//! concepts.
//!
//! The pipeline: generate candidate concept texts per class
//! ([`candidate_gen`]), pick a diverse and covering subset per class
//! ([`submodular`]), factor a tuned prompt `P` into concept embeddings times
//! coefficients `P ≈ CQ` against a small transformer classifier
//! ([`transformer`], [`decomposer`]), then rank concepts per input and check
//! the ranking against independent attribution methods ([`attribution`]).

pub mod attribution;
pub mod candidate_gen;
pub mod decomposer;
pub mod embedding;
pub mod error;
pub mod numerics;
pub mod optim;
pub mod submodular;
pub mod synthetic;
pub mod transformer;

pub use error::{Error, Result};
pub use numerics::Matrix;
