//! Text encoders, labeled datasets, concept candidate pools and the CDEM
//! matrix file format.

pub mod cdem;
mod dataset;
mod encoder;
mod pool;

pub use cdem::{load_embeddings, save_embeddings};
pub use dataset::{load_dataset, mean_class_embedding, write_dataset, LabelSet, LabeledText};
pub use encoder::{fnv1a64, token_id, token_ids, tokenize, Encoder};
pub use pool::{read_concepts, write_concepts, CandidatePool, ConceptCandidate, ConceptId, ConceptRecord};
