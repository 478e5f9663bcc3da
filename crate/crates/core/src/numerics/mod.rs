//! Dense kernels shared by every other module.
//!
//! All reductions run left to right in a fixed order so results are
//! bit-reproducible across runs and thread counts.

mod matrix;
mod stats;
mod svd;

pub use matrix::{dot, norm, Matrix};
pub use stats::{
    cosine, entropy, kl_divergence, log_softmax, mean, normalize, pearson, softmax, variance,
    KL_FLOOR,
};
pub(crate) use stats::kl_unchecked;
pub use svd::{lstsq, svd, SvdResult};
