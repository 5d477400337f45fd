//! Predictive model of sensorimotor transitions and its analyses.

mod entropy;
pub mod export;
mod report;
mod similarity;
mod tensor;

pub use entropy::{block_entropy, conditional_entropy, EntropyMatrix};
pub use report::{block_report, BlockReport, RankedBlock, SaccadeRanking};
pub use similarity::{similarity_set, SimilarMember, SimilaritySet};
pub use tensor::{normalize, Probabilities, TensorLayout, TransitionTensor};
