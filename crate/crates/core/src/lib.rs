//! Online topological localization of a bronchoscope in an airway tree.
//!
//! Frames are grayscale images. A branching-point detector counts dark lumen
//! regions; a discrete Bayes filter over tree nodes only multiplies in the
//! per-frame likelihood when the detector fires. An offline Viterbi decoder
//! and a Top-k evaluation harness are provided for comparison.

pub mod detector;
pub mod error;
pub mod eval;
pub mod filter;
pub mod frames;
pub mod imaging;
pub mod likelihood;
pub mod par;
pub mod pipeline;
pub mod synth;
pub mod tree;
pub mod viterbi;

pub use detector::{detect_branch, BranchDetection, Connectivity, DetectorParams};
pub use error::{Error, Result};
pub use eval::{topk_accuracy, SequenceResult};
pub use filter::{init_posterior, predict, top_k, update, FilterState, GatePolicy, Posterior};
pub use imaging::{quantize_levels, GrayImage, KMeansInit, KMeansParams, QuantizedImage, RgbImage};
pub use likelihood::{normalize, CentroidModel, FrameClassifier, LikelihoodVector, PROBABILITY_FLOOR};
pub use par::Execution;
pub use pipeline::{LikelihoodSource, Localizer, PipelineConfig};
pub use tree::{TransitionModel, TreeModel};
pub use viterbi::{viterbi_decode, viterbi_rankings, DecodedPath};
