//! Compact label encodings for large multi-class segmentation.
//!
//! Instead of one output channel per class, classes are mapped to short
//! binary data words — optionally protected by Hamming(7,4) parity bits — so
//! the number of output channels grows logarithmically in the class count.
//! The crate provides:
//!
//! - [`codebook`]: class-to-codeword assignments and size arithmetic
//! - [`ecc`]: Hamming(7,4) encode / syndrome-correct / chunked decode
//! - [`decode`]: hard and soft decoders from probability volumes to labels
//! - [`assign`]: adjacency-driven codeword assignment optimization
//! - [`loss`]: differentiable Dice / cross-entropy losses with analytic gradients
//! - [`metrics`]: Dice similarity aggregation, boundary and structure-size reports
//! - [`toytrain`]: a small synthetic-data training harness comparing output heads

pub mod assign;
pub mod codebook;
pub mod decode;
pub mod ecc;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod toytrain;
pub mod volume;

pub use error::{Error, Result};
