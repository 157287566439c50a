//! Streaming kernel PCA: Oja's update over explicit feature maps, an exact spectral
//! oracle, seeded spiked-covariance streams, and trajectory certification.

pub mod checks;
pub mod datagen;
pub mod error;
pub mod feature_map;
pub mod harness;
pub mod linalg;
pub mod numerics;
pub mod oja;
pub mod oracle;

pub use error::{Error, Result};
pub use feature_map::{FeatureKind, FeatureMapSpec};
pub use linalg::{DenseVector, SymmetricMatrix};
