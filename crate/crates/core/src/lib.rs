//! Multimodal fake-news detection.
//!
//! Each article contributes a pooled body projection, an image projection,
//! 38 publisher-emotion features and two title↔body attention vectors. The
//! five are concatenated into one fused vector and classified by a softmax
//! layer. Backbone embeddings are frozen and supplied by pluggable
//! providers; everything on top of them is trained here with Adam.

pub mod attention;
pub mod checkpoint;
pub mod corpus;
pub mod emotion;
pub mod encoders;
pub mod error;
pub mod features;
pub mod fusion;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod text;
pub mod training;

pub use corpus::{Article, DatasetSplit, DatasetStats, Label, TrainRatio};
pub use error::{Error, Result};
pub use model::{ArticleFeatures, ModelContract, ModelParams};
