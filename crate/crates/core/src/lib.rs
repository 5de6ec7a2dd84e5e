//! Self-supervised pre-training for time series classification.
//!
//! The crate pre-trains a dilated convolutional series encoder with two
//! objectives: a prototype contrastive loss over banks of augmented views,
//! and a series/image contrastive loss that pairs each series with a line
//! chart rendering of itself, using geodesic mixup on the unit hypersphere to
//! build extra negatives. The pre-trained series encoder is then fine-tuned
//! with an MLP head on a labeled target dataset.
//!
//! Module map:
//!
//! - [`data`]: UCR/UEA loading, z-normalization, pre-training pools, few-shot splits
//! - [`augment`]: the five-operator augmentation bank and paired view sets
//! - [`imaging`]: deterministic RGB line-chart rasterization
//! - [`encoders`]: series/image encoders, projection heads, checkpoints
//! - [`losses`]: adaptive temperatures, prototype and series-image losses
//! - [`pipeline`]: configuration, pre-training, fine-tuning, prediction
//! - [`metrics`]: accuracy, rank statistics, Friedman/Nemenyi, CD diagrams

pub mod augment;
pub mod data;
pub mod encoders;
pub mod error;
pub mod imaging;
pub mod losses;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
