//! Toy masked-token video generation: a quantized 3D token lattice, ten
//! conditional tasks, multivariate condition masking, a small trainable
//! predictor and non-autoregressive iterative decoding.

pub mod cli;
pub mod config;
pub mod decode;
pub mod error;
pub mod formats;
pub mod lattice;
pub mod masking;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod tasks;
pub mod tokenizer;

pub use error::{Error, Result};
pub use lattice::{compression_rate, Dims3, LatentDims, VideoTensor};
pub use tasks::{condition_fraction, TaskId, TaskParams};
