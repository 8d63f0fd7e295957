//! Edge-conditioned convolutions on graphs.
//!
//! The crate covers the full pipeline: a small dense tensor library with a
//! gradient tape, labeled graphs and multi-resolution pyramids, the
//! edge-conditioned convolution and its residual and learned-normalization
//! variants, point-cloud and general-graph coarsening, network configuration
//! strings, dataset loaders and a training / evaluation harness.

pub mod coarsen;
pub mod datasets;
pub mod ecc;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod init;
pub mod layers;
pub mod netcfg;
pub mod network;
pub mod pointcloud;
pub mod prepare;
pub mod tensor;
pub mod train;

pub use error::{EccError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use graph::{GraphPyramid, LabeledGraph, PoolingMap};
pub use tensor::{Tape, Tensor, Var};
