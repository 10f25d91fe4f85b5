//! Static malware detection from potential malicious regions of a binary's
//! control-flow graph.
//!
//! The pipeline reads a [`DisassemblySnapshot`], builds the entry function's
//! CFG, ranks strings, maps them onto CFG nodes, extracts up to ten regions
//! around those nodes and turns them into a fixed-width feature vector that
//! a small feedforward network classifies.

pub mod cfg;
pub mod classifier;
pub mod config;
pub mod error;
pub mod features;
pub mod mapper;
pub mod pipeline;
pub mod preprocess;
pub mod region;
pub mod snapshot;
pub mod strings;
pub mod synth;

pub use cfg::{build_cfg, Cfg, Stage};
pub use config::{Config, FeatureConfig, Optimizer, TrainConfig};
pub use error::{Error, Result};
pub use features::{analyze, Analysis, FeatureVector, IdfTable};
pub use snapshot::{parse_snapshot, DisassemblySnapshot, NodeId};
