//! Summarizing sequences of optical-flow frames into single two-channel
//! "dynamic flow" images by rank pooling.
//!
//! A window of flow frames is smoothed by running averages, conditioned
//! (median subtraction, thresholding, quantization) and pooled by a ranking
//! QP whose solution is an image scoring the frames in temporal order. The
//! crate also ships the TV-L1 flow solver feeding the pipeline, an RGB
//! dynamic-image baseline, sliding-window batch machinery, and a synthetic
//! evaluation harness contrasting the two representations under background
//! contamination.

pub mod error;
pub mod flow;
pub mod io;
pub mod pipeline;
pub mod preprocess;
pub mod rankpool;
pub mod toyeval;
pub mod tvl1;

pub use error::{Error, Result};
pub use flow::{FlowField, FlowSequence, GrayFrame, RgbFrame};
pub use preprocess::QuantizedFlowFrame;
pub use rankpool::{DynamicFlowImage, DynamicImage, RankingProblem, SolverConfig};
pub use pipeline::{ClipManifest, WindowSpec};
pub use tvl1::Tvl1Params;
