//! Active steganalysis for images: an autoregressive pixel analyzer, an
//! edge-adaptive eraser that scrubs hidden payloads with a bounded
//! per-pixel change, conventional baselines, metrics and a sweep harness.

pub mod analyzer;
pub mod baselines;
pub mod edge;
pub mod eraser;
pub mod error;
pub mod image;
pub mod lsb;
pub mod metrics;
pub mod mixture;
pub mod par;
pub mod sweep;
pub mod synth;

pub use analyzer::{Analyzer, AnalyzerConfig, ModelWeights};
pub use baselines::{BaselineConfig, BaselineMethod};
pub use edge::{prewitt, EdgeMap};
pub use eraser::{EraserConfig, EraserMode, PixelModel, Purified};
pub use error::{Error, ErrorKind, Result};
pub use image::{load_image, save_image, Image};
pub use lsb::LsbConfig;
pub use metrics::MetricReport;
pub use mixture::{HeadActivations, PixelDistribution};
pub use sweep::{Method, RunReport, SweepConfig, SweepOptions};
