//! Refinement of binary blade segmentation masks produced by an upstream
//! network.
//!
//! The chain implemented here starts from per-pixel blade probabilities:
//!
//! 1. [`tta`]: soft-vote the four flip-variant predictions and quantize at 0.4;
//! 2. [`holefill`]: orientation-aware hole filling;
//! 3. [`forest`]: a small random forest fitted per blade group on pixel colors,
//!    supervised by the hole-filled masks;
//! 4. [`holefill`] again on the forest output.
//!
//! [`losses`] holds the focal and contiguity training losses with analytic
//! gradients, [`metrics`] the per-step evaluation, [`pipeline`] the manifest
//! driven orchestration and [`synthcorpus`] a deterministic synthetic corpus.

pub mod error;
pub mod forest;
pub mod holefill;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod raster;
pub mod synthcorpus;
pub mod tta;

pub use error::{CorpusError, ForestError, FormatError, LossError, MetricsError, PipelineError, RasterError, TtaError};
pub use raster::{apply_flip, quantize, BinaryMask, FlipTransform, FloatRaster, Grid, RgbImage};
