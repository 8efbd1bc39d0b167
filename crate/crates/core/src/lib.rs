//! patchscope: multi-scale patch classification for whole-biopsy images.
//!
//! The crate covers the full path from a raw RGB biopsy image to a
//! whole-image label and the statistics used to reason about whether the
//! evidence for a class is local or global:
//!
//! - [`imaging`]: rasters, background removal, coverage, cropping and
//!   Catmull-Rom bicubic resampling.
//! - [`tiling`]: half-stride sliding windows and the tissue-coverage filter.
//! - [`augment`]: training-time geometric augmentation.
//! - [`classifier`]: the patch classifier contract and a trainable
//!   histogram + logistic reference model.
//! - [`pipeline`]: the four downscale/crop strategies and majority voting.
//! - [`evaluation`]: confusion counts, rates, ROC points, probability
//!   histograms, central-band mass and the random-label control.
//! - [`dataset`]: manifests, the balanced train/validation split and the
//!   synthetic generator with planted local or global features.
//! - [`cli`]: config files and the `synth`/`train`/`run`/`eval` commands.

pub mod augment;
pub mod classifier;
pub mod cli;
pub mod dataset;
pub mod evaluation;
pub mod imaging;
pub mod pipeline;
pub mod seeds;
pub mod tiling;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use augment::{augment, AugmentSpec};
pub use classifier::{LrSchedule, PatchClassifier, ToyClassifier, TrainConfig};
pub use dataset::{ManifestEntry, ResolutionClass, SplitSpec, SynthPattern};
pub use evaluation::{ConfusionCounts, Metrics};
pub use imaging::{RasterImage, Rect, TissueMask};
pub use pipeline::{ImagePrediction, StrategyConfig, StrategyKind};
pub use tiling::PatchRef;

/// Ground-truth class of an image or patch. Positive class is `ActiveEoE`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    ActiveEoE,
    NonEoE,
}

impl Label {
    pub fn is_positive(self) -> bool {
        matches!(self, Label::ActiveEoE)
    }

    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Label::ActiveEoE
        } else {
            Label::NonEoE
        }
    }

    /// Training target: 1.0 for the positive class.
    pub fn target(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            0.0
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::ActiveEoE => f.write_str("ActiveEoE"),
            Label::NonEoE => f.write_str("NonEoE"),
        }
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "ActiveEoE" | "active" | "1" => Ok(Label::ActiveEoE),
            "NonEoE" | "non" | "0" => Ok(Label::NonEoE),
            other => Err(format!("unknown label `{other}`")),
        }
    }
}
