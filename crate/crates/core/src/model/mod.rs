//! The multimodal attention re-ranker and its text-only (CTM) and image-only
//! (VMN) variants.
//!
//! For a query with `N` tokens and a document with `M` tokens the network
//! builds four `N x M` interaction matrices from projected static and
//! contextual token vectors, runs `n` "same" convolutions over their stack,
//! k-max pools every output channel, appends the best image-pair cosine and
//! scores the result with a bias-free two-layer ReLU MLP.

mod checkpoint;
mod dump;
mod encode;
mod network;
pub mod ops;
mod params;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::StoreDims;

pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use dump::{dump_matrices, write_matrix_csv};
pub use encode::Encoder;
pub use network::{
    InteractionTensors, Model, PairFeatures, PairForward, ProjectedSide, SideGrad, SideInput,
};
pub use params::{tensor_specs, ModelParams, Tensor, TensorSpec};

pub const PROJECTION_GRID: [usize; 4] = [64, 128, 256, 512];
pub const FILTER_GRID: [usize; 2] = [16, 24];
pub const KMAX_GRID: [usize; 3] = [16, 32, 48];
pub const NUM_CNN_GRID: [usize; 3] = [1, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Text interactions plus the visual feature.
    #[serde(rename = "MAN")]
    Man,
    /// Text interactions only.
    #[serde(rename = "CTM")]
    Ctm,
    /// The visual feature alone is the score.
    #[serde(rename = "VMN")]
    Vmn,
}

impl Variant {
    pub fn code(self) -> u32 {
        match self {
            Variant::Man => 0,
            Variant::Ctm => 1,
            Variant::Vmn => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Variant::Man),
            1 => Ok(Variant::Ctm),
            2 => Ok(Variant::Vmn),
            other => Err(Error::Invalid(format!("unknown variant code {other}"))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Man => "MAN",
            Variant::Ctm => "CTM",
            Variant::Vmn => "VMN",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MAN" => Ok(Variant::Man),
            "CTM" => Ok(Variant::Ctm),
            "VMN" => Ok(Variant::Vmn),
            other => Err(Error::Invalid(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// `P`.
    pub projection_dim: usize,
    /// `F`, filters per CNN.
    pub filters: usize,
    /// `k` of k-max pooling.
    pub kmax: usize,
    /// `n`, number of CNNs; the i-th uses an `i x i` kernel.
    pub num_cnns: usize,
    /// `T`.
    pub visual_proj_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub dims: StoreDims,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self::snopes()
    }
}

impl Hyperparams {
    /// Best setting reported for the Snopes collection.
    pub fn snopes() -> Self {
        Hyperparams {
            projection_dim: 256,
            filters: 16,
            kmax: 32,
            num_cnns: 2,
            visual_proj_dim: 300,
            hidden1: 128,
            hidden2: 64,
            dims: StoreDims::default(),
        }
    }

    /// Best setting reported for the Politifact collection.
    pub fn politifact() -> Self {
        Hyperparams {
            kmax: 48,
            num_cnns: 3,
            ..Self::snopes()
        }
    }

    /// Small network over small feature tables, for tests and smoke runs.
    pub fn tiny() -> Self {
        Hyperparams {
            projection_dim: 8,
            filters: 2,
            kmax: 2,
            num_cnns: 2,
            visual_proj_dim: 6,
            hidden1: 128,
            hidden2: 64,
            dims: StoreDims {
                static_dim: 12,
                contextual_dim: 16,
                visual_dim: 20,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("projection_dim", self.projection_dim),
            ("filters", self.filters),
            ("kmax", self.kmax),
            ("num_cnns", self.num_cnns),
            ("visual_proj_dim", self.visual_proj_dim),
            ("hidden1", self.hidden1),
            ("hidden2", self.hidden2),
            ("static_dim", self.dims.static_dim),
            ("contextual_dim", self.dims.contextual_dim),
            ("visual_dim", self.dims.visual_dim),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Invalid(format!("hyperparameter {name} must be positive")));
            }
        }
        Ok(())
    }
}
