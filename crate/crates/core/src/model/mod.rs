//! Inversion-DeepONet, its trunk-less ablation and the vanilla DeepONet
//! baseline, built from tape primitives.

mod checkpoint;
mod net;
mod params;
mod preset;
mod spec;

pub use checkpoint::{
    load_for, load_params, load_with, save_params, save_with, NormEntry, TensorEntry,
    CHECKPOINT_VERSION,
};
pub use net::{coordinate_grid, fuse, Session};
pub use params::{ModelParams, Norm, Param};
pub use preset::{Architecture, ModelPreset, Scale};
pub use spec::{Chw, ConvBlockSpec, DecoderSpec, EncoderSpec, TrunkSpec};

pub(crate) use checkpoint::write_atomic;
