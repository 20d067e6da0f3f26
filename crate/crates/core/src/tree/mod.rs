//! Scene trees, their flat linearized form, and per-node ranges and volumes.

pub mod blob;
mod linear;
mod roi;
mod scene;
mod volume;

pub use blob::{operand_usage, Blob, BlobError, IgnoreMode, NO_ANCESTOR};
pub use linear::{
    compile, compute_fast_indices, decode_operator, decode_primitive, encode_operator,
    encode_primitive, ignore_mode, operator_code, operator_kind_from_code, operator_param_words,
    primitive_code, primitive_kind_from_code, primitive_param_words, AncestorLinks, CompileError,
    LinearTree, NodeRecord, Word, WORD_BYTES,
};
pub use roi::{propagate_roi, RoiPropagation};
pub use scene::SceneNode;
pub use volume::{build_volumes_of_interest, VolumeOfInterest, VolumeShape};
