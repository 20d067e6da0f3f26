//! Tile-based synchronized sphere tracing of blobtree signed distance fields.

pub mod field;
pub mod math;
pub mod tree;
pub mod abuffer;
pub mod camera;
pub mod traversal;
pub mod synth;
pub mod tracer;
pub mod document;
pub mod image;
