//! Range-of-interest propagation from the root down to the primitives.

use super::linear::{LinearTree, NodeRecord};
use crate::field::BlendClass;

/// Per-node upper bounds `d_n` of the ranges `(-inf, d_n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoiPropagation {
    pub uppers: Vec<f32>,
    /// False when a bounded smooth operator is present; volumes are then unsound.
    pub compact: bool,
}

impl RoiPropagation {
    pub fn upper(&self, index: u32) -> f32 {
        self.uppers[index as usize]
    }
}

pub fn propagate_roi(tree: &LinearTree) -> RoiPropagation {
    let n = tree.node_count();
    let mut uppers = vec![0.0f32; n];
    // Parents come after their children, so a descending sweep sees parents first.
    for i in (0..n.saturating_sub(1)).rev() {
        let parent = tree.parent(i as u32);
        let parent_upper = uppers[parent as usize];
        uppers[i] = match tree.record(parent) {
            NodeRecord::Operator(op) if op.kind().class() == BlendClass::Compact => {
                op.range().max(parent_upper)
            }
            _ => parent_upper,
        };
    }
    RoiPropagation { uppers, compact: tree.is_compact() }
}
