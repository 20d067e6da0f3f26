//! Field mathematics: primitive distance functions and blend operators.

mod ops;
mod primitive;

pub use ops::{
    blend_range, compact_op, csg_op, filter_nan, smooth_disp, smooth_op, BlendClass, Combine,
    OperatorKind,
};
pub use primitive::{eval_primitive, Primitive, PrimitiveKind, Shape, ShapeError, Transform};

use thiserror::Error;

/// Operator kind with its blend parameters.
///
/// `k` is ignored by sharp kinds and `range` (`d_o`) only matters for compact kinds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Operator {
    kind: OperatorKind,
    k: f32,
    range: f32,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("blend range k must be finite and positive, got {0}")]
    BlendRange(f32),
    #[error("operator range d = {range} must exceed k/6 = {min}")]
    OperatorRange { range: f32, min: f32 },
}

impl Operator {
    pub fn new(kind: OperatorKind, k: f32, range: f32) -> Result<Self, OperatorError> {
        match kind.class() {
            BlendClass::Sharp => Ok(Self { kind, k: 0.0, range: 0.0 }),
            BlendClass::Bounded => {
                if !(k.is_finite() && k > 0.0) {
                    return Err(OperatorError::BlendRange(k));
                }
                Ok(Self { kind, k, range: 0.0 })
            }
            BlendClass::Compact => {
                if !(k.is_finite() && k > 0.0) {
                    return Err(OperatorError::BlendRange(k));
                }
                if !(range.is_finite() && range > k / 6.0) {
                    return Err(OperatorError::OperatorRange { range, min: k / 6.0 });
                }
                Ok(Self { kind, k, range })
            }
        }
    }

    pub fn csg(kind: OperatorKind) -> Self {
        debug_assert_eq!(kind.class(), BlendClass::Sharp);
        Self { kind, k: 0.0, range: 0.0 }
    }

    /// Compact operator with the default range `d_o = k`.
    pub fn compact(combine: Combine, k: f32) -> Result<Self, OperatorError> {
        let kind = match combine {
            Combine::Union => OperatorKind::CompactUnion,
            Combine::Intersect => OperatorKind::CompactIntersect,
            Combine::Diff => OperatorKind::CompactDiff,
        };
        Self::new(kind, k, k)
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn k(&self) -> f32 {
        self.k
    }

    pub fn range(&self) -> f32 {
        self.range
    }

    #[inline]
    pub fn apply(&self, f0: f32, f1: f32) -> f32 {
        let combine = self.kind.combine();
        match self.kind.class() {
            BlendClass::Sharp => csg_op(combine, f0, f1),
            BlendClass::Bounded => smooth_op(combine, f0, f1, self.k),
            BlendClass::Compact => compact_op(combine, f0, f1, self.k, self.range),
        }
    }
}
