//! Blend and CSG operators on approximate signed distance values.
//!
//! Three families are provided: sharp CSG (`min`/`max`), the bounded
//! polynomial smooth operators, and their compact variants. A compact
//! operator returns the sharp CSG result bit-for-bit as soon as one operand
//! exceeds the operator range `d_o`, which bounds the region where two
//! primitives can interact.

use std::fmt;

/// Replaces NaN by zero; every public operator funnels its result through this.
#[inline]
pub fn filter_nan(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v
    }
}

/// The nine operator kinds, in their stable encoding order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperatorKind {
    CsgUnion,
    CsgIntersect,
    CsgDiff,
    SmoothUnion,
    SmoothIntersect,
    SmoothDiff,
    CompactUnion,
    CompactIntersect,
    CompactDiff,
}

/// Which sharp operator a kind degenerates to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combine {
    Union,
    Intersect,
    Diff,
}

/// Blend behavior class of an operator kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlendClass {
    Sharp,
    /// Bounded polynomial blend, interacting everywhere in space.
    Bounded,
    Compact,
}

impl OperatorKind {
    pub const ALL: [OperatorKind; 9] = [
        OperatorKind::CsgUnion,
        OperatorKind::CsgIntersect,
        OperatorKind::CsgDiff,
        OperatorKind::SmoothUnion,
        OperatorKind::SmoothIntersect,
        OperatorKind::SmoothDiff,
        OperatorKind::CompactUnion,
        OperatorKind::CompactIntersect,
        OperatorKind::CompactDiff,
    ];

    pub fn combine(self) -> Combine {
        use OperatorKind::*;
        match self {
            CsgUnion | SmoothUnion | CompactUnion => Combine::Union,
            CsgIntersect | SmoothIntersect | CompactIntersect => Combine::Intersect,
            CsgDiff | SmoothDiff | CompactDiff => Combine::Diff,
        }
    }

    pub fn class(self) -> BlendClass {
        use OperatorKind::*;
        match self {
            CsgUnion | CsgIntersect | CsgDiff => BlendClass::Sharp,
            SmoothUnion | SmoothIntersect | SmoothDiff => BlendClass::Bounded,
            CompactUnion | CompactIntersect | CompactDiff => BlendClass::Compact,
        }
    }

    /// Dense index in `ALL`.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        use OperatorKind::*;
        match self {
            CsgUnion => "csg_union",
            CsgIntersect => "csg_intersect",
            CsgDiff => "csg_diff",
            SmoothUnion => "smooth_union",
            SmoothIntersect => "smooth_intersect",
            SmoothDiff => "smooth_diff",
            CompactUnion => "compact_union",
            CompactIntersect => "compact_intersect",
            CompactDiff => "compact_diff",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sharp CSG: `min`, `max`, or `max(f0, -f1)`.
#[inline]
pub fn csg_op(combine: Combine, f0: f32, f1: f32) -> f32 {
    match combine {
        Combine::Union => f0.min(f1),
        Combine::Intersect => f0.max(f1),
        Combine::Diff => f0.max(-f1),
    }
}

/// Polynomial displacement `(k/6) max(1 - |f0 - f1|/k, 0)^3`.
#[inline]
pub fn smooth_disp(f0: f32, f1: f32, k: f32) -> f32 {
    let h = (1.0 - (f0 - f1).abs() / k).max(0.0);
    filter_nan(k / 6.0 * h * h * h)
}

/// Bounded smooth operator with blend range `k`.
#[inline]
pub fn smooth_op(combine: Combine, f0: f32, f1: f32, k: f32) -> f32 {
    let v = match combine {
        Combine::Union => f0.min(f1) - smooth_disp(f0, f1, k),
        Combine::Intersect => f0.max(f1) + smooth_disp(f0, f1, k),
        Combine::Diff => f0.max(-f1) + smooth_disp(f0, -f1, k),
    };
    filter_nan(v)
}

/// Blend-range transition: `k` on the 0 iso of the first pass, closing to 0 at `d`.
#[inline]
pub fn blend_range(x: f32, k: f32, d: f32) -> f32 {
    filter_nan(k * (1.0 - 6.0 * x / (6.0 * d - k)).max(0.0))
}

/// Compact smooth operator with blend range `k` and operator range `d_o`.
#[inline]
pub fn compact_op(combine: Combine, f0: f32, f1: f32, k: f32, d_o: f32) -> f32 {
    if f0 > d_o || f1 > d_o {
        return csg_op(combine, f0, f1);
    }
    let first = smooth_op(combine, f0, f1, k);
    let local_k = match combine {
        Combine::Union => blend_range(first, k, d_o),
        Combine::Intersect => blend_range(first, k, d_o).min(k),
        Combine::Diff => blend_range(first.abs(), k, d_o).min(k),
    };
    smooth_op(combine, f0, f1, local_k)
}
