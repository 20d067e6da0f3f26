//! The packed 32-bit node header.
//!
//! Layout, most significant bit first:
//!
//! ```text
//! | isPrimitive (1) | nodeop (5) | ignoreMod (2) | isLeft (1) | ancestor (23) |
//! ```

use thiserror::Error;

/// Ancestor value marking the root.
pub const NO_ANCESTOR: u32 = 0x7F_FFFF;

const ANCESTOR_BITS: u32 = 23;
const ANCESTOR_MASK: u32 = (1 << ANCESTOR_BITS) - 1;
const LEFT_SHIFT: u32 = 23;
const IGNORE_SHIFT: u32 = 24;
const NODEOP_SHIFT: u32 = 26;
const PRIMITIVE_SHIFT: u32 = 31;

/// Reserved operator codes written into pruned views.
pub const OP_RETURN_INFINITY: u8 = 0;
pub const OP_RETURN_RIGHT: u8 = 1;
pub const OP_RETURN_LEFT: u8 = 2;
/// First nodeop code used by real operator kinds.
pub const OPERATOR_CODE_BASE: u8 = 3;

/// Behavior of an operator when one of its operands is absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum IgnoreMode {
    /// Union-like.
    Never = 0b00,
    IfRightAbsent = 0b01,
    /// Difference-like.
    IfLeftAbsent = 0b10,
    /// Intersection-like.
    IfAnyAbsent = 0b11,
}

impl IgnoreMode {
    pub fn bits(self) -> u8 {
        self as u8
    }

    pub fn from_bits(bits: u8) -> Self {
        match bits & 0b11 {
            0b00 => IgnoreMode::Never,
            0b01 => IgnoreMode::IfRightAbsent,
            0b10 => IgnoreMode::IfLeftAbsent,
            _ => IgnoreMode::IfAnyAbsent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Blob {
    pub is_primitive: bool,
    pub nodeop: u8,
    pub ignore: IgnoreMode,
    pub is_left: bool,
    /// Node index of the parent or a further ancestor; `NO_ANCESTOR` at the root.
    pub ancestor: u32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlobError {
    #[error("nodeop {0} does not fit in 5 bits")]
    NodeOp(u8),
    #[error("ancestor index {0:#x} does not fit in 23 bits")]
    Ancestor(u32),
}

impl Blob {
    pub fn has_ancestor(&self) -> bool {
        self.ancestor != NO_ANCESTOR
    }

    pub fn pack(&self) -> Result<u32, BlobError> {
        if self.nodeop >= 32 {
            return Err(BlobError::NodeOp(self.nodeop));
        }
        if self.ancestor > NO_ANCESTOR {
            return Err(BlobError::Ancestor(self.ancestor));
        }
        Ok(((self.is_primitive as u32) << PRIMITIVE_SHIFT)
            | ((self.nodeop as u32) << NODEOP_SHIFT)
            | ((self.ignore.bits() as u32) << IGNORE_SHIFT)
            | ((self.is_left as u32) << LEFT_SHIFT)
            | self.ancestor)
    }

    pub fn unpack(word: u32) -> Blob {
        Blob {
            is_primitive: (word >> PRIMITIVE_SHIFT) & 1 == 1,
            nodeop: ((word >> NODEOP_SHIFT) & 0x1F) as u8,
            ignore: IgnoreMode::from_bits(((word >> IGNORE_SHIFT) & 0b11) as u8),
            is_left: (word >> LEFT_SHIFT) & 1 == 1,
            ancestor: word & ANCESTOR_MASK,
        }
    }

    /// Copy with a different ancestor; used when clamping during traversal.
    pub fn with_ancestor(mut self, ancestor: u32) -> Blob {
        self.ancestor = ancestor;
        self
    }
}

/// Usage status and rewritten nodeop of an operator from its operands' usage.
///
/// `children` holds the left usage in bit 1 and the right usage in bit 0. The
/// returned code is `3` (keep the operator) when both operands are used.
pub fn operand_usage(ignore: IgnoreMode, children: u8) -> (bool, u8) {
    let masked = !children & ignore.bits() & 0b11;
    let op_type = if masked == 0 { children } else { 0 };
    let used = masked == 0 && children != 0;
    (used, op_type)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_word() {
        let b = Blob::unpack(0);
        assert_eq!(
            b,
            Blob {
                is_primitive: false,
                nodeop: 0,
                ignore: IgnoreMode::Never,
                is_left: false,
                ancestor: 0
            }
        );
    }

    #[test]
    fn field_positions() {
        let b = Blob {
            is_primitive: true,
            nodeop: 0b10101,
            ignore: IgnoreMode::IfLeftAbsent,
            is_left: true,
            ancestor: NO_ANCESTOR,
        };
        let w = b.pack().unwrap();
        assert_eq!(w, 0x8000_0000 | (0b10101 << 26) | (0b10 << 24) | (1 << 23) | 0x7F_FFFF);
        assert!(!Blob::unpack(w).has_ancestor());
    }

    #[test]
    fn pack_rejects_out_of_range() {
        let mut b = Blob::unpack(0);
        b.nodeop = 32;
        assert_eq!(b.pack(), Err(BlobError::NodeOp(32)));
        b.nodeop = 0;
        b.ancestor = NO_ANCESTOR + 1;
        assert_eq!(b.pack(), Err(BlobError::Ancestor(NO_ANCESTOR + 1)));
    }

    #[test]
    fn usage_table() {
        use IgnoreMode::*;
        // difference, only right operand
        assert_eq!(operand_usage(IfLeftAbsent, 0b01), (false, OP_RETURN_INFINITY));
        // difference, only left operand
        assert_eq!(operand_usage(IfLeftAbsent, 0b10), (true, OP_RETURN_LEFT));
        // intersection, one operand
        assert_eq!(operand_usage(IfAnyAbsent, 0b10), (false, 0));
        assert_eq!(operand_usage(IfAnyAbsent, 0b01), (false, 0));
        assert_eq!(operand_usage(IfAnyAbsent, 0b11), (true, 0b11));
        // union passes through either operand
        assert_eq!(operand_usage(Never, 0b01), (true, OP_RETURN_RIGHT));
        assert_eq!(operand_usage(Never, 0b00), (false, 0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100_000))]
        #[test]
        fn pack_unpack_round_trip(w in any::<u32>()) {
            prop_assert_eq!(Blob::unpack(w).pack().unwrap(), w);
        }
    }
}
