//! Post-order linearized blobtree stored in 128-bit words.
//!
//! Every node starts with a header word whose first lane holds the packed
//! [`Blob`]; the other 96 bits are padding. Parameter words follow the header.
//! Parameter word counts are fixed per kind:
//!
//! | node                     | words | contents                                   |
//! |--------------------------|-------|--------------------------------------------|
//! | sphere                   | 2     | `[tx ty tz r]` `[qw qx qy qz]`             |
//! | other primitives         | 3     | `[tx ty tz s0]` `[qw qx qy qz]` `[s1 s2 - -]` |
//! | sharp CSG operators      | 0     |                                            |
//! | bounded smooth operators | 1     | `[k - - -]`                                |
//! | compact operators        | 1     | `[k d_o - -]`                              |

use thiserror::Error;

use super::blob::{Blob, IgnoreMode, NO_ANCESTOR, OPERATOR_CODE_BASE};
use super::scene::SceneNode;
use crate::field::{
    BlendClass, Combine, Operator, OperatorKind, Primitive, PrimitiveKind, Shape, Transform,
};
use crate::math::{Point3, Quat, Vec3};

/// One 128-bit storage word, as four 32-bit lanes.
pub type Word = [u32; 4];

pub const WORD_BYTES: usize = 16;

const _: () = assert!(PrimitiveKind::ALL.len() <= 32);
const _: () = assert!(OPERATOR_CODE_BASE as usize + OperatorKind::ALL.len() <= 32);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompileError {
    #[error("tree has {0} nodes, more than the 23-bit index space allows")]
    TooManyNodes(usize),
    #[error("node {index} is not a {expected}")]
    KindMismatch { index: u32, expected: &'static str },
}

/// Which links the blob ancestor fields currently hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AncestorLinks {
    Parent,
    Fast,
}

/// Decoded copy of a node, kept in sync with the parameter words.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeRecord {
    Primitive(Primitive),
    Operator(Operator),
}

pub fn primitive_code(kind: PrimitiveKind) -> u8 {
    kind.index() as u8
}

pub fn operator_code(kind: OperatorKind) -> u8 {
    OPERATOR_CODE_BASE + kind.index() as u8
}

/// Inverse of `operator_code`; `None` for reserved or unknown codes.
pub fn operator_kind_from_code(code: u8) -> Option<OperatorKind> {
    code.checked_sub(OPERATOR_CODE_BASE)
        .and_then(|i| OperatorKind::ALL.get(i as usize).copied())
}

pub fn primitive_kind_from_code(code: u8) -> Option<PrimitiveKind> {
    PrimitiveKind::ALL.get(code as usize).copied()
}

pub fn ignore_mode(kind: OperatorKind) -> IgnoreMode {
    match kind.combine() {
        Combine::Union => IgnoreMode::Never,
        Combine::Intersect => IgnoreMode::IfAnyAbsent,
        Combine::Diff => IgnoreMode::IfLeftAbsent,
    }
}

pub fn primitive_param_words(kind: PrimitiveKind) -> usize {
    match kind {
        PrimitiveKind::Sphere => 2,
        _ => 3,
    }
}

pub fn operator_param_words(kind: OperatorKind) -> usize {
    match kind.class() {
        BlendClass::Sharp => 0,
        BlendClass::Bounded | BlendClass::Compact => 1,
    }
}

fn f(v: f32) -> u32 {
    v.to_bits()
}

fn g(v: u32) -> f32 {
    f32::from_bits(v)
}

pub fn encode_primitive(prim: &Primitive) -> Vec<Word> {
    let t = prim.transform();
    let q = t.rotation;
    let s = prim.shape().scalars();
    let mut words = vec![
        [f(t.translation.x), f(t.translation.y), f(t.translation.z), f(s[0])],
        [f(q.w), f(q.x), f(q.y), f(q.z)],
    ];
    if primitive_param_words(prim.kind()) == 3 {
        let at = |i: usize| s.get(i).copied().unwrap_or(0.0);
        words.push([f(at(1)), f(at(2)), 0, 0]);
    }
    words
}

#[inline]
pub fn decode_primitive(kind: PrimitiveKind, words: &[Word]) -> Primitive {
    let w0 = words[0];
    let w1 = words[1];
    let mut s = [g(w0[3]), 0.0, 0.0];
    if kind != PrimitiveKind::Sphere {
        s[1] = g(words[2][0]);
        s[2] = g(words[2][1]);
    }
    let transform = Transform {
        translation: Vec3::new(g(w0[0]), g(w0[1]), g(w0[2])),
        rotation: Quat::new(g(w1[0]), g(w1[1]), g(w1[2]), g(w1[3])),
    };
    Primitive::from_parts_unchecked(Shape::from_scalars(kind, &s), transform)
}

pub fn encode_operator(op: &Operator) -> Vec<Word> {
    match op.kind().class() {
        BlendClass::Sharp => vec![],
        BlendClass::Bounded => vec![[f(op.k()), 0, 0, 0]],
        BlendClass::Compact => vec![[f(op.k()), f(op.range()), 0, 0]],
    }
}

#[inline]
pub fn decode_operator(kind: OperatorKind, words: &[Word]) -> Operator {
    match kind.class() {
        BlendClass::Sharp => Operator::csg(kind),
        // Parameters were validated when encoded.
        BlendClass::Bounded | BlendClass::Compact => {
            let w = words[0];
            Operator::new(kind, g(w[0]), g(w[1])).unwrap_or_else(|_| Operator::csg(kind))
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinearTree {
    words: Vec<Word>,
    offsets: Vec<u32>,
    parents: Vec<u32>,
    primitives: Vec<u32>,
    records: Vec<NodeRecord>,
    links: AncestorLinks,
}

impl LinearTree {
    pub fn node_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn primitive_count(&self) -> usize {
        self.primitives.len()
    }

    pub fn root(&self) -> u32 {
        self.node_count() as u32 - 1
    }

    pub fn links(&self) -> AncestorLinks {
        self.links
    }

    /// All storage words, headers and parameters interleaved.
    pub fn words(&self) -> &[Word] {
        &self.words
    }

    /// Word address of node `index`'s header.
    pub fn offset(&self, index: u32) -> u32 {
        self.offsets[index as usize]
    }

    #[inline]
    pub fn blob(&self, index: u32) -> Blob {
        Blob::unpack(self.words[self.offsets[index as usize] as usize][0])
    }

    /// Parameter words following the header of `index`.
    #[inline]
    pub fn params(&self, index: u32) -> &[Word] {
        let start = self.offsets[index as usize] as usize + 1;
        let end = self
            .offsets
            .get(index as usize + 1)
            .map(|&o| o as usize)
            .unwrap_or(self.words.len());
        &self.words[start..end]
    }

    /// Parent index, independent of the links stored in the headers.
    pub fn parent(&self, index: u32) -> u32 {
        self.parents[index as usize]
    }

    /// Ascending node indices of the primitives.
    pub fn primitive_indices(&self) -> &[u32] {
        &self.primitives
    }

    pub fn record(&self, index: u32) -> &NodeRecord {
        &self.records[index as usize]
    }

    pub fn primitive(&self, index: u32) -> Option<&Primitive> {
        match self.record(index) {
            NodeRecord::Primitive(p) => Some(p),
            NodeRecord::Operator(_) => None,
        }
    }

    pub fn operator(&self, index: u32) -> Option<&Operator> {
        match self.record(index) {
            NodeRecord::Operator(op) => Some(op),
            NodeRecord::Primitive(_) => None,
        }
    }

    /// True when every blend operator is compact or sharp.
    pub fn is_compact(&self) -> bool {
        self.records.iter().all(|r| match r {
            NodeRecord::Operator(op) => op.kind().class() != BlendClass::Bounded,
            NodeRecord::Primitive(_) => true,
        })
    }

    /// Classic full bottom-up walk in storage order.
    pub fn eval_full(&self, p: Point3) -> f32 {
        let mut stack: Vec<f32> = Vec::with_capacity(32);
        for record in &self.records {
            let v = match record {
                NodeRecord::Primitive(prim) => prim.eval(p),
                NodeRecord::Operator(op) => {
                    let right = stack.pop().expect("post-order operand");
                    let left = stack.pop().expect("post-order operand");
                    op.apply(left, right)
                }
            };
            stack.push(v);
        }
        stack.pop().unwrap_or(f32::INFINITY)
    }

    /// Full walk that decodes every node from the storage words.
    pub fn eval_full_from_words(&self, p: Point3) -> f32 {
        let mut stack: Vec<f32> = Vec::with_capacity(32);
        for i in 0..self.node_count() as u32 {
            let blob = self.blob(i);
            let v = if blob.is_primitive {
                let kind = primitive_kind_from_code(blob.nodeop).expect("primitive code");
                decode_primitive(kind, self.params(i)).eval(p)
            } else {
                let kind = operator_kind_from_code(blob.nodeop).expect("operator code");
                let right = stack.pop().expect("post-order operand");
                let left = stack.pop().expect("post-order operand");
                decode_operator(kind, self.params(i)).apply(left, right)
            };
            stack.push(v);
        }
        stack.pop().unwrap_or(f32::INFINITY)
    }

    /// Stack depth a full bottom-up walk needs.
    pub fn full_walk_stack_depth(&self) -> usize {
        let (mut depth, mut max) = (0usize, 0usize);
        for record in &self.records {
            match record {
                NodeRecord::Primitive(_) => depth += 1,
                NodeRecord::Operator(_) => depth -= 1,
            }
            max = max.max(depth);
        }
        max
    }

    /// Rewrites a primitive's parameter words in place. The kind must not change.
    pub fn set_primitive(&mut self, index: u32, prim: Primitive) -> Result<(), CompileError> {
        match self.records.get(index as usize) {
            Some(NodeRecord::Primitive(old)) if old.kind() == prim.kind() => {}
            _ => {
                return Err(CompileError::KindMismatch {
                    index,
                    expected: prim.kind().name(),
                })
            }
        }
        let start = self.offsets[index as usize] as usize + 1;
        for (i, w) in encode_primitive(&prim).into_iter().enumerate() {
            self.words[start + i] = w;
        }
        self.records[index as usize] = NodeRecord::Primitive(prim);
        Ok(())
    }

    fn set_ancestor(&mut self, index: u32, ancestor: u32) {
        let at = self.offsets[index as usize] as usize;
        let blob = Blob::unpack(self.words[at][0]).with_ancestor(ancestor);
        self.words[at][0] = blob.pack().expect("ancestor in range");
    }
}

/// Linearizes a scene tree in post-order with parent links.
pub fn compile(scene: &SceneNode) -> Result<LinearTree, CompileError> {
    let count = scene.node_count();
    if count >= NO_ANCESTOR as usize {
        return Err(CompileError::TooManyNodes(count));
    }

    enum Frame<'a> {
        Enter(&'a SceneNode),
        Exit(&'a Operator),
    }

    let mut records = Vec::with_capacity(count);
    let mut parents = vec![NO_ANCESTOR; count];
    let mut is_left = vec![false; count];
    let mut pending: Vec<u32> = Vec::new();
    let mut frames = vec![Frame::Enter(scene)];
    while let Some(frame) = frames.pop() {
        match frame {
            Frame::Enter(SceneNode::Primitive(p)) => {
                pending.push(records.len() as u32);
                records.push(NodeRecord::Primitive(*p));
            }
            Frame::Enter(SceneNode::Operator { op, left, right }) => {
                frames.push(Frame::Exit(op));
                frames.push(Frame::Enter(right));
                frames.push(Frame::Enter(left));
            }
            Frame::Exit(op) => {
                let index = records.len() as u32;
                let right = pending.pop().expect("right operand");
                let left = pending.pop().expect("left operand");
                parents[left as usize] = index;
                parents[right as usize] = index;
                is_left[left as usize] = true;
                pending.push(index);
                records.push(NodeRecord::Operator(*op));
            }
        }
    }
    // The root counts as a left child.
    is_left[count - 1] = true;

    let mut words = Vec::new();
    let mut offsets = Vec::with_capacity(count);
    let mut primitives = Vec::new();
    for (i, record) in records.iter().enumerate() {
        offsets.push(words.len() as u32);
        let (blob, params) = match record {
            NodeRecord::Primitive(p) => {
                primitives.push(i as u32);
                let blob = Blob {
                    is_primitive: true,
                    nodeop: primitive_code(p.kind()),
                    ignore: IgnoreMode::Never,
                    is_left: is_left[i],
                    ancestor: parents[i],
                };
                (blob, encode_primitive(p))
            }
            NodeRecord::Operator(op) => {
                let blob = Blob {
                    is_primitive: false,
                    nodeop: operator_code(op.kind()),
                    ignore: ignore_mode(op.kind()),
                    is_left: is_left[i],
                    ancestor: parents[i],
                };
                (blob, encode_operator(op))
            }
        };
        words.push([blob.pack().expect("header fields in range"), 0, 0, 0]);
        words.extend(params);
    }

    Ok(LinearTree {
        words,
        offsets,
        parents,
        primitives,
        records,
        links: AncestorLinks::Parent,
    })
}

/// Replaces parent links by fast ancestor links.
///
/// A node's link climbs while the parent chain keeps the node's side (left or
/// right), and stops at the root, at any intersection, and at differences
/// reached through a right-child chain.
pub fn compute_fast_indices(tree: &LinearTree) -> LinearTree {
    let mut out = tree.clone();
    for index in 0..tree.node_count() as u32 {
        let parent = tree.parent(index);
        if parent == NO_ANCESTOR {
            continue;
        }
        let side = tree.blob(index).is_left;
        let mut at = parent;
        loop {
            if tree.parent(at) == NO_ANCESTOR {
                break;
            }
            let combine = tree.operator(at).expect("ancestor is an operator").kind().combine();
            if combine == Combine::Intersect || (combine == Combine::Diff && !side) {
                break;
            }
            if tree.blob(at).is_left != side {
                break;
            }
            at = tree.parent(at);
        }
        out.set_ancestor(index, at);
    }
    out.links = AncestorLinks::Fast;
    out
}
