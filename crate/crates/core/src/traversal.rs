//! Sparse bottom-up traversal over a set of active primitives, and the pruned
//! per-tile tree views built with it.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use thiserror::Error;

use crate::math::Point3;
use crate::tree::blob::{OP_RETURN_INFINITY, OP_RETURN_LEFT, OP_RETURN_RIGHT};
use crate::tree::{
    decode_operator, decode_primitive, operand_usage, operator_kind_from_code,
    primitive_kind_from_code, Blob, LinearTree, Word, NO_ANCESTOR, WORD_BYTES,
};

pub const STACK_CAPACITY: usize = 22;
pub const DEFAULT_MAX_OVERLAP: usize = 96;
pub const DEFAULT_CACHE_BYTES: usize = 3072;

/// Offset flag: the parameters live in the main tree, not in the cache.
pub const SPILL_FLAG: u32 = 1 << 31;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraversalError {
    #[error("traversal stack exceeded {0} entries")]
    StackOverflow(usize),
    #[error("{count} active primitives exceed the view limit of {limit}")]
    ViewOverflow { count: usize, limit: usize },
    #[error("active index {0} is not a primitive node")]
    NotPrimitive(u32),
    #[error("active indices must be strictly ascending")]
    NotAscending,
}

#[inline]
pub fn shadow(blob: Blob, next_prim: u32) -> bool {
    blob.ancestor > next_prim
}

#[inline]
fn valid(ancestor: u32) -> bool {
    ancestor != NO_ANCESTOR
}

#[inline]
pub fn pop_required(p_op: u32, top: Blob, current: Blob) -> bool {
    p_op == top.ancestor
        || (current.ancestor >= top.ancestor && (!valid(current.ancestor) || current.is_left))
}

/// Node callbacks driven by [`sparse_traverse`].
pub trait Visitor {
    type Payload;

    fn primitive(&mut self, index: u32) -> Self::Payload;

    /// Operator whose two operands are both active.
    fn operator(&mut self, index: u32, left: Self::Payload, right: Self::Payload) -> Self::Payload;

    /// Operator reached from a single active operand on side `from_left`.
    fn single(&mut self, index: u32, operand: Self::Payload, from_left: bool) -> Self::Payload;
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraversalStats {
    pub max_stack_depth: usize,
    pub headers_read: usize,
}

struct Entry<P> {
    blob: Blob,
    payload: P,
}

fn check_active(tree: &LinearTree, active: &[u32]) -> Result<(), TraversalError> {
    for w in active.windows(2) {
        if w[0] >= w[1] {
            return Err(TraversalError::NotAscending);
        }
    }
    for &i in active {
        if i as usize >= tree.node_count() || !tree.blob(i).is_primitive {
            return Err(TraversalError::NotPrimitive(i));
        }
    }
    Ok(())
}

/// Visits the active nodes bottom-up in storage order, using whichever
/// ancestor links the tree headers hold. `None` for an empty active set.
pub fn sparse_traverse<V: Visitor>(
    tree: &LinearTree,
    active: &[u32],
    visitor: &mut V,
    stats: &mut TraversalStats,
) -> Result<Option<V::Payload>, TraversalError> {
    check_active(tree, active)?;
    let n = active.len();
    let mut stack: Vec<Entry<V::Payload>> = Vec::with_capacity(STACK_CAPACITY);

    let clamp = |blob: Blob, stack: &[Entry<V::Payload>]| match stack.last() {
        Some(top) => blob.with_ancestor(blob.ancestor.min(top.blob.ancestor)),
        None => blob,
    };

    for i in 0..n {
        let mut blob = tree.blob(active[i]);
        stats.headers_read += 1;
        let mut data = visitor.primitive(active[i]);
        blob = clamp(blob, &stack); // #1

        loop {
            let stop = if i + 1 < n {
                shadow(blob, active[i + 1])
            } else {
                stack.is_empty() && !valid(blob.ancestor)
            };
            if stop {
                break;
            }
            let p_op = blob.ancestor;
            if !valid(p_op) {
                // Unreachable when the tree is well formed: clamping keeps
                // the chain below the stacked ancestors.
                break;
            }
            let from_left = blob.is_left;
            blob = tree.blob(p_op);
            stats.headers_read += 1;
            let popped = match stack.last() {
                Some(top) if pop_required(p_op, top.blob, blob) => stack.pop(),
                _ => None,
            };
            data = match popped {
                Some(top) => visitor.operator(p_op, top.payload, data),
                None => visitor.single(p_op, data, from_left),
            };
            blob = clamp(blob, &stack); // #2
        }

        if stack.len() == STACK_CAPACITY {
            return Err(TraversalError::StackOverflow(STACK_CAPACITY));
        }
        stack.push(Entry { blob, payload: data }); // #3
        stats.max_stack_depth = stats.max_stack_depth.max(stack.len());
    }
    Ok(stack.pop().map(|e| e.payload))
}

/// Nodeop code to apply given the operands' usage; `OPERATOR_CODE_BASE` and
/// above mean "apply the real operator".
#[inline]
fn rewritten(tree: &LinearTree, index: u32, left_used: bool, right_used: bool) -> (bool, Blob) {
    let blob = tree.blob(index);
    let bits = ((left_used as u8) << 1) | right_used as u8;
    let (used, code) = operand_usage(blob.ignore, bits);
    let nodeop = if code == 0b11 { blob.nodeop } else { code };
    (used, Blob { nodeop, ..blob })
}

#[inline]
fn apply_code(tree: &LinearTree, index: u32, nodeop: u8, left: f32, right: f32) -> f32 {
    match nodeop {
        OP_RETURN_INFINITY => f32::INFINITY,
        OP_RETURN_RIGHT => right,
        OP_RETURN_LEFT => left,
        _ => tree.operator(index).expect("operator node").apply(left, right),
    }
}

/// Field value plus usage status.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f32,
    pub used: bool,
}

struct DirectEval<'a> {
    tree: &'a LinearTree,
    p: Point3,
    primitive_evals: usize,
}

impl Visitor for DirectEval<'_> {
    type Payload = Sample;

    fn primitive(&mut self, index: u32) -> Sample {
        self.primitive_evals += 1;
        let value = self.tree.primitive(index).expect("primitive node").eval(self.p);
        Sample { value, used: true }
    }

    fn operator(&mut self, index: u32, left: Sample, right: Sample) -> Sample {
        let (used, blob) = rewritten(self.tree, index, left.used, right.used);
        Sample { value: apply_code(self.tree, index, blob.nodeop, left.value, right.value), used }
    }

    fn single(&mut self, index: u32, operand: Sample, from_left: bool) -> Sample {
        let absent = Sample { value: f32::INFINITY, used: false };
        if from_left {
            self.operator(index, operand, absent)
        } else {
            self.operator(index, absent, operand)
        }
    }
}

/// Field of the tree restricted to `active`; absent operands follow each
/// node's ignore mode and an unused root yields `+inf`.
pub fn eval_direct_sparse(tree: &LinearTree, active: &[u32], p: Point3) -> Result<f32, TraversalError> {
    let mut visitor = DirectEval { tree, p, primitive_evals: 0 };
    let out = sparse_traverse(tree, active, &mut visitor, &mut TraversalStats::default())?;
    Ok(match out {
        Some(Sample { value, used: true }) => value,
        _ => f32::INFINITY,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewLimits {
    pub max_active: usize,
    pub cache_bytes: usize,
}

impl Default for ViewLimits {
    fn default() -> Self {
        Self { max_active: DEFAULT_MAX_OVERLAP, cache_bytes: DEFAULT_CACHE_BYTES }
    }
}

/// Compacted copy of the active part of a tree.
#[derive(Debug, Clone)]
pub struct PrunedView<'t> {
    tree: &'t LinearTree,
    blobs: Vec<Blob>,
    offsets: Vec<u32>,
    cache: Vec<Word>,
    sources: Vec<u32>,
    root_used: bool,
    primitives: usize,
    build_stack_depth: usize,
    eval_stack_depth: usize,
}

struct ViewBuilder<'a, 't> {
    view: &'a mut PrunedView<'t>,
    cache_words: usize,
    spilled: bool,
}

impl ViewBuilder<'_, '_> {
    fn push(&mut self, index: u32, blob: Blob, with_params: bool) {
        let tree = self.view.tree;
        let params = if with_params { tree.params(index) } else { &[] };
        let offset = if params.is_empty() {
            self.view.cache.len() as u32
        } else if !self.spilled && self.view.cache.len() + params.len() <= self.cache_words {
            let at = self.view.cache.len() as u32;
            self.view.cache.extend_from_slice(params);
            at
        } else {
            self.spilled = true;
            SPILL_FLAG | (tree.offset(index) + 1)
        };
        self.view.blobs.push(blob);
        self.view.offsets.push(offset);
        self.view.sources.push(index);
    }
}

impl Visitor for ViewBuilder<'_, '_> {
    type Payload = bool;

    fn primitive(&mut self, index: u32) -> bool {
        let blob = self.view.tree.blob(index);
        self.push(index, blob, true);
        self.view.primitives += 1;
        true
    }

    fn operator(&mut self, index: u32, left: bool, right: bool) -> bool {
        let (used, blob) = rewritten(self.view.tree, index, left, right);
        let keeps_op = left && right && used;
        self.push(index, blob, keeps_op);
        used
    }

    fn single(&mut self, index: u32, operand: bool, from_left: bool) -> bool {
        let bits = if from_left { (operand as u8) << 1 } else { operand as u8 };
        operand_usage(self.view.tree.blob(index).ignore, bits).0
    }
}

impl<'t> PrunedView<'t> {
    pub fn build(
        tree: &'t LinearTree,
        active: &[u32],
        limits: ViewLimits,
    ) -> Result<PrunedView<'t>, TraversalError> {
        if active.len() > limits.max_active {
            return Err(TraversalError::ViewOverflow { count: active.len(), limit: limits.max_active });
        }
        let mut view = PrunedView {
            tree,
            blobs: Vec::with_capacity(2 * active.len()),
            offsets: Vec::with_capacity(2 * active.len()),
            cache: Vec::new(),
            sources: Vec::with_capacity(2 * active.len()),
            root_used: false,
            primitives: 0,
            build_stack_depth: 0,
            eval_stack_depth: 0,
        };
        let mut stats = TraversalStats::default();
        let mut builder = ViewBuilder { view: &mut view, cache_words: limits.cache_bytes / WORD_BYTES, spilled: false };
        let root = sparse_traverse(tree, active, &mut builder, &mut stats)?;
        view.root_used = root.unwrap_or(false);
        view.build_stack_depth = stats.max_stack_depth;

        let limit = 2 * limits.max_active.max(1) - 1;
        if view.blobs.len() > limit {
            return Err(TraversalError::ViewOverflow { count: view.blobs.len(), limit });
        }
        let (mut depth, mut max) = (0usize, 0usize);
        for b in &view.blobs {
            if b.is_primitive {
                depth += 1;
            } else {
                depth -= 1;
            }
            max = max.max(depth);
        }
        if max > STACK_CAPACITY {
            return Err(TraversalError::StackOverflow(STACK_CAPACITY));
        }
        view.eval_stack_depth = max;
        Ok(view)
    }

    pub fn tree(&self) -> &'t LinearTree {
        self.tree
    }

    pub fn blobs(&self) -> &[Blob] {
        &self.blobs
    }

    pub fn offsets(&self) -> &[u32] {
        &self.offsets
    }

    /// Source node indices of the retained nodes.
    pub fn sources(&self) -> &[u32] {
        &self.sources
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    pub fn primitive_count(&self) -> usize {
        self.primitives
    }

    pub fn root_used(&self) -> bool {
        self.root_used
    }

    pub fn cache_bytes(&self) -> usize {
        self.cache.len() * WORD_BYTES
    }

    pub fn spilled(&self) -> bool {
        self.offsets.iter().any(|&o| o & SPILL_FLAG != 0)
    }

    pub fn build_stack_depth(&self) -> usize {
        self.build_stack_depth
    }

    pub fn eval_stack_depth(&self) -> usize {
        self.eval_stack_depth
    }

    #[inline]
    fn params(&self, k: usize) -> &[Word] {
        let o = self.offsets[k];
        if o & SPILL_FLAG != 0 {
            &self.tree.words()[(o & !SPILL_FLAG) as usize..]
        } else {
            &self.cache[o as usize..]
        }
    }

    /// Bottom-up stack loop over the retained nodes.
    pub fn eval(&self, p: Point3) -> f32 {
        if !self.root_used || self.blobs.is_empty() {
            return f32::INFINITY;
        }
        let mut stack = [0.0f32; STACK_CAPACITY];
        let mut sp = 0usize;
        for (k, blob) in self.blobs.iter().enumerate() {
            if blob.is_primitive {
                let kind = primitive_kind_from_code(blob.nodeop).expect("primitive code");
                stack[sp] = decode_primitive(kind, self.params(k)).eval(p);
                sp += 1;
            } else {
                sp -= 1;
                let right = stack[sp];
                let left = stack[sp - 1];
                stack[sp - 1] = match blob.nodeop {
                    OP_RETURN_INFINITY => f32::INFINITY,
                    OP_RETURN_RIGHT => right,
                    OP_RETURN_LEFT => left,
                    code => {
                        let kind = operator_kind_from_code(code).expect("operator code");
                        decode_operator(kind, self.params(k)).apply(left, right)
                    }
                };
            }
        }
        stack[0]
    }

    /// Hash of the retained node list and rewritten codes.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.sources.hash(&mut h);
        self.blobs.hash(&mut h);
        self.root_used.hash(&mut h);
        h.finish()
    }
}

pub fn build_pruned_view<'t>(
    tree: &'t LinearTree,
    active: &[u32],
    limits: ViewLimits,
) -> Result<PrunedView<'t>, TraversalError> {
    PrunedView::build(tree, active, limits)
}

pub fn eval_pruned(view: &PrunedView<'_>, p: Point3) -> f32 {
    view.eval(p)
}
