use crate::field::{Operator, Primitive};
use crate::math::Point3;

/// Source blobtree: primitives at the leaves, binary operators inside.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneNode {
    Primitive(Primitive),
    Operator {
        op: Operator,
        left: Box<SceneNode>,
        right: Box<SceneNode>,
    },
}

impl SceneNode {
    pub fn op(op: Operator, left: SceneNode, right: SceneNode) -> SceneNode {
        SceneNode::Operator { op, left: Box::new(left), right: Box::new(right) }
    }

    /// Recursive evaluation straight from the source tree.
    pub fn eval(&self, p: Point3) -> f32 {
        match self {
            SceneNode::Primitive(prim) => prim.eval(p),
            SceneNode::Operator { op, left, right } => op.apply(left.eval(p), right.eval(p)),
        }
    }

    pub fn node_count(&self) -> usize {
        let mut count = 0;
        self.visit(&mut |_| count += 1);
        count
    }

    pub fn primitive_count(&self) -> usize {
        let mut count = 0;
        self.visit(&mut |n| {
            if matches!(n, SceneNode::Primitive(_)) {
                count += 1
            }
        });
        count
    }

    /// Pre-order visit without recursion, so deep combs are fine.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a SceneNode)) {
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            f(node);
            if let SceneNode::Operator { left, right, .. } = node {
                stack.push(right);
                stack.push(left);
            }
        }
    }

    /// Left-heavy comb: `op(op(op(n0, n1), n2), n3)...`. `None` for an empty list.
    pub fn left_comb(nodes: Vec<SceneNode>, op: Operator) -> Option<SceneNode> {
        let mut iter = nodes.into_iter();
        let first = iter.next()?;
        Some(iter.fold(first, |acc, n| SceneNode::op(op, acc, n)))
    }
}
