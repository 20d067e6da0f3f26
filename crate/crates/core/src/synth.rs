//! Random trees for testing and grid scenes of small procedural subobjects.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::field::{BlendClass, Combine, Operator, OperatorKind, Primitive, PrimitiveKind, Shape, Transform};
use crate::math::{Quat, Vec3};
use crate::tree::SceneNode;

fn random_quat<R: Rng>(rng: &mut R) -> Quat {
    let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    if axis.length() < 1e-3 {
        return Quat::IDENTITY;
    }
    Quat::from_axis_angle(axis, rng.gen_range(0.0..std::f32::consts::TAU))
}

/// Random primitive of `kind` centered at `center` with overall size about `size`.
pub fn random_primitive<R: Rng>(rng: &mut R, kind: PrimitiveKind, center: Vec3, size: f32) -> Primitive {
    let mut r = |lo: f32, hi: f32| size * rng.gen_range(lo..hi);
    let shape = match kind {
        PrimitiveKind::Sphere => Shape::Sphere { radius: r(0.6, 1.0) },
        PrimitiveKind::Ellipsoid => Shape::Ellipsoid { radii: Vec3::new(r(0.4, 1.0), r(0.4, 1.0), r(0.4, 1.0)) },
        PrimitiveKind::Torus => {
            let major = r(0.6, 0.9);
            Shape::Torus { major, minor: major * 0.3 }
        }
        PrimitiveKind::Box => Shape::Box { half_extents: Vec3::new(r(0.35, 0.8), r(0.35, 0.8), r(0.35, 0.8)) },
        PrimitiveKind::SphereCone => {
            let height = r(0.8, 1.4);
            Shape::SphereCone { radius_a: height * 0.35, radius_b: height * 0.2, height }
        }
        PrimitiveKind::Quadric => Shape::Quadric { axes: Vec3::new(r(0.4, 0.9), r(0.4, 0.9), r(0.4, 0.9)) },
    };
    let rot = random_quat(rng);
    Primitive::new(shape, Transform::new(center, rot).expect("finite transform")).expect("valid shape")
}

/// Operator families a random tree may draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorMix {
    /// Every kind, bounded smooth ones included.
    All,
    /// Sharp and compact kinds only.
    Compact,
}

#[derive(Debug, Clone, Copy)]
pub struct RandomTreeConfig {
    pub min_primitives: usize,
    pub max_primitives: usize,
    pub mix: OperatorMix,
    /// Half side of the cube the primitive centers are drawn from.
    pub extent: f32,
    pub primitive_size: f32,
}

impl Default for RandomTreeConfig {
    fn default() -> Self {
        Self { min_primitives: 1, max_primitives: 64, mix: OperatorMix::All, extent: 2.0, primitive_size: 0.8 }
    }
}

pub fn random_operator<R: Rng>(rng: &mut R, mix: OperatorMix) -> Operator {
    let kinds: Vec<OperatorKind> = OperatorKind::ALL
        .iter()
        .copied()
        .filter(|k| mix == OperatorMix::All || k.class() != BlendClass::Bounded)
        .collect();
    let kind = *kinds.choose(rng).expect("non-empty kinds");
    let k = rng.gen_range(0.1..0.5);
    let d = k * rng.gen_range(1.0..2.0);
    Operator::new(kind, k, d).expect("valid operator parameters")
}

/// Random binary tree with random split points, kinds and parameters.
pub fn random_tree<R: Rng>(rng: &mut R, cfg: &RandomTreeConfig) -> SceneNode {
    let n = rng.gen_range(cfg.min_primitives.max(1)..=cfg.max_primitives.max(cfg.min_primitives.max(1)));
    build(rng, cfg, n)
}

fn build<R: Rng>(rng: &mut R, cfg: &RandomTreeConfig, n: usize) -> SceneNode {
    if n == 1 {
        let kind = *PrimitiveKind::ALL.choose(rng).expect("kinds");
        let e = cfg.extent;
        let c = Vec3::new(rng.gen_range(-e..e), rng.gen_range(-e..e), rng.gen_range(-e..e));
        return SceneNode::Primitive(random_primitive(rng, kind, c, cfg.primitive_size));
    }
    let left = rng.gen_range(1..n);
    let op = random_operator(rng, cfg.mix);
    let l = build(rng, cfg, left);
    let r = build(rng, cfg, n - left);
    SceneNode::op(op, l, r)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("expected preset:grid:kind:blend, got {0:?}")]
    Format(String),
    #[error("unknown preset {0:?} (expected r0 or r3)")]
    Preset(String),
    #[error("invalid grid {0:?} (expected N or AxBxC with positive sizes)")]
    Grid(String),
    #[error("unknown subobject kind {0:?} (expected cluster3..cluster6 or mixed)")]
    Kind(String),
    #[error("unknown blend mode {0:?} (expected sharp or smooth)")]
    Blend(String),
}

/// Subobject construction style.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Blobby clusters joined by unions.
    R0,
    /// Carved solids: intersection, difference, then unions.
    R3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubobjectKind {
    Cluster(usize),
    /// 3 to 6 primitives per subobject, drawn per subobject.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlendMode {
    Sharp,
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    pub preset: Preset,
    pub grid: [u32; 3],
    pub kind: SubobjectKind,
    pub blend: BlendMode,
}

impl FromStr for SynthSpec {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, SynthError> {
        let parts: Vec<&str> = s.split(':').collect();
        let [preset, grid, kind, blend] = parts[..] else {
            return Err(SynthError::Format(s.to_string()));
        };
        let preset = match preset {
            "r0" => Preset::R0,
            "r3" => Preset::R3,
            other => return Err(SynthError::Preset(other.to_string())),
        };
        let dims: Vec<u32> = grid
            .split('x')
            .map(|d| d.parse::<u32>().ok().filter(|&v| v > 0))
            .collect::<Option<_>>()
            .ok_or_else(|| SynthError::Grid(grid.to_string()))?;
        let grid = match dims[..] {
            [n] => [n, n, n],
            [a, b, c] => [a, b, c],
            _ => return Err(SynthError::Grid(grid.to_string())),
        };
        let kind = match kind {
            "mixed" => SubobjectKind::Mixed,
            k => match k.strip_prefix("cluster").and_then(|v| v.parse::<usize>().ok()) {
                Some(n @ 3..=6) => SubobjectKind::Cluster(n),
                _ => return Err(SynthError::Kind(k.to_string())),
            },
        };
        let blend = match blend {
            "sharp" => BlendMode::Sharp,
            "smooth" => BlendMode::Smooth,
            other => return Err(SynthError::Blend(other.to_string())),
        };
        Ok(SynthSpec { preset, grid, kind, blend })
    }
}

impl fmt::Display for SynthSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preset = match self.preset {
            Preset::R0 => "r0",
            Preset::R3 => "r3",
        };
        let kind = match self.kind {
            SubobjectKind::Cluster(n) => format!("cluster{n}"),
            SubobjectKind::Mixed => "mixed".to_string(),
        };
        let blend = match self.blend {
            BlendMode::Sharp => "sharp",
            BlendMode::Smooth => "smooth",
        };
        let [a, b, c] = self.grid;
        write!(f, "{preset}:{a}x{b}x{c}:{kind}:{blend}")
    }
}

/// Grid cell size; subobjects stay within a radius of about 0.85 around their cell center.
pub const CELL: f32 = 2.0;
const SMOOTH_K: f32 = 0.3;

fn blend_op(blend: BlendMode, combine: Combine) -> Operator {
    match blend {
        BlendMode::Sharp => Operator::csg(match combine {
            Combine::Union => OperatorKind::CsgUnion,
            Combine::Intersect => OperatorKind::CsgIntersect,
            Combine::Diff => OperatorKind::CsgDiff,
        }),
        BlendMode::Smooth => Operator::compact(combine, SMOOTH_K).expect("valid compact operator"),
    }
}

fn subobject<R: Rng>(rng: &mut R, spec: &SynthSpec, center: Vec3) -> SceneNode {
    let n = match spec.kind {
        SubobjectKind::Cluster(n) => n,
        SubobjectKind::Mixed => rng.gen_range(3..=6),
    };
    let jitter = |rng: &mut R, s: f32| {
        center + Vec3::new(rng.gen_range(-s..s), rng.gen_range(-s..s), rng.gen_range(-s..s))
    };
    match spec.preset {
        Preset::R0 => {
            let kinds = [PrimitiveKind::Sphere, PrimitiveKind::Box, PrimitiveKind::Torus, PrimitiveKind::Ellipsoid, PrimitiveKind::SphereCone];
            let prims = (0..n)
                .map(|_| {
                    let kind = *kinds.choose(rng).expect("kinds");
                    let c = jitter(rng, 0.4);
                    SceneNode::Primitive(random_primitive(rng, kind, c, 0.4))
                })
                .collect();
            SceneNode::left_comb(prims, blend_op(spec.blend, Combine::Union)).expect("non-empty")
        }
        Preset::R3 => {
            let body = SceneNode::Primitive(random_primitive(rng, PrimitiveKind::Box, center, 0.7));
            let round = SceneNode::Primitive(
                Primitive::sphere(center, 0.75 + rng.gen_range(0.0..0.1)).expect("positive radius"),
            );
            let mut node = SceneNode::op(blend_op(spec.blend, Combine::Intersect), body, round);
            let c = jitter(rng, 0.2);
            let hole = SceneNode::Primitive(random_primitive(rng, PrimitiveKind::Ellipsoid, c, 0.45));
            node = SceneNode::op(blend_op(spec.blend, Combine::Diff), node, hole);
            for _ in 3..n {
                let kind = *[PrimitiveKind::Sphere, PrimitiveKind::Torus, PrimitiveKind::SphereCone]
                    .choose(rng)
                    .expect("kinds");
                let c = jitter(rng, 0.45);
                let extra = SceneNode::Primitive(random_primitive(rng, kind, c, 0.3));
                node = SceneNode::op(blend_op(spec.blend, Combine::Union), node, extra);
            }
            node
        }
    }
}

/// Grid of subobjects merged by a left-heavy comb of sharp unions.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> SceneNode {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [a, b, c] = spec.grid;
    let origin = Vec3::new(a as f32 - 1.0, b as f32 - 1.0, c as f32 - 1.0) * (-0.5 * CELL);
    let mut objects = Vec::with_capacity((a * b * c) as usize);
    for z in 0..c {
        for y in 0..b {
            for x in 0..a {
                let center = origin + Vec3::new(x as f32, y as f32, z as f32) * CELL;
                objects.push(subobject(&mut rng, spec, center));
            }
        }
    }
    SceneNode::left_comb(objects, Operator::csg(OperatorKind::CsgUnion)).expect("grid is non-empty")
}

/// Center and radius of a sphere bounding every generated subobject.
pub fn grid_bounds(spec: &SynthSpec) -> (Vec3, f32) {
    let [a, b, c] = spec.grid;
    let half = Vec3::new(a as f32, b as f32, c as f32) * (0.5 * CELL);
    (Vec3::ZERO, half.length())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let s: SynthSpec = "r0:4x4x2:cluster6:smooth".parse().unwrap();
        assert_eq!(s.grid, [4, 4, 2]);
        assert_eq!(s.to_string(), "r0:4x4x2:cluster6:smooth");
        let s: SynthSpec = "r3:2:cluster3:sharp".parse().unwrap();
        assert_eq!(s.grid, [2, 2, 2]);
        assert!("r0:2:cluster7:sharp".parse::<SynthSpec>().is_err());
        assert!("r9:2:cluster3:sharp".parse::<SynthSpec>().is_err());
        assert!("r0:0:cluster3:sharp".parse::<SynthSpec>().is_err());
        assert!("r0:2:cluster3".parse::<SynthSpec>().is_err());
    }

    #[test]
    fn counts() {
        let s: SynthSpec = "r0:2:cluster3:sharp".parse().unwrap();
        let t = generate_synthetic(&s, 1);
        assert_eq!(t.primitive_count(), 24);
        assert_eq!(t.node_count() - t.primitive_count(), 23);
        let s: SynthSpec = "r3:1:cluster5:smooth".parse().unwrap();
        assert_eq!(generate_synthetic(&s, 1).primitive_count(), 5);
        for (g, n) in [("1x1x1", 6), ("4x4x1", 96), ("4x4x2", 192), ("8x4x4", 768)] {
            let s: SynthSpec = format!("r0:{g}:cluster6:sharp").parse().unwrap();
            assert_eq!(generate_synthetic(&s, 3).primitive_count(), n);
        }
    }

    #[test]
    fn deterministic() {
        let s: SynthSpec = "r0:2:mixed:smooth".parse().unwrap();
        assert_eq!(generate_synthetic(&s, 9), generate_synthetic(&s, 9));
        assert_ne!(generate_synthetic(&s, 9), generate_synthetic(&s, 10));
    }

    #[test]
    fn random_tree_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = RandomTreeConfig { min_primitives: 5, max_primitives: 9, ..Default::default() };
        for _ in 0..50 {
            let t = random_tree(&mut rng, &cfg);
            assert!((5..=9).contains(&t.primitive_count()));
            assert_eq!(t.node_count(), 2 * t.primitive_count() - 1);
        }
    }
}
