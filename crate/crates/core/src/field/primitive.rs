//! Primitive distance functions in their local frame.
//!
//! | kind        | shape scalars                     | field                                    |
//! |-------------|-----------------------------------|------------------------------------------|
//! | sphere      | radius                            | exact distance                           |
//! | ellipsoid   | radii (3)                         | `(|p/r| - 1) * min(r)`, 1-Lipschitz bound |
//! | torus       | major, minor (ring in local xz)   | exact distance                           |
//! | box         | half extents (3)                  | exact distance                           |
//! | sphere_cone | radius_a, radius_b, height (on y) | exact distance                           |
//! | quadric     | semi axes (3)                     | `q / |grad q|`, clamped to `-min(axes)`  |
//!
//! The quadric is the algebraic ellipsoid `sum (p_i/a_i)^2 - 1` normalized to
//! first order; it is not 1-Lipschitz everywhere.

use std::fmt;

use thiserror::Error;

use crate::math::{Point3, Quat, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrimitiveKind {
    Sphere,
    Ellipsoid,
    Torus,
    Box,
    SphereCone,
    Quadric,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 6] = [
        PrimitiveKind::Sphere,
        PrimitiveKind::Ellipsoid,
        PrimitiveKind::Torus,
        PrimitiveKind::Box,
        PrimitiveKind::SphereCone,
        PrimitiveKind::Quadric,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).unwrap()
    }

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::Sphere => "sphere",
            PrimitiveKind::Ellipsoid => "ellipsoid",
            PrimitiveKind::Torus => "torus",
            PrimitiveKind::Box => "box",
            PrimitiveKind::SphereCone => "sphere_cone",
            PrimitiveKind::Quadric => "quadric",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|k| k.name() == name)
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { radius: f32 },
    Ellipsoid { radii: Vec3 },
    Torus { major: f32, minor: f32 },
    Box { half_extents: Vec3 },
    SphereCone { radius_a: f32, radius_b: f32, height: f32 },
    Quadric { axes: Vec3 },
}

impl Shape {
    pub fn kind(&self) -> PrimitiveKind {
        match self {
            Shape::Sphere { .. } => PrimitiveKind::Sphere,
            Shape::Ellipsoid { .. } => PrimitiveKind::Ellipsoid,
            Shape::Torus { .. } => PrimitiveKind::Torus,
            Shape::Box { .. } => PrimitiveKind::Box,
            Shape::SphereCone { .. } => PrimitiveKind::SphereCone,
            Shape::Quadric { .. } => PrimitiveKind::Quadric,
        }
    }

    /// Shape scalars in encoding order.
    pub fn scalars(&self) -> Vec<f32> {
        match *self {
            Shape::Sphere { radius } => vec![radius],
            Shape::Ellipsoid { radii } => radii.to_array().to_vec(),
            Shape::Torus { major, minor } => vec![major, minor],
            Shape::Box { half_extents } => half_extents.to_array().to_vec(),
            Shape::SphereCone { radius_a, radius_b, height } => vec![radius_a, radius_b, height],
            Shape::Quadric { axes } => axes.to_array().to_vec(),
        }
    }

    /// Inverse of `scalars`; `s` must hold at least as many values as the kind needs.
    pub fn from_scalars(kind: PrimitiveKind, s: &[f32]) -> Shape {
        let v3 = || Vec3::new(s[0], s[1], s[2]);
        match kind {
            PrimitiveKind::Sphere => Shape::Sphere { radius: s[0] },
            PrimitiveKind::Ellipsoid => Shape::Ellipsoid { radii: v3() },
            PrimitiveKind::Torus => Shape::Torus { major: s[0], minor: s[1] },
            PrimitiveKind::Box => Shape::Box { half_extents: v3() },
            PrimitiveKind::SphereCone => Shape::SphereCone {
                radius_a: s[0],
                radius_b: s[1],
                height: s[2],
            },
            PrimitiveKind::Quadric => Shape::Quadric { axes: v3() },
        }
    }

    pub fn validate(&self) -> Result<(), ShapeError> {
        let positive = |name: &'static str, v: f32| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ShapeError::NonPositive { name, value: v })
            }
        };
        let positive3 = |name: &'static str, v: Vec3| {
            positive(name, v.x)?;
            positive(name, v.y)?;
            positive(name, v.z)
        };
        match *self {
            Shape::Sphere { radius } => positive("radius", radius),
            Shape::Ellipsoid { radii } => positive3("radii", radii),
            Shape::Torus { major, minor } => {
                positive("major", major)?;
                positive("minor", minor)?;
                if minor >= major {
                    return Err(ShapeError::Degenerate("torus minor radius must be below major radius"));
                }
                Ok(())
            }
            Shape::Box { half_extents } => positive3("half_extents", half_extents),
            Shape::SphereCone { radius_a, radius_b, height } => {
                positive("radius_a", radius_a)?;
                positive("radius_b", radius_b)?;
                positive("height", height)?;
                if (radius_a - radius_b).abs() >= height {
                    return Err(ShapeError::Degenerate(
                        "sphere_cone radius difference must be below its height",
                    ));
                }
                Ok(())
            }
            Shape::Quadric { axes } => positive3("axes", axes),
        }
    }

    /// Signed distance in the primitive's local frame.
    pub fn eval_local(&self, p: Point3) -> f32 {
        match *self {
            Shape::Sphere { radius } => p.length() - radius,
            Shape::Ellipsoid { radii } => {
                let m = radii.min_element();
                (p.div_elem(radii).length() - 1.0) * m
            }
            Shape::Torus { major, minor } => {
                let qx = (p.x * p.x + p.z * p.z).sqrt() - major;
                (qx * qx + p.y * p.y).sqrt() - minor
            }
            Shape::Box { half_extents } => {
                let q = p.abs() - half_extents;
                q.max(Vec3::ZERO).length() + q.max_element().min(0.0)
            }
            Shape::SphereCone { radius_a, radius_b, height } => {
                round_cone(p + Vec3::new(0.0, 0.5 * height, 0.0), radius_a, radius_b, height)
            }
            Shape::Quadric { axes } => {
                let inv2 = Vec3::new(
                    1.0 / (axes.x * axes.x),
                    1.0 / (axes.y * axes.y),
                    1.0 / (axes.z * axes.z),
                );
                let q = p.mul_elem(p).dot(inv2) - 1.0;
                let grad = p.mul_elem(inv2) * 2.0;
                let g = grad.length().max(1e-12);
                (q / g).max(-axes.min_element())
            }
        }
    }
}

/// Round cone with sphere `ra` at the origin and sphere `rb` at `(0, h, 0)`.
fn round_cone(p: Point3, ra: f32, rb: f32, h: f32) -> f32 {
    let b = (ra - rb) / h;
    let a = (1.0 - b * b).sqrt();
    let qx = (p.x * p.x + p.z * p.z).sqrt();
    let qy = p.y;
    let k = -b * qx + a * qy;
    if k < 0.0 {
        (qx * qx + qy * qy).sqrt() - ra
    } else if k > a * h {
        (qx * qx + (qy - h) * (qy - h)).sqrt() - rb
    } else {
        qx * a + qy * b - ra
    }
}

/// Rigid transform: local point = conj(rotation) * (p - translation).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Transform {
    pub translation: Vec3,
    pub rotation: Quat,
}

impl Transform {
    pub fn new(translation: Vec3, rotation: Quat) -> Result<Self, ShapeError> {
        if !translation.is_finite() {
            return Err(ShapeError::InvalidTransform("non-finite translation"));
        }
        let rotation = rotation
            .normalized()
            .ok_or(ShapeError::InvalidTransform("rotation quaternion must be finite and non-zero"))?;
        Ok(Self { translation, rotation })
    }

    pub fn translate(t: Vec3) -> Self {
        Self { translation: t, rotation: Quat::IDENTITY }
    }

    #[inline]
    pub fn to_local(&self, p: Point3) -> Point3 {
        self.rotation.conjugate().rotate(p - self.translation)
    }

    #[inline]
    pub fn to_world(&self, p: Point3) -> Point3 {
        self.rotation.rotate(p) + self.translation
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("{name} must be finite and positive, got {value}")]
    NonPositive { name: &'static str, value: f32 },
    #[error("{0}")]
    Degenerate(&'static str),
    #[error("invalid transform: {0}")]
    InvalidTransform(&'static str),
}

/// A transformed primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    shape: Shape,
    transform: Transform,
}

impl Primitive {
    pub fn new(shape: Shape, transform: Transform) -> Result<Self, ShapeError> {
        shape.validate()?;
        let transform = Transform::new(transform.translation, transform.rotation)?;
        Ok(Self { shape, transform })
    }

    /// Skips validation; for decoding parameters that were validated on encode.
    pub(crate) fn from_parts_unchecked(shape: Shape, transform: Transform) -> Self {
        Self { shape, transform }
    }

    pub fn sphere(center: Vec3, radius: f32) -> Result<Self, ShapeError> {
        Self::new(Shape::Sphere { radius }, Transform::translate(center))
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn transform(&self) -> &Transform {
        &self.transform
    }

    pub fn kind(&self) -> PrimitiveKind {
        self.shape.kind()
    }

    #[inline]
    pub fn eval(&self, p: Point3) -> f32 {
        super::ops::filter_nan(self.shape.eval_local(self.transform.to_local(p)))
    }
}

/// Evaluates a primitive; the free-function form of [`Primitive::eval`].
pub fn eval_primitive(prim: &Primitive, p: Point3) -> f32 {
    prim.eval(p)
}
