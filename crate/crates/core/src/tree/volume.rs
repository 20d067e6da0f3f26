//! Volumes of interest: primitive bounding solids dilated by their range upper bound.

use super::linear::LinearTree;
use super::roi::RoiPropagation;
use crate::field::{Primitive, Shape};
use crate::math::{Point3, Quat, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VolumeShape {
    Sphere { center: Point3, radius: f32 },
    OrientedBox { center: Point3, rotation: Quat, half_extents: Vec3 },
    Capsule { a: Point3, b: Point3, radius: f32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeOfInterest {
    pub primitive: u32,
    pub offset: f32,
    pub shape: VolumeShape,
}

impl VolumeShape {
    /// Solid containing `{p : prim(p) <= offset}`.
    pub fn enclosing(prim: &Primitive, offset: f32) -> VolumeShape {
        let t = prim.transform();
        let u = offset.max(0.0);
        let obb = |half_extents: Vec3| VolumeShape::OrientedBox {
            center: t.translation,
            rotation: t.rotation,
            half_extents,
        };
        match *prim.shape() {
            Shape::Sphere { radius } => VolumeShape::Sphere { center: t.translation, radius: radius + u },
            Shape::Torus { major, minor } => VolumeShape::Sphere {
                center: t.translation,
                radius: major + minor + u,
            },
            Shape::Box { half_extents } => obb(half_extents + Vec3::splat(u)),
            Shape::Ellipsoid { radii } => {
                // field = (|p/r| - 1) * min(r)
                let m = radii.min_element();
                obb(radii * (1.0 + u / m))
            }
            Shape::Quadric { axes } => {
                // q / |grad q| <= u holds inside the axis-aligned hull of the ellipsoid
                // scaled by s, with s from the 1D bound along the smallest axis.
                let x = u / axes.min_element();
                obb(axes * (x + (x * x + 1.0).sqrt()))
            }
            Shape::SphereCone { radius_a, radius_b, height } => {
                let half = Vec3::new(0.0, 0.5 * height, 0.0);
                VolumeShape::Capsule {
                    a: t.to_world(-half),
                    b: t.to_world(half),
                    radius: radius_a.max(radius_b) + u,
                }
            }
        }
    }

    pub fn contains(&self, p: Point3) -> bool {
        match *self {
            VolumeShape::Sphere { center, radius } => (p - center).length() <= radius,
            VolumeShape::OrientedBox { center, rotation, half_extents } => {
                let q = rotation.conjugate().rotate(p - center).abs();
                q.x <= half_extents.x && q.y <= half_extents.y && q.z <= half_extents.z
            }
            VolumeShape::Capsule { a, b, radius } => segment_distance(p, a, b) <= radius,
        }
    }

    pub fn bounding_sphere(&self) -> (Point3, f32) {
        match *self {
            VolumeShape::Sphere { center, radius } => (center, radius),
            VolumeShape::OrientedBox { center, half_extents, .. } => (center, half_extents.length()),
            VolumeShape::Capsule { a, b, radius } => ((a + b) * 0.5, (b - a).length() * 0.5 + radius),
        }
    }

    /// Entry and exit distances along `origin + t * dir`, `dir` unit length.
    /// The interval may start behind the origin.
    pub fn intersect_ray(&self, origin: Point3, dir: Vec3) -> Option<(f32, f32)> {
        match *self {
            VolumeShape::Sphere { center, radius } => ray_sphere(origin, dir, center, radius),
            VolumeShape::OrientedBox { center, rotation, half_extents } => {
                let inv = rotation.conjugate();
                ray_box(inv.rotate(origin - center), inv.rotate(dir), half_extents)
            }
            VolumeShape::Capsule { a, b, radius } => ray_capsule(origin, dir, a, b, radius),
        }
    }
}

impl VolumeOfInterest {
    pub fn contains(&self, p: Point3) -> bool {
        self.shape.contains(p)
    }
}

fn segment_distance(p: Point3, a: Point3, b: Point3) -> f32 {
    let ab = b - a;
    let len2 = ab.length_squared();
    let h = if len2 > 0.0 { ((p - a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * h)).length()
}

fn ray_sphere(o: Point3, d: Vec3, c: Point3, r: f32) -> Option<(f32, f32)> {
    let oc = o - c;
    let b = oc.dot(d);
    // Stable form of c - b^2 for rays starting far away.
    let perp = oc - d * b;
    let h = r * r - perp.length_squared();
    if h < 0.0 {
        return None;
    }
    let h = h.sqrt();
    Some((-b - h, -b + h))
}

fn ray_box(o: Point3, d: Vec3, half: Vec3) -> Option<(f32, f32)> {
    let (mut t0, mut t1) = (f32::NEG_INFINITY, f32::INFINITY);
    for axis in 0..3 {
        let (oa, da, ha) = (o[axis], d[axis], half[axis]);
        if da == 0.0 {
            if oa.abs() > ha {
                return None;
            }
            continue;
        }
        let a = (-ha - oa) / da;
        let b = (ha - oa) / da;
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1).then_some((t0, t1))
}

fn ray_capsule(o: Point3, d: Vec3, a: Point3, b: Point3, r: f32) -> Option<(f32, f32)> {
    // The capsule is convex and equals the union of its two end spheres and
    // the finite cylinder, so its interval is the hull of the pieces' intervals.
    let mut hull: Option<(f32, f32)> = None;
    let mut add = |iv: Option<(f32, f32)>| {
        if let Some((lo, hi)) = iv {
            hull = Some(match hull {
                Some((l, h)) => (l.min(lo), h.max(hi)),
                None => (lo, hi),
            });
        }
    };
    add(ray_sphere(o, d, a, r));
    add(ray_sphere(o, d, b, r));

    let ab = b - a;
    let len = ab.length();
    if len > 0.0 {
        let w = ab / len;
        let oc = o - a;
        let (dw, ow) = (d.dot(w), oc.dot(w));
        let dp = d - w * dw;
        let op = oc - w * ow;
        let qa = dp.length_squared();
        let radial = if qa > 1e-12 {
            let qb = op.dot(dp);
            let disc = qb * qb - qa * (op.length_squared() - r * r);
            (disc >= 0.0).then(|| {
                let s = disc.sqrt();
                ((-qb - s) / qa, (-qb + s) / qa)
            })
        } else if op.length_squared() <= r * r {
            Some((f32::NEG_INFINITY, f32::INFINITY))
        } else {
            None
        };
        let slab = if dw != 0.0 {
            let (s0, s1) = (-ow / dw, (len - ow) / dw);
            Some((s0.min(s1), s0.max(s1)))
        } else if (0.0..=len).contains(&ow) {
            Some((f32::NEG_INFINITY, f32::INFINITY))
        } else {
            None
        };
        if let (Some((r0, r1)), Some((s0, s1))) = (radial, slab) {
            let (lo, hi) = (r0.max(s0), r1.min(s1));
            if lo <= hi {
                add(Some((lo, hi)));
            }
        }
    }
    hull
}

/// One volume per primitive, in ascending primitive index order.
///
/// `margin` is added to every range upper bound so that points the tracer
/// accepts as hits (`f <= margin`) stay inside the volumes.
pub fn build_volumes_of_interest(
    tree: &LinearTree,
    rois: &RoiPropagation,
    margin: f32,
) -> Vec<VolumeOfInterest> {
    tree.primitive_indices()
        .iter()
        .map(|&i| {
            let prim = tree.primitive(i).expect("primitive index");
            let offset = rois.upper(i) + margin;
            VolumeOfInterest { primitive: i, offset, shape: VolumeShape::enclosing(prim, offset) }
        })
        .collect()
}
