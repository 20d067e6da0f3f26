//! JSON scene documents.
//!
//! ```json
//! {
//!   "camera": { "position": [0, 1, -6], "target": [0, 0, 0], "up": [0, 1, 0],
//!               "fov": 45, "near": 0.5, "far": 20 },
//!   "root": {
//!     "op": "compact_union", "k": 0.3, "d": 0.3,
//!     "left":  { "prim": "sphere", "radius": 1,
//!                "transform": { "translate": [-0.5, 0, 0], "rotate_quat": [1, 0, 0, 0] } },
//!     "right": { "prim": "box", "half_extents": [0.5, 0.5, 0.5] }
//!   }
//! }
//! ```
//!
//! Shape fields: `sphere` radius; `ellipsoid` radii; `torus` major, minor;
//! `box` half_extents; `sphere_cone` radius_a, radius_b, height; `quadric` axes.
//! The camera block and transforms are optional; `d` defaults to `k`.

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::camera::Camera;
use crate::field::{BlendClass, Operator, OperatorKind, Primitive, PrimitiveKind, Shape, Transform};
use crate::math::{Quat, Vec3};
use crate::tree::SceneNode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DocumentError {
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
}

fn field_err(path: &str, message: impl Into<String>) -> DocumentError {
    DocumentError::Field { path: path.to_string(), message: message.into() }
}

/// Camera placement; the image size comes from the caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraSpec {
    pub position: Vec3,
    pub target: Vec3,
    pub up: Vec3,
    pub fov_deg: f32,
    pub near: f32,
    pub far: f32,
}

impl CameraSpec {
    pub fn with_size(&self, width: u32, height: u32) -> Camera {
        Camera {
            position: self.position,
            target: self.target,
            up: self.up,
            fov_deg: self.fov_deg,
            near: self.near,
            far: self.far,
            width,
            height,
        }
    }

    pub fn from_camera(c: &Camera) -> CameraSpec {
        CameraSpec { position: c.position, target: c.target, up: c.up, fov_deg: c.fov_deg, near: c.near, far: c.far }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneDocument {
    pub camera: Option<CameraSpec>,
    pub root: SceneNode,
}

struct Obj<'a> {
    map: &'a Map<String, Value>,
    path: &'a str,
}

impl<'a> Obj<'a> {
    fn new(v: &'a Value, path: &'a str) -> Result<Self, DocumentError> {
        v.as_object().map(|map| Obj { map, path }).ok_or_else(|| field_err(path, "expected an object"))
    }

    fn sub(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.path)
        }
    }

    fn only(&self, allowed: &[&str]) -> Result<(), DocumentError> {
        for k in self.map.keys() {
            if !allowed.contains(&k.as_str()) {
                return Err(field_err(&self.sub(k), format!("unknown field (expected one of {})", allowed.join(", "))));
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.map.get(key)
    }

    fn req(&self, key: &str) -> Result<&'a Value, DocumentError> {
        self.get(key).ok_or_else(|| field_err(&self.sub(key), "missing field"))
    }

    fn num(&self, key: &str) -> Result<f32, DocumentError> {
        number(self.req(key)?, &self.sub(key))
    }

    fn opt_num(&self, key: &str) -> Result<Option<f32>, DocumentError> {
        self.get(key).map(|v| number(v, &self.sub(key))).transpose()
    }

    fn vec3(&self, key: &str) -> Result<Vec3, DocumentError> {
        let a = array::<3>(self.req(key)?, &self.sub(key))?;
        Ok(Vec3::from_array(a))
    }

    fn str(&self, key: &str) -> Result<&'a str, DocumentError> {
        self.req(key)?.as_str().ok_or_else(|| field_err(&self.sub(key), "expected a string"))
    }
}

fn number(v: &Value, path: &str) -> Result<f32, DocumentError> {
    let x = v.as_f64().ok_or_else(|| field_err(path, "expected a number"))? as f32;
    if !x.is_finite() {
        return Err(field_err(path, "number out of range"));
    }
    Ok(x)
}

fn array<const N: usize>(v: &Value, path: &str) -> Result<[f32; N], DocumentError> {
    let a = v.as_array().ok_or_else(|| field_err(path, format!("expected an array of {N} numbers")))?;
    if a.len() != N {
        return Err(field_err(path, format!("expected {N} numbers, got {}", a.len())));
    }
    let mut out = [0.0; N];
    for (i, x) in a.iter().enumerate() {
        out[i] = number(x, &format!("{path}[{i}]"))?;
    }
    Ok(out)
}

fn parse_camera(v: &Value, path: &str) -> Result<CameraSpec, DocumentError> {
    let o = Obj::new(v, path)?;
    o.only(&["position", "target", "up", "fov", "near", "far"])?;
    let spec = CameraSpec {
        position: o.vec3("position")?,
        target: o.vec3("target")?,
        up: match o.get("up") {
            Some(_) => o.vec3("up")?,
            None => Vec3::Y,
        },
        fov_deg: o.opt_num("fov")?.unwrap_or(45.0),
        near: o.num("near")?,
        far: o.num("far")?,
    };
    spec.with_size(1, 1).validate().map_err(|e| field_err(path, e.to_string()))?;
    Ok(spec)
}

fn parse_transform(v: &Value, path: &str) -> Result<Transform, DocumentError> {
    let o = Obj::new(v, path)?;
    o.only(&["translate", "rotate_quat"])?;
    let t = match o.get("translate") {
        Some(_) => o.vec3("translate")?,
        None => Vec3::ZERO,
    };
    let q = match o.get("rotate_quat") {
        Some(q) => {
            let [w, x, y, z] = array::<4>(q, &o.sub("rotate_quat"))?;
            Quat::new(w, x, y, z)
        }
        None => Quat::IDENTITY,
    };
    Transform::new(t, q).map_err(|e| field_err(path, e.to_string()))
}

fn shape_fields(kind: PrimitiveKind) -> &'static [&'static str] {
    match kind {
        PrimitiveKind::Sphere => &["radius"],
        PrimitiveKind::Ellipsoid => &["radii"],
        PrimitiveKind::Torus => &["major", "minor"],
        PrimitiveKind::Box => &["half_extents"],
        PrimitiveKind::SphereCone => &["radius_a", "radius_b", "height"],
        PrimitiveKind::Quadric => &["axes"],
    }
}

fn parse_node(v: &Value, path: &str) -> Result<SceneNode, DocumentError> {
    let o = Obj::new(v, path)?;
    match (o.get("op"), o.get("prim")) {
        (Some(_), Some(_)) => Err(field_err(path, "a node has either \"op\" or \"prim\", not both")),
        (None, None) => Err(field_err(path, "a node needs an \"op\" or a \"prim\" field")),
        (Some(_), None) => {
            o.only(&["op", "k", "d", "left", "right"])?;
            let name = o.str("op")?;
            let kind = OperatorKind::from_name(name).ok_or_else(|| {
                let names: Vec<_> = OperatorKind::ALL.iter().map(|k| k.name()).collect();
                field_err(&o.sub("op"), format!("unknown operator {name:?} (expected one of {})", names.join(", ")))
            })?;
            let op = match kind.class() {
                BlendClass::Sharp => Operator::csg(kind),
                BlendClass::Bounded | BlendClass::Compact => {
                    let k = o.num("k")?;
                    let d = o.opt_num("d")?.unwrap_or(k);
                    Operator::new(kind, k, d).map_err(|e| field_err(path, e.to_string()))?
                }
            };
            let (Some(l), Some(r)) = (o.get("left"), o.get("right")) else {
                return Err(field_err(path, "operators need exactly two children, \"left\" and \"right\""));
            };
            let left = parse_node(l, &o.sub("left"))?;
            let right = parse_node(r, &o.sub("right"))?;
            Ok(SceneNode::op(op, left, right))
        }
        (None, Some(_)) => {
            let name = o.str("prim")?;
            let kind = PrimitiveKind::from_name(name).ok_or_else(|| {
                let names: Vec<_> = PrimitiveKind::ALL.iter().map(|k| k.name()).collect();
                field_err(&o.sub("prim"), format!("unknown primitive {name:?} (expected one of {})", names.join(", ")))
            })?;
            let fields = shape_fields(kind);
            let mut allowed = vec!["prim", "transform"];
            allowed.extend_from_slice(fields);
            o.only(&allowed)?;
            let shape = match kind {
                PrimitiveKind::Sphere => Shape::Sphere { radius: o.num("radius")? },
                PrimitiveKind::Ellipsoid => Shape::Ellipsoid { radii: o.vec3("radii")? },
                PrimitiveKind::Torus => Shape::Torus { major: o.num("major")?, minor: o.num("minor")? },
                PrimitiveKind::Box => Shape::Box { half_extents: o.vec3("half_extents")? },
                PrimitiveKind::SphereCone => Shape::SphereCone {
                    radius_a: o.num("radius_a")?,
                    radius_b: o.num("radius_b")?,
                    height: o.num("height")?,
                },
                PrimitiveKind::Quadric => Shape::Quadric { axes: o.vec3("axes")? },
            };
            let transform = match o.get("transform") {
                Some(t) => parse_transform(t, &o.sub("transform"))?,
                None => Transform::default(),
            };
            Primitive::new(shape, transform)
                .map(SceneNode::Primitive)
                .map_err(|e| field_err(path, e.to_string()))
        }
    }
}

pub fn parse_scene(text: &str) -> Result<SceneDocument, DocumentError> {
    let value: Value = serde_json::from_str(text).map_err(|e| DocumentError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let o = Obj::new(&value, "")?;
    o.only(&["camera", "root"])?;
    let camera = o.get("camera").map(|c| parse_camera(c, "camera")).transpose()?;
    let root = parse_node(o.req("root")?, "root")?;
    Ok(SceneDocument { camera, root })
}

fn v3(v: Vec3) -> Value {
    json!([v.x, v.y, v.z])
}

fn node_value(node: &SceneNode) -> Value {
    match node {
        SceneNode::Operator { op, left, right } => {
            let mut m = Map::new();
            m.insert("op".into(), json!(op.kind().name()));
            match op.kind().class() {
                BlendClass::Sharp => {}
                BlendClass::Bounded => {
                    m.insert("k".into(), json!(op.k()));
                }
                BlendClass::Compact => {
                    m.insert("k".into(), json!(op.k()));
                    m.insert("d".into(), json!(op.range()));
                }
            }
            m.insert("left".into(), node_value(left));
            m.insert("right".into(), node_value(right));
            Value::Object(m)
        }
        SceneNode::Primitive(p) => {
            let mut m = Map::new();
            m.insert("prim".into(), json!(p.kind().name()));
            let fields = shape_fields(p.kind());
            match *p.shape() {
                Shape::Ellipsoid { radii: v } | Shape::Box { half_extents: v } | Shape::Quadric { axes: v } => {
                    m.insert(fields[0].into(), v3(v));
                }
                ref s => {
                    for (name, x) in fields.iter().zip(s.scalars()) {
                        m.insert((*name).into(), json!(x));
                    }
                }
            }
            let t = p.transform();
            m.insert(
                "transform".into(),
                json!({ "translate": v3(t.translation), "rotate_quat": t.rotation.to_array() }),
            );
            Value::Object(m)
        }
    }
}

pub fn serialize_scene(doc: &SceneDocument) -> String {
    let mut m = Map::new();
    if let Some(c) = &doc.camera {
        m.insert(
            "camera".into(),
            json!({
                "position": v3(c.position),
                "target": v3(c.target),
                "up": v3(c.up),
                "fov": c.fov_deg,
                "near": c.near,
                "far": c.far,
            }),
        );
    }
    m.insert("root".into(), node_value(&doc.root));
    serde_json::to_string_pretty(&Value::Object(m)).expect("JSON values serialize")
}
