//! JSON scene documents.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::{builtin, CameraKeyframe, Material, MaterialKind, Primitive, Scene, Shape};
use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    materials: Vec<MaterialDoc>,
    primitives: Vec<PrimitiveDoc>,
    camera: Vec<KeyframeDoc>,
    background: Vec3,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialDoc {
    name: String,
    kind: KindDoc,
    albedo: Vec3,
    #[serde(default = "one")]
    roughness: f64,
    #[serde(default)]
    emission: Vec3,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum KindDoc {
    Diffuse,
    Glossy,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ShapeKind {
    Sphere,
    Quad,
}

// Flat rather than an internally tagged enum so that unknown fields are
// reported at their own position instead of at the end of the object.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrimitiveDoc {
    #[serde(rename = "type")]
    kind: ShapeKind,
    material: String,
    center: Option<Vec3>,
    radius: Option<f64>,
    corner: Option<Vec3>,
    edge_u: Option<Vec3>,
    edge_v: Option<Vec3>,
}

fn required<T>(entity: &str, field: &str, v: Option<T>) -> Result<T> {
    v.ok_or_else(|| Error::invalid(entity, format!("missing field `{field}`")))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeyframeDoc {
    frame: u32,
    origin: Vec3,
    look_at: Vec3,
    up: Vec3,
    fov_deg: f64,
}

/// Parses and validates a JSON scene document.
pub fn load_scene_str(text: &str) -> Result<Scene> {
    let doc: SceneDoc = serde_json::from_str(text).map_err(|e| Error::SceneParse {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    build(doc)
}

/// Loads a built-in scene by name, or a JSON document from a path.
pub fn load_scene(name_or_path: &str) -> Result<Scene> {
    if let Some(scene) = builtin(name_or_path) {
        return Ok(scene);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(Error::UnknownScene(name_or_path.to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    load_scene_str(&text)
}

fn check_vec(entity: &str, field: &str, v: Vec3) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(entity, format!("{field} is not finite")))
    }
}

fn build(doc: SceneDoc) -> Result<Scene> {
    let mut materials = Vec::with_capacity(doc.materials.len());
    let mut by_name = HashMap::new();
    for m in doc.materials {
        let entity = format!("material `{}`", m.name);
        check_vec(&entity, "albedo", m.albedo)?;
        check_vec(&entity, "emission", m.emission)?;
        if m.albedo.min_elem() < 0.0 || m.albedo.max_elem() > 1.0 {
            return Err(Error::invalid(entity, "albedo must lie in [0,1]"));
        }
        if !(0.0..=1.0).contains(&m.roughness) {
            return Err(Error::invalid(entity, "roughness must lie in [0,1]"));
        }
        if m.emission.min_elem() < 0.0 {
            return Err(Error::invalid(entity, "emission must be non-negative"));
        }
        if by_name.insert(m.name.clone(), materials.len()).is_some() {
            return Err(Error::invalid(entity, "duplicate material name"));
        }
        materials.push(Material {
            name: m.name,
            kind: match m.kind {
                KindDoc::Diffuse => MaterialKind::Diffuse,
                KindDoc::Glossy => MaterialKind::Glossy,
            },
            albedo: m.albedo,
            roughness: m.roughness,
            emission: m.emission,
        });
    }

    let mut primitives = Vec::with_capacity(doc.primitives.len());
    for (i, p) in doc.primitives.into_iter().enumerate() {
        let entity = format!("primitive #{i}");
        let (shape, mat) = match p.kind {
            ShapeKind::Sphere => {
                if p.corner.is_some() || p.edge_u.is_some() || p.edge_v.is_some() {
                    return Err(Error::invalid(entity, "sphere takes only center and radius"));
                }
                let center = required(&entity, "center", p.center)?;
                let radius = required(&entity, "radius", p.radius)?;
                check_vec(&entity, "center", center)?;
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::invalid(entity, "sphere radius must be positive"));
                }
                (Shape::Sphere { center, radius }, p.material)
            }
            ShapeKind::Quad => {
                if p.center.is_some() || p.radius.is_some() {
                    return Err(Error::invalid(entity, "quad takes only corner, edge_u and edge_v"));
                }
                let corner = required(&entity, "corner", p.corner)?;
                let edge_u = required(&entity, "edge_u", p.edge_u)?;
                let edge_v = required(&entity, "edge_v", p.edge_v)?;
                check_vec(&entity, "corner", corner)?;
                check_vec(&entity, "edge_u", edge_u)?;
                check_vec(&entity, "edge_v", edge_v)?;
                if edge_u.cross(edge_v).length() < 1e-12 {
                    return Err(Error::invalid(entity, "quad edges are degenerate"));
                }
                (Shape::Quad { corner, edge_u, edge_v }, p.material)
            }
        };
        let material = *by_name
            .get(&mat)
            .ok_or_else(|| Error::invalid(&entity, format!("unknown material `{mat}`")))?;
        primitives.push(Primitive { shape, material });
    }

    if doc.camera.is_empty() {
        return Err(Error::invalid("camera", "at least one keyframe is required"));
    }
    let mut camera = Vec::with_capacity(doc.camera.len());
    for k in doc.camera {
        let entity = format!("camera keyframe {}", k.frame);
        check_vec(&entity, "origin", k.origin)?;
        check_vec(&entity, "look_at", k.look_at)?;
        check_vec(&entity, "up", k.up)?;
        if !(k.fov_deg > 1.0 && k.fov_deg < 179.0) {
            return Err(Error::invalid(entity, format!("fov_deg {} outside (1, 179)", k.fov_deg)));
        }
        let view = k.look_at - k.origin;
        if view.length() < 1e-9 || view.normalized().cross(k.up).length() < 1e-6 * k.up.length().max(1e-300) {
            return Err(Error::invalid(entity, "up is parallel to the view direction"));
        }
        camera.push(CameraKeyframe {
            frame: k.frame,
            origin: k.origin,
            look_at: k.look_at,
            up: k.up,
            fov_deg: k.fov_deg,
        });
    }
    camera.sort_by_key(|k| k.frame);
    if camera.windows(2).any(|w| w[0].frame == w[1].frame) {
        return Err(Error::invalid("camera", "duplicate keyframe frame index"));
    }

    check_vec("background", "value", doc.background)?;
    if doc.background.min_elem() < 0.0 {
        return Err(Error::invalid("background", "must be non-negative"));
    }
    let emitters: Vec<usize> = primitives
        .iter()
        .enumerate()
        .filter(|(_, p)| materials[p.material].is_emissive())
        .map(|(i, _)| i)
        .collect();
    if emitters.is_empty() && doc.background.max_elem() <= 0.0 {
        return Err(Error::invalid("scene", "no emitters and a black background"));
    }

    Ok(Scene {
        primitives,
        materials,
        emitters,
        camera,
        background: doc.background,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "materials": [
            {"name": "white", "kind": "diffuse", "albedo": [0.8, 0.8, 0.8], "roughness": 1.0, "emission": [0, 0, 0]},
            {"name": "lamp", "kind": "diffuse", "albedo": [0, 0, 0], "roughness": 1.0, "emission": [5, 5, 5]}
        ],
        "primitives": [
            {"type": "sphere", "center": [0, 0, 0], "radius": 1, "material": "white"},
            {"type": "quad", "corner": [-1, 2, -1], "edge_u": [2, 0, 0], "edge_v": [0, 0, 2], "material": "lamp"}
        ],
        "camera": [{"frame": 0, "origin": [0, 0, -5], "look_at": [0, 0, 0], "up": [0, 1, 0], "fov_deg": 45}],
        "background": [0, 0, 0]
    }"#;

    #[test]
    fn minimal_document_loads() {
        let s = load_scene_str(MINIMAL).unwrap();
        assert_eq!(s.primitives.len(), 2);
        assert_eq!(s.emitters, vec![1]);
    }

    #[test]
    fn missing_emitters_with_black_background_is_rejected() {
        let doc = MINIMAL.replace("[5, 5, 5]", "[0, 0, 0]");
        assert!(matches!(load_scene_str(&doc), Err(Error::SceneInvalid { .. })));
    }

    #[test]
    fn zero_fov_is_rejected() {
        let doc = MINIMAL.replace("\"fov_deg\": 45", "\"fov_deg\": 0");
        let err = load_scene_str(&doc).unwrap_err();
        assert!(matches!(&err, Error::SceneInvalid { entity, .. } if entity.contains("camera")), "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected_with_position() {
        let doc = MINIMAL.replace("\"radius\": 1,", "\"radius\": 1, \"colour\": 3,");
        match load_scene_str(&doc) {
            Err(Error::SceneParse { line, .. }) => assert_eq!(line, 7),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn dangling_material_reference_names_the_primitive() {
        let doc = MINIMAL.replace("\"material\": \"white\"", "\"material\": \"chalk\"");
        let err = load_scene_str(&doc).unwrap_err();
        assert!(err.to_string().contains("primitive #0"), "{err}");
    }

    #[test]
    fn builtin_names_resolve() {
        for name in super::super::BUILTIN_NAMES {
            assert!(load_scene(name).is_ok(), "{name}");
        }
        assert!(matches!(load_scene("no-such-scene"), Err(Error::UnknownScene(_))));
    }
}
