//! Built-in desk-scale scenes.

use super::{CameraKeyframe, Material, Primitive, Scene, Shape};
use crate::math::Vec3;

pub const BUILTIN_NAMES: [&str; 3] = ["cornell-occluder", "indirect-corridor", "glossy-box"];

pub fn builtin(name: &str) -> Option<Scene> {
    match name {
        "cornell-occluder" => Some(cornell_occluder()),
        "indirect-corridor" => Some(indirect_corridor()),
        "glossy-box" => Some(glossy_box()),
        _ => None,
    }
}

fn v(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3::new(x, y, z)
}

struct Builder {
    materials: Vec<Material>,
    primitives: Vec<Primitive>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            materials: Vec::new(),
            primitives: Vec::new(),
        }
    }

    fn material(&mut self, m: Material) -> usize {
        self.materials.push(m);
        self.materials.len() - 1
    }

    fn quad(&mut self, corner: Vec3, edge_u: Vec3, edge_v: Vec3, material: usize) {
        self.primitives.push(Primitive {
            shape: Shape::Quad { corner, edge_u, edge_v },
            material,
        });
    }

    fn sphere(&mut self, center: Vec3, radius: f64, material: usize) {
        self.primitives.push(Primitive {
            shape: Shape::Sphere { center, radius },
            material,
        });
    }

    /// Floor, ceiling, back, left and right walls of the unit box, open at z = 0.
    fn cornell_walls(&mut self, floor: usize, white: usize, red: usize, green: usize) {
        self.quad(v(0.0, 0.0, 0.0), v(0.0, 0.0, 1.0), v(1.0, 0.0, 0.0), floor);
        self.quad(v(0.0, 1.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 0.0, 1.0), white);
        self.quad(v(0.0, 0.0, 1.0), v(0.0, 1.0, 0.0), v(1.0, 0.0, 0.0), white);
        self.quad(v(0.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(0.0, 0.0, 1.0), red);
        self.quad(v(1.0, 0.0, 0.0), v(0.0, 0.0, 1.0), v(0.0, 1.0, 0.0), green);
    }

    fn finish(self, camera: Vec<CameraKeyframe>) -> Scene {
        let emitters = self
            .primitives
            .iter()
            .enumerate()
            .filter(|(_, p)| self.materials[p.material].is_emissive())
            .map(|(i, _)| i)
            .collect();
        Scene {
            primitives: self.primitives,
            materials: self.materials,
            emitters,
            camera,
            background: Vec3::ZERO,
        }
    }
}

fn cornell_camera() -> Vec<CameraKeyframe> {
    vec![CameraKeyframe {
        frame: 0,
        origin: v(0.5, 0.5, -1.3),
        look_at: v(0.5, 0.5, 0.5),
        up: v(0.0, 1.0, 0.0),
        fov_deg: 40.0,
    }]
}

/// Cornell box whose only light faces the ceiling from beneath a dark
/// mounting plate, so everything below the plate is lit by the bright
/// ceiling patch. A large free-standing panel casts indirect shadows.
fn cornell_occluder() -> Scene {
    let mut b = Builder::new();
    let white = b.material(Material::diffuse("white", v(0.75, 0.75, 0.75)));
    let red = b.material(Material::diffuse("red", v(0.63, 0.065, 0.05)));
    let green = b.material(Material::diffuse("green", v(0.14, 0.45, 0.09)));
    let dark = b.material(Material::diffuse("plate", v(0.05, 0.05, 0.05)));
    let light = b.material(Material::emitter("light", v(40.0, 40.0, 40.0)));
    b.cornell_walls(white, white, red, green);
    // Upward-facing light (front = +y) resting on its plate.
    b.quad(v(0.35, 0.74, 0.35), v(0.0, 0.0, 0.3), v(0.3, 0.0, 0.0), light);
    b.quad(v(0.3, 0.735, 0.3), v(0.4, 0.0, 0.0), v(0.0, 0.0, 0.4), dark);
    // Free-standing occluding panel.
    b.quad(v(0.12, 0.0, 0.55), v(0.0, 0.55, 0.0), v(0.5, 0.0, 0.0), white);
    b.sphere(v(0.74, 0.16, 0.35), 0.16, white);
    b.finish(cornell_camera())
}

/// Closed corridor along +z. A one-sided light near the left wall faces the
/// right wall and is hidden from the camera by a baffle, so the near part of
/// the corridor is lit mostly by light bounced once off the bright right
/// wall; the other surfaces are dark grey.
fn indirect_corridor() -> Scene {
    let mut b = Builder::new();
    let white = b.material(Material::diffuse("grey", v(0.3, 0.3, 0.3)));
    let wall = b.material(Material::diffuse("wall", v(0.8, 0.75, 0.65)));
    let dark = b.material(Material::diffuse("baffle", v(0.1, 0.1, 0.1)));
    let light = b.material(Material::emitter("light", v(100.0, 100.0, 100.0)));
    let len = 4.0;
    // floor, ceiling, left, right, near end, far end
    b.quad(v(0.0, 0.0, 0.0), v(0.0, 0.0, len), v(1.0, 0.0, 0.0), white);
    b.quad(v(0.0, 1.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 0.0, len), white);
    b.quad(v(0.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(0.0, 0.0, len), white);
    b.quad(v(1.0, 0.0, 0.0), v(0.0, 0.0, len), v(0.0, 1.0, 0.0), wall);
    b.quad(v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0), white);
    b.quad(v(0.0, 0.0, len), v(0.0, 1.0, 0.0), v(1.0, 0.0, 0.0), white);
    // Light facing +x.
    b.quad(v(0.02, 0.3, 2.6), v(0.0, 0.4, 0.0), v(0.0, 0.0, 0.5), light);
    b.quad(v(0.0, 0.2, 2.55), v(0.2, 0.0, 0.0), v(0.0, 0.6, 0.0), dark);
    b.finish(vec![CameraKeyframe {
        frame: 0,
        origin: v(0.5, 0.55, 0.15),
        look_at: v(0.5, 0.45, len),
        up: v(0.0, 1.0, 0.0),
        fov_deg: 55.0,
    }])
}

/// Cornell box with a GGX floor (roughness 0.2) and a ceiling light.
fn glossy_box() -> Scene {
    let mut b = Builder::new();
    let white = b.material(Material::diffuse("white", v(0.75, 0.75, 0.75)));
    let red = b.material(Material::diffuse("red", v(0.63, 0.065, 0.05)));
    let green = b.material(Material::diffuse("green", v(0.14, 0.45, 0.09)));
    let floor = b.material(Material::glossy("glossy-floor", v(0.8, 0.8, 0.8), 0.2));
    let light = b.material(Material::emitter("light", v(17.0, 12.0, 4.0)));
    b.cornell_walls(floor, white, red, green);
    // Ceiling light facing down (front = -y).
    b.quad(v(0.4, 0.999, 0.4), v(0.2, 0.0, 0.0), v(0.0, 0.0, 0.2), light);
    b.sphere(v(0.3, 0.2, 0.6), 0.2, white);
    b.sphere(v(0.72, 0.14, 0.3), 0.14, white);
    b.finish(cornell_camera())
}
