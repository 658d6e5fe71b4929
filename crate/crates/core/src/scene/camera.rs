use crate::math::Vec3;

/// Camera pose at one frame of the animation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraKeyframe {
    pub frame: u32,
    pub origin: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    pub fov_deg: f64,
}

/// A resolved pinhole camera for one frame and resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub origin: Vec3,
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    pub width: usize,
    pub height: usize,
    tan_half_y: f64,
    tan_half_x: f64,
}

impl Camera {
    pub fn new(key: &CameraKeyframe, width: usize, height: usize) -> Self {
        let forward = (key.look_at - key.origin).normalized();
        let right = forward.cross(key.up).normalized();
        let up = right.cross(forward);
        let tan_half_y = (key.fov_deg.to_radians() * 0.5).tan();
        let aspect = width as f64 / height as f64;
        Camera {
            origin: key.origin,
            forward,
            right,
            up,
            width,
            height,
            tan_half_y,
            tan_half_x: tan_half_y * aspect,
        }
    }

    /// Unit direction through the centre of pixel `(px, py)`; row 0 is the top.
    pub fn pixel_dir(&self, px: usize, py: usize) -> Vec3 {
        let sx = (2.0 * (px as f64 + 0.5) / self.width as f64 - 1.0) * self.tan_half_x;
        let sy = (1.0 - 2.0 * (py as f64 + 0.5) / self.height as f64) * self.tan_half_y;
        (self.forward + self.right * sx + self.up * sy).normalized()
    }

    /// Distance along the view axis.
    pub fn view_depth(&self, p: Vec3) -> f64 {
        (p - self.origin).dot(self.forward)
    }

    /// Continuous image coordinates of `p` (pixel centres at `i + 0.5`), or
    /// `None` if `p` is behind the camera.
    pub fn project(&self, p: Vec3) -> Option<(f64, f64)> {
        let d = p - self.origin;
        let z = d.dot(self.forward);
        if z <= 1e-9 {
            return None;
        }
        let sx = d.dot(self.right) / (z * self.tan_half_x);
        let sy = d.dot(self.up) / (z * self.tan_half_y);
        Some((
            (sx + 1.0) * 0.5 * self.width as f64,
            (1.0 - sy) * 0.5 * self.height as f64,
        ))
    }
}

/// Camera keyframe for `frame`, linearly interpolated between the bracketing
/// keyframes and clamped outside their range. `keys` must be sorted by frame
/// and non-empty.
pub fn interpolate(keys: &[CameraKeyframe], frame: u32) -> CameraKeyframe {
    let first = keys[0];
    if frame <= first.frame {
        return CameraKeyframe { frame, ..first };
    }
    for pair in keys.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if frame <= b.frame {
            let t = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
            return CameraKeyframe {
                frame,
                origin: a.origin.lerp(b.origin, t),
                look_at: a.look_at.lerp(b.look_at, t),
                up: a.up.lerp(b.up, t),
                fov_deg: a.fov_deg + (b.fov_deg - a.fov_deg) * t,
            };
        }
    }
    CameraKeyframe {
        frame,
        ..keys[keys.len() - 1]
    }
}
