use anyhow::Result;
use volest::geometry::{Ray, Vec3};

use crate::config::Camera;

/// One ray per pixel through the pixel centre, row-major from the top-left.
pub fn generate_rays(camera: &Camera, t_near: f64, t_far: f64) -> Result<Vec<Ray>> {
    camera.validate()?;
    let forward = (camera.look_at - camera.position).normalized();
    let right = forward.cross(camera.up).normalized();
    let up = right.cross(forward);
    let half_h = (0.5 * camera.fov_deg.to_radians()).tan();
    let half_w = half_h * camera.width as f64 / camera.height as f64;

    let mut rays = Vec::with_capacity(camera.width * camera.height);
    for j in 0..camera.height {
        let v = 1.0 - 2.0 * (j as f64 + 0.5) / camera.height as f64;
        for i in 0..camera.width {
            let u = 2.0 * (i as f64 + 0.5) / camera.width as f64 - 1.0;
            let dir: Vec3 = forward + right * (u * half_w) + up * (v * half_h);
            rays.push(Ray::new(camera.position, dir, t_near, t_far)?);
        }
    }
    Ok(rays)
}
