//! Synthetic scenes with analytic depth, used by the test suites and the
//! `fixture` CLI subcommand: a constant-depth textured sphere and a small
//! outdoor room (ground plane, two boxes, sky).

use crate::depth::DepthMap;
use crate::erp::{erp_pixel_to_dir, ErpImage, PinholeCamera, Raster, ValidityMask};
use crate::error::Result;
use crate::cache::GuidanceFrame;
use glam::DVec3;
use std::f64::consts::PI;

/// Constant-depth sphere world with a smooth seam-periodic texture.
pub struct SphereFixture {
    pub pano: ErpImage,
    pub depth: DepthMap,
    pub radius: f64,
}

pub fn sphere_fixture(width: usize, radius: f64) -> Result<SphereFixture> {
    let height = width / 2;
    let pano = ErpImage::from_fn(width, height, 3, |x, y, c| {
        let lon = 2.0 * PI * (x as f64 + 0.5) / width as f64;
        let lat = PI * (y as f64 + 0.5) / height as f64;
        let v = match c {
            0 => 0.5 + 0.35 * (3.0 * lon).sin() * lat.sin(),
            1 => 0.5 + 0.35 * (2.0 * lon).cos() * (1.5 * lat).cos(),
            _ => 0.5 + 0.30 * (2.0 * lat).cos() * (lon).sin(),
        };
        v.clamp(0.0, 1.0) as f32
    })?;
    let depth = DepthMap::from_fn(width, height, |_, _| Some(radius));
    Ok(SphereFixture {
        pano,
        depth,
        radius,
    })
}

/// Axis-aligned box for the room scene.
#[derive(Debug, Clone, Copy)]
pub struct Box3 {
    pub center: DVec3,
    pub half: DVec3,
    pub color: [f32; 3],
}

/// What a ray hit in the room scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hit {
    Floor,
    Box(usize),
    Sky,
}

/// Textured outdoor scene: infinite ground plane, two boxes, sky gradient.
/// All geometry is analytic so depth maps and pinhole renders are exact.
pub struct RoomScene {
    pub floor_y: f64,
    pub boxes: Vec<Box3>,
    pub max_depth: f64,
}

impl Default for RoomScene {
    fn default() -> Self {
        RoomScene {
            floor_y: -1.6,
            boxes: vec![
                Box3 {
                    center: DVec3::new(-0.9, -1.25, -1.0),
                    half: DVec3::new(0.35, 0.35, 0.35),
                    color: [0.85, 0.25, 0.2],
                },
                Box3 {
                    center: DVec3::new(0.95, -1.1, -1.15),
                    half: DVec3::new(0.5, 0.5, 0.5),
                    color: [0.2, 0.35, 0.85],
                },
            ],
            max_depth: 80.0,
        }
    }
}

fn ray_box(origin: DVec3, dir: DVec3, b: &Box3) -> Option<(f64, DVec3)> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    let lo = b.center - b.half;
    let hi = b.center + b.half;
    for k in 0..3 {
        let (o, d, l, h) = (origin[k], dir[k], lo[k], hi[k]);
        if d.abs() < 1e-12 {
            if o < l || o > h {
                return None;
            }
            continue;
        }
        let (mut ta, mut tb) = ((l - o) / d, (h - o) / d);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return None;
        }
    }
    if t0 <= 1e-9 {
        return None;
    }
    // hit normal from the dominant axis of the local coordinate
    let p = origin + dir * t0;
    let local = (p - b.center) / b.half;
    let axis = if local.x.abs() >= local.y.abs() && local.x.abs() >= local.z.abs() {
        0
    } else if local.y.abs() >= local.z.abs() {
        1
    } else {
        2
    };
    let mut n = DVec3::ZERO;
    n[axis] = local[axis].signum();
    Some((t0, n))
}

impl RoomScene {
    /// Nearest intersection along a unit ray from `origin`.
    pub fn trace(&self, origin: DVec3, dir: DVec3) -> (Hit, f64, DVec3) {
        let mut best = (Hit::Sky, f64::INFINITY, DVec3::Y);
        if dir.y < -1e-12 {
            let t = (self.floor_y - origin.y) / dir.y;
            if t > 1e-9 && t < self.max_depth {
                best = (Hit::Floor, t, DVec3::Y);
            }
        }
        for (i, b) in self.boxes.iter().enumerate() {
            if let Some((t, n)) = ray_box(origin, dir, b) {
                if t < best.1 {
                    best = (Hit::Box(i), t, n);
                }
            }
        }
        best
    }

    /// Surface color with a simple directional shade; the sky is a smooth
    /// gradient so it stitches periodically.
    pub fn shade(&self, hit: Hit, point: DVec3, normal: DVec3, dir: DVec3) -> [f32; 3] {
        let light = DVec3::new(0.35, 0.8, 0.49).normalize();
        match hit {
            Hit::Sky => {
                let up = dir.y.clamp(-1.0, 1.0);
                let horizon = (1.0 - up.abs()).powi(2) as f32;
                [
                    0.35 + 0.25 * horizon,
                    0.5 + 0.2 * horizon,
                    (0.75 + 0.25 * up.max(0.0)) as f32,
                ]
            }
            Hit::Floor => {
                let cell = ((point.x.floor() as i64 & 1) ^ (point.z.floor() as i64 & 1)) == 0;
                let base = if cell { 0.62 } else { 0.38 };
                let fade = (1.0 / (1.0 + 0.02 * point.length())) as f32;
                [base * fade, (base - 0.06) * fade, (base - 0.12) * fade]
            }
            Hit::Box(i) => {
                let c = self.boxes[i].color;
                let l = (normal.dot(light) * 0.5 + 0.5) as f32;
                [c[0] * l, c[1] * l, c[2] * l]
            }
        }
    }
}

/// All panoramic rasters of the room scene needed by the pipeline:
/// composite plus per-layer images, masks and (true) depths.
pub struct RoomFixture {
    pub scene: RoomScene,
    pub pano: ErpImage,
    pub base_depth: DepthMap,
    /// Foreground (boxes): image = pano, analytic depth valid on the mask.
    pub fg_mask: ValidityMask,
    pub fg_depth: DepthMap,
    /// Background (floor + sky, no boxes).
    pub bg_image: ErpImage,
    pub bg_mask: ValidityMask,
    pub bg_depth: DepthMap,
    /// Sky: gradient evaluated for every direction.
    pub sky_image: ErpImage,
    pub sky_mask: ValidityMask,
}

pub fn room_fixture(width: usize) -> Result<RoomFixture> {
    let height = width / 2;
    let scene = RoomScene::default();
    let origin = DVec3::ZERO;

    let mut pano = Raster::new(width, height, 3);
    let mut bg_image = Raster::new(width, height, 3);
    let mut sky_image = Raster::new(width, height, 3);
    let mut base_depth = DepthMap::new_invalid(width, height);
    let mut fg_depth = DepthMap::new_invalid(width, height);
    let mut bg_depth = DepthMap::new_invalid(width, height);
    let mut fg_mask = ValidityMask::new(width, height, 0.0);
    let mut bg_mask = ValidityMask::new(width, height, 0.0);
    let mut sky_mask = ValidityMask::new(width, height, 0.0);

    let no_boxes = RoomScene {
        boxes: Vec::new(),
        ..RoomScene::default()
    };
    for y in 0..height {
        for x in 0..width {
            let dir = erp_pixel_to_dir(x as f64 + 0.5, y as f64 + 0.5, width, height)?;
            // composite scene
            let (hit, t, n) = scene.trace(origin, dir);
            let color = scene.shade(hit, origin + dir * t, n, dir);
            for c in 0..3 {
                pano.set(x, y, c, color[c]);
            }
            match hit {
                Hit::Sky => sky_mask.set(x, y, 1.0),
                Hit::Floor => {
                    base_depth.set(x, y, t);
                }
                Hit::Box(_) => {
                    base_depth.set(x, y, t);
                    fg_mask.set(x, y, 1.0);
                    fg_depth.set(x, y, t);
                }
            }
            // background pass (no boxes)
            let (hit_bg, t_bg, n_bg) = no_boxes.trace(origin, dir);
            let color_bg = no_boxes.shade(hit_bg, origin + dir * t_bg, n_bg, dir);
            for c in 0..3 {
                bg_image.set(x, y, c, color_bg[c]);
            }
            if hit_bg == Hit::Floor {
                bg_mask.set(x, y, 1.0);
                bg_depth.set(x, y, t_bg);
            }
            // pure sky pass
            let sky_color = scene.shade(Hit::Sky, origin, DVec3::Y, dir);
            for c in 0..3 {
                sky_image.set(x, y, c, sky_color[c]);
            }
        }
    }
    Ok(RoomFixture {
        scene,
        pano: ErpImage::new(pano)?,
        base_depth,
        fg_mask,
        fg_depth,
        bg_image: ErpImage::new(bg_image)?,
        bg_mask,
        bg_depth,
        sky_image: ErpImage::new(sky_image)?,
        sky_mask,
    })
}

/// Applies the inverse of an affine disparity transform so that alignment
/// recovers exactly (a, b): stored disparity = (true disparity − b) / a.
pub fn perturb_disparity(d: &DepthMap, a: f64, b: f64) -> DepthMap {
    let mut out = DepthMap::new_invalid(d.width, d.height);
    for y in 0..d.height {
        for x in 0..d.width {
            if let Some(v) = d.get(x, y) {
                let disp = (1.0 / v - b) / a;
                if disp > 0.0 {
                    out.set(x, y, 1.0 / disp);
                }
            }
        }
    }
    out
}

/// Analytic pinhole RGB-D render of the room scene: the ground-truth
/// oracle for the world-cache tests (depth is z along the optical axis;
/// sky pixels are invalid).
pub fn render_room_pinhole(scene: &RoomScene, cam: &PinholeCamera, width: usize, height: usize) -> Result<GuidanceFrame> {
    cam.validate()?;
    let mut color = Raster::new(width, height, 3);
    let mut depth = vec![0.0f64; width * height];
    let mut validity = ValidityMask::new(width, height, 0.0);
    let rot_t = cam.rotation.transpose();
    for y in 0..height {
        for x in 0..width {
            let dir = cam.unproject_dir(x as f64 + 0.5, y as f64 + 0.5);
            let (hit, t, n) = scene.trace(cam.translation, dir);
            let shade = scene.shade(hit, cam.translation + dir * t, n, dir);
            for c in 0..3 {
                color.set(x, y, c, shade[c]);
            }
            if hit != Hit::Sky {
                let z = (rot_t * (dir * t)).z;
                if z > 0.0 {
                    depth[y * width + x] = z;
                    validity.set(x, y, 1.0);
                }
            }
        }
    }
    Ok(GuidanceFrame {
        color,
        depth,
        validity,
        camera: *cam,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erp::yaw_rotation;
    use crate::metrics::seam_score;

    #[test]
    fn sphere_fixture_is_seam_continuous() {
        // the wrap jump of a periodic texture is one pixel-step of gradient
        let f = sphere_fixture(128, 2.0).unwrap();
        assert!(seam_score(&f.pano) < 0.1, "seam {}", seam_score(&f.pano));
        assert_eq!(f.depth.get(5, 5), Some(2.0));
    }

    #[test]
    fn room_layers_cover_and_depths_align() {
        let f = room_fixture(128).unwrap();
        let (w, h) = (128, 64);
        for y in 0..h {
            for x in 0..w {
                let covered = f.fg_mask.is_on(x, y) || f.bg_mask.is_on(x, y) || f.sky_mask.is_on(x, y);
                assert!(covered, "pixel ({x},{y}) uncovered");
                // base depth valid exactly off-sky
                assert_eq!(f.base_depth.get(x, y).is_some(), !f.sky_mask.is_on(x, y));
                // boxes are nearer than the floor they occlude
                if f.fg_mask.is_on(x, y) {
                    let fg = f.fg_depth.get(x, y).unwrap();
                    if let Some(bg) = f.bg_depth.get(x, y) {
                        assert!(fg <= bg + 1e-9, "fg {fg} behind bg {bg} at ({x},{y})");
                    }
                }
            }
        }
        // both boxes appear
        assert!(f.fg_mask.count_on() > 20);
        // sky occupies the upper hemisphere
        assert!(f.sky_mask.is_on(5, 3));
    }

    #[test]
    fn room_panorama_is_seam_continuous() {
        // the checkered floor makes any adjacent column pair jump, so the
        // test is relative: the wrap seam is no worse than the interior
        let f = room_fixture(128).unwrap();
        let (w, h) = (f.pano.width(), f.pano.height());
        let mut interior = 0.0f32;
        for x in 0..w - 1 {
            for y in 0..h {
                for c in 0..3 {
                    interior = interior.max((f.pano.get(x, y, c) - f.pano.get(x + 1, y, c)).abs());
                }
            }
        }
        assert!(seam_score(&f.pano) <= interior + 1e-6);
    }

    #[test]
    fn perturb_disparity_round_trip() {
        let d = DepthMap::from_fn(16, 8, |x, _| Some(1.5 + x as f64 * 0.3));
        let stored = perturb_disparity(&d, 1.25, 0.005);
        for y in 0..8 {
            for x in 0..16 {
                let true_disp = 1.0 / d.get(x, y).unwrap();
                let stored_disp = 1.0 / stored.get(x, y).unwrap();
                let recovered = 1.25 * stored_disp + 0.005;
                assert!((recovered - true_disp).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pinhole_render_depth_is_metric() {
        let scene = RoomScene::default();
        let cam = PinholeCamera {
            fx: 64.0,
            fy: 64.0,
            cx: 32.0,
            cy: 32.0,
            rotation: yaw_rotation(0.0),
            translation: DVec3::ZERO,
        };
        let frame = render_room_pinhole(&scene, &cam, 64, 64).unwrap();
        // looking forward and slightly down hits the floor: depth equals
        // the analytic ray z-depth
        let mut checked = 0;
        for y in 40..64 {
            for x in 20..44 {
                if let Some(z) = frame.depth_at(x, y) {
                    let dir = cam.unproject_dir(x as f64 + 0.5, y as f64 + 0.5);
                    let (hit, t, _) = scene.trace(DVec3::ZERO, dir);
                    assert_ne!(hit, Hit::Sky);
                    let expect = (cam.rotation.transpose() * (dir * t)).z;
                    assert!((z - expect).abs() < 1e-12);
                    checked += 1;
                }
            }
        }
        assert!(checked > 100);
    }
}
