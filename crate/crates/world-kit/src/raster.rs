//! Deterministic software rasterizer: z-buffered triangle rendering with
//! perspective-correct UVs, ERP texture lookup and per-vertex alpha
//! blending. Layers render far-to-near so transparency composites in depth
//! order; the z-buffer resolves occlusion within each layer.

use crate::erp::{ErpImage, PinholeCamera, Raster};
use crate::error::Result;
use crate::warp::{GridMesh, LayeredWorldMesh};
use glam::DVec3;
use std::collections::BTreeMap;

const NEAR_PLANE: f64 = 0.01;

struct ClipVertex {
    cam: DVec3,
    uv: [f64; 2],
    alpha: f64,
}

/// Sutherland–Hodgman clip of a camera-space triangle against z >= near.
fn clip_near(tri: [ClipVertex; 3]) -> Vec<ClipVertex> {
    let mut out: Vec<ClipVertex> = Vec::with_capacity(4);
    for i in 0..3 {
        let a = &tri[i];
        let b = &tri[(i + 1) % 3];
        let (ina, inb) = (a.cam.z >= NEAR_PLANE, b.cam.z >= NEAR_PLANE);
        if ina {
            out.push(ClipVertex {
                cam: a.cam,
                uv: a.uv,
                alpha: a.alpha,
            });
        }
        if ina != inb {
            let t = (NEAR_PLANE - a.cam.z) / (b.cam.z - a.cam.z);
            out.push(ClipVertex {
                cam: a.cam + (b.cam - a.cam) * t,
                uv: [
                    a.uv[0] + (b.uv[0] - a.uv[0]) * t,
                    a.uv[1] + (b.uv[1] - a.uv[1]) * t,
                ],
                alpha: a.alpha + (b.alpha - a.alpha) * t,
            });
        }
    }
    out
}

struct Target<'a> {
    color: &'a mut Raster,
    zbuf: &'a mut [f64],
    width: usize,
    height: usize,
}

#[allow(clippy::too_many_arguments)]
fn raster_triangle(target: &mut Target, texture: &ErpImage, cam: &PinholeCamera, tri: &[ClipVertex; 3]) {
    let (tw, th) = (texture.width() as f64, texture.height() as f64);
    let project = |v: &ClipVertex| -> (f64, f64, f64) {
        (
            cam.fx * v.cam.x / v.cam.z + cam.cx,
            cam.fy * v.cam.y / v.cam.z + cam.cy,
            v.cam.z,
        )
    };
    let p0 = project(&tri[0]);
    let p1 = project(&tri[1]);
    let p2 = project(&tri[2]);
    let area = (p1.0 - p0.0) * (p2.1 - p0.1) - (p1.1 - p0.1) * (p2.0 - p0.0);
    if area.abs() < 1e-12 {
        return;
    }
    let inv_area = 1.0 / area;
    let min_x = p0.0.min(p1.0).min(p2.0).floor().max(0.0) as usize;
    let max_x = (p0.0.max(p1.0).max(p2.0).ceil() as usize).min(target.width);
    let min_y = p0.1.min(p1.1).min(p2.1).floor().max(0.0) as usize;
    let max_y = (p0.1.max(p1.1).max(p2.1).ceil() as usize).min(target.height);
    let mut texel = [0.0f32; 4];
    for py in min_y..max_y {
        for px in min_x..max_x {
            let x = px as f64 + 0.5;
            let y = py as f64 + 0.5;
            let w0 = ((p1.0 - x) * (p2.1 - y) - (p1.1 - y) * (p2.0 - x)) * inv_area;
            let w1 = ((p2.0 - x) * (p0.1 - y) - (p2.1 - y) * (p0.0 - x)) * inv_area;
            let w2 = 1.0 - w0 - w1;
            if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                continue;
            }
            // perspective-correct interpolation via 1/z
            let iz = w0 / p0.2 + w1 / p1.2 + w2 / p2.2;
            let z = 1.0 / iz;
            let idx = py * target.width + px;
            if z >= target.zbuf[idx] {
                continue;
            }
            let u = (w0 * tri[0].uv[0] / p0.2 + w1 * tri[1].uv[0] / p1.2 + w2 * tri[2].uv[0] / p2.2) * z;
            let v = (w0 * tri[0].uv[1] / p0.2 + w1 * tri[1].uv[1] / p1.2 + w2 * tri[2].uv[1] / p2.2) * z;
            let alpha =
                ((w0 * tri[0].alpha / p0.2 + w1 * tri[1].alpha / p1.2 + w2 * tri[2].alpha / p2.2) * z)
                    .clamp(0.0, 1.0) as f32;
            if alpha < 1.0 / 512.0 {
                continue;
            }
            texture.sample_wrapped(u * tw, v * th, &mut texel[..texture.channels()]);
            for c in 0..3 {
                let src = texel[c.min(texture.channels() - 1)];
                let dst = target.color.get(px, py, c);
                target.color.set(px, py, c, src * alpha + dst * (1.0 - alpha));
            }
            target.zbuf[idx] = z;
        }
    }
}

fn render_mesh(target: &mut Target, mesh: &GridMesh, texture: &ErpImage, cam: &PinholeCamera) {
    let rot_t = cam.rotation.transpose();
    let cam_space: Vec<DVec3> = mesh
        .positions
        .iter()
        .map(|p| rot_t * (*p - cam.translation))
        .collect();
    for t in &mesh.indices {
        let tri = [
            ClipVertex {
                cam: cam_space[t[0] as usize],
                uv: mesh.uv[t[0] as usize],
                alpha: mesh.alpha[t[0] as usize] as f64,
            },
            ClipVertex {
                cam: cam_space[t[1] as usize],
                uv: mesh.uv[t[1] as usize],
                alpha: mesh.alpha[t[1] as usize] as f64,
            },
            ClipVertex {
                cam: cam_space[t[2] as usize],
                uv: mesh.uv[t[2] as usize],
                alpha: mesh.alpha[t[2] as usize] as f64,
            },
        ];
        if tri.iter().all(|v| v.cam.z < NEAR_PLANE) {
            continue;
        }
        let clipped = clip_near(tri);
        if clipped.len() < 3 {
            continue;
        }
        // fan triangulation of the clipped polygon
        for k in 1..clipped.len() - 1 {
            let fan = [
                ClipVertex {
                    cam: clipped[0].cam,
                    uv: clipped[0].uv,
                    alpha: clipped[0].alpha,
                },
                ClipVertex {
                    cam: clipped[k].cam,
                    uv: clipped[k].uv,
                    alpha: clipped[k].alpha,
                },
                ClipVertex {
                    cam: clipped[k + 1].cam,
                    uv: clipped[k + 1].uv,
                    alpha: clipped[k + 1].alpha,
                },
            ];
            raster_triangle(target, texture, cam, &fan);
        }
    }
}

/// Renders the world from a camera: sky first, then layers far-to-near
/// with alpha blending; missing texture references are export errors.
pub fn render_world(
    world: &LayeredWorldMesh,
    textures: &BTreeMap<String, &ErpImage>,
    cam: &PinholeCamera,
    width: usize,
    height: usize,
) -> Result<Raster> {
    cam.validate()?;
    let mut color = Raster::new(width, height, 3);
    let mut zbuf = vec![f64::INFINITY; width * height];
    let mut target = Target {
        color: &mut color,
        zbuf: &mut zbuf,
        width,
        height,
    };
    let lookup = |name: &str| -> Result<&&ErpImage> {
        textures
            .get(name)
            .ok_or_else(|| crate::Error::Export(format!("no texture supplied for {name:?}")))
    };
    if let Some(sky) = &world.sky {
        render_mesh(&mut target, sky, lookup(&sky.texture_ref)?, cam);
    }
    for mesh in world.layers.iter().rev() {
        render_mesh(&mut target, mesh, lookup(&mesh.texture_ref)?, cam);
    }
    Ok(color)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::DepthMap;
    use crate::erp::{erp_to_pinhole, ValidityMask};
    use crate::warp::{warp_layer, WarpOptions};

    fn smooth_pano(w: usize, h: usize) -> ErpImage {
        ErpImage::from_fn(w, h, 3, |x, y, c| {
            let lon = 2.0 * std::f64::consts::PI * (x as f64 + 0.5) / w as f64;
            let lat = std::f64::consts::PI * (y as f64 + 0.5) / h as f64;
            let v = match c {
                0 => 0.5 + 0.35 * (3.0 * lon).sin() * lat.sin(),
                1 => 0.5 + 0.35 * (2.0 * lon).cos() * (1.5 * lat).cos(),
                _ => 0.5 + 0.3 * (2.0 * lat).cos(),
            };
            v as f32
        })
        .unwrap()
    }

    #[test]
    fn sphere_render_matches_panorama_resample() {
        let (w, h) = (512, 256);
        let pano = smooth_pano(w, h);
        let depth = DepthMap::from_fn(w, h, |_, _| Some(2.0));
        let mesh = warp_layer(
            &pano,
            &depth,
            &ValidityMask::new(w, h, 1.0),
            &WarpOptions {
                stride: 2,
                tear_ratio: 1.3,
                feather: 0.0,
            },
            0,
            "bg",
        )
        .unwrap();
        let world = LayeredWorldMesh {
            layers: vec![mesh],
            sky: None,
            placements: Vec::new(),
        };
        let mut textures = BTreeMap::new();
        textures.insert("bg".to_string(), &pano);
        for yaw_deg in [0.0f64, 90.0, 213.0] {
            let cam = PinholeCamera::centered(90.0, 240, 240).with_yaw(yaw_deg.to_radians());
            let rendered = render_world(&world, &textures, &cam, 240, 240).unwrap();
            let resampled = erp_to_pinhole(&pano, &cam, 240, 240).unwrap();
            let mut se = 0.0f64;
            for i in 0..rendered.data().len() {
                let d = (rendered.data()[i] - resampled.data()[i]) as f64;
                se += d * d;
            }
            let mse = se / rendered.data().len() as f64;
            let psnr = -10.0 * mse.log10();
            assert!(psnr >= 35.0, "yaw {yaw_deg}: psnr {psnr}");
            // no unwritten pixels inside a full sphere
            let untouched = (0..240 * 240)
                .filter(|&i| {
                    (0..3).all(|c| rendered.data()[i * 3 + c] == 0.0)
                })
                .count();
            assert_eq!(untouched, 0, "gaps at yaw {yaw_deg}");
        }
    }

    #[test]
    fn seam_crossing_view_has_no_gaps() {
        let (w, h) = (256, 128);
        let pano = smooth_pano(w, h);
        let depth = DepthMap::from_fn(w, h, |_, _| Some(3.0));
        let mesh = warp_layer(
            &pano,
            &depth,
            &ValidityMask::new(w, h, 1.0),
            &WarpOptions {
                stride: 1,
                tear_ratio: 1.3,
                feather: 0.0,
            },
            0,
            "bg",
        )
        .unwrap();
        let world = LayeredWorldMesh {
            layers: vec![mesh],
            sky: None,
            placements: Vec::new(),
        };
        let mut textures = BTreeMap::new();
        textures.insert("bg".to_string(), &pano);
        // lon = 180 deg looks straight at the wrap seam
        let cam = PinholeCamera::centered(90.0, 160, 160).with_yaw(std::f64::consts::PI);
        let out = render_world(&world, &textures, &cam, 160, 160).unwrap();
        for i in 0..160 * 160 {
            assert!(
                (0..3).any(|c| out.data()[i * 3 + c] != 0.0),
                "hole at pixel {i}"
            );
        }
    }

    #[test]
    fn nearer_layer_occludes_farther() {
        let (w, h) = (128, 64);
        let red = ErpImage::from_fn(w, h, 3, |_, _, c| if c == 0 { 1.0 } else { 0.0 }).unwrap();
        let blue = ErpImage::from_fn(w, h, 3, |_, _, c| if c == 2 { 1.0 } else { 0.0 }).unwrap();
        let near_depth = DepthMap::from_fn(w, h, |_, _| Some(1.5));
        let far_depth = DepthMap::from_fn(w, h, |_, _| Some(6.0));
        // near layer covers only the forward 60 degrees of longitude
        let near_mask = ValidityMask::from_fn(w, h, |x, _| {
            let lon = 360.0 * (x as f64 + 0.5) / w as f64 - 180.0;
            if lon.abs() < 30.0 {
                1.0
            } else {
                0.0
            }
        });
        let opts = WarpOptions {
            stride: 1,
            tear_ratio: 1.3,
            feather: 0.0,
        };
        let near = warp_layer(&red, &near_depth, &near_mask, &opts, 0, "near").unwrap();
        let far = warp_layer(&blue, &far_depth, &ValidityMask::new(w, h, 1.0), &opts, 1, "far").unwrap();
        let world = LayeredWorldMesh {
            layers: vec![near, far],
            sky: None,
            placements: Vec::new(),
        };
        let mut textures = BTreeMap::new();
        textures.insert("near".to_string(), &red);
        textures.insert("far".to_string(), &blue);
        let cam = PinholeCamera::centered(90.0, 96, 96);
        let out = render_world(&world, &textures, &cam, 96, 96).unwrap();
        // center pixel sees the near red sheet; border pixels see blue
        assert!(out.get(48, 48, 0) > 0.9 && out.get(48, 48, 2) < 0.1);
        assert!(out.get(2, 48, 2) > 0.9 && out.get(2, 48, 0) < 0.1);
    }

    #[test]
    fn feathered_alpha_blends_at_sheet_edge() {
        let (w, h) = (128, 64);
        let white = ErpImage::from_fn(w, h, 3, |_, _, _| 1.0).unwrap();
        let black = ErpImage::from_fn(w, h, 3, |_, _, _| 0.0).unwrap();
        let near_mask = ValidityMask::from_fn(w, h, |x, y| {
            if (56..72).contains(&x) && (24..40).contains(&y) {
                1.0
            } else {
                0.0
            }
        });
        let opts = WarpOptions {
            stride: 1,
            tear_ratio: 1.3,
            feather: 4.0,
        };
        let near = warp_layer(
            &white,
            &DepthMap::from_fn(w, h, |_, _| Some(1.5)),
            &near_mask,
            &opts,
            0,
            "near",
        )
        .unwrap();
        let far = warp_layer(
            &black,
            &DepthMap::from_fn(w, h, |_, _| Some(6.0)),
            &ValidityMask::new(w, h, 1.0),
            &opts,
            1,
            "far",
        )
        .unwrap();
        let world = LayeredWorldMesh {
            layers: vec![near, far],
            sky: None,
            placements: Vec::new(),
        };
        let mut textures = BTreeMap::new();
        textures.insert("near".to_string(), &white);
        textures.insert("far".to_string(), &black);
        let cam = PinholeCamera::centered(90.0, 128, 128);
        let out = render_world(&world, &textures, &cam, 128, 128).unwrap();
        // center of the sheet is opaque white; outside is black; in between
        // at least one pixel is an intermediate blend
        assert!(out.get(64, 64, 0) > 0.95);
        assert!(out.get(4, 64, 0) < 0.05);
        let mut has_blend = false;
        for x in 0..128 {
            let v = out.get(x, 64, 0);
            if v > 0.2 && v < 0.8 {
                has_blend = true;
            }
        }
        assert!(has_blend, "no feathered edge blend found");
    }
}
