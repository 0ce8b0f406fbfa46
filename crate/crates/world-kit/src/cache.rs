//! Expandable RGB-D point-cloud world cache: unprojection of guidance
//! frames, voxel culling, z-buffered splat projection into target cameras,
//! and smooth auto-regressive clip sampling over camera trajectories.

use crate::erp::{PinholeCamera, Raster, ValidityMask};
use crate::error::{Error, Result};
use glam::{DQuat, DVec3};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CachedPoint {
    pub position: DVec3,
    pub color: [f32; 3],
    pub frame_id: u32,
    pub confidence: f32,
}

/// Append-ordered colored point store with a voxel index maintained at a
/// configurable cell size.
#[derive(Debug, Clone)]
pub struct WorldCache {
    points: Vec<CachedPoint>,
    index_cell: f64,
    voxel_index: HashMap<(i64, i64, i64), Vec<u32>>,
    last_frame: Option<u32>,
}

/// Partial RGB-D render of the cache in a target camera.
#[derive(Debug, Clone)]
pub struct GuidanceFrame {
    pub color: Raster,
    pub depth: Vec<f64>,
    pub validity: ValidityMask,
    pub camera: PinholeCamera,
}

impl GuidanceFrame {
    pub fn width(&self) -> usize {
        self.color.width()
    }

    pub fn height(&self) -> usize {
        self.color.height()
    }

    #[inline]
    pub fn depth_at(&self, x: usize, y: usize) -> Option<f64> {
        if self.validity.is_on(x, y) {
            Some(self.depth[y * self.width() + x])
        } else {
            None
        }
    }
}

/// Ordered camera poses; timestamps are the indices.
#[derive(Debug, Clone)]
pub struct CameraTrajectory {
    pub cameras: Vec<PinholeCamera>,
}

impl CameraTrajectory {
    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }
}

fn voxel_key(p: DVec3, cell: f64) -> (i64, i64, i64) {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

impl WorldCache {
    pub fn new(index_cell: f64) -> Self {
        WorldCache {
            points: Vec::new(),
            index_cell: index_cell.max(1e-6),
            voxel_index: HashMap::new(),
            last_frame: None,
        }
    }

    pub fn points(&self) -> &[CachedPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn push(&mut self, point: CachedPoint) {
        let id = self.points.len() as u32;
        self.voxel_index
            .entry(voxel_key(point.position, self.index_cell))
            .or_default()
            .push(id);
        self.points.push(point);
    }

    /// Points whose voxel cell intersects the given AABB.
    pub fn query_aabb(&self, lo: DVec3, hi: DVec3) -> Vec<u32> {
        let (k0, k1) = (voxel_key(lo, self.index_cell), voxel_key(hi, self.index_cell));
        let mut out = Vec::new();
        for kx in k0.0..=k1.0 {
            for ky in k0.1..=k1.1 {
                for kz in k0.2..=k1.2 {
                    if let Some(ids) = self.voxel_index.get(&(kx, ky, kz)) {
                        out.extend_from_slice(ids);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Builds a cache from one RGB-D frame: one point per valid pixel,
/// unprojected through the camera, frame_id = 0.
pub fn init_cache(frame: &GuidanceFrame, index_cell: f64) -> Result<WorldCache> {
    frame.camera.validate()?;
    let mut cache = WorldCache::new(index_cell);
    add_frame_points(&mut cache, frame, 0)?;
    cache.last_frame = Some(0);
    Ok(cache)
}

/// Appends a frame's valid pixels; frame ids must be strictly increasing.
pub fn add_frame(cache: &mut WorldCache, frame: &GuidanceFrame, frame_id: u32) -> Result<()> {
    frame.camera.validate()?;
    if let Some(last) = cache.last_frame {
        if frame_id <= last {
            return Err(Error::invalid(format!(
                "frame id {frame_id} not greater than last {last}"
            )));
        }
    }
    add_frame_points(cache, frame, frame_id)?;
    cache.last_frame = Some(frame_id);
    Ok(())
}

fn add_frame_points(cache: &mut WorldCache, frame: &GuidanceFrame, frame_id: u32) -> Result<()> {
    let (w, h) = (frame.width(), frame.height());
    if !frame.validity.same_size(w, h) || frame.depth.len() != w * h {
        return Err(Error::invalid("guidance frame lattices do not match"));
    }
    for y in 0..h {
        for x in 0..w {
            let Some(d) = frame.depth_at(x, y) else {
                continue;
            };
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::invalid(format!(
                    "invalid depth {d} at valid pixel ({x},{y})"
                )));
            }
            let position = frame
                .camera
                .unproject_point(x as f64 + 0.5, y as f64 + 0.5, d);
            let px = frame.color.pixel(x, y);
            cache.push(CachedPoint {
                position,
                color: [px[0], px[1.min(px.len() - 1)], px[2.min(px.len() - 1)]],
                frame_id,
                confidence: 1.0,
            });
        }
    }
    Ok(())
}

/// Keeps at most one point per voxel cell: highest confidence wins, then
/// lowest frame_id, then append order. Survivors keep append order.
pub fn cull(cache: &WorldCache, voxel: f64) -> Result<WorldCache> {
    if !(voxel > 0.0) {
        return Err(Error::invalid("voxel size must be positive"));
    }
    let mut best: HashMap<(i64, i64, i64), u32> = HashMap::new();
    for (i, p) in cache.points.iter().enumerate() {
        let key = voxel_key(p.position, voxel);
        match best.get(&key) {
            None => {
                best.insert(key, i as u32);
            }
            Some(&prev) => {
                let q = &cache.points[prev as usize];
                let better = (p.confidence, std::cmp::Reverse(p.frame_id))
                    > (q.confidence, std::cmp::Reverse(q.frame_id));
                if better {
                    best.insert(key, i as u32);
                }
            }
        }
    }
    let mut keep: Vec<u32> = best.into_values().collect();
    keep.sort_unstable();
    let mut out = WorldCache::new(cache.index_cell);
    for id in keep {
        out.push(cache.points[id as usize]);
    }
    out.last_frame = cache.last_frame;
    Ok(out)
}

/// Z-buffered point splatting into a target camera: each point in front of
/// the camera covers a (2·radius+1)² pixel footprint; the nearest depth
/// wins per pixel.
pub fn project(
    cache: &WorldCache,
    cam: &PinholeCamera,
    width: usize,
    height: usize,
    splat_radius: usize,
) -> Result<GuidanceFrame> {
    cam.validate()?;
    let mut depth = vec![f64::INFINITY; width * height];
    let mut color = Raster::new(width, height, 3);
    let mut validity = ValidityMask::new(width, height, 0.0);
    for p in &cache.points {
        let (u, v, z) = cam.project_point(p.position);
        if !(z > 0.0) || !u.is_finite() || !v.is_finite() {
            continue;
        }
        let cx = (u - 0.5).round() as i64;
        let cy = (v - 0.5).round() as i64;
        let r = splat_radius as i64;
        for dy in -r..=r {
            for dx in -r..=r {
                let (px, py) = (cx + dx, cy + dy);
                if px < 0 || py < 0 || px >= width as i64 || py >= height as i64 {
                    continue;
                }
                let idx = py as usize * width + px as usize;
                if z < depth[idx] {
                    depth[idx] = z;
                    for c in 0..3 {
                        color.set(px as usize, py as usize, c, p.color[c]);
                    }
                    validity.set(px as usize, py as usize, 1.0);
                }
            }
        }
    }
    for d in depth.iter_mut() {
        if !d.is_finite() {
            *d = 0.0;
        }
    }
    Ok(GuidanceFrame {
        color,
        depth,
        validity,
        camera: *cam,
    })
}

/// A clip of consecutive trajectory frames, [start, start + len).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Clip {
    pub start: usize,
    pub len: usize,
}

impl Clip {
    pub fn end(&self) -> usize {
        self.start + self.len - 1
    }
}

/// Auto-regressive clip schedule: starts at multiples of
/// (clip_len − overlap); the final clip is shifted so it ends at the last
/// frame, covering every frame at least once.
pub fn smooth_sample(traj_len: usize, clip_len: usize, overlap: usize) -> Result<Vec<Clip>> {
    if traj_len == 0 {
        return Err(Error::invalid("trajectory is empty"));
    }
    if !(overlap > 0 && overlap < clip_len && clip_len <= traj_len) {
        return Err(Error::invalid(format!(
            "need 0 < overlap ({overlap}) < clip_len ({clip_len}) <= trajectory length ({traj_len})"
        )));
    }
    let stride = clip_len - overlap;
    let mut clips = Vec::new();
    let mut start = 0usize;
    while start + clip_len <= traj_len {
        clips.push(Clip {
            start,
            len: clip_len,
        });
        start += stride;
    }
    let last_end = clips.last().map(|c| c.end()).unwrap_or(0);
    if last_end + 1 < traj_len {
        clips.push(Clip {
            start: traj_len - clip_len,
            len: clip_len,
        });
    }
    Ok(clips)
}

// --- serialization: PLY snapshots and JSON trajectories ---

fn cache_ply_header(count: usize) -> String {
    format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {count}\n\
property float x\nproperty float y\nproperty float z\n\
property uchar red\nproperty uchar green\nproperty uchar blue\n\
property int frame_id\nproperty float confidence\nend_header\n"
    )
}

/// Cache snapshot as binary PLY with color, frame provenance and
/// confidence per point.
pub fn write_cache_ply(cache: &WorldCache) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(cache_ply_header(cache.len()).as_bytes());
    for p in &cache.points {
        for v in [p.position.x as f32, p.position.y as f32, p.position.z as f32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for c in p.color {
            out.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        out.extend_from_slice(&(p.frame_id as i32).to_le_bytes());
        out.extend_from_slice(&p.confidence.to_le_bytes());
    }
    out
}

pub fn read_cache_ply(bytes: &[u8], index_cell: f64) -> Result<WorldCache> {
    let head_end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| Error::Format("PLY header terminator missing".into()))?
        + 11;
    let head = std::str::from_utf8(&bytes[..head_end])
        .map_err(|_| Error::Format("PLY header is not UTF-8".into()))?;
    let count = head
        .lines()
        .find_map(|l| l.strip_prefix("element vertex "))
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or_else(|| Error::Format("missing vertex count".into()))?;
    let body = &bytes[head_end..];
    const STRIDE: usize = 12 + 3 + 4 + 4;
    if body.len() != count * STRIDE {
        return Err(Error::Format(format!(
            "cache PLY payload is {} bytes, expected {}",
            body.len(),
            count * STRIDE
        )));
    }
    let mut cache = WorldCache::new(index_cell);
    let mut max_frame = None;
    for i in 0..count {
        let o = i * STRIDE;
        let f32_at = |k: usize| {
            f32::from_le_bytes([body[o + k], body[o + k + 1], body[o + k + 2], body[o + k + 3]])
        };
        let frame_id =
            i32::from_le_bytes([body[o + 15], body[o + 16], body[o + 17], body[o + 18]]) as u32;
        cache.push(CachedPoint {
            position: DVec3::new(f32_at(0) as f64, f32_at(4) as f64, f32_at(8) as f64),
            color: [
                body[o + 12] as f32 / 255.0,
                body[o + 13] as f32 / 255.0,
                body[o + 14] as f32 / 255.0,
            ],
            frame_id,
            confidence: f32_at(19),
        });
        max_frame = Some(max_frame.map_or(frame_id, |m: u32| m.max(frame_id)));
    }
    cache.last_frame = max_frame;
    Ok(cache)
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseJson {
    /// Quaternion in w, x, y, z order (world-from-camera).
    rotation_wxyz: [f64; 4],
    translation: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryJson {
    intrinsics: IntrinsicsJson,
    poses: Vec<PoseJson>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IntrinsicsJson {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

pub fn write_trajectory_json(traj: &CameraTrajectory) -> Result<String> {
    let first = traj
        .cameras
        .first()
        .ok_or_else(|| Error::invalid("trajectory must have at least one pose"))?;
    let poses = traj
        .cameras
        .iter()
        .map(|c| {
            let q = DQuat::from_mat3(&c.rotation);
            PoseJson {
                rotation_wxyz: [q.w, q.x, q.y, q.z],
                translation: [c.translation.x, c.translation.y, c.translation.z],
            }
        })
        .collect();
    let doc = TrajectoryJson {
        intrinsics: IntrinsicsJson {
            fx: first.fx,
            fy: first.fy,
            cx: first.cx,
            cy: first.cy,
        },
        poses,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn read_trajectory_json(text: &str) -> Result<CameraTrajectory> {
    let doc: TrajectoryJson = serde_json::from_str(text)?;
    if doc.poses.is_empty() {
        return Err(Error::invalid("trajectory must have at least one pose"));
    }
    let cameras = doc
        .poses
        .iter()
        .map(|p| {
            let [w, x, y, z] = p.rotation_wxyz;
            let q = DQuat::from_xyzw(x, y, z, w).normalize();
            let cam = PinholeCamera {
                fx: doc.intrinsics.fx,
                fy: doc.intrinsics.fy,
                cx: doc.intrinsics.cx,
                cy: doc.intrinsics.cy,
                rotation: glam::DMat3::from_quat(q),
                translation: DVec3::from_array(p.translation),
            };
            cam.validate().map(|_| cam)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CameraTrajectory { cameras })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erp::yaw_rotation;

    fn test_frame(w: usize, h: usize, cam: PinholeCamera) -> GuidanceFrame {
        let color = Raster::from_fn(w, h, 3, |x, y, c| ((x * 3 + y * 5 + c) % 11) as f32 / 10.0);
        let depth: Vec<f64> = (0..w * h)
            .map(|i| 2.0 + ((i * 7) % 13) as f64 * 0.25)
            .collect();
        GuidanceFrame {
            color,
            depth,
            validity: ValidityMask::new(w, h, 1.0),
            camera: cam,
        }
    }

    fn forward_cam(w: usize, h: usize) -> PinholeCamera {
        PinholeCamera {
            fx: w as f64,
            fy: w as f64,
            cx: w as f64 / 2.0,
            cy: h as f64 / 2.0,
            rotation: yaw_rotation(0.0),
            translation: DVec3::ZERO,
        }
    }

    #[test]
    fn init_counts_and_principal_ray() {
        let cam = forward_cam(2, 2);
        let frame = test_frame(2, 2, cam);
        let cache = init_cache(&frame, 0.1).unwrap();
        assert_eq!(cache.len(), 4);

        // pixel exactly at the principal point lands along the optical axis
        let mut one = GuidanceFrame {
            color: Raster::new(1, 1, 3),
            depth: vec![3.0],
            validity: ValidityMask::new(1, 1, 1.0),
            camera: forward_cam(1, 1),
        };
        one.camera.cx = 0.5;
        one.camera.cy = 0.5;
        let cache = init_cache(&one, 0.1).unwrap();
        let expected = DVec3::new(0.0, 0.0, -3.0); // forward is world −Z
        assert!((cache.points()[0].position - expected).length() < 1e-12);
    }

    #[test]
    fn invalid_pixels_contribute_no_points() {
        let cam = forward_cam(4, 4);
        let mut frame = test_frame(4, 4, cam);
        frame.validity.set(1, 1, 0.0);
        frame.validity.set(2, 3, 0.0);
        let cache = init_cache(&frame, 0.1).unwrap();
        assert_eq!(cache.len(), 14);
        // empty frame is allowed and yields an empty cache
        frame.validity = ValidityMask::new(4, 4, 0.0);
        let cache = init_cache(&frame, 0.1).unwrap();
        assert!(cache.is_empty());
    }

    #[test]
    fn add_frame_ordering() {
        let cam = forward_cam(3, 3);
        let frame = test_frame(3, 3, cam);
        let mut cache = init_cache(&frame, 0.1).unwrap();
        add_frame(&mut cache, &frame, 1).unwrap();
        assert_eq!(cache.len(), 18);
        assert!(add_frame(&mut cache, &frame, 1).is_err());
        assert!(add_frame(&mut cache, &frame, 0).is_err());
        add_frame(&mut cache, &frame, 5).unwrap();
        assert_eq!(cache.len(), 27);
    }

    #[test]
    fn cull_retention_rules() {
        let mut cache = WorldCache::new(0.5);
        let at = |x: f64| DVec3::new(x, 0.0, 0.0);
        // all in one cell; confidence then frame_id then append order
        cache.push(CachedPoint { position: at(0.1), color: [0.0; 3], frame_id: 3, confidence: 0.5 });
        cache.push(CachedPoint { position: at(0.2), color: [0.0; 3], frame_id: 1, confidence: 0.9 });
        cache.push(CachedPoint { position: at(0.3), color: [0.0; 3], frame_id: 0, confidence: 0.9 });
        cache.push(CachedPoint { position: at(0.4), color: [0.0; 3], frame_id: 0, confidence: 0.9 });
        let culled = cull(&cache, 1.0).unwrap();
        assert_eq!(culled.len(), 1);
        // highest confidence and lowest frame id; the first of the ties
        assert_eq!(culled.points()[0].position, at(0.3));

        // far-apart points survive
        let mut sparse = WorldCache::new(0.5);
        for i in 0..5 {
            sparse.push(CachedPoint {
                position: DVec3::new(i as f64 * 2.0, 0.0, 0.0),
                color: [0.0; 3],
                frame_id: 0,
                confidence: 1.0,
            });
        }
        assert_eq!(cull(&sparse, 1.0).unwrap().len(), 5);

        // idempotence
        let once = cull(&cache, 1.0).unwrap();
        let twice = cull(&once, 1.0).unwrap();
        assert_eq!(once.len(), twice.len());
        assert_eq!(once.points()[0].position, twice.points()[0].position);
        assert!(cull(&cache, 0.0).is_err());
    }

    #[test]
    fn projection_identity_reproduces_frame() {
        let cam = forward_cam(8, 6);
        let frame = test_frame(8, 6, cam);
        let cache = init_cache(&frame, 0.1).unwrap();
        let back = project(&cache, &cam, 8, 6, 0).unwrap();
        for y in 0..6 {
            for x in 0..8 {
                assert!(back.validity.is_on(x, y), "missing pixel ({x},{y})");
                let d0 = frame.depth_at(x, y).unwrap();
                let d1 = back.depth_at(x, y).unwrap();
                assert!((d0 - d1).abs() <= 1e-4, "depth {d0} vs {d1}");
                for c in 0..3 {
                    assert_eq!(back.color.get(x, y, c), frame.color.get(x, y, c));
                }
            }
        }
    }

    #[test]
    fn empty_cache_and_behind_camera() {
        let cam = forward_cam(4, 4);
        let empty = WorldCache::new(0.1);
        let out = project(&empty, &cam, 4, 4, 1).unwrap();
        assert_eq!(out.validity.count_on(), 0);

        let mut cache = WorldCache::new(0.1);
        cache.push(CachedPoint {
            position: DVec3::new(0.0, 0.0, 5.0), // behind a −Z-facing camera
            color: [1.0, 0.0, 0.0],
            frame_id: 0,
            confidence: 1.0,
        });
        let out = project(&cache, &cam, 4, 4, 1).unwrap();
        assert_eq!(out.validity.count_on(), 0);
    }

    #[test]
    fn splat_radius_fills_footprint() {
        let cam = forward_cam(9, 9);
        let mut cache = WorldCache::new(0.1);
        cache.push(CachedPoint {
            position: DVec3::new(0.0, 0.0, -4.0),
            color: [0.2, 0.4, 0.6],
            frame_id: 0,
            confidence: 1.0,
        });
        let out = project(&cache, &cam, 9, 9, 1).unwrap();
        assert_eq!(out.validity.count_on(), 9); // 3x3 footprint
    }

    #[test]
    fn smooth_sample_schedules() {
        // 100 frames, clip 49, overlap 8 -> starts {0, 41, 51}
        let clips = smooth_sample(100, 49, 8).unwrap();
        let starts: Vec<usize> = clips.iter().map(|c| c.start).collect();
        assert_eq!(starts, vec![0, 41, 51]);
        assert_eq!(clips[0].end(), 48);
        assert_eq!(clips[1].end(), 89);
        assert_eq!(clips[2].end(), 99);

        let clips = smooth_sample(49, 49, 8).unwrap();
        assert_eq!(clips.len(), 1);

        // overlap = clip_len − 1 -> sliding window stride 1
        let clips = smooth_sample(6, 3, 2).unwrap();
        let starts: Vec<usize> = clips.iter().map(|c| c.start).collect();
        assert_eq!(starts, vec![0, 1, 2, 3]);

        assert!(smooth_sample(10, 11, 2).is_err());
        assert!(smooth_sample(10, 5, 0).is_err());
        assert!(smooth_sample(10, 5, 5).is_err());
    }

    #[test]
    fn smooth_sample_full_coverage_property() {
        let mut rng = 0x4242u64;
        let mut next = || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng >> 33) as usize
        };
        for _ in 0..200 {
            let n = 2 + next() % 200;
            let clip = 2 + next() % n.max(2);
            let clip = clip.min(n);
            if clip < 2 {
                continue;
            }
            let overlap = 1 + next() % (clip - 1);
            let clips = smooth_sample(n, clip, overlap).unwrap();
            let mut covered = vec![false; n];
            for c in &clips {
                assert!(c.end() < n);
                for i in c.start..=c.end() {
                    covered[i] = true;
                }
            }
            assert!(covered.iter().all(|c| *c), "gap with n={n} clip={clip} overlap={overlap}");
            // consecutive clips share at least the requested overlap
            for pair in clips.windows(2) {
                let shared = (pair[0].end() + 1).saturating_sub(pair[1].start);
                assert!(shared >= overlap, "overlap {shared} < {overlap}");
            }
        }
    }

    #[test]
    fn cache_ply_round_trip() {
        let cam = forward_cam(4, 3);
        let frame = test_frame(4, 3, cam);
        let mut cache = init_cache(&frame, 0.1).unwrap();
        add_frame(&mut cache, &frame, 2).unwrap();
        let bytes = write_cache_ply(&cache);
        let back = read_cache_ply(&bytes, 0.1).unwrap();
        assert_eq!(back.len(), cache.len());
        for (a, b) in cache.points().iter().zip(back.points()) {
            assert!((a.position - b.position).length() < 1e-5);
            assert_eq!(a.frame_id, b.frame_id);
            assert!((a.confidence - b.confidence).abs() < 1e-6);
        }
        assert!(read_cache_ply(&bytes[..bytes.len() - 2], 0.1).is_err());
    }

    #[test]
    fn trajectory_json_round_trip() {
        let cams: Vec<PinholeCamera> = (0..5)
            .map(|i| {
                let mut c = forward_cam(64, 64).with_yaw(i as f64 * 0.3);
                c.translation = DVec3::new(i as f64 * 0.1, 0.0, -0.2 * i as f64);
                c
            })
            .collect();
        let traj = CameraTrajectory { cameras: cams };
        let text = write_trajectory_json(&traj).unwrap();
        let back = read_trajectory_json(&text).unwrap();
        assert_eq!(back.len(), 5);
        for (a, b) in traj.cameras.iter().zip(&back.cameras) {
            assert!((a.translation - b.translation).length() < 1e-9);
            let d = a.rotation.transpose() * b.rotation;
            assert!((d.col(0).x - 1.0).abs() < 1e-9);
            assert!((d.col(1).y - 1.0).abs() < 1e-9);
        }
        assert!(read_trajectory_json("{\"intrinsics\":{\"fx\":1,\"fy\":1,\"cx\":0,\"cy\":0},\"poses\":[]}").is_err());
    }
}
