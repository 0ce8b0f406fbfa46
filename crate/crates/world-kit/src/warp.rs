//! Sheet warping: converts aligned layered depths into seam-closed grid
//! meshes, plus the sky dome, object placement and world assembly.
//!
//! Grid nodes sit on every stride-th pixel of the ERP lattice; the wrap
//! column W duplicates column 0 by index so positions stay bit-identical
//! across the seam while UVs span the full [0,1] range. Triangles whose
//! vertex depths differ by more than `tear_ratio` are dropped so deeper
//! layers show through at discontinuities.

use crate::depth::DepthMap;
use crate::erp::{erp_pixel_to_dir, ErpImage, ValidityMask};
use crate::error::{Error, Result};
use crate::layering::InstanceMask;
use crate::mask::feathered_alpha;
use glam::DVec3;

#[derive(Debug, Clone, PartialEq)]
pub struct GridMesh {
    pub positions: Vec<DVec3>,
    pub uv: Vec<[f64; 2]>,
    pub alpha: Vec<f32>,
    pub indices: Vec<[u32; 3]>,
    pub layer_id: u32,
    pub texture_ref: String,
    /// (column-0 vertex, wrap-duplicate vertex) pairs along the seam.
    pub seam_pairs: Vec<(u32, u32)>,
}

impl GridMesh {
    pub fn empty(layer_id: u32, texture_ref: &str) -> Self {
        GridMesh {
            positions: Vec::new(),
            uv: Vec::new(),
            alpha: Vec::new(),
            indices: Vec::new(),
            layer_id,
            texture_ref: texture_ref.to_string(),
            seam_pairs: Vec::new(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len() as u32;
        if self.uv.len() != self.positions.len() || self.alpha.len() != self.positions.len() {
            return Err(Error::Validation("attribute counts do not match positions".into()));
        }
        for p in &self.positions {
            if !p.is_finite() {
                return Err(Error::Validation("non-finite vertex position".into()));
            }
        }
        for t in &self.indices {
            if t[0] >= n || t[1] >= n || t[2] >= n {
                return Err(Error::Validation("triangle index out of range".into()));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::Validation("triangle with repeated vertices".into()));
            }
        }
        Ok(())
    }

    pub fn median_radius(&self) -> Option<f64> {
        if self.positions.is_empty() {
            return None;
        }
        let mut radii: Vec<f64> = self.positions.iter().map(|p| p.length()).collect();
        radii.sort_by(|a, b| a.total_cmp(b));
        Some(radii[radii.len() / 2])
    }

    pub fn max_radius(&self) -> f64 {
        self.positions.iter().map(|p| p.length()).fold(0.0, f64::max)
    }

    pub fn min_radius(&self) -> f64 {
        self.positions
            .iter()
            .map(|p| p.length())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn surface_area(&self) -> f64 {
        self.indices
            .iter()
            .map(|t| {
                let a = self.positions[t[0] as usize];
                let b = self.positions[t[1] as usize];
                let c = self.positions[t[2] as usize];
                0.5 * (b - a).cross(c - a).length()
            })
            .sum()
    }

    pub fn aabb(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            let v = [p.x, p.y, p.z];
            for k in 0..3 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        if self.positions.is_empty() {
            (lo, hi) = ([0.0; 3], [0.0; 3]);
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WarpOptions {
    pub stride: usize,
    pub tear_ratio: f64,
    pub feather: f64,
}

impl Default for WarpOptions {
    fn default() -> Self {
        WarpOptions {
            stride: 2,
            tear_ratio: 1.3,
            feather: 2.0,
        }
    }
}

/// Translation, uniform scale and yaw placing an externally generated
/// asset into the scene.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PlacementTransform {
    pub translation: [f64; 3],
    pub uniform_scale: f64,
    pub yaw: f64,
}

/// Per-layer meshes ordered near-to-far plus the sky dome and asset
/// placements.
#[derive(Debug, Clone)]
pub struct LayeredWorldMesh {
    pub layers: Vec<GridMesh>,
    pub sky: Option<GridMesh>,
    pub placements: Vec<PlacementTransform>,
}

/// Blends high-latitude rows of a depth map toward their row mean; the
/// blend ramps linearly from 0 at `lat_threshold_deg` to 1 at the pole, and
/// the two pole rows become exactly constant.
pub fn polar_smooth(d: &DepthMap, lat_threshold_deg: f64) -> Result<DepthMap> {
    if !(lat_threshold_deg > 0.0 && lat_threshold_deg < 90.0) {
        return Err(Error::invalid("latitude threshold must lie in (0, 90)"));
    }
    let thr = lat_threshold_deg.to_radians();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut out = d.clone();
    for y in 0..d.height {
        let alat = d.row_lat(y).abs();
        let mut w = if alat <= thr {
            0.0
        } else {
            ((alat - thr) / (half_pi - thr)).clamp(0.0, 1.0)
        };
        if y == 0 || y == d.height - 1 {
            w = 1.0;
        }
        if w <= 0.0 {
            continue;
        }
        let mut sum = 0.0;
        let mut cnt = 0usize;
        for x in 0..d.width {
            if let Some(v) = d.get(x, y) {
                sum += v;
                cnt += 1;
            }
        }
        if cnt == 0 {
            continue;
        }
        let mean = sum / cnt as f64;
        for x in 0..d.width {
            if let Some(v) = d.get(x, y) {
                out.set(x, y, v * (1.0 - w) + mean * w);
            }
        }
    }
    Ok(out)
}

/// Warps one layer into a grid mesh. Nodes sample the depth and feathered
/// mask at their pixel; nodes outside the mask or without valid depth are
/// omitted, and triangles spanning a depth ratio above `tear_ratio` are
/// torn. Triangle winding faces the panorama center.
pub fn warp_layer(
    image: &ErpImage,
    depth: &DepthMap,
    mask: &ValidityMask,
    opts: &WarpOptions,
    layer_id: u32,
    texture_ref: &str,
) -> Result<GridMesh> {
    let (w, h) = (image.width(), image.height());
    if depth.width != w || depth.height != h || !mask.same_size(w, h) {
        return Err(Error::invalid("image, depth and mask lattices must match"));
    }
    if opts.stride < 1 {
        return Err(Error::invalid("stride must be at least 1"));
    }
    if !(opts.tear_ratio > 1.0) {
        return Err(Error::invalid("tear ratio must exceed 1"));
    }
    let mut mesh = GridMesh::empty(layer_id, texture_ref);
    if mask.count_on() == 0 {
        return Ok(mesh);
    }
    if depth.valid_count() == 0 {
        return Err(Error::invalid("depth map has no valid pixels"));
    }
    let alpha_map = feathered_alpha(mask, opts.feather);

    // node columns cover [0, W) every stride pixels; the wrap column W
    // duplicates column 0 by position. Rows likewise end with v = H.
    let mut gus: Vec<usize> = (0..w).step_by(opts.stride).collect();
    gus.push(w);
    let mut gvs: Vec<usize> = (0..h).step_by(opts.stride).collect();
    gvs.push(h);
    let (ncols, nrows) = (gus.len(), gvs.len());

    let mut node_id = vec![u32::MAX; ncols * nrows];
    let mut node_depth: Vec<f64> = Vec::new();
    for (cj, &gv) in gvs.iter().enumerate() {
        let py = gv.min(h - 1);
        for (ci, &gu) in gus.iter().enumerate() {
            let wrap = ci == ncols - 1;
            let px = if wrap { 0 } else { gu };
            let a = alpha_map.get(px, py);
            if a <= 0.0 {
                continue;
            }
            let Some(dval) = depth.get(px, py) else {
                continue;
            };
            let id = mesh.positions.len() as u32;
            if wrap {
                // identical position to the column-0 node, distinct UV
                let partner = node_id[cj * ncols];
                if partner == u32::MAX {
                    continue; // column 0 node missing; skip the duplicate
                }
                mesh.positions.push(mesh.positions[partner as usize]);
                mesh.seam_pairs.push((partner, id));
            } else {
                let dir = erp_pixel_to_dir(gu as f64, gv as f64, w, h)?;
                mesh.positions.push(dir * dval);
            }
            mesh.uv.push([gu as f64 / w as f64, gv as f64 / h as f64]);
            mesh.alpha.push(a);
            node_depth.push(dval);
            node_id[cj * ncols + ci] = id;
        }
    }

    let tear_ok = |ids: &[u32; 3]| -> bool {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for &i in ids {
            let d = node_depth[i as usize];
            lo = lo.min(d);
            hi = hi.max(d);
        }
        hi / lo <= opts.tear_ratio
    };
    for cj in 0..nrows - 1 {
        for ci in 0..ncols - 1 {
            let n00 = node_id[cj * ncols + ci];
            let n01 = node_id[(cj + 1) * ncols + ci];
            let n10 = node_id[cj * ncols + ci + 1];
            let n11 = node_id[(cj + 1) * ncols + ci + 1];
            let t0 = [n00, n01, n11];
            let t1 = [n00, n11, n10];
            for t in [t0, t1] {
                if t.iter().all(|&i| i != u32::MAX) && tear_ok(&t) {
                    mesh.indices.push(t);
                }
            }
        }
    }
    mesh.validate()?;
    Ok(mesh)
}

/// Full-sphere inward-facing dome at a constant radius, textured with the
/// full ERP range.
pub fn build_sky_dome(sky: &ErpImage, radius: f64, stride: usize) -> Result<GridMesh> {
    if !(radius > 0.0) {
        return Err(Error::invalid("sky radius must be positive"));
    }
    let depth = DepthMap::from_fn(sky.width(), sky.height(), |_, _| Some(radius));
    let mask = ValidityMask::new(sky.width(), sky.height(), 1.0);
    let opts = WarpOptions {
        stride,
        tear_ratio: f64::MAX,
        feather: 0.0,
    };
    warp_layer(sky, &depth, &mask, &opts, u32::MAX, "sky")
}

/// Places an externally generated asset: translation along the mask's
/// solid-angle-weighted centroid at the median depth, scale matching the
/// instance's angular width, yaw turning the asset's forward axis toward
/// the panorama center.
pub fn place_object(
    inst: &InstanceMask,
    depth: &DepthMap,
    asset_extents: DVec3,
) -> Result<PlacementTransform> {
    if !(asset_extents.x > 0.0 && asset_extents.y > 0.0 && asset_extents.z > 0.0) {
        return Err(Error::invalid("asset extents must be positive"));
    }
    let (w, h) = (inst.mask.width, inst.mask.height);
    if depth.width != w || depth.height != h {
        return Err(Error::invalid("mask and depth lattices must match"));
    }
    let mut depths: Vec<f64> = Vec::new();
    let mut centroid = DVec3::ZERO;
    for y in 0..h {
        let lat = depth.row_lat(y);
        let cos_lat = lat.cos().max(0.0);
        for x in 0..w {
            let m = inst.mask.get(x, y);
            if m <= 0.5 {
                continue;
            }
            let dir = erp_pixel_to_dir(x as f64 + 0.5, y as f64 + 0.5, w, h)?;
            centroid += dir * (m as f64 * cos_lat);
            if let Some(d) = depth.get(x, y) {
                depths.push(d);
            }
        }
    }
    if depths.is_empty() {
        return Err(Error::invalid("instance has no valid depth pixels"));
    }
    if centroid.length() < 1e-12 {
        return Err(Error::invalid("mask centroid direction is degenerate"));
    }
    depths.sort_by(|a, b| a.total_cmp(b));
    let n = depths.len();
    let median = if n % 2 == 1 {
        depths[n / 2]
    } else {
        0.5 * (depths[n / 2 - 1] + depths[n / 2])
    };
    let dir = centroid.normalize();
    let translation = dir * median;
    let ang_width = inst.bbox.width() * 2.0 * std::f64::consts::PI / w as f64;
    let chord = 2.0 * median * (ang_width * 0.5).tan();
    let horizontal = asset_extents.x.max(asset_extents.z);
    let uniform_scale = chord / horizontal;
    let yaw = translation.x.atan2(translation.z);
    Ok(PlacementTransform {
        translation: [translation.x, translation.y, translation.z],
        uniform_scale,
        yaw,
    })
}

/// Assembles per-layer meshes into an ordered world, validating the
/// depth-ordering and sky-radius invariants. Empty layer meshes are skipped
/// with a warning; ordering violations are errors naming the layers.
pub fn assemble_world(
    meshes: Vec<GridMesh>,
    sky: Option<GridMesh>,
    placements: Vec<PlacementTransform>,
) -> Result<(LayeredWorldMesh, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut layers = Vec::new();
    for (i, mesh) in meshes.into_iter().enumerate() {
        if mesh.is_empty() {
            warnings.push(format!("layer {i} produced an empty mesh; skipped"));
            continue;
        }
        mesh.validate()?;
        layers.push(mesh);
    }
    let mut violations = Vec::new();
    for pair in layers.windows(2) {
        let (near, far) = (&pair[0], &pair[1]);
        let (rn, rf) = (near.median_radius().unwrap_or(0.0), far.median_radius().unwrap_or(0.0));
        if rn > rf {
            violations.push(format!(
                "layer {} median radius {rn:.4} exceeds layer {} median radius {rf:.4}",
                near.layer_id, far.layer_id
            ));
        }
    }
    if let Some(sky_mesh) = &sky {
        let sky_min = sky_mesh.min_radius();
        for layer in &layers {
            if layer.max_radius() >= sky_min {
                violations.push(format!(
                    "layer {} reaches radius {:.4}, not inside sky radius {:.4}",
                    layer.layer_id,
                    layer.max_radius(),
                    sky_min
                ));
            }
        }
    }
    if !violations.is_empty() {
        return Err(Error::Validation(violations.join("; ")));
    }
    Ok((
        LayeredWorldMesh {
            layers,
            sky,
            placements,
        },
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layering::WrappedBox;
    use std::f64::consts::PI;

    fn const_depth(w: usize, h: usize, v: f64) -> DepthMap {
        DepthMap::from_fn(w, h, |_, _| Some(v))
    }

    fn blank_image(w: usize, h: usize) -> ErpImage {
        ErpImage::from_fn(w, h, 3, |_, _, _| 0.5).unwrap()
    }

    #[test]
    fn polar_smooth_constant_and_pole_rows() {
        let d = const_depth(32, 16, 3.0);
        let out = polar_smooth(&d, 75.0).unwrap();
        for y in 0..16 {
            for x in 0..32 {
                assert_eq!(out.get(x, y), Some(3.0));
            }
        }
        // pole row with alternating 1 and 9 becomes the row mean 5 exactly
        let d = DepthMap::from_fn(32, 16, |x, y| {
            Some(if y == 0 {
                if x % 2 == 0 {
                    1.0
                } else {
                    9.0
                }
            } else {
                4.0
            })
        });
        let out = polar_smooth(&d, 75.0).unwrap();
        for x in 0..32 {
            assert!((out.get(x, 0).unwrap() - 5.0).abs() < 1e-12);
        }
        // equator rows untouched even with varying data
        let d = DepthMap::from_fn(32, 16, |x, _| Some(1.0 + x as f64));
        let out = polar_smooth(&d, 75.0).unwrap();
        for x in 0..32 {
            assert_eq!(out.get(x, 8), Some(1.0 + x as f64));
        }
        assert!(polar_smooth(&d, 0.0).is_err());
        assert!(polar_smooth(&d, 90.0).is_err());
    }

    #[test]
    fn sphere_warp_radii_seam_and_area() {
        let (w, h) = (128, 64);
        let r = 2.0;
        let img = blank_image(w, h);
        let depth = const_depth(w, h, r);
        let mask = ValidityMask::new(w, h, 1.0);
        let opts = WarpOptions {
            stride: 1,
            tear_ratio: 1.3,
            feather: 0.0,
        };
        let mesh = warp_layer(&img, &depth, &mask, &opts, 0, "bg").unwrap();
        for p in &mesh.positions {
            assert!((p.length() - r).abs() < 1e-6);
        }
        assert!(!mesh.seam_pairs.is_empty());
        for &(a, b) in &mesh.seam_pairs {
            assert_eq!(mesh.positions[a as usize], mesh.positions[b as usize]);
            assert_eq!(mesh.uv[a as usize][0], 0.0);
            assert_eq!(mesh.uv[b as usize][0], 1.0);
        }
        // no torn triangles on a constant-depth sphere: full cell coverage
        assert_eq!(mesh.triangle_count(), 2 * w * h);
        let area = mesh.surface_area();
        let expect = 4.0 * PI * r * r;
        assert!(
            (area - expect).abs() / expect < 0.02,
            "area {area} vs {expect}"
        );
    }

    #[test]
    fn sphere_winding_faces_inward() {
        let (w, h) = (64, 32);
        let mesh = warp_layer(
            &blank_image(w, h),
            &const_depth(w, h, 1.0),
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
        for t in &mesh.indices {
            let a = mesh.positions[t[0] as usize];
            let b = mesh.positions[t[1] as usize];
            let c = mesh.positions[t[2] as usize];
            let normal = (b - a).cross(c - a);
            if normal.length() < 1e-12 {
                continue; // pole slivers
            }
            let centroid = (a + b + c) / 3.0;
            assert!(
                normal.dot(centroid) < 0.0,
                "outward-facing triangle at {centroid:?}"
            );
        }
    }

    #[test]
    fn single_pixel_mask_vertex() {
        let (w, h) = (64, 32);
        let mask = ValidityMask::from_fn(w, h, |x, y| if x == 10 && y == 8 { 1.0 } else { 0.0 });
        let mesh = warp_layer(
            &blank_image(w, h),
            &const_depth(w, h, 2.0),
            &mask,
            &WarpOptions {
                stride: 1,
                tear_ratio: 1.3,
                feather: 0.0,
            },
            3,
            "fg",
        )
        .unwrap();
        assert_eq!(mesh.vertex_count(), 1);
        assert_eq!(mesh.triangle_count(), 0);
        let expect = erp_pixel_to_dir(10.0, 8.0, w, h).unwrap() * 2.0;
        assert!((mesh.positions[0] - expect).length() < 1e-12);
    }

    #[test]
    fn tearing_drops_exactly_the_discontinuity() {
        let (w, h) = (64, 32);
        // two depth planes; the jump is at x = 32 and at the wrap seam
        let depth = DepthMap::from_fn(w, h, |x, _| Some(if x < 32 { 1.0 } else { 2.0 }));
        let opts = WarpOptions {
            stride: 1,
            tear_ratio: 1.3,
            feather: 0.0,
        };
        let mesh = warp_layer(
            &blank_image(w, h),
            &depth,
            &ValidityMask::new(w, h, 1.0),
            &opts,
            0,
            "bg",
        )
        .unwrap();
        // oracle: rebuild the expected triangle set exhaustively
        let node_depth = |gu: usize, _gv: usize| -> f64 {
            let px = if gu == w { 0 } else { gu };
            if px < 32 {
                1.0
            } else {
                2.0
            }
        };
        let mut expected = 0usize;
        for cj in 0..h {
            for ci in 0..w {
                let quad = [
                    (ci, cj),
                    (ci, cj + 1),
                    (ci + 1, cj + 1),
                    (ci + 1, cj),
                ];
                for tri in [[0usize, 1, 2], [0, 2, 3]] {
                    let ds: Vec<f64> = tri.iter().map(|&k| node_depth(quad[k].0, quad[k].1)).collect();
                    let hi = ds.iter().cloned().fold(0.0f64, f64::max);
                    let lo = ds.iter().cloned().fold(f64::INFINITY, f64::min);
                    if hi / lo <= opts.tear_ratio {
                        expected += 1;
                    }
                }
            }
        }
        assert_eq!(mesh.triangle_count(), expected);
        // and no kept triangle crosses the jump
        for t in &mesh.indices {
            let ds: Vec<f64> = t
                .iter()
                .map(|&i| mesh.positions[i as usize].length())
                .collect();
            let hi = ds.iter().cloned().fold(0.0f64, f64::max);
            let lo = ds.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(hi / lo <= opts.tear_ratio + 1e-9);
        }
    }

    #[test]
    fn feathered_alpha_on_vertices() {
        let (w, h) = (64, 32);
        let mask = ValidityMask::from_fn(w, h, |x, y| {
            if (16..48).contains(&x) && (8..24).contains(&y) {
                1.0
            } else {
                0.0
            }
        });
        let mesh = warp_layer(
            &blank_image(w, h),
            &const_depth(w, h, 1.0),
            &mask,
            &WarpOptions {
                stride: 1,
                tear_ratio: 1.3,
                feather: 3.0,
            },
            0,
            "fg",
        )
        .unwrap();
        assert!(mesh.alpha.iter().all(|a| (0.0..=1.0).contains(a)));
        // interior vertices (more than feather inside) have alpha exactly 1
        for (i, uvc) in mesh.uv.iter().enumerate() {
            let x = (uvc[0] * w as f64).round() as i64;
            let y = (uvc[1] * h as f64).round() as i64;
            if (20..44).contains(&x) && (12..20).contains(&y) {
                assert_eq!(mesh.alpha[i], 1.0, "vertex at ({x},{y})");
            }
        }
    }

    #[test]
    fn empty_mask_and_invalid_depth() {
        let (w, h) = (32, 16);
        let img = blank_image(w, h);
        let empty = ValidityMask::new(w, h, 0.0);
        let mesh = warp_layer(
            &img,
            &const_depth(w, h, 1.0),
            &empty,
            &WarpOptions::default(),
            0,
            "x",
        )
        .unwrap();
        assert!(mesh.is_empty());
        let bad_depth = DepthMap::new_invalid(w, h);
        assert!(warp_layer(
            &img,
            &bad_depth,
            &ValidityMask::new(w, h, 1.0),
            &WarpOptions::default(),
            0,
            "x"
        )
        .is_err());
    }

    #[test]
    fn sky_dome_radius_and_seam() {
        let sky = blank_image(64, 32);
        let dome = build_sky_dome(&sky, 10.5, 2).unwrap();
        for p in &dome.positions {
            assert!((p.length() - 10.5).abs() < 1e-6);
        }
        for &(a, b) in &dome.seam_pairs {
            assert_eq!(dome.positions[a as usize], dome.positions[b as usize]);
        }
        // composition with sky_depth: max scene depth 10 and kappa 1.05
        let scene = const_depth(64, 32, 10.0);
        let radius = crate::depth::sky_depth(&[&scene], 1.05).unwrap();
        assert!((radius - 10.5).abs() < 1e-12);
    }

    fn mask_instance(_w: usize, _h: usize, mask: ValidityMask) -> InstanceMask {
        let bbox = WrappedBox::tight_around(&mask, 1.0).unwrap();
        InstanceMask {
            id: 0,
            label: "obj".into(),
            bbox,
            mask,
            median_depth: None,
        }
    }

    #[test]
    fn place_object_centered_and_scaled() {
        let (w, h) = (256, 128);
        // square mask centered at lon 0, lat 0 spanning ~0.5 rad of longitude
        let half_cols = (0.25 / (2.0 * PI) * w as f64).round() as i64; // ±0.25 rad
        let cx = w as i64 / 2;
        let mask = ValidityMask::from_fn(w, h, |x, y| {
            let dx = x as i64 - cx;
            let dy = y as i64 - h as i64 / 2;
            if dx >= -half_cols && dx < half_cols && dy.abs() < 12 {
                1.0
            } else {
                0.0
            }
        });
        let inst = mask_instance(w, h, mask);
        let depth = const_depth(w, h, 4.0);
        let p = place_object(&inst, &depth, DVec3::new(1.0, 1.0, 1.0)).unwrap();
        assert!(p.translation[0].abs() < 0.05);
        assert!(p.translation[1].abs() < 0.05);
        assert!((p.translation[2] + 4.0).abs() < 0.01, "{:?}", p.translation);
        // exact chord formula for the actual box width
        let ang = inst.bbox.width() * 2.0 * PI / w as f64;
        let expect = 2.0 * 4.0 * (ang * 0.5).tan();
        assert!((p.uniform_scale - expect).abs() < 1e-12);
        // the stated nominal: angular width 0.5 rad at depth 4, unit asset
        let nominal = 2.0 * 4.0 * (0.25f64).tan();
        assert!((p.uniform_scale - nominal).abs() < 0.1);
        assert!((nominal - 2.0).abs() < 0.05); // small-angle chord ≈ 0.5 × 4

        // doubling depth doubles translation and scale
        let p2 = place_object(&inst, &const_depth(w, h, 8.0), DVec3::ONE).unwrap();
        assert!((p2.translation[2] / p.translation[2] - 2.0).abs() < 1e-9);
        assert!((p2.uniform_scale / p.uniform_scale - 2.0).abs() < 1e-9);
    }

    #[test]
    fn place_object_yaw_equivariance() {
        let (w, h) = (128, 64);
        let make_mask = |shift: usize| {
            ValidityMask::from_fn(w, h, |x, y| {
                let xs = (x + w - shift) % w;
                if (60..68).contains(&xs) && (28..36).contains(&y) {
                    1.0
                } else {
                    0.0
                }
            })
        };
        let depth = const_depth(w, h, 3.0);
        let p0 = place_object(&mask_instance(w, h, make_mask(0)), &depth, DVec3::ONE).unwrap();
        let shift = 32usize; // quarter turn
        let p1 = place_object(&mask_instance(w, h, make_mask(shift)), &depth, DVec3::ONE).unwrap();
        // shifting the mask by +Δlon rotates the translation by +Δlon about
        // +Y; the yaw counter-rotates so the asset keeps facing the center.
        let dlon = 2.0 * PI * shift as f64 / w as f64;
        let dyaw = (p0.yaw - p1.yaw).rem_euclid(2.0 * PI);
        assert!((dyaw - dlon).abs() < 1e-6, "dyaw {dyaw} vs {dlon}");
        let t0 = DVec3::from(p0.translation);
        let t1 = DVec3::from(p1.translation);
        let rotated = DVec3::new(
            t0.x * dlon.cos() - t0.z * dlon.sin(),
            t0.y,
            t0.x * dlon.sin() + t0.z * dlon.cos(),
        );
        assert!(
            (rotated - t1).length() < 1e-6,
            "rotated {rotated:?} vs {t1:?}"
        );
        assert!((t0.length() - t1.length()).abs() < 1e-9);
        assert!((p0.uniform_scale - p1.uniform_scale).abs() < 1e-9);
    }

    #[test]
    fn place_object_requires_depth() {
        let (w, h) = (32, 16);
        let mask = ValidityMask::from_fn(w, h, |x, y| if x == 5 && y == 5 { 1.0 } else { 0.0 });
        let inst = mask_instance(w, h, mask);
        let empty = DepthMap::new_invalid(w, h);
        assert!(place_object(&inst, &empty, DVec3::ONE).is_err());
        assert!(place_object(&inst, &const_depth(w, h, 1.0), DVec3::ZERO).is_err());
    }

    #[test]
    fn assemble_world_validation() {
        let (w, h) = (64, 32);
        let img = blank_image(w, h);
        let mask = ValidityMask::new(w, h, 1.0);
        let opts = WarpOptions {
            stride: 2,
            tear_ratio: 1.3,
            feather: 0.0,
        };
        let bg = warp_layer(&img, &const_depth(w, h, 5.0), &mask, &opts, 1, "background").unwrap();
        let sky = build_sky_dome(&img, 5.25, 2).unwrap();
        let (world, warnings) = assemble_world(vec![bg.clone()], Some(sky.clone()), Vec::new()).unwrap();
        assert_eq!(world.layers.len(), 1);
        assert!(warnings.is_empty());

        // foreground farther than background violates ordering
        let fg_far = warp_layer(&img, &const_depth(w, h, 7.0), &mask, &opts, 0, "fg_00").unwrap();
        let err = assemble_world(vec![fg_far, bg.clone()], None, Vec::new()).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));

        // empty foreground is skipped with a warning
        let empty = GridMesh::empty(0, "fg_00");
        let (world, warnings) = assemble_world(vec![empty, bg.clone()], None, Vec::new()).unwrap();
        assert_eq!(world.layers.len(), 1);
        assert_eq!(warnings.len(), 1);

        // sky smaller than the scene is a violation
        let low_sky = build_sky_dome(&img, 4.0, 2).unwrap();
        assert!(assemble_world(vec![bg], Some(low_sky), Vec::new()).is_err());
    }
}
