//! Seam-aware instance bookkeeping and decomposition of a panorama into
//! sky / background / foreground layers.
//!
//! Detection, segmentation and completion are external models; they enter
//! through the provider interfaces in [`providers`]. Everything else —
//! padded-box remapping, seam-fragment merging, area NMS, sub-layer
//! assignment and the onion-peel loop — is deterministic bookkeeping.

pub mod providers;

use crate::depth::DepthMap;
use crate::erp::{ErpImage, ValidityMask};
use crate::error::{Error, Result};
pub use providers::{CompletionProvider, DetectedBox, DetectionProvider, FileProvider, NeighborFill, SegmentationProvider};

/// Axis-aligned box on the ERP lattice; u_max > W encodes wrap across the
/// seam. Continuous coordinates: the box covers columns [u_min, u_max).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WrappedBox {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub score: f32,
}

impl WrappedBox {
    pub fn width(&self) -> f64 {
        self.u_max - self.u_min
    }

    pub fn crosses_seam(&self, w: usize) -> bool {
        self.u_max > w as f64
    }

    pub fn validate(&self, w: usize, h: usize) -> Result<()> {
        if !(self.u_min < self.u_max) || self.width() > w as f64 {
            return Err(Error::invalid("box u-range invalid or wider than W"));
        }
        if !(0.0 <= self.v_min && self.v_min < self.v_max && self.v_max <= h as f64) {
            return Err(Error::invalid("box v-range invalid"));
        }
        Ok(())
    }

    /// Tight wrap-aware box around the on-pixels of a mask. The u-range is
    /// the complement of the largest circular run of empty columns.
    pub fn tight_around(mask: &ValidityMask, score: f32) -> Option<WrappedBox> {
        let (w, h) = (mask.width, mask.height);
        let mut col_on = vec![false; w];
        let mut v_min = h;
        let mut v_max = 0usize;
        for y in 0..h {
            for x in 0..w {
                if mask.is_on(x, y) {
                    col_on[x] = true;
                    v_min = v_min.min(y);
                    v_max = v_max.max(y + 1);
                }
            }
        }
        if v_min == h {
            return None;
        }
        let occupied = col_on.iter().filter(|c| **c).count();
        if occupied == w {
            return Some(WrappedBox {
                u_min: 0.0,
                u_max: w as f64,
                v_min: v_min as f64,
                v_max: v_max as f64,
                score,
            });
        }
        // longest circular gap of empty columns
        let mut best_gap = 0usize;
        let mut best_end = 0usize;
        let mut run = 0usize;
        for x in 0..2 * w {
            if !col_on[x % w] {
                run += 1;
                if run > best_gap {
                    best_gap = run.min(w);
                    best_end = x % w;
                }
            } else {
                run = 0;
            }
        }
        let u_min = (best_end + 1) % w;
        Some(WrappedBox {
            u_min: u_min as f64,
            u_max: (u_min + (w - best_gap)) as f64,
            v_min: v_min as f64,
            v_max: v_max as f64,
            score,
        })
    }
}

/// A detected object instance with its soft pixel mask.
#[derive(Debug, Clone)]
pub struct InstanceMask {
    pub id: usize,
    pub label: String,
    pub bbox: WrappedBox,
    pub mask: ValidityMask,
    pub median_depth: Option<f64>,
}

impl InstanceMask {
    pub fn area(&self) -> usize {
        self.mask.count_on()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Sky,
    Background,
    Foreground,
}

/// How the completed pixels of a layer image were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillSource {
    Original,
    Provider,
    SyntheticFill,
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub kind: LayerKind,
    pub order: usize,
    pub image: ErpImage,
    pub mask: ValidityMask,
    pub depth: Option<DepthMap>,
    pub instances: Vec<InstanceMask>,
    /// Region of `image` that was inpainted rather than observed.
    pub completed_mask: Option<ValidityMask>,
    pub fill: FillSource,
}

/// Ordered decomposition: foreground layers (order 0 = nearest), then
/// background, then an optional sky layer.
#[derive(Debug, Clone)]
pub struct LayerStack {
    pub panorama: ErpImage,
    pub layers: Vec<Layer>,
}

impl LayerStack {
    pub fn background(&self) -> Option<&Layer> {
        self.layers.iter().find(|l| l.kind == LayerKind::Background)
    }

    pub fn sky(&self) -> Option<&Layer> {
        self.layers.iter().find(|l| l.kind == LayerKind::Sky)
    }

    pub fn foregrounds(&self) -> impl Iterator<Item = &Layer> {
        self.layers.iter().filter(|l| l.kind == LayerKind::Foreground)
    }

    /// Structural checks: one background, at most one sky, consecutive
    /// foreground orders, and full pixel coverage.
    pub fn validate(&self) -> Result<()> {
        let bg = self.layers.iter().filter(|l| l.kind == LayerKind::Background).count();
        if bg != 1 {
            return Err(Error::Validation(format!("expected 1 background layer, found {bg}")));
        }
        let sky = self.layers.iter().filter(|l| l.kind == LayerKind::Sky).count();
        if sky > 1 {
            return Err(Error::Validation(format!("expected at most 1 sky layer, found {sky}")));
        }
        let mut orders: Vec<usize> = self.foregrounds().map(|l| l.order).collect();
        orders.sort_unstable();
        for (i, o) in orders.iter().enumerate() {
            if *o != i {
                return Err(Error::Validation(format!(
                    "foreground orders not consecutive from 0: {orders:?}"
                )));
            }
        }
        let (w, h) = (self.panorama.width(), self.panorama.height());
        for layer in &self.layers {
            if layer.image.width() != w || !layer.mask.same_size(w, h) {
                return Err(Error::Validation("layer lattice does not match panorama".into()));
            }
        }
        for y in 0..h {
            for x in 0..w {
                let covered = self.layers.iter().any(|l| l.mask.is_on(x, y));
                if !covered {
                    return Err(Error::Validation(format!("pixel ({x},{y}) covered by no layer")));
                }
            }
        }
        Ok(())
    }
}

/// Remaps a detection box from circularly padded space back onto the
/// original panorama, encoding seam wrap via u_max > W.
pub fn remap_padded_box(
    u_min: f64,
    u_max: f64,
    v_min: f64,
    v_max: f64,
    score: f32,
    pad: usize,
    w: usize,
) -> Result<WrappedBox> {
    if !(u_min < u_max) {
        return Err(Error::invalid("empty box"));
    }
    if u_max - u_min > w as f64 {
        return Err(Error::invalid(format!(
            "box width {} exceeds panorama width {w}",
            u_max - u_min
        )));
    }
    if u_min < 0.0 || u_max > (w + 2 * pad) as f64 {
        return Err(Error::invalid("box outside padded space"));
    }
    let width = u_max - u_min;
    let shifted = u_min - pad as f64;
    let u0 = shifted.rem_euclid(w as f64);
    Ok(WrappedBox {
        u_min: u0,
        u_max: u0 + width,
        v_min,
        v_max,
        score,
    })
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
        }
        self.parent[i]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Merges same-label instances whose masks touch across the wrap seam
/// (8-connectivity modulo W), transitively. Ids are reassigned densely in
/// first-occurrence order.
pub fn merge_seam_fragments(instances: Vec<InstanceMask>, w: usize) -> Vec<InstanceMask> {
    let n = instances.len();
    let mut uf = UnionFind::new(n);
    let edge_rows = |inst: &InstanceMask, col: usize| -> Vec<bool> {
        (0..inst.mask.height).map(|y| inst.mask.is_on(col, y)).collect()
    };
    let lefts: Vec<Vec<bool>> = instances.iter().map(|i| edge_rows(i, 0)).collect();
    let rights: Vec<Vec<bool>> = instances.iter().map(|i| edge_rows(i, w - 1)).collect();
    let touches = |a: &[bool], b: &[bool]| -> bool {
        let h = a.len();
        (0..h).any(|r| {
            a[r] && (b[r] || (r > 0 && b[r - 1]) || (r + 1 < h && b[r + 1]))
        })
    };
    for i in 0..n {
        for j in i + 1..n {
            if instances[i].label != instances[j].label {
                continue;
            }
            if touches(&rights[i], &lefts[j]) || touches(&rights[j], &lefts[i]) {
                uf.union(i, j);
            }
        }
    }
    let mut out: Vec<InstanceMask> = Vec::new();
    let mut root_to_out: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    for (i, inst) in instances.into_iter().enumerate() {
        let root = uf.find(i);
        match root_to_out.get(&root) {
            Some(&k) => {
                let merged = &mut out[k];
                for p in 0..merged.mask.values.len() {
                    merged.mask.values[p] = merged.mask.values[p].max(inst.mask.values[p]);
                }
                merged.bbox = WrappedBox::tight_around(&merged.mask, merged.bbox.score.max(inst.bbox.score))
                    .expect("merged mask cannot be empty");
                merged.median_depth = None;
            }
            None => {
                root_to_out.insert(root, out.len());
                out.push(inst);
            }
        }
    }
    for (id, inst) in out.iter_mut().enumerate() {
        inst.id = id;
    }
    out
}

/// Area-based NMS: instances sorted by descending mask area; an instance is
/// suppressed when intersection over the smaller area with any kept
/// instance exceeds `overlap_thresh`. Ties break on (v_min, u_min).
pub fn area_nms(instances: Vec<InstanceMask>, overlap_thresh: f64) -> Result<Vec<InstanceMask>> {
    if !(overlap_thresh > 0.0 && overlap_thresh <= 1.0) {
        return Err(Error::invalid("overlap threshold must lie in (0, 1]"));
    }
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let areas: Vec<usize> = instances.iter().map(|i| i.area()).collect();
    order.sort_by(|&a, &b| {
        areas[b]
            .cmp(&areas[a])
            .then(instances[a].bbox.v_min.total_cmp(&instances[b].bbox.v_min))
            .then(instances[a].bbox.u_min.total_cmp(&instances[b].bbox.u_min))
    });
    let mut kept: Vec<InstanceMask> = Vec::new();
    for idx in order {
        let cand = &instances[idx];
        let area = areas[idx].max(1);
        let mut suppressed = false;
        for k in &kept {
            let smaller = area.min(k.area()).max(1);
            let mut inter = 0usize;
            for p in 0..cand.mask.values.len() {
                if cand.mask.values[p] > 0.5 && k.mask.values[p] > 0.5 {
                    inter += 1;
                }
            }
            if inter as f64 / smaller as f64 > overlap_thresh {
                suppressed = true;
                break;
            }
        }
        if !suppressed {
            kept.push(cand.clone());
        }
    }
    Ok(kept)
}

/// Partitions instances into k depth groups by the quantiles of their
/// median depths; order 0 holds the smallest medians. Instances without any
/// valid depth are assigned to the group with the nearest mean box-center
/// latitude. Returns the group index per instance (same order as input).
pub fn assign_sublayers(
    instances: &mut [InstanceMask],
    base_depth: &DepthMap,
    k: usize,
) -> Result<Vec<usize>> {
    if instances.is_empty() {
        return Ok(Vec::new());
    }
    if k == 0 || k > instances.len() {
        return Err(Error::invalid(format!(
            "k = {k} outside [1, {}]",
            instances.len()
        )));
    }
    let mut medians: Vec<Option<f64>> = Vec::with_capacity(instances.len());
    for inst in instances.iter_mut() {
        let mut depths: Vec<f64> = Vec::new();
        for y in 0..inst.mask.height {
            for x in 0..inst.mask.width {
                if inst.mask.is_on(x, y) {
                    if let Some(d) = base_depth.get(x, y) {
                        depths.push(d);
                    }
                }
            }
        }
        if depths.is_empty() {
            medians.push(None);
            inst.median_depth = None;
        } else {
            depths.sort_by(|a, b| a.total_cmp(b));
            let n = depths.len();
            let med = if n % 2 == 1 {
                depths[n / 2]
            } else {
                0.5 * (depths[n / 2 - 1] + depths[n / 2])
            };
            medians.push(Some(med));
            inst.median_depth = Some(med);
        }
    }
    let mut with_depth: Vec<(usize, f64)> = medians
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|v| (i, v)))
        .collect();
    if with_depth.is_empty() {
        return Err(Error::invalid("no instance has any valid depth pixel"));
    }
    with_depth.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let n = with_depth.len();
    let mut groups = vec![usize::MAX; instances.len()];
    for (rank, (idx, _)) in with_depth.iter().enumerate() {
        groups[*idx] = (rank * k) / n;
    }
    // flagged instances: nearest group by box-center latitude
    let h = base_depth.height as f64;
    let lat_of = |inst: &InstanceMask| {
        let vc = 0.5 * (inst.bbox.v_min + inst.bbox.v_max);
        std::f64::consts::PI / 2.0 - std::f64::consts::PI * vc / h
    };
    let mut group_lat = vec![(0.0f64, 0usize); k];
    for (i, g) in groups.iter().enumerate() {
        if *g != usize::MAX {
            group_lat[*g].0 += lat_of(&instances[i]);
            group_lat[*g].1 += 1;
        }
    }
    for i in 0..instances.len() {
        if groups[i] == usize::MAX {
            let lat = lat_of(&instances[i]);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (g, (sum, cnt)) in group_lat.iter().enumerate() {
                if *cnt == 0 {
                    continue;
                }
                let d = (sum / *cnt as f64 - lat).abs();
                if d < best_d {
                    best_d = d;
                    best = g;
                }
            }
            groups[i] = best;
        }
    }
    Ok(groups)
}

/// The result of completing an image: where did the filled pixels come from.
fn complete_with(
    provider: Option<&dyn CompletionProvider>,
    image: &ErpImage,
    holes: &ValidityMask,
) -> Result<(ErpImage, FillSource)> {
    // Objects are removed before completion: hole pixels are zeroed.
    let mut removed = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            if holes.is_on(x, y) {
                for c in 0..image.channels() {
                    removed.raster_mut().set(x, y, c, 0.0);
                }
            }
        }
    }
    let (filled, source) = match provider {
        Some(p) => match p.complete(&removed, holes) {
            Ok(out) => (out, FillSource::Provider),
            Err(Error::Protocol(msg)) => return Err(Error::Protocol(msg)),
            Err(_) => {
                // timeout or process failure: fall back to synthetic fill
                (NeighborFill::default().complete(&removed, holes)?, FillSource::SyntheticFill)
            }
        },
        None => (NeighborFill::default().complete(&removed, holes)?, FillSource::SyntheticFill),
    };
    if filled.width() != image.width() || filled.height() != image.height() {
        return Err(Error::Protocol(format!(
            "completion returned {}x{}, expected {}x{}",
            filled.width(),
            filled.height(),
            image.width(),
            image.height()
        )));
    }
    // provider bytes land verbatim on the holes; everything else is kept
    let mut out = image.clone();
    for y in 0..image.height() {
        for x in 0..image.width() {
            if holes.is_on(x, y) {
                for c in 0..image.channels() {
                    out.raster_mut().set(x, y, c, filled.get(x, y, c));
                }
            }
        }
    }
    Ok((out, source))
}

/// Autoregressive onion peeling: records one foreground layer per group
/// (nearest first), completing the revealed holes after each peel; the last
/// completion becomes the background. If `sky_mask` is supplied, a sky
/// layer is produced by completing the non-sky region.
pub fn onion_peel(
    pano: &ErpImage,
    groups: &[Vec<InstanceMask>],
    completion: Option<&dyn CompletionProvider>,
    sky_completion: Option<&dyn CompletionProvider>,
    sky_mask: Option<&ValidityMask>,
) -> Result<LayerStack> {
    let (w, h) = (pano.width(), pano.height());
    for group in groups {
        for inst in group {
            if !inst.mask.same_size(w, h) {
                return Err(Error::invalid("instance mask lattice does not match panorama"));
            }
        }
    }
    if let Some(m) = sky_mask {
        if !m.same_size(w, h) {
            return Err(Error::invalid("sky mask lattice does not match panorama"));
        }
    }

    let mut layers: Vec<Layer> = Vec::new();
    let mut current = pano.clone();
    let mut completed_sofar = ValidityMask::new(w, h, 0.0);
    let mut any_synthetic = false;

    for group in groups {
        if group.is_empty() {
            continue;
        }
        let order = layers.len();
        let mut mask = ValidityMask::new(w, h, 0.0);
        for inst in group {
            for p in 0..mask.values.len() {
                mask.values[p] = mask.values[p].max(inst.mask.values[p]);
            }
        }
        layers.push(Layer {
            kind: LayerKind::Foreground,
            order,
            image: current.clone(),
            mask: mask.clone(),
            depth: None,
            instances: group.clone(),
            completed_mask: if order == 0 {
                None
            } else {
                Some(completed_sofar.clone())
            },
            fill: match (order, any_synthetic) {
                (0, _) => FillSource::Original,
                (_, true) => FillSource::SyntheticFill,
                (_, false) => FillSource::Provider,
            },
        });

        let holes = ValidityMask::from_fn(w, h, |x, y| if mask.is_on(x, y) { 1.0 } else { 0.0 });
        let (next, source) = complete_with(completion, &current, &holes)?;
        any_synthetic |= source == FillSource::SyntheticFill;
        current = next;
        for p in 0..completed_sofar.values.len() {
            completed_sofar.values[p] = completed_sofar.values[p].max(holes.values[p]);
        }
    }

    let fg_count = layers.len();
    let bg_fill = match (fg_count, any_synthetic) {
        (0, _) => FillSource::Original,
        (_, true) => FillSource::SyntheticFill,
        (_, false) => FillSource::Provider,
    };
    let bg_mask = match sky_mask {
        Some(sky) => ValidityMask::from_fn(w, h, |x, y| if sky.is_on(x, y) { 0.0 } else { 1.0 }),
        None => ValidityMask::new(w, h, 1.0),
    };
    layers.push(Layer {
        kind: LayerKind::Background,
        order: 0,
        image: current.clone(),
        mask: bg_mask,
        depth: None,
        instances: Vec::new(),
        completed_mask: if fg_count > 0 { Some(completed_sofar.clone()) } else { None },
        fill: bg_fill,
    });

    if let Some(sky) = sky_mask {
        let holes = ValidityMask::from_fn(w, h, |x, y| if sky.is_on(x, y) { 0.0 } else { 1.0 });
        let (sky_image, sky_fill) = complete_with(sky_completion, &current, &holes)?;
        layers.push(Layer {
            kind: LayerKind::Sky,
            order: 0,
            image: sky_image,
            mask: ValidityMask::new(w, h, 1.0),
            depth: None,
            instances: Vec::new(),
            completed_mask: Some(holes),
            fill: sky_fill,
        });
    }

    let stack = LayerStack {
        panorama: pano.clone(),
        layers,
    };
    stack.validate()?;
    Ok(stack)
}

#[cfg(test)]
mod tests;
