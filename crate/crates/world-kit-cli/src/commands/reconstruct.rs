//! `reconstruct`: manifest-driven end-to-end pipeline. Stages: load (or
//! decompose via providers) → cross-layer depth alignment → background
//! depth compression → polar smoothing → sheet warping → sky dome →
//! assembly → decimation → LWC/GLB export, with a machine-readable report.
//! Outputs are written to a staging directory and renamed into place.

use crate::manifest::{load_scene, LoadedLayer, LoadedScene, OutputConfig};
use crate::world_dir::{WorldJson, WorldLayerJson};
use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;
use world_kit::depth::{
    adaptive_compress, apply_affine, estimate_affine_alignment, overlap_mask, sky_depth,
    AffineDepthTransform, AlignmentReport, DepthMap,
};
use world_kit::erp::{circular_pad, ErpImage, ValidityMask};
use world_kit::io;
use world_kit::layering::{
    area_nms, assign_sublayers, merge_seam_fragments, onion_peel, remap_padded_box, FileProvider,
    InstanceMask, LayerKind, WrappedBox,
};
use world_kit::layering::providers::{DetectionProvider, SegmentationProvider};
use world_kit::meshopt::{decimate_qem, encode_compact, export_gltf, export_ply, ply_byte_size, PreserveFlags};
use world_kit::metrics::seam_score;
use world_kit::warp::{assemble_world, build_sky_dome, polar_smooth, warp_layer, GridMesh, WarpOptions};

pub struct ReconstructArgs {
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub force: bool,
    pub stride: Option<usize>,
    pub tear_ratio: Option<f64>,
    pub feather: Option<f64>,
    pub kappa: Option<f64>,
    pub decimate_ratio: Option<f64>,
    pub pos_bits: Option<u8>,
    pub uv_bits: Option<u8>,
}

#[derive(Serialize)]
struct LayerReport {
    name: String,
    kind: String,
    alignment: Option<AlignmentEntry>,
    vertices: usize,
    triangles: usize,
    vertices_decimated: usize,
    triangles_decimated: usize,
    raw_ply_bytes: usize,
    decimated_ply_bytes: usize,
    lwc_bytes: usize,
    offline_reduction: f64,
    codec_reduction: f64,
}

#[derive(Serialize)]
struct AlignmentEntry {
    a: f64,
    b: f64,
    inlier_count: usize,
    rms_residual: f64,
    trimmed_iterations: usize,
    invalidated_pixels: usize,
}

#[derive(Serialize)]
struct Report {
    config: OutputConfig,
    sky_radius: Option<f64>,
    seam_score: f32,
    layers: Vec<LayerReport>,
    warnings: Vec<String>,
    totals: Totals,
}

#[derive(Serialize)]
struct Totals {
    raw_ply_bytes: usize,
    decimated_ply_bytes: usize,
    lwc_bytes: usize,
    glb_bytes: usize,
    offline_reduction: f64,
    codec_reduction: f64,
}

struct StageLayer {
    kind: LayerKind,
    name: String,
    image: ErpImage,
    mask: ValidityMask,
    depth: Option<DepthMap>,
    completed_mask: Option<ValidityMask>,
    alignment: Option<AlignmentEntry>,
}

fn merged_config(manifest: &OutputConfig, args: &ReconstructArgs) -> OutputConfig {
    let mut cfg = manifest.clone();
    if let Some(v) = args.stride {
        cfg.stride = v;
    }
    if let Some(v) = args.tear_ratio {
        cfg.tear_ratio = v;
    }
    if let Some(v) = args.feather {
        cfg.feather = v;
    }
    if let Some(v) = args.kappa {
        cfg.kappa = v;
    }
    if let Some(v) = args.decimate_ratio {
        cfg.decimate_ratio = v;
    }
    if let Some(v) = args.pos_bits {
        cfg.pos_bits = v;
    }
    if let Some(v) = args.uv_bits {
        cfg.uv_bits = v;
    }
    cfg
}

/// Detection → segmentation → seam merge → NMS → sub-layers → onion peel,
/// all through the file providers named in the manifest.
fn decompose(scene: &LoadedScene, cfg: &OutputConfig) -> Result<Vec<StageLayer>> {
    let providers = scene
        .manifest
        .providers
        .as_ref()
        .context("stage decompose: manifest has no layers and no providers")?;
    let workspace = scene
        .root
        .join(providers.workspace.as_deref().unwrap_or("providers"));
    std::fs::create_dir_all(&workspace)?;
    let make = |cmd: &Option<Vec<String>>| -> Option<FileProvider> {
        cmd.as_ref().map(|c| {
            let mut p = FileProvider::new(c.clone(), &workspace);
            if let Some(secs) = providers.timeout_seconds {
                p.timeout = Duration::from_secs(secs);
            }
            p
        })
    };
    let detect = make(&providers.detect)
        .context("stage decompose: detection provider is required when layers are absent")?;
    let segment = make(&providers.segment)
        .context("stage decompose: segmentation provider is required when layers are absent")?;
    let complete = make(&providers.complete);
    let sky_complete = make(&providers.sky_complete);

    let (w, h) = (scene.panorama.width(), scene.panorama.height());
    let pad = ((w as f64 * cfg.detect_pad_ratio).round() as usize).min(w / 2);
    let padded = circular_pad(&scene.panorama, pad).context("stage decompose: padding")?;
    let boxes = detect
        .detect(&padded, &providers.labels)
        .context("stage decompose: detection provider")?;
    let masks = segment
        .segment(&padded, &boxes)
        .context("stage decompose: segmentation provider")?;

    let mut instances = Vec::new();
    for (i, (bx, padded_mask)) in boxes.iter().zip(masks).enumerate() {
        let remapped: WrappedBox =
            remap_padded_box(bx.u_min, bx.u_max, bx.v_min, bx.v_max, bx.score, pad, w)
                .with_context(|| format!("stage decompose: remapping box {i}"))?;
        // fold the padded mask back onto the original lattice
        let mut mask = ValidityMask::new(w, h, 0.0);
        for y in 0..h {
            for x in 0..padded_mask.width.min(w + 2 * pad) {
                let v = padded_mask.get(x, y);
                if v > 0.0 {
                    let ox = (x + w - (pad % w)) % w;
                    let cur = mask.get(ox, y);
                    mask.set(ox, y, cur.max(v));
                }
            }
        }
        if mask.count_on() == 0 {
            continue;
        }
        instances.push(InstanceMask {
            id: i,
            label: bx.label.clone(),
            bbox: remapped,
            mask,
            median_depth: None,
        });
    }
    let merged = merge_seam_fragments(instances, w);
    let mut kept = area_nms(merged, cfg.nms_threshold).context("stage decompose: NMS")?;
    let stack = if kept.is_empty() {
        onion_peel(
            &scene.panorama,
            &[],
            complete.as_ref().map(|p| p as &dyn world_kit::layering::CompletionProvider),
            sky_complete.as_ref().map(|p| p as &dyn world_kit::layering::CompletionProvider),
            scene.sky_mask.as_ref(),
        )
    } else {
        let k = cfg.sublayers.clamp(1, kept.len());
        let orders = assign_sublayers(&mut kept, &scene.base_depth, k)
            .context("stage decompose: sub-layer assignment")?;
        let mut groups: Vec<Vec<InstanceMask>> = vec![Vec::new(); k];
        for (inst, g) in kept.into_iter().zip(orders) {
            groups[g].push(inst);
        }
        onion_peel(
            &scene.panorama,
            &groups,
            complete.as_ref().map(|p| p as &dyn world_kit::layering::CompletionProvider),
            sky_complete.as_ref().map(|p| p as &dyn world_kit::layering::CompletionProvider),
            scene.sky_mask.as_ref(),
        )
    }
    .context("stage decompose: onion peel")?;

    // provider-decomposed layers reuse the base depth restricted to their
    // masks (per-layer monocular prediction is an external-model step)
    let mut out = Vec::new();
    let mut fg_index = 0usize;
    for layer in &stack.layers {
        let name = match layer.kind {
            LayerKind::Background => "background".to_string(),
            LayerKind::Sky => "sky".to_string(),
            LayerKind::Foreground => {
                let n = format!("fg_{fg_index:02}");
                fg_index += 1;
                n
            }
        };
        let depth = match layer.kind {
            LayerKind::Sky => None,
            _ => {
                let mut d = DepthMap::new_invalid(w, h);
                for y in 0..h {
                    for x in 0..w {
                        if layer.mask.is_on(x, y) {
                            if let Some(v) = scene.base_depth.get(x, y) {
                                d.set(x, y, v);
                            }
                        }
                    }
                }
                Some(d)
            }
        };
        out.push(StageLayer {
            kind: layer.kind,
            name,
            image: layer.image.clone(),
            mask: layer.mask.clone(),
            depth,
            completed_mask: layer.completed_mask.clone(),
            alignment: None,
        });
    }
    Ok(out)
}

fn align_layer(
    layer: &mut StageLayer,
    base: &DepthMap,
    cfg: &OutputConfig,
) -> Result<()> {
    let Some(depth) = layer.depth.take() else {
        return Ok(());
    };
    let overlap = overlap_mask(&depth, layer.completed_mask.as_ref(), base, cfg.align_feather)
        .with_context(|| format!("stage align: layer {}", layer.name))?;
    // identical maps (base-derived layers) shortcut to the identity
    let mut identical = true;
    let mut count = 0usize;
    for y in 0..depth.height {
        for x in 0..depth.width {
            if overlap.get(x, y) <= 0.0 {
                continue;
            }
            if let (Some(a), Some(b)) = (depth.get(x, y), base.get(x, y)) {
                count += 1;
                if (1.0 / a - 1.0 / b).abs() > 1e-12 {
                    identical = false;
                }
            }
        }
    }
    if identical && count >= 2 {
        layer.alignment = Some(AlignmentEntry {
            a: 1.0,
            b: 0.0,
            inlier_count: count,
            rms_residual: 0.0,
            trimmed_iterations: 0,
            invalidated_pixels: 0,
        });
        layer.depth = Some(depth);
        return Ok(());
    }
    let (transform, report): (AffineDepthTransform, AlignmentReport) =
        estimate_affine_alignment(&depth, base, &overlap)
            .with_context(|| format!("stage align: layer {}", layer.name))?;
    let (aligned, invalidated) = apply_affine(&depth, &transform);
    layer.alignment = Some(AlignmentEntry {
        a: transform.a,
        b: transform.b,
        inlier_count: report.inlier_count,
        rms_residual: report.rms_residual,
        trimmed_iterations: report.trimmed_iterations,
        invalidated_pixels: invalidated,
    });
    layer.depth = Some(aligned);
    Ok(())
}

pub fn run(args: &ReconstructArgs) -> Result<()> {
    let scene = load_scene(&args.manifest).context("stage load")?;
    let cfg = merged_config(&scene.manifest.output, args);
    run_loaded(scene, cfg, args)
}

fn run_loaded(scene: LoadedScene, cfg: OutputConfig, args: &ReconstructArgs) -> Result<()> {
    // gather layers: manifest order (foregrounds sorted by order, then
    // background, then sky) or the provider decomposition path
    let mut layers: Vec<StageLayer> = if scene.layers.is_empty() {
        decompose(&scene, &cfg)?
    } else {
        let mut sorted: Vec<&LoadedLayer> = scene.layers.iter().collect();
        let rank = |k: LayerKind| match k {
            LayerKind::Foreground => 0,
            LayerKind::Background => 1,
            LayerKind::Sky => 2,
        };
        sorted.sort_by_key(|l| rank(l.kind));
        sorted
            .into_iter()
            .map(|l| StageLayer {
                kind: l.kind,
                name: l.name.clone(),
                image: l.image.clone(),
                mask: l.mask.clone(),
                depth: l.depth.clone(),
                completed_mask: l.completed_mask.clone(),
                alignment: None,
            })
            .collect()
    };

    // alignment per layer against the base depth
    let base = &scene.base_depth;
    layers
        .par_iter_mut()
        .try_for_each(|layer| -> Result<()> {
            if layer.kind != LayerKind::Sky {
                align_layer(layer, base, &cfg)?;
            }
            Ok(())
        })?;

    // adaptive depth compression on the background, then polar smoothing
    for layer in layers.iter_mut() {
        if layer.kind == LayerKind::Background {
            let d = layer
                .depth
                .take()
                .with_context(|| format!("stage compress: layer {} has no depth", layer.name))?;
            layer.depth = Some(
                adaptive_compress(&d, cfg.compress_percentile, cfg.compress_slope)
                    .with_context(|| format!("stage compress: layer {}", layer.name))?,
            );
        }
    }
    for layer in layers.iter_mut() {
        if let Some(d) = layer.depth.take() {
            layer.depth = Some(
                polar_smooth(&d, cfg.polar_threshold_deg)
                    .with_context(|| format!("stage polar: layer {}", layer.name))?,
            );
        }
    }

    // sky radius from all aligned depths
    let depth_refs: Vec<&DepthMap> = layers.iter().filter_map(|l| l.depth.as_ref()).collect();
    let sky_layer_exists = layers.iter().any(|l| l.kind == LayerKind::Sky);
    let sky_radius = if sky_layer_exists {
        Some(sky_depth(&depth_refs, cfg.kappa).context("stage sky")?)
    } else {
        None
    };

    // warp all layers (and measure the stride-1 raw baseline sequentially
    // to keep peak memory down)
    let opts = WarpOptions {
        stride: cfg.stride,
        tear_ratio: cfg.tear_ratio,
        feather: cfg.feather,
    };
    let mut raw_bytes: BTreeMap<String, usize> = BTreeMap::new();
    for layer in &layers {
        let (v, t) = match layer.kind {
            LayerKind::Sky => {
                let radius = sky_radius.unwrap_or(1.0);
                let mesh = build_sky_dome(&layer.image, radius, 1)
                    .with_context(|| format!("stage warp: layer {}", layer.name))?;
                (mesh.vertex_count(), mesh.triangle_count())
            }
            _ => {
                let depth = layer
                    .depth
                    .as_ref()
                    .with_context(|| format!("stage warp: layer {} has no depth", layer.name))?;
                let mesh = warp_layer(
                    &layer.image,
                    depth,
                    &layer.mask,
                    &WarpOptions { stride: 1, ..opts },
                    0,
                    &layer.name,
                )
                .with_context(|| format!("stage warp: layer {}", layer.name))?;
                (mesh.vertex_count(), mesh.triangle_count())
            }
        };
        raw_bytes.insert(layer.name.clone(), ply_byte_size(v, t));
    }

    let meshes: Vec<(String, LayerKind, GridMesh)> = layers
        .par_iter()
        .enumerate()
        .map(|(i, layer)| -> Result<(String, LayerKind, GridMesh)> {
            let mesh = match layer.kind {
                LayerKind::Sky => build_sky_dome(
                    &layer.image,
                    sky_radius.unwrap_or(1.0),
                    (cfg.stride * 2).max(1),
                )
                .with_context(|| format!("stage warp: layer {}", layer.name))?,
                _ => {
                    let depth = layer
                        .depth
                        .as_ref()
                        .with_context(|| format!("stage warp: layer {} has no depth", layer.name))?;
                    warp_layer(&layer.image, depth, &layer.mask, &opts, i as u32, &layer.name)
                        .with_context(|| format!("stage warp: layer {}", layer.name))?
                }
            };
            Ok((layer.name.clone(), layer.kind, mesh))
        })
        .collect::<Result<Vec<_>>>()?;

    // assembly validates depth ordering and the sky radius invariant
    let fg_bg: Vec<GridMesh> = meshes
        .iter()
        .filter(|(_, k, _)| *k != LayerKind::Sky)
        .map(|(_, _, m)| m.clone())
        .collect();
    let sky_mesh = meshes
        .iter()
        .find(|(_, k, _)| *k == LayerKind::Sky)
        .map(|(_, _, m)| m.clone());
    let (world, mut warnings) = assemble_world(fg_bg, sky_mesh, Vec::new())
        .context("stage assemble")?;

    // decimation per layer
    let preserve = PreserveFlags::default();
    let decimated: Vec<GridMesh> = world
        .layers
        .par_iter()
        .map(|m| -> Result<GridMesh> {
            let (out, warn) = decimate_qem(m, cfg.decimate_ratio, preserve)
                .with_context(|| format!("stage decimate: layer {}", m.texture_ref))?;
            let _ = warn;
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let decimated_sky = world
        .sky
        .as_ref()
        .map(|m| -> Result<GridMesh> {
            let (out, _) = decimate_qem(m, cfg.decimate_ratio, preserve)
                .with_context(|| "stage decimate: sky")?;
            Ok(out)
        })
        .transpose()?;

    let final_world = world_kit::warp::LayeredWorldMesh {
        layers: decimated,
        sky: decimated_sky,
        placements: world.placements.clone(),
    };

    // encode, export, report
    let mut layer_reports = Vec::new();
    let mut blobs: Vec<(String, Vec<u8>)> = Vec::new();
    let mut totals = Totals {
        raw_ply_bytes: 0,
        decimated_ply_bytes: 0,
        lwc_bytes: 0,
        glb_bytes: 0,
        offline_reduction: 0.0,
        codec_reduction: 0.0,
    };
    let mut all_meshes: Vec<&GridMesh> = final_world.layers.iter().collect();
    if let Some(sky) = &final_world.sky {
        all_meshes.push(sky);
    }
    for mesh in &all_meshes {
        let blob = encode_compact(mesh, cfg.pos_bits, cfg.uv_bits)
            .with_context(|| format!("stage encode: layer {}", mesh.texture_ref))?;
        let dec_ply = export_ply(mesh).len();
        let raw = raw_bytes.get(&mesh.texture_ref).copied().unwrap_or(0);
        let source = meshes
            .iter()
            .find(|(n, _, _)| *n == mesh.texture_ref)
            .map(|(_, _, m)| m);
        let layer = layers.iter().find(|l| l.name == mesh.texture_ref);
        layer_reports.push(LayerReport {
            name: mesh.texture_ref.clone(),
            kind: match layer.map(|l| l.kind) {
                Some(LayerKind::Sky) => "sky",
                Some(LayerKind::Background) => "background",
                _ => "foreground",
            }
            .to_string(),
            alignment: layer.and_then(|l| l.alignment.as_ref()).map(|a| AlignmentEntry {
                a: a.a,
                b: a.b,
                inlier_count: a.inlier_count,
                rms_residual: a.rms_residual,
                trimmed_iterations: a.trimmed_iterations,
                invalidated_pixels: a.invalidated_pixels,
            }),
            vertices: source.map(|m| m.vertex_count()).unwrap_or(0),
            triangles: source.map(|m| m.triangle_count()).unwrap_or(0),
            vertices_decimated: mesh.vertex_count(),
            triangles_decimated: mesh.triangle_count(),
            raw_ply_bytes: raw,
            decimated_ply_bytes: dec_ply,
            lwc_bytes: blob.len(),
            offline_reduction: if raw > 0 { 1.0 - dec_ply as f64 / raw as f64 } else { 0.0 },
            codec_reduction: if raw > 0 { 1.0 - blob.len() as f64 / raw as f64 } else { 0.0 },
        });
        totals.raw_ply_bytes += raw;
        totals.decimated_ply_bytes += dec_ply;
        totals.lwc_bytes += blob.len();
        blobs.push((mesh.texture_ref.clone(), blob.bytes));
    }
    if totals.raw_ply_bytes > 0 {
        totals.offline_reduction = 1.0 - totals.decimated_ply_bytes as f64 / totals.raw_ply_bytes as f64;
        totals.codec_reduction = 1.0 - totals.lwc_bytes as f64 / totals.raw_ply_bytes as f64;
    }

    let mut textures: BTreeMap<String, &ErpImage> = BTreeMap::new();
    for layer in &layers {
        textures.insert(layer.name.clone(), &layer.image);
    }
    let glb = export_gltf(&final_world, &textures).context("stage export: glb")?;
    totals.glb_bytes = glb.len();

    warnings.extend(
        all_meshes
            .iter()
            .filter(|m| m.is_empty())
            .map(|m| format!("layer {} decimated to an empty mesh", m.texture_ref)),
    );

    let report = Report {
        config: cfg.clone(),
        sky_radius,
        seam_score: seam_score(&scene.panorama),
        layers: layer_reports,
        warnings,
        totals,
    };

    // stage to a sibling directory, then rename into place
    let staging = staging_dir(&args.out)?;
    let write_all = || -> Result<()> {
        std::fs::create_dir_all(staging.join("layers"))?;
        std::fs::create_dir_all(staging.join("textures"))?;
        let mut world_layers = Vec::new();
        for (name, bytes) in &blobs {
            let lwc_rel = format!("layers/{name}.lwc");
            io::write_bytes(staging.join(&lwc_rel), bytes)?;
            let tex_rel = format!("textures/{name}.png");
            let layer = layers.iter().find(|l| l.name == *name).unwrap();
            io::save_color_png(staging.join(&tex_rel), layer.image.raster())?;
            world_layers.push(WorldLayerJson {
                name: name.clone(),
                lwc: lwc_rel,
                texture: tex_rel,
            });
        }
        let sky_entry = if final_world.sky.is_some() {
            let pos = world_layers
                .iter()
                .position(|l| l.name == "sky")
                .context("sky layer missing from outputs")?;
            Some(world_layers.remove(pos))
        } else {
            None
        };
        let world_json = WorldJson {
            layers: world_layers,
            sky: sky_entry,
            sky_radius,
            placements: final_world.placements.clone(),
        };
        std::fs::write(
            staging.join("world.json"),
            serde_json::to_string_pretty(&world_json)?,
        )?;
        io::write_bytes(staging.join("world.glb"), &glb)?;
        std::fs::write(
            staging.join("report.json"),
            serde_json::to_string_pretty(&report)?,
        )?;
        Ok(())
    };
    match write_all() {
        Ok(()) => {}
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            return Err(e);
        }
    }
    if args.out.exists() {
        if args.force {
            std::fs::remove_dir_all(&args.out)
                .with_context(|| format!("removing existing {}", args.out.display()))?;
        } else {
            let _ = std::fs::remove_dir_all(&staging);
            bail!("output directory {} already exists (use --force)", args.out.display());
        }
    }
    std::fs::rename(&staging, &args.out)
        .with_context(|| format!("moving staging into {}", args.out.display()))?;
    eprintln!(
        "reconstructed {} layers -> {} (raw {} B, lwc {} B, glb {} B)",
        layers.len(),
        args.out.display(),
        report.totals.raw_ply_bytes,
        report.totals.lwc_bytes,
        report.totals.glb_bytes,
    );
    Ok(())
}

fn staging_dir(out: &Path) -> Result<PathBuf> {
    let name = out
        .file_name()
        .context("output path has no final component")?
        .to_string_lossy();
    let staging = out.with_file_name(format!(".{name}.staging"));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    Ok(staging)
}
