//! Per-stage debugging subcommands: project-pinhole, align-depth, warp,
//! optimize and metrics.

use crate::camera_io::read_camera_json;
use anyhow::{bail, Context, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use world_kit::depth::{apply_affine, estimate_affine_alignment, overlap_mask, DepthMap};
use world_kit::erp::{pinhole_to_erp, ErpImage, Raster, ValidityMask};
use world_kit::io;
use world_kit::meshopt::{
    decimate_qem, decode_compact, encode_compact, export_ply, import_ply, CompactMeshBlob,
    PreserveFlags,
};
use world_kit::metrics::{psnr, seam_score, PSNR_CAP};
use world_kit::warp::{warp_layer, GridMesh, WarpOptions};

fn read_depth_pfm(path: &Path) -> Result<DepthMap> {
    let (w, h, ch, data) = io::read_pfm(path)?;
    if ch != 1 {
        bail!("{}: expected single-channel PFM", path.display());
    }
    let mut d = DepthMap::new_invalid(w, h);
    for y in 0..h {
        for x in 0..w {
            let v = data[y * w + x] as f64;
            if v.is_finite() && v > 0.0 {
                d.set(x, y, v);
            }
        }
    }
    Ok(d)
}

fn write_depth_pfm(path: &Path, d: &DepthMap) -> Result<()> {
    let data: Vec<f32> = (0..d.height)
        .flat_map(|y| (0..d.width).map(move |x| (y, x)))
        .map(|(y, x)| d.get(x, y).unwrap_or(0.0) as f32)
        .collect();
    io::write_pfm(path, d.width, d.height, 1, &data)?;
    Ok(())
}

pub struct ProjectPinholeArgs {
    pub image: PathBuf,
    pub camera: PathBuf,
    pub width: usize,
    pub out: PathBuf,
}

pub fn project_pinhole(args: &ProjectPinholeArgs) -> Result<()> {
    let src = io::load_color_png(&args.image)?;
    let cam = read_camera_json(&args.camera)?;
    if args.width % 2 != 0 {
        bail!("panorama width must be even");
    }
    let (pano, validity) = pinhole_to_erp(&src, &cam, args.width, args.width / 2)?;
    std::fs::create_dir_all(&args.out)?;
    io::save_color_png(args.out.join("pano.png"), pano.raster())?;
    io::save_mask_png(args.out.join("validity.png"), &validity)?;
    eprintln!(
        "projected {} -> {} ({} valid pixels)",
        args.image.display(),
        args.out.display(),
        validity.count_on()
    );
    Ok(())
}

pub struct AlignDepthArgs {
    pub layer_depth: PathBuf,
    pub base_depth: PathBuf,
    pub completed: Option<PathBuf>,
    pub feather: f64,
    pub out: PathBuf,
}

pub fn align_depth(args: &AlignDepthArgs) -> Result<()> {
    let layer = read_depth_pfm(&args.layer_depth)?;
    let base = read_depth_pfm(&args.base_depth)?;
    let completed = args.completed.as_deref().map(io::load_mask_png).transpose()?;
    let overlap = overlap_mask(&layer, completed.as_ref(), &base, args.feather)?;
    let (transform, report) = estimate_affine_alignment(&layer, &base, &overlap)?;
    let (aligned, invalidated) = apply_affine(&layer, &transform);
    std::fs::create_dir_all(&args.out)?;
    write_depth_pfm(&args.out.join("aligned.pfm"), &aligned)?;
    #[derive(Serialize)]
    struct AlignmentJson {
        a: f64,
        b: f64,
        inlier_count: usize,
        rms_residual: f64,
        trimmed_iterations: usize,
        invalidated_pixels: usize,
    }
    let doc = AlignmentJson {
        a: transform.a,
        b: transform.b,
        inlier_count: report.inlier_count,
        rms_residual: report.rms_residual,
        trimmed_iterations: report.trimmed_iterations,
        invalidated_pixels: invalidated,
    };
    std::fs::write(
        args.out.join("alignment.json"),
        serde_json::to_string_pretty(&doc)?,
    )?;
    eprintln!(
        "aligned: a={:.6} b={:.6} inliers={} rms={:.3e}",
        transform.a, transform.b, report.inlier_count, report.rms_residual
    );
    Ok(())
}

pub struct WarpArgs {
    pub image: PathBuf,
    pub depth: PathBuf,
    pub mask: Option<PathBuf>,
    pub stride: usize,
    pub tear_ratio: f64,
    pub feather: f64,
    pub pos_bits: u8,
    pub uv_bits: u8,
    pub out: PathBuf,
}

fn write_mesh(path: &Path, mesh: &GridMesh, pos_bits: u8, uv_bits: u8) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => io::write_bytes(path, &export_ply(mesh))?,
        Some("lwc") => {
            let blob = encode_compact(mesh, pos_bits, uv_bits)?;
            io::write_bytes(path, &blob.bytes)?;
        }
        other => bail!("unsupported mesh extension {other:?} (use .ply or .lwc)"),
    }
    Ok(())
}

fn read_mesh(path: &Path) -> Result<GridMesh> {
    let bytes = std::fs::read(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("ply") => Ok(import_ply(&bytes)?),
        Some("lwc") => Ok(decode_compact(&CompactMeshBlob { bytes })?),
        other => bail!("unsupported mesh extension {other:?} (use .ply or .lwc)"),
    }
}

pub fn warp(args: &WarpArgs) -> Result<()> {
    let image = io::load_erp_png(&args.image)?;
    let depth = read_depth_pfm(&args.depth)?;
    let mask = match &args.mask {
        Some(p) => io::load_mask_png(p)?,
        None => ValidityMask::new(image.width(), image.height(), 1.0),
    };
    let opts = WarpOptions {
        stride: args.stride,
        tear_ratio: args.tear_ratio,
        feather: args.feather,
    };
    let mesh = warp_layer(&image, &depth, &mask, &opts, 0, "layer")?;
    write_mesh(&args.out, &mesh, args.pos_bits, args.uv_bits)?;
    eprintln!(
        "warped {} vertices, {} triangles -> {}",
        mesh.vertex_count(),
        mesh.triangle_count(),
        args.out.display()
    );
    Ok(())
}

pub struct OptimizeArgs {
    pub input: PathBuf,
    pub ratio: f64,
    pub keep_seam: bool,
    pub keep_boundary: bool,
    pub pos_bits: u8,
    pub uv_bits: u8,
    pub out: PathBuf,
}

pub fn optimize(args: &OptimizeArgs) -> Result<()> {
    let mesh = read_mesh(&args.input)?;
    let before = export_ply(&mesh).len();
    let (out, warnings) = decimate_qem(
        &mesh,
        args.ratio,
        PreserveFlags {
            seam: args.keep_seam,
            boundary: args.keep_boundary,
        },
    )?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    write_mesh(&args.out, &out, args.pos_bits, args.uv_bits)?;
    let after = std::fs::metadata(&args.out)?.len() as usize;
    eprintln!(
        "optimized {} -> {} triangles; {} -> {} bytes (reduction {:.1}%)",
        mesh.triangle_count(),
        out.triangle_count(),
        before,
        after,
        100.0 * (1.0 - after as f64 / before as f64)
    );
    Ok(())
}

pub struct MetricsArgs {
    pub rendered: PathBuf,
    pub reference: PathBuf,
    pub out: PathBuf,
}

/// Loads a PNG without any transfer curve: metrics compare the stored
/// (sRGB-encoded) values normalized to [0,1].
fn load_png_raw(path: &Path) -> Result<Raster> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Raster::from_fn(w, h, 3, |x, y, c| {
        img.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
    }))
}

pub fn metrics(args: &MetricsArgs) -> Result<()> {
    let mut names: Vec<String> = std::fs::read_dir(&args.rendered)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "png"))
        .map(|e| e.file_name().to_string_lossy().to_string())
        .collect();
    names.sort();
    if names.is_empty() {
        bail!("no PNG files in {}", args.rendered.display());
    }
    #[derive(Serialize)]
    struct ViewMetric {
        name: String,
        psnr_db: f64,
        seam_score: Option<f32>,
    }
    #[derive(Serialize)]
    struct MetricsJson {
        views: Vec<ViewMetric>,
        mean_psnr_db: f64,
        psnr_cap_db: f64,
    }
    let mut views = Vec::new();
    let mut sum = 0.0;
    for name in &names {
        let rendered = load_png_raw(&args.rendered.join(name))?;
        let reference_path = args.reference.join(name);
        if !reference_path.exists() {
            bail!("reference set is missing {name}");
        }
        let reference = load_png_raw(&reference_path)?;
        let value = psnr(&rendered, &reference)
            .with_context(|| format!("comparing {name}"))?;
        sum += value;
        let seam = if rendered.width() == 2 * rendered.height() {
            ErpImage::new(rendered.clone()).ok().map(|e| seam_score(&e))
        } else {
            None
        };
        views.push(ViewMetric {
            name: name.clone(),
            psnr_db: value,
            seam_score: seam,
        });
    }
    let doc = MetricsJson {
        mean_psnr_db: sum / views.len() as f64,
        psnr_cap_db: PSNR_CAP,
        views,
    };
    std::fs::write(&args.out, serde_json::to_string_pretty(&doc)?)?;
    eprintln!("metrics for {} views -> {}", names.len(), args.out.display());
    Ok(())
}
