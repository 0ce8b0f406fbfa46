//! `cache`: file-level wrappers around the world-cache operations. Caches
//! live as binary PLY snapshots; RGB-D frames are a color PNG plus a depth
//! PFM (depth <= 0 marks invalid pixels); trajectories are JSON pose lists.

use crate::camera_io::read_camera_json;
use anyhow::{bail, Context, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use world_kit::cache::{
    add_frame, cull, init_cache, project, read_cache_ply, read_trajectory_json, smooth_sample,
    write_cache_ply, GuidanceFrame,
};
use world_kit::erp::ValidityMask;
use world_kit::io;

const INDEX_CELL: f64 = 0.05;

fn read_frame(color: &Path, depth: &Path, camera: &Path) -> Result<GuidanceFrame> {
    let color_raster = io::load_color_png(color)?;
    let (w, h) = (color_raster.width(), color_raster.height());
    let (dw, dh, ch, data) = io::read_pfm(depth)?;
    if ch != 1 || dw != w || dh != h {
        bail!(
            "depth {} is {dw}x{dh}x{ch}, expected {w}x{h}x1",
            depth.display()
        );
    }
    let cam = read_camera_json(camera)?;
    let mut depth_values = vec![0.0f64; w * h];
    let mut validity = ValidityMask::new(w, h, 0.0);
    for (i, v) in data.iter().enumerate() {
        if v.is_finite() && *v > 0.0 {
            depth_values[i] = *v as f64;
            validity.values[i] = 1.0;
        }
    }
    Ok(GuidanceFrame {
        color: color_raster,
        depth: depth_values,
        validity,
        camera: cam,
    })
}

pub struct CacheInitArgs {
    pub color: PathBuf,
    pub depth: PathBuf,
    pub camera: PathBuf,
    pub out: PathBuf,
}

pub fn cache_init(args: &CacheInitArgs) -> Result<()> {
    let frame = read_frame(&args.color, &args.depth, &args.camera)?;
    let cache = init_cache(&frame, INDEX_CELL)?;
    if cache.is_empty() {
        eprintln!("warning: frame has no valid pixels; cache is empty");
    }
    io::write_bytes(&args.out, &write_cache_ply(&cache))?;
    eprintln!("cached {} points -> {}", cache.len(), args.out.display());
    Ok(())
}

pub struct CacheAddArgs {
    pub cache: PathBuf,
    pub color: PathBuf,
    pub depth: PathBuf,
    pub camera: PathBuf,
    pub frame_id: u32,
    pub out: PathBuf,
}

pub fn cache_add(args: &CacheAddArgs) -> Result<()> {
    let bytes = std::fs::read(&args.cache)?;
    let mut cache = read_cache_ply(&bytes, INDEX_CELL)?;
    let frame = read_frame(&args.color, &args.depth, &args.camera)?;
    add_frame(&mut cache, &frame, args.frame_id)?;
    io::write_bytes(&args.out, &write_cache_ply(&cache))?;
    eprintln!("cache now holds {} points -> {}", cache.len(), args.out.display());
    Ok(())
}

pub struct CacheCullArgs {
    pub cache: PathBuf,
    pub voxel: f64,
    pub out: PathBuf,
}

pub fn cache_cull(args: &CacheCullArgs) -> Result<()> {
    let bytes = std::fs::read(&args.cache)?;
    let cache = read_cache_ply(&bytes, INDEX_CELL)?;
    let culled = cull(&cache, args.voxel)?;
    io::write_bytes(&args.out, &write_cache_ply(&culled))?;
    eprintln!(
        "culled {} -> {} points (voxel {}) -> {}",
        cache.len(),
        culled.len(),
        args.voxel,
        args.out.display()
    );
    Ok(())
}

pub struct CacheProjectArgs {
    pub cache: PathBuf,
    pub camera: PathBuf,
    pub width: usize,
    pub height: usize,
    pub splat_radius: usize,
    pub out: PathBuf,
}

pub fn cache_project(args: &CacheProjectArgs) -> Result<()> {
    let bytes = std::fs::read(&args.cache)?;
    let cache = read_cache_ply(&bytes, INDEX_CELL)?;
    let cam = read_camera_json(&args.camera)?;
    let frame = project(&cache, &cam, args.width, args.height, args.splat_radius)?;
    std::fs::create_dir_all(&args.out)?;
    io::save_color_png(args.out.join("color.png"), &frame.color)?;
    let depth_data: Vec<f32> = frame.depth.iter().map(|d| *d as f32).collect();
    io::write_pfm(args.out.join("depth.pfm"), args.width, args.height, 1, &depth_data)?;
    io::save_mask_png(args.out.join("validity.png"), &frame.validity)?;
    eprintln!(
        "projected {} points, {} valid pixels -> {}",
        cache.len(),
        frame.validity.count_on(),
        args.out.display()
    );
    Ok(())
}

pub struct CacheSampleArgs {
    pub trajectory: PathBuf,
    pub clip_len: usize,
    pub overlap: usize,
    pub out: PathBuf,
}

pub fn cache_sample(args: &CacheSampleArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.trajectory)
        .with_context(|| format!("reading {}", args.trajectory.display()))?;
    let traj = read_trajectory_json(&text)
        .with_context(|| format!("parsing {}", args.trajectory.display()))?;
    let clips = smooth_sample(traj.len(), args.clip_len, args.overlap)?;
    #[derive(Serialize)]
    struct ClipJson {
        start: usize,
        end: usize,
        len: usize,
    }
    let doc: Vec<ClipJson> = clips
        .iter()
        .map(|c| ClipJson {
            start: c.start,
            end: c.end(),
            len: c.len,
        })
        .collect();
    std::fs::write(&args.out, serde_json::to_string_pretty(&doc)?)?;
    eprintln!("{} clips over {} frames -> {}", clips.len(), traj.len(), args.out.display());
    Ok(())
}
