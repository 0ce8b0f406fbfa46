//! `fixture`: writes the synthetic test scenes (sphere, room) to disk as a
//! ready-to-run manifest plus all referenced rasters.

use crate::manifest::{LayerEntry, OutputConfig, SceneManifest};
use anyhow::{bail, Result};
use std::path::{Path, PathBuf};
use world_kit::depth::DepthMap;
use world_kit::fixture::{perturb_disparity, room_fixture, sphere_fixture};
use world_kit::io;
use world_kit::layering::LayerKind;

pub struct FixtureArgs {
    pub kind: String,
    pub width: usize,
    pub out: PathBuf,
}

fn write_depth(path: &Path, d: &DepthMap) -> Result<()> {
    let data: Vec<f32> = (0..d.height)
        .flat_map(|y| (0..d.width).map(move |x| (y, x)))
        .map(|(y, x)| d.get(x, y).unwrap_or(0.0) as f32)
        .collect();
    io::write_pfm(path, d.width, d.height, 1, &data)?;
    Ok(())
}

pub fn run(args: &FixtureArgs) -> Result<()> {
    if args.width % 4 != 0 || args.width < 64 {
        bail!("fixture width must be a multiple of 4, at least 64");
    }
    std::fs::create_dir_all(&args.out)?;
    match args.kind.as_str() {
        "sphere" => sphere(args),
        "room" => room(args),
        other => bail!("unknown fixture {other:?}; available: sphere, room"),
    }
}

fn sphere(args: &FixtureArgs) -> Result<()> {
    let f = sphere_fixture(args.width, 2.0)?;
    let dir = &args.out;
    io::save_color_png(dir.join("pano.png"), f.pano.raster())?;
    write_depth(&dir.join("base.pfm"), &f.depth)?;
    let full = world_kit::erp::ValidityMask::new(args.width, args.width / 2, 1.0);
    io::save_mask_png(dir.join("full_mask.png"), &full)?;
    let manifest = SceneManifest {
        panorama: "pano.png".into(),
        base_depth: "base.pfm".into(),
        layers: vec![LayerEntry {
            kind: LayerKind::Background,
            order: 0,
            image: "pano.png".into(),
            mask: "full_mask.png".into(),
            depth: Some("base.pfm".into()),
            completed_mask: None,
        }],
        sky_mask: None,
        providers: None,
        output: OutputConfig::default(),
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    eprintln!("sphere fixture ({}x{}) -> {}", args.width, args.width / 2, dir.display());
    Ok(())
}

fn room(args: &FixtureArgs) -> Result<()> {
    let f = room_fixture(args.width)?;
    let dir = &args.out;
    io::save_color_png(dir.join("pano.png"), f.pano.raster())?;
    write_depth(&dir.join("base.pfm"), &f.base_depth)?;
    io::save_mask_png(dir.join("sky_mask.png"), &f.sky_mask)?;

    // foreground (boxes): the layer depth is the true depth pushed through
    // a synthetic affine disparity model, so alignment has work to do
    io::save_color_png(dir.join("fg_00.png"), f.pano.raster())?;
    io::save_mask_png(dir.join("fg_00_mask.png"), &f.fg_mask)?;
    write_depth(&dir.join("fg_00.pfm"), &perturb_disparity(&f.fg_depth, 0.8, 0.01))?;

    io::save_color_png(dir.join("background.png"), f.bg_image.raster())?;
    io::save_mask_png(dir.join("background_mask.png"), &f.bg_mask)?;
    write_depth(&dir.join("background.pfm"), &perturb_disparity(&f.bg_depth, 1.25, 0.005))?;
    io::save_mask_png(dir.join("background_completed.png"), &f.fg_mask)?;

    io::save_color_png(dir.join("sky.png"), f.sky_image.raster())?;
    let full = world_kit::erp::ValidityMask::new(args.width, args.width / 2, 1.0);
    io::save_mask_png(dir.join("sky_full.png"), &full)?;

    let manifest = SceneManifest {
        panorama: "pano.png".into(),
        base_depth: "base.pfm".into(),
        layers: vec![
            LayerEntry {
                kind: LayerKind::Foreground,
                order: 0,
                image: "fg_00.png".into(),
                mask: "fg_00_mask.png".into(),
                depth: Some("fg_00.pfm".into()),
                completed_mask: None,
            },
            LayerEntry {
                kind: LayerKind::Background,
                order: 0,
                image: "background.png".into(),
                mask: "background_mask.png".into(),
                depth: Some("background.pfm".into()),
                completed_mask: Some("background_completed.png".into()),
            },
            LayerEntry {
                kind: LayerKind::Sky,
                order: 0,
                image: "sky.png".into(),
                mask: "sky_full.png".into(),
                depth: None,
                completed_mask: None,
            },
        ],
        sky_mask: Some("sky_mask.png".into()),
        providers: None,
        output: OutputConfig::default(),
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    eprintln!("room fixture ({}x{}) -> {}", args.width, args.width / 2, dir.display());
    Ok(())
}
