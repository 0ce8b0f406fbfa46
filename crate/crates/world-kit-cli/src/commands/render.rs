//! `render-views`: evaluation renders from a panorama (gnomonic
//! resampling) or a reconstructed world directory (software rasterizer).

use crate::camera_io::{preset, read_camera_json};
use crate::world_dir::{is_world_dir, load_world};
use anyhow::{bail, Context, Result};
use std::collections::BTreeMap;
use std::path::PathBuf;
use world_kit::erp::erp_to_pinhole;
use world_kit::io;
use world_kit::raster::render_world;

pub struct RenderArgs {
    pub input: PathBuf,
    pub out: PathBuf,
    pub preset: String,
    pub pose: Option<PathBuf>,
}

pub fn run(args: &RenderArgs) -> Result<()> {
    let views = preset(&args.preset)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    if is_world_dir(&args.input) {
        let (world, textures) = load_world(&args.input)?;
        let texture_refs: BTreeMap<String, &world_kit::erp::ErpImage> =
            textures.iter().map(|(k, v)| (k.clone(), v)).collect();
        let base_pose = args.pose.as_deref().map(read_camera_json).transpose()?;
        for az in &views.azimuths_deg {
            let mut cam = views.camera(*az);
            if let Some(pose) = &base_pose {
                cam.translation = pose.translation;
            }
            let frame = render_world(&world, &texture_refs, &cam, views.resolution, views.resolution)
                .with_context(|| format!("rendering azimuth {az}"))?;
            io::save_color_png(args.out.join(format!("view_az{:03}.png", *az as i64)), &frame)?;
        }
    } else if args.input.is_file() {
        let pano = io::load_erp_png(&args.input)
            .with_context(|| format!("loading panorama {}", args.input.display()))?;
        for az in &views.azimuths_deg {
            let cam = views.camera(*az);
            let frame = erp_to_pinhole(&pano, &cam, views.resolution, views.resolution)?;
            io::save_color_png(args.out.join(format!("view_az{:03}.png", *az as i64)), &frame)?;
        }
    } else {
        bail!(
            "{} is neither a panorama file nor a world directory (world.json missing)",
            args.input.display()
        );
    }
    eprintln!(
        "rendered {} views ({}, {}x{}) -> {}",
        views.azimuths_deg.len(),
        views.name,
        views.resolution,
        views.resolution,
        args.out.display()
    );
    Ok(())
}
