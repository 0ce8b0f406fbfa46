//! Scene manifest: the JSON input driving `reconstruct`.
//!
//! A manifest references the panorama, the base depth map, and either a
//! pre-decomposed layer list (one background, optional sky, any number of
//! foregrounds) or detection/segmentation/completion provider commands for
//! the decomposition path. All paths are relative to the manifest file.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use world_kit::depth::DepthMap;
use world_kit::erp::{ErpImage, ValidityMask};
use world_kit::io;
use world_kit::layering::LayerKind;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneManifest {
    pub panorama: String,
    pub base_depth: String,
    #[serde(default)]
    pub layers: Vec<LayerEntry>,
    #[serde(default)]
    pub sky_mask: Option<String>,
    #[serde(default)]
    pub providers: Option<ProvidersConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerEntry {
    pub kind: LayerKind,
    #[serde(default)]
    pub order: usize,
    pub image: String,
    pub mask: String,
    #[serde(default)]
    pub depth: Option<String>,
    #[serde(default)]
    pub completed_mask: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProvidersConfig {
    #[serde(default)]
    pub detect: Option<Vec<String>>,
    #[serde(default)]
    pub segment: Option<Vec<String>>,
    #[serde(default)]
    pub complete: Option<Vec<String>>,
    #[serde(default)]
    pub sky_complete: Option<Vec<String>>,
    #[serde(default)]
    pub labels: Vec<String>,
    #[serde(default)]
    pub workspace: Option<String>,
    #[serde(default)]
    pub timeout_seconds: Option<u64>,
}

/// Pipeline knobs; command-line flags override manifest values, which
/// override these defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub stride: usize,
    pub tear_ratio: f64,
    pub feather: f64,
    pub kappa: f64,
    pub polar_threshold_deg: f64,
    pub decimate_ratio: f64,
    pub pos_bits: u8,
    pub uv_bits: u8,
    pub compress_percentile: f64,
    pub compress_slope: f64,
    pub align_feather: f64,
    pub nms_threshold: f64,
    pub detect_pad_ratio: f64,
    pub sublayers: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            stride: 2,
            tear_ratio: 1.3,
            feather: 2.0,
            kappa: 1.05,
            polar_threshold_deg: 75.0,
            decimate_ratio: 0.2,
            pos_bits: 14,
            uv_bits: 12,
            compress_percentile: 99.0,
            compress_slope: 1.0,
            align_feather: 2.0,
            nms_threshold: 0.5,
            detect_pad_ratio: 0.125,
            sublayers: 2,
        }
    }
}

/// A loaded layer with every raster pulled into memory and validated.
pub struct LoadedLayer {
    pub kind: LayerKind,
    pub name: String,
    pub image: ErpImage,
    pub mask: ValidityMask,
    pub depth: Option<DepthMap>,
    pub completed_mask: Option<ValidityMask>,
}

pub struct LoadedScene {
    pub panorama: ErpImage,
    pub base_depth: DepthMap,
    pub layers: Vec<LoadedLayer>,
    pub sky_mask: Option<ValidityMask>,
    pub manifest: SceneManifest,
    pub root: PathBuf,
}

pub fn read_manifest(path: &Path) -> Result<SceneManifest> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading manifest {}", path.display()))?;
    let manifest: SceneManifest = serde_json::from_str(&text)
        .with_context(|| format!("parsing manifest {}", path.display()))?;
    Ok(manifest)
}

fn load_depth(path: &Path, w: usize, h: usize) -> Result<DepthMap> {
    let (dw, dh, ch, data) = io::read_pfm(path)?;
    if ch != 1 {
        bail!("{}: depth PFM must be single channel", path.display());
    }
    if dw != w || dh != h {
        bail!(
            "{}: depth is {dw}x{dh}, panorama is {w}x{h}",
            path.display()
        );
    }
    let mut depth = DepthMap::new_invalid(w, h);
    for y in 0..h {
        for x in 0..w {
            let v = data[y * w + x] as f64;
            if v.is_finite() && v > 0.0 {
                depth.set(x, y, v);
            }
        }
    }
    Ok(depth)
}

/// Loads and validates everything the manifest references.
pub fn load_scene(manifest_path: &Path) -> Result<LoadedScene> {
    let manifest = read_manifest(manifest_path)?;
    let root = manifest_path
        .parent()
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let resolve = |rel: &str| root.join(rel);

    let panorama = io::load_erp_png(resolve(&manifest.panorama))
        .with_context(|| format!("loading panorama {}", manifest.panorama))?;
    let (w, h) = (panorama.width(), panorama.height());
    let base_depth = load_depth(&resolve(&manifest.base_depth), w, h)
        .with_context(|| format!("loading base depth {}", manifest.base_depth))?;

    let backgrounds = manifest
        .layers
        .iter()
        .filter(|l| l.kind == LayerKind::Background)
        .count();
    if !manifest.layers.is_empty() && backgrounds != 1 {
        bail!("manifest must contain exactly one background layer, found {backgrounds}");
    }

    let mut layers = Vec::new();
    let mut fg_index = 0usize;
    for entry in &manifest.layers {
        let name = match entry.kind {
            LayerKind::Background => "background".to_string(),
            LayerKind::Sky => "sky".to_string(),
            LayerKind::Foreground => {
                let n = format!("fg_{fg_index:02}");
                fg_index += 1;
                n
            }
        };
        let image = io::load_erp_png(resolve(&entry.image))
            .with_context(|| format!("layer {name}: loading image {}", entry.image))?;
        if image.width() != w || image.height() != h {
            bail!("layer {name}: image is {}x{}, panorama is {w}x{h}", image.width(), image.height());
        }
        let mask = io::load_mask_png(resolve(&entry.mask))
            .with_context(|| format!("layer {name}: loading mask {}", entry.mask))?;
        if !mask.same_size(w, h) {
            bail!("layer {name}: mask is {}x{}, panorama is {w}x{h}", mask.width, mask.height);
        }
        let depth = match (&entry.depth, entry.kind) {
            (Some(path), _) => Some(
                load_depth(&resolve(path), w, h).with_context(|| format!("layer {name}: loading depth {path}"))?,
            ),
            (None, LayerKind::Sky) => None,
            (None, _) => bail!("layer {name}: manifest provides no depth map"),
        };
        let completed_mask = entry
            .completed_mask
            .as_ref()
            .map(|p| io::load_mask_png(resolve(p)))
            .transpose()
            .with_context(|| format!("layer {name}: loading completed mask"))?;
        if let Some(cm) = &completed_mask {
            if !cm.same_size(w, h) {
                bail!("layer {name}: completed mask lattice mismatch");
            }
        }
        layers.push(LoadedLayer {
            kind: entry.kind,
            name,
            image,
            mask,
            depth,
            completed_mask,
        });
    }

    let sky_mask = manifest
        .sky_mask
        .as_ref()
        .map(|p| io::load_mask_png(resolve(p)))
        .transpose()
        .context("loading sky mask")?;
    if let Some(sm) = &sky_mask {
        if !sm.same_size(w, h) {
            bail!("sky mask lattice mismatch");
        }
    }

    Ok(LoadedScene {
        panorama,
        base_depth,
        layers,
        sky_mask,
        manifest,
        root,
    })
}
