//! Camera JSON loading and the built-in evaluation view presets.

use anyhow::{bail, Context, Result};
use glam::{DMat3, DVec3};
use serde::Deserialize;
use std::path::Path;
use world_kit::erp::{yaw_rotation, PinholeCamera};

#[derive(Debug, Deserialize)]
struct CameraJson {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    #[serde(default)]
    rotation: Option<[[f64; 3]; 3]>,
    #[serde(default)]
    yaw_deg: Option<f64>,
    #[serde(default)]
    translation: Option<[f64; 3]>,
}

/// Reads a camera description: intrinsics plus either a row-major 3x3
/// `rotation` (world-from-camera) or a `yaw_deg` azimuth.
pub fn read_camera_json(path: &Path) -> Result<PinholeCamera> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading camera {}", path.display()))?;
    let doc: CameraJson = serde_json::from_str(&text)
        .with_context(|| format!("parsing camera {}", path.display()))?;
    let rotation = match (doc.rotation, doc.yaw_deg) {
        (Some(rows), None) => DMat3::from_cols(
            DVec3::new(rows[0][0], rows[1][0], rows[2][0]),
            DVec3::new(rows[0][1], rows[1][1], rows[2][1]),
            DVec3::new(rows[0][2], rows[1][2], rows[2][2]),
        ),
        (None, Some(yaw)) => yaw_rotation(yaw.to_radians()),
        (None, None) => yaw_rotation(0.0),
        (Some(_), Some(_)) => bail!("camera JSON must give either rotation or yaw_deg, not both"),
    };
    let cam = PinholeCamera {
        fx: doc.fx,
        fy: doc.fy,
        cx: doc.cx,
        cy: doc.cy,
        rotation,
        translation: DVec3::from_array(doc.translation.unwrap_or([0.0; 3])),
    };
    cam.validate()
        .with_context(|| format!("camera {} failed validation", path.display()))?;
    Ok(cam)
}

/// A named evaluation preset: azimuth sweep at fixed FOV and resolution.
#[derive(Debug, Clone)]
pub struct ViewPreset {
    pub name: &'static str,
    pub fov_deg: f64,
    pub azimuths_deg: Vec<f64>,
    pub resolution: usize,
}

pub fn preset(name: &str) -> Result<ViewPreset> {
    match name {
        "text-eval" => Ok(ViewPreset {
            name: "text-eval",
            fov_deg: 90.0,
            azimuths_deg: (0..6).map(|k| k as f64 * 60.0).collect(),
            resolution: 960,
        }),
        "image-eval" => Ok(ViewPreset {
            name: "image-eval",
            fov_deg: 90.0,
            azimuths_deg: (0..7).map(|k| k as f64 * 15.0).collect(),
            resolution: 960,
        }),
        other => bail!("unknown preset {other:?}; available presets: text-eval, image-eval"),
    }
}

impl ViewPreset {
    pub fn camera(&self, azimuth_deg: f64) -> PinholeCamera {
        PinholeCamera::centered(self.fov_deg, self.resolution, self.resolution)
            .with_yaw(azimuth_deg.to_radians())
    }
}
