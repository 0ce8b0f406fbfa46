//! On-disk world layout produced by `reconstruct` and consumed by
//! `render-views`: world.json + per-layer LWC blobs + ERP textures.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use world_kit::erp::ErpImage;
use world_kit::io;
use world_kit::meshopt::{decode_compact, CompactMeshBlob};
use world_kit::warp::{LayeredWorldMesh, PlacementTransform};

#[derive(Debug, Serialize, Deserialize)]
pub struct WorldJson {
    pub layers: Vec<WorldLayerJson>,
    #[serde(default)]
    pub sky: Option<WorldLayerJson>,
    #[serde(default)]
    pub sky_radius: Option<f64>,
    #[serde(default)]
    pub placements: Vec<PlacementTransform>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WorldLayerJson {
    pub name: String,
    pub lwc: String,
    pub texture: String,
}

pub fn load_world(dir: &Path) -> Result<(LayeredWorldMesh, BTreeMap<String, ErpImage>)> {
    let text = std::fs::read_to_string(dir.join("world.json"))
        .with_context(|| format!("reading {}", dir.join("world.json").display()))?;
    let doc: WorldJson = serde_json::from_str(&text).context("parsing world.json")?;
    let mut textures = BTreeMap::new();
    let mut load_layer = |entry: &WorldLayerJson, layer_id: u32| -> Result<world_kit::warp::GridMesh> {
        let bytes = std::fs::read(dir.join(&entry.lwc))
            .with_context(|| format!("reading {}", entry.lwc))?;
        let mut mesh = decode_compact(&CompactMeshBlob { bytes })
            .with_context(|| format!("decoding {}", entry.lwc))?;
        mesh.layer_id = layer_id;
        mesh.texture_ref = entry.name.clone();
        if !textures.contains_key(&entry.name) {
            let img = io::load_erp_png(dir.join(&entry.texture))
                .with_context(|| format!("loading texture {}", entry.texture))?;
            textures.insert(entry.name.clone(), img);
        }
        Ok(mesh)
    };
    let mut layers = Vec::new();
    for (i, entry) in doc.layers.iter().enumerate() {
        layers.push(load_layer(entry, i as u32)?);
    }
    let sky = doc.sky.as_ref().map(|e| load_layer(e, u32::MAX)).transpose()?;
    Ok((
        LayeredWorldMesh {
            layers,
            sky,
            placements: doc.placements,
        },
        textures,
    ))
}

pub fn is_world_dir(path: &Path) -> bool {
    path.is_dir() && path.join("world.json").is_file()
}
