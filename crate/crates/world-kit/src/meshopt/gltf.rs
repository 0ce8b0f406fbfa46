//! Binary glTF 2.0 scene export: one mesh node per layer (named "sky",
//! "background", "fg_00", …), double-sided alpha-blended materials with the
//! ERP texture embedded as PNG, placements as TRS locator nodes.

use crate::erp::ErpImage;
use crate::error::{Error, Result};
use crate::io::linear_to_srgb;
use crate::warp::{GridMesh, LayeredWorldMesh};
use serde_json::{json, Value};
use std::collections::BTreeMap;

const GLB_MAGIC: u32 = 0x4654_6C67;
const CHUNK_JSON: u32 = 0x4E4F_534A;
const CHUNK_BIN: u32 = 0x004E_4942;
const TARGET_ARRAY_BUFFER: u32 = 34962;
const TARGET_ELEMENT_ARRAY: u32 = 34963;
const COMP_F32: u32 = 5126;
const COMP_U8: u32 = 5121;
const COMP_U32: u32 = 5125;

fn pad_to(buf: &mut Vec<u8>, align: usize, fill: u8) {
    while buf.len() % align != 0 {
        buf.push(fill);
    }
}

fn encode_png(img: &ErpImage) -> Result<Vec<u8>> {
    use image::ImageEncoder;
    let (w, h) = (img.width(), img.height());
    let ch = img.channels();
    let mut pixels = Vec::with_capacity(w * h * ch);
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let v = img.get(x, y, c);
                let encoded = if ch == 4 && c == 3 {
                    v.clamp(0.0, 1.0)
                } else {
                    linear_to_srgb(v)
                };
                pixels.push((encoded * 255.0).round() as u8);
            }
        }
    }
    let mut out = Vec::new();
    let enc = image::codecs::png::PngEncoder::new(&mut out);
    let color = if ch == 4 {
        image::ExtendedColorType::Rgba8
    } else {
        image::ExtendedColorType::Rgb8
    };
    enc.write_image(&pixels, w as u32, h as u32, color)?;
    Ok(out)
}

struct BufferBuilder {
    bin: Vec<u8>,
    views: Vec<Value>,
    accessors: Vec<Value>,
}

impl BufferBuilder {
    fn new() -> Self {
        BufferBuilder {
            bin: Vec::new(),
            views: Vec::new(),
            accessors: Vec::new(),
        }
    }

    fn push_view(&mut self, bytes: &[u8], target: Option<u32>) -> usize {
        pad_to(&mut self.bin, 4, 0);
        let offset = self.bin.len();
        self.bin.extend_from_slice(bytes);
        let mut view = json!({
            "buffer": 0,
            "byteOffset": offset,
            "byteLength": bytes.len(),
        });
        if let Some(t) = target {
            view["target"] = json!(t);
        }
        self.views.push(view);
        self.views.len() - 1
    }

    fn push_accessor(&mut self, view: usize, comp: u32, kind: &str, count: usize, extra: Value) -> usize {
        let mut acc = json!({
            "bufferView": view,
            "componentType": comp,
            "count": count,
            "type": kind,
        });
        if let Value::Object(map) = extra {
            for (k, v) in map {
                acc[k] = v;
            }
        }
        self.accessors.push(acc);
        self.accessors.len() - 1
    }
}

fn mesh_primitives(builder: &mut BufferBuilder, mesh: &GridMesh, material: usize) -> Value {
    let mut pos_bytes = Vec::with_capacity(mesh.vertex_count() * 12);
    let mut lo = [f32::INFINITY; 3];
    let mut hi = [f32::NEG_INFINITY; 3];
    for p in &mesh.positions {
        for (k, v) in [p.x as f32, p.y as f32, p.z as f32].into_iter().enumerate() {
            pos_bytes.extend_from_slice(&v.to_le_bytes());
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    let pos_view = builder.push_view(&pos_bytes, Some(TARGET_ARRAY_BUFFER));
    let pos_acc = builder.push_accessor(
        pos_view,
        COMP_F32,
        "VEC3",
        mesh.vertex_count(),
        json!({"min": lo.to_vec(), "max": hi.to_vec()}),
    );

    let mut uv_bytes = Vec::with_capacity(mesh.vertex_count() * 8);
    for uv in &mesh.uv {
        uv_bytes.extend_from_slice(&(uv[0] as f32).to_le_bytes());
        uv_bytes.extend_from_slice(&(uv[1] as f32).to_le_bytes());
    }
    let uv_view = builder.push_view(&uv_bytes, Some(TARGET_ARRAY_BUFFER));
    let uv_acc = builder.push_accessor(uv_view, COMP_F32, "VEC2", mesh.vertex_count(), json!({}));

    // vertex alpha rides in COLOR_0 (white RGB, alpha = mask feather)
    let mut color_bytes = Vec::with_capacity(mesh.vertex_count() * 4);
    for a in &mesh.alpha {
        color_bytes.extend_from_slice(&[255, 255, 255, (a.clamp(0.0, 1.0) * 255.0).round() as u8]);
    }
    let color_view = builder.push_view(&color_bytes, Some(TARGET_ARRAY_BUFFER));
    let color_acc = builder.push_accessor(
        color_view,
        COMP_U8,
        "VEC4",
        mesh.vertex_count(),
        json!({"normalized": true}),
    );

    let mut idx_bytes = Vec::with_capacity(mesh.triangle_count() * 12);
    for t in &mesh.indices {
        for &i in t {
            idx_bytes.extend_from_slice(&i.to_le_bytes());
        }
    }
    let idx_view = builder.push_view(&idx_bytes, Some(TARGET_ELEMENT_ARRAY));
    let idx_acc = builder.push_accessor(idx_view, COMP_U32, "SCALAR", mesh.triangle_count() * 3, json!({}));

    json!({
        "primitives": [{
            "attributes": {
                "POSITION": pos_acc,
                "TEXCOORD_0": uv_acc,
                "COLOR_0": color_acc,
            },
            "indices": idx_acc,
            "material": material,
            "mode": 4,
        }]
    })
}

/// Serializes the world into a single GLB byte vector. `textures` maps each
/// mesh's texture_ref to its ERP image; a missing entry is an export error.
pub fn export_gltf(world: &LayeredWorldMesh, textures: &BTreeMap<String, &ErpImage>) -> Result<Vec<u8>> {
    let mut builder = BufferBuilder::new();
    let mut meshes_json: Vec<Value> = Vec::new();
    let mut nodes: Vec<Value> = Vec::new();
    let mut materials: Vec<Value> = Vec::new();
    let mut textures_json: Vec<Value> = Vec::new();
    let mut images: Vec<Value> = Vec::new();
    let mut texture_index: BTreeMap<String, usize> = BTreeMap::new();

    let mut all_meshes: Vec<&GridMesh> = world.layers.iter().collect();
    if let Some(sky) = &world.sky {
        all_meshes.push(sky);
    }
    for mesh in &all_meshes {
        if !texture_index.contains_key(&mesh.texture_ref) {
            let img = textures.get(&mesh.texture_ref).ok_or_else(|| {
                Error::Export(format!("no texture supplied for {:?}", mesh.texture_ref))
            })?;
            let png = encode_png(img)?;
            let view = builder.push_view(&png, None);
            let image_idx = images.len();
            images.push(json!({"bufferView": view, "mimeType": "image/png", "name": mesh.texture_ref}));
            textures_json.push(json!({"sampler": 0, "source": image_idx}));
            materials.push(json!({
                "name": mesh.texture_ref,
                "pbrMetallicRoughness": {
                    "baseColorTexture": {"index": image_idx},
                    "metallicFactor": 0.0,
                    "roughnessFactor": 1.0,
                },
                "alphaMode": "BLEND",
                "doubleSided": true,
            }));
            texture_index.insert(mesh.texture_ref.clone(), image_idx);
        }
    }

    for mesh in &all_meshes {
        let material = texture_index[&mesh.texture_ref];
        let mut mesh_json = mesh_primitives(&mut builder, mesh, material);
        mesh_json["name"] = json!(mesh.texture_ref);
        let mesh_idx = meshes_json.len();
        meshes_json.push(mesh_json);
        nodes.push(json!({"name": mesh.texture_ref, "mesh": mesh_idx}));
    }
    for (i, p) in world.placements.iter().enumerate() {
        let half = p.yaw * 0.5;
        nodes.push(json!({
            "name": format!("placement_{i:02}"),
            "translation": p.translation.to_vec(),
            "rotation": [0.0, half.sin(), 0.0, half.cos()],
            "scale": [p.uniform_scale, p.uniform_scale, p.uniform_scale],
        }));
    }

    let mut root = json!({
        "asset": {"version": "2.0", "generator": "world-kit"},
        "scene": 0,
        "scenes": [{"name": "world"}],
    });
    if !nodes.is_empty() {
        root["scenes"][0]["nodes"] = json!((0..nodes.len()).collect::<Vec<usize>>());
        root["nodes"] = json!(nodes);
    }
    if !meshes_json.is_empty() {
        root["meshes"] = json!(meshes_json);
        root["materials"] = json!(materials);
        root["textures"] = json!(textures_json);
        root["images"] = json!(images);
        root["samplers"] = json!([{
            "magFilter": 9729,
            "minFilter": 9729,
            "wrapS": 10497,
            "wrapT": 33071,
        }]);
    }
    pad_to(&mut builder.bin, 4, 0);
    if !builder.bin.is_empty() {
        root["buffers"] = json!([{"byteLength": builder.bin.len()}]);
        root["bufferViews"] = json!(builder.views);
        root["accessors"] = json!(builder.accessors);
    }

    let mut json_bytes = serde_json::to_vec(&root)?;
    pad_to(&mut json_bytes, 4, b' ');

    let mut out = Vec::new();
    let total = 12 + 8 + json_bytes.len() + if builder.bin.is_empty() { 0 } else { 8 + builder.bin.len() };
    out.extend_from_slice(&GLB_MAGIC.to_le_bytes());
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&(json_bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(&CHUNK_JSON.to_le_bytes());
    out.extend_from_slice(&json_bytes);
    if !builder.bin.is_empty() {
        out.extend_from_slice(&(builder.bin.len() as u32).to_le_bytes());
        out.extend_from_slice(&CHUNK_BIN.to_le_bytes());
        out.extend_from_slice(&builder.bin);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth::DepthMap;
    use crate::erp::ValidityMask;
    use crate::warp::{build_sky_dome, warp_layer, PlacementTransform, WarpOptions};

    fn tiny_world() -> (LayeredWorldMesh, ErpImage) {
        let (w, h) = (64, 32);
        let img = ErpImage::from_fn(w, h, 3, |x, y, _| ((x + y) % 7) as f32 / 6.0).unwrap();
        let depth = DepthMap::from_fn(w, h, |_, _| Some(3.0));
        let bg = warp_layer(
            &img,
            &depth,
            &ValidityMask::new(w, h, 1.0),
            &WarpOptions {
                stride: 4,
                tear_ratio: 1.3,
                feather: 0.0,
            },
            0,
            "background",
        )
        .unwrap();
        let sky = build_sky_dome(&img, 3.15, 8).unwrap();
        let world = LayeredWorldMesh {
            layers: vec![bg],
            sky: Some(sky),
            placements: vec![PlacementTransform {
                translation: [0.0, 0.0, -2.0],
                uniform_scale: 1.5,
                yaw: std::f64::consts::PI,
            }],
        };
        (world, img)
    }

    fn parse_glb(bytes: &[u8]) -> (Value, Vec<u8>) {
        assert!(bytes.len() >= 12);
        assert_eq!(u32::from_le_bytes(bytes[0..4].try_into().unwrap()), GLB_MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        let total = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        assert_eq!(total, bytes.len());
        let json_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), CHUNK_JSON);
        assert_eq!(json_len % 4, 0);
        let json: Value = serde_json::from_slice(&bytes[20..20 + json_len]).unwrap();
        let mut bin = Vec::new();
        if bytes.len() > 20 + json_len {
            let o = 20 + json_len;
            let bin_len = u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
            assert_eq!(u32::from_le_bytes(bytes[o + 4..o + 8].try_into().unwrap()), CHUNK_BIN);
            bin = bytes[o + 8..o + 8 + bin_len].to_vec();
        }
        (json, bin)
    }

    #[test]
    fn empty_world_is_valid_with_zero_mesh_nodes() {
        let world = LayeredWorldMesh {
            layers: Vec::new(),
            sky: None,
            placements: Vec::new(),
        };
        let bytes = export_gltf(&world, &BTreeMap::new()).unwrap();
        let (json, bin) = parse_glb(&bytes);
        assert!(json.get("meshes").is_none());
        assert!(json.get("nodes").is_none());
        assert_eq!(json["asset"]["version"], "2.0");
        assert!(bin.is_empty());
    }

    #[test]
    fn two_layer_world_structure() {
        let (world, img) = tiny_world();
        let mut textures = BTreeMap::new();
        textures.insert("background".to_string(), &img);
        textures.insert("sky".to_string(), &img);
        let bytes = export_gltf(&world, &textures).unwrap();
        let (json, bin) = parse_glb(&bytes);

        let nodes = json["nodes"].as_array().unwrap();
        let names: Vec<&str> = nodes.iter().filter_map(|n| n["name"].as_str()).collect();
        assert_eq!(names, vec!["background", "sky", "placement_00"]);
        assert_eq!(json["meshes"].as_array().unwrap().len(), 2);
        // structural checks: every bufferView fits the buffer, 4-aligned
        let buffer_len = json["buffers"][0]["byteLength"].as_u64().unwrap() as usize;
        assert_eq!(buffer_len, bin.len());
        for view in json["bufferViews"].as_array().unwrap() {
            let off = view["byteOffset"].as_u64().unwrap() as usize;
            let len = view["byteLength"].as_u64().unwrap() as usize;
            assert_eq!(off % 4, 0);
            assert!(off + len <= bin.len());
        }
        for acc in json["accessors"].as_array().unwrap() {
            assert!(acc["count"].as_u64().unwrap() > 0);
        }
        for mat in json["materials"].as_array().unwrap() {
            assert_eq!(mat["alphaMode"], "BLEND");
            assert_eq!(mat["doubleSided"], true);
        }
        // placement TRS carries the yaw quaternion
        let placement = &nodes[2];
        let rot = placement["rotation"].as_array().unwrap();
        assert!((rot[1].as_f64().unwrap() - 1.0).abs() < 1e-9); // sin(pi/2)
        assert!(rot[3].as_f64().unwrap().abs() < 1e-9); // cos(pi/2)
    }

    #[test]
    fn missing_texture_is_export_error() {
        let (world, img) = tiny_world();
        let mut textures = BTreeMap::new();
        textures.insert("background".to_string(), &img);
        let err = export_gltf(&world, &textures).unwrap_err();
        assert!(matches!(err, Error::Export(_)));
    }

    #[test]
    fn deterministic_bytes() {
        let (world, img) = tiny_world();
        let mut textures = BTreeMap::new();
        textures.insert("background".to_string(), &img);
        textures.insert("sky".to_string(), &img);
        let a = export_gltf(&world, &textures).unwrap();
        let b = export_gltf(&world, &textures).unwrap();
        assert_eq!(a, b);
    }
}
