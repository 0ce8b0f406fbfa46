//! Binary little-endian PLY for grid meshes: per-vertex float32 position
//! and UV plus a uchar alpha, faces as uchar-counted int32 triples. Serves
//! as the raw-size baseline for compression ratios.

use crate::error::{Error, Result};
use crate::warp::GridMesh;
use glam::DVec3;

fn header(vertices: usize, faces: usize) -> String {
    format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {vertices}\n\
property float x\nproperty float y\nproperty float z\n\
property float u\nproperty float v\nproperty uchar alpha\n\
element face {faces}\nproperty list uchar int vertex_indices\nend_header\n"
    )
}

/// Exact byte size [`export_ply`] will produce for the given counts.
pub fn ply_byte_size(vertices: usize, faces: usize) -> usize {
    header(vertices, faces).len() + vertices * 21 + faces * 13
}

pub fn export_ply(mesh: &GridMesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(ply_byte_size(mesh.vertex_count(), mesh.triangle_count()));
    out.extend_from_slice(header(mesh.vertex_count(), mesh.triangle_count()).as_bytes());
    for i in 0..mesh.vertex_count() {
        let p = mesh.positions[i];
        for v in [p.x as f32, p.y as f32, p.z as f32, mesh.uv[i][0] as f32, mesh.uv[i][1] as f32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push((mesh.alpha[i].clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    for t in &mesh.indices {
        out.push(3);
        for &i in t {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out
}

pub fn import_ply(bytes: &[u8]) -> Result<GridMesh> {
    let head_end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| Error::Format("PLY header terminator missing".into()))?
        + 11;
    let head = std::str::from_utf8(&bytes[..head_end])
        .map_err(|_| Error::Format("PLY header is not UTF-8".into()))?;
    if !head.starts_with("ply\nformat binary_little_endian 1.0\n") {
        return Err(Error::Format("not a binary little-endian PLY".into()));
    }
    let mut vertices = None;
    let mut faces = None;
    for line in head.lines() {
        if let Some(rest) = line.strip_prefix("element vertex ") {
            vertices = rest.parse::<usize>().ok();
        } else if let Some(rest) = line.strip_prefix("element face ") {
            faces = rest.parse::<usize>().ok();
        }
    }
    let (nv, nf) = match (vertices, faces) {
        (Some(v), Some(f)) => (v, f),
        _ => return Err(Error::Format("PLY missing element counts".into())),
    };
    let body = &bytes[head_end..];
    if body.len() != nv * 21 + nf * 13 {
        return Err(Error::Format(format!(
            "PLY payload is {} bytes, expected {}",
            body.len(),
            nv * 21 + nf * 13
        )));
    }
    let mut mesh = GridMesh::empty(0, "");
    let f32_at = |o: usize| f32::from_le_bytes([body[o], body[o + 1], body[o + 2], body[o + 3]]);
    for i in 0..nv {
        let o = i * 21;
        mesh.positions.push(DVec3::new(
            f32_at(o) as f64,
            f32_at(o + 4) as f64,
            f32_at(o + 8) as f64,
        ));
        mesh.uv.push([f32_at(o + 12) as f64, f32_at(o + 16) as f64]);
        mesh.alpha.push(body[o + 20] as f32 / 255.0);
    }
    let base = nv * 21;
    for i in 0..nf {
        let o = base + i * 13;
        if body[o] != 3 {
            return Err(Error::Format("non-triangle face in PLY".into()));
        }
        let idx = |k: usize| {
            i32::from_le_bytes([
                body[o + 1 + 4 * k],
                body[o + 2 + 4 * k],
                body[o + 3 + 4 * k],
                body[o + 4 + 4 * k],
            ]) as u32
        };
        mesh.indices.push([idx(0), idx(1), idx(2)]);
    }
    mesh.validate()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_mesh() -> GridMesh {
        GridMesh {
            positions: vec![
                DVec3::new(0.0, 0.0, 0.0),
                DVec3::new(1.0, 0.0, 0.0),
                DVec3::new(0.0, 1.0, 0.0),
                DVec3::new(1.5, 1.5, -0.25),
            ],
            uv: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.5]],
            alpha: vec![1.0, 0.5, 1.0, 0.0],
            indices: vec![[0, 1, 2], [1, 3, 2]],
            layer_id: 2,
            texture_ref: "bg".into(),
            seam_pairs: Vec::new(),
        }
    }

    #[test]
    fn header_counts_match_mesh() {
        let mesh = sample_mesh();
        let bytes = export_ply(&mesh);
        let text = String::from_utf8_lossy(&bytes[..200]);
        assert!(text.contains("element vertex 4"));
        assert!(text.contains("element face 2"));
        assert_eq!(bytes.len(), ply_byte_size(4, 2));
    }

    #[test]
    fn round_trip_parse_equality() {
        let mesh = sample_mesh();
        let back = import_ply(&export_ply(&mesh)).unwrap();
        assert_eq!(back.indices, mesh.indices);
        for (a, b) in back.positions.iter().zip(&mesh.positions) {
            assert!((*a - *b).length() < 1e-6);
        }
        for (a, b) in back.alpha.iter().zip(&mesh.alpha) {
            assert!((a - b).abs() < 1.0 / 255.0 + 1e-6);
        }
    }

    #[test]
    fn empty_mesh_is_header_only() {
        let mesh = GridMesh::empty(0, "x");
        let bytes = export_ply(&mesh);
        assert_eq!(bytes.len(), header(0, 0).len());
        let back = import_ply(&bytes).unwrap();
        assert_eq!(back.vertex_count(), 0);
    }

    #[test]
    fn rejects_corrupt_payload() {
        let mesh = sample_mesh();
        let mut bytes = export_ply(&mesh);
        bytes.truncate(bytes.len() - 3);
        assert!(import_ply(&bytes).is_err());
        assert!(import_ply(b"garbage").is_err());
    }
}
