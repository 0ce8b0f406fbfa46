//! LWC: a compact quantized mesh codec. Positions are quantized uniformly
//! inside the layer AABB, UVs inside [0,1]², indices are corner-delta
//! zigzag varints against the previous triangle, alphas are bytes.
//! Encoding is bit-exactly deterministic; connectivity is lossless.
//!
//! Layout (little-endian):
//!   magic "LWC1" | vertex_count u32 | index_count u32 |
//!   aabb min/max 6×f64 | pos_bits u8 | uv_bits u8 | const_axis_mask u8 |
//!   reserved u8 | position bits | uv bits | index varints | alpha bytes

use crate::error::{Error, Result};
use crate::warp::GridMesh;
use glam::DVec3;

pub const LWC_MAGIC: [u8; 4] = *b"LWC1";

/// An encoded mesh blob plus the decode-relevant header fields.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactMeshBlob {
    pub bytes: Vec<u8>,
}

impl CompactMeshBlob {
    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

struct BitWriter {
    out: Vec<u8>,
    acc: u64,
    used: u32,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter {
            out: Vec::new(),
            acc: 0,
            used: 0,
        }
    }

    fn push(&mut self, value: u32, bits: u32) {
        self.acc |= (value as u64) << self.used;
        self.used += bits;
        while self.used >= 8 {
            self.out.push((self.acc & 0xFF) as u8);
            self.acc >>= 8;
            self.used -= 8;
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.used > 0 {
            self.out.push((self.acc & 0xFF) as u8);
        }
        self.out
    }
}

struct BitReader<'a> {
    data: &'a [u8],
    byte: usize,
    acc: u64,
    avail: u32,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8]) -> Self {
        BitReader {
            data,
            byte: 0,
            acc: 0,
            avail: 0,
        }
    }

    fn pull(&mut self, bits: u32) -> Result<u32> {
        while self.avail < bits {
            if self.byte >= self.data.len() {
                return Err(Error::Format("bitstream underrun".into()));
            }
            self.acc |= (self.data[self.byte] as u64) << self.avail;
            self.byte += 1;
            self.avail += 8;
        }
        let v = (self.acc & ((1u64 << bits) - 1)) as u32;
        self.acc >>= bits;
        self.avail -= bits;
        Ok(v)
    }
}

fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

fn unzigzag(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

fn push_varint(out: &mut Vec<u8>, mut v: u64) {
    loop {
        let byte = (v & 0x7F) as u8;
        v >>= 7;
        if v == 0 {
            out.push(byte);
            break;
        }
        out.push(byte | 0x80);
    }
}

fn read_varint(data: &[u8], pos: &mut usize) -> Result<u64> {
    let mut v = 0u64;
    let mut shift = 0u32;
    loop {
        if *pos >= data.len() {
            return Err(Error::Format("varint underrun".into()));
        }
        let byte = data[*pos];
        *pos += 1;
        v |= ((byte & 0x7F) as u64) << shift;
        if byte & 0x80 == 0 {
            return Ok(v);
        }
        shift += 7;
        if shift > 63 {
            return Err(Error::Format("varint too long".into()));
        }
    }
}

/// Quantizes a mesh into an LWC blob. Positions use `pos_bits` per axis
/// within the mesh AABB (max error extent/(2^bits−1)/2); UVs use `uv_bits`
/// in [0,1]. Zero-extent axes are stored as constants and flagged.
pub fn encode_compact(mesh: &GridMesh, pos_bits: u8, uv_bits: u8) -> Result<CompactMeshBlob> {
    if !(8..=16).contains(&pos_bits) {
        return Err(Error::invalid("pos_bits must lie in [8, 16]"));
    }
    if !(8..=14).contains(&uv_bits) {
        return Err(Error::invalid("uv_bits must lie in [8, 14]"));
    }
    mesh.validate()?;
    let (lo, hi) = mesh.aabb();
    let mut const_mask = 0u8;
    let mut extent = [0.0f64; 3];
    for k in 0..3 {
        extent[k] = hi[k] - lo[k];
        if extent[k] <= 0.0 {
            const_mask |= 1 << k;
        }
    }
    let mut bytes = Vec::new();
    bytes.extend_from_slice(&LWC_MAGIC);
    bytes.extend_from_slice(&(mesh.vertex_count() as u32).to_le_bytes());
    bytes.extend_from_slice(&((mesh.triangle_count() * 3) as u32).to_le_bytes());
    for v in lo.iter().chain(hi.iter()) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.push(pos_bits);
    bytes.push(uv_bits);
    bytes.push(const_mask);
    bytes.push(0);

    let pos_max = ((1u32 << pos_bits) - 1) as f64;
    let mut bits = BitWriter::new();
    for p in &mesh.positions {
        let v = [p.x, p.y, p.z];
        for k in 0..3 {
            let q = if const_mask & (1 << k) != 0 {
                0
            } else {
                (((v[k] - lo[k]) / extent[k] * pos_max).round() as u32).min(pos_max as u32)
            };
            bits.push(q, pos_bits as u32);
        }
    }
    bytes.extend_from_slice(&bits.finish());

    let uv_max = ((1u32 << uv_bits) - 1) as f64;
    let mut bits = BitWriter::new();
    for uv in &mesh.uv {
        for k in 0..2 {
            let q = ((uv[k].clamp(0.0, 1.0) * uv_max).round() as u32).min(uv_max as u32);
            bits.push(q, uv_bits as u32);
        }
    }
    bytes.extend_from_slice(&bits.finish());

    let mut prev = [0i64; 3];
    for t in &mesh.indices {
        for k in 0..3 {
            let v = t[k] as i64;
            push_varint(&mut bytes, zigzag(v - prev[k]));
            prev[k] = v;
        }
    }

    for a in &mesh.alpha {
        bytes.push((a.clamp(0.0, 1.0) * 255.0).round() as u8);
    }

    Ok(CompactMeshBlob { bytes })
}

/// Decodes an LWC blob. Layer metadata (layer_id, texture_ref, seam pairs)
/// is not part of the format; callers reattach it from their manifest.
pub fn decode_compact(blob: &CompactMeshBlob) -> Result<GridMesh> {
    let data = &blob.bytes;
    if data.len() < 64 {
        return Err(Error::Format("blob shorter than header".into()));
    }
    if data[0..4] != LWC_MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &data[0..4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes([data[o], data[o + 1], data[o + 2], data[o + 3]]);
    let f64_at = |o: usize| {
        f64::from_le_bytes([
            data[o],
            data[o + 1],
            data[o + 2],
            data[o + 3],
            data[o + 4],
            data[o + 5],
            data[o + 6],
            data[o + 7],
        ])
    };
    let nv = u32_at(4) as usize;
    let n_idx = u32_at(8) as usize;
    if n_idx % 3 != 0 {
        return Err(Error::Format("index count not a multiple of 3".into()));
    }
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for k in 0..3 {
        lo[k] = f64_at(12 + 8 * k);
        hi[k] = f64_at(36 + 8 * k);
    }
    let pos_bits = data[60];
    let uv_bits = data[61];
    let const_mask = data[62];
    if !(8..=16).contains(&pos_bits) || !(8..=14).contains(&uv_bits) {
        return Err(Error::Format("bit widths out of range".into()));
    }
    let pos_bytes = (nv * 3 * pos_bits as usize).div_ceil(8);
    let uv_bytes = (nv * 2 * uv_bits as usize).div_ceil(8);
    let mut offset = 64;
    if data.len() < offset + pos_bytes + uv_bytes {
        return Err(Error::Format("truncated attribute payload".into()));
    }

    let mut mesh = GridMesh::empty(0, "");
    let pos_max = ((1u32 << pos_bits) - 1) as f64;
    let mut reader = BitReader::new(&data[offset..offset + pos_bytes]);
    for _ in 0..nv {
        let mut v = [0.0f64; 3];
        for (k, value) in v.iter_mut().enumerate() {
            let q = reader.pull(pos_bits as u32)?;
            *value = if const_mask & (1 << k) != 0 {
                lo[k]
            } else {
                lo[k] + q as f64 / pos_max * (hi[k] - lo[k])
            };
        }
        mesh.positions.push(DVec3::from_array(v));
    }
    offset += pos_bytes;

    let uv_max = ((1u32 << uv_bits) - 1) as f64;
    let mut reader = BitReader::new(&data[offset..offset + uv_bytes]);
    for _ in 0..nv {
        let u = reader.pull(uv_bits as u32)? as f64 / uv_max;
        let v = reader.pull(uv_bits as u32)? as f64 / uv_max;
        mesh.uv.push([u, v]);
    }
    offset += uv_bytes;

    let alpha_bytes = nv;
    if data.len() < offset + alpha_bytes {
        return Err(Error::Format("truncated payload".into()));
    }
    let index_end = data.len() - alpha_bytes;
    let mut pos = offset;
    let mut prev = [0i64; 3];
    for _ in 0..n_idx / 3 {
        let mut t = [0u32; 3];
        for k in 0..3 {
            let d = unzigzag(read_varint(&data[..index_end], &mut pos)?);
            let v = prev[k] + d;
            if v < 0 || v >= nv as i64 {
                return Err(Error::Format(format!("index {v} out of range")));
            }
            prev[k] = v;
            t[k] = v as u32;
        }
        mesh.indices.push(t);
    }
    if pos != index_end {
        return Err(Error::Format("trailing bytes after index stream".into()));
    }
    for i in 0..nv {
        mesh.alpha.push(data[index_end + i] as f32 / 255.0);
    }
    mesh.validate()?;
    Ok(mesh)
}
