//! Mesh storage optimization: quadric-error decimation, the LWC quantized
//! codec, PLY and GLB export, and the sampled Hausdorff oracle.

mod codec;
mod gltf;
mod hausdorff;
mod ply;
mod qem;

pub use codec::{decode_compact, encode_compact, CompactMeshBlob};
pub use gltf::export_gltf;
pub use hausdorff::hausdorff;
pub use ply::{export_ply, import_ply, ply_byte_size};
pub use qem::{decimate_qem, PreserveFlags};
