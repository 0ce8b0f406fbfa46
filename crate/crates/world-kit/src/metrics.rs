//! Reference metrics for rendered views: PSNR against a reference set and
//! a seam-discontinuity score for stitched panoramas.

use crate::erp::{ErpImage, Raster};
use crate::error::{Error, Result};

/// PSNR in dB over [0,1]-valued rasters; identical inputs report the
/// 99 dB cap.
pub const PSNR_CAP: f64 = 99.0;

pub fn psnr(a: &Raster, b: &Raster) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels() {
        return Err(Error::invalid(format!(
            "psnr inputs differ: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    let mut se = 0.0f64;
    for (x, y) in a.data().iter().zip(b.data()) {
        let d = (*x - *y) as f64;
        se += d * d;
    }
    let mse = se / a.data().len() as f64;
    if mse <= 1e-18 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * mse.log10()).min(PSNR_CAP))
}

/// Maximum absolute difference between the wrap columns (0 and W−1) over
/// all rows and channels; 0 for horizontally periodic content.
pub fn seam_score(img: &ErpImage) -> f32 {
    let w = img.width();
    let mut worst = 0.0f32;
    for y in 0..img.height() {
        for c in 0..img.channels() {
            worst = worst.max((img.get(0, y, c) - img.get(w - 1, y, c)).abs());
        }
    }
    worst
}
