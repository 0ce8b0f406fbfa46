//! Equirectangular / spherical / pinhole coordinate transforms and sampling.
//!
//! Conventions used across the crate:
//! - Continuous ERP pixel (u,v) with u ∈ [0,W), v ∈ [0,H] maps to
//!   lon λ = 2π·u/W − π and lat φ = π/2 − π·v/H.
//! - World direction d = (cos φ · sin λ, sin φ, −cos φ · cos λ):
//!   right-handed, +Y up, −Z forward at the image center.
//! - Pixel (i,j) has its center at continuous (i+0.5, j+0.5).
//! - Camera frame is +X right, +Y down, +Z forward; `rotation` maps
//!   camera coordinates into world coordinates.

use crate::error::{Error, Result};
use glam::{DMat3, DVec3};
use std::f64::consts::PI;

/// Longitude/latitude pair in radians, lon ∈ [−π, π), lat ∈ [−π/2, π/2].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord {
    pub lon: f64,
    pub lat: f64,
}

impl SphericalCoord {
    pub fn from_dir(d: DVec3) -> Self {
        let lat = d.y.clamp(-1.0, 1.0).asin();
        let mut lon = d.x.atan2(-d.z);
        if lon >= PI {
            lon = -PI;
        }
        SphericalCoord { lon, lat }
    }

    pub fn to_dir(self) -> DVec3 {
        let (sl, cl) = self.lon.sin_cos();
        let (sp, cp) = self.lat.sin_cos();
        DVec3::new(cp * sl, sp, -cp * cl)
    }
}

/// Row-major float raster with interleaved channels, values nominally in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Raster {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "raster data length {} does not match {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Raster {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut r = Raster::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let v = f(x, y, c);
                    r.set(x, y, c, v);
                }
            }
        }
        r
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Bilinear sample with both axes clamped to pixel centers.
    pub fn sample_clamped(&self, u: f64, v: f64, out: &mut [f32]) {
        let x = (u - 0.5).clamp(0.0, (self.width - 1) as f64);
        let y = (v - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        for c in 0..self.channels {
            let a = self.get(x0, y0, c) * (1.0 - fx) + self.get(x1, y0, c) * fx;
            let b = self.get(x0, y1, c) * (1.0 - fx) + self.get(x1, y1, c) * fx;
            out[c] = a * (1.0 - fy) + b * fy;
        }
    }

    /// Bilinear sample with horizontal wrap modulo width and vertical clamp.
    pub fn sample_wrapped(&self, u: f64, v: f64, out: &mut [f32]) {
        let w = self.width as f64;
        let mut x = (u - 0.5).rem_euclid(w);
        if x >= w {
            x -= w;
        }
        let y = (v - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize % self.width;
        let x1 = (x0 + 1) % self.width;
        let y0 = y.floor() as usize;
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (x - x.floor()) as f32;
        let fy = (y - y0 as f64) as f32;
        for c in 0..self.channels {
            let a = self.get(x0, y0, c) * (1.0 - fx) + self.get(x1, y0, c) * fx;
            let b = self.get(x0, y1, c) * (1.0 - fx) + self.get(x1, y1, c) * fx;
            out[c] = a * (1.0 - fy) + b * fy;
        }
    }
}

/// Equirectangular image: a [`Raster`] with width = 2 × height,
/// horizontally periodic in all sampling operations.
#[derive(Debug, Clone, PartialEq)]
pub struct ErpImage {
    raster: Raster,
}

impl ErpImage {
    pub fn new(raster: Raster) -> Result<Self> {
        if raster.width() != 2 * raster.height() || raster.height() == 0 {
            return Err(Error::invalid(format!(
                "ERP image must be 2:1, got {}x{}",
                raster.width(),
                raster.height()
            )));
        }
        if raster.channels() != 3 && raster.channels() != 4 {
            return Err(Error::invalid(format!(
                "ERP image must have 3 or 4 channels, got {}",
                raster.channels()
            )));
        }
        Ok(ErpImage { raster })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        ErpImage::new(Raster::from_fn(width, height, channels, f))
    }

    pub fn raster(&self) -> &Raster {
        &self.raster
    }

    pub fn raster_mut(&mut self) -> &mut Raster {
        &mut self.raster
    }

    pub fn into_raster(self) -> Raster {
        self.raster
    }
}

impl std::ops::Deref for ErpImage {
    type Target = Raster;

    fn deref(&self) -> &Raster {
        &self.raster
    }
}

/// Per-pixel validity flag or soft weight in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityMask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
}

impl ValidityMask {
    pub fn new(width: usize, height: usize, value: f32) -> Self {
        ValidityMask {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut m = ValidityMask::new(width, height, 0.0);
        for y in 0..height {
            for x in 0..width {
                m.values[y * width + x] = f(x, y);
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.values[y * self.width + x] = v;
    }

    #[inline]
    pub fn is_on(&self, x: usize, y: usize) -> bool {
        self.get(x, y) > 0.5
    }

    pub fn count_on(&self) -> usize {
        self.values.iter().filter(|v| **v > 0.5).count()
    }

    pub fn same_size(&self, w: usize, h: usize) -> bool {
        self.width == w && self.height == h
    }
}

/// Pinhole camera: intrinsics in pixels, `rotation` maps camera frame to
/// world frame, `translation` is the camera center in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: DMat3,
    pub translation: DVec3,
}

impl PinholeCamera {
    /// Centered camera with a given full field of view, facing world −Z
    /// (the ERP image center).
    pub fn centered(fov_x_deg: f64, width: usize, height: usize) -> Self {
        let fx = width as f64 * 0.5 / (fov_x_deg.to_radians() * 0.5).tan();
        PinholeCamera {
            fx,
            fy: fx,
            cx: width as f64 * 0.5,
            cy: height as f64 * 0.5,
            rotation: yaw_rotation(0.0),
            translation: DVec3::ZERO,
        }
    }

    pub fn with_yaw(mut self, azimuth_rad: f64) -> Self {
        self.rotation = yaw_rotation(azimuth_rad);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0) || !(self.fy > 0.0) {
            return Err(Error::invalid("camera focal lengths must be positive"));
        }
        let rt_r = self.rotation.transpose() * self.rotation;
        let mut max_dev: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                max_dev = max_dev.max((rt_r.col(i)[j] - expect).abs());
            }
        }
        if max_dev > 1e-9 {
            return Err(Error::invalid(format!(
                "camera rotation is not orthonormal (max deviation {max_dev:.3e})"
            )));
        }
        Ok(())
    }

    /// World direction of the ray through a continuous image point.
    pub fn unproject_dir(&self, u: f64, v: f64) -> DVec3 {
        let ray = DVec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0).normalize();
        self.rotation * ray
    }

    /// Projects a world direction; returns (u, v, z_cam) where z_cam > 0
    /// means in front of the camera.
    pub fn project_dir(&self, d: DVec3) -> (f64, f64, f64) {
        let dc = self.rotation.transpose() * d;
        let u = self.fx * dc.x / dc.z + self.cx;
        let v = self.fy * dc.y / dc.z + self.cy;
        (u, v, dc.z)
    }

    /// Unprojects a pixel at metric depth (z along the optical axis) into
    /// a world-space point.
    pub fn unproject_point(&self, u: f64, v: f64, depth: f64) -> DVec3 {
        let pc = DVec3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        );
        self.rotation * pc + self.translation
    }

    /// Projects a world point; returns (u, v, z_cam).
    pub fn project_point(&self, p: DVec3) -> (f64, f64, f64) {
        let pc = self.rotation.transpose() * (p - self.translation);
        let u = self.fx * pc.x / pc.z + self.cx;
        let v = self.fy * pc.y / pc.z + self.cy;
        (u, v, pc.z)
    }
}

/// World-from-camera rotation for a camera looking at ERP longitude
/// `azimuth` with zero elevation and roll.
pub fn yaw_rotation(azimuth: f64) -> DMat3 {
    let (s, c) = azimuth.sin_cos();
    // columns: camera right, down, forward expressed in world coordinates
    DMat3::from_cols(
        DVec3::new(c, 0.0, s),
        DVec3::new(0.0, -1.0, 0.0),
        DVec3::new(s, 0.0, -c),
    )
}

/// Continuous ERP pixel to unit world direction.
pub fn erp_pixel_to_dir(u: f64, v: f64, w: usize, h: usize) -> Result<DVec3> {
    if !u.is_finite() || !v.is_finite() {
        return Err(Error::invalid("non-finite pixel coordinates"));
    }
    if v < 0.0 || v > h as f64 {
        return Err(Error::invalid(format!("v={v} outside [0, {h}]")));
    }
    let uw = u.rem_euclid(w as f64);
    let lon = 2.0 * PI * uw / w as f64 - PI;
    let lat = PI / 2.0 - PI * v / h as f64;
    Ok(SphericalCoord { lon, lat }.to_dir())
}

/// Unit world direction to continuous ERP pixel, u ∈ [0, W), v ∈ [0, H].
/// At the poles the longitude is undefined; u = W/2 by convention.
pub fn dir_to_erp_pixel(d: DVec3, w: usize, h: usize) -> Result<(f64, f64)> {
    let len = d.length();
    if !len.is_finite() || len < 1e-12 {
        return Err(Error::invalid("direction must be a nonzero finite vector"));
    }
    let d = d / len;
    if d.y.abs() >= 1.0 - 1e-12 {
        let v = if d.y > 0.0 { 0.0 } else { h as f64 };
        return Ok((w as f64 * 0.5, v));
    }
    let sc = SphericalCoord::from_dir(d);
    let mut u = (sc.lon + PI) * w as f64 / (2.0 * PI);
    if u >= w as f64 {
        u -= w as f64;
    }
    let v = (PI / 2.0 - sc.lat) * h as f64 / PI;
    Ok((u, v))
}

/// Horizontally pads an ERP image by `pad` columns on each side; output
/// column x equals input column (x − pad) mod W.
pub fn circular_pad(img: &ErpImage, pad: usize) -> Result<Raster> {
    let w = img.width();
    if pad > w / 2 {
        return Err(Error::invalid(format!("pad {pad} exceeds W/2 = {}", w / 2)));
    }
    let ch = img.channels();
    let mut out = Raster::new(w + 2 * pad, img.height(), ch);
    for y in 0..img.height() {
        for x in 0..out.width() {
            let src = (x + w - pad) % w; // (x - pad) mod w, kept non-negative
            for c in 0..ch {
                out.set(x, y, c, img.get(src, y, c));
            }
        }
    }
    Ok(out)
}

/// Crops the central W columns out of a padded raster, inverse of
/// [`circular_pad`].
pub fn center_crop(padded: &Raster, pad: usize, w: usize) -> Result<ErpImage> {
    if padded.width() != w + 2 * pad {
        return Err(Error::invalid("padded width does not match pad and W"));
    }
    let mut out = Raster::new(w, padded.height(), padded.channels());
    for y in 0..padded.height() {
        for x in 0..w {
            for c in 0..padded.channels() {
                out.set(x, y, c, padded.get(x + pad, y, c));
            }
        }
    }
    ErpImage::new(out)
}

/// Cross-fades the wrap seam: the jump between column 0 and column W−1 is
/// spread linearly over `band` columns straddling the seam. Columns outside
/// the band are untouched; a seam-continuous image passes through unchanged.
pub fn blend_wrap(img: &ErpImage, band: usize) -> Result<ErpImage> {
    let w = img.width();
    if band < 1 || band > w / 4 {
        return Err(Error::invalid(format!("band {band} outside [1, W/4]")));
    }
    let half = band as f64 * 0.5 + 0.5;
    let reach = band.div_ceil(2);
    let mut out = img.raster().clone();
    for y in 0..img.height() {
        for c in 0..img.channels() {
            let jump = img.get(0, y, c) - img.get(w - 1, y, c);
            for k in 0..reach {
                let weight = (0.5 * (1.0 - (k as f64 + 0.5) / half)).max(0.0) as f32;
                if weight <= 0.0 {
                    continue;
                }
                let cl = w - 1 - k;
                let cr = k;
                let a = (img.get(cl, y, c) + weight * jump).clamp(0.0, 1.0);
                let b = (img.get(cr, y, c) - weight * jump).clamp(0.0, 1.0);
                out.set(cl, y, c, a);
                out.set(cr, y, c, b);
            }
        }
    }
    ErpImage::new(out)
}

/// Unprojects a pinhole image onto the panoramic sphere. Pixels outside
/// the camera frustum get validity 0 and color 0.
pub fn pinhole_to_erp(
    src: &Raster,
    cam: &PinholeCamera,
    w: usize,
    h: usize,
) -> Result<(ErpImage, ValidityMask)> {
    cam.validate()?;
    if w != 2 * h {
        return Err(Error::invalid("panorama dimensions must be 2:1"));
    }
    let ch = src.channels();
    let mut out = Raster::new(w, h, ch.max(3));
    let mut validity = ValidityMask::new(w, h, 0.0);
    let mut buf = vec![0.0f32; ch];
    for j in 0..h {
        for i in 0..w {
            let d = erp_pixel_to_dir(i as f64 + 0.5, j as f64 + 0.5, w, h)?;
            let (u, v, z) = cam.project_dir(d);
            if z <= 0.0 {
                continue;
            }
            let inside = u >= 0.5
                && u <= src.width() as f64 - 0.5
                && v >= 0.5
                && v <= src.height() as f64 - 0.5;
            if !inside {
                continue;
            }
            src.sample_clamped(u, v, &mut buf);
            for c in 0..out.channels() {
                out.set(i, j, c, buf[c.min(ch - 1)]);
            }
            validity.set(i, j, 1.0);
        }
    }
    Ok((ErpImage::new(out)?, validity))
}

/// Gnomonic resampling of a panorama into a pinhole view.
pub fn erp_to_pinhole(
    img: &ErpImage,
    cam: &PinholeCamera,
    out_w: usize,
    out_h: usize,
) -> Result<Raster> {
    cam.validate()?;
    let ch = img.channels();
    let mut out = Raster::new(out_w, out_h, ch);
    let mut buf = vec![0.0f32; ch];
    let (w, h) = (img.width(), img.height());
    for j in 0..out_h {
        for i in 0..out_w {
            let d = cam.unproject_dir(i as f64 + 0.5, j as f64 + 0.5);
            let (u, v) = dir_to_erp_pixel(d, w, h)?;
            img.sample_wrapped(u, v, &mut buf);
            for c in 0..ch {
                out.set(i, j, c, buf[c]);
            }
        }
    }
    Ok(out)
}

/// Vertical shift by round(r·H) rows; vacated rows replicate the nearest
/// surviving row. Positive r moves content toward larger v.
pub fn vertical_shift(img: &ErpImage, r: f64) -> Result<ErpImage> {
    if !r.is_finite() || r.abs() > 0.5 {
        return Err(Error::invalid(format!("shift ratio {r} outside [-0.5, 0.5]")));
    }
    let h = img.height() as i64;
    let k = (r * h as f64).round() as i64;
    let mut out = Raster::new(img.width(), img.height(), img.channels());
    for y in 0..img.height() {
        let src = (y as i64 - k).clamp(0, h - 1) as usize;
        for x in 0..img.width() {
            for c in 0..img.channels() {
                out.set(x, y, c, img.get(x, src, c));
            }
        }
    }
    ErpImage::new(out)
}
