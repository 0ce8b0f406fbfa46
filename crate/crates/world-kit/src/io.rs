//! Raster file I/O: 8/16-bit PNG for color (sRGB on disk, linear in memory),
//! PFM (portable float map, little-endian) for float rasters, grayscale PNG
//! for masks.

use crate::erp::{ErpImage, Raster, ValidityMask};
use crate::error::{Error, Result};
use image::{DynamicImage, ImageBuffer, Luma, Rgb, Rgba};
use std::io::{Read, Write};
use std::path::Path;

pub fn srgb_to_linear(v: f32) -> f32 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(v: f32) -> f32 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Loads a color PNG (8 or 16 bit, RGB or RGBA) into a linear float raster.
pub fn load_color_png(path: impl AsRef<Path>) -> Result<Raster> {
    let img = image::open(path.as_ref())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let out = match img {
        DynamicImage::ImageRgb8(buf) => Raster::from_fn(w, h, 3, |x, y, c| {
            srgb_to_linear(buf.get_pixel(x as u32, y as u32)[c] as f32 / 255.0)
        }),
        DynamicImage::ImageRgba8(buf) => Raster::from_fn(w, h, 4, |x, y, c| {
            let v = buf.get_pixel(x as u32, y as u32)[c] as f32 / 255.0;
            if c == 3 {
                v
            } else {
                srgb_to_linear(v)
            }
        }),
        DynamicImage::ImageRgb16(buf) => Raster::from_fn(w, h, 3, |x, y, c| {
            srgb_to_linear(buf.get_pixel(x as u32, y as u32)[c] as f32 / 65535.0)
        }),
        DynamicImage::ImageRgba16(buf) => Raster::from_fn(w, h, 4, |x, y, c| {
            let v = buf.get_pixel(x as u32, y as u32)[c] as f32 / 65535.0;
            if c == 3 {
                v
            } else {
                srgb_to_linear(v)
            }
        }),
        other => {
            let buf = other.to_rgb8();
            Raster::from_fn(w, h, 3, |x, y, c| {
                srgb_to_linear(buf.get_pixel(x as u32, y as u32)[c] as f32 / 255.0)
            })
        }
    };
    Ok(out)
}

pub fn load_erp_png(path: impl AsRef<Path>) -> Result<ErpImage> {
    ErpImage::new(load_color_png(path)?)
}

/// Saves a linear float raster as an 8-bit sRGB PNG.
pub fn save_color_png(path: impl AsRef<Path>, raster: &Raster) -> Result<()> {
    save_color_png_depth(path, raster, false)
}

/// Saves a linear float raster as PNG; 16-bit when `deep` is set.
pub fn save_color_png_depth(path: impl AsRef<Path>, raster: &Raster, deep: bool) -> Result<()> {
    let (w, h) = (raster.width() as u32, raster.height() as u32);
    let encode = |v: f32, c: usize| -> f32 {
        if raster.channels() == 4 && c == 3 {
            v.clamp(0.0, 1.0)
        } else {
            linear_to_srgb(v)
        }
    };
    match (raster.channels(), deep) {
        (3, false) => {
            let buf = ImageBuffer::from_fn(w, h, |x, y| {
                let px = raster.pixel(x as usize, y as usize);
                Rgb([0, 1, 2].map(|c| (encode(px[c], c) * 255.0).round() as u8))
            });
            buf.save(path.as_ref())?;
        }
        (4, false) => {
            let buf = ImageBuffer::from_fn(w, h, |x, y| {
                let px = raster.pixel(x as usize, y as usize);
                Rgba([0, 1, 2, 3].map(|c| (encode(px[c], c) * 255.0).round() as u8))
            });
            buf.save(path.as_ref())?;
        }
        (3, true) => {
            let buf = ImageBuffer::from_fn(w, h, |x, y| {
                let px = raster.pixel(x as usize, y as usize);
                Rgb([0, 1, 2].map(|c| (encode(px[c], c) * 65535.0).round() as u16))
            });
            buf.save(path.as_ref())?;
        }
        (4, true) => {
            let buf = ImageBuffer::from_fn(w, h, |x, y| {
                let px = raster.pixel(x as usize, y as usize);
                Rgba([0, 1, 2, 3].map(|c| (encode(px[c], c) * 65535.0).round() as u16))
            });
            buf.save(path.as_ref())?;
        }
        (ch, _) => {
            return Err(Error::invalid(format!(
                "cannot save {ch}-channel raster as color PNG"
            )))
        }
    }
    Ok(())
}

/// Loads a grayscale PNG as a mask; values map to [0,1] without any
/// transfer curve (masks are data, not color).
pub fn load_mask_png(path: impl AsRef<Path>) -> Result<ValidityMask> {
    let img = image::open(path.as_ref())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mask = match img {
        DynamicImage::ImageLuma8(buf) => ValidityMask::from_fn(w, h, |x, y| {
            buf.get_pixel(x as u32, y as u32)[0] as f32 / 255.0
        }),
        DynamicImage::ImageLuma16(buf) => ValidityMask::from_fn(w, h, |x, y| {
            buf.get_pixel(x as u32, y as u32)[0] as f32 / 65535.0
        }),
        other => {
            let buf = other.to_luma8();
            ValidityMask::from_fn(w, h, |x, y| {
                buf.get_pixel(x as u32, y as u32)[0] as f32 / 255.0
            })
        }
    };
    Ok(mask)
}

pub fn save_mask_png(path: impl AsRef<Path>, mask: &ValidityMask) -> Result<()> {
    let buf = ImageBuffer::from_fn(mask.width as u32, mask.height as u32, |x, y| {
        Luma([(mask.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8])
    });
    buf.save(path.as_ref())?;
    Ok(())
}

/// Writes a float raster as PFM: "Pf" for one channel, "PF" for three,
/// scale −1.0 (little-endian), rows bottom-to-top per the format.
pub fn write_pfm(path: impl AsRef<Path>, width: usize, height: usize, channels: usize, data: &[f32]) -> Result<()> {
    if channels != 1 && channels != 3 {
        return Err(Error::invalid("PFM supports 1 or 3 channels"));
    }
    if data.len() != width * height * channels {
        return Err(Error::invalid("PFM data length mismatch"));
    }
    let mut out = Vec::with_capacity(data.len() * 4 + 64);
    let magic = if channels == 1 { "Pf" } else { "PF" };
    out.extend_from_slice(format!("{magic}\n{width} {height}\n-1.0\n").as_bytes());
    for y in (0..height).rev() {
        let row = &data[y * width * channels..(y + 1) * width * channels];
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path.as_ref(), out)?;
    Ok(())
}

/// Reads a PFM file; returns (width, height, channels, row-major top-down data).
pub fn read_pfm(path: impl AsRef<Path>) -> Result<(usize, usize, usize, Vec<f32>)> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path.as_ref())?);
    let mut header = Vec::new();
    let mut fields = Vec::new();
    // Header is three whitespace-separated tokens after the magic.
    while fields.len() < 4 {
        let mut byte = [0u8; 1];
        file.read_exact(&mut byte)?;
        if byte[0].is_ascii_whitespace() {
            if !header.is_empty() {
                fields.push(String::from_utf8_lossy(&header).to_string());
                header.clear();
            }
        } else {
            header.push(byte[0]);
        }
    }
    let channels = match fields[0].as_str() {
        "PF" => 3,
        "Pf" => 1,
        m => return Err(Error::Format(format!("bad PFM magic {m:?}"))),
    };
    let width: usize = fields[1]
        .parse()
        .map_err(|_| Error::Format("bad PFM width".into()))?;
    let height: usize = fields[2]
        .parse()
        .map_err(|_| Error::Format("bad PFM height".into()))?;
    let scale: f32 = fields[3]
        .parse()
        .map_err(|_| Error::Format("bad PFM scale".into()))?;
    let little_endian = scale < 0.0;
    let mut raw = vec![0u8; width * height * channels * 4];
    file.read_exact(&mut raw)
        .map_err(|_| Error::Format("truncated PFM payload".into()))?;
    let mut data = vec![0.0f32; width * height * channels];
    for y in 0..height {
        let src_row = height - 1 - y;
        for i in 0..width * channels {
            let o = (src_row * width * channels + i) * 4;
            let b = [raw[o], raw[o + 1], raw[o + 2], raw[o + 3]];
            let v = if little_endian {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
            data[y * width * channels + i] = v;
        }
    }
    Ok((width, height, channels, data))
}

/// Streams bytes to a writer, used by exporters that build files in memory.
pub fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path.as_ref())?;
    f.write_all(bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srgb_round_trip() {
        for i in 0..=100 {
            let v = i as f32 / 100.0;
            let back = srgb_to_linear(linear_to_srgb(v));
            assert!((back - v).abs() < 1e-6);
        }
    }

    #[test]
    fn png_color_round_trip_8bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        let r = Raster::from_fn(16, 8, 3, |x, y, c| ((x + y + c) % 13) as f32 / 12.0);
        save_color_png(&path, &r).unwrap();
        let back = load_color_png(&path).unwrap();
        assert_eq!(back.width(), 16);
        for i in 0..r.data().len() {
            // 8-bit sRGB quantization error budget
            assert!((back.data()[i] - r.data()[i]).abs() < 0.01);
        }
    }

    #[test]
    fn png_16bit_and_alpha_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c16.png");
        let r = Raster::from_fn(8, 8, 4, |x, y, c| ((x * 3 + y * 5 + c) % 7) as f32 / 6.0);
        save_color_png_depth(&path, &r, true).unwrap();
        let back = load_color_png(&path).unwrap();
        assert_eq!(back.channels(), 4);
        for i in 0..r.data().len() {
            assert!((back.data()[i] - r.data()[i]).abs() < 1e-4);
        }
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        let m = ValidityMask::from_fn(10, 6, |x, y| if (x + y) % 2 == 0 { 1.0 } else { 0.0 });
        save_mask_png(&path, &m).unwrap();
        let back = load_mask_png(&path).unwrap();
        assert_eq!(back.values, m.values);
    }

    #[test]
    fn pfm_round_trip_gray_and_color() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("d.pfm");
        let data: Vec<f32> = (0..24).map(|i| i as f32 * 0.5 - 3.0).collect();
        write_pfm(&p1, 6, 4, 1, &data).unwrap();
        let (w, h, ch, back) = read_pfm(&p1).unwrap();
        assert_eq!((w, h, ch), (6, 4, 1));
        assert_eq!(back, data);

        let p3 = dir.path().join("c.pfm");
        let data3: Vec<f32> = (0..36).map(|i| (i as f32).sin()).collect();
        write_pfm(&p3, 4, 3, 3, &data3).unwrap();
        let (w, h, ch, back3) = read_pfm(&p3).unwrap();
        assert_eq!((w, h, ch), (4, 3, 3));
        assert_eq!(back3, data3);
    }

    #[test]
    fn pfm_header_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.pfm");
        write_pfm(&p, 2, 2, 3, &[0.0; 12]).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"PF\n2 2\n-1.0\n"));
        let pg = dir.path().join("g.pfm");
        write_pfm(&pg, 2, 2, 1, &[0.0; 4]).unwrap();
        let bytes = std::fs::read(&pg).unwrap();
        assert!(bytes.starts_with(b"Pf\n2 2\n-1.0\n"));
    }

    #[test]
    fn pfm_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.pfm");
        std::fs::write(&p, b"PX\n2 2\n-1.0\n").unwrap();
        assert!(read_pfm(&p).is_err());
        std::fs::write(&p, b"PF\n4 4\n-1.0\nshort").unwrap();
        assert!(read_pfm(&p).is_err());
    }
}
