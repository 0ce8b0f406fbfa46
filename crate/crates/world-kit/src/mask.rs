//! Wrap-aware binary mask morphology on the ERP lattice.

use crate::erp::ValidityMask;

/// Exact euclidean dilation: every pixel within `radius` of an on-pixel
/// (horizontal wrap, vertical clamp) becomes on. Intended for small radii.
pub fn dilate_euclid_wrap(mask: &ValidityMask, radius: f64) -> ValidityMask {
    let (w, h) = (mask.width, mask.height);
    let r = radius.max(0.0);
    let ri = r.floor() as i64;
    let mut offsets = Vec::new();
    for dy in -ri..=ri {
        for dx in -ri..=ri {
            if (dx * dx + dy * dy) as f64 <= r * r {
                offsets.push((dx, dy));
            }
        }
    }
    let mut out = ValidityMask::new(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            if !mask.is_on(x, y) {
                continue;
            }
            for &(dx, dy) in &offsets {
                let ny = y as i64 + dy;
                if ny < 0 || ny >= h as i64 {
                    continue;
                }
                let nx = (x as i64 + dx).rem_euclid(w as i64) as usize;
                out.set(nx, ny as usize, 1.0);
            }
        }
    }
    out
}

/// Chamfer distance from each on-pixel to the nearest off-pixel, with
/// horizontal wrap. Off-pixels get 0. Distances are only meaningful up to
/// `max_dist`; beyond that they saturate.
pub fn inside_distance_wrap(mask: &ValidityMask, max_dist: f64) -> Vec<f32> {
    let (w, h) = (mask.width, mask.height);
    let pad = (max_dist.ceil() as usize + 1).min(w / 2);
    let pw = w + 2 * pad;
    let big = (max_dist + 2.0) as f32;
    let idx = |x: usize, y: usize| y * pw + x;
    let mut d = vec![0.0f32; pw * h];
    for y in 0..h {
        for x in 0..pw {
            let sx = (x + w - pad) % w;
            d[idx(x, y)] = if mask.is_on(sx, y) { big } else { 0.0 };
        }
    }
    const DIAG: f32 = std::f32::consts::SQRT_2;
    for y in 0..h {
        for x in 0..pw {
            let mut v = d[idx(x, y)];
            if x > 0 {
                v = v.min(d[idx(x - 1, y)] + 1.0);
            }
            if y > 0 {
                v = v.min(d[idx(x, y - 1)] + 1.0);
                if x > 0 {
                    v = v.min(d[idx(x - 1, y - 1)] + DIAG);
                }
                if x + 1 < pw {
                    v = v.min(d[idx(x + 1, y - 1)] + DIAG);
                }
            }
            d[idx(x, y)] = v;
        }
    }
    for y in (0..h).rev() {
        for x in (0..pw).rev() {
            let mut v = d[idx(x, y)];
            if x + 1 < pw {
                v = v.min(d[idx(x + 1, y)] + 1.0);
            }
            if y + 1 < h {
                v = v.min(d[idx(x, y + 1)] + 1.0);
                if x + 1 < pw {
                    v = v.min(d[idx(x + 1, y + 1)] + DIAG);
                }
                if x > 0 {
                    v = v.min(d[idx(x - 1, y + 1)] + DIAG);
                }
            }
            d[idx(x, y)] = v;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = d[idx(x + pad, y)];
        }
    }
    out
}

/// Feathered alpha: 0 outside the mask, ramping to 1 at `feather` pixels
/// inside, scaled by the soft mask value. feather = 0 keeps the mask as-is.
pub fn feathered_alpha(mask: &ValidityMask, feather: f64) -> ValidityMask {
    let (w, h) = (mask.width, mask.height);
    if feather <= 0.0 {
        return mask.clone();
    }
    let dist = inside_distance_wrap(mask, feather + 1.0);
    ValidityMask::from_fn(w, h, |x, y| {
        let d = dist[y * w + x];
        (d / feather as f32).clamp(0.0, 1.0) * mask.get(x, y).clamp(0.0, 1.0)
    })
}
