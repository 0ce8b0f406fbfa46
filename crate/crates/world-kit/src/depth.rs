//! Cross-layer depth alignment in disparity space, sky-depth assignment,
//! and adaptive depth compression.
//!
//! Monocular depth predictions are affine-consistent in disparity
//! (inverse depth); alignment therefore solves for (a, b) such that
//! a·x_layer + b ≈ x_base over the overlap region, with a trimmed
//! re-fit to reject gross outliers. Weights fold in cos(latitude) so
//! the oversampled polar rows do not dominate the fit.

use crate::erp::ValidityMask;
use crate::error::{Error, Result};
use crate::mask::dilate_euclid_wrap;
use std::f64::consts::PI;

/// Per-pixel metric depth on the ERP lattice.
#[derive(Debug, Clone)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
    pub validity: ValidityMask,
}

impl DepthMap {
    pub fn new_invalid(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            depth: vec![0.0; width * height],
            validity: ValidityMask::new(width, height, 0.0),
        }
    }

    /// Builds from a per-pixel function; `None` marks invalid pixels.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Self {
        let mut d = DepthMap::new_invalid(width, height);
        for y in 0..height {
            for x in 0..width {
                if let Some(v) = f(x, y) {
                    d.depth[y * width + x] = v;
                    d.validity.set(x, y, 1.0);
                }
            }
        }
        d
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::invalid("depth data length mismatch"));
        }
        let validity = ValidityMask::from_fn(width, height, |x, y| {
            let v = values[y * width + x];
            if v.is_finite() && v > 0.0 {
                1.0
            } else {
                0.0
            }
        });
        Ok(DepthMap {
            width,
            height,
            depth: values,
            validity,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        if self.validity.is_on(x, y) {
            Some(self.depth[y * self.width + x])
        } else {
            None
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.depth[y * self.width + x] = v;
        self.validity.set(x, y, 1.0);
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        self.validity.set(x, y, 0.0);
    }

    pub fn valid_count(&self) -> usize {
        self.validity.count_on()
    }

    pub fn max_valid(&self) -> Option<f64> {
        let mut m: Option<f64> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if let Some(d) = self.get(x, y) {
                    m = Some(m.map_or(d, |v: f64| v.max(d)));
                }
            }
        }
        m
    }

    /// Latitude of the pixel-center of row `y`.
    #[inline]
    pub fn row_lat(&self, y: usize) -> f64 {
        PI / 2.0 - PI * (y as f64 + 0.5) / self.height as f64
    }
}

/// Affine transform in disparity space mapping layer disparity into base
/// disparity: x_base = a·x_layer + b.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AffineDepthTransform {
    pub a: f64,
    pub b: f64,
}

impl AffineDepthTransform {
    pub const IDENTITY: AffineDepthTransform = AffineDepthTransform { a: 1.0, b: 0.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AlignmentReport {
    pub inlier_count: usize,
    pub rms_residual: f64,
    pub trimmed_iterations: usize,
}

/// Pixels usable for alignment: valid in both maps, outside the completed
/// (inpainted) region dilated by `feather`. Soft value is the min of the
/// two validities.
pub fn overlap_mask(
    layer: &DepthMap,
    completed: Option<&ValidityMask>,
    base: &DepthMap,
    feather: f64,
) -> Result<ValidityMask> {
    if layer.width != base.width || layer.height != base.height {
        return Err(Error::invalid("depth map lattices do not match"));
    }
    let excluded = completed.map(|c| {
        if feather > 0.0 {
            dilate_euclid_wrap(c, feather)
        } else {
            c.clone()
        }
    });
    Ok(ValidityMask::from_fn(layer.width, layer.height, |x, y| {
        if let Some(ex) = &excluded {
            if ex.is_on(x, y) {
                return 0.0;
            }
        }
        layer.validity.get(x, y).min(base.validity.get(x, y))
    }))
}

struct Sample {
    x: f64,
    y: f64,
    w: f64,
}

fn weighted_fit(samples: &[Sample], keep: &[bool]) -> Option<(f64, f64)> {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (s, k) in samples.iter().zip(keep) {
        if !*k {
            continue;
        }
        sw += s.w;
        sx += s.w * s.x;
        sy += s.w * s.y;
        sxx += s.w * s.x * s.x;
        sxy += s.w * s.x * s.y;
    }
    let denom = sw * sxx - sx * sx;
    if sw <= 0.0 || denom.abs() < 1e-300 {
        return None;
    }
    let a = (sw * sxy - sx * sy) / denom;
    let b = (sy - a * sx) / sw;
    Some((a, b))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|p, q| p.total_cmp(q));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

const TRIM_ROUNDS: usize = 2;
const TRIM_MAD_FACTOR: f64 = 3.0;

/// Weighted least squares in disparity space with trimmed re-fits.
pub fn estimate_affine_alignment(
    layer: &DepthMap,
    base: &DepthMap,
    overlap: &ValidityMask,
) -> Result<(AffineDepthTransform, AlignmentReport)> {
    if layer.width != base.width || layer.height != base.height {
        return Err(Error::invalid("depth map lattices do not match"));
    }
    if !overlap.same_size(layer.width, layer.height) {
        return Err(Error::invalid("overlap mask lattice does not match"));
    }
    let mut samples = Vec::new();
    for y in 0..layer.height {
        let cos_lat = layer.row_lat(y).cos().max(0.0);
        for x in 0..layer.width {
            let wgt = overlap.get(x, y) as f64;
            if wgt <= 0.0 {
                continue;
            }
            let (Some(dl), Some(db)) = (layer.get(x, y), base.get(x, y)) else {
                continue;
            };
            if dl <= 0.0 || db <= 0.0 {
                continue;
            }
            samples.push(Sample {
                x: 1.0 / dl,
                y: 1.0 / db,
                w: wgt * cos_lat,
            });
        }
    }
    let distinct = {
        let mut xs: Vec<f64> = samples.iter().map(|s| s.x).collect();
        xs.sort_by(|p, q| p.total_cmp(q));
        xs.dedup_by(|p, q| (*p - *q).abs() < 1e-15);
        xs.len()
    };
    if distinct < 2 {
        return Err(Error::Underdetermined(format!(
            "{} distinct layer disparities in overlap, need 2",
            distinct
        )));
    }

    let mut keep = vec![true; samples.len()];
    let (mut a, mut b) =
        weighted_fit(&samples, &keep).ok_or_else(|| Error::Underdetermined("singular normal equations".into()))?;
    let mut rounds = 0;
    for _ in 0..TRIM_ROUNDS {
        let residuals: Vec<f64> = samples
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(s, _)| a * s.x + b - s.y)
            .collect();
        if residuals.len() < 2 {
            break;
        }
        let med = median(&mut residuals.clone());
        let mut devs: Vec<f64> = residuals.iter().map(|r| (r - med).abs()).collect();
        let mad = median(&mut devs);
        if mad < 1e-14 {
            break; // already an exact fit; nothing to trim
        }
        let threshold = TRIM_MAD_FACTOR * mad;
        let mut changed = false;
        for (s, k) in samples.iter().zip(keep.iter_mut()) {
            if *k && (a * s.x + b - s.y - med).abs() > threshold {
                *k = false;
                changed = true;
            }
        }
        rounds += 1;
        if !changed {
            break;
        }
        match weighted_fit(&samples, &keep) {
            Some((na, nb)) => {
                a = na;
                b = nb;
            }
            None => break,
        }
    }
    if a <= 0.0 {
        return Err(Error::DegenerateAlignment(format!(
            "fitted scale a = {a} is not positive"
        )));
    }
    let mut sum_w = 0.0;
    let mut sum_sq = 0.0;
    let mut inliers = 0;
    for (s, k) in samples.iter().zip(&keep) {
        if !*k {
            continue;
        }
        let r = a * s.x + b - s.y;
        sum_w += s.w;
        sum_sq += s.w * r * r;
        inliers += 1;
    }
    let rms = if sum_w > 0.0 { (sum_sq / sum_w).sqrt() } else { 0.0 };
    Ok((
        AffineDepthTransform { a, b },
        AlignmentReport {
            inlier_count: inliers,
            rms_residual: rms,
            trimmed_iterations: rounds,
        },
    ))
}

/// Applies a disparity-space affine transform to a depth map. Pixels whose
/// transformed disparity is non-positive become invalid; the count of such
/// pixels is returned alongside.
pub fn apply_affine(d: &DepthMap, t: &AffineDepthTransform) -> (DepthMap, usize) {
    let mut out = DepthMap::new_invalid(d.width, d.height);
    let mut flagged = 0usize;
    for y in 0..d.height {
        for x in 0..d.width {
            if let Some(v) = d.get(x, y) {
                let disp = t.a / v + t.b;
                if disp > 0.0 {
                    out.set(x, y, 1.0 / disp);
                } else {
                    flagged += 1;
                }
            }
        }
    }
    (out, flagged)
}

/// Constant sky depth: kappa × the maximum valid depth over all layers.
pub fn sky_depth(stack_depths: &[&DepthMap], kappa: f64) -> Result<f64> {
    if !(kappa > 1.0) {
        return Err(Error::invalid("kappa must be strictly greater than 1"));
    }
    let max = stack_depths
        .iter()
        .filter_map(|d| d.max_valid())
        .fold(None::<f64>, |acc, v| Some(acc.map_or(v, |a| a.max(v))));
    match max {
        Some(m) => Ok(kappa * m),
        None => Err(Error::invalid("no valid depth in any layer")),
    }
}

/// Log-knee range compression: depths above the q-th percentile knee K map
/// to K·(1 + slope·ln(d/K)); below they pass through. Continuous and
/// strictly increasing.
pub fn adaptive_compress(d: &DepthMap, q: f64, slope: f64) -> Result<DepthMap> {
    if !(q > 50.0 && q < 100.0) {
        return Err(Error::invalid("percentile q must lie in (50, 100)"));
    }
    if !(slope > 0.0) {
        return Err(Error::invalid("slope must be positive"));
    }
    let mut values: Vec<f64> = Vec::new();
    for y in 0..d.height {
        for x in 0..d.width {
            if let Some(v) = d.get(x, y) {
                values.push(v);
            }
        }
    }
    if values.is_empty() {
        return Err(Error::invalid("no valid depths to compress"));
    }
    values.sort_by(|p, r| p.total_cmp(r));
    let rank = ((q / 100.0) * values.len() as f64).ceil() as usize;
    let knee = values[rank.clamp(1, values.len()) - 1];
    let mut out = d.clone();
    for y in 0..d.height {
        for x in 0..d.width {
            if let Some(v) = d.get(x, y) {
                if v > knee {
                    out.set(x, y, knee * (1.0 + slope * (v / knee).ln()));
                }
            }
        }
    }
    Ok(out)
}
