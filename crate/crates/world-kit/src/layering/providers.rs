//! External-model provider interfaces and their file-based protocol.
//!
//! A provider is an external process. The toolkit writes a request
//! directory containing `request.json` plus the referenced rasters, invokes
//! the configured command with the request and response directories as its
//! last two arguments, and reads the response directory back:
//!
//! - `request.json`: `{"op": "complete"|"detect"|"segment", "image": "in.png",
//!   "mask": "mask.png", "labels": [...]}`
//! - response: `response.json` plus `out.png` (complete), `boxes.json`
//!   (detect) or `masks/*.png` (segment).
//!
//! Responses whose dimensions do not match the request are protocol errors.

use crate::erp::{ErpImage, Raster, ValidityMask};
use crate::error::{Error, Result};
use crate::io;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

/// Fills the masked region of a panorama; the caller copies the filled
/// pixels back verbatim.
pub trait CompletionProvider {
    fn complete(&self, image: &ErpImage, holes: &ValidityMask) -> Result<ErpImage>;
}

/// Plain rectangle in the coordinate space of the raster handed to the
/// detector (padded space when the caller padded).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectedBox {
    pub label: String,
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub score: f32,
}

pub trait DetectionProvider {
    fn detect(&self, image: &Raster, labels: &[String]) -> Result<Vec<DetectedBox>>;
}

pub trait SegmentationProvider {
    fn segment(&self, image: &Raster, boxes: &[DetectedBox]) -> Result<Vec<ValidityMask>>;
}

#[derive(Serialize, Deserialize)]
struct RequestJson {
    op: String,
    image: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    labels: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ResponseJson {
    status: String,
}

/// Wrap-aware diffusion-free hole filling: each hole run is seeded by
/// linear interpolation between its valid row endpoints (modulo W), then a
/// few Jacobi passes of 4-neighbor averaging smooth the seams between runs.
#[derive(Debug, Clone)]
pub struct NeighborFill {
    pub smoothing_iterations: usize,
}

impl Default for NeighborFill {
    fn default() -> Self {
        NeighborFill {
            smoothing_iterations: 25,
        }
    }
}

impl CompletionProvider for NeighborFill {
    fn complete(&self, image: &ErpImage, holes: &ValidityMask) -> Result<ErpImage> {
        if !holes.same_size(image.width(), image.height()) {
            return Err(Error::invalid("hole mask lattice does not match image"));
        }
        let (w, h, ch) = (image.width(), image.height(), image.channels());
        let mut out = image.raster().clone();

        // row-wise seeding with wrap-aware endpoints
        for y in 0..h {
            let valid: Vec<bool> = (0..w).map(|x| !holes.is_on(x, y)).collect();
            if valid.iter().all(|v| !*v) {
                continue; // fully-hole row handled by the column pass below
            }
            let mut x = 0usize;
            while x < w {
                if valid[x] {
                    x += 1;
                    continue;
                }
                // run of holes starting at x; find it modulo wrap
                let mut start = x;
                while !valid[(start + w - 1) % w] && start != (x + 1) % w {
                    start = (start + w - 1) % w;
                    if start == x {
                        break;
                    }
                }
                let left = (start + w - 1) % w;
                let mut len = 0usize;
                let mut p = start;
                while !valid[p] {
                    len += 1;
                    p = (p + 1) % w;
                }
                let right = p;
                for i in 0..len {
                    let t = (i + 1) as f32 / (len + 1) as f32;
                    let xi = (start + i) % w;
                    for c in 0..ch {
                        let a = out.get(left, y, c);
                        let b = out.get(right, y, c);
                        out.set(xi, y, c, a * (1.0 - t) + b * t);
                    }
                }
                x = if right > x { right } else { w };
            }
        }
        // fully-hole rows copy the nearest seeded row
        for y in 0..h {
            if (0..w).all(|x| holes.is_on(x, y)) {
                let mut src = None;
                for d in 1..h {
                    if y >= d && !(0..w).all(|x| holes.is_on(x, y - d)) {
                        src = Some(y - d);
                        break;
                    }
                    if y + d < h && !(0..w).all(|x| holes.is_on(x, y + d)) {
                        src = Some(y + d);
                        break;
                    }
                }
                if let Some(sy) = src {
                    for x in 0..w {
                        for c in 0..ch {
                            let v = out.get(x, sy, c);
                            out.set(x, y, c, v);
                        }
                    }
                }
            }
        }
        // Jacobi smoothing over hole pixels only
        for _ in 0..self.smoothing_iterations {
            let prev = out.clone();
            for y in 0..h {
                for x in 0..w {
                    if !holes.is_on(x, y) {
                        continue;
                    }
                    let xm = (x + w - 1) % w;
                    let xp = (x + 1) % w;
                    let ym = y.saturating_sub(1);
                    let yp = (y + 1).min(h - 1);
                    for c in 0..ch {
                        let v = 0.25
                            * (prev.get(xm, y, c)
                                + prev.get(xp, y, c)
                                + prev.get(x, ym, c)
                                + prev.get(x, yp, c));
                        out.set(x, y, c, v);
                    }
                }
            }
        }
        ErpImage::new(out)
    }
}

/// Provider backed by an external command exchanging files. The command is
/// invoked as `argv... <request_dir> <response_dir>` and must exit 0 within
/// the timeout.
#[derive(Debug, Clone)]
pub struct FileProvider {
    pub command: Vec<String>,
    pub workspace: PathBuf,
    pub timeout: Duration,
}

impl FileProvider {
    pub fn new(command: Vec<String>, workspace: impl Into<PathBuf>) -> Self {
        FileProvider {
            command,
            workspace: workspace.into(),
            timeout: Duration::from_secs(300),
        }
    }

    fn fresh_dirs(&self) -> Result<(PathBuf, PathBuf)> {
        for seq in 0..u32::MAX {
            let request = self.workspace.join(format!("request-{seq:04}"));
            let response = self.workspace.join(format!("response-{seq:04}"));
            if !request.exists() && !response.exists() {
                std::fs::create_dir_all(&request)?;
                std::fs::create_dir_all(&response)?;
                return Ok((request, response));
            }
        }
        Err(Error::invalid("provider workspace exhausted"))
    }

    fn invoke(&self, request: &Path, response: &Path) -> Result<()> {
        if self.command.is_empty() {
            return Err(Error::Protocol("provider command is empty".into()));
        }
        let mut cmd = std::process::Command::new(&self.command[0]);
        cmd.args(&self.command[1..]).arg(request).arg(response);
        let mut child = cmd
            .spawn()
            .map_err(|e| Error::Protocol(format!("failed to spawn provider: {e}")))?;
        let deadline = Instant::now() + self.timeout;
        loop {
            match child.try_wait() {
                Ok(Some(status)) => {
                    if !status.success() {
                        return Err(Error::Protocol(format!("provider exited with {status}")));
                    }
                    break;
                }
                Ok(None) => {
                    if Instant::now() > deadline {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(Error::invalid("provider timed out"));
                    }
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(e) => return Err(Error::Protocol(format!("provider wait failed: {e}"))),
            }
        }
        let response_json = response.join("response.json");
        let text = std::fs::read_to_string(&response_json)
            .map_err(|e| Error::Protocol(format!("missing response.json: {e}")))?;
        let parsed: ResponseJson =
            serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("bad response.json: {e}")))?;
        if parsed.status != "ok" {
            return Err(Error::Protocol(format!("provider status {:?}", parsed.status)));
        }
        Ok(())
    }

    fn write_request(
        &self,
        dir: &Path,
        op: &str,
        image: &Raster,
        mask: Option<&ValidityMask>,
        labels: &[String],
    ) -> Result<()> {
        io::save_color_png(dir.join("in.png"), image)?;
        if let Some(m) = mask {
            io::save_mask_png(dir.join("mask.png"), m)?;
        }
        let req = RequestJson {
            op: op.to_string(),
            image: "in.png".to_string(),
            mask: mask.map(|_| "mask.png".to_string()),
            labels: labels.to_vec(),
        };
        std::fs::write(dir.join("request.json"), serde_json::to_string_pretty(&req)?)?;
        Ok(())
    }
}

impl CompletionProvider for FileProvider {
    fn complete(&self, image: &ErpImage, holes: &ValidityMask) -> Result<ErpImage> {
        let (request, response) = self.fresh_dirs()?;
        self.write_request(&request, "complete", image.raster(), Some(holes), &[])?;
        self.invoke(&request, &response)?;
        let out = io::load_color_png(response.join("out.png"))?;
        if out.width() != image.width() || out.height() != image.height() {
            return Err(Error::Protocol(format!(
                "out.png is {}x{}, request was {}x{}",
                out.width(),
                out.height(),
                image.width(),
                image.height()
            )));
        }
        ErpImage::new(out)
    }
}

impl DetectionProvider for FileProvider {
    fn detect(&self, image: &Raster, labels: &[String]) -> Result<Vec<DetectedBox>> {
        let (request, response) = self.fresh_dirs()?;
        self.write_request(&request, "detect", image, None, labels)?;
        self.invoke(&request, &response)?;
        let text = std::fs::read_to_string(response.join("boxes.json"))
            .map_err(|e| Error::Protocol(format!("missing boxes.json: {e}")))?;
        let boxes: Vec<DetectedBox> =
            serde_json::from_str(&text).map_err(|e| Error::Protocol(format!("bad boxes.json: {e}")))?;
        for b in &boxes {
            if b.u_min < 0.0 || b.u_max > image.width() as f64 || b.v_min < 0.0 || b.v_max > image.height() as f64
            {
                return Err(Error::Protocol(format!(
                    "box {:?} outside the request image",
                    (b.u_min, b.u_max, b.v_min, b.v_max)
                )));
            }
        }
        Ok(boxes)
    }
}

impl SegmentationProvider for FileProvider {
    fn segment(&self, image: &Raster, boxes: &[DetectedBox]) -> Result<Vec<ValidityMask>> {
        let (request, response) = self.fresh_dirs()?;
        self.write_request(&request, "segment", image, None, &[])?;
        std::fs::write(
            request.join("boxes.json"),
            serde_json::to_string_pretty(boxes)?,
        )?;
        self.invoke(&request, &response)?;
        let mut masks = Vec::with_capacity(boxes.len());
        for i in 0..boxes.len() {
            let path = response.join("masks").join(format!("{i:03}.png"));
            let mask = io::load_mask_png(&path)
                .map_err(|e| Error::Protocol(format!("missing mask {i:03}.png: {e}")))?;
            if !mask.same_size(image.width(), image.height()) {
                return Err(Error::Protocol(format!(
                    "mask {i:03}.png is {}x{}, request was {}x{}",
                    mask.width,
                    mask.height,
                    image.width(),
                    image.height()
                )));
            }
            masks.push(mask);
        }
        Ok(masks)
    }
}
