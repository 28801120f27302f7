//! Binary segmentation masks and the metrics computed on them.

mod contacts;
mod smeasure;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::geometry::{BBox, Point2};

pub use contacts::{compute_contacts, project_to_boundary};
pub use smeasure::{s_measure, s_measure_with_alpha, S_MEASURE_ALPHA};

/// β² of the saliency F-measure.
pub const F_MEASURE_BETA2: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("mask bits length {got} does not match {width}x{height}")]
    Shape {
        width: usize,
        height: usize,
        got: usize,
    },
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("mask is empty")]
    Empty,
    #[error("ground-truth mask is empty, recall undefined")]
    EmptyGroundTruth,
    #[error("malformed run-length mask: {0}")]
    Rle(String),
    #[error("grasp closing axis never meets the mask")]
    Ungraspable,
}

pub type Result<T> = std::result::Result<T, MaskError>;

/// Row-major boolean raster.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BinaryMask({}x{}, {} set)",
            self.width,
            self.height,
            self.count()
        )
    }
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(MaskError::Shape {
                width,
                height,
                got: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    /// Filled disk of pixels whose centers lie within `radius`.
    pub fn disk(width: usize, height: usize, cx: f64, cy: f64, radius: f64) -> Self {
        Self::from_fn(width, height, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            dx * dx + dy * dy <= radius * radius
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        if x < self.width && y < self.height {
            self.bits[y * self.width + x] = value;
        }
    }

    /// Whether the pixel nearest to `p` is set.
    pub fn contains(&self, p: &Point2) -> bool {
        let (x, y) = (p.x.round(), p.y.round());
        x >= 0.0
            && y >= 0.0
            && x < self.width as f64
            && y < self.height as f64
            && self.bits[y as usize * self.width + x as usize]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn foreground_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            return 0.0;
        }
        self.count() as f64 / self.bits.len() as f64
    }

    /// Iterates `(x, y)` of set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub fn check_same_shape(&self, other: &BinaryMask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(MaskError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    /// Keeps only the pixels inside `b` (inclusive pixel indices).
    pub fn clipped_to(&self, b: &BBox) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| {
            self.get(x, y) && inside_inclusive(b, x, y)
        })
    }

    /// Uncompressed run-length form `w h; r0,r1,...`, runs alternating
    /// unset/set and starting with an unset run (possibly 0).
    pub fn to_rle(&self) -> String {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0usize;
        for &b in &self.bits {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        if len > 0 || runs.is_empty() {
            runs.push(len);
        }
        let body: Vec<String> = runs.iter().map(|r| r.to_string()).collect();
        format!("{} {}; {}", self.width, self.height, body.join(","))
    }

    pub fn from_rle(s: &str) -> Result<Self> {
        let bad = |m: &str| MaskError::Rle(m.to_string());
        let (dims, runs) = s.split_once(';').ok_or_else(|| bad("missing ';'"))?;
        let mut dims = dims.split_whitespace();
        let width: usize = dims
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad width"))?;
        let height: usize = dims
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad height"))?;
        if dims.next().is_some() {
            return Err(bad("trailing data after dimensions"));
        }
        let total = width
            .checked_mul(height)
            .ok_or_else(|| bad("dimensions overflow"))?;
        let mut bits = Vec::with_capacity(total);
        let mut value = false;
        let runs = runs.trim();
        if !runs.is_empty() {
            for tok in runs.split(',') {
                let n: usize = tok
                    .trim()
                    .parse()
                    .map_err(|_| MaskError::Rle(format!("bad run '{}'", tok.trim())))?;
                if bits.len() + n > total {
                    return Err(bad("runs exceed mask size"));
                }
                bits.extend(std::iter::repeat_n(value, n));
                value = !value;
            }
        }
        if bits.len() != total {
            return Err(MaskError::Rle(format!(
                "runs cover {} of {} pixels",
                bits.len(),
                total
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }
}

impl FromStr for BinaryMask {
    type Err = MaskError;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_rle(s)
    }
}

impl fmt::Display for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_rle())
    }
}

pub(crate) fn inside_inclusive(b: &BBox, x: usize, y: usize) -> bool {
    let (x, y) = (x as f64, y as f64);
    x >= b.x_min && x <= b.x_max && y >= b.y_min && y <= b.y_max
}

/// Pixel IoU; two empty masks count as a perfect match.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.check_same_shape(b)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// F-measure with the default β² = 0.3.
pub fn f_measure(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    f_measure_with_beta2(pred, gt, F_MEASURE_BETA2)
}

pub fn f_measure_with_beta2(pred: &BinaryMask, gt: &BinaryMask, beta2: f64) -> Result<f64> {
    pred.check_same_shape(gt)?;
    let (mut tp, mut pp, mut gp) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.bits.iter().zip(&gt.bits) {
        tp += (p && g) as usize;
        pp += p as usize;
        gp += g as usize;
    }
    if gp == 0 {
        return Err(MaskError::EmptyGroundTruth);
    }
    let precision = if pp == 0 { 0.0 } else { tp as f64 / pp as f64 };
    let recall = tp as f64 / gp as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 + beta2) * precision * recall / (beta2 * precision + recall))
}

/// Tight inclusive pixel box `(x_min, y_min, x_max, y_max)` of the set
/// pixels.
pub fn tight_bbox(m: &BinaryMask) -> Result<BBox> {
    let mut it = m.pixels();
    let (x0, y0) = it.next().ok_or(MaskError::Empty)?;
    let (mut x_min, mut x_max, mut y_min, mut y_max) = (x0, x0, y0, y0);
    for (x, y) in it {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    Ok(BBox {
        x_min: x_min as f64,
        y_min: y_min as f64,
        x_max: x_max as f64,
        y_max: y_max as f64,
    })
}
