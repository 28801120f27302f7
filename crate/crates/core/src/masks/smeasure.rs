//! Structure measure for binary foreground maps.
//!
//! Combines an object-aware score (foreground/background mean and spread of
//! the prediction inside each ground-truth region) with a region-aware score
//! (SSIM-style block similarity over the four quadrants split at the
//! ground-truth centroid). Degenerate ground truths fall back to the
//! foreground fraction of the prediction.

use super::{BinaryMask, Result};

pub const S_MEASURE_ALPHA: f64 = 0.5;

const EPS: f64 = f64::EPSILON;

pub fn s_measure(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    s_measure_with_alpha(pred, gt, S_MEASURE_ALPHA)
}

pub fn s_measure_with_alpha(pred: &BinaryMask, gt: &BinaryMask, alpha: f64) -> Result<f64> {
    pred.check_same_shape(gt)?;
    if pred.bits() == gt.bits() {
        return Ok(1.0);
    }
    let y = gt.foreground_fraction();
    if y == 0.0 {
        return Ok(1.0 - pred.foreground_fraction());
    }
    if y == 1.0 {
        return Ok(pred.foreground_fraction());
    }
    let q = alpha * object_score(pred, gt) + (1.0 - alpha) * region_score(pred, gt);
    Ok(q.clamp(0.0, 1.0))
}

fn object_similarity(values: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = values.collect();
    let n = vals.len();
    if n == 0 {
        return 0.0;
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    2.0 * mean / (mean * mean + 1.0 + std + EPS)
}

fn object_score(pred: &BinaryMask, gt: &BinaryMask) -> f64 {
    let pairs = || pred.bits().iter().zip(gt.bits());
    let fg = object_similarity(pairs().filter(|(_, &g)| g).map(|(&p, _)| p as u8 as f64));
    let bg = object_similarity(
        pairs()
            .filter(|(_, &g)| !g)
            .map(|(&p, _)| (!p) as u8 as f64),
    );
    let u = gt.foreground_fraction();
    u * fg + (1.0 - u) * bg
}

/// Split point as a 1-based count of columns/rows in the left/top part.
fn centroid(gt: &BinaryMask) -> (usize, usize) {
    let total = gt.count();
    if total == 0 {
        return (
            round_half_up(gt.width() as f64 / 2.0),
            round_half_up(gt.height() as f64 / 2.0),
        );
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for (x, y) in gt.pixels() {
        sx += (x + 1) as f64;
        sy += (y + 1) as f64;
    }
    (
        round_half_up(sx / total as f64),
        round_half_up(sy / total as f64),
    )
}

fn round_half_up(v: f64) -> usize {
    (v + 0.5).floor() as usize
}

fn block_ssim(
    pred: &BinaryMask,
    gt: &BinaryMask,
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
) -> f64 {
    let n = (x1 - x0) * (y1 - y0);
    if n == 0 {
        return 0.0;
    }
    let mut px = Vec::with_capacity(n);
    let mut gy = Vec::with_capacity(n);
    for y in y0..y1 {
        for x in x0..x1 {
            px.push(pred.get(x, y) as u8 as f64);
            gy.push(gt.get(x, y) as u8 as f64);
        }
    }
    let nf = n as f64;
    let mx = px.iter().sum::<f64>() / nf;
    let my = gy.iter().sum::<f64>() / nf;
    let denom = nf - 1.0 + EPS;
    let sx = px.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / denom;
    let sy = gy.iter().map(|v| (v - my).powi(2)).sum::<f64>() / denom;
    let sxy = px
        .iter()
        .zip(&gy)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / denom;
    let alpha = 4.0 * mx * my * sxy;
    let beta = (mx * mx + my * my) * (sx + sy);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn region_score(pred: &BinaryMask, gt: &BinaryMask) -> f64 {
    let (w, h) = (gt.width(), gt.height());
    let (x, y) = centroid(gt);
    let (x, y) = (x.min(w), y.min(h));
    let area = (w * h) as f64;
    let w1 = (x * y) as f64 / area;
    let w2 = ((w - x) * y) as f64 / area;
    let w3 = (x * (h - y)) as f64 / area;
    let w4 = 1.0 - w1 - w2 - w3;
    w1 * block_ssim(pred, gt, 0, x, 0, y)
        + w2 * block_ssim(pred, gt, x, w, 0, y)
        + w3 * block_ssim(pred, gt, 0, x, y, h)
        + w4 * block_ssim(pred, gt, x, w, y, h)
}
