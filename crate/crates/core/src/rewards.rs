//! Verifiable task rewards and the weighted format/task composite.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    bbox_iou, contacts_to_rect, fold_pi, rect_iou, BBox, ContactPair, GeometryError, GraspRect,
};
use crate::masks::{s_measure, BinaryMask, MaskError};
use crate::parsing::{format_reward, is_valid, parse_response, Payload, TaskKind};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("invalid reward config: {0}")]
    Config(String),
    #[error("ground truth for task '{got}' supplied to a '{task}' reward")]
    TaskMismatch { task: TaskKind, got: TaskKind },
    #[error("ground-truth grasp set is empty")]
    EmptyGroundTruth,
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub type Result<T> = std::result::Result<T, RewardError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub tau_iou: f64,
    pub huber_delta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub image_w: f64,
    pub image_h: f64,
    pub contact_jaw: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            tau_iou: 0.5,
            huber_delta: 1.0,
            alpha: 0.1,
            beta: 0.9,
            image_w: 640.0,
            image_h: 480.0,
            contact_jaw: crate::geometry::DEFAULT_JAW_PX,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RewardError::Config(m));
        if !(self.tau_iou > 0.0 && self.tau_iou < 1.0) {
            return bad(format!("tau_iou must lie in (0,1), got {}", self.tau_iou));
        }
        if !(self.huber_delta > 0.0) {
            return bad(format!(
                "huber_delta must be positive, got {}",
                self.huber_delta
            ));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) || (self.alpha + self.beta - 1.0).abs() > 1e-9 {
            return bad(format!(
                "alpha and beta must be non-negative and sum to 1, got {} + {}",
                self.alpha, self.beta
            ));
        }
        if !(self.image_w > 0.0 && self.image_h > 0.0)
            || !self.image_w.is_finite()
            || !self.image_h.is_finite()
        {
            return bad(format!(
                "image size must be positive, got {}x{}",
                self.image_w, self.image_h
            ));
        }
        if !(self.contact_jaw > 0.0) || !self.contact_jaw.is_finite() {
            return bad(format!(
                "contact_jaw must be positive, got {}",
                self.contact_jaw
            ));
        }
        Ok(())
    }

    pub fn diagonal(&self) -> f64 {
        self.image_w.hypot(self.image_h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_format: f64,
    pub r_task: f64,
    pub r_total: f64,
    pub components: BTreeMap<String, f64>,
    pub valid: bool,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    Bbox(BBox),
    Seg { bbox: BBox, mask: BinaryMask },
    Grasp(Vec<GraspRect>),
    Contact(ContactPair),
}

impl GroundTruth {
    pub fn task(&self) -> TaskKind {
        match self {
            GroundTruth::Bbox(_) => TaskKind::Bbox,
            GroundTruth::Seg { .. } => TaskKind::Seg,
            GroundTruth::Grasp(_) => TaskKind::Grasp,
            GroundTruth::Contact(_) => TaskKind::Contact,
        }
    }
}

pub fn huber(x: f64, delta: f64) -> f64 {
    debug_assert!(delta > 0.0);
    let a = x.abs();
    if a <= delta {
        0.5 * x * x
    } else {
        delta * (a - 0.5 * delta)
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn reward_bbox(pred: &BBox, gt: &BBox, cfg: &RewardConfig) -> f64 {
    indicator(bbox_iou(pred, gt) >= cfg.tau_iou)
}

pub fn reward_seg(
    pred_box: &BBox,
    gt_box: &BBox,
    pred_mask: &BinaryMask,
    gt_mask: &BinaryMask,
    cfg: &RewardConfig,
) -> Result<f64> {
    let s = s_measure(pred_mask, gt_mask)?;
    Ok((reward_bbox(pred_box, gt_box, cfg) + s) / 2.0)
}

/// Sum of Huber terms over normalized position, width and the doubled-angle
/// unit vector.
pub fn grasp_huber_sum(pred: &GraspRect, gt: &GraspRect, cfg: &RewardConfig) -> f64 {
    let (tp, tg) = (2.0 * fold_pi(pred.theta), 2.0 * fold_pi(gt.theta));
    let d = cfg.huber_delta;
    huber((pred.cx - gt.cx) / cfg.image_w, d)
        + huber((pred.cy - gt.cy) / cfg.image_h, d)
        + huber(tp.cos() - tg.cos(), d)
        + huber(tp.sin() - tg.sin(), d)
        + huber((pred.opening - gt.opening) / cfg.image_w, d)
}

/// Best-matching ground truth: `(index, huber sum)`.
pub fn best_grasp_match(
    pred: &GraspRect,
    gts: &[GraspRect],
    cfg: &RewardConfig,
) -> Result<(usize, f64)> {
    gts.iter()
        .map(|g| grasp_huber_sum(pred, g, cfg))
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, s)| match best {
            Some((_, bs)) if bs <= s => best,
            _ => Some((i, s)),
        })
        .ok_or(RewardError::EmptyGroundTruth)
}

pub fn reward_grasp(pred: &GraspRect, gts: &[GraspRect], cfg: &RewardConfig) -> Result<f64> {
    let (_, sum) = best_grasp_match(pred, gts, cfg)?;
    Ok((1.0 - sum).max(0.0))
}

/// Total point distance under the better of the two point assignments, in
/// pixels, and whether the swapped assignment won.
pub fn contact_distance(pred: &ContactPair, gt: &ContactPair) -> (f64, bool) {
    let direct = pred.p1.distance(&gt.p1) + pred.p2.distance(&gt.p2);
    let swapped = pred.p1.distance(&gt.p2) + pred.p2.distance(&gt.p1);
    if swapped < direct {
        (swapped, true)
    } else {
        (direct, false)
    }
}

struct ContactTerms {
    iou: f64,
    distance: f64,
    swapped: bool,
    reward: f64,
}

fn contact_terms(pred: &ContactPair, gt: &ContactPair, cfg: &RewardConfig) -> Result<ContactTerms> {
    let rp = contacts_to_rect(pred, cfg.contact_jaw)?;
    let rg = contacts_to_rect(gt, cfg.contact_jaw)?;
    let iou = rect_iou(&rp, &rg);
    let (d, swapped) = contact_distance(pred, gt);
    let distance = d / cfg.diagonal();
    Ok(ContactTerms {
        iou,
        distance,
        swapped,
        reward: (indicator(iou >= cfg.tau_iou) - distance).max(0.0),
    })
}

pub fn reward_contact(pred: &ContactPair, gt: &ContactPair, cfg: &RewardConfig) -> Result<f64> {
    Ok(contact_terms(pred, gt, cfg)?.reward)
}

/// Scores a raw model output against ground truth.
///
/// For segmentation, `pred_mask` is the mask produced downstream of the
/// predicted box. Without one, the ground-truth mask clipped to the predicted
/// box stands in for it.
pub fn composite_reward(
    raw_text: &str,
    task: TaskKind,
    gt: &GroundTruth,
    pred_mask: Option<&BinaryMask>,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown> {
    cfg.validate()?;
    if gt.task() != task {
        return Err(RewardError::TaskMismatch {
            task,
            got: gt.task(),
        });
    }
    let resp = parse_response(raw_text, task);
    let r_format = format_reward(&resp);
    let valid = is_valid(&resp, task);
    let mut diagnostics = resp.diagnostics.clone();
    let mut components = BTreeMap::new();

    let r_task = match (resp.payload.filter(|_| valid), gt) {
        (None, _) => 0.0,
        (Some(Payload::Bbox(p)), GroundTruth::Bbox(g)) => {
            let iou = bbox_iou(&p, g);
            let r = reward_bbox(&p, g, cfg);
            components.insert("iou".into(), iou);
            components.insert("iou_indicator".into(), r);
            r
        }
        (Some(Payload::Bbox(p)), GroundTruth::Seg { bbox, mask }) => {
            let clipped;
            let pm = match pred_mask {
                Some(m) => m,
                None => {
                    diagnostics
                        .push("predicted mask: ground-truth mask clipped to predicted box".into());
                    clipped = mask.clipped_to(&p);
                    &clipped
                }
            };
            let ind = reward_bbox(&p, bbox, cfg);
            let s = s_measure(pm, mask)?;
            components.insert("iou".into(), bbox_iou(&p, bbox));
            components.insert("iou_indicator".into(), ind);
            components.insert("s_measure".into(), s);
            (ind + s) / 2.0
        }
        (Some(Payload::Grasp(p)), GroundTruth::Grasp(gts)) => {
            let jaw = gts.first().ok_or(RewardError::EmptyGroundTruth)?.jaw;
            let rect = p.to_rect(jaw)?;
            let (idx, sum) = best_grasp_match(&rect, gts, cfg)?;
            components.insert("huber_sum".into(), sum);
            components.insert("best_gt".into(), idx as f64);
            (1.0 - sum).max(0.0)
        }
        (Some(Payload::Contact(p)), GroundTruth::Contact(g)) => {
            let t = contact_terms(&p, g, cfg)?;
            components.insert("rect_iou".into(), t.iou);
            components.insert("iou_indicator".into(), indicator(t.iou >= cfg.tau_iou));
            components.insert("contact_distance".into(), t.distance);
            components.insert("assignment_swapped".into(), indicator(t.swapped));
            t.reward
        }
        // is_valid guarantees the payload shape matches the task
        (Some(_), _) => unreachable!("payload shape checked against task"),
    };

    Ok(RewardBreakdown {
        r_format,
        r_task,
        r_total: cfg.alpha * r_format + cfg.beta * r_task,
        components,
        valid,
        diagnostics,
    })
}
