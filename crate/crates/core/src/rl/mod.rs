//! Group-relative policy optimization objectives.
//!
//! Both losses are written as quantities to minimize. Gradients are taken
//! with respect to the new-policy token log-probabilities.

mod toy;

pub use toy::{
    train_toy, train_with_rewards, write_curve_csv, Algo, CurvePoint, Objective, Scene, SceneKind,
    ToyConfig, ToyPolicy, TrainResult,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RlError {
    #[error("group needs at least 2 responses, got {0}")]
    GroupTooSmall(usize),
    #[error("response {index}: {what} has {got} tokens, expected {expected}")]
    LengthMismatch {
        index: usize,
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("length mismatch: {0} vs {1}")]
    SequenceMismatch(usize, usize),
    #[error("response {0} is empty")]
    EmptyResponse(usize),
    #[error("empty sequence")]
    EmptySequence,
    #[error("{what}: expected {expected} entries, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid optimizer config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, RlError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptConfig {
    pub clip_eps: f64,
    pub kl_coeff: f64,
    pub std_floor: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            kl_coeff: 0.04,
            std_floor: 1e-8,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(RlError::Config(format!(
                "clip_eps must lie in (0,1), got {}",
                self.clip_eps
            )));
        }
        if !(self.kl_coeff >= 0.0) || !self.kl_coeff.is_finite() {
            return Err(RlError::Config(format!(
                "kl_coeff must be >= 0, got {}",
                self.kl_coeff
            )));
        }
        if !(self.std_floor > 0.0) {
            return Err(RlError::Config(format!(
                "std_floor must be positive, got {}",
                self.std_floor
            )));
        }
        Ok(())
    }
}

/// G responses sampled for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub rewards: Vec<f64>,
    pub lp_new: Vec<Vec<f64>>,
    pub lp_old: Vec<Vec<f64>>,
    pub lp_ref: Vec<Vec<f64>>,
}

impl RolloutGroup {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.rewards.len();
        for (what, v) in [
            ("lp_new", &self.lp_new),
            ("lp_old", &self.lp_old),
            ("lp_ref", &self.lp_ref),
        ] {
            if v.len() != g {
                return Err(RlError::Shape {
                    what,
                    expected: g,
                    got: v.len(),
                });
            }
        }
        for i in 0..g {
            let n = self.lp_new[i].len();
            if n == 0 {
                return Err(RlError::EmptyResponse(i));
            }
            for (what, v) in [("lp_old", &self.lp_old[i]), ("lp_ref", &self.lp_ref[i])] {
                if v.len() != n {
                    return Err(RlError::LengthMismatch {
                        index: i,
                        what,
                        expected: n,
                        got: v.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss: f64,
    pub clipped_fraction: Vec<f64>,
    pub mean_kl: f64,
    pub mean_ratio: f64,
}

impl LossReport {
    pub fn mean_clipped_fraction(&self) -> f64 {
        if self.clipped_fraction.is_empty() {
            0.0
        } else {
            self.clipped_fraction.iter().sum::<f64>() / self.clipped_fraction.len() as f64
        }
    }
}

/// Rewards standardized within the group with the population standard
/// deviation. A group whose rewards are all equal gets zero advantages.
pub fn group_advantage(rewards: &[f64], cfg: &OptConfig) -> Result<Vec<f64>> {
    let g = rewards.len();
    if g < 2 {
        return Err(RlError::GroupTooSmall(g));
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; g]);
    }
    let n = g as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(cfg.std_floor);
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(RlError::SequenceMismatch(a.len(), b.len()));
    }
    Ok(())
}

pub fn token_ratio(lp_new: &[f64], lp_old: &[f64]) -> Result<Vec<f64>> {
    check_pair(lp_new, lp_old)?;
    Ok(lp_new
        .iter()
        .zip(lp_old)
        .map(|(n, o)| (n - o).exp())
        .collect())
}

/// Length-normalized sequence importance weight.
pub fn sequence_ratio(lp_new: &[f64], lp_old: &[f64]) -> Result<f64> {
    check_pair(lp_new, lp_old)?;
    if lp_new.is_empty() {
        return Err(RlError::EmptySequence);
    }
    let s: f64 = lp_new.iter().zip(lp_old).map(|(n, o)| n - o).sum();
    Ok((s / lp_new.len() as f64).exp())
}

/// Per-token k3 estimate of KL(new ‖ ref).
pub fn kl_penalty(lp_new: &[f64], lp_ref: &[f64]) -> Result<Vec<f64>> {
    check_pair(lp_new, lp_ref)?;
    Ok(lp_new.iter().zip(lp_ref).map(|(n, r)| k3(*n, *r)).collect())
}

fn k3(lp_new: f64, lp_ref: f64) -> f64 {
    let d = lp_ref - lp_new;
    d.exp() - d - 1.0
}

fn dk3(lp_new: f64, lp_ref: f64) -> f64 {
    1.0 - (lp_ref - lp_new).exp()
}

fn clip(w: f64, eps: f64) -> f64 {
    w.clamp(1.0 - eps, 1.0 + eps)
}

fn is_clipped(w: f64, eps: f64) -> bool {
    w < 1.0 - eps || w > 1.0 + eps
}

/// Pessimistic clipped surrogate and its derivative with respect to `w`.
fn surrogate(w: f64, adv: f64, eps: f64) -> (f64, f64) {
    let plain = w * adv;
    let clipped = clip(w, eps) * adv;
    if plain <= clipped {
        (plain, adv)
    } else {
        (clipped, 0.0)
    }
}

fn check_advantages(group: &RolloutGroup, advantages: &[f64]) -> Result<()> {
    group.validate()?;
    if advantages.len() != group.len() {
        return Err(RlError::Shape {
            what: "advantages",
            expected: group.len(),
            got: advantages.len(),
        });
    }
    if group.is_empty() {
        return Err(RlError::GroupTooSmall(0));
    }
    Ok(())
}

pub fn grpo_loss(group: &RolloutGroup, advantages: &[f64], cfg: &OptConfig) -> Result<LossReport> {
    check_advantages(group, advantages)?;
    let g = group.len() as f64;
    let (mut total, mut kl_acc, mut ratio_acc) = (0.0, 0.0, 0.0);
    let mut clipped_fraction = Vec::with_capacity(group.len());
    for i in 0..group.len() {
        let (n, o, r) = (&group.lp_new[i], &group.lp_old[i], &group.lp_ref[i]);
        let len = n.len() as f64;
        let (mut obj, mut kl_sum, mut w_sum, mut clipped) = (0.0, 0.0, 0.0, 0usize);
        for t in 0..n.len() {
            let w = (n[t] - o[t]).exp();
            let kl = k3(n[t], r[t]);
            obj += surrogate(w, advantages[i], cfg.clip_eps).0 - cfg.kl_coeff * kl;
            kl_sum += kl;
            w_sum += w;
            clipped += is_clipped(w, cfg.clip_eps) as usize;
        }
        total += obj / len;
        kl_acc += kl_sum / len;
        ratio_acc += w_sum / len;
        clipped_fraction.push(clipped as f64 / len);
    }
    Ok(LossReport {
        loss: -total / g,
        clipped_fraction,
        mean_kl: kl_acc / g,
        mean_ratio: ratio_acc / g,
    })
}

pub fn gspo_loss(group: &RolloutGroup, advantages: &[f64], cfg: &OptConfig) -> Result<LossReport> {
    check_advantages(group, advantages)?;
    let g = group.len() as f64;
    let (mut total, mut kl_acc, mut ratio_acc) = (0.0, 0.0, 0.0);
    let mut clipped_fraction = Vec::with_capacity(group.len());
    for i in 0..group.len() {
        let (n, r) = (&group.lp_new[i], &group.lp_ref[i]);
        let s = sequence_ratio(n, &group.lp_old[i])?;
        let kl_mean = n.iter().zip(r).map(|(a, b)| k3(*a, *b)).sum::<f64>() / n.len() as f64;
        total += surrogate(s, advantages[i], cfg.clip_eps).0 - cfg.kl_coeff * kl_mean;
        kl_acc += kl_mean;
        ratio_acc += s;
        clipped_fraction.push(if is_clipped(s, cfg.clip_eps) {
            1.0
        } else {
            0.0
        });
    }
    Ok(LossReport {
        loss: -total / g,
        clipped_fraction,
        mean_kl: kl_acc / g,
        mean_ratio: ratio_acc / g,
    })
}

/// d grpo_loss / d lp_new, same shape as `group.lp_new`.
pub fn grpo_grad(
    group: &RolloutGroup,
    advantages: &[f64],
    cfg: &OptConfig,
) -> Result<Vec<Vec<f64>>> {
    check_advantages(group, advantages)?;
    let g = group.len() as f64;
    Ok((0..group.len())
        .map(|i| {
            let (n, o, r) = (&group.lp_new[i], &group.lp_old[i], &group.lp_ref[i]);
            let len = n.len() as f64;
            (0..n.len())
                .map(|t| {
                    let w = (n[t] - o[t]).exp();
                    let dsurr = surrogate(w, advantages[i], cfg.clip_eps).1 * w;
                    -(1.0 / g) * ((dsurr - cfg.kl_coeff * dk3(n[t], r[t])) / len)
                })
                .collect()
        })
        .collect())
}

/// d gspo_loss / d lp_new, same shape as `group.lp_new`.
pub fn gspo_grad(
    group: &RolloutGroup,
    advantages: &[f64],
    cfg: &OptConfig,
) -> Result<Vec<Vec<f64>>> {
    check_advantages(group, advantages)?;
    let g = group.len() as f64;
    let mut out = Vec::with_capacity(group.len());
    for i in 0..group.len() {
        let (n, r) = (&group.lp_new[i], &group.lp_ref[i]);
        let len = n.len() as f64;
        let s = sequence_ratio(n, &group.lp_old[i])?;
        let dsurr = surrogate(s, advantages[i], cfg.clip_eps).1 * s;
        out.push(
            (0..n.len())
                .map(|t| -(1.0 / g) * (dsurr / len - cfg.kl_coeff * dk3(n[t], r[t]) / len))
                .collect(),
        );
    }
    Ok(out)
}
