//! Desk-scale RLVR loop on synthetic grasp scenes.
//!
//! The action space is a grid of grasp cells: `nx × ny` centers times `na`
//! closing angles. The policy is a factored categorical distribution with one
//! logit vector per axis, so `log π(a) = log p_x(ix) + log p_y(iy) + log p_θ(ia)`.
//! Each response is a single token. The reference policy is the uniform
//! initial policy and never changes. All randomness comes from a
//! `ChaCha8Rng` seeded with the caller's seed.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    group_advantage, grpo_grad, grpo_loss, gspo_grad, gspo_loss, OptConfig, Result, RlError,
    RolloutGroup,
};
use crate::geometry::{rect_to_contacts, ContactPair, GraspRect};
use crate::masks::{compute_contacts, BinaryMask};
use crate::parsing::{canonical_response, GraspPose, Payload, TaskKind};
use crate::rewards::{composite_reward, GroundTruth, RewardConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Grpo,
    Gspo,
}

impl FromStr for Algo {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "grpo" => Ok(Algo::Grpo),
            "gspo" => Ok(Algo::Gspo),
            _ => Err(format!("unknown algorithm '{s}' (expected grpo or gspo)")),
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algo::Grpo => "grpo",
            Algo::Gspo => "gspo",
        })
    }
}

/// What a sampled grasp cell is scored against.
///
/// `Bandit` pays the full task reward only on the scene's optimum cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Grasp,
    Contact,
    Bandit,
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "grasp" => Ok(Objective::Grasp),
            "contact" => Ok(Objective::Contact),
            "bandit" => Ok(Objective::Bandit),
            _ => Err(format!(
                "unknown objective '{s}' (expected grasp, contact or bandit)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    Rect,
    Disk,
}

impl FromStr for SceneKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rect" => Ok(SceneKind::Rect),
            "disk" => Ok(SceneKind::Disk),
            _ => Err(format!("unknown scene '{s}' (expected rect or disk)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyConfig {
    pub iterations: usize,
    pub group_size: usize,
    pub algo: Algo,
    pub objective: Objective,
    pub scene: SceneKind,
    pub learning_rate: f64,
    /// Global norm cap on the logit gradient.
    pub max_grad_norm: f64,
    /// `[nx, ny, n_angles]`
    pub grid: [usize; 3],
    pub image_size: usize,
    pub opt: OptConfig,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            group_size: 8,
            algo: Algo::Grpo,
            objective: Objective::Grasp,
            scene: SceneKind::Rect,
            learning_rate: 1.0,
            max_grad_norm: 1.0,
            grid: [16, 16, 8],
            image_size: 64,
            opt: OptConfig::default(),
        }
    }
}

impl ToyConfig {
    pub fn validate(&self) -> Result<()> {
        self.opt.validate()?;
        if self.group_size < 2 {
            return Err(RlError::GroupTooSmall(self.group_size));
        }
        if self.iterations == 0 {
            return Err(RlError::Config("iterations must be at least 1".into()));
        }
        if self.grid.iter().any(|&n| n < 2) {
            return Err(RlError::Config(format!(
                "every grid axis needs at least 2 cells, got {:?}",
                self.grid
            )));
        }
        if self.image_size < self.grid[0].max(self.grid[1]) {
            return Err(RlError::Config(
                "image smaller than the position grid".into(),
            ));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(RlError::Config(format!(
                "max_grad_norm must be positive, got {}",
                self.max_grad_norm
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(RlError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    /// Default grid for an objective. The bandit pays out on one cell only,
    /// so it gets a grid small enough to be found by sampling.
    pub fn default_grid(objective: Objective) -> [usize; 3] {
        match objective {
            Objective::Bandit => [8, 8, 4],
            _ => [16, 16, 8],
        }
    }

    pub fn num_actions(&self) -> usize {
        self.grid.iter().product()
    }

    fn cell(&self) -> (f64, f64) {
        let s = self.image_size as f64;
        (s / self.grid[0] as f64, s / self.grid[1] as f64)
    }

    fn scale(&self) -> f64 {
        self.image_size as f64 / 64.0
    }

    fn angle_deg(&self, ia: usize) -> f64 {
        ia as f64 * 180.0 / self.grid[2] as f64
    }

    fn flat(&self, a: [usize; 3]) -> usize {
        (a[0] * self.grid[1] + a[1]) * self.grid[2] + a[2]
    }

    fn unflat(&self, k: usize) -> [usize; 3] {
        let na = self.grid[2];
        let ny = self.grid[1];
        [k / (ny * na), (k / na) % ny, k % na]
    }

    fn reward_config(&self) -> RewardConfig {
        RewardConfig {
            image_w: self.image_size as f64,
            image_h: self.image_size as f64,
            contact_jaw: 8.0 * self.scale(),
            ..RewardConfig::default()
        }
    }
}

/// A single object on a blank image with its known good grasps.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub kind: SceneKind,
    pub mask: BinaryMask,
    pub gt_grasps: Vec<GraspRect>,
    pub gt_contacts: ContactPair,
    /// Grasp width every action uses.
    pub opening: f64,
    /// The unique best cell, when there is one.
    pub optimum: Option<[usize; 3]>,
}

impl Scene {
    pub fn generate(kind: SceneKind, cfg: &ToyConfig, rng: &mut impl Rng) -> Result<Scene> {
        let [nx, ny, na] = cfg.grid;
        let cell = [
            rng.gen_range(nx / 4..nx - nx / 4),
            rng.gen_range(ny / 4..ny - ny / 4),
        ];
        let ia = rng.gen_range(0..na);
        let (cw, ch) = cfg.cell();
        let (cx, cy) = ((cell[0] as f64 + 0.5) * cw, (cell[1] as f64 + 0.5) * ch);
        let s = cfg.scale();
        let jaw = 8.0 * s;
        let grasp = |deg: f64, opening: f64| {
            GraspRect::from_degrees(cx, cy, deg, opening, jaw)
                .map_err(|e| RlError::Config(e.to_string()))
        };
        let (mask, gt_grasps, opening, optimum) = match kind {
            SceneKind::Rect => {
                let (narrow, long) = (10.0 * s, 24.0 * s);
                let body = grasp(cfg.angle_deg(ia), narrow)?.with_jaw(long);
                let mask = BinaryMask::from_fn(cfg.image_size, cfg.image_size, |x, y| {
                    body.contains(&crate::geometry::Point2::new(x as f64, y as f64))
                });
                let opening = narrow + 6.0 * s;
                (
                    mask,
                    vec![grasp(cfg.angle_deg(ia), opening)?],
                    opening,
                    Some([cell[0], cell[1], ia]),
                )
            }
            SceneKind::Disk => {
                let r = 8.0 * s;
                let mask = BinaryMask::disk(cfg.image_size, cfg.image_size, cx, cy, r);
                let opening = 2.0 * r + 6.0 * s;
                let gts = (0..na)
                    .map(|a| grasp(cfg.angle_deg(a), opening))
                    .collect::<Result<Vec<_>>>()?;
                (mask, gts, opening, None)
            }
        };
        let gt_contacts =
            compute_contacts(&gt_grasps[0], &mask).map_err(|e| RlError::Config(e.to_string()))?;
        Ok(Scene {
            kind,
            mask,
            gt_grasps,
            gt_contacts,
            opening,
            optimum,
        })
    }

    fn action_pose(&self, a: [usize; 3], cfg: &ToyConfig) -> GraspPose {
        let (cw, ch) = cfg.cell();
        GraspPose::from_degrees(
            (a[0] as f64 + 0.5) * cw,
            (a[1] as f64 + 0.5) * ch,
            cfg.angle_deg(a[2]),
            self.opening,
        )
    }

    /// Model output the policy emits for cell `a`.
    pub fn response_text(&self, a: [usize; 3], cfg: &ToyConfig) -> String {
        let pose = self.action_pose(a, cfg);
        let think = format!("cell {} {} {}", a[0], a[1], a[2]);
        let payload = match cfg.objective {
            Objective::Contact => {
                let rect = pose.to_rect(8.0 * cfg.scale()).expect("positive opening");
                let c =
                    compute_contacts(&rect, &self.mask).unwrap_or_else(|_| rect_to_contacts(&rect));
                Payload::Contact(c)
            }
            _ => Payload::Grasp(pose),
        };
        canonical_response(&think, &payload)
    }

    /// Composite reward of every cell, indexed like the flattened grid.
    pub fn reward_table(&self, cfg: &ToyConfig) -> Result<Vec<f64>> {
        let rc = cfg.reward_config();
        let reward_err = |e: crate::rewards::RewardError| RlError::Config(e.to_string());
        if cfg.objective == Objective::Bandit {
            let opt = self.optimum.ok_or_else(|| {
                RlError::Config("bandit objective needs a scene with a unique optimum".into())
            })?;
            let k = cfg.flat(opt);
            return Ok((0..cfg.num_actions())
                .map(|i| rc.alpha + if i == k { rc.beta } else { 0.0 })
                .collect());
        }
        let (task, gt) = match cfg.objective {
            Objective::Contact => (TaskKind::Contact, GroundTruth::Contact(self.gt_contacts)),
            _ => (TaskKind::Grasp, GroundTruth::Grasp(self.gt_grasps.clone())),
        };
        (0..cfg.num_actions())
            .map(|k| {
                let text = self.response_text(cfg.unflat(k), cfg);
                composite_reward(&text, task, &gt, None, &rc)
                    .map(|b| b.r_total)
                    .map_err(reward_err)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    pub logits: [Vec<f64>; 3],
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

impl ToyPolicy {
    pub fn uniform(grid: [usize; 3]) -> Self {
        Self {
            logits: grid.map(|n| vec![0.0; n]),
        }
    }

    pub fn probs(&self) -> [Vec<f64>; 3] {
        [
            softmax(&self.logits[0]),
            softmax(&self.logits[1]),
            softmax(&self.logits[2]),
        ]
    }

    pub fn log_prob(&self, a: [usize; 3]) -> f64 {
        let p = self.probs();
        (0..3).map(|k| p[k][a[k]].ln()).sum()
    }

    /// Most likely cell; per-axis argmax, lowest index on ties.
    pub fn argmax(&self) -> [usize; 3] {
        self.logits.clone().map(|l| {
            l.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                    if v > best.1 {
                        (i, v)
                    } else {
                        best
                    }
                })
                .0
        })
    }

    pub fn expected_reward(&self, table: &[f64], cfg: &ToyConfig) -> f64 {
        let p = self.probs();
        (0..table.len())
            .map(|k| {
                let a = cfg.unflat(k);
                p[0][a[0]] * p[1][a[1]] * p[2][a[2]] * table[k]
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub mean_reward: f64,
    pub loss: f64,
    pub clipped_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub curve: Vec<CurvePoint>,
    /// Exact expected reward of the uniform initial policy.
    pub baseline_reward: f64,
    /// Exact expected reward of the final policy.
    pub final_expected_reward: f64,
    pub final_argmax: [usize; 3],
    pub optimum: Option<[usize; 3]>,
    pub policy: ToyPolicy,
    pub scene: Scene,
}

/// Runs the trainer on a caller-supplied reward table (one entry per cell).
pub fn train_with_rewards(
    rng: &mut ChaCha8Rng,
    table: &[f64],
    cfg: &ToyConfig,
) -> Result<(Vec<CurvePoint>, ToyPolicy)> {
    cfg.validate()?;
    if table.len() != cfg.num_actions() {
        return Err(RlError::Shape {
            what: "reward table",
            expected: cfg.num_actions(),
            got: table.len(),
        });
    }
    let mut policy = ToyPolicy::uniform(cfg.grid);
    // one token per factor; the reference is the uniform start
    let lp_ref: Vec<f64> = cfg.grid.iter().map(|&n| -(n as f64).ln()).collect();
    let mut curve = Vec::with_capacity(cfg.iterations);
    for iteration in 0..cfg.iterations {
        let probs = policy.probs();
        let dists = probs
            .clone()
            .map(|p| WeightedIndex::new(p).expect("softmax weights are positive"));
        let actions: Vec<[usize; 3]> = (0..cfg.group_size)
            .map(|_| {
                [
                    dists[0].sample(rng),
                    dists[1].sample(rng),
                    dists[2].sample(rng),
                ]
            })
            .collect();
        let rewards: Vec<f64> = actions.iter().map(|a| table[cfg.flat(*a)]).collect();
        let lp: Vec<Vec<f64>> = actions
            .iter()
            .map(|a| (0..3).map(|k| probs[k][a[k]].ln()).collect())
            .collect();
        let group = RolloutGroup {
            rewards: rewards.clone(),
            lp_new: lp.clone(),
            lp_old: lp,
            lp_ref: vec![lp_ref.clone(); cfg.group_size],
        };
        let adv = group_advantage(&rewards, &cfg.opt)?;
        let (report, grad) = match cfg.algo {
            Algo::Grpo => (
                grpo_loss(&group, &adv, &cfg.opt)?,
                grpo_grad(&group, &adv, &cfg.opt)?,
            ),
            Algo::Gspo => (
                gspo_loss(&group, &adv, &cfg.opt)?,
                gspo_grad(&group, &adv, &cfg.opt)?,
            ),
        };
        // d log p_k(a) / d logit_k = onehot(a) - p_k
        let steps: Vec<Vec<f64>> = (0..3)
            .map(|k| {
                let mut step = vec![0.0; cfg.grid[k]];
                for (a, g) in actions.iter().zip(&grad) {
                    for (j, s) in step.iter_mut().enumerate() {
                        let onehot = if j == a[k] { 1.0 } else { 0.0 };
                        *s += g[k] * (onehot - probs[k][j]);
                    }
                }
                step
            })
            .collect();
        let norm = steps.iter().flatten().map(|s| s * s).sum::<f64>().sqrt();
        let lr = cfg.learning_rate
            * if norm > cfg.max_grad_norm {
                cfg.max_grad_norm / norm
            } else {
                1.0
            };
        for (logits, step) in policy.logits.iter_mut().zip(&steps) {
            for (l, s) in logits.iter_mut().zip(step) {
                *l -= lr * s;
            }
        }
        curve.push(CurvePoint {
            iteration,
            mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
            loss: report.loss,
            clipped_fraction: report.mean_clipped_fraction(),
        });
    }
    Ok((curve, policy))
}

pub fn train_toy(seed: u64, cfg: &ToyConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = Scene::generate(cfg.scene, cfg, &mut rng)?;
    let table = scene.reward_table(cfg)?;
    let baseline_reward = table.iter().sum::<f64>() / table.len() as f64;
    let (curve, policy) = train_with_rewards(&mut rng, &table, cfg)?;
    Ok(TrainResult {
        final_expected_reward: policy.expected_reward(&table, cfg),
        final_argmax: policy.argmax(),
        optimum: scene.optimum,
        baseline_reward,
        curve,
        policy,
        scene,
    })
}

pub fn write_curve_csv<W: Write>(curve: &[CurvePoint], mut w: W) -> io::Result<()> {
    writeln!(w, "iteration,mean_reward,loss,clipped_fraction")?;
    for p in curve {
        writeln!(
            w,
            "{},{},{},{}",
            p.iteration, p.mean_reward, p.loss, p.clipped_fraction
        )?;
    }
    Ok(())
}
