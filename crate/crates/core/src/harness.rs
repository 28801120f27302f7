//! Benchmark evaluation: dataset and prediction JSONL, per-record metrics,
//! per (task, split) aggregation and report emission.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    angle_diff, bbox_ciou, bbox_giou, contacts_to_rect, rect_iou, BBox, ContactPair, GraspRect,
    Point2, DEFAULT_JAW_PX,
};
use crate::masks::{f_measure, s_measure, BinaryMask};
use crate::parsing::{canonical_response, is_valid, parse_response, GraspPose, Payload, TaskKind};

/// IoU a grasp must exceed to count as accurate.
pub const GACC_IOU: f64 = 0.25;
/// Angular deviation a grasp must stay below, in degrees.
pub const GACC_ANGLE_DEG: f64 = 30.0;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("line {line}: duplicate record_id '{id}'")]
    Duplicate { line: usize, id: String },
    #[error("prediction references unknown record_id '{0}'")]
    UnknownRecord(String),
    #[error("ground-truth grasp set is empty")]
    EmptyGroundTruth,
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[serde(alias = "Seen")]
    Seen,
    #[serde(alias = "Similar")]
    Similar,
    #[serde(alias = "Novel")]
    Novel,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Seen, Split::Similar, Split::Novel];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Seen => "seen",
            Split::Similar => "similar",
            Split::Novel => "novel",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "seen" => Ok(Split::Seen),
            "similar" => Ok(Split::Similar),
            "novel" => Ok(Split::Novel),
            _ => Err(format!("unknown split '{s}'")),
        }
    }
}

/// On-disk form of a dataset line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordJson {
    pub record_id: String,
    pub image_id: String,
    pub image_w: f64,
    pub image_h: f64,
    pub task: TaskKind,
    #[serde(default)]
    pub instruction: String,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_bbox: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_grasps: Option<Vec<[f64; 5]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_contacts: Option<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub record_id: String,
    pub image_id: String,
    pub image_w: f64,
    pub image_h: f64,
    pub task: TaskKind,
    pub instruction: String,
    pub split: Split,
    pub gt_bbox: Option<BBox>,
    pub gt_mask: Option<BinaryMask>,
    pub gt_grasps: Option<Vec<GraspRect>>,
    pub gt_contacts: Option<ContactPair>,
}

impl TryFrom<RecordJson> for DatasetRecord {
    type Error = String;

    fn try_from(j: RecordJson) -> std::result::Result<Self, String> {
        if !(j.image_w > 0.0 && j.image_h > 0.0) {
            return Err(format!(
                "image size must be positive, got {}x{}",
                j.image_w, j.image_h
            ));
        }
        let gt_bbox = j
            .gt_bbox
            .map(|[a, b, c, d]| BBox::new(a, b, c, d))
            .transpose()
            .map_err(|e| format!("gt_bbox: {e}"))?;
        let gt_mask = j
            .gt_mask
            .as_deref()
            .map(BinaryMask::from_rle)
            .transpose()
            .map_err(|e| format!("gt_mask: {e}"))?;
        let gt_grasps = j
            .gt_grasps
            .map(|v| {
                v.iter()
                    .map(|&[cx, cy, deg, opening, jaw]| {
                        GraspRect::from_degrees(cx, cy, deg, opening, jaw)
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()
            })
            .transpose()
            .map_err(|e| format!("gt_grasps: {e}"))?;
        let gt_contacts = j
            .gt_contacts
            .map(|[a, b]| ContactPair::new(Point2::new(a[0], a[1]), Point2::new(b[0], b[1])))
            .transpose()
            .map_err(|e| format!("gt_contacts: {e}"))?;

        let need = |present: bool, field: &str| {
            if present {
                Ok(())
            } else {
                Err(format!("task '{}' requires field '{field}'", j.task))
            }
        };
        match j.task {
            TaskKind::Bbox => need(gt_bbox.is_some(), "gt_bbox")?,
            TaskKind::Seg => {
                need(gt_bbox.is_some(), "gt_bbox")?;
                need(gt_mask.is_some(), "gt_mask")?;
            }
            TaskKind::Grasp => need(
                gt_grasps.as_ref().is_some_and(|g| !g.is_empty()),
                "gt_grasps",
            )?,
            TaskKind::Contact => need(gt_contacts.is_some(), "gt_contacts")?,
        }
        if let Some(m) = &gt_mask {
            if m.width() as f64 != j.image_w || m.height() as f64 != j.image_h {
                return Err(format!(
                    "gt_mask is {}x{} but the image is {}x{}",
                    m.width(),
                    m.height(),
                    j.image_w,
                    j.image_h
                ));
            }
        }
        Ok(DatasetRecord {
            record_id: j.record_id,
            image_id: j.image_id,
            image_w: j.image_w,
            image_h: j.image_h,
            task: j.task,
            instruction: j.instruction,
            split: j.split,
            gt_bbox,
            gt_mask,
            gt_grasps,
            gt_contacts,
        })
    }
}

impl From<&DatasetRecord> for RecordJson {
    fn from(r: &DatasetRecord) -> Self {
        RecordJson {
            record_id: r.record_id.clone(),
            image_id: r.image_id.clone(),
            image_w: r.image_w,
            image_h: r.image_h,
            task: r.task,
            instruction: r.instruction.clone(),
            split: r.split,
            gt_bbox: r.gt_bbox.map(|b| b.as_array()),
            gt_mask: r.gt_mask.as_ref().map(BinaryMask::to_rle),
            gt_grasps: r.gt_grasps.as_ref().map(|gs| {
                gs.iter()
                    .map(|g| [g.cx, g.cy, g.theta_degrees(), g.opening, g.jaw])
                    .collect()
            }),
            gt_contacts: r.gt_contacts.map(|c| [[c.p1.x, c.p1.y], [c.p2.x, c.p2.y]]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionJson {
    pub record_id: String,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_mask: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub record_id: String,
    pub raw_text: String,
    pub external_mask: Option<BinaryMask>,
}

impl From<&PredictionRecord> for PredictionJson {
    fn from(p: &PredictionRecord) -> Self {
        PredictionJson {
            record_id: p.record_id.clone(),
            raw_text: p.raw_text.clone(),
            external_mask: p.external_mask.as_ref().map(BinaryMask::to_rle),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn jsonl_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

pub fn parse_dataset(text: &str) -> Result<Vec<DatasetRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, l) in jsonl_lines(text) {
        let j: RecordJson = serde_json::from_str(l).map_err(|e| HarnessError::Line {
            line,
            msg: e.to_string(),
        })?;
        if !seen.insert(j.record_id.clone()) {
            return Err(HarnessError::Duplicate {
                line,
                id: j.record_id,
            });
        }
        out.push(DatasetRecord::try_from(j).map_err(|msg| HarnessError::Line { line, msg })?);
    }
    Ok(out)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>> {
    parse_dataset(&read(path.as_ref())?)
}

pub fn parse_predictions(text: &str) -> Result<Vec<PredictionRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, l) in jsonl_lines(text) {
        let j: PredictionJson = serde_json::from_str(l).map_err(|e| HarnessError::Line {
            line,
            msg: e.to_string(),
        })?;
        if !seen.insert(j.record_id.clone()) {
            return Err(HarnessError::Duplicate {
                line,
                id: j.record_id,
            });
        }
        let external_mask = j
            .external_mask
            .as_deref()
            .map(BinaryMask::from_rle)
            .transpose()
            .map_err(|e| HarnessError::Line {
                line,
                msg: format!("external_mask: {e}"),
            })?;
        out.push(PredictionRecord {
            record_id: j.record_id,
            raw_text: j.raw_text,
            external_mask,
        });
    }
    Ok(out)
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    parse_predictions(&read(path.as_ref())?)
}

pub fn write_jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(&it).expect("plain data serializes"));
        s.push('\n');
    }
    s
}

/// Prediction that restates the ground truth in canonical answer form.
pub fn oracle_prediction(r: &DatasetRecord) -> PredictionRecord {
    let payload = match r.task {
        TaskKind::Bbox | TaskKind::Seg => Payload::Bbox(r.gt_bbox.expect("validated on load")),
        TaskKind::Grasp => Payload::Grasp(GraspPose::from(
            &r.gt_grasps.as_ref().expect("validated on load")[0],
        )),
        TaskKind::Contact => Payload::Contact(r.gt_contacts.expect("validated on load")),
    };
    PredictionRecord {
        record_id: r.record_id.clone(),
        raw_text: canonical_response("restating the annotation", &payload),
        external_mask: if r.task == TaskKind::Seg {
            r.gt_mask.clone()
        } else {
            None
        },
    }
}

fn gacc_hit(pred: &GraspRect, gt: &GraspRect) -> bool {
    rect_iou(pred, gt) > GACC_IOU && angle_diff(pred.theta, gt.theta) < GACC_ANGLE_DEG.to_radians()
}

/// 1 when some ground-truth grasp overlaps with IoU above 0.25 and differs
/// in angle by less than 30°.
pub fn grasp_accuracy(pred: &GraspRect, gts: &[GraspRect]) -> Result<f64> {
    if gts.is_empty() {
        return Err(HarnessError::EmptyGroundTruth);
    }
    Ok(if gts.iter().any(|g| gacc_hit(pred, g)) {
        1.0
    } else {
        0.0
    })
}

pub fn best_grasp_iou(pred: &GraspRect, gts: &[GraspRect]) -> Result<f64> {
    if gts.is_empty() {
        return Err(HarnessError::EmptyGroundTruth);
    }
    Ok(gts.iter().map(|g| rect_iou(pred, g)).fold(0.0, f64::max))
}

/// The model states no jaw extent, so each comparison borrows the jaw of the
/// ground truth it is compared with.
fn pose_scores(pose: &GraspPose, gts: &[GraspRect]) -> std::result::Result<(f64, f64), String> {
    let mut iou = 0.0_f64;
    let mut acc = 0.0_f64;
    for g in gts {
        let r = pose.to_rect(g.jaw).map_err(|e| e.to_string())?;
        iou = iou.max(rect_iou(&r, g));
        if gacc_hit(&r, g) {
            acc = 1.0;
        }
    }
    Ok((iou, acc))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Jaw extent used to turn contact pairs into rectangles.
    pub contact_jaw: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            contact_jaw: DEFAULT_JAW_PX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "gIoU")]
    GIoU,
    #[serde(rename = "cIoU")]
    CIoU,
    #[serde(rename = "F_beta")]
    FBeta,
    #[serde(rename = "S_alpha")]
    SAlpha,
    #[serde(rename = "mIoU")]
    MIoU,
    #[serde(rename = "gAcc")]
    GAcc,
    #[serde(rename = "R_v")]
    Rv,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::GIoU,
        Metric::CIoU,
        Metric::FBeta,
        Metric::SAlpha,
        Metric::MIoU,
        Metric::GAcc,
        Metric::Rv,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::GIoU => "gIoU",
            Metric::CIoU => "cIoU",
            Metric::FBeta => "F_beta",
            Metric::SAlpha => "S_alpha",
            Metric::MIoU => "mIoU",
            Metric::GAcc => "gAcc",
            Metric::Rv => "R_v",
        }
    }

    /// Accuracy metrics reported for a task, `R_v` excluded.
    pub fn for_task(task: TaskKind) -> [Metric; 2] {
        match task {
            TaskKind::Bbox => [Metric::GIoU, Metric::CIoU],
            TaskKind::Seg => [Metric::FBeta, Metric::SAlpha],
            TaskKind::Grasp | TaskKind::Contact => [Metric::MIoU, Metric::GAcc],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordResult {
    pub record_id: String,
    pub task: TaskKind,
    pub split: Split,
    pub has_prediction: bool,
    pub valid: bool,
    pub reason: Option<String>,
    /// Per-record values in `[0,1]` (gIoU/cIoU may be negative).
    pub metrics: BTreeMap<Metric, f64>,
    /// Extra values not aggregated in the report.
    pub diagnostics: BTreeMap<String, f64>,
}

fn score_record(r: &DatasetRecord, p: Option<&PredictionRecord>, cfg: &EvalConfig) -> RecordResult {
    let mut out = RecordResult {
        record_id: r.record_id.clone(),
        task: r.task,
        split: r.split,
        has_prediction: p.is_some(),
        valid: false,
        reason: None,
        metrics: BTreeMap::new(),
        diagnostics: BTreeMap::new(),
    };
    let Some(p) = p else {
        out.reason = Some("no prediction".into());
        return out;
    };
    match score_valid(r, p, cfg, &mut out) {
        Ok(()) => out.valid = true,
        Err(reason) => {
            out.metrics.clear();
            out.reason = Some(reason);
        }
    }
    out
}

fn score_valid(
    r: &DatasetRecord,
    p: &PredictionRecord,
    cfg: &EvalConfig,
    out: &mut RecordResult,
) -> std::result::Result<(), String> {
    let resp = parse_response(&p.raw_text, r.task);
    if !is_valid(&resp, r.task) {
        return Err(if resp.diagnostics.is_empty() {
            "invalid answer".into()
        } else {
            resp.diagnostics.join("; ")
        });
    }
    let payload = resp.payload.expect("valid responses carry a payload");
    let m = &mut out.metrics;
    match (r.task, payload) {
        (TaskKind::Bbox, Payload::Bbox(b)) => {
            let gt = r.gt_bbox.as_ref().expect("validated on load");
            let ciou = bbox_ciou(&b, gt).map_err(|_| "degenerate box".to_string())?;
            m.insert(Metric::GIoU, bbox_giou(&b, gt));
            m.insert(Metric::CIoU, ciou);
        }
        (TaskKind::Seg, Payload::Bbox(b)) => {
            if b.area() <= 0.0 {
                return Err("degenerate box".into());
            }
            let mask = p
                .external_mask
                .as_ref()
                .ok_or_else(|| "segmentation prediction has no external_mask".to_string())?;
            let gt = r.gt_mask.as_ref().expect("validated on load");
            m.insert(
                Metric::FBeta,
                f_measure(mask, gt).map_err(|e| e.to_string())?,
            );
            m.insert(
                Metric::SAlpha,
                s_measure(mask, gt).map_err(|e| e.to_string())?,
            );
            let gt_box = r.gt_bbox.as_ref().expect("validated on load");
            out.diagnostics
                .insert("box_gIoU".into(), bbox_giou(&b, gt_box));
        }
        (TaskKind::Grasp, Payload::Grasp(g)) => {
            let gts = r.gt_grasps.as_deref().expect("validated on load");
            let (iou, acc) = pose_scores(&g, gts)?;
            m.insert(Metric::MIoU, iou);
            m.insert(Metric::GAcc, acc);
        }
        (TaskKind::Contact, Payload::Contact(c)) => {
            let pred = contacts_to_rect(&c, cfg.contact_jaw).map_err(|e| e.to_string())?;
            let gt = contacts_to_rect(
                r.gt_contacts.as_ref().expect("validated on load"),
                cfg.contact_jaw,
            )
            .map_err(|e| e.to_string())?;
            m.insert(Metric::MIoU, rect_iou(&pred, &gt));
            m.insert(Metric::GAcc, if gacc_hit(&pred, &gt) { 1.0 } else { 0.0 });
        }
        _ => return Err("answer shape does not match the task".into()),
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub task: TaskKind,
    pub split: Split,
    pub total: usize,
    /// Records that had a prediction.
    pub matched: usize,
    pub valid: usize,
    /// Mean percentages; `None` when the cell has no valid record.
    pub metrics: BTreeMap<Metric, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cells: Vec<CellReport>,
    pub records: Vec<RecordResult>,
}

/// Scores every dataset record against its prediction. Records without a
/// prediction count as invalid. Aggregation runs in `record_id` order, so
/// the report does not depend on input order or thread count.
pub fn evaluate(
    dataset: &[DatasetRecord],
    predictions: &[PredictionRecord],
    cfg: &EvalConfig,
) -> Result<MetricsReport> {
    let by_id: HashMap<&str, &DatasetRecord> =
        dataset.iter().map(|r| (r.record_id.as_str(), r)).collect();
    let mut preds: HashMap<&str, &PredictionRecord> = HashMap::new();
    for p in predictions {
        if !by_id.contains_key(p.record_id.as_str()) {
            return Err(HarnessError::UnknownRecord(p.record_id.clone()));
        }
        preds.insert(p.record_id.as_str(), p);
    }
    let mut records: Vec<RecordResult> = dataset
        .par_iter()
        .map(|r| score_record(r, preds.get(r.record_id.as_str()).copied(), cfg))
        .collect();
    records.sort_by(|a, b| a.record_id.cmp(&b.record_id));

    let mut cells = Vec::new();
    for task in TaskKind::ALL {
        for split in Split::ALL {
            let rs: Vec<&RecordResult> = records
                .iter()
                .filter(|r| r.task == task && r.split == split)
                .collect();
            if rs.is_empty() {
                continue;
            }
            let valid: Vec<&&RecordResult> = rs.iter().filter(|r| r.valid).collect();
            let mut metrics = BTreeMap::new();
            for metric in Metric::for_task(task) {
                let mean = if valid.is_empty() {
                    None
                } else {
                    let sum: f64 = valid.iter().map(|r| r.metrics[&metric]).sum();
                    Some(100.0 * sum / valid.len() as f64)
                };
                metrics.insert(metric, mean);
            }
            metrics.insert(
                Metric::Rv,
                Some(100.0 * valid.len() as f64 / rs.len() as f64),
            );
            cells.push(CellReport {
                task,
                split,
                total: rs.len(),
                matched: rs.iter().filter(|r| r.has_prediction).count(),
                valid: valid.len(),
                metrics,
            });
        }
    }
    Ok(MetricsReport { cells, records })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(format!(
                "unknown report format '{s}' (expected markdown or csv)"
            )),
        }
    }
}

pub const NO_VALUE: &str = "n/a";

fn cell_text(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.1}"),
        None => NO_VALUE.to_string(),
    }
}

/// Percentages with one decimal. Markdown is one row per (task, split) with
/// a column per metric; CSV is long format, one row per metric.
pub fn emit_report(report: &MetricsReport, format: ReportFormat) -> String {
    let mut s = String::new();
    match format {
        ReportFormat::Markdown => {
            s.push_str("| task | split | total | valid |");
            for m in Metric::ALL {
                let _ = write!(s, " {} |", m.name());
            }
            s.push_str("\n|---|---|---:|---:|");
            s.push_str(&"---:|".repeat(Metric::ALL.len()));
            s.push('\n');
            for c in &report.cells {
                let _ = write!(
                    s,
                    "| {} | {} | {} | {} |",
                    c.task, c.split, c.total, c.valid
                );
                for m in Metric::ALL {
                    match c.metrics.get(&m) {
                        Some(v) => {
                            let _ = write!(s, " {} |", cell_text(*v));
                        }
                        None => s.push_str("  |"),
                    }
                }
                s.push('\n');
            }
        }
        ReportFormat::Csv => {
            s.push_str("task,split,total,valid,metric,value\n");
            for c in &report.cells {
                for (m, v) in &c.metrics {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{}",
                        c.task,
                        c.split,
                        c.total,
                        c.valid,
                        m.name(),
                        cell_text(*v)
                    );
                }
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grasp(cx: f64, cy: f64, deg: f64, opening: f64, jaw: f64) -> GraspRect {
        GraspRect::from_degrees(cx, cy, deg, opening, jaw).unwrap()
    }

    #[test]
    fn gacc_rules() {
        let sq = grasp(50.0, 50.0, 0.0, 20.0, 20.0);
        assert_eq!(grasp_accuracy(&sq, &[sq]).unwrap(), 1.0);
        assert_eq!(
            grasp_accuracy(&grasp(50.0, 50.0, 29.9, 20.0, 20.0), &[sq]).unwrap(),
            1.0
        );
        assert_eq!(
            grasp_accuracy(&grasp(50.0, 50.0, 30.1, 20.0, 20.0), &[sq]).unwrap(),
            0.0
        );
        // aligned and nested: IoU = 100/400 exactly
        let quarter = grasp(50.0, 50.0, 0.0, 5.0, 20.0);
        assert_eq!(rect_iou(&quarter, &sq), 0.25);
        assert_eq!(grasp_accuracy(&quarter, &[sq]).unwrap(), 0.0);
        assert!(grasp_accuracy(&sq, &[]).is_err());
    }

    #[test]
    fn best_iou_over_set() {
        let a = grasp(10.0, 10.0, 0.0, 10.0, 10.0);
        let b = grasp(40.0, 10.0, 0.0, 10.0, 10.0);
        let c = grasp(10.0, 40.0, 90.0, 10.0, 10.0);
        assert_eq!(best_grasp_iou(&b, &[a, b, c]).unwrap(), 1.0);
        assert_eq!(
            best_grasp_iou(&grasp(90.0, 90.0, 0.0, 4.0, 4.0), &[a, b, c]).unwrap(),
            0.0
        );
        // 10x10 pred shifted by 5 along x against a: IoU 50/150; against a 10x20 gt: 100/200
        let pred = grasp(15.0, 10.0, 0.0, 10.0, 10.0);
        let wide = grasp(15.0, 10.0, 0.0, 20.0, 10.0);
        let v = best_grasp_iou(&pred, &[a, wide]).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
    }

    #[test]
    fn split_names() {
        let j: RecordJson = serde_json::from_str(
            r#"{"record_id":"a","image_id":"i","image_w":4,"image_h":4,"task":"bbox","split":"Seen","gt_bbox":[0,0,1,1]}"#,
        )
        .unwrap();
        assert_eq!(j.split, Split::Seen);
    }

    #[test]
    fn missing_field_names_the_field() {
        let line = r#"{"record_id":"a","image_id":"i","image_w":4,"image_h":4,"task":"grasp","split":"seen"}"#;
        let err = parse_dataset(line).unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("gt_grasps"), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let line = r#"{"record_id":"a","image_id":"i","image_w":4,"image_h":4,"task":"bbox","split":"seen","gt_bbox":[0,0,1,1]}"#;
        let err = parse_dataset(&format!("{line}\n\n{line}\n")).unwrap_err();
        assert!(
            matches!(err, HarnessError::Duplicate { line: 3, .. }),
            "{err}"
        );
    }

    #[test]
    fn empty_inputs() {
        assert!(parse_dataset("").unwrap().is_empty());
        let rep = evaluate(&[], &[], &EvalConfig::default()).unwrap();
        let md = emit_report(&rep, ReportFormat::Markdown);
        assert_eq!(md.lines().count(), 2);
        assert_eq!(
            emit_report(&rep, ReportFormat::Csv),
            "task,split,total,valid,metric,value\n"
        );
    }
}
