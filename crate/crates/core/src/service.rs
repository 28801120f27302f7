//! Line-delimited JSON reward scoring over stdio or TCP.
//!
//! Each request line is scored independently; responses are written as they
//! complete and carry the request id, so clients match by id.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::geometry::{BBox, ContactPair, GraspRect, Point2};
use crate::masks::BinaryMask;
use crate::parsing::TaskKind;
use crate::rewards::{composite_reward, GroundTruth, RewardBreakdown, RewardConfig};

/// Ground truth as sent on the wire. Only the fields the task needs are read.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WireGroundTruth {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_rle: Option<String>,
    /// `[cx, cy, theta_deg, opening, jaw]` per grasp.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grasps: Option<Vec<[f64; 5]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contacts: Option<[[f64; 2]; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRequest {
    pub id: Value,
    pub task: String,
    pub raw_text: String,
    #[serde(default)]
    pub gt: WireGroundTruth,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_mask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_id: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardResponse {
    pub id: Value,
    pub r_total: f64,
    pub r_format: f64,
    pub r_task: f64,
    pub valid: bool,
    pub components: BTreeMap<String, f64>,
    pub diagnostics: Vec<String>,
}

impl RewardResponse {
    pub fn from_breakdown(id: Value, b: RewardBreakdown) -> Self {
        RewardResponse {
            id,
            r_total: b.r_total,
            r_format: b.r_format,
            r_task: b.r_task,
            valid: b.valid,
            components: b.components,
            diagnostics: b.diagnostics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub id: Value,
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl ErrorResponse {
    fn new(id: &Value, error: &str, field: Option<&str>, message: impl Into<String>) -> Self {
        ErrorResponse {
            id: id.clone(),
            error: error.into(),
            field: field.map(Into::into),
            message: Some(message.into()),
        }
    }

    pub fn parse() -> Self {
        ErrorResponse {
            id: Value::Null,
            error: "parse".into(),
            field: None,
            message: None,
        }
    }
}

fn point(p: [f64; 2]) -> Point2 {
    Point2::new(p[0], p[1])
}

/// Builds the ground truth a task needs, naming the offending field on error.
pub fn ground_truth(
    task: TaskKind,
    gt: &WireGroundTruth,
) -> Result<GroundTruth, (&'static str, String)> {
    let bbox = || -> Result<BBox, (&'static str, String)> {
        let [a, b, c, d] = gt.bbox.ok_or(("gt.bbox", "missing".to_string()))?;
        BBox::new(a, b, c, d).map_err(|e| ("gt.bbox", e.to_string()))
    };
    match task {
        TaskKind::Bbox => Ok(GroundTruth::Bbox(bbox()?)),
        TaskKind::Seg => {
            let rle = gt
                .mask_rle
                .as_deref()
                .ok_or(("gt.mask_rle", "missing".to_string()))?;
            let mask = BinaryMask::from_rle(rle).map_err(|e| ("gt.mask_rle", e.to_string()))?;
            Ok(GroundTruth::Seg {
                bbox: bbox()?,
                mask,
            })
        }
        TaskKind::Grasp => {
            let gs = gt
                .grasps
                .as_ref()
                .ok_or(("gt.grasps", "missing".to_string()))?;
            if gs.is_empty() {
                return Err(("gt.grasps", "empty".into()));
            }
            gs.iter()
                .map(|&[cx, cy, deg, opening, jaw]| {
                    GraspRect::from_degrees(cx, cy, deg, opening, jaw)
                })
                .collect::<Result<Vec<_>, _>>()
                .map(GroundTruth::Grasp)
                .map_err(|e| ("gt.grasps", e.to_string()))
        }
        TaskKind::Contact => {
            let [a, b] = gt.contacts.ok_or(("gt.contacts", "missing".to_string()))?;
            ContactPair::new(point(a), point(b))
                .map(GroundTruth::Contact)
                .map_err(|e| ("gt.contacts", e.to_string()))
        }
    }
}

/// Scores one request. Image size from the request overrides `cfg`.
pub fn handle(req: &RewardRequest, cfg: &RewardConfig) -> Result<RewardResponse, ErrorResponse> {
    let id = &req.id;
    let task: TaskKind = req.task.parse().map_err(|e: crate::parsing::UnknownTask| {
        ErrorResponse::new(id, "unknown_task", Some("task"), e.to_string())
    })?;
    let gt = ground_truth(task, &req.gt)
        .map_err(|(field, msg)| ErrorResponse::new(id, "invalid_gt", Some(field), msg))?;
    let ext = req
        .external_mask
        .as_deref()
        .map(BinaryMask::from_rle)
        .transpose()
        .map_err(|e| {
            ErrorResponse::new(id, "invalid_request", Some("external_mask"), e.to_string())
        })?;
    let mut cfg = *cfg;
    if let Some(w) = req.image_w {
        cfg.image_w = w;
    }
    if let Some(h) = req.image_h {
        cfg.image_h = h;
    }
    composite_reward(&req.raw_text, task, &gt, ext.as_ref(), &cfg)
        .map(|b| RewardResponse::from_breakdown(id.clone(), b))
        .map_err(|e| ErrorResponse::new(id, "reward", None, e.to_string()))
}

/// Handles one wire line and returns the serialized response line (no
/// trailing newline).
pub fn handle_line(line: &str, cfg: &RewardConfig) -> String {
    let out = match serde_json::from_str::<Value>(line) {
        Err(_) => Err(ErrorResponse::parse()),
        Ok(v) => {
            let id = match &v {
                Value::Object(o) => o.get("id").cloned().unwrap_or(Value::Null),
                _ => Value::Null,
            };
            match serde_json::from_value::<RewardRequest>(v) {
                Err(e) => Err(ErrorResponse::new(
                    &id,
                    "invalid_request",
                    None,
                    e.to_string(),
                )),
                Ok(req) => handle(&req, cfg),
            }
        }
    };
    let s = match out {
        Ok(r) => serde_json::to_string(&r),
        Err(e) => serde_json::to_string(&e),
    };
    s.expect("response types always serialize")
}

/// Reads requests until EOF, scoring them concurrently on the current rayon
/// pool. Blank lines are ignored.
pub fn serve_lines<R: BufRead, W: Write + Send>(
    reader: R,
    writer: W,
    cfg: &RewardConfig,
) -> io::Result<()> {
    let writer = Mutex::new(writer);
    let failed: Mutex<Option<io::Error>> = Mutex::new(None);
    let mut read_err = None;
    rayon::in_place_scope(|s| {
        for line in reader.lines() {
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    read_err = Some(e);
                    break;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let (writer, failed) = (&writer, &failed);
            s.spawn(move |_| {
                let resp = handle_line(&line, cfg);
                let mut w = writer.lock().unwrap_or_else(|p| p.into_inner());
                if let Err(e) = writeln!(w, "{resp}").and_then(|_| w.flush()) {
                    failed
                        .lock()
                        .unwrap_or_else(|p| p.into_inner())
                        .get_or_insert(e);
                }
            });
        }
    });
    if let Some(e) = read_err {
        return Err(e);
    }
    match failed.into_inner().unwrap_or_else(|p| p.into_inner()) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn serve_stdio(cfg: &RewardConfig) -> io::Result<()> {
    serve_lines(io::stdin().lock(), io::stdout(), cfg)
}

fn serve_connection(stream: TcpStream, cfg: &RewardConfig) -> io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    serve_lines(reader, stream, cfg)
}

/// Accepts connections forever, one thread per connection.
pub fn serve_tcp(listener: TcpListener, cfg: RewardConfig) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        thread::spawn(move || {
            let peer = stream.peer_addr().ok();
            if let Err(e) = serve_connection(stream, &cfg) {
                eprintln!("connection {peer:?}: {e}");
            }
        });
    }
    Ok(())
}
