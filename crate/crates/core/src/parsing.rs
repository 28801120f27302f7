//! Parsing of tagged model outputs: a `<think>…</think>` block followed by an
//! `<answer>…</answer>` block whose body holds the task payload.
//!
//! Answer grammars:
//!
//! * box-shaped tasks (`bbox`, `seg`) and `contact`: `(x1,y1),(x2,y2)`
//! * `grasp`: `(x, y, theta, width)` with `theta` in degrees
//!
//! Numbers are plain decimals with an optional sign and fraction. Whitespace
//! is allowed around every token.
//!
//! Template compliance and payload validity are judged separately: an answer
//! can be parsable inside a broken template, and a perfect template can hold
//! an unparsable answer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::{fold_pi, BBox, ContactPair, GeometryError, GraspRect, Point2};

/// Magnitude bound on any parsed number.
pub const MAX_ABS_VALUE: f64 = 1e7;

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";
const TAGS: [&str; 4] = [THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Bbox,
    Seg,
    Grasp,
    Contact,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::Bbox,
        TaskKind::Seg,
        TaskKind::Grasp,
        TaskKind::Contact,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Bbox => "bbox",
            TaskKind::Seg => "seg",
            TaskKind::Grasp => "grasp",
            TaskKind::Contact => "contact",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown task '{0}' (expected bbox, seg, grasp or contact)")]
pub struct UnknownTask(pub String);

impl FromStr for TaskKind {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bbox" => Ok(TaskKind::Bbox),
            "seg" | "segmentation" => Ok(TaskKind::Seg),
            "grasp" => Ok(TaskKind::Grasp),
            "contact" => Ok(TaskKind::Contact),
            _ => Err(UnknownTask(s.to_string())),
        }
    }
}

/// A grasp as the model states it: no jaw extent, angle already converted to
/// radians and folded into `[0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub width: f64,
}

impl GraspPose {
    pub fn from_degrees(x: f64, y: f64, theta_deg: f64, width: f64) -> Self {
        Self {
            x,
            y,
            theta: fold_pi(theta_deg.to_radians()),
            width,
        }
    }

    pub fn to_rect(&self, jaw: f64) -> Result<GraspRect, GeometryError> {
        GraspRect::new(self.x, self.y, self.theta, self.width, jaw)
    }
}

impl From<&GraspRect> for GraspPose {
    fn from(r: &GraspRect) -> Self {
        Self {
            x: r.cx,
            y: r.cy,
            theta: r.theta,
            width: r.opening,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Payload {
    Bbox(BBox),
    Grasp(GraspPose),
    Contact(ContactPair),
}

impl Payload {
    pub fn fits(&self, task: TaskKind) -> bool {
        matches!(
            (self, task),
            (Payload::Bbox(_), TaskKind::Bbox | TaskKind::Seg)
                | (Payload::Grasp(_), TaskKind::Grasp)
                | (Payload::Contact(_), TaskKind::Contact)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredResponse {
    pub think_text: String,
    pub answer_text: String,
    pub payload: Option<Payload>,
    pub format_ok: bool,
    pub valid: bool,
    pub diagnostics: Vec<String>,
}

fn contains_tag(s: &str) -> bool {
    TAGS.iter().any(|t| s.contains(t))
}

/// Strict template match: optional surrounding whitespace, the think block,
/// optional whitespace, the answer block, nothing else.
fn strict_template(text: &str) -> Option<(&str, &str)> {
    let rest = text.trim().strip_prefix(THINK_OPEN)?;
    let (think, rest) = rest.split_once(THINK_CLOSE)?;
    let rest = rest.trim_start().strip_prefix(ANSWER_OPEN)?;
    let (answer, tail) = rest.split_once(ANSWER_CLOSE)?;
    if !tail.trim().is_empty() || contains_tag(think) || contains_tag(answer) {
        return None;
    }
    Some((think, answer))
}

fn lenient_block<'a>(text: &'a str, open: &str, close: &str) -> Option<(&'a str, bool)> {
    let start = text.find(open)? + open.len();
    let rest = &text[start..];
    Some(match rest.find(close) {
        Some(end) => (&rest[..end], true),
        None => (rest, false),
    })
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str) -> Self {
        Self {
            s: s.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.s.len()
    }

    fn number(&mut self) -> Option<f64> {
        self.skip_ws();
        let start = self.pos;
        if matches!(self.s.get(self.pos), Some(b'+' | b'-')) {
            self.pos += 1;
        }
        let int_start = self.pos;
        while self.s.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        let mut digits = self.pos - int_start;
        if self.s.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            let frac_start = self.pos;
            while self.s.get(self.pos).is_some_and(u8::is_ascii_digit) {
                self.pos += 1;
            }
            digits += self.pos - frac_start;
        }
        if digits == 0 {
            self.pos = start;
            return None;
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .ok()?
            .parse()
            .ok()
    }

    fn tuple(&mut self, n: usize) -> Option<Vec<f64>> {
        if !self.eat(b'(') {
            return None;
        }
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            if i > 0 && !self.eat(b',') {
                return None;
            }
            out.push(self.number()?);
        }
        self.eat(b')').then_some(out)
    }
}

fn parse_two_points(body: &str) -> Option<[f64; 4]> {
    let mut c = Cursor::new(body);
    let a = c.tuple(2)?;
    if !c.eat(b',') {
        return None;
    }
    let b = c.tuple(2)?;
    c.at_end().then_some([a[0], a[1], b[0], b[1]])
}

fn parse_grasp(body: &str) -> Option<[f64; 4]> {
    let mut c = Cursor::new(body);
    let v = c.tuple(4)?;
    c.at_end().then_some([v[0], v[1], v[2], v[3]])
}

fn payload_from_answer(body: &str, task: TaskKind, diag: &mut Vec<String>) -> Option<Payload> {
    if body.trim().is_empty() {
        diag.push("empty answer".into());
        return None;
    }
    let values = match task {
        TaskKind::Grasp => parse_grasp(body),
        _ => parse_two_points(body),
    };
    let Some(v) = values else {
        diag.push(format!("answer does not match the {task} grammar"));
        return None;
    };
    if v.iter().any(|x| !x.is_finite() || x.abs() >= MAX_ABS_VALUE) {
        diag.push(format!(
            "number out of range (|v| must be < {MAX_ABS_VALUE:e})"
        ));
        return None;
    }
    match task {
        TaskKind::Bbox | TaskKind::Seg => {
            let [mut x1, mut y1, mut x2, mut y2] = v;
            if x1 > x2 {
                std::mem::swap(&mut x1, &mut x2);
                diag.push("swapped x coordinates".into());
            }
            if y1 > y2 {
                std::mem::swap(&mut y1, &mut y2);
                diag.push("swapped y coordinates".into());
            }
            BBox::new(x1, y1, x2, y2).ok().map(Payload::Bbox)
        }
        TaskKind::Grasp => {
            let [x, y, theta_deg, width] = v;
            if width <= 0.0 {
                diag.push("grasp width must be positive".into());
                return None;
            }
            Some(Payload::Grasp(GraspPose::from_degrees(
                x, y, theta_deg, width,
            )))
        }
        TaskKind::Contact => {
            match ContactPair::new(Point2::new(v[0], v[1]), Point2::new(v[2], v[3])) {
                Ok(c) => Some(Payload::Contact(c)),
                Err(e) => {
                    diag.push(e.to_string());
                    None
                }
            }
        }
    }
}

/// Parses a raw model output for `task`. Never fails; problems are reported
/// through `format_ok`, `valid` and `diagnostics`.
pub fn parse_response(text: &str, task: TaskKind) -> StructuredResponse {
    let mut diagnostics = Vec::new();
    let (format_ok, think, answer) = match strict_template(text) {
        Some((think, answer)) => (true, think.to_string(), Some(answer.to_string())),
        None => {
            diagnostics.push("output does not follow the <think>/<answer> template".into());
            let think = lenient_block(text, THINK_OPEN, THINK_CLOSE)
                .map(|(t, _)| t.to_string())
                .unwrap_or_default();
            let answer = lenient_block(text, ANSWER_OPEN, ANSWER_CLOSE).map(|(a, closed)| {
                if !closed {
                    diagnostics.push("unterminated answer block".into());
                }
                a.to_string()
            });
            (false, think, answer)
        }
    };
    let payload = match &answer {
        Some(body) => payload_from_answer(body, task, &mut diagnostics),
        None => {
            diagnostics.push("no answer block".into());
            None
        }
    };
    StructuredResponse {
        think_text: think,
        answer_text: answer.unwrap_or_default(),
        valid: payload.is_some(),
        payload,
        format_ok,
        diagnostics,
    }
}

/// 1 when the output follows the template exactly, else 0.
pub fn format_reward(resp: &StructuredResponse) -> f64 {
    if resp.format_ok {
        1.0
    } else {
        0.0
    }
}

/// Non-empty, parsable, and of the shape `task` expects.
pub fn is_valid(resp: &StructuredResponse, task: TaskKind) -> bool {
    resp.valid && resp.payload.is_some_and(|p| p.fits(task))
}

/// Canonical number form: at most two fractional digits, no trailing zeros.
pub fn format_number(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s.as_str()
    };
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Canonical answer body for a payload.
pub fn write_answer(p: &Payload) -> String {
    let n = format_number;
    match p {
        Payload::Bbox(b) => format!(
            "({},{}),({},{})",
            n(b.x_min),
            n(b.y_min),
            n(b.x_max),
            n(b.y_max)
        ),
        Payload::Contact(c) => format!(
            "({},{}),({},{})",
            n(c.p1.x),
            n(c.p1.y),
            n(c.p2.x),
            n(c.p2.y)
        ),
        Payload::Grasp(g) => format!(
            "({}, {}, {}, {})",
            n(g.x),
            n(g.y),
            n(g.theta.to_degrees()),
            n(g.width)
        ),
    }
}

/// Full tagged response wrapping the canonical answer.
pub fn canonical_response(think: &str, p: &Payload) -> String {
    format!(
        "{THINK_OPEN}{think}{THINK_CLOSE}\n{ANSWER_OPEN}{}{ANSWER_CLOSE}",
        write_answer(p)
    )
}
