//! Planar grasp geometry: axis-aligned boxes, oriented grasp rectangles,
//! contact pairs, and the camera model used to lift rectangles into 6-DoF
//! gripper poses.
//!
//! Image coordinates follow the usual raster convention: `x` grows to the
//! right, `y` grows downward, and grasp angles are measured from the `+x`
//! axis. A parallel-jaw grasp is symmetric under a half turn, so every angle
//! stored in a [`GraspRect`] is folded into `[0, π)`.

mod camera;
mod polygon;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use camera::{
    backproject, lift_rect_to_6dof, project, rect_from_6dof, CameraExtrinsics, CameraIntrinsics,
    DepthMap, Pose6DoF,
};
pub use polygon::{convex_clip, polygon_area, rect_iou};

/// Jaw extent used when a grasp is given without one (pixels).
pub const DEFAULT_JAW_PX: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("invalid box: min corner ({x_min}, {y_min}) exceeds max corner ({x_max}, {y_max})")]
    InvertedBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("degenerate box with zero area")]
    DegenerateBox,
    #[error("grasp {field} must be positive, got {value}")]
    NonPositiveExtent { field: &'static str, value: f64 },
    #[error("contact points coincide at ({x}, {y})")]
    CoincidentContacts { x: f64, y: f64 },
    #[error("invalid depth {0}: must be positive and finite")]
    InvalidDepth(f64),
    #[error("point lies behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("focal lengths must be positive (fx = {fx}, fy = {fy})")]
    InvalidIntrinsics { fx: f64, fy: f64 },
    #[error("rotation is not orthonormal with det +1")]
    InvalidRotation,
    #[error("depth map has {got} samples, expected {expected}")]
    DepthShape { expected: usize, got: usize },
    #[error("too few corners with valid depth (invalid corners: {invalid:?})")]
    InsufficientDepth { invalid: Vec<usize> },
}

pub type Result<T> = std::result::Result<T, GeometryError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn midpoint(&self, other: &Point2) -> Point2 {
        Point2::new((self.x + other.x) / 2.0, (self.y + other.y) / 2.0)
    }
}

/// Axis-aligned box in continuous pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("bbox"));
        }
        if x_min > x_max || y_min > y_max {
            return Err(GeometryError::InvertedBox {
                x_min,
                y_min,
                x_max,
                y_max,
            });
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point2 {
        Point2::new(
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let h = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        w * h
    }

    /// Smallest box containing both.
    pub fn enclosing(&self, other: &BBox) -> BBox {
        BBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// Intersection over union; zero when both boxes have zero area.
pub fn bbox_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Generalized IoU: IoU minus the fraction of the enclosing box not covered
/// by the union.
pub fn bbox_giou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let iou = if union <= 0.0 { 0.0 } else { inter / union };
    let enclosing = a.enclosing(b).area();
    if enclosing <= 0.0 {
        return iou;
    }
    iou - (enclosing - union) / enclosing
}

/// Complete IoU: IoU penalized by normalized center distance and aspect
/// mismatch. Both boxes must have positive area.
pub fn bbox_ciou(a: &BBox, b: &BBox) -> Result<f64> {
    if a.area() <= 0.0 || b.area() <= 0.0 {
        return Err(GeometryError::DegenerateBox);
    }
    let iou = bbox_iou(a, b);
    let (ca, cb) = (a.center(), b.center());
    let rho2 = (ca.x - cb.x).powi(2) + (ca.y - cb.y).powi(2);
    let c = a.enclosing(b);
    let diag2 = c.width().powi(2) + c.height().powi(2);
    let dv = (b.width() / b.height()).atan() - (a.width() / a.height()).atan();
    let v = 4.0 / (PI * PI) * dv * dv;
    // v = 0 also covers iou = 1, where the weight would be 0/0
    let aspect = if v == 0.0 {
        0.0
    } else {
        v * v / ((1.0 - iou) + v)
    };
    Ok(iou - rho2 / diag2 - aspect)
}

/// Folds an angle into `[0, π)`.
///
/// `%` on `f64` is exact, so `fold_pi(t + π) == fold_pi(t)` whenever `t + π`
/// is itself exactly representable.
pub fn fold_pi(theta: f64) -> f64 {
    let mut r = theta % PI;
    if r < 0.0 {
        r += PI;
    }
    if r >= PI {
        r -= PI;
    }
    r
}

/// Smallest angular distance between two grasp orientations, in `[0, π/2]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = fold_pi(a - b);
    d.min(PI - d)
}

/// Oriented parallel-jaw grasp rectangle.
///
/// `opening` is the jaw separation along the closing axis
/// `(cos theta, sin theta)`; `jaw` is the extent across it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspRect {
    pub cx: f64,
    pub cy: f64,
    pub theta: f64,
    pub opening: f64,
    pub jaw: f64,
}

impl GraspRect {
    pub fn new(cx: f64, cy: f64, theta: f64, opening: f64, jaw: f64) -> Result<Self> {
        if ![cx, cy, theta, opening, jaw].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("grasp rectangle"));
        }
        if opening <= 0.0 {
            return Err(GeometryError::NonPositiveExtent {
                field: "opening",
                value: opening,
            });
        }
        if jaw <= 0.0 {
            return Err(GeometryError::NonPositiveExtent {
                field: "jaw",
                value: jaw,
            });
        }
        Ok(Self {
            cx,
            cy,
            theta: fold_pi(theta),
            opening,
            jaw,
        })
    }

    /// Builds a rectangle from an angle given in degrees.
    pub fn from_degrees(cx: f64, cy: f64, theta_deg: f64, opening: f64, jaw: f64) -> Result<Self> {
        Self::new(cx, cy, theta_deg.to_radians(), opening, jaw)
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.cx, self.cy)
    }

    pub fn theta_degrees(&self) -> f64 {
        self.theta.to_degrees()
    }

    pub fn with_jaw(&self, jaw: f64) -> Self {
        Self { jaw, ..*self }
    }

    /// Unit vector along the closing direction.
    pub fn closing_axis(&self) -> (f64, f64) {
        (self.theta.cos(), self.theta.sin())
    }

    pub fn area(&self) -> f64 {
        self.opening * self.jaw
    }

    /// Corners in order: the first closing edge runs corner 0 → 1, the
    /// second runs 3 → 2. The ordering is counter-clockwise in a y-up frame.
    pub fn corners(&self) -> [Point2; 4] {
        let (c, s) = self.closing_axis();
        let (a, b) = (self.opening / 2.0, self.jaw / 2.0);
        let (ux, uy) = (a * c, a * s);
        let (vx, vy) = (-b * s, b * c);
        [
            Point2::new(self.cx - ux - vx, self.cy - uy - vy),
            Point2::new(self.cx + ux - vx, self.cy + uy - vy),
            Point2::new(self.cx + ux + vx, self.cy + uy + vy),
            Point2::new(self.cx - ux + vx, self.cy - uy + vy),
        ]
    }

    /// Whether `p` lies inside the closed rectangle.
    pub fn contains(&self, p: &Point2) -> bool {
        let (c, s) = self.closing_axis();
        let (dx, dy) = (p.x - self.cx, p.y - self.cy);
        let along = dx * c + dy * s;
        let across = -dx * s + dy * c;
        along.abs() <= self.opening / 2.0 && across.abs() <= self.jaw / 2.0
    }
}

/// The two jaw contact pixels of a parallel-jaw grasp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactPair {
    pub p1: Point2,
    pub p2: Point2,
}

impl ContactPair {
    pub fn new(p1: Point2, p2: Point2) -> Result<Self> {
        if !p1.is_finite() || !p2.is_finite() {
            return Err(GeometryError::NonFinite("contact pair"));
        }
        if p1 == p2 {
            return Err(GeometryError::CoincidentContacts { x: p1.x, y: p1.y });
        }
        Ok(Self { p1, p2 })
    }

    pub fn swapped(&self) -> Self {
        Self {
            p1: self.p2,
            p2: self.p1,
        }
    }

    pub fn midpoint(&self) -> Point2 {
        self.p1.midpoint(&self.p2)
    }

    pub fn separation(&self) -> f64 {
        self.p1.distance(&self.p2)
    }
}

/// Grasp rectangle spanned by a contact pair with the given jaw extent.
///
/// The result does not depend on the order of the two points.
pub fn contacts_to_rect(c: &ContactPair, jaw: f64) -> Result<GraspRect> {
    let (mut dx, mut dy) = (c.p2.x - c.p1.x, c.p2.y - c.p1.y);
    if dx == 0.0 && dy == 0.0 {
        return Err(GeometryError::CoincidentContacts {
            x: c.p1.x,
            y: c.p1.y,
        });
    }
    // canonical half-plane so that swapping the points is an exact no-op
    if dy < 0.0 || (dy == 0.0 && dx < 0.0) {
        dx = -dx;
        dy = -dy;
    }
    let mid = c.midpoint();
    GraspRect::new(mid.x, mid.y, dy.atan2(dx), dx.hypot(dy), jaw)
}

/// Jaw contact points of a rectangle: `center ∓ (opening/2)·closing_axis`.
pub fn rect_to_contacts(r: &GraspRect) -> ContactPair {
    let (c, s) = r.closing_axis();
    let half = r.opening / 2.0;
    ContactPair {
        p1: Point2::new(r.cx - half * c, r.cy - half * s),
        p2: Point2::new(r.cx + half * c, r.cy + half * s),
    }
}
