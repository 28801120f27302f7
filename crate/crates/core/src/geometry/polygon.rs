//! Convex polygon clipping and rotated-rectangle overlap.

use super::{GraspRect, Point2};

const ORIENT_EPS: f64 = 1e-9;

/// Signed shoelace area; positive for counter-clockwise vertex order in a
/// y-up frame.
pub fn polygon_area(poly: &[Point2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for (i, p) in poly.iter().enumerate() {
        let q = &poly[(i + 1) % poly.len()];
        twice += p.x * q.y - q.x * p.y;
    }
    twice / 2.0
}

fn cross(o: &Point2, a: &Point2, b: &Point2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn segment_line_intersection(p: &Point2, q: &Point2, a: &Point2, b: &Point2) -> Point2 {
    let dp = cross(a, b, p);
    let dq = cross(a, b, q);
    let t = dp / (dp - dq);
    Point2::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

/// Sutherland–Hodgman clip of `subject` against the convex polygon `clip`.
/// Both polygons must be counter-clockwise.
pub fn convex_clip(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = &clip[i];
        let b = &clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let cur = &input[j];
            let prev = &input[(j + input.len() - 1) % input.len()];
            let cur_in = cross(a, b, cur) >= -ORIENT_EPS;
            let prev_in = cross(a, b, prev) >= -ORIENT_EPS;
            if cur_in {
                if !prev_in {
                    output.push(segment_line_intersection(prev, cur, a, b));
                }
                output.push(*cur);
            } else if prev_in {
                output.push(segment_line_intersection(prev, cur, a, b));
            }
        }
    }
    output
}

fn ccw_corners(r: &GraspRect) -> Vec<Point2> {
    let mut c = r.corners().to_vec();
    if polygon_area(&c) < 0.0 {
        c.reverse();
    }
    c
}

/// Overlap of two oriented rectangles as intersection over union.
pub fn rect_iou(a: &GraspRect, b: &GraspRect) -> f64 {
    if a == b {
        return 1.0;
    }
    let pa = ccw_corners(a);
    let pb = ccw_corners(b);
    let inter = polygon_area(&convex_clip(&pa, &pb)).abs();
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}
