//! Placement of grasp contact points on a segmented object.

use super::{BinaryMask, MaskError, Result};
use crate::geometry::{rect_to_contacts, ContactPair, GraspRect, Point2};

/// Nearest set pixel to `p`, or `p` itself when its pixel is already set.
/// Ties go to the smallest `(y, x)`.
pub fn project_to_boundary(p: &Point2, m: &BinaryMask) -> Result<Point2> {
    if m.contains(p) {
        return Ok(*p);
    }
    let mut best: Option<(f64, usize, usize)> = None;
    // row-major scan with strict `<` keeps the smallest (y, x) among ties
    for (x, y) in m.pixels() {
        let d = (x as f64 - p.x).powi(2) + (y as f64 - p.y).powi(2);
        if best.is_none_or(|(bd, _, _)| d < bd) {
            best = Some((d, x, y));
        }
    }
    let (_, x, y) = best.ok_or(MaskError::Empty)?;
    Ok(Point2::new(x as f64, y as f64))
}

fn pixel_center(p: &Point2) -> Point2 {
    Point2::new(p.x.round(), p.y.round())
}

/// Walks from `from` toward `to` in 1 px steps (the last step lands on `to`)
/// and returns the first set pixel reached.
fn march(from: &Point2, to: &Point2, m: &BinaryMask) -> Option<Point2> {
    let dist = from.distance(to);
    if dist == 0.0 {
        return m.contains(from).then(|| pixel_center(from));
    }
    let (ux, uy) = ((to.x - from.x) / dist, (to.y - from.y) / dist);
    let mut k = 1.0_f64;
    loop {
        let s = k.min(dist);
        let pos = Point2::new(from.x + s * ux, from.y + s * uy);
        if m.contains(&pos) {
            return Some(pixel_center(&pos));
        }
        if s >= dist {
            return None;
        }
        k += 1.0;
    }
}

fn segment_hits_mask(c: &ContactPair, m: &BinaryMask) -> bool {
    m.contains(&c.p1) || march(&c.p1, &c.p2, m).is_some()
}

/// Contact points of a grasp rectangle placed on the object mask.
///
/// Starting from the rectangle's jaw endpoints: if the midpoint is off the
/// mask, both points are translated so the midpoint lands on the nearest set
/// pixel; then every endpoint still off the mask is marched along the closing
/// axis toward the object until it enters. A closing segment that never
/// crosses the mask is rejected as ungraspable.
pub fn compute_contacts(r: &GraspRect, m: &BinaryMask) -> Result<ContactPair> {
    if m.is_empty() {
        return Err(MaskError::Empty);
    }
    let mut c = rect_to_contacts(r);
    if !segment_hits_mask(&c, m) {
        return Err(MaskError::Ungraspable);
    }

    let mid = c.midpoint();
    if !m.contains(&mid) {
        let q = project_to_boundary(&mid, m)?;
        let (dx, dy) = (q.x - mid.x, q.y - mid.y);
        c.p1 = Point2::new(c.p1.x + dx, c.p1.y + dy);
        c.p2 = Point2::new(c.p2.x + dx, c.p2.y + dy);
    }

    let mid = c.midpoint();
    let (in1, in2) = (m.contains(&c.p1), m.contains(&c.p2));
    let (p1, p2) = match (in1, in2) {
        (true, true) => (c.p1, c.p2),
        (false, true) => (march(&c.p1, &c.p2, m).ok_or(MaskError::Ungraspable)?, c.p2),
        (true, false) => (c.p1, march(&c.p2, &c.p1, m).ok_or(MaskError::Ungraspable)?),
        (false, false) => (
            march(&c.p1, &mid, m).ok_or(MaskError::Ungraspable)?,
            march(&c.p2, &mid, m).ok_or(MaskError::Ungraspable)?,
        ),
    };
    if p1 == p2 {
        // both jaws collapsed onto one pixel of a sliver-thin object
        return Err(MaskError::Ungraspable);
    }
    Ok(ContactPair { p1, p2 })
}
