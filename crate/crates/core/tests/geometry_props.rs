use std::f64::consts::PI;

use proptest::prelude::*;
use vlgrasp::geometry::{
    bbox_ciou, bbox_giou, bbox_iou, contacts_to_rect, fold_pi, rect_iou, rect_to_contacts, BBox,
    GraspRect,
};

/// Pixel-centre count of each rectangle and of their overlap on an `n`×`n`
/// raster over the pair's joint bounding box, one scanline at a time.
fn raster_iou(a: &GraspRect, b: &GraspRect, n: usize) -> f64 {
    let pts: Vec<_> = a.corners().into_iter().chain(b.corners()).collect();
    let x0 = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let x1 = pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let y0 = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let y1 = pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let (hx, hy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);

    let span = |r: &GraspRect, y: f64| -> Option<(i64, i64)> {
        let (c, s) = (r.theta.cos(), r.theta.sin());
        let dy = y - r.cy;
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        // |k*dx + m| <= h for the along and across axes
        for (k, m, h) in [(c, dy * s, r.opening / 2.0), (-s, dy * c, r.jaw / 2.0)] {
            if k.abs() < 1e-15 {
                if m.abs() > h {
                    return None;
                }
                continue;
            }
            let (p, q) = ((-h - m) / k, (h - m) / k);
            lo = lo.max(p.min(q));
            hi = hi.min(p.max(q));
        }
        let first = (((lo + r.cx) - x0) / hx - 0.5).ceil().max(0.0) as i64;
        let last = (((hi + r.cx) - x0) / hx - 0.5).floor().min(n as f64 - 1.0) as i64;
        (first <= last).then_some((first, last))
    };

    let (mut ca, mut cb, mut both) = (0i64, 0i64, 0i64);
    for j in 0..n {
        let y = y0 + (j as f64 + 0.5) * hy;
        let sa = span(a, y);
        let sb = span(b, y);
        if let Some((f, l)) = sa {
            ca += l - f + 1;
        }
        if let Some((f, l)) = sb {
            cb += l - f + 1;
        }
        if let (Some(p), Some(q)) = (sa, sb) {
            both += (p.1.min(q.1) - p.0.max(q.0) + 1).max(0);
        }
    }
    both as f64 / (ca + cb - both) as f64
}

fn rect() -> impl Strategy<Value = GraspRect> {
    (
        0.0..100.0f64,
        0.0..100.0f64,
        0.0..PI,
        4.0..60.0f64,
        4.0..40.0f64,
    )
        .prop_map(|(x, y, t, o, j)| GraspRect::new(x, y, t, o, j).unwrap())
}

fn near_pair() -> impl Strategy<Value = (GraspRect, GraspRect)> {
    (
        rect(),
        -20.0..20.0f64,
        -20.0..20.0f64,
        0.0..PI,
        4.0..60.0f64,
        4.0..40.0f64,
    )
        .prop_map(|(a, dx, dy, t, o, j)| {
            let b = GraspRect::new(a.cx + dx, a.cy + dy, t, o, j).unwrap();
            (a, b)
        })
}

fn bbox() -> impl Strategy<Value = BBox> {
    (0.0..100.0f64, 0.0..100.0f64, 0.5..50.0f64, 0.5..50.0f64)
        .prop_map(|(x, y, w, h)| BBox::new(x, y, x + w, y + h).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rect_iou_matches_raster((a, b) in near_pair()) {
        let exact = rect_iou(&a, &b);
        prop_assert!((exact - raster_iou(&a, &b, 1024)).abs() < 3e-3);
    }

    #[test]
    fn rect_iou_symmetric_and_bounded((a, b) in near_pair()) {
        let ab = rect_iou(&a, &b);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - rect_iou(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn rect_iou_self_is_one(a in rect()) {
        prop_assert_eq!(rect_iou(&a, &a), 1.0);
    }

    #[test]
    fn rect_iou_ignores_half_turn(a in rect(), k in -512i32..512) {
        // dyadic angles keep theta + pi exact up to one rounding of pi
        let t = k as f64 / 1024.0;
        let r1 = GraspRect::new(a.cx, a.cy, t, a.opening, a.jaw).unwrap();
        let r2 = GraspRect::new(a.cx, a.cy, t + PI, a.opening, a.jaw).unwrap();
        prop_assert!((rect_iou(&r1, &a) - rect_iou(&r2, &a)).abs() < 1e-9);
    }

    #[test]
    fn fold_pi_range(t in -100.0..100.0f64) {
        let f = fold_pi(t);
        prop_assert!((0.0..PI).contains(&f));
        let k = ((t - f) / PI).round();
        prop_assert!((t - f - k * PI).abs() < 1e-9);
    }

    #[test]
    fn contacts_round_trip(a in rect()) {
        let back = contacts_to_rect(&rect_to_contacts(&a), a.jaw).unwrap();
        prop_assert!((back.cx - a.cx).abs() < 1e-9 && (back.cy - a.cy).abs() < 1e-9);
        prop_assert!((back.opening - a.opening).abs() < 1e-9);
        prop_assert!(rect_iou(&back, &a) > 1.0 - 1e-9);
    }

    #[test]
    fn contacts_swap_gives_same_rect(a in rect()) {
        let c = rect_to_contacts(&a);
        prop_assert_eq!(contacts_to_rect(&c, 5.0).unwrap(), contacts_to_rect(&c.swapped(), 5.0).unwrap());
    }

    #[test]
    fn bbox_metric_ordering(a in bbox(), b in bbox()) {
        let iou = bbox_iou(&a, &b);
        let giou = bbox_giou(&a, &b);
        let ciou = bbox_ciou(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&iou));
        prop_assert!(giou <= iou + 1e-12 && giou >= -1.0 - 1e-12);
        // centre term < 1 and aspect term <= v^2/(1+v) <= 1/2
        prop_assert!(ciou <= iou + 1e-12 && ciou > -1.5);
        prop_assert!((giou - bbox_giou(&b, &a)).abs() < 1e-12);
    }
}

#[test]
fn raster_oracle_sanity() {
    let a = GraspRect::new(10.0, 10.0, 0.0, 10.0, 10.0).unwrap();
    let b = GraspRect::new(15.0, 10.0, 0.0, 10.0, 10.0).unwrap();
    assert!((raster_iou(&a, &b, 1000) - 1.0 / 3.0).abs() < 1e-3);
    assert!((rect_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
}
