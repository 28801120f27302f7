use std::f64::consts::PI;

use proptest::prelude::*;
use vlgrasp::geometry::{BBox, ContactPair, GraspRect, Point2};
use vlgrasp::parsing::{canonical_response, GraspPose, Payload, TaskKind};
use vlgrasp::rewards::{
    composite_reward, reward_bbox, reward_contact, reward_grasp, GroundTruth, RewardConfig,
};

fn cfg() -> RewardConfig {
    RewardConfig::default()
}

fn dyadic_rect() -> impl Strategy<Value = GraspRect> {
    (0.0..640.0f64, 0.0..480.0f64, 0u32..3217, 5.0..80.0f64)
        .prop_map(|(x, y, k, w)| GraspRect::new(x, y, k as f64 / 1024.0, w, 20.0).unwrap())
}

fn point() -> impl Strategy<Value = Point2> {
    (0.0..640.0f64, 0.0..480.0f64).prop_map(|(x, y)| Point2::new(x, y))
}

fn pair() -> impl Strategy<Value = ContactPair> {
    (point(), point())
        .prop_filter("distinct points", |(a, b)| a.distance(b) > 1.0)
        .prop_map(|(a, b)| ContactPair::new(a, b).unwrap())
}

fn half_turn(r: &GraspRect) -> GraspRect {
    GraspRect::new(r.cx, r.cy, r.theta + PI, r.opening, r.jaw).unwrap()
}

proptest! {
    #[test]
    fn grasp_reward_ignores_half_turn(p in dyadic_rect(), g in prop::collection::vec(dyadic_rect(), 1..4)) {
        let base = reward_grasp(&p, &g, &cfg()).unwrap();
        prop_assert_eq!(base, reward_grasp(&half_turn(&p), &g, &cfg()).unwrap());
        let turned: Vec<_> = g.iter().map(half_turn).collect();
        prop_assert_eq!(base, reward_grasp(&p, &turned, &cfg()).unwrap());
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn grasp_reward_peaks_on_a_ground_truth(g in prop::collection::vec(dyadic_rect(), 1..4), pick in 0usize..4) {
        let p = g[pick % g.len()];
        prop_assert_eq!(reward_grasp(&p, &g, &cfg()).unwrap(), 1.0);
    }

    #[test]
    fn contact_reward_ignores_point_order(p in pair(), g in pair()) {
        let r = reward_contact(&p, &g, &cfg()).unwrap();
        prop_assert_eq!(r, reward_contact(&p.swapped(), &g, &cfg()).unwrap());
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn bbox_reward_steps_once(x in 0.0..100.0f64, y in 0.0..100.0f64, w in 5.0..100.0f64, h in 5.0..100.0f64,
                              dx in -200.0..200.0f64, dy in -200.0..200.0f64) {
        let gt = BBox::new(x, y, x + w, y + h).unwrap();
        let mut flips = 0;
        let mut prev = None;
        for k in 0..=64 {
            let s = 1.0 - k as f64 / 64.0;
            let p = BBox::new(x + s * dx, y + s * dy, x + w + s * dx, y + h + s * dy).unwrap();
            let r = reward_bbox(&p, &gt, &cfg());
            if let Some(q) = prev {
                if q != r {
                    flips += 1;
                }
            }
            prev = Some(r);
        }
        prop_assert!(flips <= 1);
        prop_assert_eq!(prev, Some(1.0));
    }

    #[test]
    fn composite_is_weighted_sum(x in 0.0..300.0f64, y in 0.0..200.0f64, w in 5.0..200.0f64, h in 5.0..200.0f64,
                                 keep_think in any::<bool>()) {
        let gt = GroundTruth::Bbox(BBox::new(100.0, 100.0, 200.0, 180.0).unwrap());
        let ans = format!("<answer>({x:.2},{y:.2}),({:.2},{:.2})</answer>", x + w, y + h);
        let text = if keep_think { format!("<think>look</think>\n{ans}") } else { ans };
        let b = composite_reward(&text, TaskKind::Bbox, &gt, None, &cfg()).unwrap();
        prop_assert_eq!(b.r_total, 0.1 * b.r_format + 0.9 * b.r_task);
        prop_assert!((0.0..=1.0).contains(&b.r_total));
    }
}

#[test]
fn composite_examples() {
    let gt = GroundTruth::Bbox(BBox::new(10.0, 10.0, 50.0, 50.0).unwrap());
    let score = |t: &str| composite_reward(t, TaskKind::Bbox, &gt, None, &cfg()).unwrap();

    let perfect = score("<think>the mug is left</think>\n<answer>(10,10),(50,50)</answer>");
    assert_eq!(
        (perfect.r_format, perfect.r_task, perfect.r_total),
        (1.0, 1.0, 1.0)
    );

    let no_think = score("<answer>(10,10),(50,50)</answer>");
    assert_eq!((no_think.r_format, no_think.r_task), (0.0, 1.0));
    assert_eq!(no_think.r_total, 0.9);

    let junk = score("<think>hmm</think>\n<answer>somewhere on the table</answer>");
    assert_eq!((junk.r_format, junk.r_task, junk.r_total), (1.0, 0.0, 0.1));
    assert!(!junk.valid);
}

#[test]
fn task_mismatch_is_an_error() {
    let gt = GroundTruth::Bbox(BBox::new(0.0, 0.0, 1.0, 1.0).unwrap());
    assert!(composite_reward("", TaskKind::Grasp, &gt, None, &cfg()).is_err());
}

#[test]
fn grasp_and_contact_paths() {
    let g = GraspRect::from_degrees(320.0, 240.0, 30.0, 60.0, 20.0).unwrap();
    let gts = GroundTruth::Grasp(vec![
        GraspRect::from_degrees(100.0, 100.0, 90.0, 40.0, 20.0).unwrap(),
        g,
    ]);
    let text = canonical_response("aim for the handle", &Payload::Grasp(GraspPose::from(&g)));
    let b = composite_reward(&text, TaskKind::Grasp, &gts, None, &cfg()).unwrap();
    assert_eq!(b.components["best_gt"], 1.0);
    assert!(b.r_task > 1.0 - 1e-9);

    let c = ContactPair::new(Point2::new(300.0, 240.0), Point2::new(340.0, 240.0)).unwrap();
    let text = canonical_response("pinch", &Payload::Contact(c.swapped()));
    let b = composite_reward(
        &text,
        TaskKind::Contact,
        &GroundTruth::Contact(c),
        None,
        &cfg(),
    )
    .unwrap();
    assert_eq!(b.r_task, 1.0);
    assert_eq!(b.components["assignment_swapped"], 1.0);
}
