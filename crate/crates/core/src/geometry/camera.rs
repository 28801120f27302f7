//! Pinhole camera model and lifting of image-plane grasps to 6-DoF poses.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{fold_pi, GeometryError, GraspRect, Point2, Result};

const ORTHO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !cx.is_finite() || !cy.is_finite() {
            return Err(GeometryError::InvalidIntrinsics { fx, fy });
        }
        Ok(Self { fx, fy, cx, cy })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

fn check_rotation(r: &Matrix3<f64>) -> Result<()> {
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    if !(err <= ORTHO_TOL) || !((r.determinant() - 1.0).abs() <= ORTHO_TOL) {
        return Err(GeometryError::InvalidRotation);
    }
    Ok(())
}

/// Rigid transform taking camera-frame points into the robot base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraExtrinsics {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraExtrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation)?;
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// From a row-major rotation and a translation.
    pub fn from_rows(rotation: [[f64; 3]; 3], translation: [f64; 3]) -> Result<Self> {
        Self::new(
            Matrix3::from_fn(|i, j| rotation[i][j]),
            Vector3::from(translation),
        )
    }
}

impl Default for CameraExtrinsics {
    fn default() -> Self {
        Self::identity()
    }
}

/// Gripper pose. Rotation columns are the closing axis, the jaw axis and the
/// approach axis, in that order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose6DoF {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose6DoF {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation)?;
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn closing_axis(&self) -> Vector3<f64> {
        self.rotation.column(0).into_owned()
    }

    pub fn approach_axis(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    /// Row-major rotation.
    pub fn rotation_rows(&self) -> [[f64; 3]; 3] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.rotation[(i, j)]))
    }

    pub fn translation_array(&self) -> [f64; 3] {
        self.translation.into()
    }
}

/// Row-major depth image in meters. Non-positive or non-finite samples are
/// holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(GeometryError::DepthShape {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, depth: f64) -> Self {
        Self {
            width,
            height,
            data: vec![depth; width * height],
        }
    }

    /// Nearest-neighbour sample; `None` outside the image or at a hole.
    pub fn sample(&self, u: f64, v: f64) -> Option<f64> {
        let (x, y) = (u.round(), v.round());
        if !(x >= 0.0 && y >= 0.0 && x < self.width as f64 && y < self.height as f64) {
            return None;
        }
        let d = self.data[y as usize * self.width + x as usize];
        (d > 0.0 && d.is_finite()).then_some(d)
    }
}

/// Pixel plus depth to a camera-frame point: `d · K⁻¹ [u v 1]ᵀ`.
pub fn backproject(u: f64, v: f64, d: f64, k: &CameraIntrinsics) -> Result<Vector3<f64>> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(GeometryError::InvalidDepth(d));
    }
    Ok(Vector3::new(
        (u - k.cx) * d / k.fx,
        (v - k.cy) * d / k.fy,
        d,
    ))
}

/// Camera-frame point to pixel.
pub fn project(p: &Vector3<f64>, k: &CameraIntrinsics) -> Result<Point2> {
    if !(p.z > 0.0) {
        return Err(GeometryError::BehindCamera(p.z));
    }
    Ok(Point2::new(
        k.fx * p.x / p.z + k.cx,
        k.fy * p.y / p.z + k.cy,
    ))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Lifts an image-plane grasp rectangle into a gripper pose in the robot
/// frame.
///
/// Corner depths are sampled nearest-neighbour; a missing corner takes the
/// median of the valid ones, and fewer than three valid corners is an error.
pub fn lift_rect_to_6dof(
    r: &GraspRect,
    depth: &DepthMap,
    k: &CameraIntrinsics,
    ext: &CameraExtrinsics,
) -> Result<Pose6DoF> {
    let corners = r.corners();
    let sampled: Vec<Option<f64>> = corners.iter().map(|c| depth.sample(c.x, c.y)).collect();
    let mut valid: Vec<f64> = sampled.iter().flatten().copied().collect();
    if valid.len() < 3 {
        let invalid = (0..4).filter(|&i| sampled[i].is_none()).collect();
        return Err(GeometryError::InsufficientDepth { invalid });
    }
    let fallback = median(&mut valid);

    let mut pts = [Vector3::zeros(); 4];
    for (i, c) in corners.iter().enumerate() {
        pts[i] = backproject(c.x, c.y, sampled[i].unwrap_or(fallback), k)?;
    }
    let center = (pts[0] + pts[1] + pts[2] + pts[3]) / 4.0;

    let closing = (pts[1] - pts[0]) + (pts[2] - pts[3]);
    let mut normal = (pts[2] - pts[0]).cross(&(pts[3] - pts[1]));
    let nn = normal.norm();
    if !(nn > 0.0) || !(closing.norm() > 0.0) {
        return Err(GeometryError::InvalidRotation);
    }
    normal /= nn;
    // approach points into the scene
    if normal.dot(&center) < 0.0 {
        normal = -normal;
    }
    let closing = closing - normal * closing.dot(&normal);
    let closing = closing.normalize();
    let jaw_axis = normal.cross(&closing);
    let rot_cam = Matrix3::from_columns(&[closing, jaw_axis, normal]);

    Pose6DoF::new(
        ext.rotation * rot_cam,
        ext.rotation * center + ext.translation,
    )
}

/// Projects a gripper pose back onto the image as a grasp rectangle.
///
/// The center pixel is the projection of the pose origin; the angle and
/// opening come from the projected jaw tips at `±opening/2` along the
/// closing axis. The rectangle gets `jaw_px` as its jaw extent.
pub fn rect_from_6dof(
    pose: &Pose6DoF,
    opening: f64,
    k: &CameraIntrinsics,
    ext: &CameraExtrinsics,
    jaw_px: f64,
) -> Result<GraspRect> {
    let inv = ext.rotation.transpose();
    let t_cam = inv * (pose.translation - ext.translation);
    let closing = inv * pose.closing_axis();
    let center = project(&t_cam, k)?;
    let a = project(&(t_cam - closing * (opening / 2.0)), k)?;
    let b = project(&(t_cam + closing * (opening / 2.0)), k)?;
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    GraspRect::new(
        center.x,
        center.y,
        fold_pi(dy.atan2(dx)),
        dx.hypot(dy),
        jaw_px,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    fn k500() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap()
    }

    fn assert_vec(v: &Vector3<f64>, e: [f64; 3], tol: f64) {
        for i in 0..3 {
            assert!((v[i] - e[i]).abs() <= tol, "{v:?} vs {e:?}");
        }
    }

    #[test]
    fn backproject_examples() {
        let id = CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0).unwrap();
        assert_vec(
            &backproject(2.0, 3.0, 4.0, &id).unwrap(),
            [8.0, 12.0, 4.0],
            0.0,
        );
        assert_vec(
            &backproject(320.0, 240.0, 2.0, &k500()).unwrap(),
            [0.0, 0.0, 2.0],
            0.0,
        );
        assert_vec(
            &backproject(420.0, 240.0, 1.0, &k500()).unwrap(),
            [0.2, 0.0, 1.0],
            1e-15,
        );
        assert_eq!(
            backproject(1.0, 1.0, 0.0, &id),
            Err(GeometryError::InvalidDepth(0.0))
        );
        assert!(backproject(1.0, 1.0, -2.0, &id).is_err());
    }

    #[test]
    fn project_rejects_points_behind() {
        assert!(project(&Vector3::new(0.0, 0.0, -1.0), &k500()).is_err());
        assert!(project(&Vector3::new(0.0, 0.0, 0.0), &k500()).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn lift_flat_plane_axis_aligned() {
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0).unwrap();
        let depth = DepthMap::constant(100, 100, 1.0);
        let r = GraspRect::new(50.0, 50.0, 0.0, 20.0, 10.0).unwrap();
        let pose = lift_rect_to_6dof(&r, &depth, &k, &CameraExtrinsics::identity()).unwrap();
        assert_vec(&pose.translation, [0.0, 0.0, 1.0], 1e-12);
        assert_vec(&pose.closing_axis(), [1.0, 0.0, 0.0], 1e-12);
        assert_vec(&pose.approach_axis(), [0.0, 0.0, 1.0], 1e-12);

        let ext = CameraExtrinsics::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 0.5)).unwrap();
        let moved = lift_rect_to_6dof(&r, &depth, &k, &ext).unwrap();
        assert_vec(&moved.translation, [0.0, 0.0, 1.5], 1e-12);
        assert_eq!(moved.rotation, pose.rotation);
    }

    #[test]
    fn lift_follows_image_rotation() {
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0).unwrap();
        let depth = DepthMap::constant(100, 100, 0.8);
        for phi in [0.3, 1.0, 2.2] {
            let r = GraspRect::new(50.0, 50.0, phi, 20.0, 10.0).unwrap();
            let pose = lift_rect_to_6dof(&r, &depth, &k, &CameraExtrinsics::identity()).unwrap();
            assert_vec(&pose.closing_axis(), [phi.cos(), phi.sin(), 0.0], 1e-12);
        }
    }

    #[test]
    fn lift_fills_one_hole_and_rejects_two() {
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0).unwrap();
        let mut depth = DepthMap::constant(100, 100, 1.0);
        let r = GraspRect::new(50.0, 50.0, 0.0, 20.0, 10.0).unwrap();
        let c = r.corners();
        let idx = |p: &Point2| p.y.round() as usize * 100 + p.x.round() as usize;
        depth.data[idx(&c[1])] = 0.0;
        let pose = lift_rect_to_6dof(&r, &depth, &k, &CameraExtrinsics::identity()).unwrap();
        assert_vec(&pose.translation, [0.0, 0.0, 1.0], 1e-12);
        depth.data[idx(&c[3])] = f64::NAN;
        match lift_rect_to_6dof(&r, &depth, &k, &CameraExtrinsics::identity()) {
            Err(GeometryError::InsufficientDepth { invalid }) => assert_eq!(invalid, vec![1, 3]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rect_from_pose_example() {
        let pose = Pose6DoF::new(Matrix3::identity(), Vector3::new(0.0, 0.0, 1.0)).unwrap();
        let r = rect_from_6dof(&pose, 0.1, &k500(), &CameraExtrinsics::identity(), 20.0).unwrap();
        assert!((r.cx - 320.0).abs() < 1e-9 && (r.cy - 240.0).abs() < 1e-9);
        assert!(r.theta.abs() < 1e-12);
        assert!((r.opening - 50.0).abs() < 1e-9);

        // half turn about the approach axis
        let flip = Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        let pose2 = Pose6DoF::new(flip, pose.translation).unwrap();
        let r2 = rect_from_6dof(&pose2, 0.1, &k500(), &CameraExtrinsics::identity(), 20.0).unwrap();
        assert!((r2.cx - r.cx).abs() < 1e-9 && (r2.opening - r.opening).abs() < 1e-9);
        assert!(crate::geometry::angle_diff(r2.theta, r.theta) < 1e-12);

        let behind = Pose6DoF::new(Matrix3::identity(), Vector3::new(0.0, 0.0, -1.0)).unwrap();
        assert!(
            rect_from_6dof(&behind, 0.1, &k500(), &CameraExtrinsics::identity(), 20.0).is_err()
        );
    }

    #[test]
    fn lift_then_project_round_trip() {
        let k = k500();
        let depth = DepthMap::constant(640, 480, 0.7);
        let rot = nalgebra::Rotation3::from_euler_angles(0.2, -0.1, 0.7);
        let ext = CameraExtrinsics::new(*rot.matrix(), Vector3::new(0.3, -0.2, 0.9)).unwrap();
        let r = GraspRect::new(300.0, 200.0, 2.5, 60.0, 20.0).unwrap();
        let pose = lift_rect_to_6dof(&r, &depth, &k, &ext).unwrap();
        let opening_m = 60.0 * 0.7 / 500.0;
        let back = rect_from_6dof(&pose, opening_m, &k, &ext, 20.0).unwrap();
        assert!((back.cx - r.cx).abs() < 0.5 && (back.cy - r.cy).abs() < 0.5);
        assert!(crate::geometry::angle_diff(back.theta, r.theta) < 1e-9);
        assert!((back.opening - 60.0).abs() < 1e-6);
    }
}
