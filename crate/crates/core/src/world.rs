/*
Copyright 2026 The ctmp Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! The conveyor world: a planar n-link arm, a belt carrying one rectangular
//! object along +x, static obstacles, and the discretized goal region.
//!
//! Robot time `t = 0` is the instant the robot starts executing. Goal poses
//! are object poses at that instant, so the object pose at any later time is
//! a pure translation along the belt.

use crate::error::{check_dim, Error, Result};
use crate::geometry::{normalize_angle, Point, Rect};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmModel {
    pub link_lengths: Vec<f64>,
    /// Point mass at the distal end of each link.
    pub link_masses: Vec<f64>,
    pub base_position: [f64; 2],
    pub joint_limits: Vec<[f64; 2]>,
    pub velocity_limits: Vec<f64>,
    pub torque_limits: Vec<f64>,
    pub nominal_joint_speed: f64,
    pub nominal_ee_speed: f64,
    /// Gravity along -y in m/s². Zero models a horizontal tabletop.
    #[serde(default)]
    pub gravity: f64,
    /// Home configuration, radians.
    pub home: Vec<f64>,
}

/// End-effector pose in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

impl ArmModel {
    pub fn n_joints(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_joints();
        if n < 2 {
            return Err(Error::Config("arm needs at least two joints".into()));
        }
        for (name, len) in [
            ("link_masses", self.link_masses.len()),
            ("joint_limits", self.joint_limits.len()),
            ("velocity_limits", self.velocity_limits.len()),
            ("torque_limits", self.torque_limits.len()),
            ("home", self.home.len()),
        ] {
            if len != n {
                return Err(Error::Config(format!("{name} has {len} entries, arm has {n} joints")));
            }
        }
        let positive = self
            .link_lengths
            .iter()
            .chain(&self.link_masses)
            .chain(&self.velocity_limits)
            .chain(&self.torque_limits)
            .chain([&self.nominal_joint_speed, &self.nominal_ee_speed])
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive {
            return Err(Error::Config("lengths, masses, limits and speeds must be positive".into()));
        }
        if self.joint_limits.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(Error::Config("joint limit with lo >= hi".into()));
        }
        if !self.within_limits(&self.home) {
            return Err(Error::Config("home configuration outside joint limits".into()));
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.iter()
            .zip(&self.joint_limits)
            .all(|(v, [lo, hi])| *v >= lo - 1e-12 && *v <= hi + 1e-12)
    }

    /// Positions of the base, every joint and the end effector (`n + 1` points).
    pub fn joint_positions(&self, q: &[f64]) -> Vec<Point> {
        let mut out = Vec::with_capacity(q.len() + 1);
        let (mut x, mut y) = (self.base_position[0], self.base_position[1]);
        let mut a = 0.0;
        out.push(Point::new(x, y));
        for (l, qi) in self.link_lengths.iter().zip(q) {
            a += qi;
            x += l * a.cos();
            y += l * a.sin();
            out.push(Point::new(x, y));
        }
        out
    }

    pub fn forward_kinematics(&self, q: &[f64]) -> Result<Pose2> {
        check_dim(self.n_joints(), q.len())?;
        Ok(self.fk(q))
    }

    pub(crate) fn fk(&self, q: &[f64]) -> Pose2 {
        let p = self.joint_positions(q);
        let e = p[p.len() - 1];
        Pose2 {
            x: e.x,
            y: e.y,
            theta: normalize_angle(q.iter().sum()),
        }
    }

    /// Analytic 2×n Jacobian of the end-effector position.
    pub fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        check_dim(self.n_joints(), q.len())?;
        Ok(self.jac(q))
    }

    pub(crate) fn jac(&self, q: &[f64]) -> DMatrix<f64> {
        let p = self.joint_positions(q);
        let e = p[p.len() - 1];
        let n = q.len();
        let mut j = DMatrix::zeros(2, n);
        for i in 0..n {
            j[(0, i)] = -(e.y - p[i].y);
            j[(1, i)] = e.x - p[i].x;
        }
        j
    }

    /// End-effector linear velocity `J(q)·q̇`.
    pub fn ee_velocity(&self, q: &[f64], qdot: &[f64]) -> [f64; 2] {
        let j = self.jac(q);
        let v = j * DVector::from_column_slice(qdot);
        [v[0], v[1]]
    }
}

/// Damped least-squares pseudo-inverse `Jᵀ(JJᵀ + λ²I)⁻¹`; defined at singularities.
pub fn damped_pinv(j: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let m = j.nrows();
    let jjt = j * j.transpose() + DMatrix::identity(m, m) * (lambda * lambda);
    let inv = jjt
        .cholesky()
        .expect("JJᵀ + λ²I is positive definite for λ > 0")
        .inverse();
    j.transpose() * inv
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConveyorModel {
    pub belt_speed: f64,
    /// Range of object-centre y values the perception system can report.
    pub belt_y_extent: [f64; 2],
    /// Region of the plane occupied by belt hardware, if any.
    #[serde(default)]
    pub belt_band: Option<Rect>,
    pub x_exec: f64,
    pub epsilon: f64,
}

impl ConveyorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.belt_speed > 0.0) {
            return Err(Error::Config("belt_speed must be positive".into()));
        }
        if !(self.belt_y_extent[0] < self.belt_y_extent[1]) {
            return Err(Error::Config("belt_y_extent must be increasing".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    /// Length along the object x axis and width, meters.
    pub footprint: [f64; 2],
    /// Grasp pose in the object frame: (x, y, θ).
    pub grasp_offset: [f64; 3],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectPose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub t_ref: f64,
}

impl ObjectPose {
    pub fn new(x: f64, y: f64, theta: f64, t_ref: f64) -> Self {
        ObjectPose {
            x,
            y,
            theta: normalize_angle(theta),
            t_ref,
        }
    }
}

/// Pose of an object riding the belt, moved from `pose0.t_ref` to `t`.
/// Negative offsets back-project.
pub fn object_pose_at(conveyor: &ConveyorModel, pose0: &ObjectPose, t: f64) -> ObjectPose {
    ObjectPose {
        x: pose0.x + conveyor.belt_speed * (t - pose0.t_ref),
        y: pose0.y,
        theta: pose0.theta,
        t_ref: t,
    }
}

/// Integer cell of a goal pose. Ordering is the grid-scan order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GoalKey {
    pub ix: i32,
    pub iy: i32,
    pub itheta: i32,
}

impl std::fmt::Display for GoalKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.ix, self.iy, self.itheta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalGridSpec {
    pub x_res: f64,
    pub y_res: f64,
    pub theta_res_deg: f64,
    pub theta_range_deg: [f64; 2],
}

/// The discretized goal region `G_full`.
#[derive(Clone, Debug, PartialEq)]
pub struct GoalGrid {
    pub x_res: f64,
    pub y_res: f64,
    pub theta_res: f64,
    pub ix: [i32; 2],
    pub iy: [i32; 2],
    pub itheta: [i32; 2],
    /// Number of angular cells per turn when the resolution divides 2π.
    wrap: Option<i32>,
}

fn cell_range(lo: f64, hi: f64, res: f64) -> [i32; 2] {
    [(lo / res - 1e-9).ceil() as i32, (hi / res + 1e-9).floor() as i32]
}

impl GoalGrid {
    pub fn new(spec: &GoalGridSpec, conveyor: &ConveyorModel) -> Result<Self> {
        if !(spec.x_res > 0.0 && spec.y_res > 0.0 && spec.theta_res_deg > 0.0) {
            return Err(Error::Config("goal grid resolutions must be positive".into()));
        }
        let theta_res = spec.theta_res_deg.to_radians();
        let span = 2.0 * conveyor.epsilon;
        let per_turn = 360.0 / spec.theta_res_deg;
        let wrap = ((per_turn - per_turn.round()).abs() < 1e-9).then(|| per_turn.round() as i32);
        let g = GoalGrid {
            x_res: spec.x_res,
            y_res: spec.y_res,
            theta_res,
            ix: cell_range(conveyor.x_exec - span, conveyor.x_exec + span, spec.x_res),
            iy: cell_range(conveyor.belt_y_extent[0], conveyor.belt_y_extent[1], spec.y_res),
            itheta: cell_range(
                spec.theta_range_deg[0].to_radians(),
                spec.theta_range_deg[1].to_radians(),
                theta_res,
            ),
            wrap,
        };
        if g.ix[0] > g.ix[1] || g.iy[0] > g.iy[1] || g.itheta[0] > g.itheta[1] {
            return Err(Error::Config("goal grid is empty".into()));
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        let c = |r: [i32; 2]| (r[1] - r[0] + 1) as usize;
        c(self.ix) * c(self.iy) * c(self.itheta)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn theta_cell(&self, theta: f64) -> i32 {
        let c = (normalize_angle(theta) / self.theta_res).round() as i32;
        match self.wrap {
            Some(n) => {
                // keep cells in (-n/2, n/2] so that -π and π share a key
                let half = n / 2;
                let mut c = c.rem_euclid(n);
                if c > half {
                    c -= n;
                }
                c
            }
            None => c,
        }
    }

    /// Cell of a pose given at the execution reference time. Not bounds-checked.
    pub fn key_of(&self, pose: &ObjectPose) -> GoalKey {
        GoalKey {
            ix: (pose.x / self.x_res).round() as i32,
            iy: (pose.y / self.y_res).round() as i32,
            itheta: self.theta_cell(pose.theta),
        }
    }

    pub fn pose_of(&self, key: GoalKey) -> ObjectPose {
        ObjectPose::new(
            key.ix as f64 * self.x_res,
            key.iy as f64 * self.y_res,
            key.itheta as f64 * self.theta_res,
            0.0,
        )
    }

    pub fn snap(&self, pose: &ObjectPose) -> ObjectPose {
        self.pose_of(self.key_of(pose))
    }

    pub fn contains(&self, key: GoalKey) -> bool {
        let inr = |v: i32, r: [i32; 2]| v >= r[0] && v <= r[1];
        inr(key.ix, self.ix) && inr(key.iy, self.iy) && inr(key.itheta, self.itheta)
    }

    /// Clamps y and θ cells into the region, leaving x alone.
    pub fn clamp_lateral(&self, key: GoalKey) -> GoalKey {
        GoalKey {
            ix: key.ix,
            iy: key.iy.clamp(self.iy[0], self.iy[1]),
            itheta: key.itheta.clamp(self.itheta[0], self.itheta[1]),
        }
    }

    /// All cells in scan order (x, then y, then θ).
    pub fn iter(&self) -> impl Iterator<Item = GoalKey> + '_ {
        (self.ix[0]..=self.ix[1]).flat_map(move |ix| {
            (self.iy[0]..=self.iy[1]).flat_map(move |iy| {
                (self.itheta[0]..=self.itheta[1]).map(move |itheta| GoalKey { ix, iy, itheta })
            })
        })
    }
}

/// What the collision checker should treat as the object at a given time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ObjectMotion {
    /// The object of one goal.
    Goal(ObjectPose),
    /// The union of every goal object's footprint, so a check passes for
    /// whichever goal turns out to be the true one.
    Envelope,
    /// No object (used by tests and pure kinematic checks).
    Absent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub arm: ArmModel,
    pub conveyor: ConveyorModel,
    pub object: ObjectSpec,
    #[serde(default)]
    pub obstacles: Vec<Rect>,
    pub goal_grid: GoalGridSpec,
}

/// A validated world with derived data.
#[derive(Clone, Debug)]
pub struct World {
    pub arm: ArmModel,
    pub conveyor: ConveyorModel,
    pub object: ObjectSpec,
    pub obstacles: Vec<Rect>,
    pub grid: GoalGrid,
    envelope0: Rect,
}

impl World {
    pub fn new(spec: &WorldSpec) -> Result<Self> {
        spec.arm.validate()?;
        spec.conveyor.validate()?;
        if spec.object.footprint.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("object footprint must be positive".into()));
        }
        let grid = GoalGrid::new(&spec.goal_grid, &spec.conveyor)?;
        let mut w = World {
            arm: spec.arm.clone(),
            conveyor: spec.conveyor.clone(),
            object: spec.object.clone(),
            obstacles: spec.obstacles.clone(),
            grid,
            envelope0: Rect::axis_aligned(Point::default(), Point::default()),
        };
        let (mut lo, mut hi) = (Point::new(f64::MAX, f64::MAX), Point::new(f64::MIN, f64::MIN));
        for k in w.grid.iter() {
            for c in w.object_rect(&w.grid.pose_of(k)).corners() {
                lo = Point::new(lo.x.min(c.x), lo.y.min(c.y));
                hi = Point::new(hi.x.max(c.x), hi.y.max(c.y));
            }
        }
        w.envelope0 = Rect::axis_aligned(lo, hi);
        Ok(w)
    }

    pub fn spec(&self) -> WorldSpec {
        WorldSpec {
            arm: self.arm.clone(),
            conveyor: self.conveyor.clone(),
            object: self.object.clone(),
            obstacles: self.obstacles.clone(),
            goal_grid: GoalGridSpec {
                x_res: self.grid.x_res,
                y_res: self.grid.y_res,
                theta_res_deg: self.grid.theta_res.to_degrees(),
                theta_range_deg: [
                    self.grid.itheta[0] as f64 * self.grid.theta_res.to_degrees(),
                    self.grid.itheta[1] as f64 * self.grid.theta_res.to_degrees(),
                ],
            },
        }
    }

    pub fn object_pose_at(&self, pose0: &ObjectPose, t: f64) -> ObjectPose {
        object_pose_at(&self.conveyor, pose0, t)
    }

    /// Object footprint rectangle for a pose.
    pub fn object_rect(&self, pose: &ObjectPose) -> Rect {
        Rect {
            center: [pose.x, pose.y],
            size: self.object.footprint,
            angle: pose.theta,
        }
    }

    /// Axis-aligned union of all goal footprints at time `t`.
    pub fn envelope_at(&self, t: f64) -> Rect {
        let mut r = self.envelope0;
        r.center[0] += self.conveyor.belt_speed * t;
        r
    }

    /// Grasp pose for the object of `goal` at time `t`.
    pub fn grasp_pose(&self, goal: &ObjectPose, t: f64) -> Pose2 {
        let p = self.object_pose_at(goal, t);
        let [ox, oy, ot] = self.object.grasp_offset;
        let (s, c) = p.theta.sin_cos();
        Pose2 {
            x: p.x + c * ox - s * oy,
            y: p.y + s * ox + c * oy,
            theta: normalize_angle(p.theta + ot),
        }
    }

    /// Velocity of the grasp point (the belt velocity).
    pub fn object_velocity(&self) -> [f64; 2] {
        [self.conveyor.belt_speed, 0.0]
    }

    /// True if any link touches an obstacle, the belt band, or the object.
    /// `grasp_contact` exempts the last (gripper) link from the object test.
    pub fn check_collision(
        &self,
        q: &[f64],
        t: f64,
        motion: &ObjectMotion,
        grasp_contact: bool,
    ) -> bool {
        let object = match motion {
            ObjectMotion::Goal(p0) => Some(self.object_rect(&self.object_pose_at(p0, t))),
            ObjectMotion::Envelope => Some(self.envelope_at(t)),
            ObjectMotion::Absent => None,
        };
        let pts = self.arm.joint_positions(q);
        let n = pts.len() - 1;
        for i in 0..n {
            let (a, b) = (pts[i], pts[i + 1]);
            if self.obstacles.iter().any(|r| r.intersects_segment(a, b)) {
                return true;
            }
            if let Some(band) = &self.conveyor.belt_band {
                if band.intersects_segment(a, b) {
                    return true;
                }
            }
            if let Some(obj) = &object {
                if !(grasp_contact && i == n - 1) && obj.intersects_segment(a, b) {
                    return true;
                }
            }
        }
        false
    }

    /// Joint limits plus collision.
    pub fn is_valid(&self, q: &[f64], t: f64, motion: &ObjectMotion, grasp_contact: bool) -> bool {
        self.arm.within_limits(q) && !self.check_collision(q, t, motion, grasp_contact)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn arm(lengths: &[f64]) -> ArmModel {
        let n = lengths.len();
        ArmModel {
            link_lengths: lengths.to_vec(),
            link_masses: vec![1.0; n],
            base_position: [0.5, -0.25],
            joint_limits: vec![[-PI, PI]; n],
            velocity_limits: vec![1.0; n],
            torque_limits: vec![10.0; n],
            nominal_joint_speed: 0.7,
            nominal_ee_speed: 0.3,
            gravity: 0.0,
            home: vec![0.0; n],
        }
    }

    // independent oracle: chain of homogeneous 3x3 transforms
    fn fk_matrix_chain(a: &ArmModel, q: &[f64]) -> (f64, f64) {
        let mut t = nalgebra::Matrix3::new(
            1.0, 0.0, a.base_position[0], 0.0, 1.0, a.base_position[1], 0.0, 0.0, 1.0,
        );
        for (l, qi) in a.link_lengths.iter().zip(q) {
            let (s, c) = qi.sin_cos();
            let rot = nalgebra::Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
            let tr = nalgebra::Matrix3::new(1.0, 0.0, *l, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
            t = t * rot * tr;
        }
        (t[(0, 2)], t[(1, 2)])
    }

    #[test]
    fn fk_straight_and_quarter_turn() {
        let a = arm(&[1.0, 1.0, 1.0]);
        let p = a.forward_kinematics(&[0.0, 0.0, 0.0]).unwrap();
        assert!((p.x - 3.5).abs() < 1e-12 && (p.y + 0.25).abs() < 1e-12 && p.theta == 0.0);
        let one = arm(&[0.4]);
        let p = one.forward_kinematics(&[FRAC_PI_2]).unwrap();
        assert!((p.x - 0.5).abs() < 1e-12 && (p.y - 0.15).abs() < 1e-12);
        assert!((p.theta - FRAC_PI_2).abs() < 1e-15);
        assert!(matches!(
            a.forward_kinematics(&[0.0]),
            Err(Error::Dimension { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn fk_matches_matrix_chain() {
        let a = arm(&[0.35, 0.3, 0.15, 0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(-PI..PI)).collect();
            let p = a.forward_kinematics(&q).unwrap();
            let (x, y) = fk_matrix_chain(&a, &q);
            assert!((p.x - x).abs() <= 1e-9 && (p.y - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let a = arm(&[0.35, 0.3, 0.15]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..1000 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(-PI..PI)).collect();
            let j = a.jacobian(&q).unwrap();
            let scale = j.abs().max().max(1e-3);
            for i in 0..3 {
                let (mut qp, mut qm) = (q.clone(), q.clone());
                qp[i] += h;
                qm[i] -= h;
                let (pp, pm) = (a.fk(&qp), a.fk(&qm));
                let dx = (pp.x - pm.x) / (2.0 * h);
                let dy = (pp.y - pm.y) / (2.0 * h);
                assert!((dx - j[(0, i)]).abs() / scale <= 1e-5);
                assert!((dy - j[(1, i)]).abs() / scale <= 1e-5);
            }
        }
        let one = arm(&[0.4]);
        let j = one.jacobian(&[0.0]).unwrap();
        assert!(j[(0, 0)].abs() < 1e-15 && (j[(1, 0)] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn pinv_survives_singularity() {
        let a = arm(&[0.35, 0.3, 0.15]);
        // fully stretched: rank-deficient position Jacobian
        let j = a.jacobian(&[0.0, 0.0, 0.0]).unwrap();
        let p = damped_pinv(&j, 1e-3);
        assert!(p.iter().all(|v| v.is_finite()));
        let folded = a.jacobian(&[0.0, PI, 0.0]).unwrap();
        assert!(damped_pinv(&folded, 1e-3).iter().all(|v| v.is_finite()));
    }

    fn conveyor() -> ConveyorModel {
        ConveyorModel {
            belt_speed: 0.2,
            belt_y_extent: [0.43, 0.47],
            belt_band: None,
            x_exec: -1.6,
            epsilon: 0.025,
        }
    }

    #[test]
    fn belt_motion() {
        let c = conveyor();
        let p0 = ObjectPose::new(-1.6, 0.45, 0.1, 0.0);
        let p1 = object_pose_at(&c, &p0, 1.0);
        assert!((p1.x - (-1.4)).abs() < 1e-12 && p1.y == 0.45 && p1.theta == 0.1);
        assert_eq!(object_pose_at(&c, &p0, 0.0), p0);
        let back = object_pose_at(&c, &p1, 0.0);
        assert!((back.x - p0.x).abs() < 1e-12 && back.t_ref == 0.0);
    }

    #[test]
    fn grid_shape_and_round_trip() {
        let spec = GoalGridSpec {
            x_res: 0.01,
            y_res: 0.01,
            theta_res_deg: 10.0,
            theta_range_deg: [-20.0, 30.0],
        };
        let g = GoalGrid::new(&spec, &conveyor()).unwrap();
        assert_eq!(g.len(), 11 * 5 * 6);
        assert_eq!(g.iter().count(), 330);
        let keys: Vec<_> = g.iter().collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        for k in keys {
            assert_eq!(g.key_of(&g.pose_of(k)), k);
            let p = g.pose_of(k);
            assert_eq!(g.snap(&g.snap(&p)), g.snap(&p));
        }
        // ±π share one key on a wrapping angular grid
        let a = g.key_of(&ObjectPose { x: 0.0, y: 0.0, theta: PI, t_ref: 0.0 });
        let b = g.key_of(&ObjectPose { x: 0.0, y: 0.0, theta: -PI, t_ref: 0.0 });
        assert_eq!(a, b);
        assert_eq!(a.itheta, 18);
    }

    fn world() -> World {
        World::new(&WorldSpec {
            arm: ArmModel {
                base_position: [0.0, 0.0],
                ..arm(&[0.35, 0.3, 0.15])
            },
            conveyor: conveyor(),
            object: ObjectSpec {
                footprint: [0.06, 0.04],
                grasp_offset: [0.0, 0.0, FRAC_PI_2],
            },
            obstacles: vec![],
            goal_grid: GoalGridSpec {
                x_res: 0.01,
                y_res: 0.01,
                theta_res_deg: 10.0,
                theta_range_deg: [-20.0, 30.0],
            },
        })
        .unwrap()
    }

    #[test]
    fn collision_with_moving_object() {
        let w = world();
        let p0 = ObjectPose::new(-1.6, 0.45, 0.0, 0.0);
        // arm pointing straight up crosses y = 0.45 at x = 0
        let q = [FRAC_PI_2, 0.0, 0.0];
        assert!(!w.check_collision(&q, 0.0, &ObjectMotion::Goal(p0), false));
        assert!(w.check_collision(&q, 8.0, &ObjectMotion::Goal(p0), false));
        assert!(!w.check_collision(&q, 12.0, &ObjectMotion::Goal(p0), false));
        // arm folded below the belt never touches it
        let low = [0.0, 0.0, 0.0];
        assert!(!w.check_collision(&low, 8.0, &ObjectMotion::Goal(p0), false));
    }

    #[test]
    fn gripper_exemption_only_covers_the_last_link() {
        let w = world();
        // ee ends at the object centre pointing +y; only the gripper overlaps
        let q = [FRAC_PI_2, 0.0, 0.0];
        let t = 8.0;
        let p0 = ObjectPose::new(-1.6, 0.7, 0.0, 0.0);
        assert!(w.check_collision(&q, t, &ObjectMotion::Goal(p0), false));
        assert!(!w.check_collision(&q, t, &ObjectMotion::Goal(p0), true));
        // object over the second link is not exempt
        let p1 = ObjectPose::new(-1.6, 0.5, 0.0, 0.0);
        assert!(w.check_collision(&q, t, &ObjectMotion::Goal(p1), true));
    }

    #[test]
    fn envelope_contains_every_goal_footprint() {
        let w = world();
        for t in [0.0, 3.0, 7.5] {
            let env = w.envelope_at(t);
            for k in w.grid.iter() {
                let r = w.object_rect(&w.object_pose_at(&w.grid.pose_of(k), t));
                assert!(r.corners().iter().all(|c| {
                    (c.x - env.center[0]).abs() <= env.size[0] / 2.0 + 1e-12
                        && (c.y - env.center[1]).abs() <= env.size[1] / 2.0 + 1e-12
                }));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn grid_keys_survive_pose_round_trip(i in 0usize..330) {
            let sc = crate::config::Scenario::from_json(include_str!("../../../worlds/desk.json")).unwrap();
            let w = World::new(&sc.world).unwrap();
            let k = w.grid.iter().nth(i).unwrap();
            let p = w.grid.pose_of(k);
            proptest::prop_assert_eq!(w.grid.key_of(&p), k);
            proptest::prop_assert_eq!(w.grid.snap(&p), p);
        }
    }
}
