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
//! The implicit search graphs: lattice states, motion primitives, edge
//! validation, the dynamic grasp primitive, and plans.
//!
//! Every edge produced here spans exactly one search tick except latch
//! edges, which span `δ_t`. Primitives that take several ticks are emitted
//! as a chain of per-tick sub-edges so that every path has a state at every
//! tick.

use crate::config::{
    DynamicPrimitiveConfig, KinodynamicConfig, LatchMode, LatticeKind, PlannerConfig, Scenario,
};
use crate::dynamics::{self, DynamicsState};
use crate::error::Result;
use crate::geometry::normalize_angle;
use crate::world::{damped_pinv, ArmModel, GoalKey, ObjectMotion, ObjectPose, World};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// RK4 steps per tick for acceleration primitives.
const KINO_RK4_STEPS: usize = 2;

/// A search state. `q` and `qdot` are integer cells; `qdot` is empty on
/// the time-configuration lattice.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticeState {
    pub t: u32,
    pub q: Vec<i32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub qdot: Vec<i32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PrimitiveKind {
    /// Constant-velocity move of one joint by `cells` joint cells.
    Move { joint: usize, cells: i32 },
    Wait,
    /// Constant acceleration of one joint; `level` indexes the configured
    /// levels from 1, its sign giving the direction.
    Accel { joint: usize, level: i32 },
    Coast,
    DynamicGrasp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub kind: PrimitiveKind,
    pub ticks: u32,
    pub duration: f64,
    pub cost: f64,
}

/// Label of one edge of a plan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Move { joint: u8 },
    Wait,
    Accel { joint: u8, level: i8 },
    Coast,
    Latch(LatchMode),
}

/// The closing manoeuvre of a plan, produced by the grasp controller
/// starting at the last lattice state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraspManeuver {
    pub steps: u32,
    pub duration: f64,
    pub q_end: Vec<f64>,
    pub qdot_end: Vec<f64>,
}

/// A path from its first state to a grasp completion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub goal: GoalKey,
    pub states: Vec<LatticeState>,
    pub edges: Vec<EdgeKind>,
    pub grasp: GraspManeuver,
}

impl Plan {
    pub fn start(&self) -> &LatticeState {
        &self.states[0]
    }

    pub fn trigger(&self) -> &LatticeState {
        self.states.last().expect("plans are never empty")
    }

    /// Traversal time in seconds, grasp included.
    pub fn cost(&self, tick: f64) -> f64 {
        (self.trigger().t - self.start().t) as f64 * tick + self.grasp.duration
    }

    /// Index of the state at tick `t`, if any.
    pub fn index_at(&self, t: u32) -> Option<usize> {
        let first = self.states[0].t;
        if t < first {
            return None;
        }
        // states are tick-dense except across latch edges
        let guess = (t - first) as usize;
        if guess < self.states.len() && self.states[guess].t == t {
            return Some(guess);
        }
        self.states.binary_search_by_key(&t, |s| s.t).ok()
    }

    /// The sub-plan starting at `idx`.
    pub fn suffix(&self, idx: usize) -> Plan {
        Plan {
            goal: self.goal,
            states: self.states[idx..].to_vec(),
            edges: self.edges[idx..].to_vec(),
            grasp: self.grasp.clone(),
        }
    }
}

/// Collision context of a search. Up to `envelope_until` the object is the
/// union of all goal objects, so that a prefix valid for one goal is valid
/// for every goal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Context {
    pub goal: ObjectPose,
    pub envelope_until: f64,
}

/// A world together with a lattice and all planner parameters.
#[derive(Clone, Debug)]
pub struct Space {
    pub world: World,
    pub kind: LatticeKind,
    pub planner: PlannerConfig,
    pub dynprim: DynamicPrimitiveConfig,
    pub kino: KinodynamicConfig,
    /// Radians per joint cell.
    pub q_res: f64,
    /// Radians per second per velocity cell.
    pub v_res: f64,
    /// Seconds per tick.
    pub tick: f64,
    pub primitives: Vec<MotionPrimitive>,
    pub max_ticks: u32,
    /// Ticks per replanning step.
    pub delta_t_ticks: u32,
    pub rc_ticks: u32,
    /// Prefixes up to this tick are reused verbatim by experience planning.
    pub reuse_ticks: u32,
}

fn ticks_of(seconds: f64, tick: f64) -> u32 {
    (seconds / tick - 1e-9).ceil().max(0.0) as u32
}

/// Single-joint constant-velocity moves plus a wait. Every joint gets
/// ±`small_step`; joints `1..=min(large_step_joints, n)` also get
/// ±`large_step`.
pub fn predefined_primitives(arm: &ArmModel, cfg: &PlannerConfig) -> Vec<MotionPrimitive> {
    let n = arm.n_joints();
    let res = cfg.joint_resolution_deg;
    let mut out = Vec::new();
    let mut push = |joint: usize, deg: f64| {
        let ticks = ticks_of(deg.to_radians() / arm.nominal_joint_speed, cfg.delta_search).max(1);
        let cells = (deg / res).round() as i32;
        for sign in [1, -1] {
            out.push(MotionPrimitive {
                kind: PrimitiveKind::Move { joint, cells: sign * cells },
                ticks,
                duration: ticks as f64 * cfg.delta_search,
                cost: ticks as f64 * cfg.delta_search,
            });
        }
    };
    for j in 0..n {
        push(j, cfg.small_step_deg);
    }
    for j in 0..cfg.large_step_joints.min(n) {
        push(j, cfg.large_step_deg);
    }
    out.push(MotionPrimitive {
        kind: PrimitiveKind::Wait,
        ticks: 1,
        duration: cfg.delta_search,
        cost: cfg.delta_search,
    });
    out
}

/// ±each acceleration level on one joint at a time, plus coasting.
pub fn kinodynamic_primitives(arm: &ArmModel, cfg: &PlannerConfig, kino: &KinodynamicConfig) -> Vec<MotionPrimitive> {
    let mut out = Vec::new();
    let one = |kind| MotionPrimitive {
        kind,
        ticks: 1,
        duration: cfg.delta_search,
        cost: cfg.delta_search,
    };
    for joint in 0..arm.n_joints() {
        for l in 1..=kino.accel_levels_deg.len() as i32 {
            out.push(one(PrimitiveKind::Accel { joint, level: l }));
            out.push(one(PrimitiveKind::Accel { joint, level: -l }));
        }
    }
    out.push(one(PrimitiveKind::Coast));
    out
}

/// An edge candidate from [`Space::successors`].
#[derive(Clone, Debug)]
pub struct Successor {
    pub state: LatticeState,
    pub cost: f64,
    pub step: Step,
}

#[derive(Clone, Debug)]
pub enum Step {
    /// Index into [`Space::primitives`].
    Primitive(usize),
    /// Follow the experience path from index `from` to index `to`.
    Shortcut { from: usize, to: usize },
    /// Terminal grasp manoeuvre.
    Grasp(GraspManeuver),
}

impl Space {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let world = World::new(&scenario.world)?;
        Ok(Self::from_parts(world, scenario))
    }

    pub fn from_parts(world: World, scenario: &Scenario) -> Self {
        let p = scenario.planner.clone();
        let c = &scenario.ctmp;
        let tick = p.delta_search;
        let kind = p.lattice;
        let primitives = match kind {
            LatticeKind::TimeConfig => predefined_primitives(&world.arm, &p),
            LatticeKind::Kinodynamic => kinodynamic_primitives(&world.arm, &p, &scenario.kinodynamic),
        };
        let delta_t_ticks = (c.delta_t / tick).round() as u32;
        let rc_ticks = (c.t_rc / tick).round() as u32;
        Space {
            kind,
            q_res: p.joint_resolution_deg.to_radians(),
            v_res: scenario.kinodynamic.velocity_resolution_deg.to_radians(),
            tick,
            primitives,
            max_ticks: (p.t_max / tick + 1e-9).floor() as u32,
            delta_t_ticks,
            rc_ticks,
            reuse_ticks: rc_ticks + delta_t_ticks,
            planner: p,
            dynprim: scenario.dynamic_primitive.clone(),
            kino: scenario.kinodynamic.clone(),
            world,
        }
    }

    pub fn n(&self) -> usize {
        self.world.arm.n_joints()
    }

    pub fn time(&self, s: &LatticeState) -> f64 {
        s.t as f64 * self.tick
    }

    pub fn q_of(&self, s: &LatticeState) -> Vec<f64> {
        s.q.iter().map(|c| *c as f64 * self.q_res).collect()
    }

    /// Joint velocities of a state. Time-configuration states are treated
    /// as being at rest.
    pub fn qdot_of(&self, s: &LatticeState) -> Vec<f64> {
        if s.qdot.is_empty() {
            vec![0.0; s.q.len()]
        } else {
            s.qdot.iter().map(|c| *c as f64 * self.v_res).collect()
        }
    }

    pub fn snap_q(&self, q: &[f64]) -> Vec<i32> {
        q.iter().map(|v| (v / self.q_res).round() as i32).collect()
    }

    pub fn snap_qdot(&self, v: &[f64]) -> Vec<i32> {
        v.iter().map(|v| (v / self.v_res).round() as i32).collect()
    }

    /// The home configuration at tick `t`, at rest.
    pub fn home_at(&self, t: u32) -> LatticeState {
        LatticeState {
            t,
            q: self.snap_q(&self.world.arm.home),
            qdot: match self.kind {
                LatticeKind::TimeConfig => vec![],
                LatticeKind::Kinodynamic => vec![0; self.n()],
            },
        }
    }

    pub fn home(&self) -> LatticeState {
        self.home_at(0)
    }

    pub fn context(&self, goal: GoalKey) -> Context {
        Context {
            goal: self.world.grid.pose_of(goal),
            envelope_until: self.reuse_ticks as f64 * self.tick,
        }
    }

    /// Limits plus collision at one instant under a search context.
    pub fn config_valid(&self, q: &[f64], t: f64, ctx: &Context, grasp_contact: bool) -> bool {
        if !self.world.arm.within_limits(q) {
            return false;
        }
        if t <= ctx.envelope_until + 1e-9
            && self.world.check_collision(q, t, &ObjectMotion::Envelope, grasp_contact)
        {
            return false;
        }
        !self.world.check_collision(q, t, &ObjectMotion::Goal(ctx.goal), grasp_contact)
    }

    fn velocity_ok(&self, qdot: &[f64]) -> bool {
        qdot.iter().zip(&self.world.arm.velocity_limits).all(|(v, l)| v.abs() <= *l + 1e-12)
    }

    /// Straight joint-space motion checked at `substeps` interior points and
    /// the endpoint.
    fn linear_valid(&self, qa: &[f64], qb: &[f64], ta: f64, tb: f64, substeps: usize, ctx: &Context) -> bool {
        let mut q = vec![0.0; qa.len()];
        for k in 1..=substeps {
            let s = k as f64 / substeps as f64;
            for i in 0..q.len() {
                q[i] = qa[i] + (qb[i] - qa[i]) * s;
            }
            if !self.config_valid(&q, ta + (tb - ta) * s, ctx, false) {
                return false;
            }
        }
        true
    }

    fn accel_vector(&self, joint: usize, level: i32) -> Vec<f64> {
        let mut a = vec![0.0; self.n()];
        let mag = self.kino.accel_levels_deg[(level.unsigned_abs() - 1) as usize].to_radians();
        a[joint] = mag * level.signum() as f64;
        a
    }

    /// Applies a constant acceleration for one tick through inverse then
    /// forward dynamics. Returns the snapped successor or `None` when a
    /// limit or collision is violated.
    fn integrate_accel(&self, s: &LatticeState, qddot: &[f64], ctx: &Context) -> Option<LatticeState> {
        let arm = &self.world.arm;
        let mut ds = DynamicsState::new(self.q_of(s), self.qdot_of(s));
        let tau = dynamics::inverse_dynamics(arm, &ds, qddot).ok()?;
        if tau.iter().zip(&arm.torque_limits).any(|(t, l)| t.abs() > *l) {
            return None;
        }
        let sub = self.planner.collision_substeps.max(KINO_RK4_STEPS);
        let per = sub.div_ceil(KINO_RK4_STEPS);
        let h = self.tick / KINO_RK4_STEPS as f64;
        let mut t0 = self.time(s);
        let mut q = vec![0.0; ds.q.len()];
        for _ in 0..KINO_RK4_STEPS {
            let next = dynamics::integrate_rk4(arm, &ds, &tau, h).ok()?;
            if !self.velocity_ok(&next.qdot) {
                return None;
            }
            // collision samples on the cubic Hermite between integration steps
            for k in 1..=per {
                let u = k as f64 / per as f64;
                let (h00, h10) = (2.0 * u * u * u - 3.0 * u * u + 1.0, u * u * u - 2.0 * u * u + u);
                let (h01, h11) = (-2.0 * u * u * u + 3.0 * u * u, u * u * u - u * u);
                for i in 0..q.len() {
                    q[i] = h00 * ds.q[i] + h10 * h * ds.qdot[i] + h01 * next.q[i] + h11 * h * next.qdot[i];
                }
                if !self.config_valid(&q, t0 + u * h, ctx, false) {
                    return None;
                }
            }
            ds = next;
            t0 += h;
        }
        let next = LatticeState {
            t: s.t + 1,
            q: self.snap_q(&ds.q),
            qdot: self.snap_qdot(&ds.qdot),
        };
        let (q, v) = (self.q_of(&next), self.qdot_of(&next));
        (arm.within_limits(&q) && self.velocity_ok(&v)).then_some(next)
    }

    /// Applies primitive `idx`, returning the per-tick states after `s`
    /// (the last one is the successor), or `None` if invalid.
    pub fn apply_primitive(&self, s: &LatticeState, idx: usize, ctx: &Context) -> Option<Vec<LatticeState>> {
        let p = &self.primitives[idx];
        if s.t + p.ticks > self.max_ticks {
            return None;
        }
        match p.kind {
            PrimitiveKind::Move { joint, cells } => {
                let mut out = Vec::with_capacity(p.ticks as usize);
                let mut prev = s.clone();
                for k in 1..=p.ticks as i32 {
                    let mut next = prev.clone();
                    next.t += 1;
                    next.q[joint] = s.q[joint] + (cells * k) / p.ticks as i32;
                    if !self.edge_valid(&prev, &next, EdgeKind::Move { joint: joint as u8 }, ctx) {
                        return None;
                    }
                    out.push(next.clone());
                    prev = next;
                }
                Some(out)
            }
            PrimitiveKind::Wait => {
                let mut next = s.clone();
                next.t += 1;
                self.edge_valid(s, &next, EdgeKind::Wait, ctx).then(|| vec![next])
            }
            PrimitiveKind::Accel { joint, level } => {
                let a = self.accel_vector(joint, level);
                self.integrate_accel(s, &a, ctx).map(|n| vec![n])
            }
            PrimitiveKind::Coast => self.integrate_accel(s, &vec![0.0; self.n()], ctx).map(|n| vec![n]),
            PrimitiveKind::DynamicGrasp => None,
        }
    }

    pub fn edge_kind(&self, idx: usize) -> EdgeKind {
        match self.primitives[idx].kind {
            PrimitiveKind::Move { joint, .. } => EdgeKind::Move { joint: joint as u8 },
            PrimitiveKind::Wait => EdgeKind::Wait,
            PrimitiveKind::Accel { joint, level } => EdgeKind::Accel {
                joint: joint as u8,
                level: level as i8,
            },
            PrimitiveKind::Coast => EdgeKind::Coast,
            PrimitiveKind::DynamicGrasp => unreachable!("the grasp is not a lattice edge"),
        }
    }

    /// Re-validates one edge of a plan: timing, limits, collisions, and for
    /// dynamic edges that integration reproduces the stored successor.
    pub fn edge_valid(&self, a: &LatticeState, b: &LatticeState, kind: EdgeKind, ctx: &Context) -> bool {
        if b.t <= a.t || b.t > self.max_ticks {
            return false;
        }
        let (ta, tb) = (self.time(a), self.time(b));
        let sub = self.planner.collision_substeps;
        match kind {
            EdgeKind::Move { joint } => {
                let j = joint as usize;
                let moved = a.q.iter().zip(&b.q).enumerate().all(|(i, (x, y))| i == j || x == y);
                // per-tick displacement bounded by the nominal speed
                let max_cells = (self.world.arm.nominal_joint_speed * self.tick / self.q_res + 1e-6).floor() as i32;
                b.t == a.t + 1
                    && moved
                    && (b.q[j] - a.q[j]).abs() <= max_cells.max(1)
                    && self.linear_valid(&self.q_of(a), &self.q_of(b), ta, tb, sub, ctx)
            }
            EdgeKind::Wait => {
                b.t == a.t + 1 && a.q == b.q && a.qdot == b.qdot && self.linear_valid(&self.q_of(a), &self.q_of(b), ta, tb, sub, ctx)
            }
            EdgeKind::Accel { joint, level } => {
                b.t == a.t + 1
                    && self.integrate_accel(a, &self.accel_vector(joint as usize, level as i32), ctx).as_ref() == Some(b)
            }
            EdgeKind::Coast => {
                b.t == a.t + 1 && self.integrate_accel(a, &vec![0.0; self.n()], ctx).as_ref() == Some(b)
            }
            EdgeKind::Latch(mode) => self.latch_valid(a, b, mode, ctx),
        }
    }

    /// A transition of exactly `δ_t` between two states of (possibly)
    /// different paths.
    pub fn latch_valid(&self, a: &LatticeState, b: &LatticeState, mode: LatchMode, ctx: &Context) -> bool {
        if b.t != a.t + self.delta_t_ticks {
            return false;
        }
        let (qa, qb) = (self.q_of(a), self.q_of(b));
        let (ta, tb) = (self.time(a), self.time(b));
        let dt = tb - ta;
        let arm = &self.world.arm;
        match mode {
            LatchMode::Linear => {
                let reach = arm.nominal_joint_speed * dt + 1e-9;
                qa.iter().zip(&qb).all(|(x, y)| (y - x).abs() <= reach)
                    && self.linear_valid(&qa, &qb, ta, tb, self.planner.collision_substeps * self.delta_t_ticks as usize, ctx)
            }
            LatchMode::Cubic => {
                let from = DynamicsState::new(qa, self.qdot_of(a));
                let to = DynamicsState::new(qb, self.qdot_of(b));
                let c = dynamics::cubic_latch_segment(arm, &from, &to, dt, 0.02);
                c.feasible && c.samples.iter().all(|s| self.config_valid(&s.q, ta + s.t, ctx, false))
            }
        }
    }

    /// Predefined or dynamic successors of `s` (no shortcut, no grasp).
    pub fn lattice_successors(&self, s: &LatticeState, ctx: &Context) -> Vec<Successor> {
        let mut out = Vec::with_capacity(self.primitives.len() + 1);
        for (i, p) in self.primitives.iter().enumerate() {
            if let Some(states) = self.apply_primitive(s, i, ctx) {
                out.push(Successor {
                    state: states.last().expect("at least one tick").clone(),
                    cost: p.cost,
                    step: Step::Primitive(i),
                });
            }
        }
        out
    }

    /// All successors: lattice moves, the grasp manoeuvre when the gripper
    /// is close enough, and the shortcut along an experience path.
    pub fn successors(&self, s: &LatticeState, ctx: &Context, experience: Option<&mut ExperienceView<'_>>) -> Vec<Successor> {
        let mut out = self.lattice_successors(s, ctx);
        if let Some(m) = self.dynamic_grasp_primitive(s, ctx) {
            out.push(Successor {
                state: s.clone(),
                cost: m.duration,
                step: Step::Grasp(m),
            });
        }
        if let Some(e) = experience {
            if let Some((from, to)) = e.shortcut(self, s, ctx) {
                let pstates = &e.plan.states;
                out.push(Successor {
                    state: pstates[to].clone(),
                    cost: (pstates[to].t - pstates[from].t) as f64 * self.tick,
                    step: Step::Shortcut { from, to },
                });
            }
        }
        out
    }

    /// Distance between the gripper and the grasp pose at the state's time.
    pub fn grasp_distance(&self, s: &LatticeState, goal: &ObjectPose) -> f64 {
        let ee = self.world.arm.fk(&self.q_of(s));
        let gp = self.world.grasp_pose(goal, self.time(s));
        ee.point().dist(gp.point())
    }

    /// Runs the grasp controller from `s`: the gripper is driven towards the
    /// grasp pose with a proportional term plus the belt velocity as feed
    /// forward, through a damped pseudo-inverse of the task Jacobian. Once
    /// within tolerance it tracks the object for `t_enclose`.
    pub fn dynamic_grasp_primitive(&self, s: &LatticeState, ctx: &Context) -> Option<GraspManeuver> {
        let cfg = &self.dynprim;
        let arm = &self.world.arm;
        let goal = &ctx.goal;
        if self.grasp_distance(s, goal) > cfg.trigger_distance {
            return None;
        }
        let n = self.n();
        let dt = cfg.dt_ctrl;
        let ang_tol = cfg.ang_tol_deg.to_radians();
        let kinodynamic = self.kind == LatticeKind::Kinodynamic;
        let t0 = self.time(s);
        let mut q = self.q_of(s);
        let mut qdot = self.qdot_of(s);
        let vobj = self.world.object_velocity();
        let max_steps = (cfg.max_duration / dt).round() as u32;
        let enclose_steps = (cfg.t_enclose / dt - 1e-9).ceil() as u32;
        let mut enclosed_at: Option<u32> = None;
        let mut j3 = DMatrix::zeros(3, n);
        for step in 1..=max_steps {
            let t = t0 + (step - 1) as f64 * dt;
            let ee = arm.fk(&q);
            let gp = self.world.grasp_pose(goal, t);
            let v = DVector::from_row_slice(&[
                cfg.k_p * (gp.x - ee.x) + vobj[0],
                cfg.k_p * (gp.y - ee.y) + vobj[1],
                cfg.k_p * normalize_angle(gp.theta - ee.theta),
            ]);
            let j = arm.jac(&q);
            for c in 0..n {
                j3[(0, c)] = j[(0, c)];
                j3[(1, c)] = j[(1, c)];
                j3[(2, c)] = 1.0;
            }
            let cmd: Vec<f64> = (damped_pinv(&j3, cfg.dls_lambda) * v).iter().copied().collect();
            if !self.velocity_ok(&cmd) {
                return None;
            }
            if kinodynamic {
                let acc: Vec<f64> = cmd.iter().zip(&qdot).map(|(c, v)| (c - v) / dt).collect();
                let tau = dynamics::inverse_dynamics(arm, &DynamicsState::new(q.clone(), qdot.clone()), &acc).ok()?;
                if tau.iter().zip(&arm.torque_limits).any(|(t, l)| t.abs() > *l) {
                    return None;
                }
            }
            for i in 0..n {
                q[i] += cmd[i] * dt;
            }
            qdot = cmd;
            let t1 = t0 + step as f64 * dt;
            if !self.config_valid(&q, t1, ctx, true) {
                return None;
            }
            let ee = arm.fk(&q);
            let gp = self.world.grasp_pose(goal, t1);
            let vee = arm.ee_velocity(&q, &qdot);
            let rel = (vee[0] - vobj[0]).hypot(vee[1] - vobj[1]);
            let within = ee.point().dist(gp.point()) <= cfg.pos_tol
                && normalize_angle(gp.theta - ee.theta).abs() <= ang_tol
                && rel <= cfg.v_tol;
            if within {
                enclosed_at.get_or_insert(step);
            } else {
                enclosed_at = None;
            }
            if let Some(e) = enclosed_at {
                if step - e >= enclose_steps {
                    return Some(GraspManeuver {
                        steps: step,
                        duration: step as f64 * dt,
                        q_end: q,
                        qdot_end: qdot,
                    });
                }
            }
        }
        None
    }

    /// Re-validates a complete plan against a context: time monotonicity,
    /// every edge, and a grasp manoeuvre that reproduces and ends on the
    /// object within tolerance.
    pub fn validate_plan(&self, plan: &Plan, ctx: &Context) -> std::result::Result<(), String> {
        if plan.states.is_empty() || plan.edges.len() + 1 != plan.states.len() {
            return Err("malformed plan".into());
        }
        let q0 = self.q_of(plan.start());
        if !self.config_valid(&q0, self.time(plan.start()), ctx, false) {
            return Err("start state invalid".into());
        }
        for (i, e) in plan.edges.iter().enumerate() {
            if !self.edge_valid(&plan.states[i], &plan.states[i + 1], *e, ctx) {
                return Err(format!("edge {i} ({e:?}) invalid at t={}", plan.states[i].t));
            }
        }
        let m = self
            .dynamic_grasp_primitive(plan.trigger(), ctx)
            .ok_or_else(|| "grasp manoeuvre fails".to_string())?;
        if m != plan.grasp {
            return Err("grasp manoeuvre does not reproduce".into());
        }
        if !self.grasp_matches(plan, &ctx.goal) {
            return Err("terminal pose outside grasp tolerance".into());
        }
        Ok(())
    }

    /// True if the plan's final gripper pose matches the grasp pose of
    /// `object` at the terminal time within the grasp tolerances.
    pub fn grasp_matches(&self, plan: &Plan, object: &ObjectPose) -> bool {
        let t_end = self.time(plan.trigger()) + plan.grasp.duration;
        let ee = self.world.arm.fk(&plan.grasp.q_end);
        let gp = self.world.grasp_pose(object, t_end);
        ee.point().dist(gp.point()) <= self.dynprim.pos_tol + 1e-9
            && normalize_angle(gp.theta - ee.theta).abs() <= self.dynprim.ang_tol_deg.to_radians() + 1e-9
    }
}

/// Search-time view of an experience path for one goal: per-state heuristic
/// values, suffix argmins, and lazily validated edges.
pub struct ExperienceView<'a> {
    pub plan: &'a Plan,
    index: std::collections::HashMap<&'a LatticeState, usize>,
    /// `best[i]` is the smallest index minimising h over `i..`.
    best: Vec<usize>,
    edge_ok: Vec<Option<bool>>,
    /// Shortcuts may not start before this index.
    pub min_index: usize,
}

impl<'a> ExperienceView<'a> {
    pub fn new(plan: &'a Plan, h: impl Fn(&LatticeState) -> f64, min_index: usize) -> Self {
        let hv: Vec<f64> = plan.states.iter().map(&h).collect();
        let mut best = vec![0; hv.len()];
        let last = hv.len() - 1;
        best[last] = last;
        for i in (0..last).rev() {
            let b = best[i + 1];
            best[i] = if hv[i] <= hv[b] { i } else { b };
        }
        ExperienceView {
            plan,
            index: plan.states.iter().enumerate().map(|(i, s)| (s, i)).collect(),
            best,
            edge_ok: vec![None; plan.edges.len()],
            min_index,
        }
    }

    pub fn index_of(&self, s: &LatticeState) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// The shortcut edge for `s`, if `s` lies on the path and the path
    /// segment up to the shortcut state is valid for the current goal.
    pub fn shortcut(&mut self, space: &Space, s: &LatticeState, ctx: &Context) -> Option<(usize, usize)> {
        let from = self.index_of(s)?;
        if from < self.min_index {
            return None;
        }
        let to = self.best[from];
        if to == from {
            return None;
        }
        for k in from..to {
            let ok = *self.edge_ok[k].get_or_insert_with(|| {
                space.edge_valid(&self.plan.states[k], &self.plan.states[k + 1], self.plan.edges[k], ctx)
            });
            if !ok {
                return None;
            }
        }
        Some((from, to))
    }
}
