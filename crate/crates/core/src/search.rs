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
//! Weighted A* over either lattice, its heuristics, and planning with an
//! experience path.

use crate::config::LatticeKind;
use crate::geometry::normalize_angle;
use crate::statespace::{EdgeKind, ExperienceView, LatticeState, Plan, Space, Step};
use crate::world::{GoalKey, ObjectPose};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::time::Instant;

/// Smallest τ ≥ 0 with `‖d + vτ‖ = speed·τ`: the time for a pursuer moving
/// at `speed` to meet a target at offset `d` moving with velocity `v`.
pub fn intercept_time(d: [f64; 2], v: [f64; 2], speed: f64) -> Option<f64> {
    let c = d[0] * d[0] + d[1] * d[1];
    if c == 0.0 {
        return Some(0.0);
    }
    let a = v[0] * v[0] + v[1] * v[1] - speed * speed;
    let b = 2.0 * (d[0] * v[0] + d[1] * v[1]);
    if a.abs() < 1e-12 {
        return (b < 0.0).then(|| -c / b);
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // numerically stable pair of roots
    let qq = -0.5 * (b + b.signum() * sq);
    let (r1, r2) = (qq / a, c / qq);
    [r1, r2]
        .into_iter()
        .filter(|r| *r >= 0.0 && r.is_finite())
        .min_by(|x, y| x.total_cmp(y))
}

/// Intercept time and orientation error from a state to the grasp pose.
fn intercept_terms(space: &Space, s: &LatticeState, goal: &ObjectPose) -> (f64, f64) {
    let arm = &space.world.arm;
    let ee = arm.fk(&space.q_of(s));
    let gp = space.world.grasp_pose(goal, space.time(s));
    let dt = intercept_time(
        [gp.x - ee.x, gp.y - ee.y],
        space.world.object_velocity(),
        arm.nominal_ee_speed,
    )
    .unwrap_or(f64::INFINITY);
    (dt, normalize_angle(gp.theta - ee.theta).abs())
}

/// `max(Δt, λ·AngleDiff)`.
pub fn heuristic_timeconfig(space: &Space, s: &LatticeState, goal: &ObjectPose) -> f64 {
    let (dt, ang) = intercept_terms(space, s, goal);
    dt.max(space.planner.lambda * ang)
}

/// Mismatch between the belt velocity and the gripper velocity `J(q)·q̇`.
pub fn velocity_mismatch(space: &Space, s: &LatticeState) -> f64 {
    let v = space.world.arm.ee_velocity(&space.q_of(s), &space.qdot_of(s));
    let o = space.world.object_velocity();
    (o[0] - v[0]).hypot(o[1] - v[1])
}

/// `max(Δt, λ₁·AngleDiff + λ₂·Δẋ)`.
pub fn heuristic_kinodynamic(space: &Space, s: &LatticeState, goal: &ObjectPose) -> f64 {
    let (dt, ang) = intercept_terms(space, s, goal);
    dt.max(space.kino.lambda1 * ang + space.kino.lambda2 * velocity_mismatch(space, s))
}

pub fn heuristic(space: &Space, s: &LatticeState, goal: &ObjectPose) -> f64 {
    match space.kind {
        LatticeKind::TimeConfig => heuristic_timeconfig(space, s, goal),
        LatticeKind::Kinodynamic => heuristic_kinodynamic(space, s, goal),
    }
}

/// `Ssc(Π, g)`: the state of the path with the smallest heuristic to the
/// goal, ties going to the earliest.
pub fn shortcut_state<'a>(path: &'a Plan, h: impl Fn(&LatticeState) -> f64) -> &'a LatticeState {
    let mut best = 0;
    let mut best_h = f64::INFINITY;
    for (i, s) in path.states.iter().enumerate() {
        let v = h(s);
        if v < best_h {
            best = i;
            best_h = v;
        }
    }
    &path.states[best]
}

/// Search budget. Time budgets are converted into expansion caps through the
/// configured expansion rate, so a search gives the same answer on any
/// machine; the optional deadline is a wall-clock backstop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Budget {
    pub max_expansions: u64,
    pub deadline: Option<Instant>,
}

impl Budget {
    pub fn seconds(space: &Space, seconds: f64) -> Budget {
        Budget {
            max_expansions: (seconds * space.planner.expansions_per_second).floor().max(1.0) as u64,
            deadline: None,
        }
    }

    pub fn expansions(max_expansions: u64) -> Budget {
        Budget { max_expansions, deadline: None }
    }

    pub fn with_deadline(mut self, deadline: Instant) -> Budget {
        self.deadline = Some(deadline);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Found,
    Timeout,
    Exhausted,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub plan: Option<Plan>,
    pub status: Status,
    /// Seconds, grasp included.
    pub cost: f64,
    pub expansions: u64,
    pub wall_time: f64,
}

impl SearchResult {
    pub fn found(&self) -> bool {
        self.status == Status::Found
    }
}

#[derive(Clone, Copy, Debug)]
enum Via {
    Primitive(u16),
    Shortcut(u32, u32),
}

struct Node {
    state: LatticeState,
    g: f64,
    h: f64,
    parent: Option<(u32, Via)>,
}

struct Entry {
    f: f64,
    g: f64,
    seq: u64,
    node: u32,
    terminal: Option<u32>,
}

impl PartialEq for Entry {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Entry {
    // BinaryHeap pops the greatest: smallest f, then largest g, then oldest
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f)
            .then(self.g.total_cmp(&o.g))
            .then(o.seq.cmp(&self.seq))
    }
}

/// Weighted A* from `start`; `experience` adds shortcut successors.
pub fn wastar(
    space: &Space,
    start: &LatticeState,
    goal: GoalKey,
    weight: f64,
    budget: Budget,
    mut experience: Option<&mut ExperienceView<'_>>,
) -> SearchResult {
    let t0 = Instant::now();
    let ctx = space.context(goal);
    let h = |s: &LatticeState| heuristic(space, s, &ctx.goal);
    let mut nodes: Vec<Node> = Vec::new();
    let mut ids: HashMap<LatticeState, u32> = HashMap::new();
    let mut terminals: Vec<(u32, crate::statespace::GraspManeuver)> = Vec::new();
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    let mut expansions = 0u64;
    let fail = |status, expansions, t0: Instant| SearchResult {
        plan: None,
        status,
        cost: f64::INFINITY,
        expansions,
        wall_time: t0.elapsed().as_secs_f64(),
    };

    let q0 = space.q_of(start);
    let h0 = h(start);
    if !space.config_valid(&q0, space.time(start), &ctx, false) {
        return fail(Status::Exhausted, 0, t0);
    }
    nodes.push(Node { state: start.clone(), g: 0.0, h: h0, parent: None });
    ids.insert(start.clone(), 0);
    open.push(Entry { f: weight * h0, g: 0.0, seq, node: 0, terminal: None });

    while let Some(e) = open.pop() {
        if let Some(ti) = e.terminal {
            let (parent, m) = terminals[ti as usize].clone();
            let plan = reconstruct(space, &nodes, parent, goal, m, experience.as_deref());
            return SearchResult {
                cost: e.g,
                plan: Some(plan),
                status: crate::search::Status::Found,
                expansions,
                wall_time: t0.elapsed().as_secs_f64(),
            };
        }
        let id = e.node;
        if nodes[id as usize].g != e.g {
            continue; // stale
        }
        if expansions >= budget.max_expansions || budget.deadline.is_some_and(|d| Instant::now() >= d) {
            return fail(Status::Timeout, expansions, t0);
        }
        expansions += 1;
        let s = nodes[id as usize].state.clone();
        let g = e.g;
        for succ in space.successors(&s, &ctx, experience.as_deref_mut()) {
            let g2 = g + succ.cost;
            let via = match succ.step {
                Step::Grasp(m) => {
                    terminals.push((id, m));
                    seq += 1;
                    open.push(Entry {
                        f: g2,
                        g: g2,
                        seq,
                        node: id,
                        terminal: Some(terminals.len() as u32 - 1),
                    });
                    continue;
                }
                Step::Primitive(i) => Via::Primitive(i as u16),
                Step::Shortcut { from, to } => Via::Shortcut(from as u32, to as u32),
            };
            let nid = match ids.get(&succ.state) {
                Some(&nid) => {
                    if g2 >= nodes[nid as usize].g {
                        continue;
                    }
                    let n = &mut nodes[nid as usize];
                    n.g = g2;
                    n.parent = Some((id, via));
                    nid
                }
                None => {
                    // no nominal-speed intercept: kept, but behind every finite f
                    let hv = h(&succ.state);
                    let nid = nodes.len() as u32;
                    ids.insert(succ.state.clone(), nid);
                    nodes.push(Node { state: succ.state, g: g2, h: hv, parent: Some((id, via)) });
                    nid
                }
            };
            seq += 1;
            let n = &nodes[nid as usize];
            open.push(Entry { f: g2 + weight * n.h, g: g2, seq, node: nid, terminal: None });
        }
    }
    fail(Status::Exhausted, expansions, t0)
}

fn reconstruct(
    space: &Space,
    nodes: &[Node],
    last: u32,
    goal: GoalKey,
    grasp: crate::statespace::GraspManeuver,
    experience: Option<&ExperienceView<'_>>,
) -> Plan {
    let ctx = space.context(goal);
    let mut chain = vec![last];
    while let Some((p, _)) = nodes[*chain.last().unwrap() as usize].parent {
        chain.push(p);
    }
    chain.reverse();
    let mut states = vec![nodes[chain[0] as usize].state.clone()];
    let mut edges = Vec::new();
    for &id in &chain[1..] {
        let (pid, via) = nodes[id as usize].parent.expect("non-root node has a parent");
        match via {
            Via::Primitive(i) => {
                let from = &nodes[pid as usize].state;
                let seq = space
                    .apply_primitive(from, i as usize, &ctx)
                    .expect("primitive was valid when generated");
                for s in seq {
                    states.push(s);
                    edges.push(space.edge_kind(i as usize));
                }
            }
            Via::Shortcut(a, b) => {
                let e = experience.expect("shortcuts need an experience");
                for k in a as usize..b as usize {
                    states.push(e.plan.states[k + 1].clone());
                    edges.push(e.plan.edges[k]);
                }
            }
        }
    }
    Plan { goal, states, edges, grasp }
}

/// Index of the last state of `plan` that experience planning reuses
/// verbatim: the last state at or before the reuse horizon.
pub fn reuse_index(space: &Space, plan: &Plan) -> usize {
    plan.states
        .iter()
        .rposition(|s| s.t <= space.reuse_ticks)
        .unwrap_or(0)
}

/// Plans from `start` to `goal`. Without experience this is a plain search.
/// With experience, `start` must be a state of the experience path at or
/// before the reuse horizon; the path is followed verbatim up to that
/// horizon and searched from there with shortcut successors.
pub fn plan(
    space: &Space,
    start: &LatticeState,
    goal: GoalKey,
    experience: Option<&Plan>,
    budget: Budget,
    weight: f64,
) -> SearchResult {
    let Some(exp) = experience else {
        return wastar(space, start, goal, weight, budget, None);
    };
    let t0 = Instant::now();
    let k = reuse_index(space, exp);
    let i0 = match exp.index_at(start.t) {
        Some(i) if exp.states[i] == *start && i <= k => i,
        _ => {
            return SearchResult {
                plan: None,
                status: Status::Exhausted,
                cost: f64::INFINITY,
                expansions: 0,
                wall_time: t0.elapsed().as_secs_f64(),
            }
        }
    };
    if exp.goal == goal {
        let p = exp.suffix(i0);
        return SearchResult {
            cost: p.cost(space.tick),
            plan: Some(p),
            status: Status::Found,
            expansions: 0,
            wall_time: t0.elapsed().as_secs_f64(),
        };
    }
    let ctx = space.context(goal);
    let mut view = ExperienceView::new(exp, |s| heuristic(space, s, &ctx.goal), k);
    let mut r = wastar(space, &exp.states[k], goal, weight, budget, Some(&mut view));
    if let Some(tail) = r.plan.take() {
        let mut states = exp.states[i0..k].to_vec();
        let mut edges: Vec<EdgeKind> = exp.edges[i0..k].to_vec();
        states.extend(tail.states);
        edges.extend(tail.edges);
        let p = Plan { goal, states, edges, grasp: tail.grasp };
        r.cost = p.cost(space.tick);
        r.plan = Some(p);
    }
    r.wall_time = t0.elapsed().as_secs_f64();
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::tests::{desk_space, ik};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // oracle: bisection on f(τ) = ‖d + vτ‖ − sτ, scanning for the first sign change
    fn intercept_root_find(d: [f64; 2], v: [f64; 2], s: f64) -> Option<f64> {
        let f = |t: f64| (d[0] + v[0] * t).hypot(d[1] + v[1] * t) - s * t;
        let (mut lo, step) = (0.0, 0.01);
        while lo < 200.0 {
            let hi = lo + step;
            if f(hi) <= 0.0 {
                let (mut a, mut b) = (lo, hi);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if f(m) > 0.0 {
                        a = m
                    } else {
                        b = m
                    }
                }
                return Some(0.5 * (a + b));
            }
            lo = hi;
        }
        None
    }

    #[test]
    fn intercept_matches_root_finding() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let d = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let v = [rng.random_range(-0.24..0.24), rng.random_range(-0.24..0.24)];
            let s = rng.random_range(0.35..1.0);
            let a = intercept_time(d, v, s).unwrap();
            let b = intercept_root_find(d, v, s).unwrap();
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
        // stationary target: distance over speed
        assert!((intercept_time([0.3, 0.4], [0.0, 0.0], 0.25).unwrap() - 2.0).abs() < 1e-12);
        // receding faster than the pursuer
        assert_eq!(intercept_time([1.0, 0.0], [0.5, 0.0], 0.3), None);
    }

    #[test]
    fn heuristic_zero_at_aligned_grasp() {
        let sp = desk_space();
        let goal = GoalKey { ix: -160, iy: 45, itheta: 0 };
        let ctx = sp.context(goal);
        let t = 60u32;
        let gp = sp.world.grasp_pose(&ctx.goal, t as f64 * sp.tick);
        let q = ik(&sp.world.arm, gp.x, gp.y, gp.theta);
        // use continuous q through a fine lattice so the pose is exact
        let mut fine = sp.clone();
        fine.q_res = 1e-9;
        let s = LatticeState { t, q: fine.snap_q(&q), qdot: vec![] };
        assert!(heuristic_timeconfig(&fine, &s, &ctx.goal) < 1e-6);
    }

    #[test]
    fn velocity_mismatch_at_rest_is_belt_speed() {
        let mut sc = crate::statespace::tests::desk();
        sc.planner.lattice = LatticeKind::Kinodynamic;
        let sp = Space::new(&sc).unwrap();
        let s = sp.home();
        assert!((velocity_mismatch(&sp, &s) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn velocity_mismatch_matches_fk_differences() {
        let mut sc = crate::statespace::tests::desk();
        sc.planner.lattice = LatticeKind::Kinodynamic;
        let sp = Space::new(&sc).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let s = LatticeState {
                t: 0,
                q: (0..3).map(|_| rng.random_range(-300..300)).collect(),
                qdot: (0..3).map(|_| rng.random_range(-10..10)).collect(),
            };
            let (q, qd) = (sp.q_of(&s), sp.qdot_of(&s));
            let h = 1e-6;
            let plus: Vec<f64> = q.iter().zip(&qd).map(|(a, b)| a + h * b).collect();
            let minus: Vec<f64> = q.iter().zip(&qd).map(|(a, b)| a - h * b).collect();
            let (p, m) = (sp.world.arm.fk(&plus), sp.world.arm.fk(&minus));
            let v = [(p.x - m.x) / (2.0 * h), (p.y - m.y) / (2.0 * h)];
            let fd = (0.2 - v[0]).hypot(-v[1]);
            assert!((fd - velocity_mismatch(&sp, &s)).abs() <= 1e-5);
        }
    }

    #[test]
    fn single_state_shortcut() {
        let sp = desk_space();
        let p = Plan {
            goal: GoalKey { ix: 0, iy: 0, itheta: 0 },
            states: vec![sp.home()],
            edges: vec![],
            grasp: crate::statespace::GraspManeuver { steps: 0, duration: 0.0, q_end: vec![], qdot_end: vec![] },
        };
        assert_eq!(shortcut_state(&p, |_| 1.0), &p.states[0]);
    }
}
