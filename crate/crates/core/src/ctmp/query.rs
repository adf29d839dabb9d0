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
use super::{can_latch, experience_budget, replannable_indices, CoverMode, Database};
use crate::search::{plan, reuse_index, Status};
use crate::statespace::{EdgeKind, GraspManeuver, LatticeState, Plan, Space};
use crate::world::{GoalKey, ObjectPose};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// From plan index `from` on, the plan follows root path `path` starting
/// at its index `offset`, up to that path's reuse horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub from: usize,
    pub path: u32,
    pub offset: usize,
}

/// A path under execution, with the root paths it follows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub plan: Plan,
    pub segments: Vec<Segment>,
}

impl Trajectory {
    /// The robot resting at home with nothing planned yet.
    pub fn at_home(space: &Space) -> Self {
        let home = space.home();
        Trajectory {
            plan: Plan {
                goal: GoalKey { ix: 0, iy: 0, itheta: 0 },
                states: vec![home],
                edges: vec![],
                grasp: GraspManeuver { steps: 0, duration: 0.0, q_end: vec![], qdot_end: vec![] },
            },
            segments: vec![],
        }
    }

    /// A stored root path as the current path.
    pub fn root(db: &Database, id: u32) -> Self {
        Trajectory {
            plan: db.paths[id as usize].plan.clone(),
            segments: vec![Segment { from: 0, path: id, offset: 0 }],
        }
    }

    /// The root path followed at plan index `i` and the index on it.
    pub fn anchor(&self, space: &Space, db: &Database, i: usize) -> Option<(Segment, usize)> {
        let seg = *self.segments.iter().rev().find(|s| s.from <= i)?;
        let path = &db.paths[seg.path as usize].plan;
        let r = seg.offset + (i - seg.from);
        (r <= reuse_index(space, path) && path.states.get(r) == self.plan.states.get(i)).then_some((seg, r))
    }

    /// Index of the first state at least `ticks` after index `i`.
    pub fn index_after(&self, i: usize, ticks: u32) -> Option<usize> {
        let t = self.plan.states[i].t + ticks;
        self.plan.states[i..].iter().position(|s| s.t >= t).map(|k| i + k)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub lookups: u32,
    pub latch_attempts: u32,
    pub plan_calls: u32,
    pub expansions: u64,
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum QueryError {
    #[error("pose outside the goal region")]
    OutOfRegion,
    #[error("start state is past the replanning cutoff")]
    TooLate,
    #[error("goal not covered from this state")]
    NotCovered,
    #[error("experience plan failed ({0:?})")]
    PlanFailed(Status),
}

#[derive(Clone, Debug)]
pub struct QueryOutcome {
    pub result: Result<Trajectory, QueryError>,
    pub stats: QueryStats,
}

/// Builds `current[..start] + via + junction + tail[tail_from..]`.
fn splice(
    current: &Plan,
    start: usize,
    via: (&[LatticeState], &[EdgeKind]),
    junction: Option<EdgeKind>,
    tail: &Plan,
    tail_from: usize,
    goal: GoalKey,
) -> Plan {
    let mut states = current.states[..start].to_vec();
    let mut edges = current.edges[..start].to_vec();
    states.extend_from_slice(via.0);
    edges.extend_from_slice(via.1);
    edges.extend(junction);
    states.extend_from_slice(&tail.states[tail_from..]);
    edges.extend_from_slice(&tail.edges[tail_from..]);
    Plan { goal, states, edges, grasp: tail.grasp.clone() }
}

/// Replans to `goal` from the state at index `start` of `current`. The
/// returned trajectory agrees with `current` up to `start`. With
/// `deadline`, experience plans also stop on the wall clock.
pub fn query(space: &Space, db: &Database, goal: GoalKey, current: &Trajectory, start: usize, deadline: bool) -> QueryOutcome {
    let t0 = Instant::now();
    let mut stats = QueryStats::default();
    let result = run_query(space, db, goal, current, start, deadline, t0, &mut stats);
    stats.wall_time = t0.elapsed().as_secs_f64();
    QueryOutcome { result, stats }
}

/// As [`query`] for a pose at any reference time; the pose is carried to
/// the execution reference time and snapped into the goal region.
pub fn query_pose(space: &Space, db: &Database, pose: &ObjectPose, current: &Trajectory, start: usize, deadline: bool) -> QueryOutcome {
    let grid = &space.world.grid;
    let key = grid.key_of(&space.world.object_pose_at(pose, 0.0));
    if !grid.contains(key) {
        return QueryOutcome { result: Err(QueryError::OutOfRegion), stats: QueryStats::default() };
    }
    query(space, db, key, current, start, deadline)
}

#[allow(clippy::too_many_arguments)]
fn run_query(
    space: &Space,
    db: &Database,
    goal: GoalKey,
    current: &Trajectory,
    start: usize,
    deadline: bool,
    t0: Instant,
    stats: &mut QueryStats,
) -> Result<Trajectory, QueryError> {
    let s_start = &current.plan.states[start];
    if s_start.t > space.rc_ticks {
        return Err(QueryError::TooLate);
    }
    let mut budget = experience_budget(space, &db.ctmp);
    if deadline {
        budget = budget.with_deadline(t0 + std::time::Duration::from_secs_f64(db.ctmp.t_bound - db.ctmp.t_const));
    }
    let w = space.planner.weight;
    let run = |from: &LatticeState, exp: &Plan, stats: &mut QueryStats| {
        stats.plan_calls += 1;
        let r = plan(space, from, goal, Some(exp), budget, w);
        stats.expansions += r.expansions;
        r.plan.ok_or(QueryError::PlanFailed(r.status))
    };
    let keep = |upto: usize| -> Vec<_> { current.segments.iter().filter(|s| s.from <= upto).copied().collect() };

    let Some((seg, r)) = current.anchor(space, db, start) else {
        // not following any root path: only the state's own entries apply
        stats.lookups += 1;
        return match db.map.get(s_start, goal) {
            Some(c) if c.mode == CoverMode::Experience => {
                let tail = run(s_start, &db.paths[c.path as usize].plan, stats)?;
                let plan = splice(&current.plan, start, (&[], &[]), None, &tail, 0, goal);
                let mut segments: Vec<_> = current.segments.iter().filter(|s| s.from < start).copied().collect();
                segments.push(super::Segment { from: start, path: c.path, offset: 0 });
                Ok(Trajectory { plan, segments })
            }
            _ => Err(QueryError::NotCovered),
        };
    };
    let anchor = &db.paths[seg.path as usize];
    let astates = &anchor.plan.states;

    // the anchor's own goals, or any goal of its start when standing on it
    stats.lookups += 1;
    if let Some(c) = db.map.get(anchor.start(), goal) {
        if c.mode == CoverMode::Experience && (c.path == seg.path || r == 0) {
            let tail = run(s_start, &db.paths[c.path as usize].plan, stats)?;
            let plan = splice(&current.plan, start, (&[], &[]), None, &tail, 0, goal);
            let mut segments: Vec<_> = current.segments.iter().filter(|s| s.from < start).copied().collect();
            if c.path == seg.path {
                segments.push(Segment { from: start, path: seg.path, offset: r });
            } else {
                segments.push(Segment { from: start, path: c.path, offset: 0 });
            }
            return Ok(Trajectory { plan, segments });
        }
    }

    let mut home_entry = None;
    let home = space.home();
    for k in replannable_indices(space, &anchor.plan).into_iter().rev() {
        if k < r {
            break;
        }
        let s = &astates[k];
        let via = (&astates[r..k], &anchor.plan.edges[r..k]);
        stats.lookups += 1;
        if let Some(c) = db.map.get(s, goal).filter(|c| c.mode == CoverMode::Experience) {
            let tail = run(s, &db.paths[c.path as usize].plan, stats)?;
            let plan = splice(&current.plan, start, via, None, &tail, 0, goal);
            let mut segments = keep(start);
            segments.push(Segment { from: start + (k - r), path: c.path, offset: 0 });
            return Ok(Trajectory { plan, segments });
        }
        if home_entry.is_none() {
            stats.lookups += 1;
            home_entry = Some(db.map.get(&home, goal).filter(|c| c.mode == CoverMode::Experience));
        }
        if let Some(Some(h)) = home_entry {
            stats.latch_attempts += 1;
            let hp = &db.paths[h.path as usize];
            if let Some(j) = can_latch(space, s, hp, db.ctmp.latch_mode) {
                let tail = run(&home, &hp.plan, stats)?;
                let via = (&astates[r..=k], &anchor.plan.edges[r..k]);
                let plan = splice(&current.plan, start, via, Some(EdgeKind::Latch(db.ctmp.latch_mode)), &tail, j, goal);
                let mut segments = keep(start);
                segments.push(Segment { from: start + (k - r) + 1, path: h.path, offset: j });
                return Ok(Trajectory { plan, segments });
            }
        }
    }
    Err(QueryError::NotCovered)
}
