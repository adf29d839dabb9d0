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
//! Ground truth for tests and verification: reachability by planning from
//! scratch, the exhaustive straw-man table, a uniform-cost search, and the
//! sweeps that compare the coverage map against them.

use crate::config::Scenario;
use crate::ctmp::{query, replannable_indices, root_budget, Database, Trajectory};
use crate::error::{Error, Result};
use crate::search::{plan, Budget};
use crate::statespace::{LatticeState, Space, Step};
use crate::world::GoalKey;
use rayon::prelude::*;
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};

/// Largest goal set the straw-man construction accepts.
pub const STRAWMAN_MAX_GOALS: usize = 100;
/// Largest number of replanning steps the straw-man construction accepts.
pub const STRAWMAN_MAX_STEPS: u32 = 3;

/// Goal count of the instances [`tiny_scenario`] produces.
pub const TINY_MAX_GOALS: usize = 50;
/// Replanning steps of the instances [`tiny_scenario`] produces.
pub const TINY_MAX_STEPS: u32 = 2;

/// A copy of `scenario` small enough for the straw-man table: the goal grid
/// keeps its extent at a coarser resolution and the cutoff drops to two
/// replanning steps. A scenario that is already small is returned as is.
pub fn tiny_scenario(scenario: &Scenario) -> Result<Scenario> {
    let space = Space::new(scenario)?;
    if space.world.grid.len() <= TINY_MAX_GOALS && replan_steps(&space) <= TINY_MAX_STEPS {
        return Ok(scenario.clone());
    }
    let mut sc = scenario.clone();
    sc.name = format!("{}-tiny", sc.name);
    let c = &sc.world.conveyor;
    let g = &mut sc.world.goal_grid;
    g.x_res = g.x_res.max(c.epsilon);
    g.y_res = g.y_res.max((c.belt_y_extent[1] - c.belt_y_extent[0]) / 2.0);
    g.theta_res_deg = g.theta_res_deg.max((g.theta_range_deg[1] - g.theta_range_deg[0]) / 2.0);
    sc.ctmp.t_rc = sc.ctmp.t_rc.min(TINY_MAX_STEPS as f64 * sc.ctmp.delta_t);
    let space = Space::new(&sc)?;
    if space.world.grid.len() > TINY_MAX_GOALS {
        return Err(Error::TooLarge(format!("{} goals after coarsening", space.world.grid.len())));
    }
    Ok(sc)
}

/// True if a plan from scratch reaches `goal` within `budget`.
pub fn reachable(space: &Space, start: &LatticeState, goal: GoalKey, budget: Budget) -> bool {
    plan(space, start, goal, None, budget, space.planner.weight).found()
}

/// Number of replanning steps up to the cutoff.
pub fn replan_steps(space: &Space) -> u32 {
    space.rc_ticks / space.delta_t_ticks.max(1)
}

/// The straw-man lookup table: every state it stores, with the goals a plan
/// from scratch reaches from it.
#[derive(Clone, Debug, Default, Serialize)]
pub struct StrawmanTable {
    pub answers: BTreeMap<LatticeState, BTreeSet<GoalKey>>,
    pub paths: usize,
}

impl StrawmanTable {
    pub fn pairs(&self) -> usize {
        self.answers.values().map(BTreeSet::len).sum()
    }
}

/// Plans from home to every goal, then from every replannable state of every
/// stored path to every goal, recursively up to the cutoff. Identical states
/// are expanded once.
pub fn strawman_preprocess(space: &Space, goals: &[GoalKey], budget: Budget) -> Result<StrawmanTable> {
    if goals.len() > STRAWMAN_MAX_GOALS {
        return Err(Error::TooLarge(format!("{} goals (limit {STRAWMAN_MAX_GOALS})", goals.len())));
    }
    let steps = replan_steps(space);
    if steps > STRAWMAN_MAX_STEPS {
        return Err(Error::TooLarge(format!("{steps} replanning steps (limit {STRAWMAN_MAX_STEPS})")));
    }
    let mut table = StrawmanTable::default();
    let mut frontier = vec![space.home()];
    while let Some(s) = frontier.pop() {
        if table.answers.contains_key(&s) {
            continue;
        }
        let found: Vec<_> = goals
            .par_iter()
            .filter_map(|&g| plan(space, &s, g, None, budget, space.planner.weight).plan.map(|p| (g, p)))
            .collect();
        let mut answered = BTreeSet::new();
        for (g, p) in found {
            answered.insert(g);
            table.paths += 1;
            for i in replannable_indices(space, &p) {
                if !table.answers.contains_key(&p.states[i]) {
                    frontier.push(p.states[i].clone());
                }
            }
        }
        table.answers.insert(s, answered);
    }
    Ok(table)
}

#[derive(PartialEq)]
struct Open(f64, u32);

impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

/// Cost of a cheapest plan from `start` to `goal` by Dijkstra's algorithm
/// over the lattice, or `None` if none is found within `max_expansions`.
pub fn uniform_cost(space: &Space, start: &LatticeState, goal: GoalKey, max_expansions: u64) -> Option<f64> {
    let ctx = space.context(goal);
    if !space.config_valid(&space.q_of(start), space.time(start), &ctx, false) {
        return None;
    }
    let mut ids: HashMap<LatticeState, u32> = HashMap::new();
    let mut states = vec![start.clone()];
    let mut dist = vec![0.0];
    let mut done = vec![false];
    // a grasp is an edge into a shared terminal node
    let terminal = u32::MAX;
    let mut best_terminal = f64::INFINITY;
    ids.insert(start.clone(), 0);
    let mut open = BinaryHeap::from([Open(0.0, 0)]);
    let mut expansions = 0;
    while let Some(Open(d, id)) = open.pop() {
        if id == terminal {
            return Some(d);
        }
        if done[id as usize] || d > dist[id as usize] {
            continue;
        }
        if expansions == max_expansions {
            return None;
        }
        expansions += 1;
        done[id as usize] = true;
        let s = states[id as usize].clone();
        for succ in space.successors(&s, &ctx, None) {
            let nd = d + succ.cost;
            if let Step::Grasp(_) = succ.step {
                if nd < best_terminal {
                    best_terminal = nd;
                    open.push(Open(nd, terminal));
                }
                continue;
            }
            let next = match ids.get(&succ.state) {
                Some(&k) => k,
                None => {
                    let k = states.len() as u32;
                    ids.insert(succ.state.clone(), k);
                    states.push(succ.state);
                    dist.push(f64::INFINITY);
                    done.push(false);
                    k
                }
            };
            if nd < dist[next as usize] {
                dist[next as usize] = nd;
                open.push(Open(nd, next));
            }
        }
    }
    None
}

/// A query start: root path `path` at index `index`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct StoredState {
    pub path: u32,
    pub index: usize,
}

/// The replannable states of the database, each once: home, and the
/// replannable states along every root path. A state shared by several
/// paths is taken from the first, which is the path execution reaches it
/// on (a path planned from a state follows the path holding that state).
pub fn stored_states(space: &Space, db: &Database) -> Vec<StoredState> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for p in &db.paths {
        let starts = (p.start().t <= space.rc_ticks).then_some(0);
        for index in starts.into_iter().chain(replannable_indices(space, &p.plan)) {
            if seen.insert(&p.plan.states[index]) {
                out.push(StoredState { path: p.id, index });
            }
        }
    }
    out
}

/// Goals a query answers from a stored state with a plan that re-validates.
fn answered(space: &Space, db: &Database, at: StoredState, goals: &[GoalKey]) -> (BTreeSet<GoalKey>, Vec<GoalKey>) {
    let current = Trajectory::root(db, at.path);
    let mut ok = BTreeSet::new();
    let mut invalid = Vec::new();
    for &g in goals {
        if let Ok(t) = query(space, db, g, &current, at.index, false).result {
            if space.validate_plan(&t.plan, &space.context(g)).is_ok() && t.plan.states[..=at.index] == current.plan.states[..=at.index] {
                ok.insert(g);
            } else {
                invalid.push(g);
            }
        }
    }
    (ok, invalid)
}

/// A (state, goal) pair found by a sweep.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Pair {
    pub at: StoredState,
    pub t: u32,
    pub goal: GoalKey,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CompletenessReport {
    pub states: usize,
    pub pairs: usize,
    pub reachable: usize,
    pub answered: usize,
    /// Reachable per the oracle but not answered.
    pub missed: Vec<Pair>,
    /// Answered with a plan that fails re-validation.
    pub invalid: Vec<Pair>,
    /// Answered although the oracle found no plan.
    pub beyond_oracle: usize,
}

impl CompletenessReport {
    pub fn ok(&self) -> bool {
        self.missed.is_empty() && self.invalid.is_empty()
    }
}

/// Queries every goal from every stored replannable state and compares
/// against planning from scratch with the offline budget.
pub fn completeness_sweep(space: &Space, db: &Database) -> CompletenessReport {
    let goals: Vec<GoalKey> = space.world.grid.iter().collect();
    let budget = root_budget(space, &db.ctmp);
    let states = stored_states(space, db);
    let parts: Vec<CompletenessReport> = states
        .par_iter()
        .map(|&at| {
            let s = &db.paths[at.path as usize].plan.states[at.index];
            let (ok, invalid) = answered(space, db, at, &goals);
            let mut r = CompletenessReport { states: 1, pairs: goals.len(), ..Default::default() };
            r.answered = ok.len();
            r.invalid = invalid.into_iter().map(|goal| Pair { at, t: s.t, goal }).collect();
            for &g in &goals {
                let answered = ok.contains(&g);
                let reach = reachable(space, s, g, budget);
                r.reachable += reach as usize;
                r.beyond_oracle += (answered && !reach) as usize;
                if reach && !answered && !r.invalid.iter().any(|p| p.goal == g) {
                    r.missed.push(Pair { at, t: s.t, goal: g });
                }
            }
            r
        })
        .collect();
    let mut total = CompletenessReport::default();
    for p in parts {
        total.states += p.states;
        total.pairs += p.pairs;
        total.reachable += p.reachable;
        total.answered += p.answered;
        total.beyond_oracle += p.beyond_oracle;
        total.missed.extend(p.missed);
        total.invalid.extend(p.invalid);
    }
    total
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct EquivalenceReport {
    /// Stored states of the database that the straw-man table also holds.
    pub shared: usize,
    pub unshared: usize,
    pub ctmp_pairs: usize,
    pub strawman_pairs: usize,
    pub ctmp_only: Vec<Pair>,
    pub strawman_only: Vec<Pair>,
}

impl EquivalenceReport {
    pub fn ok(&self) -> bool {
        self.shared > 0 && self.ctmp_only.is_empty() && self.strawman_only.is_empty()
    }
}

/// Compares the goals answered by queries with the straw-man answers on
/// every stored state both constructions hold.
pub fn oracle_equivalence(space: &Space, db: &Database, table: &StrawmanTable, goals: &[GoalKey]) -> EquivalenceReport {
    let mut r = EquivalenceReport::default();
    for at in stored_states(space, db) {
        let s = &db.paths[at.path as usize].plan.states[at.index];
        let Some(expected) = table.answers.get(s) else {
            r.unshared += 1;
            continue;
        };
        r.shared += 1;
        let (ok, _) = answered(space, db, at, goals);
        r.ctmp_pairs += ok.len();
        r.strawman_pairs += expected.len();
        r.ctmp_only.extend(ok.difference(expected).map(|&goal| Pair { at, t: s.t, goal }));
        r.strawman_only.extend(expected.difference(&ok).map(|&goal| Pair { at, t: s.t, goal }));
    }
    r
}

/// Outcome of [`verify`]. Holds no timings, so equal inputs give equal
/// serializations.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub scenario: String,
    pub fingerprint: String,
    pub goals: usize,
    pub root_paths: usize,
    pub o1_violations: usize,
    pub completeness: CompletenessReport,
    /// Present when the instance is within the straw-man limits.
    pub equivalence: Option<EquivalenceReport>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.completeness.ok() && self.equivalence.as_ref().map_or(true, EquivalenceReport::ok)
    }

    pub fn render(&self) -> String {
        let verdict = |ok: bool| if ok { "OK" } else { "FAILED" };
        let c = &self.completeness;
        let mut s = format!(
            "completeness: {} ({} states, {} pairs, {} reachable, {} missed, {} invalid)\n",
            verdict(c.ok()),
            c.states,
            c.pairs,
            c.reachable,
            c.missed.len(),
            c.invalid.len()
        );
        match &self.equivalence {
            Some(e) => {
                s += &format!(
                    "oracle-equivalence: {} ({} shared states, {} pairs, {} only answered by queries, {} only by the straw man)\n",
                    verdict(e.ok()),
                    e.shared,
                    e.strawman_pairs,
                    e.ctmp_only.len(),
                    e.strawman_only.len()
                );
            }
            None => s += "oracle-equivalence: skipped (instance too large; use --tiny)\n",
        }
        s
    }
}

/// Runs the completeness sweep on `db`, and the straw-man comparison when
/// the instance is small enough.
pub fn verify(space: &Space, db: &Database) -> Result<VerifyReport> {
    let goals: Vec<GoalKey> = space.world.grid.iter().collect();
    let completeness = completeness_sweep(space, db);
    let equivalence = if goals.len() <= TINY_MAX_GOALS && replan_steps(space) <= TINY_MAX_STEPS {
        let table = strawman_preprocess(space, &goals, root_budget(space, &db.ctmp))?;
        Some(oracle_equivalence(space, db, &table, &goals))
    } else {
        None
    };
    Ok(VerifyReport {
        scenario: db.scenario.name.clone(),
        fingerprint: db.fingerprint.clone(),
        goals: goals.len(),
        root_paths: db.paths.len(),
        o1_violations: db.violations.len(),
        completeness,
        equivalence,
    })
}
