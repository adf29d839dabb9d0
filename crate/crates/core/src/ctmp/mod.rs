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
//! Preprocessing into root paths and a coverage map, and the bounded-time
//! query that answers from them.

mod bench;
mod coverage;
mod db;
mod latch;
mod preprocess;
mod query;
mod report;

pub use bench::{measure_lookup_latch, run_bench, BenchReport};
pub use coverage::{Cover, CoverMode, CoverageMap};
pub use db::{Database, DB_FORMAT, DB_VERSION};
pub use latch::can_latch;
pub use preprocess::{preprocess, O1Violation, PreprocessOutput, Preprocessor};
pub use query::{query, query_pose, QueryError, QueryOutcome, QueryStats, Segment, Trajectory};
pub use report::{PreprocessReport, ReportRow, StateRecord};

use crate::search::Budget;
use crate::statespace::{LatticeState, Plan, Space};
use crate::world::GoalKey;
use serde::{Deserialize, Serialize};

/// A stored path together with the goals it serves as experience for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootPath {
    pub id: u32,
    /// 0 for paths from the home state, `k + 1` for paths planned from a
    /// state of a layer-`k` path.
    pub layer: u32,
    pub plan: Plan,
    /// Sorted.
    pub covered: Vec<GoalKey>,
}

impl RootPath {
    pub fn start(&self) -> &LatticeState {
        self.plan.start()
    }

    pub fn goal(&self) -> GoalKey {
        self.plan.goal
    }
}

/// Budget of an experience-based plan inside a query.
pub fn experience_budget(space: &Space, cfg: &crate::config::CtmpConfig) -> Budget {
    Budget::seconds(space, cfg.t_bound - cfg.t_const)
}

/// Budget of a plan from scratch (root paths and the reachability oracle).
pub fn root_budget(space: &Space, cfg: &crate::config::CtmpConfig) -> Budget {
    Budget::seconds(space, cfg.t_p)
}

/// Indices of the replannable states of a path that follow its start: the
/// states on the `δ_t` grid after the start, up to the cutoff and the
/// trigger, in increasing time.
pub fn replannable_indices(space: &Space, plan: &Plan) -> Vec<usize> {
    let dt = space.delta_t_ticks.max(1);
    let t0 = plan.start().t;
    let last = space.rc_ticks.min(plan.trigger().t);
    let mut t = (t0 / dt + 1) * dt;
    let mut out = Vec::new();
    while t <= last {
        if let Some(i) = plan.index_at(t) {
            out.push(i);
        }
        t += dt;
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::config::Scenario;
    use std::sync::OnceLock;

    pub(crate) fn tiny_scenario() -> Scenario {
        Scenario::from_json(include_str!("../../../../worlds/tiny.json")).unwrap()
    }

    /// The shipped tiny world, preprocessed once per test binary.
    pub(crate) fn tiny() -> &'static (Space, Database) {
        static DB: OnceLock<(Space, Database)> = OnceLock::new();
        DB.get_or_init(|| {
            let sc = tiny_scenario();
            let space = Space::new(&sc).unwrap();
            let out = preprocess(&space, &sc.ctmp);
            let db = Database::from_preprocess(&sc, out);
            (space, db)
        })
    }

    #[test]
    fn replannable_indices_on_delta_grid() {
        let (space, db) = tiny();
        for p in &db.paths {
            let idx = replannable_indices(space, &p.plan);
            let ts: Vec<u32> = idx.iter().map(|&i| p.plan.states[i].t).collect();
            assert!(ts.windows(2).all(|w| w[0] < w[1]));
            for t in ts {
                assert_eq!(t % space.delta_t_ticks, 0);
                assert!(t > p.start().t && t <= space.rc_ticks);
            }
        }
    }

    #[test]
    fn tiny_covers_every_goal_from_home() {
        let (space, db) = tiny();
        assert!(db.unreachable.is_empty());
        assert_eq!(db.covered_goals(), space.world.grid.len());
        for g in space.world.grid.iter() {
            assert!(db.map.get(&space.home(), g).is_some());
        }
    }

    #[test]
    fn space_bound_per_layer() {
        let (_, db) = tiny();
        let n_pi = db.home_paths.len().max(1);
        let max_layer = db.paths.iter().map(|p| p.layer).max().unwrap();
        for layer in 0..=max_layer {
            let count = db.paths.iter().filter(|p| p.layer == layer).count();
            assert!(count <= n_pi.pow(layer + 1), "layer {layer}: {count} paths");
        }
    }

    #[test]
    fn coverage_holds_backwards_along_paths() {
        let (space, db) = tiny();
        let mut checked = 0;
        for p in &db.paths {
            let mut idx = replannable_indices(space, &p.plan);
            if p.layer == 0 {
                idx.insert(0, 0);
            }
            let cur = Trajectory::root(db, p.id);
            for (n, &k) in idx.iter().enumerate() {
                for g in space.world.grid.iter() {
                    if db.map.get(&p.plan.states[k], g).is_none() {
                        continue;
                    }
                    for &j in &idx[..n] {
                        assert!(query(space, db, g, &cur, j, false).result.is_ok(), "path {} index {j} goal {g:?}", p.id);
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 0);
    }
}
