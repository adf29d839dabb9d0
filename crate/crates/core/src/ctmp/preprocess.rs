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
use super::report::{PreprocessReport, StateRecord};
use super::{can_latch, experience_budget, replannable_indices, root_budget, Cover, CoverMode, CoverageMap, RootPath};
use crate::config::CtmpConfig;
use crate::search::{plan, Budget};
use crate::statespace::{LatticeState, Space};
use crate::world::GoalKey;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

type Goals = BTreeSet<GoalKey>;

/// A goal found unreachable from a path's start but reachable from one of
/// its later states.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct O1Violation {
    pub start: LatticeState,
    pub later: LatticeState,
    pub goal: GoalKey,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessOutput {
    pub paths: Vec<RootPath>,
    pub home_paths: Vec<u32>,
    pub map: CoverageMap,
    /// Goals with no path from the home state.
    pub unreachable: Vec<GoalKey>,
    pub records: Vec<StateRecord>,
    pub violations: Vec<O1Violation>,
    pub expansions: u64,
}

impl PreprocessOutput {
    pub fn report(&self, space: &Space, n_goals: usize) -> PreprocessReport {
        PreprocessReport::new(space, &self.records, &self.paths, n_goals)
    }
}

pub struct Preprocessor<'a> {
    space: &'a Space,
    cfg: CtmpConfig,
    rng: ChaCha8Rng,
    exp_budget: Budget,
    root_budget: Budget,
    out: PreprocessOutput,
}

/// Runs the whole preprocessing from the home state over the full goal
/// region.
pub fn preprocess(space: &Space, cfg: &CtmpConfig) -> PreprocessOutput {
    let goals: Goals = space.world.grid.iter().collect();
    Preprocessor::new(space, cfg).run(goals)
}

struct Covered {
    uncov: Goals,
    cov: Goals,
    record: StateRecord,
}

impl<'a> Preprocessor<'a> {
    pub fn new(space: &'a Space, cfg: &CtmpConfig) -> Self {
        Preprocessor {
            space,
            cfg: cfg.clone(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            exp_budget: experience_budget(space, cfg),
            root_budget: root_budget(space, cfg),
            out: PreprocessOutput {
                paths: Vec::new(),
                home_paths: Vec::new(),
                map: CoverageMap::new(),
                unreachable: Vec::new(),
                records: Vec::new(),
                violations: Vec::new(),
                expansions: 0,
            },
        }
    }

    pub fn run(mut self, goals: Goals) -> PreprocessOutput {
        let home = self.space.home();
        let r = self.visit(&home, goals, Goals::new(), 0);
        self.out.unreachable = r.uncov.into_iter().collect();
        let mut rec = r.record;
        rec.t = home.t;
        self.out.records.push(rec);
        self.out
    }

    /// One call of the recursive procedure at `start`. Returns the goals
    /// unreachable from `start` and the goals it covers.
    fn visit(&mut self, start: &LatticeState, uncov: Goals, cov: Goals, layer: u32) -> Covered {
        let mut record = StateRecord { t: start.t, ..Default::default() };
        // goals this state already covers from an earlier visit
        let todo: Goals = uncov
            .iter()
            .filter(|g| self.out.map.get(start, **g).is_none())
            .copied()
            .collect();
        let exp_before = self.out.expansions;
        let (psi, unreachable) = self.plan_root_paths(start, todo, layer);
        if layer == 0 {
            self.out.home_paths = psi.clone();
        }
        record.root_paths = psi.len() as u32;
        record.via_root_paths = psi.iter().map(|&p| self.out.paths[p as usize].covered.len() as u32).sum();
        let cov_start: Goals = cov.union(&uncov.difference(&unreachable).copied().collect()).copied().collect();

        if start.t <= self.space.rc_ticks {
            if !unreachable.is_empty() {
                self.audit(start, &psi, &unreachable);
            }
            for &pid in &psi {
                let gi: Goals = self.out.paths[pid as usize].covered.iter().copied().collect();
                let mut cov_i = gi.clone();
                let mut uncov_i: Goals = cov_start.difference(&gi).copied().collect();
                let idx = replannable_indices(self.space, &self.out.paths[pid as usize].plan);
                for &k in idx.iter().rev() {
                    if uncov_i.is_empty() {
                        break;
                    }
                    let s = self.out.paths[pid as usize].plan.states[k].clone();
                    let mut rec = StateRecord { t: s.t, ..Default::default() };
                    self.try_latching(&s, pid, &mut uncov_i, &mut cov_i, &mut rec);
                    if !uncov_i.is_empty() {
                        let r = self.visit(&s, uncov_i, cov_i, layer + 1);
                        uncov_i = r.uncov;
                        cov_i = r.cov;
                        rec.absorb(&r.record);
                    }
                    rec.covered = cov_i.len() as u32;
                    self.out.records.push(rec);
                }
            }
        }
        record.covered = cov_start.len() as u32;
        record.expansions = self.out.expansions - exp_before;
        Covered { uncov: unreachable, cov: cov_start, record }
    }

    fn try_latching(&mut self, s: &LatticeState, own: u32, uncov: &mut Goals, cov: &mut Goals, rec: &mut StateRecord) {
        for &h in &self.out.home_paths.clone() {
            if h == own {
                continue;
            }
            rec.latch_tries += 1;
            let path = &self.out.paths[h as usize];
            if can_latch(self.space, s, path, self.cfg.latch_mode).is_none() {
                rec.latch_failures += 1;
                continue;
            }
            let gained: Vec<GoalKey> = path.covered.iter().filter(|g| uncov.contains(g)).copied().collect();
            for g in gained {
                uncov.remove(&g);
                cov.insert(g);
                self.out.map.insert(s, g, Cover { path: h, mode: CoverMode::Latch });
                rec.via_latching += 1;
            }
        }
    }

    /// Samples uncovered goals, plans a root path to each from scratch and
    /// sweeps the rest with it as experience.
    fn plan_root_paths(&mut self, start: &LatticeState, mut uncov: Goals, layer: u32) -> (Vec<u32>, Goals) {
        let space = self.space;
        let w = space.planner.weight;
        let mut psi = Vec::new();
        let mut unreachable = Goals::new();
        while !uncov.is_empty() {
            let k = self.rng.random_range(0..uncov.len());
            let gi = *uncov.iter().nth(k).expect("index in range");
            uncov.remove(&gi);
            let r = plan(space, start, gi, None, self.root_budget, w);
            self.out.expansions += r.expansions;
            let Some(root) = r.plan else {
                log::debug!("goal {gi} unreachable from t={}", start.t);
                unreachable.insert(gi);
                continue;
            };
            let candidates: Vec<GoalKey> = uncov.iter().copied().collect();
            let budget = self.exp_budget;
            let swept: Vec<(GoalKey, bool, u64)> = candidates
                .par_iter()
                .map(|&g| {
                    let r = plan(space, start, g, Some(&root), budget, w);
                    (g, r.found(), r.expansions)
                })
                .collect();
            let mut covered = vec![gi];
            for (g, ok, e) in swept {
                self.out.expansions += e;
                if ok {
                    uncov.remove(&g);
                    covered.push(g);
                }
            }
            covered.sort();
            let id = self.out.paths.len() as u32;
            for &g in &covered {
                self.out.map.insert(start, g, Cover { path: id, mode: CoverMode::Experience });
            }
            log::debug!("root path {id} (layer {layer}) from t={} covers {}", start.t, covered.len());
            self.out.paths.push(RootPath { id, layer, plan: root, covered });
            psi.push(id);
        }
        (psi, unreachable)
    }

    /// Checks the assumption that a goal unreachable from `start` stays
    /// unreachable from the later replannable states of its paths.
    fn audit(&mut self, start: &LatticeState, psi: &[u32], unreachable: &Goals) {
        let space = self.space;
        let mut pairs = Vec::new();
        for &pid in psi {
            let plan = &self.out.paths[pid as usize].plan;
            for k in replannable_indices(space, plan) {
                for &g in unreachable {
                    pairs.push((plan.states[k].clone(), g));
                }
            }
        }
        let budget = self.root_budget;
        let w = space.planner.weight;
        let found: Vec<(LatticeState, GoalKey, bool, u64)> = pairs
            .into_par_iter()
            .map(|(s, g)| {
                let r = plan(space, &s, g, None, budget, w);
                (s, g, r.found(), r.expansions)
            })
            .collect();
        for (s, g, ok, e) in found {
            self.out.expansions += e;
            if ok {
                log::warn!("goal {g} unreachable from t={} but reachable from t={}", start.t, s.t);
                self.out.violations.push(O1Violation { start: start.clone(), later: s, goal: g });
            }
        }
    }
}
