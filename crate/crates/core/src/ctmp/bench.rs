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
//! Query latency measurement and calibration of the time reserved for
//! lookups and latch checks.

use super::{can_latch, experience_budget, query, replannable_indices, Database, Trajectory};
use crate::oracle::stored_states;
use crate::statespace::Space;
use crate::world::GoalKey;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::time::Instant;

/// Times the non-planning part of the longest query: a lookup at the
/// anchor start and at home, then a lookup and a latch check at every
/// replannable state of a root path. Returns the largest of `rounds`
/// measurements in seconds.
pub fn measure_lookup_latch(space: &Space, db: &Database, rounds: usize) -> f64 {
    let goals: Vec<GoalKey> = space.world.grid.iter().collect();
    let home = space.home();
    let mode = db.ctmp.latch_mode;
    let mut worst: f64 = 0.0;
    if db.paths.is_empty() || db.home_paths.is_empty() {
        return worst;
    }
    for i in 0..rounds {
        let p = &db.paths[i % db.paths.len()];
        let hp = &db.paths[db.home_paths[i % db.home_paths.len()] as usize];
        let g = goals[(i * 7919) % goals.len()];
        let idx = replannable_indices(space, &p.plan);
        let t0 = Instant::now();
        let mut hits = 0usize;
        hits += db.map.get(p.start(), g).is_some() as usize;
        hits += db.map.get(&home, g).is_some() as usize;
        for &k in idx.iter().rev() {
            let s = &p.plan.states[k];
            hits += db.map.get(s, g).is_some() as usize;
            hits += can_latch(space, s, hp, mode).is_some() as usize;
        }
        std::hint::black_box(hits);
        worst = worst.max(t0.elapsed().as_secs_f64());
    }
    worst
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub queries: usize,
    pub succeeded: usize,
    /// Failed queries by error.
    pub failures: std::collections::BTreeMap<String, usize>,
    pub t_bound: f64,
    pub within_bound: usize,
    pub within_twice: usize,
    pub max_wall_time: f64,
    pub mean_wall_time: f64,
    /// Queries whose plan ran past its expansion cap.
    pub budget_exceeded: usize,
    /// Upper bucket edges in seconds and counts; the last bucket is open.
    pub histogram: Vec<(f64, usize)>,
    pub measured_lookup_latch: f64,
    /// Three times the measured lookup and latch time.
    pub calibrated_t_const: f64,
    pub configured_t_const: f64,
}

impl BenchReport {
    pub fn t_const_ok(&self) -> bool {
        self.calibrated_t_const <= self.configured_t_const
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "{} queries ({} answered), T_bound {:.3} s\nwithin T_bound: {} ({:.2}%), within 2xT_bound: {} ({:.2}%)\nmean {:.2} ms, max {:.2} ms, over budget {}\n",
            self.queries,
            self.succeeded,
            self.t_bound,
            self.within_bound,
            100.0 * self.within_bound as f64 / self.queries.max(1) as f64,
            self.within_twice,
            100.0 * self.within_twice as f64 / self.queries.max(1) as f64,
            1e3 * self.mean_wall_time,
            1e3 * self.max_wall_time,
            self.budget_exceeded,
        );
        for (e, n) in &self.failures {
            s += &format!("failed: {e}: {n}\n");
        }
        let mut lo = 0.0;
        for &(hi, n) in &self.histogram {
            if hi.is_finite() {
                s += &format!("  [{:6.1}, {:6.1}) ms  {n}\n", 1e3 * lo, 1e3 * hi);
            } else {
                s += &format!("  [{:6.1},    inf) ms  {n}\n", 1e3 * lo);
            }
            lo = hi;
        }
        s += &format!(
            "T_const: measured {:.3} ms, calibrated {:.3} ms, configured {:.3} ms\n",
            1e3 * self.measured_lookup_latch,
            1e3 * self.calibrated_t_const,
            1e3 * self.configured_t_const
        );
        s
    }
}

/// Runs `n` queries from seeded random stored states to seeded random goals
/// with the wall-clock deadline on.
pub fn run_bench(space: &Space, db: &Database, n: usize, seed: u64) -> BenchReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = stored_states(space, db);
    let n = if states.is_empty() { 0 } else { n };
    let goals: Vec<GoalKey> = space.world.grid.iter().collect();
    let cap = experience_budget(space, &db.ctmp).max_expansions;
    let t_bound = db.ctmp.t_bound;
    let edges: Vec<f64> = (1..=8).map(|k| k as f64 * t_bound / 4.0).chain([f64::INFINITY]).collect();
    let mut histogram: Vec<(f64, usize)> = edges.iter().map(|&e| (e, 0)).collect();
    let trajectories: Vec<Trajectory> = db.paths.iter().map(|p| Trajectory::root(db, p.id)).collect();
    let (mut succeeded, mut within_bound, mut within_twice, mut budget_exceeded) = (0, 0, 0, 0);
    let mut failures = std::collections::BTreeMap::new();
    let (mut max_wall_time, mut total): (f64, f64) = (0.0, 0.0);
    for _ in 0..n {
        let at = states[rng.random_range(0..states.len())];
        let g = goals[rng.random_range(0..goals.len())];
        let out = query(space, db, g, &trajectories[at.path as usize], at.index, true);
        let w = out.stats.wall_time;
        match &out.result {
            Ok(_) => succeeded += 1,
            Err(e) => *failures.entry(e.to_string()).or_default() += 1,
        }
        within_bound += (w <= t_bound) as usize;
        within_twice += (w <= 2.0 * t_bound) as usize;
        budget_exceeded += (out.stats.expansions > cap) as usize;
        max_wall_time = max_wall_time.max(w);
        total += w;
        let b = histogram.iter().position(|&(e, _)| w < e).unwrap_or(histogram.len() - 1);
        histogram[b].1 += 1;
    }
    let measured = measure_lookup_latch(space, db, 2000);
    BenchReport {
        queries: n,
        succeeded,
        failures,
        t_bound,
        within_bound,
        within_twice,
        max_wall_time,
        mean_wall_time: total / n.max(1) as f64,
        budget_exceeded,
        histogram,
        measured_lookup_latch: measured,
        calibrated_t_const: 3.0 * measured,
        configured_t_const: db.ctmp.t_const,
    }
}
