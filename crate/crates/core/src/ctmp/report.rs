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
use super::RootPath;
use crate::statespace::Space;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write;

/// Work done at one state: root paths planned from it and latches tried.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    /// Ticks.
    pub t: u32,
    pub covered: u32,
    pub via_root_paths: u32,
    pub via_latching: u32,
    pub root_paths: u32,
    pub latch_tries: u32,
    pub latch_failures: u32,
    pub expansions: u64,
}

impl StateRecord {
    pub(crate) fn absorb(&mut self, o: &StateRecord) {
        self.via_root_paths += o.via_root_paths;
        self.root_paths += o.root_paths;
        self.expansions += o.expansions;
    }
}

/// Per-time-step averages over the states where work was done.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub t: f64,
    pub states: u32,
    pub unreachable: f64,
    pub covered: f64,
    pub via_root_paths: f64,
    pub via_latching: f64,
    pub root_paths: f64,
    pub latch_tries: f64,
    pub latch_failures: f64,
    /// Seconds of search at the configured expansion rate.
    pub processing_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub goals: usize,
    pub rows: Vec<ReportRow>,
    pub root_paths: usize,
    /// Root paths per layer, from the home layer down.
    pub layers: Vec<usize>,
    /// Largest number of root paths planned from one state.
    pub max_paths_per_state: u32,
    pub goals_via_latching: u64,
}

impl PreprocessReport {
    pub fn new(space: &Space, records: &[StateRecord], paths: &[RootPath], goals: usize) -> Self {
        let mut by_t: BTreeMap<u32, Vec<&StateRecord>> = BTreeMap::new();
        for r in records {
            if r.root_paths > 0 || r.latch_tries > 0 {
                by_t.entry(r.t).or_default().push(r);
            }
        }
        let rate = space.planner.expansions_per_second;
        let rows = by_t
            .iter()
            .map(|(&t, rs)| {
                let n = rs.len() as f64;
                let mean = |f: &dyn Fn(&StateRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
                ReportRow {
                    t: t as f64 * space.tick,
                    states: rs.len() as u32,
                    unreachable: mean(&|r| (goals as u32 - r.covered) as f64),
                    covered: mean(&|r| r.covered as f64),
                    via_root_paths: mean(&|r| r.via_root_paths as f64),
                    via_latching: mean(&|r| r.via_latching as f64),
                    root_paths: mean(&|r| r.root_paths as f64),
                    latch_tries: mean(&|r| r.latch_tries as f64),
                    latch_failures: mean(&|r| r.latch_failures as f64),
                    processing_time: mean(&|r| r.expansions as f64 / rate),
                }
            })
            .collect();
        let depth = paths.iter().map(|p| p.layer as usize + 1).max().unwrap_or(0);
        let mut layers = vec![0; depth];
        for p in paths {
            layers[p.layer as usize] += 1;
        }
        PreprocessReport {
            goals,
            rows,
            root_paths: paths.len(),
            layers,
            max_paths_per_state: records.iter().map(|r| r.root_paths).max().unwrap_or(0),
            goals_via_latching: records.iter().map(|r| r.via_latching as u64).sum(),
        }
    }

    /// True if some state covered goals by latching.
    pub fn has_latch_layer(&self) -> bool {
        self.rows.iter().any(|r| r.via_latching > 0.0)
    }

    /// Layer `k` holds at most `n^(k+1)` paths, `n` being the most paths
    /// planned from a single state.
    pub fn within_space_bound(&self) -> bool {
        let n = self.max_paths_per_state as f64;
        self.layers.iter().enumerate().all(|(k, &c)| c as f64 <= n.powi(k as i32 + 1))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "t,states,unreachable_goals,covered_goals,covered_via_root_paths,covered_via_latching,\
             root_paths,latching_tries,latching_failures,processing_time_s\n",
        );
        for r in &self.rows {
            writeln!(
                s,
                "{:.2},{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{:.3}",
                r.t,
                r.states,
                r.unreachable,
                r.covered,
                r.via_root_paths,
                r.via_latching,
                r.root_paths,
                r.latch_tries,
                r.latch_failures,
                r.processing_time
            )
            .expect("writing to a string");
        }
        s
    }

    pub fn summary(&self) -> String {
        let layers: Vec<String> = self.layers.iter().map(|c| c.to_string()).collect();
        format!(
            "{} goals, {} root paths (per layer: {}), {} goal coverings by latching",
            self.goals,
            self.root_paths,
            layers.join("/"),
            self.goals_via_latching
        )
    }
}
