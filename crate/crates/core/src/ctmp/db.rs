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
use super::preprocess::{O1Violation, PreprocessOutput};
use super::report::{PreprocessReport, StateRecord};
use super::{Cover, CoverMode, CoverageMap, RootPath};
use crate::config::{CtmpConfig, LatticeKind, Scenario};
use crate::error::{Error, Result};
use crate::statespace::{EdgeKind, GraspManeuver, LatticeState, Plan, Space};
use crate::world::GoalKey;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DB_FORMAT: &str = "ctmp-path-db";
pub const DB_VERSION: u32 = 1;

/// Everything preprocessing produces, as loaded for queries.
#[derive(Clone, Debug, PartialEq)]
pub struct Database {
    /// The scenario the database was built for.
    pub scenario: Scenario,
    pub fingerprint: String,
    pub lattice: LatticeKind,
    pub ctmp: CtmpConfig,
    pub paths: Vec<RootPath>,
    pub home_paths: Vec<u32>,
    pub map: CoverageMap,
    pub unreachable: Vec<GoalKey>,
    pub records: Vec<StateRecord>,
    pub violations: Vec<O1Violation>,
    pub expansions: u64,
}

#[derive(Serialize, Deserialize)]
struct Scales {
    tick: f64,
    q_res: f64,
    v_res: f64,
}

#[derive(Serialize, Deserialize)]
struct PathRecord {
    id: u32,
    layer: u32,
    goal: [i32; 3],
    /// Ids into the state table.
    states: Vec<u32>,
    edges: Vec<EdgeKind>,
    grasp: GraspManeuver,
    covered: Vec<[i32; 3]>,
}

#[derive(Serialize, Deserialize)]
struct DbFile {
    format: String,
    version: u32,
    fingerprint: String,
    scenario: Scenario,
    lattice: LatticeKind,
    ctmp: CtmpConfig,
    scales: Scales,
    /// Each state as `[t, q.., qdot..]` in integer cells.
    states: Vec<Vec<i64>>,
    paths: Vec<PathRecord>,
    home_paths: Vec<u32>,
    /// `[state, ix, iy, itheta, path, mode]`, mode 0 experience, 1 latch.
    coverage: Vec<[i64; 6]>,
    unreachable: Vec<[i32; 3]>,
    records: Vec<StateRecord>,
    violations: Vec<O1Violation>,
    expansions: u64,
}

fn key3(g: GoalKey) -> [i32; 3] {
    [g.ix, g.iy, g.itheta]
}

fn goal3(k: [i32; 3]) -> GoalKey {
    GoalKey { ix: k[0], iy: k[1], itheta: k[2] }
}

impl Database {
    pub fn from_preprocess(scenario: &Scenario, out: PreprocessOutput) -> Self {
        let mut map = out.map;
        // every path state gets an id so the file can refer to it
        for p in &out.paths {
            for s in &p.plan.states {
                map.intern(s);
            }
        }
        Database {
            scenario: scenario.clone(),
            fingerprint: scenario.fingerprint(),
            lattice: scenario.planner.lattice,
            ctmp: scenario.ctmp.clone(),
            paths: out.paths,
            home_paths: out.home_paths,
            map,
            unreachable: out.unreachable,
            records: out.records,
            violations: out.violations,
            expansions: out.expansions,
        }
    }

    pub fn report(&self, space: &Space) -> PreprocessReport {
        PreprocessReport::new(space, &self.records, &self.paths, space.world.grid.len())
    }

    /// Number of distinct goals covered from the home state.
    pub fn covered_goals(&self) -> usize {
        self.home_paths.iter().map(|&p| self.paths[p as usize].covered.len()).sum()
    }

    pub fn to_json(&self, space: &Space) -> String {
        let n = space.n();
        let states: Vec<Vec<i64>> = self
            .map
            .states()
            .iter()
            .map(|s| {
                let mut v = Vec::with_capacity(1 + 2 * n);
                v.push(s.t as i64);
                v.extend(s.q.iter().map(|&x| x as i64));
                v.extend(s.qdot.iter().map(|&x| x as i64));
                v
            })
            .collect();
        let id = |s: &LatticeState| self.map.state_id(s).expect("path states are interned");
        let file = DbFile {
            format: DB_FORMAT.into(),
            version: DB_VERSION,
            fingerprint: self.fingerprint.clone(),
            scenario: self.scenario.clone(),
            lattice: self.lattice,
            ctmp: self.ctmp.clone(),
            scales: Scales { tick: space.tick, q_res: space.q_res, v_res: space.v_res },
            states,
            paths: self
                .paths
                .iter()
                .map(|p| PathRecord {
                    id: p.id,
                    layer: p.layer,
                    goal: key3(p.goal()),
                    states: p.plan.states.iter().map(id).collect(),
                    edges: p.plan.edges.clone(),
                    grasp: p.plan.grasp.clone(),
                    covered: p.covered.iter().map(|&g| key3(g)).collect(),
                })
                .collect(),
            home_paths: self.home_paths.clone(),
            coverage: self
                .map
                .entries()
                .into_iter()
                .map(|(s, g, c)| {
                    let mode = match c.mode {
                        CoverMode::Experience => 0,
                        CoverMode::Latch => 1,
                    };
                    [s as i64, g.ix as i64, g.iy as i64, g.itheta as i64, c.path as i64, mode]
                })
                .collect(),
            unreachable: self.unreachable.iter().map(|&g| key3(g)).collect(),
            records: self.records.clone(),
            violations: self.violations.clone(),
            expansions: self.expansions,
        };
        let mut s = serde_json::to_string(&file).expect("database serializes");
        s.push('\n');
        s
    }

    /// Parses a database and checks it belongs to `scenario`.
    pub fn from_json(text: &str, scenario: &Scenario) -> Result<Self> {
        Self::parse(text, Some(scenario))
    }

    /// Parses a database against the scenario stored in it.
    pub fn from_json_embedded(text: &str) -> Result<Self> {
        Self::parse(text, None)
    }

    fn parse(text: &str, scenario: Option<&Scenario>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let h: Header = serde_json::from_str(text)?;
        if h.format != DB_FORMAT {
            return Err(Error::Config(format!("not a path database: format {:?}", h.format)));
        }
        if h.version != DB_VERSION {
            return Err(Error::Version { expected: DB_VERSION, found: h.version });
        }
        let f: DbFile = serde_json::from_str(text)?;
        let scenario = scenario.unwrap_or(&f.scenario);
        let expected = scenario.fingerprint();
        if f.fingerprint != expected {
            return Err(Error::Fingerprint { expected, found: f.fingerprint });
        }
        let n = scenario.world.arm.link_lengths.len();
        let mut states = Vec::with_capacity(f.states.len());
        for v in &f.states {
            if v.len() != 1 + n && v.len() != 1 + 2 * n {
                return Err(Error::Dimension { expected: 1 + n, got: v.len() });
            }
            let cell = |x: i64| i32::try_from(x).map_err(|_| Error::Config("state cell out of range".into()));
            states.push(LatticeState {
                t: u32::try_from(v[0]).map_err(|_| Error::Config("negative time".into()))?,
                q: v[1..1 + n].iter().map(|&x| cell(x)).collect::<Result<_>>()?,
                qdot: v[1 + n..].iter().map(|&x| cell(x)).collect::<Result<_>>()?,
            });
        }
        let state = |i: u32| -> Result<LatticeState> {
            states.get(i as usize).cloned().ok_or_else(|| Error::Config(format!("state id {i} out of range")))
        };
        let mut paths = Vec::with_capacity(f.paths.len());
        for p in f.paths {
            if p.states.is_empty() || p.edges.len() + 1 != p.states.len() {
                return Err(Error::Config(format!("path {} is malformed", p.id)));
            }
            paths.push(RootPath {
                id: p.id,
                layer: p.layer,
                plan: Plan {
                    goal: goal3(p.goal),
                    states: p.states.iter().map(|&i| state(i)).collect::<Result<_>>()?,
                    edges: p.edges,
                    grasp: p.grasp,
                },
                covered: p.covered.into_iter().map(goal3).collect(),
            });
        }
        let mut entries = Vec::with_capacity(f.coverage.len());
        for e in f.coverage {
            let mode = match e[5] {
                0 => CoverMode::Experience,
                1 => CoverMode::Latch,
                m => return Err(Error::Config(format!("unknown coverage mode {m}"))),
            };
            let path = e[4] as u32;
            if path as usize >= paths.len() || e[0] < 0 || e[0] as usize >= states.len() {
                return Err(Error::Config("coverage entry out of range".into()));
            }
            let g = GoalKey { ix: e[1] as i32, iy: e[2] as i32, itheta: e[3] as i32 };
            entries.push((e[0] as u32, g, Cover { path, mode }));
        }
        Ok(Database {
            scenario: f.scenario,
            fingerprint: f.fingerprint,
            lattice: f.lattice,
            ctmp: f.ctmp,
            paths,
            home_paths: f.home_paths,
            map: CoverageMap::from_parts(states, entries),
            unreachable: f.unreachable.into_iter().map(goal3).collect(),
            records: f.records,
            violations: f.violations,
            expansions: f.expansions,
        })
    }

    pub fn save(&self, path: &Path, space: &Space) -> Result<()> {
        std::fs::write(path, self.to_json(space))?;
        Ok(())
    }

    pub fn load(path: &Path, scenario: &Scenario) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, scenario)
    }

    pub fn load_embedded(path: &Path) -> Result<Self> {
        Self::from_json_embedded(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmp::tests::{tiny, tiny_scenario};
    use crate::ctmp::{query, Trajectory};

    #[test]
    fn round_trip_is_deep_equal_and_byte_stable() {
        let (space, db) = tiny();
        let text = db.to_json(space);
        let back = Database::from_json(&text, &db.scenario).unwrap();
        assert_eq!(&back, db);
        assert_eq!(back.to_json(space), text);
        let embedded = Database::from_json_embedded(&text).unwrap();
        assert_eq!(&embedded, db);
    }

    #[test]
    fn file_round_trip() {
        let (space, db) = tiny();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.json");
        db.save(&path, space).unwrap();
        assert_eq!(&Database::load(&path, &db.scenario).unwrap(), db);
        assert_eq!(&Database::load_embedded(&path).unwrap(), db);
    }

    #[test]
    fn altered_world_is_refused() {
        let (space, db) = tiny();
        let text = db.to_json(space);
        let mut other = tiny_scenario();
        other.world.conveyor.belt_speed += 0.01;
        assert!(matches!(Database::from_json(&text, &other), Err(Error::Fingerprint { .. })));
        // tampering with the embedded scenario is caught too
        let tampered = text.replacen("\"belt_speed\":0.2", "\"belt_speed\":0.25", 1);
        assert_ne!(tampered, text);
        assert!(matches!(Database::from_json_embedded(&tampered), Err(Error::Fingerprint { .. })));
    }

    #[test]
    fn version_and_format_checked() {
        let (space, db) = tiny();
        let text = db.to_json(space);
        let v2 = text.replacen(&format!("\"version\":{DB_VERSION}"), "\"version\":99", 1);
        assert!(matches!(Database::from_json_embedded(&v2), Err(Error::Version { expected: DB_VERSION, found: 99 })));
        let other = text.replacen(DB_FORMAT, "something-else", 1);
        assert!(matches!(Database::from_json_embedded(&other), Err(Error::Config(_))));
        assert!(Database::from_json_embedded("{\"format\":").is_err());
    }

    #[test]
    fn queries_identical_after_round_trip() {
        let (space, db) = tiny();
        let back = Database::from_json(&db.to_json(space), &db.scenario).unwrap();
        for id in 0..db.paths.len() as u32 {
            let cur = Trajectory::root(db, id);
            for &i in &crate::ctmp::replannable_indices(space, &cur.plan) {
                for g in space.world.grid.iter() {
                    let a = query(space, db, g, &cur, i, false).result;
                    let b = query(space, &back, g, &Trajectory::root(&back, id), i, false).result;
                    assert_eq!(a, b);
                }
            }
        }
    }
}
