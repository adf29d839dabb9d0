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
//! Scenario files: the world plus every planner, preprocessing and
//! perception parameter, with defaults for everything but the world.

use crate::error::{Error, Result};
use crate::world::WorldSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LatticeKind {
    /// States `(q, t)`, constant-velocity single-joint moves and waits.
    #[default]
    TimeConfig,
    /// States `(q, q̇, t)`, single-joint accelerations and coasting.
    Kinodynamic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LatchMode {
    #[default]
    Linear,
    Cubic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub lattice: LatticeKind,
    /// Time cell of search states, seconds.
    pub delta_search: f64,
    pub joint_resolution_deg: f64,
    pub small_step_deg: f64,
    pub large_step_deg: f64,
    /// Joints `1..=large_step_joints` also get the large step.
    pub large_step_joints: usize,
    pub weight: f64,
    /// Weight of the orientation term, s/rad.
    pub lambda: f64,
    /// States past this time are pruned.
    pub t_max: f64,
    pub collision_substeps: usize,
    /// Converts time budgets into expansion caps so that results do not
    /// depend on machine load.
    pub expansions_per_second: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            lattice: LatticeKind::TimeConfig,
            delta_search: 0.1,
            joint_resolution_deg: 0.5,
            small_step_deg: 4.0,
            large_step_deg: 7.0,
            large_step_joints: 4,
            weight: 50.0,
            lambda: 2.0,
            t_max: 12.0,
            collision_substeps: 10,
            expansions_per_second: 20000.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicPrimitiveConfig {
    pub k_p: f64,
    pub dt_ctrl: f64,
    pub trigger_distance: f64,
    pub pos_tol: f64,
    pub ang_tol_deg: f64,
    pub v_tol: f64,
    pub t_enclose: f64,
    pub max_duration: f64,
    pub dls_lambda: f64,
}

impl Default for DynamicPrimitiveConfig {
    fn default() -> Self {
        DynamicPrimitiveConfig {
            k_p: 1.5,
            dt_ctrl: 0.02,
            trigger_distance: 0.15,
            pos_tol: 0.005,
            ang_tol_deg: 3.0,
            v_tol: 0.01,
            t_enclose: 0.2,
            max_duration: 4.0,
            dls_lambda: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinodynamicConfig {
    pub accel_levels_deg: Vec<f64>,
    pub velocity_resolution_deg: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for KinodynamicConfig {
    fn default() -> Self {
        KinodynamicConfig {
            accel_levels_deg: vec![4.0, 8.0, 12.0],
            velocity_resolution_deg: 0.4,
            lambda1: 2.0,
            lambda2: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CtmpConfig {
    pub t_bound: f64,
    pub t_rc: f64,
    pub delta_t: f64,
    /// Offline budget for root paths and the reachability oracle.
    pub t_p: f64,
    /// Reserved for lookups and latch checks inside a query.
    pub t_const: f64,
    pub latch_mode: LatchMode,
    pub seed: u64,
}

impl Default for CtmpConfig {
    fn default() -> Self {
        CtmpConfig {
            t_bound: 0.05,
            t_rc: 3.5,
            delta_t: 0.5,
            t_p: 10.0,
            t_const: 0.01,
            latch_mode: LatchMode::Linear,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    pub period: f64,
    pub t_perception: f64,
    pub camera: [f64; 2],
    /// Distance at which the error reaches ε.
    pub d_max: f64,
    /// Lower clamp of the error scale.
    pub min_scale: f64,
    /// Meters per radian when mixing orientation into the error vector.
    pub theta_scale: f64,
    /// Camera distance under which best-pose trusts an estimate.
    pub best_pose_distance: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            period: 1.0,
            t_perception: 0.2,
            camera: [-1.0, 0.45],
            d_max: 0.7,
            min_scale: 0.15,
            theta_scale: 0.1,
            best_pose_distance: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub world: WorldSpec,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub dynamic_primitive: DynamicPrimitiveConfig,
    #[serde(default)]
    pub kinodynamic: KinodynamicConfig,
    #[serde(default)]
    pub ctmp: CtmpConfig,
    #[serde(default)]
    pub perception: PerceptionConfig,
}

/// The part of a scenario a path database depends on.
#[derive(Serialize)]
struct Fingerprinted<'a> {
    world: &'a WorldSpec,
    planner: &'a PlannerConfig,
    dynamic_primitive: &'a DynamicPrimitiveConfig,
    kinodynamic: &'a KinodynamicConfig,
    ctmp: &'a CtmpConfig,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.planner;
        let c = &self.ctmp;
        let d = &self.dynamic_primitive;
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive")))
            }
        };
        pos("planner.delta_search", p.delta_search)?;
        pos("planner.joint_resolution_deg", p.joint_resolution_deg)?;
        pos("planner.expansions_per_second", p.expansions_per_second)?;
        pos("planner.t_max", p.t_max)?;
        pos("ctmp.t_bound", c.t_bound)?;
        pos("ctmp.delta_t", c.delta_t)?;
        pos("dynamic_primitive.dt_ctrl", d.dt_ctrl)?;
        pos("dynamic_primitive.k_p", d.k_p)?;
        if p.weight < 1.0 {
            return Err(Error::Config("planner.weight must be at least 1".into()));
        }
        if p.collision_substeps == 0 {
            return Err(Error::Config("planner.collision_substeps must be at least 1".into()));
        }
        if !(c.t_const >= 0.0 && c.t_const < c.t_bound) {
            return Err(Error::Config("ctmp.t_const must lie in [0, t_bound)".into()));
        }
        if !(c.t_p > c.t_bound) {
            return Err(Error::Config("ctmp.t_p must exceed ctmp.t_bound".into()));
        }
        let ratio = c.delta_t / p.delta_search;
        if (ratio - ratio.round()).abs() > 1e-9 || c.t_rc < 0.0 {
            return Err(Error::Config("ctmp.delta_t must be a multiple of planner.delta_search".into()));
        }
        let rc = c.t_rc / c.delta_t;
        if (rc - rc.round()).abs() > 1e-9 {
            return Err(Error::Config("ctmp.t_rc must be a multiple of ctmp.delta_t".into()));
        }
        for step in [p.small_step_deg, p.large_step_deg] {
            let cells = step / p.joint_resolution_deg;
            if step <= 0.0 || (cells - cells.round()).abs() > 1e-9 {
                return Err(Error::Config("primitive steps must be multiples of the joint resolution".into()));
            }
        }
        if self.kinodynamic.accel_levels_deg.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::Config("kinodynamic.accel_levels_deg must be positive".into()));
        }
        pos("kinodynamic.velocity_resolution_deg", self.kinodynamic.velocity_resolution_deg)?;
        crate::world::World::new(&self.world)?;
        Ok(())
    }

    /// SHA-256 over the canonical JSON of everything a database depends on.
    pub fn fingerprint(&self) -> String {
        let f = Fingerprinted {
            world: &self.world,
            planner: &self.planner,
            dynamic_primitive: &self.dynamic_primitive,
            kinodynamic: &self.kinodynamic,
            ctmp: &self.ctmp,
        };
        let bytes = serde_json::to_vec(&f).expect("scenario serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Applies `CTMP_*` overrides. Unknown variables are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.trim().parse().map_err(|_| Error::Config(format!("{k}: cannot parse {v:?}")))
        }
        for (k, v) in vars {
            let (k, v) = (k.as_ref(), v.as_ref());
            match k {
                "CTMP_SEED" => self.ctmp.seed = num(k, v)?,
                "CTMP_T_BOUND" => self.ctmp.t_bound = num(k, v)?,
                "CTMP_T_CONST" => self.ctmp.t_const = num(k, v)?,
                "CTMP_T_RC" => self.ctmp.t_rc = num(k, v)?,
                "CTMP_T_P" => self.ctmp.t_p = num(k, v)?,
                "CTMP_DELTA_T" => self.ctmp.delta_t = num(k, v)?,
                "CTMP_WEIGHT" => self.planner.weight = num(k, v)?,
                "CTMP_EXPANSIONS_PER_SECOND" => self.planner.expansions_per_second = num(k, v)?,
                "CTMP_LATCH_MODE" => {
                    self.ctmp.latch_mode = match v {
                        "linear" => LatchMode::Linear,
                        "cubic" => LatchMode::Cubic,
                        _ => return Err(Error::Config(format!("{k}: expected linear or cubic"))),
                    }
                }
                "CTMP_KINODYNAMIC" => {
                    self.planner.lattice = if matches!(v, "1" | "true" | "yes") {
                        LatticeKind::Kinodynamic
                    } else {
                        LatticeKind::TimeConfig
                    }
                }
                _ => {}
            }
        }
        self.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const DESK: &str = include_str!("../../../worlds/desk.json");

    #[test]
    fn shipped_world_parses() {
        let s = Scenario::from_json(DESK).unwrap();
        assert_eq!(s.world.arm.link_lengths.len(), 3);
        let w = crate::world::World::new(&s.world).unwrap();
        assert_eq!(w.grid.len(), 330);
    }

    #[test]
    fn fingerprint_tracks_world_but_not_perception() {
        let s = Scenario::from_json(DESK).unwrap();
        let mut t = s.clone();
        t.perception.period = 0.5;
        assert_eq!(s.fingerprint(), t.fingerprint());
        t.world.conveyor.belt_speed = 0.21;
        assert_ne!(s.fingerprint(), t.fingerprint());
    }

    #[test]
    fn env_overrides() {
        let mut s = Scenario::from_json(DESK).unwrap();
        s.apply_env([("CTMP_SEED", "9"), ("CTMP_LATCH_MODE", "cubic"), ("HOME", "/x")])
            .unwrap();
        assert_eq!(s.ctmp.seed, 9);
        assert_eq!(s.ctmp.latch_mode, LatchMode::Cubic);
        assert!(s.apply_env([("CTMP_T_BOUND", "soon")]).is_err());
        assert!(s.clone().apply_env([("CTMP_T_CONST", "1.0")]).is_err());
    }
}
