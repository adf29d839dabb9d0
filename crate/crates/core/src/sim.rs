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
//! Sense-plan-act simulation on a logical clock.
//!
//! Images are taken every perception period. An estimate becomes available
//! `t_perception` after its image, and the plan made from it takes over at
//! the first path state at least `T_bound` later. Replanning stops once that
//! handover would fall after the cutoff. Planner wall times are measured
//! but do not drive the clock.

use crate::config::PerceptionConfig;
use crate::ctmp::{experience_budget, query, root_budget, Database, QueryError, Trajectory};
use crate::search::{plan, Budget};
use crate::statespace::{Plan, Space};
use crate::world::{GoalKey, ObjectPose};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Query the path database on every new estimate.
    CtmpReplan,
    /// Plan once, on the first estimate.
    FirstPose,
    /// Plan once, on the first estimate taken close enough to the camera.
    BestPose,
    /// Plan from scratch on every new estimate under the query budget.
    WastarReplan,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::CtmpReplan, Strategy::FirstPose, Strategy::BestPose, Strategy::WastarReplan];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::CtmpReplan => "ctmp-replan",
            Strategy::FirstPose => "first-pose",
            Strategy::BestPose => "best-pose",
            Strategy::WastarReplan => "wastar-replan",
        }
    }

    fn replans(self) -> bool {
        matches!(self, Strategy::CtmpReplan | Strategy::WastarReplan)
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown strategy {s:?} (expected ctmp-replan, first-pose, best-pose or wastar-replan)"))
    }
}

/// Pose estimates whose error shrinks as the object nears the camera.
#[derive(Clone, Debug, PartialEq)]
pub struct PerceptionModel {
    pub cfg: PerceptionConfig,
    pub epsilon: f64,
    /// Multiplies every error; 0 gives exact estimates.
    pub noise_scale: f64,
}

/// One pose estimate, stated at the image time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub t_img: f64,
    pub pose: ObjectPose,
    pub distance: f64,
    /// Error in the mixed metric (meters, with θ weighted by `theta_scale`).
    pub error: f64,
}

impl PerceptionModel {
    pub fn new(space: &Space, cfg: &PerceptionConfig) -> Self {
        PerceptionModel { cfg: cfg.clone(), epsilon: space.world.conveyor.epsilon, noise_scale: 1.0 }
    }

    /// Error magnitude at camera distance `d`.
    pub fn error_at(&self, d: f64) -> f64 {
        self.noise_scale * self.epsilon * (d / self.cfg.d_max).clamp(self.cfg.min_scale, 1.0)
    }

    /// The true pose at `t_img` displaced by the error magnitude in a
    /// uniformly random direction of (x, y, θ·theta_scale).
    pub fn estimate(&self, space: &Space, truth: &ObjectPose, t_img: f64, rng: &mut ChaCha8Rng) -> Estimate {
        let at = space.world.object_pose_at(truth, t_img);
        let c = self.cfg.camera;
        let distance = (at.x - c[0]).hypot(at.y - c[1]);
        let error = self.error_at(distance);
        let dir = loop {
            let v: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 1e-3 && n <= 1.0 {
                break [v[0] / n, v[1] / n, v[2] / n];
            }
        };
        let pose = ObjectPose::new(
            at.x + error * dir[0],
            at.y + error * dir[1],
            at.theta + error * dir[2] / self.cfg.theta_scale,
            t_img,
        );
        Estimate { t_img, pose, distance, error }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Expansion cap of a from-scratch replan; `None` uses the query budget.
    pub wastar_expansions: Option<u64>,
    /// Stop experience plans on the wall clock as well.
    pub deadline: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { wastar_expansions: None, deadline: false }
    }
}

/// One line of the per-trial event log.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    Estimate { t_img: f64, t_msg: f64, distance: f64, error: f64, goal: Option<GoalKey> },
    Plan { t_msg: f64, start_t: f64, goal: GoalKey, ok: bool, error: Option<String>, expansions: u64 },
    Handover { t: f64, goal: GoalKey },
    Grasp { t_end: f64, goal: GoalKey, success: bool },
    NoPlan,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub strategy: Strategy,
    pub trial: u64,
    pub truth: GoalKey,
    pub executed_goal: Option<GoalKey>,
    pub pickup_success: bool,
    pub planning_attempts: u32,
    pub planning_successes: u32,
    /// Plans handed over for execution.
    pub planning_cycles: u32,
    pub expansions: u64,
    /// Seconds from the first state of the executed path to grasp completion.
    pub path_cost: Option<f64>,
    #[serde(skip)]
    pub wall_times: Vec<f64>,
    #[serde(skip)]
    pub events: Vec<Event>,
}

/// The true object for trial `trial`: a goal cell whose estimates stay in
/// the goal region, i.e. at most ε from the execution line.
pub fn sample_truth(space: &Space, rng: &mut ChaCha8Rng) -> GoalKey {
    let grid = &space.world.grid;
    let c = &space.world.conveyor;
    let inner: Vec<GoalKey> = grid
        .iter()
        .filter(|k| (k.ix as f64 * grid.x_res - c.x_exec).abs() <= c.epsilon + 1e-9)
        .collect();
    inner[rng.random_range(0..inner.len())]
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Image times whose plans would take over by the cutoff.
fn image_times(space: &Space, db: &Database, p: &PerceptionConfig) -> Vec<f64> {
    let t0 = -(p.t_perception + db.ctmp.t_bound);
    let cutoff = space.rc_ticks as f64 * space.tick + 1e-9;
    (0..).map(|k| t0 + k as f64 * p.period).take_while(|t| t + p.t_perception + db.ctmp.t_bound <= cutoff).collect()
}

/// Runs one trial. Trials with equal `seed` and `trial` see the same object
/// and the same estimates under every strategy.
pub fn run_trial(
    space: &Space,
    db: &Database,
    perception: &PerceptionModel,
    strategy: Strategy,
    seed: u64,
    trial: u64,
    opts: &SimOptions,
) -> TrialRecord {
    let mut rng = trial_rng(seed, trial);
    let grid = &space.world.grid;
    let truth = sample_truth(space, &mut rng);
    let truth_pose = grid.pose_of(truth);
    let mut rec = TrialRecord {
        strategy,
        trial,
        truth,
        executed_goal: None,
        pickup_success: false,
        planning_attempts: 0,
        planning_successes: 0,
        planning_cycles: 0,
        expansions: 0,
        path_cost: None,
        wall_times: vec![],
        events: vec![],
    };
    let ticks_of = |t: f64| (t / space.tick - 1e-9).ceil().max(0.0) as u32;
    let mut current: Option<Trajectory> = None;
    let mut goal: Option<GoalKey> = None;
    let p = &perception.cfg;
    for t_img in image_times(space, db, p) {
        let est = perception.estimate(space, &truth_pose, t_img, &mut rng);
        let t_msg = t_img + p.t_perception;
        let key = grid.clamp_lateral(grid.key_of(&space.world.object_pose_at(&est.pose, 0.0)));
        let key = grid.contains(key).then_some(key);
        rec.events.push(Event::Estimate { t_img, t_msg, distance: est.distance, error: est.error, goal: key });
        let Some(key) = key else { continue };
        if goal == Some(key) {
            continue;
        }
        let wants = match strategy {
            Strategy::CtmpReplan | Strategy::WastarReplan => true,
            Strategy::FirstPose => rec.planning_attempts == 0,
            Strategy::BestPose => rec.planning_attempts == 0 && est.distance <= p.best_pose_distance,
        };
        if !wants {
            continue;
        }
        let start_ticks = ticks_of(t_msg + db.ctmp.t_bound);
        let traj = current.clone().unwrap_or_else(|| bare(space, start_ticks));
        let Some(start) = traj.plan.states.iter().position(|s| s.t >= start_ticks) else { continue };
        rec.planning_attempts += 1;
        let (outcome, expansions): (Result<Trajectory, String>, u64) = match strategy {
            Strategy::CtmpReplan => {
                let q = query(space, db, key, &traj, start, opts.deadline);
                rec.wall_times.push(q.stats.wall_time);
                (q.result.map_err(|e: QueryError| e.to_string()), q.stats.expansions)
            }
            _ => {
                let budget = match strategy {
                    Strategy::WastarReplan => opts.wastar_expansions.map_or(experience_budget(space, &db.ctmp), Budget::expansions),
                    _ => root_budget(space, &db.ctmp),
                };
                let r = plan(space, &traj.plan.states[start], key, None, budget, space.planner.weight);
                rec.wall_times.push(r.wall_time);
                let out = r.plan.map(|tail| Trajectory { plan: join(&traj.plan, start, tail), segments: vec![] });
                (out.ok_or_else(|| format!("plan {:?}", r.status)), r.expansions)
            }
        };
        rec.expansions += expansions;
        rec.events.push(Event::Plan {
            t_msg,
            start_t: start_ticks as f64 * space.tick,
            goal: key,
            ok: outcome.is_ok(),
            error: outcome.as_ref().err().cloned(),
            expansions,
        });
        if let Ok(next) = outcome {
            rec.planning_successes += 1;
            rec.planning_cycles += 1;
            rec.events.push(Event::Handover { t: traj.plan.states[start].t as f64 * space.tick, goal: key });
            current = Some(next);
            goal = Some(key);
        }
        if !strategy.replans() {
            break;
        }
    }
    match current {
        Some(t) => {
            let plan = &t.plan;
            let t_end = space.time(plan.trigger()) + plan.grasp.duration;
            rec.pickup_success = space.grasp_matches(plan, &truth_pose);
            rec.executed_goal = Some(plan.goal);
            rec.path_cost = Some(plan.cost(space.tick));
            rec.events.push(Event::Grasp { t_end, goal: plan.goal, success: rec.pickup_success });
        }
        None => rec.events.push(Event::NoPlan),
    }
    rec
}

/// The robot idle at home, from tick 0 through `t`.
fn bare(space: &Space, t: u32) -> Trajectory {
    let mut traj = Trajectory::at_home(space);
    if t > 0 {
        traj.plan.states = (0..=t).map(|k| space.home_at(k)).collect();
        traj.plan.edges = vec![crate::statespace::EdgeKind::Wait; t as usize];
    }
    traj
}

fn join(prefix: &Plan, start: usize, tail: Plan) -> Plan {
    let mut states = prefix.states[..start].to_vec();
    let mut edges = prefix.edges[..start].to_vec();
    states.extend(tail.states);
    edges.extend(tail.edges);
    Plan { goal: tail.goal, states, edges, grasp: tail.grasp }
}

/// Per-strategy statistics of a campaign.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub trials: usize,
    pub pickup_success: f64,
    pub planning_success: f64,
    pub mean_cycles: f64,
    pub mean_attempts: f64,
    pub mean_path_cost: f64,
    pub queries: usize,
    pub max_wall_time: f64,
    /// Fraction of planner calls within `T_bound` of wall time.
    pub within_bound: f64,
}

#[derive(Clone, Debug, Default)]
pub struct Campaign {
    pub records: Vec<TrialRecord>,
}

/// Runs `trials` seeded trials of every strategy. The result does not depend
/// on how many threads run them.
pub fn run_campaign(
    space: &Space,
    db: &Database,
    perception: &PerceptionModel,
    strategies: &[Strategy],
    trials: u64,
    seed: u64,
    opts: &SimOptions,
) -> Campaign {
    let jobs: Vec<(Strategy, u64)> = strategies.iter().flat_map(|&s| (0..trials).map(move |i| (s, i))).collect();
    let records = jobs
        .par_iter()
        .map(|&(s, i)| run_trial(space, db, perception, s, seed, i, opts))
        .collect();
    Campaign { records }
}

impl Campaign {
    pub fn summary(&self, t_bound: f64) -> Vec<StrategySummary> {
        let mut out = Vec::new();
        for s in Strategy::ALL {
            let rs: Vec<&TrialRecord> = self.records.iter().filter(|r| r.strategy == s).collect();
            if rs.is_empty() {
                continue;
            }
            let n = rs.len() as f64;
            let attempts: u32 = rs.iter().map(|r| r.planning_attempts).sum();
            let successes: u32 = rs.iter().map(|r| r.planning_successes).sum();
            let costs: Vec<f64> = rs.iter().filter_map(|r| r.path_cost).collect();
            let walls: Vec<f64> = rs.iter().flat_map(|r| r.wall_times.iter().copied()).collect();
            out.push(StrategySummary {
                strategy: s,
                trials: rs.len(),
                pickup_success: rs.iter().filter(|r| r.pickup_success).count() as f64 / n,
                planning_success: if attempts == 0 { 0.0 } else { successes as f64 / attempts as f64 },
                mean_cycles: rs.iter().map(|r| r.planning_cycles as f64).sum::<f64>() / n,
                mean_attempts: attempts as f64 / n,
                mean_path_cost: if costs.is_empty() { f64::NAN } else { costs.iter().sum::<f64>() / costs.len() as f64 },
                queries: walls.len(),
                max_wall_time: walls.iter().copied().fold(0.0, f64::max),
                within_bound: if walls.is_empty() {
                    1.0
                } else {
                    walls.iter().filter(|&&w| w <= t_bound).count() as f64 / walls.len() as f64
                },
            });
        }
        out
    }

    /// Table of per-strategy results. Only logical quantities appear, so
    /// equal seeds give equal bytes.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("strategy,trials,pickup_success,planning_success,planning_cycles,planning_attempts,path_cost_s\n");
        for r in self.summary(f64::INFINITY) {
            let _ = writeln!(
                s,
                "{},{},{:.4},{:.4},{:.4},{:.4},{:.4}",
                r.strategy, r.trials, r.pickup_success, r.planning_success, r.mean_cycles, r.mean_attempts, r.mean_path_cost
            );
        }
        s
    }

    /// Per-trial records followed by their events, one JSON object per line.
    pub fn events_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            strategy: Strategy,
            trial: u64,
            #[serde(flatten)]
            event: &'a Event,
        }
        let mut s = String::new();
        for r in &self.records {
            let _ = writeln!(s, "{}", serde_json::to_string(&serde_json::json!({ "event": "trial", "record": r })).expect("records serialize"));
            for e in &r.events {
                let _ = writeln!(s, "{}", serde_json::to_string(&Line { strategy: r.strategy, trial: r.trial, event: e }).expect("events serialize"));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctmp::tests::tiny;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
            assert_eq!(s.to_string(), s.name());
        }
        assert!("fastest".parse::<Strategy>().is_err());
    }

    #[test]
    fn estimates_within_epsilon_and_shrinking() {
        let (space, db) = tiny();
        let pm = PerceptionModel::new(space, &db.scenario.perception);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let truth = space.world.grid.pose_of(sample_truth(space, &mut rng));
            let t = rng.random_range(-8.0..4.0);
            let e = pm.estimate(space, &truth, t, &mut rng);
            assert!(e.error <= pm.epsilon + 1e-12);
            let at = space.world.object_pose_at(&truth, t);
            let dth = (e.pose.theta - at.theta) * pm.cfg.theta_scale;
            let d = ((e.pose.x - at.x).powi(2) + (e.pose.y - at.y).powi(2) + dth * dth).sqrt();
            assert!((d - e.error).abs() < 1e-9);
        }
        let ds: Vec<f64> = (0..100).map(|k| k as f64 * 0.02).collect();
        assert!(ds.windows(2).all(|w| pm.error_at(w[0]) <= pm.error_at(w[1])));
        let exact = PerceptionModel { noise_scale: 0.0, ..pm.clone() };
        assert_eq!(exact.error_at(1.0), 0.0);
    }

    #[test]
    fn exact_perception_needs_one_cycle() {
        let (space, db) = tiny();
        let pm = PerceptionModel { noise_scale: 0.0, ..PerceptionModel::new(space, &db.scenario.perception) };
        for trial in 0..10 {
            let r = run_trial(space, db, &pm, Strategy::CtmpReplan, 11, trial, &SimOptions::default());
            assert!(r.pickup_success, "{r:?}");
            assert_eq!(r.planning_cycles, 1);
            assert_eq!(r.executed_goal, Some(r.truth));
        }
    }

    #[test]
    fn cycles_never_exceed_attempts() {
        let (space, db) = tiny();
        let pm = PerceptionModel::new(space, &db.scenario.perception);
        let c = run_campaign(space, db, &pm, &Strategy::ALL, 8, 5, &SimOptions::default());
        assert_eq!(c.records.len(), 32);
        for r in &c.records {
            assert!(r.planning_cycles <= r.planning_attempts);
            assert!(r.planning_successes <= r.planning_attempts);
            assert!(!r.pickup_success || r.executed_goal.is_some());
        }
    }

    #[test]
    fn campaign_deterministic_across_thread_counts() {
        let (space, db) = tiny();
        let pm = PerceptionModel::new(space, &db.scenario.perception);
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| run_campaign(space, db, &pm, &Strategy::ALL, 6, 9, &SimOptions::default()))
        };
        let (a, b) = (run(1), run(3));
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.events_jsonl(), b.events_jsonl());
        assert!(a.to_csv().starts_with("strategy,trials,pickup_success"));
    }
}
