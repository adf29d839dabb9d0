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
//! End-to-end checks on the shipped worlds. Everything runs in one test so
//! the latency measurements are not disturbed by other tests.

use ctmp::config::Scenario;
use ctmp::ctmp::{preprocess, root_budget, run_bench, Database};
use ctmp::dynamics::{cubic_latch_segment, forward_dynamics, integrate_rk4, inverse_dynamics, DynamicsState};
use ctmp::oracle::{oracle_equivalence, replan_steps, strawman_preprocess, uniform_cost, verify};
use ctmp::search::wastar;
use ctmp::sim::{run_campaign, PerceptionModel, SimOptions, Strategy};
use ctmp::world::ArmModel;
use ctmp::{GoalKey, Space};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn world(name: &str) -> Scenario {
    let path = format!("{}/../../worlds/{name}.json", env!("CARGO_MANIFEST_DIR"));
    Scenario::load(std::path::Path::new(&path)).unwrap()
}

fn build(sc: &Scenario) -> (Space, Database) {
    let space = Space::new(sc).unwrap();
    let db = Database::from_preprocess(sc, preprocess(&space, &sc.ctmp));
    (space, db)
}

struct Verdicts(Vec<(u32, bool)>);

impl Verdicts {
    fn record(&mut self, n: u32, ok: bool, what: &str, started: Instant) {
        println!(
            "criterion {n}: {} {what} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64()
        );
        self.0.push((n, ok));
    }
}

fn completeness(v: &mut Verdicts, space: &Space, db: &Database) {
    let t = Instant::now();
    let r = ctmp::oracle::completeness_sweep(space, db);
    let ok = r.ok() && r.states > 0 && r.reachable > 0;
    v.record(
        1,
        ok,
        &format!(
            "completeness: {} states, {} pairs, {} reachable, {} answered, {} missed, {} invalid",
            r.states,
            r.pairs,
            r.reachable,
            r.answered,
            r.missed.len(),
            r.invalid.len()
        ),
        t,
    );
}

fn bounded_time(v: &mut Verdicts, space: &Space, db: &Database) {
    let t = Instant::now();
    let r = run_bench(space, db, 10_000, 2026);
    let n = r.queries as f64;
    let ok = r.queries >= 10_000
        && r.within_bound as f64 >= 0.999 * n
        && r.within_twice == r.queries
        && r.budget_exceeded == 0
        && r.t_const_ok();
    v.record(
        2,
        ok,
        &format!(
            "query time: {}/{} within {:.0} ms, {} within twice, max {:.2} ms, {} over budget, T_const calibrated {:.3} ms <= configured {:.1} ms",
            r.within_bound,
            r.queries,
            1e3 * r.t_bound,
            r.within_twice,
            1e3 * r.max_wall_time,
            r.budget_exceeded,
            1e3 * r.calibrated_t_const,
            1e3 * r.configured_t_const
        ),
        t,
    );
}

fn equivalence(v: &mut Verdicts) {
    let t = Instant::now();
    let sc = world("tiny");
    let (space, db) = build(&sc);
    let goals: Vec<GoalKey> = space.world.grid.iter().collect();
    let small = goals.len() <= 50 && replan_steps(&space) <= 2;
    let table = strawman_preprocess(&space, &goals, root_budget(&space, &db.ctmp)).unwrap();
    let e = oracle_equivalence(&space, &db, &table, &goals);
    v.record(
        3,
        small && e.ok(),
        &format!(
            "oracle equivalence: {} goals, {} shared states, {} query pairs, {} straw-man pairs, {} / {} one-sided",
            goals.len(),
            e.shared,
            e.ctmp_pairs,
            e.strawman_pairs,
            e.ctmp_only.len(),
            e.strawman_only.len()
        ),
        t,
    );
}

fn compression(v: &mut Verdicts, space: &Space, db: &Database) {
    let t = Instant::now();
    let report = db.report(space);
    let covered = db.covered_goals();
    let ratio = db.paths.len() as f64 / covered.max(1) as f64;
    let ok = covered > 0 && ratio <= 0.15 && report.has_latch_layer();
    v.record(
        4,
        ok,
        &format!(
            "compression: {} root paths for {covered} goals ({:.1}%), latch layer {}",
            db.paths.len(),
            100.0 * ratio,
            report.has_latch_layer()
        ),
        t,
    );
}

fn desk_arm(gravity: f64) -> ArmModel {
    let mut arm = world("desk").world.arm;
    arm.gravity = gravity;
    arm
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> DynamicsState {
    DynamicsState::new(
        (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
        (0..n).map(|_| rng.random_range(-1.5..1.5)).collect(),
    )
}

fn kernels(v: &mut Verdicts) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);

    let mut id_fd: f64 = 0.0;
    for gravity in [0.0, 9.81] {
        let arm = desk_arm(gravity);
        for _ in 0..500 {
            let s = random_state(&mut rng, 3);
            let qdd: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let tau = inverse_dynamics(&arm, &s, &qdd).unwrap();
            let back = forward_dynamics(&arm, &s, &tau).unwrap();
            for (a, b) in qdd.iter().zip(&back) {
                id_fd = id_fd.max((a - b).abs());
            }
        }
    }

    let arm = desk_arm(0.0);
    let mut jac: f64 = 0.0;
    let h = 1e-6;
    for _ in 0..500 {
        let q: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        let j = arm.jacobian(&q).unwrap();
        let mut num = 0.0;
        let mut den = 0.0;
        for c in 0..3 {
            let (mut qp, mut qm) = (q.clone(), q.clone());
            qp[c] += h;
            qm[c] -= h;
            let (p, m) = (arm.forward_kinematics(&qp).unwrap(), arm.forward_kinematics(&qm).unwrap());
            let fd = [(p.x - m.x) / (2.0 * h), (p.y - m.y) / (2.0 * h)];
            for r in 0..2 {
                num += (j[(r, c)] - fd[r]).powi(2);
                den += j[(r, c)].powi(2);
            }
        }
        jac = jac.max((num / den).sqrt());
    }

    // RK4 order from step halving against a fine reference
    let arm = desk_arm(9.81);
    let s0 = DynamicsState::new(vec![0.3, -0.8, 1.1], vec![0.4, -0.2, 0.5]);
    let tau = [0.5, -0.3, 0.05];
    let horizon = 0.2;
    let run = |steps: usize| {
        let mut s = s0.clone();
        for _ in 0..steps {
            s = integrate_rk4(&arm, &s, &tau, horizon / steps as f64).unwrap();
        }
        s
    };
    let reference = run(4096);
    let err = |s: &DynamicsState| {
        s.q.iter().chain(&s.qdot).zip(reference.q.iter().chain(&reference.qdot)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let errors: Vec<f64> = [8, 16, 32].iter().map(|&n| err(&run(n))).collect();
    let order = errors.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min);

    let mut cubic: f64 = 0.0;
    for _ in 0..200 {
        let (a, b) = (random_state(&mut rng, 3), random_state(&mut rng, 3));
        let c = cubic_latch_segment(&arm, &a, &b, 0.5, 0.02);
        let (first, last) = (&c.samples[0], c.samples.last().unwrap());
        for i in 0..3 {
            cubic = cubic
                .max((first.q[i] - a.q[i]).abs())
                .max((first.qdot[i] - a.qdot[i]).abs())
                .max((last.q[i] - b.q[i]).abs())
                .max((last.qdot[i] - b.qdot[i]).abs());
        }
    }

    let ok = id_fd <= 1e-8 && jac <= 1e-5 && order >= 3.8 && cubic <= 1e-12;
    v.record(
        5,
        ok,
        &format!("kernels: ID/FD {id_fd:.1e}, Jacobian rel. err {jac:.1e}, RK4 order {order:.2}, cubic endpoints {cubic:.1e}"),
        t,
    );
}

fn soundness(v: &mut Verdicts, space: &Space, db: &Database) {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let grid = &space.world.grid;
    let w = space.planner.weight;
    let budget = root_budget(space, &db.ctmp);
    let (mut compared, mut worst_ratio, mut bad) = (0, 0.0f64, 0);
    let mut attempts = 0;
    while compared < 60 && attempts < 400 {
        attempts += 1;
        let p = &db.paths[rng.random_range(0..db.paths.len())].plan;
        let trig = p.states.len() - 1;
        let start = &p.states[trig.saturating_sub(rng.random_range(2..=5))];
        let g = p.goal;
        let goal = GoalKey {
            ix: g.ix + rng.random_range(-1..=1),
            iy: g.iy + rng.random_range(-1..=1),
            itheta: g.itheta + rng.random_range(-1..=1),
        };
        if !grid.contains(goal) {
            continue;
        }
        let Some(opt) = uniform_cost(space, start, goal, 400_000) else { continue };
        let r = wastar(space, start, goal, w, budget, None);
        compared += 1;
        let Some(plan) = r.plan else {
            bad += 1;
            continue;
        };
        worst_ratio = worst_ratio.max(r.cost / opt);
        let valid = space.validate_plan(&plan, &space.context(goal)).is_ok() && space.grasp_matches(&plan, &grid.pose_of(goal));
        if r.cost > w * opt + 1e-9 || r.cost + 1e-9 < opt || !valid {
            bad += 1;
        }
    }
    v.record(
        6,
        compared >= 50 && bad == 0,
        &format!("search soundness: {compared} instances, worst cost ratio {worst_ratio:.3} (bound {w}), {bad} violations"),
        t,
    );
}

fn simulation(v: &mut Verdicts, space: &Space, db: &Database) {
    let t = Instant::now();
    let pm = PerceptionModel::new(space, &db.scenario.perception);
    let c = run_campaign(space, db, &pm, &Strategy::ALL[..3], 50, 7, &SimOptions::default());
    let s = c.summary(db.ctmp.t_bound);
    let get = |k: Strategy| s.iter().find(|x| x.strategy == k).unwrap();
    let (rp, bp, fp) = (get(Strategy::CtmpReplan), get(Strategy::BestPose), get(Strategy::FirstPose));
    let ok = rp.trials >= 50
        && rp.pickup_success > bp.pickup_success
        && bp.pickup_success > fp.pickup_success
        && rp.pickup_success >= 0.9
        && rp.planning_success == 1.0
        && rp.mean_cycles > bp.mean_cycles.max(fp.mean_cycles);
    v.record(
        7,
        ok,
        &format!(
            "simulation: pickup {:.0}% / {:.0}% / {:.0}% (replan / best / first), replan planning {:.0}%, cycles {:.2} vs {:.2} / {:.2}",
            100.0 * rp.pickup_success,
            100.0 * bp.pickup_success,
            100.0 * fp.pickup_success,
            100.0 * rp.planning_success,
            rp.mean_cycles,
            bp.mean_cycles,
            fp.mean_cycles
        ),
        t,
    );
    // a from-scratch replanner capped below its usual search effort
    let capped = SimOptions { wastar_expansions: Some(100), ..SimOptions::default() };
    let wc = run_campaign(space, db, &pm, &[Strategy::WastarReplan], 50, 7, &capped);
    let wr = &wc.summary(db.ctmp.t_bound)[0];
    println!(
        "  capped wA* replanning: planning {:.0}%, pickup {:.0}%",
        100.0 * wr.planning_success,
        100.0 * wr.pickup_success
    );
    assert!(wr.planning_success < rp.planning_success);
}

fn determinism(v: &mut Verdicts, desk: &Scenario, first_db: &str) {
    let t = Instant::now();
    let (space, db) = build(desk);
    let same_db = db.to_json(&space) == first_db;

    let tiny = world("tiny");
    let verify_json = || {
        let (s, d) = build(&tiny);
        serde_json::to_string(&verify(&s, &d).unwrap()).unwrap()
    };
    let same_verify = verify_json() == verify_json();

    let pm = PerceptionModel::new(&space, &desk.perception);
    let sim = || {
        let c = run_campaign(&space, &db, &pm, &Strategy::ALL, 10, 3, &SimOptions::default());
        (c.to_csv(), c.events_jsonl())
    };
    let same_sim = sim() == sim();
    v.record(
        8,
        same_db && same_verify && same_sim,
        &format!("determinism: database {same_db}, verify report {same_verify}, simulation {same_sim}"),
        t,
    );
}

#[test]
fn acceptance() {
    let desk = world("desk");
    let t = Instant::now();
    let (space, db) = build(&desk);
    println!("desk: {} ({:.1} s)", db.report(&space).summary(), t.elapsed().as_secs_f64());
    let first_db = db.to_json(&space);

    let mut v = Verdicts(Vec::new());
    completeness(&mut v, &space, &db);
    bounded_time(&mut v, &space, &db);
    equivalence(&mut v);
    compression(&mut v, &space, &db);
    kernels(&mut v);
    soundness(&mut v, &space, &db);
    simulation(&mut v, &space, &db);
    determinism(&mut v, &desk, &first_db);

    let failed: Vec<u32> = v.0.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
