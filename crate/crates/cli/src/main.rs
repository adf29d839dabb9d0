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
//! `ctmp`: preprocess a world into a path database, query it, simulate
//! pick-ups, verify coverage and benchmark query latency.

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ctmp::config::{LatchMode, LatticeKind};
use ctmp::ctmp::{preprocess, query_pose, run_bench, Database, QueryError, Trajectory};
use ctmp::oracle::{stored_states, tiny_scenario, verify};
use ctmp::sim::{run_campaign, PerceptionModel, SimOptions, Strategy};
use ctmp::{LatticeState, ObjectPose, Scenario, Space};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATABASE: u8 = 3;
const EXIT_VERIFY: u8 = 4;
const EXIT_UNREACHABLE: u8 = 5;
const EXIT_IO: u8 = 6;

#[derive(Parser)]
#[command(name = "ctmp", version, about = "Constant-time motion planning for conveyor pick-up")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "CTMP_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Overrides {
    /// Seed for goal sampling and simulation.
    #[arg(long)]
    seed: Option<u64>,
    /// Plan on the kinodynamic lattice with cubic latching.
    #[arg(long)]
    kinodynamic: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a path database for a world.
    Preprocess {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Report CSV (default: the database path with a .csv extension).
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        over: Overrides,
        /// Write the database even if the O1 audit finds violations.
        #[arg(long)]
        allow_o1_violations: bool,
    },
    /// Answer one query from a database.
    Query {
        #[arg(long)]
        db: PathBuf,
        /// Check the database against this world instead of the one it holds.
        #[arg(long)]
        world: Option<PathBuf>,
        /// `home`, `PATH:INDEX` (a state of a root path), or `T,Q1,..,QN` in cells.
        #[arg(long)]
        state: String,
        /// Object pose `x,y,theta` (meters, radians).
        #[arg(long, allow_hyphen_values = true)]
        goal: String,
        /// Time at which the pose holds.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t_ref: f64,
        /// Write the resulting trajectory as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run seeded pick-up trials.
    Simulate {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        world: Option<PathBuf>,
        /// ctmp-replan, first-pose, best-pose, wastar-replan or all.
        #[arg(long, default_value = "all")]
        strategy: String,
        #[arg(long, default_value_t = 50)]
        trials: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Per-trial event log (JSON lines).
        #[arg(long)]
        events: Option<PathBuf>,
        /// Scale of the perception error (0 gives exact estimates).
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
        /// Expansion cap of wastar-replan (default: the query budget).
        #[arg(long)]
        wastar_expansions: Option<u64>,
    },
    /// Check coverage against planning from scratch.
    Verify {
        #[arg(long)]
        world: PathBuf,
        /// Shrink the world so the straw-man comparison also runs.
        #[arg(long)]
        tiny: bool,
        /// Verify this database instead of preprocessing the world.
        #[arg(long)]
        db: Option<PathBuf>,
        /// Write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        over: Overrides,
    },
    /// Measure query latency and calibrate the lookup reserve.
    Bench {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        queries: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// An error with the exit code it maps to.
struct Failure(u8, anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        let code = match e.downcast_ref::<ctmp::Error>() {
            Some(ctmp::Error::Fingerprint { .. } | ctmp::Error::Version { .. }) => EXIT_DATABASE,
            Some(ctmp::Error::Io(_)) => EXIT_IO,
            Some(_) => EXIT_CONFIG,
            None if e.downcast_ref::<std::io::Error>().is_some() => EXIT_IO,
            None => EXIT_CONFIG,
        };
        Failure(code, e)
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match run(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}

/// World file, then `CTMP_*` variables, then flags.
fn load_scenario(path: &Path, over: Option<&Overrides>) -> Result<Scenario, Failure> {
    let mut sc = Scenario::load(path).map_err(|e| Failure::from(anyhow::Error::new(e).context(format!("loading {}", path.display()))))?;
    sc.apply_env(std::env::vars().filter(|(k, _)| k.starts_with("CTMP_")))?;
    if let Some(o) = over {
        if let Some(seed) = o.seed {
            sc.ctmp.seed = seed;
        }
        if o.kinodynamic {
            sc.planner.lattice = LatticeKind::Kinodynamic;
            sc.ctmp.latch_mode = LatchMode::Cubic;
        }
        sc.validate()?;
    }
    Ok(sc)
}

fn load_db(db: &Path, world: Option<&Path>) -> Result<(Space, Database), Failure> {
    let loaded = match world {
        Some(w) => Database::load(db, &load_scenario(w, None)?),
        None => Database::load_embedded(db),
    };
    let db = loaded.map_err(|e| {
        let code = match e {
            ctmp::Error::Fingerprint { .. } | ctmp::Error::Version { .. } => EXIT_DATABASE,
            ctmp::Error::Io(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        Failure(code, anyhow::Error::new(e).context(format!("loading {}", db.display())))
    })?;
    let space = Space::new(&db.scenario)?;
    Ok((space, db))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(|e| Failure(EXIT_IO, e))
}

fn run(cmd: Cmd) -> Outcome {
    match cmd {
        Cmd::Preprocess { world, out, report, over, allow_o1_violations } => {
            let sc = load_scenario(&world, Some(&over))?;
            let space = Space::new(&sc)?;
            log::info!("preprocessing {} ({} goals)", sc.name, space.world.grid.len());
            let db = Database::from_preprocess(&sc, preprocess(&space, &sc.ctmp));
            let rep = db.report(&space);
            println!("{}", rep.summary());
            println!("unreachable goals: {}, O1 violations: {}", db.unreachable.len(), db.violations.len());
            if !db.violations.is_empty() && !allow_o1_violations {
                eprintln!("error: the O1 audit found violations; rerun with --allow-o1-violations to keep the database");
                return Ok(EXIT_VERIFY);
            }
            write(&out, &db.to_json(&space))?;
            write(&report.unwrap_or_else(|| out.with_extension("csv")), &rep.to_csv())?;
            Ok(0)
        }
        Cmd::Query { db, world, state, goal, t_ref, out } => {
            let (space, db) = load_db(&db, world.as_deref())?;
            let (traj, start) = parse_state(&space, &db, &state)?;
            let pose = parse_pose(&goal, t_ref)?;
            let key = space.world.grid.key_of(&space.world.object_pose_at(&pose, 0.0));
            let q = query_pose(&space, &db, &pose, &traj, start, true);
            let w = q.stats.wall_time;
            let verdict = if w <= db.ctmp.t_bound { "PASS" } else { "FAIL" };
            println!("goal cell {key}");
            println!(
                "lookups {}, latch attempts {}, plan calls {}, expansions {}",
                q.stats.lookups, q.stats.latch_attempts, q.stats.plan_calls, q.stats.expansions
            );
            println!("wall time {:.3} ms ({verdict} against T_bound {:.0} ms)", 1e3 * w, 1e3 * db.ctmp.t_bound);
            match q.result {
                Ok(t) => {
                    let p = &t.plan;
                    println!(
                        "path: {} states from t={:.2} s, grasp triggered at t={:.2} s, completed at t={:.2} s",
                        p.states.len(),
                        space.time(p.start()),
                        space.time(p.trigger()),
                        space.time(p.trigger()) + p.grasp.duration
                    );
                    if let Some(o) = out {
                        write(&o, &serde_json::to_string(&t)?)?;
                    }
                    Ok(0)
                }
                Err(e) => {
                    println!("no path: {e}");
                    Ok(match e {
                        QueryError::NotCovered | QueryError::OutOfRegion | QueryError::TooLate => EXIT_UNREACHABLE,
                        QueryError::PlanFailed(_) => EXIT_VERIFY,
                    })
                }
            }
        }
        Cmd::Simulate { db, world, strategy, trials, seed, out, events, noise_scale, wastar_expansions } => {
            let (space, db) = load_db(&db, world.as_deref())?;
            let strategies = if strategy == "all" {
                Strategy::ALL.to_vec()
            } else {
                strategy.split(',').map(str::parse).collect::<Result<Vec<Strategy>, _>>().map_err(|e| Failure(EXIT_CONFIG, anyhow::anyhow!(e)))?
            };
            let mut perception = PerceptionModel::new(&space, &db.scenario.perception);
            perception.noise_scale = noise_scale;
            let opts = SimOptions { wastar_expansions, deadline: false };
            let seed = seed.unwrap_or(db.ctmp.seed);
            let c = run_campaign(&space, &db, &perception, &strategies, trials, seed, &opts);
            println!("strategy        pickup  planning  cycles  planner calls  within T_bound  max wall [ms]");
            for s in c.summary(db.ctmp.t_bound) {
                println!(
                    "{:<14} {:>6.1}% {:>8.1}% {:>7.2} {:>14} {:>14.1}% {:>14.2}",
                    s.strategy.name(),
                    100.0 * s.pickup_success,
                    100.0 * s.planning_success,
                    s.mean_cycles,
                    s.queries,
                    100.0 * s.within_bound,
                    1e3 * s.max_wall_time
                );
            }
            write(&out, &c.to_csv())?;
            if let Some(e) = events {
                write(&e, &c.events_jsonl())?;
            }
            Ok(0)
        }
        Cmd::Verify { world, tiny, db, out, over } => {
            let (space, db) = match db {
                Some(path) => load_db(&path, Some(&world))?,
                None => {
                    let mut sc = load_scenario(&world, Some(&over))?;
                    if tiny {
                        sc = tiny_scenario(&sc)?;
                    }
                    let space = Space::new(&sc)?;
                    let db = Database::from_preprocess(&sc, preprocess(&space, &sc.ctmp));
                    (space, db)
                }
            };
            let r = verify(&space, &db)?;
            println!("{} goals, {} root paths, {} O1 violations", r.goals, r.root_paths, r.o1_violations);
            print!("{}", r.render());
            if let Some(o) = out {
                write(&o, &(serde_json::to_string_pretty(&r)? + "\n"))?;
            }
            Ok(if r.ok() { 0 } else { EXIT_VERIFY })
        }
        Cmd::Bench { db, world, queries, seed } => {
            let (space, db) = load_db(&db, world.as_deref())?;
            let r = run_bench(&space, &db, queries, seed);
            print!("{}", r.render());
            let share = r.within_bound as f64 / r.queries.max(1) as f64;
            let checks = [
                ("99.9% within T_bound", share >= 0.999),
                ("100% within 2xT_bound", r.within_twice == r.queries),
                ("plan budget respected", r.budget_exceeded == 0),
                ("calibrated T_const within configured", r.t_const_ok()),
            ];
            let mut ok = true;
            for (name, pass) in checks {
                println!("{}: {name}", if pass { "PASS" } else { "FAIL" });
                ok &= pass;
            }
            Ok(if ok { 0 } else { EXIT_VERIFY })
        }
    }
}

fn parse_pose(text: &str, t_ref: f64) -> Result<ObjectPose, Failure> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure(EXIT_CONFIG, anyhow::anyhow!("goal must be x,y,theta")))?;
    match v[..] {
        [x, y, theta] => Ok(ObjectPose::new(x, y, theta, t_ref)),
        _ => Err(Failure(EXIT_CONFIG, anyhow::anyhow!("goal must be x,y,theta"))),
    }
}

/// The trajectory a state is queried on, and the state's index in it.
fn parse_state(space: &Space, db: &Database, text: &str) -> Result<(Trajectory, usize), Failure> {
    let bad = || Failure(EXIT_CONFIG, anyhow::anyhow!("state must be home, PATH:INDEX or T,Q1,..,QN"));
    if text == "home" {
        return Ok(match db.home_paths.first() {
            Some(&p) => (Trajectory::root(db, p), 0),
            None => (Trajectory::at_home(space), 0),
        });
    }
    if let Some((p, i)) = text.split_once(':') {
        let p: usize = p.trim().parse().map_err(|_| bad())?;
        let i: usize = i.trim().parse().map_err(|_| bad())?;
        let path = db.paths.get(p).ok_or_else(|| Failure(EXIT_CONFIG, anyhow::anyhow!("no root path {p}")))?;
        if i >= path.plan.states.len() {
            return Err(Failure(EXIT_CONFIG, anyhow::anyhow!("root path {p} has {} states", path.plan.states.len())));
        }
        return Ok((Trajectory::root(db, p as u32), i));
    }
    let cells: Vec<i64> = text.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>().map_err(|_| bad())?;
    if cells.len() != 1 + space.n() || cells[0] < 0 {
        return Err(bad());
    }
    let s = LatticeState {
        t: cells[0] as u32,
        q: cells[1..].iter().map(|&c| c as i32).collect(),
        qdot: match space.kind {
            LatticeKind::TimeConfig => vec![],
            LatticeKind::Kinodynamic => vec![0; space.n()],
        },
    };
    for at in stored_states(space, db) {
        if db.paths[at.path as usize].plan.states[at.index] == s {
            return Ok((Trajectory::root(db, at.path), at.index));
        }
    }
    let mut t = Trajectory::at_home(space);
    t.plan.states[0] = s;
    Ok((t, 0))
}
