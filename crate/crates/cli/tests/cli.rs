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
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn worlds() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../worlds")
}

fn ctmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctmp")).args(args).env_remove("CTMP_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn preprocess(dir: &Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    let world = worlds().join("tiny.json");
    let o = ctmp(&["preprocess", "--world", world.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn verify_tiny_reports_ok() {
    let desk = worlds().join("desk.json");
    let o = ctmp(&["verify", "--world", desk.to_str().unwrap(), "--tiny"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.contains("completeness: OK"), "{text}");
    assert!(text.contains("oracle-equivalence: OK"), "{text}");
}

#[test]
fn preprocess_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = preprocess(dir.path(), "a.json");
    let b = preprocess(dir.path(), "b.json");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read(a.with_extension("csv")).unwrap(), std::fs::read(b.with_extension("csv")).unwrap());
    let csv = std::fs::read_to_string(a.with_extension("csv")).unwrap();
    assert!(csv.starts_with("t,states,unreachable_goals,covered_goals"));
}

#[test]
fn query_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let db = preprocess(dir.path(), "db.json");
    let db = db.to_str().unwrap();

    let o = ctmp(&["query", "--db", db, "--state", "home", "--goal", "-1.6,0.45,0.0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("against T_bound"));

    // off the belt: no goal cell
    let o = ctmp(&["query", "--db", db, "--state", "home", "--goal", "-1.6,2.0,0.0"]);
    assert_eq!(o.status.code(), Some(5), "{}", stdout(&o));
    assert!(stdout(&o).contains("no path"));

    // past the replanning cutoff
    let o = ctmp(&["query", "--db", db, "--state", "0:30", "--goal", "-1.6,0.45,0.0"]);
    assert_eq!(o.status.code(), Some(5), "{}", stdout(&o));

    let o = ctmp(&["query", "--db", db, "--state", "home", "--goal", "nowhere"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn database_from_another_world_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let db = preprocess(dir.path(), "db.json");
    let desk = worlds().join("desk.json");
    let o = ctmp(&["query", "--db", db.to_str().unwrap(), "--world", desk.to_str().unwrap(), "--state", "home", "--goal", "-1.6,0.45,0"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fingerprint"));

    let o = ctmp(&["query", "--db", dir.path().join("missing.json").to_str().unwrap(), "--state", "home", "--goal", "0,0,0"]);
    assert_eq!(o.status.code(), Some(6));
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let db = preprocess(dir.path(), "db.json");
    let run = |name: &str| {
        let csv = dir.path().join(format!("{name}.csv"));
        let events = dir.path().join(format!("{name}.jsonl"));
        let o = ctmp(&[
            "simulate",
            "--db",
            db.to_str().unwrap(),
            "--trials",
            "5",
            "--seed",
            "4",
            "--out",
            csv.to_str().unwrap(),
            "--events",
            events.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read(csv).unwrap(), std::fs::read(events).unwrap())
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    let csv = String::from_utf8(a.0).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn bad_world_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.json");
    std::fs::write(&w, "{\"name\": 3}").unwrap();
    let o = ctmp(&["preprocess", "--world", w.to_str().unwrap(), "--out", dir.path().join("db.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn kinodynamic_world_covers_every_goal() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k.json");
    let world = worlds().join("tiny-kinodynamic.json");
    let o = ctmp(&["preprocess", "--world", world.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let text = stdout(&o);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(text.contains("unreachable goals: 0, O1 violations: 0"), "{text}");
    let o = ctmp(&["query", "--db", out.to_str().unwrap(), "--state", "home", "--goal", "-1.6,0.45,0.0"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}
