use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/corpus").join(name)
}

fn ca(dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ca"));
    for (k, _) in std::env::vars() {
        if k.starts_with("CA_") {
            cmd.env_remove(k);
        }
    }
    cmd.current_dir(dir).args(args).output().expect("run ca")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s8(dir: &Path) -> PathBuf {
    let o = ca(dir, &["generate", "--stencil1d", "8,2,2,1", "-o", "s8.json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join("s8.json")
}

#[test]
fn generate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path = s8(dir.path());
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.matches("\"id\"").count(), 24);
    assert_eq!(fs::read_to_string(corpus("s8.json")).unwrap(), text);

    let o = ca(dir.path(), &["generate", "--stencil1d", "8,2,2,1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--output"));

    let o = ca(dir.path(), &["generate", "--stencil1d", "2,4,1,1", "-o", "bad.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("bad shape"), "{}", stderr(&o));
    assert!(!dir.path().join("bad.json").exists());

    let o = ca(dir.path(), &["generate", "--random", "30,0.2,3", "--seed", "7", "-o", "r.json"]);
    assert_eq!(code(&o), 0);
    let o = ca(dir.path(), &["generate", "--random", "30,0.2,3", "--seed", "7", "-o", "r2.json"]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        fs::read(dir.path().join("r.json")).unwrap(),
        fs::read(dir.path().join("r2.json")).unwrap()
    );

    let o = ca(dir.path(), &["generate", "-o", "x.json"]);
    assert_eq!(code(&o), 2);
    let o = ca(dir.path(), &["generate", "--stencil1d", "8,2", "-o", "x.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_flag_and_subcommand_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ca(dir.path(), &["simulate", "--bogus"])), 2);
    assert_eq!(code(&ca(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&ca(dir.path(), &[])), 2);
    let help = ca(dir.path(), &["--help"]);
    assert_eq!(code(&help), 0);
    assert!(stdout(&help).contains("transform"));
}

#[test]
fn environment_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ca"))
        .current_dir(dir.path())
        .env("CA_STENCIL1D", "8,2,2,1")
        .env("CA_OUTPUT", "from-env.json")
        .arg("generate")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(dir.path().join("from-env.json").exists());

    let o = Command::new(env!("CARGO_BIN_EXE_ca"))
        .current_dir(dir.path())
        .env("CA_STENCIL1D", "8,2,2,1")
        .env("CA_OUTPUT", "from-env-2.json")
        .args(["generate", "-o", "from-flag.json"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("from-flag.json").exists());
    assert!(!dir.path().join("from-env-2.json").exists());
}

#[test]
fn transform_writes_plan_and_dot() {
    let dir = tempfile::tempdir().unwrap();
    s8(dir.path());
    let o = ca(
        dir.path(),
        &["transform", "-g", "s8.json", "-b", "2", "-o", "plan.json", "--emit-dot", "plan.dot"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("1 macro steps"), "{out}");
    assert!(out.contains("redundant tasks: 2"), "{out}");
    assert_eq!(
        fs::read_to_string(dir.path().join("plan.json")).unwrap(),
        fs::read_to_string(corpus("s8.b2.plan.json")).unwrap()
    );
    let dot = fs::read_to_string(dir.path().join("plan.dot")).unwrap();
    assert!(dot.starts_with("digraph plan {"));

    let o = ca(dir.path(), &["transform", "-g", "s8.json", "-b", "0", "-o", "p0.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("block size"));

    let o = ca(dir.path(), &["transform", "-g", "s8.json", "-o", "p.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn corrupted_plan_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    s8(dir.path());
    let plan = fs::read_to_string(corpus("s8.b2.plan.json")).unwrap();
    // Drop one received element: processor 0 can no longer compute (3,1).
    let corrupted = plan.replacen("\"1->0\": [\n          \"4:0\",\n", "\"1->0\": [\n", 1);
    assert_ne!(corrupted, plan);
    fs::write(dir.path().join("bad.plan.json"), &corrupted).unwrap();

    let o = ca(dir.path(), &["transform", "-g", "s8.json", "--plan", "bad.plan.json", "-o", "out.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("Halo violation at 3:1"), "{}", stderr(&o));
    assert!(!dir.path().join("out.json").exists());

    let o = ca(
        dir.path(),
        &["transform", "-g", "s8.json", "--plan", "bad.plan.json", "-o", "out.json", "--force"],
    );
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("warning"));
    assert_eq!(fs::read_to_string(dir.path().join("out.json")).unwrap(), corrupted);

    let o = ca(dir.path(), &["simulate", "-g", "s8.json", "--plan", "bad.plan.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("malformed"));
}

#[test]
fn validate_reports_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    s8(dir.path());
    assert_eq!(code(&ca(dir.path(), &["cover", "-g", "s8.json", "-o", "c.json"])), 0);
    let o = ca(dir.path(), &["validate", "-g", "s8.json", "-c", "c.json"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("valid: true"));

    let o = ca(dir.path(), &["validate", "-g", "s8.json", "-c", "c.json", "--overlap"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("overlap: fails"));

    let g = corpus("remote-pair.json");
    let c = corpus("remote-pair.same-level.cover.json");
    let o = ca(dir.path(), &["validate", "-g", g.to_str().unwrap(), "-c", c.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("condition 3: task c (witness a)"), "{}", stdout(&o));

    let o = ca(dir.path(), &["validate", "-g", g.to_str().unwrap(), "-c", c.to_str().unwrap(), "--json"]);
    assert_eq!(code(&o), 1);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["valid"], false);
    assert_eq!(v["violations"][0]["condition"], 3);

    let o = ca(dir.path(), &["validate", "-g", "missing.json", "-c", "c.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing.json"));
}

#[test]
fn simulate_prints_listing_and_json() {
    let dir = tempfile::tempdir().unwrap();
    s8(dir.path());
    let o = ca(
        dir.path(),
        &["simulate", "-g", "s8.json", "-b", "2", "--alpha", "0", "--beta", "1", "--threads", "3"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("total parallel time : 1*(0+2+2) = 4"));

    let o = ca(dir.path(), &["simulate", "-g", "s8.json", "-b", "2", "--alpha", "10", "--json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["steps"][0]["rows"][0]["recv_time"], 10);

    let o = ca(dir.path(), &["simulate", "-g", "s8.json", "--naive", "--alpha", "10", "--threads", "4"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("total parallel time : 22"));

    let o = ca(dir.path(), &["simulate", "-g", "s8.json", "-b", "2", "--threads", "0"]);
    assert_eq!(code(&o), 1);
    let o = ca(dir.path(), &["simulate", "-g", "s8.json"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn sweep_csv_and_gnuplot() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("sweep.json"),
        r#"{"graph": {"stencil1d": {"points": 64, "procs": 4, "steps": 8, "radius": 1}},
            "b": [2, 4], "alpha": [1000, 10000], "threads": [1, 2, 4, 8, 16]}"#,
    )
    .unwrap();
    let args = ["sweep", "--config", "sweep.json", "-o", "out.csv", "--gnuplot", "plots"];
    let o = ca(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("threads,alpha,variant,block,total"));
    assert_eq!(lines.count(), 2 * 2 * 5 + 2 * 5);
    for alpha in [1000, 10000] {
        let dat = fs::read_to_string(dir.path().join(format!("plots/alpha{alpha}.dat"))).unwrap();
        assert!(dat.starts_with("# threads naive blocked2 blocked4\n"));
        assert_eq!(dat.lines().count(), 6);
    }
    let o = ca(dir.path(), &["sweep", "--config", "sweep.json", "-o", "again.csv"]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(dir.path().join("again.csv")).unwrap(), csv.into_bytes());

    fs::write(dir.path().join("bad.json"), r#"{"graph": {"path": "nope.json"}, "b": [2], "alpha": [1], "threads": [1], "extra": 1}"#).unwrap();
    let o = ca(dir.path(), &["sweep", "--config", "bad.json", "-o", "x.csv"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("extra"), "{}", stderr(&o));
}

#[test]
fn sweep_graph_path_is_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("cfg");
    fs::create_dir(&sub).unwrap();
    fs::copy(corpus("s8.json"), sub.join("s8.json")).unwrap();
    fs::write(sub.join("sweep.json"), r#"{"graph": {"path": "s8.json"}, "b": [2], "alpha": [10], "threads": [4]}"#).unwrap();
    let o = ca(dir.path(), &["sweep", "--config", "cfg/sweep.json", "-o", "out.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out.csv")).unwrap();
    assert_eq!(csv, "threads,alpha,variant,block,total\n4,10,naive,,22\n4,10,blocked,2,12\n");
}
