use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_entrance-lab"));
    c.env_remove("ENTRANCE_LAB_OUT");
    c
}

fn repo_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn records(dir: &Path) -> Vec<Value> {
    std::fs::read_to_string(dir.join("reports.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn finite_lab_suite_writes_100_passing_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["--config", repo_file("suites/finite_lab.toml").to_str().unwrap(), "--seed", "42", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let recs = records(dir.path());
    assert_eq!(recs.len(), 100);
    for (i, r) in recs.iter().enumerate() {
        assert_eq!(r["index"], i as u64);
        assert_eq!(r["seed"], 42);
        assert_eq!(r["scalar"], "rational");
        assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);
        assert_eq!(r["pass"], true);
        assert!(r["records"].as_array().unwrap().iter().all(|x| x["residual"] == 0.0));
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.starts_with("# config_hash=") && summary.contains("seed=42"));
}

#[test]
fn missing_law_exits_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n[[experiment]]\nkind = \"alternation\"\nn_samples = 10\n");
    let out = bin().arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing field `law`"), "{}", stderr(&out));
}

#[test]
fn schema_errors_and_missing_seed_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[[experiment]]\nkind = \"finite_lab\"\nn_chains = 3\nn_states = 4\n");
    let out = bin().arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("seed"), "{}", stderr(&out));

    let cfg = write_config(dir.path(), "seed = 1\n[[experiment]]\nkind = \"finite_lab\"\nn_chains = 3\nn_states = 4\ncolour = 1\n");
    let out = bin().arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("colour"), "{}", stderr(&out));

    let out = bin().args(["suite", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failing_check_exits_1_unless_optional() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
seed = 5
[[experiment]]
kind = "lln_overshoots"
law = { kind = "lattice", entries = [[-1, "2/3"], [2, "1/3"]] }
n_crossings = 200
tolerance = 0.0
"#;
    let cfg = write_config(dir.path(), text);
    let out = bin().arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert_eq!(records(&dir.path().join("o"))[0]["pass"], false);

    let cfg = write_config(dir.path(), &text.replace("tolerance = 0.0", "tolerance = 0.0\noptional = true"));
    let out = bin().arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("p")).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn list_prints_kinds() {
    let out = bin().arg("--list").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for kind in ["finite_lab", "stationarity", "alternation", "clt_level_crossings", "hopf_ratio", "mc-full"] {
        assert!(text.contains(kind), "{kind} missing from --list");
    }
}

#[test]
fn exact_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["suite", "exact", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("skew-pi-plus.csv")).unwrap();
    assert!(csv.starts_with("# {\"config_hash\""));
}

#[test]
fn output_dir_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n[[experiment]]\nkind = \"finite_lab\"\nn_chains = 2\nn_states = 3\n");
    let env_dir = dir.path().join("from-env");
    let out = bin().arg("--config").arg(&cfg).env("ENTRANCE_LAB_OUT", &env_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(records(&env_dir).len(), 2);

    let flag_dir = dir.path().join("from-flag");
    let out = bin().arg("--config").arg(&cfg).arg("--out").arg(&flag_dir).env("ENTRANCE_LAB_OUT", &env_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(records(&flag_dir).len(), 2);
}

#[test]
fn records_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
seed = 11
[[experiment]]
kind = "alternation"
law = { kind = "rademacher" }
n_samples = 2000
horizon = 100000

[[experiment]]
kind = "finite_lab"
n_chains = 8
n_states = 5

[[experiment]]
kind = "clt_level_crossings"
law = { kind = "lattice", entries = [[-1, "2/3"], [2, "1/3"]] }
n_steps = 500
n_replicas = 500
"#;
    let cfg = write_config(dir.path(), text);
    let run = |threads: &str, sub: &str| {
        let o = dir.path().join(sub);
        let out = bin().arg("--config").arg(&cfg).args(["--threads", threads, "--out"]).arg(&o).output().unwrap();
        assert!(out.status.code().is_some_and(|c| c < 2), "{}", stderr(&out));
        let mut recs = records(&o);
        for r in &mut recs {
            r.as_object_mut().unwrap().remove("runtime_secs");
        }
        let csv = std::fs::read_to_string(o.join("clt_level_crossings-2_start0.csv")).unwrap();
        (recs, csv)
    };
    assert_eq!(run("1", "t1"), run("3", "t3"));
    // seed override changes results
    let seeded = dir.path().join("s");
    bin().arg("--config").arg(&cfg).args(["--seed", "12", "--out"]).arg(&seeded).output().unwrap();
    assert_eq!(records(&seeded)[0]["seed"], 12);
}
