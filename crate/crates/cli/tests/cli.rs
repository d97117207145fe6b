use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fedcog::harness::{ComparisonTable, RunRecord};

fn fedcog(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedcog"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SPEC: &str = r#"
schools = 4
students_per_school = 40
exercises = 30
concepts = 4
school_ability_offsets = [-2.0, 0.0, 0.0, 2.0]
logs_per_student = 20
"#;

fn small_config(out_dir: &str, extra: &str) -> String {
    format!(
        r#"
[data]
source = "synthetic"
min_school_logs = 100

[data.synthetic]
schools = 3
students_per_school = 20
exercises = 20
concepts = 3
school_ability_offsets = [-2.0, 1.5, 1.5]
logs_per_student = 12

[federation]
rounds = 3

[run]
seeds = [0, 1]
out_dir = "{out_dir}"
{extra}
"#
    )
}

fn school_rates(logs_csv: &str) -> Vec<(String, f64)> {
    let mut acc: Vec<(String, usize, usize)> = Vec::new();
    for line in logs_csv.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let correct = cols[3] == "1";
        match acc.iter_mut().find(|(s, _, _)| s == cols[0]) {
            Some(e) => {
                e.1 += correct as usize;
                e.2 += 1;
            }
            None => acc.push((cols[0].to_string(), correct as usize, 1)),
        }
    }
    acc.into_iter()
        .map(|(s, h, t)| (s, h as f64 / t as f64))
        .collect()
}

#[test]
fn generate_writes_ordered_schools_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("spec.toml"), SPEC).unwrap();
    let printed = ok(&fedcog(
        dir.path(),
        &[
            "generate",
            "--config",
            "spec.toml",
            "--seed",
            "3",
            "--out",
            "a",
        ],
    ));
    assert_eq!(printed.lines().count(), 3);
    ok(&fedcog(
        dir.path(),
        &[
            "generate",
            "--config",
            "spec.toml",
            "--seed",
            "3",
            "--out",
            "b",
        ],
    ));
    for f in ["logs.csv", "qmatrix.csv", "latents.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap()
        );
    }
    let rates = school_rates(&fs::read_to_string(dir.path().join("a/logs.csv")).unwrap());
    assert_eq!(rates.len(), 4);
    assert!(rates[0].1 < rates[1].1.min(rates[2].1), "{rates:?}");
    assert!(rates[3].1 > rates[1].1.max(rates[2].1), "{rates:?}");
}

#[test]
fn run_is_reproducible_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.toml"), small_config("a", "")).unwrap();
    let printed = ok(&fedcog(dir.path(), &["run", "--config", "a.toml"]));
    assert!(printed.lines().last().unwrap().ends_with("run_record.json"));
    ok(&fedcog(
        dir.path(),
        &["run", "--config", "a.toml", "--out", "again"],
    ));
    for seed in [0, 1] {
        let a = fs::read_to_string(dir.path().join(format!("a/seed_{seed}/report.json"))).unwrap();
        let b =
            fs::read_to_string(dir.path().join(format!("again/seed_{seed}/report.json"))).unwrap();
        assert_eq!(
            a.replace("\"again\"", "\"a\""),
            b.replace("\"again\"", "\"a\"")
        );
        let trace =
            fs::read_to_string(dir.path().join(format!("a/seed_{seed}/loss_trace.csv"))).unwrap();
        assert_eq!(trace.lines().count(), 1 + 3 * 3);
        let table =
            fs::read_to_string(dir.path().join(format!("a/seed_{seed}/per_client.csv"))).unwrap();
        assert!(table.starts_with("school_id,n_test,acc,rmse,auc"));
    }
    let record = RunRecord::load(&dir.path().join("a/run_record.json")).unwrap();
    assert_eq!(record.seeds, vec![0, 1]);
    assert_eq!(record.runs.len(), 2);
    assert_eq!(record.aggregate["pooled.acc"].n, 2);
}

#[test]
fn seeds_and_overrides_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        small_config("c", "checkpoint_every = 1"),
    )
    .unwrap();
    ok(&fedcog(
        dir.path(),
        &[
            "run",
            "--config",
            "c.toml",
            "--seeds",
            "7",
            "--set",
            "federation.rounds=2",
            "--set",
            "run.name=\"tiny\"",
        ],
    ));
    let record = RunRecord::load(&dir.path().join("c/run_record.json")).unwrap();
    assert_eq!(record.seeds, vec![7]);
    assert_eq!(record.label, "tiny");
    assert_eq!(record.config.federation.rounds, 2);
    let ck = dir.path().join("c/seed_7/checkpoints/round_0002");
    assert!(ck.join("server.ckpt").exists());
    assert!(ck.join("client_0.ckpt").exists());
}

#[test]
fn centralized_mode_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config("z", "").replace("rounds = 3", "rounds = 3\nmode = \"centralized\"");
    fs::write(dir.path().join("z.toml"), cfg).unwrap();
    ok(&fedcog(
        dir.path(),
        &["run", "--config", "z.toml", "--seeds", "0"],
    ));
    let record = RunRecord::load(&dir.path().join("z/run_record.json")).unwrap();
    assert_eq!(record.label, "centralized/ncd");
    assert_eq!(record.runs[0].report.per_client.len(), 3);
    let trace = fs::read_to_string(dir.path().join("z/seed_0/loss_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 4);
}

#[test]
fn file_source_runs_on_generated_data() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("spec.toml"), SPEC).unwrap();
    ok(&fedcog(
        dir.path(),
        &["generate", "--config", "spec.toml", "--out", "data"],
    ));
    let cfg = r#"
[data]
source = "files"
log_file = "data/logs.csv"
qmatrix_file = "data/qmatrix.csv"
min_school_logs = 100

[model]
kind = "dina"

[federation]
rounds = 2

[run]
seeds = [0]
out_dir = "f"
"#;
    fs::write(dir.path().join("f.toml"), cfg).unwrap();
    ok(&fedcog(dir.path(), &["run", "--config", "f.toml"]));
    let record = RunRecord::load(&dir.path().join("f/run_record.json")).unwrap();
    assert_eq!(record.runs[0].report.per_client.len(), 4);
}

#[test]
fn compare_tables_round_trip_and_reject_mismatched_data() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("a.toml"),
        small_config("a", "name = \"one\""),
    )
    .unwrap();
    fs::write(
        dir.path().join("b.toml"),
        small_config("b", "name = \"two\""),
    )
    .unwrap();
    ok(&fedcog(
        dir.path(),
        &[
            "run",
            "--config",
            "a.toml",
            "--set",
            "federation.personalization=\"none\"",
        ],
    ));
    ok(&fedcog(dir.path(), &["run", "--config", "b.toml"]));

    let single = ok(&fedcog(dir.path(), &["compare", "a/run_record.json"]));
    let t = ComparisonTable::parse(&single).unwrap();
    assert_eq!(t.labels, vec!["one"]);
    assert_eq!(t.to_csv().unwrap(), single);

    let both = ok(&fedcog(
        dir.path(),
        &[
            "compare",
            "a/run_record.json",
            "b/run_record.json",
            "--out",
            "cmp.csv",
        ],
    ));
    let written = fs::read_to_string(dir.path().join("cmp.csv")).unwrap();
    assert!(both.starts_with(&written));
    let t = ComparisonTable::parse(&written).unwrap();
    assert_eq!(t.labels, vec!["one", "two"]);
    let record = RunRecord::load(&dir.path().join("b/run_record.json")).unwrap();
    assert_eq!(
        t.get("pooled.acc", "two"),
        Some(record.aggregate["pooled.acc"].mean)
    );
    assert!(t.get("client.2.acc", "one").is_some());

    fs::write(
        dir.path().join("d.toml"),
        small_config("d", "").replace("logs_per_student = 12", "logs_per_student = 13"),
    )
    .unwrap();
    ok(&fedcog(dir.path(), &["run", "--config", "d.toml"]));
    let out = fedcog(
        dir.path(),
        &["compare", "a/run_record.json", "d/run_record.json"],
    );
    assert!(!out.status.success());
}

#[test]
fn failures_print_one_json_error_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), small_config("x", "colour = 1")).unwrap();
    let out = fedcog(dir.path(), &["run", "--config", "bad.toml"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    let v: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(v["error"], "config");
    assert_eq!(v["field"], "colour");

    let out = fedcog(dir.path(), &["run", "--config", "missing.toml"]);
    assert!(!out.status.success());
    let v: serde_json::Value =
        serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["error"], "io");

    // a filter that removes every school fails in the filter stage
    fs::write(dir.path().join("empty.toml"), small_config("e", "")).unwrap();
    let out = fedcog(
        dir.path(),
        &[
            "run",
            "--config",
            "empty.toml",
            "--set",
            "data.min_school_logs=100000",
        ],
    );
    assert!(!out.status.success());
    let v: serde_json::Value =
        serde_json::from_str(String::from_utf8(out.stderr).unwrap().trim()).unwrap();
    assert_eq!(v["stage"], "filter");
}

#[test]
fn bundled_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["default.toml", "fedavg.toml"] {
        fedcog::harness::ExperimentConfig::load(&root.join(name), &[]).unwrap();
    }
}
