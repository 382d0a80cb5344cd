use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn brokertune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brokertune"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = brokertune(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn pipeline_gen_train_tune_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    let model_dir = dir.path().join("model");

    ok(&["gen-data", "--scenario", "2", "--rows", "80", "--seed", "4", "--out-dir", s(&data_dir)]);
    let csv = data_dir.join("dataset.csv");
    assert!(data_dir.join("dataset.csv.meta.json").exists());
    assert!(data_dir.join("manifest.json").exists());
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 81);

    let text = ok(&["train-surrogate", "--data", s(&csv), "--trees", "8", "--out-dir", s(&model_dir)]);
    assert!(text.contains("latency_ms"));
    let model = model_dir.join("model.json");

    let tune_dir = dir.path().join("tune");
    let text = ok(&["tune", "--model", s(&model), "--lcf", "1", "--steps", "80", "--seed", "2", "--out-dir", s(&tune_dir)]);
    assert!(text.contains("oracle:"), "{text}");
    for f in ["tune.json", "checkpoint.json", "evaluation.json", "manifest.json"] {
        assert!(tune_dir.join(f).exists(), "{f}");
    }

    let base_dir = dir.path().join("anneal");
    let text = ok(&[
        "baseline", "--model", s(&model), "--method", "anneal_search", "--budget", "50", "--latency-limit", "8",
        "--out-dir", s(&base_dir),
    ]);
    assert!(text.contains("anneal_search recommendation"));
    assert!(base_dir.join("anneal_search.json").exists());

    // `ddpg` is not a baseline, and an unknown method is a parse error.
    assert!(!brokertune(&["baseline", "--model", s(&model), "--method", "ddpg", "--out-dir", s(&base_dir)]).status.success());
    assert!(!brokertune(&["baseline", "--model", s(&model), "--method", "smac"]).status.success());
}

#[test]
fn sweep_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.toml");
    fs::write(
        &plan,
        "scenarios = [2]\nlcf = [0, 2]\nmethods = [\"ddpg\", \"random_search\"]\ndataset_size = 60\nbudget = 30\n\
         [forest]\nn_trees = 5\n[agent]\ntotal_steps = 40\nbatch_size = 8\n",
    )
    .unwrap();
    let run = dir.path().join("run");
    let text = ok(&["sweep", "--plan", s(&plan), "--seed", "9", "--out-dir", s(&run)]);
    assert!(text.contains("[ddpg]") && text.contains("[random_search]"));
    let report = fs::read_to_string(run.join("report.json")).unwrap();
    assert!(report.contains("\"seed\": 9"));
    assert_eq!(ok(&["report", "--run", s(&run)]), fs::read_to_string(run.join("report.txt")).unwrap());
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.toml");
    fs::write(&plan, "scenarios = [42]\n").unwrap();
    let out = brokertune(&["sweep", "--plan", s(&plan), "--out-dir", s(&dir.path().join("run"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario 42"));

    let out = brokertune(&["train-surrogate", "--data", s(&dir.path().join("missing.csv"))]);
    assert!(!out.status.success());
    let out = brokertune(&["report", "--run", s(dir.path())]);
    assert!(!out.status.success());
}

#[test]
fn failed_cells_exit_one_but_leave_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.toml");
    // An out-of-range holdout fraction makes surrogate training fail.
    fs::write(&plan, "scenarios = [2]\nlcf = [0]\nmethods = [\"random_search\"]\ndataset_size = 20\nholdout_fraction = 1.5\nbudget = 5\n").unwrap();
    let run = dir.path().join("run");
    let out = brokertune(&["sweep", "--plan", s(&plan), "--out-dir", s(&run)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("1 job(s) failed"));
    assert!(run.join("manifest.json").exists());
    let text = fs::read_to_string(run.join("report.txt")).unwrap();
    assert!(text.contains("FAILED") && text.contains('!'), "{text}");
    assert_eq!(brokertune(&["report", "--run", s(&run)]).status.code(), Some(1));
}
