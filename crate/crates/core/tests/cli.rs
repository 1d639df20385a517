use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn eim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = eim(args, cwd);
    assert!(
        out.status.success(),
        "eim {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: &str = "
[eim]
iterations = 3
samples_per_component = 200
initial_epochs = 5

[em]
iterations = 5

[gan]
iterations = 3

[eval]
samples = 400
trace_every = 1
trace_samples = 200
";

fn small_task(dir: &Path) {
    ok(
        &["gen-data", "--task", "random-gmm", "--dim", "2", "--samples", "400", "--seed", "4", "--out", "data"],
        dir,
    );
    fs::write(dir.join("small.toml"), SMALL).unwrap();
}

#[test]
fn gen_data_writes_all_splits() {
    let tmp = tempfile::tempdir().unwrap();
    small_task(tmp.path());
    for f in ["train.csv", "test.csv", "validation.csv", "meta.json", "target.json"] {
        assert!(tmp.path().join("data").join(f).exists(), "{f}");
    }
    let train = fs::read_to_string(tmp.path().join("data/train.csv")).unwrap();
    assert_eq!(train.lines().count(), 401);
    assert!(train.starts_with("x0,x1\n"));
}

#[test]
fn gen_data_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let args = |out: &'static str| ["gen-data", "--task", "robot-line", "--samples", "50", "--seed", "2", "--out", out];
    ok(&args("a"), tmp.path());
    ok(&args("b"), tmp.path());
    for f in ["train.csv", "test.csv", "meta.json"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn fit_writes_outputs_and_reproduces() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_task(d);
    let stdout = ok(&["fit", "--method", "eim", "--task", "data", "--config", "small.toml", "--components", "3", "--out", "r1"], d);
    assert!(stdout.contains("i_projection"));
    for f in ["config.toml", "init.json", "model.json", "trace.csv", "metrics.csv"] {
        assert!(d.join("r1").join(f).exists(), "{f}");
    }
    // the written config alone reproduces the run
    ok(&["fit", "--method", "eim", "--task", "data", "--config", "r1/config.toml", "--out", "r2"], d);
    for f in ["model.json", "trace.csv", "metrics.csv"] {
        assert_eq!(fs::read(d.join("r1").join(f)).unwrap(), fs::read(d.join("r2").join(f)).unwrap(), "{f}");
    }
    let metrics = fs::read_to_string(d.join("r1/metrics.csv")).unwrap();
    assert!(metrics.starts_with("method,task,seed,metric,value,stderr,n\n"));
}

#[test]
fn zero_iterations_returns_init_unchanged() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_task(d);
    ok(&["fit", "--method", "eim", "--task", "data", "--config", "small.toml", "--components", "2", "--out", "r1"], d);
    for method in ["eim", "em", "fgan", "eim-joint"] {
        let out = format!("z_{method}");
        ok(
            &["fit", "--method", method, "--task", "data", "--config", "small.toml", "--init", "r1/init.json",
              "--iterations", "0", "--out", &out],
            d,
        );
        assert_eq!(
            fs::read(d.join("r1/init.json")).unwrap(),
            fs::read(d.join(&out).join("model.json")).unwrap(),
            "{method}"
        );
    }
}

#[test]
fn eval_of_target_has_zero_i_projection() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_task(d);
    let target = fs::read_to_string(d.join("data/target.json")).unwrap();
    fs::write(d.join("target_model.json"), target).unwrap();
    let out = ok(
        &["eval", "--model", "target_model.json", "--task", "data", "--metrics", "i_projection", "--n", "2000"],
        d,
    );
    let mut rdr = csv::Reader::from_reader(out.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 1);
    let value: f64 = rows[0][4].parse().unwrap();
    assert!(value.abs() < 1e-12, "{value}");
}

#[test]
fn errors_map_to_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_task(d);
    fs::write(d.join("bad.toml"), "[eim]\nnot_a_key = 1\n").unwrap();
    let out = eim(&["fit", "--method", "eim", "--task", "data", "--config", "bad.toml", "--out", "r"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not_a_key"));

    let out = eim(&["fit", "--method", "eim-cond", "--task", "data", "--out", "r"], d);
    assert_eq!(out.status.code(), Some(2));

    ok(&["fit", "--method", "em", "--task", "data", "--config", "small.toml", "--out", "em"], d);
    let out = eim(&["eval", "--model", "em/model.json", "--task", "data", "--metrics", "rmse_to_line"], d);
    assert_eq!(out.status.code(), Some(1));

    let out = eim(&["eval", "--model", "missing.json", "--task", "data"], d);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_aggregates_one_row_per_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = format!(
        "{SMALL}
[sweep]
dims = [1, 2]
components = [2]
seeds = [0, 1]
methods = [\"eim\", \"em\"]
train_samples = 200
"
    );
    fs::write(d.join("sweep.toml"), cfg).unwrap();
    ok(&["sweep", "--config", "sweep.toml", "--out", "one", "--jobs", "1"], d);
    ok(&["sweep", "--config", "sweep.toml", "--out", "two", "--jobs", "3"], d);
    let one = fs::read_to_string(d.join("one/aggregate.csv")).unwrap();
    assert_eq!(one.lines().count(), 1 + 2 * 2 * 2);
    assert_eq!(one, fs::read_to_string(d.join("two/aggregate.csv")).unwrap());
}

#[test]
fn conditional_fit_on_obstacle_task() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(
        &["gen-data", "--task", "obstacle", "--samples", "20", "--samples-per-context", "5", "--seed", "1", "--out", "obst"],
        d,
    );
    fs::write(
        d.join("c.toml"),
        "[run]\nmoe_hidden = [8]\n\n[cond_eim]\niterations = 2\nepochs = 2\n\n[cond_ml]\niterations = 2\n\n[eval]\nsamples = 200\ntrace_every = 1\ntrace_samples = 50\n",
    )
    .unwrap();
    for method in ["eim-cond", "ml-cond"] {
        ok(&["fit", "--method", method, "--task", "obst", "--config", "c.toml", "--out", method], d);
        let metrics = fs::read_to_string(d.join(method).join("metrics.csv")).unwrap();
        assert!(metrics.contains("success_rate"), "{metrics}");
        let model = fs::read_to_string(d.join(method).join("model.json")).unwrap();
        assert!(model.contains("\"type\": \"moe\""));
    }
    let out = eim(&["fit", "--method", "eim", "--task", "obst", "--out", "x"], d);
    assert_eq!(out.status.code(), Some(2));
}
