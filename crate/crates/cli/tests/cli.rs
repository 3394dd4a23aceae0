use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel)
}

fn codeplay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codeplay")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn mean(o: &Output) -> f64 {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix("mean reward: "))
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn eval_compares_fixtures() {
    let run = |stage: &str| {
        let path = fixture(&format!("policies/space_invaders_{stage}.dsl"));
        let o = codeplay(&["eval", path.to_str().unwrap(), "--game", "space_invaders", "--episodes", "3", "--seed", "0"]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("seed ")).count(), 3);
        mean(&o)
    };
    assert!(run("best") > run("initial"));
}

#[test]
fn eval_noop_breakout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("noop.dsl");
    std::fs::write(
        &path,
        "entry fn policy(obs) {\n    return 0\n}\ntrainable fn predict_ball_trajectory(obs) {\n    return none\n}\n\
         trainable fn generate_paddle_target(a, obs) {\n    return none\n}\ntrainable fn select_paddle_action(a, obs) {\n    return 0\n}\n",
    )
    .unwrap();
    let o = codeplay(&["eval", path.to_str().unwrap(), "--game", "breakout"]);
    assert!(o.status.success());
    assert_eq!(mean(&o), 0.0);
    assert!(stdout(&o).lines().filter(|l| l.starts_with("seed ")).all(|l| l.contains("lives lost 5")));
}

#[test]
fn eval_errors() {
    let o = codeplay(&["eval", "/definitely/missing.dsl", "--game", "pong"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("file not found"));
    let wrong = fixture("policies/pong_best.dsl");
    let o = codeplay(&["eval", wrong.to_str().unwrap(), "--game", "breakout"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("select_paddle_action"));
    let o = codeplay(&["eval", wrong.to_str().unwrap(), "--game", "chess"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn metrics_rows_follow_argument_order() {
    let (a, b) = (fixture("policies/pong_initial.dsl"), fixture("policies/pong_best.dsl"));
    let o = codeplay(&["metrics", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows, vec![vec!["pong_initial", "17", "6", "1"], vec!["pong_best", "75", "24", "2"]]);
    let o = codeplay(&["metrics", b.to_str().unwrap(), a.to_str().unwrap()]);
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("pong_best"));
}

#[test]
fn metrics_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let line = dir.path().join("line.dsl");
    std::fs::write(&line, "entry fn policy(obs) {\n    return 0\n}\n").unwrap();
    let broken = dir.path().join("broken.dsl");
    std::fs::write(&broken, "entry fn policy(obs) {\n    return (\n}\n").unwrap();
    let o = codeplay(&["metrics", line.to_str().unwrap(), broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[1].split_whitespace().collect::<Vec<_>>(), ["line", "3", "1", "0"]);
    assert!(rows[2].starts_with("broken"));
    let o = codeplay(&["metrics"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn train_then_dump() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = codeplay(&[
        "train",
        "--game",
        "pong",
        "--initial-policy",
        fixture("policies/pong_initial.dsl").to_str().unwrap(),
        "--run-dir",
        run.to_str().unwrap(),
        "--iterations",
        "3",
        "--mock-script",
        fixture("mock/pong_improving.txt").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("best: iteration 3"));

    let out = dir.path().join("trace.json");
    let o = codeplay(&["trace-dump", run.to_str().unwrap(), "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let nodes: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let outputs = nodes.as_array().unwrap().iter().filter(|n| !n["step_reward"].is_null()).count();
    assert_eq!(outputs, 400);

    let o = codeplay(&["trace-dump", run.to_str().unwrap(), "99"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_reports_backend_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = codeplay(&[
        "train",
        "--game",
        "pong",
        "--initial-policy",
        fixture("policies/pong_initial.dsl").to_str().unwrap(),
        "--run-dir",
        dir.path().join("run").to_str().unwrap(),
        "--iterations",
        "1",
        "--backend",
        "http",
        "--endpoint",
        "http://127.0.0.1:9/none",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn train_config_errors() {
    let o = codeplay(&["train", "--game", "pong"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("initial_policy"));
    let o = codeplay(&["train", "--config", "/missing/run.cfg"]);
    assert_eq!(o.status.code(), Some(2));
}
