#![allow(dead_code)]

use std::path::PathBuf;

use codeplay::dsl::{parse, Program};
use codeplay::envs::{Env, EnvConfig, Game, Observation, StepResult};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn fixture_text(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn policy(game: Game, stage: &str) -> Program {
    parse(&fixture_text(&format!("policies/{}_{stage}.dsl", game.name()))).unwrap()
}

/// Play `steps` uniformly random actions, restarting with a fresh seed
/// whenever an episode ends. Calls `visit(previous, result)` per step.
pub fn random_play(game: Game, seed: u64, steps: usize, mut visit: impl FnMut(&Observation, &StepResult)) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actions = game.action_set();
    let mut episode = seed.wrapping_mul(1000);
    let (mut env, mut obs) = Env::start(EnvConfig::new(game, episode, 100_000)).unwrap();
    for _ in 0..steps {
        let a = actions[rng.random_range(0..actions.len())];
        let r = env.step(i64::from(a)).unwrap();
        visit(&obs, &r);
        if r.terminated || r.truncated {
            episode += 1;
            let started = Env::start(EnvConfig::new(game, episode, 100_000)).unwrap();
            env = started.0;
            obs = started.1;
        } else {
            obs = r.obs;
        }
    }
}

/// Independent brick-value table: top two rows 7, middle two 4, bottom two 1.
pub fn brick_value(label: &str) -> i32 {
    match &label[..2] {
        "RB" | "OB" => 7,
        "YB" | "GB" => 4,
        "AB" | "BB" => 1,
        other => panic!("not a brick: {other}"),
    }
}

pub fn is_brick(label: &str) -> bool {
    label.len() > 2 && label.as_bytes()[1] == b'B' && label != "Ball"
}

fn brick_count(obs: &Observation) -> usize {
    obs.labels().filter(|l| is_brick(l)).count()
}

/// Reward implied by bricks disappearing between two observations. When a
/// full wall reappears every brick left beforehand was cleared.
pub fn brick_diff(before: &Observation, after: &Observation) -> i32 {
    let rebuilt = brick_count(after) == 108 && brick_count(before) < 108;
    before
        .labels()
        .filter(|l| is_brick(l) && (rebuilt || after.get(l).is_none()))
        .map(brick_value)
        .sum()
}

use codeplay::dsl::Value;
use codeplay::trace::{NodeId, NodeKind, TraceGraph};
use std::collections::BTreeMap;

/// A random trace DAG of at most `max_nodes` nodes: three registered
/// functions (two trainable), inputs and calls wired to random earlier nodes.
/// Returns the graph and its last node.
pub fn random_dag(seed: u64, max_nodes: usize) -> (TraceGraph, NodeId) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = TraceGraph::new();
    g.add_parameter("f", true, "fn f");
    g.add_parameter("h", true, "fn h");
    g.add_parameter("glue", false, "fn glue");
    let n = rng.random_range(1..=max_nodes.saturating_sub(3).max(1));
    let mut last = 0;
    for i in 0..n {
        let existing = g.len();
        let fan = rng.random_range(0..=3.min(existing));
        let mut inputs: Vec<NodeId> = (0..fan).map(|_| rng.random_range(1..=existing)).collect();
        inputs.sort_unstable();
        inputs.dedup();
        let step = Some((i / 4) as u32);
        last = match rng.random_range(0..5) {
            0 => g.add_input("x", &inputs, Value::Number(i as f64), step),
            1 | 2 => g.record_call("f", &inputs, Value::Number(i as f64), step),
            3 => g.record_call("h", &inputs, Value::Number(i as f64), step),
            _ => g.record_call("glue", &inputs, Value::Number(i as f64), step),
        }
        .unwrap();
    }
    (g, last)
}

/// For every node, the set of nodes it depends on (itself included), by an
/// explicit reverse depth-first search from that node.
fn dependency_sets(g: &TraceGraph) -> Vec<Vec<bool>> {
    let n = g.len();
    let mut sets = vec![vec![false; n + 1]; n + 1];
    for start in 1..=n {
        let seen = &mut sets[start];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            let node = &g.nodes()[v - 1];
            for &p in node.inputs.iter().chain(node.parameter.iter()) {
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
    }
    sets
}

/// Reverse-DFS oracle for backward: for every trainable function with a call
/// the target depends on, the target's ancestors (itself included) that lie
/// upstream or downstream of one of those calls.
pub fn naive_backward(g: &TraceGraph, target: NodeId) -> BTreeMap<String, Vec<NodeId>> {
    let ids: Vec<NodeId> = (1..=g.len()).collect();
    let sets = dependency_sets(g);
    let depends = |to: NodeId, from: NodeId| sets[to][from];
    let mut out = BTreeMap::new();
    for param in g.nodes().iter().filter(|n| n.kind == NodeKind::Parameter && n.trainable) {
        let calls: Vec<NodeId> = ids
            .iter()
            .copied()
            .filter(|&c| {
                let n = &g.nodes()[c - 1];
                n.kind == NodeKind::Call && n.parameter == Some(param.id) && depends(target, c)
            })
            .collect();
        if calls.is_empty() {
            continue;
        }
        let members = ids
            .iter()
            .copied()
            .filter(|&m| depends(target, m) && calls.iter().any(|&c| depends(c, m) || depends(m, c)))
            .collect();
        out.insert(param.function.clone(), members);
    }
    out
}

use codeplay::feedback::Level;

/// The nine published feedback examples with the score each was written for.
pub const TABLE_EXAMPLES: [(Game, f64, &str); 9] = [
    (Game::Pong, 20.0, "Good job! You're close to winning the game! You're scoring 20 points against the opponent, only 1 points short of winning."),
    (Game::Pong, 12.0, "Keep it up! You're scoring 12 points against the opponent but you are still 9 points from winning the game. Try improving paddle positioning to prevent opponent scoring."),
    (Game::Pong, -5.0, "Your score is -5 points. Try to improve paddle positioning to prevent opponent scoring."),
    (Game::Breakout, 320.0, "Good job! You're close to winning the game! You're scoring 320 points against the opponent, try ensuring you return the ball, only 30 points short of winning."),
    (Game::Breakout, 50.0, "Keep it up! You're scoring 50 points against the opponent but you are still 300 points from winning the game. Try improving paddle positioning to return the ball and avoid losing lives."),
    (Game::Breakout, 0.0, "Your score is 0 points. Try to improve paddle positioning to return the ball and avoid losing lives."),
    (Game::SpaceInvaders, 1005.0, "Great job! You're performing well with an average score of 1005. Try to score more even more points"),
    (Game::SpaceInvaders, 570.0, "Good progress! Your average score is 570. Focus on better timing for shooting and avoiding enemy projectiles."),
    (Game::SpaceInvaders, 270.0, "Your average score is 270. Try to improve your strategy for shooting aliens and dodging projectiles."),
];

pub const BOUNDARY_SWEEP: [f64; 12] = [-5.0, 0.0, 7.0, 19.0, 20.0, 270.0, 300.0, 320.0, 500.0, 570.0, 1000.0, 1005.0];

/// Stage by the published inequalities: high at or above the upper
/// threshold, low at or below the lower one.
pub fn expected_level(game: Game, reward: f64) -> Level {
    let (low, high) = match game {
        Game::Pong => (0.0, 19.0),
        Game::Breakout => (0.0, 300.0),
        Game::SpaceInvaders => (500.0, 1000.0),
    };
    if reward >= high {
        Level::High
    } else if reward <= low {
        Level::Low
    } else {
        Level::Medium
    }
}

use codeplay::dsl::{format_body, validate_interface, FunctionSpec};
use codeplay::optimizer::{apply_update, CandidateUpdate};

/// The body of `function` in `program`, docstring included, as a backend
/// would write it.
pub fn body_source(program: &Program, function: &str) -> String {
    let f = program.function(function).unwrap();
    let mut out = String::new();
    if let Some(doc) = &f.docstring {
        let dedented: Vec<&str> = doc.split('\n').map(|l| l.strip_prefix("    ").unwrap_or(l)).collect();
        out.push_str(&format!("\"\"\"{}\"\"\"\n", dedented.join("\n")));
    }
    out.push_str(&format_body(&f.body));
    out
}

/// Apply one randomly mutated body and check the rollback contract:
/// either the result validates or it is exactly the original program.
pub fn mutate_and_apply(program: &Program, game: Game, rng: &mut ChaCha8Rng) -> Result<bool, String> {
    const ALPHABET: &[u8] = b"abcdefxyz_019 +-*/%<>=!(){}[].,:\"#\n\t";
    let names: Vec<String> = program.trainable().map(|f| f.name.clone()).collect();
    let name = &names[rng.random_range(0..names.len())];
    let mut bytes = body_source(program, name).into_bytes();
    for _ in 0..rng.random_range(1..=4) {
        let at = rng.random_range(0..=bytes.len());
        let c = ALPHABET[rng.random_range(0..ALPHABET.len())];
        match rng.random_range(0..3) {
            0 if at < bytes.len() => bytes[at] = c,
            1 if at < bytes.len() => {
                bytes.remove(at);
            }
            _ => bytes.insert(at, c),
        }
    }
    let mut update = CandidateUpdate::default();
    update.replacements.insert(name.clone(), String::from_utf8_lossy(&bytes).into_owned());
    let (result, rejection) = apply_update(program, &update, game);
    match rejection {
        Some(_) if &result == program => Ok(false),
        Some(r) => Err(format!("rejected ({r}) but program changed")),
        None => validate_interface(&result, &FunctionSpec::for_game(game))
            .map(|_| true)
            .map_err(|v| format!("accepted an invalid program: {v:?}")),
    }
}

/// Find a seed and step at which the best Breakout policy sends the ball
/// into the right wall at dx=+6.
pub fn right_wall_hit() -> (u64, u32) {
    let p = policy(Game::Breakout, "best");
    for seed in 0..50 {
        let (mut env, mut obs) = Env::start(EnvConfig::new(Game::Breakout, seed, 3000)).unwrap();
        for t in 0..3000u32 {
            let a = codeplay::agent::act(&p, Game::Breakout, &obs, codeplay::dsl::DEFAULT_STEP_BUDGET, codeplay::agent::step_seed(seed, t)).unwrap();
            let r = env.step(i64::from(a)).unwrap();
            let (b, n) = (obs.get("Ball").copied().unwrap(), r.obs.get("Ball").copied().unwrap());
            if b.dx == 6 && n.dx == -6 && b.x + b.dx > 152 {
                return (seed, t);
            }
            if r.terminated || r.truncated {
                break;
            }
            obs = r.obs;
        }
    }
    panic!("no right-wall bounce at dx=6 found");
}
