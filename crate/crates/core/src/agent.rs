//! Running a policy program against an environment: single actions, full
//! episodes, and traced rollouts.

use serde::{Deserialize, Serialize};

use crate::dsl::interp::evaluate_traced;
use crate::dsl::{evaluate, format_function, EvalError, Program, Value};
use crate::envs::{Env, EnvConfig, EnvError, Game, Observation};
use crate::trace::{TraceError, TraceGraph};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("policy returned {value}, which is not an action for {game} (valid: {valid:?})")]
    InvalidAction {
        game: Game,
        value: String,
        valid: &'static [u8],
    },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Interpreter seed for one policy call: a SplitMix64 mix of the episode
/// seed and the step index.
pub fn step_seed(seed: u64, step: u32) -> u64 {
    let mut z = seed ^ (u64::from(step).wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Interpret a policy's return value as an action of `game`.
pub fn to_action(game: Game, value: &Value) -> Result<u8, AgentError> {
    let valid = game.action_set();
    value
        .as_integer()
        .and_then(|n| u8::try_from(n).ok())
        .filter(|a| valid.contains(a))
        .ok_or_else(|| AgentError::InvalidAction {
            game,
            value: value.to_string(),
            valid,
        })
}

/// Evaluate the program's entry function on one observation.
pub fn act(program: &Program, game: Game, obs: &Observation, step_budget: u64, rng_seed: u64) -> Result<u8, AgentError> {
    let value = evaluate(program, &program.entry, &[Value::observation(obs.clone())], step_budget, rng_seed)?;
    to_action(game, &value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub seed: u64,
    /// Reward accumulated up to the end of the episode or the first error.
    pub reward: f64,
    pub steps: u32,
    pub lives_lost: i32,
    pub error: Option<String>,
}

/// Play one episode of at most `max_steps` steps (0 plays nothing).
pub fn run_episode(program: &Program, game: Game, seed: u64, max_steps: u32, step_budget: u64) -> EpisodeResult {
    let mut result = EpisodeResult {
        seed,
        reward: 0.0,
        steps: 0,
        lives_lost: 0,
        error: None,
    };
    if max_steps == 0 {
        return result;
    }
    let (mut env, mut obs) = match Env::start(EnvConfig::new(game, seed, max_steps)) {
        Ok(started) => started,
        Err(e) => {
            result.error = Some(e.to_string());
            return result;
        }
    };
    let initial_lives = obs.lives;
    loop {
        let action = match act(program, game, &obs, step_budget, step_seed(seed, result.steps)) {
            Ok(a) => a,
            Err(e) => {
                result.error = Some(e.to_string());
                break;
            }
        };
        let step = match env.step(i64::from(action)) {
            Ok(s) => s,
            Err(e) => {
                result.error = Some(e.to_string());
                break;
            }
        };
        result.steps += 1;
        result.reward += f64::from(step.reward);
        obs = step.obs;
        if step.terminated || step.truncated {
            break;
        }
    }
    result.lives_lost = initial_lives - obs.lives;
    result
}

/// A rollout recorded into a trace graph.
#[derive(Debug, Clone)]
pub struct TracedRollout {
    pub graph: TraceGraph,
    pub reward: f64,
    pub steps: u32,
    pub error: Option<String>,
}

/// Play up to `max_steps` steps, recording every observation, every call of
/// a trainable or entry function, and each step's action node. A policy
/// error ends the rollout early and is reported, never propagated.
pub fn traced_rollout(program: &Program, game: Game, seed: u64, max_steps: u32, step_budget: u64) -> TracedRollout {
    let mut graph = TraceGraph::new();
    for f in &program.functions {
        graph.add_parameter(&f.name, f.trainable, &format_function(f, f.name == program.entry));
    }
    let mut out = TracedRollout {
        graph,
        reward: 0.0,
        steps: 0,
        error: None,
    };
    if max_steps == 0 {
        return out;
    }
    if let Err(e) = traced_steps(program, game, seed, max_steps, step_budget, &mut out) {
        out.error = Some(e.to_string());
    }
    out
}

fn traced_steps(
    program: &Program,
    game: Game,
    seed: u64,
    max_steps: u32,
    step_budget: u64,
    out: &mut TracedRollout,
) -> Result<(), AgentError> {
    let (mut env, mut obs) = Env::start(EnvConfig::new(game, seed, max_steps))?;
    let mut previous = None;
    loop {
        let t = out.steps;
        let inputs: Vec<_> = previous.into_iter().collect();
        let input = out
            .graph
            .add_input("obs", &inputs, Value::observation(obs.clone()), Some(t))?;
        let rng_seed = step_seed(seed, t);
        let traced = evaluate_traced(
            program,
            &program.entry,
            vec![(Value::observation(obs.clone()), vec![input])],
            step_budget,
            rng_seed,
            &mut out.graph,
            Some(t),
        )?;
        let action = to_action(game, &traced.value)?;
        let node = *traced.provenance.last().expect("entry calls are always recorded");
        let step = env.step(i64::from(action))?;
        out.graph.set_step_output(t, node, f64::from(step.reward), rng_seed)?;
        out.steps += 1;
        out.reward += f64::from(step.reward);
        previous = Some(node);
        obs = step.obs;
        if step.terminated || step.truncated {
            return Ok(());
        }
    }
}
