//! The optimization loop: rollout, evaluate, feedback, backward, propose,
//! apply — with run-directory artifacts and best-policy selection.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::traced_rollout;
use crate::dsl::{
    code_metrics, format_program, parse, validate_interface, CodeMetrics, FunctionSpec, Program, DEFAULT_STEP_BUDGET,
};
use crate::envs::Game;
use crate::feedback::{compose_feedback, evaluate_policy, FeedbackMode, StageRules, DEFAULT_EVAL_SEEDS};
use crate::optimizer::backend::MOCK_SEPARATOR;
use crate::optimizer::{
    apply_update, build_prompt, propose_update, Backend, BackendKind, Memory, OptimizerConfig, OptimizerError,
};
use crate::trace::TraceGraph;

pub const DEFAULT_ITERATIONS: u32 = 20;
pub const DEFAULT_EVAL_LEN: u32 = 4000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("config line {line}: {message}")]
    ConfigLine { line: usize, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("initial policy {path}: {message}")]
    Policy { path: String, message: String },
}

impl HarnessError {
    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    fn read(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            Self::io(path, "file not found")
        } else {
            Self::io(path, e)
        }
    }
}

/// Read a text file, reporting a missing file as "file not found".
pub fn read_text(path: &Path) -> Result<String, HarnessError> {
    fs::read_to_string(path).map_err(|e| HarnessError::read(path, e))
}

/// Everything a training run needs. Relative paths in a config file are
/// resolved against the file's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub game: Game,
    pub initial_policy: PathBuf,
    pub iterations: u32,
    /// Length of the traced rollout shown to the optimizer.
    pub rollout_steps: u32,
    /// Step cap of each full-game evaluation episode.
    pub eval_len: u32,
    pub feedback_mode: FeedbackMode,
    /// Evaluation seeds.
    pub seeds: Vec<u64>,
    /// Mixed with the iteration index to seed each traced rollout.
    pub run_seed: u64,
    pub step_budget: u64,
    pub optimizer: OptimizerConfig,
    pub run_dir: PathBuf,
}

/// Commented example of the config file format.
pub const EXAMPLE_CONFIG: &str = "\
# key = value; blank lines and lines starting with # are ignored.
game = pong
initial_policy = policies/pong_initial.dsl
run_dir = runs/pong
iterations = 20
# rollout_steps defaults to 400 / 300 / 15 for pong / breakout / space_invaders
rollout_steps = 400
eval_len = 4000
feedback_mode = staged_full_game    # or rollout_only
seeds = 0, 1, 2
run_seed = 0
step_budget = 20000
memory_size = 5
char_budget = 60000
max_retries = 2
backend = mock                      # or http
mock_script = scripts/pong.txt
endpoint = http://127.0.0.1:8080/v1/complete
model_name = default
api_key_env = CODEPLAY_API_KEY
timeout_secs = 120
";

const KEYS: &[&str] = &[
    "game",
    "initial_policy",
    "run_dir",
    "iterations",
    "rollout_steps",
    "eval_len",
    "feedback_mode",
    "seeds",
    "run_seed",
    "step_budget",
    "memory_size",
    "char_budget",
    "max_retries",
    "backend",
    "mock_script",
    "endpoint",
    "model_name",
    "api_key_env",
    "timeout_secs",
];

/// Raw key/value settings, each remembering the directory its relative
/// paths are resolved against.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, (String, PathBuf)>,
}

impl Settings {
    /// Parse config-file text. Inline `#` comments are stripped.
    pub fn parse(text: &str, base: &Path) -> Result<Settings, HarnessError> {
        let mut settings = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| HarnessError::ConfigLine { line: i + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if settings.values.contains_key(key) {
                return Err(err(format!("`{key}` is set twice")));
            }
            settings
                .values
                .insert(key.to_string(), (value.trim().to_string(), base.to_path_buf()));
        }
        Ok(settings)
    }

    pub fn load(path: &Path) -> Result<Settings, HarnessError> {
        let text = read_text(path)?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Settings::parse(&text, &base)
    }

    /// Set or replace a value; relative paths resolve against `base`.
    pub fn set(&mut self, key: &str, value: impl Into<String>, base: &Path) -> Result<(), HarnessError> {
        if !KEYS.contains(&key) {
            return Err(HarnessError::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), (value.into(), base.to_path_buf()));
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(|(v, base)| {
            let p = Path::new(v);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        })
    }

    fn number<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, HarnessError> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| HarnessError::Config(format!("`{key}` must be a non-negative integer, got `{v}`")))
            })
            .transpose()
    }

    pub fn build(&self) -> Result<RunConfig, HarnessError> {
        let required = |key: &str| {
            self.raw(key)
                .ok_or_else(|| HarnessError::Config(format!("`{key}` is required")))
        };
        let game: Game = required("game")?
            .parse()
            .map_err(|e| HarnessError::Config(format!("{e}")))?;
        required("initial_policy")?;
        required("run_dir")?;
        let defaults = OptimizerConfig::default();
        let seeds = match self.raw("seeds") {
            None => DEFAULT_EVAL_SEEDS.to_vec(),
            Some(text) => text
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| HarnessError::Config(format!("bad seed `{}`", s.trim())))
                })
                .collect::<Result<Vec<u64>, _>>()?,
        };
        if seeds.is_empty() {
            return Err(HarnessError::Config("`seeds` must list at least one seed".into()));
        }
        let optimizer = OptimizerConfig {
            memory_size: self.number("memory_size")?.unwrap_or(defaults.memory_size),
            char_budget: self.number("char_budget")?.unwrap_or(defaults.char_budget),
            backend: match self.raw("backend") {
                Some(b) => b.parse::<BackendKind>().map_err(HarnessError::Config)?,
                None => defaults.backend,
            },
            endpoint: self.raw("endpoint").map_or(defaults.endpoint, str::to_string),
            model_name: self.raw("model_name").map_or(defaults.model_name, str::to_string),
            max_retries: self.number("max_retries")?.unwrap_or(defaults.max_retries),
            api_key_env: self.raw("api_key_env").map_or(defaults.api_key_env, str::to_string),
            mock_script: self.path("mock_script"),
            timeout_secs: self.number("timeout_secs")?.unwrap_or(defaults.timeout_secs),
        };
        Ok(RunConfig {
            game,
            initial_policy: self.path("initial_policy").expect("checked above"),
            iterations: self.number("iterations")?.unwrap_or(DEFAULT_ITERATIONS),
            rollout_steps: self.number("rollout_steps")?.unwrap_or(game.default_rollout_steps()),
            eval_len: self.number("eval_len")?.unwrap_or(DEFAULT_EVAL_LEN),
            feedback_mode: match self.raw("feedback_mode") {
                Some(m) => m.parse().map_err(HarnessError::Config)?,
                None => FeedbackMode::StagedFullGame,
            },
            seeds,
            run_seed: self.number("run_seed")?.unwrap_or(0),
            step_budget: self.number("step_budget")?.unwrap_or(DEFAULT_STEP_BUDGET),
            optimizer,
            run_dir: self.path("run_dir").expect("checked above"),
        })
    }
}

impl RunConfig {
    /// Defaults for `game`, with the given policy and run directory.
    pub fn new(game: Game, initial_policy: impl Into<PathBuf>, run_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            game,
            initial_policy: initial_policy.into(),
            iterations: DEFAULT_ITERATIONS,
            rollout_steps: game.default_rollout_steps(),
            eval_len: DEFAULT_EVAL_LEN,
            feedback_mode: FeedbackMode::StagedFullGame,
            seeds: DEFAULT_EVAL_SEEDS.to_vec(),
            run_seed: 0,
            step_budget: DEFAULT_STEP_BUDGET,
            optimizer: OptimizerConfig::default(),
            run_dir: run_dir.into(),
        }
    }

    pub fn load(path: &Path) -> Result<RunConfig, HarnessError> {
        Settings::load(path)?.build()
    }

    /// Seed of the traced rollout in `iteration` (1-based).
    pub fn rollout_seed(&self, iteration: u32) -> u64 {
        u64::from(iteration) ^ self.run_seed
    }

    /// The resolved configuration in config-file syntax, with absolute paths.
    pub fn to_text(&self) -> String {
        let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf()).display().to_string();
        let o = &self.optimizer;
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("game", self.game.to_string());
        kv("initial_policy", abs(&self.initial_policy));
        kv("run_dir", abs(&self.run_dir));
        kv("iterations", self.iterations.to_string());
        kv("rollout_steps", self.rollout_steps.to_string());
        kv("eval_len", self.eval_len.to_string());
        kv("feedback_mode", self.feedback_mode.to_string());
        kv("seeds", seeds.join(", "));
        kv("run_seed", self.run_seed.to_string());
        kv("step_budget", self.step_budget.to_string());
        kv("memory_size", o.memory_size.to_string());
        kv("char_budget", o.char_budget.to_string());
        kv("max_retries", o.max_retries.to_string());
        kv("backend", o.backend.to_string());
        if let Some(p) = &o.mock_script {
            kv("mock_script", abs(p));
        }
        kv("endpoint", o.endpoint.clone());
        kv("model_name", o.model_name.clone());
        kv("api_key_env", o.api_key_env.clone());
        kv("timeout_secs", o.timeout_secs.to_string());
        out
    }
}

/// Program state at the start of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialStage {
    pub eval_reward: f64,
    pub metrics: CodeMetrics,
}

/// One optimization iteration. `eval_reward` and `metrics` describe the
/// program in force after the iteration, whether or not the update landed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationEntry {
    pub iteration: u32,
    pub rollout_seed: u64,
    pub rollout_reward: f64,
    pub eval_reward: f64,
    pub feedback_text: String,
    pub update_accepted: bool,
    /// Why the proposed update was rolled back.
    pub rejection: Option<String>,
    /// Set when no usable response was obtained from the backend.
    pub optimizer_error: Option<String>,
    pub metrics: CodeMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestPolicy {
    /// 0 is the initial policy.
    pub iteration: u32,
    pub program: String,
    pub eval_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub game: Game,
    pub feedback_mode: FeedbackMode,
    pub initial: InitialStage,
    pub iterations: Vec<IterationEntry>,
    pub best: BestPolicy,
}

impl RunRecord {
    /// Whether every iteration failed to get an update out of the backend.
    pub fn backend_failed(&self) -> bool {
        !self.iterations.is_empty()
            && self.iterations.iter().all(|e| {
                matches!(&e.optimizer_error, Some(msg) if msg.starts_with(BACKEND_FAILURE))
            })
    }

    /// Best-so-far full-game reward after each iteration, starting with the
    /// initial policy.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = self.initial.eval_reward;
        let mut curve = vec![best];
        for e in &self.iterations {
            best = best.max(e.eval_reward);
            curve.push(best);
        }
        curve
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run records serialize")
    }

    pub fn from_json(text: &str) -> Result<RunRecord, serde_json::Error> {
        serde_json::from_str(text)
    }
}

const BACKEND_FAILURE: &str = "backend failure";

pub fn iteration_dir(run_dir: &Path, iteration: u32) -> PathBuf {
    run_dir.join(format!("iter_{iteration:03}"))
}

fn write(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

/// Parse and validate a policy file for `game`.
pub fn load_policy(path: &Path, game: Game) -> Result<Program, HarnessError> {
    let policy_err = |message: String| HarnessError::Policy {
        path: path.display().to_string(),
        message,
    };
    let source = read_text(path)?;
    let program = parse(&source).map_err(|e| policy_err(e.to_string()))?;
    validate_interface(&program, &FunctionSpec::for_game(game)).map_err(|violations| {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        policy_err(text.join("; "))
    })?;
    Ok(program)
}

/// Run training with the backend named by the configuration.
pub fn train(config: &RunConfig) -> Result<RunRecord, HarnessError> {
    let program = load_policy(&config.initial_policy, config.game)?;
    prepare_run_dir(config)?;
    let mut backend = config.optimizer.make_backend().map_err(|e| HarnessError::Config(e.to_string()))?;
    run(config, program, backend.as_mut())
}

/// Run training against an explicit backend.
pub fn train_with(config: &RunConfig, program: Program, backend: &mut dyn Backend) -> Result<RunRecord, HarnessError> {
    validate_interface(&program, &FunctionSpec::for_game(config.game)).map_err(|v| HarnessError::Policy {
        path: "<in memory>".into(),
        message: v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
    })?;
    prepare_run_dir(config)?;
    run(config, program, backend)
}

fn prepare_run_dir(config: &RunConfig) -> Result<(), HarnessError> {
    fs::create_dir_all(&config.run_dir).map_err(|e| HarnessError::io(&config.run_dir, e))?;
    write(&config.run_dir.join("config.txt"), &config.to_text())
}

fn run(config: &RunConfig, mut program: Program, backend: &mut dyn Backend) -> Result<RunRecord, HarnessError> {
    let game = config.game;
    let rules = StageRules::default_rules();
    let trainable: Vec<String> = program.trainable().map(|f| f.name.clone()).collect();
    let mut memory = Memory::new(config.optimizer.memory_size);
    let mut log = String::new();

    let evaluate = |p: &Program| evaluate_policy(p, game, config.eval_len, &config.seeds, config.step_budget);
    let mut evaluation = evaluate(&program);
    let initial = InitialStage {
        eval_reward: evaluation.mean_reward,
        metrics: code_metrics(&program),
    };
    let initial_dir = iteration_dir(&config.run_dir, 0);
    fs::create_dir_all(&initial_dir).map_err(|e| HarnessError::io(&initial_dir, e))?;
    write(&initial_dir.join("policy.dsl"), &format_program(&program))?;
    let _ = writeln!(
        log,
        "iteration 0: eval {} (initial policy, trainable: {})",
        evaluation.mean_reward,
        trainable.join(", ")
    );
    let mut best = BestPolicy {
        iteration: 0,
        program: format_program(&program),
        eval_reward: evaluation.mean_reward,
    };
    let mut entries = Vec::new();

    for iteration in 1..=config.iterations {
        let dir = iteration_dir(&config.run_dir, iteration);
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
        let rollout_seed = config.rollout_seed(iteration);
        let rollout = traced_rollout(&program, game, rollout_seed, config.rollout_steps, config.step_budget);
        write(&dir.join("trace.json"), &rollout.graph.to_json())?;

        let mut errors: Vec<String> = rollout.error.iter().map(|e| format!("traced rollout: {e}")).collect();
        errors.extend(evaluation.errors());
        let report = compose_feedback(
            &rules,
            game,
            config.feedback_mode,
            evaluation.mean_reward,
            rollout.reward,
            &errors,
        );

        let outcome = optimize_step(config, &program, &rollout.graph, &report, &memory, backend);
        write(&dir.join("prompt.txt"), &outcome.prompt)?;
        write(&dir.join("response.txt"), &outcome.responses)?;

        let mut update_accepted = false;
        let mut rejection = None;
        let mut optimizer_error = outcome.error;
        if let Some(update) = outcome.update {
            let (updated, rejected) = apply_update(&program, &update, game);
            memory.push(update.to_blocks(), report.text.clone());
            match rejected {
                Some(r) => rejection = Some(r.to_string()),
                None => {
                    update_accepted = true;
                    program = updated;
                    evaluation = evaluate(&program);
                }
            }
        } else if optimizer_error.is_none() {
            optimizer_error = Some("no update".into());
        }

        write(&dir.join("policy.dsl"), &format_program(&program))?;
        let entry = IterationEntry {
            iteration,
            rollout_seed,
            rollout_reward: rollout.reward,
            eval_reward: evaluation.mean_reward,
            feedback_text: report.text,
            update_accepted,
            rejection,
            optimizer_error,
            metrics: code_metrics(&program),
        };
        let status = match (&entry.rejection, &entry.optimizer_error) {
            (Some(r), _) => format!("rejected ({r})"),
            (None, Some(e)) => format!("failed ({e})"),
            (None, None) => "accepted".to_string(),
        };
        let _ = writeln!(
            log,
            "iteration {iteration}: rollout seed {rollout_seed} reward {}, update {status}, eval {}",
            entry.rollout_reward, entry.eval_reward
        );
        if entry.eval_reward > best.eval_reward {
            best = BestPolicy {
                iteration,
                program: format_program(&program),
                eval_reward: entry.eval_reward,
            };
        }
        entries.push(entry);
    }

    let _ = writeln!(log, "best: iteration {} eval {}", best.iteration, best.eval_reward);
    let record = RunRecord {
        game,
        feedback_mode: config.feedback_mode,
        initial,
        iterations: entries,
        best,
    };
    write(&config.run_dir.join("record.json"), &record.to_json())?;
    write(&config.run_dir.join("best_policy.dsl"), &record.best.program)?;
    write(&config.run_dir.join("log.txt"), &log)?;
    Ok(record)
}

struct StepOutcome {
    prompt: String,
    responses: String,
    update: Option<crate::optimizer::CandidateUpdate>,
    error: Option<String>,
}

fn optimize_step(
    config: &RunConfig,
    program: &Program,
    graph: &TraceGraph,
    report: &crate::feedback::FeedbackReport,
    memory: &Memory,
    backend: &mut dyn Backend,
) -> StepOutcome {
    let bindings = match graph.last_output() {
        Some(target) => graph.backward(target, &report.text).unwrap_or_default(),
        None => Vec::new(),
    };
    let context = match build_prompt(graph, &bindings, report, program, memory, &config.optimizer) {
        Ok(c) => c,
        Err(e) => {
            return StepOutcome {
                prompt: String::new(),
                responses: String::new(),
                update: None,
                error: Some(e.to_string()),
            }
        }
    };
    let proposal = propose_update(&context, program, backend, &config.optimizer);
    let mut responses = String::new();
    for r in &proposal.responses {
        let _ = writeln!(responses, "{MOCK_SEPARATOR}");
        responses.push_str(r);
        if !r.ends_with('\n') {
            responses.push('\n');
        }
    }
    let (update, error) = match proposal.result {
        Ok(u) => (Some(u), None),
        Err(e @ OptimizerError::Backend { .. }) => (None, Some(format!("{BACKEND_FAILURE}: {e}"))),
        Err(e) => (None, Some(e.to_string())),
    };
    StepOutcome {
        prompt: context.render(),
        responses,
        update,
        error,
    }
}

/// Load the trace graph recorded in `iteration` of a finished run.
pub fn load_trace(run_dir: &Path, iteration: u32) -> Result<String, HarnessError> {
    let record_path = run_dir.join("record.json");
    let text = read_text(&record_path)?;
    let record = RunRecord::from_json(&text).map_err(|e| HarnessError::io(&record_path, e))?;
    if !record.iterations.iter().any(|e| e.iteration == iteration) {
        return Err(HarnessError::Config(format!(
            "iteration {iteration} is not in the run (it has {} iteration(s))",
            record.iterations.len()
        )));
    }
    let path = iteration_dir(run_dir, iteration).join("trace.json");
    read_text(&path)
}
