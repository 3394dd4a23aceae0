//! The generative optimizer: prompt construction from traces and feedback,
//! backend queries with retries, response parsing, and validated updates
//! with rollback.

pub mod backend;

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use backend::{Backend, BackendError, HttpBackend, MockBackend};

use crate::agent::act;
use crate::dsl::{
    check, format_body, format_function, parse_body, validate_interface, FunctionSpec, Program, DEFAULT_STEP_BUDGET,
};
use crate::envs::{Game, Observation};
use crate::feedback::FeedbackReport;
use crate::trace::{FeedbackBinding, TraceError, TraceGraph, DEFAULT_CHAR_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Mock,
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "http" => Ok(BackendKind::Http),
            "mock" => Ok(BackendKind::Mock),
            other => Err(format!("unknown backend `{other}` (expected http or mock)")),
        }
    }
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendKind::Http => "http",
            BackendKind::Mock => "mock",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub memory_size: usize,
    /// Upper bound on the rendered prompt, in characters.
    pub char_budget: usize,
    pub backend: BackendKind,
    pub endpoint: String,
    pub model_name: String,
    pub max_retries: u32,
    /// Environment variable holding the bearer token for the HTTP backend.
    pub api_key_env: String,
    pub mock_script: Option<PathBuf>,
    pub timeout_secs: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            memory_size: 5,
            char_budget: DEFAULT_CHAR_BUDGET,
            backend: BackendKind::Mock,
            endpoint: "http://127.0.0.1:8080/v1/complete".into(),
            model_name: "default".into(),
            max_retries: 2,
            api_key_env: "CODEPLAY_API_KEY".into(),
            mock_script: None,
            timeout_secs: 120,
        }
    }
}

impl OptimizerConfig {
    pub fn make_backend(&self) -> Result<Box<dyn Backend>, BackendError> {
        match self.backend {
            BackendKind::Mock => {
                let path = self.mock_script.as_ref().ok_or_else(|| BackendError::Script {
                    path: "<unset>".into(),
                    message: "the mock backend needs a script file".into(),
                })?;
                Ok(Box::new(MockBackend::from_file(path)?))
            }
            BackendKind::Http => {
                let key = std::env::var(&self.api_key_env).ok();
                Ok(Box::new(HttpBackend::new(
                    &self.endpoint,
                    &self.model_name,
                    key,
                    Duration::from_secs(self.timeout_secs),
                )?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizerError {
    #[error("prompt does not fit: {0}")]
    Budget(String),
    #[error("backend failed after {attempts} attempt(s): {source}")]
    Backend { attempts: u32, source: BackendError },
    #[error("malformed response after {attempts} attempt(s): {message}")]
    Malformed { attempts: u32, message: String },
}

/// One remembered optimization step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub update: String,
    pub feedback: String,
}

/// The most recent `capacity` (update, feedback) pairs, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Memory {
    capacity: usize,
    entries: VecDeque<MemoryEntry>,
}

impl Memory {
    pub fn new(capacity: usize) -> Self {
        Memory {
            capacity,
            entries: VecDeque::new(),
        }
    }

    pub fn push(&mut self, update: String, feedback: String) {
        self.entries.push_back(MemoryEntry { update, feedback });
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.iter()
    }
}

pub const NO_PRIOR_ATTEMPTS: &str = "(no prior attempts)";

const INSTRUCTIONS: &str = "\
You are improving a game-playing policy written in a small scripting language.
The policy's entry function is called once per environment step with the current observation and must return an action.
Functions marked `trainable` may be rewritten. Study the code, the execution trace of a recent rollout, and the feedback, then propose better function bodies.

Language summary: statements end at newlines; blocks use braces; `if`/`elif`/`else`, `while`, `for key, value in collection`, `return`, `break`, `continue`;
operators `and or not == != < <= > >= in + - * / // %`; literals `true false none`, numbers, \"text\", [lists];
`obs.Label` or `obs[\"Label\"]` gives an object with fields x y w h dx dy; `obs.lives`, `obs.score`; `\"Label\" in obs`;
builtins abs min max floor len starts_with random_choice random_uniform.

Reply with one fenced block per function you rewrite. Open each block with a line ```dsl <function_name>,
put only the new function body inside (it may start with a \"\"\"docstring\"\"\"), and close it with ```.
Only trainable functions may be rewritten; text outside the blocks is ignored.
";

/// The four prompt sections. Rendering is deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptContext {
    pub code_section: String,
    pub trace_section: String,
    pub feedback_section: String,
    pub memory_section: String,
}

impl PromptContext {
    fn render_with(code: &str, trace: &str, feedback: &str, memory: &str) -> String {
        format!("{INSTRUCTIONS}\n# Code\n{code}\n# Trace\n{trace}\n# Feedback\n{feedback}\n\n# Memory\n{memory}")
    }

    pub fn render(&self) -> String {
        Self::render_with(
            &self.code_section,
            &self.trace_section,
            &self.feedback_section,
            &self.memory_section,
        )
    }
}

fn code_section(program: &Program) -> String {
    let mut out = String::new();
    for f in &program.functions {
        let entry = f.name == program.entry;
        if !f.trainable {
            out.push_str(if entry {
                "# entry point, not editable\n"
            } else {
                "# helper, not editable\n"
            });
        }
        out.push_str(&format_function(f, entry));
        out.push('\n');
    }
    out
}

fn memory_section(memory: &Memory, capacity: usize) -> String {
    let entries: Vec<&MemoryEntry> = memory.entries().collect();
    let shown = &entries[entries.len().saturating_sub(capacity)..];
    if shown.is_empty() {
        return format!("{NO_PRIOR_ATTEMPTS}\n");
    }
    let mut out = String::new();
    for (i, e) in shown.iter().enumerate() {
        let _ = writeln!(out, "## attempt {} of {}", i + 1, shown.len());
        let _ = writeln!(out, "update:\n{}", e.update.trim_end());
        let _ = writeln!(out, "feedback:\n{}", e.feedback.trim_end());
    }
    out
}

/// Assemble the optimizer prompt. The trace slice gets whatever budget the
/// other sections leave.
pub fn build_prompt(
    graph: &TraceGraph,
    bindings: &[FeedbackBinding],
    feedback: &FeedbackReport,
    program: &Program,
    memory: &Memory,
    config: &OptimizerConfig,
) -> Result<PromptContext, OptimizerError> {
    let code = code_section(program);
    let mut feedback_section = feedback.text.clone();
    if !bindings.is_empty() {
        let names: Vec<&str> = bindings.iter().map(|b| b.parameter.as_str()).collect();
        let _ = write!(feedback_section, "\n(applies to: {})", names.join(", "));
    }
    let memory_text = memory_section(memory, config.memory_size);
    let fixed = PromptContext::render_with(&code, "", &feedback_section, &memory_text).len();
    let remaining = config
        .char_budget
        .checked_sub(fixed)
        .ok_or_else(|| OptimizerError::Budget(format!("{fixed} characters needed before the trace, budget {}", config.char_budget)))?;
    let trace = graph.extract_prompt_slice(bindings, remaining).map_err(|e| match e {
        TraceError::Budget { .. } => OptimizerError::Budget(e.to_string()),
        other => OptimizerError::Budget(format!("trace slice failed: {other}")),
    })?;
    Ok(PromptContext {
        code_section: code,
        trace_section: trace,
        feedback_section,
        memory_section: memory_text,
    })
}

/// Replacement bodies proposed for trainable functions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CandidateUpdate {
    pub replacements: BTreeMap<String, String>,
    pub commentary: String,
}

impl CandidateUpdate {
    /// Render back into the fenced-block format.
    pub fn to_blocks(&self) -> String {
        let mut out = String::new();
        for (name, body) in &self.replacements {
            let _ = writeln!(out, "```dsl {name}\n{}\n```", body.trim_end());
        }
        out
    }
}

/// Extract fenced blocks tagged with function names. The last word of the
/// opening fence line names the function; a fence carrying only a language
/// tag is ignored unless that tag is itself a trainable function name.
pub fn parse_response(text: &str, trainable: &[&str]) -> Result<CandidateUpdate, String> {
    let mut update = CandidateUpdate::default();
    let mut lines = text.lines();
    let mut commentary = Vec::new();
    while let Some(line) = lines.next() {
        let trimmed = line.trim();
        let Some(info) = trimmed.strip_prefix("```") else {
            commentary.push(line);
            continue;
        };
        let words: Vec<&str> = info.split_whitespace().collect();
        let name = match words.as_slice() {
            [] => None,
            [only] if !trainable.contains(only) => None,
            [.., last] => Some(last.to_string()),
        };
        let mut body = Vec::new();
        let mut closed = false;
        for inner in lines.by_ref() {
            if inner.trim() == "```" {
                closed = true;
                break;
            }
            body.push(inner);
        }
        if !closed {
            return Err("unterminated fenced block".into());
        }
        let Some(name) = name else { continue };
        if !trainable.contains(&name.as_str()) {
            return Err(format!("block for `{name}`, which is not a trainable function"));
        }
        if update.replacements.insert(name.clone(), dedent(&body)).is_some() {
            return Err(format!("more than one block for `{name}`"));
        }
    }
    if update.replacements.is_empty() {
        return Err("no fenced code block for a trainable function".into());
    }
    update.commentary = commentary.join("\n").trim().to_string();
    Ok(update)
}

fn dedent(lines: &[&str]) -> String {
    let indent = lines
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    let mut out = String::new();
    for l in lines {
        out.push_str(l.get(indent..).unwrap_or("").trim_end());
        out.push('\n');
    }
    out
}

/// Outcome of one proposal: the parsed update, or why none was obtained,
/// plus every raw response received along the way.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub result: Result<CandidateUpdate, OptimizerError>,
    pub responses: Vec<String>,
}

/// Query the backend, retrying failed requests and malformed responses up to
/// `max_retries` times.
pub fn propose_update(
    context: &PromptContext,
    program: &Program,
    backend: &mut dyn Backend,
    config: &OptimizerConfig,
) -> Proposal {
    let prompt = context.render();
    let trainable: Vec<&str> = program.trainable().map(|f| f.name.as_str()).collect();
    let mut responses = Vec::new();
    let mut last = None;
    let attempts = config.max_retries + 1;
    for _ in 0..attempts {
        match backend.complete(&prompt) {
            Err(e) => {
                let exhausted = matches!(e, BackendError::Exhausted(_));
                last = Some(OptimizerError::Backend { attempts, source: e });
                if exhausted {
                    break;
                }
            }
            Ok(text) => {
                let parsed = parse_response(&text, &trainable);
                responses.push(text);
                match parsed {
                    Ok(update) => {
                        return Proposal {
                            result: Ok(update),
                            responses,
                        }
                    }
                    Err(message) => last = Some(OptimizerError::Malformed { attempts, message }),
                }
            }
        }
    }
    Proposal {
        result: Err(last.expect("at least one attempt is made")),
        responses,
    }
}

/// Why an update was not applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub function: Option<String>,
    pub reason: String,
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.function {
            Some(name) => write!(f, "update to `{name}` rejected: {}", self.reason),
            None => write!(f, "update rejected: {}", self.reason),
        }
    }
}

/// A fixed mid-game observation per game used to smoke-test updates.
pub fn smoke_observation(game: Game) -> Observation {
    let text = match game {
        Game::Pong => include_str!("../../fixtures/smoke/pong.json"),
        Game::Breakout => include_str!("../../fixtures/smoke/breakout.json"),
        Game::SpaceInvaders => include_str!("../../fixtures/smoke/space_invaders.json"),
    };
    serde_json::from_str(text).expect("smoke fixtures are valid observations")
}

/// Splice the replacement bodies into `program` and validate the result:
/// static checks, the game interface, and one smoke evaluation of the entry
/// on a fixed observation. On any failure the original program comes back
/// unchanged together with a rejection.
pub fn apply_update(program: &Program, update: &CandidateUpdate, game: Game) -> (Program, Option<Rejection>) {
    match try_apply(program, update, game) {
        Ok(updated) => (updated, None),
        Err(rejection) => (program.clone(), Some(rejection)),
    }
}

fn try_apply(program: &Program, update: &CandidateUpdate, game: Game) -> Result<Program, Rejection> {
    let reject = |function: Option<&str>, reason: String| Rejection {
        function: function.map(str::to_string),
        reason,
    };
    if update.replacements.is_empty() {
        return Err(reject(None, "no replacements".into()));
    }
    let mut updated = program.clone();
    for (name, source) in &update.replacements {
        let Some(f) = updated.function_mut(name) else {
            return Err(reject(Some(name), "no such function".into()));
        };
        if !f.trainable {
            return Err(reject(Some(name), "function is not trainable".into()));
        }
        let (doc, body) = parse_body(source).map_err(|e| reject(Some(name), format!("parse error: {e}")))?;
        f.body = body;
        if let Some(doc) = doc {
            f.docstring = Some(indent_docstring(&doc));
        }
    }
    check(&updated).map_err(|e| reject(None, format!("invalid program: {e}")))?;
    if let Err(violations) = validate_interface(&updated, &FunctionSpec::for_game(game)) {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(reject(None, format!("interface violation: {}", text.join("; "))));
    }
    act(&updated, game, &smoke_observation(game), DEFAULT_STEP_BUDGET, 0)
        .map_err(|e| reject(None, format!("smoke evaluation failed: {e}")))?;
    Ok(updated)
}

/// A docstring written at body level, re-indented to sit inside a function.
/// Blank interior lines stay empty.
fn indent_docstring(doc: &str) -> String {
    let lines: Vec<&str> = doc.split('\n').collect();
    let last = lines.len() - 1;
    lines
        .iter()
        .enumerate()
        .map(|(i, line)| match i {
            0 => line.to_string(),
            i if line.is_empty() && i != last => String::new(),
            _ => format!("    {line}"),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Inverse of [`indent_docstring`].
fn dedent_docstring(doc: &str) -> String {
    doc.split('\n')
        .enumerate()
        .map(|(i, line)| if i == 0 { line } else { line.strip_prefix("    ").unwrap_or(line) })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Update that turns each trainable function of `from` into its counterpart
/// in `to`.
pub fn diff_update(from: &Program, to: &Program) -> CandidateUpdate {
    let mut update = CandidateUpdate::default();
    for f in from.trainable() {
        if let Some(target) = to.function(&f.name) {
            if target.body != f.body || target.docstring != f.docstring {
                let mut body = String::new();
                if let Some(doc) = &target.docstring {
                    let _ = writeln!(body, "\"\"\"{}\"\"\"", dedent_docstring(doc));
                }
                body.push_str(&format_body(&target.body));
                update.replacements.insert(f.name.clone(), body);
            }
        }
    }
    update
}
