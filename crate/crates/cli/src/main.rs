use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use codeplay::dsl::{code_metrics, metrics_table, parse, CodeMetrics, DEFAULT_STEP_BUDGET};
use codeplay::envs::Game;
use codeplay::feedback::evaluate_policy;
use codeplay::harness::{load_policy, load_trace, read_text, train, HarnessError, RunConfig, Settings, DEFAULT_EVAL_LEN};
use codeplay::trace::TraceGraph;

const USAGE: u8 = 1;
const IO: u8 = 2;
const BACKEND: u8 = 3;

#[derive(Parser)]
#[command(name = "codeplay", version, about = "Train and inspect code-as-policy arcade agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimization loop and write artifacts to the run directory.
    Train(TrainArgs),
    /// Play full games with a policy and report rewards.
    Eval {
        policy: PathBuf,
        #[arg(long)]
        game: Game,
        #[arg(long, default_value_t = 3)]
        episodes: u64,
        /// First episode seed; episodes use consecutive seeds.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_EVAL_LEN)]
        max_steps: u32,
    },
    /// Print LOC / cyclomatic complexity / if-nesting for policy files.
    Metrics {
        #[arg(required = true)]
        policies: Vec<PathBuf>,
    },
    /// Write the trace graph recorded in one iteration of a run.
    TraceDump {
        run_dir: PathBuf,
        iteration: u32,
        /// Output file; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct TrainArgs {
    /// key = value config file; flags below override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    game: Option<String>,
    #[arg(long)]
    initial_policy: Option<String>,
    #[arg(long)]
    run_dir: Option<String>,
    #[arg(long)]
    iterations: Option<u32>,
    #[arg(long)]
    rollout_steps: Option<u32>,
    #[arg(long)]
    eval_len: Option<u32>,
    #[arg(long)]
    feedback_mode: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    run_seed: Option<u64>,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    mock_script: Option<String>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model_name: Option<String>,
}

impl TrainArgs {
    fn config(&self) -> Result<RunConfig, HarnessError> {
        let mut settings = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        let here = Path::new("");
        let overrides: [(&str, Option<String>); 13] = [
            ("game", self.game.clone()),
            ("initial_policy", self.initial_policy.clone()),
            ("run_dir", self.run_dir.clone()),
            ("iterations", self.iterations.map(|v| v.to_string())),
            ("rollout_steps", self.rollout_steps.map(|v| v.to_string())),
            ("eval_len", self.eval_len.map(|v| v.to_string())),
            ("feedback_mode", self.feedback_mode.clone()),
            ("seeds", self.seeds.clone()),
            ("run_seed", self.run_seed.map(|v| v.to_string())),
            ("backend", self.backend.clone()),
            ("mock_script", self.mock_script.clone()),
            ("endpoint", self.endpoint.clone()),
            ("model_name", self.model_name.clone()),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                settings.set(key, v, here)?;
            }
        }
        settings.build()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Train(args) => run_train(&args),
        Command::Eval {
            policy,
            game,
            episodes,
            seed,
            max_steps,
        } => run_eval(&policy, game, episodes, seed, max_steps),
        Command::Metrics { policies } => run_metrics(&policies),
        Command::TraceDump { run_dir, iteration, out } => run_trace_dump(&run_dir, iteration, out.as_deref()),
    }
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn run_train(args: &TrainArgs) -> ExitCode {
    let config = match args.config() {
        Ok(c) => c,
        Err(e) => return fail(IO, e),
    };
    let record = match train(&config) {
        Ok(r) => r,
        Err(e) => return fail(IO, e),
    };
    println!("iteration 0: eval {:.2} (initial)", record.initial.eval_reward);
    for e in &record.iterations {
        let status = match (&e.rejection, &e.optimizer_error) {
            (Some(r), _) => format!("rejected: {r}"),
            (None, Some(err)) => format!("failed: {err}"),
            (None, None) => "accepted".into(),
        };
        println!(
            "iteration {}: rollout {:.2}, eval {:.2}, {status}",
            e.iteration, e.rollout_reward, e.eval_reward
        );
    }
    println!(
        "best: iteration {} with eval {:.2}; artifacts in {}",
        record.best.iteration,
        record.best.eval_reward,
        config.run_dir.display()
    );
    if record.backend_failed() {
        return fail(BACKEND, "every iteration failed to reach the backend");
    }
    ExitCode::SUCCESS
}

fn run_eval(policy: &Path, game: Game, episodes: u64, seed: u64, max_steps: u32) -> ExitCode {
    let program = match load_policy(policy, game) {
        Ok(p) => p,
        Err(e) => return fail(IO, e),
    };
    let seeds: Vec<u64> = (seed..seed.saturating_add(episodes)).collect();
    let evaluation = evaluate_policy(&program, game, max_steps, &seeds, DEFAULT_STEP_BUDGET);
    for e in &evaluation.episodes {
        print!(
            "seed {}: reward {}, steps {}, lives lost {}",
            e.seed, e.reward, e.steps, e.lives_lost
        );
        match &e.error {
            Some(err) => println!(", error: {err}"),
            None => println!(),
        }
    }
    println!("mean reward: {}", evaluation.mean_reward);
    ExitCode::SUCCESS
}

fn run_metrics(paths: &[PathBuf]) -> ExitCode {
    let mut failed = false;
    let rows: Vec<(String, Result<CodeMetrics, String>)> = paths
        .iter()
        .map(|path| {
            let stage = path
                .file_stem()
                .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
            let metrics = read_text(path)
                .map_err(|e| e.to_string())
                .and_then(|src| parse(&src).map_err(|e| e.to_string()))
                .map(|p| code_metrics(&p));
            failed |= metrics.is_err();
            (stage, metrics)
        })
        .collect();
    print!("{}", metrics_table(&rows));
    if failed {
        ExitCode::from(IO)
    } else {
        ExitCode::SUCCESS
    }
}

fn run_trace_dump(run_dir: &Path, iteration: u32, out: Option<&Path>) -> ExitCode {
    let text = match load_trace(run_dir, iteration) {
        Ok(t) => t,
        Err(e) => return fail(IO, e),
    };
    let graph = match TraceGraph::from_json(&text) {
        Ok(g) => g,
        Err(e) => return fail(IO, e),
    };
    let json = graph.to_json();
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &json) {
                return fail(IO, format!("{}: {e}", path.display()));
            }
            eprintln!(
                "wrote {} nodes, {} steps to {}",
                graph.len(),
                graph.outputs_per_step().len(),
                path.display()
            );
        }
        None => println!("{json}"),
    }
    ExitCode::SUCCESS
}
