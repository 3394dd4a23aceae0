//! Staged natural-language feedback and multi-seed policy evaluation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{run_episode, EpisodeResult};
use crate::dsl::format::format_number;
use crate::dsl::Program;
use crate::envs::Game;

/// Default stage table. Columns: game | level | interval | template.
/// `{score}` is replaced by the reward and `{to_go:N}` by `N - reward`.
pub const DEFAULT_STAGE_RULES: &str = "\
# game | level | interval | template
pong | high | [19, inf) | Good job! You're close to winning the game! You're scoring {score} points against the opponent, only {to_go:21} points short of winning.
pong | medium | (0, 19) | Keep it up! You're scoring {score} points against the opponent but you are still {to_go:21} points from winning the game. Try improving paddle positioning to prevent opponent scoring.
pong | low | (-inf, 0] | Your score is {score} points. Try to improve paddle positioning to prevent opponent scoring.
breakout | high | [300, inf) | Good job! You're close to winning the game! You're scoring {score} points against the opponent, try ensuring you return the ball, only {to_go:350} points short of winning.
breakout | medium | (0, 300) | Keep it up! You're scoring {score} points against the opponent but you are still {to_go:350} points from winning the game. Try improving paddle positioning to return the ball and avoid losing lives.
breakout | low | (-inf, 0] | Your score is {score} points. Try to improve paddle positioning to return the ball and avoid losing lives.
space_invaders | high | [1000, inf) | Great job! You're performing well with an average score of {score}. Try to score more even more points
space_invaders | medium | (500, 1000) | Good progress! Your average score is {score}. Focus on better timing for shooting and avoiding enemy projectiles.
space_invaders | low | (-inf, 500] | Your average score is {score}. Try to improve your strategy for shooting aliens and dodging projectiles.
";

pub const DEFAULT_EVAL_SEEDS: [u64; 3] = [0, 1, 2];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeedbackError {
    #[error("stage rules line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("stage rules for `{game}` {message}")]
    Coverage { game: String, message: String },
    #[error("no stage rules for game `{0}`")]
    UnknownGame(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    High,
    Medium,
    Low,
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::High => "high",
            Level::Medium => "medium",
            Level::Low => "low",
        })
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "high" => Ok(Level::High),
            "medium" => Ok(Level::Medium),
            "low" => Ok(Level::Low),
            other => Err(format!("unknown level `{other}`")),
        }
    }
}

/// One end of a stage interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub value: f64,
    pub inclusive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRule {
    pub game: String,
    pub level: Level,
    pub lower: Bound,
    pub upper: Bound,
    pub template: String,
}

/// Rewards shown to the optimizer are rounded to two decimals.
fn format_score(x: f64) -> String {
    format_number((x * 100.0).round() / 100.0)
}

impl StageRule {
    pub fn contains(&self, reward: f64) -> bool {
        let above = reward > self.lower.value || (self.lower.inclusive && reward == self.lower.value);
        let below = reward < self.upper.value || (self.upper.inclusive && reward == self.upper.value);
        above && below
    }

    /// Substitute the reward into the template.
    pub fn render(&self, reward: f64) -> String {
        let mut out = String::with_capacity(self.template.len() + 8);
        let mut rest = self.template.as_str();
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open..];
            let Some(close) = after.find('}') else {
                out.push_str(after);
                return out;
            };
            let key = &after[1..close];
            match key.split_once(':') {
                None if key == "score" => out.push_str(&format_score(reward)),
                Some(("to_go", target)) if target.trim().parse::<f64>().is_ok() => {
                    let target: f64 = target.trim().parse().expect("checked");
                    out.push_str(&format_score(target - reward));
                }
                _ => out.push_str(&after[..=close]),
            }
            rest = &after[close + 1..];
        }
        out.push_str(rest);
        out
    }
}

/// A validated stage table covering one or more games.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRules {
    rules: Vec<StageRule>,
}

fn parse_bound(text: &str, lower: bool) -> Result<Bound, String> {
    let t = text.trim();
    let (value_text, inclusive) = if lower {
        match t.chars().next() {
            Some('[') => (&t[1..], true),
            Some('(') => (&t[1..], false),
            _ => return Err(format!("interval must start with `[` or `(`, got `{t}`")),
        }
    } else {
        match t.chars().last() {
            Some(']') => (&t[..t.len() - 1], true),
            Some(')') => (&t[..t.len() - 1], false),
            _ => return Err(format!("interval must end with `]` or `)`, got `{t}`")),
        }
    };
    let value = match value_text.trim() {
        "inf" | "+inf" => f64::INFINITY,
        "-inf" => f64::NEG_INFINITY,
        v => v.parse::<f64>().map_err(|_| format!("bad bound `{v}`"))?,
    };
    if value.is_infinite() && inclusive {
        return Err("infinite bounds must be open".into());
    }
    Ok(Bound { value, inclusive })
}

impl StageRules {
    /// Parse `game | level | interval | template` lines. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<StageRules, FeedbackError> {
        let mut rules = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| FeedbackError::Config { line: i + 1, message };
            let parts: Vec<&str> = line.splitn(4, '|').map(str::trim).collect();
            let [game, level, interval, template] = parts[..] else {
                return Err(err("expected `game | level | interval | template`".into()));
            };
            let (lo, hi) = interval
                .split_once(',')
                .ok_or_else(|| err(format!("interval `{interval}` needs a comma")))?;
            rules.push(StageRule {
                game: game.to_string(),
                level: level.parse().map_err(err)?,
                lower: parse_bound(lo, true).map_err(err)?,
                upper: parse_bound(hi, false).map_err(err)?,
                template: template.to_string(),
            });
        }
        let parsed = StageRules { rules };
        parsed.validate()?;
        Ok(parsed)
    }

    pub fn rules(&self) -> &[StageRule] {
        &self.rules
    }

    /// Each game's intervals must tile the whole real line without overlap.
    fn validate(&self) -> Result<(), FeedbackError> {
        let mut games: Vec<&str> = self.rules.iter().map(|r| r.game.as_str()).collect();
        games.sort_unstable();
        games.dedup();
        for game in games {
            let coverage = |message: String| FeedbackError::Coverage {
                game: game.to_string(),
                message,
            };
            let mut rules: Vec<&StageRule> = self.rules.iter().filter(|r| r.game == game).collect();
            rules.sort_by(|a, b| a.lower.value.total_cmp(&b.lower.value).then(b.lower.inclusive.cmp(&a.lower.inclusive)));
            if rules[0].lower.value != f64::NEG_INFINITY {
                return Err(coverage("do not extend to -inf".into()));
            }
            for pair in rules.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if a.upper.value != b.lower.value || a.upper.inclusive == b.lower.inclusive {
                    return Err(coverage(format!(
                        "leave a gap or overlap between the {} and {} stages",
                        a.level, b.level
                    )));
                }
            }
            if rules.iter().any(|r| r.lower.value > r.upper.value) {
                return Err(coverage("contain an empty interval".into()));
            }
            if rules[rules.len() - 1].upper.value != f64::INFINITY {
                return Err(coverage("do not extend to +inf".into()));
            }
        }
        Ok(())
    }

    pub fn default_rules() -> StageRules {
        StageRules::parse(DEFAULT_STAGE_RULES).expect("built-in stage rules are valid")
    }

    /// The unique stage containing `reward`.
    pub fn stage(&self, game: &str, reward: f64) -> Result<&StageRule, FeedbackError> {
        let mut any = false;
        for rule in self.rules.iter().filter(|r| r.game == game) {
            any = true;
            if rule.contains(reward) {
                return Ok(rule);
            }
        }
        if any {
            // only NaN falls through a validated table
            Err(FeedbackError::Coverage {
                game: game.to_string(),
                message: format!("do not cover reward {reward}"),
            })
        } else {
            Err(FeedbackError::UnknownGame(game.to_string()))
        }
    }

    pub fn feedback(&self, game: &str, reward: f64) -> Result<String, FeedbackError> {
        Ok(self.stage(game, reward)?.render(reward))
    }
}

/// Staged feedback from the built-in table.
pub fn staged_feedback(game: Game, eval_reward: f64) -> String {
    StageRules::default_rules()
        .feedback(game.name(), eval_reward)
        .expect("built-in rules cover every finite reward")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    StagedFullGame,
    RolloutOnly,
}

impl fmt::Display for FeedbackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeedbackMode::StagedFullGame => "staged_full_game",
            FeedbackMode::RolloutOnly => "rollout_only",
        })
    }
}

impl FromStr for FeedbackMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "staged_full_game" | "staged" => Ok(FeedbackMode::StagedFullGame),
            "rollout_only" | "rollout" => Ok(FeedbackMode::RolloutOnly),
            other => Err(format!("unknown feedback mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub text: String,
    pub eval_reward: f64,
    pub rollout_reward: f64,
    pub mode: FeedbackMode,
}

fn rollout_sentence(rollout_reward: f64) -> String {
    format!("The traced rollout earned a total reward of {}.", format_score(rollout_reward))
}

/// Compose the optimizer's feedback. In rollout-only mode the text depends on
/// the rollout reward alone; otherwise the staged text for the full-game
/// reward comes first, followed by the rollout reward. `errors` are policy
/// failures observed while producing these numbers.
pub fn compose_feedback(
    rules: &StageRules,
    game: Game,
    mode: FeedbackMode,
    eval_reward: f64,
    rollout_reward: f64,
    errors: &[String],
) -> FeedbackReport {
    let mut text = match mode {
        FeedbackMode::RolloutOnly => rollout_sentence(rollout_reward),
        FeedbackMode::StagedFullGame => {
            let staged = rules
                .feedback(game.name(), eval_reward)
                .unwrap_or_else(|e| format!("(no staged feedback: {e})"));
            format!("{staged}\n{}", rollout_sentence(rollout_reward))
        }
    };
    for e in errors {
        text.push_str("\nThe policy failed with an error: ");
        text.push_str(e);
    }
    FeedbackReport {
        text,
        eval_reward,
        rollout_reward,
        mode,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    /// Seeds run concurrently when the `parallel` feature is enabled.
    #[default]
    Parallel,
    Sequential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean_reward: f64,
    pub episodes: Vec<EpisodeResult>,
}

impl Evaluation {
    pub fn errors(&self) -> Vec<String> {
        self.episodes
            .iter()
            .filter_map(|e| e.error.as_ref().map(|msg| format!("seed {}: {msg}", e.seed)))
            .collect()
    }
}

/// Mean full-episode reward over `seeds`; deterministic given the seeds.
pub fn evaluate_policy(program: &Program, game: Game, episode_len: u32, seeds: &[u64], step_budget: u64) -> Evaluation {
    evaluate_policy_with(program, game, episode_len, seeds, step_budget, Execution::default())
}

pub fn evaluate_policy_with(
    program: &Program,
    game: Game,
    episode_len: u32,
    seeds: &[u64],
    step_budget: u64,
    execution: Execution,
) -> Evaluation {
    let run = |&seed: &u64| run_episode(program, game, seed, episode_len, step_budget);
    let episodes: Vec<EpisodeResult> = match execution {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            seeds.par_iter().map(run).collect()
        }
        _ => seeds.iter().map(run).collect(),
    };
    let mean_reward = if episodes.is_empty() {
        0.0
    } else {
        episodes.iter().map(|e| e.reward).sum::<f64>() / episodes.len() as f64
    };
    Evaluation {
        mean_reward,
        episodes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_placeholders() {
        let rules = StageRules::default_rules();
        assert_eq!(
            rules.feedback("pong", 12.0).unwrap(),
            "Keep it up! You're scoring 12 points against the opponent but you are still 9 points from winning the game. Try improving paddle positioning to prevent opponent scoring."
        );
        assert_eq!(
            rules.feedback("pong", -5.0).unwrap(),
            "Your score is -5 points. Try to improve paddle positioning to prevent opponent scoring."
        );
    }

    #[test]
    fn rejects_gaps_and_overlaps() {
        let gap = "g | low | (-inf, 0) | a\ng | high | (0, inf) | b\n";
        assert!(matches!(StageRules::parse(gap), Err(FeedbackError::Coverage { .. })));
        let overlap = "g | low | (-inf, 0] | a\ng | high | [0, inf) | b\n";
        assert!(matches!(StageRules::parse(overlap), Err(FeedbackError::Coverage { .. })));
        let ok = "g | low | (-inf, 0] | a {score}\ng | high | (0, inf) | b\n";
        let rules = StageRules::parse(ok).unwrap();
        assert_eq!(rules.feedback("g", 0.0).unwrap(), "a 0");
        assert!(matches!(rules.feedback("h", 0.0), Err(FeedbackError::UnknownGame(_))));
    }

    #[test]
    fn malformed_lines_are_located() {
        let err = StageRules::parse("# c\n\ng | low | -inf, 0] | a\n").unwrap_err();
        assert!(matches!(err, FeedbackError::Config { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_placeholders_are_left_alone() {
        let rule = StageRule {
            game: "g".into(),
            level: Level::Low,
            lower: Bound {
                value: f64::NEG_INFINITY,
                inclusive: false,
            },
            upper: Bound {
                value: f64::INFINITY,
                inclusive: false,
            },
            template: "{x} {score} {to_go:abc} {".into(),
        };
        assert_eq!(rule.render(2.5), "{x} 2.5 {to_go:abc} {");
    }
}
