//! Deterministic object-centric arcade environments.
//!
//! Each game exposes the same episodic interface: construct an [`Env`] from an
//! [`EnvConfig`], call [`Env::reset`], then [`Env::step`] until the episode
//! terminates or is truncated. Observations list every visible object by
//! label with integer position, size and per-step velocity; coordinates grow
//! rightward and downward.

mod breakout;
mod pong;
mod space_invaders;
pub mod tuning;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use breakout::{brick_points, Breakout};
pub use pong::Pong;
pub use space_invaders::SpaceInvaders;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("unknown game `{0}` (expected pong, breakout or space_invaders)")]
    UnknownGame(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("action {action} is not valid for {game} (valid: {valid:?})")]
    InvalidAction {
        game: Game,
        action: i64,
        valid: &'static [u8],
    },
    #[error("episode is over; call reset before stepping again")]
    EpisodeOver,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Game {
    Pong,
    Breakout,
    SpaceInvaders,
}

impl Game {
    pub const ALL: [Game; 3] = [Game::Pong, Game::Breakout, Game::SpaceInvaders];

    pub fn name(self) -> &'static str {
        match self {
            Game::Pong => "pong",
            Game::Breakout => "breakout",
            Game::SpaceInvaders => "space_invaders",
        }
    }

    pub fn action_set(self) -> &'static [u8] {
        match self {
            Game::Pong | Game::Breakout => &[0, 2, 3],
            Game::SpaceInvaders => &[0, 1, 2, 3, 4, 5],
        }
    }

    /// Default traced-rollout length used during optimization.
    pub fn default_rollout_steps(self) -> u32 {
        match self {
            Game::Pong => 400,
            Game::Breakout => 300,
            Game::SpaceInvaders => 15,
        }
    }

    /// Whether `label` belongs to this game's object vocabulary.
    pub fn is_known_label(self, label: &str) -> bool {
        fn numbered(label: &str, prefix: &str) -> bool {
            label
                .strip_prefix(prefix)
                .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
        }
        match self {
            Game::Pong => matches!(label, "Player" | "Ball" | "Enemy"),
            Game::Breakout => {
                matches!(label, "Player" | "Ball")
                    || tuning::breakout::ROW_LABELS.iter().any(|p| numbered(label, p))
            }
            Game::SpaceInvaders => {
                label == "Player"
                    || numbered(label, "Alien")
                    || numbered(label, "Bullet")
                    || numbered(label, "Shield")
            }
        }
    }
}

impl fmt::Display for Game {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Game {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "pong" => Ok(Game::Pong),
            "breakout" => Ok(Game::Breakout),
            "space_invaders" | "spaceinvaders" => Ok(Game::SpaceInvaders),
            _ => Err(EnvError::UnknownGame(s.to_string())),
        }
    }
}

/// Position, size and per-step velocity of one object, in screen pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ObjectState {
    pub x: i32,
    pub y: i32,
    pub w: i32,
    pub h: i32,
    pub dx: i32,
    pub dy: i32,
}

impl ObjectState {
    pub fn new(x: i32, y: i32, w: i32, h: i32) -> Self {
        ObjectState { x, y, w, h, dx: 0, dy: 0 }
    }

    pub fn with_velocity(mut self, dx: i32, dy: i32) -> Self {
        self.dx = dx;
        self.dy = dy;
        self
    }

    pub fn in_bounds(&self) -> bool {
        (0..=tuning::SCREEN_W).contains(&self.x)
            && (0..=tuning::SCREEN_H).contains(&self.y)
            && self.w > 0
            && self.h > 0
    }

    pub(crate) fn overlaps(&self, other: &ObjectState) -> bool {
        self.x < other.x + other.w
            && other.x < self.x + self.w
            && self.y < other.y + other.h
            && other.y < self.y + self.h
    }

    /// Field lookup by name, as seen from policy code.
    pub fn field(&self, name: &str) -> Option<i32> {
        Some(match name {
            "x" => self.x,
            "y" => self.y,
            "w" => self.w,
            "h" => self.h,
            "dx" => self.dx,
            "dy" => self.dy,
            _ => return None,
        })
    }
}

/// Everything the agent sees: labelled objects plus lives and score.
///
/// Objects are kept in a `BTreeMap`, so iteration is label-sorted.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Observation {
    pub objects: BTreeMap<String, ObjectState>,
    pub lives: i32,
    pub score: i32,
}

impl Observation {
    pub fn get(&self, label: &str) -> Option<&ObjectState> {
        self.objects.get(label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.objects.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: i32,
    pub terminated: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub game: Game,
    pub seed: u64,
    pub max_steps: u32,
}

impl EnvConfig {
    pub fn new(game: Game, seed: u64, max_steps: u32) -> Self {
        EnvConfig { game, seed, max_steps }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.max_steps == 0 {
            return Err(EnvError::Config("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Per-game simulation behind the common episode bookkeeping in [`Env`].
pub(crate) trait GameSim: Send {
    fn reset(&mut self, rng: &mut ChaCha8Rng);
    /// Advance one step with an action already checked against the action set.
    /// Returns the reward and whether the game ended.
    fn advance(&mut self, action: u8, rng: &mut ChaCha8Rng) -> (i32, bool);
    fn observe(&self) -> Observation;
}

/// A single game instance with episode bookkeeping.
pub struct Env {
    config: EnvConfig,
    sim: Box<dyn GameSim>,
    rng: ChaCha8Rng,
    steps: u32,
    done: bool,
    action_log: Vec<u8>,
}

impl fmt::Debug for Env {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Env")
            .field("config", &self.config)
            .field("steps", &self.steps)
            .field("done", &self.done)
            .finish_non_exhaustive()
    }
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let sim: Box<dyn GameSim> = match config.game {
            Game::Pong => Box::new(Pong::default()),
            Game::Breakout => Box::new(Breakout::default()),
            Game::SpaceInvaders => Box::new(SpaceInvaders::default()),
        };
        Ok(Env {
            config,
            sim,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            steps: 0,
            done: true,
            action_log: Vec::new(),
        })
    }

    /// Build and reset in one go.
    pub fn start(config: EnvConfig) -> Result<(Self, Observation), EnvError> {
        let mut env = Env::new(config)?;
        let obs = env.reset();
        Ok((env, obs))
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn game(&self) -> Game {
        self.config.game
    }

    /// Reseed from the config and return the first observation.
    pub fn reset(&mut self) -> Observation {
        self.rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        self.sim.reset(&mut self.rng);
        self.steps = 0;
        self.done = false;
        self.action_log.clear();
        self.sim.observe()
    }

    pub fn step(&mut self, action: i64) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let game = self.config.game;
        let valid = game.action_set();
        let action = u8::try_from(action)
            .ok()
            .filter(|a| valid.contains(a))
            .ok_or(EnvError::InvalidAction { game, action, valid })?;
        self.action_log.push(action);
        let (reward, terminated) = self.sim.advance(action, &mut self.rng);
        self.steps += 1;
        let truncated = !terminated && self.steps >= self.config.max_steps;
        self.done = terminated || truncated;
        Ok(StepResult {
            obs: self.sim.observe(),
            reward,
            terminated,
            truncated,
        })
    }

    pub fn observe(&self) -> Observation {
        self.sim.observe()
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Actions actually executed this episode, in order.
    pub fn action_log(&self) -> &[u8] {
        &self.action_log
    }
}

/// One line of a trajectory dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: u32,
    pub obs: Observation,
    pub action: Option<u8>,
    pub reward: i32,
    pub terminated: bool,
}

/// Write records as newline-delimited JSON.
pub fn write_trajectory<W: Write>(mut out: W, records: &[TrajectoryRecord]) -> std::io::Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trajectory(text: &str) -> Result<Vec<TrajectoryRecord>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Play `actions` from reset and return the full trajectory, starting with the
/// reset observation (step 0, no action). Stops early at episode end.
pub fn record_trajectory(config: EnvConfig, actions: &[i64]) -> Result<Vec<TrajectoryRecord>, EnvError> {
    let (mut env, obs) = Env::start(config)?;
    let mut records = vec![TrajectoryRecord {
        step: 0,
        obs,
        action: None,
        reward: 0,
        terminated: false,
    }];
    for &action in actions {
        if env.is_done() {
            break;
        }
        let result = env.step(action)?;
        records.push(TrajectoryRecord {
            step: env.steps(),
            obs: result.obs,
            action: env.action_log().last().copied(),
            reward: result.reward,
            terminated: result.terminated,
        });
    }
    Ok(records)
}

/// Reflect a coordinate that overshot `boundary`: `2 * boundary - pos`.
pub(crate) fn reflect(pos: i32, boundary: i32) -> i32 {
    2 * boundary - pos
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn game_names_round_trip() {
        for game in Game::ALL {
            assert_eq!(game.name().parse::<Game>().unwrap(), game);
        }
        assert_eq!("Space-Invaders".parse::<Game>().unwrap(), Game::SpaceInvaders);
        assert!(matches!("tetris".parse::<Game>(), Err(EnvError::UnknownGame(_))));
    }

    #[test]
    fn zero_max_steps_is_rejected() {
        let err = Env::new(EnvConfig::new(Game::Pong, 0, 0)).unwrap_err();
        assert!(matches!(err, EnvError::Config(_)));
    }

    #[test]
    fn invalid_action_is_rejected() {
        let (mut env, _) = Env::start(EnvConfig::new(Game::Pong, 0, 10)).unwrap();
        assert!(matches!(env.step(1), Err(EnvError::InvalidAction { .. })));
        assert!(matches!(env.step(-1), Err(EnvError::InvalidAction { .. })));
        assert!(env.step(0).is_ok());
    }

    #[test]
    fn truncation_then_step_is_state_error() {
        let (mut env, _) = Env::start(EnvConfig::new(Game::Breakout, 3, 2)).unwrap();
        assert!(!env.step(0).unwrap().truncated);
        assert!(env.step(0).unwrap().truncated);
        assert_eq!(env.step(0), Err(EnvError::EpisodeOver));
        env.reset();
        assert!(env.step(0).is_ok());
    }

    #[test]
    fn step_before_reset_is_state_error() {
        let mut env = Env::new(EnvConfig::new(Game::SpaceInvaders, 0, 5)).unwrap();
        assert_eq!(env.step(0), Err(EnvError::EpisodeOver));
    }

    #[test]
    fn trajectory_dump_round_trips() {
        let records = record_trajectory(EnvConfig::new(Game::Pong, 7, 50), &[0, 2, 3, 3, 0]).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&mut buf, &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), records.len());
        assert_eq!(read_trajectory(&text).unwrap(), records);
    }

    #[test]
    fn label_vocabulary() {
        assert!(Game::Breakout.is_known_label("RB07"));
        assert!(!Game::Breakout.is_known_label("RB"));
        assert!(Game::SpaceInvaders.is_known_label("Alien12"));
        assert!(!Game::Pong.is_known_label("Alien1"));
    }
}
