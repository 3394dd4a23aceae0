use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::Program;
use crate::envs::Game;

/// One function a game's policy must provide.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    pub arity: usize,
    pub trainable: bool,
}

impl FunctionSpec {
    pub fn new(name: &str, arity: usize, trainable: bool) -> Self {
        FunctionSpec {
            name: name.to_string(),
            arity,
            trainable,
        }
    }

    /// The interface of the policies shipped for `game`.
    pub fn for_game(game: Game) -> Vec<FunctionSpec> {
        let spec = |name, arity| FunctionSpec::new(name, arity, true);
        match game {
            Game::Pong => vec![spec("predict_ball_trajectory", 1), spec("select_action", 2)],
            Game::Breakout => vec![
                spec("predict_ball_trajectory", 1),
                spec("generate_paddle_target", 2),
                spec("select_paddle_action", 2),
            ],
            Game::SpaceInvaders => vec![
                spec("decide_shoot", 1),
                spec("decide_movement", 1),
                spec("combine_actions", 2),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    Missing { name: String },
    Arity { name: String, expected: usize, found: usize },
    Trainable { name: String, expected: bool },
    EntryArity { name: String, found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Missing { name } => write!(f, "missing function `{name}`"),
            Violation::Arity { name, expected, found } => {
                write!(f, "arity mismatch for `{name}`: expected {expected}, found {found}")
            }
            Violation::Trainable { name, expected: true } => write!(f, "`{name}` must be trainable"),
            Violation::Trainable { name, expected: false } => write!(f, "`{name}` must not be trainable"),
            Violation::EntryArity { name, found } => {
                write!(f, "entry function `{name}` must take exactly one argument (the observation), found {found}")
            }
        }
    }
}

/// Check that every expected function exists with the right arity and
/// trainable flag, and that the entry takes a single observation. Extra
/// helper functions are allowed.
pub fn validate_interface(program: &Program, expected: &[FunctionSpec]) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    for spec in expected {
        match program.function(&spec.name) {
            None => violations.push(Violation::Missing {
                name: spec.name.clone(),
            }),
            Some(f) => {
                if f.params.len() != spec.arity {
                    violations.push(Violation::Arity {
                        name: spec.name.clone(),
                        expected: spec.arity,
                        found: f.params.len(),
                    });
                }
                if f.trainable != spec.trainable {
                    violations.push(Violation::Trainable {
                        name: spec.name.clone(),
                        expected: spec.trainable,
                    });
                }
            }
        }
    }
    if let Some(entry) = program.function(&program.entry) {
        if entry.params.len() != 1 {
            violations.push(Violation::EntryArity {
                name: entry.name.clone(),
                found: entry.params.len(),
            });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
