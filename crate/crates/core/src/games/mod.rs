//! Game rules as pure state transitions, plus [`GameEngine`] adapters.

pub mod g08a;
pub mod neg;
pub mod pd;
pub mod sag;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{env_stream, GameEngine, GameKind, MatchConfig};

#[derive(Debug, Error, PartialEq)]
pub enum GameError {
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("choice {0} outside [1, 100]")]
    ChoiceOutOfRange(i64),
    #[error("agent {0} is not allowed to act now")]
    NotAllowed(usize),
    #[error("action kind does not match the game: {0}")]
    WrongActionKind(String),
    #[error("game is already over")]
    Finished,
    #[error("game is still in progress")]
    InProgress,
    #[error("invalid payoff matrix: {0}")]
    BadMatrix(String),
    #[error("invalid parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    #[serde(default)]
    pub sag: sag::SagRules,
    #[serde(default)]
    pub neg: neg::NegParams,
    #[serde(default)]
    pub pd: pd::PdMatrix,
}

impl GameParams {
    pub fn validate(&self, game: GameKind) -> Result<(), GameError> {
        match game {
            GameKind::Pd => self.pd.validate(),
            GameKind::Neg => self.neg.validate(),
            GameKind::Sag => self.sag.validate(),
            GameKind::G08a => Ok(()),
        }
    }
}

pub fn build_engine(config: &MatchConfig) -> Result<Box<dyn GameEngine>, GameError> {
    config.params.validate(config.game)?;
    let n = config.num_agents;
    Ok(match config.game {
        GameKind::G08a => Box::new(g08a::G08aEngine::new(n)),
        GameKind::Sag => Box::new(sag::SagEngine::new(n, config.params.sag.clone())),
        GameKind::Neg => {
            let mut rng = env_stream(config.seed);
            Box::new(neg::NegEngine::new(&config.params.neg, config.max_rounds, &mut rng))
        }
        GameKind::Pd => Box::new(pd::PdEngine::new(config.params.pd)),
    })
}
