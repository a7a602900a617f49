//! Shared match vocabulary and the simultaneous-move scheduler.

mod rng;
mod runner;
mod types;

pub use rng::{agent_stream, derive_seed, env_stream};
pub use runner::{
    public_view, run_match, run_match_with, verify_replay, Decision, DecisionView, DecideError,
    Decider, FnDecider, MatchError, MatchOptions, RoundFeedback,
};
pub use types::*;

use crate::games::GameError;

/// State machine contract for a game environment.
///
/// A round is one call to [`GameEngine::apply`] with the joint action of every
/// agent in [`GameEngine::movers`]. For simultaneous games that is every
/// active agent; for turn-based NEG it is the single agent whose turn it is.
pub trait GameEngine: Send {
    fn kind(&self) -> GameKind;

    /// Next round to be played (1-based).
    fn round(&self) -> u32;

    fn movers(&self) -> Vec<usize>;

    /// Public environment snapshot, free of any agent's private state.
    fn snapshot(&self) -> EnvSnapshot;

    fn private_info(&self, _agent: usize) -> Option<PrivateInfo> {
        None
    }

    /// Validates a proposed action, applying the per-game fallback when it
    /// is missing or illegal.
    fn sanitize(&self, agent: usize, proposed: Option<Action>) -> Sanitized;

    fn apply(&mut self, joint: &[(usize, Action)]) -> Result<(), GameError>;

    /// Engine-declared termination (SAG extinction, NEG agreement, ...).
    fn is_over(&self) -> bool;

    fn outcome(&self, max_rounds: u32) -> Outcome;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sanitized {
    pub action: Action,
    pub flag: Option<(FlagKind, String)>,
}

impl Sanitized {
    pub fn ok(action: Action) -> Self {
        Self { action, flag: None }
    }

    pub fn flagged(action: Action, kind: FlagKind, detail: impl Into<String>) -> Self {
        Self { action, flag: Some((kind, detail.into())) }
    }
}
