//! Guessing 0.8 of the Average.
//!
//! Every player picks an integer in `[1, 100]`; whoever lands closest to
//! 0.8 times the group average scores a point. Ties at the minimal distance
//! all score. If everyone picks the same number nobody scores.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::GameError;
use crate::engine::{Action, EnvSnapshot, FlagKind, GameEngine, GameKind, Outcome, PublicState, Sanitized};

pub const MIN_CHOICE: u32 = 1;
pub const MAX_CHOICE: u32 = 100;
/// Choice assumed for an agent with no usable previous choice.
pub const FALLBACK_CHOICE: u32 = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct G08aRound {
    pub choices: Vec<u32>,
    pub average: Ratio<i64>,
    pub target: Ratio<i64>,
    pub winners: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct G08aState {
    /// Next round to play.
    pub round: u32,
    pub scores: Vec<u32>,
    pub past_rounds: Vec<G08aRound>,
}

impl G08aState {
    pub fn new(num_agents: usize) -> Self {
        Self { round: 1, scores: vec![0; num_agents], past_rounds: Vec::new() }
    }

    pub fn last_target(&self) -> Option<Ratio<i64>> {
        self.past_rounds.last().map(|r| r.target)
    }

    pub fn previous_choice(&self, agent: usize) -> Option<u32> {
        self.past_rounds.last().and_then(|r| r.choices.get(agent).copied())
    }
}

/// Average, target and winner set of one round, in exact arithmetic.
pub fn resolve_round(choices: &[u32]) -> (Ratio<i64>, Ratio<i64>, Vec<usize>) {
    let n = choices.len() as i64;
    let sum: i64 = choices.iter().map(|&c| i64::from(c)).sum();
    let average = Ratio::new(sum, n);
    let target = average * Ratio::new(4, 5);
    if choices.windows(2).all(|w| w[0] == w[1]) {
        return (average, target, Vec::new());
    }
    // |c - 4S/5n| scaled by 5n stays integral
    let dist = |c: u32| (5 * n * i64::from(c) - 4 * sum).abs();
    let best = choices.iter().map(|&c| dist(c)).min().unwrap_or(0);
    let winners = choices
        .iter()
        .enumerate()
        .filter(|(_, &c)| dist(c) == best)
        .map(|(i, _)| i)
        .collect();
    (average, target, winners)
}

pub fn g08a_step(
    state: &G08aState,
    choices: &[u32],
) -> Result<(G08aState, Vec<usize>, Ratio<i64>), GameError> {
    if choices.len() != state.scores.len() {
        return Err(GameError::ActionCount { expected: state.scores.len(), got: choices.len() });
    }
    if let Some(&bad) = choices.iter().find(|&&c| !(MIN_CHOICE..=MAX_CHOICE).contains(&c)) {
        return Err(GameError::ChoiceOutOfRange(i64::from(bad)));
    }
    let (average, target, winners) = resolve_round(choices);
    let mut next = state.clone();
    for &w in &winners {
        next.scores[w] += 1;
    }
    next.past_rounds.push(G08aRound {
        choices: choices.to_vec(),
        average,
        target,
        winners: winners.clone(),
    });
    next.round += 1;
    Ok((next, winners, target))
}

pub struct G08aEngine {
    state: G08aState,
}

impl G08aEngine {
    pub fn new(num_agents: usize) -> Self {
        Self { state: G08aState::new(num_agents) }
    }

    pub fn state(&self) -> &G08aState {
        &self.state
    }
}

impl GameEngine for G08aEngine {
    fn kind(&self) -> GameKind {
        GameKind::G08a
    }

    fn round(&self) -> u32 {
        self.state.round
    }

    fn movers(&self) -> Vec<usize> {
        (0..self.state.scores.len()).collect()
    }

    fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            game: GameKind::G08a,
            round: self.state.round,
            public_state: PublicState::G08a(self.state.clone()),
        }
    }

    fn sanitize(&self, agent: usize, proposed: Option<Action>) -> Sanitized {
        match proposed {
            Some(Action::Choice(v)) | Some(Action::Bid(v)) => {
                let clamped = v.clamp(i64::from(MIN_CHOICE), i64::from(MAX_CHOICE));
                if clamped == v {
                    Sanitized::ok(Action::Choice(v))
                } else {
                    Sanitized::flagged(
                        Action::Choice(clamped),
                        FlagKind::Clamped,
                        format!("choice {v} clamped to {clamped}"),
                    )
                }
            }
            other => {
                let previous = self.state.previous_choice(agent).unwrap_or(FALLBACK_CHOICE);
                Sanitized::flagged(
                    Action::Choice(i64::from(previous)),
                    FlagKind::Fallback,
                    format!("no usable choice ({other:?}); repeating {previous}"),
                )
            }
        }
    }

    fn apply(&mut self, joint: &[(usize, Action)]) -> Result<(), GameError> {
        let n = self.state.scores.len();
        let mut choices = vec![None; n];
        for (agent, action) in joint {
            let slot = choices.get_mut(*agent).ok_or(GameError::NotAllowed(*agent))?;
            match action {
                Action::Choice(v) => {
                    let v = u32::try_from(*v).map_err(|_| GameError::ChoiceOutOfRange(*v))?;
                    *slot = Some(v);
                }
                other => return Err(GameError::WrongActionKind(format!("{other:?}"))),
            }
        }
        let choices: Vec<u32> = choices
            .into_iter()
            .collect::<Option<_>>()
            .ok_or(GameError::ActionCount { expected: n, got: joint.len() })?;
        let (next, _, _) = g08a_step(&self.state, &choices)?;
        self.state = next;
        Ok(())
    }

    fn is_over(&self) -> bool {
        false
    }

    fn outcome(&self, _max_rounds: u32) -> Outcome {
        Outcome::G08a { scores: self.state.scores.clone() }
    }
}
