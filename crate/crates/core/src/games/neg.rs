//! Two-agent negotiation over a public pool of peppers, cherries and
//! strawberries with private per-item utilities.
//!
//! Agents alternate moves. Messages are opaque to the engine; only
//! proposals, acceptance and walking away have mechanics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GameError;
use crate::engine::{
    Action, EnvSnapshot, FlagKind, GameEngine, GameKind, Outcome, PrivateInfo, PublicState,
    Sanitized,
};

pub const ITEMS: [&str; 3] = ["peppers", "cherries", "strawberries"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegParams {
    pub pool: [u32; 3],
    pub utility_min: u32,
    pub utility_max: u32,
    pub first_mover: usize,
}

impl Default for NegParams {
    fn default() -> Self {
        Self { pool: [2, 2, 2], utility_min: 1, utility_max: 10, first_mover: 0 }
    }
}

impl NegParams {
    pub fn validate(&self) -> Result<(), GameError> {
        if self.utility_min == 0 || self.utility_min > self.utility_max {
            return Err(GameError::BadParams("utilities must be positive with min <= max".into()));
        }
        if self.first_mover > 1 {
            return Err(GameError::BadParams("first_mover must be 0 or 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegStatus {
    Open,
    Agreed,
    Failed,
}

/// Item counts per agent: `shares[agent][item]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub shares: [[u32; 3]; 2],
}

impl Allocation {
    /// Allocation giving `mine` to `agent` and the remainder of `pool` to the other.
    pub fn from_share(agent: usize, mine: [u32; 3], pool: [u32; 3]) -> Option<Self> {
        if agent > 1 || mine.iter().zip(pool).any(|(m, p)| *m > p) {
            return None;
        }
        let rest = [pool[0] - mine[0], pool[1] - mine[1], pool[2] - mine[2]];
        let mut shares = [rest; 2];
        shares[agent] = mine;
        Some(Self { shares })
    }

    pub fn partitions(&self, pool: [u32; 3]) -> bool {
        (0..3).all(|i| self.shares[0][i] + self.shares[1][i] == pool[i])
    }

    pub fn utility(&self, agent: usize, values: [u32; 3]) -> u32 {
        self.shares[agent].iter().zip(values).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "move", rename_all = "snake_case")]
pub enum NegMove {
    Message { text: String },
    Propose { allocation: Allocation },
    Accept,
    WalkAway,
}

impl NegMove {
    pub fn describe(&self) -> String {
        match self {
            NegMove::Message { text } => format!("says \"{text}\""),
            NegMove::Propose { allocation } => {
                let fmt = |s: [u32; 3]| {
                    ITEMS.iter().zip(s).map(|(n, c)| format!("{c} {n}")).collect::<Vec<_>>().join(", ")
                };
                format!(
                    "proposes Player 1 gets [{}] and Player 2 gets [{}]",
                    fmt(allocation.shares[0]),
                    fmt(allocation.shares[1])
                )
            }
            NegMove::Accept => "accepts the pending proposal".into(),
            NegMove::WalkAway => "walks away".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegState {
    pub pool: [u32; 3],
    pub utilities: [[u32; 3]; 2],
    pub dialogue: Vec<(usize, NegMove)>,
    /// Pending proposal and who made it.
    pub pending: Option<(usize, Allocation)>,
    pub agreed: Option<Allocation>,
    pub status: NegStatus,
    pub turn: usize,
    pub moves: u32,
    pub max_moves: u32,
}

/// The part of [`NegState`] any observer may see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegPublic {
    pub pool: [u32; 3],
    pub dialogue: Vec<(usize, NegMove)>,
    pub pending: Option<(usize, Allocation)>,
    pub agreed: Option<Allocation>,
    pub status: NegStatus,
    pub turn: usize,
    pub moves: u32,
    pub max_moves: u32,
}

impl NegState {
    pub fn new(params: &NegParams, utilities: [[u32; 3]; 2], max_moves: u32) -> Self {
        Self {
            pool: params.pool,
            utilities,
            dialogue: Vec::new(),
            pending: None,
            agreed: None,
            status: NegStatus::Open,
            turn: params.first_mover,
            moves: 0,
            max_moves,
        }
    }

    pub fn public(&self) -> NegPublic {
        NegPublic {
            pool: self.pool,
            dialogue: self.dialogue.clone(),
            pending: self.pending,
            agreed: self.agreed,
            status: self.status,
            turn: self.turn,
            moves: self.moves,
            max_moves: self.max_moves,
        }
    }

    /// Why `mv` would be illegal for `mover` right now, if it would be.
    pub fn invalid_reason(&self, mover: usize, mv: &NegMove) -> Option<String> {
        match mv {
            NegMove::Accept => match self.pending {
                None => Some("accept with no pending proposal".into()),
                Some((by, _)) if by == mover => Some("cannot accept own proposal".into()),
                _ => None,
            },
            NegMove::Propose { allocation } if !allocation.partitions(self.pool) => {
                Some("proposal does not partition the pool".into())
            }
            _ => None,
        }
    }
}

/// Applies one move. Illegal moves are downgraded to a message; the returned
/// string says why.
pub fn neg_step(
    state: &NegState,
    mover: usize,
    mv: &NegMove,
) -> Result<(NegState, Option<String>), GameError> {
    if state.status != NegStatus::Open {
        return Err(GameError::Finished);
    }
    if mover != state.turn {
        return Err(GameError::NotAllowed(mover));
    }
    let mut next = state.clone();
    let invalid = state.invalid_reason(mover, mv);
    let applied = match (&invalid, mv) {
        (Some(reason), _) => NegMove::Message { text: format!("[invalid move: {reason}]") },
        (None, m) => m.clone(),
    };
    match &applied {
        NegMove::Message { .. } => {}
        NegMove::Propose { allocation } => next.pending = Some((mover, *allocation)),
        NegMove::Accept => {
            next.agreed = next.pending.map(|(_, a)| a);
            next.status = NegStatus::Agreed;
        }
        NegMove::WalkAway => next.status = NegStatus::Failed,
    }
    next.dialogue.push((mover, applied));
    next.moves += 1;
    next.turn = 1 - mover;
    if next.status == NegStatus::Open && next.moves >= next.max_moves {
        next.status = NegStatus::Failed;
    }
    Ok((next, invalid))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegScore {
    pub winner: Option<usize>,
    pub utilities: [u32; 2],
}

pub fn neg_score(state: &NegState) -> Result<NegScore, GameError> {
    match (state.status, state.agreed) {
        (NegStatus::Open, _) => Err(GameError::InProgress),
        (NegStatus::Agreed, Some(a)) => {
            let utilities = [a.utility(0, state.utilities[0]), a.utility(1, state.utilities[1])];
            let winner = match utilities[0].cmp(&utilities[1]) {
                std::cmp::Ordering::Greater => Some(0),
                std::cmp::Ordering::Less => Some(1),
                std::cmp::Ordering::Equal => None,
            };
            Ok(NegScore { winner, utilities })
        }
        _ => Ok(NegScore { winner: None, utilities: [0, 0] }),
    }
}

pub struct NegEngine {
    state: NegState,
}

impl NegEngine {
    /// Draws private utilities from `rng` (the match environment stream).
    pub fn new(params: &NegParams, max_moves: u32, rng: &mut impl Rng) -> Self {
        let mut utilities = [[0u32; 3]; 2];
        for agent in utilities.iter_mut() {
            for v in agent.iter_mut() {
                *v = rng.random_range(params.utility_min..=params.utility_max);
            }
        }
        Self { state: NegState::new(params, utilities, max_moves) }
    }

    pub fn with_utilities(params: &NegParams, utilities: [[u32; 3]; 2], max_moves: u32) -> Self {
        Self { state: NegState::new(params, utilities, max_moves) }
    }

    pub fn state(&self) -> &NegState {
        &self.state
    }
}

impl GameEngine for NegEngine {
    fn kind(&self) -> GameKind {
        GameKind::Neg
    }

    fn round(&self) -> u32 {
        self.state.moves + 1
    }

    fn movers(&self) -> Vec<usize> {
        if self.state.status == NegStatus::Open {
            vec![self.state.turn]
        } else {
            Vec::new()
        }
    }

    fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            game: GameKind::Neg,
            round: self.round(),
            public_state: PublicState::Neg(self.state.public()),
        }
    }

    fn private_info(&self, agent: usize) -> Option<PrivateInfo> {
        self.state.utilities.get(agent).map(|u| PrivateInfo::NegUtilities(*u))
    }

    fn sanitize(&self, agent: usize, proposed: Option<Action>) -> Sanitized {
        match proposed {
            Some(Action::Neg(mv)) => match self.state.invalid_reason(agent, &mv) {
                None => Sanitized::ok(Action::Neg(mv)),
                Some(reason) => Sanitized::flagged(
                    Action::Neg(NegMove::Message { text: format!("[invalid move: {reason}]") }),
                    FlagKind::Fallback,
                    reason,
                ),
            },
            other => Sanitized::flagged(
                Action::Neg(NegMove::Message { text: String::new() }),
                FlagKind::Fallback,
                format!("no usable move ({other:?}); sending an empty message"),
            ),
        }
    }

    fn apply(&mut self, joint: &[(usize, Action)]) -> Result<(), GameError> {
        let [(mover, action)] = joint else {
            return Err(GameError::ActionCount { expected: 1, got: joint.len() });
        };
        let Action::Neg(mv) = action else {
            return Err(GameError::WrongActionKind(format!("{action:?}")));
        };
        let (next, _) = neg_step(&self.state, *mover, mv)?;
        self.state = next;
        Ok(())
    }

    fn is_over(&self) -> bool {
        self.state.status != NegStatus::Open
    }

    fn outcome(&self, _max_rounds: u32) -> Outcome {
        let mut state = self.state.clone();
        if state.status == NegStatus::Open {
            state.status = NegStatus::Failed;
        }
        let score = neg_score(&state).expect("status is settled");
        Outcome::Neg { status: state.status, utilities: score.utilities, winner: score.winner }
    }
}
