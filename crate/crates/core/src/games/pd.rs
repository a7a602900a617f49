//! Iterated two-player Prisoner's Dilemma.

use serde::{Deserialize, Serialize};

use super::GameError;
use crate::engine::{
    Action, EnvSnapshot, FlagKind, GameEngine, GameKind, MatchRecord, Outcome, PublicState,
    Sanitized,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PdMove {
    #[serde(rename = "C", alias = "cooperate", alias = "Cooperate")]
    Cooperate,
    #[serde(rename = "D", alias = "defect", alias = "Defect")]
    Defect,
}

impl PdMove {
    pub fn index(self) -> usize {
        match self {
            PdMove::Cooperate => 0,
            PdMove::Defect => 1,
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            PdMove::Cooperate => "cooperate",
            PdMove::Defect => "defect",
        }
    }
}

/// Payoffs: temptation, reward, punishment, sucker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdMatrix {
    pub t: i64,
    pub r: i64,
    pub p: i64,
    pub s: i64,
}

impl Default for PdMatrix {
    fn default() -> Self {
        Self { t: 5, r: 3, p: 1, s: 0 }
    }
}

impl PdMatrix {
    pub fn validate(&self) -> Result<(), GameError> {
        let PdMatrix { t, r, p, s } = *self;
        if !(t > r && r > p && p > s) {
            return Err(GameError::BadMatrix(format!("need T > R > P > S, got {t}, {r}, {p}, {s}")));
        }
        if 2 * r <= t + s {
            return Err(GameError::BadMatrix(format!("need 2R > T + S, got 2*{r} <= {t} + {s}")));
        }
        Ok(())
    }
}

pub fn pd_payoff(a1: PdMove, a2: PdMove, m: &PdMatrix) -> (i64, i64) {
    use PdMove::*;
    match (a1, a2) {
        (Cooperate, Cooperate) => (m.r, m.r),
        (Cooperate, Defect) => (m.s, m.t),
        (Defect, Cooperate) => (m.t, m.s),
        (Defect, Defect) => (m.p, m.p),
    }
}

/// Move maximizing own payoff against an anticipated opponent move.
pub fn best_response(opponent: PdMove, m: &PdMatrix) -> PdMove {
    let (c, _) = pd_payoff(PdMove::Cooperate, opponent, m);
    let (d, _) = pd_payoff(PdMove::Defect, opponent, m);
    if d > c {
        PdMove::Defect
    } else {
        PdMove::Cooperate
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdState {
    /// Next round to play.
    pub round: u32,
    pub history: Vec<[PdMove; 2]>,
    pub payoffs: [i64; 2],
    pub matrix: PdMatrix,
}

impl PdState {
    pub fn new(matrix: PdMatrix) -> Self {
        Self { round: 1, history: Vec::new(), payoffs: [0, 0], matrix }
    }

    pub fn tally(&self) -> [[u32; 2]; 2] {
        let mut t = [[0; 2]; 2];
        for [a, b] in &self.history {
            t[a.index()][b.index()] += 1;
        }
        t
    }
}

pub fn pd_step(state: &PdState, moves: [PdMove; 2]) -> PdState {
    let (p1, p2) = pd_payoff(moves[0], moves[1], &state.matrix);
    let mut next = state.clone();
    next.payoffs[0] += p1;
    next.payoffs[1] += p2;
    next.history.push(moves);
    next.round += 1;
    next
}

/// Outcome counts over every round of every record, `[agent0 move][agent1 move]`.
pub fn pd_tally(records: &[MatchRecord]) -> [[u32; 2]; 2] {
    let mut total = [[0; 2]; 2];
    for record in records {
        if let Outcome::Pd { tally, .. } = &record.outcome {
            for a in 0..2 {
                for b in 0..2 {
                    total[a][b] += tally[a][b];
                }
            }
        }
    }
    total
}

pub struct PdEngine {
    state: PdState,
}

impl PdEngine {
    pub fn new(matrix: PdMatrix) -> Self {
        Self { state: PdState::new(matrix) }
    }
}

impl GameEngine for PdEngine {
    fn kind(&self) -> GameKind {
        GameKind::Pd
    }

    fn round(&self) -> u32 {
        self.state.round
    }

    fn movers(&self) -> Vec<usize> {
        vec![0, 1]
    }

    fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            game: GameKind::Pd,
            round: self.state.round,
            public_state: PublicState::Pd(self.state.clone()),
        }
    }

    fn sanitize(&self, _agent: usize, proposed: Option<Action>) -> Sanitized {
        match proposed {
            Some(Action::Pd(m)) => Sanitized::ok(Action::Pd(m)),
            other => Sanitized::flagged(
                Action::Pd(PdMove::Cooperate),
                FlagKind::Fallback,
                format!("no usable move ({other:?}); cooperating"),
            ),
        }
    }

    fn apply(&mut self, joint: &[(usize, Action)]) -> Result<(), GameError> {
        let mut moves = [None; 2];
        for (agent, action) in joint {
            let slot = moves.get_mut(*agent).ok_or(GameError::NotAllowed(*agent))?;
            match action {
                Action::Pd(m) => *slot = Some(*m),
                other => return Err(GameError::WrongActionKind(format!("{other:?}"))),
            }
        }
        let [Some(a), Some(b)] = moves else {
            return Err(GameError::ActionCount { expected: 2, got: joint.len() });
        };
        self.state = pd_step(&self.state, [a, b]);
        Ok(())
    }

    fn is_over(&self) -> bool {
        false
    }

    fn outcome(&self, _max_rounds: u32) -> Outcome {
        Outcome::Pd { payoffs: self.state.payoffs, tally: self.state.tally() }
    }
}
