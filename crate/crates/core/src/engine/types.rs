use serde::{Deserialize, Serialize};

use crate::games::g08a::G08aState;
use crate::games::neg::{NegMove, NegPublic};
use crate::games::pd::{PdMove, PdState};
use crate::games::sag::SagState;
use crate::games::GameParams;
use crate::gateway::{Sampling, UsageTally};
use crate::reasoning::Method;
use crate::strategies::StrategySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GameKind {
    #[serde(rename = "G08A")]
    G08a,
    #[serde(rename = "SAG")]
    Sag,
    #[serde(rename = "NEG")]
    Neg,
    #[serde(rename = "PD")]
    Pd,
}

impl GameKind {
    pub fn name(self) -> &'static str {
        match self {
            GameKind::G08a => "G08A",
            GameKind::Sag => "SAG",
            GameKind::Neg => "NEG",
            GameKind::Pd => "PD",
        }
    }

    /// Directory name used by the template catalog.
    pub fn slug(self) -> &'static str {
        match self {
            GameKind::G08a => "g08a",
            GameKind::Sag => "sag",
            GameKind::Neg => "neg",
            GameKind::Pd => "pd",
        }
    }

    /// Default round cap. NEG counts single moves, so its cap is the turn cap.
    pub fn default_max_rounds(self) -> u32 {
        match self {
            GameKind::Neg => 20,
            _ => 10,
        }
    }
}

impl std::fmt::Display for GameKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for GameKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace(['.', '_', '-'], "").as_str() {
            "G08A" => Ok(GameKind::G08a),
            "SAG" => Ok(GameKind::Sag),
            "NEG" => Ok(GameKind::Neg),
            "PD" => Ok(GameKind::Pd),
            other => Err(format!("unknown game kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentId {
    pub index: usize,
    pub label: String,
}

impl AgentId {
    pub fn new(index: usize, label: impl Into<String>) -> Self {
        Self { index, label: label.into() }
    }
}

/// A game action. Numeric variants carry the raw value as proposed by the
/// decider; the engine clamps and validates before applying it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Action {
    Choice(i64),
    Bid(i64),
    Neg(NegMove),
    Pd(PdMove),
}

impl Action {
    /// Numeric view used by deviation metrics.
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Action::Choice(v) | Action::Bid(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Action::Choice(v) => format!("{v}"),
            Action::Bid(v) => format!("${v}"),
            Action::Neg(m) => m.describe(),
            Action::Pd(m) => m.describe().to_string(),
        }
    }
}

/// Opponent prediction logged by predicting methods (PCoT, K-R).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Per-opponent anticipated actions (K-R only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub opponents: Vec<(usize, Action)>,
    /// Predicted group average (G08A) or highest opponent bid (SAG).
    pub summary: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub agent: AgentId,
    pub round: u32,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<Prediction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_action: Option<Action>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "game", content = "state")]
pub enum PublicState {
    #[serde(rename = "G08A")]
    G08a(G08aState),
    #[serde(rename = "SAG")]
    Sag(SagState),
    #[serde(rename = "NEG")]
    Neg(NegPublic),
    #[serde(rename = "PD")]
    Pd(PdState),
}

/// Observer-specific information that must never appear in a public state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivateInfo {
    NegUtilities([u32; 3]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSnapshot {
    pub game: GameKind,
    pub round: u32,
    pub public_state: PublicState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub snapshot: EnvSnapshot,
    /// `None` when the agent did not act that round (eliminated, or not its turn).
    pub action: Option<Action>,
}

/// One agent's public history: the environment it faced each completed
/// round paired with what it did.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PublicHistory {
    pub agent: usize,
    pub entries: Vec<HistoryEntry>,
}

impl PublicHistory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn actions(&self) -> impl Iterator<Item = (u32, &Action)> {
        self.entries
            .iter()
            .filter_map(|e| e.action.as_ref().map(|a| (e.snapshot.round, a)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodSpec {
    /// Reasoning pipeline over a decision backend. `backend` is a stable label
    /// (script id or model name) that does not change between record and replay.
    Llm {
        method: Method,
        #[serde(default = "default_k")]
        k: u32,
        backend: String,
    },
    Programmatic { strategy: StrategySpec },
}

fn default_k() -> u32 {
    2
}

impl MethodSpec {
    pub fn label(&self) -> String {
        match self {
            MethodSpec::Llm { method: Method::KLevel, k, .. } => format!("K-R[k={k}]"),
            MethodSpec::Llm { method, .. } => method.name().to_string(),
            MethodSpec::Programmatic { strategy } => strategy.kind.name().to_string(),
        }
    }

    pub fn method(&self) -> Option<Method> {
        match self {
            MethodSpec::Llm { method, .. } => Some(*method),
            MethodSpec::Programmatic { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub label: String,
    #[serde(default)]
    pub player: bool,
    pub method: MethodSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub game: GameKind,
    pub num_agents: usize,
    pub max_rounds: u32,
    pub seed: u64,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub params: GameParams,
}

impl MatchConfig {
    pub fn new(game: GameKind, seed: u64, agents: Vec<AgentSpec>) -> Self {
        Self {
            game,
            num_agents: agents.len(),
            max_rounds: game.default_max_rounds(),
            seed,
            agents,
            sampling: Sampling::default(),
            params: GameParams::default(),
        }
    }

    pub fn agent_ids(&self) -> Vec<AgentId> {
        self.agents
            .iter()
            .enumerate()
            .map(|(i, a)| AgentId::new(i, a.label.clone()))
            .collect()
    }

    pub fn player_index(&self) -> Option<usize> {
        self.agents.iter().position(|a| a.player)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.num_agents < 2 {
            return Err("a match needs at least two agents".into());
        }
        if self.agents.len() != self.num_agents {
            return Err(format!(
                "num_agents is {} but {} agent specs were given",
                self.num_agents,
                self.agents.len()
            ));
        }
        if self.max_rounds < 1 {
            return Err("max_rounds must be at least 1".into());
        }
        let players = self.agents.iter().filter(|a| a.player).count();
        if players > 1 {
            return Err(format!("exactly one player expected, found {players}"));
        }
        if matches!(self.game, GameKind::Neg | GameKind::Pd) && self.num_agents != 2 {
            return Err(format!("{} is a two-agent game", self.game));
        }
        self.params.validate(self.game).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    /// Unparseable or invalid action replaced by the per-game fallback.
    Fallback,
    /// Numeric action clamped into the legal range.
    Clamped,
    PredictionMissing,
    RevisionFailed,
    ReflectionFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundFlag {
    pub agent: usize,
    pub kind: FlagKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: u32,
    pub actions: Vec<ActionRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<RoundFlag>,
    /// Environment after the joint action was applied.
    pub after: EnvSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "game", rename_all = "snake_case")]
pub enum Outcome {
    #[serde(rename = "G08A")]
    G08a { scores: Vec<u32> },
    #[serde(rename = "SAG")]
    Sag {
        survival: Vec<u32>,
        eliminated_on: Vec<Option<u32>>,
    },
    #[serde(rename = "NEG")]
    Neg {
        status: crate::games::neg::NegStatus,
        utilities: [u32; 2],
        winner: Option<usize>,
    },
    #[serde(rename = "PD")]
    Pd {
        payoffs: [i64; 2],
        /// `tally[a][b]`: rounds where agent 0 played `a` and agent 1 played `b` (0 = C, 1 = D).
        tally: [[u32; 2]; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub config: MatchConfig,
    pub agents: Vec<AgentId>,
    pub initial: EnvSnapshot,
    pub rounds: Vec<RoundLog>,
    pub outcome: Outcome,
    pub usage: Vec<UsageTally>,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort_reason: Option<String>,
}

impl MatchRecord {
    /// Snapshot the agents faced before `round` (1-based).
    pub fn snapshot_before(&self, round: u32) -> Option<&EnvSnapshot> {
        match round {
            0 => None,
            1 => Some(&self.initial),
            r => self.rounds.get(r as usize - 2).map(|l| &l.after),
        }
    }

    pub fn total_usage(&self) -> UsageTally {
        self.usage.iter().fold(UsageTally::default(), |acc, u| acc.merged(u))
    }

    /// Canonical serialization used for determinism checks.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("match records always serialize")
    }
}
