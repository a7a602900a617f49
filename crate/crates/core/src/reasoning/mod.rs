//! Reasoning pipelines: the recursive K-level procedure and six baselines,
//! all orchestrated over a [`DecisionBackend`](crate::gateway::DecisionBackend).

mod decider;
mod parse;
mod pipelines;
mod render;
mod templates;

use serde::{Deserialize, Serialize};

use crate::engine::{Action, EnvSnapshot, GameKind, PrivateInfo, PublicHistory};
use crate::gateway::Sampling;

pub use decider::{LlmDecider, LlmDeciderOptions};
pub use parse::{parse_action, parse_prediction, ParseBounds};
pub use pipelines::{
    cot_decide, direct_decide, k_reasoning, pcot_decide, persona_decide, reflect_decide,
    reflect_update, refine_decide, DecisionInput, KrOptions, KrOutcome, PcotOutcome,
    ReasoningError, RefineOutcome, StepOutcome,
};
pub use render::{player_name, render_action, render_anticipations, render_history, render_state};
pub use templates::{TemplateCatalog, TemplateError, PLACEHOLDERS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Direct,
    #[serde(rename = "CoT")]
    Cot,
    Persona,
    Reflect,
    Refine,
    #[serde(rename = "PCoT")]
    Pcot,
    #[serde(rename = "K-R")]
    KLevel,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Direct,
        Method::Cot,
        Method::Persona,
        Method::Reflect,
        Method::Refine,
        Method::Pcot,
        Method::KLevel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Direct => "Direct",
            Method::Cot => "CoT",
            Method::Persona => "Persona",
            Method::Reflect => "Reflect",
            Method::Refine => "Refine",
            Method::Pcot => "PCoT",
            Method::KLevel => "K-R",
        }
    }

    /// Methods that log opponent predictions.
    pub fn predicts(self) -> bool {
        matches!(self, Method::Pcot | Method::KLevel)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.to_ascii_lowercase().replace(['-', '_', ' '], "");
        match key.as_str() {
            "direct" => Ok(Method::Direct),
            "cot" => Ok(Method::Cot),
            "persona" => Ok(Method::Persona),
            "reflect" | "reflexion" => Ok(Method::Reflect),
            "refine" | "selfrefine" => Ok(Method::Refine),
            "pcot" => Ok(Method::Pcot),
            "kr" | "klevel" | "kreasoning" => Ok(Method::KLevel),
            _ => Err(format!("unknown method `{s}`")),
        }
    }
}

/// Which prompt a backend call renders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Direct,
    Cot,
    Persona,
    Reflect,
    Pcot,
    /// K-level decision conditioned on anticipated opponent actions.
    KrDecide,
    Draft,
    Critique,
    Revise,
    ReflectUpdate,
}

impl Step {
    /// Catalog key of the user-message template.
    pub fn template(self) -> &'static str {
        match self {
            Step::Direct | Step::Persona => "direct",
            Step::Cot => "cot",
            Step::Reflect => "reflect",
            Step::Pcot => "pcot",
            Step::KrDecide => "kr_decide",
            Step::Draft => "draft",
            Step::Critique => "critique",
            Step::Revise => "revise",
            Step::ReflectUpdate => "reflect_update",
        }
    }
}

/// Everything a single backend call is conditioned on.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub game: GameKind,
    pub step: Step,
    /// Agent whose point of view the prompt takes.
    pub perspective: usize,
    pub num_agents: usize,
    /// Agents still in play (the ones that move or get anticipated).
    pub active: Vec<usize>,
    pub round: u32,
    pub max_rounds: u32,
    pub snapshot: EnvSnapshot,
    /// Only ever the perspective agent's own private information.
    pub private: Option<PrivateInfo>,
    pub history: PublicHistory,
    pub anticipations: Vec<(usize, Action)>,
    pub memory: Vec<String>,
    pub draft: Option<String>,
    pub critique: Option<String>,
    pub feedback: Option<String>,
    pub sampling: Sampling,
}

impl PromptContext {
    pub fn new(
        game: GameKind,
        step: Step,
        perspective: usize,
        snapshot: EnvSnapshot,
        history: PublicHistory,
    ) -> Self {
        Self {
            game,
            step,
            perspective,
            num_agents: 0,
            active: Vec::new(),
            round: snapshot.round,
            max_rounds: game.default_max_rounds(),
            snapshot,
            private: None,
            history,
            anticipations: Vec::new(),
            memory: Vec::new(),
            draft: None,
            critique: None,
            feedback: None,
            sampling: Sampling::default(),
        }
    }

    pub fn with_step(&self, step: Step) -> Self {
        Self { step, ..self.clone() }
    }
}
