use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::pipelines::{self, DecisionInput, KrOptions, ReasoningError};
use super::render::{player_name, ratio_text, render_action};
use super::{Method, PromptContext, Step, TemplateCatalog};
use crate::engine::{
    Action, Decider, DecideError, Decision, DecisionView, FlagKind, GameKind, Prediction,
    PublicHistory, PublicState, RoundFeedback,
};
use crate::gateway::{Gateway, Sampling, TranscriptRecord, UsageTally};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlmDeciderOptions {
    pub k: u32,
    pub kr: KrOptions,
    pub sampling: Sampling,
}

impl Default for LlmDeciderOptions {
    fn default() -> Self {
        Self { k: 2, kr: KrOptions::default(), sampling: Sampling::default() }
    }
}

/// An agent driven by one reasoning method over a metered backend.
pub struct LlmDecider {
    method: Method,
    options: LlmDeciderOptions,
    gateway: Gateway,
    catalog: Arc<TemplateCatalog>,
    memory: Vec<String>,
}

impl LlmDecider {
    pub fn new(
        method: Method,
        options: LlmDeciderOptions,
        gateway: Gateway,
        catalog: Arc<TemplateCatalog>,
    ) -> Self {
        Self { method, options, gateway, catalog, memory: Vec::new() }
    }

    pub fn memory(&self) -> &[String] {
        &self.memory
    }

    fn input(&self, view: &DecisionView<'_>) -> DecisionInput {
        let active = match view.snapshot.game {
            // turn-based: the opponent is anticipated even when it is not its move
            GameKind::Neg => (0..view.agents.len()).collect(),
            _ => view.movers.to_vec(),
        };
        DecisionInput {
            game: view.snapshot.game,
            agent: view.agent.index,
            num_agents: view.agents.len(),
            active,
            round: view.round,
            max_rounds: view.max_rounds,
            snapshot: view.snapshot.clone(),
            private: view.private.cloned(),
            histories: view.histories.to_vec(),
            sampling: self.options.sampling,
        }
    }

    fn run(&mut self, input: &DecisionInput) -> Result<Decision, ReasoningError> {
        let backend = &mut self.gateway;
        let catalog = self.catalog.as_ref();
        let mut decision = Decision::default();
        match self.method {
            Method::Direct => decision.action = pipelines::direct_decide(input, backend, catalog)?.action,
            Method::Cot => decision.action = pipelines::cot_decide(input, backend, catalog)?.action,
            Method::Persona => {
                decision.action = pipelines::persona_decide(input, backend, catalog)?.action
            }
            Method::Reflect => {
                decision.action =
                    pipelines::reflect_decide(input, &self.memory, backend, catalog)?.action
            }
            Method::Refine => {
                let out = pipelines::refine_decide(input, backend, catalog)?;
                decision.action = out.action;
                decision.initial_action = out.draft;
                if let Some(why) = out.fallback {
                    decision.flags.push((FlagKind::RevisionFailed, why));
                }
            }
            Method::Pcot => {
                let out = pipelines::pcot_decide(input, backend, catalog)?;
                let opponents = match out.opponent_move {
                    Some(m) => opponents_of(input).into_iter().map(|j| (j, Action::Pd(m))).collect(),
                    None => Vec::new(),
                };
                let usable = match input.game {
                    GameKind::G08a | GameKind::Sag => out.summary.is_some(),
                    GameKind::Pd => out.opponent_move.is_some(),
                    GameKind::Neg => out.prediction.is_some(),
                };
                if !usable {
                    decision.flags.push((
                        FlagKind::PredictionMissing,
                        "reply had no usable `Prediction:` line".into(),
                    ));
                }
                if out.summary.is_some() || !opponents.is_empty() {
                    decision.prediction = Some(Prediction { opponents, summary: out.summary });
                }
                decision.action = out.action;
            }
            Method::KLevel => {
                let out = pipelines::k_reasoning(input, self.options.k, self.options.kr, backend, catalog)?;
                if !out.anticipations.is_empty() {
                    let summary = prediction_summary(input.game, &out.anticipations, out.action.as_ref());
                    decision.prediction = Some(Prediction { opponents: out.anticipations, summary });
                }
                decision.action = out.action;
            }
        }
        Ok(decision)
    }
}

fn opponents_of(input: &DecisionInput) -> Vec<usize> {
    (0..input.num_agents).filter(|&j| j != input.agent).collect()
}

/// G0.8A: predicted group average (anticipations plus own choice).
/// SAG: highest anticipated opponent bid.
fn prediction_summary(game: GameKind, anticipations: &[(usize, Action)], own: Option<&Action>) -> Option<f64> {
    match game {
        GameKind::G08a => {
            let values: Vec<f64> = anticipations
                .iter()
                .map(|(_, a)| a)
                .chain(own)
                .filter_map(Action::as_number)
                .map(|v| v.clamp(1.0, 100.0))
                .collect();
            (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
        }
        GameKind::Sag => anticipations
            .iter()
            .filter_map(|(_, a)| a.as_number())
            .map(|v| v.max(0.0))
            .reduce(f64::max),
        _ => None,
    }
}

/// Plain-language account of a resolved round for the reflection step.
fn round_summary(feedback: &RoundFeedback<'_>) -> String {
    let me = feedback.agent.index;
    let mine = feedback.log.actions.iter().find(|a| a.agent.index == me).map(|a| &a.action);
    let mut lines = Vec::new();
    if let Some(a) = mine {
        lines.push(format!("You chose to {}.", render_action(a)));
    }
    match &feedback.log.after.public_state {
        PublicState::G08a(s) => {
            if let Some(r) = s.past_rounds.last() {
                let won = r.winners.contains(&me);
                lines.push(format!(
                    "The average was {} and the target {}. You {} this round.",
                    ratio_text(r.average),
                    ratio_text(r.target),
                    if won { "won" } else { "did not win" }
                ));
            }
        }
        PublicState::Sag(s) => {
            if let Some(a) = s.auctions.last() {
                match a.winner {
                    Some(w) if w == me => lines.push(format!("You won the water for ${}.", a.price)),
                    Some(w) => lines.push(format!("{} won the water for ${}.", player_name(w), a.price)),
                    None => lines.push("The highest bid was tied; nobody got water.".into()),
                }
            }
            if let Some(agent) = s.agents.get(me) {
                lines.push(format!("Your health is now {} and your balance ${}.", agent.health, agent.balance));
            }
        }
        PublicState::Neg(s) => {
            lines.push(format!("The negotiation is now {:?}.", s.status).to_lowercase());
        }
        PublicState::Pd(s) => {
            if let Some(moves) = s.history.last() {
                let other = 1 - me.min(1);
                lines.push(format!(
                    "{} chose {}. Your total is now {} points.",
                    player_name(other),
                    moves[other].describe(),
                    s.payoffs[me.min(1)]
                ));
            }
        }
    }
    lines.join(" ")
}

impl Decider for LlmDecider {
    fn decide(&mut self, view: &DecisionView<'_>, _rng: &mut ChaCha8Rng) -> Result<Decision, DecideError> {
        let input = self.input(view);
        self.run(&input).map_err(|e| DecideError(e.to_string()))
    }

    fn end_of_round(&mut self, feedback: &RoundFeedback<'_>) -> Vec<(FlagKind, String)> {
        if self.method != Method::Reflect {
            return Vec::new();
        }
        let acted = feedback.log.actions.iter().any(|a| a.agent.index == feedback.agent.index);
        if !acted {
            return Vec::new();
        }
        let mut ctx = PromptContext::new(
            feedback.before.game,
            Step::ReflectUpdate,
            feedback.agent.index,
            feedback.log.after.clone(),
            PublicHistory { agent: feedback.agent.index, entries: Vec::new() },
        );
        ctx.num_agents = feedback.agents.len();
        ctx.round = feedback.log.round;
        ctx.max_rounds = feedback.max_rounds;
        ctx.private = feedback.private.cloned();
        ctx.sampling = self.options.sampling;
        ctx.feedback = Some(round_summary(feedback));
        match pipelines::reflect_update(&ctx, &mut self.memory, &mut self.gateway, &self.catalog) {
            Ok(()) => Vec::new(),
            Err(e) => vec![(FlagKind::ReflectionFailed, e.to_string())],
        }
    }

    fn usage(&self) -> UsageTally {
        self.gateway.tally()
    }

    fn transcript(&self) -> &[TranscriptRecord] {
        self.gateway.transcript()
    }
}
