//! The reasoning pipelines as plain functions over a backend.

use std::collections::HashMap;

use thiserror::Error;

use super::parse::{parse_action, parse_prediction, prediction_pd, prediction_value, ParseBounds};
use super::{PromptContext, Step, TemplateCatalog, TemplateError};
use crate::engine::{Action, EnvSnapshot, GameKind, PrivateInfo, PublicHistory};
use crate::gateway::{BackendError, CompletionRequest, DecisionBackend, Sampling};
use crate::games::pd::PdMove;

#[derive(Debug, Error)]
pub enum ReasoningError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// The decision problem one agent faces in one round.
#[derive(Debug, Clone)]
pub struct DecisionInput {
    pub game: GameKind,
    pub agent: usize,
    pub num_agents: usize,
    /// Agents still in play; anticipation covers these, minus the perspective.
    pub active: Vec<usize>,
    pub round: u32,
    pub max_rounds: u32,
    pub snapshot: EnvSnapshot,
    pub private: Option<PrivateInfo>,
    pub histories: Vec<PublicHistory>,
    pub sampling: Sampling,
}

impl DecisionInput {
    /// Context from `perspective`'s point of view. Private information is only
    /// ever attached for the deciding agent itself.
    pub fn context(&self, step: Step, perspective: usize) -> PromptContext {
        let history = self
            .histories
            .get(perspective)
            .cloned()
            .unwrap_or(PublicHistory { agent: perspective, entries: Vec::new() });
        let mut ctx = PromptContext::new(self.game, step, perspective, self.snapshot.clone(), history);
        ctx.num_agents = self.num_agents;
        ctx.active = self.active.clone();
        ctx.round = self.round;
        ctx.max_rounds = self.max_rounds;
        ctx.sampling = self.sampling;
        if perspective == self.agent {
            ctx.private = self.private.clone();
        }
        ctx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub action: Option<Action>,
    pub text: String,
}

fn call(
    ctx: &PromptContext,
    backend: &mut dyn DecisionBackend,
    catalog: &TemplateCatalog,
) -> Result<String, ReasoningError> {
    let messages = catalog.render(ctx)?;
    let request = CompletionRequest { messages, context: ctx.clone() };
    Ok(backend.complete(&request)?.text)
}

fn decide_step(
    ctx: &PromptContext,
    backend: &mut dyn DecisionBackend,
    catalog: &TemplateCatalog,
) -> Result<StepOutcome, ReasoningError> {
    let text = call(ctx, backend, catalog)?;
    Ok(StepOutcome { action: parse_action(&text, &ParseBounds::for_context(ctx)), text })
}

pub fn direct_decide(
    input: &DecisionInput,
    backend: &mut dyn DecisionBackend,
    catalog: &TemplateCatalog,
) -> Result<StepOutcome, ReasoningError> {
    decide_step(&input.context(Step::Direct, input.agent), backend, catalog)
}

pub fn cot_decide(
    input: &DecisionInput,
    backend: &mut dyn DecisionBackend,
    catalog: &TemplateCatalog,
) -> Result<StepOutcome, ReasoningError> {
    decide_step(&input.context(Step::Cot, input.agent), backend, catalog)
}

pub fn persona_decide(
    input: &DecisionInput,
    backend: &mut dyn DecisionBackend,
    catalog: &TemplateCatalog,
) -> Result<StepOutcome, ReasoningError> {
    decide_step(&input.context(Step::Persona, input.agent), backend, catalog)
}

/// Decision with the agent's reflection memory injected.
pub fn reflect_decide(
    input: &DecisionInput,
    memory: &[String],
    backend: &mut dyn DecisionBackend,
    catalog: &TemplateCatalog,
) -> Result<StepOutcome, ReasoningError> {
    let mut ctx = input.context(Step::Reflect, input.agent);
    ctx.memory = memory.to_vec();
    decide_step(&ctx, backend, catalog)
}

/// One summarising call after a finished round; the lesson is appended to
/// `memory` only when the call succeeds.
pub fn reflect_update(
    ctx: &PromptContext,
    memory: &mut Vec<String>,
    backend: &mut dyn DecisionBackend,
    catalog: &TemplateCatalog,
) -> Result<(), ReasoningError> {
    let mut ctx = ctx.with_step(Step::ReflectUpdate);
    ctx.memory = memory.clone();
    let lesson = call(&ctx, backend, catalog)?;
    memory.push(lesson.trim().to_string());
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcotOutcome {
    pub action: Option<Action>,
    /// Raw prediction text, `None` if the reply had no prediction line.
    pub prediction: Option<String>,
    /// Numeric prediction: group average (G0.8A) or highest opponent bid (SAG).
    pub summary: Option<f64>,
    /// Predicted opponent move (PD).
    pub opponent_move: Option<PdMove>,
    pub text: String,
}

pub fn pcot_decide(
    input: &DecisionInput,
    backend: &mut dyn DecisionBackend,
    catalog: &TemplateCatalog,
) -> Result<PcotOutcome, ReasoningError> {
    let ctx = input.context(Step::Pcot, input.agent);
    let text = call(&ctx, backend, catalog)?;
    let (prediction, rest) = parse_prediction(&text);
    let action = parse_action(rest, &ParseBounds::for_context(&ctx));
    let summary = match input.game {
        GameKind::G08a | GameKind::Sag => prediction.as_deref().and_then(prediction_value),
        _ => None,
    };
    let opponent_move = match input.game {
        GameKind::Pd => prediction.as_deref().and_then(prediction_pd),
        _ => None,
    };
    Ok(PcotOutcome { action, prediction, summary, opponent_move, text })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub draft: Option<Action>,
    pub action: Option<Action>,
    /// Set when critique or revision failed and the draft was kept.
    pub fallback: Option<String>,
}

/// Draft, critique, revise: three calls. A failing critique or revision
/// keeps the draft.
pub fn refine_decide(
    input: &DecisionInput,
    backend: &mut dyn DecisionBackend,
    catalog: &TemplateCatalog,
) -> Result<RefineOutcome, ReasoningError> {
    let ctx = input.context(Step::Draft, input.agent);
    let draft_text = call(&ctx, backend, catalog)?;
    let bounds = ParseBounds::for_context(&ctx);
    let draft = parse_action(&draft_text, &bounds);

    let mut critique_ctx = ctx.with_step(Step::Critique);
    critique_ctx.draft = Some(draft_text.clone());
    let critique = match call(&critique_ctx, backend, catalog) {
        Ok(t) => t,
        Err(e) => {
            return Ok(RefineOutcome {
                action: draft.clone(),
                draft,
                fallback: Some(format!("critique failed: {e}")),
            })
        }
    };

    let mut revise_ctx = critique_ctx.with_step(Step::Revise);
    revise_ctx.critique = Some(critique);
    let revised = call(&revise_ctx, backend, catalog).map(|t| parse_action(&t, &bounds));
    Ok(match revised {
        Ok(Some(action)) => RefineOutcome { draft, action: Some(action), fallback: None },
        Ok(None) => RefineOutcome {
            action: draft.clone(),
            draft,
            fallback: Some("revision had no parseable action".into()),
        },
        Err(e) => RefineOutcome {
            action: draft.clone(),
            draft,
            fallback: Some(format!("revision failed: {e}")),
        },
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KrOptions {
    /// Reuse an agent's level-m anticipation within one decision. Off by
    /// default: the plain recursion recomputes every anticipation.
    pub memoize: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrOutcome {
    pub action: Option<Action>,
    /// Level-(k-1) anticipated action of each opponent that produced one.
    pub anticipations: Vec<(usize, Action)>,
    pub text: String,
    pub calls: u32,
}

struct Recursion<'a> {
    input: &'a DecisionInput,
    backend: &'a mut dyn DecisionBackend,
    catalog: &'a TemplateCatalog,
    memo: Option<HashMap<(usize, u32), Option<Action>>>,
    calls: u32,
}

impl Recursion<'_> {
    /// Level-`level` reasoning from `who`'s perspective.
    fn level(
        &mut self,
        who: usize,
        level: u32,
    ) -> Result<(Option<Action>, Vec<(usize, Action)>, String), ReasoningError> {
        if level <= 1 {
            let ctx = self.input.context(Step::Direct, who);
            self.calls += 1;
            let out = decide_step(&ctx, self.backend, self.catalog)?;
            return Ok((out.action, Vec::new(), out.text));
        }
        let mut anticipations = Vec::new();
        let others: Vec<usize> = self.input.active.iter().copied().filter(|&j| j != who).collect();
        for j in others {
            if let Some(a) = self.anticipate(j, level - 1)? {
                anticipations.push((j, a));
            }
        }
        let mut ctx = self.input.context(Step::KrDecide, who);
        ctx.anticipations = anticipations.clone();
        self.calls += 1;
        let out = decide_step(&ctx, self.backend, self.catalog)?;
        Ok((out.action, anticipations, out.text))
    }

    fn anticipate(&mut self, j: usize, level: u32) -> Result<Option<Action>, ReasoningError> {
        if let Some(hit) = self.memo.as_ref().and_then(|m| m.get(&(j, level))) {
            return Ok(hit.clone());
        }
        let (action, _, _) = self.level(j, level)?;
        if let Some(m) = self.memo.as_mut() {
            m.insert((j, level), action.clone());
        }
        Ok(action)
    }
}

/// K-level reasoning: at k=1 a single call identical to Direct; otherwise
/// every other active agent is simulated at level k-1 from its own public
/// view, and one final call conditions on those anticipated actions.
pub fn k_reasoning(
    input: &DecisionInput,
    k: u32,
    options: KrOptions,
    backend: &mut dyn DecisionBackend,
    catalog: &TemplateCatalog,
) -> Result<KrOutcome, ReasoningError> {
    let mut rec = Recursion {
        input,
        backend,
        catalog,
        memo: options.memoize.then(HashMap::new),
        calls: 0,
    };
    let (action, anticipations, text) = rec.level(input.agent, k.max(1))?;
    Ok(KrOutcome { action, anticipations, text, calls: rec.calls })
}
