//! Deterministic stand-ins for a language model.

use super::{BackendError, Completion, CompletionRequest, DecisionBackend, Usage};
use crate::engine::{Action, PrivateInfo, PublicState};
use crate::games::neg::{NegPublic, NegStatus};
use crate::games::pd::{best_response, PdMove, PdState};
use crate::games::sag::SagState;
use crate::reasoning::{parse_action, ParseBounds, PromptContext, Step};

/// A scripted backend: every reply is a pure function of the request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Script {
    /// Same text for every prompt (`const:<text>`).
    Const(String),
    /// Answers 40 to everything (`echo-40`).
    Echo40,
    /// Game-aware level-k heuristic (`kstep`): base-level queries follow the
    /// obvious anchor (previous target, cooperation, ...), queries carrying
    /// anticipated opponent actions best-respond to them.
    KStep,
    /// Every call fails (`fail`).
    Fail,
}

impl Script {
    pub fn parse(id: &str) -> Result<Self, BackendError> {
        if let Some(text) = id.strip_prefix("const:") {
            return Ok(Script::Const(text.to_string()));
        }
        match id {
            "echo-40" => Ok(Script::Echo40),
            "kstep" => Ok(Script::KStep),
            "fail" => Ok(Script::Fail),
            other => Err(BackendError::Config(format!(
                "unknown script `{other}` (expected const:<text>, echo-40, kstep or fail)"
            ))),
        }
    }

    pub fn reply(&self, ctx: &PromptContext) -> Result<String, BackendError> {
        match self {
            Script::Const(text) => Ok(text.clone()),
            Script::Echo40 => Ok("40".into()),
            Script::Fail => Err(BackendError::Script("scripted failure".into())),
            Script::KStep => Ok(kstep(ctx)),
        }
    }
}

pub struct ScriptedBackend {
    script: Script,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        Self { script }
    }
}

impl DecisionBackend for ScriptedBackend {
    fn complete(&mut self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let text = self.script.reply(&request.context)?;
        let usage = Usage::estimate(&request.prompt_text(), &text);
        Ok(Completion { text, usage, failed_attempts: Vec::new() })
    }
}

fn round_clamp(x: f64, lo: i64, hi: i64) -> i64 {
    (x.round() as i64).clamp(lo, hi)
}

fn draft_number(ctx: &PromptContext) -> Option<i64> {
    let bounds = ParseBounds::for_context(ctx);
    parse_action(ctx.draft.as_deref()?, &bounds)?.as_number().map(|v| v as i64)
}

fn kstep(ctx: &PromptContext) -> String {
    match ctx.step {
        Step::Critique => {
            return "The draft leans too heavily on what worked last round; the other players adapt too.".into()
        }
        Step::ReflectUpdate => {
            return "Lesson: the others adjust to the last outcome, so I should stay one step ahead of them.".into()
        }
        _ => {}
    }
    match &ctx.snapshot.public_state {
        PublicState::G08a(s) => {
            let base = s
                .last_target()
                .map(|t| round_clamp(*t.numer() as f64 / *t.denom() as f64, 1, 100))
                .unwrap_or(40);
            g08a_reply(ctx, base)
        }
        PublicState::Sag(s) => sag_reply(ctx, s),
        PublicState::Neg(s) => neg_reply(ctx, s),
        PublicState::Pd(s) => pd_reply(ctx, s),
    }
}

/// Choice closest to 0.8 of the average given the opponents' total.
fn g08a_best_response(opponent_sum: f64, num_agents: usize) -> i64 {
    let m = num_agents as f64;
    round_clamp(0.8 * opponent_sum / (m - 0.8), 1, 100)
}

fn g08a_reply(ctx: &PromptContext, base: i64) -> String {
    match ctx.step {
        Step::KrDecide if !ctx.anticipations.is_empty() => {
            let sum: f64 = ctx
                .anticipations
                .iter()
                .filter_map(|(_, a)| a.as_number())
                .map(|v| v.clamp(1.0, 100.0))
                .sum();
            let choice = g08a_best_response(sum, ctx.anticipations.len() + 1);
            format!("Given the anticipated picks, the best response is {choice}.\nAnswer: {choice}")
        }
        Step::Pcot => {
            let m = ctx.active.len().max(2);
            let choice = g08a_best_response(base as f64 * (m - 1) as f64, m);
            format!("The others will likely stay near {base}.\nPrediction: {base}\nSo I go just below 0.8 of that.\nAnswer: {choice}")
        }
        Step::Revise => {
            let draft = draft_number(ctx).unwrap_or(base);
            let choice = round_clamp(0.8 * draft as f64, 1, 100);
            format!("Taking the feedback, I lower the draft.\nAnswer: {choice}")
        }
        _ => format!("The last target is the natural anchor.\nAnswer: {base}"),
    }
}

fn sag_reply(ctx: &PromptContext, s: &SagState) -> String {
    let Some(me) = s.agents.get(ctx.perspective) else {
        return "Answer: 0".into();
    };
    let balance = me.balance as i64;
    let previous_high = s.auctions.last().and_then(|a| a.bids.iter().filter_map(|b| *b).max());
    let anchor = previous_high.map_or(20, |b| b as i64);
    let bid = match ctx.step {
        Step::KrDecide if !ctx.anticipations.is_empty() => {
            let top = ctx
                .anticipations
                .iter()
                .filter_map(|(_, a)| a.as_number())
                .fold(0.0f64, f64::max) as i64;
            (top + 1).min(balance)
        }
        Step::Pcot => {
            let bid = (anchor + 1).min(balance);
            return format!("Prediction: {anchor}\nI outbid that by one dollar.\nAnswer: {bid}");
        }
        Step::Revise => (draft_number(ctx).unwrap_or(anchor) + 5).min(balance),
        _ if me.health <= 5 => (anchor + 10).min(balance),
        _ => anchor.min(balance),
    };
    format!("My health is {} and I have ${balance}.\nAnswer: {}", me.health, bid.max(0))
}

fn neg_reply(ctx: &PromptContext, s: &NegPublic) -> String {
    let values = match &ctx.private {
        Some(PrivateInfo::NegUtilities(u)) => *u,
        None => [5, 5, 5],
    };
    let me = ctx.perspective.min(1);
    let total: u32 = s.pool.iter().zip(values).map(|(c, v)| c * v).sum();
    let prefix = if ctx.step == Step::Pcot { "Prediction: propose\n" } else { "" };
    if s.status == NegStatus::Open {
        if let Some((by, alloc)) = &s.pending {
            let last_chance = s.moves + 2 >= s.max_moves;
            if *by != me && (2 * alloc.utility(me, values) >= total || last_chance) {
                return format!("{prefix}The offer is good enough.\n```json\n{{\"action\": \"accept\"}}\n```");
            }
        }
    }
    let best = values.iter().copied().max().unwrap_or(0);
    let share: Vec<u32> = s
        .pool
        .iter()
        .zip(values)
        .map(|(&count, v)| if v == best { count } else { count / 2 })
        .collect();
    format!(
        "{prefix}I keep what I value most and split the rest.\n```json\n{{\"action\": \"propose\", \"my_share\": [{}, {}, {}]}}\n```",
        share[0], share[1], share[2]
    )
}

fn pd_reply(ctx: &PromptContext, s: &PdState) -> String {
    let choice = match ctx.step {
        Step::KrDecide => match ctx.anticipations.first() {
            Some((_, Action::Pd(m))) => best_response(*m, &s.matrix),
            _ => PdMove::Cooperate,
        },
        Step::Pcot => {
            let m = best_response(PdMove::Cooperate, &s.matrix);
            return format!("Prediction: C\n```json\n{{\"action\": \"{}\"}}\n```", pd_letter(m));
        }
        Step::Revise => best_response(PdMove::Cooperate, &s.matrix),
        _ => PdMove::Cooperate,
    };
    format!("```json\n{{\"action\": \"{}\"}}\n```", pd_letter(choice))
}

fn pd_letter(m: PdMove) -> &'static str {
    match m {
        PdMove::Cooperate => "C",
        PdMove::Defect => "D",
    }
}
