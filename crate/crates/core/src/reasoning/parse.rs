//! Extraction of actions and predictions from backend replies.

use serde_json::Value;

use super::PromptContext;
use crate::engine::{Action, GameKind, PublicState};
use crate::games::neg::{Allocation, NegMove};
use crate::games::pd::PdMove;

/// What a legal action looks like for the agent being parsed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseBounds {
    pub game: GameKind,
    pub agent: usize,
    pub min: i64,
    pub max: i64,
    pub pool: [u32; 3],
}

impl ParseBounds {
    pub fn for_context(ctx: &PromptContext) -> Self {
        let mut b = ParseBounds { game: ctx.game, agent: ctx.perspective, min: 1, max: 100, pool: [0; 3] };
        match &ctx.snapshot.public_state {
            PublicState::Sag(s) => {
                b.min = 0;
                b.max = s.agents.get(ctx.perspective).map_or(0, |a| a.balance as i64);
            }
            PublicState::Neg(s) => b.pool = s.pool,
            _ => {}
        }
        b
    }
}

/// Decimal numbers in reading order.
fn numbers(text: &str) -> Vec<f64> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            // a minus sign counts only when it is not a range dash ("1-100")
            let signed = i > 0
                && bytes[i - 1] == b'-'
                && (i == 1 || !bytes[i - 2].is_ascii_alphanumeric());
            let start = if signed { i - 1 } else { i };
            let mut j = i;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            if j + 1 < bytes.len() && bytes[j] == b'.' && bytes[j + 1].is_ascii_digit() {
                j += 1;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
            }
            if let Ok(v) = text[start..j].parse::<f64>() {
                out.push(v);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    out
}

fn after_last_marker<'a>(text: &'a str, marker: &str) -> &'a str {
    match text.to_ascii_lowercase().rfind(marker) {
        Some(pos) => &text[pos + marker.len()..],
        None => text,
    }
}

/// Last in-range number, rounded; the last number of all if none is in range.
fn parse_number(text: &str, min: i64, max: i64) -> Option<i64> {
    let scope = after_last_marker(text, "answer:");
    let nums: Vec<i64> = numbers(scope).into_iter().map(|v| v.round() as i64).collect();
    nums.iter().rev().find(|v| (min..=max).contains(*v)).or(nums.last()).copied()
}

fn json_block(text: &str) -> Option<Value> {
    if let Some(pos) = text.rfind("```json") {
        let body = &text[pos + 7..];
        let body = &body[..body.find("```").unwrap_or(body.len())];
        if let Ok(v) = serde_json::from_str(body.trim()) {
            return Some(v);
        }
    }
    let end = text.rfind('}')?;
    let mut depth = 0i32;
    for (i, ch) in text[..=end].char_indices().rev() {
        match ch {
            '}' => depth += 1,
            '{' => {
                depth -= 1;
                if depth == 0 {
                    return serde_json::from_str(&text[i..=end]).ok();
                }
            }
            _ => {}
        }
    }
    None
}

fn normalise(s: &str) -> String {
    s.trim().to_ascii_lowercase().replace([' ', '-'], "_")
}

fn parse_pd_token(s: &str) -> Option<PdMove> {
    match normalise(s).trim_matches(|c: char| !c.is_ascii_alphabetic()) {
        "c" | "cooperate" => Some(PdMove::Cooperate),
        "d" | "defect" => Some(PdMove::Defect),
        _ => None,
    }
}

fn parse_neg(value: &Value, agent: usize, pool: [u32; 3]) -> Option<NegMove> {
    let kind = normalise(value.get("action")?.as_str()?);
    match kind.as_str() {
        "message" => Some(NegMove::Message {
            text: value.get("text").and_then(Value::as_str).unwrap_or_default().to_string(),
        }),
        "propose" => {
            let share = value.get("my_share")?.as_array()?;
            if share.len() != 3 {
                return None;
            }
            let mut mine = [0u32; 3];
            for (slot, v) in mine.iter_mut().zip(share) {
                *slot = u32::try_from(v.as_u64()?).ok()?;
            }
            Allocation::from_share(agent, mine, pool).map(|allocation| NegMove::Propose { allocation })
        }
        "accept" => Some(NegMove::Accept),
        "walk_away" | "walkaway" => Some(NegMove::WalkAway),
        _ => None,
    }
}

/// Extracts the action from a reply using the per-game grammar.
pub fn parse_action(text: &str, bounds: &ParseBounds) -> Option<Action> {
    match bounds.game {
        GameKind::G08a => parse_number(text, bounds.min, bounds.max).map(Action::Choice),
        GameKind::Sag => parse_number(text, bounds.min, bounds.max).map(Action::Bid),
        GameKind::Neg => {
            parse_neg(&json_block(text)?, bounds.agent, bounds.pool).map(Action::Neg)
        }
        GameKind::Pd => {
            let v = json_block(text)?;
            parse_pd_token(v.get("action")?.as_str()?).map(Action::Pd)
        }
    }
}

/// Splits a prediction-first reply into (prediction text, remainder).
pub fn parse_prediction(text: &str) -> (Option<String>, &str) {
    let mut found = None;
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let bare = line.trim().trim_start_matches(['*', '-', '#', ' ']);
        if bare.len() >= 11 && bare[..11].eq_ignore_ascii_case("prediction:") {
            let value = bare[11..].trim().trim_matches('*').trim().to_string();
            found = Some((value, offset + line.len()));
        }
        offset += line.len();
    }
    match found {
        Some((value, end)) => (Some(value), &text[end..]),
        None => (None, text),
    }
}

/// Numeric value of a prediction (first number in it).
pub fn prediction_value(prediction: &str) -> Option<f64> {
    numbers(prediction).first().copied()
}

pub fn prediction_pd(prediction: &str) -> Option<PdMove> {
    parse_pd_token(prediction.split_whitespace().next()?)
}
