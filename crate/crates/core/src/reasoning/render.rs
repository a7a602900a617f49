//! Text renderings of snapshots and histories used to fill templates.

use num_rational::Ratio;

use super::PromptContext;
use crate::engine::{Action, PrivateInfo, PublicState};
use crate::games::neg::ITEMS;
use crate::games::pd::PdMove;

pub fn player_name(index: usize) -> String {
    format!("Player {}", index + 1)
}

pub fn ratio_text(r: Ratio<i64>) -> String {
    let v = *r.numer() as f64 / *r.denom() as f64;
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn render_action(action: &Action) -> String {
    match action {
        Action::Choice(v) => format!("pick {v}"),
        Action::Bid(v) => format!("bid ${v}"),
        Action::Neg(m) => m.describe(),
        Action::Pd(PdMove::Cooperate) => "cooperate (C)".into(),
        Action::Pd(PdMove::Defect) => "defect (D)".into(),
    }
}

fn who(ctx: &PromptContext, agent: usize) -> String {
    if agent == ctx.perspective {
        format!("{} (you)", player_name(agent))
    } else {
        player_name(agent)
    }
}

pub fn render_state(ctx: &PromptContext) -> String {
    match &ctx.snapshot.public_state {
        PublicState::G08a(s) => {
            if s.past_rounds.is_empty() {
                return "No rounds have been played yet.".into();
            }
            let scores: Vec<String> = s
                .scores
                .iter()
                .enumerate()
                .map(|(i, sc)| format!("{}: {sc}", who(ctx, i)))
                .collect();
            format!("Scores so far: {}.", scores.join(", "))
        }
        PublicState::Sag(s) => {
            let mut lines = Vec::new();
            if let Some(me) = s.agents.get(ctx.perspective) {
                lines.push(format!(
                    "Day {}. Your health is {} and your balance is ${}. You have gone {} day(s) in a row without water.",
                    s.day, me.health, me.balance, me.dry_streak
                ));
            }
            for (i, a) in s.agents.iter().enumerate() {
                if i == ctx.perspective {
                    continue;
                }
                if a.alive {
                    lines.push(format!(
                        "{}: health {}, balance ${}.",
                        player_name(i),
                        a.health,
                        a.balance
                    ));
                } else {
                    lines.push(format!(
                        "{}: out since day {}.",
                        player_name(i),
                        a.eliminated_on.unwrap_or(0)
                    ));
                }
            }
            lines.join("\n")
        }
        PublicState::Neg(s) => {
            let pool: Vec<String> =
                ITEMS.iter().zip(s.pool).map(|(n, c)| format!("{c} {n}")).collect();
            let mut lines = vec![
                format!("The pool holds {}.", pool.join(", ")),
                format!("{} of {} moves have been used.", s.moves, s.max_moves),
            ];
            match &s.pending {
                Some((by, alloc)) => lines.push(format!(
                    "Pending proposal by {}: {}.",
                    who(ctx, *by),
                    crate::games::neg::NegMove::Propose { allocation: alloc.clone() }
                        .describe()
                        .trim_start_matches("proposes ")
                )),
                None => lines.push("There is no pending proposal.".into()),
            }
            lines.join("\n")
        }
        PublicState::Pd(s) => format!(
            "Points so far: {}: {}, {}: {}.",
            who(ctx, 0),
            s.payoffs[0],
            who(ctx, 1),
            s.payoffs[1]
        ),
    }
}

pub fn render_private(ctx: &PromptContext) -> String {
    match &ctx.private {
        Some(PrivateInfo::NegUtilities(u)) => {
            let parts: Vec<String> =
                ITEMS.iter().zip(u).map(|(n, v)| format!("{n} {v}")).collect();
            format!("Your private value per item: {}.", parts.join(", "))
        }
        None => String::new(),
    }
}

pub fn render_history(ctx: &PromptContext) -> String {
    let mut lines = Vec::new();
    match &ctx.snapshot.public_state {
        PublicState::G08a(s) => {
            for (r, past) in s.past_rounds.iter().enumerate() {
                let picks: Vec<String> = past
                    .choices
                    .iter()
                    .enumerate()
                    .map(|(i, c)| format!("{} {c}", who(ctx, i)))
                    .collect();
                let winners = if past.winners.is_empty() {
                    "nobody".to_string()
                } else {
                    past.winners.iter().map(|&w| who(ctx, w)).collect::<Vec<_>>().join(", ")
                };
                lines.push(format!(
                    "Round {}: picks {}; average {}; target {}; won by {}.",
                    r + 1,
                    picks.join(", "),
                    ratio_text(past.average),
                    ratio_text(past.target),
                    winners
                ));
            }
        }
        PublicState::Sag(s) => {
            for a in &s.auctions {
                let bids: Vec<String> = a
                    .bids
                    .iter()
                    .enumerate()
                    .filter_map(|(i, b)| b.map(|b| format!("{} ${b}", who(ctx, i))))
                    .collect();
                let result = match a.winner {
                    Some(w) => format!("{} won the water for ${}", who(ctx, w), a.price),
                    None => "tie for the highest bid, nobody got water".into(),
                };
                lines.push(format!("Day {}: bids {}; {}.", a.day, bids.join(", "), result));
            }
        }
        PublicState::Neg(s) => {
            for (n, (by, mv)) in s.dialogue.iter().enumerate() {
                lines.push(format!("Move {}: {} {}.", n + 1, who(ctx, *by), mv.describe()));
            }
        }
        PublicState::Pd(s) => {
            for (r, moves) in s.history.iter().enumerate() {
                lines.push(format!(
                    "Round {}: {} played {}, {} played {}.",
                    r + 1,
                    who(ctx, 0),
                    short_pd(moves[0]),
                    who(ctx, 1),
                    short_pd(moves[1])
                ));
            }
        }
    }
    if lines.is_empty() {
        return String::new();
    }
    format!("History:\n{}", lines.join("\n"))
}

fn short_pd(m: PdMove) -> &'static str {
    match m {
        PdMove::Cooperate => "C",
        PdMove::Defect => "D",
    }
}

pub fn render_anticipations(ctx: &PromptContext) -> String {
    ctx.anticipations
        .iter()
        .map(|(j, a)| format!("- {} is expected to {}.", player_name(*j), render_action(a)))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn render_memory(memory: &[String]) -> String {
    if memory.is_empty() {
        return "(none yet)".into();
    }
    memory
        .iter()
        .enumerate()
        .map(|(i, m)| format!("{}. {}", i + 1, m.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios_render_compactly() {
        assert_eq!(ratio_text(Ratio::new(96, 5)), "19.2");
        assert_eq!(ratio_text(Ratio::new(24, 1)), "24");
        assert_eq!(ratio_text(Ratio::new(1, 3)), "0.33");
    }
}
