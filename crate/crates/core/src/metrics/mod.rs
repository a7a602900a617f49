//! Win rate, survival, prediction deviation, strategic depth, tuning range
//! and significance tests.

mod stats;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{GameKind, MatchRecord, Outcome, PublicState};

pub use stats::{
    incomplete_beta, mean, std_dev, student_t_cdf, student_t_test, t_test, two_sided_p, variance,
    welch_t_test, TTest, TTestVariant,
};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no match records")]
    NoRecords,
    #[error("records mix games ({0} and {1})")]
    MixedGames(GameKind, GameKind),
    #[error("{metric} is not defined for {game}")]
    Unsupported { metric: &'static str, game: GameKind },
    #[error("agent {0} is not in every record")]
    UnknownAgent(usize),
    #[error("no predictions were logged for {0}")]
    NoPredictions(String),
    #[error("no initial actions were logged for {0}")]
    NoInitialActions(String),
    #[error("strategic depth needs choice > 0 and 0 < alpha < 1 (got {choice}, {alpha})")]
    Domain { choice: f64, alpha: f64 },
    #[error("a sample needs at least two values, got {0}")]
    SampleTooSmall(usize),
    #[error("samples contain non-finite values")]
    NonFinite,
}

fn common_game(records: &[MatchRecord]) -> Result<GameKind, MetricsError> {
    let first = records.first().ok_or(MetricsError::NoRecords)?.config.game;
    for r in records {
        if r.config.game != first {
            return Err(MetricsError::MixedGames(first, r.config.game));
        }
    }
    Ok(first)
}

fn method_label(records: &[MatchRecord], agent: usize) -> String {
    records
        .first()
        .and_then(|r| r.config.agents.get(agent))
        .map_or_else(|| format!("agent {agent}"), |a| a.method.label())
}

/// Wins divided by opportunities to win. G0.8A counts rounds; NEG counts
/// games, with a game that ends without a winner worth half a win.
pub fn win_rate(records: &[MatchRecord], player: usize) -> Result<f64, MetricsError> {
    let game = common_game(records)?;
    let mut wins = 0.0;
    let mut chances = 0.0;
    for r in records {
        match &r.outcome {
            Outcome::G08a { scores } => {
                wins += f64::from(*scores.get(player).ok_or(MetricsError::UnknownAgent(player))?);
                chances += r.rounds.len() as f64;
            }
            Outcome::Neg { winner, .. } => {
                if player >= r.agents.len() {
                    return Err(MetricsError::UnknownAgent(player));
                }
                wins += match winner {
                    Some(w) if *w == player => 1.0,
                    Some(_) => 0.0,
                    None => 0.5,
                };
                chances += 1.0;
            }
            _ => return Err(MetricsError::Unsupported { metric: "win rate", game }),
        }
    }
    Ok(if chances > 0.0 { wins / chances } else { 0.0 })
}

/// Win rate of each record on its own (one value per repeat).
pub fn win_rates_per_record(records: &[MatchRecord], player: usize) -> Result<Vec<f64>, MetricsError> {
    records.iter().map(|r| win_rate(std::slice::from_ref(r), player)).collect()
}

pub fn survival_rounds(records: &[MatchRecord], player: usize) -> Result<Vec<f64>, MetricsError> {
    let game = common_game(records)?;
    records
        .iter()
        .map(|r| match &r.outcome {
            Outcome::Sag { survival, .. } => survival
                .get(player)
                .map(|&s| f64::from(s))
                .ok_or(MetricsError::UnknownAgent(player)),
            _ => Err(MetricsError::Unsupported { metric: "survival round", game }),
        })
        .collect()
}

/// Mean over SAG tests of the last day the player was alive.
pub fn avg_survival_round(records: &[MatchRecord], player: usize) -> Result<f64, MetricsError> {
    Ok(mean(&survival_rounds(records, player)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionAccuracy {
    /// Mean absolute deviation over every logged prediction.
    pub mean: f64,
    /// Mean deviation per round index (1-based position `i` at `per_round[i - 1]`);
    /// `None` where no record logged a prediction for that round.
    pub per_round: Vec<Option<f64>>,
    pub count: usize,
}

/// Realised quantity a prediction is scored against: the group average
/// (G0.8A) or the highest opponent bid (SAG).
fn realised(game: GameKind, after: &PublicState, player: usize) -> Option<f64> {
    match (game, after) {
        (GameKind::G08a, PublicState::G08a(s)) => {
            s.past_rounds.last().map(|r| *r.average.numer() as f64 / *r.average.denom() as f64)
        }
        (GameKind::Sag, PublicState::Sag(s)) => {
            s.auctions.last().and_then(|a| a.highest_bid_excluding(player)).map(|b| b as f64)
        }
        _ => None,
    }
}

/// Mean |predicted − actual| of the player's logged predictions.
pub fn pred_acc(records: &[MatchRecord], player: usize) -> Result<PredictionAccuracy, MetricsError> {
    let game = common_game(records)?;
    if !matches!(game, GameKind::G08a | GameKind::Sag) {
        return Err(MetricsError::Unsupported { metric: "prediction accuracy", game });
    }
    let mut per_round: Vec<(f64, usize)> = Vec::new();
    let mut all = Vec::new();
    for r in records {
        for (i, log) in r.rounds.iter().enumerate() {
            let Some(pred) = log
                .actions
                .iter()
                .find(|a| a.agent.index == player)
                .and_then(|a| a.prediction.as_ref())
                .and_then(|p| p.summary)
            else {
                continue;
            };
            let Some(actual) = realised(game, &log.after.public_state, player) else {
                continue;
            };
            let dev = (pred - actual).abs();
            if per_round.len() <= i {
                per_round.resize(i + 1, (0.0, 0));
            }
            per_round[i].0 += dev;
            per_round[i].1 += 1;
            all.push(dev);
        }
    }
    if all.is_empty() {
        return Err(MetricsError::NoPredictions(method_label(records, player)));
    }
    Ok(PredictionAccuracy {
        mean: mean(&all),
        per_round: per_round.into_iter().map(|(s, n)| (n > 0).then(|| s / n as f64)).collect(),
        count: all.len(),
    })
}

/// Reasoning levels separating a choice from the uniform-random anchor 50:
/// `log_alpha(choice / 50)`.
pub fn strategic_depth(choice: f64, alpha: f64) -> Result<f64, MetricsError> {
    if !(choice > 0.0 && choice.is_finite() && alpha > 0.0 && alpha < 1.0) {
        return Err(MetricsError::Domain { choice, alpha });
    }
    Ok((choice / 50.0).ln() / alpha.ln())
}

/// Per-round mean |final − initial| of the player's actions.
pub fn tuning_range(records: &[MatchRecord], player: usize) -> Result<Vec<f64>, MetricsError> {
    common_game(records)?;
    let mut per_round: Vec<(f64, usize)> = Vec::new();
    for r in records {
        for (i, log) in r.rounds.iter().enumerate() {
            let Some(rec) = log.actions.iter().find(|a| a.agent.index == player) else {
                continue;
            };
            let (Some(init), Some(fin)) =
                (rec.initial_action.as_ref().and_then(|a| a.as_number()), rec.action.as_number())
            else {
                continue;
            };
            if per_round.len() <= i {
                per_round.resize(i + 1, (0.0, 0));
            }
            per_round[i].0 += (fin - init).abs();
            per_round[i].1 += 1;
        }
    }
    if per_round.iter().all(|(_, n)| *n == 0) {
        return Err(MetricsError::NoInitialActions(method_label(records, player)));
    }
    Ok(per_round.into_iter().map(|(s, n)| if n > 0 { s / n as f64 } else { 0.0 }).collect())
}

/// Mean first-round choice of an agent across G0.8A records.
pub fn first_round_mean(records: &[MatchRecord], agent: usize) -> Option<f64> {
    let choices: Vec<f64> = records
        .iter()
        .filter(|r| r.config.game == GameKind::G08a)
        .filter_map(|r| r.rounds.first())
        .filter_map(|log| log.actions.iter().find(|a| a.agent.index == agent))
        .filter_map(|a| a.action.as_number())
        .collect();
    (!choices.is_empty()).then(|| mean(&choices))
}

/// Aggregate statistics of one player across a set of repeats.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub game: Option<GameKind>,
    pub player: usize,
    pub method: String,
    pub repeats: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub win_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg_survival_round: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pred_acc: Option<PredictionAccuracy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_round_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategic_depth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuning_range: Option<Vec<f64>>,
    /// Headline metric per repeat (win rate, survival round, or player payoff).
    pub per_repeat: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl MetricsReport {
    /// Collects every metric that applies to the records' game; metrics
    /// whose preconditions fail are left empty.
    pub fn compute(records: &[MatchRecord], player: usize, alpha: f64) -> Result<Self, MetricsError> {
        let game = common_game(records)?;
        let mut report = MetricsReport {
            game: Some(game),
            player,
            method: method_label(records, player),
            repeats: records.len(),
            ..Default::default()
        };
        report.per_repeat = match game {
            GameKind::G08a | GameKind::Neg => {
                report.win_rate = Some(win_rate(records, player)?);
                win_rates_per_record(records, player)?
            }
            GameKind::Sag => {
                report.avg_survival_round = Some(avg_survival_round(records, player)?);
                survival_rounds(records, player)?
            }
            GameKind::Pd => records
                .iter()
                .map(|r| match &r.outcome {
                    Outcome::Pd { payoffs, .. } => payoffs.get(player).map_or(0.0, |p| *p as f64),
                    _ => 0.0,
                })
                .collect(),
        };
        report.mean = mean(&report.per_repeat);
        report.std = std_dev(&report.per_repeat);
        report.pred_acc = pred_acc(records, player).ok();
        report.tuning_range = tuning_range(records, player).ok();
        if game == GameKind::G08a {
            report.first_round_mean = first_round_mean(records, player);
            report.strategic_depth =
                report.first_round_mean.and_then(|m| strategic_depth(m, alpha).ok());
        }
        Ok(report)
    }
}
