use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use super::rng::agent_stream;
use super::types::*;
use super::GameEngine;
use crate::games::{self, GameError};
use crate::gateway::{TranscriptRecord, UsageTally};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("invalid match config: {0}")]
    Config(String),
    #[error("engine plays {engine} but the config asks for {config}")]
    EngineMismatch { engine: GameKind, config: GameKind },
    #[error("expected {expected} deciders, got {got}")]
    DeciderCount { expected: usize, got: usize },
    #[error("unknown observer {0}")]
    UnknownObserver(usize),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("replay diverged at round {round}")]
    ReplayDiverged { round: u32 },
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct DecideError(pub String);

/// Everything an agent may look at when choosing its round-`t` action.
pub struct DecisionView<'a> {
    pub agent: &'a AgentId,
    pub agents: &'a [AgentId],
    pub round: u32,
    pub max_rounds: u32,
    pub snapshot: &'a EnvSnapshot,
    pub private: Option<&'a PrivateInfo>,
    /// Public histories of every agent, indexed by agent.
    pub histories: &'a [PublicHistory],
    pub movers: &'a [usize],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Decision {
    /// `None` when the decider produced nothing usable.
    pub action: Option<Action>,
    pub prediction: Option<Prediction>,
    pub initial_action: Option<Action>,
    pub flags: Vec<(FlagKind, String)>,
}

impl Decision {
    pub fn action(action: Action) -> Self {
        Self { action: Some(action), ..Self::default() }
    }
}

/// What an agent learns once a round is resolved.
pub struct RoundFeedback<'a> {
    pub agent: &'a AgentId,
    pub agents: &'a [AgentId],
    pub max_rounds: u32,
    pub log: &'a RoundLog,
    pub before: &'a EnvSnapshot,
    pub private: Option<&'a PrivateInfo>,
}

pub trait Decider: Send {
    fn decide(&mut self, view: &DecisionView<'_>, rng: &mut ChaCha8Rng)
        -> Result<Decision, DecideError>;

    /// Hook run after every resolved round; returns flags to attach to it.
    fn end_of_round(&mut self, _feedback: &RoundFeedback<'_>) -> Vec<(FlagKind, String)> {
        Vec::new()
    }

    fn usage(&self) -> UsageTally {
        UsageTally::default()
    }

    fn transcript(&self) -> &[TranscriptRecord] {
        &[]
    }
}

/// Decider backed by a closure; handy for fixtures and scripted agents.
pub struct FnDecider<F>(pub F);

impl<F> Decider for FnDecider<F>
where
    F: FnMut(&DecisionView<'_>) -> Action + Send,
{
    fn decide(
        &mut self,
        view: &DecisionView<'_>,
        _rng: &mut ChaCha8Rng,
    ) -> Result<Decision, DecideError> {
        Ok(Decision::action((self.0)(view)))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MatchOptions {
    /// Let the movers of a round decide on worker threads. Every decider
    /// still sees only the pre-round snapshot, so the record is unchanged.
    pub concurrent_decisions: bool,
}

pub fn run_match(
    config: &MatchConfig,
    engine: &mut dyn GameEngine,
    deciders: &mut [Box<dyn Decider>],
) -> Result<MatchRecord, MatchError> {
    run_match_with(config, engine, deciders, MatchOptions::default(), &mut |_| {})
}

/// Runs a match to completion, calling `on_round` after every resolved round.
pub fn run_match_with(
    config: &MatchConfig,
    engine: &mut dyn GameEngine,
    deciders: &mut [Box<dyn Decider>],
    options: MatchOptions,
    on_round: &mut dyn FnMut(&RoundLog),
) -> Result<MatchRecord, MatchError> {
    config.validate().map_err(MatchError::Config)?;
    if engine.kind() != config.game {
        return Err(MatchError::EngineMismatch { engine: engine.kind(), config: config.game });
    }
    if deciders.len() != config.num_agents {
        return Err(MatchError::DeciderCount { expected: config.num_agents, got: deciders.len() });
    }

    let agents = config.agent_ids();
    let n = agents.len();
    let mut histories: Vec<PublicHistory> =
        (0..n).map(|agent| PublicHistory { agent, entries: Vec::new() }).collect();
    let initial = engine.snapshot();
    let mut rounds: Vec<RoundLog> = Vec::new();
    let mut abort_reason = None;

    while !engine.is_over() && engine.round() <= config.max_rounds {
        let round = engine.round();
        let before = engine.snapshot();
        let movers = engine.movers();
        let privates: Vec<Option<PrivateInfo>> = (0..n).map(|i| engine.private_info(i)).collect();

        let decide_one = |i: usize, decider: &mut Box<dyn Decider>| {
            let view = DecisionView {
                agent: &agents[i],
                agents: &agents,
                round,
                max_rounds: config.max_rounds,
                snapshot: &before,
                private: privates[i].as_ref(),
                histories: &histories,
                movers: &movers,
            };
            let mut rng = agent_stream(config.seed, i, round);
            (i, decider.decide(&view, &mut rng))
        };

        let selected: Vec<(usize, &mut Box<dyn Decider>)> = deciders
            .iter_mut()
            .enumerate()
            .filter(|(i, _)| movers.contains(i))
            .collect();
        let results: Vec<(usize, Result<Decision, DecideError>)> = if options.concurrent_decisions {
            selected.into_par_iter().map(|(i, d)| decide_one(i, d)).collect()
        } else {
            selected.into_iter().map(|(i, d)| decide_one(i, d)).collect()
        };

        let mut decisions = Vec::with_capacity(results.len());
        for (i, result) in results {
            match result {
                Ok(d) => decisions.push((i, d)),
                Err(e) => {
                    abort_reason = Some(format!("agent {i} failed in round {round}: {e}"));
                    break;
                }
            }
        }
        if abort_reason.is_some() {
            break;
        }

        let mut flags = Vec::new();
        let mut joint = Vec::with_capacity(decisions.len());
        let mut records = Vec::with_capacity(decisions.len());
        for (i, decision) in decisions {
            let sanitized = engine.sanitize(i, decision.action);
            if let Some((kind, detail)) = sanitized.flag {
                flags.push(RoundFlag { agent: i, kind, detail });
            }
            flags.extend(
                decision.flags.into_iter().map(|(kind, detail)| RoundFlag { agent: i, kind, detail }),
            );
            joint.push((i, sanitized.action.clone()));
            records.push(ActionRecord {
                agent: agents[i].clone(),
                round,
                action: sanitized.action,
                prediction: decision.prediction,
                initial_action: decision.initial_action,
            });
        }

        engine.apply(&joint)?;
        let after = engine.snapshot();
        for (i, history) in histories.iter_mut().enumerate() {
            let action = joint.iter().find(|(j, _)| *j == i).map(|(_, a)| a.clone());
            history.entries.push(HistoryEntry { snapshot: before.clone(), action });
        }

        let mut log = RoundLog { round, actions: records, flags, after };
        let mut feedback_flags = Vec::new();
        for (i, decider) in deciders.iter_mut().enumerate() {
            let feedback = RoundFeedback {
                agent: &agents[i],
                agents: &agents,
                max_rounds: config.max_rounds,
                log: &log,
                before: &before,
                private: privates[i].as_ref(),
            };
            for (kind, detail) in decider.end_of_round(&feedback) {
                feedback_flags.push(RoundFlag { agent: i, kind, detail });
            }
        }
        log.flags.extend(feedback_flags);
        on_round(&log);
        rounds.push(log);
    }

    Ok(MatchRecord {
        config: config.clone(),
        agents,
        initial,
        rounds,
        outcome: engine.outcome(config.max_rounds),
        usage: deciders.iter().map(|d| d.usage()).collect(),
        valid: abort_reason.is_none(),
        abort_reason,
    })
}

/// Current public snapshot and `observer`'s public history for a record in progress.
pub fn public_view(
    record: &MatchRecord,
    observer: usize,
) -> Result<(EnvSnapshot, PublicHistory), MatchError> {
    if observer >= record.agents.len() {
        return Err(MatchError::UnknownObserver(observer));
    }
    let snapshot = record.rounds.last().map_or(&record.initial, |r| &r.after).clone();
    let entries = record
        .rounds
        .iter()
        .map(|log| HistoryEntry {
            snapshot: record
                .snapshot_before(log.round)
                .cloned()
                .unwrap_or_else(|| record.initial.clone()),
            action: log
                .actions
                .iter()
                .find(|a| a.agent.index == observer)
                .map(|a| a.action.clone()),
        })
        .collect();
    Ok((snapshot, PublicHistory { agent: observer, entries }))
}

/// Re-applies the recorded actions through a fresh engine and checks every
/// recorded snapshot is reproduced.
pub fn verify_replay(record: &MatchRecord) -> Result<(), MatchError> {
    let mut engine = games::build_engine(&record.config)?;
    if engine.snapshot() != record.initial {
        return Err(MatchError::ReplayDiverged { round: 0 });
    }
    for log in &record.rounds {
        let joint: Vec<(usize, Action)> =
            log.actions.iter().map(|a| (a.agent.index, a.action.clone())).collect();
        engine.apply(&joint)?;
        if engine.snapshot() != log.after {
            return Err(MatchError::ReplayDiverged { round: log.round });
        }
    }
    Ok(())
}
