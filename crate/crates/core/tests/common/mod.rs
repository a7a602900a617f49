//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use klevel_core::engine::{AgentSpec, GameKind, MatchConfig, MethodSpec, PublicHistory};
use klevel_core::games::build_engine;
use klevel_core::gateway::{
    BackendError, BackendSpec, Completion, CompletionRequest, DecisionBackend, Sampling,
};
use klevel_core::harness::ExperimentSpec;
use klevel_core::reasoning::DecisionInput;
use klevel_core::strategies::{StrategyKind, StrategySpec};
use klevel_core::Method;

/// Wraps a backend and keeps every request it saw.
pub struct Recording<B> {
    pub inner: B,
    pub requests: Vec<CompletionRequest>,
}

impl<B> Recording<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, requests: Vec::new() }
    }

    pub fn calls(&self) -> usize {
        self.requests.len()
    }
}

impl<B: DecisionBackend> DecisionBackend for Recording<B> {
    fn complete(&mut self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        self.requests.push(request.clone());
        self.inner.complete(request)
    }
}

pub fn programmatic(kind: StrategyKind) -> MethodSpec {
    MethodSpec::Programmatic { strategy: StrategySpec::new(kind) }
}

pub fn llm(method: Method, k: u32) -> MethodSpec {
    MethodSpec::Llm { method, k, backend: "kstep".into() }
}

/// Experiment whose LLM agents all use the `kstep` script.
pub fn kstep_spec(game: GameKind, player: MethodSpec, opponent: MethodSpec, repeats: u32) -> ExperimentSpec {
    let mut spec = ExperimentSpec::new(game, player, opponent);
    spec.repeats = repeats;
    spec.backends = BTreeMap::from([("kstep".to_string(), BackendSpec::scripted("kstep"))]);
    spec
}

/// Round-1 decision problem of `agent` in a fresh `game` with `n` agents.
pub fn fresh_input(game: GameKind, n: usize, agent: usize, seed: u64) -> DecisionInput {
    let agents = (0..n)
        .map(|i| AgentSpec { label: format!("a{i}"), player: i == 0, method: llm(Method::Direct, 1) })
        .collect();
    let config = MatchConfig::new(game, seed, agents);
    let engine = build_engine(&config).expect("default params are valid");
    DecisionInput {
        game,
        agent,
        num_agents: n,
        active: (0..n).collect(),
        round: 1,
        max_rounds: config.max_rounds,
        snapshot: engine.snapshot(),
        private: engine.private_info(agent),
        histories: (0..n).map(|a| PublicHistory { agent: a, entries: Vec::new() }).collect(),
        sampling: Sampling::default(),
    }
}

/// Number of backend calls of plain level-k reasoning with `m` active agents,
/// straight from the recursion: one call at level 1, otherwise one call per
/// anticipated opponent subtree plus the final decision.
pub fn kr_calls(m: u64, k: u32) -> u64 {
    if k <= 1 {
        1
    } else {
        1 + (m - 1) * kr_calls(m, k - 1)
    }
}

/// G0.8A winners by direct floating-point search. Distances are multiples of
/// 1/(5n), so a 1e-9 tolerance cannot merge distinct distances.
pub fn g08a_winners_brute(choices: &[u32]) -> Vec<usize> {
    if choices.iter().all(|&c| c == choices[0]) {
        return Vec::new();
    }
    let avg = choices.iter().map(|&c| c as f64).sum::<f64>() / choices.len() as f64;
    let target = 0.8 * avg;
    let dists: Vec<f64> = choices.iter().map(|&c| (c as f64 - target).abs()).collect();
    let best = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    (0..choices.len()).filter(|&i| dists[i] - best < 1e-9).collect()
}

/// One resident in the straight-line SAG reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Resident {
    pub health: i32,
    pub streak: u32,
    pub balance: u64,
    pub alive: bool,
}

/// One SAG day written out longhand: clamp bids to balances, the unique
/// highest bid buys the water (+2 health, capped at 10, pays the bid),
/// everybody else loses health equal to their run of dry days, health at or
/// below zero eliminates, survivors earn $100.
pub fn sag_day_reference(residents: &[Resident], bids: &[u64]) -> (Vec<Resident>, Option<usize>) {
    let mut effective: Vec<Option<u64>> = Vec::new();
    for (r, b) in residents.iter().zip(bids) {
        effective.push(if r.alive { Some(if *b > r.balance { r.balance } else { *b }) } else { None });
    }
    let mut top: Option<u64> = None;
    for b in effective.iter().flatten() {
        if top.map_or(true, |t| *b > t) {
            top = Some(*b);
        }
    }
    let mut holders = Vec::new();
    for (i, b) in effective.iter().enumerate() {
        if b.is_some() && *b == top {
            holders.push(i);
        }
    }
    let winner = if holders.len() == 1 { Some(holders[0]) } else { None };
    let mut out = residents.to_vec();
    for i in 0..out.len() {
        if !out[i].alive {
            continue;
        }
        if winner == Some(i) {
            out[i].balance -= top.unwrap();
            out[i].health += 2;
            if out[i].health > 10 {
                out[i].health = 10;
            }
            out[i].streak = 0;
        } else {
            out[i].streak += 1;
            out[i].health -= out[i].streak as i32;
        }
        if out[i].health <= 0 {
            out[i].alive = false;
        } else {
            out[i].balance += 100;
        }
    }
    (out, winner)
}
