//! Survival Auction Game.
//!
//! Residents start with 8 of at most 10 health and earn $100 a day. Each day
//! a single ration of water goes to the unique highest bidder, who pays the
//! bid and gains 2 health. A tie for the highest bid allocates nothing. Every
//! resident that goes without water loses health equal to its current run of
//! dry days. Health at or below zero eliminates the resident at day end.
//!
//! Balances in a snapshot already include the current day's income.

use serde::{Deserialize, Serialize};

use super::GameError;
use crate::engine::{
    Action, EnvSnapshot, FlagKind, GameEngine, GameKind, MatchRecord, Outcome, PublicState,
    Sanitized,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SagRules {
    pub start_health: i32,
    pub max_health: i32,
    pub daily_income: u64,
    pub water_gain: i32,
}

impl Default for SagRules {
    fn default() -> Self {
        Self { start_health: 8, max_health: 10, daily_income: 100, water_gain: 2 }
    }
}

impl SagRules {
    pub fn validate(&self) -> Result<(), GameError> {
        if self.start_health <= 0 || self.start_health > self.max_health {
            return Err(GameError::BadParams(format!(
                "start health {} must be in (0, {}]",
                self.start_health, self.max_health
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SagAgent {
    pub health: i32,
    pub balance: u64,
    pub dry_streak: u32,
    pub alive: bool,
    pub eliminated_on: Option<u32>,
    pub spent: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SagAuction {
    pub day: u32,
    /// `None` for residents already eliminated.
    pub bids: Vec<Option<u64>>,
    pub winner: Option<usize>,
    pub price: u64,
}

impl SagAuction {
    pub fn highest_bid_excluding(&self, agent: usize) -> Option<u64> {
        self.bids
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != agent)
            .filter_map(|(_, b)| *b)
            .max()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SagState {
    /// Current day (1-based).
    pub day: u32,
    pub agents: Vec<SagAgent>,
    pub auctions: Vec<SagAuction>,
    pub rules: SagRules,
}

impl SagState {
    pub fn new(num_agents: usize, rules: SagRules) -> Self {
        let agent = SagAgent {
            health: rules.start_health,
            balance: rules.daily_income,
            dry_streak: 0,
            alive: true,
            eliminated_on: None,
            spent: 0,
        };
        Self { day: 1, agents: vec![agent; num_agents], auctions: Vec::new(), rules }
    }

    pub fn alive(&self) -> Vec<usize> {
        self.agents.iter().enumerate().filter(|(_, a)| a.alive).map(|(i, _)| i).collect()
    }
}

/// Resolves one day. `bids[i]` must be `Some` exactly for living residents.
/// Bids above a resident's balance are clamped; the clamped residents are returned.
pub fn sag_step(
    state: &SagState,
    bids: &[Option<u64>],
) -> Result<(SagState, Vec<usize>), GameError> {
    if bids.len() != state.agents.len() {
        return Err(GameError::ActionCount { expected: state.agents.len(), got: bids.len() });
    }
    if state.alive().is_empty() {
        return Err(GameError::Finished);
    }
    let mut next = state.clone();
    let mut clamped = Vec::new();
    let mut effective = vec![None; bids.len()];
    for (i, (agent, bid)) in next.agents.iter().zip(bids).enumerate() {
        match (agent.alive, bid) {
            (true, Some(b)) => {
                if *b > agent.balance {
                    clamped.push(i);
                }
                effective[i] = Some((*b).min(agent.balance));
            }
            (true, None) | (false, Some(_)) => return Err(GameError::NotAllowed(i)),
            (false, None) => {}
        }
    }

    let top = effective.iter().filter_map(|b| *b).max().unwrap_or(0);
    let leaders: Vec<usize> =
        (0..effective.len()).filter(|&i| effective[i] == Some(top)).collect();
    let winner = (leaders.len() == 1).then(|| leaders[0]);

    let rules = next.rules.clone();
    for (i, agent) in next.agents.iter_mut().enumerate() {
        if !agent.alive {
            continue;
        }
        if Some(i) == winner {
            agent.balance -= top;
            agent.spent += top;
            agent.health = (agent.health + rules.water_gain).min(rules.max_health);
            agent.dry_streak = 0;
        } else {
            agent.dry_streak += 1;
            agent.health -= agent.dry_streak as i32;
        }
        if agent.health <= 0 {
            agent.alive = false;
            agent.eliminated_on = Some(state.day);
        }
    }
    next.auctions.push(SagAuction {
        day: state.day,
        bids: effective,
        winner,
        price: winner.map_or(0, |_| top),
    });
    next.day += 1;
    for agent in next.agents.iter_mut().filter(|a| a.alive) {
        agent.balance += rules.daily_income;
    }
    Ok((next, clamped))
}

/// Last day each agent was alive; survivors are credited the full game length.
pub fn sag_survival_round(record: &MatchRecord) -> Option<Vec<u32>> {
    match &record.outcome {
        Outcome::Sag { survival, .. } => Some(survival.clone()),
        _ => None,
    }
}

pub struct SagEngine {
    state: SagState,
}

impl SagEngine {
    pub fn new(num_agents: usize, rules: SagRules) -> Self {
        Self { state: SagState::new(num_agents, rules) }
    }

    pub fn state(&self) -> &SagState {
        &self.state
    }
}

impl GameEngine for SagEngine {
    fn kind(&self) -> GameKind {
        GameKind::Sag
    }

    fn round(&self) -> u32 {
        self.state.day
    }

    fn movers(&self) -> Vec<usize> {
        self.state.alive()
    }

    fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            game: GameKind::Sag,
            round: self.state.day,
            public_state: PublicState::Sag(self.state.clone()),
        }
    }

    fn sanitize(&self, agent: usize, proposed: Option<Action>) -> Sanitized {
        let balance = self.state.agents.get(agent).map_or(0, |a| a.balance);
        match proposed {
            Some(Action::Bid(v)) | Some(Action::Choice(v)) => {
                let clamped = v.clamp(0, balance as i64);
                if clamped == v {
                    Sanitized::ok(Action::Bid(v))
                } else {
                    Sanitized::flagged(
                        Action::Bid(clamped),
                        FlagKind::Clamped,
                        format!("bid {v} clamped to {clamped} (balance {balance})"),
                    )
                }
            }
            other => Sanitized::flagged(
                Action::Bid(0),
                FlagKind::Fallback,
                format!("no usable bid ({other:?}); bidding 0"),
            ),
        }
    }

    fn apply(&mut self, joint: &[(usize, Action)]) -> Result<(), GameError> {
        let mut bids = vec![None; self.state.agents.len()];
        for (agent, action) in joint {
            let slot = bids.get_mut(*agent).ok_or(GameError::NotAllowed(*agent))?;
            match action {
                Action::Bid(v) => *slot = Some(u64::try_from(*v).unwrap_or(0)),
                other => return Err(GameError::WrongActionKind(format!("{other:?}"))),
            }
        }
        let (next, _) = sag_step(&self.state, &bids)?;
        self.state = next;
        Ok(())
    }

    fn is_over(&self) -> bool {
        self.state.alive().len() <= 1
    }

    fn outcome(&self, max_rounds: u32) -> Outcome {
        let eliminated_on: Vec<Option<u32>> =
            self.state.agents.iter().map(|a| a.eliminated_on).collect();
        Outcome::Sag {
            survival: eliminated_on.iter().map(|e| e.unwrap_or(max_rounds)).collect(),
            eliminated_on,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(state: &SagState, bids: &[u64]) -> SagState {
        let bids: Vec<Option<u64>> = state
            .agents
            .iter()
            .zip(bids)
            .map(|(a, &b)| a.alive.then_some(b))
            .collect();
        sag_step(state, &bids).unwrap().0
    }

    #[test]
    fn dry_days_cost_increasing_health() {
        let s0 = SagState::new(2, SagRules::default());
        let s1 = day(&s0, &[10, 0]);
        assert_eq!(s1.agents[1].health, 7);
        let s2 = day(&s1, &[10, 0]);
        assert_eq!(s2.agents[1].health, 5);
        let s3 = day(&s2, &[0, 10]);
        assert_eq!(s3.agents[1].health, 7);
        assert_eq!(s3.agents[1].dry_streak, 0);
    }

    #[test]
    fn tie_allocates_nothing() {
        let s0 = SagState::new(4, SagRules::default());
        let s1 = day(&s0, &[100, 100, 20, 0]);
        assert_eq!(s1.auctions[0].winner, None);
        assert!(s1.agents.iter().all(|a| a.dry_streak == 1 && a.health == 7));
        // nobody paid, everyone got the next day's income
        assert!(s1.agents.iter().all(|a| a.balance == 200));
    }

    #[test]
    fn winner_pays_and_health_is_capped() {
        let s0 = SagState::new(2, SagRules::default());
        let s1 = day(&s0, &[60, 10]);
        assert_eq!(s1.agents[0].health, 10);
        assert_eq!(s1.agents[0].balance, 140);
        let s2 = day(&s1, &[60, 10]);
        assert_eq!(s2.agents[0].health, 10);
        assert_eq!(s2.agents[0].spent, 120);
    }

    #[test]
    fn overbid_is_clamped() {
        let s0 = SagState::new(2, SagRules::default());
        let (s1, clamped) = sag_step(&s0, &[Some(500), Some(0)]).unwrap();
        assert_eq!(clamped, vec![0]);
        assert_eq!(s1.auctions[0].price, 100);
    }

    #[test]
    fn elimination_is_recorded_and_final() {
        let mut s = SagState::new(2, SagRules::default());
        for _ in 0..4 {
            s = day(&s, &[50, 0]);
        }
        // 8 -> 7 -> 5 -> 2 -> -2
        assert!(!s.agents[1].alive);
        assert_eq!(s.agents[1].eliminated_on, Some(4));
        let health = s.agents[1].health;
        assert!(sag_step(&s, &[Some(0), Some(0)]).is_err());
        let s = day(&s, &[50, 0]);
        assert_eq!(s.agents[1].health, health);
    }
}
