//! Programmatic opponents: fixed patterns that never adapt.
//!
//! | name              | choice at round `t`                                      |
//! |-------------------|----------------------------------------------------------|
//! | `0-Level (Fix)`   | `start` (40)                                             |
//! | `0-Level (Var)`   | `round(N(start, spread))`                                |
//! | `MonoTrend (Fix)` | `start - (t-1) * common_diff`, same diff for everyone    |
//! | `MonoTrend (Var)` | `start - (t-1) * d`, `d` drawn once per agent from 1..=5 |
//! | `LastBids (Fix)`  | previous round's target, `start` in round 1              |
//! | `LastBids (Var)`  | `round(N(previous target, spread))`                      |
//!
//! Every choice is rounded to an integer and clamped to `[1, 100]`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::{Action, DecideError, Decider, Decision, DecisionView, GameKind, PublicState};

pub const MONO_VAR_DIFFS: std::ops::RangeInclusive<i64> = 1..=5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StrategyKind {
    #[serde(rename = "0-Level (Fix)")]
    ZeroLevelFix,
    #[serde(rename = "0-Level (Var)")]
    ZeroLevelVar,
    #[serde(rename = "MonoTrend (Fix)")]
    MonoTrendFix,
    #[serde(rename = "MonoTrend (Var)")]
    MonoTrendVar,
    #[serde(rename = "LastBids (Fix)")]
    LastBidsFix,
    #[serde(rename = "LastBids (Var)")]
    LastBidsVar,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::ZeroLevelFix,
        StrategyKind::ZeroLevelVar,
        StrategyKind::MonoTrendFix,
        StrategyKind::MonoTrendVar,
        StrategyKind::LastBidsFix,
        StrategyKind::LastBidsVar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::ZeroLevelFix => "0-Level (Fix)",
            StrategyKind::ZeroLevelVar => "0-Level (Var)",
            StrategyKind::MonoTrendFix => "MonoTrend (Fix)",
            StrategyKind::MonoTrendVar => "MonoTrend (Var)",
            StrategyKind::LastBidsFix => "LastBids (Fix)",
            StrategyKind::LastBidsVar => "LastBids (Var)",
        }
    }

    pub fn is_fixed(self) -> bool {
        matches!(
            self,
            StrategyKind::ZeroLevelFix | StrategyKind::MonoTrendFix | StrategyKind::LastBidsFix
        )
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

/// How the `spread` parameter is read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadMode {
    /// `spread` is a variance; the standard deviation is its square root.
    #[default]
    Variance,
    StdDev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    #[serde(default = "default_start")]
    pub start: i64,
    #[serde(default = "default_common_diff")]
    pub common_diff: i64,
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default)]
    pub spread_mode: SpreadMode,
}

fn default_start() -> i64 {
    40
}
fn default_common_diff() -> i64 {
    3
}
fn default_spread() -> f64 {
    5.0
}

impl StrategySpec {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            start: default_start(),
            common_diff: default_common_diff(),
            spread: default_spread(),
            spread_mode: SpreadMode::default(),
        }
    }

    pub fn with_common_diff(mut self, diff: i64) -> Self {
        self.common_diff = diff;
        self
    }

    pub fn sigma(&self) -> f64 {
        match self.spread_mode {
            SpreadMode::Variance => self.spread.sqrt(),
            SpreadMode::StdDev => self.spread,
        }
    }

    /// Mean of the choice before rounding, given the previous target and,
    /// for MonoTrend, the common difference in force.
    pub fn centre(&self, previous_target: Option<f64>, round: u32, diff: i64) -> f64 {
        match self.kind {
            StrategyKind::ZeroLevelFix | StrategyKind::ZeroLevelVar => self.start as f64,
            StrategyKind::MonoTrendFix | StrategyKind::MonoTrendVar => {
                (self.start - i64::from(round.saturating_sub(1)) * diff) as f64
            }
            StrategyKind::LastBidsFix | StrategyKind::LastBidsVar => {
                previous_target.unwrap_or(self.start as f64)
            }
        }
    }
}

pub fn clamp_choice(x: f64) -> u32 {
    x.round().clamp(1.0, 100.0) as u32
}

/// A strategy bound to one agent: holds the per-agent draw of MonoTrend (Var).
#[derive(Debug, Clone)]
pub struct Strategy {
    pub spec: StrategySpec,
    diff: i64,
}

impl Strategy {
    /// `setup` is the agent's setup stream; it is consumed only by MonoTrend (Var).
    pub fn new(spec: StrategySpec, setup: &mut impl Rng) -> Self {
        let diff = match spec.kind {
            StrategyKind::MonoTrendVar => setup.random_range(MONO_VAR_DIFFS),
            _ => spec.common_diff,
        };
        Self { spec, diff }
    }

    pub fn common_diff(&self) -> i64 {
        self.diff
    }

    /// Next choice in `[1, 100]`. `previous_target` is `None` in round 1.
    pub fn next_choice(&self, previous_target: Option<f64>, round: u32, rng: &mut impl Rng) -> u32 {
        let centre = self.spec.centre(previous_target, round, self.diff);
        if self.spec.kind.is_fixed() || self.spec.kind == StrategyKind::MonoTrendVar {
            return clamp_choice(centre);
        }
        let normal = Normal::new(centre, self.spec.sigma()).expect("finite positive sigma");
        clamp_choice(normal.sample(rng))
    }
}

/// The "previous target" a strategy tracks: last G0.8A target, or the
/// previous day's highest bid in SAG.
pub fn previous_target(state: &PublicState) -> Option<f64> {
    match state {
        PublicState::G08a(s) => s.last_target().map(|t| *t.numer() as f64 / *t.denom() as f64),
        PublicState::Sag(s) => s
            .auctions
            .last()
            .and_then(|a| a.bids.iter().filter_map(|b| *b).max())
            .map(|b| b as f64),
        _ => None,
    }
}

/// Decider for a programmatic opponent.
pub struct ProgrammaticDecider {
    strategy: Strategy,
}

impl ProgrammaticDecider {
    pub fn new(spec: StrategySpec, setup: &mut impl Rng) -> Self {
        Self { strategy: Strategy::new(spec, setup) }
    }
}

impl Decider for ProgrammaticDecider {
    fn decide(
        &mut self,
        view: &DecisionView<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Decision, DecideError> {
        let state = &view.snapshot.public_state;
        let choice =
            i64::from(self.strategy.next_choice(previous_target(state), view.round, rng));
        match (view.snapshot.game, state) {
            (GameKind::G08a, _) => Ok(Decision::action(Action::Choice(choice))),
            (GameKind::Sag, PublicState::Sag(s)) => {
                let balance = s.agents[view.agent.index].balance as i64;
                Ok(Decision::action(Action::Bid(choice.min(balance))))
            }
            (game, _) => Err(DecideError(format!(
                "{} has no programmatic strategy for {game}",
                self.strategy.spec.kind.name()
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::agent_stream;
    use crate::games::g08a::{g08a_step, G08aState};

    fn choice(spec: StrategySpec, prev: Option<f64>, round: u32, seed: u64) -> u32 {
        let mut setup = agent_stream(seed, 0, 0);
        let s = Strategy::new(spec, &mut setup);
        s.next_choice(prev, round, &mut agent_stream(seed, 0, round))
    }

    #[test]
    fn zero_level_fix_is_forty() {
        for r in 1..=10 {
            assert_eq!(choice(StrategySpec::new(StrategyKind::ZeroLevelFix), Some(12.0), r, r as u64), 40);
        }
    }

    #[test]
    fn mono_trend_fix_sequence() {
        assert_eq!(choice(StrategySpec::new(StrategyKind::MonoTrendFix), None, 4, 0), 31);
        // clamps at 1
        assert_eq!(choice(StrategySpec::new(StrategyKind::MonoTrendFix), None, 40, 0), 1);
    }

    #[test]
    fn last_bids_fix_tracks_previous_target() {
        let (state, _, _) = g08a_step(&G08aState::new(5), &[10, 20, 30, 40, 50]).unwrap();
        let prev = previous_target(&PublicState::G08a(state));
        assert_eq!(prev, Some(24.0));
        assert_eq!(choice(StrategySpec::new(StrategyKind::LastBidsFix), prev, 2, 0), 24);
        assert_eq!(choice(StrategySpec::new(StrategyKind::LastBidsFix), None, 1, 0), 40);
    }

    #[test]
    fn mono_trend_var_draws_diff_once() {
        let spec = StrategySpec::new(StrategyKind::MonoTrendVar);
        let s = Strategy::new(spec, &mut agent_stream(3, 1, 0));
        let d = s.common_diff();
        assert!(MONO_VAR_DIFFS.contains(&d));
        let seq: Vec<u32> =
            (1..=5).map(|r| s.next_choice(None, r, &mut agent_stream(3, 1, r))).collect();
        for w in seq.windows(2) {
            assert_eq!(i64::from(w[0]) - i64::from(w[1]), d);
        }
    }

    #[test]
    fn variance_and_std_modes() {
        let mut spec = StrategySpec::new(StrategyKind::ZeroLevelVar);
        assert!((spec.sigma() - 5f64.sqrt()).abs() < 1e-12);
        spec.spread_mode = SpreadMode::StdDev;
        assert_eq!(spec.sigma(), 5.0);
    }

    #[test]
    fn zero_level_var_mean_within_three_sigma() {
        let spec = StrategySpec::new(StrategyKind::ZeroLevelVar);
        let s = Strategy::new(spec, &mut agent_stream(11, 0, 0));
        let n = 10_000;
        let mut rng = agent_stream(11, 0, 1);
        let sum: f64 = (0..n).map(|_| f64::from(s.next_choice(None, 1, &mut rng))).sum();
        let mean = sum / n as f64;
        // rounding adds variance 1/12 on top of the configured variance
        let sd_mean = ((5.0 + 1.0 / 12.0) / n as f64).sqrt();
        assert!((mean - 40.0).abs() < 3.0 * sd_mean, "mean {mean}");
    }

    #[test]
    fn names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.name()));
        }
    }

    proptest::proptest! {
        #[test]
        fn fixed_variants_ignore_seed(round in 1u32..30, prev in 1.0f64..100.0, s1: u64, s2: u64) {
            for kind in [StrategyKind::ZeroLevelFix, StrategyKind::MonoTrendFix, StrategyKind::LastBidsFix] {
                let spec = StrategySpec::new(kind);
                proptest::prop_assert_eq!(choice(spec, Some(prev), round, s1), choice(spec, Some(prev), round, s2));
            }
        }

        #[test]
        fn mono_trend_non_increasing(seed: u64, diff in 1i64..8) {
            for kind in [StrategyKind::MonoTrendFix, StrategyKind::MonoTrendVar] {
                let spec = StrategySpec::new(kind).with_common_diff(diff);
                let s = Strategy::new(spec, &mut agent_stream(seed, 0, 0));
                let seq: Vec<u32> = (1..=25).map(|r| s.next_choice(None, r, &mut agent_stream(seed, 0, r))).collect();
                proptest::prop_assert!(seq.windows(2).all(|w| w[1] <= w[0]));
                proptest::prop_assert!(seq.iter().all(|c| (1..=100).contains(c)));
            }
        }
    }
}
