mod common;

use common::*;
use klevel_core::engine::{
    run_match, Action, AgentSpec, DecideError, Decider, Decision, DecisionView, FnDecider,
    GameKind, MatchConfig, MatchRecord, Outcome, Prediction,
};
use klevel_core::games::build_engine;
use klevel_core::metrics::{
    avg_survival_round, pred_acc, tuning_range, welch_t_test, win_rate, MetricsError,
    MetricsReport,
};
use klevel_core::Method;
use proptest::prelude::*;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// G0.8A match where agent `i` plays `plan[i][round - 1]`.
fn g08a_match(plan: Vec<Vec<i64>>, player_method: Method) -> MatchRecord {
    let n = plan.len();
    let agents = (0..n)
        .map(|i| AgentSpec {
            label: format!("a{i}"),
            player: i == 0,
            method: if i == 0 { llm(player_method, 2) } else { llm(Method::Direct, 1) },
        })
        .collect();
    let mut config = MatchConfig::new(GameKind::G08a, 1, agents);
    config.max_rounds = plan[0].len() as u32;
    let mut deciders: Vec<Box<dyn Decider>> = plan
        .into_iter()
        .map(|moves| {
            Box::new(FnDecider(move |v: &DecisionView<'_>| Action::Choice(moves[v.round as usize - 1])))
                as Box<dyn Decider>
        })
        .collect();
    let mut engine = build_engine(&config).unwrap();
    run_match(&config, engine.as_mut(), &mut deciders).unwrap()
}

#[test]
fn win_rate_counts_rounds() {
    // ten matches of ten rounds; the player undercuts in 65 of the 100 rounds
    let mut records = Vec::new();
    let mut wins_left = 65;
    for _ in 0..10 {
        let mine: Vec<i64> = (0..10)
            .map(|_| {
                if wins_left > 0 {
                    wins_left -= 1;
                    30
                } else {
                    90
                }
            })
            .collect();
        records.push(g08a_match(vec![mine, vec![40; 10], vec![40; 10]], Method::Direct));
    }
    assert_eq!(win_rate(&records, 0).unwrap(), 0.65);
    let losing = g08a_match(vec![vec![90; 4], vec![40; 4], vec![41; 4]], Method::Direct);
    assert_eq!(win_rate(&[losing], 0).unwrap(), 0.0);
}

#[test]
fn symmetric_self_play_splits_evenly() {
    // two identical players alternate who undercuts: 50% each
    let a: Vec<i64> = (0..10).map(|r| if r % 2 == 0 { 30 } else { 60 }).collect();
    let b: Vec<i64> = (0..10).map(|r| if r % 2 == 0 { 60 } else { 30 }).collect();
    let record = g08a_match(vec![a, b], Method::Direct);
    assert_eq!(win_rate(std::slice::from_ref(&record), 0).unwrap(), 0.5);
    assert_eq!(win_rate(&[record], 1).unwrap(), 0.5);
}

#[test]
fn survival_average() {
    let base = {
        let spec = kstep_spec(
            GameKind::Sag,
            programmatic(klevel_core::strategies::StrategyKind::ZeroLevelFix),
            programmatic(klevel_core::strategies::StrategyKind::ZeroLevelFix),
            1,
        );
        klevel_core::harness::execute(&spec, Default::default()).unwrap().records.remove(0)
    };
    let with = |days: u32| {
        let mut r = base.clone();
        r.outcome = Outcome::Sag { survival: vec![days; 5], eliminated_on: vec![None; 5] };
        r
    };
    let avg = avg_survival_round(&[with(10), with(10), with(8)], 0).unwrap();
    assert!((avg - 28.0 / 3.0).abs() < 1e-12);
    assert_eq!(avg_survival_round(&[with(1), with(1)], 0).unwrap(), 1.0);
    assert!(matches!(avg_survival_round(&[], 0), Err(MetricsError::NoRecords)));
}

/// Plays a fixed sequence and logs a fixed prediction and draft each round.
struct Scripted {
    moves: Vec<i64>,
    predictions: Vec<Option<f64>>,
    drafts: Vec<Option<i64>>,
}

impl Decider for Scripted {
    fn decide(&mut self, view: &DecisionView<'_>, _: &mut ChaCha8Rng) -> Result<Decision, DecideError> {
        let i = view.round as usize - 1;
        Ok(Decision {
            action: Some(Action::Choice(self.moves[i])),
            prediction: self.predictions[i].map(|s| Prediction { opponents: Vec::new(), summary: Some(s) }),
            initial_action: self.drafts[i].map(Action::Choice),
            flags: Vec::new(),
        })
    }
}

fn scripted_match(player: Scripted, other: Vec<i64>, method: Method) -> MatchRecord {
    let rounds = other.len() as u32;
    let agents = vec![
        AgentSpec { label: "p".into(), player: true, method: llm(method, 2) },
        AgentSpec { label: "o".into(), player: false, method: llm(Method::Direct, 1) },
    ];
    let mut config = MatchConfig::new(GameKind::G08a, 1, agents);
    config.max_rounds = rounds;
    let mut deciders: Vec<Box<dyn Decider>> = vec![
        Box::new(player),
        Box::new(FnDecider(move |v: &DecisionView<'_>| Action::Choice(other[v.round as usize - 1]))),
    ];
    let mut engine = build_engine(&config).unwrap();
    run_match(&config, engine.as_mut(), &mut deciders).unwrap()
}

#[test]
fn prediction_deviation_against_realised_average() {
    // averages 28 and 24; predictions 30 and 25
    let player = Scripted { moves: vec![26, 20], predictions: vec![Some(30.0), Some(25.0)], drafts: vec![None; 2] };
    let record = scripted_match(player, vec![30, 28], Method::Pcot);
    let acc = pred_acc(&[record], 0).unwrap();
    assert!((acc.mean - 1.5).abs() < 1e-12);
    assert_eq!(acc.per_round, vec![Some(2.0), Some(1.0)]);

    let exact = Scripted { moves: vec![26, 20], predictions: vec![Some(28.0), Some(24.0)], drafts: vec![None; 2] };
    assert_eq!(pred_acc(&[scripted_match(exact, vec![30, 28], Method::Pcot)], 0).unwrap().mean, 0.0);

    let silent = Scripted { moves: vec![26, 20], predictions: vec![None; 2], drafts: vec![None; 2] };
    let err = pred_acc(&[scripted_match(silent, vec![30, 28], Method::Direct)], 0).unwrap_err();
    assert_eq!(err, MetricsError::NoPredictions("Direct".into()));
}

#[test]
fn tuning_range_measures_revisions() {
    let refine = Scripted { moves: vec![32, 30], predictions: vec![None; 2], drafts: vec![Some(40), Some(30)] };
    let record = scripted_match(refine, vec![50, 50], Method::Refine);
    assert_eq!(tuning_range(&[record], 0).unwrap(), vec![8.0, 0.0]);

    // larger K-R adjustments stay larger in the series
    let kr = Scripted { moves: vec![20, 15], predictions: vec![None; 2], drafts: vec![Some(40), Some(35)] };
    let small = Scripted { moves: vec![36, 33], predictions: vec![None; 2], drafts: vec![Some(40), Some(35)] };
    let big = tuning_range(&[scripted_match(kr, vec![50, 50], Method::KLevel)], 0).unwrap();
    let little = tuning_range(&[scripted_match(small, vec![50, 50], Method::Refine)], 0).unwrap();
    assert!(big.iter().zip(&little).all(|(b, l)| b > l));

    let none = Scripted { moves: vec![36, 33], predictions: vec![None; 2], drafts: vec![None; 2] };
    assert!(matches!(
        tuning_range(&[scripted_match(none, vec![50, 50], Method::Direct)], 0),
        Err(MetricsError::NoInitialActions(_))
    ));
}

#[test]
fn welch_matches_an_independent_oracle() {
    // per-repeat win rates of a strong and a weak method
    let kr = [0.7, 0.6, 0.8, 0.5, 0.7, 0.9, 0.6, 0.7, 0.8, 0.6];
    let base = [0.3, 0.2, 0.4, 0.3, 0.1, 0.3, 0.4, 0.2, 0.3, 0.5];
    let ours = welch_t_test(&kr, &base).unwrap();

    let m = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let v = |x: &[f64]| {
        let mu = m(x);
        x.iter().map(|a| (a - mu) * (a - mu)).sum::<f64>() / (x.len() as f64 - 1.0)
    };
    let (sa, sb) = (v(&kr) / 10.0, v(&base) / 10.0);
    let t = (m(&kr) - m(&base)) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / 9.0 + sb * sb / 9.0);
    let p = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, df).unwrap().cdf(t.abs()));
    assert!((ours.t - t).abs() < 1e-9);
    assert!((ours.df - df).abs() < 1e-9);
    assert!((ours.p - p).abs() < 1e-6, "{} vs {p}", ours.p);
    assert!(ours.significant);
}

#[test]
fn report_skips_metrics_that_do_not_apply() {
    let record = g08a_match(vec![vec![30; 3], vec![40; 3]], Method::Direct);
    let report = MetricsReport::compute(&[record], 0, 0.8).unwrap();
    assert_eq!(report.win_rate, Some(1.0));
    assert!(report.pred_acc.is_none() && report.tuning_range.is_none());
    assert_eq!(report.first_round_mean, Some(30.0));
    assert!(report.avg_survival_round.is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn win_rate_ignores_order_and_duplication(
        plans in proptest::collection::vec(
            proptest::collection::vec(proptest::collection::vec(1i64..=100, 4), 3),
            1..5,
        ),
        rotate in 0usize..5,
    ) {
        let records: Vec<MatchRecord> = plans
            .into_iter()
            .map(|plan| g08a_match(plan, Method::Direct))
            .collect();
        let base = win_rate(&records, 0).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        let mut shuffled = records.clone();
        let len = shuffled.len();
        shuffled.rotate_left(rotate % len);
        shuffled.reverse();
        prop_assert!((win_rate(&shuffled, 0).unwrap() - base).abs() < 1e-12);
        let doubled: Vec<MatchRecord> = records.iter().chain(&records).cloned().collect();
        prop_assert!((win_rate(&doubled, 0).unwrap() - base).abs() < 1e-12);
        let r1 = MetricsReport::compute(&records, 0, 0.8).unwrap();
        let r2 = MetricsReport::compute(&doubled, 0, 0.8).unwrap();
        prop_assert!((r1.mean - r2.mean).abs() < 1e-12);
        prop_assert_eq!(r1.first_round_mean, r2.first_round_mean);
    }
}
