mod common;

use std::collections::BTreeSet;

use common::*;
use klevel_core::engine::{Action, GameKind, PrivateInfo};
use klevel_core::gateway::{Script, ScriptedBackend};
use klevel_core::harness::{execute, RunOptions};
use klevel_core::reasoning::{direct_decide, k_reasoning, KrOptions, Step, TemplateCatalog};
use klevel_core::strategies::StrategyKind;
use klevel_core::Method;

fn kstep() -> Recording<ScriptedBackend> {
    Recording::new(ScriptedBackend::new(Script::KStep))
}

#[test]
fn call_count_law_holds_in_every_game() {
    let catalog = TemplateCatalog::embedded();
    let cases = [
        (GameKind::G08a, 2..=5usize),
        (GameKind::Sag, 2..=5),
        (GameKind::Neg, 2..=2),
        (GameKind::Pd, 2..=2),
    ];
    for (game, ms) in cases {
        for m in ms {
            for k in 1..=4 {
                let input = fresh_input(game, m, 0, 9);
                let mut backend = kstep();
                let out = k_reasoning(&input, k, KrOptions::default(), &mut backend, &catalog).unwrap();
                assert_eq!(backend.calls() as u64, kr_calls(m as u64, k), "{game} M={m} k={k}");
                assert_eq!(u64::from(out.calls), kr_calls(m as u64, k));
            }
        }
    }
}

/// Distinct (agent, level) anticipations reachable from the decider: what
/// a memoised recursion has to compute once each.
fn reachable(m: usize, k: u32) -> usize {
    let mut seen = BTreeSet::new();
    let mut frontier = vec![(0usize, k)];
    while let Some((who, level)) = frontier.pop() {
        if level <= 1 {
            continue;
        }
        for j in (0..m).filter(|&j| j != who) {
            if seen.insert((j, level - 1)) {
                frontier.push((j, level - 1));
            }
        }
    }
    seen.len()
}

#[test]
fn memoised_recursion_calls_each_anticipation_once() {
    let catalog = TemplateCatalog::embedded();
    for m in 2..=5usize {
        for k in 1..=5u32 {
            let input = fresh_input(GameKind::G08a, m, 0, 3);
            let mut backend = kstep();
            let memo = KrOptions { memoize: true };
            k_reasoning(&input, k, memo, &mut backend, &catalog).unwrap();
            assert_eq!(backend.calls(), 1 + reachable(m, k), "M={m} k={k}");
            // with two agents the levels alternate, so each level holds one agent
            let closed = match (m, k) {
                (_, 1) => 1,
                (2, k) => k as usize,
                (m, k) => 1 + (m - 1) + m * (k as usize - 2),
            };
            assert_eq!(backend.calls(), closed);
        }
    }
}

#[test]
fn memoisation_does_not_change_the_decision_under_a_pure_script() {
    let catalog = TemplateCatalog::embedded();
    for k in 1..=4 {
        let input = fresh_input(GameKind::G08a, 5, 2, 3);
        let plain = k_reasoning(&input, k, KrOptions::default(), &mut kstep(), &catalog).unwrap();
        let memo = k_reasoning(&input, k, KrOptions { memoize: true }, &mut kstep(), &catalog).unwrap();
        assert_eq!(plain.action, memo.action);
        assert_eq!(plain.anticipations, memo.anticipations);
    }
}

#[test]
fn level_one_is_direct() {
    let catalog = TemplateCatalog::embedded();
    for game in [GameKind::G08a, GameKind::Sag, GameKind::Neg, GameKind::Pd] {
        let n = if matches!(game, GameKind::Neg | GameKind::Pd) { 2 } else { 4 };
        let input = fresh_input(game, n, 0, 17);
        let mut a = kstep();
        let mut b = kstep();
        let kr = k_reasoning(&input, 1, KrOptions::default(), &mut a, &catalog).unwrap();
        let direct = direct_decide(&input, &mut b, &catalog).unwrap();
        assert_eq!(kr.action, direct.action, "{game}");
        assert_eq!(a.requests.len(), 1);
        assert_eq!(a.requests[0].messages, b.requests[0].messages, "{game}");
        assert!(kr.anticipations.is_empty());
    }
}

#[test]
fn private_information_stays_with_its_owner() {
    let catalog = TemplateCatalog::embedded();
    let input = fresh_input(GameKind::Neg, 2, 0, 5);
    let Some(PrivateInfo::NegUtilities(mine)) = input.private.clone() else {
        panic!("NEG agents have private utilities");
    };
    let marker = format!("peppers {}, cherries {}, strawberries {}", mine[0], mine[1], mine[2]);
    let mut backend = kstep();
    k_reasoning(&input, 3, KrOptions::default(), &mut backend, &catalog).unwrap();
    assert_eq!(backend.calls(), 3);
    for req in &backend.requests {
        let text = req.prompt_text();
        if req.context.perspective == 0 {
            assert!(req.context.private.is_some());
            assert!(text.contains(&marker), "own prompt lacks own values");
        } else {
            assert!(req.context.private.is_none(), "leaked into {:?}", req.context.step);
            assert!(!text.contains("private value"), "opponent view mentions private values");
        }
    }
    // level-3 for agent 0: anticipate agent 1 at level 2, which anticipates agent 0 at level 1
    let steps: Vec<(usize, Step)> =
        backend.requests.iter().map(|r| (r.context.perspective, r.context.step)).collect();
    assert_eq!(steps, vec![(0, Step::Direct), (1, Step::KrDecide), (0, Step::KrDecide)]);
}

#[test]
fn anticipations_follow_the_active_set() {
    let catalog = TemplateCatalog::embedded();
    let mut input = fresh_input(GameKind::Sag, 5, 0, 5);
    input.active = vec![0, 2, 4];
    let mut backend = kstep();
    let out = k_reasoning(&input, 2, KrOptions::default(), &mut backend, &catalog).unwrap();
    assert_eq!(backend.calls(), 3);
    let who: Vec<usize> = out.anticipations.iter().map(|(j, _)| *j).collect();
    assert_eq!(who, vec![2, 4]);
}

fn best_response_brute(others: &[u32]) -> u32 {
    let n = others.len() as f64 + 1.0;
    let sum: f64 = others.iter().map(|&c| c as f64).sum();
    (1..=100u32)
        .min_by(|&a, &b| {
            let da = (a as f64 - 0.8 * (sum + a as f64) / n).abs();
            let db = (b as f64 - 0.8 * (sum + b as f64) / n).abs();
            da.total_cmp(&db)
        })
        .unwrap()
}

#[test]
fn closed_loop_level_two_best_responds_to_fixed_opponents() {
    let spec = kstep_spec(
        GameKind::G08a,
        llm(Method::KLevel, 2),
        programmatic(StrategyKind::ZeroLevelFix),
        2,
    );
    let out = execute(&spec, RunOptions::default()).unwrap();
    for record in &out.records {
        let first = &record.rounds[0];
        let me = first.actions.iter().find(|a| a.agent.index == 0).unwrap();
        assert_eq!(me.action, Action::Choice(i64::from(best_response_brute(&[40, 40, 40, 40]))));
        let pred = me.prediction.as_ref().expect("K-R logs its anticipations");
        assert_eq!(pred.opponents.len(), 4);
        // every opponent's level-1 anticipation is the fixed 40 it actually plays
        assert!(pred.opponents.iter().all(|(_, a)| *a == Action::Choice(40)));
        assert_eq!(record.usage[0].call_count, 5 * record.rounds.len() as u64);
        // the player wins every round against the static field
        if let klevel_core::engine::Outcome::G08a { scores } = &record.outcome {
            assert_eq!(scores[0] as usize, record.rounds.len());
        }
    }
}
