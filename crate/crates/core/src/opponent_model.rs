//! Bayesian opponent model over the programmatic strategy family.
//!
//! Each hypothesis is a strategy spec. Deterministic rules put `1 - 99ε` on
//! their output and `ε` on every other choice; noisy rules put the
//! discretised Normal mass on each integer (mixed with `ε`). MonoTrend (Var)
//! carries a latent per-agent difference whose own posterior is tracked, so
//! its predictive distribution sharpens as the difference is identified.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::agent_stream;
use crate::games::g08a::g08a_step;
use crate::games::g08a::G08aState;
use crate::strategies::{clamp_choice, Strategy, StrategyKind, StrategySpec, MONO_VAR_DIFFS};

/// Likelihood assigned to a choice a deterministic rule did not make.
pub const EPSILON: f64 = 1e-6;
/// Smallest weight a hypothesis keeps after an update.
pub const WEIGHT_FLOOR: f64 = 1e-300;

const CHOICES: usize = 100;

/// What an observer knows when an agent makes its round-`round` choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObsEnv {
    pub round: u32,
    pub previous_target: Option<f64>,
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Distribution of `clamp(round(N(centre, sigma)), 1, 100)`, mixed with ε.
fn discretised_normal(centre: f64, sigma: f64) -> Vec<f64> {
    let cdf = |x: f64| normal_cdf((x - centre) / sigma);
    (1..=CHOICES)
        .map(|a| {
            let a = a as f64;
            let mass = if a == 1.0 {
                cdf(1.5)
            } else if a == CHOICES as f64 {
                1.0 - cdf(CHOICES as f64 - 0.5)
            } else {
                cdf(a + 0.5) - cdf(a - 0.5)
            };
            (1.0 - CHOICES as f64 * EPSILON) * mass + EPSILON
        })
        .collect()
}

fn point_mass(choice: u32) -> Vec<f64> {
    let mut pmf = vec![EPSILON; CHOICES];
    pmf[choice as usize - 1] = 1.0 - (CHOICES as f64 - 1.0) * EPSILON;
    pmf
}

/// Choice distribution of `spec` with its MonoTrend difference fixed to `diff`.
fn component_pmf(spec: &StrategySpec, env: ObsEnv, diff: i64) -> Vec<f64> {
    let centre = spec.centre(env.previous_target, env.round, diff);
    match spec.kind {
        StrategyKind::ZeroLevelVar | StrategyKind::LastBidsVar => discretised_normal(centre, spec.sigma()),
        _ => point_mass(clamp_choice(centre)),
    }
}

/// Latent MonoTrend differences a hypothesis can hold, with prior weights.
fn latent_prior(spec: &StrategySpec) -> Vec<(i64, f64)> {
    match spec.kind {
        StrategyKind::MonoTrendVar => {
            let n = MONO_VAR_DIFFS.clone().count() as f64;
            MONO_VAR_DIFFS.map(|d| (d, 1.0 / n)).collect()
        }
        _ => vec![(spec.common_diff, 1.0)],
    }
}

fn mixture(spec: &StrategySpec, latent: &[(i64, f64)], env: ObsEnv) -> Vec<f64> {
    let mut pmf = vec![0.0; CHOICES];
    for &(d, w) in latent {
        for (p, c) in pmf.iter_mut().zip(component_pmf(spec, env, d)) {
            *p += w * c;
        }
    }
    pmf
}

/// P(action | env, θ) for a fresh agent (latent difference at its prior).
pub fn likelihood(spec: &StrategySpec, env: ObsEnv, action: u32) -> f64 {
    if !(1..=CHOICES as u32).contains(&action) {
        return 0.0;
    }
    mixture(spec, &latent_prior(spec), env)[action as usize - 1]
}

/// The six programmatic strategies, with the given MonoTrend (Fix) difference.
pub fn strategy_family(mono_fix_diff: i64) -> Vec<StrategySpec> {
    StrategyKind::ALL
        .into_iter()
        .map(|k| match k {
            StrategyKind::MonoTrendFix => StrategySpec::new(k).with_common_diff(mono_fix_diff),
            _ => StrategySpec::new(k),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSpace {
    pub hypotheses: Vec<StrategySpec>,
    pub prior: Vec<f64>,
}

impl HypothesisSpace {
    pub fn uniform(hypotheses: Vec<StrategySpec>) -> Self {
        let n = hypotheses.len();
        Self { hypotheses, prior: vec![1.0 / n as f64; n] }
    }

    pub fn new(hypotheses: Vec<StrategySpec>, prior: Vec<f64>) -> Result<Self, String> {
        if hypotheses.is_empty() || hypotheses.len() != prior.len() {
            return Err("need one positive prior weight per hypothesis".into());
        }
        if prior.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err("prior weights must be positive".into());
        }
        let sum: f64 = prior.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("prior weights sum to {sum}, not 1"));
        }
        Ok(Self { hypotheses, prior })
    }

    pub fn names(&self) -> Vec<String> {
        self.hypotheses.iter().map(|h| h.kind.name().to_string()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictive {
    /// `pmf[a - 1]` is the probability of choice `a`.
    pub pmf: Vec<f64>,
    pub mean: f64,
}

impl Predictive {
    pub fn mass(&self, choice: u32) -> f64 {
        self.pmf.get(choice as usize - 1).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    space: HypothesisSpace,
    weights: Vec<f64>,
    latent: Vec<Vec<(i64, f64)>>,
    observations: usize,
    resets: usize,
}

impl Posterior {
    pub fn new(space: HypothesisSpace) -> Self {
        let latent = space.hypotheses.iter().map(latent_prior).collect();
        Self { weights: space.prior.clone(), space, latent, observations: 0, resets: 0 }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn space(&self) -> &HypothesisSpace {
        &self.space
    }

    pub fn observations(&self) -> usize {
        self.observations
    }

    /// Number of degenerate updates that reset the posterior to uniform.
    pub fn resets(&self) -> usize {
        self.resets
    }

    pub fn weight_of(&self, kind: StrategyKind) -> f64 {
        self.space
            .hypotheses
            .iter()
            .zip(&self.weights)
            .filter(|(h, _)| h.kind == kind)
            .map(|(_, w)| w)
            .sum()
    }

    /// Predictive distribution of each hypothesis given what it has learned.
    pub fn hypothesis_pmfs(&self, env: ObsEnv) -> Vec<Vec<f64>> {
        self.space
            .hypotheses
            .iter()
            .zip(&self.latent)
            .map(|(h, latent)| mixture(h, latent, env))
            .collect()
    }

    /// Bayes update on one observed choice. Returns `true` when every
    /// hypothesis gave the observation zero likelihood and the weights were
    /// reset to uniform.
    pub fn update(&mut self, env: ObsEnv, action: u32) -> bool {
        self.observations += 1;
        let idx = (action as usize).clamp(1, CHOICES) - 1;
        let in_range = (1..=CHOICES as u32).contains(&action);
        let pmfs = self.hypothesis_pmfs(env);
        let mut next: Vec<f64> = self
            .weights
            .iter()
            .zip(&pmfs)
            .map(|(w, pmf)| if in_range { w * pmf[idx] } else { 0.0 })
            .collect();
        let total: f64 = next.iter().sum();
        let degenerate = !(total.is_finite() && total > 0.0);
        if degenerate {
            self.resets += 1;
            let n = next.len() as f64;
            next.iter_mut().for_each(|w| *w = 1.0 / n);
        } else {
            next.iter_mut().for_each(|w| *w = (*w / total).max(WEIGHT_FLOOR));
            let renorm: f64 = next.iter().sum();
            next.iter_mut().for_each(|w| *w /= renorm);
        }
        self.weights = next;

        if in_range {
            for (h, latent) in self.space.hypotheses.iter().zip(self.latent.iter_mut()) {
                if latent.len() < 2 {
                    continue;
                }
                let updated: Vec<(i64, f64)> = latent
                    .iter()
                    .map(|&(d, w)| (d, w * component_pmf(h, env, d)[idx]))
                    .collect();
                let sum: f64 = updated.iter().map(|(_, w)| w).sum();
                if sum > 0.0 {
                    *latent = updated.into_iter().map(|(d, w)| (d, w / sum)).collect();
                }
            }
        }
        degenerate
    }

    /// Mixture over hypotheses of their predictive distributions.
    pub fn predict_next(&self, env: ObsEnv) -> Predictive {
        let mut pmf = vec![0.0; CHOICES];
        for (w, h) in self.weights.iter().zip(self.hypothesis_pmfs(env)) {
            for (p, q) in pmf.iter_mut().zip(h) {
                *p += w * q;
            }
        }
        let mean = pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum::<f64>()
            / pmf.iter().sum::<f64>();
        Predictive { pmf, mean }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u32,
    /// Posterior weights after observing round `t`.
    pub weights: Vec<f64>,
    /// Mixture mean predicted before round `t` was observed.
    pub prediction: f64,
    pub actual: u32,
    pub deviation: f64,
}

/// Plays `rounds` of G0.8A with `num_agents` agents that all follow
/// `truth`, and tracks the posterior an observer forms about agent 0.
pub fn simulate(
    truth: &StrategySpec,
    space: &HypothesisSpace,
    num_agents: usize,
    rounds: u32,
    seed: u64,
) -> Vec<TraceRow> {
    let agents: Vec<Strategy> =
        (0..num_agents).map(|i| Strategy::new(*truth, &mut agent_stream(seed, i, 0))).collect();
    let mut state = G08aState::new(num_agents);
    let mut posterior = Posterior::new(space.clone());
    let mut trace = Vec::with_capacity(rounds as usize);
    for t in 1..=rounds {
        let previous_target = state.last_target().map(|r| *r.numer() as f64 / *r.denom() as f64);
        let env = ObsEnv { round: t, previous_target };
        let choices: Vec<u32> = agents
            .iter()
            .enumerate()
            .map(|(i, s)| s.next_choice(previous_target, t, &mut agent_stream(seed, i, t)))
            .collect();
        let prediction = posterior.predict_next(env).mean;
        posterior.update(env, choices[0]);
        trace.push(TraceRow {
            t,
            weights: posterior.weights().to_vec(),
            prediction,
            actual: choices[0],
            deviation: (prediction - f64::from(choices[0])).abs(),
        });
        state = g08a_step(&state, &choices).expect("strategies emit in-range choices").0;
    }
    trace
}

/// CSV with columns `t`, one weight column per hypothesis, `prediction`,
/// `actual`, `deviation`.
pub fn write_trace_csv<W: Write>(out: W, names: &[String], trace: &[TraceRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(names.iter().map(|n| format!("w[{n}]")));
    header.extend(["prediction", "actual", "deviation"].map(String::from));
    w.write_record(&header)?;
    for row in trace {
        let mut rec = vec![row.t.to_string()];
        rec.extend(row.weights.iter().map(|x| format!("{x:.12e}")));
        rec.push(format!("{:.6}", row.prediction));
        rec.push(row.actual.to_string());
        rec.push(format!("{:.6}", row.deviation));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn env(round: u32, previous_target: Option<f64>) -> ObsEnv {
        ObsEnv { round, previous_target }
    }

    #[test]
    fn fixed_rule_likelihoods() {
        let s = StrategySpec::new(StrategyKind::ZeroLevelFix);
        assert!((likelihood(&s, env(3, Some(20.0)), 40) - 1.0).abs() < 1e-4);
        assert_eq!(likelihood(&s, env(3, Some(20.0)), 41), EPSILON);
    }

    #[test]
    fn var_rule_is_normal_mass() {
        let s = StrategySpec::new(StrategyKind::ZeroLevelVar);
        let n = Normal::new(40.0, 5f64.sqrt()).unwrap();
        let expected = n.cdf(40.5) - n.cdf(39.5);
        assert!((likelihood(&s, env(1, None), 40) - expected).abs() < 1e-4);
        let total: f64 = (1..=100).map(|a| likelihood(&s, env(1, None), a)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shared_first_round_keeps_posterior_uniform() {
        let space = HypothesisSpace::uniform(vec![
            StrategySpec::new(StrategyKind::ZeroLevelFix),
            StrategySpec::new(StrategyKind::LastBidsFix),
        ]);
        let mut p = Posterior::new(space);
        p.update(env(1, None), 40);
        assert!((p.weights()[0] - 0.5).abs() < 1e-9);
        // round 2 after a target of 24: only the zero-level rule still says 40
        p.update(env(2, Some(24.0)), 40);
        assert!(p.weights()[0] > 0.999);
    }

    #[test]
    fn mixture_mean_of_two_point_rules() {
        let space = HypothesisSpace::uniform(vec![
            StrategySpec::new(StrategyKind::LastBidsFix),
            StrategySpec { start: 50, ..StrategySpec::new(StrategyKind::ZeroLevelFix) },
        ]);
        let p = Posterior::new(space);
        let pred = p.predict_next(env(2, Some(30.0)));
        // ε smoothing on the other 99 choices moves the mean by ~5e-3
        assert!((pred.mean - 40.0).abs() < 1e-2);
        assert!((pred.mass(30) - 0.5).abs() < 1e-4 && (pred.mass(50) - 0.5).abs() < 1e-4);
    }

    #[test]
    fn concentrated_posterior_predicts_forty() {
        let mut p = Posterior::new(HypothesisSpace::uniform(strategy_family(6)));
        let mut target = None;
        for t in 1..=10 {
            p.update(env(t, target), 40);
            target = Some(32.0);
        }
        assert!(p.weight_of(StrategyKind::ZeroLevelFix) > 0.999);
        assert!(p.predict_next(env(11, Some(32.0))).mass(40) > 0.99);
    }

    #[test]
    fn all_zero_likelihood_resets() {
        let mut p = Posterior::new(HypothesisSpace::uniform(vec![StrategySpec::new(
            StrategyKind::ZeroLevelFix,
        )]));
        assert!(p.update(env(1, None), 0));
        assert_eq!(p.resets(), 1);
        assert_eq!(p.weights(), &[1.0]);
    }

    /// Same difference for Fix and Var MonoTrend: once Var's latent
    /// difference is pinned down the two predict identically, so Fix keeps
    /// the 5:1 advantage it gained from Var's uniform prior over 1..=5.
    #[test]
    fn mono_trend_with_in_support_difference_is_not_identifiable() {
        let truth = StrategySpec::new(StrategyKind::MonoTrendFix);
        let space = HypothesisSpace::uniform(strategy_family(3));
        let trace = simulate(&truth, &space, 5, 20, 11);
        let fix = trace.last().unwrap().weights[2];
        assert!((fix - 5.0 / 6.0).abs() < 1e-3, "posterior(MonoTrend Fix) = {fix}");
    }

    #[test]
    fn trace_csv_shape() {
        let space = HypothesisSpace::uniform(strategy_family(6));
        let trace = simulate(&StrategySpec::new(StrategyKind::LastBidsVar), &space, 5, 4, 3);
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &space.names(), &trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0].split(',').count(), 1 + 6 + 3);
    }

    fn oracle_pmf(spec: &StrategySpec, e: ObsEnv, a: u32) -> f64 {
        // independent evaluation: statrs CDF for noisy rules, explicit rule
        // outputs for deterministic ones
        let diffs: Vec<i64> = match spec.kind {
            StrategyKind::MonoTrendVar => (1..=5).collect(),
            _ => vec![spec.common_diff],
        };
        let mut total = 0.0;
        for d in &diffs {
            let centre = match spec.kind {
                StrategyKind::ZeroLevelFix | StrategyKind::ZeroLevelVar => 40.0,
                StrategyKind::MonoTrendFix | StrategyKind::MonoTrendVar => {
                    40.0 - (e.round as f64 - 1.0) * *d as f64
                }
                _ => e.previous_target.unwrap_or(40.0),
            };
            let p = match spec.kind {
                StrategyKind::ZeroLevelVar | StrategyKind::LastBidsVar => {
                    let n = Normal::new(centre, 5f64.sqrt()).unwrap();
                    let lo = if a == 1 { f64::NEG_INFINITY } else { a as f64 - 0.5 };
                    let hi = if a == 100 { f64::INFINITY } else { a as f64 + 0.5 };
                    (1.0 - 100.0 * EPSILON) * (n.cdf(hi) - n.cdf(lo)) + EPSILON
                }
                _ => {
                    let out = centre.round().clamp(1.0, 100.0) as u32;
                    if out == a { 1.0 - 99.0 * EPSILON } else { EPSILON }
                }
            };
            total += p / diffs.len() as f64;
        }
        total
    }

    proptest! {
        #[test]
        fn weights_stay_normalised(obs in proptest::collection::vec((1u32..=100, 1.0f64..100.0), 1..25)) {
            let mut p = Posterior::new(HypothesisSpace::uniform(strategy_family(6)));
            for (t, (a, target)) in obs.iter().enumerate() {
                let e = env(t as u32 + 1, (t > 0).then_some(*target));
                p.update(e, *a);
                let sum: f64 = p.weights().iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
                prop_assert!(p.weights().iter().all(|w| *w > 0.0));
            }
        }

        #[test]
        fn mixture_matches_enumeration(
            raw in proptest::collection::vec(0.01f64..1.0, 6),
            round in 1u32..15,
            target in 1.0f64..100.0,
        ) {
            let sum: f64 = raw.iter().sum();
            let prior: Vec<f64> = raw.iter().map(|w| w / sum).collect();
            let space = HypothesisSpace::new(strategy_family(6), prior.clone()).unwrap();
            let e = env(round, (round > 1).then_some(target));
            let pred = Posterior::new(space.clone()).predict_next(e);
            for a in 1..=100u32 {
                let brute: f64 = space.hypotheses.iter().zip(&prior).map(|(h, w)| w * oracle_pmf(h, e, a)).sum();
                prop_assert!((pred.mass(a) - brute).abs() < 1e-9, "a={} {} vs {}", a, pred.mass(a), brute);
            }
        }
    }
}
