use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{GameKind, MatchRecord, MethodSpec};

/// Average token use of one method per game test, in thousands of tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TallyRow {
    pub game: GameKind,
    pub method: String,
    /// Agent-matches averaged over.
    pub tests: usize,
    pub input_k: f64,
    pub output_k: f64,
    pub total_k: f64,
    pub calls: f64,
}

/// Per-method token table over every backend-driven agent in `records`.
pub fn tally_report(records: &[MatchRecord]) -> Vec<TallyRow> {
    let mut groups: BTreeMap<(GameKind, String), (usize, [f64; 4])> = BTreeMap::new();
    for record in records {
        for (spec, usage) in record.config.agents.iter().zip(&record.usage) {
            if !matches!(spec.method, MethodSpec::Llm { .. }) {
                continue;
            }
            let entry = groups.entry((record.config.game, spec.method.label())).or_default();
            entry.0 += 1;
            entry.1[0] += usage.input_tokens as f64;
            entry.1[1] += usage.output_tokens as f64;
            entry.1[2] += usage.total as f64;
            entry.1[3] += usage.call_count as f64;
        }
    }
    groups
        .into_iter()
        .map(|((game, method), (n, sums))| {
            let avg = |x: f64| x / n as f64;
            TallyRow {
                game,
                method,
                tests: n,
                input_k: avg(sums[0]) / 1000.0,
                output_k: avg(sums[1]) / 1000.0,
                total_k: avg(sums[2]) / 1000.0,
                calls: avg(sums[3]),
            }
        })
        .collect()
}
