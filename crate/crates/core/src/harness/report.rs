//! CSV reports: method matrices, significance tests and strategic depth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{HarnessError, RunManifest};
use crate::engine::{GameKind, MatchRecord};
use crate::gateway::TallyRow;
use crate::metrics::{mean, std_dev, strategic_depth, t_test, TTestVariant};

/// Reference depths shipped with the crate: human populations and LLM methods.
pub const DEPTH_ANCHORS_CSV: &str = include_str!("../../data/depth_anchors.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixMetric {
    WinRate,
    SurvivalRound,
    Payoff,
}

impl MatrixMetric {
    pub fn for_game(game: GameKind) -> Self {
        match game {
            GameKind::G08a | GameKind::Neg => MatrixMetric::WinRate,
            GameKind::Sag => MatrixMetric::SurvivalRound,
            GameKind::Pd => MatrixMetric::Payoff,
        }
    }

    fn header(self) -> &'static str {
        match self {
            MatrixMetric::WinRate => "opponent (win rate %)",
            MatrixMetric::SurvivalRound => "opponent (survival round)",
            MatrixMetric::Payoff => "opponent (payoff)",
        }
    }

    /// Display scale: win rates are shown in percent.
    fn scale(self) -> f64 {
        match self {
            MatrixMetric::WinRate => 100.0,
            _ => 1.0,
        }
    }
}

fn to_string(buf: Vec<u8>) -> String {
    String::from_utf8(buf).expect("csv output is utf-8")
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    to_string(w.into_inner().expect("writing to a Vec cannot fail"))
}

struct Grid {
    metric: MatrixMetric,
    players: Vec<String>,
    opponents: Vec<String>,
    cells: BTreeMap<(usize, usize), Vec<f64>>,
}

fn grid(manifests: &[RunManifest]) -> Result<Grid, HarnessError> {
    let Some(first) = manifests.first() else {
        return Ok(Grid {
            metric: MatrixMetric::WinRate,
            players: Vec::new(),
            opponents: Vec::new(),
            cells: BTreeMap::new(),
        });
    };
    let mut g = Grid {
        metric: first.metric,
        players: Vec::new(),
        opponents: Vec::new(),
        cells: BTreeMap::new(),
    };
    for m in manifests {
        if m.game != first.game || m.metric != first.metric {
            return Err(HarnessError::Inconsistent(format!(
                "cannot mix {} ({:?}) with {} ({:?}) in one matrix",
                first.game, first.metric, m.game, m.metric
            )));
        }
        let col = position_or_push(&mut g.players, &m.player);
        let row = position_or_push(&mut g.opponents, &m.opponent);
        g.cells.entry((row, col)).or_default().extend(&m.summary.per_repeat);
    }
    Ok(g)
}

fn position_or_push(list: &mut Vec<String>, item: &str) -> usize {
    list.iter().position(|x| x == item).unwrap_or_else(|| {
        list.push(item.to_string());
        list.len() - 1
    })
}

/// Opponent-by-player matrix of "mean ± std" cells (std across repeats),
/// followed by an Average row of the column means. Runs that share a cell
/// are pooled.
pub fn build_matrix(manifests: &[RunManifest]) -> Result<String, HarnessError> {
    let g = grid(manifests)?;
    let s = g.metric.scale();
    let mut w = writer();
    let mut header = vec![g.metric.header().to_string()];
    header.extend(g.players.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    if g.opponents.is_empty() {
        return Ok(finish(w));
    }
    let mut column_means: Vec<Vec<f64>> = vec![Vec::new(); g.players.len()];
    for (row, opponent) in g.opponents.iter().enumerate() {
        let mut line = vec![opponent.clone()];
        for (col, means) in column_means.iter_mut().enumerate() {
            match g.cells.get(&(row, col)).filter(|v| !v.is_empty()) {
                Some(values) => {
                    let m = mean(values) * s;
                    means.push(m);
                    line.push(format!("{:.2} ± {:.2}", m, std_dev(values) * s));
                }
                None => line.push(String::new()),
            }
        }
        w.write_record(&line).map_err(csv_err)?;
    }
    let mut line = vec!["Average".to_string()];
    for means in &column_means {
        line.push(if means.is_empty() { String::new() } else { format!("{:.2}", mean(means)) });
    }
    w.write_record(&line).map_err(csv_err)?;
    Ok(finish(w))
}

/// t-tests of every player column against `reference`, per opponent row.
/// Cells with fewer than two repeats on either side are skipped.
pub fn significance_table(
    manifests: &[RunManifest],
    reference: &str,
    variant: TTestVariant,
) -> Result<String, HarnessError> {
    let g = grid(manifests)?;
    let mut w = writer();
    w.write_record([
        "opponent", "player", "reference", "player_mean", "reference_mean", "t", "df", "p",
        "significant", "degenerate",
    ])
    .map_err(csv_err)?;
    let Some(ref_col) = g.players.iter().position(|p| p == reference) else {
        return Ok(finish(w));
    };
    for (row, opponent) in g.opponents.iter().enumerate() {
        let Some(base) = g.cells.get(&(row, ref_col)).filter(|v| v.len() >= 2) else { continue };
        for (col, player) in g.players.iter().enumerate() {
            if col == ref_col {
                continue;
            }
            let Some(values) = g.cells.get(&(row, col)).filter(|v| v.len() >= 2) else { continue };
            let Ok(t) = t_test(values, base, variant) else { continue };
            w.write_record([
                opponent.clone(),
                player.clone(),
                reference.to_string(),
                format!("{:.4}", mean(values)),
                format!("{:.4}", mean(base)),
                format!("{:.4}", t.t),
                format!("{:.4}", t.df),
                format!("{:.6}", t.p),
                t.significant.to_string(),
                t.degenerate.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    Ok(finish(w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthAnchor {
    pub group: String,
    pub source: String,
    pub mean_choice: f64,
    pub alpha: f64,
    pub reported_depth: f64,
}

pub fn depth_anchors() -> Vec<DepthAnchor> {
    csv::Reader::from_reader(DEPTH_ANCHORS_CSV.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .expect("shipped anchor file parses")
}

/// First-round mean choice and strategic depth per method over the G08A
/// records, followed by the shipped anchor rows. No records, no rows.
pub fn emit_depth_report(records: &[MatchRecord], alpha: f64) -> String {
    let mut w = writer();
    w.write_record(["group", "source", "mean_choice", "alpha", "strategic_depth", "reported_depth"])
        .expect("vec writer");
    let mut by_method: Vec<(String, Vec<f64>)> = Vec::new();
    for record in records.iter().filter(|r| r.config.game == GameKind::G08a) {
        let Some(first) = record.rounds.first() else { continue };
        for action in &first.actions {
            let Some(choice) = action.action.as_number() else { continue };
            let label = record.config.agents[action.agent.index].method.label();
            let i = match by_method.iter().position(|(l, _)| *l == label) {
                Some(i) => i,
                None => {
                    by_method.push((label, Vec::new()));
                    by_method.len() - 1
                }
            };
            by_method[i].1.push(choice);
        }
    }
    if by_method.is_empty() {
        return finish(w);
    }
    for (label, choices) in &by_method {
        let m = mean(choices);
        let depth = strategic_depth(m, alpha).map(|d| format!("{d:.4}")).unwrap_or_default();
        w.write_record(["measured".to_string(), label.clone(), format!("{m:.4}"), format!("{alpha:.4}"), depth, String::new()])
            .expect("vec writer");
    }
    for a in depth_anchors() {
        let depth = strategic_depth(a.mean_choice, a.alpha).map(|d| format!("{d:.4}")).unwrap_or_default();
        w.write_record([
            a.group,
            a.source,
            format!("{:.4}", a.mean_choice),
            format!("{:.4}", a.alpha),
            depth,
            format!("{:.2}", a.reported_depth),
        ])
        .expect("vec writer");
    }
    finish(w)
}

pub(crate) fn tally_csv(rows: &[TallyRow]) -> String {
    let mut w = writer();
    w.write_record(["game", "method", "tests", "input_k", "output_k", "total_k", "calls"])
        .expect("vec writer");
    for r in rows {
        w.write_record([
            r.game.name().to_string(),
            r.method.clone(),
            r.tests.to_string(),
            format!("{:.3}", r.input_k),
            format!("{:.3}", r.output_k),
            format!("{:.3}", r.total_k),
            format!("{:.2}", r.calls),
        ])
        .expect("vec writer");
    }
    finish(w)
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Inconsistent(format!("csv: {e}"))
}
