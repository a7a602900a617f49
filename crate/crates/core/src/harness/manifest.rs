use std::collections::BTreeMap;
use std::fs;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::MatrixMetric;
use super::{io_err, sha256_hex, stream_name, ExperimentSpec, HarnessError};
use crate::engine::{verify_replay, GameKind, MatchRecord, MethodSpec};
use crate::gateway::{read_transcript_records, tally_report, CallStatus, TallyRow, UsageTally};
use crate::metrics::MetricsReport;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchEntry {
    pub repeat: u32,
    pub seed: u64,
    /// Line of `records.jsonl` holding this match, if it produced a record.
    pub record: Option<usize>,
    pub valid: bool,
    /// Headline metric of the player in this match.
    pub metric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Headline metric over the valid repeats; std is across repeats.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub per_repeat: Vec<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub spec_hash: String,
    pub spec: ExperimentSpec,
    pub label: String,
    pub game: GameKind,
    pub player: String,
    pub opponent: String,
    pub metric: MatrixMetric,
    pub alpha: f64,
    pub seeds: Vec<u64>,
    pub matches: Vec<MatchEntry>,
    pub complete: bool,
    pub errors: Vec<String>,
    pub summary: RunSummary,
    pub files: Vec<FileEntry>,
}

impl RunManifest {
    pub(crate) fn build(
        spec: &ExperimentSpec,
        mut matches: Vec<MatchEntry>,
        errors: Vec<String>,
        records: &[MatchRecord],
    ) -> Result<Self, HarnessError> {
        let valid: Vec<&MatchRecord> = records.iter().filter(|r| r.valid).collect();
        let mut summary = RunSummary::default();
        if !valid.is_empty() {
            let owned: Vec<MatchRecord> = valid.iter().map(|r| (*r).clone()).collect();
            let report = MetricsReport::compute(&owned, 0, spec.alpha)?;
            let mut values = report.per_repeat.iter();
            for entry in matches.iter_mut().filter(|m| m.valid) {
                entry.metric = values.next().copied();
            }
            summary = RunSummary {
                per_repeat: report.per_repeat.clone(),
                mean: Some(report.mean),
                std: Some(report.std),
            };
        }
        let complete = errors.is_empty() && matches.iter().all(|m| m.valid);
        Ok(Self {
            artifact_version: crate::ARTIFACT_VERSION.to_string(),
            spec_hash: spec.hash(),
            spec: spec.clone(),
            label: spec.label(),
            game: spec.game,
            player: spec.player.label(),
            opponent: spec.opponent.label(),
            metric: MatrixMetric::for_game(spec.game),
            alpha: spec.alpha,
            seeds: matches.iter().map(|m| m.seed).collect(),
            matches,
            complete,
            errors,
            summary,
            files: Vec::new(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let path = if path.is_dir() { path.join("manifest.json") } else { path.to_path_buf() };
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct RunReport {
    pub label: String,
    pub spec_hash: String,
    pub metrics: Option<MetricsReport>,
    pub tokens: Vec<TallyRow>,
}

impl RunReport {
    pub fn compute(manifest: &RunManifest, valid: &[MatchRecord]) -> Result<Self, HarnessError> {
        let metrics = if valid.is_empty() {
            None
        } else {
            Some(MetricsReport::compute(valid, 0, manifest.alpha)?)
        };
        Ok(Self {
            label: manifest.label.clone(),
            spec_hash: manifest.spec_hash.clone(),
            metrics,
            tokens: tally_report(valid),
        })
    }
}

pub fn read_records(path: &Path) -> Result<Vec<MatchRecord>, HarnessError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub files_checked: usize,
    pub records_checked: usize,
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Re-hashes every file listed in a run's manifest, replays every record
/// through a fresh engine, and checks token usage against the transcripts.
pub fn verify_run(dir: &Path) -> Result<VerifyReport, HarnessError> {
    let manifest = RunManifest::load(dir)?;
    let mut report = VerifyReport::default();
    if manifest.spec.hash() != manifest.spec_hash {
        report.problems.push("spec hash does not match the embedded spec".into());
    }
    for file in &manifest.files {
        report.files_checked += 1;
        match fs::read(dir.join(&file.path)) {
            Ok(bytes) if sha256_hex(&bytes) == file.sha256 => {}
            Ok(_) => report.problems.push(format!("{}: hash mismatch", file.path)),
            Err(e) => report.problems.push(format!("{}: {e}", file.path)),
        }
    }

    let records = match read_records(&dir.join("records.jsonl")) {
        Ok(r) => r,
        Err(e) => {
            report.problems.push(format!("records.jsonl: {e}"));
            return Ok(report);
        }
    };
    let mut usage: BTreeMap<String, UsageTally> = BTreeMap::new();
    let transcripts = dir.join("transcripts.jsonl");
    let have_transcripts = transcripts.exists();
    if have_transcripts {
        match read_transcript_records(&transcripts) {
            Ok(calls) => {
                for call in calls.into_iter().filter(|c| c.status == CallStatus::Ok) {
                    usage.entry(call.stream).or_default().record(call.usage);
                }
            }
            Err(e) => report.problems.push(format!("transcripts.jsonl: {e}")),
        }
    }

    for entry in &manifest.matches {
        let Some(index) = entry.record else { continue };
        let Some(record) = records.get(index) else {
            report.problems.push(format!("repeat {}: record {index} missing", entry.repeat));
            continue;
        };
        report.records_checked += 1;
        if record.config != manifest.spec.match_config(entry.repeat) {
            report.problems.push(format!("repeat {}: config differs from the spec", entry.repeat));
        }
        if let Err(e) = verify_replay(record) {
            report.problems.push(format!("repeat {}: {e}", entry.repeat));
        }
        if !have_transcripts {
            continue;
        }
        for (i, agent) in record.config.agents.iter().enumerate() {
            if !matches!(agent.method, MethodSpec::Llm { .. }) {
                continue;
            }
            let logged = usage.get(&stream_name(entry.repeat, i)).copied().unwrap_or_default();
            if record.usage.get(i) != Some(&logged) {
                report
                    .problems
                    .push(format!("repeat {} agent {i}: usage differs from the transcript", entry.repeat));
            }
        }
    }
    Ok(report)
}
