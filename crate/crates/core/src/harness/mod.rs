//! Experiments: one player against a uniform field of opponents, repeated
//! under derived seeds, persisted with a manifest that hashes every output.

mod manifest;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{
    agent_stream, derive_seed, run_match, AgentSpec, Decider, GameKind, MatchConfig, MatchRecord,
    MethodSpec,
};
use crate::games::{build_engine, GameParams};
use crate::gateway::{
    read_transcript_records, BackendError, BackendFactory, BackendMode, BackendSpec, Sampling,
    TranscriptRecord, TranscriptStreams,
};
use crate::metrics::MetricsError;
use crate::reasoning::{KrOptions, LlmDecider, LlmDeciderOptions, TemplateCatalog, TemplateError};
use crate::strategies::ProgrammaticDecider;

pub use manifest::{
    read_records, verify_run, FileEntry, MatchEntry, RunManifest, RunSummary, VerifyReport,
};
pub use report::{
    build_matrix, depth_anchors, emit_depth_report, significance_table, DepthAnchor, MatrixMetric,
    DEPTH_ANCHORS_CSV,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A declarative experiment, loaded from one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub game: GameKind,
    pub player: MethodSpec,
    pub opponent: MethodSpec,
    /// Defaults to 4 for G08A/SAG and 1 for the two-agent games.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_opponents: Option<usize>,
    #[serde(default = "default_repeats")]
    pub repeats: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<u32>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
    /// Backends by key; `MethodSpec::Llm.backend` refers to these keys.
    #[serde(default)]
    pub backends: BTreeMap<String, BackendSpec>,
    #[serde(default)]
    pub params: GameParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Memoize K-R anticipations within a decision.
    #[serde(default)]
    pub memoize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_repeats() -> u32 {
    10
}

fn default_alpha() -> f64 {
    0.8
}

impl ExperimentSpec {
    pub fn new(game: GameKind, player: MethodSpec, opponent: MethodSpec) -> Self {
        Self {
            name: None,
            game,
            player,
            opponent,
            num_opponents: None,
            repeats: default_repeats(),
            rounds: None,
            seed: 0,
            sampling: Sampling::default(),
            backends: BTreeMap::new(),
            params: GameParams::default(),
            templates_dir: None,
            alpha: default_alpha(),
            memoize: false,
            output_dir: None,
        }
    }

    /// Reads and validates a spec; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut spec: ExperimentSpec = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = spec.templates_dir.as_mut() {
            resolve(p);
        }
        if let Some(p) = spec.output_dir.as_mut() {
            resolve(p);
        }
        for backend in spec.backends.values_mut() {
            if let Some(p) = backend.transcript.as_mut() {
                resolve(p);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn num_opponents(&self) -> usize {
        self.num_opponents.unwrap_or(match self.game {
            GameKind::Neg | GameKind::Pd => 1,
            _ => 4,
        })
    }

    pub fn rounds(&self) -> u32 {
        self.rounds.unwrap_or(self.game.default_max_rounds())
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            format!("{} {} vs {}", self.game, self.player.label(), self.opponent.label())
        })
    }

    /// Forces every backend into `mode`; replay additionally points them at `transcript`.
    pub fn force_mode(&mut self, mode: BackendMode, transcript: Option<&Path>) {
        for backend in self.backends.values_mut() {
            backend.mode = mode;
            if let Some(t) = transcript {
                backend.transcript = Some(t.to_path_buf());
            }
        }
    }

    /// Canonical hash of the spec, stamped into manifests. The output
    /// directory is left out so a rerun elsewhere hashes the same.
    pub fn hash(&self) -> String {
        let mut spec = self.clone();
        spec.output_dir = None;
        sha256_hex(serde_json::to_string(&spec).expect("specs always serialize").as_bytes())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Spec(m));
        if self.repeats < 1 {
            return fail("repeats must be at least 1".into());
        }
        if self.rounds == Some(0) {
            return fail("rounds must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        let n = self.num_opponents();
        if n < 1 {
            return fail("need at least one opponent".into());
        }
        if matches!(self.game, GameKind::Neg | GameKind::Pd) && n != 1 {
            return fail(format!("{} takes exactly one opponent", self.game));
        }
        for b in self.backends.values() {
            b.validate()?;
        }
        for (role, method) in [("player", &self.player), ("opponent", &self.opponent)] {
            match method {
                MethodSpec::Llm { backend, k, method } => {
                    if !self.backends.contains_key(backend) {
                        return fail(format!("{role} uses unknown backend `{backend}`"));
                    }
                    if *method == crate::Method::KLevel && *k < 1 {
                        return fail(format!("{role}: K-R needs k >= 1"));
                    }
                }
                MethodSpec::Programmatic { .. } => {
                    if !matches!(self.game, GameKind::G08a | GameKind::Sag) {
                        return fail(format!("{role}: programmatic strategies only play G08A and SAG"));
                    }
                }
            }
        }
        if let Some(dir) = &self.templates_dir {
            TemplateCatalog::with_overrides(dir)?.validate()?;
        }
        self.params.validate(self.game).map_err(|e| HarnessError::Spec(e.to_string()))?;
        Ok(())
    }

    /// Match config of repeat `r`: the player is agent 0, NEG alternates who opens.
    pub fn match_config(&self, repeat: u32) -> MatchConfig {
        let mut agents = vec![AgentSpec {
            label: format!("{} (player)", self.player.label()),
            player: true,
            method: self.player.clone(),
        }];
        for i in 1..=self.num_opponents() {
            agents.push(AgentSpec {
                label: format!("{} #{i}", self.opponent.label()),
                player: false,
                method: self.opponent.clone(),
            });
        }
        let mut config = MatchConfig::new(self.game, derive_seed(self.seed, u64::from(repeat)), agents);
        config.max_rounds = self.rounds();
        config.sampling = self.sampling;
        config.params = self.params.clone();
        if self.game == GameKind::Neg {
            config.params.neg.first_mover = (repeat % 2) as usize;
        }
        config
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads for repeats. Defaults to the repeat count, or 1 with a live backend.
    pub parallel: Option<usize>,
}

/// Everything a run produced, before or after it is written to disk.
pub struct RunOutput {
    pub manifest: RunManifest,
    pub records: Vec<MatchRecord>,
    pub transcripts: Vec<TranscriptRecord>,
}

struct RepeatResult {
    repeat: u32,
    seed: u64,
    outcome: Result<(MatchRecord, Vec<TranscriptRecord>), String>,
}

fn stream_name(repeat: u32, agent: usize) -> String {
    format!("r{repeat}/a{agent}")
}

fn backend_factory(spec: &ExperimentSpec) -> Result<BackendFactory, HarnessError> {
    let mut factory = BackendFactory::new();
    let mut paths: Vec<&PathBuf> = spec
        .backends
        .values()
        .filter(|b| b.mode == BackendMode::Replay)
        .filter_map(|b| b.transcript.as_ref())
        .collect();
    paths.sort();
    paths.dedup();
    if !paths.is_empty() {
        let mut all = Vec::new();
        for p in paths {
            all.extend(read_transcript_records(p)?);
        }
        factory = factory.with_transcripts(TranscriptStreams::from_records(all));
    }
    let rpm = spec
        .backends
        .values()
        .filter(|b| b.mode == BackendMode::Live)
        .filter_map(|b| b.requests_per_minute)
        .min();
    if let Some(rpm) = rpm {
        factory = factory.with_rate_limit(rpm);
    }
    Ok(factory)
}

fn run_repeat(
    spec: &ExperimentSpec,
    repeat: u32,
    factory: &BackendFactory,
    catalog: &Arc<TemplateCatalog>,
) -> RepeatResult {
    let config = spec.match_config(repeat);
    let seed = config.seed;
    let outcome = (|| {
        let mut deciders: Vec<Box<dyn Decider>> = Vec::with_capacity(config.num_agents);
        for (i, agent) in config.agents.iter().enumerate() {
            deciders.push(match &agent.method {
                MethodSpec::Programmatic { strategy } => {
                    Box::new(ProgrammaticDecider::new(*strategy, &mut agent_stream(seed, i, 0)))
                }
                MethodSpec::Llm { method, k, backend } => {
                    let gateway = factory
                        .build(&spec.backends[backend], &stream_name(repeat, i))
                        .map_err(|e| e.to_string())?;
                    let options = LlmDeciderOptions {
                        k: *k,
                        kr: KrOptions { memoize: spec.memoize },
                        sampling: spec.sampling,
                    };
                    Box::new(LlmDecider::new(*method, options, gateway, catalog.clone()))
                }
            });
        }
        let mut engine = build_engine(&config).map_err(|e| e.to_string())?;
        let record = run_match(&config, engine.as_mut(), &mut deciders).map_err(|e| e.to_string())?;
        let transcripts = deciders.iter().flat_map(|d| d.transcript().iter().cloned()).collect();
        Ok((record, transcripts))
    })();
    RepeatResult { repeat, seed, outcome }
}

/// Runs every repeat without touching the filesystem (beyond reading
/// templates and transcripts). The manifest's file list is left empty.
pub fn execute(spec: &ExperimentSpec, options: RunOptions) -> Result<RunOutput, HarnessError> {
    spec.validate()?;
    let catalog = Arc::new(match &spec.templates_dir {
        Some(dir) => TemplateCatalog::with_overrides(dir)?,
        None => TemplateCatalog::embedded(),
    });
    let factory = backend_factory(spec)?;
    let live = spec.backends.values().any(|b| b.mode == BackendMode::Live);
    let threads = options
        .parallel
        .unwrap_or(if live { 1 } else { spec.repeats as usize })
        .clamp(1, spec.repeats as usize);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Spec(format!("thread pool: {e}")))?;
    let results: Vec<RepeatResult> = pool.install(|| {
        (0..spec.repeats)
            .into_par_iter()
            .map(|r| run_repeat(spec, r, &factory, &catalog))
            .collect()
    });

    let mut records = Vec::new();
    let mut transcripts = Vec::new();
    let mut matches = Vec::new();
    let mut errors = Vec::new();
    for result in results {
        match result.outcome {
            Ok((record, calls)) => {
                if let Some(reason) = &record.abort_reason {
                    errors.push(format!("repeat {}: {reason}", result.repeat));
                }
                matches.push(MatchEntry {
                    repeat: result.repeat,
                    seed: result.seed,
                    record: Some(records.len()),
                    valid: record.valid,
                    metric: None,
                    error: record.abort_reason.clone(),
                });
                records.push(record);
                transcripts.extend(calls);
            }
            Err(e) => {
                errors.push(format!("repeat {}: {e}", result.repeat));
                matches.push(MatchEntry {
                    repeat: result.repeat,
                    seed: result.seed,
                    record: None,
                    valid: false,
                    metric: None,
                    error: Some(e),
                });
            }
        }
    }
    let manifest = RunManifest::build(spec, matches, errors, &records)?;
    Ok(RunOutput { manifest, records, transcripts })
}

/// Runs the experiment and writes records, transcripts, reports and the
/// manifest into `out_dir`. Failed repeats are kept out of the metrics and
/// mark the manifest incomplete; they do not abort the run.
pub fn run_experiment(
    spec: &ExperimentSpec,
    out_dir: &Path,
    options: RunOptions,
) -> Result<RunManifest, HarnessError> {
    let output = execute(spec, options)?;
    output.write(out_dir)
}

impl RunOutput {
    pub fn write(self, out_dir: &Path) -> Result<RunManifest, HarnessError> {
        let RunOutput { mut manifest, records, transcripts } = self;
        fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
        let mut files: Vec<(&str, Vec<u8>)> = Vec::new();

        let mut jsonl = String::new();
        for r in &records {
            jsonl.push_str(&r.to_canonical_json());
            jsonl.push('\n');
        }
        files.push(("records.jsonl", jsonl.into_bytes()));

        let mut jsonl = String::new();
        for t in &transcripts {
            jsonl.push_str(&serde_json::to_string(t)?);
            jsonl.push('\n');
        }
        files.push(("transcripts.jsonl", jsonl.into_bytes()));

        let valid: Vec<MatchRecord> = records.iter().filter(|r| r.valid).cloned().collect();
        let report = manifest::RunReport::compute(&manifest, &valid)?;
        files.push(("report.json", serde_json::to_vec_pretty(&report)?));
        files.push(("tokens.csv", report::tally_csv(&report.tokens).into_bytes()));
        files.push(("matrix.csv", build_matrix(std::slice::from_ref(&manifest))?.into_bytes()));
        if manifest.game == GameKind::G08a {
            files.push(("depth.csv", emit_depth_report(&valid, manifest.alpha).into_bytes()));
        }

        for (name, bytes) in files {
            let path = out_dir.join(name);
            fs::write(&path, &bytes).map_err(io_err(&path))?;
            manifest.files.push(FileEntry { path: name.to_string(), sha256: sha256_hex(&bytes) });
        }
        let path = out_dir.join("manifest.json");
        fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(io_err(&path))?;
        Ok(manifest)
    }
}
