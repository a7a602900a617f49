//! Transcript persistence and position-based replay.

use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use super::{BackendError, CallStatus, Completion, CompletionRequest, DecisionBackend, TranscriptRecord};

/// Successful transcript records grouped by agent stream, in call order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TranscriptStreams {
    streams: BTreeMap<String, Arc<Vec<TranscriptRecord>>>,
}

impl TranscriptStreams {
    pub fn from_records(records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        let mut grouped: BTreeMap<String, Vec<TranscriptRecord>> = BTreeMap::new();
        for r in records {
            if r.status == CallStatus::Ok {
                grouped.entry(r.stream.clone()).or_default().push(r);
            }
        }
        let streams = grouped
            .into_iter()
            .map(|(k, mut v)| {
                v.sort_by_key(|r| r.seq);
                (k, Arc::new(v))
            })
            .collect();
        Self { streams }
    }

    pub fn stream(&self, name: &str) -> Arc<Vec<TranscriptRecord>> {
        self.streams.get(name).cloned().unwrap_or_default()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.streams.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.streams.values().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn load_transcripts(path: &Path) -> Result<TranscriptStreams, BackendError> {
    Ok(TranscriptStreams::from_records(read_transcript_records(path)?))
}

/// Every record of a JSON Lines transcript, failed attempts included.
pub fn read_transcript_records(path: &Path) -> Result<Vec<TranscriptRecord>, BackendError> {
    let file = std::fs::File::open(path)
        .map_err(|e| BackendError::Transcript(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| BackendError::Transcript(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TranscriptRecord = serde_json::from_str(&line)
            .map_err(|e| BackendError::Transcript(format!("{}:{}: {e}", path.display(), n + 1)))?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_transcripts<'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a TranscriptRecord>,
) -> std::io::Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Serves one agent stream's recorded responses in order. A request whose
/// hash differs from the recorded one is still served, with a warning.
pub struct ReplayBackend {
    stream: String,
    records: Arc<Vec<TranscriptRecord>>,
    position: usize,
    mismatches: usize,
}

impl ReplayBackend {
    pub fn new(stream: impl Into<String>, records: Arc<Vec<TranscriptRecord>>) -> Self {
        Self { stream: stream.into(), records, position: 0, mismatches: 0 }
    }

    pub fn mismatches(&self) -> usize {
        self.mismatches
    }

    pub fn remaining(&self) -> usize {
        self.records.len() - self.position
    }
}

impl DecisionBackend for ReplayBackend {
    fn complete(&mut self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        let record = self
            .records
            .get(self.position)
            .ok_or_else(|| BackendError::ReplayExhausted(self.stream.clone()))?;
        self.position += 1;
        let hash = request.hash();
        if hash != record.request_hash {
            self.mismatches += 1;
            tracing::warn!(
                stream = %self.stream,
                seq = record.seq,
                "replayed request differs from the recorded one"
            );
        }
        Ok(Completion { text: record.response.clone(), usage: record.usage, failed_attempts: Vec::new() })
    }
}
