use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ProblemKind;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Encode(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecordKind {
    Kmap,
    TruthTable,
    FsmTable,
    FsmEdgeList,
    WaveComb,
    WaveSeq,
    Repair,
}

impl From<ProblemKind> for RecordKind {
    fn from(k: ProblemKind) -> Self {
        match k {
            ProblemKind::Kmap => RecordKind::Kmap,
            ProblemKind::TruthTable => RecordKind::TruthTable,
            ProblemKind::FsmTable => RecordKind::FsmTable,
            ProblemKind::FsmEdgeList => RecordKind::FsmEdgeList,
            ProblemKind::WaveComb => RecordKind::WaveComb,
            ProblemKind::WaveSeq => RecordKind::WaveSeq,
        }
    }
}

/// One line of a dataset file. Field names are part of the file format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub kind: RecordKind,
    pub prompt: String,
    pub response: String,
    pub seed: u64,
    pub fingerprint: String,
}

/// Writes one JSON object per line in the given order.
pub fn write_dataset(records: &[DatasetRecord], path: &Path) -> Result<usize, DatasetError> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(records.len())
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| DatasetError::Parse { line: k + 1, source })?);
    }
    Ok(out)
}
