//! JSONL record formats: one compact JSON object per line.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::toy::ParallelPair;
use crate::units::UnitSequence;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitRecord {
    pub id: String,
    pub units: Vec<u32>,
    pub vocab_size: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
}

impl UnitRecord {
    pub fn new(id: impl Into<String>, seq: &UnitSequence) -> Self {
        Self {
            id: id.into(),
            units: seq.units().to_vec(),
            vocab_size: seq.vocab_size(),
            duration_ms: None,
        }
    }

    pub fn to_sequence(&self) -> Result<UnitSequence> {
        UnitSequence::new(self.units.clone(), self.vocab_size)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub src_units: Vec<u32>,
    pub tgt_units: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tgt_adapted_units: Option<Vec<u32>>,
    pub vocab_src: u32,
    pub vocab_tgt: u32,
}

impl From<&ParallelPair> for CorpusRecord {
    fn from(p: &ParallelPair) -> Self {
        Self {
            id: p.id.clone(),
            src_units: p.src.units().to_vec(),
            tgt_units: p.tgt.units().to_vec(),
            tgt_adapted_units: p.tgt_adapted.as_ref().map(|s| s.units().to_vec()),
            vocab_src: p.src.vocab_size(),
            vocab_tgt: p.tgt.vocab_size(),
        }
    }
}

impl CorpusRecord {
    pub fn to_pair(&self) -> Result<ParallelPair> {
        Ok(ParallelPair {
            id: self.id.clone(),
            src: UnitSequence::new(self.src_units.clone(), self.vocab_src)?,
            tgt: UnitSequence::new(self.tgt_units.clone(), self.vocab_tgt)?,
            tgt_adapted: self
                .tgt_adapted_units
                .as_ref()
                .map(|u| UnitSequence::new(u.clone(), self.vocab_tgt))
                .transpose()?,
        })
    }
}

/// Parses JSONL; blank lines are skipped and errors carry 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, records: &[T]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<ParallelPair>> {
    let records: Vec<CorpusRecord> = read_jsonl(reader)?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_pair().map_err(|e| Error::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_corpus<W: Write>(writer: W, corpus: &[ParallelPair]) -> Result<()> {
    let records: Vec<CorpusRecord> = corpus.iter().map(CorpusRecord::from).collect();
    write_jsonl(writer, &records)
}
