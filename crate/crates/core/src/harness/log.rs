//! Line-delimited JSON event log.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::crypto::Digest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub tick: u64,
    pub actor: String,
    pub event: String,
    pub digest: Digest,
}

#[derive(Debug, Clone, Default)]
pub struct EventLog {
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn push(&mut self, tick: u64, actor: impl ToString, event: impl Into<String>, digest: Digest) {
        self.records.push(LogRecord { tick, actor: actor.to_string(), event: event.into(), digest });
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_jsonl(&mut out).expect("writing to a Vec");
        out
    }

    pub fn parse_jsonl(text: &str) -> serde_json::Result<Vec<LogRecord>> {
        text.lines().filter(|l| !l.is_empty()).map(serde_json::from_str).collect()
    }
}
