//! Append-only run traces, written as JSON lines.

use std::io::{self, Write};

use serde::Serialize;
use solida_core::{Digest, Time, ViewTuple};

use crate::report::Summary;
use crate::scenario::TraceLevel;

/// One trace line. `time` is virtual nanoseconds; `member` indexes the
/// `node` records at the top of the trace.
#[derive(Clone, Debug, Serialize)]
pub struct Record {
    pub time: u64,
    pub member: usize,
    pub event: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub view: Option<ViewTuple>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slot: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digest: Option<Digest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Record {
    pub fn new(time: Time, member: usize, event: &'static str) -> Self {
        Self {
            time: time.0,
            member,
            event,
            view: None,
            slot: None,
            digest: None,
            detail: None,
        }
    }

    pub fn view(mut self, v: ViewTuple) -> Self {
        self.view = Some(v);
        self
    }

    pub fn slot(mut self, s: u64) -> Self {
        self.slot = Some(s);
        self
    }

    pub fn digest(mut self, d: Digest) -> Self {
        self.digest = Some(d);
        self
    }

    pub fn detail(mut self, d: impl Into<String>) -> Self {
        self.detail = Some(d.into());
        self
    }
}

#[derive(Clone, Debug)]
pub struct Trace {
    level: TraceLevel,
    records: Vec<Record>,
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    event: &'static str,
    #[serde(flatten)]
    summary: &'a Summary,
}

impl Trace {
    pub fn new(level: TraceLevel) -> Self {
        Self {
            level,
            records: Vec::new(),
        }
    }

    pub fn level(&self) -> TraceLevel {
        self.level
    }

    pub fn full(&self) -> bool {
        self.level == TraceLevel::Full
    }

    pub fn push(&mut self, r: Record) {
        if self.level != TraceLevel::Off {
            self.records.push(r);
        }
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W, summary: &Summary) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        serde_json::to_writer(
            &mut w,
            &SummaryLine {
                event: "summary",
                summary,
            },
        )?;
        w.write_all(b"\n")
    }

    pub fn to_jsonl(&self, summary: &Summary) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf, summary).expect("writing to memory cannot fail");
        buf
    }
}
