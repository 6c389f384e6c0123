//! Offline checks on a JSONL trace written by `solida run`.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::Deserialize;

#[derive(Debug, Deserialize)]
struct Line {
    time: Option<u64>,
    event: String,
    slot: Option<u64>,
    digest: Option<String>,
    member: Option<usize>,
    safety_ok: Option<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceVerdict {
    pub records: usize,
    pub commits: usize,
    pub slots: usize,
    pub safety_ok: bool,
}

/// Re-derive commit agreement from the trace and compare it with the
/// summary line. Commit records only ever come from honest nodes.
pub fn audit_trace<R: BufRead>(r: R) -> Result<TraceVerdict, String> {
    let mut last_time = 0;
    let mut by_slot: BTreeMap<u64, (String, usize)> = BTreeMap::new();
    let mut summary = None;
    let mut records = 0;
    let mut commits = 0;
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| format!("line {}: {e}", i + 1))?;
        if line.trim().is_empty() {
            continue;
        }
        if summary.is_some() {
            return Err(format!("line {}: record after the summary line", i + 1));
        }
        let rec: Line = serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
        if rec.event == "summary" {
            summary = Some(rec.safety_ok.ok_or_else(|| format!("line {}: summary without safety_ok", i + 1))?);
            continue;
        }
        records += 1;
        let t = rec.time.ok_or_else(|| format!("line {}: record without time", i + 1))?;
        if t < last_time {
            return Err(format!("line {}: time goes backwards", i + 1));
        }
        last_time = t;
        if rec.event == "commit" {
            commits += 1;
            let (Some(slot), Some(d)) = (rec.slot, rec.digest) else {
                return Err(format!("line {}: commit without slot or digest", i + 1));
            };
            let member = rec.member.unwrap_or_default();
            if let Some((prev, who)) = by_slot.get(&slot) {
                if *prev != d {
                    return Err(format!(
                        "slot {slot}: member {who} committed {} but member {member} committed {}",
                        &prev[..16.min(prev.len())],
                        &d[..16.min(d.len())]
                    ));
                }
            } else {
                by_slot.insert(slot, (d, member));
            }
        }
    }
    let safety_ok = summary.ok_or("missing summary line")?;
    if !safety_ok {
        return Err("summary reports a safety violation".into());
    }
    Ok(TraceVerdict { records, commits, slots: by_slot.len(), safety_ok })
}

#[cfg(test)]
mod tests {
    use super::*;

    const OK: &str = r#"{"time":0,"member":0,"event":"node"}
{"time":5,"member":1,"event":"commit","slot":1,"digest":"aa"}
{"time":6,"member":2,"event":"commit","slot":1,"digest":"aa"}
{"event":"summary","safety_ok":true,"slots_committed":1}
"#;

    #[test]
    fn clean_trace_passes() {
        let v = audit_trace(OK.as_bytes()).unwrap();
        assert_eq!((v.records, v.commits, v.slots), (3, 2, 1));
    }

    #[test]
    fn conflicting_commit_is_found() {
        let bad = OK.replacen(r#""digest":"aa"}"#, r#""digest":"bb"}"#, 1);
        assert!(audit_trace(bad.as_bytes()).unwrap_err().contains("slot 1"));
    }

    #[test]
    fn truncated_trace_is_rejected() {
        let cut: String = OK.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert_eq!(audit_trace(cut.as_bytes()).unwrap_err(), "missing summary line");
    }
}
