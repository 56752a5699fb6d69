//! Per-wave candidate status table:
//! `candidate_id,I_<criterion>...,I_max,state,wave_of_decision`.
//!
//! Floats are written in shortest round-trip form, so reading a table back
//! restores the statuses exactly.

use std::path::Path;

use super::{CandidateStatus, Criterion, State};
use crate::error::{Error, Result};

fn header(criteria: &[Criterion]) -> Vec<String> {
    let mut h = vec!["candidate_id".to_string()];
    h.extend(criteria.iter().map(|c| format!("I_{}", c.name)));
    h.extend(["I_max".to_string(), "state".to_string(), "wave_of_decision".to_string()]);
    h
}

pub fn status_csv(criteria: &[Criterion], statuses: &[CandidateStatus]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::with_capacity(statuses.len() * 48));
    let csv_err = |e: csv::Error| Error::State(e.to_string());
    w.write_record(header(criteria)).map_err(csv_err)?;
    let mut row: Vec<String> = Vec::with_capacity(criteria.len() + 4);
    for (id, s) in statuses.iter().enumerate() {
        row.clear();
        row.push(id.to_string());
        row.extend(s.criteria.iter().map(|v| v.to_string()));
        row.push(s.implausibility.to_string());
        row.push(s.state.as_str().to_string());
        row.push(s.wave_of_decision.map(|w| w.to_string()).unwrap_or_default());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::State(e.to_string()))
}

pub fn write_status_csv(path: &Path, criteria: &[Criterion], statuses: &[CandidateStatus]) -> Result<()> {
    let bytes = status_csv(criteria, statuses)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_status_csv(path: &Path, criteria: &[Criterion]) -> Result<Vec<CandidateStatus>> {
    let bad = |msg: String| Error::State(format!("{}: {msg}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let expected = header(criteria);
    let found: Vec<String> = rdr.headers().map_err(|e| bad(e.to_string()))?.iter().map(String::from).collect();
    if found != expected {
        return Err(bad(format!("header `{}` does not match `{}`", found.join(","), expected.join(","))));
    }
    let nc = criteria.len();
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| bad(format!("line {}: column {} is not a number", line + 2, k + 1)))
        };
        let id: usize = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad(format!("line {}: bad id", line + 2)))?;
        if id != out.len() {
            return Err(bad(format!("line {}: expected candidate {}, found {id}", line + 2, out.len())));
        }
        let crit = (1..=nc).map(num).collect::<Result<Vec<_>>>()?;
        let implausibility = num(nc + 1)?;
        let state = rec
            .get(nc + 2)
            .and_then(State::parse)
            .ok_or_else(|| bad(format!("line {}: unknown state", line + 2)))?;
        let wave_of_decision = match rec.get(nc + 3) {
            Some("") | None => None,
            Some(s) => Some(s.parse().map_err(|_| bad(format!("line {}: bad wave", line + 2)))?),
        };
        out.push(CandidateStatus {
            criteria: crit,
            implausibility,
            state,
            wave_of_decision,
        });
    }
    Ok(out)
}
