//! Trace CSV, summary JSON and dictionary/target CSV files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sparsegreedy::{FiniteDictionary64, RunTrace64};

use crate::HarnessError;

pub const TRACE_COLUMNS: [&str; 12] = [
    "m",
    "energy",
    "gap",
    "atom_id",
    "atom_sign",
    "score",
    "sup_score",
    "weakness_ratio",
    "lambda",
    "w_or_r",
    "l1_mass",
    "wall_ns",
];

/// 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Writes one row per iteration. Implicit (rank-one) atoms get id `-1`.
pub fn write_trace_csv<W: Write>(trace: &RunTrace64, out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for r in &trace.records {
        let atom_id = r.atom.id().map_or(-1, |i| i as i64);
        w.write_record([
            r.m.to_string(),
            fmt_f64(r.energy),
            fmt_opt(r.gap),
            atom_id.to_string(),
            r.atom.sign().as_i8().to_string(),
            fmt_f64(r.score),
            fmt_f64(r.sup_score),
            fmt_f64(r.weakness_ratio),
            fmt_opt(r.lambda),
            fmt_opt(r.w_or_r),
            fmt_f64(r.l1_mass),
            r.wall_ns.to_string(),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(())
}

pub fn trace_csv_string(trace: &RunTrace64) -> Result<String, HarnessError> {
    let mut buf = Vec::new();
    write_trace_csv(trace, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub stopping_reason: String,
    pub final_gap: Option<f64>,
    pub slope: Option<f64>,
    pub envelope_ratio: Option<f64>,
    pub invariants: BTreeMap<String, Verdict>,
    pub iterations: usize,
    pub error: Option<String>,
}

impl Summary {
    pub fn all_pass(&self) -> bool {
        self.error.is_none() && self.invariants.values().all(|v| *v == Verdict::Pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

pub fn write_summary_json(summary: &Summary, path: &Path) -> Result<(), HarnessError> {
    let mut f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    writeln!(f, "{}", summary.to_json()).map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// Writes the `k x n` matrix, one CSV row per ambient coordinate.
pub fn write_dictionary_csv<W: Write>(dict: &FiniteDictionary64, out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for i in 0..dict.rows() {
        w.write_record(dict.columns().map(|c| fmt_f64(c[i])))?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))?;
    Ok(())
}

fn read_matrix<R: Read>(input: R) -> Result<Vec<Vec<f64>>, HarnessError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| HarnessError::Parse(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads a `k x n` matrix written by [`write_dictionary_csv`]; columns are
/// normalized in ℓ_r.
pub fn read_dictionary_csv<R: Read>(input: R, r: f64) -> Result<FiniteDictionary64, HarnessError> {
    let rows = read_matrix(input)?;
    let k = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != n) {
        return Err(HarnessError::Parse("dictionary rows have unequal length".into()));
    }
    let mut data = Vec::with_capacity(k * n);
    for j in 0..n {
        data.extend(rows.iter().map(|row| row[j]));
    }
    Ok(FiniteDictionary64::with_norm(k, n, data, r)?)
}

/// One value per line (or one row of values).
pub fn write_vector_csv<W: Write>(v: &[f64], mut out: W) -> Result<(), HarnessError> {
    for x in v {
        writeln!(out, "{}", fmt_f64(*x)).map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    Ok(())
}

pub fn read_vector_csv<R: Read>(input: R) -> Result<Vec<f64>, HarnessError> {
    Ok(read_matrix(input)?.concat())
}
