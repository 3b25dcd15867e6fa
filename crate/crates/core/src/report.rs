//! Bit-stable JSON, JSON-lines and CSV output.
//!
//! Floats are rounded to 12 significant digits, non-finite values become
//! `null` (JSON) or an empty field (CSV), and every document ends with a
//! single LF.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::dynamics::DynamicsTrace;
use crate::error::{Error, Result};
use crate::sweep::SweepRow;
use crate::welfare::LandscapeRow;

/// Serializes a 0-based type index as the 1-based number users see.
pub fn one_based<S: serde::Serializer>(index: &usize, serializer: S) -> std::result::Result<S::Ok, S::Error> {
    serializer.serialize_u64(*index as u64 + 1)
}

pub const SIGNIFICANT_DIGITS: usize = 12;

pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        let r = round_sig(x);
        if r == 0.0 {
            "0".to_string()
        } else {
            r.to_string()
        }
    } else {
        String::new()
    }
}

fn round_value(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number)
        }
        Value::Array(items) => Value::Array(items.into_iter().map(round_value).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_value(v))).collect()),
        other => other,
    }
}

fn to_value<T: Serialize>(value: &T) -> Result<Value> {
    serde_json::to_value(value)
        .map(round_value)
        .map_err(|e| Error::Parse(format!("cannot serialize report: {e}")))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(&to_value(value)?)
        .map_err(|e| Error::Parse(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// One compact JSON document per line.
pub fn to_json_lines<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        let line = serde_json::to_string(&to_value(item)?)
            .map_err(|e| Error::Parse(format!("cannot serialize report: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

pub fn transitions_jsonl(trace: &DynamicsTrace) -> Result<String> {
    to_json_lines(&trace.transitions)
}

fn csv_text(header: Vec<String>, rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(&header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Parse(format!("cannot finish csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(format!("csv is not utf-8: {e}")))
}

fn join_counts(counts: &[u32]) -> String {
    counts.iter().map(u32::to_string).collect::<Vec<_>>().join(";")
}

pub const SWEEP_HEADER: [&str; 7] = ["c", "W_semts", "W_fl_opt", "W_modified_fl", "K_star", "B_star", "eps_star"];

/// Failed rows keep their cost and leave every other field empty.
pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let header = SWEEP_HEADER.iter().map(|h| h.to_string()).collect();
    let body = rows
        .iter()
        .map(|r| match &r.outcome {
            Ok(o) => vec![
                format_float(r.c),
                format_float(o.w_semts),
                format_float(o.w_fl_opt),
                format_float(o.w_modified_fl),
                join_counts(&o.k_star.0),
                join_counts(&o.b_star.0),
                o.eps_star.map_or_else(String::new, format_float),
            ],
            Err(_) => {
                let mut row = vec![format_float(r.c)];
                row.extend(std::iter::repeat_n(String::new(), SWEEP_HEADER.len() - 1));
                row
            }
        })
        .collect();
    csv_text(header, body)
}

pub fn landscape_csv(types: usize, rows: &[LandscapeRow]) -> Result<String> {
    let mut header: Vec<String> = (1..=types).map(|i| format!("K_{i}")).collect();
    header.extend((1..=types).map(|i| format!("B_{i}")));
    header.push("eps".to_string());
    header.push("W".to_string());
    let body = rows
        .iter()
        .map(|r| {
            let mut row: Vec<String> = r.state.participants.0.iter().map(u32::to_string).collect();
            row.extend(r.state.buyers.0.iter().map(u32::to_string));
            row.push(r.eps.map_or_else(String::new, format_float));
            row.push(format_float(r.welfare));
            row
        })
        .collect();
    csv_text(header, body)
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
}
