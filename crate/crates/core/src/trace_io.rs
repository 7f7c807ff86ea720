//! CSV trace files.
//!
//! Columns, in order: `t`, the twelve state components, `u_des1..4`,
//! `u_star1..4`, then `h_<label>` and `sep_<label>` for each obstacle, then
//! `tracking_error`, `active` and `violations`. The last two hold labels
//! joined with `;`. Floats carry nine significant digits, so a parsed trace
//! equals [`quantize`] of the written one.

use std::io::{Read, Write};

use crate::dynamics::{QuadrotorState, StateVector, Vec4};
use crate::error::{Error, Result};
use crate::sim::{SimTrace, StepRecord};

const STATE_COLUMNS: [&str; 12] = [
    "x", "y", "z", "vx", "vy", "vz", "roll", "pitch", "yaw", "p", "q", "r",
];

pub fn header(obstacle_labels: &[String]) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend(STATE_COLUMNS.iter().map(|c| c.to_string()));
    cols.extend((1..=4).map(|i| format!("u_des{i}")));
    cols.extend((1..=4).map(|i| format!("u_star{i}")));
    for label in obstacle_labels {
        cols.push(format!("h_{label}"));
        cols.push(format!("sep_{label}"));
    }
    cols.extend(["tracking_error", "active", "violations"].map(String::from));
    cols
}

pub fn format_float(x: f64) -> String {
    format!("{x:.8e}")
}

/// Rounds to the nine significant digits a trace file keeps.
pub fn round_sig9(x: f64) -> f64 {
    format_float(x).parse().expect("formatted floats parse")
}

/// The trace as it reads back from a file.
pub fn quantize(trace: &SimTrace) -> SimTrace {
    let q4 = |v: &Vec4| v.map(round_sig9);
    SimTrace {
        obstacle_labels: trace.obstacle_labels.clone(),
        records: trace
            .records
            .iter()
            .map(|r| StepRecord {
                t: round_sig9(r.t),
                state: QuadrotorState::from_vector(&r.state.to_vector().map(round_sig9)),
                u_des: q4(&r.u_des),
                u_star: q4(&r.u_star),
                h: r.h.iter().copied().map(round_sig9).collect(),
                separation: r.separation.iter().copied().map(round_sig9).collect(),
                tracking_error: round_sig9(r.tracking_error),
                active_set: r.active_set.clone(),
                violations: r.violations.clone(),
            })
            .collect(),
    }
}

fn io_error(e: impl std::fmt::Display) -> Error {
    Error::TraceParse {
        line: 0,
        reason: e.to_string(),
    }
}

pub fn write_trace<W: Write>(trace: &SimTrace, out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer
        .write_record(header(&trace.obstacle_labels))
        .map_err(io_error)?;
    for rec in &trace.records {
        let mut row = vec![format_float(rec.t)];
        row.extend(rec.state.to_vector().iter().map(|&x| format_float(x)));
        row.extend(rec.u_des.iter().map(|&x| format_float(x)));
        row.extend(rec.u_star.iter().map(|&x| format_float(x)));
        for (h, sep) in rec.h.iter().zip(&rec.separation) {
            row.push(format_float(*h));
            row.push(format_float(*sep));
        }
        row.push(format_float(rec.tracking_error));
        row.push(rec.active_set.join(";"));
        row.push(rec.violations.join(";"));
        writer.write_record(&row).map_err(io_error)?;
    }
    writer.flush().map_err(io_error)?;
    Ok(())
}

pub fn trace_to_string(trace: &SimTrace) -> String {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).expect("writing to memory succeeds");
    String::from_utf8(buf).expect("trace files are UTF-8")
}

fn split_labels(field: &str) -> Vec<String> {
    if field.is_empty() {
        Vec::new()
    } else {
        field.split(';').map(String::from).collect()
    }
}

pub fn read_trace<R: Read>(input: R) -> Result<SimTrace> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let columns: Vec<String> = reader
        .headers()
        .map_err(io_error)?
        .iter()
        .map(String::from)
        .collect();
    let fixed = 1 + 12 + 8;
    let tail = 3;
    let bad_header = |reason: String| Error::TraceParse { line: 1, reason };
    if columns.len() < fixed + tail || !(columns.len() - fixed - tail).is_multiple_of(2) {
        return Err(bad_header(format!(
            "unexpected column count {}",
            columns.len()
        )));
    }
    let mut labels = Vec::new();
    for pair in columns[fixed..columns.len() - tail].chunks(2) {
        let label = pair[0]
            .strip_prefix("h_")
            .ok_or_else(|| bad_header(format!("expected an h_ column, found `{}`", pair[0])))?;
        if pair[1] != format!("sep_{label}") {
            return Err(bad_header(format!(
                "expected sep_{label}, found `{}`",
                pair[1]
            )));
        }
        labels.push(label.to_string());
    }
    if columns != header(&labels) {
        return Err(bad_header(
            "column names do not match the trace layout".into(),
        ));
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::TraceParse {
            line,
            reason: e.to_string(),
        })?;
        let num = |j: usize| -> Result<f64> {
            row[j].parse().map_err(|_| Error::TraceParse {
                line,
                reason: format!("column `{}` is not a number: `{}`", columns[j], &row[j]),
            })
        };
        let mut state = StateVector::zeros();
        for k in 0..12 {
            state[k] = num(1 + k)?;
        }
        let u_des = Vec4::new(num(13)?, num(14)?, num(15)?, num(16)?);
        let u_star = Vec4::new(num(17)?, num(18)?, num(19)?, num(20)?);
        let mut h = Vec::with_capacity(labels.len());
        let mut separation = Vec::with_capacity(labels.len());
        for k in 0..labels.len() {
            h.push(num(fixed + 2 * k)?);
            separation.push(num(fixed + 2 * k + 1)?);
        }
        let n = columns.len();
        records.push(StepRecord {
            t: num(0)?,
            state: QuadrotorState::from_vector(&state),
            u_des,
            u_star,
            h,
            separation,
            tracking_error: num(n - 3)?,
            active_set: split_labels(&row[n - 2]),
            violations: split_labels(&row[n - 1]),
        });
    }
    Ok(SimTrace {
        obstacle_labels: labels,
        records,
    })
}

pub fn trace_from_str(text: &str) -> Result<SimTrace> {
    read_trace(text.as_bytes())
}
