//! File formats: data, distance, and mask CSVs plus the history, report, and
//! sweep outputs. All files are UTF-8 with LF line endings.
//!
//! Data CSV: header `timestamp,<node_0>,...`; ISO-8601 timestamps; an empty
//! cell or `NaN` marks a missing value. Distances CSV: header
//! `from,to,distance` with node ids or zero-based indices. Mask CSV: same
//! shape as the data file with 0/1 cells.

use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use crate::error::{Error, Result};
use crate::evaluation::MetricsReport;
use crate::masking::{EvalMask, MaskPattern};
use crate::pipeline::SweepRow;
use crate::series::TimeSeriesTensor;
use crate::training::EpochStats;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

fn format_timestamp(epoch: i64) -> String {
    match DateTime::from_timestamp(epoch, 0) {
        Some(dt) => dt.naive_utc().format("%Y-%m-%dT%H:%M:%S").to_string(),
        None => epoch.to_string(),
    }
}

struct ParsedRows {
    node_ids: Vec<String>,
    timestamps: Vec<i64>,
    values: Vec<Vec<f64>>, // per row, one value per node; NaN = missing
}

fn parse_data_rows(path: &Path) -> Result<ParsedRows> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || !cols[0].eq_ignore_ascii_case("timestamp") {
        return Err(parse_err(
            path,
            1,
            "malformed header: expected `timestamp,<node_0>,...`",
        ));
    }
    let node_ids: Vec<String> = cols[1..].iter().map(|s| s.to_string()).collect();
    let n_cols = cols.len();

    let mut timestamps = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != n_cols {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {n_cols} columns, found {}", cells.len()),
            ));
        }
        let ts = parse_timestamp(cells[0])
            .ok_or_else(|| parse_err(path, line_no, format!("unparsable timestamp `{}`", cells[0])))?;
        let mut row = Vec::with_capacity(node_ids.len());
        for (c, cell) in cells[1..].iter().enumerate() {
            if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
                row.push(f64::NAN);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    parse_err(
                        path,
                        line_no,
                        format!("unparsable number `{cell}` in column `{}`", node_ids[c]),
                    )
                })?;
                row.push(v);
            }
        }
        timestamps.push(ts);
        values.push(row);
    }
    if timestamps.is_empty() {
        return Err(parse_err(path, 2, "no data rows"));
    }
    Ok(ParsedRows {
        node_ids,
        timestamps,
        values,
    })
}

/// Sort rows by timestamp and enforce the uniform step, naming the first
/// offending row on a gap or duplicate.
fn enforce_uniform_step(path: &Path, parsed: &mut ParsedRows, step_seconds: u32) -> Result<()> {
    let mut order: Vec<usize> = (0..parsed.timestamps.len()).collect();
    order.sort_by_key(|&i| parsed.timestamps[i]);
    let sorted_ts: Vec<i64> = order.iter().map(|&i| parsed.timestamps[i]).collect();
    let sorted_vals: Vec<Vec<f64>> = order.iter().map(|&i| parsed.values[i].clone()).collect();
    for (i, pair) in sorted_ts.windows(2).enumerate() {
        let delta = pair[1] - pair[0];
        if delta != step_seconds as i64 {
            // Report with the 1-based data-row number in sorted order
            // (header is line 1, so data row i+2).
            return Err(parse_err(
                path,
                i + 3,
                format!(
                    "timestamp step of {delta}s between {} and {} (expected {step_seconds}s)",
                    format_timestamp(pair[0]),
                    format_timestamp(pair[1])
                ),
            ));
        }
    }
    parsed.timestamps = sorted_ts;
    parsed.values = sorted_vals;
    Ok(())
}

/// Read a data CSV into a single-channel tensor.
///
/// When `step_seconds` is `None` the interval is inferred from the first two
/// rows (after sorting); either way a uniform step is enforced.
pub fn read_data_csv(path: &Path, step_seconds: Option<u32>) -> Result<TimeSeriesTensor> {
    let mut parsed = parse_data_rows(path)?;
    let step = match step_seconds {
        Some(s) if s > 0 => s,
        Some(_) => return Err(Error::InvalidInput("step_seconds must be positive".into())),
        None => {
            let mut ts = parsed.timestamps.clone();
            ts.sort_unstable();
            if ts.len() < 2 {
                return Err(parse_err(path, 2, "cannot infer the step from one row"));
            }
            let delta = ts[1] - ts[0];
            if delta <= 0 {
                return Err(parse_err(path, 3, "duplicate leading timestamps"));
            }
            delta as u32
        }
    };
    enforce_uniform_step(path, &mut parsed, step)?;

    let n_nodes = parsed.node_ids.len();
    let n_steps = parsed.timestamps.len();
    let mut t = TimeSeriesTensor::zeros(n_nodes, n_steps, 1, step);
    t.node_ids = parsed.node_ids;
    t.start_epoch_seconds = parsed.timestamps[0];
    for (s, row) in parsed.values.iter().enumerate() {
        for (n, &v) in row.iter().enumerate() {
            if v.is_nan() {
                t.set_observed(n, s, false);
                t.set_value(n, s, 0, 0.0);
            } else {
                t.set_value(n, s, 0, v);
            }
        }
    }
    Ok(t)
}

/// Write a single-channel tensor as a data CSV; unobserved entries become
/// empty cells.
pub fn write_data_csv(t: &TimeSeriesTensor, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("timestamp");
    for id in &t.node_ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for s in 0..t.n_steps {
        out.push_str(&format_timestamp(t.timestamp(s)));
        for n in 0..t.n_nodes {
            out.push(',');
            if t.is_observed(n, s) {
                out.push_str(&t.value(n, s, 0).to_string());
            }
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a `from,to,distance` CSV. Endpoints may be node ids from `node_ids`
/// or zero-based indices.
pub fn read_distances_csv(path: &Path, node_ids: &[String]) -> Result<Vec<(usize, usize, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() != 3 {
        return Err(parse_err(path, 1, "malformed header: expected `from,to,distance`"));
    }
    let resolve = |cell: &str, line_no: usize| -> Result<usize> {
        if let Some(idx) = node_ids.iter().position(|id| id == cell) {
            return Ok(idx);
        }
        cell.parse::<usize>()
            .ok()
            .filter(|&i| i < node_ids.len())
            .ok_or_else(|| parse_err(path, line_no, format!("unknown node `{cell}`")))
    };
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != 3 {
            return Err(parse_err(path, line_no, "expected 3 columns"));
        }
        let i = resolve(cells[0], line_no)?;
        let j = resolve(cells[1], line_no)?;
        let d: f64 = cells[2]
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("unparsable distance `{}`", cells[2])))?;
        if d.is_nan() || d < 0.0 {
            return Err(parse_err(path, line_no, "distance must be nonnegative"));
        }
        out.push((i, j, d));
    }
    Ok(out)
}

/// Write a distances CSV using node ids.
pub fn write_distances_csv(
    distances: &[(usize, usize, f64)],
    node_ids: &[String],
    path: &Path,
) -> Result<()> {
    let mut out = String::from("from,to,distance\n");
    for &(i, j, d) in distances {
        out.push_str(&format!("{},{},{}\n", node_ids[i], node_ids[j], d));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a 0/1 mask CSV with the same shape as `reference`.
pub fn read_mask_csv(path: &Path, reference: &TimeSeriesTensor) -> Result<EvalMask> {
    let parsed = parse_data_rows(path)?;
    if parsed.node_ids != reference.node_ids {
        return Err(parse_err(path, 1, "mask columns do not match the data columns"));
    }
    if parsed.timestamps.len() != reference.n_steps {
        return Err(parse_err(
            path,
            1,
            format!(
                "mask has {} rows but the data has {}",
                parsed.timestamps.len(),
                reference.n_steps
            ),
        ));
    }
    let mut mask = EvalMask::empty(
        reference.n_nodes,
        reference.n_steps,
        MaskPattern::External,
        0,
    );
    for (s, row) in parsed.values.iter().enumerate() {
        for (n, &v) in row.iter().enumerate() {
            let hidden = if v == 0.0 {
                false
            } else if v == 1.0 {
                true
            } else {
                return Err(parse_err(
                    path,
                    s + 2,
                    format!("mask cells must be 0 or 1, found {v}"),
                ));
            };
            if hidden && !reference.is_observed(n, s) {
                return Err(parse_err(
                    path,
                    s + 2,
                    format!("mask hides entry ({n}, {s}) that is missing in the data"),
                ));
            }
            mask.set_hidden(n, s, hidden);
        }
    }
    Ok(mask)
}

/// Write a mask as a 0/1 CSV aligned with `reference` timestamps.
pub fn write_mask_csv(mask: &EvalMask, reference: &TimeSeriesTensor, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("timestamp");
    for id in &reference.node_ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for s in 0..mask.n_steps {
        out.push_str(&format_timestamp(reference.timestamp(s)));
        for n in 0..mask.n_nodes {
            out.push(',');
            out.push(if mask.is_hidden(n, s) { '1' } else { '0' });
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Write an adjacency matrix as a CSV with node ids on both axes.
#[allow(clippy::needless_range_loop)]
pub fn write_adjacency_csv(
    weights: &crate::adjacency::AdjacencyMatrix,
    node_ids: &[String],
    path: &Path,
) -> Result<()> {
    let mut out = String::from("node");
    for id in node_ids {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for i in 0..weights.n_nodes {
        out.push_str(&node_ids[i]);
        for j in 0..weights.n_nodes {
            out.push(',');
            out.push_str(&weights.weight(i, j).to_string());
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Training history: `epoch,train_loss,val_mae,val_mse`.
pub fn write_history_csv(history: &[EpochStats], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "epoch,train_loss,val_mae,val_mse")?;
    for row in history {
        writeln!(
            f,
            "{},{},{},{}",
            row.epoch, row.train_loss, row.val_mae, row.val_mse
        )?;
    }
    Ok(())
}

/// Metric report rows: `dataset,pattern,method,mae,mse,n_scored`.
pub fn write_report_csv(rows: &[(String, MetricsReport)], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "dataset,pattern,method,mae,mse,n_scored")?;
    for (method, r) in rows {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            r.dataset_tag,
            r.pattern.as_str(),
            method,
            r.mae,
            r.mse,
            r.n_scored
        )?;
    }
    Ok(())
}

/// Sweep rows: `layers,d_model,mae,mse,seconds`.
pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "layers,d_model,mae,mse,seconds")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{:.3}",
            r.layers, r.d_model, r.mae, r.mse, r.seconds
        )?;
    }
    Ok(())
}
