//! CSV ingestion.
//!
//! The first line is a header when none of its cells parses as a number.
//! Rows with a missing, non-numeric or non-finite cell, or with the wrong
//! number of cells, are dropped. The surviving rows are shuffled with the
//! seed, truncated to the cap, and every input column and the target are
//! standardized to zero mean and unit sample variance.

use std::io::Read;
use std::path::Path;

use pivchol::Dataset;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub dataset: Dataset<f64>,
    /// Input column names (generated as `x0, x1, ...` without a header).
    pub columns: Vec<String>,
    pub target: String,
    /// Rows dropped for missing or malformed cells.
    pub dropped: usize,
    /// Usable rows before truncation.
    pub usable: usize,
}

pub fn ingest_path(path: &Path, target_col: Option<&str>, seed: u64, cap: usize) -> Result<Ingested> {
    let file = std::fs::File::open(path).map_err(|e| BenchError::Data(format!("cannot open {}: {e}", path.display())))?;
    ingest_reader(file, target_col, seed, cap)
}

pub fn ingest_reader<R: Read>(reader: R, target_col: Option<&str>, seed: u64, cap: usize) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| BenchError::Data(format!("malformed csv: {e}")))?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        records.push(rec);
    }
    let first = records.first().ok_or_else(|| BenchError::Data("empty file".into()))?;
    let width = first.len();
    let has_header = first.iter().all(|c| c.parse::<f64>().is_err());
    let names: Vec<String> = if has_header {
        first.iter().map(str::to_owned).collect()
    } else {
        (0..width).map(|i| format!("x{i}")).collect()
    };
    if width < 2 {
        return Err(BenchError::Data("need at least one input column and a target column".into()));
    }
    let target = match target_col {
        None => width - 1,
        Some(t) => match t.parse::<usize>() {
            Ok(i) if i < width => i,
            Ok(i) => return Err(BenchError::Config(format!("target column {i} out of range (width {width})"))),
            Err(_) => names
                .iter()
                .position(|n| n == t)
                .ok_or_else(|| BenchError::Config(format!("no column named `{t}`")))?,
        },
    };

    let body = &records[usize::from(has_header)..];
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(body.len());
    let mut dropped = 0;
    for rec in body {
        let parsed: Option<Vec<f64>> = if rec.len() == width {
            rec.iter().map(|c| c.parse::<f64>().ok().filter(|v| v.is_finite())).collect()
        } else {
            None
        };
        match parsed {
            Some(r) => rows.push(r),
            None => dropped += 1,
        }
    }
    let usable = rows.len();
    if usable < 2 {
        return Err(BenchError::Data(format!("only {usable} usable rows (need at least 2)")));
    }

    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    rows.truncate(cap);
    let n = rows.len();
    let d = width - 1;
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for r in &rows {
        for (j, v) in r.iter().enumerate() {
            if j == target {
                y.push(*v);
            } else {
                x.push(*v);
            }
        }
    }
    let mut columns: Vec<String> = names.clone();
    let target_name = columns.remove(target);
    for j in 0..d {
        standardize_strided(&mut x[j..], d, &columns[j])?;
    }
    standardize_strided(&mut y, 1, &target_name)?;
    Ok(Ingested { dataset: Dataset::new(n, d, x, y)?, columns, target: target_name, dropped, usable })
}

/// Standardizes `v[0], v[stride], v[2 stride], ...` in place.
fn standardize_strided(v: &mut [f64], stride: usize, name: &str) -> Result<()> {
    let count = v.len().div_ceil(stride);
    let mean = v.iter().step_by(stride).sum::<f64>() / count as f64;
    let var = v.iter().step_by(stride).map(|a| (a - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 1e-12 * mean.abs().max(1.0)) {
        return Err(BenchError::Data(format!("column `{name}` has zero variance")));
    }
    for a in v.iter_mut().step_by(stride) {
        *a = (*a - mean) / sd;
    }
    Ok(())
}
