//! CSV ingestion and serialized outputs.
//!
//! Input CSVs need a header row. Covariates are all numeric columns except
//! the response column (`--y-col`, default `y`) and the optional label
//! column; label cells are either empty (unlabeled) or a component index in
//! `1..=G`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use cwfa::aecm::FitResult;
use cwfa::simulate::SimSpec;
use cwfa::{CwfaParams, Dataset};

use crate::CliError;

pub struct LoadedCsv {
    pub dataset: Dataset,
}

pub fn read_dataset(path: &Path, y_col: &str, label_col: Option<&str>) -> Result<LoadedCsv, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::input(format!("bad CSV header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();

    let y_idx = headers
        .iter()
        .position(|h| h == y_col)
        .ok_or_else(|| CliError::input(format!("no column named {y_col:?} in {}", path.display())))?;
    let label_idx = match label_col {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::input(format!("no label column named {name:?}")))?,
        ),
        None => None,
    };
    let x_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != y_idx && Some(i) != label_idx)
        .collect();
    if x_idx.is_empty() {
        return Err(CliError::input("no covariate columns left after y/label".into()));
    }

    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    for (row_number, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::input(format!("row {}: {e}", row_number + 2)))?;
        let numeric = |idx: usize| -> Result<f64, CliError> {
            record[idx].parse::<f64>().map_err(|_| {
                CliError::input(format!(
                    "row {}, column {:?}: non-numeric value {:?}",
                    row_number + 2,
                    headers[idx],
                    &record[idx]
                ))
            })
        };
        ys.push(numeric(y_idx)?);
        xs.push(x_idx.iter().map(|&i| numeric(i)).collect::<Result<_, _>>()?);
        if let Some(li) = label_idx {
            let cell = record[li].trim();
            if cell.is_empty() {
                labels.push(None);
            } else {
                let value: usize = cell.parse().map_err(|_| {
                    CliError::input(format!(
                        "row {}, column {:?}: label {:?} is not a positive integer",
                        row_number + 2,
                        headers[li],
                        cell
                    ))
                })?;
                if value < 1 {
                    return Err(CliError::input(format!(
                        "row {}: label must be >= 1",
                        row_number + 2
                    )));
                }
                labels.push(Some(value - 1));
            }
        }
    }
    if xs.is_empty() {
        return Err(CliError::input("CSV contains no data rows".into()));
    }

    let n = xs.len();
    let p = x_idx.len();
    let x = DMatrix::from_fn(n, p, |i, j| xs[i][j]);
    let dataset = Dataset::new(
        x,
        DVector::from_vec(ys),
        label_idx.map(|_| labels).filter(|l| !l.is_empty()),
    )
    .map_err(CliError::from)?;
    Ok(LoadedCsv { dataset })
}

pub fn write_dataset_csv(path: &Path, data: &Dataset, labels: Option<&[usize]>) -> Result<(), CliError> {
    let mut out = String::new();
    for j in 0..data.p() {
        out.push_str(&format!("x{},", j + 1));
    }
    out.push_str(if labels.is_some() { "y,label\n" } else { "y\n" });
    for i in 0..data.n() {
        for j in 0..data.p() {
            out.push_str(&format!("{},", data.x()[(i, j)]));
        }
        match labels {
            Some(l) => out.push_str(&format!("{},{}\n", data.y()[i], l[i] + 1)),
            None => out.push_str(&format!("{}\n", data.y()[i])),
        }
    }
    write_file(path, &out)
}

pub fn write_labels_csv(path: &Path, labels: &[usize]) -> Result<(), CliError> {
    let mut out = String::from("label\n");
    for &l in labels {
        out.push_str(&format!("{}\n", l + 1));
    }
    write_file(path, &out)
}

/// Labels as one value per line; anything whitespace-trimmed and non-empty
/// counts as a label (strings allowed).
pub fn read_label_file(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

pub fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::input(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, content).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Serialized fit: the parameters plus selection diagnostics and the
/// per-iteration log-likelihood trace. Labels are 1-based on disk.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub format_version: u32,
    pub g: usize,
    pub q: usize,
    pub params: CwfaParams,
    pub final_loglik: f64,
    pub eta: usize,
    pub bic: f64,
    pub iterations: usize,
    pub converged: bool,
    pub loglik_trace: Vec<f64>,
    pub map_labels: Vec<usize>,
}

impl FitReport {
    pub fn from_result(result: &FitResult) -> Self {
        FitReport {
            format_version: REPORT_FORMAT_VERSION,
            g: result.params.n_components(),
            q: result.params.q,
            params: result.params.clone(),
            final_loglik: result.final_loglik,
            eta: result.eta,
            bic: result.bic,
            iterations: result.iterations,
            converged: result.converged,
            loglik_trace: result.loglik_trace.clone(),
            map_labels: result.map_labels.iter().map(|&l| l + 1).collect(),
        }
    }

}

/// Ground-truth sidecar written next to simulated datasets.
#[derive(Debug, Serialize, Deserialize)]
pub struct TruthFile {
    pub format_version: u32,
    pub labels: Vec<usize>,
    pub spec: SimSpec,
}
