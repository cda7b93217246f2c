use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tpia_core::analysis::SolutionReport;

use crate::config::{CliError, Solve, SolveArgs};
use crate::run::{document, load, render_document, solve, write_atomic};

/// One solve of one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub case: String,
    pub mode: String,
    /// `feasible`, `infeasible`, `not_converged` or `failed`.
    pub status: String,
    pub converged: bool,
    pub iterations: usize,
    pub matrix_size: usize,
    pub wall_time_s: f64,
    pub nonzero_nodes: usize,
    pub nonzero_node_phases: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub cases: usize,
    pub rows: Vec<BatchRow>,
}

fn mode_name(s: Solve) -> &'static str {
    match s {
        Solve::PowerFlow => "tpf",
        Solve::LeastSquares => "l2",
        Solve::L1 => "l1",
    }
}

fn row(case: &str, r: &SolutionReport) -> BatchRow {
    let status = if !r.converged {
        "not_converged"
    } else if r.nonzero_node_phases > 0 {
        "infeasible"
    } else {
        "feasible"
    };
    BatchRow {
        case: case.to_string(),
        mode: r.mode.short_name().to_string(),
        status: status.to_string(),
        converged: r.converged,
        iterations: r.iterations,
        matrix_size: r.matrix_size,
        wall_time_s: r.wall_time_s,
        nonzero_nodes: r.nonzero_nodes,
        nonzero_node_phases: r.nonzero_node_phases,
        error: r.failure.clone(),
    }
}

fn failed_rows(case: &str, args: &SolveArgs, error: &CliError) -> Vec<BatchRow> {
    args.mode
        .solves()
        .iter()
        .map(|&s| BatchRow {
            case: case.to_string(),
            mode: mode_name(s).to_string(),
            status: "failed".to_string(),
            converged: false,
            iterations: 0,
            matrix_size: 0,
            wall_time_s: 0.0,
            nonzero_nodes: 0,
            nonzero_node_phases: 0,
            error: Some(error.to_string()),
        })
        .collect()
}

/// Network files in `dir` (`.json` and `.glm`), sorted by name.
pub fn case_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let is_case = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("json") || e.eq_ignore_ascii_case("glm"));
        if path.is_file() && is_case {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Solves every case in `dir`. A case that fails to load or solve yields
/// failed rows; the batch itself only errors on an unreadable directory or
/// an unwritable output directory.
pub fn batch(dir: &Path, args: &SolveArgs, out: Option<&Path>) -> Result<BatchReport, CliError> {
    let settings = args.settings()?;
    let files = case_files(dir)?;
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    }
    let rows: Vec<Vec<BatchRow>> = files
        .par_iter()
        .map(|path| {
            let case = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let config = args.config_for(path, &settings);
            let outcome = load(path, config.format, &config).and_then(|parsed| {
                let reports = solve(&parsed.network, &config)?;
                let rows = reports.iter().map(|r| row(&case, r)).collect();
                if let Some(out) = out {
                    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    let doc = document(&config, &parsed.network, parsed.warnings, reports);
                    write_atomic(&out.join(format!("{stem}.tpia.json")), &render_document(&doc))?;
                }
                Ok(rows)
            });
            outcome.unwrap_or_else(|e| failed_rows(&case, args, &e))
        })
        .collect();
    Ok(BatchReport {
        cases: files.len(),
        rows: rows.into_iter().flatten().collect(),
    })
}

pub fn batch_table(report: &BatchReport) -> String {
    let mut out = format!(
        "{:<24} {:<5} {:<13} {:>10} {:>11} {:>10} {:>11}\n",
        "case", "mode", "status", "iterations", "matrix size", "time (s)", "nonzero i_f"
    );
    for r in &report.rows {
        out.push_str(&format!(
            "{:<24} {:<5} {:<13} {:>10} {:>11} {:>10.4} {:>11}\n",
            r.case, r.mode, r.status, r.iterations, r.matrix_size, r.wall_time_s, r.nonzero_nodes
        ));
    }
    out
}
