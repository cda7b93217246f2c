use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tpia_core::analysis::{solve_power_flow, solve_tpia, warm_start_chain, Objective, SolutionReport};
use tpia_core::ingest::{fingerprint, parse_canonical_with, parse_glm_subset, write_solution, OutputFormat, Parsed};
use tpia_core::NetworkModel;

use crate::config::{read_subset, CliError, InputFormat, RunConfig, Solve};

/// JSON written for one input: every report of the run, in solve order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDocument {
    pub input: String,
    pub fingerprint: String,
    pub warnings: Vec<String>,
    pub reports: Vec<SolutionReport>,
}

pub fn load(path: &Path, format: InputFormat, config: &RunConfig) -> Result<Parsed, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let parse_error = |source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    };
    match format {
        InputFormat::Glm => parse_glm_subset(&bytes).map_err(parse_error),
        InputFormat::Canonical => {
            let text = String::from_utf8(bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            parse_canonical_with(&text, config.parse_mode).map_err(parse_error)
        }
    }
}

/// Runs the solves of `config.mode` on an already parsed network.
pub fn solve(network: &NetworkModel, config: &RunConfig) -> Result<Vec<SolutionReport>, CliError> {
    let subset = config.subset.as_deref().map(|p| read_subset(p, network)).transpose()?;
    let warm = config
        .warm_start
        .as_deref()
        .map(|scales| warm_start_chain(network, scales, &config.settings));
    let mut reports = Vec::new();
    for solve in config.mode.solves() {
        let report = match solve {
            Solve::PowerFlow => solve_power_flow(network, &config.settings),
            Solve::LeastSquares | Solve::L1 => {
                let objective = if *solve == Solve::L1 { Objective::L1 } else { Objective::LeastSquares };
                solve_tpia(network, objective, subset.as_ref(), &config.settings, warm.as_ref())?
            }
        };
        reports.push(report);
    }
    Ok(reports)
}

/// 0 feasible, 2 infeasible, 1 failure. Power flow divergence alongside an
/// analysis is expected and does not count as a failure.
pub fn exit_code(reports: &[SolutionReport]) -> u8 {
    let analyses: Vec<&SolutionReport> = reports
        .iter()
        .filter(|r| r.mode != tpia_core::Formulation::PowerFlow)
        .collect();
    if analyses.is_empty() {
        return if reports.iter().all(|r| r.converged) { 0 } else { 1 };
    }
    if analyses.iter().any(|r| !r.converged) {
        1
    } else if analyses.iter().any(|r| r.nonzero_node_phases > 0) {
        2
    } else {
        0
    }
}

pub fn summary_table(reports: &[SolutionReport]) -> String {
    let mut out = format!(
        "{:<5} {:>9} {:>10} {:>11} {:>10} {:>11}\n",
        "mode", "converged", "iterations", "matrix size", "time (s)", "nonzero i_f"
    );
    for r in reports {
        let nonzero = if r.mode == tpia_core::Formulation::PowerFlow {
            "-".to_string()
        } else {
            r.nonzero_nodes.to_string()
        };
        out.push_str(&format!(
            "{:<5} {:>9} {:>10} {:>11} {:>10.4} {:>11}\n",
            r.mode.short_name(),
            if r.converged { "yes" } else { "no" },
            r.iterations,
            r.matrix_size,
            r.wall_time_s,
            nonzero
        ));
    }
    out
}

/// Writes `contents` through a temporary file in the target directory so
/// readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(contents.as_bytes()).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// `out.csv` becomes `out.l2.csv` when a run produces several reports.
fn per_mode_path(path: &Path, report: &SolutionReport, several: bool) -> PathBuf {
    if !several {
        return path.to_path_buf();
    }
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{}.{}", report.mode.short_name(), ext.to_string_lossy()),
        None => format!("{stem}.{}", report.mode.short_name()),
    };
    path.with_file_name(name)
}

pub fn document(config: &RunConfig, network: &NetworkModel, warnings: Vec<String>, reports: Vec<SolutionReport>) -> RunDocument {
    RunDocument {
        input: config.input.display().to_string(),
        fingerprint: fingerprint(network),
        warnings,
        reports,
    }
}

pub fn render_document(doc: &RunDocument) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("run documents serialize");
    s.push('\n');
    s
}

pub fn write_outputs(config: &RunConfig, doc: &RunDocument) -> Result<(), CliError> {
    if let Some(path) = &config.json {
        write_atomic(path, &render_document(doc))?;
    }
    let several = doc.reports.len() > 1;
    for (path, format) in [(&config.csv, OutputFormat::Csv), (&config.dot, OutputFormat::Dot)] {
        let Some(path) = path else { continue };
        for report in &doc.reports {
            write_atomic(&per_mode_path(path, report, several), &write_solution(report, format))?;
        }
    }
    Ok(())
}

/// Parses, solves, writes outputs and prints the summary. Returns the exit code.
pub fn run(config: &RunConfig) -> Result<u8, CliError> {
    let parsed = load(&config.input, config.format, config)?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    let reports = solve(&parsed.network, config)?;
    for r in reports.iter().filter(|r| !r.converged) {
        if let Some(f) = &r.failure {
            eprintln!("solver failure ({}): {f}", r.mode.short_name());
        }
    }
    print!("{}", summary_table(&reports));
    let code = exit_code(&reports);
    let doc = document(config, &parsed.network, parsed.warnings, reports);
    write_outputs(config, &doc)?;
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tpia_core::synthetic::two_bus_analog;
    use tpia_core::SolverSettings;

    fn reports(p: f64) -> Vec<SolutionReport> {
        let net = two_bus_analog(p, 10.0);
        let s = SolverSettings::default();
        vec![
            solve_power_flow(&net, &s),
            solve_tpia(&net, Objective::LeastSquares, None, &s, None).unwrap(),
        ]
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&reports(1.0)), 0);
        assert_eq!(exit_code(&reports(3.0)), 2);
        assert_eq!(exit_code(&reports(3.0)[..1]), 1);
    }

    #[test]
    fn per_mode_names() {
        let r = &reports(1.0)[1];
        assert_eq!(per_mode_path(Path::new("d/out.csv"), r, true), Path::new("d/out.l2.csv"));
        assert_eq!(per_mode_path(Path::new("d/out.csv"), r, false), Path::new("d/out.csv"));
    }

    #[test]
    fn table_has_a_row_per_report() {
        let t = summary_table(&reports(3.0));
        assert_eq!(t.lines().count(), 3);
        assert!(t.lines().next().unwrap().starts_with("mode"));
        assert!(t.lines().nth(1).unwrap().starts_with("tpf"));
    }
}
