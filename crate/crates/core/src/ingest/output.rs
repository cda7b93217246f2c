use std::fmt::Write as _;
use std::str::FromStr;

use crate::analysis::SolutionReport;

/// Serialization targets for a [`SolutionReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutputFormat {
    Json,
    Csv,
    Dot,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            "dot" => Ok(OutputFormat::Dot),
            other => Err(format!("unsupported output format '{other}' (expected json, csv or dot)")),
        }
    }
}

pub const CSV_HEADER: &str = "bus_id,phase,if_real,if_imag,if_mag,v_real,v_imag";

/// Renders `report`. Floats use the shortest representation that parses
/// back to the same value.
pub fn write_solution(report: &SolutionReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        OutputFormat::Csv => csv(report),
        OutputFormat::Dot => dot(report),
    }
}

pub fn read_solution_json(text: &str) -> Result<SolutionReport, serde_json::Error> {
    serde_json::from_str(text)
}

fn csv(report: &SolutionReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.node_phases {
        let _ = writeln!(
            out,
            "{},{},{:?},{:?},{:?},{:?},{:?}",
            quote_csv(&r.bus),
            r.phase,
            r.if_re,
            r.if_im,
            r.if_mag,
            r.v_re,
            r.v_im
        );
    }
    out
}

fn quote_csv(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn quote_dot(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// White through red on log10 |i_f| between the threshold and 1 pu.
fn heat(max_if_pu: f64, threshold: f64, flagged: bool) -> String {
    if !flagged {
        return "#ffffff".into();
    }
    let lo = threshold.max(1e-12).log10();
    let t = if lo >= 0.0 {
        1.0
    } else {
        ((max_if_pu.log10() - lo) / -lo).clamp(0.0, 1.0)
    };
    let g = (255.0 * (1.0 - t)).round() as u8;
    format!("#ff{g:02x}{g:02x}")
}

fn dot(report: &SolutionReport) -> String {
    let mut out = String::from("graph feeder {\n  node [style=filled];\n");
    for n in &report.nodes {
        let log = if n.max_if_pu > 0.0 { n.max_if_pu.log10() } else { f64::NEG_INFINITY };
        let log_text = if log.is_finite() { format!("{log:.3}") } else { "-inf".into() };
        let _ = write!(
            out,
            "  {} [max_if_pu={:?}, log10_if=\"{}\", fillcolor=\"{}\"",
            quote_dot(&n.bus),
            n.max_if_pu,
            log_text,
            heat(n.max_if_pu, report.threshold, n.flagged)
        );
        if n.flagged {
            out.push_str(", flagged=true");
        }
        out.push_str("];\n");
    }
    for (a, b) in &report.edges {
        let _ = writeln!(out, "  {} -- {};", quote_dot(a), quote_dot(b));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{solve_power_flow, solve_tpia, Objective};
    use crate::engine::SolverSettings;
    use crate::synthetic::two_bus_analog;

    #[test]
    fn format_tags() {
        assert_eq!("JSON".parse::<OutputFormat>(), Ok(OutputFormat::Json));
        assert_eq!("dot".parse::<OutputFormat>(), Ok(OutputFormat::Dot));
        assert!("xml".parse::<OutputFormat>().unwrap_err().contains("xml"));
    }

    #[test]
    fn feasible_power_flow_csv_has_zero_sources() {
        let report = solve_power_flow(&two_bus_analog(1.0, 10.0), &SolverSettings::default());
        assert!(report.converged);
        let text = write_solution(&report, OutputFormat::Csv);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), report.node_phases.len());
        for row in rows {
            let cols: Vec<&str> = row.split(',').collect();
            assert_eq!(cols.len(), 7);
            assert_eq!(cols[4], "0.0");
        }
    }

    #[test]
    fn dot_marks_the_single_infeasible_node() {
        let net = two_bus_analog(3.0, 10.0);
        let report = solve_tpia(&net, Objective::L1, None, &SolverSettings::default(), None).unwrap();
        assert_eq!(report.nonzero_nodes, 1);
        let text = write_solution(&report, OutputFormat::Dot);
        assert!(text.starts_with("graph "));
        assert_eq!(text.matches("flagged=true").count(), 1);
        assert!(text.contains("\"src\" -- \"load\";"));
    }

    #[test]
    fn json_round_trip_is_identical() {
        let net = two_bus_analog(3.0, 10.0);
        let report = solve_tpia(&net, Objective::LeastSquares, None, &SolverSettings::default(), None).unwrap();
        let text = write_solution(&report, OutputFormat::Json);
        assert_eq!(read_solution_json(&text).unwrap(), report);
    }
}
