use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use tpia_core::analysis::{AnalysisError, NodeSubset};
use tpia_core::ingest::{IngestError, ParseMode};
use tpia_core::{NetworkModel, Phase, SolverSettings};

/// Environment variable naming the default settings file.
pub const SETTINGS_ENV: &str = "TPIA_SETTINGS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Canonical,
    Glm,
}

impl InputFormat {
    /// `.glm` files are GLM, everything else canonical JSON.
    pub fn infer(path: &Path) -> InputFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("glm") => InputFormat::Glm,
            _ => InputFormat::Canonical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Pf,
    L2,
    L1,
    All,
}

/// One solve requested by a [`Mode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solve {
    PowerFlow,
    LeastSquares,
    L1,
}

impl Mode {
    pub fn solves(self) -> &'static [Solve] {
        match self {
            Mode::Pf => &[Solve::PowerFlow],
            Mode::L2 => &[Solve::LeastSquares],
            Mode::L1 => &[Solve::L1],
            Mode::All => &[Solve::PowerFlow, Solve::LeastSquares, Solve::L1],
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("I/O error: {}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {}: {source}", .path.display())]
    Parse { path: PathBuf, source: IngestError },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> CliError {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Subset(_) | AnalysisError::Settings(_) => CliError::Config(e.to_string()),
            other => CliError::Solver(other.to_string()),
        }
    }
}

/// Flags shared by `run` and `batch`.
#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Solves to perform.
    #[arg(long, value_enum, default_value_t = Mode::All)]
    pub mode: Mode,
    /// Input format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    /// Node-phases allowed to host infeasibility sources: one bus per line,
    /// optionally followed by phases (`n4 A C`). `#` starts a comment.
    #[arg(long)]
    pub subset: Option<PathBuf>,
    /// Warm-start the analyses from power flow at these load scales.
    #[arg(long, value_delimiter = ',')]
    pub warm_start: Option<Vec<f64>>,
    /// TOML settings file.
    #[arg(long, env = SETTINGS_ENV)]
    pub settings: Option<PathBuf>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub if_threshold: Option<f64>,
    #[arg(long)]
    pub epsilon_initial: Option<f64>,
    #[arg(long)]
    pub epsilon_factor: Option<f64>,
    #[arg(long)]
    pub epsilon_floor: Option<f64>,
    /// Turn unknown keys in canonical input into warnings.
    #[arg(long)]
    pub lenient: bool,
}

/// Everything needed to solve one input file.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: PathBuf,
    pub format: InputFormat,
    pub mode: Mode,
    pub subset: Option<PathBuf>,
    pub warm_start: Option<Vec<f64>>,
    pub settings: SolverSettings,
    pub parse_mode: ParseMode,
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub dot: Option<PathBuf>,
}

impl SolveArgs {
    pub fn settings(&self) -> Result<SolverSettings, CliError> {
        let mut s = match &self.settings {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => SolverSettings::default(),
        };
        if let Some(v) = self.tolerance {
            s.tolerance = v;
        }
        if let Some(v) = self.max_iter {
            s.max_iterations = v;
        }
        if let Some(v) = self.if_threshold {
            s.if_threshold = v;
        }
        if let Some(v) = self.epsilon_initial {
            s.epsilon_initial = v;
        }
        if let Some(v) = self.epsilon_factor {
            s.epsilon_factor = v;
        }
        if let Some(v) = self.epsilon_floor {
            s.epsilon_floor = v;
        }
        s.validate().map_err(CliError::Config)?;
        Ok(s)
    }

    pub fn config_for(&self, input: &Path, settings: &SolverSettings) -> RunConfig {
        RunConfig {
            input: input.to_path_buf(),
            format: self.format.unwrap_or_else(|| InputFormat::infer(input)),
            mode: self.mode,
            subset: self.subset.clone(),
            warm_start: self.warm_start.clone(),
            settings: settings.clone(),
            parse_mode: if self.lenient { ParseMode::Lenient } else { ParseMode::Strict },
            json: None,
            csv: None,
            dot: None,
        }
    }
}

pub fn read_subset(path: &Path, network: &NetworkModel) -> Result<NodeSubset, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_subset(&text, network)
}

pub fn parse_subset(text: &str, network: &NetworkModel) -> Result<NodeSubset, CliError> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        let mut words = line.split_whitespace();
        let Some(bus_id) = words.next() else { continue };
        let bus = network
            .bus(bus_id)
            .ok_or_else(|| CliError::Config(format!("subset line {}: unknown bus '{bus_id}'", n + 1)))?;
        let phases: Vec<Phase> = words
            .map(|w| w.parse::<Phase>())
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Config(format!("subset line {}: {e}", n + 1)))?;
        if phases.is_empty() {
            pairs.extend(bus.phases.iter().map(|p| (bus_id.to_string(), p)));
        } else {
            pairs.extend(phases.into_iter().map(|p| (bus_id.to_string(), p)));
        }
    }
    Ok(NodeSubset::from_pairs(pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tpia_core::synthetic::four_bus_feeder;

    #[test]
    fn subset_lines() {
        let net = four_bus_feeder();
        let s = parse_subset("# weak end\nn4 A C\n\nn3\n", &net).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.contains("n4", Phase::C) && !s.contains("n4", Phase::B));
        assert!(matches!(parse_subset("nx\n", &net), Err(CliError::Config(_))));
        assert!(matches!(parse_subset("n4 D\n", &net), Err(CliError::Config(_))));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(InputFormat::infer(Path::new("a/feeder.GLM")), InputFormat::Glm);
        assert_eq!(InputFormat::infer(Path::new("feeder.json")), InputFormat::Canonical);
    }
}
