use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use nhskin::analysis::{linear_grid, log_grid, Gauge, StateSource};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    HatanoNelson,
    Ssh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Pbc,
    /// Periodic ring opened by a vacancy at its last site.
    Obc,
    /// Periodic ring with potential `--epsilon` on its last site.
    Epsilon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GaugeArg {
    LargestReal,
    None,
}

impl From<GaugeArg> for Gauge {
    fn from(g: GaugeArg) -> Self {
        match g {
            GaugeArg::LargestReal => Gauge::LargestReal,
            GaugeArg::None => Gauge::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceArg {
    ClosedForm,
    Green,
    Oracle,
}

impl From<SourceArg> for StateSource {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::ClosedForm => StateSource::ClosedForm,
            SourceArg::Green => StateSource::Green,
            SourceArg::Oracle => StateSource::Oracle,
        }
    }
}

/// `min:max:steps[:log|lin]`, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
    pub log: bool,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.log {
            log_grid(self.min, self.max, self.steps)
        } else {
            linear_grid(self.min, self.max, self.steps)
        }
    }
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(format!("grid '{s}' must look like min:max:steps[:log|lin]"));
        }
        let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("grid '{s}': {e}"));
        let min = num(parts[0])?;
        let max = num(parts[1])?;
        let steps: usize = parts[2].trim().parse().map_err(|e| format!("grid '{s}': steps: {e}"))?;
        let log = match parts.get(3).map(|p| p.trim()) {
            None | Some("lin") => false,
            Some("log") => true,
            Some(other) => return Err(format!("grid '{s}': unknown spacing '{other}'")),
        };
        if !min.is_finite() || !max.is_finite() {
            return Err(format!("grid '{s}': bounds must be finite"));
        }
        if steps == 0 || (steps > 1 && min >= max) || (steps == 1 && min != max) {
            return Err(format!("grid '{s}' is not strictly increasing"));
        }
        if log && min <= 0.0 {
            return Err(format!("grid '{s}': logarithmic grids need a positive minimum"));
        }
        Ok(Self { min, max, steps, log })
    }
}

impl<'de> Deserialize<'de> for GridSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Options shared by every subcommand; each may also come from `--config`.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// TOML file with any of these options (flags take precedence).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub model: Option<ModelKind>,

    /// Number of unit cells of the periodic ring.
    #[arg(long = "N", global = true)]
    #[serde(rename = "N", alias = "n")]
    pub n: Option<usize>,

    #[arg(long = "J", global = true, allow_negative_numbers = true)]
    #[serde(rename = "J", alias = "j")]
    pub j: Option<f64>,

    #[arg(long, global = true, allow_negative_numbers = true)]
    pub delta: Option<f64>,

    #[arg(long, global = true, allow_negative_numbers = true)]
    pub t1: Option<f64>,

    #[arg(long, global = true, allow_negative_numbers = true)]
    pub t2: Option<f64>,

    #[arg(long, global = true, allow_negative_numbers = true)]
    pub gamma: Option<f64>,

    #[arg(long, global = true, value_enum)]
    pub boundary: Option<BoundaryKind>,

    /// Impurity potential for `--boundary epsilon`.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,

    /// Potential grid, `min:max:steps:log|lin`.
    #[arg(long = "epsilon-grid", global = true)]
    #[serde(alias = "epsilon-grid")]
    pub epsilon_grid: Option<GridSpec>,

    /// Grid of t2/t1, `min:max:steps:log|lin`.
    #[arg(long = "t2-grid", global = true)]
    #[serde(alias = "t2-grid")]
    pub t2_grid: Option<GridSpec>,

    /// Chain sizes in sites for the fig4 dataset.
    #[arg(long, global = true, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,

    #[arg(long, global = true, value_enum)]
    pub gauge: Option<GaugeArg>,

    /// Origin of the open-chain states for `vicinity`.
    #[arg(long, global = true, value_enum)]
    pub source: Option<SourceArg>,

    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

impl Options {
    /// Fills every unset option from `other`.
    pub fn or(self, other: Options) -> Options {
        Options {
            config: self.config.or(other.config),
            model: self.model.or(other.model),
            n: self.n.or(other.n),
            j: self.j.or(other.j),
            delta: self.delta.or(other.delta),
            t1: self.t1.or(other.t1),
            t2: self.t2.or(other.t2),
            gamma: self.gamma.or(other.gamma),
            boundary: self.boundary.or(other.boundary),
            epsilon: self.epsilon.or(other.epsilon),
            epsilon_grid: self.epsilon_grid.or(other.epsilon_grid),
            t2_grid: self.t2_grid.or(other.t2_grid),
            sizes: self.sizes.or(other.sizes),
            gauge: self.gauge.or(other.gauge),
            source: self.source.or(other.source),
            output: self.output.or(other.output),
            format: self.format.or(other.format),
        }
    }

    /// Flags layered over the config file named by `--config`, if any.
    pub fn resolve(self) -> Result<Options, CliError> {
        match &self.config {
            Some(path) => {
                let file = load(path)?;
                Ok(self.or(file))
            }
            None => Ok(self),
        }
    }

    /// Rejects parameters that do not belong to `model`.
    pub fn check_keys(&self, model: ModelKind) -> Result<(), CliError> {
        let foreign: &[(&str, bool)] = match model {
            ModelKind::HatanoNelson => &[
                ("t1", self.t1.is_some()),
                ("t2", self.t2.is_some()),
                ("gamma", self.gamma.is_some()),
            ],
            ModelKind::Ssh => &[("J", self.j.is_some()), ("delta", self.delta.is_some())],
        };
        let bad: Vec<&str> = foreign.iter().filter(|(_, set)| *set).map(|(k, _)| *k).collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "parameter(s) {} do not apply to model {}",
                bad.join(", "),
                model_name(model)
            )))
        }
    }
}

pub fn model_name(model: ModelKind) -> &'static str {
    match model {
        ModelKind::HatanoNelson => "hatano-nelson",
        ModelKind::Ssh => "ssh",
    }
}

fn load(path: &Path) -> Result<Options, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_specs_parse_and_reject_bad_input() {
        let g: GridSpec = "0.01:1e6:9:log".parse().unwrap();
        assert!(g.log && g.steps == 9);
        assert_eq!(g.values().len(), 9);
        assert!(!"0:1:5".parse::<GridSpec>().unwrap().log);
        for bad in ["1:0:5:lin", "0:1:5:cubic", "0:1", "0:1:0", "0:1:4:log", "a:1:3"] {
            assert!(bad.parse::<GridSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn flags_override_file_values() {
        let file: Options = toml::from_str("N = 12\ndelta = 0.2\nepsilon-grid = \"1:10:3:log\"").unwrap();
        let flags = Options { n: Some(40), ..Default::default() };
        let merged = flags.or(file);
        assert_eq!(merged.n, Some(40));
        assert_eq!(merged.delta, Some(0.2));
        assert_eq!(merged.epsilon_grid.unwrap().steps, 3);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(toml::from_str::<Options>("temperature = 3").is_err());
    }

    #[test]
    fn foreign_parameters_are_rejected() {
        let o = Options { t2: Some(1.0), ..Default::default() };
        assert!(o.check_keys(ModelKind::HatanoNelson).is_err());
        assert!(o.check_keys(ModelKind::Ssh).is_ok());
    }
}
