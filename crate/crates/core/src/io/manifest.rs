use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{file_err, IoError};
use crate::dmd::ModeScaling;
use crate::grid::GridSpec;
use crate::linalg::RankPolicy;
use crate::pipeline::{CouplingConfig, Reservoir};
use crate::transport::{BalanceRule, CostKind, ProblemKind};

/// Human-readable record of a run's settings, written as TOML into every
/// output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub input: String,
    pub n_rows: usize,
    pub n_cols: usize,
    pub v_max: f64,
    pub dt_data: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    pub scaling: ModeScaling,
    pub cost: String,
    pub mode: ProblemKind,
    pub balance: BalanceRule,
    pub reservoir: Reservoir,
    pub aggregation_window: usize,
    pub min_refinement: usize,
    pub workers: usize,
    pub length_unit: String,
    pub time_unit: String,
    pub value_unit: String,
}

impl RunManifest {
    pub fn from_config(
        command: &str,
        input: &str,
        grid: &GridSpec,
        dt_data: f64,
        c: &CouplingConfig,
    ) -> Self {
        let (rank, energy) = match c.rank {
            RankPolicy::Fixed(r) => (Some(r), None),
            RankPolicy::Energy(e) => (None, Some(e)),
        };
        RunManifest {
            command: command.into(),
            input: input.into(),
            n_rows: grid.n_rows,
            n_cols: grid.n_cols,
            v_max: c.v_max,
            dt_data,
            rank,
            energy,
            scaling: c.scaling,
            cost: c.cost.label(),
            mode: c.mode,
            balance: c.balance,
            reservoir: c.reservoir,
            aggregation_window: c.aggregation_window,
            min_refinement: c.min_refinement,
            workers: c.workers,
            length_unit: "1".into(),
            time_unit: "1".into(),
            value_unit: "mass".into(),
        }
    }

    pub fn to_config(&self) -> Result<CouplingConfig, IoError> {
        let rank = match (self.rank, self.energy) {
            (Some(r), None) => RankPolicy::Fixed(r),
            (None, Some(e)) => RankPolicy::Energy(e),
            (None, None) => RankPolicy::default(),
            (Some(_), Some(_)) => {
                return Err(IoError::Toml("set either rank or energy, not both".into()))
            }
        };
        let cost = CostKind::parse(&self.cost).map_err(|e| IoError::Toml(e.to_string()))?;
        Ok(CouplingConfig {
            v_max: self.v_max,
            dt_data: Some(self.dt_data),
            rank,
            scaling: self.scaling,
            cost,
            mode: self.mode,
            balance: self.balance,
            reservoir: self.reservoir,
            aggregation_window: self.aggregation_window,
            min_refinement: self.min_refinement,
            workers: self.workers,
            ..Default::default()
        })
    }

    pub fn to_toml(&self) -> Result<String, IoError> {
        toml::to_string(self).map_err(|e| IoError::Toml(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self, IoError> {
        toml::from_str(s).map_err(|e| IoError::Toml(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        std::fs::write(path, self.to_toml()?).map_err(file_err(path))
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        let s = std::fs::read_to_string(path).map_err(file_err(path))?;
        Self::from_toml(&s)
    }
}

/// Echo of a command that is not a coupled run: its name and the options
/// it ran with, in a stable key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEcho {
    pub command: String,
    pub options: BTreeMap<String, String>,
}

impl CommandEcho {
    pub fn new(command: &str) -> Self {
        CommandEcho {
            command: command.into(),
            options: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.options.insert(key.into(), value.to_string());
        self
    }

    pub fn to_toml(&self) -> Result<String, IoError> {
        toml::to_string(self).map_err(|e| IoError::Toml(e.to_string()))
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        std::fs::write(path, self.to_toml()?).map_err(file_err(path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let config = CouplingConfig {
            v_max: 50.0 / 3.6,
            rank: RankPolicy::Fixed(95),
            cost: CostKind::Anisotropic { lx: 130.0, ly: 140.0 },
            reservoir: Reservoir::Auto,
            aggregation_window: 6,
            workers: 2,
            ..Default::default()
        };
        let grid = GridSpec::new(3, 4, 130.0, 140.0, [0.0, 0.0]).unwrap();
        let m = RunManifest::from_config("flows", "presence.raster", &grid, 900.0, &config);
        let text = m.to_toml().unwrap();
        assert!(text.contains("cost = \"anisotropic:130,140\""));
        assert!(text.contains("reservoir = \"auto\""));
        assert!(text.contains("mode = \"local\""));
        let back = RunManifest::from_toml(&text).unwrap();
        assert_eq!(back, m);
        let c = back.to_config().unwrap();
        assert_eq!(c.rank, config.rank);
        assert_eq!(c.cost, config.cost);
        assert_eq!(c.dt_data, Some(900.0));
    }
}
