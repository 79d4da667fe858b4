//! TOML scenario configuration.
//!
//! ```toml
//! [grids]       # dt_sched_min, dt_disp_min, dt_rt_min, horizon_sched, horizon_disp, start, end
//! [[groups]]    # id, weight, switch_weight?, parent?, nodes, critical_nodes
//! [[resources.es]]
//! [[resources.dg]]
//! [policy]      # reserve, correction, fuel, windows, bounds, solver limits
//! [series]      # truth, stage1, stage2 CSV paths, relative to the config file
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, ReasonCode, Result};
use crate::scenario::{
    DgSpec, EsSpec, LoadGroupSpec, PolicyConfig, Scenario, SeriesKind, SeriesSet, TimeGrids,
    TimeSeriesFrame,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPaths {
    pub truth: PathBuf,
    pub stage1: PathBuf,
    pub stage2: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Resources {
    #[serde(default)]
    pub es: Vec<EsSpec>,
    #[serde(default)]
    pub dg: Vec<DgSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grids: TimeGrids,
    pub groups: Vec<LoadGroupSpec>,
    pub resources: Resources,
    #[serde(default)]
    pub policy: PolicyConfig,
    pub series: SeriesPaths,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(ReasonCode::Schema, e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }
}

pub fn load_scenario(config_path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(config_path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::invalid(
                ReasonCode::MissingFile,
                format!("config file {} not found", config_path.display()),
            )
        } else {
            Error::io(config_path, e)
        }
    })?;
    let cfg = ScenarioConfig::from_toml(&text)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let read = |p: &Path, kind| TimeSeriesFrame::read_csv(&base.join(p), kind);
    let series = SeriesSet {
        truth: read(&cfg.series.truth, SeriesKind::Truth)?,
        stage1: read(&cfg.series.stage1, SeriesKind::Stage1Forecast)?,
        stage2: read(&cfg.series.stage2, SeriesKind::Stage2Forecast)?,
    };
    Scenario::new(
        cfg.grids,
        cfg.groups,
        cfg.resources.es,
        cfg.resources.dg,
        cfg.policy,
        series,
    )
}

impl Scenario {
    pub fn to_config(&self, series: SeriesPaths) -> ScenarioConfig {
        ScenarioConfig {
            grids: self.grids.clone(),
            groups: self.groups.clone(),
            resources: Resources {
                es: self.es_units.clone(),
                dg: self.dg_units.clone(),
            },
            policy: self.policy.clone(),
            series,
        }
    }

    /// Writes `scenario.toml` plus the three series CSVs into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = SeriesPaths {
            truth: "truth.csv".into(),
            stage1: "stage1.csv".into(),
            stage2: "stage2.csv".into(),
        };
        self.series.truth.write_csv(&dir.join(&paths.truth))?;
        self.series.stage1.write_csv(&dir.join(&paths.stage1))?;
        self.series.stage2.write_csv(&dir.join(&paths.stage2))?;
        let cfg_path = dir.join("scenario.toml");
        std::fs::write(&cfg_path, self.to_config(paths).to_toml())
            .map_err(|e| Error::io(&cfg_path, e))?;
        Ok(cfg_path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_config_names_file() {
        let err = load_scenario(Path::new("/nonexistent/scenario.toml")).unwrap_err();
        assert_eq!(err.reason(), Some(ReasonCode::MissingFile));
    }

    #[test]
    fn schema_violation_is_reported() {
        let err = ScenarioConfig::from_toml("[grids]\ndt_sched_min = \"x\"\n").unwrap_err();
        assert_eq!(err.reason(), Some(ReasonCode::Schema));
    }
}
