use std::path::{Path, PathBuf};

use cogeffort::baselines::BaselinesConfig;
use cogeffort::dataprep::PrepConfig;
use cogeffort::evalcore::EffortConfig;
use cogeffort::explain::ExplainConfig;
use cogeffort::neuralnet::grid::GridSpace;
use cogeffort::neuralnet::ModelConfig;
use cogeffort::synthgen::CohortSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Use the grid-search winner instead of a single training run in `pipeline`.
    pub use_in_pipeline: bool,
    pub gru_units: Vec<usize>,
    pub dropout_rates: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

impl Default for GridSection {
    fn default() -> Self {
        let s = GridSpace::default();
        Self {
            use_in_pipeline: false,
            gru_units: s.gru_units,
            dropout_rates: s.dropout_rates,
            learning_rates: s.learning_rates,
            batch_sizes: s.batch_sizes,
        }
    }
}

impl GridSection {
    pub fn space(&self) -> GridSpace {
        GridSpace {
            gru_units: self.gru_units.clone(),
            dropout_rates: self.dropout_rates.clone(),
            learning_rates: self.learning_rates.clone(),
            batch_sizes: self.batch_sizes.clone(),
        }
    }
}

/// TOML run configuration. Every section is optional; unknown keys are errors.
///
/// The global `seed` replaces the per-section seeds, so one number fixes a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub synth: CohortSpec,
    pub prep: PrepConfig,
    pub train: ModelConfig,
    pub grid: GridSection,
    pub baselines: BaselinesConfig,
    pub explain: ExplainConfig,
    pub effort: EffortConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: None,
            synth: CohortSpec::default(),
            prep: PrepConfig::default(),
            train: ModelConfig::default(),
            grid: GridSection::default(),
            baselines: BaselinesConfig::default(),
            explain: ExplainConfig::default(),
            effort: EffortConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::validation("config", format!("invalid config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies the global seed to every section and validates module settings.
    pub fn resolve(mut self) -> Result<Self, CliError> {
        self.synth.seed = self.seed;
        self.train.seed = self.seed;
        self.baselines.forest.seed = self.seed;
        self.baselines.gbt.seed = self.seed;
        self.synth.validate().map_err(|e| CliError::from_core("config", e))?;
        self.train.validate().map_err(|e| CliError::from_core("config", e))?;
        if self.prep.pca_components != cogeffort::N_COMPONENTS {
            return Err(CliError::validation(
                "config",
                format!("prep.pca_components must be {} to match the model input", cogeffort::N_COMPONENTS),
            ));
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_parse() {
        let c = RunConfig::parse(
            "seed = 7\n[synth]\neffect_size = 1.5\n[train]\narchitecture = \"lstm\"\nmax_epochs = 3\n\
             [grid]\ngru_units = [8]\nbatch_sizes = [4]\n[effort]\nmode = \"conventional\"\n",
        )
        .unwrap()
        .resolve()
        .unwrap();
        assert_eq!(c.synth.effect_size, 1.5);
        assert_eq!(c.synth.seed, 7);
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.grid.gru_units, vec![8]);
        assert_eq!(c.grid.dropout_rates.len(), 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in ["bogus = 1", "[train]\nlayers = 3", "[nope]\nx = 1", "[grid]\nfoo = []"] {
            let e = RunConfig::parse(text).unwrap_err();
            assert_eq!(e.exit_code(), 1, "{text}");
        }
    }

    #[test]
    fn invalid_values_rejected() {
        let c = RunConfig::parse("[train]\ndropout_rate = 1.0").unwrap();
        assert!(c.resolve().is_err());
    }
}
