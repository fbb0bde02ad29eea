//! Run configuration: one TOML file covering every pipeline stage, with
//! command-line overrides for the seed, output directory, and worker count.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use alphamine_core::backtest::StrategyConfig;
use alphamine_core::boost::BoostConfig;
use alphamine_core::discovery::TrainSchedule;
use alphamine_core::gp::GpConfig;
use alphamine_core::ic::RankKernelParams;
use alphamine_core::indicators::PriorCatalog;
use alphamine_core::market::{Series, SplitSpec};
use alphamine_core::mlp::MlpConfig;
use alphamine_core::synthetic::SynthConfig;
use alphamine_core::{Error, Result};

/// Every knob of the pipeline. Defaults reproduce the desk-scale run;
/// partial TOML files override only the keys they mention.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed. Stage seeds are derived from it, overriding the
    /// per-stage seed fields inside sub-configs.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// CSV panel to load. When absent, commands read the synthetic panel
    /// written by `synth` into the output directory.
    pub csv: Option<PathBuf>,
    /// Trailing window the neural extractor reads; its input size is
    /// derived as 5 times this.
    pub window: usize,
    /// Cluster count for diversity scoring; 0 disables diversity and the
    /// cluster plot.
    pub diversity_k: usize,
    /// Evolved expressions carried into the manifest and the gp pool.
    pub gp_keep: usize,
    pub workers: Option<usize>,
    pub synthetic: SynthConfig,
    pub split: SplitSpec,
    pub model: MlpConfig,
    pub schedule: TrainSchedule,
    pub prune_rate: f64,
    pub kernel: RankKernelParams,
    pub gp: GpConfig,
    pub catalog: PriorCatalog,
    pub strategy: StrategyConfig,
    pub boost: BoostConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            out_dir: PathBuf::from("out"),
            csv: None,
            window: 30,
            diversity_k: 3,
            gp_keep: 10,
            workers: None,
            synthetic: SynthConfig::default(),
            split: SplitSpec::default(),
            model: MlpConfig::default(),
            schedule: TrainSchedule::default(),
            prune_rate: 0.35,
            kernel: RankKernelParams::default(),
            gp: GpConfig::default(),
            catalog: PriorCatalog::default(),
            strategy: StrategyConfig::default(),
            boost: BoostConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| {
            Error::InvalidConfig(format!("{}: {e}", path.display()))
        })
    }

    /// The extractor config with its input size tied to the window.
    pub fn model_config(&self) -> MlpConfig {
        MlpConfig {
            input_size: Series::ALL.len() * self.window,
            ..self.model
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::InvalidConfig("window must be >= 2".into()));
        }
        if self.gp_keep == 0 {
            return Err(Error::InvalidConfig("gp_keep must be >= 1".into()));
        }
        if let Some(0) = self.workers {
            return Err(Error::InvalidConfig("workers must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.prune_rate) {
            return Err(Error::InvalidConfig(format!(
                "prune_rate {} outside [0, 1)",
                self.prune_rate
            )));
        }
        self.model_config().validate()?;
        self.schedule.validate()?;
        self.kernel.validate()?;
        self.gp.validate()?;
        self.catalog.validate()?;
        self.strategy.validate()?;
        self.boost.validate()?;
        if self.csv.is_none() {
            self.synthetic.validate()?;
        }
        Ok(())
    }
}
