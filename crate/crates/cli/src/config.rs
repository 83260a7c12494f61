use std::path::{Path, PathBuf};

use fisherlat::geometry::{GeodesicConfig, HessianMode};
use fisherlat::groundtruth::RegressionConfig;
use fisherlat::samplers::{IsingInit, OracleModel, SamplerSpec};
use fisherlat::{ParamGrid, TrainConfig, Weighting};
use serde::{Deserialize, Serialize};

/// Which process generates the data, with its sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "lowercase")]
pub enum System {
    Ising {
        side: usize,
        sweeps: usize,
        #[serde(default)]
        init: IsingInit,
        replicas: usize,
    },
    Tasep {
        sites: usize,
        #[serde(default)]
        sweeps: Option<usize>,
        bins: usize,
        replicas: usize,
    },
    /// Exact reference model; `replicas` draws per cell feed an exact-likelihood posterior.
    Oracle { n_spins: usize, replicas: usize },
    /// Features computed elsewhere, in the `row_index,col_index,replica,f0,...` layout.
    External { features: PathBuf },
}

impl System {
    pub fn name(&self) -> &'static str {
        match self {
            System::Ising { .. } => "ising",
            System::Tasep { .. } => "tasep",
            System::Oracle { .. } => "oracle",
            System::External { .. } => "external",
        }
    }

    /// Sampler and replica count, for every system that samples.
    pub fn sampler(&self) -> Option<(SamplerSpec, usize)> {
        match *self {
            System::Ising { side, sweeps, init, replicas } => Some((SamplerSpec::Ising { side, sweeps, init }, replicas)),
            System::Tasep { sites, sweeps, bins, replicas } => Some((SamplerSpec::Tasep { sites, sweeps, bins }, replicas)),
            System::Oracle { n_spins, replicas } => Some((SamplerSpec::Oracle { n_spins }, replicas)),
            System::External { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub bounds: [f64; 4],
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosteriorConfig {
    /// `None` picks the sharpness heuristic of `auto_n_eff`.
    pub n_eff: Option<f64>,
    pub weighting: Weighting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub hessian: HessianMode,
    /// Stencil spacing for finite-difference Hessians.
    pub h: f64,
    pub phase_quantile: f64,
    pub endpoints: Vec<[[f64; 2]; 2]>,
    pub geodesic: GeodesicConfig,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            hessian: HessianMode::Analytic,
            h: 1e-3,
            phase_quantile: 0.95,
            endpoints: Vec::new(),
            geodesic: GeodesicConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub enabled: bool,
    /// Also fit and score the Mean-as-Stat regression baseline.
    pub baseline: bool,
    pub regression: RegressionConfig,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            baseline: false,
            regression: RegressionConfig::default(),
        }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub system: System,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub grid: GridConfig,
    #[serde(default)]
    pub posterior: PosteriorConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

impl ExperimentConfig {
    /// Parses and validates; relative paths inside the file resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let System::External { features } = &mut cfg.system {
            if features.is_relative() {
                *features = base.join(&*features);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<ParamGrid, String> {
        ParamGrid::new(self.grid.bounds, self.grid.nx, self.grid.ny).map_err(|e| format!("grid: {e}"))
    }

    pub fn validate(&self) -> Result<(), String> {
        let grid = self.grid()?;
        match &self.system {
            System::External { features } => {
                if !features.is_file() {
                    return Err(format!("external feature file {} does not exist", features.display()));
                }
            }
            other => {
                let (spec, replicas) = other.sampler().expect("sampling system");
                spec.validate().map_err(|e| format!("sampler: {e}"))?;
                if replicas == 0 {
                    return Err("replicas must be at least 1".into());
                }
                if let System::Oracle { n_spins, .. } = other {
                    OracleModel::new(*n_spins).map_err(|e| format!("oracle: {e}"))?;
                }
            }
        }
        if let Some(n) = self.posterior.n_eff {
            if !(n > 0.0) || !n.is_finite() {
                return Err(format!("posterior.n_eff = {n} must be positive"));
            }
        }
        self.train.validate().map_err(|e| format!("train: {e}"))?;
        self.geometry.geodesic.validate().map_err(|e| format!("geometry.geodesic: {e}"))?;
        if self.geometry.hessian == HessianMode::FiniteDiff && !(self.geometry.h > 0.0) {
            return Err(format!("geometry.h = {} must be positive", self.geometry.h));
        }
        if self.geometry.hessian == HessianMode::Analytic && !self.train.activation.is_smooth() {
            return Err("geometry.hessian = analytic needs a smooth activation; use finite-diff".into());
        }
        if !(0.0..=1.0).contains(&self.geometry.phase_quantile) {
            return Err(format!("geometry.phase_quantile = {} must lie in [0, 1]", self.geometry.phase_quantile));
        }
        for (k, pair) in self.geometry.endpoints.iter().enumerate() {
            for p in pair {
                if !grid.contains(*p) {
                    return Err(format!("geometry.endpoints[{k}] point {p:?} lies outside the grid"));
                }
            }
        }
        Ok(())
    }
}
