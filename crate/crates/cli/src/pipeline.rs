use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::ValueEnum;
use fisherlat::geometry::{geodesic, hessian_field, heatmap_svg, path_curvature, phase_map, read_points, MetricField};
use fisherlat::groundtruth::{
    evaluate_reconstruction, integrate_derivative_field, ising_reference_from_table, mean_as_stat, tasep_free_energy, ScalarField,
};
use fisherlat::posterior::{
    auto_n_eff, build_feature_table, ingest_features, oracle_posterior_from_table, posterior_from_features, write_feature_csv,
};
use fisherlat::potential::{train_potential, write_loss_history};
use fisherlat::rng::{derive_seed, stage as tag};
use fisherlat::samplers::OracleModel;
use fisherlat::{PosteriorField, PotentialModel};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, System};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Stage {
    Sample,
    Posterior,
    Train,
    Metric,
    Geodesic,
    Groundtruth,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Sample,
        Stage::Posterior,
        Stage::Train,
        Stage::Metric,
        Stage::Geodesic,
        Stage::Groundtruth,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Sample => "sample",
            Stage::Posterior => "posterior",
            Stage::Train => "train",
            Stage::Metric => "metric",
            Stage::Geodesic => "geodesic",
            Stage::Groundtruth => "groundtruth",
            Stage::Evaluate => "evaluate",
        }
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage '{}' failed: {}", self.stage, self.message)
    }
}

type StageResult = Result<(), String>;

trait Context<T> {
    fn ctx(self, what: &str) -> Result<T, String>;
}

impl<T, E: fmt::Display> Context<T> for Result<T, E> {
    fn ctx(self, what: &str) -> Result<T, String> {
        self.map_err(|e| format!("{what}: {e}"))
    }
}

pub const FEATURES: &str = "features.csv";
pub const POSTERIOR: &str = "posterior.csv";
pub const MODEL: &str = "model.json";
pub const LOSS: &str = "loss.csv";
pub const METRIC: &str = "metric.csv";
pub const PHASE_MAP: &str = "phase_map.csv";
pub const PHASE_BOUNDARY: &str = "phase_boundary.csv";
pub const GEODESICS: &str = "geodesics.json";
pub const METRIC_SVG: &str = "metric_g11.svg";
pub const GROUNDTRUTH: &str = "groundtruth.csv";
pub const EVALUATION: &str = "evaluation.json";
pub const HESSIAN_ERROR: &str = "hessian_rel_error.csv";
pub const MANIFEST: &str = "manifest.json";

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Self {
        let out = cfg.output_dir.clone();
        Self { cfg, out }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn run(&self, stages: &[Stage]) -> Result<(), StageError> {
        fs::create_dir_all(&self.out).map_err(|e| StageError {
            stage: "setup",
            message: format!("cannot create {}: {e}", self.out.display()),
        })?;
        for &s in stages {
            log::info!("stage {}", s.name());
            let r = match s {
                Stage::Sample => self.sample(),
                Stage::Posterior => self.posterior(),
                Stage::Train => self.train(),
                Stage::Metric => self.metric(),
                Stage::Geodesic => self.geodesics(),
                Stage::Groundtruth => self.groundtruth(),
                Stage::Evaluate => self.evaluate(),
            };
            let manifest = self.write_manifest();
            r.map_err(|message| StageError { stage: s.name(), message })?;
            manifest.map_err(|message| StageError { stage: "manifest", message })?;
        }
        Ok(())
    }

    fn grid(&self) -> Result<fisherlat::ParamGrid, String> {
        self.cfg.grid()
    }

    fn read_table(&self) -> Result<fisherlat::FeatureTable, String> {
        let p = self.path(FEATURES);
        ingest_features(&p, &self.grid()?).ctx(&format!("reading {}", p.display()))
    }

    fn sample(&self) -> StageResult {
        let grid = self.grid()?;
        let table = match &self.cfg.system {
            System::External { features } => ingest_features(features, &grid).ctx(&format!("reading {}", features.display()))?,
            system => {
                let (spec, replicas) = system.sampler().expect("sampling system");
                build_feature_table(&grid, &spec, replicas, self.cfg.seed).ctx("sampling")?
            }
        };
        write_feature_csv(&table, &self.path(FEATURES)).ctx("writing features")
    }

    fn posterior(&self) -> StageResult {
        let table = self.read_table()?;
        let post = match &self.cfg.system {
            System::Oracle { n_spins, .. } => oracle_posterior_from_table(&table, &OracleModel::new(*n_spins).ctx("oracle")?).ctx("oracle posterior")?,
            _ => {
                let w = self.cfg.posterior.weighting;
                let n_eff = self.cfg.posterior.n_eff.unwrap_or_else(|| auto_n_eff(&table, w));
                log::info!("n_eff = {n_eff}");
                posterior_from_features(&table, n_eff, w).ctx("posterior")?
            }
        };
        post.write(&self.path(POSTERIOR)).ctx("writing posterior")
    }

    fn train(&self) -> StageResult {
        let post = PosteriorField::read(&self.path(POSTERIOR)).ctx("reading posterior")?;
        let mut tc = self.cfg.train.clone();
        tc.seed = derive_seed(self.cfg.seed, tag::TRAIN, tc.seed);
        let r = train_potential(&post, &tc).ctx("training")?;
        log::info!("loss {} -> best {}", r.losses[0], r.best_loss);
        r.model.save(&self.path(MODEL)).ctx("writing model")?;
        write_loss_history(&r.losses, &self.path(LOSS)).ctx("writing loss history")
    }

    fn load_model(&self) -> Result<PotentialModel, String> {
        PotentialModel::load(&self.path(MODEL)).ctx("reading model")
    }

    fn metric(&self) -> StageResult {
        let grid = self.grid()?;
        let model = self.load_model()?;
        let g = &self.cfg.geometry;
        let field = hessian_field(&model, &grid, g.hessian, g.h).ctx("hessian")?;
        if field.is_degenerate() {
            log::warn!("every metric cell was clamped to the eigenvalue floor {}", field.floor());
        }
        log::info!("min eigenvalue {} ({} of {} cells clamped)", field.min_eigenvalue(), field.clamped_cells(), grid.len());
        field.write(&self.path(METRIC)).ctx("writing metric")?;
        let map = phase_map(&field, g.phase_quantile).ctx("phase map")?;
        map.values.write(&self.path(PHASE_MAP)).ctx("writing phase map")?;
        let flags = ScalarField::new(grid, map.flagged.iter().map(|&f| f as u8 as f64).collect(), "phase_boundary").ctx("flags")?;
        flags.write(&self.path(PHASE_BOUNDARY)).ctx("writing phase boundary")
    }

    fn geodesics(&self) -> StageResult {
        let field = MetricField::read(&self.path(METRIC)).ctx("reading metric")?;
        let g = &self.cfg.geometry;
        let mut summary = Vec::new();
        let mut paths = Vec::new();
        for (k, [a, b]) in g.endpoints.iter().enumerate() {
            let p = geodesic(&field, *a, *b, &g.geodesic).ctx(&format!("geodesic {k}"))?;
            let name = format!("geodesic_{k}.csv");
            p.write(&self.path(&name)).ctx("writing path")?;
            summary.push(json!({
                "index": k,
                "file": name,
                "start": a,
                "end": b,
                "length": p.length,
                "straight_length": p.straight_length,
                "converged": p.converged,
                "iterations": p.energy_history.len() - 1,
                "curvature": path_curvature(&p.points).ok(),
            }));
            paths.push(p.points);
        }
        write_json(&self.path(GEODESICS), &summary)?;
        let refs: Vec<&[[f64; 2]]> = paths.iter().map(|p| p.as_slice()).collect();
        fs::write(self.path(METRIC_SVG), heatmap_svg(&field.component(0), &refs)).ctx("writing svg")
    }

    fn groundtruth(&self) -> StageResult {
        let grid = self.grid()?;
        let field = match &self.cfg.system {
            System::Tasep { .. } => ScalarField::from_fn(grid, "F", |t| tasep_free_energy(t[0], t[1]).unwrap_or(f64::NAN)).ctx("TASEP free energy")?,
            System::Oracle { n_spins, .. } => {
                let m = OracleModel::new(*n_spins).ctx("oracle")?;
                ScalarField::from_fn(grid, "logZ", |t| m.log_partition(t)).ctx("oracle log-partition")?
            }
            System::Ising { .. } => {
                let (e, m) = ising_reference_from_table(&self.read_table()?).ctx("Ising reference")?;
                let r = integrate_derivative_field(&e, &m, 1e-12).ctx("integration")?;
                log::info!("integrated (E, M): residual rms {}", r.residual_rms);
                r.field
            }
            System::External { .. } => {
                log::info!("no ground truth for external features");
                return Ok(());
            }
        };
        field.write(&self.path(GROUNDTRUTH)).ctx("writing ground truth")
    }

    fn evaluate(&self) -> StageResult {
        if !self.cfg.evaluation.enabled {
            return Ok(());
        }
        let names = match self.cfg.system {
            System::Tasep { .. } => ["F_rmse", "dFdalpha_rmse", "dFdbeta_rmse"],
            System::Ising { .. } => ["F_rmse", "dFdT_rmse", "dFdH_rmse"],
            System::Oracle { .. } => ["F_rmse", "dFdh1_rmse", "dFdh2_rmse"],
            System::External { .. } => {
                log::info!("no ground truth for external features; skipping evaluation");
                return Ok(());
            }
        };
        let grid = self.grid()?;
        let gt = ScalarField::read(&self.path(GROUNDTRUTH)).ctx("reading ground truth")?;
        let model = self.load_model()?;
        let rec = ScalarField::new(grid, model.values(&grid.centers()), "v").ctx("reconstruction")?;
        let ev = evaluate_reconstruction(&rec, &gt, names).ctx("evaluation")?;
        let mut report = BTreeMap::new();
        report.insert("system".to_string(), json!(self.cfg.system.name()));
        for (k, v) in &ev.rmse {
            report.insert(k.clone(), json!(v));
        }
        report.insert("affine_fit".into(), json!(ev.fit));
        if self.cfg.evaluation.baseline {
            let mut rc = self.cfg.evaluation.regression.clone();
            rc.seed = derive_seed(self.cfg.seed, tag::REGRESSION, rc.seed);
            let b = mean_as_stat(&self.read_table()?, &rc).ctx("Mean-as-Stat baseline")?;
            let eb = evaluate_reconstruction(&b.f.field, &gt, names).ctx("baseline evaluation")?;
            report.insert("baseline".into(), json!(eb.rmse));
        }
        if let System::Oracle { n_spins, .. } = self.cfg.system {
            let (median, errors) = oracle_hessian_error(&MetricField::read(&self.path(METRIC)).ctx("reading metric")?, n_spins)?;
            report.insert("hessian_median_rel_error".into(), json!(median));
            errors.write(&self.path(HESSIAN_ERROR)).ctx("writing Hessian error field")?;
        }
        write_json(&self.path(EVALUATION), &report)
    }

    /// Lists every artifact in the output directory with its SHA-256.
    fn write_manifest(&self) -> Result<(), String> {
        let mut artifacts = Vec::new();
        let mut entries: Vec<PathBuf> = fs::read_dir(&self.out)
            .ctx("listing output directory")?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != MANIFEST))
            .collect();
        entries.sort();
        for p in entries {
            let bytes = fs::read(&p).ctx(&format!("reading {}", p.display()))?;
            artifacts.push(json!({
                "path": p.file_name().unwrap().to_string_lossy(),
                "bytes": bytes.len(),
                "sha256": hex::encode(Sha256::digest(&bytes)),
            }));
        }
        let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let config = serde_json::to_vec(&self.cfg).ctx("serializing config")?;
        write_json(
            &self.path(MANIFEST),
            &json!({
                "created_unix": created,
                "seed": self.cfg.seed,
                "system": self.cfg.system.name(),
                "config_sha256": hex::encode(Sha256::digest(&config)),
                "artifacts": artifacts,
            }),
        )
    }
}

/// Median relative error of the diagonal metric components against the oracle's analytic
/// Hessian after a least-squares scale fit, and the per-cell worst component error.
fn oracle_hessian_error(field: &MetricField, n_spins: usize) -> Result<(f64, ScalarField), String> {
    let m = OracleModel::new(n_spins).ctx("oracle")?;
    let grid = *field.grid();
    let (mut rec, mut exact) = (Vec::new(), Vec::new());
    for (c, t) in field.tensors().iter().enumerate() {
        rec.extend([t[0], t[2]]);
        exact.extend(m.hessian_diag(grid.center(c)));
    }
    let s = rec.iter().zip(&exact).map(|(a, b)| a * b).sum::<f64>() / rec.iter().map(|a| a * a).sum::<f64>();
    let rel: Vec<f64> = rec.iter().zip(&exact).map(|(a, b)| (s * a - b).abs() / b).collect();
    let per_cell = rel.chunks(2).map(|r| r[0].max(r[1])).collect();
    let mut sorted = rel.clone();
    sorted.sort_by(f64::total_cmp);
    let field = ScalarField::new(grid, per_cell, "hessian_rel_error").ctx("error field")?;
    Ok((sorted[sorted.len() / 2], field))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), String> {
    let mut text = serde_json::to_string_pretty(value).ctx("serializing")?;
    text.push('\n');
    fs::write(path, text).ctx(&format!("writing {}", path.display()))
}

/// Reads `k,t1,t2` path files for plotting.
pub fn read_path(path: &Path) -> Result<Vec<[f64; 2]>, String> {
    read_points(path).map_err(|e| e.to_string())
}
