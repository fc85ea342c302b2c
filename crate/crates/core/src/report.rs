//! Result and ground-truth records, error metrics, and the batch experiment runner.

use std::io::Write;

use log::{debug, warn};
use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_error, translation_error, RigidTransform, Rotation, Vec3};
use crate::pipeline::{register, RegistrationConfig, RegistrationResult};
use crate::synth::{default_epsilon, derive_seed, synth_correspondences, SynthConfig};

fn rotation_to_array(r: &Rotation) -> [f64; 9] {
    let m = r.matrix();
    std::array::from_fn(|k| m[(k / 3, k % 3)])
}

fn rotation_from_array(a: &[f64; 9]) -> Result<Rotation> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("rotation contains non-finite values".into()));
    }
    Ok(Rotation::from_matrix_unchecked(Matrix3::from_row_slice(a)))
}

/// Serialized form of a registration result. Rotation is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultJson {
    pub mode: String,
    pub epsilon: f64,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
    pub consensus: usize,
    pub axis_inliers: [usize; 3],
    pub orthogonality_defect: f64,
    pub certified: bool,
    pub iterations: [usize; 3],
    pub runtime_ms: f64,
    pub axis_runtime_ms: [f64; 3],
}

impl ResultJson {
    pub fn from_result(result: &RegistrationResult, epsilon: f64, mode: &str) -> Self {
        let t = &result.transform.translation;
        Self {
            mode: mode.to_string(),
            epsilon,
            rotation: rotation_to_array(&result.transform.rotation),
            translation: [t.x, t.y, t.z],
            consensus: result.consensus,
            axis_inliers: result.axis_inliers(),
            orthogonality_defect: result.orthogonality_defect,
            certified: result.certified,
            iterations: result.iterations(),
            runtime_ms: result.runtime_ms,
            axis_runtime_ms: result.axis_runtime_ms(),
        }
    }

    pub fn transform(&self) -> Result<RigidTransform> {
        Ok(RigidTransform::new(
            rotation_from_array(&self.rotation)?,
            Vec3::from(self.translation),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthJson {
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl GroundTruthJson {
    pub fn from_transform(t: &RigidTransform) -> Self {
        let v = &t.translation;
        Self {
            rotation: rotation_to_array(&t.rotation),
            translation: [v.x, v.y, v.z],
        }
    }

    pub fn transform(&self) -> Result<RigidTransform> {
        Ok(RigidTransform::new(
            rotation_from_array(&self.rotation)?,
            Vec3::from(self.translation),
        ))
    }
}

/// Rotation error (degrees) and translation error of an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseErrors {
    pub er_deg: f64,
    pub et: f64,
}

impl PoseErrors {
    pub fn between(gt: &RigidTransform, est: &RigidTransform) -> Self {
        Self {
            er_deg: rotation_error(&gt.rotation, &est.rotation),
            et: translation_error(&gt.translation, &est.translation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub n: usize,
    pub eta: f64,
    pub sigma: f64,
    pub seed: u64,
    /// NaN when the registration failed outright.
    pub er_deg: f64,
    pub et: f64,
    pub consensus: usize,
    pub certified: bool,
    pub runtime_ms: f64,
    pub success: bool,
}

/// Success thresholds for a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub er_deg: f64,
    pub et: f64,
}

impl Thresholds {
    pub fn accepts(&self, e: &PoseErrors) -> bool {
        e.er_deg <= self.er_deg && e.et <= self.et
    }
}

/// Aggregate over a set of trials. Means skip trials that produced no estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_er_deg: f64,
    pub mean_et: f64,
    pub mean_runtime_ms: f64,
    pub max_runtime_ms: f64,
}

impl ExperimentReport {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let ran: Vec<&TrialRecord> = records.iter().filter(|r| r.er_deg.is_finite()).collect();
        let mean = |f: &dyn Fn(&TrialRecord) -> f64| {
            if ran.is_empty() {
                f64::NAN
            } else {
                ran.iter().map(|r| f(r)).sum::<f64>() / ran.len() as f64
            }
        };
        let successes = records.iter().filter(|r| r.success).count();
        Self {
            trials: records.len(),
            successes,
            success_rate: if records.is_empty() {
                0.0
            } else {
                successes as f64 / records.len() as f64
            },
            mean_er_deg: mean(&|r| r.er_deg),
            mean_et: mean(&|r| r.et),
            mean_runtime_ms: mean(&|r| r.runtime_ms),
            max_runtime_ms: records.iter().map(|r| r.runtime_ms).fold(0.0, f64::max),
        }
    }
}

/// A single value or a list; lets bench configs sweep any parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Trials per grid point.
    pub trials: usize,
    pub n: OneOrMany<usize>,
    pub eta: OneOrMany<f64>,
    pub sigma: OneOrMany<f64>,
    pub cube_half_width: f64,
    pub seed: u64,
    /// Fixed inlier threshold; defaults to three noise standard deviations.
    pub epsilon: Option<f64>,
    pub er_threshold_deg: f64,
    /// Defaults to 1% of the cube half-width.
    pub et_threshold: Option<f64>,
    pub parallel_trials: bool,
    pub registration: RegistrationConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            trials: 10,
            n: OneOrMany::One(1000),
            eta: OneOrMany::One(0.5),
            sigma: OneOrMany::One(0.5),
            cube_half_width: 100.0,
            seed: 0,
            epsilon: None,
            er_threshold_deg: 1.0,
            et_threshold: None,
            parallel_trials: false,
            registration: RegistrationConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            er_deg: self.er_threshold_deg,
            et: self.et_threshold.unwrap_or(0.01 * self.cube_half_width),
        }
    }

    /// One synthetic configuration per trial, grid-major, with derived seeds.
    pub fn expand(&self) -> Result<Vec<SynthConfig>> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if let Some(eps) = self.epsilon {
            crate::bnb::check_epsilon(eps)?;
        }
        let mut out = Vec::new();
        for n in self.n.values() {
            for eta in self.eta.values() {
                for sigma in self.sigma.values() {
                    for _ in 0..self.trials {
                        let cfg = SynthConfig {
                            n,
                            cube_half_width: self.cube_half_width,
                            noise_sigma: sigma,
                            outlier_rate: eta,
                            seed: derive_seed(self.seed, out.len() as u64),
                        };
                        cfg.validate()?;
                        out.push(cfg);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Generates one instance, registers it and scores the estimate.
pub fn run_trial(
    trial: usize,
    cfg: &SynthConfig,
    epsilon: Option<f64>,
    registration: &RegistrationConfig,
    thresholds: &Thresholds,
) -> Result<TrialRecord> {
    let (set, gt) = synth_correspondences(cfg)?;
    let eps = epsilon.unwrap_or_else(|| default_epsilon(cfg.noise_sigma, cfg.cube_half_width));
    let mut record = TrialRecord {
        trial,
        n: cfg.n,
        eta: cfg.outlier_rate,
        sigma: cfg.noise_sigma,
        seed: cfg.seed,
        er_deg: f64::NAN,
        et: f64::NAN,
        consensus: 0,
        certified: false,
        runtime_ms: 0.0,
        success: false,
    };
    match register(&set, eps, registration) {
        Ok(res) => {
            let errors = PoseErrors::between(&gt, &res.transform);
            record.er_deg = errors.er_deg;
            record.et = errors.et;
            record.consensus = res.consensus;
            record.certified = res.certified;
            record.runtime_ms = res.runtime_ms;
            record.success = thresholds.accepts(&errors);
            debug!("trial {trial}: E_R {:.4} deg, E_t {:.4}", errors.er_deg, errors.et);
        }
        Err(e) if e.is_registration_failure() => warn!("trial {trial} failed: {e}"),
        Err(e) => return Err(e),
    }
    Ok(record)
}

pub fn run_bench(config: &BenchConfig) -> Result<Vec<TrialRecord>> {
    let trials = config.expand()?;
    let thresholds = config.thresholds();
    let run = |(k, cfg): (usize, &SynthConfig)| run_trial(k, cfg, config.epsilon, &config.registration, &thresholds);
    if config.parallel_trials {
        trials.par_iter().enumerate().map(run).collect()
    } else {
        trials.iter().enumerate().map(run).collect()
    }
}

pub const CSV_HEADER: &str = "trial,n,eta,sigma,er_deg,et,consensus,certified,runtime_ms";

pub fn write_csv(records: &[TrialRecord], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.trial, r.n, r.eta, r.sigma, r.er_deg, r.et, r.consensus, r.certified, r.runtime_ms
        )?;
    }
    Ok(())
}
