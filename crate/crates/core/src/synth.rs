//! Planted-ground-truth instance generators.
//!
//! All randomness comes from one [`Xoshiro256PlusPlus`] generator seeded
//! through SplitMix64 (`seed_from_u64`), so a seed fully determines an
//! instance on every platform.

use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::{Quaternion, UnitQuaternion};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Rotation, Vec3};
use crate::io::load_cloud;
use crate::pipeline::{Correspondence, CorrespondenceSet};

pub type SynthRng = Xoshiro256PlusPlus;

pub fn seeded_rng(seed: u64) -> SynthRng {
    SynthRng::seed_from_u64(seed)
}

/// SplitMix64 finalizer; derives independent per-trial seeds from one base seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform rotation from a normalized Gaussian quaternion.
pub fn random_rotation(rng: &mut impl Rng) -> Rotation {
    loop {
        let c: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let q = Quaternion::new(c[0], c[1], c[2], c[3]);
        if q.norm() > 1e-9 {
            return UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        }
    }
}

pub fn uniform_in_cube(rng: &mut impl Rng, half_width: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.random_range(-half_width..=half_width))
}

fn add_noise(rng: &mut impl Rng, points: &mut [Vec3], sigma: f64) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    for p in points.iter_mut() {
        *p += Vec3::from_fn(|_, _| normal.sample(rng));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub cube_half_width: f64,
    pub noise_sigma: f64,
    pub outlier_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            cube_half_width: 100.0,
            noise_sigma: 0.5,
            outlier_rate: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if !(self.cube_half_width > 0.0 && self.cube_half_width.is_finite()) {
            return Err(Error::InvalidConfig("cube_half_width must be positive".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("noise_sigma must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.outlier_rate) {
            return Err(Error::InvalidConfig("outlier_rate must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Number of target points replaced by outliers.
    pub fn outlier_count(&self) -> usize {
        (self.outlier_rate * self.n as f64).floor() as usize
    }

    /// Inlier threshold used when none is given: three noise standard
    /// deviations, or a small fraction of the cube for noise-free data.
    pub fn default_epsilon(&self) -> f64 {
        default_epsilon(self.noise_sigma, self.cube_half_width)
    }
}

pub fn default_epsilon(noise_sigma: f64, scale: f64) -> f64 {
    if noise_sigma > 0.0 {
        3.0 * noise_sigma
    } else {
        1e-6 * scale
    }
}

/// Correspondences in a cube with a random rigid motion, a fraction of
/// targets replaced by uniform outliers, and Gaussian noise on every target.
///
/// Returns the set, the ground truth, and the replaced (outlier) indices in
/// ascending order.
pub fn synth_correspondences_with_outliers(cfg: &SynthConfig) -> Result<(CorrespondenceSet, RigidTransform, Vec<usize>)> {
    cfg.validate()?;
    let mut rng = seeded_rng(cfg.seed);
    let w = cfg.cube_half_width;

    let source: Vec<Vec3> = (0..cfg.n).map(|_| uniform_in_cube(&mut rng, w)).collect();
    let gt = RigidTransform::new(random_rotation(&mut rng), uniform_in_cube(&mut rng, w));
    let mut target: Vec<Vec3> = source.iter().map(|p| gt.apply(p)).collect();

    let mut outliers = index::sample(&mut rng, cfg.n, cfg.outlier_count()).into_vec();
    outliers.sort_unstable();
    for &i in &outliers {
        target[i] = uniform_in_cube(&mut rng, w);
    }
    add_noise(&mut rng, &mut target, cfg.noise_sigma)?;

    let set = source
        .into_iter()
        .zip(target)
        .map(|(p, q)| Correspondence { p, q })
        .collect();
    Ok((set, gt, outliers))
}

pub fn synth_correspondences(cfg: &SynthConfig) -> Result<(CorrespondenceSet, RigidTransform)> {
    synth_correspondences_with_outliers(cfg).map(|(set, gt, _)| (set, gt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpcrSynthConfig {
    /// Source size after downsampling.
    pub m: usize,
    /// Fraction of target points kept.
    pub overlap_rate: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Cloud to sample from; the built-in blob when absent.
    pub cloud: Option<PathBuf>,
}

impl Default for SpcrSynthConfig {
    fn default() -> Self {
        Self {
            m: 100,
            overlap_rate: 0.6,
            noise_sigma: 0.001,
            seed: 0,
            cloud: None,
        }
    }
}

impl SpcrSynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be at least 1".into()));
        }
        if !(self.overlap_rate > 0.0 && self.overlap_rate <= 1.0) {
            return Err(Error::InvalidConfig("overlap_rate must lie in (0, 1]".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("noise_sigma must be non-negative".into()));
        }
        Ok(())
    }

    /// Target size after removing `floor((1 - rho) m)` points.
    pub fn target_len(&self) -> usize {
        self.m - ((1.0 - self.overlap_rate) * self.m as f64).floor() as usize
    }
}

/// Deterministic, asymmetric closed surface sampled on a Fibonacci lattice.
/// Stands in for a scanned model when none is supplied.
pub fn builtin_blob(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let dir = Vec3::new(rho * phi.cos(), rho * phi.sin(), z);
            let theta = z.acos();
            let bump = 1.0 + 0.25 * (3.0 * theta).sin() * (2.0 * phi).cos() + 0.15 * (phi + 2.0 * theta).sin() + 0.1 * dir.x;
            let p = dir * bump;
            Vec3::new(1.0 * p.x, 0.7 * p.y + 0.2 * p.x * p.z, 0.5 * p.z)
        })
        .collect()
}

/// Centers a cloud on its bounding box and scales it into `[-1, 1]^3`.
pub fn normalize_to_unit_cube(points: &mut [Vec3]) {
    if points.is_empty() {
        return;
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points.iter() {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let center = (lo + hi) * 0.5;
    let half = ((hi - lo) * 0.5).max();
    let scale = if half > 0.0 { 1.0 / half } else { 1.0 };
    for p in points.iter_mut() {
        *p = (*p - center) * scale;
    }
}

const BLOB_POINTS: usize = 4000;

/// Source and target clouds for correspondence-free registration.
///
/// The cloud is normalized into `[-1, 1]^3` and downsampled to `m` source
/// points. The target is the transformed clean source with
/// `floor((1 - rho) m)` points removed and the rest shuffled; Gaussian noise
/// is then added to the source.
pub fn synth_spcr(cfg: &SpcrSynthConfig) -> Result<(Vec<Vec3>, Vec<Vec3>, RigidTransform)> {
    cfg.validate()?;
    let mut cloud = match &cfg.cloud {
        Some(path) => load_cloud(path)?,
        None => builtin_blob(BLOB_POINTS),
    };
    if cloud.len() < cfg.m {
        return Err(Error::InvalidConfig(format!(
            "cloud has {} points, fewer than m = {}",
            cloud.len(),
            cfg.m
        )));
    }
    normalize_to_unit_cube(&mut cloud);

    let mut rng = seeded_rng(cfg.seed);
    let mut picks = index::sample(&mut rng, cloud.len(), cfg.m).into_vec();
    picks.sort_unstable();
    let mut source: Vec<Vec3> = picks.iter().map(|&i| cloud[i]).collect();

    let gt = RigidTransform::new(random_rotation(&mut rng), uniform_in_cube(&mut rng, 1.0));
    let keep = cfg.target_len();
    let mut kept = index::sample(&mut rng, cfg.m, keep).into_vec();
    kept.shuffle(&mut rng);
    let target: Vec<Vec3> = kept.iter().map(|&i| gt.apply(&source[i])).collect();

    add_noise(&mut rng, &mut source, cfg.noise_sigma)?;
    Ok((source, target, gt))
}
