//! Expected-utility saliency maps: for a fixation density, the map that
//! maximizes the expected score of each metric.
//!
//! | metric      | map                                                    |
//! |-------------|--------------------------------------------------------|
//! | AUC         | equalized density                                      |
//! | sAUC        | equalized ratio of density to center bias              |
//! | NSS, IG     | the density itself                                     |
//! | CC, KL-Div  | density blurred with the empirical-map kernel          |
//! | SIM         | projected stochastic gradient ascent on expected SIM   |

use crate::error::{Error, Result};
use crate::grid::{density_from_grid, equalize_grid, gaussian_blur, DensityGrid, Grid, SaliencyGrid};
use crate::metrics::{similarity, MetricId};
use crate::sampling::{stream_rng, EmpiricalSampler};

/// RNG domains, so the training, validation and evaluation streams of one
/// seed never overlap.
const TRAIN_DOMAIN: u64 = 0x5349_4d5f_7472;
const VALIDATION_DOMAIN: u64 = 0x5349_4d5f_7661;
const EXPECTED_SIM_DOMAIN: u64 = 0x5349_4d5f_6576;

/// Validation maps are cached when they fit in this many values.
const VALIDATION_CACHE_LIMIT: usize = 1 << 24;

/// Hyperparameters of the SIM map optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    /// Samples (each one empirical map) per gradient step.
    pub batch_size: usize,
    pub initial_lr: f64,
    /// Factor applied to the learning rate whenever validation SIM drops.
    pub lr_decay: f64,
    /// Optimization stops once the learning rate falls below this.
    pub min_lr: f64,
    pub validation_samples: usize,
    /// Training samples between validation runs.
    pub validation_interval: usize,
    /// Pixel count the learning rates refer to. The effective step on a grid
    /// of `N` pixels is `lr * reference_pixels / N`, which keeps the relative
    /// step per pixel independent of the resolution.
    pub reference_pixels: usize,
    /// Hard cap on training samples.
    pub max_training_samples: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            batch_size: 50,
            initial_lr: 1e-7,
            lr_decay: 1.0 / 3.0,
            min_lr: 1e-9,
            validation_samples: 1000,
            validation_interval: 1000,
            reference_pixels: 1024 * 768,
            max_training_samples: 10_000_000,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return bad("lr_decay must lie in (0, 1)");
        }
        if !(self.min_lr > 0.0 && self.min_lr < self.initial_lr) {
            return bad("min_lr must be positive and below initial_lr");
        }
        if self.batch_size == 0 || self.validation_samples == 0 || self.validation_interval == 0 {
            return bad("batch_size, validation_samples and validation_interval must be >= 1");
        }
        if self.reference_pixels == 0 {
            return bad("reference_pixels must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeriveConfig {
    /// Width of the Gaussian used for empirical saliency maps, in pixels.
    pub empirical_sigma: f64,
    /// Fixations per image the SIM map is optimized for.
    pub fixations_per_image: usize,
    pub sgd: SgdConfig,
    /// Nonfixation distribution for sAUC.
    pub centerbias: Option<DensityGrid>,
}

impl Default for DeriveConfig {
    fn default() -> Self {
        DeriveConfig {
            empirical_sigma: 35.0,
            fixations_per_image: 100,
            sgd: SgdConfig::default(),
            centerbias: None,
        }
    }
}

impl DeriveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.empirical_sigma >= 0.0) {
            return Err(Error::NegativeSigma(self.empirical_sigma));
        }
        if self.fixations_per_image == 0 {
            return Err(Error::InvalidConfig("fixations_per_image must be >= 1".into()));
        }
        self.sgd.validate()
    }
}

/// The map with the highest expected score under `metric`.
pub fn derive_map(
    density: &DensityGrid,
    metric: MetricId,
    config: &DeriveConfig,
) -> Result<SaliencyGrid> {
    match metric {
        MetricId::Auc => derive_auc_map(density),
        MetricId::SAuc => {
            let cb = config.centerbias.as_ref().ok_or(Error::MissingCenterbias)?;
            derive_sauc_map(density, cb)
        }
        MetricId::Nss | MetricId::Ig => Ok(derive_nss_ig_map(density)),
        MetricId::Cc | MetricId::KlDiv => derive_cc_kldiv_map(density, config.empirical_sigma),
        MetricId::Sim => derive_sim_map(density, config).map(SaliencyGrid::from),
    }
}

pub fn derive_auc_map(density: &DensityGrid) -> Result<SaliencyGrid> {
    SaliencyGrid::new(equalize_grid(density.as_grid())?)
}

/// Equalized `density / centerbias`. The center bias must be strictly
/// positive everywhere; nothing is clamped.
pub fn derive_sauc_map(density: &DensityGrid, centerbias: &DensityGrid) -> Result<SaliencyGrid> {
    if density.shape() != centerbias.shape() {
        return Err(Error::ShapeMismatch { expected: density.shape(), found: centerbias.shape() });
    }
    if let Some((index, &value)) = centerbias.values().iter().enumerate().find(|(_, v)| **v <= 0.0)
    {
        return Err(Error::ZeroCenterbias { index, value });
    }
    let ratio: Vec<f64> =
        density.values().iter().zip(centerbias.values()).map(|(p, c)| p / c).collect();
    SaliencyGrid::new(equalize_grid(&Grid::new(density.shape(), ratio)?)?)
}

pub fn derive_nss_ig_map(density: &DensityGrid) -> SaliencyGrid {
    density.to_saliency()
}

/// The expected empirical saliency map: the density blurred with the
/// empirical-map kernel.
pub fn derive_cc_kldiv_map(density: &DensityGrid, sigma: f64) -> Result<SaliencyGrid> {
    SaliencyGrid::new(gaussian_blur(density.as_grid(), sigma)?)
}

/// Euclidean projection onto `{x >= 0, sum(x) = 1}` (sort and threshold).
pub fn project_to_simplex(grid: &Grid) -> Result<DensityGrid> {
    let mut values = grid.values().to_vec();
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mut scratch = Vec::with_capacity(values.len());
    project_in_place(&mut values, &mut scratch);
    DensityGrid::new(Grid::new(grid.shape(), values)?)
}

pub(crate) fn project_in_place(values: &mut [f64], sorted: &mut Vec<f64>) {
    sorted.clear();
    sorted.extend_from_slice(values);
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut threshold = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            threshold = t;
        } else {
            break;
        }
    }
    values.iter_mut().for_each(|v| *v = (*v - threshold).max(0.0));
}

/// Monte-Carlo estimate of the expected SIM score of `map` on `n_samples`
/// empirical maps of `n_fix` fixations drawn from `density`.
pub fn expected_sim(
    map: &SaliencyGrid,
    density: &DensityGrid,
    n_fix: usize,
    n_samples: usize,
    sigma: f64,
    seed: u64,
) -> Result<f64> {
    if map.shape() != density.shape() {
        return Err(Error::ShapeMismatch { expected: density.shape(), found: map.shape() });
    }
    if n_fix == 0 || n_samples == 0 {
        return Err(Error::InvalidConfig("n_fix and n_samples must be >= 1".into()));
    }
    let q = crate::grid::normalize_to_distribution(map)?;
    let mut sampler = EmpiricalSampler::new(density, n_fix, sigma)?;
    let mut e = vec![0.0; density.shape().len()];
    let mut total = 0.0;
    for s in 0..n_samples {
        sampler.draw_normalized(&mut stream_rng(seed, EXPECTED_SIM_DOMAIN, s as u64), &mut e);
        total += similarity(q.values(), &e);
    }
    Ok(total / n_samples as f64)
}

/// Bookkeeping from a SIM map optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdReport {
    pub training_samples: usize,
    pub validations: usize,
    pub lr_decays: usize,
    /// Validation SIM of the starting map (normalized CC map). NaN when the
    /// optimum is known without optimizing (uniform or single-pixel density).
    pub initial_validation: f64,
    /// Validation SIM of the returned map, NaN in the same cases.
    pub final_validation: f64,
    pub final_lr: f64,
    /// True when the training-sample cap stopped the run before the learning
    /// rate schedule did.
    pub cap_reached: bool,
}

#[derive(Debug, Clone)]
pub struct SimDerivation {
    pub map: DensityGrid,
    pub report: SgdReport,
}

/// SIM-optimal map for `config.fixations_per_image` fixations per image.
pub fn derive_sim_map(density: &DensityGrid, config: &DeriveConfig) -> Result<DensityGrid> {
    derive_sim_map_with_report(density, config).map(|d| d.map)
}

/// Projected stochastic subgradient ascent on the expected SIM score.
///
/// Starts from the normalized CC map. Each step averages the SIM subgradient
/// (1 where the map is below the sample's normalized empirical map, 1/2 on
/// ties, 0 above) over a batch, takes a step and projects back onto the
/// simplex. After every `validation_interval` training samples the fixed
/// validation set is scored; if the score dropped since the last validation
/// the best map so far is restored and the learning rate decays. The run ends
/// when the learning rate falls below `min_lr`, returning the best map.
pub fn derive_sim_map_with_report(
    density: &DensityGrid,
    config: &DeriveConfig,
) -> Result<SimDerivation> {
    config.validate()?;
    let sgd = &config.sgd;
    let shape = density.shape();
    let n = shape.len();
    let sigma = config.empirical_sigma;
    let n_fix = config.fixations_per_image;

    let shortcut = |map: DensityGrid| SimDerivation {
        map,
        report: SgdReport {
            training_samples: 0,
            validations: 0,
            lr_decays: 0,
            initial_validation: f64::NAN,
            final_validation: f64::NAN,
            final_lr: sgd.initial_lr,
            cap_reached: false,
        },
    };
    if crate::grid::is_constant(density.values()) {
        // Nothing to sharpen: the uniform map is returned as is.
        return Ok(shortcut(density.clone()));
    }
    let mut support = density.values().iter().enumerate().filter(|(_, &v)| v > 0.0);
    if let (Some((pixel, _)), None) = (support.next(), support.next()) {
        // A single support pixel makes every empirical map the same blurred
        // delta, which is then the unique optimum.
        let mut delta = vec![0.0; n];
        delta[pixel] = 1.0;
        let blurred = gaussian_blur(&Grid::new(shape, delta)?, sigma)?;
        return Ok(shortcut(density_from_grid(blurred)?));
    }

    let mut q = gaussian_blur(density.as_grid(), sigma)?.into_values();
    let mut sorted = Vec::with_capacity(n);
    let total: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= total);
    project_in_place(&mut q, &mut sorted);

    let mut sampler = EmpiricalSampler::new(density, n_fix, sigma)?;
    let mut validation = Validation::new(&mut sampler, sgd, n);

    let mut best = q.clone();
    let mut best_score = validation.score(&mut sampler, &q);
    let initial_validation = best_score;
    let mut previous = best_score;

    let step_scale = sgd.reference_pixels as f64 / n as f64;
    let mut lr = sgd.initial_lr;
    let mut t = 0usize;
    let mut validations = 0;
    let mut lr_decays = 0;
    let mut cap_reached = false;
    let mut gradient = vec![0.0; n];
    let mut e = vec![0.0; n];

    while lr >= sgd.min_lr {
        if t >= sgd.max_training_samples {
            cap_reached = true;
            break;
        }
        let epoch_end = t + sgd.validation_interval;
        while t < epoch_end {
            gradient.iter_mut().for_each(|g| *g = 0.0);
            for _ in 0..sgd.batch_size {
                sampler.draw_normalized(&mut stream_rng(sgd.seed, TRAIN_DOMAIN, t as u64), &mut e);
                t += 1;
                for ((g, &qi), &ei) in gradient.iter_mut().zip(&q).zip(&e) {
                    *g += if qi < ei {
                        1.0
                    } else if qi == ei {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
            let step = lr * step_scale / sgd.batch_size as f64;
            for (qi, g) in q.iter_mut().zip(&gradient) {
                *qi += step * g;
            }
            project_in_place(&mut q, &mut sorted);
        }

        let score = validation.score(&mut sampler, &q);
        validations += 1;
        if score > best_score {
            best_score = score;
            best.copy_from_slice(&q);
        }
        if score < previous {
            q.copy_from_slice(&best);
            lr *= sgd.lr_decay;
            lr_decays += 1;
            previous = best_score;
        } else {
            previous = score;
        }
    }

    let map = DensityGrid::new(Grid::new(shape, best)?)?;
    Ok(SimDerivation {
        map,
        report: SgdReport {
            training_samples: t,
            validations,
            lr_decays,
            initial_validation,
            final_validation: best_score,
            final_lr: lr,
            cap_reached,
        },
    })
}

/// Fixed validation set. Maps are cached when small enough, otherwise
/// regenerated from their seeds on every evaluation.
struct Validation {
    seed: u64,
    samples: usize,
    cache: Option<Vec<f64>>,
    buffer: Vec<f64>,
}

impl Validation {
    fn new(sampler: &mut EmpiricalSampler, sgd: &SgdConfig, n: usize) -> Self {
        let samples = sgd.validation_samples;
        let cache = (samples * n <= VALIDATION_CACHE_LIMIT).then(|| {
            let mut all = vec![0.0; samples * n];
            for (v, chunk) in all.chunks_exact_mut(n).enumerate() {
                sampler.draw_normalized(&mut stream_rng(sgd.seed, VALIDATION_DOMAIN, v as u64), chunk);
            }
            all
        });
        Validation { seed: sgd.seed, samples, cache, buffer: vec![0.0; n] }
    }

    fn score(&mut self, sampler: &mut EmpiricalSampler, q: &[f64]) -> f64 {
        let n = q.len();
        let total: f64 = match &self.cache {
            Some(all) => all.chunks_exact(n).map(|e| similarity(q, e)).sum(),
            None => (0..self.samples)
                .map(|v| {
                    sampler.draw_normalized(
                        &mut stream_rng(self.seed, VALIDATION_DOMAIN, v as u64),
                        &mut self.buffer,
                    );
                    similarity(q, &self.buffer)
                })
                .sum(),
        };
        total / self.samples as f64
    }
}
