//! Synthetic fixation densities and datasets for the experiments.
//!
//! The default configuration ships in `data/synthetic.toml`.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixations::{FixationDataset, Stimulus};
use crate::grid::{density_from_grid, DensityGrid, Grid, GridShape};
use crate::probabilistic::fit_kde_centerbias;
use crate::sampling::{sample_fixations, stream_rng};

const BUILTIN: &str = include_str!("../data/synthetic.toml");

const MIXTURE_DOMAIN: u64 = 0x6d69_7874;
const FIXATION_DOMAIN: u64 = 0x6669_7873;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub row: f64,
    pub col: f64,
    pub sigma: f64,
    pub weight: f64,
}

/// Mixture of isotropic Gaussians plus a uniform floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureConfig {
    pub height: usize,
    pub width: usize,
    pub background: f64,
    pub components: Vec<GaussianComponent>,
}

/// Random mixtures for a synthetic stimulus dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub stimuli: usize,
    pub fixations_per_stimulus: usize,
    pub components: usize,
    pub center_spread: f64,
    pub min_sigma: f64,
    pub max_sigma: f64,
    pub background: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
    pub seed: u64,
}

fn default_bandwidth() -> f64 {
    crate::probabilistic::DEFAULT_BANDWIDTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub density: MixtureConfig,
    pub centerbias: DatasetConfig,
}

impl SyntheticConfig {
    /// The configuration shipped with the crate.
    pub fn builtin() -> Self {
        SyntheticConfig::from_toml_str(BUILTIN).expect("bundled synthetic config is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: SyntheticConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        config.density.validate()?;
        config.centerbias.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SyntheticConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn shape(&self) -> Result<GridShape> {
        GridShape::new(self.density.height, self.density.width)
    }

    /// KDE center bias of the synthetic dataset, evaluated on the density's
    /// grid.
    pub fn centerbias_density(&self) -> Result<DensityGrid> {
        let shape = self.shape()?;
        let (_, dataset) = synthetic_dataset(&self.centerbias, shape)?;
        fit_kde_centerbias(&dataset, self.centerbias.bandwidth)?.density_for_size(shape, None)
    }
}

impl MixtureConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        GridShape::new(self.height, self.width)?;
        if !(0.0..=1.0).contains(&self.background) {
            return bad(format!("background must lie in [0, 1], got {}", self.background));
        }
        if self.components.is_empty() && self.background < 1.0 {
            return bad("a mixture needs components unless background = 1".into());
        }
        for c in &self.components {
            if !(c.sigma > 0.0 && c.weight > 0.0 && c.row.is_finite() && c.col.is_finite()) {
                return bad(format!("invalid component {c:?}"));
            }
        }
        Ok(())
    }

    pub fn density(&self) -> Result<DensityGrid> {
        self.validate()?;
        let shape = GridShape::new(self.height, self.width)?;
        let n = shape.len();
        let total_weight: f64 = self.components.iter().map(|c| c.weight).sum();
        let mut values = vec![self.background / n as f64; n];
        for c in &self.components {
            let bump: Vec<f64> = (0..n)
                .map(|i| {
                    let (r, col) = shape.position(i);
                    let (dy, dx) = (r as f64 - c.row, col as f64 - c.col);
                    (-(dx * dx + dy * dy) / (2.0 * c.sigma * c.sigma)).exp()
                })
                .collect();
            let mass: f64 = bump.iter().sum();
            if !(mass > 0.0) {
                return Err(Error::InvalidConfig(format!("component {c:?} has no mass on the grid")));
            }
            let scale = (1.0 - self.background) * c.weight / (total_weight * mass);
            for (v, b) in values.iter_mut().zip(bump) {
                *v += scale * b;
            }
        }
        density_from_grid(Grid::new(shape, values)?)
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.stimuli >= 1
            && self.components >= 1
            && self.center_spread >= 0.0
            && self.min_sigma > 0.0
            && self.max_sigma >= self.min_sigma
            && (0.0..=1.0).contains(&self.background)
            && self.bandwidth > 0.0;
        if !ok {
            return Err(Error::InvalidConfig(format!("invalid dataset config {self:?}")));
        }
        Ok(())
    }

    /// Random mixture number `index`; component centers are normally
    /// distributed around the image center and clamped to the grid.
    pub fn mixture(&self, shape: GridShape, index: usize) -> MixtureConfig {
        let mut rng = stream_rng(self.seed, MIXTURE_DOMAIN, index as u64);
        let spread = Normal::new(0.0, self.center_spread.max(f64::MIN_POSITIVE)).expect("valid spread");
        let size = shape.height.min(shape.width) as f64;
        let components = (0..self.components)
            .map(|_| {
                let y = (0.5 + spread.sample(&mut rng)).clamp(0.02, 0.98);
                let x = (0.5 + spread.sample(&mut rng)).clamp(0.02, 0.98);
                let sigma = rng.gen_range(self.min_sigma..=self.max_sigma) * size;
                GaussianComponent {
                    row: y * shape.height as f64 - 0.5,
                    col: x * shape.width as f64 - 0.5,
                    sigma,
                    weight: rng.gen_range(0.2..1.0),
                }
            })
            .collect();
        MixtureConfig {
            height: shape.height,
            width: shape.width,
            background: self.background,
            components,
        }
    }
}

/// The densities of a synthetic dataset and fixations sampled from them.
/// Stimulus ids are `img000`, `img001`, ...
pub fn synthetic_dataset(
    config: &DatasetConfig,
    shape: GridShape,
) -> Result<(Vec<DensityGrid>, FixationDataset)> {
    config.validate()?;
    let densities = (0..config.stimuli)
        .map(|i| config.mixture(shape, i).density())
        .collect::<Result<Vec<_>>>()?;
    let stimuli = (0..config.stimuli).map(|i| Stimulus { id: format!("img{i:03}"), shape }).collect();
    let fixations = densities
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = stream_rng(config.seed, FIXATION_DOMAIN, i as u64);
            sample_fixations(d, config.fixations_per_stimulus, &mut rng)
        })
        .collect();
    Ok((densities, FixationDataset::new(stimuli, fixations)?))
}
