//! Reproducible fixation sampling from a density.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::fixations::{Fixation, FixationSet};
use crate::grid::{DensityGrid, GaussianBlur, GridShape};

/// Independent RNG stream for `(seed, domain, index)`. Experiments give every
/// sample set its own stream so results do not depend on evaluation order.
pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Categorical sampler over the pixels of a density.
#[derive(Debug, Clone)]
pub struct FixationSampler {
    shape: GridShape,
    index: WeightedIndex<f64>,
}

impl FixationSampler {
    pub fn new(density: &DensityGrid) -> Self {
        let index = WeightedIndex::new(density.values())
            .expect("a valid density has positive finite mass");
        FixationSampler { shape: density.shape(), index }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index.sample(rng)
    }

    /// `n` independent draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> FixationSet {
        let points = (0..n)
            .map(|_| {
                let (row, col) = self.shape.position(self.index.sample(rng));
                Fixation { row, col }
            })
            .collect();
        FixationSet::new("", points)
    }

    /// Fixation counts per pixel for `n` draws, written into `counts`.
    pub fn sample_counts<R: Rng + ?Sized>(&self, n: usize, rng: &mut R, counts: &mut [f64]) {
        counts.iter_mut().for_each(|c| *c = 0.0);
        for _ in 0..n {
            counts[self.index.sample(rng)] += 1.0;
        }
    }
}

/// Draws empirical saliency maps (blurred fixation counts) of `n_fix`
/// fixations, optionally normalized to unit sum.
#[derive(Debug, Clone)]
pub struct EmpiricalSampler {
    sampler: FixationSampler,
    blur: GaussianBlur,
    n_fix: usize,
}

impl EmpiricalSampler {
    pub fn new(density: &DensityGrid, n_fix: usize, sigma: f64) -> Result<Self> {
        Ok(EmpiricalSampler {
            sampler: FixationSampler::new(density),
            blur: GaussianBlur::new(sigma)?,
            n_fix,
        })
    }

    /// Like [`new`](Self::new) with a caller-configured blur.
    pub fn with_blur(density: &DensityGrid, n_fix: usize, blur: GaussianBlur) -> Self {
        EmpiricalSampler { sampler: FixationSampler::new(density), blur, n_fix }
    }

    pub fn shape(&self) -> GridShape {
        self.sampler.shape
    }

    pub fn n_fix(&self) -> usize {
        self.n_fix
    }

    /// Blurred counts of a fresh sample; sums to `n_fix` up to rounding.
    pub fn draw_counts<R: Rng + ?Sized>(&mut self, rng: &mut R, out: &mut [f64]) {
        self.sampler.sample_counts(self.n_fix, rng, out);
        self.blur.apply_in_place(self.sampler.shape, out);
    }

    /// Like [`draw_counts`](Self::draw_counts), divided by its sum.
    pub fn draw_normalized<R: Rng + ?Sized>(&mut self, rng: &mut R, out: &mut [f64]) {
        self.draw_counts(rng, out);
        let sum: f64 = out.iter().sum();
        out.iter_mut().for_each(|v| *v /= sum);
    }
}

/// `n` independent fixations drawn from `density`.
pub fn sample_fixations<R: Rng + ?Sized>(density: &DensityGrid, n: usize, rng: &mut R) -> FixationSet {
    FixationSampler::new(density).sample(n, rng)
}
