//! Grid types and the elementary transforms the rest of the crate composes:
//! normalization to a distribution, histogram equalization, separable
//! Gaussian blur with reflect boundaries, and z-scoring.
//!
//! All grids are row-major with the origin at the top-left pixel.

use std::fmt;

use crate::error::{Error, Result};

/// Tolerance on the unit sum of a [`DensityGrid`].
pub const DENSITY_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    pub height: usize,
    pub width: usize,
}

impl GridShape {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyShape { height, width });
        }
        Ok(GridShape { height, width })
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn position(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.height && col < self.width
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// A plain real-valued grid without further invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    shape: GridShape,
    values: Vec<f64>,
}

impl Grid {
    pub fn new(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::EmptyShape { height: shape.height, width: shape.width });
        }
        if values.len() != shape.len() {
            return Err(Error::LengthMismatch { shape, found: values.len() });
        }
        Ok(Grid { shape, values })
    }

    pub fn filled(shape: GridShape, value: f64) -> Self {
        Grid { shape, values: vec![value; shape.len()] }
    }

    /// Builds a grid from nested rows. Panics on ragged input; meant for
    /// literals in tests and examples.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        assert!(
            rows.iter().all(|r| r.as_ref().len() == width),
            "ragged rows passed to Grid::from_rows"
        );
        let values = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Grid::new(GridShape { height, width }, values)
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.shape.index(row, col)]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid { shape: self.shape, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }
}

/// A saliency map: finite values on an arbitrary scale.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyGrid(Grid);

impl SaliencyGrid {
    pub fn new(grid: Grid) -> Result<Self> {
        grid.check_finite()?;
        Ok(SaliencyGrid(grid))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        SaliencyGrid::new(Grid::from_rows(rows)?)
    }

    pub fn shape(&self) -> GridShape {
        self.0.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.0.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0.get(row, col)
    }

    pub fn as_grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    pub fn min_max(&self) -> (f64, f64) {
        min_max(&self.0.values)
    }
}

impl From<DensityGrid> for SaliencyGrid {
    fn from(d: DensityGrid) -> Self {
        SaliencyGrid(d.0)
    }
}

/// A fixation density: nonnegative values summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid(Grid);

impl DensityGrid {
    /// Validates an already normalized grid without rescaling it.
    pub fn new(grid: Grid) -> Result<Self> {
        grid.check_finite()?;
        if let Some((index, &value)) = grid.values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::NegativeValue { index, value });
        }
        let sum = grid.sum();
        if sum == 0.0 {
            return Err(Error::ZeroMass);
        }
        if (sum - 1.0).abs() > DENSITY_SUM_TOLERANCE {
            return Err(Error::InvalidConfig(format!("density sums to {sum}, not 1")));
        }
        Ok(DensityGrid(grid))
    }

    pub fn uniform(shape: GridShape) -> Self {
        DensityGrid(Grid::filled(shape, 1.0 / shape.len() as f64))
    }

    pub fn shape(&self) -> GridShape {
        self.0.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.0.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0.get(row, col)
    }

    pub fn as_grid(&self) -> &Grid {
        &self.0
    }

    pub fn into_grid(self) -> Grid {
        self.0
    }

    pub fn to_saliency(&self) -> SaliencyGrid {
        SaliencyGrid(self.0.clone())
    }
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Divides a nonnegative grid by its sum.
pub fn density_from_grid(grid: Grid) -> Result<DensityGrid> {
    grid.check_finite()?;
    if let Some((index, &value)) = grid.values.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeValue { index, value });
    }
    let sum = grid.sum();
    if sum <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let shape = grid.shape;
    let values = grid.values.into_iter().map(|v| v / sum).collect();
    Ok(DensityGrid(Grid { shape, values }))
}

/// Rank transform giving a uniform value histogram on (0, 1).
///
/// The pixel with ascending rank `k` (1-based, ties share their average rank)
/// maps to `(k - 0.5) / N`.
pub fn equalize(map: &SaliencyGrid) -> Result<SaliencyGrid> {
    Ok(SaliencyGrid(equalize_grid(map.as_grid())?))
}

pub(crate) fn equalize_grid(grid: &Grid) -> Result<Grid> {
    grid.check_finite()?;
    let values = &grid.values;
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // average 1-based rank of [start, end) is (start + 1 + end) / 2
        let value = (start + end) as f64 / (2 * n) as f64;
        for &i in &order[start..end] {
            out[i] = value;
        }
        start = end;
    }
    Ok(Grid { shape: grid.shape, values: out })
}

/// Sampled 1-D Gaussian, truncated at `ceil(4 sigma) + 1` pixels and
/// renormalized to unit sum. The extra pixel keeps the deviation of a blurred
/// delta from the closed-form Gaussian below 1e-6 at `sigma = 3`.
#[derive(Debug, Clone)]
pub struct GaussianKernel {
    sigma: f64,
    radius: usize,
    weights: Vec<f64>,
}

impl GaussianKernel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::NegativeSigma(sigma));
        }
        if sigma == 0.0 {
            return Ok(GaussianKernel { sigma, radius: 0, weights: vec![1.0] });
        }
        let radius = (4.0 * sigma).ceil() as usize + 1;
        let mut weights: Vec<f64> = (0..=2 * radius)
            .map(|i| {
                let x = i as f64 - radius as f64;
                (-0.5 * x * x / (sigma * sigma)).exp()
            })
            .collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(GaussianKernel { sigma, radius, weights })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`), repeated
/// as often as needed for kernels wider than the grid.
#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// How the blur extends a grid beyond its edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Half-sample symmetric reflection; preserves total mass.
    #[default]
    Reflect,
    /// Zeros outside the grid; mass near the edges leaks out.
    Zero,
}

impl Boundary {
    #[inline]
    fn sample(self, line: &[f64], i: isize) -> f64 {
        match self {
            Boundary::Reflect => line[reflect_index(i, line.len())],
            Boundary::Zero => usize::try_from(i).ok().and_then(|i| line.get(i)).copied().unwrap_or(0.0),
        }
    }
}

/// Reusable separable blur. Keeps its scratch buffers between calls, which
/// matters for the many small blurs of the sampling experiments.
#[derive(Debug, Clone)]
pub struct GaussianBlur {
    kernel: GaussianKernel,
    boundary: Boundary,
    padded: Vec<f64>,
    scratch: Vec<f64>,
}

impl GaussianBlur {
    pub fn new(sigma: f64) -> Result<Self> {
        GaussianBlur::with_boundary(sigma, Boundary::Reflect)
    }

    pub fn with_boundary(sigma: f64, boundary: Boundary) -> Result<Self> {
        Ok(GaussianBlur {
            kernel: GaussianKernel::new(sigma)?,
            boundary,
            padded: Vec::new(),
            scratch: Vec::new(),
        })
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }

    pub fn apply(&mut self, grid: &Grid) -> Grid {
        let mut values = grid.values.clone();
        self.apply_in_place(grid.shape, &mut values);
        Grid { shape: grid.shape, values }
    }

    /// Blurs `values` (row-major, `shape`) in place.
    pub fn apply_in_place(&mut self, shape: GridShape, values: &mut [f64]) {
        debug_assert_eq!(values.len(), shape.len());
        if self.kernel.radius == 0 {
            return;
        }
        let GridShape { height, width } = shape;
        let r = self.kernel.radius;
        let w = &self.kernel.weights;

        // rows
        self.padded.resize(width + 2 * r, 0.0);
        for row in values.chunks_exact_mut(width) {
            if row.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (p, slot) in self.padded.iter_mut().enumerate() {
                *slot = self.boundary.sample(row, p as isize - r as isize);
            }
            for (j, out) in row.iter_mut().enumerate() {
                *out = dot(w, &self.padded[j..j + 2 * r + 1]);
            }
        }

        // columns, processed via a transposed copy for contiguous access
        self.scratch.resize(height * width, 0.0);
        for i in 0..height {
            for j in 0..width {
                self.scratch[j * height + i] = values[i * width + j];
            }
        }
        self.padded.resize(height + 2 * r, 0.0);
        for j in 0..width {
            let col = &self.scratch[j * height..(j + 1) * height];
            if col.iter().all(|&v| v == 0.0) {
                for i in 0..height {
                    values[i * width + j] = 0.0;
                }
                continue;
            }
            for (p, slot) in self.padded.iter_mut().enumerate() {
                *slot = self.boundary.sample(col, p as isize - r as isize);
            }
            for i in 0..height {
                values[i * width + j] = dot(w, &self.padded[i..i + 2 * r + 1]);
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Separable Gaussian convolution with reflect boundaries. `sigma == 0`
/// returns the input unchanged.
pub fn gaussian_blur(grid: &Grid, sigma: f64) -> Result<Grid> {
    Ok(GaussianBlur::new(sigma)?.apply(grid))
}

/// Makes a map nonnegative (subtracting the minimum only if it is negative)
/// and divides by the sum.
pub fn normalize_to_distribution(map: &SaliencyGrid) -> Result<DensityGrid> {
    let values = map.values();
    let (lo, _) = min_max(values);
    let shift = if lo < 0.0 { lo } else { 0.0 };
    let sum: f64 = values.iter().map(|v| v - shift).sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::DegenerateMap);
    }
    let values = values.iter().map(|v| (v - shift) / sum).collect();
    Ok(DensityGrid(Grid { shape: map.shape(), values }))
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub(crate) fn is_constant(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] == w[1])
}

/// Shifts and scales a map to zero mean and unit population variance.
pub fn zscore_normalize(map: &SaliencyGrid) -> Result<SaliencyGrid> {
    let values = map.values();
    if is_constant(values) {
        return Err(Error::ZeroVariance);
    }
    let (mean, std) = mean_std(values);
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::ZeroVariance);
    }
    let values = values.iter().map(|v| (v - mean) / std).collect();
    Ok(SaliencyGrid(Grid { shape: map.shape(), values }))
}
