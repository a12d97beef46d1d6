//! Fixation densities from data and from classical saliency maps.
//!
//! Two builders live here: a Gaussian KDE center bias over normalized
//! fixation coordinates (the usual IG baseline), and the maximum-likelihood
//! conversion of a saliency map model into a density model. The conversion
//! rescales all maps jointly to [0, 1], applies a monotone piecewise linear
//! nonlinearity, multiplies with a radial center bias profile and normalizes.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::fixations::{FixationDataset, FixationSet};
use crate::grid::{density_from_grid, DensityGrid, Grid, GridShape, SaliencyGrid};

/// Lower bound on both factors of the conversion model.
pub const FACTOR_FLOOR: f64 = 1e-12;
/// Added to densities before taking logs.
pub const LOG_EPSILON: f64 = 1e-20;
pub const DEFAULT_NONLINEARITY_SEGMENTS: usize = 20;
pub const DEFAULT_CENTERBIAS_SEGMENTS: usize = 12;
pub const DEFAULT_BANDWIDTH: f64 = 0.22;

/// Continuous piecewise linear function on [0, 1] with equidistant knots.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearFn {
    knots: Vec<f64>,
    monotone: bool,
}

impl PiecewiseLinearFn {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidConfig("a piecewise linear function needs >= 2 knots".into()));
        }
        if let Some(index) = knots.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(PiecewiseLinearFn { knots, monotone: false })
    }

    /// Like [`new`](Self::new), additionally requiring nondecreasing knots.
    pub fn monotone(knots: Vec<f64>) -> Result<Self> {
        let mut f = PiecewiseLinearFn::new(knots)?;
        if f.knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig("knots of a monotone function must be nondecreasing".into()));
        }
        f.monotone = true;
        Ok(f)
    }

    pub fn identity(segments: usize) -> Self {
        let s = segments.max(1);
        let knots = (0..=s).map(|k| k as f64 / s as f64).collect();
        PiecewiseLinearFn { knots, monotone: true }
    }

    pub fn constant(segments: usize, value: f64) -> Self {
        PiecewiseLinearFn { knots: vec![value; segments.max(1) + 1], monotone: true }
    }

    pub fn segments(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    /// Segment index and position within it; `x` is clamped to [0, 1].
    #[inline]
    fn locate(&self, x: f64) -> (usize, f64) {
        locate(self.segments(), x)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let (i, t) = self.locate(x);
        if t == 0.0 {
            self.knots[i]
        } else {
            self.knots[i] * (1.0 - t) + self.knots[i + 1] * t
        }
    }
}

#[inline]
fn locate(segments: usize, x: f64) -> (usize, f64) {
    let x = if x > 0.0 { x.min(1.0) } else { 0.0 };
    let scaled = x * segments as f64;
    let i = (scaled.floor() as usize).min(segments - 1);
    (i, scaled - i as f64)
}

pub fn eval_piecewise_linear(f: &PiecewiseLinearFn, x: f64) -> f64 {
    f.eval(x)
}

/// Normalized eccentricity of a pixel: 0 at the image center, 1 at the
/// corners. `alpha` weighs vertical against horizontal distance.
pub fn center_bias_radius(row: usize, col: usize, shape: GridShape, alpha: f64) -> f64 {
    let geometry = RadiusGeometry::new(shape);
    let (dx, dy) = (col as f64 - 0.5 * geometry.x_max, row as f64 - 0.5 * geometry.y_max);
    geometry.radius(dx * dx, dy * dy, alpha)
}

#[derive(Debug, Clone, Copy)]
struct RadiusGeometry {
    x_max: f64,
    y_max: f64,
}

impl RadiusGeometry {
    fn new(shape: GridShape) -> Self {
        RadiusGeometry { x_max: (shape.width - 1) as f64, y_max: (shape.height - 1) as f64 }
    }

    fn denominator(&self, alpha: f64) -> f64 {
        0.25 * self.x_max * self.x_max + 0.25 * alpha * self.y_max * self.y_max
    }

    #[inline]
    fn radius(&self, dx2: f64, dy2: f64, alpha: f64) -> f64 {
        let b = self.denominator(alpha);
        if b <= 0.0 {
            return 0.0;
        }
        ((dx2 + alpha * dy2) / b).sqrt().min(1.0)
    }
}

/// A fitted conversion from saliency maps to densities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilisticModelFit {
    pub nonlinearity: PiecewiseLinearFn,
    pub cb_profile: PiecewiseLinearFn,
    pub alpha: f64,
    /// Global map range used for the joint rescale to [0, 1].
    pub map_min: f64,
    pub map_max: f64,
}

impl ProbabilisticModelFit {
    /// Identity nonlinearity, flat center bias, `alpha = 1`.
    pub fn initial(segments_nl: usize, segments_cb: usize, map_min: f64, map_max: f64) -> Self {
        ProbabilisticModelFit {
            nonlinearity: PiecewiseLinearFn::identity(segments_nl),
            cb_profile: PiecewiseLinearFn::constant(segments_cb, 1.0),
            alpha: 1.0,
            map_min,
            map_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nl = self.nonlinearity.knots();
        if nl.windows(2).any(|w| w[1] < w[0]) || nl.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidConfig("nonlinearity must be nondecreasing and >= 0".into()));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.map_min.is_finite() && self.map_max.is_finite() && self.map_min <= self.map_max) {
            return Err(Error::InvalidConfig("map range must be finite with min <= max".into()));
        }
        Ok(())
    }

    /// Maps a raw saliency value into [0, 1]. A degenerate range maps to 0.
    pub fn rescale(&self, value: f64) -> f64 {
        let range = self.map_max - self.map_min;
        if range > 0.0 {
            (value - self.map_min) / range
        } else {
            0.0
        }
    }
}

/// Density of a map already rescaled to [0, 1].
pub fn model_density(fit: &ProbabilisticModelFit, map: &SaliencyGrid) -> Result<DensityGrid> {
    fit.validate()?;
    let shape = map.shape();
    let geometry = RadiusGeometry::new(shape);
    let values = map
        .values()
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let (row, col) = shape.position(i);
            let (dx, dy) = (col as f64 - 0.5 * geometry.x_max, row as f64 - 0.5 * geometry.y_max);
            let r = geometry.radius(dx * dx, dy * dy, fit.alpha);
            fit.nonlinearity.eval(m).max(FACTOR_FLOOR) * fit.cb_profile.eval(r).max(FACTOR_FLOOR)
        })
        .collect();
    density_from_grid(Grid::new(shape, values)?)
}

/// Density of a raw map: joint rescale with the fit's range, then
/// [`model_density`].
pub fn apply_fit(fit: &ProbabilisticModelFit, map: &SaliencyGrid) -> Result<DensityGrid> {
    let rescaled = SaliencyGrid::new(map.as_grid().map(|v| fit.rescale(v)))?;
    model_density(fit, &rescaled)
}

/// Summed natural log-likelihood of `fixations` under `density`.
pub fn log_likelihood(density: &DensityGrid, fixations: &FixationSet) -> Result<f64> {
    fixations.validate(density.shape())?;
    Ok(fixations.indices(density.shape()).map(|i| (density.values()[i] + LOG_EPSILON).ln()).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Stop once an accepted step improves the log-likelihood by less than
    /// this, relative to its magnitude.
    pub tolerance: f64,
    /// Armijo constant of the backtracking line search.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { max_iterations: 2000, tolerance: 1e-7, armijo: 1e-4, max_backtracks: 60 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    /// Log-likelihood (nats, summed over fixations) of the identity
    /// nonlinearity with a flat center bias.
    pub initial_log_likelihood: f64,
    pub log_likelihood: f64,
    /// Log-likelihood after every accepted step.
    pub trace: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct ConversionFit {
    pub fit: ProbabilisticModelFit,
    pub report: FitReport,
}

pub fn fit_conversion(
    maps: &[SaliencyGrid],
    fixations: &FixationDataset,
    segments_nl: usize,
    segments_cb: usize,
    opt: &OptimizerConfig,
) -> Result<ProbabilisticModelFit> {
    fit_conversion_with_report(maps, fixations, segments_nl, segments_cb, opt).map(|c| c.fit)
}

/// Maximum-likelihood fit of nonlinearity, center bias profile and `alpha`.
///
/// `maps[i]` belongs to the `i`-th stimulus of `fixations`. Monotonicity is
/// built into the parametrization: the nonlinearity knots are cumulative sums
/// of squares, the center bias knots are squares and `alpha = exp(gamma)`.
/// Full-batch gradient ascent with a backtracking line search; every accepted
/// step increases the log-likelihood.
pub fn fit_conversion_with_report(
    maps: &[SaliencyGrid],
    fixations: &FixationDataset,
    segments_nl: usize,
    segments_cb: usize,
    opt: &OptimizerConfig,
) -> Result<ConversionFit> {
    if fixations.is_empty() || fixations.total_fixations() == 0 || maps.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if maps.len() != fixations.len() {
        return Err(Error::InvalidConfig(format!(
            "{} maps for {} stimuli",
            maps.len(),
            fixations.len()
        )));
    }
    if segments_nl == 0 || segments_cb == 0 {
        return Err(Error::InvalidConfig("segment counts must be >= 1".into()));
    }
    for (map, stimulus) in maps.iter().zip(fixations.stimuli()) {
        if map.shape() != stimulus.shape {
            return Err(Error::ShapeMismatch { expected: stimulus.shape, found: map.shape() });
        }
    }
    let (map_min, map_max) = maps
        .iter()
        .map(SaliencyGrid::min_max)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| (lo.min(a), hi.max(b)));

    let objective = Objective::new(maps, fixations, segments_nl, segments_cb, map_min, map_max);
    let initial = ProbabilisticModelFit::initial(segments_nl, segments_cb, map_min, map_max);
    let initial_ll = objective.log_likelihood_of(&initial);

    let mut theta = objective.initial_parameters();
    let mut gradient = vec![0.0; theta.len()];
    let mut ll = objective.evaluate(&theta, Some(&mut gradient));
    let mut trace = vec![ll];
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    let mut candidate = theta.clone();
    let mut candidate_gradient = vec![0.0; theta.len()];

    while iterations < opt.max_iterations {
        iterations += 1;
        let g2: f64 = gradient.iter().map(|g| g * g).sum();
        if !(g2 > 0.0) {
            converged = true;
            break;
        }
        let mut accepted = None;
        step *= 2.0;
        for _ in 0..opt.max_backtracks {
            for ((c, t), g) in candidate.iter_mut().zip(&theta).zip(&gradient) {
                *c = t + step * g;
            }
            let new_ll = objective.evaluate(&candidate, None);
            if new_ll.is_finite() && new_ll >= ll + opt.armijo * step * g2 {
                accepted = Some(new_ll);
                break;
            }
            step *= 0.5;
        }
        let Some(new_ll) = accepted else {
            converged = true;
            break;
        };
        std::mem::swap(&mut theta, &mut candidate);
        objective.evaluate(&theta, Some(&mut candidate_gradient));
        std::mem::swap(&mut gradient, &mut candidate_gradient);
        let improvement = new_ll - ll;
        ll = new_ll;
        trace.push(ll);
        if improvement <= opt.tolerance * ll.abs() {
            converged = true;
            break;
        }
    }

    let (fit, log_likelihood) = if ll >= initial_ll {
        (objective.fit_from(&theta), ll)
    } else {
        (initial, initial_ll)
    };
    Ok(ConversionFit {
        fit,
        report: FitReport {
            iterations,
            initial_log_likelihood: initial_ll,
            log_likelihood,
            trace,
            converged,
        },
    })
}

/// Per-stimulus data of the conversion objective that does not depend on
/// the parameters.
struct StimulusTerms {
    geometry: RadiusGeometry,
    /// Squared offsets from the image center per pixel.
    dx2: Vec<f64>,
    dy2: Vec<f64>,
    /// Nonlinearity segment and position of every (rescaled) map value.
    nl_segment: Vec<usize>,
    nl_t: Vec<f64>,
    fixated: Vec<usize>,
}

/// Log-likelihood of the conversion model and its gradient with respect to
/// the unconstrained parameters `[a_0..a_S, b_0..b_C, gamma]`, where
/// `v_k = sum_{j <= k} a_j^2`, `c_k = b_k^2` and `alpha = exp(gamma)`.
pub(crate) struct Objective {
    stimuli: Vec<StimulusTerms>,
    segments_nl: usize,
    segments_cb: usize,
    map_min: f64,
    map_max: f64,
}

impl Objective {
    pub(crate) fn new(
        maps: &[SaliencyGrid],
        fixations: &FixationDataset,
        segments_nl: usize,
        segments_cb: usize,
        map_min: f64,
        map_max: f64,
    ) -> Self {
        let scale = ProbabilisticModelFit::initial(1, 1, map_min, map_max);
        let stimuli = maps
            .iter()
            .zip(fixations.fixations())
            .filter(|(_, f)| !f.is_empty())
            .map(|(map, fix)| {
                let shape = map.shape();
                let geometry = RadiusGeometry::new(shape);
                let n = shape.len();
                let (mut dx2, mut dy2) = (Vec::with_capacity(n), Vec::with_capacity(n));
                let (mut nl_segment, mut nl_t) = (Vec::with_capacity(n), Vec::with_capacity(n));
                for (i, &m) in map.values().iter().enumerate() {
                    let (row, col) = shape.position(i);
                    let dx = col as f64 - 0.5 * geometry.x_max;
                    let dy = row as f64 - 0.5 * geometry.y_max;
                    dx2.push(dx * dx);
                    dy2.push(dy * dy);
                    let (s, t) = locate(segments_nl, scale.rescale(m));
                    nl_segment.push(s);
                    nl_t.push(t);
                }
                StimulusTerms { geometry, dx2, dy2, nl_segment, nl_t, fixated: fix.indices(shape).collect() }
            })
            .collect();
        Objective { stimuli, segments_nl, segments_cb, map_min, map_max }
    }

    pub(crate) fn len(&self) -> usize {
        self.segments_nl + self.segments_cb + 3
    }

    /// Near the identity / flat / `alpha = 1` start. The offset of the first
    /// nonlinearity knot keeps its gradient from vanishing.
    pub(crate) fn initial_parameters(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.len());
        theta.push(0.01);
        let step = (1.0 / self.segments_nl as f64).sqrt();
        theta.extend(std::iter::repeat_n(step, self.segments_nl));
        theta.extend(std::iter::repeat_n(1.0, self.segments_cb + 1));
        theta.push(0.0);
        theta
    }

    fn unpack(&self, theta: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let (a, rest) = theta.split_at(self.segments_nl + 1);
        let (b, gamma) = rest.split_at(self.segments_cb + 1);
        let mut v = Vec::with_capacity(a.len());
        let mut acc = 0.0;
        for x in a {
            acc += x * x;
            v.push(acc);
        }
        let c = b.iter().map(|x| x * x).collect();
        (v, c, gamma[0].exp())
    }

    pub(crate) fn fit_from(&self, theta: &[f64]) -> ProbabilisticModelFit {
        let (v, c, alpha) = self.unpack(theta);
        ProbabilisticModelFit {
            nonlinearity: PiecewiseLinearFn { knots: v, monotone: true },
            cb_profile: PiecewiseLinearFn { knots: c, monotone: false },
            alpha,
            map_min: self.map_min,
            map_max: self.map_max,
        }
    }

    fn log_likelihood_of(&self, fit: &ProbabilisticModelFit) -> f64 {
        self.evaluate_knots(fit.nonlinearity.knots(), fit.cb_profile.knots(), fit.alpha, None)
    }

    /// Summed log-likelihood; fills `gradient` when given.
    pub(crate) fn evaluate(&self, theta: &[f64], gradient: Option<&mut [f64]>) -> f64 {
        let (v, c, alpha) = self.unpack(theta);
        let Some(gradient) = gradient else {
            return self.evaluate_knots(&v, &c, alpha, None);
        };
        let mut gv = vec![0.0; v.len()];
        let mut gc = vec![0.0; c.len()];
        let mut galpha = 0.0;
        let ll = self.evaluate_knots(&v, &c, alpha, Some((&mut gv, &mut gc, &mut galpha)));

        let (ga, rest) = gradient.split_at_mut(self.segments_nl + 1);
        let (gb, ggamma) = rest.split_at_mut(self.segments_cb + 1);
        let mut suffix = 0.0;
        for j in (0..v.len()).rev() {
            suffix += gv[j];
            ga[j] = 2.0 * theta[j] * suffix;
        }
        for (k, g) in gb.iter_mut().enumerate() {
            *g = 2.0 * theta[self.segments_nl + 1 + k] * gc[k];
        }
        ggamma[0] = alpha * galpha;
        ll
    }

    fn evaluate_knots(
        &self,
        v: &[f64],
        c: &[f64],
        alpha: f64,
        mut grad: Option<(&mut [f64], &mut [f64], &mut f64)>,
    ) -> f64 {
        let sc = self.segments_cb;
        let mut ll = 0.0;
        let mut nl = Vec::new();
        let mut cb = Vec::new();
        let mut cb_segment = Vec::new();
        let mut cb_t = Vec::new();
        let mut dr = Vec::new();
        for s in &self.stimuli {
            let n = s.dx2.len();
            let b = s.geometry.denominator(alpha);
            nl.clear();
            cb.clear();
            cb_segment.clear();
            cb_t.clear();
            dr.clear();
            let mut z = 0.0;
            for p in 0..n {
                let (i, t) = (s.nl_segment[p], s.nl_t[p]);
                let nv = (v[i] * (1.0 - t) + v[i + 1] * t).max(FACTOR_FLOOR);
                let a = s.dx2[p] + alpha * s.dy2[p];
                let r = if b > 0.0 { (a / b).sqrt().min(1.0) } else { 0.0 };
                let (k, u) = locate(sc, r);
                let cv = (c[k] * (1.0 - u) + c[k + 1] * u).max(FACTOR_FLOOR);
                z += nv * cv;
                nl.push(nv);
                cb.push(cv);
                if grad.is_some() {
                    cb_segment.push(k);
                    cb_t.push(u);
                    // d r / d alpha
                    dr.push(if r > 0.0 && r < 1.0 {
                        (s.dy2[p] / b - a * s.geometry.y_max * s.geometry.y_max / (4.0 * b * b))
                            / (2.0 * r)
                    } else {
                        0.0
                    });
                }
            }
            let count = s.fixated.len() as f64;
            for &p in &s.fixated {
                ll += (nl[p] * cb[p]).ln();
            }
            ll -= count * z.ln();

            let Some((gv, gc, galpha)) = grad.as_mut() else { continue };
            // Partition function terms.
            let w = count / z;
            for p in 0..n {
                let (i, t) = (s.nl_segment[p], s.nl_t[p]);
                let (k, u) = (cb_segment[p], cb_t[p]);
                if nl[p] > FACTOR_FLOOR {
                    let g = w * cb[p];
                    gv[i] -= g * (1.0 - t);
                    gv[i + 1] -= g * t;
                }
                if cb[p] > FACTOR_FLOOR {
                    let g = w * nl[p];
                    gc[k] -= g * (1.0 - u);
                    gc[k + 1] -= g * u;
                    **galpha -= g * (c[k + 1] - c[k]) * sc as f64 * dr[p];
                }
            }
            // Fixation terms.
            for &p in &s.fixated {
                let (i, t) = (s.nl_segment[p], s.nl_t[p]);
                let (k, u) = (cb_segment[p], cb_t[p]);
                if nl[p] > FACTOR_FLOOR {
                    gv[i] += (1.0 - t) / nl[p];
                    gv[i + 1] += t / nl[p];
                }
                if cb[p] > FACTOR_FLOOR {
                    gc[k] += (1.0 - u) / cb[p];
                    gc[k + 1] += u / cb[p];
                    **galpha += (c[k + 1] - c[k]) * sc as f64 * dr[p] / cb[p];
                }
            }
        }
        ll
    }
}

/// One fixation in normalized coordinates, tagged with its stimulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdePoint {
    pub x: f64,
    pub y: f64,
    pub stimulus: usize,
}

/// Isotropic Gaussian KDE over fixation positions mapped to [0, 1]^2.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterBiasKde {
    points: Vec<KdePoint>,
    stimulus_ids: Vec<String>,
    bandwidth: f64,
}

/// Pixel center `i` of an axis with `n` pixels, in [0, 1].
#[inline]
fn normalized(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

pub fn fit_kde_centerbias(dataset: &FixationDataset, bandwidth: f64) -> Result<CenterBiasKde> {
    check_bandwidth(bandwidth)?;
    if dataset.total_fixations() == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut points = Vec::with_capacity(dataset.total_fixations());
    for (s, (stimulus, fixations)) in dataset.iter().enumerate() {
        let shape = stimulus.shape;
        points.extend(fixations.iter().map(|f| KdePoint {
            x: normalized(f.col, shape.width),
            y: normalized(f.row, shape.height),
            stimulus: s,
        }));
    }
    let stimulus_ids = dataset.stimuli().iter().map(|s| s.id.clone()).collect();
    Ok(CenterBiasKde { points, stimulus_ids, bandwidth })
}

fn check_bandwidth(bandwidth: f64) -> Result<()> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidConfig(format!("bandwidth must be positive, got {bandwidth}")));
    }
    Ok(())
}

/// Unnormalized 1-D kernel values of every point at every pixel center of an
/// axis with `n` pixels, point-major.
fn axis_table(coords: impl Iterator<Item = f64>, n: usize, bandwidth: f64) -> Vec<f64> {
    let scale = -0.5 / (bandwidth * bandwidth);
    let mut table = Vec::new();
    for p in coords {
        table.extend((0..n).map(|i| {
            let d = normalized(i, n) - p;
            (scale * d * d).exp()
        }));
    }
    table
}

impl CenterBiasKde {
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn with_bandwidth(&self, bandwidth: f64) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        Ok(CenterBiasKde { bandwidth, ..self.clone() })
    }

    pub fn points(&self) -> &[KdePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn excluded_index(&self, exclude: Option<&str>) -> Result<Option<usize>> {
        exclude
            .map(|id| {
                self.stimulus_ids
                    .iter()
                    .position(|s| s == id)
                    .ok_or_else(|| Error::UnknownStimulus(id.to_string()))
            })
            .transpose()
    }

    /// The KDE evaluated at the pixel centers of `shape`, normalized on the
    /// grid. Fixations of `exclude` are left out.
    pub fn density_for_size(&self, shape: GridShape, exclude: Option<&str>) -> Result<DensityGrid> {
        let excluded = self.excluded_index(exclude)?;
        let kept: Vec<&KdePoint> =
            self.points.iter().filter(|p| Some(p.stimulus) != excluded).collect();
        if kept.is_empty() {
            return Err(Error::EmptyAfterExclusion(exclude.unwrap_or_default().to_string()));
        }
        let (h, w) = (shape.height, shape.width);
        let fx = axis_table(kept.iter().map(|p| p.x), w, self.bandwidth);
        let fy = axis_table(kept.iter().map(|p| p.y), h, self.bandwidth);
        let mut grid = vec![0.0; shape.len()];
        for (px, py) in fx.chunks_exact(w).zip(fy.chunks_exact(h)) {
            for (row, &wy) in grid.chunks_exact_mut(w).zip(py) {
                for (g, &wx) in row.iter_mut().zip(px) {
                    *g += wy * wx;
                }
            }
        }
        density_from_grid(Grid::new(shape, grid)?)
    }
}

pub fn kde_density_for_size(
    kde: &CenterBiasKde,
    shape: GridShape,
    exclude_stimulus: Option<&str>,
) -> Result<DensityGrid> {
    kde.density_for_size(shape, exclude_stimulus)
}

/// Mean leave-one-image-out log-likelihood per held-out fixation (nats) for
/// each candidate bandwidth. Every held-out stimulus is evaluated on its own
/// grid.
pub fn crossvalidation_scores(dataset: &FixationDataset, candidates: &[f64]) -> Result<Vec<f64>> {
    if dataset.len() < 2 {
        return Err(Error::TooFewStimuli(dataset.len()));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidConfig("no candidate bandwidths".into()));
    }
    let kde = fit_kde_centerbias(dataset, candidates[0])?;
    candidates.iter().map(|&h| loo_score(&kde.with_bandwidth(h)?, dataset)).collect()
}

/// The candidate with the best leave-one-image-out score; the first one wins
/// ties.
pub fn crossvalidate_bandwidth(dataset: &FixationDataset, candidates: &[f64]) -> Result<f64> {
    let scores = crossvalidation_scores(dataset, candidates)?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(candidates[best])
}

fn loo_score(kde: &CenterBiasKde, dataset: &FixationDataset) -> Result<f64> {
    // Kernel tables and their axis sums per distinct grid shape.
    let mut tables: HashMap<GridShape, (Vec<f64>, Vec<f64>, Vec<f64>)> = HashMap::new();
    let mut total = 0.0;
    let mut count = 0usize;
    for (s, (stimulus, fixations)) in dataset.iter().enumerate() {
        if fixations.is_empty() {
            continue;
        }
        let shape = stimulus.shape;
        let (fx, fy, mass) = tables.entry(shape).or_insert_with(|| {
            let fx = axis_table(kde.points.iter().map(|p| p.x), shape.width, kde.bandwidth);
            let fy = axis_table(kde.points.iter().map(|p| p.y), shape.height, kde.bandwidth);
            let mass = fx
                .chunks_exact(shape.width)
                .zip(fy.chunks_exact(shape.height))
                .map(|(x, y)| x.iter().sum::<f64>() * y.iter().sum::<f64>())
                .collect();
            (fx, fy, mass)
        });
        let others = || kde.points.iter().enumerate().filter(|(_, p)| p.stimulus != s);
        let z: f64 = others().map(|(i, _)| mass[i]).sum();
        if others().next().is_none() {
            return Err(Error::EmptyAfterExclusion(stimulus.id.clone()));
        }
        for f in fixations.iter() {
            let k: f64 = others()
                .map(|(i, _)| fx[i * shape.width + f.col] * fy[i * shape.height + f.row])
                .sum();
            total += (k / z + LOG_EPSILON).ln();
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixations::{Fixation, Stimulus};
    use crate::sampling::{sample_fixations, stream_rng};
    use proptest::prelude::*;

    fn shape(h: usize, w: usize) -> GridShape {
        GridShape::new(h, w).unwrap()
    }

    #[test]
    fn piecewise_linear_examples() {
        let id = PiecewiseLinearFn::identity(10);
        assert!((id.eval(0.3) - 0.3).abs() < 1e-15);
        let tent = PiecewiseLinearFn::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(tent.eval(0.25), 0.5);
        assert_eq!(tent.eval(0.5), 1.0);
        assert_eq!(tent.eval(1.0), 0.0);
        let f = PiecewiseLinearFn::new(vec![0.7, -2.0, 3.0, 1.0]).unwrap();
        assert_eq!(f.eval(-0.5), f.eval(0.0));
        assert_eq!(f.eval(0.0), 0.7);
        assert_eq!(f.eval(7.0), 1.0);
        assert!(PiecewiseLinearFn::monotone(vec![0.0, 1.0, 0.5]).is_err());
        assert!(PiecewiseLinearFn::new(vec![1.0]).is_err());
    }

    proptest! {
        #[test]
        fn piecewise_linear_exact_at_knots(knots in prop::collection::vec(-5.0f64..5.0, 2..25)) {
            let f = PiecewiseLinearFn::new(knots.clone()).unwrap();
            let s = f.segments();
            for (k, &v) in knots.iter().enumerate() {
                let got = f.eval(k as f64 / s as f64);
                prop_assert!((got - v).abs() <= 1e-12 * (1.0 + v.abs()), "{got} vs {v}");
            }
        }
    }

    #[test]
    fn radius_examples() {
        let s = shape(5, 5);
        assert_eq!(center_bias_radius(2, 2, s, 1.0), 0.0);
        for (r, c) in [(0, 0), (0, 4), (4, 0), (4, 4)] {
            assert!((center_bias_radius(r, c, s, 1.7) - 1.0).abs() < 1e-15);
        }
        let mid = center_bias_radius(2, 4, s, 1.0);
        assert!((mid - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(center_bias_radius(0, 0, shape(1, 1), 1.0), 0.0);
    }

    fn fit_with(nl: Vec<f64>, cb: Vec<f64>, alpha: f64) -> ProbabilisticModelFit {
        ProbabilisticModelFit {
            nonlinearity: PiecewiseLinearFn::monotone(nl).unwrap(),
            cb_profile: PiecewiseLinearFn::new(cb).unwrap(),
            alpha,
            map_min: 0.0,
            map_max: 1.0,
        }
    }

    fn smooth_density(s: GridShape, seed: u64) -> DensityGrid {
        let (cy, cx) = (seed as f64 % 5.0 + 2.0, (seed * 7) as f64 % 9.0 + 1.0);
        let v = (0..s.len())
            .map(|i| {
                let (r, c) = s.position(i);
                (-((r as f64 - cy).powi(2) + (c as f64 - cx).powi(2)) / 6.0).exp() + 0.01
            })
            .collect();
        density_from_grid(Grid::new(s, v).unwrap()).unwrap()
    }

    #[test]
    fn model_density_examples() {
        let s = shape(8, 11);
        let d = smooth_density(s, 3);
        let identity = ProbabilisticModelFit::initial(20, 12, 0.0, 1.0);
        let got = model_density(&identity, &d.to_saliency()).unwrap();
        for (a, b) in got.values().iter().zip(d.values()) {
            assert!((a - b).abs() < 1e-12);
        }

        let doubled = fit_with((0..=20).map(|k| 2.0 * k as f64 / 20.0).collect(), vec![1.0; 13], 1.0);
        let got2 = model_density(&doubled, &d.to_saliency()).unwrap();
        for (a, b) in got.values().iter().zip(got2.values()) {
            assert!((a - b).abs() < 1e-15);
        }

        // Constant map: only the center bias factor is left.
        let cb: Vec<f64> = (0..=12).map(|k| 2.0 - k as f64 / 12.0).collect();
        let fit = fit_with((0..=20).map(|k| k as f64 / 20.0).collect(), cb.clone(), 1.3);
        let constant = SaliencyGrid::new(Grid::filled(s, 0.4)).unwrap();
        let got = model_density(&fit, &constant).unwrap();
        let cbf = PiecewiseLinearFn::new(cb).unwrap();
        let raw: Vec<f64> =
            (0..s.len()).map(|i| { let (r, c) = s.position(i); cbf.eval(center_bias_radius(r, c, s, 1.3)) }).collect();
        let total: f64 = raw.iter().sum();
        for (a, b) in got.values().iter().zip(&raw) {
            assert!((a - b / total).abs() < 1e-15);
        }
    }

    #[test]
    fn log_likelihood_examples() {
        let u = DensityGrid::uniform(shape(4, 5));
        let f = FixationSet::from_pairs(&[(0, 0), (3, 4), (2, 2)]);
        let ll = log_likelihood(&u, &f).unwrap();
        assert!((ll + 3.0 * 20f64.ln()).abs() < 1e-12);

        let mut v = vec![0.0; 20];
        v[7] = 1.0;
        let delta = DensityGrid::new(Grid::new(shape(4, 5), v).unwrap()).unwrap();
        assert!(log_likelihood(&delta, &FixationSet::from_pairs(&[(1, 2)])).unwrap().abs() < 1e-15);
        let miss = log_likelihood(&delta, &FixationSet::from_pairs(&[(0, 0)])).unwrap();
        assert!((miss - (-46.0517)).abs() < 1e-4, "{miss}");
        assert!(matches!(log_likelihood(&u, &FixationSet::from_pairs(&[])), Err(Error::EmptyFixations)));
        assert!(matches!(
            log_likelihood(&u, &FixationSet::from_pairs(&[(4, 0)])),
            Err(Error::OutOfBounds { .. })
        ));
    }

    fn dataset(densities: &[DensityGrid], n: usize, seed: u64) -> FixationDataset {
        let stimuli = densities
            .iter()
            .enumerate()
            .map(|(i, d)| Stimulus { id: format!("s{i}"), shape: d.shape() })
            .collect();
        let fixations = densities
            .iter()
            .enumerate()
            .map(|(i, d)| sample_fixations(d, n, &mut stream_rng(seed, 9, i as u64)))
            .collect();
        FixationDataset::new(stimuli, fixations).unwrap()
    }

    fn objective_fixture() -> (Objective, Vec<f64>) {
        let ds: Vec<DensityGrid> = (0..3).map(|i| smooth_density(shape(7 + i, 9), i as u64)).collect();
        let maps: Vec<SaliencyGrid> = ds.iter().map(|d| d.as_grid().map(f64::sqrt)).map(|g| SaliencyGrid::new(g).unwrap()).collect();
        let data = dataset(&ds, 40, 5);
        let obj = Objective::new(&maps, &data, 6, 4, 0.0, 0.4);
        let mut theta = obj.initial_parameters();
        // move away from the symmetric start
        for (i, t) in theta.iter_mut().enumerate() {
            *t += 0.05 * ((i * 37 % 11) as f64 / 11.0 - 0.5);
        }
        (obj, theta)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (obj, theta) = objective_fixture();
        let mut g = vec![0.0; theta.len()];
        obj.evaluate(&theta, Some(&mut g));
        for i in 0..theta.len() {
            let h = 1e-6;
            let (mut up, mut down) = (theta.clone(), theta.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (obj.evaluate(&up, None) - obj.evaluate(&down, None)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-4 * (1.0 + fd.abs()), "param {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn objective_agrees_with_model_density() {
        let (obj, theta) = objective_fixture();
        let fit = obj.fit_from(&theta);
        let ds: Vec<DensityGrid> = (0..3).map(|i| smooth_density(shape(7 + i, 9), i as u64)).collect();
        let data = dataset(&ds, 40, 5);
        let mut direct = 0.0;
        for (d, f) in ds.iter().zip(data.fixations()) {
            let map = SaliencyGrid::new(d.as_grid().map(f64::sqrt)).unwrap();
            direct += log_likelihood(&apply_fit(&fit, &map).unwrap(), f).unwrap();
        }
        let ll = obj.evaluate(&theta, None);
        assert!((ll - direct).abs() < 1e-9 * direct.abs(), "{ll} vs {direct}");
    }

    #[test]
    fn fit_improves_and_is_monotone() {
        let ds: Vec<DensityGrid> = (0..4).map(|i| smooth_density(shape(10, 12), i)).collect();
        let maps: Vec<SaliencyGrid> =
            ds.iter().map(|d| SaliencyGrid::new(d.as_grid().map(f64::cbrt)).unwrap()).collect();
        let data = dataset(&ds, 150, 2);
        let opt = OptimizerConfig { max_iterations: 300, ..Default::default() };
        let out = fit_conversion_with_report(&maps, &data, 20, 12, &opt).unwrap();
        assert!(out.report.log_likelihood >= out.report.initial_log_likelihood);
        assert!(out.report.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(out.fit.nonlinearity.knots().windows(2).all(|w| w[1] >= w[0]));
        assert!(out.fit.nonlinearity.knots().iter().all(|&v| v >= 0.0));
        assert!(out.fit.alpha > 0.0);
    }

    #[test]
    fn fit_is_invariant_to_affine_map_rescaling() {
        let ds: Vec<DensityGrid> = (0..3).map(|i| smooth_density(shape(9, 9), i)).collect();
        let maps: Vec<SaliencyGrid> = ds.iter().map(|d| d.to_saliency()).collect();
        let scaled: Vec<SaliencyGrid> =
            ds.iter().map(|d| SaliencyGrid::new(d.as_grid().map(|v| 3.5 * v - 2.0)).unwrap()).collect();
        let data = dataset(&ds, 100, 4);
        let opt = OptimizerConfig { max_iterations: 200, ..Default::default() };
        let a = fit_conversion(&maps, &data, 20, 12, &opt).unwrap();
        let b = fit_conversion(&scaled, &data, 20, 12, &opt).unwrap();
        for (m, s) in maps.iter().zip(&scaled) {
            let (da, db) = (apply_fit(&a, m).unwrap(), apply_fit(&b, s).unwrap());
            for (x, y) in da.values().iter().zip(db.values()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_maps_give_a_center_bias_model() {
        let ds: Vec<DensityGrid> = (0..3).map(|i| smooth_density(shape(9, 9), i)).collect();
        let maps: Vec<SaliencyGrid> =
            ds.iter().map(|d| SaliencyGrid::new(Grid::filled(d.shape(), 0.3)).unwrap()).collect();
        let data = dataset(&ds, 60, 8);
        let opt = OptimizerConfig { max_iterations: 100, ..Default::default() };
        let fit = fit_conversion(&maps, &data, 20, 12, &opt).unwrap();
        // Every pixel gets the same nonlinearity value, so the density is the
        // normalized center bias factor.
        let s = ds[0].shape();
        let got = apply_fit(&fit, &maps[0]).unwrap();
        let raw: Vec<f64> = (0..s.len())
            .map(|i| { let (r, c) = s.position(i); fit.cb_profile.eval(center_bias_radius(r, c, s, fit.alpha)).max(FACTOR_FLOOR) })
            .collect();
        let total: f64 = raw.iter().sum();
        for (a, b) in got.values().iter().zip(&raw) {
            assert!((a - b / total).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_rejects_bad_input() {
        let empty = FixationDataset::new(vec![], vec![]).unwrap();
        assert!(matches!(
            fit_conversion(&[], &empty, 20, 12, &OptimizerConfig::default()),
            Err(Error::EmptyDataset)
        ));
        let d = smooth_density(shape(4, 4), 0);
        let data = dataset(&[d.clone()], 5, 0);
        let wrong = SaliencyGrid::new(Grid::filled(shape(4, 5), 1.0)).unwrap();
        assert!(matches!(
            fit_conversion(&[wrong], &data, 20, 12, &OptimizerConfig::default()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    fn points_dataset(points: &[(&str, GridShape, Vec<(usize, usize)>)]) -> FixationDataset {
        FixationDataset::new(
            points.iter().map(|(id, s, _)| Stimulus { id: id.to_string(), shape: *s }).collect(),
            points.iter().map(|(_, _, p)| FixationSet::from_pairs(p)).collect(),
        )
        .unwrap()
    }

    fn entropy(d: &DensityGrid) -> f64 {
        -d.values().iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>()
    }

    #[test]
    fn kde_examples() {
        let data = points_dataset(&[
            ("a", shape(9, 9), vec![(4, 4), (4, 4)]),
            ("b", shape(21, 31), vec![(10, 15)]),
        ]);
        let kde = fit_kde_centerbias(&data, 0.1).unwrap();
        let d = kde.density_for_size(shape(15, 15), None).unwrap();
        let argmax = d.values().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, shape(15, 15).index(7, 7));
        assert!((d.as_grid().sum() - 1.0).abs() < 1e-12);

        let spread = points_dataset(&[
            ("a", shape(20, 20), vec![(3, 4), (15, 2), (9, 9)]),
            ("b", shape(20, 20), vec![(1, 18), (12, 13)]),
        ]);
        let s = shape(24, 32);
        let narrow = fit_kde_centerbias(&spread, 0.1).unwrap().density_for_size(s, None).unwrap();
        let wide = fit_kde_centerbias(&spread, 0.5).unwrap().density_for_size(s, None).unwrap();
        assert!(entropy(&wide) > entropy(&narrow));

        for (h, w) in [(1, 1), (3, 7), (50, 13)] {
            let d = kde.density_for_size(shape(h, w), Some("a")).unwrap();
            assert!((d.as_grid().sum() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn kde_errors() {
        let single = points_dataset(&[("only", shape(5, 5), vec![(1, 1)])]);
        let kde = fit_kde_centerbias(&single, 0.2).unwrap();
        assert!(matches!(kde.density_for_size(shape(5, 5), Some("only")), Err(Error::EmptyAfterExclusion(_))));
        assert!(matches!(kde.density_for_size(shape(5, 5), Some("nope")), Err(Error::UnknownStimulus(_))));
        assert!(fit_kde_centerbias(&single, 0.0).is_err());
        let empty = points_dataset(&[("e", shape(5, 5), vec![])]);
        assert!(matches!(fit_kde_centerbias(&empty, 0.2), Err(Error::EmptyDataset)));
        assert!(matches!(crossvalidate_bandwidth(&single, &[0.2]), Err(Error::TooFewStimuli(1))));
    }

    #[test]
    fn excluded_fixations_do_not_matter() {
        let a = points_dataset(&[
            ("x", shape(10, 10), vec![(1, 2), (8, 8)]),
            ("y", shape(12, 8), vec![(3, 3), (11, 0), (6, 4)]),
            ("z", shape(10, 10), vec![(5, 5)]),
        ]);
        let b = points_dataset(&[
            ("x", shape(10, 10), vec![(1, 2), (8, 8)]),
            ("y", shape(12, 8), vec![(0, 7), (2, 2)]),
            ("z", shape(10, 10), vec![(5, 5)]),
        ]);
        let da = fit_kde_centerbias(&a, 0.15).unwrap().density_for_size(shape(16, 16), Some("y")).unwrap();
        let db = fit_kde_centerbias(&b, 0.15).unwrap().density_for_size(shape(16, 16), Some("y")).unwrap();
        assert_eq!(da, db);
    }

    /// Bilinear resample with pixel-center alignment.
    fn resample(values: &[f64], from: GridShape, to: GridShape) -> Vec<f64> {
        let coord = |i: usize, n_to: usize, n_from: usize| {
            let x = ((i as f64 + 0.5) * n_from as f64 / n_to as f64 - 0.5).clamp(0.0, (n_from - 1) as f64);
            let i0 = (x.floor() as usize).min(n_from.saturating_sub(2));
            (i0, x - i0 as f64)
        };
        let mut out = Vec::with_capacity(to.len());
        for r in 0..to.height {
            let (r0, tr) = coord(r, to.height, from.height);
            for c in 0..to.width {
                let (c0, tc) = coord(c, to.width, from.width);
                let v = |rr: usize, cc: usize| values[from.index(rr, cc)];
                out.push(
                    v(r0, c0) * (1.0 - tr) * (1.0 - tc)
                        + v(r0, c0 + 1) * (1.0 - tr) * tc
                        + v(r0 + 1, c0) * tr * (1.0 - tc)
                        + v(r0 + 1, c0 + 1) * tr * tc,
                );
            }
        }
        out
    }

    #[test]
    fn kde_is_resolution_consistent() {
        let d = smooth_density(shape(40, 40), 1);
        let data = dataset(&[d.clone(), smooth_density(shape(40, 40), 4)], 300, 6);
        let kde = fit_kde_centerbias(&data, DEFAULT_BANDWIDTH).unwrap();
        let (small, large) = (shape(24, 36), shape(48, 72));
        let ds = kde.density_for_size(small, None).unwrap();
        let dl = kde.density_for_size(large, None).unwrap();
        // Resample the fine grid onto the coarse one so no pixel needs
        // extrapolation.
        let down = resample(dl.values(), large, small);
        let scale = large.len() as f64 / small.len() as f64;
        for (d, s) in down.iter().zip(ds.values()) {
            let d = d * scale;
            assert!((d - s).abs() <= 0.02 * s, "{d} vs {s}");
        }
    }

    #[test]
    fn crossvalidation_matches_full_grid_evaluation() {
        let ds: Vec<DensityGrid> = (0..4).map(|i| smooth_density(shape(12 + i, 14), i as u64)).collect();
        let data = dataset(&ds, 25, 3);
        let candidates = [0.03, 0.08, 0.2, 0.5];
        let scores = crossvalidation_scores(&data, &candidates).unwrap();
        for (&h, &score) in candidates.iter().zip(&scores) {
            let kde = fit_kde_centerbias(&data, h).unwrap();
            let mut total = 0.0;
            let mut n = 0;
            for (s, f) in data.iter() {
                let d = kde.density_for_size(s.shape, Some(&s.id)).unwrap();
                total += log_likelihood(&d, f).unwrap();
                n += f.len();
            }
            let oracle = total / n as f64;
            assert!((score - oracle).abs() < 1e-10, "{h}: {score} vs {oracle}");
        }
        let best = crossvalidate_bandwidth(&data, &candidates).unwrap();
        let imax = scores.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(best, candidates[imax]);
        assert_eq!(crossvalidate_bandwidth(&data, &[0.3]).unwrap(), 0.3);
        assert_eq!(
            crossvalidation_scores(&data, &candidates).unwrap(),
            crossvalidation_scores(&data, &candidates).unwrap()
        );
    }

    /// Leave-one-image-out KDE log-likelihood with a continuous Gaussian
    /// kernel, evaluated directly at the normalized fixation positions.
    fn continuous_loo(points: &[(f64, f64, usize)], h: f64) -> f64 {
        let mut total = 0.0;
        for &(x, y, s) in points {
            let others: Vec<_> = points.iter().filter(|p| p.2 != s).collect();
            let k: f64 = others
                .iter()
                .map(|p| (-((x - p.0).powi(2) + (y - p.1).powi(2)) / (2.0 * h * h)).exp())
                .sum::<f64>()
                / (2.0 * std::f64::consts::PI * h * h * others.len() as f64);
            total += k.ln();
        }
        total / points.len() as f64
    }

    #[test]
    fn crossvalidated_bandwidth_tracks_the_continuous_optimum() {
        // 5000 fixations from an isotropic Gaussian (sigma 0.1 in normalized
        // coordinates) over 10 stimuli on a fine grid.
        let sigma = 0.1;
        let s = shape(200, 200);
        let v: Vec<f64> = (0..s.len())
            .map(|i| {
                let (r, c) = s.position(i);
                let (x, y) = (normalized(c, 200) - 0.5, normalized(r, 200) - 0.5);
                (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let d = density_from_grid(Grid::new(s, v).unwrap()).unwrap();
        let data = dataset(&vec![d; 10], 500, 17);
        let candidates: Vec<f64> = (0..12).map(|k| 0.01 * 1.3f64.powi(k)).collect();
        let chosen = crossvalidate_bandwidth(&data, &candidates).unwrap();

        let points: Vec<(f64, f64, usize)> = data
            .iter()
            .enumerate()
            .flat_map(|(i, (st, f))| {
                f.iter()
                    .map(move |p: &Fixation| (normalized(p.col, st.shape.width), normalized(p.row, st.shape.height), i))
                    .collect::<Vec<_>>()
            })
            .collect();
        let oracle = candidates
            .iter()
            .map(|&h| (h, continuous_loo(&points, h)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        let step = 1.3f64.ln();
        assert!((chosen.ln() - oracle.ln()).abs() <= step + 1e-9, "{chosen} vs {oracle}");
        // Leave-one-out optimal bandwidths shrink like n^(-1/6) and stay
        // below the generating width.
        assert!(chosen < sigma && chosen > 0.25 * sigma, "{chosen}");
    }
}
