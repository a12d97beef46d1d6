//! The seven saliency metrics, the empirical saliency map, and an exhaustive
//! two-alternative forced choice (2AFC) scorer used to cross-check the ROC
//! implementation.
//!
//! Conventions: repeated fixations count with multiplicity everywhere; NSS,
//! CC and z-scoring use population variance; IG is in bits per fixation and
//! KL-Div in nats.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fixations::FixationSet;
use crate::grid::{
    is_constant, mean_std, normalize_to_distribution, zscore_normalize, DensityGrid, GaussianBlur,
    Grid, GridShape, SaliencyGrid,
};

/// Regularizer added inside the logarithms of the information gain.
pub const IG_EPSILON: f64 = 1e-20;
/// Regularizer added inside the logarithm of the KL divergence.
pub const KL_EPSILON: f64 = 2.2e-16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricId {
    Auc,
    SAuc,
    Nss,
    Ig,
    Cc,
    KlDiv,
    Sim,
}

impl MetricId {
    pub const ALL: [MetricId; 7] = [
        MetricId::Auc,
        MetricId::SAuc,
        MetricId::Nss,
        MetricId::Ig,
        MetricId::Cc,
        MetricId::KlDiv,
        MetricId::Sim,
    ];

    /// KL-Div is the only metric where lower scores are better.
    pub fn higher_is_better(self) -> bool {
        self != MetricId::KlDiv
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricId::Auc => "AUC",
            MetricId::SAuc => "sAUC",
            MetricId::Nss => "NSS",
            MetricId::Ig => "IG",
            MetricId::Cc => "CC",
            MetricId::KlDiv => "KLDiv",
            MetricId::Sim => "SIM",
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| *c != '-' && *c != '_').collect();
        MetricId::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(&key))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricScore {
    pub metric: MetricId,
    pub value: f64,
}

impl MetricScore {
    pub fn new(metric: MetricId, value: f64) -> Self {
        debug_assert!(value.is_finite(), "{metric} produced {value}");
        MetricScore { metric, value }
    }
}

fn check_shape(expected: GridShape, found: GridShape) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { expected, found });
    }
    Ok(())
}

/// Fixation counts blurred with a Gaussian of width `sigma`.
pub fn empirical_saliency_map(
    fixations: &FixationSet,
    shape: GridShape,
    sigma: f64,
) -> Result<SaliencyGrid> {
    fixations.validate(shape)?;
    let mut blur = GaussianBlur::new(sigma)?;
    let mut counts = fixations.count_grid(shape);
    blur.apply_in_place(shape, &mut counts);
    SaliencyGrid::new(Grid::new(shape, counts)?)
}

/// ROC area with exact integer bookkeeping. Thresholds are the combined
/// values of both sets; everything `>= threshold` is called positive. The
/// curve runs from (0,0) to (1,1) and is integrated with the trapezoidal rule.
pub(crate) fn roc_area(mut positives: Vec<f64>, mut negatives: Vec<f64>) -> f64 {
    debug_assert!(!positives.is_empty() && !negatives.is_empty());
    positives.sort_by(|a, b| b.total_cmp(a));
    negatives.sort_by(|a, b| b.total_cmp(a));
    let (np, nn) = (positives.len(), negatives.len());
    let (mut i, mut j) = (0usize, 0usize);
    let (mut prev_tp, mut prev_fp) = (0u128, 0u128);
    // twice the area, in units of 1 / (np * nn)
    let mut twice_area: u128 = 0;
    while i < np || j < nn {
        let threshold = match (positives.get(i), negatives.get(j)) {
            (Some(&p), Some(&n)) => p.max(n),
            (Some(&p), None) => p,
            (None, Some(&n)) => n,
            (None, None) => unreachable!(),
        };
        while i < np && positives[i] >= threshold {
            i += 1;
        }
        while j < nn && negatives[j] >= threshold {
            j += 1;
        }
        let (tp, fp) = (i as u128, j as u128);
        twice_area += (fp - prev_fp) * (tp + prev_tp);
        prev_tp = tp;
        prev_fp = fp;
    }
    twice_area as f64 / (2.0 * np as f64 * nn as f64)
}

fn values_at(map: &SaliencyGrid, fixations: &FixationSet) -> Vec<f64> {
    let shape = map.shape();
    fixations.indices(shape).map(|i| map.values()[i]).collect()
}

/// AUC with every pixel of the map as a nonfixation.
pub fn auc(map: &SaliencyGrid, fixations: &FixationSet) -> Result<MetricScore> {
    fixations.validate(map.shape())?;
    let positives = values_at(map, fixations);
    Ok(MetricScore::new(MetricId::Auc, roc_area(positives, map.values().to_vec())))
}

/// Exhaustive 2AFC score over all (fixation, nonfixation) pairs: 1 for a win,
/// 1/2 for a tie.
pub fn auc_2afc_oracle(
    map: &SaliencyGrid,
    fixations: &FixationSet,
    nonfixations: &FixationSet,
) -> Result<MetricScore> {
    if fixations.is_empty() {
        return Err(Error::EmptySet { what: "fixation set" });
    }
    if nonfixations.is_empty() {
        return Err(Error::EmptySet { what: "nonfixation set" });
    }
    fixations.check_bounds(map.shape())?;
    nonfixations.check_bounds(map.shape())?;
    let fix = values_at(map, fixations);
    let nonfix = values_at(map, nonfixations);
    let mut twice_wins: u128 = 0;
    for &f in &fix {
        for &n in &nonfix {
            twice_wins += match f.total_cmp(&n) {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    let value = twice_wins as f64 / (2.0 * fix.len() as f64 * nonfix.len() as f64);
    Ok(MetricScore::new(MetricId::Auc, value))
}

/// Shuffled AUC: nonfixations are given explicitly (typically fixations from
/// other stimuli).
pub fn sauc(
    map: &SaliencyGrid,
    fixations: &FixationSet,
    nonfix_fixations: &FixationSet,
) -> Result<MetricScore> {
    if fixations.is_empty() {
        return Err(Error::EmptySet { what: "fixation set" });
    }
    if nonfix_fixations.is_empty() {
        return Err(Error::EmptySet { what: "nonfixation set" });
    }
    fixations.check_bounds(map.shape())?;
    nonfix_fixations.check_bounds(map.shape())?;
    let value = roc_area(values_at(map, fixations), values_at(map, nonfix_fixations));
    Ok(MetricScore::new(MetricId::SAuc, value))
}

/// Normalized scanpath saliency: mean z-score at fixated pixels.
pub fn nss(map: &SaliencyGrid, fixations: &FixationSet) -> Result<MetricScore> {
    fixations.validate(map.shape())?;
    let z = zscore_normalize(map)?;
    let value = mean(values_at(&z, fixations).into_iter());
    Ok(MetricScore::new(MetricId::Nss, value))
}

/// Information gain over `baseline` in bits per fixation.
pub fn ig(
    density: &DensityGrid,
    fixations: &FixationSet,
    baseline: &DensityGrid,
) -> Result<MetricScore> {
    check_shape(density.shape(), baseline.shape())?;
    fixations.validate(density.shape())?;
    let value = mean(fixations.indices(density.shape()).map(|i| {
        (density.values()[i] + IG_EPSILON).log2() - (baseline.values()[i] + IG_EPSILON).log2()
    }));
    Ok(MetricScore::new(MetricId::Ig, value))
}

/// Pearson correlation between a map and an empirical saliency map.
pub fn cc(map: &SaliencyGrid, empirical: &SaliencyGrid) -> Result<MetricScore> {
    check_shape(map.shape(), empirical.shape())?;
    let value = pearson(map.values(), empirical.values())?;
    Ok(MetricScore::new(MetricId::Cc, value))
}

pub(crate) fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if is_constant(a) || is_constant(b) {
        return Err(Error::ZeroVariance);
    }
    let (ma, sa) = mean_std(a);
    let (mb, sb) = mean_std(b);
    if !(sa > 0.0 && sb > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64;
    Ok((cov / (sa * sb)).clamp(-1.0, 1.0))
}

/// KL divergence of the normalized model map from the normalized empirical
/// map, in nats. Lower is better.
pub fn kldiv(empirical: &SaliencyGrid, map: &SaliencyGrid) -> Result<MetricScore> {
    check_shape(empirical.shape(), map.shape())?;
    let e = normalize_to_distribution(empirical)?;
    let q = normalize_to_distribution(map)?;
    Ok(MetricScore::new(MetricId::KlDiv, kl_divergence(e.values(), q.values())))
}

pub(crate) fn kl_divergence(e: &[f64], q: &[f64]) -> f64 {
    e.iter()
        .zip(q)
        .map(|(&ei, &qi)| ei * ((ei + KL_EPSILON) / (qi + KL_EPSILON)).ln())
        .sum()
}

/// Similarity: sum of pixelwise minima of the two normalized maps.
pub fn sim(map: &SaliencyGrid, empirical: &SaliencyGrid) -> Result<MetricScore> {
    check_shape(map.shape(), empirical.shape())?;
    let p = normalize_to_distribution(map)?;
    let q = normalize_to_distribution(empirical)?;
    Ok(MetricScore::new(MetricId::Sim, similarity(p.values(), q.values())))
}

pub(crate) fn similarity(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a.min(*b)).sum()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}
