//! Sampling experiments on known densities.
//!
//! * [`run_crossmetric_experiment`]: every derived map under every metric.
//! * [`run_cc_approximation_experiment`]: mean empirical map against mean
//!   normalized empirical map as CC predictions.
//! * [`run_sim_count_experiment`]: SIM maps derived for different fixation
//!   counts, scored at each count.
//! * [`run_binning_experiment`]: AUC before and after 256-level quantization.
//! * [`run_conversion_recovery`]: the saliency-map-to-density conversion on
//!   distorted versions of known densities.
//!
//! Every fixation set gets its own RNG stream from `(seed, domain, index)`;
//! results do not depend on evaluation order. Standard errors are the sample
//! standard deviation over sets divided by `sqrt(n_sets)`; margins between two
//! maps use the per-set differences.

use crate::derive::{
    derive_auc_map, derive_cc_kldiv_map, derive_nss_ig_map, derive_sauc_map,
    derive_sim_map_with_report, DeriveConfig, SgdConfig, SgdReport,
};
use crate::error::{Error, Result};
use crate::fixations::FixationSet;
use crate::grid::{
    equalize, normalize_to_distribution, Boundary, DensityGrid, GaussianBlur, Grid, GridShape,
    SaliencyGrid,
};
use crate::io::quantize_256;
use crate::metrics::{self, pearson, similarity, MetricId};
use crate::probabilistic::{apply_fit, fit_conversion_with_report, FitReport, OptimizerConfig, ProbabilisticModelFit};
use crate::sampling::{stream_rng, EmpiricalSampler, FixationSampler};
use crate::synthetic::{synthetic_dataset, DatasetConfig};

pub use crate::sampling::sample_fixations;

const FIXATION_DOMAIN: u64 = 0x4842_6669;
const NONFIXATION_DOMAIN: u64 = 0x4842_6e66;
const CC_BUILD_DOMAIN: u64 = 0x4343_6275_0000;
const CC_EVAL_DOMAIN: u64 = 0x4343_6576_0000;
const SIM_EVAL_DOMAIN: u64 = 0x5349_6576_0000;
const RECOVERY_DOMAIN: u64 = 0x5245_6376;

/// Empirical-map width for a grid: 35 px per 768 px of height.
pub fn scaled_sigma(shape: GridShape) -> f64 {
    shape.height as f64 * 35.0 / 768.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_sets: usize,
    pub n_fix: usize,
    pub seed: u64,
    /// Empirical-map sigma in pixels; `None` scales with the grid.
    pub sigma: Option<f64>,
    /// Nonfixations per set for sAUC, drawn from the center bias.
    pub n_nonfixations: usize,
    /// SIM map optimization. Its seed is used as given.
    pub sgd: SgdConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_sets: 1000,
            n_fix: 100,
            seed: 0,
            sigma: None,
            n_nonfixations: 1000,
            sgd: SgdConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sets == 0 || self.n_fix == 0 || self.n_nonfixations == 0 {
            return Err(Error::InvalidConfig("n_sets, n_fix and n_nonfixations must be >= 1".into()));
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0) {
                return Err(Error::NegativeSigma(s));
            }
        }
        self.sgd.validate()
    }

    pub fn sigma_for(&self, shape: GridShape) -> f64 {
        self.sigma.unwrap_or_else(|| scaled_sigma(shape))
    }

    fn derive_config(&self, shape: GridShape, n_fix: usize, centerbias: Option<DensityGrid>) -> DeriveConfig {
        DeriveConfig {
            empirical_sigma: self.sigma_for(shape),
            fixations_per_image: n_fix,
            sgd: self.sgd.clone(),
            centerbias,
        }
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Better by more than two paired standard errors.
    Strict,
    /// Identical scores on every set.
    Tie,
    /// Neither.
    Fail,
    /// The other entry could not be computed.
    Missing,
}

/// Comparison of a column's designated winner against one other row.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub other: usize,
    /// Mean per-set advantage of the winner, oriented so that positive means
    /// better (lower for lower-is-better columns).
    pub margin: f64,
    pub stderr: f64,
    pub verdict: Verdict,
}

/// Rows of candidate maps, columns of scoring conditions, and the per-set
/// scores of every cell. A cell is `None` when its score is undefined (for
/// example NSS of a constant map).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    pub higher_is_better: Vec<bool>,
    cells: Vec<Vec<Option<Vec<f64>>>>,
}

impl ScoreTable {
    fn new(rows: Vec<String>, columns: Vec<String>, higher_is_better: Vec<bool>) -> Self {
        let cells = vec![vec![None; columns.len()]; rows.len()];
        ScoreTable { rows, columns, higher_is_better, cells }
    }

    pub fn samples(&self, row: usize, column: usize) -> Option<&[f64]> {
        self.cells[row][column].as_deref()
    }

    pub fn mean(&self, row: usize, column: usize) -> Option<f64> {
        self.samples(row, column).map(|s| mean_stderr(s).0)
    }

    pub fn stderr(&self, row: usize, column: usize) -> Option<f64> {
        self.samples(row, column).map(|s| mean_stderr(s).1)
    }

    pub fn means(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.rows.len()).map(|r| (0..self.columns.len()).map(|c| self.mean(r, c)).collect()).collect()
    }

    pub fn stderrs(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.rows.len()).map(|r| (0..self.columns.len()).map(|c| self.stderr(r, c)).collect()).collect()
    }

    /// Row with the best mean in `column`; the first wins ties.
    pub fn best(&self, column: usize) -> Option<usize> {
        let sign = if self.higher_is_better[column] { 1.0 } else { -1.0 };
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.rows.len() {
            if let Some(m) = self.mean(r, column) {
                if best.is_none_or(|(_, b)| sign * m > sign * b) {
                    best = Some((r, m));
                }
            }
        }
        best.map(|(r, _)| r)
    }

    /// Mean and paired standard error of `row a - row b` in `column`, oriented
    /// so that positive means `a` is better.
    pub fn paired_margin(&self, column: usize, a: usize, b: usize) -> Option<(f64, f64)> {
        let (sa, sb) = (self.samples(a, column)?, self.samples(b, column)?);
        let sign = if self.higher_is_better[column] { 1.0 } else { -1.0 };
        let diffs: Vec<f64> = sa.iter().zip(sb).map(|(x, y)| sign * (x - y)).collect();
        Some(mean_stderr(&diffs))
    }

    /// `winner` against every other row of `column`.
    pub fn compare(&self, column: usize, winner: usize) -> Vec<Comparison> {
        (0..self.rows.len())
            .filter(|&r| r != winner)
            .map(|other| {
                let Some((margin, stderr)) = self.paired_margin(column, winner, other) else {
                    return Comparison { other, margin: f64::NAN, stderr: f64::NAN, verdict: Verdict::Missing };
                };
                let identical = self.samples(winner, column) == self.samples(other, column);
                let verdict = if identical {
                    Verdict::Tie
                } else if margin > 0.0 && margin > 2.0 * stderr {
                    Verdict::Strict
                } else {
                    Verdict::Fail
                };
                Comparison { other, margin, stderr, verdict }
            })
            .collect()
    }

    /// CSV rows: `row,column,mean,stderr,n`.
    pub fn to_rows(&self) -> Vec<Vec<Option<String>>> {
        let mut out = Vec::new();
        for (r, row) in self.rows.iter().enumerate() {
            for (c, column) in self.columns.iter().enumerate() {
                let n = self.samples(r, c).map(|s| s.len().to_string());
                out.push(vec![
                    Some(row.clone()),
                    Some(column.clone()),
                    self.mean(r, c).map(crate::io::format_number),
                    self.stderr(r, c).map(crate::io::format_number),
                    n,
                ]);
            }
        }
        out
    }
}

/// The five derived map types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapType {
    Auc,
    SAuc,
    NssIg,
    CcKlDiv,
    Sim,
}

impl MapType {
    pub const ALL: [MapType; 5] = [MapType::Auc, MapType::SAuc, MapType::NssIg, MapType::CcKlDiv, MapType::Sim];

    pub fn label(self) -> &'static str {
        match self {
            MapType::Auc => "AUC",
            MapType::SAuc => "sAUC",
            MapType::NssIg => "NSS/IG",
            MapType::CcKlDiv => "CC/KLDiv",
            MapType::Sim => "SIM",
        }
    }

    /// The map type derived for `metric`.
    pub fn for_metric(metric: MetricId) -> MapType {
        match metric {
            MetricId::Auc => MapType::Auc,
            MetricId::SAuc => MapType::SAuc,
            MetricId::Nss | MetricId::Ig => MapType::NssIg,
            MetricId::Cc | MetricId::KlDiv => MapType::CcKlDiv,
            MetricId::Sim => MapType::Sim,
        }
    }
}

/// Map types by metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub map_types: Vec<MapType>,
    pub metrics: Vec<MetricId>,
    pub table: ScoreTable,
}

/// One column of the dominance check.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDominance {
    pub metric: MetricId,
    pub matched: MapType,
    pub comparisons: Vec<(MapType, Comparison)>,
}

impl ColumnDominance {
    /// The matched map is strictly better than every other map, except maps
    /// that score identically on every set (rank-equivalent maps under AUC).
    pub fn holds(&self) -> bool {
        self.comparisons.iter().all(|(_, c)| matches!(c.verdict, Verdict::Strict | Verdict::Tie))
            && self.comparisons.iter().any(|(_, c)| c.verdict == Verdict::Strict)
    }
}

impl ScoreMatrix {
    /// Mean scores, `scores[map][metric]`.
    pub fn scores(&self) -> Vec<Vec<Option<f64>>> {
        self.table.means()
    }

    pub fn stderr(&self) -> Vec<Vec<Option<f64>>> {
        self.table.stderrs()
    }

    pub fn score(&self, map: MapType, metric: MetricId) -> Option<f64> {
        self.table.mean(self.row(map)?, self.column(metric)?)
    }

    fn row(&self, map: MapType) -> Option<usize> {
        self.map_types.iter().position(|&m| m == map)
    }

    fn column(&self, metric: MetricId) -> Option<usize> {
        self.metrics.iter().position(|&m| m == metric)
    }

    /// Best map type per metric column.
    pub fn winner(&self, metric: MetricId) -> Option<MapType> {
        self.table.best(self.column(metric)?).map(|r| self.map_types[r])
    }

    pub fn dominance(&self) -> Vec<ColumnDominance> {
        self.metrics
            .iter()
            .enumerate()
            .map(|(c, &metric)| {
                let matched = MapType::for_metric(metric);
                let comparisons = match self.row(matched) {
                    Some(r) => self.table.compare(c, r).into_iter().map(|cmp| (self.map_types[cmp.other], cmp)).collect(),
                    None => Vec::new(),
                };
                ColumnDominance { metric, matched, comparisons }
            })
            .collect()
    }
}

/// The derived maps of one density.
#[derive(Debug, Clone)]
pub struct DerivedMaps {
    pub maps: Vec<(MapType, SaliencyGrid)>,
    pub sim_report: SgdReport,
}

pub fn derive_all_maps(
    density: &DensityGrid,
    centerbias: &DensityGrid,
    config: &ExperimentConfig,
) -> Result<DerivedMaps> {
    let shape = density.shape();
    let derive_config = config.derive_config(shape, config.n_fix, Some(centerbias.clone()));
    let sim = derive_sim_map_with_report(density, &derive_config)?;
    let maps = vec![
        (MapType::Auc, derive_auc_map(density)?),
        (MapType::SAuc, derive_sauc_map(density, centerbias)?),
        (MapType::NssIg, derive_nss_ig_map(density)),
        (MapType::CcKlDiv, derive_cc_kldiv_map(density, derive_config.empirical_sigma)?),
        (MapType::Sim, sim.map.into()),
    ];
    Ok(DerivedMaps { maps, sim_report: sim.report })
}

pub fn run_crossmetric_experiment(
    density: &DensityGrid,
    centerbias: &DensityGrid,
    config: &ExperimentConfig,
) -> Result<ScoreMatrix> {
    config.validate()?;
    check_shape(density.shape(), centerbias.shape())?;
    let derived = derive_all_maps(density, centerbias, config)?;
    evaluate_maps(&derived.maps, density, centerbias, config)
}

fn check_shape(expected: GridShape, found: GridShape) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { expected, found });
    }
    Ok(())
}

/// Scores `maps` under all seven metrics on `config.n_sets` fixation sets
/// drawn from `density`. sAUC nonfixations are drawn from `centerbias`,
/// which is also the IG baseline.
pub fn evaluate_maps(
    maps: &[(MapType, SaliencyGrid)],
    density: &DensityGrid,
    centerbias: &DensityGrid,
    config: &ExperimentConfig,
) -> Result<ScoreMatrix> {
    config.validate()?;
    let shape = density.shape();
    for (_, m) in maps {
        check_shape(shape, m.shape())?;
    }
    let metrics_list = MetricId::ALL.to_vec();
    let mut table = ScoreTable::new(
        maps.iter().map(|(t, _)| t.label().to_string()).collect(),
        metrics_list.iter().map(|m| m.name().to_string()).collect(),
        metrics_list.iter().map(|m| m.higher_is_better()).collect(),
    );
    // IG needs each map as a density; maps that cannot be normalized get no
    // IG entry.
    let as_density: Vec<Option<DensityGrid>> =
        maps.iter().map(|(_, m)| normalize_to_distribution(m).ok()).collect();
    let fix_sampler = FixationSampler::new(density);
    let nonfix_sampler = FixationSampler::new(centerbias);
    let mut blur = GaussianBlur::new(config.sigma_for(shape))?;
    let mut samples = vec![vec![Some(Vec::with_capacity(config.n_sets)); metrics_list.len()]; maps.len()];

    for k in 0..config.n_sets {
        let fixations = fix_sampler.sample(config.n_fix, &mut stream_rng(config.seed, FIXATION_DOMAIN, k as u64));
        let nonfix =
            nonfix_sampler.sample(config.n_nonfixations, &mut stream_rng(config.seed, NONFIXATION_DOMAIN, k as u64));
        let empirical = SaliencyGrid::new(blur.apply(&Grid::new(shape, fixations.count_grid(shape))?))?;
        for (i, (_, map)) in maps.iter().enumerate() {
            for (j, &metric) in metrics_list.iter().enumerate() {
                let Some(cell) = samples[i][j].as_mut() else { continue };
                let score = match metric {
                    MetricId::Auc => metrics::auc(map, &fixations),
                    MetricId::SAuc => metrics::sauc(map, &fixations, &nonfix),
                    MetricId::Nss => metrics::nss(map, &fixations),
                    MetricId::Ig => match &as_density[i] {
                        Some(d) => metrics::ig(d, &fixations, centerbias),
                        None => Err(Error::DegenerateMap),
                    },
                    MetricId::Cc => metrics::cc(map, &empirical),
                    MetricId::KlDiv => metrics::kldiv(&empirical, map),
                    MetricId::Sim => metrics::sim(map, &empirical),
                };
                match score {
                    Ok(s) => cell.push(s.value),
                    Err(e) if e.kind() == crate::error::ErrorKind::Numeric => samples[i][j] = None,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    table.cells = samples;
    Ok(ScoreMatrix { map_types: maps.iter().map(|(t, _)| *t).collect(), metrics: metrics_list, table })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcApproxConfig {
    /// Sets used to build each mean map; as many fresh sets score them.
    pub n_sets: usize,
    pub n_fix_list: Vec<usize>,
    pub sigma_list: Vec<f64>,
    pub seed: u64,
    pub boundary: Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcApproxCell {
    pub n_fix: usize,
    pub sigma: f64,
    /// Mean CC of the mean empirical map.
    pub plain: f64,
    /// Mean CC of the mean normalized empirical map.
    pub normalized: f64,
    pub plain_stderr: f64,
    pub normalized_stderr: f64,
    /// Paired standard error of `normalized - plain`.
    pub difference_stderr: f64,
}

impl CcApproxCell {
    pub fn difference(&self) -> f64 {
        self.normalized - self.plain
    }
}

/// For every `(n_fix, sigma)`: averages `n_sets` empirical maps with and
/// without normalizing each to unit sum, then scores both averages by CC
/// against `n_sets` fresh empirical maps.
pub fn run_cc_approximation_experiment(density: &DensityGrid, config: &CcApproxConfig) -> Result<Vec<CcApproxCell>> {
    if config.n_sets == 0 || config.n_fix_list.is_empty() || config.sigma_list.is_empty() {
        return Err(Error::InvalidConfig("cc-approx needs n_sets >= 1 and nonempty lists".into()));
    }
    if config.n_fix_list.contains(&0) {
        return Err(Error::InvalidConfig("fixation counts must be >= 1".into()));
    }
    let shape = density.shape();
    let n = shape.len();
    let mut cells = Vec::new();
    for (a, &n_fix) in config.n_fix_list.iter().enumerate() {
        for (b, &sigma) in config.sigma_list.iter().enumerate() {
            let cell = (a * config.sigma_list.len() + b) as u64;
            let blur = GaussianBlur::with_boundary(sigma, config.boundary)?;
            let mut sampler = EmpiricalSampler::with_blur(density, n_fix, blur);
            let mut e = vec![0.0; n];
            let mut plain = vec![0.0; n];
            let mut normalized = vec![0.0; n];
            for k in 0..config.n_sets {
                sampler.draw_counts(&mut stream_rng(config.seed, CC_BUILD_DOMAIN + cell, k as u64), &mut e);
                let total: f64 = e.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::ZeroMass);
                }
                for ((p, q), v) in plain.iter_mut().zip(normalized.iter_mut()).zip(&e) {
                    *p += v;
                    *q += v / total;
                }
            }
            let scale = 1.0 / config.n_sets as f64;
            plain.iter_mut().chain(normalized.iter_mut()).for_each(|v| *v *= scale);

            let (mut sp, mut sn, mut sd) = (Vec::new(), Vec::new(), Vec::new());
            for k in 0..config.n_sets {
                sampler.draw_counts(&mut stream_rng(config.seed, CC_EVAL_DOMAIN + cell, k as u64), &mut e);
                let (p, q) = (pearson(&plain, &e)?, pearson(&normalized, &e)?);
                sp.push(p);
                sn.push(q);
                sd.push(q - p);
            }
            let ((plain_mean, plain_stderr), (norm_mean, normalized_stderr)) = (mean_stderr(&sp), mean_stderr(&sn));
            cells.push(CcApproxCell {
                n_fix,
                sigma,
                plain: plain_mean,
                normalized: norm_mean,
                plain_stderr,
                normalized_stderr,
                difference_stderr: mean_stderr(&sd).1,
            });
        }
    }
    Ok(cells)
}

/// SIM maps per fixation count (plus the CC map) scored at every count.
#[derive(Debug, Clone)]
pub struct SimCountResult {
    pub fix_counts: Vec<usize>,
    /// Rows: `SIM-<count>` for every count, then `CC`. Columns: evaluation
    /// counts.
    pub table: ScoreTable,
    pub reports: Vec<SgdReport>,
}

impl SimCountResult {
    /// Row of the SIM map derived for `fix_counts[column]`.
    pub fn matched_row(&self, column: usize) -> usize {
        column
    }

    pub fn cc_row(&self) -> usize {
        self.fix_counts.len()
    }
}

pub fn run_sim_count_experiment(
    density: &DensityGrid,
    fix_counts: &[usize],
    config: &ExperimentConfig,
) -> Result<SimCountResult> {
    config.validate()?;
    if fix_counts.is_empty() || fix_counts.contains(&0) {
        return Err(Error::InvalidConfig("fixation counts must be nonempty and >= 1".into()));
    }
    let shape = density.shape();
    let sigma = config.sigma_for(shape);
    let mut maps = Vec::new();
    let mut reports = Vec::new();
    for &count in fix_counts {
        let d = derive_sim_map_with_report(density, &config.derive_config(shape, count, None))?;
        maps.push(d.map.values().to_vec());
        reports.push(d.report);
    }
    let cc_map = derive_cc_kldiv_map(density, sigma)?;
    maps.push(normalize_to_distribution(&cc_map)?.values().to_vec());

    let mut rows: Vec<String> = fix_counts.iter().map(|c| format!("SIM-{c}")).collect();
    rows.push("CC".into());
    let columns = fix_counts.iter().map(|c| format!("n={c}")).collect();
    let mut table = ScoreTable::new(rows, columns, vec![true; fix_counts.len()]);
    let mut e = vec![0.0; shape.len()];
    for (j, &count) in fix_counts.iter().enumerate() {
        let mut sampler = EmpiricalSampler::new(density, count, sigma)?;
        let mut scores = vec![Vec::with_capacity(config.n_sets); maps.len()];
        for k in 0..config.n_sets {
            sampler.draw_normalized(&mut stream_rng(config.seed, SIM_EVAL_DOMAIN + j as u64, k as u64), &mut e);
            for (s, m) in scores.iter_mut().zip(&maps) {
                s.push(similarity(m, &e));
            }
        }
        for (i, s) in scores.into_iter().enumerate() {
            table.cells[i][j] = Some(s);
        }
    }
    Ok(SimCountResult { fix_counts: fix_counts.to_vec(), table, reports })
}

/// AUC of a density and of its equalized version, before and after 256-bin
/// quantization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinningResult {
    pub raw: f64,
    pub raw_binned: f64,
    pub equalized: f64,
    pub equalized_binned: f64,
}

impl BinningResult {
    pub fn raw_delta(&self) -> f64 {
        (self.raw_binned - self.raw).abs()
    }

    pub fn equalized_delta(&self) -> f64 {
        (self.equalized_binned - self.equalized).abs()
    }
}

pub fn run_binning_experiment(density: &DensityGrid, fixations: &FixationSet) -> Result<BinningResult> {
    let raw = density.to_saliency();
    let eq = equalize(&raw)?;
    let auc = |m: &SaliencyGrid| metrics::auc(m, fixations).map(|s| s.value);
    Ok(BinningResult {
        raw: auc(&raw)?,
        raw_binned: auc(&quantize_256(&raw)?)?,
        equalized: auc(&eq)?,
        equalized_binned: auc(&quantize_256(&eq)?)?,
    })
}

/// Monotone distortion applied to the true densities to make saliency maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distortion {
    Identity,
    /// `p^exponent`.
    Power(f64),
}

impl Distortion {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Distortion::Identity => v,
            Distortion::Power(e) => v.powf(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryConfig {
    /// Random mixtures and fixation counts; `fixations_per_stimulus` is the
    /// training set size, and as many fresh fixations are used for scoring.
    pub dataset: DatasetConfig,
    pub shape: GridShape,
    pub distortion: Distortion,
    pub segments_nl: usize,
    pub segments_cb: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            dataset: DatasetConfig {
                stimuli: 20,
                fixations_per_stimulus: 200,
                components: 3,
                center_spread: 0.18,
                min_sigma: 0.04,
                max_sigma: 0.12,
                background: 0.02,
                bandwidth: crate::probabilistic::DEFAULT_BANDWIDTH,
                seed: 11,
            },
            shape: GridShape { height: 64, width: 64 },
            distortion: Distortion::Power(1.0 / 3.0),
            segments_nl: crate::probabilistic::DEFAULT_NONLINEARITY_SEGMENTS,
            segments_cb: crate::probabilistic::DEFAULT_CENTERBIAS_SEGMENTS,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Information gains over a uniform baseline in bits per held-out fixation.
#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub ig_true: f64,
    /// The distorted maps normalized directly.
    pub ig_distorted: f64,
    pub ig_fitted: f64,
    pub fit: ProbabilisticModelFit,
    pub report: FitReport,
}

impl RecoveryResult {
    /// Share of the `true - distorted` gap closed by the fit.
    pub fn recovered_fraction(&self) -> f64 {
        (self.ig_fitted - self.ig_distorted) / (self.ig_true - self.ig_distorted)
    }
}

/// Fits the conversion on distorted true densities and scores true,
/// distorted and fitted densities on fresh fixations.
pub fn run_conversion_recovery(config: &RecoveryConfig) -> Result<RecoveryResult> {
    let (densities, train) = synthetic_dataset(&config.dataset, config.shape)?;
    let maps = densities
        .iter()
        .map(|d| SaliencyGrid::new(d.as_grid().map(|v| config.distortion.apply(v))))
        .collect::<Result<Vec<_>>>()?;
    let fitted = fit_conversion_with_report(&maps, &train, config.segments_nl, config.segments_cb, &config.optimizer)?;

    let baseline = DensityGrid::uniform(config.shape);
    let (mut ig_true, mut ig_distorted, mut ig_fitted, mut count) = (0.0, 0.0, 0.0, 0usize);
    for (i, (d, m)) in densities.iter().zip(&maps).enumerate() {
        let n = config.dataset.fixations_per_stimulus;
        if n == 0 {
            continue;
        }
        let held_out = sample_fixations(d, n, &mut stream_rng(config.dataset.seed, RECOVERY_DOMAIN, i as u64));
        let weight = n as f64;
        ig_true += weight * metrics::ig(d, &held_out, &baseline)?.value;
        ig_distorted += weight * metrics::ig(&normalize_to_distribution(m)?, &held_out, &baseline)?.value;
        ig_fitted += weight * metrics::ig(&apply_fit(&fitted.fit, m)?, &held_out, &baseline)?.value;
        count += n;
    }
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    let c = count as f64;
    Ok(RecoveryResult {
        ig_true: ig_true / c,
        ig_distorted: ig_distorted / c,
        ig_fitted: ig_fitted / c,
        fit: fitted.fit,
        report: fitted.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::density_from_grid;
    use crate::synthetic::SyntheticConfig;

    fn fast_sgd() -> SgdConfig {
        SgdConfig { validation_samples: 200, validation_interval: 200, ..Default::default() }
    }

    fn small_density() -> DensityGrid {
        let s = GridShape::new(16, 16).unwrap();
        let v = (0..s.len())
            .map(|i| {
                let (r, c) = s.position(i);
                let (y, x) = (r as f64 - 5.0, c as f64 - 9.0);
                (-(x * x + y * y) / 6.0).exp() + 0.4 * (-((r as f64 - 12.0).powi(2) + (c as f64 - 3.0).powi(2)) / 4.0).exp() + 0.01
            })
            .collect();
        density_from_grid(Grid::new(s, v).unwrap()).unwrap()
    }

    #[test]
    fn mean_stderr_matches_hand_computation() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn uniform_density_gives_constant_maps() {
        let s = GridShape::new(8, 8).unwrap();
        let u = DensityGrid::uniform(s);
        let config = ExperimentConfig { n_sets: 20, n_fix: 10, sgd: fast_sgd(), ..Default::default() };
        let m = run_crossmetric_experiment(&u, &u, &config).unwrap();
        let auc = m.metrics.iter().position(|&x| x == MetricId::Auc).unwrap();
        let nss = m.metrics.iter().position(|&x| x == MetricId::Nss).unwrap();
        for r in 0..m.map_types.len() {
            assert_eq!(m.table.mean(r, auc), Some(0.5));
            assert_eq!(m.table.mean(r, nss), None);
        }
    }

    #[test]
    fn crossmetric_shares_winners_and_is_deterministic() {
        let d = small_density();
        let cb = density_from_grid(Grid::new(d.shape(), (0..256).map(|i| 1.0 + (i % 16) as f64 / 8.0).collect()).unwrap()).unwrap();
        let config = ExperimentConfig { n_sets: 60, n_fix: 30, sigma: Some(1.5), sgd: fast_sgd(), ..Default::default() };
        let a = run_crossmetric_experiment(&d, &cb, &config).unwrap();
        let b = run_crossmetric_experiment(&d, &cb, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.winner(MetricId::Nss), a.winner(MetricId::Ig));
        assert_eq!(a.winner(MetricId::Nss), Some(MapType::NssIg));
        // AUC and NSS/IG maps rank pixels identically.
        let auc = a.dominance().into_iter().find(|c| c.metric == MetricId::Auc).unwrap();
        let vs_nss = auc.comparisons.iter().find(|(t, _)| *t == MapType::NssIg).unwrap();
        assert_eq!(vs_nss.1.verdict, Verdict::Tie);
        assert_eq!(a.scores().len(), 5);
        assert_eq!(a.stderr()[0].len(), 7);
    }

    #[test]
    fn cc_approximation_small_run() {
        let d = small_density();
        let config = CcApproxConfig {
            n_sets: 300,
            n_fix_list: vec![1, 20],
            sigma_list: vec![0.3, 2.0],
            seed: 4,
            boundary: Boundary::Reflect,
        };
        let cells = run_cc_approximation_experiment(&d, &config).unwrap();
        assert_eq!(cells.len(), 4);
        // With a mass-preserving blur the two mean maps are proportional.
        for c in &cells {
            assert!(c.difference().abs() < 1e-12, "{c:?}");
        }
        assert!(cells[0].plain < cells[3].plain);
        assert_eq!(cells, run_cc_approximation_experiment(&d, &config).unwrap());
        let zero = CcApproxConfig { boundary: Boundary::Zero, ..config };
        for c in run_cc_approximation_experiment(&d, &zero).unwrap() {
            assert!(c.difference().abs() < 0.005, "{c:?}");
        }
    }

    #[test]
    fn sim_count_shapes() {
        let d = small_density();
        let config = ExperimentConfig { n_sets: 30, sigma: Some(1.0), sgd: fast_sgd(), ..Default::default() };
        let r = run_sim_count_experiment(&d, &[5], &config).unwrap();
        assert_eq!(r.table.rows, vec!["SIM-5", "CC"]);
        assert_eq!(r.table.columns.len(), 1);
        assert!(run_sim_count_experiment(&d, &[], &config).is_err());
    }

    #[test]
    fn binning_small_run() {
        let d = SyntheticConfig::builtin().density.density().unwrap();
        let f = sample_fixations(&d, 5000, &mut stream_rng(1, 2, 3));
        let r = run_binning_experiment(&d, &f).unwrap();
        assert!((r.raw - r.equalized).abs() < 1e-12);
        assert!(r.equalized_delta() < 5e-5, "{r:?}");
        assert!(r.raw_delta() >= r.equalized_delta());
    }

    #[test]
    fn recovery_with_identity_maps() {
        let mut config = RecoveryConfig { distortion: Distortion::Identity, ..Default::default() };
        config.dataset.stimuli = 8;
        config.shape = GridShape::new(32, 32).unwrap();
        let r = run_conversion_recovery(&config).unwrap();
        assert!((r.ig_fitted - r.ig_true).abs() < 0.05, "{r:?}");
    }
}
