//! `salmap`: derive metric-specific saliency maps, score maps against
//! fixations and run the sampling experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use salmap_core::derive::{derive_map, DeriveConfig, SgdConfig};
use salmap_core::error::{Error, ErrorKind, Result};
use salmap_core::harness::{
    self, run_binning_experiment, run_cc_approximation_experiment, run_conversion_recovery,
    run_crossmetric_experiment, run_sim_count_experiment, CcApproxConfig, Distortion,
    ExperimentConfig, RecoveryConfig, Verdict,
};
use salmap_core::io::{self, format_number};
use salmap_core::metrics::{self, empirical_saliency_map};
use salmap_core::probabilistic::{
    apply_fit, crossvalidation_scores, fit_conversion_with_report, fit_kde_centerbias,
    OptimizerConfig, DEFAULT_BANDWIDTH, DEFAULT_CENTERBIAS_SEGMENTS,
    DEFAULT_NONLINEARITY_SEGMENTS,
};
use salmap_core::sampling::{sample_fixations, stream_rng};
use salmap_core::synthetic::SyntheticConfig;
use salmap_core::{
    normalize_to_distribution, Boundary, DensityGrid, Fixation, FixationDataset, FixationSet,
    GridShape, MetricId, MetricScore, SaliencyGrid, Stimulus,
};

const SAMPLE_DOMAIN: u64 = 0x636c_6973;
const BINNING_DOMAIN: u64 = 0x636c_6962;

#[derive(Parser)]
#[command(name = "salmap", version, about = "Metric-specific saliency maps and saliency benchmarking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the saliency map that maximizes one metric from a density.
    Derive(DeriveArgs),
    /// Score saliency maps against a fixation table.
    Evaluate(EvaluateArgs),
    /// Fit a saliency-map-to-density conversion on a dataset.
    Convert(ConvertArgs),
    /// Turn a saliency map into a density with a fitted conversion.
    ApplyFit(ApplyFitArgs),
    /// Estimate a center bias density from a fixation table.
    Centerbias(CenterbiasArgs),
    /// Score every derived map under every metric on sampled fixations.
    Benchmark(BenchmarkArgs),
    /// Approximation and quantization studies.
    #[command(subcommand)]
    Experiment(Experiment),
    /// Sample fixations from a density.
    Sample(SampleArgs),
    /// Render a density as four areas of equal probability mass.
    Visualize(VisualizeArgs),
    /// Write the bundled synthetic density and its center bias.
    Synthetic(SyntheticArgs),
}

#[derive(Subcommand)]
enum Experiment {
    /// Mean empirical map vs mean normalized empirical map as CC predictions.
    CcApprox(CcApproxArgs),
    /// SIM maps derived for different fixation counts, scored at each count.
    SimCount(SimCountArgs),
    /// AUC before and after 256-level quantization.
    Binning(BinningArgs),
    /// Conversion fit on monotonically distorted synthetic densities.
    Recovery(RecoveryArgs),
}

#[derive(Args)]
struct SgdArgs {
    /// Initial SIM learning rate, relative to a 1024x768 grid.
    #[arg(long, default_value_t = SgdConfig::default().initial_lr)]
    sgd_lr: f64,
    #[arg(long, default_value_t = SgdConfig::default().batch_size)]
    sgd_batch: usize,
    /// Training samples between validation runs (also the validation size).
    #[arg(long, default_value_t = SgdConfig::default().validation_interval)]
    sgd_interval: usize,
}

impl SgdArgs {
    fn config(&self, seed: u64) -> SgdConfig {
        SgdConfig {
            initial_lr: self.sgd_lr,
            min_lr: self.sgd_lr * (SgdConfig::default().min_lr / SgdConfig::default().initial_lr),
            batch_size: self.sgd_batch,
            validation_interval: self.sgd_interval,
            validation_samples: self.sgd_interval,
            seed,
            ..SgdConfig::default()
        }
    }
}

#[derive(Args)]
struct DeriveArgs {
    #[arg(long)]
    density: PathBuf,
    #[arg(long)]
    metric: MetricId,
    /// Nonfixation density, required for sAUC.
    #[arg(long)]
    centerbias: Option<PathBuf>,
    /// Empirical saliency map width in pixels.
    #[arg(long, default_value_t = 35.0)]
    sigma: f64,
    #[arg(long, default_value_t = 100)]
    fixations_per_image: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    sgd: SgdArgs,
    /// `.png` writes an 8-bit image, `.sald` a density, anything else a raw map.
    #[arg(long)]
    out: PathBuf,
    /// Skip histogram equalization before PNG export.
    #[arg(long)]
    no_equalize: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// A map file used for every stimulus, or a directory of `<stimulus_id>.{sald,salm,png}`.
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    fixations: PathBuf,
    #[arg(long)]
    stimuli: PathBuf,
    #[arg(long)]
    metric: MetricId,
    /// IG baseline density; uniform when absent.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long, default_value_t = 35.0)]
    empirical_sigma: f64,
    /// Results CSV; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConvertArgs {
    /// Directory of `<stimulus_id>.{sald,salm,png}` saliency maps.
    #[arg(long)]
    maps: PathBuf,
    #[arg(long)]
    fixations: PathBuf,
    #[arg(long)]
    stimuli: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_NONLINEARITY_SEGMENTS)]
    segments_nl: usize,
    #[arg(long, default_value_t = DEFAULT_CENTERBIAS_SEGMENTS)]
    segments_cb: usize,
}

#[derive(Args)]
struct ApplyFitArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CenterbiasArgs {
    #[arg(long)]
    fixations: PathBuf,
    #[arg(long)]
    stimuli: PathBuf,
    #[arg(long, conflicts_with = "crossvalidate")]
    bandwidth: Option<f64>,
    /// Candidate bandwidths; the one with the best leave-one-stimulus-out likelihood is used.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    crossvalidate: Option<Vec<f64>>,
    /// Output grid as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_size)]
    size: GridShape,
    #[arg(long)]
    out: PathBuf,
    /// Leave this stimulus's fixations out of the estimate.
    #[arg(long)]
    exclude: Option<String>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long)]
    density: PathBuf,
    #[arg(long)]
    centerbias: PathBuf,
    #[arg(long, default_value_t = 1000)]
    n_sets: usize,
    #[arg(long, default_value_t = 100)]
    n_fix: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Empirical map width in pixels; defaults to height * 35 / 768.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    n_nonfixations: usize,
    #[command(flatten)]
    sgd: SgdArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Reflect,
    Zero,
}

#[derive(Args)]
struct CcApproxArgs {
    #[arg(long)]
    density: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n_sets: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 10, 100])]
    n_fix: Vec<usize>,
    /// Blur widths in pixels; defaults to 1/4, 1 and 4 times height * 35 / 768.
    #[arg(long, value_delimiter = ',')]
    sigma: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "reflect")]
    boundary: BoundaryArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimCountArgs {
    #[arg(long)]
    density: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 10, 100, 1000])]
    counts: Vec<usize>,
    #[arg(long, default_value_t = 1000)]
    n_sets: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    sigma: Option<f64>,
    #[command(flatten)]
    sgd: SgdArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BinningArgs {
    #[arg(long)]
    density: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    n_fix: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RecoveryArgs {
    /// Exponent of the distortion applied to the true densities.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    exponent: f64,
    #[arg(long, default_value_t = 20)]
    stimuli: usize,
    #[arg(long, default_value_t = 200)]
    fixations: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long, default_value_t = 11)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    density: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "sample")]
    stimulus_id: String,
    #[arg(long)]
    out: PathBuf,
    /// Also write a one-row stimulus index.
    #[arg(long)]
    stimuli_out: Option<PathBuf>,
}

#[derive(Args)]
struct VisualizeArgs {
    #[arg(long)]
    density: PathBuf,
    /// Fixation table; every row is counted on the density's grid.
    #[arg(long)]
    fixations: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SyntheticArgs {
    /// TOML configuration; the bundled one when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_size(text: &str) -> std::result::Result<GridShape, String> {
    let (w, h) = text.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let width = w.trim().parse().map_err(|_| format!("bad width {w:?}"))?;
    let height = h.trim().parse().map_err(|_| format!("bad height {h:?}"))?;
    GridShape::new(height, width).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e.kind() {
                ErrorKind::Numeric => ExitCode::from(3),
                ErrorKind::Contract | ErrorKind::Io => ExitCode::from(2),
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Derive(a) => derive(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Convert(a) => convert(a),
        Command::ApplyFit(a) => {
            let fit = io::load_fit(&a.fit)?;
            io::save_density(&a.out, &apply_fit(&fit, &io::load_map(&a.map)?)?)
        }
        Command::Centerbias(a) => centerbias(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Experiment(Experiment::CcApprox(a)) => cc_approx(a),
        Command::Experiment(Experiment::SimCount(a)) => sim_count(a),
        Command::Experiment(Experiment::Binning(a)) => binning(a),
        Command::Experiment(Experiment::Recovery(a)) => recovery(a),
        Command::Sample(a) => {
            let density = io::load_density(&a.density)?;
            let mut set = sample_fixations(&density, a.n, &mut stream_rng(a.seed, SAMPLE_DOMAIN, 0));
            set.stimulus_id = a.stimulus_id.clone();
            io::save_fixations(&a.out, std::slice::from_ref(&set))?;
            if let Some(path) = a.stimuli_out {
                io::save_stimuli(&path, &[Stimulus { id: a.stimulus_id, shape: density.shape() }])?;
            }
            Ok(())
        }
        Command::Visualize(a) => {
            let density = io::load_density(&a.density)?;
            let fixations = match &a.fixations {
                Some(p) => Some(io::load_fixations_on_grid(p, density.shape())?),
                None => None,
            };
            let (png, report) = io::render_density_quartiles(&density, fixations.as_ref())?;
            io::write_atomic(&a.out, &png)?;
            print!("{}", io::quartile_summary(&report));
            Ok(())
        }
        Command::Synthetic(a) => {
            let config = match &a.config {
                Some(p) => SyntheticConfig::load(p)?,
                None => SyntheticConfig::builtin(),
            };
            std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::Io { path: a.out_dir.clone(), source: e })?;
            io::save_density(&a.out_dir.join("density.sald"), &config.density.density()?)?;
            io::save_density(&a.out_dir.join("centerbias.sald"), &config.centerbias_density()?)
        }
    }
}

fn derive(a: DeriveArgs) -> Result<()> {
    let density = io::load_density(&a.density)?;
    let centerbias = a.centerbias.as_deref().map(io::load_density).transpose()?;
    let config = DeriveConfig {
        empirical_sigma: a.sigma,
        fixations_per_image: a.fixations_per_image,
        sgd: a.sgd.config(a.seed),
        centerbias,
    };
    let map = derive_map(&density, a.metric, &config)?;
    io::save_map_by_extension(&a.out, &map, !a.no_equalize)
}

/// Finds `<id>.sald`, `<id>.salm` or `<id>.png` in `dir`.
fn map_in_dir(dir: &Path, id: &str) -> Result<SaliencyGrid> {
    for ext in ["sald", "salm", "png"] {
        let path = dir.join(format!("{id}.{ext}"));
        if path.is_file() {
            return io::load_map(&path);
        }
    }
    Err(Error::Io {
        path: dir.join(id),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "no .sald, .salm or .png map for this stimulus"),
    })
}

fn check_shape(expected: GridShape, found: GridShape) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { expected, found });
    }
    Ok(())
}

/// Fixations of all other stimuli, rescaled onto `shape`.
fn shuffled_nonfixations(dataset: &FixationDataset, id: &str, shape: GridShape) -> FixationSet {
    let points = dataset
        .iter_except(Some(id))
        .flat_map(|(s, set)| {
            set.iter().map(move |f| {
                let scale = |v: usize, from: usize, to: usize| {
                    (((v as f64 + 0.5) * to as f64 / from as f64) as usize).min(to - 1)
                };
                Fixation::new(
                    scale(f.row, s.shape.height, shape.height),
                    scale(f.col, s.shape.width, shape.width),
                )
            })
        })
        .collect();
    FixationSet::new(id, points)
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let stimuli = io::load_stimuli(&a.stimuli)?;
    let dataset = io::load_fixations(&a.fixations, &stimuli)?;
    let shared_map = if a.map.is_dir() { None } else { Some(io::load_map(&a.map)?) };
    let baseline = a.baseline.as_deref().map(io::load_density).transpose()?;
    let mut scores: Vec<(String, MetricScore)> = Vec::new();
    for (stimulus, fixations) in dataset.iter() {
        if fixations.is_empty() {
            eprintln!("skipping {}: no fixations", stimulus.id);
            continue;
        }
        let shape = stimulus.shape;
        let map = match &shared_map {
            Some(m) => m.clone(),
            None => map_in_dir(&a.map, &stimulus.id)?,
        };
        check_shape(shape, map.shape())?;
        let score = match a.metric {
            MetricId::Auc => metrics::auc(&map, fixations)?,
            MetricId::SAuc => {
                let nonfix = shuffled_nonfixations(&dataset, &stimulus.id, shape);
                metrics::sauc(&map, fixations, &nonfix)?
            }
            MetricId::Nss => metrics::nss(&map, fixations)?,
            MetricId::Ig => {
                let baseline = match &baseline {
                    Some(b) => b.clone(),
                    None => DensityGrid::uniform(shape),
                };
                metrics::ig(&normalize_to_distribution(&map)?, fixations, &baseline)?
            }
            MetricId::Cc => metrics::cc(&map, &empirical_saliency_map(fixations, shape, a.empirical_sigma)?)?,
            MetricId::KlDiv => {
                metrics::kldiv(&empirical_saliency_map(fixations, shape, a.empirical_sigma)?, &map)?
            }
            MetricId::Sim => metrics::sim(&map, &empirical_saliency_map(fixations, shape, a.empirical_sigma)?)?,
        };
        scores.push((stimulus.id.clone(), score));
    }
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    match &a.out {
        Some(path) => io::save_results(path, &scores),
        None => {
            println!("stimulus_id,metric,score");
            for (id, s) in &scores {
                println!("{id},{},{}", s.metric, format_number(s.value));
            }
            let mean = scores.iter().map(|(_, s)| s.value).sum::<f64>() / scores.len() as f64;
            println!("mean,{},{}", a.metric, format_number(mean));
            Ok(())
        }
    }
}

fn convert(a: ConvertArgs) -> Result<()> {
    let stimuli = io::load_stimuli(&a.stimuli)?;
    let dataset = io::load_fixations(&a.fixations, &stimuli)?;
    let maps = stimuli.iter().map(|s| map_in_dir(&a.maps, &s.id)).collect::<Result<Vec<_>>>()?;
    let result = fit_conversion_with_report(&maps, &dataset, a.segments_nl, a.segments_cb, &OptimizerConfig::default())?;
    let r = &result.report;
    let n = dataset.total_fixations().max(1) as f64;
    eprintln!(
        "{} iterations{}, log-likelihood per fixation {:.6} -> {:.6} nats",
        r.iterations,
        if r.converged { "" } else { " (not converged)" },
        r.initial_log_likelihood / n,
        r.log_likelihood / n,
    );
    io::save_fit(&a.out, &result.fit)
}

fn centerbias(a: CenterbiasArgs) -> Result<()> {
    let stimuli = io::load_stimuli(&a.stimuli)?;
    let dataset = io::load_fixations(&a.fixations, &stimuli)?;
    let bandwidth = match &a.crossvalidate {
        Some(candidates) => {
            let scores = crossvalidation_scores(&dataset, candidates)?;
            let mut best = 0;
            for (i, (b, s)) in candidates.iter().zip(&scores).enumerate() {
                eprintln!("bandwidth {b}: {s:.6} nats per fixation");
                if *s > scores[best] {
                    best = i;
                }
            }
            eprintln!("selected bandwidth {}", candidates[best]);
            candidates[best]
        }
        None => a.bandwidth.unwrap_or(DEFAULT_BANDWIDTH),
    };
    let kde = fit_kde_centerbias(&dataset, bandwidth)?;
    io::save_density(&a.out, &kde.density_for_size(a.size, a.exclude.as_deref())?)
}

fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let density = io::load_density(&a.density)?;
    let centerbias = io::load_density(&a.centerbias)?;
    let config = ExperimentConfig {
        n_sets: a.n_sets,
        n_fix: a.n_fix,
        seed: a.seed,
        sigma: a.sigma,
        n_nonfixations: a.n_nonfixations,
        sgd: a.sgd.config(a.seed),
    };
    let matrix = run_crossmetric_experiment(&density, &centerbias, &config)?;
    io::save_table(&a.out, &["map", "metric", "mean", "stderr", "n"], &matrix.table.to_rows())?;
    for column in matrix.dominance() {
        let verdicts: Vec<String> = column
            .comparisons
            .iter()
            .map(|(t, c)| match c.verdict {
                Verdict::Missing => format!("{}: n/a", t.label()),
                Verdict::Tie => format!("{}: tie", t.label()),
                _ => format!("{}: {:+.5} ({:.5})", t.label(), c.margin, c.stderr),
            })
            .collect();
        println!(
            "{:<6} {} map {} | {}",
            column.metric.name(),
            column.matched.label(),
            if column.holds() { "best" } else { "NOT best" },
            verdicts.join(", ")
        );
    }
    Ok(())
}

fn cc_approx(a: CcApproxArgs) -> Result<()> {
    let density = io::load_density(&a.density)?;
    let sigma_list = if a.sigma.is_empty() {
        let s = harness::scaled_sigma(density.shape());
        vec![s / 4.0, s, 4.0 * s]
    } else {
        a.sigma
    };
    let config = CcApproxConfig {
        n_sets: a.n_sets,
        n_fix_list: a.n_fix,
        sigma_list,
        seed: a.seed,
        boundary: match a.boundary {
            BoundaryArg::Reflect => Boundary::Reflect,
            BoundaryArg::Zero => Boundary::Zero,
        },
    };
    let cells = run_cc_approximation_experiment(&density, &config)?;
    let rows: Vec<Vec<Option<String>>> = cells
        .iter()
        .map(|c| {
            [c.n_fix as f64, c.sigma, c.plain, c.normalized, c.difference(), c.plain_stderr, c.normalized_stderr, c.difference_stderr]
                .iter()
                .enumerate()
                .map(|(i, &v)| Some(if i == 0 { c.n_fix.to_string() } else { format_number(v) }))
                .collect()
        })
        .collect();
    io::save_table(
        &a.out,
        &["n_fix", "sigma", "cc_plain", "cc_normalized", "difference", "plain_stderr", "normalized_stderr", "difference_stderr"],
        &rows,
    )
}

fn sim_count(a: SimCountArgs) -> Result<()> {
    let density = io::load_density(&a.density)?;
    let config = ExperimentConfig {
        n_sets: a.n_sets,
        seed: a.seed,
        sigma: a.sigma,
        sgd: a.sgd.config(a.seed),
        ..ExperimentConfig::default()
    };
    let result = run_sim_count_experiment(&density, &a.counts, &config)?;
    io::save_table(&a.out, &["map", "eval_count", "mean", "stderr", "n"], &result.table.to_rows())
}

fn binning(a: BinningArgs) -> Result<()> {
    let density = io::load_density(&a.density)?;
    let fixations = sample_fixations(&density, a.n_fix, &mut stream_rng(a.seed, BINNING_DOMAIN, 0));
    let r = run_binning_experiment(&density, &fixations)?;
    let row = |name: &str, unbinned: f64, binned: f64| {
        vec![Some(name.to_string()), Some(format_number(unbinned)), Some(format_number(binned)), Some(format_number(binned - unbinned))]
    };
    io::save_table(
        &a.out,
        &["map", "auc", "auc_binned", "difference"],
        &[row("density", r.raw, r.raw_binned), row("equalized", r.equalized, r.equalized_binned)],
    )
}

fn recovery(a: RecoveryArgs) -> Result<()> {
    let mut config = RecoveryConfig {
        distortion: if a.exponent == 1.0 { Distortion::Identity } else { Distortion::Power(a.exponent) },
        shape: GridShape::new(a.size, a.size)?,
        ..RecoveryConfig::default()
    };
    config.dataset.stimuli = a.stimuli;
    config.dataset.fixations_per_stimulus = a.fixations;
    config.dataset.seed = a.seed;
    let r = run_conversion_recovery(&config)?;
    let rows: Vec<Vec<Option<String>>> = [
        ("ig_true", r.ig_true),
        ("ig_distorted", r.ig_distorted),
        ("ig_fitted", r.ig_fitted),
        ("recovered_fraction", r.recovered_fraction()),
        ("alpha", r.fit.alpha),
    ]
    .iter()
    .map(|(k, v)| vec![Some(k.to_string()), Some(format_number(*v))])
    .collect();
    io::save_table(&a.out, &["quantity", "value"], &rows)
}
