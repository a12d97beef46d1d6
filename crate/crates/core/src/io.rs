//! File formats and image export.
//!
//! * Grid files: 4 magic bytes (`SALD` for densities, `SALM` for arbitrary
//!   saliency maps), then little-endian `u32` version, height and width and
//!   `height * width` little-endian `f64` values in row-major order.
//! * Fixations: CSV `stimulus_id,x,y` with `x` the column and `y` the row.
//! * Stimuli: CSV `stimulus_id,width,height`.
//! * Results: CSV `stimulus_id,metric,score`.
//! * Conversion fits: a versioned line-based text format.
//!
//! Every writer goes through a temporary file in the target directory that is
//! renamed into place.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fixations::{Fixation, FixationDataset, FixationSet, Stimulus};
use crate::grid::{
    equalize, min_max, DensityGrid, Grid, GridShape, SaliencyGrid, DENSITY_SUM_TOLERANCE,
};
use crate::metrics::MetricScore;
use crate::probabilistic::{PiecewiseLinearFn, ProbabilisticModelFit};

pub const DENSITY_MAGIC: &[u8; 4] = b"SALD";
pub const MAP_MAGIC: &[u8; 4] = b"SALM";
pub const GRID_FORMAT_VERSION: u32 = 1;
pub const FIT_FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Writes `bytes` to a temporary sibling of `path` and renames it over
/// `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn encode_grid(magic: &[u8; 4], grid: &Grid) -> Vec<u8> {
    let shape = grid.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * shape.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&GRID_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(shape.height as u32).to_le_bytes());
    out.extend_from_slice(&(shape.width as u32).to_le_bytes());
    for v in grid.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a grid file, returning its magic and the grid.
fn decode_grid(path: &Path, bytes: &[u8]) -> Result<([u8; 4], Grid)> {
    let err = |message: &str| Error::format(path, 0, message);
    if bytes.len() < HEADER_LEN {
        return Err(err("file too short for a grid header"));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != DENSITY_MAGIC && &magic != MAP_MAGIC {
        return Err(err("missing SALD/SALM magic bytes"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let version = word(4);
    if version != GRID_FORMAT_VERSION {
        return Err(err(&format!("unsupported grid format version {version}")));
    }
    let (height, width) = (word(8) as usize, word(12) as usize);
    let shape = GridShape::new(height, width).map_err(|_| err("grid has a zero dimension"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 8 * shape.len() {
        return Err(err(&format!(
            "payload has {} bytes, {shape} grid needs {}",
            payload.len(),
            8 * shape.len()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((magic, Grid::new(shape, values)?))
}

pub fn save_density(path: &Path, density: &DensityGrid) -> Result<()> {
    write_atomic(path, &encode_grid(DENSITY_MAGIC, density.as_grid()))
}

/// Loads a density file. The values must already be a valid density; they
/// are not renormalized.
pub fn load_density(path: &Path) -> Result<DensityGrid> {
    let (magic, grid) = decode_grid(path, &read_file(path)?)?;
    if &magic != DENSITY_MAGIC {
        return Err(Error::format(path, 0, "expected a density (SALD) file"));
    }
    let invariant = |message: String| Error::invariant(path, 0, message);
    if let Some(i) = grid.values().iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(invariant(format!("pixel {i} is negative or not finite")));
    }
    let sum = grid.sum();
    if (sum - 1.0).abs() > DENSITY_SUM_TOLERANCE {
        return Err(invariant(format!("density sums to {sum}, not 1")));
    }
    DensityGrid::new(grid)
}

pub fn save_map(path: &Path, map: &SaliencyGrid) -> Result<()> {
    write_atomic(path, &encode_grid(MAP_MAGIC, map.as_grid()))
}

/// Loads a saliency map from a `SALM` or `SALD` file, or from an 8-bit
/// grayscale PNG (`.png`, values 0..255).
pub fn load_map(path: &Path) -> Result<SaliencyGrid> {
    if has_extension(path, "png") {
        return load_png8(path);
    }
    let (_, grid) = decode_grid(path, &read_file(path)?)?;
    SaliencyGrid::new(grid).map_err(|e| Error::invariant(path, 0, e.to_string()))
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Saves `map` by extension: `.png` exports 8 bits (equalizing first if
/// asked), `.sald` requires a density, anything else is written as `SALM`.
pub fn save_map_by_extension(path: &Path, map: &SaliencyGrid, equalize_png: bool) -> Result<()> {
    if has_extension(path, "png") {
        export_png8(map, path, equalize_png)
    } else if has_extension(path, "sald") {
        save_density(path, &DensityGrid::new(map.as_grid().clone())?)
    } else {
        save_map(path, map)
    }
}

/// Replaces every value by its bin index (0..=255) over 256 equidistant bins
/// spanning `[min, max]`. Constant maps become all zeros.
pub fn quantize_256(map: &SaliencyGrid) -> Result<SaliencyGrid> {
    let (lo, hi) = map.min_max();
    let range = hi - lo;
    let bins = map.as_grid().map(|v| {
        if range > 0.0 {
            ((v - lo) / range * 256.0).floor().clamp(0.0, 255.0)
        } else {
            0.0
        }
    });
    SaliencyGrid::new(bins)
}

/// 8-bit gray levels for `map`: `[min, max]` mapped linearly onto 0..=255
/// with round-half-up; constant maps give 128.
pub fn to_gray8(map: &SaliencyGrid) -> Vec<u8> {
    let (lo, hi) = map.min_max();
    let range = hi - lo;
    map.values()
        .iter()
        .map(|&v| {
            if range > 0.0 {
                ((v - lo) / range * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
            } else {
                128
            }
        })
        .collect()
}

fn encode_png(width: usize, height: usize, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, width as u32, height as u32);
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::InvalidConfig(format!("png encoding failed: {e}")))?;
        writer
            .write_image_data(data)
            .map_err(|e| Error::InvalidConfig(format!("png encoding failed: {e}")))?;
    }
    Ok(out)
}

/// Writes an 8-bit grayscale PNG, optionally equalizing the map first.
pub fn export_png8(map: &SaliencyGrid, path: &Path, equalize_first: bool) -> Result<()> {
    let equalized;
    let map = if equalize_first {
        equalized = equalize(map)?;
        &equalized
    } else {
        map
    };
    let shape = map.shape();
    let bytes = encode_png(shape.width, shape.height, png::ColorType::Grayscale, &to_gray8(map))?;
    write_atomic(path, &bytes)
}

/// Reads an 8-bit grayscale PNG as a map with values 0..=255.
pub fn load_png8(path: &Path) -> Result<SaliencyGrid> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let format = |m: String| Error::format(path, 0, m);
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| format(e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| format("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| format(e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
        return Err(format("expected an 8-bit grayscale PNG".into()));
    }
    let shape = GridShape::new(info.height as usize, info.width as usize)?;
    let mut values = Vec::with_capacity(shape.len());
    for row in buf[..info.buffer_size()].chunks_exact(info.line_size).take(shape.height) {
        values.extend(row[..shape.width].iter().map(|&b| b as f64));
    }
    SaliencyGrid::new(Grid::new(shape, values)?)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::format(path, line, format!("{kind:?}")),
    }
}

fn check_header(path: &Path, reader: &mut csv::Reader<fs::File>, expected: &[&str]) -> Result<()> {
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::format(
            path,
            1,
            format!("expected header {:?}, found {:?}", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(())
}

/// Reads the records of a three-column CSV with the given header, yielding
/// `(line, fields)`.
fn read_rows(path: &Path, header: &[&str]) -> Result<Vec<(usize, [String; 3])>> {
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, header)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 3 {
            return Err(Error::format(path, line, format!("expected 3 fields, found {}", record.len())));
        }
        rows.push((line, [record[0].to_string(), record[1].to_string(), record[2].to_string()]));
    }
    Ok(rows)
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, name: &str, text: &str) -> Result<T> {
    text.parse()
        .map_err(|_| Error::format(path, line, format!("{name} {text:?} is not a valid number")))
}

pub fn load_stimuli(path: &Path) -> Result<Vec<Stimulus>> {
    let mut stimuli: Vec<Stimulus> = Vec::new();
    for (line, [id, w, h]) in read_rows(path, &["stimulus_id", "width", "height"])? {
        let width: usize = parse_field(path, line, "width", &w)?;
        let height: usize = parse_field(path, line, "height", &h)?;
        if id.is_empty() {
            return Err(Error::format(path, line, "empty stimulus id"));
        }
        if width == 0 || height == 0 {
            return Err(Error::invariant(path, line, format!("stimulus {id:?} has size {width}x{height}")));
        }
        if stimuli.iter().any(|s| s.id == id) {
            return Err(Error::invariant(path, line, format!("duplicate stimulus id {id:?}")));
        }
        stimuli.push(Stimulus { id, shape: GridShape { height, width } });
    }
    Ok(stimuli)
}

/// Reads a fixation table against a stimulus index. Stimuli without rows get
/// empty fixation sets.
pub fn load_fixations(path: &Path, stimuli: &[Stimulus]) -> Result<FixationDataset> {
    let position: HashMap<&str, usize> =
        stimuli.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let mut points: Vec<Vec<Fixation>> = vec![Vec::new(); stimuli.len()];
    for (line, [id, x, y]) in read_rows(path, &["stimulus_id", "x", "y"])? {
        let col: usize = parse_field(path, line, "x", &x)?;
        let row: usize = parse_field(path, line, "y", &y)?;
        let Some(&i) = position.get(id.as_str()) else {
            return Err(Error::invariant(path, line, format!("unknown stimulus {id:?}")));
        };
        let shape = stimuli[i].shape;
        if !shape.contains(row, col) {
            return Err(Error::invariant(
                path,
                line,
                format!("fixation x={col}, y={row} outside {id:?} ({}x{})", shape.width, shape.height),
            ));
        }
        points[i].push(Fixation { row, col });
    }
    let sets = stimuli
        .iter()
        .zip(points)
        .map(|(s, p)| FixationSet::new(s.id.clone(), p))
        .collect();
    FixationDataset::new(stimuli.to_vec(), sets)
}

/// Reads every row of a fixation table onto one grid, ignoring stimulus ids.
pub fn load_fixations_on_grid(path: &Path, shape: GridShape) -> Result<FixationSet> {
    let mut points = Vec::new();
    for (line, [_, x, y]) in read_rows(path, &["stimulus_id", "x", "y"])? {
        let col: usize = parse_field(path, line, "x", &x)?;
        let row: usize = parse_field(path, line, "y", &y)?;
        if !shape.contains(row, col) {
            return Err(Error::invariant(path, line, format!("fixation x={col}, y={row} outside {shape}")));
        }
        points.push(Fixation { row, col });
    }
    Ok(FixationSet::new("", points))
}

/// Formats a float with 17 significant digits.
pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::InvalidConfig(format!("csv encoding failed: {e}"));
    writer.write_record(header).map_err(to_err)?;
    for row in rows {
        writer.write_record(&row).map_err(to_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn save_fixations(path: &Path, sets: &[FixationSet]) -> Result<()> {
    let rows = sets.iter().flat_map(|s| {
        s.iter().map(|f| vec![s.stimulus_id.clone(), f.col.to_string(), f.row.to_string()])
    });
    write_csv(path, &["stimulus_id", "x", "y"], rows)
}

pub fn save_stimuli(path: &Path, stimuli: &[Stimulus]) -> Result<()> {
    let rows = stimuli
        .iter()
        .map(|s| vec![s.id.clone(), s.shape.width.to_string(), s.shape.height.to_string()]);
    write_csv(path, &["stimulus_id", "width", "height"], rows)
}

/// Per-stimulus scores followed by a `mean` row.
pub fn save_results(path: &Path, scores: &[(String, MetricScore)]) -> Result<()> {
    let mut rows: Vec<Vec<String>> = scores
        .iter()
        .map(|(id, s)| vec![id.clone(), s.metric.name().to_string(), format_number(s.value)])
        .collect();
    if let Some((_, first)) = scores.first() {
        let mean = scores.iter().map(|(_, s)| s.value).sum::<f64>() / scores.len() as f64;
        rows.push(vec!["mean".into(), first.metric.name().to_string(), format_number(mean)]);
    }
    write_csv(path, &["stimulus_id", "metric", "score"], rows)
}

/// Writes a generic table; `None` cells are left empty.
pub fn save_table(path: &Path, header: &[&str], rows: &[Vec<Option<String>>]) -> Result<()> {
    write_csv(path, header, rows.iter().map(|r| r.iter().map(|c| c.clone().unwrap_or_default()).collect()))
}

pub fn fit_to_string(fit: &ProbabilisticModelFit) -> String {
    let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
    let mut s = String::new();
    writeln!(s, "salmap-fit {FIT_FORMAT_VERSION}").unwrap();
    writeln!(s, "segments_nl {}", fit.nonlinearity.segments()).unwrap();
    writeln!(s, "segments_cb {}", fit.cb_profile.segments()).unwrap();
    writeln!(s, "alpha {:?}", fit.alpha).unwrap();
    writeln!(s, "map_min {:?}", fit.map_min).unwrap();
    writeln!(s, "map_max {:?}", fit.map_max).unwrap();
    writeln!(s, "nonlinearity {}", join(fit.nonlinearity.knots())).unwrap();
    writeln!(s, "cb_profile {}", join(fit.cb_profile.knots())).unwrap();
    s
}

pub fn parse_fit(path: &Path, text: &str) -> Result<ProbabilisticModelFit> {
    let mut fields: HashMap<&str, (usize, &str)> = HashMap::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == format!("salmap-fit {FIT_FORMAT_VERSION}") => {}
        Some((i, l)) => return Err(Error::format(path, i + 1, format!("unsupported header {l:?}"))),
        None => return Err(Error::format(path, 1, "empty fit file")),
    }
    for (i, line) in lines {
        let (key, value) = line.trim().split_once(' ').unwrap_or((line.trim(), ""));
        if fields.insert(key, (i + 1, value.trim())).is_some() {
            return Err(Error::format(path, i + 1, format!("duplicate key {key:?}")));
        }
    }
    let get = |key: &str| fields.get(key).copied().ok_or_else(|| Error::format(path, 0, format!("missing key {key:?}")));
    let number = |key: &str| -> Result<f64> {
        let (line, v) = get(key)?;
        parse_field(path, line, key, v)
    };
    let count = |key: &str| -> Result<usize> {
        let (line, v) = get(key)?;
        parse_field(path, line, key, v)
    };
    let knots = |key: &str, segments: usize| -> Result<Vec<f64>> {
        let (line, v) = get(key)?;
        let values = v
            .split_whitespace()
            .map(|x| parse_field(path, line, key, x))
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != segments + 1 {
            return Err(Error::format(path, line, format!("{key} needs {} knots, found {}", segments + 1, values.len())));
        }
        Ok(values)
    };
    let (segments_nl, segments_cb) = (count("segments_nl")?, count("segments_cb")?);
    let invalid = |key: &str, e: Error| Error::invariant(path, get(key).map_or(0, |g| g.0), e.to_string());
    let nonlinearity = PiecewiseLinearFn::monotone(knots("nonlinearity", segments_nl)?)
        .map_err(|e| invalid("nonlinearity", e))?;
    let cb_profile =
        PiecewiseLinearFn::new(knots("cb_profile", segments_cb)?).map_err(|e| invalid("cb_profile", e))?;
    let fit = ProbabilisticModelFit {
        nonlinearity,
        cb_profile,
        alpha: number("alpha")?,
        map_min: number("map_min")?,
        map_max: number("map_max")?,
    };
    fit.validate().map_err(|e| Error::invariant(path, 0, e.to_string()))?;
    Ok(fit)
}

pub fn save_fit(path: &Path, fit: &ProbabilisticModelFit) -> Result<()> {
    write_atomic(path, fit_to_string(fit).as_bytes())
}

pub fn load_fit(path: &Path) -> Result<ProbabilisticModelFit> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fit(path, &text)
}

/// Equal-mass partition of a density into four areas.
#[derive(Debug, Clone, PartialEq)]
pub struct QuartileReport {
    /// Area of every pixel: 0 holds the highest density, 3 the lowest.
    pub areas: Vec<u8>,
    /// Density of the first (densest) pixel of areas 1, 2 and 3.
    pub thresholds: [f64; 3],
    pub pixel_counts: [usize; 4],
    pub fixation_counts: Option<[usize; 4]>,
    /// Expected fixations per area, `n / 4`.
    pub expected: f64,
    /// Binomial standard deviation `sqrt(n * 1/4 * 3/4)`.
    pub binomial_sd: f64,
}

/// Partitions the pixels (sorted by decreasing density, ties by index) at
/// cumulative masses 1/4, 1/2 and 3/4 and counts fixations per area.
pub fn density_quartiles(density: &DensityGrid, fixations: Option<&FixationSet>) -> Result<QuartileReport> {
    let values = density.values();
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut areas = vec![0u8; values.len()];
    let mut thresholds = [f64::NAN; 3];
    let mut pixel_counts = [0usize; 4];
    let mut cumulative = 0.0;
    for &p in &order {
        let area = [0.25, 0.5, 0.75].iter().filter(|&&t| cumulative >= t - 1e-9).count();
        if area > 0 && thresholds[area - 1].is_nan() {
            thresholds[area - 1] = values[p];
        }
        areas[p] = area as u8;
        pixel_counts[area] += 1;
        cumulative += values[p];
    }
    let fixation_counts = match fixations {
        Some(f) => {
            f.check_bounds(density.shape())?;
            let mut counts = [0usize; 4];
            for i in f.indices(density.shape()) {
                counts[areas[i] as usize] += 1;
            }
            Some(counts)
        }
        None => None,
    };
    let n = fixations.map_or(0, FixationSet::len) as f64;
    Ok(QuartileReport {
        areas,
        thresholds,
        pixel_counts,
        fixation_counts,
        expected: n / 4.0,
        binomial_sd: (n * 0.25 * 0.75).sqrt(),
    })
}

/// Renders the quartile areas as shades of gray (darkest = densest), area
/// boundaries in black and fixations in red, as RGB PNG bytes.
pub fn render_density_quartiles(
    density: &DensityGrid,
    fixations: Option<&FixationSet>,
) -> Result<(Vec<u8>, QuartileReport)> {
    let report = density_quartiles(density, fixations)?;
    let shape = density.shape();
    const SHADES: [u8; 4] = [70, 130, 185, 235];
    let mut rgb = Vec::with_capacity(3 * shape.len());
    for (i, &area) in report.areas.iter().enumerate() {
        let (r, c) = shape.position(i);
        let boundary = [(r + 1, c), (r, c + 1)]
            .iter()
            .any(|&(rr, cc)| shape.contains(rr, cc) && report.areas[shape.index(rr, cc)] != area);
        let v = if boundary { 0 } else { SHADES[area as usize] };
        rgb.extend_from_slice(&[v, v, v]);
    }
    if let Some(f) = fixations {
        for i in f.indices(shape) {
            rgb[3 * i..3 * i + 3].copy_from_slice(&[220, 30, 30]);
        }
    }
    let png = encode_png(shape.width, shape.height, png::ColorType::Rgb, &rgb)?;
    Ok((png, report))
}

/// A human-readable summary of a quartile report.
pub fn quartile_summary(report: &QuartileReport) -> String {
    let mut s = String::from("area,pixels,fixations,expected,binomial_sd\n");
    for a in 0..4 {
        let fix = report.fixation_counts.map_or(String::new(), |c| c[a].to_string());
        writeln!(
            s,
            "{a},{},{fix},{},{}",
            report.pixel_counts[a],
            format_number(report.expected),
            format_number(report.binomial_sd)
        )
        .unwrap();
    }
    s
}

/// Range helper shared with the command line tool.
pub fn value_range(map: &SaliencyGrid) -> (f64, f64) {
    min_max(map.values())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::density_from_grid;
    use crate::metrics::MetricId;
    use proptest::prelude::*;

    fn shape(h: usize, w: usize) -> GridShape {
        GridShape::new(h, w).unwrap()
    }

    fn random_density(s: GridShape, seed: u64) -> DensityGrid {
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let v = (0..s.len())
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (x >> 11) as f64 / (1u64 << 53) as f64 + 1e-3
            })
            .collect();
        density_from_grid(Grid::new(s, v).unwrap()).unwrap()
    }

    #[test]
    fn density_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.sald");
        let d = random_density(shape(13, 7), 3);
        save_density(&path, &d).unwrap();
        let back = load_density(&path).unwrap();
        assert!(d.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(back.shape(), d.shape());
        // a density file is also a valid map
        assert_eq!(load_map(&path).unwrap().values(), d.values());
    }

    #[test]
    fn bad_grid_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.sald");
        fs::write(&path, b"NOPE\x01\x00\x00\x00\x01\x00\x00\x00\x01\x00\x00\x00\0\0\0\0\0\0\xf0\x3f").unwrap();
        assert!(matches!(load_density(&path), Err(Error::Format { .. })));
        fs::write(&path, b"SAL").unwrap();
        assert!(matches!(load_density(&path), Err(Error::Format { .. })));

        let map = SaliencyGrid::new(Grid::filled(shape(2, 2), 0.5)).unwrap();
        save_map(&path, &map).unwrap();
        assert!(matches!(load_density(&path), Err(Error::Format { .. })));
        let mut bytes = encode_grid(DENSITY_MAGIC, map.as_grid());
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_density(&path), Err(Error::InvariantViolation { .. })));
        bytes.pop();
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_density(&path), Err(Error::Format { .. })));
        assert!(matches!(load_density(&dir.path().join("missing")), Err(Error::Io { .. })));
    }

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let st = write(dir.path(), "st.csv", "stimulus_id,width,height\na,4,3\nb,2,2\n");
        let stimuli = load_stimuli(&st).unwrap();
        assert_eq!(stimuli[0].shape, shape(3, 4));
        let fx = write(dir.path(), "fx.csv", "stimulus_id,x,y\na,3,2\nb,0,1\na,0,0\n");
        let data = load_fixations(&fx, &stimuli).unwrap();
        assert_eq!(data.fixations()[0].points, vec![Fixation::new(2, 3), Fixation::new(0, 0)]);

        let out = dir.path().join("out.csv");
        save_fixations(&out, data.fixations()).unwrap();
        assert_eq!(load_fixations(&out, &stimuli).unwrap(), data);
        let out_st = dir.path().join("st2.csv");
        save_stimuli(&out_st, &stimuli).unwrap();
        assert_eq!(load_stimuli(&out_st).unwrap(), stimuli);

        let outside = write(dir.path(), "o.csv", "stimulus_id,x,y\na,1,1\na,4,0\n");
        match load_fixations(&outside, &stimuli) {
            Err(Error::InvariantViolation { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let garbage = write(dir.path(), "g.csv", "stimulus_id,x,y\na,1,1\na,zz,0\n");
        assert!(matches!(load_fixations(&garbage, &stimuli), Err(Error::Format { line: 3, .. })));
        let ragged = write(dir.path(), "r.csv", "stimulus_id,x,y\na,1\n");
        assert!(matches!(load_fixations(&ragged, &stimuli), Err(Error::Format { line: 2, .. })));
        let header = write(dir.path(), "h.csv", "id,x,y\na,1,1\n");
        assert!(matches!(load_fixations(&header, &stimuli), Err(Error::Format { line: 1, .. })));
        let dup = write(dir.path(), "d.csv", "stimulus_id,width,height\na,4,3\na,2,2\n");
        assert!(matches!(load_stimuli(&dup), Err(Error::InvariantViolation { line: 3, .. })));
    }

    #[test]
    fn results_csv_has_mean_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let scores = vec![
            ("a".to_string(), MetricScore::new(MetricId::Nss, 1.0)),
            ("b".to_string(), MetricScore::new(MetricId::Nss, 0.5)),
        ];
        save_results(&p, &scores).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(
            text,
            "stimulus_id,metric,score\na,NSS,1.0000000000000000e0\nb,NSS,5.0000000000000000e-1\nmean,NSS,7.5000000000000000e-1\n"
        );
    }

    #[test]
    fn quantize_examples() {
        let two = SaliencyGrid::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(quantize_256(&two).unwrap().values(), &[0.0, 255.0, 255.0, 0.0]);
        let ramp = SaliencyGrid::new(Grid::new(shape(1, 512), (0..512).map(|i| i as f64).collect()).unwrap()).unwrap();
        let q = quantize_256(&ramp).unwrap();
        let mut counts = [0usize; 256];
        q.values().iter().for_each(|&v| counts[v as usize] += 1);
        assert!(counts.iter().all(|&c| c == 2), "{counts:?}");
        let constant = SaliencyGrid::new(Grid::filled(shape(3, 3), 4.2)).unwrap();
        assert!(quantize_256(&constant).unwrap().values().iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn quantize_is_idempotent(v in prop::collection::vec(-1e3f64..1e3, 1..200)) {
            let n = v.len();
            let m = SaliencyGrid::new(Grid::new(shape(1, n), v).unwrap()).unwrap();
            let q = quantize_256(&m).unwrap();
            prop_assert_eq!(quantize_256(&q).unwrap(), q);
        }
    }

    #[test]
    fn png_export_examples() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        // 256 distinct values in scrambled order
        let v: Vec<f64> = (0..256).map(|i| ((i * 97) % 256) as f64 * 0.37 - 3.0).collect();
        let m = SaliencyGrid::new(Grid::new(shape(16, 16), v).unwrap()).unwrap();
        export_png8(&m, &p, true).unwrap();
        let back = load_png8(&p).unwrap();
        let mut levels: Vec<u8> = back.values().iter().map(|&x| x as u8).collect();
        levels.sort();
        assert_eq!(levels, (0..=255).collect::<Vec<u8>>());
        // ranking survives
        for i in 0..256 {
            for j in 0..256 {
                if m.values()[i] < m.values()[j] {
                    assert!(back.values()[i] < back.values()[j]);
                }
            }
        }
        let c = SaliencyGrid::new(Grid::filled(shape(3, 5), -2.0)).unwrap();
        export_png8(&c, &p, false).unwrap();
        assert!(load_png8(&p).unwrap().values().iter().all(|&x| x == 128.0));
        assert!(load_map(&p).is_ok());
    }

    #[test]
    fn round_half_up() {
        // (v - min) / range * 255 = 0.5 and 1.5
        let m = SaliencyGrid::from_rows(&[[0.0, 0.5, 1.5, 255.0]]).unwrap();
        assert_eq!(to_gray8(&m), vec![0, 1, 2, 255]);
    }

    #[test]
    fn fit_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("fit.txt");
        let fit = ProbabilisticModelFit {
            nonlinearity: PiecewiseLinearFn::monotone(vec![0.0, 0.1 + 1e-17, 1.0 / 3.0]).unwrap(),
            cb_profile: PiecewiseLinearFn::new(vec![2.0, 0.3]).unwrap(),
            alpha: std::f64::consts::PI,
            map_min: -1.25e-300,
            map_max: 7.0,
        };
        save_fit(&p, &fit).unwrap();
        assert_eq!(load_fit(&p).unwrap(), fit);
        let text = fit_to_string(&fit).replace("segments_nl 2", "segments_nl 3");
        assert!(matches!(parse_fit(&p, &text), Err(Error::Format { line: 7, .. })));
        let text = fit_to_string(&fit).replace("0.0 0.1", "0.5 0.1");
        assert!(matches!(parse_fit(&p, &text), Err(Error::InvariantViolation { .. })));
        assert!(matches!(parse_fit(&p, "salmap-fit 9\n"), Err(Error::Format { line: 1, .. })));
    }

    #[test]
    fn quartile_examples() {
        let u = DensityGrid::uniform(shape(4, 6));
        let r = density_quartiles(&u, None).unwrap();
        assert_eq!(r.pixel_counts, [6, 6, 6, 6]);

        let n = 100;
        let mut v = vec![0.75 / (n - 1) as f64; n];
        v[37] = 0.25;
        let d = DensityGrid::new(Grid::new(shape(10, 10), v).unwrap()).unwrap();
        let r = density_quartiles(&d, None).unwrap();
        assert_eq!(r.pixel_counts[0], 1);
        assert_eq!(r.areas[37], 0);

        let f = FixationSet::from_pairs(&[(0, 0), (3, 7), (3, 7), (9, 9), (5, 5)]);
        let (png, r) = render_density_quartiles(&d, Some(&f)).unwrap();
        assert_eq!(r.fixation_counts.unwrap().iter().sum::<usize>(), 5);
        assert_eq!(r.fixation_counts.unwrap()[0], 2);
        assert!((r.expected - 1.25).abs() < 1e-15);
        assert!((r.binomial_sd - (5.0f64 * 0.1875).sqrt()).abs() < 1e-15);
        assert_eq!(&png[1..4], b"PNG");
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
