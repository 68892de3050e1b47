//! Synthetic patch corpus, detection/runtime evaluation, and feature
//! extraction scaling measurements.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chunking::{chunk_image, Position};
use crate::error::{Error, Result};
use crate::image_io::{load_image, ImageTensor};
use crate::mi_features::{all_pairs_features, extract_features, HistogramConfig};
use crate::pipeline::{defend, DefenseResult, PipelineConfig, StageTimings};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    /// Per-channel linear ramp with random direction and offset.
    Gradient,
    /// Bilinearly upsampled coarse random lattice.
    BandLimitedNoise,
    File(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchKind {
    /// Clean image, no patch.
    None,
    UniformNoise,
    Checkerboard,
    Solid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub base: BaseKind,
    pub patch: PatchKind,
    #[serde(default = "default_patch_size")]
    pub patch_size: usize,
    /// `(top, left)`; drawn from the seed when absent.
    #[serde(default)]
    pub position: Option<(usize, usize)>,
    #[serde(default = "default_side")]
    pub height: usize,
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    /// Lattice spacing of band-limited bases, in pixels.
    #[serde(default = "default_texture_cell")]
    pub texture_cell: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_texture_cell() -> usize {
    LATTICE_CELL
}

fn default_patch_size() -> usize {
    50
}

fn default_side() -> usize {
    224
}

fn default_channels() -> usize {
    3
}

impl SyntheticSpec {
    pub fn new(base: BaseKind, patch: PatchKind, seed: u64) -> Self {
        Self {
            base,
            patch,
            patch_size: default_patch_size(),
            position: None,
            height: default_side(),
            width: default_side(),
            channels: default_channels(),
            texture_cell: default_texture_cell(),
            seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.top..self.top + self.height).contains(&row)
            && (self.left..self.left + self.width).contains(&col)
    }
}

const CHECKER_CELL: usize = 5;
const LATTICE_CELL: usize = 32;

fn gradient_base(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<ImageTensor> {
    let (h, w) = (spec.height as f64, spec.width as f64);
    let params: Vec<(f64, f64, f64)> = (0..spec.channels)
        .map(|_| {
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let span: f64 = rng.gen_range(60.0..160.0);
            let offset: f64 = rng.gen_range(20.0..(235.0 - span));
            (angle, span, offset)
        })
        .collect();
    ImageTensor::from_fn(spec.height, spec.width, spec.channels, |y, x, c| {
        let (angle, span, offset) = params[c];
        let (dy, dx) = (angle.sin(), angle.cos());
        // projection normalized to [0, 1] over the image
        let extent = dy.abs() * h + dx.abs() * w;
        let base = dy.min(0.0) * -h + dx.min(0.0) * -w;
        let t = (y as f64 * dy + x as f64 * dx + base) / extent;
        (offset + span * t).round().clamp(0.0, 255.0) as u8
    })
}

fn band_limited_base(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<ImageTensor> {
    let cell = spec.texture_cell.max(1) as f64;
    let gh = spec.height / spec.texture_cell.max(1) + 2;
    let gw = spec.width / spec.texture_cell.max(1) + 2;
    let lattice: Vec<Vec<f64>> = (0..spec.channels)
        .map(|_| (0..gh * gw).map(|_| rng.gen_range(40.0..215.0)).collect())
        .collect();
    ImageTensor::from_fn(spec.height, spec.width, spec.channels, |y, x, c| {
        let fy = y as f64 / cell;
        let fx = x as f64 / cell;
        let (iy, ix) = (fy.floor() as usize, fx.floor() as usize);
        let (ty, tx) = (fy - iy as f64, fx - ix as f64);
        let g = &lattice[c];
        let at = |r: usize, q: usize| g[r * gw + q];
        let top = at(iy, ix) * (1.0 - tx) + at(iy, ix + 1) * tx;
        let bottom = at(iy + 1, ix) * (1.0 - tx) + at(iy + 1, ix + 1) * tx;
        (top * (1.0 - ty) + bottom * ty).round() as u8
    })
}

/// Deterministic image for `spec.seed`, plus the exact patch rectangle when a
/// patch was planted.
pub fn generate_case(spec: &SyntheticSpec) -> Result<(ImageTensor, Option<Rect>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut image = match &spec.base {
        BaseKind::Gradient => gradient_base(spec, &mut rng)?,
        BaseKind::BandLimitedNoise => band_limited_base(spec, &mut rng)?,
        BaseKind::File(path) => load_image(path)?,
    };
    if spec.patch == PatchKind::None {
        return Ok((image, None));
    }
    let size = spec.patch_size;
    let (h, w) = (image.height(), image.width());
    if size == 0 || size > h || size > w {
        return Err(Error::Parameter(format!(
            "patch of size {size} does not fit a {h}x{w} image"
        )));
    }
    let (top, left) = match spec.position {
        Some((top, left)) => {
            if top + size > h || left + size > w {
                return Err(Error::Parameter(format!(
                    "patch at ({top}, {left}) of size {size} exceeds {h}x{w} image"
                )));
            }
            (top, left)
        }
        None => (rng.gen_range(0..=h - size), rng.gen_range(0..=w - size)),
    };
    let solid: Vec<u8> = (0..image.channels()).map(|_| rng.gen()).collect();
    for (c, &fill) in solid.iter().enumerate() {
        for y in 0..size {
            for x in 0..size {
                let v = match spec.patch {
                    PatchKind::UniformNoise => rng.gen(),
                    PatchKind::Checkerboard => {
                        if (y / CHECKER_CELL + x / CHECKER_CELL).is_multiple_of(2) {
                            0
                        } else {
                            255
                        }
                    }
                    PatchKind::Solid => fill,
                    PatchKind::None => unreachable!(),
                };
                image.set(top + y, left + x, c, v);
            }
        }
    }
    Ok((
        image,
        Some(Rect {
            top,
            left,
            height: size,
            width: size,
        }),
    ))
}

/// Pixels of `rect` covered by at least one `kernel`-sized window at
/// `windows`.
pub fn covered_pixels(rect: &Rect, windows: &[Position], kernel: usize) -> usize {
    let mut covered = vec![false; rect.area()];
    for p in windows {
        let y0 = p.top.max(rect.top);
        let y1 = (p.top + kernel).min(rect.top + rect.height);
        let x0 = p.left.max(rect.left);
        let x1 = (p.left + kernel).min(rect.left + rect.width);
        if x0 >= x1 {
            continue;
        }
        for y in y0..y1 {
            let row = (y - rect.top) * rect.width;
            covered[row + x0 - rect.left..row + x1 - rect.left].fill(true);
        }
    }
    covered.iter().filter(|&&c| c).count()
}

/// A case counts as detected when flagged windows cover at least this share
/// of the patch.
pub const DETECTION_COVERAGE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case: usize,
    pub seed: u64,
    pub base: BaseKind,
    pub patch: PatchKind,
    pub patch_rect: Option<Rect>,
    pub chunks: usize,
    pub flagged: usize,
    /// Share of patch pixels under flagged windows.
    pub coverage: Option<f64>,
    pub detected: Option<bool>,
    pub timings: Option<StageTimings>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub max: f64,
}

impl RuntimeStats {
    fn from_samples(mut v: Vec<f64>) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let pick = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
        Some(Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p50: pick(0.5),
            p90: pick(0.9),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub chunking: RuntimeStats,
    pub features: RuntimeStats,
    pub forest: RuntimeStats,
    pub scoring: RuntimeStats,
    pub mitigation: RuntimeStats,
    pub total: RuntimeStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub cases: usize,
    pub patched: usize,
    pub clean: usize,
    pub errors: usize,
    /// Detected share of patched cases; `None` without patched cases.
    pub recall: Option<f64>,
    /// Mean share of chunks flagged on clean images; `None` without clean
    /// cases.
    pub false_flag_rate: Option<f64>,
    pub runtime: Option<StageStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cases: Vec<CaseReport>,
    pub summary: EvalSummary,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EvalOptions {
    /// Run cases one after another so per-case timings do not interfere.
    pub sequential: bool,
}

fn run_case(index: usize, spec: &SyntheticSpec, config: &PipelineConfig) -> CaseReport {
    let mut report = CaseReport {
        case: index,
        seed: spec.seed,
        base: spec.base.clone(),
        patch: spec.patch,
        patch_rect: None,
        chunks: 0,
        flagged: 0,
        coverage: None,
        detected: None,
        timings: None,
        error: None,
    };
    let outcome = generate_case(spec).and_then(|(image, rect)| {
        let result = defend(&image, config)?;
        Ok((rect, result))
    });
    match outcome {
        Ok((rect, result)) => fill_case(&mut report, rect, &result),
        Err(e) => report.error = Some(e.to_string()),
    }
    report
}

fn fill_case(report: &mut CaseReport, rect: Option<Rect>, result: &DefenseResult) {
    report.patch_rect = rect;
    report.chunks = result.outcome.positions.len();
    report.flagged = result.flagged().len();
    report.timings = Some(result.timings);
    if let Some(rect) = rect {
        let windows: Vec<Position> = result.flagged().iter().map(|f| f.position).collect();
        let coverage =
            covered_pixels(&rect, &windows, result.outcome.kernel) as f64 / rect.area() as f64;
        report.coverage = Some(coverage);
        report.detected = Some(coverage >= DETECTION_COVERAGE);
    }
}

/// Defends every case and aggregates detection and runtime statistics.
/// Per-case failures are recorded in the report.
pub fn evaluate(
    corpus: &[SyntheticSpec],
    config: &PipelineConfig,
    options: EvalOptions,
) -> Result<EvalReport> {
    if corpus.is_empty() {
        return Err(Error::Parameter("evaluation corpus is empty".into()));
    }
    config.validate()?;
    let cases: Vec<CaseReport> = if options.sequential {
        corpus
            .iter()
            .enumerate()
            .map(|(i, s)| run_case(i, s, config))
            .collect()
    } else {
        corpus
            .par_iter()
            .enumerate()
            .map(|(i, s)| run_case(i, s, config))
            .collect()
    };
    let summary = summarize(&cases);
    Ok(EvalReport { cases, summary })
}

fn summarize(cases: &[CaseReport]) -> EvalSummary {
    let ok: Vec<&CaseReport> = cases.iter().filter(|c| c.error.is_none()).collect();
    let patched: Vec<&&CaseReport> = ok.iter().filter(|c| c.patch_rect.is_some()).collect();
    let clean: Vec<&&CaseReport> = ok.iter().filter(|c| c.patch_rect.is_none()).collect();
    let recall = (!patched.is_empty()).then(|| {
        patched.iter().filter(|c| c.detected == Some(true)).count() as f64 / patched.len() as f64
    });
    let false_flag_rate = (!clean.is_empty()).then(|| {
        clean
            .iter()
            .map(|c| c.flagged as f64 / c.chunks.max(1) as f64)
            .sum::<f64>()
            / clean.len() as f64
    });
    let timings: Vec<StageTimings> = ok.iter().filter_map(|c| c.timings).collect();
    let stat = |f: fn(&StageTimings) -> f64| {
        RuntimeStats::from_samples(timings.iter().map(f).collect()).unwrap_or_default()
    };
    let runtime = (!timings.is_empty()).then(|| StageStats {
        chunking: stat(|t| t.chunking),
        features: stat(|t| t.features),
        forest: stat(|t| t.forest),
        scoring: stat(|t| t.scoring),
        mitigation: stat(|t| t.mitigation),
        total: stat(|t| t.total),
    });
    EvalSummary {
        cases: cases.len(),
        patched: patched.len(),
        clean: clean.len(),
        errors: cases.len() - ok.len(),
        recall,
        false_flag_rate,
        runtime,
    }
}

impl EvalReport {
    /// One JSON object per case followed by a `summary` record.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for case in &self.cases {
            let mut v = serde_json::to_value(case).expect("case serializes");
            v["record"] = "case".into();
            out.push_str(&v.to_string());
            out.push('\n');
        }
        let mut v = serde_json::to_value(&self.summary).expect("summary serializes");
        v["record"] = "summary".into();
        out.push_str(&v.to_string());
        out.push('\n');
        out
    }

    pub fn to_table(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map_or("N/A".to_string(), |v| format!("{v:.3}"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>5} {:>20} {:>14} {:>7} {:>9} {:>9} {:>9}",
            "case", "base", "patch", "flagged", "coverage", "detected", "total_s"
        );
        for c in &self.cases {
            let base = match &c.base {
                BaseKind::Gradient => "gradient".to_string(),
                BaseKind::BandLimitedNoise => "band_limited_noise".to_string(),
                BaseKind::File(p) => p.display().to_string(),
            };
            if let Some(err) = &c.error {
                let _ = writeln!(out, "{:>5} {:>20} error: {err}", c.case, base);
                continue;
            }
            let _ = writeln!(
                out,
                "{:>5} {:>20} {:>14} {:>7} {:>9} {:>9} {:>9}",
                c.case,
                base,
                format!("{:?}", c.patch),
                c.flagged,
                fmt_opt(c.coverage),
                c.detected.map_or("N/A".into(), |d| d.to_string()),
                c.timings
                    .map_or("N/A".into(), |t| format!("{:.4}", t.total)),
            );
        }
        let s = &self.summary;
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "cases {}  patched {}  clean {}  errors {}",
            s.cases, s.patched, s.clean, s.errors
        );
        let _ = writeln!(out, "recall {}", fmt_opt(s.recall));
        let _ = writeln!(out, "false-flag rate {}", fmt_opt(s.false_flag_rate));
        if let Some(rt) = &s.runtime {
            for (name, st) in [
                ("chunking", &rt.chunking),
                ("features", &rt.features),
                ("forest", &rt.forest),
                ("scoring", &rt.scoring),
                ("mitigation", &rt.mitigation),
                ("total", &rt.total),
            ] {
                let _ = writeln!(
                    out,
                    "{name:>10}  mean {:.4}s  p50 {:.4}s  p90 {:.4}s  max {:.4}s",
                    st.mean, st.p50, st.p90, st.max
                );
            }
        }
        out
    }
}

/// Corpus description accepted from a TOML file: either explicit `[[case]]`
/// entries or a `[generate]` section, or both.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusFile {
    #[serde(default)]
    pub case: Vec<SyntheticSpec>,
    #[serde(default)]
    pub generate: Option<CorpusRecipe>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecipe {
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    /// Cycled through case by case.
    #[serde(default = "default_bases")]
    pub bases: Vec<BaseKind>,
    #[serde(default = "default_patches")]
    pub patches: Vec<PatchKind>,
    #[serde(default = "default_patch_size")]
    pub patch_size: usize,
    #[serde(default = "default_side")]
    pub height: usize,
    #[serde(default = "default_side")]
    pub width: usize,
}

fn default_bases() -> Vec<BaseKind> {
    vec![BaseKind::Gradient, BaseKind::BandLimitedNoise]
}

fn default_patches() -> Vec<PatchKind> {
    vec![PatchKind::UniformNoise, PatchKind::Checkerboard]
}

impl CorpusRecipe {
    pub fn expand(&self) -> Result<Vec<SyntheticSpec>> {
        if self.bases.is_empty() || self.patches.is_empty() {
            return Err(Error::Config(
                "corpus recipe needs bases and patches".into(),
            ));
        }
        Ok((0..self.count)
            .map(|i| SyntheticSpec {
                base: self.bases[i % self.bases.len()].clone(),
                patch: self.patches[(i / self.bases.len()) % self.patches.len()],
                patch_size: self.patch_size,
                position: None,
                height: self.height,
                width: self.width,
                channels: 3,
                texture_cell: default_texture_cell(),
                seed: self.seed.wrapping_add(i as u64),
            })
            .collect())
    }
}

impl CorpusFile {
    pub fn from_toml_str(text: &str) -> Result<Vec<SyntheticSpec>> {
        let file: CorpusFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut specs = file.case;
        if let Some(recipe) = &file.generate {
            specs.extend(recipe.expand()?);
        }
        if specs.is_empty() {
            return Err(Error::Config("corpus defines no cases".into()));
        }
        Ok(specs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vec<SyntheticSpec>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

/// The standard patched corpus: smooth and band-limited bases alternating,
/// uniform-noise and checkerboard patches alternating in pairs, random
/// placement.
pub fn patched_corpus(count: usize, seed: u64) -> Vec<SyntheticSpec> {
    CorpusRecipe {
        count,
        seed,
        bases: default_bases(),
        patches: default_patches(),
        patch_size: 50,
        height: 224,
        width: 224,
    }
    .expand()
    .expect("non-empty recipe")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares; `None` with fewer than two distinct `x`.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<LinearFit> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub chunks: usize,
    /// Seconds for neighbor-restricted feature extraction.
    pub localized: f64,
    /// Seconds for the all-pairs reference, when measured.
    pub all_pairs: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Localized time against chunk count; `None` for a single size.
    pub localized_fit: Option<LinearFit>,
    /// Slope of `log(all-pairs time)` against `log n`.
    pub all_pairs_exponent: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct ScalingOptions {
    /// Timings are the minimum over this many runs.
    pub repeats: usize,
    /// Largest chunk count for which the all-pairs reference is timed.
    pub all_pairs_up_to: usize,
    pub seed: u64,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self {
            repeats: 3,
            all_pairs_up_to: 256,
            seed: 0,
        }
    }
}

/// Grid shape `rows × cols = n` with `rows` the largest divisor not above √n.
fn grid_shape(n: usize) -> (usize, usize) {
    let mut rows = (n as f64).sqrt().floor() as usize;
    while rows > 1 && !n.is_multiple_of(rows) {
        rows -= 1;
    }
    (rows.max(1), n / rows.max(1))
}

fn time_min(repeats: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        f()?;
        best = best.min(t.elapsed().as_secs_f64());
    }
    Ok(best)
}

/// Times feature extraction on band-limited images sized to produce each
/// requested chunk count under `config`'s kernel and stride. Runs on the
/// caller's rayon pool; use a single-thread pool for clean scaling curves.
pub fn scaling_run(
    chunk_counts: &[usize],
    config: &PipelineConfig,
    options: ScalingOptions,
) -> Result<ScalingReport> {
    let hist = HistogramConfig::new(config.bins)?;
    let mut rows = Vec::with_capacity(chunk_counts.len());
    for &n in chunk_counts {
        if n < 2 {
            return Err(Error::Parameter(format!("chunk count {n} below 2")));
        }
        let (r, c) = grid_shape(n);
        let spec = SyntheticSpec {
            height: config.kernel + config.stride * (r - 1),
            width: config.kernel + config.stride * (c - 1),
            ..SyntheticSpec::new(BaseKind::BandLimitedNoise, PatchKind::None, options.seed)
        };
        let (image, _) = generate_case(&spec)?;
        let grid = chunk_image(&image, config.kernel, config.stride)?;
        debug_assert_eq!(grid.len(), n);
        let localized = time_min(options.repeats, || extract_features(&grid, &hist).map(drop))?;
        let all_pairs = if n <= options.all_pairs_up_to {
            Some(time_min(options.repeats, || {
                all_pairs_features(&grid, &hist).map(drop)
            })?)
        } else {
            None
        };
        rows.push(ScalingRow {
            chunks: n,
            localized,
            all_pairs,
        });
    }
    let localized_fit = linear_fit(
        &rows
            .iter()
            .map(|r| (r.chunks as f64, r.localized))
            .collect::<Vec<_>>(),
    );
    let log_pairs: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.all_pairs.map(|t| ((r.chunks as f64).ln(), t.ln())))
        .collect();
    let all_pairs_exponent = linear_fit(&log_pairs).map(|f| f.slope);
    Ok(ScalingReport {
        rows,
        localized_fit,
        all_pairs_exponent,
    })
}
