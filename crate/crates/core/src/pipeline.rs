//! End-to-end defense: chunk the image, describe every chunk by localized MI,
//! score the descriptions with a targeted-cut isolation forest fit on the
//! image itself, and replace the most anomalous chunks by low-rank
//! reconstructions.

use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chunking::{chunk_image, superimpose, Position};
use crate::error::{Error, Result};
use crate::iforest::{build_forest, default_sample_size};
use crate::image_io::ImageTensor;
use crate::mi_features::{extract_features, HistogramConfig};
use crate::mitigation::{mitigate_chunk, RetentionPolicy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Window side in pixels.
    pub kernel: usize,
    pub stride: usize,
    pub trees: usize,
    /// Share of chunks flagged as anomalous (at least one is always flagged).
    pub outlier_fraction: f64,
    /// Singular-value mass kept when reconstructing a flagged chunk.
    pub info: f64,
    pub bins: usize,
    /// Attributes examined per tree node; all of them when unset.
    pub k_attrs: Option<usize>,
    pub seed: u64,
    /// Images processed concurrently by [`defend_batch`].
    pub batch_size: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            kernel: 50,
            stride: 25,
            trees: 100,
            outlier_fraction: 0.01,
            info: crate::mitigation::DEFAULT_INFO,
            bins: crate::mi_features::DEFAULT_BINS,
            k_attrs: None,
            seed: 0,
            batch_size: 4,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.kernel == 0 {
            return bad("kernel must be at least 1".into());
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if self.trees == 0 {
            return bad("trees must be at least 1".into());
        }
        if !(self.outlier_fraction > 0.0 && self.outlier_fraction < 1.0) {
            return bad(format!(
                "outlier_fraction must be in (0, 1), got {}",
                self.outlier_fraction
            ));
        }
        if !(self.info > 0.0 && self.info <= 1.0) {
            return bad(format!("info must be in (0, 1], got {}", self.info));
        }
        if !(2..=256).contains(&self.bins) {
            return bad(format!("bins must be in [2, 256], got {}", self.bins));
        }
        if self.k_attrs == Some(0) {
            return bad("k_attrs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Number of chunks flagged out of `n`: `(outlier_fraction · n)` rounded
    /// half-up, never below one.
    pub fn flag_count(&self, n: usize) -> usize {
        if n == 0 {
            return 0;
        }
        let raw = (self.outlier_fraction * n as f64 + 0.5).floor() as usize;
        raw.clamp(1, n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlaggedChunk {
    pub index: usize,
    pub position: Position,
    pub score: f64,
}

/// Everything [`defend`] computes except timings; a pure function of the
/// input image and configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefenseOutcome {
    pub image: ImageTensor,
    pub kernel: usize,
    /// Flagged chunks by descending score, ties by ascending index.
    pub flagged: Vec<FlaggedChunk>,
    /// Anomaly score of every chunk, in grid order.
    pub scores: Vec<f64>,
    pub positions: Vec<Position>,
    /// Set when the grid held a single chunk and the image passed through
    /// untouched.
    pub passthrough: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub chunking: f64,
    pub features: f64,
    pub forest: f64,
    pub scoring: f64,
    pub mitigation: f64,
    pub total: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.chunking + self.features + self.forest + self.scoring + self.mitigation
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DefenseResult {
    pub outcome: DefenseOutcome,
    pub timings: StageTimings,
}

impl DefenseResult {
    pub fn image(&self) -> &ImageTensor {
        &self.outcome.image
    }

    pub fn flagged(&self) -> &[FlaggedChunk] {
        &self.outcome.flagged
    }

    pub fn scores(&self) -> &[f64] {
        &self.outcome.scores
    }

    /// Grayscale mask: 255 where a flagged window covers the pixel.
    pub fn anomaly_mask(&self) -> ImageTensor {
        let img = &self.outcome.image;
        let (h, w, k) = (img.height(), img.width(), self.outcome.kernel);
        let mut mask = vec![0u8; h * w];
        for f in &self.outcome.flagged {
            for y in f.position.top..f.position.top + k {
                mask[y * w + f.position.left..y * w + f.position.left + k].fill(255);
            }
        }
        ImageTensor::new(h, w, 1, mask).expect("mask has image dimensions")
    }
}

/// Indices of the `count` highest scores, descending, ties to the lower index.
pub fn top_scores(scores: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(count);
    order
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

pub fn defend(image: &ImageTensor, config: &PipelineConfig) -> Result<DefenseResult> {
    config.validate()?;
    let start = Instant::now();
    let mut timings = StageTimings::default();

    let t = Instant::now();
    let grid = chunk_image(image, config.kernel, config.stride)?;
    timings.chunking = secs(t.elapsed());
    let positions: Vec<Position> = grid.chunks().iter().map(|c| c.position).collect();

    if grid.len() < 2 {
        log::warn!("image yields a single chunk; passing it through unmodified");
        timings.total = secs(start.elapsed());
        return Ok(DefenseResult {
            outcome: DefenseOutcome {
                image: image.clone(),
                kernel: config.kernel,
                flagged: Vec::new(),
                scores: Vec::new(),
                positions,
                passthrough: true,
            },
            timings,
        });
    }

    let t = Instant::now();
    let hist = HistogramConfig::new(config.bins)?;
    let features: Vec<Vec<f64>> = extract_features(&grid, &hist)?
        .into_iter()
        .map(|f| f.features)
        .collect();
    timings.features = secs(t.elapsed());

    let t = Instant::now();
    let n = features.len();
    let dims = features[0].len();
    let k_attrs = config.k_attrs.unwrap_or(dims).min(dims);
    let forest = build_forest(
        &features,
        config.trees,
        default_sample_size(n),
        k_attrs,
        config.seed,
    )?;
    timings.forest = secs(t.elapsed());

    let t = Instant::now();
    let scores = forest.score_all(&features)?;
    let flagged: Vec<FlaggedChunk> = top_scores(&scores, config.flag_count(n))
        .into_iter()
        .map(|i| FlaggedChunk {
            index: i,
            position: positions[i],
            score: scores[i],
        })
        .collect();
    timings.scoring = secs(t.elapsed());

    let t = Instant::now();
    let policy = RetentionPolicy::new(config.info)?;
    let replacements = flagged
        .par_iter()
        .map(|f| {
            let chunk = &grid.chunks()[f.index];
            Ok((chunk.position, mitigate_chunk(&chunk.pixels, policy)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let output = superimpose(image, &replacements)?;
    timings.mitigation = secs(t.elapsed());

    timings.total = secs(start.elapsed());
    Ok(DefenseResult {
        outcome: DefenseOutcome {
            image: output,
            kernel: config.kernel,
            flagged,
            scores,
            positions,
            passthrough: false,
        },
        timings,
    })
}

/// Runs [`defend`] on each image, up to `config.batch_size` at a time. A
/// failing image yields an error in its own slot only.
pub fn defend_batch(images: &[ImageTensor], config: &PipelineConfig) -> Vec<Result<DefenseResult>> {
    let width = config.batch_size.max(1);
    let mut out = Vec::with_capacity(images.len());
    for group in images.chunks(width) {
        let results: Vec<Result<DefenseResult>> =
            group.par_iter().map(|img| defend(img, config)).collect();
        out.extend(results);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = PipelineConfig::default();
        assert_eq!((c.kernel, c.stride, c.trees, c.bins), (50, 25, 100, 32));
        assert_eq!(c.outlier_fraction, 0.01);
        assert_eq!(c.info, 0.875);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn flag_count_rounding() {
        let c = PipelineConfig::default();
        assert_eq!(c.flag_count(49), 1);
        assert_eq!(c.flag_count(149), 1);
        assert_eq!(c.flag_count(150), 2);
        assert_eq!(c.flag_count(1024), 10);
        assert_eq!(c.flag_count(0), 0);
        let wide = PipelineConfig {
            outlier_fraction: 0.5,
            ..c
        };
        assert_eq!(wide.flag_count(3), 2);
    }

    #[test]
    fn top_scores_tie_break() {
        assert_eq!(top_scores(&[0.5, 0.7, 0.7, 0.1], 3), vec![1, 2, 0]);
        assert_eq!(top_scores(&[0.2, 0.2], 5), vec![0, 1]);
    }

    #[test]
    fn toml_round_trip_and_validation() {
        let c = PipelineConfig {
            seed: 9,
            k_attrs: Some(3),
            ..Default::default()
        };
        assert_eq!(
            PipelineConfig::from_toml_str(&c.to_toml_string()).unwrap(),
            c
        );
        let partial = PipelineConfig::from_toml_str("kernel = 32\nstride = 16\n").unwrap();
        assert_eq!(
            (partial.kernel, partial.stride, partial.trees),
            (32, 16, 100)
        );
        assert!(matches!(
            PipelineConfig::from_toml_str("outlier_fraction = 1.5"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            PipelineConfig::from_toml_str("kernal = 3"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn too_small_image() {
        let img = ImageTensor::filled(40, 40, 3, 0).unwrap();
        assert!(matches!(
            defend(&img, &PipelineConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn single_chunk_passes_through() {
        let img = ImageTensor::from_fn(60, 60, 1, |y, x, _| (x + y) as u8).unwrap();
        let r = defend(&img, &PipelineConfig::default()).unwrap();
        assert!(r.outcome.passthrough);
        assert_eq!(r.image(), &img);
        assert!(r.flagged().is_empty());
    }

    #[test]
    fn constant_image_flags_one_window() {
        let img = ImageTensor::filled(224, 224, 3, 128).unwrap();
        let r = defend(&img, &PipelineConfig::default()).unwrap();
        assert_eq!(r.scores().len(), 49);
        assert_eq!(r.flagged().len(), 1);
        assert_eq!(r.image(), &img);
        let mask = r.anomaly_mask();
        assert_eq!(mask.data().iter().filter(|&&v| v == 255).count(), 2500);
    }

    #[test]
    fn batch_reports_errors_per_slot() {
        let good = ImageTensor::filled(120, 120, 1, 10).unwrap();
        let bad = ImageTensor::filled(30, 30, 1, 10).unwrap();
        let cfg = PipelineConfig::default();
        let out = defend_batch(&[good.clone(), bad, good], &cfg);
        assert!(out[0].is_ok() && out[1].is_err() && out[2].is_ok());
        assert_eq!(
            out[0].as_ref().unwrap().outcome,
            out[2].as_ref().unwrap().outcome
        );
    }
}
