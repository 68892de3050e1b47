//! Isolation forests with targeted (separability-guided) cuts, plus the
//! classic random-cut variant kept as a reference.

mod separation;
mod tree;

use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use separation::{
    gradient, gradient_split, separation, update_step, SeparabilityScan, SEPARATION_EPS,
};
pub use tree::{build_random_tree, build_tree, TreeNode};

const EULER_GAMMA: f64 = 0.5772156649;

/// Fraction of the data drawn for each tree.
pub const SAMPLE_FRACTION: f64 = 0.3;

/// Average path length of an unsuccessful binary-search-tree lookup among `n`
/// points; `c(n) = 2 H(n−1) − 2 (n−1)/n` with `H(i) ≈ ln i + γ`.
pub fn average_path_length(n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let m = (n - 1) as f64;
    2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
}

/// `2^(−mean_path / normalizer)`.
pub fn score_from_mean_path(mean_path: f64, normalizer: f64) -> f64 {
    (-mean_path / normalizer).exp2()
}

pub fn height_limit(sample_size: usize) -> usize {
    (sample_size as f64).log2().ceil() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutStrategy {
    /// Separability-guided splits.
    Targeted { k_attrs: usize },
    /// Uniformly random attribute and split point.
    Random,
}

pub const MODEL_FORMAT: &str = "patch-defense/isolation-forest";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    format: String,
    version: u32,
    strategy: CutStrategy,
    dims: usize,
    sample_size: usize,
    height_max: usize,
    normalizer: f64,
    seed: u64,
    trees: Vec<TreeNode>,
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn validate(points: &[Vec<f64>], trees: usize, sample_size: usize) -> Result<usize> {
    if trees == 0 {
        return Err(Error::Parameter("forest needs at least one tree".into()));
    }
    if sample_size < 2 {
        return Err(Error::Parameter(format!(
            "sample size must be at least 2, got {sample_size}"
        )));
    }
    if sample_size > points.len() {
        return Err(Error::Parameter(format!(
            "sample size {sample_size} exceeds {} points",
            points.len()
        )));
    }
    let dims = points[0].len();
    if dims == 0 {
        return Err(Error::Dimension("points have no attributes".into()));
    }
    if let Some(bad) = points.iter().position(|p| p.len() != dims) {
        return Err(Error::Dimension(format!(
            "point {bad} has {} attributes, expected {dims}",
            points[bad].len()
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "training data contains non-finite values".into(),
        ));
    }
    Ok(dims)
}

impl IsolationForest {
    fn fit(
        points: &[Vec<f64>],
        trees: usize,
        sample_size: usize,
        strategy: CutStrategy,
        seed: u64,
    ) -> Result<Self> {
        let dims = validate(points, trees, sample_size)?;
        if let CutStrategy::Targeted { k_attrs } = strategy {
            if k_attrs == 0 || k_attrs > dims {
                return Err(Error::Parameter(format!(
                    "k_attrs must be in [1, {dims}], got {k_attrs}"
                )));
            }
        }
        let height_max = height_limit(sample_size);
        let built = (0..trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = tree_rng(seed, t);
                let picked: Vec<&[f64]> = sample(&mut rng, points.len(), sample_size)
                    .into_iter()
                    .map(|i| points[i].as_slice())
                    .collect();
                match strategy {
                    CutStrategy::Targeted { k_attrs } => {
                        build_tree(&picked, 0, height_max, k_attrs, &mut rng)
                    }
                    CutStrategy::Random => build_random_tree(&picked, 0, height_max, &mut rng),
                }
            })
            .collect();
        Ok(Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            strategy,
            dims,
            sample_size,
            height_max,
            normalizer: average_path_length(sample_size),
            seed,
            trees: built,
        })
    }

    pub fn trees(&self) -> &[TreeNode] {
        &self.trees
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn height_max(&self) -> usize {
        self.height_max
    }

    /// `c(s)` for the forest's sample size.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn strategy(&self) -> CutStrategy {
        self.strategy
    }

    pub fn mean_path_length(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dims {
            return Err(Error::Dimension(format!(
                "point has {} attributes, forest expects {}",
                x.len(),
                self.dims
            )));
        }
        let total: f64 = self
            .trees
            .iter()
            .map(|t| {
                let (edges, size) = t.route(x);
                edges as f64 + average_path_length(size)
            })
            .sum();
        Ok(total / self.trees.len() as f64)
    }

    /// Anomaly score in `(0, 1]`; higher is more anomalous.
    pub fn anomaly_score(&self, x: &[f64]) -> Result<f64> {
        Ok(score_from_mean_path(
            self.mean_path_length(x)?,
            self.normalizer,
        ))
    }

    pub fn score_all(&self, points: &[Vec<f64>]) -> Result<Vec<f64>> {
        points.par_iter().map(|p| self.anomaly_score(p)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("forest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let forest: Self = serde_json::from_str(text)
            .map_err(|e| Error::Format(format!("invalid forest model: {e}")))?;
        if forest.format != MODEL_FORMAT || forest.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported forest model {} v{}",
                forest.format, forest.version
            )));
        }
        if forest.trees.is_empty() || forest.sample_size < 2 {
            return Err(Error::Format("forest model is empty".into()));
        }
        Ok(forest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::image_io::write_atomic(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Targeted-cut forest: `trees` trees, each fit on `sample_size` points drawn
/// without replacement, depth capped at `ceil(log2 sample_size)`. Tree `t`
/// draws from its own stream of `seed`, so the result does not depend on the
/// number of worker threads.
pub fn build_forest(
    points: &[Vec<f64>],
    trees: usize,
    sample_size: usize,
    k_attrs: usize,
    seed: u64,
) -> Result<IsolationForest> {
    if points.is_empty() {
        return Err(Error::Parameter("cannot fit a forest on no points".into()));
    }
    IsolationForest::fit(
        points,
        trees,
        sample_size,
        CutStrategy::Targeted { k_attrs },
        seed,
    )
}

/// Classic random-cut forest with the same sampling and depth rules.
pub fn baseline_random_forest(
    points: &[Vec<f64>],
    trees: usize,
    sample_size: usize,
    seed: u64,
) -> Result<IsolationForest> {
    if points.is_empty() {
        return Err(Error::Parameter("cannot fit a forest on no points".into()));
    }
    IsolationForest::fit(points, trees, sample_size, CutStrategy::Random, seed)
}

/// Default per-tree sample size for `n` points: `round(0.3 n)`, at least 2.
pub fn default_sample_size(n: usize) -> usize {
    ((SAMPLE_FRACTION * n as f64).round() as usize).clamp(2.min(n), n)
}
