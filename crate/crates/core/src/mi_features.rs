//! Histogram mutual information between co-located pixels of two chunks, and
//! the per-chunk feature vectors built from MI against grid neighbors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chunking::ChunkGrid;
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramConfig {
    bins: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self { bins: DEFAULT_BINS }
    }
}

impl HistogramConfig {
    pub fn new(bins: usize) -> Result<Self> {
        if !(2..=256).contains(&bins) {
            return Err(Error::Parameter(format!(
                "histogram bins must be in [2, 256], got {bins}"
            )));
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Uniform mapping of `[0, 255]` onto `bins` buckets.
    #[inline]
    pub fn bin_of(&self, v: u8) -> usize {
        usize::from(v) * self.bins / 256
    }

    pub fn max_bits(&self) -> f64 {
        (self.bins as f64).log2()
    }
}

/// One channel of one chunk after binning.
#[derive(Clone, Debug)]
struct Binned {
    bins: Vec<u8>,
    counts: Vec<u32>,
}

impl Binned {
    fn new(samples: &[u8], cfg: &HistogramConfig) -> Self {
        let mut counts = vec![0u32; cfg.bins];
        let bins = samples
            .iter()
            .map(|&v| {
                let b = cfg.bin_of(v);
                counts[b] += 1;
                b as u8
            })
            .collect();
        Self { bins, counts }
    }
}

fn binned_mi(a: &Binned, b: &Binned, bins: usize) -> f64 {
    let n = a.bins.len() as u64;
    let mut joint = vec![0u32; bins * bins];
    for (&x, &y) in a.bins.iter().zip(&b.bins) {
        joint[usize::from(x) * bins + usize::from(y)] += 1;
    }
    let term = |x: usize, y: usize| -> f64 {
        let nxy = joint[x * bins + y];
        if nxy == 0 {
            return 0.0;
        }
        let num = u64::from(nxy) * n;
        let den = u64::from(a.counts[x]) * u64::from(b.counts[y]);
        f64::from(nxy) * (num as f64 / den as f64).log2()
    };
    // Cells (x, y) and (y, x) are always added as a pair so that swapping the
    // arguments (which transposes `joint`) yields the identical float sum.
    let mut sum = 0.0;
    for x in 0..bins {
        sum += term(x, x);
        for y in x + 1..bins {
            sum += term(x, y) + term(y, x);
        }
    }
    let mi = sum / n as f64;
    mi.clamp(0.0, (bins as f64).log2())
}

/// Mutual information, in bits, of the joint histogram of co-located sample
/// pairs `(a[p], b[p])`.
pub fn mutual_information(a: &[u8], b: &[u8], cfg: &HistogramConfig) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "blocks differ in size: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Dimension("blocks are empty".into()));
    }
    Ok(binned_mi(
        &Binned::new(a, cfg),
        &Binned::new(b, cfg),
        cfg.bins,
    ))
}

/// Shannon entropy of the binned histogram of `a`, in bits.
pub fn binned_entropy(a: &[u8], cfg: &HistogramConfig) -> f64 {
    let binned = Binned::new(a, cfg);
    let n = a.len() as f64;
    binned
        .counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = f64::from(c) / n;
            -p * p.log2()
        })
        .sum()
}

/// Per-chunk summary of localized MI: for each channel, `(mean, min, max)`
/// over the chunk's neighbors, flattened channel by channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkFeatures {
    pub index: usize,
    pub features: Vec<f64>,
}

pub const STATS_PER_CHANNEL: usize = 3;

struct BinnedGrid {
    // [chunk][channel]
    planes: Vec<Vec<Binned>>,
    bins: usize,
}

impl BinnedGrid {
    fn new(grid: &ChunkGrid, cfg: &HistogramConfig) -> Self {
        let planes = grid
            .chunks()
            .par_iter()
            .map(|chunk| {
                (0..chunk.pixels.channels())
                    .map(|c| Binned::new(chunk.pixels.channel(c), cfg))
                    .collect()
            })
            .collect();
        Self {
            planes,
            bins: cfg.bins,
        }
    }

    fn mi(&self, i: usize, j: usize, channel: usize) -> f64 {
        binned_mi(
            &self.planes[i][channel],
            &self.planes[j][channel],
            self.bins,
        )
    }
}

fn require_neighbors(grid: &ChunkGrid) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::DegenerateGrid { chunks: grid.len() });
    }
    Ok(())
}

fn localized_with(binned: &BinnedGrid, grid: &ChunkGrid, index: usize) -> Result<Vec<Vec<f64>>> {
    let neighbors = grid.neighbors_of(index)?;
    Ok((0..grid.channels())
        .map(|c| neighbors.iter().map(|&j| binned.mi(index, j, c)).collect())
        .collect())
}

/// MI between chunk `index` and each of its grid neighbors, per channel, in
/// neighbor order.
pub fn localized_mi(
    grid: &ChunkGrid,
    index: usize,
    cfg: &HistogramConfig,
) -> Result<Vec<Vec<f64>>> {
    require_neighbors(grid)?;
    let binned = BinnedGrid::new(grid, cfg);
    localized_with(&binned, grid, index)
}

fn summarize(per_channel: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(per_channel.len() * STATS_PER_CHANNEL);
    for values in per_channel {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.extend([mean, min, max]);
    }
    out
}

/// Feature vectors for every chunk in `grid`. Chunks are processed in
/// parallel on the ambient rayon pool; output is identical for any pool size.
pub fn extract_features(grid: &ChunkGrid, cfg: &HistogramConfig) -> Result<Vec<ChunkFeatures>> {
    require_neighbors(grid)?;
    let binned = BinnedGrid::new(grid, cfg);
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mi = localized_with(&binned, grid, i)?;
            Ok(ChunkFeatures {
                index: i,
                features: summarize(&mi),
            })
        })
        .collect()
}

/// Reference feature construction that compares every chunk against every
/// other chunk, quadratic in the chunk count. Used to measure what the
/// neighbor restriction saves and to cross-check anomaly ranking.
pub fn all_pairs_features(grid: &ChunkGrid, cfg: &HistogramConfig) -> Result<Vec<ChunkFeatures>> {
    require_neighbors(grid)?;
    let binned = BinnedGrid::new(grid, cfg);
    let n = grid.len();
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let per_channel: Vec<Vec<f64>> = (0..grid.channels())
                .map(|c| {
                    (0..n)
                        .filter(|&j| j != i)
                        .map(|j| binned.mi(i, j, c))
                        .collect()
                })
                .collect();
            ChunkFeatures {
                index: i,
                features: summarize(&per_channel),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunking::chunk_image;
    use crate::image_io::ImageTensor;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Eq.-style double sum over the joint histogram with probabilities,
    /// written independently of the implementation's integer-ratio form.
    fn oracle_mi(a: &[u8], b: &[u8], bins: usize) -> f64 {
        let n = a.len() as f64;
        let mut pxy = vec![vec![0.0f64; bins]; bins];
        for (&x, &y) in a.iter().zip(b) {
            pxy[x as usize * bins / 256][y as usize * bins / 256] += 1.0 / n;
        }
        let px: Vec<f64> = (0..bins).map(|x| pxy[x].iter().sum()).collect();
        let py: Vec<f64> = (0..bins)
            .map(|y| (0..bins).map(|x| pxy[x][y]).sum())
            .collect();
        let mut mi = 0.0;
        for x in 0..bins {
            for y in 0..bins {
                if pxy[x][y] > 0.0 {
                    mi += pxy[x][y] * (pxy[x][y] / (px[x] * py[y])).log2();
                }
            }
        }
        mi
    }

    #[test]
    fn uniform_self_information_is_five_bits() {
        let cfg = HistogramConfig::default();
        // 2560 samples, each of the 32 bins hit equally often
        let a: Vec<u8> = (0..2560).map(|i| (i % 256) as u8).collect();
        let mi = mutual_information(&a, &a, &cfg).unwrap();
        assert!((mi - 5.0).abs() < 1e-12, "{mi}");
    }

    #[test]
    fn constant_block_has_zero_mi() {
        let cfg = HistogramConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = vec![77u8; 2500];
        let b: Vec<u8> = (0..2500).map(|_| rng.gen()).collect();
        assert_eq!(mutual_information(&a, &b, &cfg).unwrap(), 0.0);
        assert_eq!(mutual_information(&b, &a, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn independent_noise_matches_double_sum_oracle() {
        let cfg = HistogramConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a: Vec<u8> = (0..2500).map(|_| rng.gen()).collect();
        let b: Vec<u8> = (0..2500).map(|_| rng.gen()).collect();
        let mi = mutual_information(&a, &b, &cfg).unwrap();
        let want = oracle_mi(&a, &b, 32);
        assert!((mi - want).abs() < 1e-12, "{mi} vs {want}");
        // plug-in bias for 1024 cells at 2500 samples is roughly (B-1)^2 / (2N ln 2) ~ 0.28 bit
        assert!(mi < 0.5, "{mi}");
    }

    #[test]
    fn size_mismatch() {
        let cfg = HistogramConfig::default();
        assert!(matches!(
            mutual_information(&[1, 2, 3], &[1, 2], &cfg),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn bins_validated() {
        assert!(HistogramConfig::new(1).is_err());
        assert!(HistogramConfig::new(257).is_err());
        assert_eq!(HistogramConfig::new(256).unwrap().bin_of(255), 255);
        assert_eq!(HistogramConfig::new(32).unwrap().bin_of(255), 31);
        assert_eq!(HistogramConfig::new(32).unwrap().bin_of(8), 1);
    }

    #[test]
    fn localized_counts_and_constant_image() {
        let cfg = HistogramConfig::default();
        let img = ImageTensor::filled(224, 224, 3, 90).unwrap();
        let grid = chunk_image(&img, 50, 58).unwrap();
        let mi = localized_mi(&grid, 5, &cfg).unwrap();
        assert_eq!(mi.len(), 3);
        assert!(mi
            .iter()
            .all(|ch| ch.len() == 8 && ch.iter().all(|&v| v == 0.0)));

        let feats = extract_features(&grid, &cfg).unwrap();
        assert_eq!(feats.len(), 16);
        assert!(feats.iter().all(|f| f.features.len() == 9));
    }

    #[test]
    fn single_chunk_grid_is_degenerate() {
        let cfg = HistogramConfig::default();
        let img = ImageTensor::filled(50, 50, 1, 0).unwrap();
        let grid = chunk_image(&img, 50, 1).unwrap();
        assert!(matches!(
            localized_mi(&grid, 0, &cfg),
            Err(Error::DegenerateGrid { chunks: 1 })
        ));
        assert!(matches!(
            extract_features(&grid, &cfg),
            Err(Error::DegenerateGrid { .. })
        ));
    }

    #[test]
    fn features_identical_across_pool_sizes() {
        let cfg = HistogramConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img = ImageTensor::from_fn(150, 150, 3, |y, x, _| {
            ((y + x) as u8).wrapping_add(rng.gen_range(0..20))
        })
        .unwrap();
        let grid = chunk_image(&img, 30, 15).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| extract_features(&grid, &cfg).unwrap())
        };
        let one = run(1);
        for t in [2, 4, 8] {
            let other = run(t);
            for (a, b) in one.iter().zip(&other) {
                let bits_a: Vec<u64> = a.features.iter().map(|v| v.to_bits()).collect();
                let bits_b: Vec<u64> = b.features.iter().map(|v| v.to_bits()).collect();
                assert_eq!(bits_a, bits_b);
            }
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(a in prop::collection::vec(any::<u8>(), 64), b in prop::collection::vec(any::<u8>(), 64), bins in 2usize..=64) {
            let cfg = HistogramConfig::new(bins).unwrap();
            let ab = mutual_information(&a, &b, &cfg).unwrap();
            let ba = mutual_information(&b, &a, &cfg).unwrap();
            prop_assert_eq!(ab.to_bits(), ba.to_bits());
            prop_assert!(ab >= 0.0 && ab <= cfg.max_bits());
            let self_mi = mutual_information(&a, &a, &cfg).unwrap();
            prop_assert!((self_mi - binned_entropy(&a, &cfg)).abs() < 1e-9);
        }
    }
}
