//! Low-rank reconstruction of flagged chunks.

mod svd;

use serde::{Deserialize, Serialize};

use crate::chunking::Block;
use crate::error::{Error, Result};

pub use svd::{Matrix, Svd};

pub const DEFAULT_INFO: f64 = 0.875;

/// Fraction of singular-value mass (first power) a reconstruction keeps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetentionPolicy {
    info: f64,
}

impl Default for RetentionPolicy {
    fn default() -> Self {
        Self { info: DEFAULT_INFO }
    }
}

impl RetentionPolicy {
    pub fn new(info: f64) -> Result<Self> {
        if !(info > 0.0 && info <= 1.0) {
            return Err(Error::Parameter(format!(
                "retention must be in (0, 1], got {info}"
            )));
        }
        Ok(Self { info })
    }

    pub fn info(&self) -> f64 {
        self.info
    }
}

/// Smallest `r` whose leading singular values hold at least `info` of the
/// total mass. Zero when every singular value is zero.
pub fn retained_rank(sigma: &[f64], info: f64) -> usize {
    let total: f64 = sigma.iter().sum();
    if total <= 0.0 {
        return 0;
    }
    let mut prefix = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        prefix += s;
        if prefix / total >= info {
            return i + 1;
        }
    }
    sigma.len()
}

#[derive(Clone, Debug)]
pub struct Reduction {
    pub matrix: Matrix,
    pub rank: usize,
    pub sigma: Vec<f64>,
}

impl Reduction {
    /// Share of singular-value mass carried by the kept rank.
    pub fn retained_ratio(&self) -> f64 {
        let total: f64 = self.sigma.iter().sum();
        if total == 0.0 {
            return 1.0;
        }
        self.sigma[..self.rank].iter().sum::<f64>() / total
    }
}

pub fn svd_truncate(block: &Matrix, policy: RetentionPolicy) -> Result<Reduction> {
    let svd = Svd::compute(block)?;
    let rank = retained_rank(&svd.sigma, policy.info);
    Ok(Reduction {
        matrix: svd.reconstruct(rank),
        rank,
        sigma: svd.sigma,
    })
}

/// Rank-`r` reconstruction of `block`, `r` minimal for the retention target.
pub fn svd_reduce(block: &Matrix, policy: RetentionPolicy) -> Result<Matrix> {
    Ok(svd_truncate(block, policy)?.matrix)
}

/// Applies [`svd_reduce`] to each channel of a chunk independently and writes
/// back to 8 bits with clamping and half-up rounding.
pub fn mitigate_chunk(block: &Block, policy: RetentionPolicy) -> Result<Block> {
    let k = block.size();
    let mut out = block.clone();
    for c in 0..block.channels() {
        let plane = block.channel(c);
        let m = Matrix::new(k, k, plane.iter().map(|&v| f64::from(v)).collect())?;
        let reduced = svd_reduce(&m, policy)?;
        for (dst, &v) in out.channel_mut(c).iter_mut().zip(reduced.data()) {
            *dst = to_u8(v);
        }
    }
    Ok(out)
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 255.0) + 0.5).floor() as u8
}
