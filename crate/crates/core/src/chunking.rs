//! Moving-window chunking and write-back of mitigated chunks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image_io::ImageTensor;

/// A square `size × size × channels` block of 8-bit samples, channel-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    size: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Block {
    pub fn new(size: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != size * size * channels {
            return Err(Error::Dimension(format!(
                "block data length {} != {size}x{size}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            size,
            channels,
            data,
        })
    }

    pub fn filled(size: usize, channels: usize, value: u8) -> Self {
        Self {
            size,
            channels,
            data: vec![value; size * size * channels],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[u8] {
        let plane = self.size * self.size;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [u8] {
        let plane = self.size * self.size;
        &mut self.data[c * plane..(c + 1) * plane]
    }
}

/// Top-left corner of a window, in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub top: usize,
    pub left: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chunk {
    pub index: usize,
    pub position: Position,
    pub pixels: Block,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkGrid {
    kernel: usize,
    stride: usize,
    rows: usize,
    cols: usize,
    chunks: Vec<Chunk>,
}

impl ChunkGrid {
    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunk(&self, index: usize) -> Option<&Chunk> {
        self.chunks.get(index)
    }

    pub fn channels(&self) -> usize {
        self.chunks[0].pixels.channels()
    }

    /// 8-connected grid neighbors of chunk `index`, in row-major order.
    pub fn neighbors_of(&self, index: usize) -> Result<Vec<usize>> {
        if index >= self.chunks.len() {
            return Err(Error::Parameter(format!(
                "chunk index {index} out of range for {} chunks",
                self.chunks.len()
            )));
        }
        let (r, c) = (index / self.cols, index % self.cols);
        let mut out = Vec::with_capacity(8);
        for nr in r.saturating_sub(1)..=(r + 1).min(self.rows - 1) {
            for nc in c.saturating_sub(1)..=(c + 1).min(self.cols - 1) {
                if (nr, nc) != (r, c) {
                    out.push(nr * self.cols + nc);
                }
            }
        }
        Ok(out)
    }
}

/// Number of valid window positions along one axis.
pub fn window_count(extent: usize, kernel: usize, stride: usize) -> usize {
    (extent - kernel) / stride + 1
}

/// Cuts `image` into every `kernel × kernel` window that fits entirely inside
/// it, stepping by `stride`, in row-major grid order.
pub fn chunk_image(image: &ImageTensor, kernel: usize, stride: usize) -> Result<ChunkGrid> {
    if stride == 0 {
        return Err(Error::Parameter("stride must be at least 1".into()));
    }
    if kernel == 0 || kernel > image.height().min(image.width()) {
        return Err(Error::Dimension(format!(
            "kernel {kernel} does not fit a {}x{} image",
            image.height(),
            image.width()
        )));
    }
    let rows = window_count(image.height(), kernel, stride);
    let cols = window_count(image.width(), kernel, stride);
    let channels = image.channels();
    let mut chunks = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let position = Position {
                top: r * stride,
                left: c * stride,
            };
            let mut data = Vec::with_capacity(kernel * kernel * channels);
            for ch in 0..channels {
                let plane = image.channel(ch);
                for y in position.top..position.top + kernel {
                    let start = y * image.width() + position.left;
                    data.extend_from_slice(&plane[start..start + kernel]);
                }
            }
            chunks.push(Chunk {
                index: chunks.len(),
                position,
                pixels: Block {
                    size: kernel,
                    channels,
                    data,
                },
            });
        }
    }
    Ok(ChunkGrid {
        kernel,
        stride,
        rows,
        cols,
        chunks,
    })
}

/// Writes replacement blocks into a copy of `image`. Pixels covered by several
/// blocks take the mean of the contributions, rounded half-up; pixels covered
/// by none are copied unchanged.
pub fn superimpose(image: &ImageTensor, replacements: &[(Position, Block)]) -> Result<ImageTensor> {
    let mut out = image.clone();
    if replacements.is_empty() {
        return Ok(out);
    }
    let (h, w, channels) = (image.height(), image.width(), image.channels());
    for (pos, block) in replacements {
        if block.channels() != channels {
            return Err(Error::Dimension(format!(
                "block has {} channels, image has {channels}",
                block.channels()
            )));
        }
        if pos.top + block.size() > h || pos.left + block.size() > w {
            return Err(Error::Dimension(format!(
                "block of size {} at ({}, {}) exceeds {h}x{w} image",
                block.size(),
                pos.top,
                pos.left
            )));
        }
    }
    let plane = h * w;
    let mut sums = vec![0u32; plane * channels];
    let mut counts = vec![0u32; plane];
    for (pos, block) in replacements {
        let k = block.size();
        for y in 0..k {
            let row = (pos.top + y) * w + pos.left;
            for x in 0..k {
                counts[row + x] += 1;
            }
        }
        for ch in 0..channels {
            let src = block.channel(ch);
            let dst = &mut sums[ch * plane..(ch + 1) * plane];
            for y in 0..k {
                let row = (pos.top + y) * w + pos.left;
                for x in 0..k {
                    dst[row + x] += u32::from(src[y * k + x]);
                }
            }
        }
    }
    for ch in 0..channels {
        let dst = out.channel_mut(ch);
        let src = &sums[ch * plane..(ch + 1) * plane];
        for p in 0..plane {
            let n = counts[p];
            if n > 0 {
                // half-up rounding of sum / n
                dst[p] = ((2 * src[p] + n) / (2 * n)) as u8;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(h: usize, w: usize, c: usize) -> ImageTensor {
        ImageTensor::from_fn(h, w, c, |y, x, ch| ((y * 3 + x * 5 + ch * 7) % 256) as u8).unwrap()
    }

    #[test]
    fn grid_sizes() {
        let img = ImageTensor::filled(224, 224, 3, 0).unwrap();
        let g = chunk_image(&img, 50, 58).unwrap();
        assert_eq!((g.rows(), g.cols(), g.len()), (4, 4, 16));
        let g = chunk_image(&img, 50, 29).unwrap();
        assert_eq!((g.rows(), g.cols(), g.len()), (7, 7, 49));
        let g = chunk_image(&img, 50, 25).unwrap();
        assert_eq!(g.len(), 49);

        let small = ImageTensor::filled(50, 50, 1, 0).unwrap();
        let g = chunk_image(&small, 50, 1).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.chunks()[0].position, Position { top: 0, left: 0 });
    }

    #[test]
    fn chunk_errors() {
        let img = ImageTensor::filled(40, 60, 1, 0).unwrap();
        assert!(matches!(chunk_image(&img, 41, 1), Err(Error::Dimension(_))));
        assert!(matches!(chunk_image(&img, 10, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn chunk_pixels_match_window() {
        let img = ramp(30, 40, 3);
        let g = chunk_image(&img, 8, 5).unwrap();
        for ch in g.chunks() {
            for c in 0..3 {
                for y in 0..8 {
                    for x in 0..8 {
                        assert_eq!(
                            ch.pixels.channel(c)[y * 8 + x],
                            img.get(ch.position.top + y, ch.position.left + x, c)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn neighbor_counts() {
        let img = ImageTensor::filled(224, 224, 1, 0).unwrap();
        let g = chunk_image(&img, 50, 58).unwrap();
        assert_eq!(g.neighbors_of(5).unwrap(), vec![0, 1, 2, 4, 6, 8, 9, 10]);
        assert_eq!(g.neighbors_of(0).unwrap(), vec![1, 4, 5]);
        assert_eq!(g.neighbors_of(1).unwrap().len(), 5);
        assert!(matches!(g.neighbors_of(16), Err(Error::Parameter(_))));

        let single = chunk_image(&ImageTensor::filled(50, 50, 1, 0).unwrap(), 50, 1).unwrap();
        assert!(single.neighbors_of(0).unwrap().is_empty());
    }

    #[test]
    fn superimpose_identity_and_zeroing() {
        let img = ramp(20, 20, 3);
        assert_eq!(superimpose(&img, &[]).unwrap(), img);

        let pos = Position { top: 4, left: 6 };
        let out = superimpose(&img, &[(pos, Block::filled(5, 3, 0))]).unwrap();
        for c in 0..3 {
            for y in 0..20 {
                for x in 0..20 {
                    let inside = (4..9).contains(&y) && (6..11).contains(&x);
                    let want = if inside { 0 } else { img.get(y, x, c) };
                    assert_eq!(out.get(y, x, c), want);
                }
            }
        }
    }

    #[test]
    fn superimpose_overlap_mean() {
        let img = ImageTensor::filled(4, 8, 1, 7).unwrap();
        let out = superimpose(
            &img,
            &[
                (Position { top: 0, left: 0 }, Block::filled(4, 1, 100)),
                (Position { top: 0, left: 2 }, Block::filled(4, 1, 200)),
            ],
        )
        .unwrap();
        let row: Vec<u8> = (0..8).map(|x| out.get(1, x, 0)).collect();
        assert_eq!(row, vec![100, 100, 150, 150, 200, 200, 7, 7]);

        // 1 and 2 average to 1.5, which rounds up
        let out = superimpose(
            &img,
            &[
                (Position { top: 0, left: 0 }, Block::filled(2, 1, 1)),
                (Position { top: 0, left: 0 }, Block::filled(2, 1, 2)),
            ],
        )
        .unwrap();
        assert_eq!(out.get(0, 0, 0), 2);
    }

    #[test]
    fn superimpose_rejects_bad_blocks() {
        let img = ImageTensor::filled(10, 10, 3, 0).unwrap();
        let off_edge = [(Position { top: 6, left: 0 }, Block::filled(5, 3, 0))];
        assert!(matches!(
            superimpose(&img, &off_edge),
            Err(Error::Dimension(_))
        ));
        let wrong_channels = [(Position { top: 0, left: 0 }, Block::filled(5, 1, 0))];
        assert!(matches!(
            superimpose(&img, &wrong_channels),
            Err(Error::Dimension(_))
        ));
    }

    proptest! {
        #[test]
        fn neighbors_symmetric(rows in 1usize..7, cols in 1usize..7) {
            let k = 4;
            let img = ImageTensor::filled(k * rows, k * cols, 1, 0).unwrap();
            let g = chunk_image(&img, k, k).unwrap();
            for i in 0..g.len() {
                let ni = g.neighbors_of(i).unwrap();
                prop_assert!(ni.len() <= 8);
                for &j in &ni {
                    prop_assert!(g.neighbors_of(j).unwrap().contains(&i));
                }
            }
        }

        #[test]
        fn tiling_reconstructs_covered_region(h in 4usize..30, w in 4usize..30, k in 1usize..4, seed in any::<u64>()) {
            let img = ImageTensor::from_fn(h, w, 3, |y, x, c| {
                (seed.wrapping_mul(31).wrapping_add((y * 131 + x * 17 + c * 7) as u64) % 251) as u8
            }).unwrap();
            let g = chunk_image(&img, k, k).unwrap();
            let blank = ImageTensor::filled(h, w, 3, 0).unwrap();
            let pieces: Vec<_> = g.chunks().iter().map(|c| (c.position, c.pixels.clone())).collect();
            let rebuilt = superimpose(&blank, &pieces).unwrap();
            let (ch, cw) = (g.rows() * k, g.cols() * k);
            for c in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        let want = if y < ch && x < cw { img.get(y, x, c) } else { 0 };
                        prop_assert_eq!(rebuilt.get(y, x, c), want);
                    }
                }
            }
        }

        #[test]
        fn superimpose_leaves_outside_untouched(top in 0usize..12, left in 0usize..12, v in any::<u8>()) {
            let img = ramp(16, 16, 1);
            let out = superimpose(&img, &[(Position { top, left }, Block::filled(4, 1, v))]).unwrap();
            for y in 0..16 {
                for x in 0..16 {
                    let inside = (top..top + 4).contains(&y) && (left..left + 4).contains(&x);
                    if !inside {
                        prop_assert_eq!(out.get(y, x, 0), img.get(y, x, 0));
                    }
                }
            }
        }
    }
}
