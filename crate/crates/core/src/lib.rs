//! Model-agnostic image pre-processing that finds localized adversarial
//! patches and neutralizes them.
//!
//! The image is cut into overlapping square chunks. Each chunk is described
//! by the mutual information it shares with its eight grid neighbours, an
//! isolation forest with separability-guided cuts scores those descriptions,
//! and the highest-scoring chunks are replaced by truncated-SVD
//! reconstructions.
//!
//! ```no_run
//! use patch_defense::{defend, load_image, save_image, PipelineConfig};
//!
//! let image = load_image("input.png")?;
//! let result = defend(&image, &PipelineConfig::default())?;
//! save_image(result.image(), "defended.png")?;
//! # Ok::<(), patch_defense::Error>(())
//! ```

pub mod bench;
pub mod chunking;
pub mod error;
pub mod iforest;
pub mod image_io;
pub mod mi_features;
pub mod mitigation;
pub mod pipeline;

pub use chunking::{chunk_image, superimpose, Block, Chunk, ChunkGrid, Position};
pub use error::{Error, Result};
pub use iforest::{baseline_random_forest, build_forest, IsolationForest};
pub use image_io::{load_image, save_image, ImageTensor};
pub use mi_features::{extract_features, mutual_information, ChunkFeatures, HistogramConfig};
pub use mitigation::{mitigate_chunk, svd_reduce, RetentionPolicy};
pub use pipeline::{defend, defend_batch, DefenseResult, PipelineConfig};
