use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::separation::{scan, SortedAttribute};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Internal {
        attribute: usize,
        /// `value < split` routes left, everything else right.
        split: f64,
        /// Separability index that selected this cut (0 for random cuts).
        separation: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    External {
        size: usize,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::External { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Edges from the root to the leaf reached by `x`, and that leaf's size.
    pub fn route(&self, x: &[f64]) -> (usize, usize) {
        let mut node = self;
        let mut edges = 0;
        loop {
            match node {
                TreeNode::External { size } => return (edges, *size),
                TreeNode::Internal {
                    attribute,
                    split,
                    left,
                    right,
                    ..
                } => {
                    node = if x[*attribute] < *split { left } else { right };
                    edges += 1;
                }
            }
        }
    }

    pub fn leaf_sizes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                TreeNode::External { size } => out.push(*size),
                TreeNode::Internal { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }
}

fn partition<'a>(
    points: &[&'a [f64]],
    attribute: usize,
    split: f64,
) -> (Vec<&'a [f64]>, Vec<&'a [f64]>) {
    points.iter().partition(|p| p[attribute] < split)
}

/// Targeted-cut isolation tree. At each node `k_attrs` distinct attributes are
/// drawn, each is scanned for its most separable split, and the attribute
/// with the highest separability wins (ties go to the lowest ordinal). Nodes
/// whose drawn attributes are all constant become leaves.
pub fn build_tree<R: Rng + ?Sized>(
    points: &[&[f64]],
    height: usize,
    height_max: usize,
    k_attrs: usize,
    rng: &mut R,
) -> TreeNode {
    if height >= height_max || points.len() <= 1 {
        return TreeNode::External { size: points.len() };
    }
    let dims = points[0].len();
    let k = k_attrs.clamp(1, dims);
    let mut attrs = sample(rng, dims, k).into_vec();
    attrs.sort_unstable();

    let mut best: Option<(usize, f64, f64)> = None;
    for &q in &attrs {
        let column = SortedAttribute::new(points.iter().map(|p| p[q]).collect());
        let result = scan(&column);
        if result.evaluations == 0 {
            continue;
        }
        if best.is_none_or(|(_, _, sep)| result.highest_separation > sep) {
            best = Some((q, result.best_split, result.highest_separation));
        }
    }
    let Some((attribute, split, separation)) = best else {
        return TreeNode::External { size: points.len() };
    };

    let (left, right) = partition(points, attribute, split);
    TreeNode::Internal {
        attribute,
        split,
        separation,
        left: Box::new(build_tree(&left, height + 1, height_max, k_attrs, rng)),
        right: Box::new(build_tree(&right, height + 1, height_max, k_attrs, rng)),
    }
}

/// Classic isolation tree: uniformly random non-constant attribute, uniformly
/// random split inside its range.
pub fn build_random_tree<R: Rng + ?Sized>(
    points: &[&[f64]],
    height: usize,
    height_max: usize,
    rng: &mut R,
) -> TreeNode {
    if height >= height_max || points.len() <= 1 {
        return TreeNode::External { size: points.len() };
    }
    let dims = points[0].len();
    let ranges: Vec<(usize, f64, f64)> = (0..dims)
        .filter_map(|q| {
            let (lo, hi) = points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p[q]), hi.max(p[q]))
                });
            (hi > lo).then_some((q, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return TreeNode::External { size: points.len() };
    }
    let (attribute, lo, hi) = ranges[rng.gen_range(0..ranges.len())];
    let mut split = rng.gen_range(lo..hi);
    if split <= lo {
        split = hi;
    }
    let (left, right) = partition(points, attribute, split);
    TreeNode::Internal {
        attribute,
        split,
        separation: 0.0,
        left: Box::new(build_random_tree(&left, height + 1, height_max, rng)),
        right: Box::new(build_random_tree(&right, height + 1, height_max, rng)),
    }
}
