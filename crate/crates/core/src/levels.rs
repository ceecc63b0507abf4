//! Level bookkeeping: the partition of a state space into consecutive levels,
//! and probability vectors stored level by level.

use serde::{Deserialize, Serialize};

use crate::matrix::tv_padded;

/// Sizes of levels 0..s of a truncated state space, with the start offsets
/// they induce on the flat index range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelLayout {
    sizes: Vec<usize>,
}

impl LevelLayout {
    pub fn from_sizes(sizes: Vec<usize>) -> Self {
        assert!(sizes.iter().all(|&m| m > 0), "level sizes must be positive");
        LevelLayout { sizes }
    }

    /// Layout in which every state is its own level.
    pub fn flat(dim: usize) -> Self {
        LevelLayout { sizes: vec![1; dim] }
    }

    pub fn levels(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, k: usize) -> usize {
        self.sizes[k]
    }

    /// Total number of states across all levels.
    pub fn dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Flat index of the first state of level k.
    pub fn start(&self, k: usize) -> usize {
        self.sizes[..k].iter().sum()
    }

    pub fn range(&self, k: usize) -> std::ops::Range<usize> {
        let s = self.start(k);
        s..s + self.sizes[k]
    }

    pub fn last_level_range(&self) -> std::ops::Range<usize> {
        self.range(self.levels() - 1)
    }

    /// Splits a flat vector into per-level pieces.
    pub fn split(&self, flat: &[f64]) -> LevelVector {
        assert_eq!(flat.len(), self.dim(), "flat vector does not match layout");
        let mut parts = Vec::with_capacity(self.levels());
        for k in 0..self.levels() {
            parts.push(flat[self.range(k)].to_vec());
        }
        LevelVector::new(parts)
    }
}

/// A vector partitioned by level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelVector {
    parts: Vec<Vec<f64>>,
}

impl LevelVector {
    pub fn new(parts: Vec<Vec<f64>>) -> Self {
        LevelVector { parts }
    }

    pub fn levels(&self) -> usize {
        self.parts.len()
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.parts[k]
    }

    pub fn parts(&self) -> &[Vec<f64>] {
        &self.parts
    }

    pub fn flat(&self) -> Vec<f64> {
        self.parts.iter().flatten().copied().collect()
    }

    pub fn layout(&self) -> LevelLayout {
        LevelLayout::from_sizes(self.parts.iter().map(|p| p.len()).collect())
    }

    pub fn total_mass(&self) -> f64 {
        self.parts.iter().flatten().sum()
    }

    /// Mass in levels 0..=n.
    pub fn head_mass(&self, n: usize) -> f64 {
        self.parts.iter().take(n + 1).flatten().sum()
    }

    /// ℓ₁ distance to another level vector, flattened and zero-padded.
    pub fn tv_to(&self, other: &LevelVector) -> f64 {
        tv_padded(&self.flat(), &other.flat())
    }

    /// True when the level partitions have identical shapes.
    pub fn same_shape(&self, other: &LevelVector) -> bool {
        self.parts.len() == other.parts.len()
            && self.parts.iter().zip(&other.parts).all(|(a, b)| a.len() == b.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets() {
        let l = LevelLayout::from_sizes(vec![1, 2, 2]);
        assert_eq!(l.dim(), 5);
        assert_eq!(l.start(0), 0);
        assert_eq!(l.start(2), 3);
        assert_eq!(l.range(1), 1..3);
        assert_eq!(l.last_level_range(), 3..5);
    }

    #[test]
    fn split_and_flatten_round_trip() {
        let l = LevelLayout::from_sizes(vec![2, 1]);
        let v = l.split(&[0.5, 0.25, 0.25]);
        assert_eq!(v.level(0), &[0.5, 0.25]);
        assert_eq!(v.flat(), vec![0.5, 0.25, 0.25]);
        assert_eq!(v.layout(), l);
    }

    #[test]
    fn tv_pads_shorter_vector() {
        let a = LevelVector::new(vec![vec![0.5], vec![0.5]]);
        let b = LevelVector::new(vec![vec![0.5]]);
        assert_eq!(a.tv_to(&b), 0.5);
    }
}
