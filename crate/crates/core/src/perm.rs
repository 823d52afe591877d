use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A bijection on `0..n`. Vertex `v` maps to `self[v]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    /// Validates that `images` is a bijection on `0..images.len()`.
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &x in &images {
            if x >= n || seen[x] {
                return Err(Error::InvalidPermutation(format!("{images:?}")));
            }
            seen[x] = true;
        }
        Ok(Permutation(images))
    }

    pub(crate) fn from_vec_unchecked(images: Vec<usize>) -> Self {
        Permutation(images)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, v: usize) -> usize {
        self.0[v]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &x) in self.0.iter().enumerate() {
            inv[x] = i;
        }
        Permutation(inv)
    }

    /// `(self ∘ other)(v) = self(other(v))`.
    pub fn compose(&self, other: &Permutation) -> Self {
        Permutation(other.0.iter().map(|&x| self.0[x]).collect())
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &x)| i == x)
    }

    /// Maps an unordered pair, returning it sorted.
    pub fn apply_pair(&self, u: usize, v: usize) -> (usize, usize) {
        let (a, b) = (self.0[u], self.0[v]);
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }
}

impl std::ops::Index<usize> for Permutation {
    type Output = usize;
    fn index(&self, v: usize) -> &usize {
        &self.0[v]
    }
}
