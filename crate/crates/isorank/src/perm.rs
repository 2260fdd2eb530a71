//! Permutations of expert indices.
//!
//! A `Permutation` maps an expert index `i` to its position in the sorted
//! order: position 0 is the lowest row, position `n - 1` the highest. A matrix
//! `M` is isotonic "up to" a permutation `pi` when reindexing rows by
//! `pi.inverse()` makes every column nondecreasing.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permutation {
    /// `positions[i]` is the sorted position of expert `i`.
    positions: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            positions: (0..n).collect(),
        }
    }

    /// Builds a permutation from expert -> position, validating bijectivity.
    pub fn from_positions(positions: Vec<usize>) -> Result<Self> {
        let n = positions.len();
        let mut seen = vec![false; n];
        for &p in &positions {
            if p >= n || seen[p] {
                return Err(Error::InvalidInstance(format!(
                    "positions do not form a permutation of 0..{n}"
                )));
            }
            seen[p] = true;
        }
        Ok(Permutation { positions })
    }

    /// Uniformly random permutation.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut positions: Vec<usize> = (0..n).collect();
        positions.shuffle(rng);
        Permutation { positions }
    }

    /// Ranks experts by ascending score; ties broken by ascending index.
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[a]
                .partial_cmp(&scores[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut positions = vec![0usize; scores.len()];
        for (pos, &expert) in order.iter().enumerate() {
            positions[expert] = pos;
        }
        Permutation { positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Position of expert `i`.
    pub fn position(&self, i: usize) -> usize {
        self.positions[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.positions
    }

    /// Inverse map: `inverse()[p]` is the expert sitting at position `p`.
    pub fn inverse(&self) -> Vec<usize> {
        let mut inv = vec![0usize; self.positions.len()];
        for (i, &p) in self.positions.iter().enumerate() {
            inv[p] = i;
        }
        inv
    }

    /// Composition: expert `i` ends up at `outer.position(inner.position(i))`.
    pub fn compose(&self, inner: &Permutation) -> Permutation {
        assert_eq!(self.len(), inner.len(), "composing mismatched permutations");
        Permutation {
            positions: (0..self.len())
                .map(|i| self.positions[inner.positions[i]])
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn from_positions_rejects_non_bijections() {
        assert!(Permutation::from_positions(vec![0, 0, 1]).is_err());
        assert!(Permutation::from_positions(vec![0, 3, 1]).is_err());
        assert!(Permutation::from_positions(vec![2, 0, 1]).is_ok());
    }

    #[test]
    fn inverse_roundtrips() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = Permutation::random(17, &mut rng);
            let inv = p.inverse();
            for i in 0..17 {
                assert_eq!(inv[p.position(i)], i);
            }
        }
    }

    #[test]
    fn from_scores_breaks_ties_by_index() {
        let p = Permutation::from_scores(&[1.0, 0.5, 1.0, 0.2]);
        // ascending: expert 3 (0.2), expert 1 (0.5), then experts 0 and 2 tied.
        assert_eq!(p.as_slice(), &[2, 1, 3, 0]);
    }
}
