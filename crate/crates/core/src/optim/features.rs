//! Hashed n-gram features shared by the policy and the simulated world.
//!
//! For a text attached to an item, the map emits word unigrams, word
//! bigrams and character trigrams of the lowercased text. Every n-gram is
//! crossed with the item category before hashing, so the same phrase may
//! carry a different weight in shoes than in kitchenware. Character trigrams
//! see punctuation, which is how brackets and `|` chains become visible.

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Item};
use crate::seed::fnv1a;

pub const DEFAULT_DIMENSION: usize = 4096;
pub const DEFAULT_HASH_SEED: u64 = 0x5eed_0fad_7e47;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub dimension: usize,
    pub hash_seed: u64,
}

impl Default for FeatureMap {
    fn default() -> Self {
        FeatureMap {
            dimension: DEFAULT_DIMENSION,
            hash_seed: DEFAULT_HASH_SEED,
        }
    }
}

/// Sorted, merged `(slot, value)` list.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseFeatures {
    entries: Vec<(u32, f64)>,
}

impl SparseFeatures {
    fn from_unsorted(mut raw: Vec<(u32, f64)>) -> Self {
        raw.sort_by_key(|&(i, _)| i);
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(raw.len());
        for (i, v) in raw {
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => entries.push((i, v)),
            }
        }
        entries.retain(|&(_, v)| v != 0.0);
        SparseFeatures { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, v)| v * dense[i as usize])
            .sum()
    }

    /// `dense += scale * self`
    pub fn add_scaled_to(&self, dense: &mut [f64], scale: f64) {
        for &(i, v) in &self.entries {
            dense[i as usize] += scale * v;
        }
    }

    pub fn to_dense(&self, dimension: usize) -> Vec<f64> {
        let mut out = vec![0.0; dimension];
        self.add_scaled_to(&mut out, 1.0);
        out
    }

    fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            for e in &mut self.entries {
                e.1 /= n;
            }
        }
        self
    }
}

/// All n-gram keys of `text`, before category crossing and hashing.
pub fn ngrams(text: &str) -> Vec<String> {
    let tokens = tokenize(text);
    let mut out = Vec::new();
    for t in &tokens {
        out.push(format!("w1:{t}"));
    }
    for w in tokens.windows(2) {
        out.push(format!("w2:{} {}", w[0], w[1]));
    }
    let chars: Vec<char> = text.trim().to_lowercase().chars().collect();
    for w in chars.windows(3) {
        out.push(format!("c3:{}", w.iter().collect::<String>()));
    }
    out
}

impl FeatureMap {
    pub fn new(dimension: usize, hash_seed: u64) -> Self {
        assert!(dimension > 0, "feature dimension must be positive");
        FeatureMap {
            dimension,
            hash_seed,
        }
    }

    /// Slot of one category-crossed n-gram.
    pub fn slot(&self, category: &str, ngram: &str) -> u32 {
        let mut key = Vec::with_capacity(8 + category.len() + ngram.len() + 1);
        key.extend_from_slice(&self.hash_seed.to_le_bytes());
        key.extend_from_slice(category.as_bytes());
        key.push(0x1f);
        key.extend_from_slice(ngram.as_bytes());
        (fnv1a(&key) % self.dimension as u64) as u32
    }

    /// Unnormalized n-gram counts.
    pub fn counts(&self, item: &Item, text: &str) -> SparseFeatures {
        let raw = ngrams(text)
            .iter()
            .map(|g| (self.slot(&item.category, g), 1.0))
            .collect();
        SparseFeatures::from_unsorted(raw)
    }

    /// L2-normalized counts; zero for empty text.
    pub fn sparse(&self, item: &Item, text: &str) -> SparseFeatures {
        self.counts(item, text).normalized()
    }

    /// Dense form of [`FeatureMap::sparse`].
    pub fn featurize(&self, item: &Item, text: &str) -> Vec<f64> {
        self.sparse(item, text).to_dense(self.dimension)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item() -> Item {
        Item {
            id: "i1".into(),
            category: "shoes".into(),
            info_text: "x".into(),
            human_text: "x".into(),
            latent: None,
        }
    }

    #[test]
    fn empty_text_is_zero() {
        let fm = FeatureMap::default();
        assert!(fm.sparse(&item(), "").is_empty());
        assert!(fm.featurize(&item(), "").iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let fm = FeatureMap::default();
        let a = fm.featurize(&item(), "[Petite Boost] Chunky Heel");
        let b = fm.featurize(&item(), "[Petite Boost] Chunky Heel");
        assert_eq!(a, b);
        let n: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn category_changes_slots() {
        let fm = FeatureMap::default();
        let mut other = item();
        other.category = "kitchen".into();
        assert_ne!(fm.sparse(&item(), "red heel"), fm.sparse(&other, "red heel"));
    }

    #[test]
    fn ngram_inventory_for_three_tokens() {
        let grams = ngrams("red hot heel");
        // 3 unigrams, 2 bigrams, 12 - 2 = 10 char trigrams.
        assert_eq!(grams.len(), 15);
        assert!(grams.contains(&"w2:hot heel".to_string()));
        assert!(grams.contains(&"c3:d h".to_string()));
    }
}
