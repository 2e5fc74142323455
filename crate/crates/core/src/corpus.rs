//! Items, the exemplar repository, and TF-IDF retrieval over it.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::LatentCtrParams;

/// A sellable unit with its human-crafted ad text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub category: String,
    /// Title plus attribute keywords, comma separated.
    pub info_text: String,
    pub human_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<LatentCtrParams>,
}

impl Item {
    pub fn validate(&self) -> Result<()> {
        if self.info_text.trim().is_empty() {
            return Err(Error::Invalid(format!("item {}: empty info_text", self.id)));
        }
        if self.human_text.trim().is_empty() {
            return Err(Error::Invalid(format!("item {}: empty human_text", self.id)));
        }
        if let Some(latent) = &self.latent {
            latent.validate()?;
        }
        Ok(())
    }
}

/// A high-quality ad text together with its imitation tips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub id: String,
    pub item_info: String,
    pub ad_text: String,
    /// Structural decomposition, e.g. `[core benefit] + item description`.
    pub structure: String,
    /// Step-by-step writing guidance.
    pub guidance: Vec<String>,
    pub style_id: String,
}

impl Exemplar {
    pub fn validate(&self) -> Result<()> {
        if self.ad_text.trim().is_empty() {
            return Err(Error::Invalid(format!("exemplar {}: empty ad_text", self.id)));
        }
        if self.guidance.is_empty() {
            return Err(Error::Invalid(format!("exemplar {}: guidance is empty", self.id)));
        }
        Ok(())
    }

    /// Text the exemplar is indexed under for retrieval.
    pub fn retrieval_text(&self) -> String {
        format!("{} {}", self.item_info, self.ad_text)
    }
}

/// Checks id uniqueness and per-record invariants of a dataset.
pub fn validate_items(items: &[Item]) -> Result<()> {
    let mut seen = HashSet::new();
    for item in items {
        item.validate()?;
        if !seen.insert(item.id.as_str()) {
            return Err(Error::Invalid(format!("duplicate item id {:?}", item.id)));
        }
    }
    Ok(())
}

pub fn validate_exemplars(repo: &[Exemplar]) -> Result<()> {
    let mut seen = HashSet::new();
    for ex in repo {
        ex.validate()?;
        if !seen.insert(ex.id.as_str()) {
            return Err(Error::Invalid(format!("duplicate exemplar id {:?}", ex.id)));
        }
    }
    Ok(())
}

/// Lowercases, turns every non-alphanumeric character into a break
/// (apostrophes are dropped so "women's" stays one token) and splits.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut cleaned = String::with_capacity(text.len());
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cleaned.extend(ch.to_lowercase());
        } else if ch == '\'' || ch == '\u{2019}' {
            continue;
        } else {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Sparse term-weight vector. Terms act as their own ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVector {
    entries: BTreeMap<String, f64>,
}

impl SparseVector {
    pub fn from_entries(entries: impl IntoIterator<Item = (String, f64)>) -> Self {
        let entries = entries.into_iter().filter(|(_, w)| *w != 0.0).collect();
        SparseVector { entries }
    }

    pub fn get(&self, term: &str) -> f64 {
        self.entries.get(term).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn norm(&self) -> f64 {
        self.entries.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter().map(|(t, w)| w * large.get(t)).sum()
    }

    /// Cosine similarity; 0 when either side is empty.
    pub fn cosine(&self, other: &SparseVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            self.dot(other) / denom
        }
    }
}

/// Document frequencies over a repository.
#[derive(Debug, Clone, Default)]
pub struct TermStats {
    docs: usize,
    df: HashMap<String, usize>,
}

impl TermStats {
    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a str>) -> Self {
        let mut stats = TermStats::default();
        for doc in docs {
            stats.docs += 1;
            let unique: HashSet<String> = tokenize(doc).into_iter().collect();
            for term in unique {
                *stats.df.entry(term).or_insert(0) += 1;
            }
        }
        stats
    }

    pub fn from_repository(repo: &[Exemplar]) -> Self {
        let texts: Vec<String> = repo.iter().map(Exemplar::retrieval_text).collect();
        Self::from_documents(texts.iter().map(String::as_str))
    }

    pub fn num_docs(&self) -> usize {
        self.docs
    }

    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }

    /// `ln((N + 1) / (df + 1))`; zero for a term present in every document.
    pub fn idf(&self, term: &str) -> f64 {
        ((self.docs as f64 + 1.0) / (self.df(term) as f64 + 1.0)).ln()
    }
}

/// Raw term frequency times smoothed idf.
pub fn embed_tfidf(text: &str, stats: &TermStats) -> SparseVector {
    let mut tf: BTreeMap<String, usize> = BTreeMap::new();
    for tok in tokenize(text) {
        *tf.entry(tok).or_insert(0) += 1;
    }
    SparseVector::from_entries(tf.into_iter().map(|(term, count)| {
        let w = count as f64 * stats.idf(&term);
        (term, w)
    }))
}

/// Exemplar repository with its term statistics and cached embeddings.
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct Repository {
    exemplars: Vec<Exemplar>,
    stats: TermStats,
    embeddings: Vec<SparseVector>,
}

impl Repository {
    pub fn new(exemplars: Vec<Exemplar>) -> Result<Self> {
        validate_exemplars(&exemplars)?;
        let stats = TermStats::from_repository(&exemplars);
        let embeddings = exemplars
            .iter()
            .map(|e| embed_tfidf(&e.retrieval_text(), &stats))
            .collect();
        Ok(Repository {
            exemplars,
            stats,
            embeddings,
        })
    }

    pub fn exemplars(&self) -> &[Exemplar] {
        &self.exemplars
    }

    pub fn stats(&self) -> &TermStats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }

    /// All exemplars scored against `query`, most similar first, ties by id.
    pub fn ranked(&self, query: &str) -> Vec<(&Exemplar, f64)> {
        let q = embed_tfidf(query, &self.stats);
        let mut scored: Vec<(&Exemplar, f64)> = self
            .exemplars
            .iter()
            .zip(&self.embeddings)
            .map(|(ex, emb)| (ex, q.cosine(emb)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.0.id.cmp(&b.0.id))
        });
        scored
    }

    /// The `k` exemplars most similar to the item's info text.
    pub fn retrieve_top_k(&self, item: &Item, k: usize) -> Result<Vec<(&Exemplar, f64)>> {
        if k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if k > self.len() {
            return Err(Error::InsufficientExemplars {
                requested: k,
                available: self.len(),
            });
        }
        let mut ranked = self.ranked(&item.info_text);
        ranked.truncate(k);
        Ok(ranked)
    }
}

/// Convenience wrapper building a throwaway [`Repository`].
pub fn retrieve_top_k(item: &Item, repo: &[Exemplar], k: usize) -> Result<Vec<Exemplar>> {
    let repo = Repository::new(repo.to_vec())?;
    Ok(repo
        .retrieve_top_k(item, k)?
        .into_iter()
        .map(|(e, _)| e.clone())
        .collect())
}
