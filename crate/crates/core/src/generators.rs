//! Candidate ad text generation.
//!
//! Two generators are provided. The diverse sampler retrieves the item's
//! top-K exemplars and renders one candidate per exemplar by instantiating
//! the exemplar's structural decomposition with the item's own keywords.
//! The baseline draws fixed-length token sequences from a unigram language
//! model with top-k truncation and temperature.
//!
//! # Structure templates
//!
//! A structure is a chain of segments joined by separators:
//!
//! | separator | rendered as |
//! |-----------|-------------|
//! | `+`       | a space     |
//! | `\|`      | `\|`        |
//! | `-`       | `-`         |
//! | `,`       | `, `        |
//!
//! A segment is a slot name, a `"quoted literal"`, or either of those in
//! `[brackets]` (rendered bracketed). Slot names, case-insensitive, may
//! carry a trailing number (`benefit1`); a bare number repeats the previous
//! slot kind, so `benefit1|2|3-item description` yields three benefits.
//!
//! | slot | names | filled with |
//! |------|-------|-------------|
//! | benefit | benefit, core benefit, key benefit, main benefit, selling point | next unused attribute phrase |
//! | attribute | attribute, key attribute, feature, detail, additional information | next unused attribute phrase |
//! | item name | item name, item, name, product name | the title phrase |
//! | item description | item description, description | title plus up to two unused attributes |
//! | problem | problem, targeted problem, pain point | `Tired of Ordinary <Head>?` |
//! | action | action, action guidance, action phrase, call to action | `Try This <Head>` |
//!
//! Item info is read as comma-separated phrases: the first is the title,
//! the rest are attributes, consumed in descending mean TF-IDF weight
//! against the repository statistics. `<Head>` is the title's last word.

use std::collections::{BTreeMap, HashSet};

use rand::distr::weighted::WeightedIndex;
use rand::prelude::Distribution;
use serde::{Deserialize, Serialize};

use crate::corpus::{embed_tfidf, tokenize, Exemplar, Item, Repository, TermStats};
use crate::error::{Error, Result};
use crate::seed::{derive_seed_parts, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Stylized,
    Sampled,
    Human,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub item_id: String,
    pub text: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_id: Option<String>,
}

impl Candidate {
    pub fn stylized(item_id: &str, text: &str, exemplar: &Exemplar) -> Self {
        Candidate {
            item_id: item_id.into(),
            text: text.into(),
            source: Source::Stylized,
            exemplar_id: Some(exemplar.id.clone()),
            style_id: Some(exemplar.style_id.clone()),
        }
    }

    pub fn sampled(item_id: &str, text: &str) -> Self {
        Candidate {
            item_id: item_id.into(),
            text: text.into(),
            source: Source::Sampled,
            exemplar_id: None,
            style_id: None,
        }
    }

    pub fn human(item: &Item) -> Self {
        Candidate {
            item_id: item.id.clone(),
            text: item.human_text.clone(),
            source: Source::Human,
            exemplar_id: None,
            style_id: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Invalid(format!(
                "candidate for {:?} has empty text",
                self.item_id
            )));
        }
        if self.source == Source::Stylized && (self.exemplar_id.is_none() || self.style_id.is_none())
        {
            return Err(Error::Invalid(format!(
                "stylized candidate for {:?} lacks exemplar_id/style_id",
                self.item_id
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Structure templates

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Benefit,
    Attribute,
    ItemName,
    ItemDescription,
    Problem,
    Action,
}

impl Slot {
    fn from_name(name: &str) -> Option<Slot> {
        let name = name.split_whitespace().collect::<Vec<_>>().join(" ");
        let slot = match name.as_str() {
            "benefit" | "core benefit" | "key benefit" | "main benefit" | "selling point" => {
                Slot::Benefit
            }
            "attribute" | "key attribute" | "feature" | "detail" | "additional information" => {
                Slot::Attribute
            }
            "item name" | "item" | "name" | "product name" => Slot::ItemName,
            "item description" | "description" => Slot::ItemDescription,
            "problem" | "targeted problem" | "pain point" => Slot::Problem,
            "action" | "action guidance" | "action phrase" | "call to action" => Slot::Action,
            _ => return None,
        };
        Some(slot)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Content {
    Slot(Slot),
    Literal(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Segment {
    content: Content,
    bracketed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Template {
    segments: Vec<Segment>,
    /// `separators[i]` joins `segments[i]` and `segments[i + 1]`.
    separators: Vec<&'static str>,
}

fn malformed(template: &str, reason: impl Into<String>) -> Error {
    Error::MalformedStructure {
        template: template.to_owned(),
        reason: reason.into(),
    }
}

fn separator(ch: char) -> Option<&'static str> {
    match ch {
        '+' => Some(" "),
        '|' => Some("|"),
        '-' => Some("-"),
        ',' => Some(", "),
        _ => None,
    }
}

fn parse_template(template: &str) -> Result<Template> {
    let mut raw_segments: Vec<String> = Vec::new();
    let mut separators = Vec::new();
    let mut buf = String::new();
    let mut in_quote = false;
    let mut depth = 0usize;

    for ch in template.chars() {
        match ch {
            '"' => {
                in_quote = !in_quote;
                buf.push(ch);
            }
            '[' if !in_quote => {
                if depth > 0 {
                    return Err(malformed(template, "nested brackets"));
                }
                depth += 1;
                buf.push(ch);
            }
            ']' if !in_quote => {
                if depth == 0 {
                    return Err(malformed(template, "unbalanced ']'"));
                }
                depth -= 1;
                buf.push(ch);
            }
            c if !in_quote && depth == 0 && separator(c).is_some() => {
                raw_segments.push(std::mem::take(&mut buf));
                separators.push(separator(c).expect("checked"));
            }
            c => buf.push(c),
        }
    }
    if in_quote {
        return Err(malformed(template, "unterminated quote"));
    }
    if depth > 0 {
        return Err(malformed(template, "unbalanced '['"));
    }
    raw_segments.push(buf);

    let mut segments = Vec::with_capacity(raw_segments.len());
    let mut previous: Option<Slot> = None;
    for raw in &raw_segments {
        let seg = parse_segment(template, raw.trim(), previous)?;
        if let Content::Slot(s) = seg.content {
            previous = Some(s);
        }
        segments.push(seg);
    }
    Ok(Template {
        segments,
        separators,
    })
}

fn parse_segment(template: &str, raw: &str, previous: Option<Slot>) -> Result<Segment> {
    if raw.is_empty() {
        return Err(malformed(template, "empty segment"));
    }
    let (inner, bracketed) = match raw.strip_prefix('[') {
        Some(rest) => match rest.strip_suffix(']') {
            Some(inner) => (inner.trim(), true),
            None => return Err(malformed(template, format!("stray text around {raw:?}"))),
        },
        None => (raw, false),
    };
    if inner.is_empty() {
        return Err(malformed(template, "empty segment"));
    }
    if let Some(body) = inner.strip_prefix('"') {
        let lit = body
            .strip_suffix('"')
            .ok_or_else(|| malformed(template, format!("stray text around {inner:?}")))?;
        if lit.trim().is_empty() {
            return Err(malformed(template, "empty literal"));
        }
        return Ok(Segment {
            content: Content::Literal(lit.trim().to_owned()),
            bracketed,
        });
    }
    let lower = inner.to_lowercase();
    let name = lower.trim_end_matches(|c: char| c.is_ascii_digit()).trim();
    let slot = if name.is_empty() {
        previous.ok_or_else(|| malformed(template, "bare number with no preceding slot"))?
    } else {
        Slot::from_name(name)
            .ok_or_else(|| malformed(template, format!("unknown slot {name:?}")))?
    };
    Ok(Segment {
        content: Content::Slot(slot),
        bracketed,
    })
}

/// Validates a structure string without rendering it.
pub fn check_structure(structure: &str) -> Result<()> {
    parse_template(structure).map(|_| ())
}

fn title_case(phrase: &str) -> String {
    phrase
        .split_whitespace()
        .map(|w| {
            let mut chars = w.chars();
            match chars.next() {
                Some(first) => first.to_uppercase().chain(chars).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Keyword material extracted from an item's info text.
struct ItemMaterial {
    title: String,
    head: String,
    /// Attribute phrases, best first.
    attributes: Vec<String>,
    /// Title keywords, best first; fallback when attributes run out.
    title_keywords: Vec<String>,
}

impl ItemMaterial {
    fn new(item: &Item, stats: &TermStats) -> Self {
        let weights = embed_tfidf(&item.info_text, stats);
        let phrase_score = |p: &str| {
            let toks = tokenize(p);
            if toks.is_empty() {
                0.0
            } else {
                toks.iter().map(|t| weights.get(t)).sum::<f64>() / toks.len() as f64
            }
        };
        let mut phrases = item
            .info_text
            .split([',', ';', '|'])
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::to_owned);
        let title = phrases.next().unwrap_or_else(|| item.info_text.trim().to_owned());
        let mut attributes: Vec<(String, f64)> =
            phrases.map(|p| (p.clone(), phrase_score(&p))).collect();
        attributes.sort_by(|a, b| b.1.total_cmp(&a.1));

        let mut title_keywords: Vec<(String, f64)> = Vec::new();
        for word in title.split_whitespace() {
            if !title_keywords.iter().any(|(w, _)| w == word) {
                title_keywords.push((word.to_owned(), phrase_score(word)));
            }
        }
        title_keywords.sort_by(|a, b| b.1.total_cmp(&a.1));

        let head = title.split_whitespace().last().unwrap_or("").to_owned();
        ItemMaterial {
            title,
            head,
            attributes: attributes.into_iter().map(|(p, _)| p).collect(),
            title_keywords: title_keywords.into_iter().map(|(w, _)| w).collect(),
        }
    }
}

struct Filler<'a> {
    material: &'a ItemMaterial,
    next_attribute: usize,
    next_keyword: usize,
}

impl Filler<'_> {
    fn next_phrase(&mut self) -> String {
        if let Some(p) = self.material.attributes.get(self.next_attribute) {
            self.next_attribute += 1;
            return title_case(p);
        }
        let kws = &self.material.title_keywords;
        if kws.is_empty() {
            return title_case(&self.material.title);
        }
        let kw = &kws[self.next_keyword % kws.len()];
        self.next_keyword += 1;
        title_case(kw)
    }

    fn fill(&mut self, slot: Slot) -> String {
        let head = title_case(&self.material.head);
        match slot {
            Slot::Benefit | Slot::Attribute => self.next_phrase(),
            Slot::ItemName => title_case(&self.material.title),
            Slot::ItemDescription => {
                let mut parts = vec![title_case(&self.material.title)];
                for _ in 0..2 {
                    match self.material.attributes.get(self.next_attribute) {
                        Some(p) => {
                            parts.push(title_case(p));
                            self.next_attribute += 1;
                        }
                        None => break,
                    }
                }
                parts.join(", ")
            }
            Slot::Problem => format!("Tired of Ordinary {head}?"),
            Slot::Action => format!("Try This {head}"),
        }
    }
}

/// Renders `exemplar.structure` for `item`. Deterministic.
pub fn stylize(exemplar: &Exemplar, item: &Item, stats: &TermStats) -> Result<Candidate> {
    let template = parse_template(&exemplar.structure)?;
    let material = ItemMaterial::new(item, stats);
    let mut filler = Filler {
        material: &material,
        next_attribute: 0,
        next_keyword: 0,
    };
    let mut text = String::new();
    for (i, seg) in template.segments.iter().enumerate() {
        if i > 0 {
            text.push_str(template.separators[i - 1]);
        }
        let body = match &seg.content {
            Content::Slot(slot) => filler.fill(*slot),
            Content::Literal(lit) => lit.clone(),
        };
        if seg.bracketed {
            text.push('[');
            text.push_str(&body);
            text.push(']');
        } else {
            text.push_str(&body);
        }
    }
    let candidate = Candidate::stylized(&item.id, text.trim(), exemplar);
    candidate.validate()?;
    Ok(candidate)
}

// ---------------------------------------------------------------------------
// Baseline sampler

/// Unigram language model with a fixed vocabulary order (most probable first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyLm {
    pub unigram_probs: BTreeMap<String, f64>,
    pub vocab: Vec<String>,
}

impl ToyLm {
    pub fn new(unigram_probs: BTreeMap<String, f64>) -> Result<Self> {
        if unigram_probs.is_empty() {
            return Err(Error::Invalid("language model needs at least one token".into()));
        }
        if unigram_probs.values().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Invalid("token probabilities must be non-negative".into()));
        }
        let total: f64 = unigram_probs.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!(
                "token probabilities sum to {total}, expected 1"
            )));
        }
        let mut vocab: Vec<String> = unigram_probs.keys().cloned().collect();
        vocab.sort_by(|a, b| unigram_probs[b].total_cmp(&unigram_probs[a]).then(a.cmp(b)));
        Ok(ToyLm {
            unigram_probs,
            vocab,
        })
    }

    /// Unigram relative frequencies over `texts`.
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            for tok in tokenize(t) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        let total: usize = counts.values().sum();
        if total == 0 {
            return Err(Error::Invalid("cannot fit a language model on empty texts".into()));
        }
        let probs = counts
            .into_iter()
            .map(|(k, c)| (k, c as f64 / total as f64))
            .collect();
        ToyLm::new(probs)
    }

    pub fn fit_items(items: &[Item]) -> Result<Self> {
        ToyLm::fit(items.iter().map(|i| i.human_text.as_str()))
    }

    /// Sampling distribution after top-k truncation and temperature.
    pub fn truncated_distribution(&self, top_k: usize, temperature: f64) -> Result<Vec<(&str, f64)>> {
        if top_k == 0 {
            return Err(Error::Config("top_k must be positive".into()));
        }
        if top_k > self.vocab.len() {
            return Err(Error::Config(format!(
                "top_k {top_k} exceeds vocabulary size {}",
                self.vocab.len()
            )));
        }
        if !(temperature > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let kept = &self.vocab[..top_k];
        let logits: Vec<f64> = kept
            .iter()
            .map(|t| self.unigram_probs[t].ln() / temperature)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = weights.iter().sum();
        Ok(kept
            .iter()
            .zip(weights)
            .map(|(t, w)| (t.as_str(), w / z))
            .collect())
    }
}

/// Draws `length` i.i.d. tokens for `item`; reproducible under `seed`.
pub fn sample_topk(
    lm: &ToyLm,
    item: &Item,
    length: usize,
    temperature: f64,
    top_k: usize,
    seed: u64,
) -> Result<Candidate> {
    if length == 0 {
        return Err(Error::Config("sample length must be positive".into()));
    }
    let dist = lm.truncated_distribution(top_k, temperature)?;
    let index = WeightedIndex::new(dist.iter().map(|(_, p)| *p))
        .map_err(|e| Error::Invalid(format!("sampling distribution: {e}")))?;
    let mut rng = rng_from(seed);
    let tokens: Vec<&str> = (0..length).map(|_| dist[index.sample(&mut rng)].0).collect();
    Ok(Candidate::sampled(&item.id, &tokens.join(" ")))
}

// ---------------------------------------------------------------------------
// Pluggable generation

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Diverse,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub mode: Mode,
    pub k: usize,
    pub temperature: f64,
    pub top_k: usize,
    pub sample_length: usize,
    /// Derived from the run seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            mode: Mode::Diverse,
            k: 5,
            temperature: 1.5,
            top_k: 100,
            sample_length: 8,
            seed: None,
        }
    }
}

/// Anything that can propose `k` ad texts for an item. An external
/// text-in/text-out model can implement this in place of the stylizer.
pub trait CandidateGenerator {
    fn generate(&self, item: &Item, k: usize) -> Result<Vec<Candidate>>;
}

/// Retrieval plus stylization.
pub struct DiverseSampler<'a> {
    pub repo: &'a Repository,
}

impl CandidateGenerator for DiverseSampler<'_> {
    fn generate(&self, item: &Item, k: usize) -> Result<Vec<Candidate>> {
        self.repo
            .retrieve_top_k(item, k)?
            .into_iter()
            .map(|(ex, _)| stylize(ex, item, self.repo.stats()))
            .collect()
    }
}

/// Top-k temperature sampling; candidate `j` uses the item seed plus `j`.
pub struct BaselineSampler<'a> {
    pub lm: &'a ToyLm,
    pub length: usize,
    pub temperature: f64,
    pub top_k: usize,
    pub seed: u64,
}

impl CandidateGenerator for BaselineSampler<'_> {
    fn generate(&self, item: &Item, k: usize) -> Result<Vec<Candidate>> {
        let item_seed = derive_seed_parts(self.seed, &["baseline", &item.id]);
        (0..k as u64)
            .map(|j| {
                sample_topk(
                    self.lm,
                    item,
                    self.length,
                    self.temperature,
                    self.top_k,
                    item_seed.wrapping_add(j),
                )
            })
            .collect()
    }
}

/// Generates `config.k` candidates for `item` in the configured mode.
/// Baseline mode clamps `top_k` to the vocabulary size.
pub fn generate_candidates(
    item: &Item,
    repo: &Repository,
    lm: Option<&ToyLm>,
    config: &GeneratorConfig,
    seed: u64,
) -> Result<Vec<Candidate>> {
    if config.k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    match config.mode {
        Mode::Diverse => DiverseSampler { repo }.generate(item, config.k),
        Mode::Baseline => {
            let lm = lm.ok_or_else(|| Error::Config("baseline mode needs a language model".into()))?;
            BaselineSampler {
                lm,
                length: config.sample_length,
                temperature: config.temperature,
                top_k: config.top_k.min(lm.vocab.len()),
                seed,
            }
            .generate(item, config.k)
        }
    }
}

/// Distinct exemplar ids of a candidate list (stylized only).
pub fn exemplar_ids(cands: &[Candidate]) -> HashSet<&str> {
    cands.iter().filter_map(|c| c.exemplar_id.as_deref()).collect()
}
