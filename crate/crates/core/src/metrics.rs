//! Diversity and win-rate metrics.
//!
//! Self-BLEU is leave-one-out: each candidate is scored against all of its
//! siblings as references with clipped n-gram precision, add-one smoothing
//! when an order has no matches, and the closest-reference-length brevity
//! penalty. BLEU-2 is cumulative (geometric mean of the 1- and 2-gram
//! precisions). Distinct-n pools the n-grams of one item's candidates;
//! report-level numbers are macro-averaged over items.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;
use crate::error::{Error, Result};
use crate::generators::Candidate;
use crate::sim::{empirical_ctr, group_by_item, ratio, ArmStats, Group};

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *out.entry(g).or_insert(0) += 1;
        }
    }
    out
}

/// BLEU-n of `hypothesis` against `references`, all pre-tokenized.
pub fn sentence_bleu(hypothesis: &[String], references: &[Vec<String>], n: usize) -> f64 {
    assert!(n >= 1, "BLEU order must be positive");
    let c = hypothesis.len();
    if c == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for order in 1..=n {
        let hyp = ngram_counts(hypothesis, order);
        let total: usize = hyp.values().sum();
        if total == 0 {
            continue;
        }
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in references {
            for (g, k) in ngram_counts(r, order) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(k);
            }
        }
        let matches: usize = hyp
            .iter()
            .map(|(g, &k)| k.min(max_ref.get(g).copied().unwrap_or(0)))
            .sum();
        let p = if matches == 0 {
            1.0 / (total as f64 + 1.0)
        } else {
            matches as f64 / total as f64
        };
        log_sum += p.ln();
        orders += 1;
    }
    // Closest reference length, shorter one on ties.
    let r = references
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0);
    let bp = if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    bp * (log_sum / orders as f64).exp()
}

/// Mean leave-one-out BLEU-n (n = 1 or 2) over one item's candidates.
pub fn self_bleu<S: AsRef<str>>(candidates: &[S], n: usize) -> Result<f64> {
    if candidates.len() < 2 {
        return Err(Error::Invalid(format!(
            "self-BLEU needs at least 2 candidates, got {}",
            candidates.len()
        )));
    }
    if !(1..=2).contains(&n) {
        return Err(Error::Invalid(format!("self-BLEU order must be 1 or 2, got {n}")));
    }
    let toks: Vec<Vec<String>> = candidates.iter().map(|c| tokenize(c.as_ref())).collect();
    let mut sum = 0.0;
    for i in 0..toks.len() {
        let refs: Vec<Vec<String>> = toks
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, t)| t.clone())
            .collect();
        sum += sentence_bleu(&toks[i], &refs, n);
    }
    Ok(sum / toks.len() as f64)
}

/// Unique over total token n-grams across one item's candidates.
pub fn distinct_n<S: AsRef<str>>(candidates: &[S], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Invalid("distinct-n order must be positive".into()));
    }
    let toks: Vec<Vec<String>> = candidates.iter().map(|c| tokenize(c.as_ref())).collect();
    let mut unique: HashSet<&[String]> = HashSet::new();
    let mut total = 0usize;
    for t in &toks {
        if t.len() >= n {
            for g in t.windows(n) {
                unique.insert(g);
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Invalid(format!(
            "distinct-{n}: no candidate has at least {n} tokens"
        )));
    }
    Ok(unique.len() as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub self_bleu_1: f64,
    pub self_bleu_2: f64,
    pub distinct_2: f64,
    pub distinct_3: f64,
    pub k: usize,
}

impl DiversityReport {
    /// Macro-averages every metric over items. `k` is the largest
    /// per-item candidate count.
    pub fn from_candidates(candidates: &[Candidate]) -> Result<Self> {
        let mut by_item: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for c in candidates {
            by_item.entry(c.item_id.as_str()).or_default().push(c.text.as_str());
        }
        if by_item.is_empty() {
            return Err(Error::Invalid("no candidates to measure".into()));
        }
        let n = by_item.len() as f64;
        let mut report = DiversityReport {
            self_bleu_1: 0.0,
            self_bleu_2: 0.0,
            distinct_2: 0.0,
            distinct_3: 0.0,
            k: by_item.values().map(Vec::len).max().unwrap_or(0),
        };
        for texts in by_item.values() {
            report.self_bleu_1 += self_bleu(texts, 1)? / n;
            report.self_bleu_2 += self_bleu(texts, 2)? / n;
            report.distinct_2 += distinct_n(texts, 2)? / n;
            report.distinct_3 += distinct_n(texts, 3)? / n;
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WinLevel {
    Item,
    Candidate,
}

/// Item or candidate win rate over the exp group. Items whose human arm is
/// missing or unshown are not eligible; candidates whose arm is unshown are
/// not counted. A candidate identical to its human text never wins.
pub fn win_rates(stats: &[ArmStats], candidates: &[Candidate], level: WinLevel) -> Result<f64> {
    let grouped = group_by_item(stats);
    let mut per_item: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for c in candidates {
        per_item.entry(c.item_id.as_str()).or_default().push(c.text.as_str());
    }
    let mut eligible = 0usize;
    let mut wins = 0usize;
    for (item_id, texts) in per_item {
        let Some(arms) = grouped.get(item_id) else {
            return Err(Error::UnknownItem(item_id.to_owned()));
        };
        let Some(human_ctr) = arms.human(Group::Exp).and_then(empirical_ctr) else {
            continue;
        };
        let outcomes: Vec<bool> = texts
            .iter()
            .filter_map(|t| {
                let arm = arms.exp.get(t)?;
                let ctr = empirical_ctr(arm)?;
                Some(!arm.human && ctr > human_ctr)
            })
            .collect();
        match level {
            WinLevel::Item => {
                eligible += 1;
                wins += usize::from(outcomes.iter().any(|&w| w));
            }
            WinLevel::Candidate => {
                eligible += outcomes.len();
                wins += outcomes.iter().filter(|&&w| w).count();
            }
        }
    }
    if eligible == 0 {
        return Err(Error::Invalid(format!(
            "no eligible {} for a win rate",
            match level {
                WinLevel::Item => "items",
                WinLevel::Candidate => "candidates",
            }
        )));
    }
    Ok(wins as f64 / eligible as f64)
}

/// Pooled generated CTR over pooled human CTR, minus one (exp group).
pub fn relative_ctr_improvement(stats: &[ArmStats]) -> Result<f64> {
    let (mut gen_pv, mut gen_clicks, mut hu_pv, mut hu_clicks) = (0u64, 0u64, 0u64, 0u64);
    for s in stats.iter().filter(|s| s.group == Group::Exp) {
        if s.human {
            hu_pv += s.pv;
            hu_clicks += s.clicks;
        } else {
            gen_pv += s.pv;
            gen_clicks += s.clicks;
        }
    }
    let gen = ratio(gen_clicks, gen_pv)
        .ok_or_else(|| Error::Invalid("generated arms have zero page views".into()))?;
    let human = ratio(hu_clicks, hu_pv)
        .filter(|&h| h > 0.0)
        .ok_or_else(|| Error::Invalid("human arms have zero page views or clicks".into()))?;
    Ok(gen / human - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinReport {
    pub item_win_rate: f64,
    pub candidate_win_rate: f64,
    pub relative_ctr_improvement: f64,
}

impl WinReport {
    pub fn compute(stats: &[ArmStats], candidates: &[Candidate]) -> Result<Self> {
        Ok(WinReport {
            item_win_rate: win_rates(stats, candidates, WinLevel::Item)?,
            candidate_win_rate: win_rates(stats, candidates, WinLevel::Candidate)?,
            relative_ctr_improvement: relative_ctr_improvement(stats)?,
        })
    }
}
