//! Top-k evaluation at word and page level.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::{in_top_k, mean_distribution, ranking};

/// Most frequent (true, predicted) mistakes kept in a report.
pub const CONFUSION_LIMIT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Word,
    Page,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::Word => "word",
            Level::Page => "page",
        }
    }
}

/// One classified item: a word image or an aggregated page.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    /// Image path for words, page id for pages.
    pub key: String,
    pub label: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub truth: usize,
    pub predicted: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub level: Level,
    pub count: usize,
    pub top1: f64,
    pub top5: f64,
    /// Top-1 accuracy per true writer.
    pub per_writer_accuracy: BTreeMap<usize, f64>,
    /// Items per true writer.
    pub per_writer_count: BTreeMap<usize, usize>,
    /// Most frequent top-1 mistakes, by decreasing count.
    pub confusion: Vec<Confusion>,
}

/// Top-1/top-5 over `items`. Ranking ties go to the lower writer index.
pub fn evaluate(level: Level, items: &[Scored]) -> EvalReport {
    let mut hits1 = 0usize;
    let mut hits5 = 0usize;
    let mut per_writer: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut mistakes: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for it in items {
        let top = ranking(&it.probs)[0];
        let ok = top == it.label;
        hits1 += ok as usize;
        hits5 += in_top_k(&it.probs, it.label, 5) as usize;
        let w = per_writer.entry(it.label).or_default();
        w.0 += 1;
        w.1 += ok as usize;
        if !ok {
            *mistakes.entry((it.label, top)).or_default() += 1;
        }
    }
    let frac = |h: usize| {
        if items.is_empty() {
            0.0
        } else {
            h as f64 / items.len() as f64
        }
    };
    let mut confusion: Vec<Confusion> = mistakes
        .into_iter()
        .map(|((truth, predicted), count)| Confusion {
            truth,
            predicted,
            count,
        })
        .collect();
    // Stable sort keeps the (truth, predicted) order among equal counts.
    confusion.sort_by_key(|c| core::cmp::Reverse(c.count));
    confusion.truncate(CONFUSION_LIMIT);
    EvalReport {
        level,
        count: items.len(),
        top1: frac(hits1),
        top5: frac(hits5),
        per_writer_accuracy: per_writer
            .iter()
            .map(|(&w, &(n, ok))| (w, ok as f64 / n as f64))
            .collect(),
        per_writer_count: per_writer.iter().map(|(&w, &(n, _))| (w, n)).collect(),
        confusion,
    }
}

/// Groups word predictions by page and averages their probability vectors.
/// Pages come out sorted by id. Every word of a page must carry the same
/// writer.
pub fn aggregate_pages<'a, I>(words: I) -> Result<Vec<Scored>>
where
    I: IntoIterator<Item = (&'a str, &'a Scored)>,
{
    let mut pages: BTreeMap<&str, (usize, Vec<Vec<f64>>)> = BTreeMap::new();
    for (page, w) in words {
        let entry = pages.entry(page).or_insert_with(|| (w.label, Vec::new()));
        if entry.0 != w.label {
            return Err(Error::Config(format!(
                "page `{page}` mixes writers {} and {}",
                entry.0, w.label
            )));
        }
        entry.1.push(w.probs.clone());
    }
    Ok(pages
        .into_iter()
        .map(|(page, (label, vectors))| Scored {
            key: page.into(),
            label,
            probs: mean_distribution(&vectors),
        })
        .collect())
}
