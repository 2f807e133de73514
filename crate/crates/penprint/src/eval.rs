//! Word- and page-level evaluation.

use penprint_core::metrics::{aggregate_pages, evaluate, Scored};
use penprint_core::{EvalReport, Level, Model};

use crate::dataset::{stack, Sample};
use crate::error::Result;

/// Forward passes run on chunks of this many words.
pub const EVAL_BATCH: usize = 32;

/// Eval-mode probability vectors for every sample, in input order.
pub fn score_words(model: &mut Model<f32>, samples: &[&Sample]) -> Result<Vec<Scored>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_BATCH) {
        let preds = model.predict(&stack(chunk))?;
        for (s, p) in chunk.iter().zip(preds) {
            out.push(Scored {
                key: s.record.image_path.display().to_string(),
                label: s.record.writer_id,
                probs: p.probs,
            });
        }
    }
    Ok(out)
}

/// Averages word vectors per page.
pub fn score_pages(samples: &[&Sample], words: &[Scored]) -> Result<Vec<Scored>> {
    Ok(aggregate_pages(
        samples.iter().zip(words).map(|(s, w)| (s.record.page_id.as_str(), w)),
    )?)
}

pub fn evaluate_word_level(model: &mut Model<f32>, samples: &[&Sample]) -> Result<EvalReport> {
    Ok(evaluate(Level::Word, &score_words(model, samples)?))
}

pub fn evaluate_page_level(model: &mut Model<f32>, samples: &[&Sample]) -> Result<EvalReport> {
    let words = score_words(model, samples)?;
    Ok(evaluate(Level::Page, &score_pages(samples, &words)?))
}

/// Both reports from a single pass over the words.
pub fn evaluate_both(model: &mut Model<f32>, samples: &[&Sample]) -> Result<(EvalReport, EvalReport)> {
    let words = score_words(model, samples)?;
    let pages = score_pages(samples, &words)?;
    Ok((evaluate(Level::Word, &words), evaluate(Level::Page, &pages)))
}

pub fn evaluate_level(model: &mut Model<f32>, samples: &[&Sample], level: Level) -> Result<EvalReport> {
    match level {
        Level::Word => evaluate_word_level(model, samples),
        Level::Page => evaluate_page_level(model, samples),
    }
}
