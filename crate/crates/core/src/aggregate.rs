//! Document-level inference from per-page probability vectors.
//!
//! Every strategy returns a [`DocPrediction`] whose label is the lowest-index
//! argmax of its score vector. Ties between pages resolve to the lower page
//! index. Confidence per strategy:
//!
//! | strategy            | scores                        | confidence               |
//! |---------------------|-------------------------------|--------------------------|
//! | first/second/last/l | selected page's vector        | its top-1 probability    |
//! | `max_conf`          | vector of the winning page    | global maximum entry     |
//! | `soft_vote`         | mean of page vectors          | max of the mean          |
//! | `hard_vote`         | page-argmax vote shares       | winning vote share       |
//! | `external_document` | supplied document vector      | its top-1 probability    |

use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{argmax, DocPrediction, DocumentScores, Manifest, PagePrediction, PredictionSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    First,
    Second,
    Last,
    /// Page at a fixed 0-based index.
    Index(usize),
    MaxConf,
    SoftVote,
    HardVote,
    /// Document-level vectors produced outside the engine (e.g. from a grid).
    ExternalDocument,
}

impl Strategy {
    /// The strategies evaluated over page predictions, in report order.
    pub const PAGE_BASED: [Strategy; 6] = [
        Strategy::First,
        Strategy::Second,
        Strategy::Last,
        Strategy::MaxConf,
        Strategy::SoftVote,
        Strategy::HardVote,
    ];

    /// Applies a page-based strategy to one document's page predictions.
    pub fn apply<P: Borrow<PagePrediction>>(self, pages: &[P]) -> Result<DocPrediction> {
        match self {
            Strategy::First | Strategy::Second | Strategy::Last | Strategy::Index(_) => {
                sample_page(pages, self)
            }
            Strategy::MaxConf => max_conf(pages),
            Strategy::SoftVote => soft_vote(pages),
            Strategy::HardVote => hard_vote(pages),
            Strategy::ExternalDocument => Err(Error::InvalidArgument(
                "external_document consumes document-level predictions, not pages".into(),
            )),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::First => f.write_str("first"),
            Strategy::Second => f.write_str("second"),
            Strategy::Last => f.write_str("last"),
            Strategy::Index(l) => write!(f, "index({l})"),
            Strategy::MaxConf => f.write_str("max_conf"),
            Strategy::SoftVote => f.write_str("soft_vote"),
            Strategy::HardVote => f.write_str("hard_vote"),
            Strategy::ExternalDocument => f.write_str("external_document"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let strategy = match s {
            "first" => Strategy::First,
            "second" => Strategy::Second,
            "last" => Strategy::Last,
            "max_conf" => Strategy::MaxConf,
            "soft_vote" => Strategy::SoftVote,
            "hard_vote" => Strategy::HardVote,
            "external_document" => Strategy::ExternalDocument,
            _ => {
                let index = s
                    .strip_prefix("index(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| Error::UnknownStrategy(s.to_owned()))?;
                Strategy::Index(index)
            }
        };
        Ok(strategy)
    }
}

impl Serialize for Strategy {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Checks that pages are non-empty, numbered `0..L` in order and share one
/// vector length. Returns the doc_id.
fn check_pages<P: Borrow<PagePrediction>>(pages: &[P]) -> Result<&str> {
    let first = pages.first().ok_or(Error::EmptyDocument)?.borrow();
    let width = first.probs.len();
    for (expected, page) in pages.iter().map(Borrow::borrow).enumerate() {
        if page.page_index != expected {
            return Err(Error::NonContiguousPages {
                doc_id: first.doc_id.clone(),
                expected,
                found: page.page_index,
            });
        }
        if page.probs.len() != width {
            return Err(Error::LengthMismatch {
                doc_id: first.doc_id.clone(),
                expected: width,
                found: page.probs.len(),
            });
        }
    }
    if width == 0 {
        return Err(Error::LengthMismatch {
            doc_id: first.doc_id.clone(),
            expected: 1,
            found: 0,
        });
    }
    Ok(&first.doc_id)
}

/// Predicts from a single page. Positions past the end clamp to the last page
/// and set `fallback_used`.
pub fn sample_page<P: Borrow<PagePrediction>>(pages: &[P], position: Strategy) -> Result<DocPrediction> {
    let doc_id = check_pages(pages)?;
    let last = pages.len() - 1;
    let wanted = match position {
        Strategy::First => 0,
        Strategy::Second => 1,
        Strategy::Last => last,
        Strategy::Index(l) => l,
        other => {
            return Err(Error::InvalidArgument(format!(
                "{other} is not a page position"
            )))
        }
    };
    let fallback = wanted > last;
    let page = pages[wanted.min(last)].borrow();
    let label = argmax(&page.probs);
    Ok(DocPrediction::from_scores(
        doc_id,
        position,
        page.probs.clone(),
        page.probs[label],
        fallback,
    ))
}

/// Picks the class of the single largest entry across all pages.
pub fn max_conf<P: Borrow<PagePrediction>>(pages: &[P]) -> Result<DocPrediction> {
    let doc_id = check_pages(pages)?;
    let mut best = (0, 0);
    let mut best_value = f64::NEG_INFINITY;
    for (l, page) in pages.iter().map(Borrow::borrow).enumerate() {
        for (k, &p) in page.probs.iter().enumerate() {
            if p > best_value {
                best_value = p;
                best = (l, k);
            }
        }
    }
    let winner = pages[best.0].borrow();
    let prediction =
        DocPrediction::from_scores(doc_id, Strategy::MaxConf, winner.probs.clone(), best_value, false);
    debug_assert_eq!(prediction.label, best.1);
    Ok(prediction)
}

/// Mean of the page vectors, summed in page order.
pub fn soft_vote<P: Borrow<PagePrediction>>(pages: &[P]) -> Result<DocPrediction> {
    let doc_id = check_pages(pages)?;
    let mut sums = vec![0.0; pages[0].borrow().probs.len()];
    for page in pages.iter().map(Borrow::borrow) {
        for (s, p) in sums.iter_mut().zip(&page.probs) {
            *s += p;
        }
    }
    let n = pages.len() as f64;
    sums.iter_mut().for_each(|s| *s /= n);
    let confidence = sums[argmax(&sums)];
    Ok(DocPrediction::from_scores(doc_id, Strategy::SoftVote, sums, confidence, false))
}

/// Majority vote over per-page argmax labels.
pub fn hard_vote<P: Borrow<PagePrediction>>(pages: &[P]) -> Result<DocPrediction> {
    let doc_id = check_pages(pages)?;
    let mut votes = vec![0usize; pages[0].borrow().probs.len()];
    for page in pages.iter().map(Borrow::borrow) {
        votes[argmax(&page.probs)] += 1;
    }
    let n = pages.len() as f64;
    let shares: Vec<f64> = votes.iter().map(|&v| v as f64 / n).collect();
    let confidence = shares[argmax(&shares)];
    Ok(DocPrediction::from_scores(doc_id, Strategy::HardVote, shares, confidence, false))
}

/// Wraps a document-level vector from an outside classifier.
pub fn external_document(scores: &DocumentScores) -> Result<DocPrediction> {
    if scores.probs.is_empty() {
        return Err(Error::LengthMismatch {
            doc_id: scores.doc_id.clone(),
            expected: 1,
            found: 0,
        });
    }
    let label = argmax(&scores.probs);
    Ok(DocPrediction::from_scores(
        scores.doc_id.clone(),
        Strategy::ExternalDocument,
        scores.probs.clone(),
        scores.probs[label],
        false,
    ))
}

/// Runs every strategy on every manifest document.
///
/// Documents are processed in parallel on the current rayon pool; each
/// output list is ordered by `doc_id`, independent of the worker count.
pub fn aggregate_all(
    predictions: &PredictionSet,
    manifest: &Manifest,
    strategies: &[Strategy],
) -> Result<BTreeMap<Strategy, Vec<DocPrediction>>> {
    let pages = predictions.pages_by_doc();
    let docs = predictions.documents_by_id();

    let mut out = BTreeMap::new();
    for &strategy in strategies {
        let preds = manifest
            .documents()
            .par_iter()
            .map(|doc| {
                let id = doc.doc_id.as_str();
                let result = if strategy == Strategy::ExternalDocument {
                    docs.get(id)
                        .ok_or_else(|| {
                            Error::CoverageMismatch("no document-level prediction".into())
                        })
                        .and_then(|d| external_document(d))
                } else {
                    let doc_pages = pages.get(id).map(Vec::as_slice).unwrap_or(&[]);
                    strategy.apply(doc_pages)
                };
                result.map_err(|e| Error::in_document(id, e))
            })
            .collect::<Result<Vec<_>>>()?;
        out.insert(strategy, preds);
    }
    Ok(out)
}
