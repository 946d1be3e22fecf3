//! Task compositions beyond single documents: page streams and their
//! segmentation, page-to-document label mapping, bundles and page-type
//! counting.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::aggregate::Strategy;
use crate::error::{Error, Result};
use crate::metrics::Labels;
use crate::model::{argmax, BundleRecord, DocPrediction, LabelMap, LabelSpace, Manifest, PagePrediction, StreamRecord};

/// A contiguous run of stream pages, both ends inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub stream_id: String,
    pub start: usize,
    pub end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_label: Option<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn check_coverage<P: Borrow<PagePrediction>>(preds: &[P], len: usize) -> Result<()> {
    if preds.len() != len {
        return Err(Error::CoverageMismatch(format!(
            "{} predictions for {len} pages",
            preds.len()
        )));
    }
    for (i, p) in preds.iter().map(Borrow::borrow).enumerate() {
        if p.page_index != i {
            return Err(Error::CoverageMismatch(format!(
                "expected page {i}, found page {} of {:?}",
                p.page_index, p.doc_id
            )));
        }
    }
    Ok(())
}

/// Per-page argmax labels of a stream of `len` pages.
pub fn classify_stream<P: Borrow<PagePrediction>>(preds: &[P], len: usize) -> Result<Vec<usize>> {
    check_coverage(preds, len)?;
    Ok(preds.iter().map(|p| argmax(&p.borrow().probs)).collect())
}

/// Fraction of positions where `predicted` matches `truth`.
pub fn page_accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::CoverageMismatch(format!(
            "{} predicted labels for {} pages",
            predicted.len(),
            truth.len()
        )));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingRule {
    Unanimous,
    Majority,
}

/// Outcome of collapsing page labels into one document label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentLabel {
    Label(usize),
    /// Pages disagree; route to review.
    Conflict,
}

/// Maps page classes through `map` and reduces them to one document label.
///
/// `Unanimous` requires every page to map to the same target class;
/// `Majority` takes the most frequent target class and reports a conflict on
/// a tie.
pub fn map_pages_to_document(
    page_labels: &[usize],
    map: &LabelMap,
    rule: MappingRule,
) -> Result<DocumentLabel> {
    if page_labels.is_empty() {
        return Err(Error::InvalidArgument("no page labels to map".into()));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in page_labels {
        let k = map.map(c).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "page class {c} outside a source space of {} classes",
                map.source().size()
            ))
        })?;
        *counts.entry(k).or_default() += 1;
    }
    let outcome = match rule {
        MappingRule::Unanimous if counts.len() == 1 => {
            DocumentLabel::Label(*counts.keys().next().unwrap())
        }
        MappingRule::Unanimous => DocumentLabel::Conflict,
        MappingRule::Majority => {
            let top = *counts.values().max().unwrap();
            let mut winners = counts.iter().filter(|(_, &n)| n == top);
            match (winners.next(), winners.next()) {
                (Some((&k, _)), None) => DocumentLabel::Label(k),
                _ => DocumentLabel::Conflict,
            }
        }
    };
    Ok(outcome)
}

/// Splits a stream at every set bit. A set bit marks the first page of a new
/// document; page 0 always starts a segment.
pub fn segment_by_boundaries(stream_id: &str, boundaries: &[bool]) -> Result<Vec<Segment>> {
    if boundaries.is_empty() {
        return Err(Error::InvalidArgument(format!("stream {stream_id:?} is empty")));
    }
    let mut segments = Vec::new();
    let mut start = 0;
    for (i, &b) in boundaries.iter().enumerate().skip(1) {
        if b {
            segments.push(Segment {
                stream_id: stream_id.to_owned(),
                start,
                end: i - 1,
                predicted_label: None,
            });
            start = i;
        }
    }
    segments.push(Segment {
        stream_id: stream_id.to_owned(),
        start,
        end: boundaries.len() - 1,
        predicted_label: None,
    });
    Ok(segments)
}

/// True if the segments are contiguous, non-overlapping and cover `0..len`.
pub fn is_partition(segments: &[Segment], len: usize) -> bool {
    let mut next = 0;
    for s in segments {
        if s.start != next || s.end < s.start || s.end >= len {
            return false;
        }
        next = s.end + 1;
    }
    next == len && len > 0
}

/// Boundary detection in a stream followed by document classification of
/// every detected segment.
///
/// `boundary_preds` are over the binary boundary space and `class_preds`
/// over the document space, both indexed by stream position. Each segment is
/// labeled by applying `strategy` to its own pages.
pub fn two_stage_classify<B, K>(
    stream_id: &str,
    boundary_preds: &[B],
    class_preds: &[K],
    strategy: Strategy,
) -> Result<Vec<Segment>>
where
    B: Borrow<PagePrediction>,
    K: Borrow<PagePrediction>,
{
    if boundary_preds.len() != class_preds.len() {
        return Err(Error::CoverageMismatch(format!(
            "stream {stream_id:?}: {} boundary predictions but {} class predictions",
            boundary_preds.len(),
            class_preds.len()
        )));
    }
    check_coverage(class_preds, boundary_preds.len())?;
    let bits: Vec<bool> = classify_stream(boundary_preds, boundary_preds.len())?
        .into_iter()
        .map(|c| c == LabelSpace::BOUNDARY)
        .collect();
    let mut segments = segment_by_boundaries(stream_id, &bits)?;
    for seg in &mut segments {
        let pages: Vec<PagePrediction> = class_preds[seg.start..=seg.end]
            .iter()
            .map(Borrow::borrow)
            .enumerate()
            .map(|(i, p)| PagePrediction::new(stream_id, i, p.probs.clone()))
            .collect();
        seg.predicted_label = Some(strategy.apply(&pages)?.label);
    }
    Ok(segments)
}

/// Ground-truth segments of a stream: one per source-document run, labeled
/// with that document's label.
pub fn truth_segments(stream: &StreamRecord, manifest: &Manifest) -> Result<Vec<Segment>> {
    let bits: Vec<bool> = StreamRecord::boundaries_of(&stream.pages)
        .into_iter()
        .map(|b| b == LabelSpace::BOUNDARY)
        .collect();
    let mut segments = segment_by_boundaries(&stream.stream_id, &bits)?;
    for seg in &mut segments {
        let doc_id = &stream.pages[seg.start].0;
        let doc = manifest.get(doc_id).ok_or_else(|| {
            Error::InvalidRecord(format!("stream references unknown document {doc_id:?}"))
        })?;
        seg.predicted_label = doc.label;
    }
    Ok(segments)
}

/// F1 over segment start positions after page 0 (page 0 is always a start).
/// Two streams without any inner boundary score 1.
pub fn boundary_f1(predicted: &[Segment], truth: &[Segment]) -> f64 {
    let starts = |s: &[Segment]| -> BTreeSet<usize> {
        s.iter().map(|s| s.start).filter(|&i| i > 0).collect()
    };
    let (p, t) = (starts(predicted), starts(truth));
    if p.is_empty() && t.is_empty() {
        return 1.0;
    }
    let tp = p.intersection(&t).count();
    2.0 * tp as f64 / (p.len() + t.len()) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleOutcome {
    pub bundle_id: String,
    pub accuracy: f64,
    pub exact_match: bool,
}

/// Per-document accuracy inside one bundle, and whether every document was
/// classified correctly.
pub fn evaluate_bundle(
    predictions: &BTreeMap<String, DocPrediction>,
    bundle: &BundleRecord,
    labels: &Labels,
) -> Result<BundleOutcome> {
    if bundle.documents.is_empty() {
        return Err(Error::InvalidRecord(format!(
            "bundle {:?} is empty",
            bundle.bundle_id
        )));
    }
    let mut correct = 0;
    for doc_id in &bundle.documents {
        let pred = predictions.get(doc_id).ok_or_else(|| {
            Error::CoverageMismatch(format!(
                "bundle {:?}: no prediction for document {doc_id:?}",
                bundle.bundle_id
            ))
        })?;
        let y = labels.get(doc_id).ok_or_else(|| Error::MissingLabel {
            doc_id: doc_id.clone(),
        })?;
        correct += usize::from(pred.label == *y);
    }
    Ok(BundleOutcome {
        bundle_id: bundle.bundle_id.clone(),
        accuracy: correct as f64 / bundle.documents.len() as f64,
        exact_match: correct == bundle.documents.len(),
    })
}

/// Number of regions whose argmax is each class. An empty region list yields
/// the zero vector.
pub fn count_page_types<P: Borrow<PagePrediction>>(regions: &[P], n_classes: usize) -> Result<Vec<usize>> {
    let mut counts = vec![0; n_classes];
    for r in regions.iter().map(Borrow::borrow) {
        if r.probs.len() != n_classes {
            return Err(Error::LengthMismatch {
                doc_id: r.doc_id.clone(),
                expected: n_classes,
                found: r.probs.len(),
            });
        }
        counts[argmax(&r.probs)] += 1;
    }
    Ok(counts)
}
