//! Domain types: label spaces, documents, bundles, streams and predictions.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::aggregate::Strategy;
use crate::error::{Error, Result};

/// Largest tolerated deviation of a probability vector's sum from 1.
///
/// Vectors within tolerance are renormalized on ingest, anything beyond is
/// reported as a normalization violation.
pub const PROB_TOLERANCE: f64 = 1e-4;

/// Index of the largest entry; ties resolve to the lowest index.
///
/// Returns 0 for an empty slice.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSpaceKind {
    PageLevel,
    DocumentLevel,
    BinaryBoundary,
}

/// An ordered, duplicate-free set of class names. The position of a name is
/// its class id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLabelSpace", into = "RawLabelSpace")]
pub struct LabelSpace {
    kind: LabelSpaceKind,
    classes: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLabelSpace {
    kind: LabelSpaceKind,
    classes: Vec<String>,
}

impl TryFrom<RawLabelSpace> for LabelSpace {
    type Error = Error;

    fn try_from(raw: RawLabelSpace) -> Result<Self> {
        LabelSpace::new(raw.kind, raw.classes)
    }
}

impl From<LabelSpace> for RawLabelSpace {
    fn from(space: LabelSpace) -> Self {
        RawLabelSpace {
            kind: space.kind,
            classes: space.classes,
        }
    }
}

impl LabelSpace {
    pub const NO_BOUNDARY: usize = 0;
    pub const BOUNDARY: usize = 1;

    pub fn new<S: Into<String>>(
        kind: LabelSpaceKind,
        classes: impl IntoIterator<Item = S>,
    ) -> Result<Self> {
        let classes: Vec<String> = classes.into_iter().map(Into::into).collect();
        if classes.is_empty() {
            return Err(Error::InvalidLabelSpace("no classes".into()));
        }
        let mut seen = HashSet::new();
        for name in &classes {
            if name.is_empty() {
                return Err(Error::InvalidLabelSpace("empty class name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidLabelSpace(format!(
                    "duplicate class name {name:?}"
                )));
            }
        }
        if kind == LabelSpaceKind::BinaryBoundary && classes != ["no_boundary", "boundary"] {
            return Err(Error::InvalidLabelSpace(
                "binary_boundary space must be exactly [\"no_boundary\", \"boundary\"]".into(),
            ));
        }
        Ok(LabelSpace { kind, classes })
    }

    pub fn binary_boundary() -> Self {
        LabelSpace {
            kind: LabelSpaceKind::BinaryBoundary,
            classes: vec!["no_boundary".into(), "boundary".into()],
        }
    }

    /// A space whose class names are the decimal ids `0..size`.
    pub fn anonymous(kind: LabelSpaceKind, size: usize) -> Result<Self> {
        LabelSpace::new(kind, (0..size).map(|i| i.to_string()))
    }

    pub fn kind(&self) -> LabelSpaceKind {
        self.kind
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn size(&self) -> usize {
        self.classes.len()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.classes.get(id).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }
}

/// Total many-to-one mapping from a page-level space onto a document-level
/// space, e.g. `id_front` and `id_back` both mapping to `id_card`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    source: LabelSpace,
    target: LabelSpace,
    mapping: Vec<usize>,
    reachable: BTreeSet<usize>,
}

impl LabelMap {
    /// `mapping[c]` is the target id of source class `c`.
    pub fn new(source: LabelSpace, target: LabelSpace, mapping: Vec<usize>) -> Result<Self> {
        if mapping.len() != source.size() {
            return Err(Error::InvalidLabelMap(format!(
                "mapping covers {} of {} source classes",
                mapping.len(),
                source.size()
            )));
        }
        if let Some(&bad) = mapping.iter().find(|&&k| k >= target.size()) {
            return Err(Error::InvalidLabelMap(format!(
                "target id {bad} outside target space of size {}",
                target.size()
            )));
        }
        let reachable = mapping.iter().copied().collect();
        Ok(LabelMap {
            source,
            target,
            mapping,
            reachable,
        })
    }

    /// Builds a map from `(source name, target name)` pairs. Every source
    /// class must appear exactly once.
    pub fn from_names<'a>(
        source: LabelSpace,
        target: LabelSpace,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self> {
        let mut mapping = vec![None; source.size()];
        for (from, to) in pairs {
            let c = source
                .id(from)
                .ok_or_else(|| Error::InvalidLabelMap(format!("unknown source class {from:?}")))?;
            let k = target
                .id(to)
                .ok_or_else(|| Error::InvalidLabelMap(format!("unknown target class {to:?}")))?;
            if mapping[c].replace(k).is_some() {
                return Err(Error::InvalidLabelMap(format!(
                    "source class {from:?} mapped twice"
                )));
            }
        }
        let mapping = mapping
            .into_iter()
            .enumerate()
            .map(|(c, k)| {
                k.ok_or_else(|| {
                    Error::InvalidLabelMap(format!(
                        "source class {:?} is unmapped",
                        source.classes[c]
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LabelMap::new(source, target, mapping)
    }

    pub fn source(&self) -> &LabelSpace {
        &self.source
    }

    pub fn target(&self) -> &LabelSpace {
        &self.target
    }

    pub fn map(&self, class: usize) -> Option<usize> {
        self.mapping.get(class).copied()
    }

    /// Target classes that at least one source class maps onto.
    pub fn reachable(&self) -> &BTreeSet<usize> {
        &self.reachable
    }
}

/// Ground-truth label of one page.
///
/// Serialized as the class id, `-1` for pages injected from outside the
/// document's scope, and `null` when the page carries no label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PageLabel {
    Class(usize),
    OutOfScope,
    Unlabeled,
}

impl PageLabel {
    pub fn class(self) -> Option<usize> {
        match self {
            PageLabel::Class(c) => Some(c),
            _ => None,
        }
    }
}

impl Serialize for PageLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            PageLabel::Class(c) => serializer.serialize_u64(c as u64),
            PageLabel::OutOfScope => serializer.serialize_i64(-1),
            PageLabel::Unlabeled => serializer.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for PageLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        match Option::<i64>::deserialize(deserializer)? {
            None => Ok(PageLabel::Unlabeled),
            Some(-1) => Ok(PageLabel::OutOfScope),
            Some(c) if c >= 0 => Ok(PageLabel::Class(c as usize)),
            Some(c) => Err(serde::de::Error::custom(format!(
                "page label {c} is neither a class id nor -1"
            ))),
        }
    }
}

/// One line of a manifest: an ordered list of pages plus ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocumentRecord {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
    pub pages: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page_labels: Option<Vec<PageLabel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bundle_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_position: Option<u64>,
}

impl DocumentRecord {
    pub fn new(doc_id: impl Into<String>, pages: Vec<String>) -> Self {
        DocumentRecord {
            doc_id: doc_id.into(),
            label: None,
            pages,
            page_labels: None,
            bundle_id: None,
            stream_id: None,
            stream_position: None,
        }
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_page_labels(mut self, labels: Vec<PageLabel>) -> Self {
        self.page_labels = Some(labels);
        self
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    /// Structural checks that hold for every manifest record.
    pub fn check(&self) -> Result<()> {
        if self.doc_id.is_empty() {
            return Err(Error::InvalidRecord("empty doc_id".into()));
        }
        if self.pages.is_empty() {
            return Err(Error::InvalidRecord(format!(
                "document {:?} has no pages",
                self.doc_id
            )));
        }
        if let Some(labels) = &self.page_labels {
            if labels.len() != self.pages.len() {
                return Err(Error::InvalidRecord(format!(
                    "document {:?}: {} page labels for {} pages",
                    self.doc_id,
                    labels.len(),
                    self.pages.len()
                )));
            }
        }
        Ok(())
    }

    /// Checks that the record carries enough ground truth to be evaluated.
    pub fn check_evaluable(&self) -> Result<()> {
        if self.label.is_none() && self.page_labels.is_none() {
            return Err(Error::InvalidRecord(format!(
                "document {:?} has neither label nor page_labels",
                self.doc_id
            )));
        }
        Ok(())
    }
}

/// A set of documents keyed and ordered by `doc_id`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    documents: Vec<DocumentRecord>,
}

impl Manifest {
    pub fn new(mut documents: Vec<DocumentRecord>) -> Result<Self> {
        for doc in &documents {
            doc.check()?;
        }
        documents.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        if let Some(w) = documents.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
            return Err(Error::InvalidRecord(format!(
                "duplicate doc_id {:?}",
                w[0].doc_id
            )));
        }
        Ok(Manifest { documents })
    }

    pub fn documents(&self) -> &[DocumentRecord] {
        &self.documents
    }

    pub fn into_documents(self) -> Vec<DocumentRecord> {
        self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&DocumentRecord> {
        self.documents
            .binary_search_by(|d| d.doc_id.as_str().cmp(doc_id))
            .ok()
            .map(|i| &self.documents[i])
    }

    /// Document-level ground truth of every labeled document.
    pub fn labels(&self) -> BTreeMap<String, usize> {
        self.documents
            .iter()
            .filter_map(|d| d.label.map(|l| (d.doc_id.clone(), l)))
            .collect()
    }

    /// Every class id referenced by document labels and page labels.
    pub fn label_refs(&self) -> (BTreeSet<usize>, BTreeSet<usize>) {
        let docs = self.documents.iter().filter_map(|d| d.label).collect();
        let pages = self
            .documents
            .iter()
            .filter_map(|d| d.page_labels.as_ref())
            .flatten()
            .filter_map(|l| l.class())
            .collect();
        (docs, pages)
    }

    /// Bundles in `bundle_id` order; documents inside a bundle are ordered by
    /// `stream_position` when present, then by `doc_id`.
    pub fn bundles(&self) -> Vec<BundleRecord> {
        let mut groups: BTreeMap<&str, Vec<&DocumentRecord>> = BTreeMap::new();
        for doc in &self.documents {
            if let Some(b) = &doc.bundle_id {
                groups.entry(b).or_default().push(doc);
            }
        }
        groups
            .into_iter()
            .map(|(id, mut docs)| {
                docs.sort_by(|a, b| {
                    (a.stream_position, &a.doc_id).cmp(&(b.stream_position, &b.doc_id))
                });
                BundleRecord {
                    bundle_id: id.to_owned(),
                    documents: docs.iter().map(|d| d.doc_id.clone()).collect(),
                }
            })
            .collect()
    }

    /// Streams assembled from documents sharing a `stream_id`, concatenated
    /// in `stream_position` order. Stream page labels are boundary bits.
    pub fn streams(&self) -> Vec<StreamRecord> {
        let mut groups: BTreeMap<&str, Vec<&DocumentRecord>> = BTreeMap::new();
        for doc in &self.documents {
            if let Some(s) = &doc.stream_id {
                groups.entry(s).or_default().push(doc);
            }
        }
        groups
            .into_iter()
            .map(|(id, mut docs)| {
                docs.sort_by(|a, b| {
                    (a.stream_position, &a.doc_id).cmp(&(b.stream_position, &b.doc_id))
                });
                let pages: Vec<(String, usize)> = docs
                    .iter()
                    .flat_map(|d| (0..d.page_count()).map(|i| (d.doc_id.clone(), i)))
                    .collect();
                let page_labels = StreamRecord::boundaries_of(&pages);
                StreamRecord {
                    stream_id: id.to_owned(),
                    pages,
                    page_labels,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleRecord {
    pub bundle_id: String,
    pub documents: Vec<String>,
}

impl BundleRecord {
    pub fn document_count(&self) -> usize {
        self.documents.len()
    }

    pub fn check(&self, manifest: &Manifest) -> Result<()> {
        if self.documents.is_empty() {
            return Err(Error::InvalidRecord(format!(
                "bundle {:?} is empty",
                self.bundle_id
            )));
        }
        if let Some(missing) = self.documents.iter().find(|d| manifest.get(d).is_none()) {
            return Err(Error::InvalidRecord(format!(
                "bundle {:?} references unknown document {missing:?}",
                self.bundle_id
            )));
        }
        Ok(())
    }
}

/// An ordered page sequence that may interleave pages of several documents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamRecord {
    pub stream_id: String,
    /// `(source doc_id, page_index within that document)` per stream page.
    pub pages: Vec<(String, usize)>,
    /// Either page classes or boundary bits, one per stream page.
    pub page_labels: Vec<usize>,
}

impl StreamRecord {
    /// Boundary bits marking each page whose source document differs from the
    /// previous page's. Page 0 is always a boundary.
    pub fn boundaries_of(pages: &[(String, usize)]) -> Vec<usize> {
        pages
            .iter()
            .enumerate()
            .map(|(i, (doc, _))| {
                if i == 0 || pages[i - 1].0 != *doc {
                    LabelSpace::BOUNDARY
                } else {
                    LabelSpace::NO_BOUNDARY
                }
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        if self.page_labels.len() != self.pages.len() {
            return Err(Error::InvalidRecord(format!(
                "stream {:?}: {} labels for {} pages",
                self.stream_id,
                self.page_labels.len(),
                self.pages.len()
            )));
        }
        Ok(())
    }
}

/// Probability vector for one page of one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PagePrediction {
    pub doc_id: String,
    pub page_index: usize,
    pub probs: Vec<f64>,
}

impl PagePrediction {
    pub fn new(doc_id: impl Into<String>, page_index: usize, probs: Vec<f64>) -> Self {
        PagePrediction {
            doc_id: doc_id.into(),
            page_index,
            probs,
        }
    }
}

/// Score vector supplied for a whole document by an outside classifier, for
/// instance one that looked at a page grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentScores {
    pub doc_id: String,
    pub probs: Vec<f64>,
}

/// Classification of a single vector against the probability contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorCheck {
    Valid,
    /// Sum within [`PROB_TOLERANCE`] of 1 but not exactly 1.
    Renormalizable,
    WrongLength,
    Invalid,
}

pub fn check_vector(probs: &[f64], size: usize) -> VectorCheck {
    if probs.len() != size {
        return VectorCheck::WrongLength;
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return VectorCheck::Invalid;
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_TOLERANCE {
        VectorCheck::Invalid
    } else if sum != 1.0 {
        VectorCheck::Renormalizable
    } else {
        VectorCheck::Valid
    }
}

/// Page-level and document-level prediction records read from one source.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    pub pages: Vec<PagePrediction>,
    pub documents: Vec<DocumentScores>,
}

impl PredictionSet {
    pub fn from_pages(pages: Vec<PagePrediction>) -> Self {
        PredictionSet {
            pages,
            documents: Vec::new(),
        }
    }

    /// Sorts records by `(doc_id, page_index)`.
    pub fn canonicalize(&mut self) {
        self.pages
            .sort_by(|a, b| (&a.doc_id, a.page_index).cmp(&(&b.doc_id, b.page_index)));
        self.documents.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    }

    /// Divides every vector whose sum lies within [`PROB_TOLERANCE`] of 1 by
    /// its sum. Vectors outside tolerance are left for validation to flag.
    pub fn renormalize(&mut self) {
        let fix = |probs: &mut Vec<f64>| {
            if probs.iter().all(|p| p.is_finite() && *p >= 0.0) {
                let sum: f64 = probs.iter().sum();
                if sum != 1.0 && (sum - 1.0).abs() <= PROB_TOLERANCE {
                    probs.iter_mut().for_each(|p| *p /= sum);
                }
            }
        };
        self.pages.iter_mut().for_each(|p| fix(&mut p.probs));
        self.documents.iter_mut().for_each(|d| fix(&mut d.probs));
    }

    /// Page predictions grouped per document in page order.
    pub fn pages_by_doc(&self) -> BTreeMap<&str, Vec<&PagePrediction>> {
        let mut map: BTreeMap<&str, Vec<&PagePrediction>> = BTreeMap::new();
        for p in &self.pages {
            map.entry(p.doc_id.as_str()).or_default().push(p);
        }
        for preds in map.values_mut() {
            preds.sort_by_key(|p| p.page_index);
        }
        map
    }

    pub fn documents_by_id(&self) -> BTreeMap<&str, &DocumentScores> {
        self.documents
            .iter()
            .map(|d| (d.doc_id.as_str(), d))
            .collect()
    }
}

/// Aggregated document-level prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocPrediction {
    pub doc_id: String,
    pub strategy: Strategy,
    pub label: usize,
    pub confidence: f64,
    pub scores: Vec<f64>,
    pub fallback_used: bool,
}

impl DocPrediction {
    /// Builds a prediction whose label is the lowest-index argmax of `scores`.
    pub fn from_scores(
        doc_id: impl Into<String>,
        strategy: Strategy,
        scores: Vec<f64>,
        confidence: f64,
        fallback_used: bool,
    ) -> Self {
        DocPrediction {
            doc_id: doc_id.into(),
            strategy,
            label: argmax(&scores),
            confidence,
            scores,
            fallback_used,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentIssues {
    pub doc_id: String,
    /// Page indices without a prediction.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub missing_pages: Vec<usize>,
    /// Predictions for page indices beyond the document's length.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub extra_pages: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub length_mismatches: Vec<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub normalization_violations: Vec<usize>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub missing_document_prediction: bool,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub document_length_mismatch: bool,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub document_normalization_violation: bool,
}

impl DocumentIssues {
    fn is_clean(&self) -> bool {
        *self
            == DocumentIssues {
                doc_id: self.doc_id.clone(),
                ..Default::default()
            }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Orphan {
    pub doc_id: String,
    pub page_index: Option<usize>,
}

/// Outcome of checking a prediction set against a manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub documents_checked: usize,
    /// Only documents with at least one issue, ordered by `doc_id`.
    pub documents: Vec<DocumentIssues>,
    pub orphans: Vec<Orphan>,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} documents checked, {} with issues, {} orphan predictions: {}",
            self.documents_checked,
            self.documents.len(),
            self.orphans.len(),
            if self.ok { "ok" } else { "FAILED" }
        )?;
        for d in &self.documents {
            write!(f, "  {}:", d.doc_id)?;
            if !d.missing_pages.is_empty() {
                write!(f, " missing pages {:?}", d.missing_pages)?;
            }
            if !d.extra_pages.is_empty() {
                write!(f, " extra pages {:?}", d.extra_pages)?;
            }
            if !d.length_mismatches.is_empty() {
                write!(f, " wrong vector length on pages {:?}", d.length_mismatches)?;
            }
            if !d.normalization_violations.is_empty() {
                write!(f, " invalid probabilities on pages {:?}", d.normalization_violations)?;
            }
            if d.missing_document_prediction {
                write!(f, " missing document prediction")?;
            }
            if d.document_length_mismatch {
                write!(f, " wrong document vector length")?;
            }
            if d.document_normalization_violation {
                write!(f, " invalid document probabilities")?;
            }
            writeln!(f)?;
        }
        for o in &self.orphans {
            match o.page_index {
                Some(i) => writeln!(f, "  orphan prediction ({}, {i})", o.doc_id)?,
                None => writeln!(f, "  orphan document prediction {}", o.doc_id)?,
            }
        }
        Ok(())
    }
}

/// Checks that predictions cover every manifest document with well-formed
/// probability vectors over `space`.
///
/// Page coverage is required when the set contains any page-level records;
/// document coverage when it contains any document-level records. Duplicate
/// `(doc_id, page_index)` keys are a hard error.
pub fn validate(
    predictions: &PredictionSet,
    manifest: &Manifest,
    space: &LabelSpace,
) -> Result<ValidationReport> {
    let mut seen = HashSet::new();
    for p in &predictions.pages {
        if !seen.insert((p.doc_id.as_str(), Some(p.page_index))) {
            return Err(Error::DuplicatePrediction {
                doc_id: p.doc_id.clone(),
                page_index: Some(p.page_index),
            });
        }
    }
    for d in &predictions.documents {
        if !seen.insert((d.doc_id.as_str(), None)) {
            return Err(Error::DuplicatePrediction {
                doc_id: d.doc_id.clone(),
                page_index: None,
            });
        }
    }

    let size = space.size();
    let by_doc = predictions.pages_by_doc();
    let doc_level = predictions.documents_by_id();
    let need_pages = !predictions.pages.is_empty();
    let need_docs = !predictions.documents.is_empty();

    let mut documents = Vec::new();
    for doc in manifest.documents() {
        let mut issues = DocumentIssues {
            doc_id: doc.doc_id.clone(),
            ..Default::default()
        };
        let pages = by_doc.get(doc.doc_id.as_str());
        if need_pages {
            let present: BTreeSet<usize> = pages
                .into_iter()
                .flatten()
                .map(|p| p.page_index)
                .collect();
            issues.missing_pages = (0..doc.page_count())
                .filter(|i| !present.contains(i))
                .collect();
            issues.extra_pages = present
                .iter()
                .copied()
                .filter(|&i| i >= doc.page_count())
                .collect();
        }
        for p in pages.into_iter().flatten() {
            match check_vector(&p.probs, size) {
                VectorCheck::WrongLength => issues.length_mismatches.push(p.page_index),
                VectorCheck::Invalid => issues.normalization_violations.push(p.page_index),
                _ => {}
            }
        }
        match doc_level.get(doc.doc_id.as_str()) {
            Some(d) => match check_vector(&d.probs, size) {
                VectorCheck::WrongLength => issues.document_length_mismatch = true,
                VectorCheck::Invalid => issues.document_normalization_violation = true,
                _ => {}
            },
            None => issues.missing_document_prediction = need_docs,
        }
        if !issues.is_clean() {
            documents.push(issues);
        }
    }

    let mut orphans: Vec<Orphan> = predictions
        .pages
        .iter()
        .filter(|p| manifest.get(&p.doc_id).is_none())
        .map(|p| Orphan {
            doc_id: p.doc_id.clone(),
            page_index: Some(p.page_index),
        })
        .chain(
            predictions
                .documents
                .iter()
                .filter(|d| manifest.get(&d.doc_id).is_none())
                .map(|d| Orphan {
                    doc_id: d.doc_id.clone(),
                    page_index: None,
                }),
        )
        .collect();
    orphans.sort();

    Ok(ValidationReport {
        ok: documents.is_empty() && orphans.is_empty(),
        documents_checked: manifest.len(),
        documents,
        orphans,
    })
}
