//! Seeded page-level distribution shifts applied to manifests.
//!
//! Randomness is fully pinned so a perturbed manifest can be regenerated by
//! any implementation:
//!
//! * Generator: SplitMix64 (`state += 0x9E3779B97F4A7C15`, then the
//!   `0xBF58476D1CE4E5B9` / `0x94D049BB133111EB` finalizer with shifts
//!   30, 27, 31).
//! * Per-document seed: `seed XOR fnv1a64(doc_id)` (FNV-1a 64-bit, offset
//!   `0xCBF29CE484222325`, prime `0x100000001B3`), used as the initial state.
//! * Uniform draw: `(next >> 11) * 2^-53`, in `[0, 1)`.
//! * Index in `0..n`: `min(floor(uniform * n), n - 1)`.
//!
//! Operations, each driven by `rate`:
//!
//! * `shuffle_pages`: one draw per document; if below `rate` the pages are
//!   permuted with a descending Fisher-Yates pass (`for i in (1..L).rev()`,
//!   swap `i` with an index in `0..=i`).
//! * `duplicate_pages`: one draw per original page; below `rate` a copy is
//!   inserted directly after it.
//! * `drop_pages`: one draw per original page; below `rate` the page is
//!   removed. If every page would go, page 0 is retained.
//! * `inject_pages`: one draw per original page; below `rate` a donor page is
//!   inserted (donor index draw, then insertion position draw over
//!   `0..=current length`) and labeled out-of-scope.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DocumentRecord, Manifest, PageLabel};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const FNV_OFFSET: u64 = 0xCBF2_9CE4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

/// SplitMix64 pseudo-random generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Generator for one document, independent of processing order.
    pub fn for_document(seed: u64, doc_id: &str) -> Self {
        SplitMix64::new(seed ^ fnv1a64(doc_id.as_bytes()))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_f64() * n as f64) as usize).min(n - 1)
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbOp {
    ShufflePages,
    DuplicatePages,
    DropPages,
    InjectPages,
}

impl FromStr for PerturbOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shuffle_pages" => Ok(PerturbOp::ShufflePages),
            "duplicate_pages" => Ok(PerturbOp::DuplicatePages),
            "drop_pages" => Ok(PerturbOp::DropPages),
            "inject_pages" => Ok(PerturbOp::InjectPages),
            _ => Err(Error::InvalidArgument(format!("unknown perturbation {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PerturbSpec {
    pub op: PerturbOp,
    pub rate: f64,
    pub seed: u64,
    /// Source of injected pages; required by `inject_pages`.
    pub donor_pool: Option<Manifest>,
}

impl PerturbSpec {
    pub fn new(op: PerturbOp, rate: f64, seed: u64) -> Self {
        PerturbSpec {
            op,
            rate,
            seed,
            donor_pool: None,
        }
    }

    pub fn with_donors(mut self, donors: Manifest) -> Self {
        self.donor_pool = Some(donors);
        self
    }
}

/// One recorded change to a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Move {
    /// New page `i` is old page `order[i]`.
    Permute { order: Vec<usize> },
    /// Copy of original page `source` placed at `inserted_at`.
    Duplicate { source: usize, inserted_at: usize },
    /// Original page `index` removed.
    Drop {
        index: usize,
        page: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        page_label: Option<PageLabel>,
    },
    /// Original page `index` kept so the document stays non-empty.
    Retain { index: usize },
    /// Donor page placed at `inserted_at`, counted in the sequence at the
    /// time of insertion.
    Inject {
        donor_doc: String,
        donor_page: usize,
        page: String,
        inserted_at: usize,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        created_page_labels: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub doc_id: String,
    #[serde(flatten)]
    pub change: Move,
}

struct Donor<'a> {
    doc_id: &'a str,
    page_index: usize,
    page: &'a str,
}

/// Applies `spec` to every document. Output documents and the provenance log
/// are ordered by `doc_id`; each log segment lists moves in application
/// order.
pub fn apply(manifest: &Manifest, spec: &PerturbSpec) -> Result<(Manifest, Vec<ProvenanceEntry>)> {
    if !(0.0..=1.0).contains(&spec.rate) {
        return Err(Error::InvalidArgument(format!(
            "rate {} outside [0, 1]",
            spec.rate
        )));
    }
    let donors: Vec<Donor> = match (spec.op, &spec.donor_pool) {
        (PerturbOp::InjectPages, Some(pool)) => pool
            .documents()
            .iter()
            .flat_map(|d| {
                d.pages.iter().enumerate().map(|(i, p)| Donor {
                    doc_id: &d.doc_id,
                    page_index: i,
                    page: p,
                })
            })
            .collect(),
        _ => Vec::new(),
    };
    if spec.op == PerturbOp::InjectPages && donors.is_empty() {
        return Err(Error::InvalidArgument(
            "inject_pages requires a non-empty donor pool".into(),
        ));
    }

    let results: Vec<(DocumentRecord, Vec<Move>)> = manifest
        .documents()
        .par_iter()
        .map(|doc| {
            let mut rng = SplitMix64::for_document(spec.seed, &doc.doc_id);
            let mut out = doc.clone();
            let moves = match spec.op {
                PerturbOp::ShufflePages => shuffle(&mut out, spec.rate, &mut rng),
                PerturbOp::DuplicatePages => duplicate(&mut out, spec.rate, &mut rng),
                PerturbOp::DropPages => drop_pages(&mut out, spec.rate, &mut rng),
                PerturbOp::InjectPages => inject(&mut out, spec.rate, &donors, &mut rng),
            };
            (out, moves)
        })
        .collect();

    let mut log = Vec::new();
    let mut docs = Vec::with_capacity(results.len());
    for (doc, moves) in results {
        log.extend(moves.into_iter().map(|change| ProvenanceEntry {
            doc_id: doc.doc_id.clone(),
            change,
        }));
        docs.push(doc);
    }
    Ok((Manifest::new(docs)?, log))
}

fn shuffle(doc: &mut DocumentRecord, rate: f64, rng: &mut SplitMix64) -> Vec<Move> {
    if rng.next_f64() >= rate {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..doc.page_count()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.below(i + 1);
        order.swap(i, j);
    }
    doc.pages = order.iter().map(|&i| doc.pages[i].clone()).collect();
    if let Some(labels) = &mut doc.page_labels {
        *labels = order.iter().map(|&i| labels[i]).collect();
    }
    vec![Move::Permute { order }]
}

fn duplicate(doc: &mut DocumentRecord, rate: f64, rng: &mut SplitMix64) -> Vec<Move> {
    let mut moves = Vec::new();
    let mut pages = Vec::with_capacity(doc.page_count() * 2);
    let mut labels = doc.page_labels.as_ref().map(|_| Vec::new());
    for i in 0..doc.page_count() {
        let copy = rng.next_f64() < rate;
        for _ in 0..1 + usize::from(copy) {
            pages.push(doc.pages[i].clone());
            if let (Some(out), Some(src)) = (&mut labels, &doc.page_labels) {
                out.push(src[i]);
            }
        }
        if copy {
            moves.push(Move::Duplicate {
                source: i,
                inserted_at: pages.len() - 1,
            });
        }
    }
    doc.pages = pages;
    doc.page_labels = labels;
    moves
}

fn drop_pages(doc: &mut DocumentRecord, rate: f64, rng: &mut SplitMix64) -> Vec<Move> {
    let mut dropped: Vec<bool> = (0..doc.page_count()).map(|_| rng.next_f64() < rate).collect();
    let mut moves = Vec::new();
    if dropped.iter().all(|&d| d) {
        dropped[0] = false;
        moves.push(Move::Retain { index: 0 });
    }
    for (i, _) in dropped.iter().enumerate().filter(|(_, &d)| d) {
        moves.push(Move::Drop {
            index: i,
            page: doc.pages[i].clone(),
            page_label: doc.page_labels.as_ref().map(|l| l[i]),
        });
    }
    doc.pages = retained(&doc.pages, &dropped);
    if let Some(labels) = &doc.page_labels {
        doc.page_labels = Some(retained(labels, &dropped));
    }
    moves
}

fn retained<T: Clone>(items: &[T], dropped: &[bool]) -> Vec<T> {
    items
        .iter()
        .zip(dropped)
        .filter(|(_, &d)| !d)
        .map(|(x, _)| x.clone())
        .collect()
}

fn inject(doc: &mut DocumentRecord, rate: f64, donors: &[Donor], rng: &mut SplitMix64) -> Vec<Move> {
    let mut moves = Vec::new();
    for _ in 0..doc.page_count() {
        if rng.next_f64() >= rate {
            continue;
        }
        let donor = &donors[rng.below(donors.len())];
        let at = rng.below(doc.pages.len() + 1);
        let created = doc.page_labels.is_none();
        let labels = doc
            .page_labels
            .get_or_insert_with(|| vec![PageLabel::Unlabeled; doc.pages.len()]);
        labels.insert(at, PageLabel::OutOfScope);
        doc.pages.insert(at, donor.page.to_owned());
        moves.push(Move::Inject {
            donor_doc: donor.doc_id.to_owned(),
            donor_page: donor.page_index,
            page: donor.page.to_owned(),
            inserted_at: at,
            created_page_labels: created,
        });
    }
    moves
}

/// Undoes the logged moves of one document, restoring the original record.
pub fn revert(doc: &DocumentRecord, moves: &[Move]) -> Result<DocumentRecord> {
    let mut out = doc.clone();
    let bad = |what: &str| Error::InvalidArgument(format!("cannot revert {:?}: {what}", doc.doc_id));

    let drops: Vec<&Move> = moves.iter().filter(|m| matches!(m, Move::Drop { .. })).collect();
    if !drops.is_empty() {
        for m in drops {
            if let Move::Drop { index, page, page_label } = m {
                if *index > out.pages.len() {
                    return Err(bad("drop index out of range"));
                }
                out.pages.insert(*index, page.clone());
                match (&mut out.page_labels, page_label) {
                    (Some(labels), Some(l)) => labels.insert(*index, *l),
                    (None, None) => {}
                    _ => return Err(bad("inconsistent page labels")),
                }
            }
        }
        return Ok(out);
    }

    for m in moves.iter().rev() {
        match m {
            Move::Permute { order } => {
                if order.len() != out.pages.len() {
                    return Err(bad("permutation length"));
                }
                let mut pages = out.pages.clone();
                for (new, &old) in order.iter().enumerate() {
                    pages[old] = out.pages[new].clone();
                }
                out.pages = pages;
                if let Some(labels) = &mut out.page_labels {
                    let current = labels.clone();
                    for (new, &old) in order.iter().enumerate() {
                        labels[old] = current[new];
                    }
                }
            }
            Move::Duplicate { inserted_at, .. } | Move::Inject { inserted_at, .. } => {
                if *inserted_at >= out.pages.len() {
                    return Err(bad("insert position out of range"));
                }
                out.pages.remove(*inserted_at);
                if let Some(labels) = &mut out.page_labels {
                    labels.remove(*inserted_at);
                }
                if matches!(m, Move::Inject { created_page_labels: true, .. }) {
                    out.page_labels = None;
                }
            }
            Move::Retain { .. } | Move::Drop { .. } => {}
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(lengths: &[usize]) -> Manifest {
        Manifest::new(
            lengths
                .iter()
                .enumerate()
                .map(|(d, &l)| {
                    DocumentRecord::new(
                        format!("doc{d:02}"),
                        (0..l).map(|p| format!("doc{d:02}/p{p}")).collect(),
                    )
                    .with_label(d % 3)
                    .with_page_labels((0..l).map(PageLabel::Class).collect())
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn splitmix_reference_values() {
        // reference outputs of SplitMix64 seeded with 1234567
        let mut rng = SplitMix64::new(1234567);
        let got: Vec<u64> = (0..3).map(|_| rng.next_u64()).collect();
        assert_eq!(
            got,
            vec![6457827717110365317, 3203168211198807973, 9817491932198370423]
        );
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn uniform_and_index_ranges() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..10_000 {
            let u = rng.next_f64();
            assert!((0.0..1.0).contains(&u));
            assert!(rng.below(3) < 3);
        }
    }

    #[test]
    fn shuffle_is_seeded() {
        let m = manifest(&[5, 3, 8]);
        let spec = PerturbSpec::new(PerturbOp::ShufflePages, 1.0, 42);
        let a = apply(&m, &spec).unwrap();
        let b = apply(&m, &spec).unwrap();
        assert_eq!(a, b);
        let c = apply(&m, &PerturbSpec::new(PerturbOp::ShufflePages, 1.0, 43)).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn rate_zero_is_identity() {
        let m = manifest(&[5, 3, 1]);
        for op in [PerturbOp::DuplicatePages, PerturbOp::DropPages, PerturbOp::InjectPages] {
            let spec = PerturbSpec::new(op, 0.0, 9).with_donors(manifest(&[2]));
            let (out, log) = apply(&m, &spec).unwrap();
            assert_eq!(out, m, "{op:?}");
            assert!(log.is_empty());
        }
    }

    #[test]
    fn duplicate_everything_doubles_adjacently() {
        let m = manifest(&[3]);
        let (out, log) = apply(&m, &PerturbSpec::new(PerturbOp::DuplicatePages, 1.0, 1)).unwrap();
        let doc = &out.documents()[0];
        assert_eq!(
            doc.page_labels.as_deref().unwrap(),
            &[0, 0, 1, 1, 2, 2].map(PageLabel::Class)
        );
        assert_eq!(doc.pages[1], "doc00/p0");
        assert_eq!(log.len(), 3);
    }

    #[test]
    fn drop_everything_keeps_one_page() {
        let m = manifest(&[4, 1]);
        let (out, log) = apply(&m, &PerturbSpec::new(PerturbOp::DropPages, 1.0, 5)).unwrap();
        assert!(out.documents().iter().all(|d| d.page_count() == 1));
        assert_eq!(out.documents()[0].pages, vec!["doc00/p0"]);
        assert!(log.iter().any(|e| matches!(e.change, Move::Retain { index: 0 })));
    }

    #[test]
    fn inject_requires_donors_and_marks_pages() {
        let m = manifest(&[3]);
        assert!(apply(&m, &PerturbSpec::new(PerturbOp::InjectPages, 0.5, 1)).is_err());

        let mut plain = manifest(&[3]).into_documents();
        plain[0].page_labels = None;
        let plain = Manifest::new(plain).unwrap();
        let spec = PerturbSpec::new(PerturbOp::InjectPages, 1.0, 3).with_donors(manifest(&[2, 2]));
        let (out, log) = apply(&plain, &spec).unwrap();
        let doc = &out.documents()[0];
        assert_eq!(doc.page_count(), 6);
        let labels = doc.page_labels.as_ref().unwrap();
        assert_eq!(labels.iter().filter(|l| **l == PageLabel::OutOfScope).count(), 3);
        assert_eq!(labels.iter().filter(|l| **l == PageLabel::Unlabeled).count(), 3);
        assert_eq!(log.len(), 3);
    }

    #[test]
    fn bad_rate_is_rejected() {
        let m = manifest(&[2]);
        assert!(apply(&m, &PerturbSpec::new(PerturbOp::DropPages, 1.5, 0)).is_err());
        assert!(apply(&m, &PerturbSpec::new(PerturbOp::DropPages, f64::NAN, 0)).is_err());
    }

    #[test]
    fn provenance_reverts_every_operation() {
        let m = manifest(&[6, 1, 4, 9]);
        let donors = manifest(&[3, 3]);
        for op in [
            PerturbOp::ShufflePages,
            PerturbOp::DuplicatePages,
            PerturbOp::DropPages,
            PerturbOp::InjectPages,
        ] {
            for seed in 0..20 {
                let spec = PerturbSpec::new(op, 0.5, seed).with_donors(donors.clone());
                let (out, log) = apply(&m, &spec).unwrap();
                for (orig, doc) in m.documents().iter().zip(out.documents()) {
                    let moves: Vec<Move> = log
                        .iter()
                        .filter(|e| e.doc_id == doc.doc_id)
                        .map(|e| e.change.clone())
                        .collect();
                    assert_eq!(&revert(doc, &moves).unwrap(), orig, "{op:?} seed {seed}");
                }
            }
        }
    }

    #[test]
    fn provenance_json_shape() {
        let e = ProvenanceEntry {
            doc_id: "d".into(),
            change: Move::Duplicate {
                source: 0,
                inserted_at: 1,
            },
        };
        assert_eq!(
            serde_json::to_string(&e).unwrap(),
            r#"{"doc_id":"d","action":"duplicate","source":0,"inserted_at":1}"#
        );
        let back: ProvenanceEntry = serde_json::from_str(&serde_json::to_string(&e).unwrap()).unwrap();
        assert_eq!(back, e);
    }
}
