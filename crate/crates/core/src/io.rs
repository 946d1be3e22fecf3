//! File formats.
//!
//! Line-delimited JSON (UTF-8, `\n`, one record per line, blank lines
//! skipped):
//!
//! * manifest: `{"doc_id", "label"?, "pages": [..], "page_labels"?, "bundle_id"?,
//!   "stream_id"?, "stream_position"?}`
//! * predictions: `{"doc_id", "level": "page"|"document", "page_index"?, "probs": [..]}`,
//!   `page_index` present iff `level` is `page`
//! * document predictions: `{"doc_id", "strategy", "label", "confidence", "scores",
//!   "fallback_used"}`
//! * provenance log: `{"doc_id", "action", ..}`
//!
//! Single JSON documents: label space `{"kind", "classes"}`, label map
//! `{"source", "target", "mapping": {source name: target name}}` and the
//! metrics report.
//!
//! CSV with fixed headers: risk-coverage curve (`coverage,risk`), reliability
//! bins (`bin_lo,bin_hi,count,mean_confidence,empirical_accuracy`) and the
//! best-case table (`combo,accuracy,delta`).
//!
//! Writers always emit canonical order (by `doc_id`, then `page_index` or
//! strategy) and shortest round-trip decimal numbers, so writing the same
//! value twice gives identical bytes. In strict mode unknown fields are an
//! error; in lenient mode they are dropped with a warning.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bestcase::BestCaseRow;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::{
    check_vector, DocPrediction, DocumentRecord, DocumentScores, LabelMap, LabelSpace, Manifest,
    PagePrediction, PredictionSet, VectorCheck,
};
use crate::perturb::ProvenanceEntry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadMode {
    #[default]
    Strict,
    Lenient,
}

const MANIFEST_FIELDS: &[&str] = &[
    "doc_id",
    "label",
    "pages",
    "page_labels",
    "bundle_id",
    "stream_id",
    "stream_position",
];
const PREDICTION_FIELDS: &[&str] = &["doc_id", "level", "page_index", "probs"];
const DOC_PREDICTION_FIELDS: &[&str] = &[
    "doc_id",
    "strategy",
    "label",
    "confidence",
    "scores",
    "fallback_used",
];

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<PathBuf> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    Ok(path.to_owned())
}

fn parse_error(path: &Path, line: usize, message: impl ToString) -> Error {
    Error::Parse {
        path: path.to_owned(),
        line,
        message: message.to_string(),
    }
}

/// Parses every non-blank line as a JSON object restricted to `known` keys.
/// Yields 1-based line numbers with the records.
fn parse_lines<T: DeserializeOwned>(
    text: &str,
    path: &Path,
    known: &[&str],
    mode: ReadMode,
) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut value: Value =
            serde_json::from_str(line).map_err(|e| parse_error(path, line_no, e))?;
        let object = value
            .as_object_mut()
            .ok_or_else(|| parse_error(path, line_no, "expected a JSON object"))?;
        let unknown: Vec<String> = object
            .keys()
            .filter(|k| !known.contains(&k.as_str()))
            .cloned()
            .collect();
        if !unknown.is_empty() {
            if mode == ReadMode::Strict {
                return Err(parse_error(
                    path,
                    line_no,
                    format!("unknown fields {unknown:?}"),
                ));
            }
            log::warn!("{}:{line_no}: ignoring unknown fields {unknown:?}", path.display());
            for k in &unknown {
                object.remove(k);
            }
        }
        let record = serde_json::from_value(value).map_err(|e| parse_error(path, line_no, e))?;
        out.push((line_no, record));
    }
    Ok(out)
}

fn to_jsonl<T: Serialize>(records: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, &r)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn read_label_space(path: &Path) -> Result<LabelSpace> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e.line(), e))
}

pub fn write_label_space(space: &LabelSpace, path: &Path) -> Result<PathBuf> {
    let mut bytes = serde_json::to_vec_pretty(space)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelMapFile {
    source: LabelSpace,
    target: LabelSpace,
    mapping: BTreeMap<String, String>,
}

pub fn read_label_map(path: &Path) -> Result<LabelMap> {
    let text = read_text(path)?;
    let file: LabelMapFile =
        serde_json::from_str(&text).map_err(|e| parse_error(path, e.line(), e))?;
    LabelMap::from_names(
        file.source,
        file.target,
        file.mapping.iter().map(|(a, b)| (a.as_str(), b.as_str())),
    )
}

pub fn parse_manifest(text: &str, path: &Path, mode: ReadMode) -> Result<Manifest> {
    let records: Vec<(usize, DocumentRecord)> = parse_lines(text, path, MANIFEST_FIELDS, mode)?;
    for (line, doc) in &records {
        doc.check().map_err(|e| parse_error(path, *line, e))?;
    }
    Manifest::new(records.into_iter().map(|(_, d)| d).collect())
}

/// Reads a manifest. Use [`Manifest::label_refs`] to see which class ids it
/// references.
pub fn read_manifest(path: &Path, mode: ReadMode) -> Result<Manifest> {
    parse_manifest(&read_text(path)?, path, mode)
}

pub fn manifest_bytes(manifest: &Manifest) -> Result<Vec<u8>> {
    to_jsonl(manifest.documents())
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<PathBuf> {
    write_bytes(path, &manifest_bytes(manifest)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Level {
    Page,
    Document,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionLine {
    doc_id: String,
    level: Level,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    page_index: Option<usize>,
    probs: Vec<f64>,
}

pub fn parse_predictions(
    text: &str,
    path: &Path,
    space: &LabelSpace,
    mode: ReadMode,
) -> Result<PredictionSet> {
    let mut set = PredictionSet::default();
    for (line, rec) in parse_lines::<PredictionLine>(text, path, PREDICTION_FIELDS, mode)? {
        if check_vector(&rec.probs, space.size()) == VectorCheck::WrongLength {
            return Err(parse_error(
                path,
                line,
                format!(
                    "probs has {} entries, label space has {}",
                    rec.probs.len(),
                    space.size()
                ),
            ));
        }
        match (rec.level, rec.page_index) {
            (Level::Page, Some(page_index)) => set.pages.push(PagePrediction {
                doc_id: rec.doc_id,
                page_index,
                probs: rec.probs,
            }),
            (Level::Page, None) => {
                return Err(parse_error(path, line, "page-level record without page_index"))
            }
            (Level::Document, index) => {
                if index.is_some() {
                    if mode == ReadMode::Strict {
                        return Err(parse_error(
                            path,
                            line,
                            "document-level record must not carry page_index",
                        ));
                    }
                    log::warn!(
                        "{}:{line}: ignoring page_index on a document-level record",
                        path.display()
                    );
                }
                set.documents.push(DocumentScores {
                    doc_id: rec.doc_id,
                    probs: rec.probs,
                });
            }
        }
    }
    Ok(set)
}

pub fn read_predictions(path: &Path, space: &LabelSpace, mode: ReadMode) -> Result<PredictionSet> {
    parse_predictions(&read_text(path)?, path, space, mode)
}

pub fn predictions_bytes(set: &PredictionSet) -> Result<Vec<u8>> {
    let mut set = set.clone();
    set.canonicalize();
    let docs = set.documents.into_iter().map(|d| {
        (
            d.doc_id.clone(),
            None,
            PredictionLine {
                doc_id: d.doc_id,
                level: Level::Document,
                page_index: None,
                probs: d.probs,
            },
        )
    });
    let pages = set.pages.into_iter().map(|p| {
        (
            p.doc_id.clone(),
            Some(p.page_index),
            PredictionLine {
                doc_id: p.doc_id,
                level: Level::Page,
                page_index: Some(p.page_index),
                probs: p.probs,
            },
        )
    });
    let mut lines: Vec<_> = docs.chain(pages).collect();
    lines.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
    to_jsonl(lines.into_iter().map(|(_, _, l)| l))
}

pub fn write_predictions(set: &PredictionSet, path: &Path) -> Result<PathBuf> {
    write_bytes(path, &predictions_bytes(set)?)
}

pub fn parse_doc_predictions(text: &str, path: &Path, mode: ReadMode) -> Result<Vec<DocPrediction>> {
    let records: Vec<(usize, DocPrediction)> = parse_lines(text, path, DOC_PREDICTION_FIELDS, mode)?;
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

pub fn read_doc_predictions(path: &Path, mode: ReadMode) -> Result<Vec<DocPrediction>> {
    parse_doc_predictions(&read_text(path)?, path, mode)
}

pub fn doc_predictions_bytes(predictions: &[DocPrediction]) -> Result<Vec<u8>> {
    let mut sorted: Vec<&DocPrediction> = predictions.iter().collect();
    sorted.sort_by(|a, b| (&a.doc_id, a.strategy).cmp(&(&b.doc_id, b.strategy)));
    to_jsonl(sorted)
}

pub fn write_doc_predictions(predictions: &[DocPrediction], path: &Path) -> Result<PathBuf> {
    write_bytes(path, &doc_predictions_bytes(predictions)?)
}

pub fn report_bytes(report: &MetricsReport) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_report(report: &MetricsReport, path: &Path) -> Result<PathBuf> {
    write_bytes(path, &report_bytes(report)?)
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| parse_error(path, e.line(), e))
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner()
        .map_err(|e| Error::io("<csv>", e.into_error()))
}

pub fn rc_curve_bytes(report: &MetricsReport) -> Result<Vec<u8>> {
    csv_bytes(
        &["coverage", "risk"],
        report
            .rc_points
            .iter()
            .map(|p| vec![p.coverage.to_string(), p.risk.to_string()]),
    )
}

pub fn reliability_bytes(report: &MetricsReport) -> Result<Vec<u8>> {
    csv_bytes(
        &["bin_lo", "bin_hi", "count", "mean_confidence", "empirical_accuracy"],
        report.bin_table.iter().map(|b| {
            vec![
                b.bin_lo.to_string(),
                b.bin_hi.to_string(),
                b.count.to_string(),
                b.mean_confidence.to_string(),
                b.empirical_accuracy.to_string(),
            ]
        }),
    )
}

pub fn write_rc_curve(report: &MetricsReport, path: &Path) -> Result<PathBuf> {
    write_bytes(path, &rc_curve_bytes(report)?)
}

pub fn write_reliability(report: &MetricsReport, path: &Path) -> Result<PathBuf> {
    write_bytes(path, &reliability_bytes(report)?)
}

/// Writes `rc_curve.csv` and `reliability.csv` into `dir`.
pub fn write_curves(report: &MetricsReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    Ok((
        write_rc_curve(report, &dir.join("rc_curve.csv"))?,
        write_reliability(report, &dir.join("reliability.csv"))?,
    ))
}

pub const BESTCASE_HEADER: [&str; 3] = ["combo", "accuracy", "delta"];

pub fn bestcase_bytes(rows: &[BestCaseRow]) -> Result<Vec<u8>> {
    csv_bytes(
        &BESTCASE_HEADER,
        rows.iter()
            .map(|r| vec![r.combo.clone(), r.accuracy.to_string(), r.delta.to_string()]),
    )
}

pub fn write_bestcase(rows: &[BestCaseRow], path: &Path) -> Result<PathBuf> {
    write_bytes(path, &bestcase_bytes(rows)?)
}

pub fn provenance_bytes(log: &[ProvenanceEntry]) -> Result<Vec<u8>> {
    to_jsonl(log)
}

pub fn write_provenance(log: &[ProvenanceEntry], path: &Path) -> Result<PathBuf> {
    write_bytes(path, &provenance_bytes(log)?)
}

pub fn read_provenance(path: &Path) -> Result<Vec<ProvenanceEntry>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_error(path, i + 1, e)))
        .collect()
}
