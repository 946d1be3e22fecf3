//! Multi-page document classification on top of any page classifier.
//!
//! The crate consumes per-page probability vectors and turns them into
//! document-level predictions (first/second/last page sampling, maximum
//! confidence, soft voting, hard voting, or externally supplied document
//! scores such as those produced from a page grid). It then scores those
//! predictions with accuracy, weighted and macro F1, expected calibration
//! error and the area under the risk-coverage curve, and provides a
//! best-case union analysis over strategies.
//!
//! Beyond single documents it composes page streams (boundary detection
//! followed by per-segment classification), bundles, page-to-document label
//! mappings and page-type counting, plus seeded page-level distribution
//! shifts for robustness runs.
//!
//! All file formats live in [`io`]; the `pagefold` binary wires everything
//! into a command-line tool.

pub mod aggregate;
pub mod bestcase;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod model;
pub mod perturb;
pub mod tasks;

pub use aggregate::{aggregate_all, Strategy};
pub use error::{Error, Result};
pub use model::{
    BundleRecord, DocPrediction, DocumentRecord, LabelMap, LabelSpace, LabelSpaceKind, PageLabel,
    PagePrediction, PredictionSet, StreamRecord,
};
