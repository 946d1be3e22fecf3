use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid label space: {0}")]
    InvalidLabelSpace(String),

    #[error("invalid label map: {0}")]
    InvalidLabelMap(String),

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("empty document")]
    EmptyDocument,

    #[error("document {doc_id:?}: expected page_index {expected}, found {found}")]
    NonContiguousPages {
        doc_id: String,
        expected: usize,
        found: usize,
    },

    #[error("duplicate prediction for ({doc_id:?}, {page_index:?})")]
    DuplicatePrediction {
        doc_id: String,
        page_index: Option<usize>,
    },

    #[error("document {doc_id:?}: score vector has length {found}, expected {expected}")]
    LengthMismatch {
        doc_id: String,
        expected: usize,
        found: usize,
    },

    #[error("no label for document {doc_id:?}")]
    MissingLabel { doc_id: String },

    #[error("no documents")]
    NoDocuments,

    #[error("{0}")]
    InvalidArgument(String),

    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),

    #[error("coverage mismatch: {0}")]
    CoverageMismatch(String),

    #[error("document {doc_id:?}: {source}")]
    InDocument {
        doc_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("page {page:?}: {source}")]
    Image {
        page: String,
        #[source]
        source: image::ImageError,
    },

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_document(doc_id: &str, source: Error) -> Self {
        Error::InDocument {
            doc_id: doc_id.to_owned(),
            source: Box::new(source),
        }
    }
}
