use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("parse error in field `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("integration diverged at t = {t} (|x| = {norm:e}, last valid time {last_valid_t})")]
    Divergence { t: f64, last_valid_t: f64, norm: f64 },

    #[error("reduced trajectory left the training domain (radius {radius}) at t = {t}")]
    OutsideDomain { t: f64, radius: f64 },

    #[error("trajectory {index} diverged: {source}")]
    MemberDiverged {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("trajectory too short: {0}")]
    TooShort(String),

    #[error("ill-posed fit: {0}")]
    IllPosed(String),

    #[error("resonance at multi-index {multi_index:?}: combination {combination} vs eigenvalue {eigenvalue}")]
    Resonance {
        multi_index: Vec<usize>,
        combination: f64,
        eigenvalue: f64,
    },

    #[error("eigensolver failed ({0})")]
    Eigen(String),

    #[error("degenerate spectral cut: {0}")]
    DegenerateCut(String),

    #[error("near-zero eigenvalue {0}: integration horizon would overflow")]
    HorizonOverflow(f64),

    #[error("anchor lost: {0}")]
    AnchorLost(String),

    #[error("{0}")]
    NoResult(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            got,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Numerical failures (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. }
                | Error::OutsideDomain { .. }
                | Error::MemberDiverged { .. }
                | Error::IllPosed(_)
                | Error::Resonance { .. }
                | Error::Eigen(_)
                | Error::HorizonOverflow(_)
                | Error::AnchorLost(_)
                | Error::DegenerateCut(_)
                | Error::NoResult(_)
        )
    }
}
