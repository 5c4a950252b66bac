use thiserror::Error;

/// Errors raised anywhere in the pipeline. Each variant maps onto a CLI exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("operator at k = {k} is singular or ill-conditioned: {detail}")]
    Singular { k: i64, detail: String },
    #[error("certification failed: {0}")]
    Certification(String),
    #[error("band edges could not be resolved in window [{lo}, {hi}]")]
    BandResolution { lo: f64, hi: f64 },
    #[error("no positive direction for the dual functional: {0}")]
    NoPositiveDirection(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Certification(_) | Error::Singular { .. } | Error::NoPositiveDirection(_) => 2,
            Error::NonConvergence(_) => 3,
            Error::Config(_) | Error::Parse(_) | Error::Json(_) => 4,
            _ => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_category() {
        assert_eq!(Error::Config("x".into()).exit_code(), 4);
        assert_eq!(Error::Parse("x".into()).exit_code(), 4);
        assert_eq!(Error::Certification("x".into()).exit_code(), 2);
        assert_eq!(Error::Singular { k: 1, detail: "x".into() }.exit_code(), 2);
        assert_eq!(Error::NonConvergence("x".into()).exit_code(), 3);
        assert_eq!(Error::Usage("x".into()).exit_code(), 1);
        let io: Error = std::io::Error::new(std::io::ErrorKind::NotFound, "gone").into();
        assert_eq!(io.exit_code(), 1);
        assert!(io.to_string().contains("gone"));
    }
}
