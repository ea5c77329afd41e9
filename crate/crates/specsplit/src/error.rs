use std::fmt;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// A numeric or structural argument violates an operation's precondition.
    InvalidParameter(String),
    /// The polygon itself is unusable (self-intersecting, wrong orientation, degenerate edge).
    InvalidDomain(String),
    /// A bump or patch cannot be placed where requested.
    Placement(String),
    /// Triangulation could not reach the requested size/angle bounds.
    Meshing(String),
    /// Mesh motion would invert elements; carries the largest amplitude that is still safe.
    AmplitudeTooLarge { max_safe_t: f64 },
    /// Eigenvalue solve failed to converge or factorize.
    Solver(String),
    /// A boundary edge id does not exist in the mesh or domain.
    UnknownEdge(usize),
    /// All candidate bump centers have numerically indistinguishable discriminants.
    DegenerateDiscriminant { separation: f64, threshold: f64 },
    /// Amplitude search exhausted its range without achieving the required split.
    SplitFailed(String),
    /// A runtime assertion derived from the splitting contract failed.
    InvariantFailure(String),
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::InvalidDomain(msg) => write!(f, "invalid domain: {msg}"),
            Error::Placement(msg) => write!(f, "placement error: {msg}"),
            Error::Meshing(msg) => write!(f, "meshing error: {msg}"),
            Error::AmplitudeTooLarge { max_safe_t } => {
                write!(f, "deformation amplitude too large; largest safe t is {max_safe_t:.6e}")
            }
            Error::Solver(msg) => write!(f, "eigensolver error: {msg}"),
            Error::UnknownEdge(id) => write!(f, "unknown boundary edge id {id}"),
            Error::DegenerateDiscriminant { separation, threshold } => write!(
                f,
                "degenerate discriminants: best separation {separation:.3e} is below threshold {threshold:.3e}"
            ),
            Error::SplitFailed(msg) => write!(f, "split failed: {msg}"),
            Error::InvariantFailure(msg) => write!(f, "invariant failure: {msg}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
