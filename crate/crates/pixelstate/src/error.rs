//! Crate-wide error type.
//!
//! Every variant maps to a stable machine-parseable class string used by the
//! CLI (`error[<class>]: <message>` on stderr, nonzero exit).

use std::fmt;
use std::io;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// I/O failure, annotated with the path being touched.
    Io { path: PathBuf, source: io::Error },
    /// An input tensor or buffer had the wrong shape.
    InvalidShape { expected: String, found: String },
    /// A bin index outside the state-space discretization.
    InvalidBin { index: usize, n_bins: usize },
    /// A state contained NaN or infinity.
    NonFiniteState,
    /// Training produced a non-finite loss.
    NonFiniteLoss { context: String },
    /// `step` called on an episode that already terminated.
    EpisodeDone,
    /// A dataset or checkpoint file failed validation.
    CorruptFile { path: PathBuf, detail: String },
    /// File format version not supported by this build.
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },
    /// Checkpoint architecture does not match what the caller expects.
    ArchMismatch { detail: String },
    /// A required artifact (dataset, checkpoint, ...) is absent.
    MissingArtifact { what: String, path: PathBuf },
    /// Config file rejected (unknown key, parse error, bad value).
    Config { detail: String },
    /// Another process holds the run-directory lock.
    LockHeld { path: PathBuf },
    /// Metric requested estimates from a trajectory that has none.
    MissingEstimates,
    /// Operation requires a nonempty dataset or buffer.
    Empty { what: String },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io { path: path.as_ref().to_path_buf(), source }
    }

    /// Stable identifier for scripted consumers of CLI errors.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::InvalidShape { .. } => "invalid_shape",
            Error::InvalidBin { .. } => "invalid_bin",
            Error::NonFiniteState => "non_finite_state",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::EpisodeDone => "episode_done",
            Error::CorruptFile { .. } => "corrupt_file",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::ArchMismatch { .. } => "arch_mismatch",
            Error::MissingArtifact { .. } => "missing_artifact",
            Error::Config { .. } => "config",
            Error::LockHeld { .. } => "lock_held",
            Error::MissingEstimates => "missing_estimates",
            Error::Empty { .. } => "empty",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io { path, source } => write!(f, "{}: {}", path.display(), source),
            Error::InvalidShape { expected, found } => {
                write!(f, "shape mismatch: expected {expected}, found {found}")
            }
            Error::InvalidBin { index, n_bins } => {
                write!(f, "bin index {index} out of range (table has {n_bins} bins)")
            }
            Error::NonFiniteState => write!(f, "state contains non-finite components"),
            Error::NonFiniteLoss { context } => {
                write!(f, "non-finite loss ({context}); check learning rate and input data")
            }
            Error::EpisodeDone => write!(f, "episode already terminated; reset before stepping"),
            Error::CorruptFile { path, detail } => {
                write!(f, "corrupt file {}: {detail}", path.display())
            }
            Error::VersionMismatch { path, found, expected } => write!(
                f,
                "{}: format version {found} unsupported (expected {expected})",
                path.display()
            ),
            Error::ArchMismatch { detail } => write!(f, "architecture mismatch: {detail}"),
            Error::MissingArtifact { what, path } => {
                write!(f, "missing {what} at {}", path.display())
            }
            Error::Config { detail } => write!(f, "config error: {detail}"),
            Error::LockHeld { path } => {
                write!(f, "run directory locked by another process ({})", path.display())
            }
            Error::MissingEstimates => {
                write!(f, "trajectory has no state estimates; run in predicted mode")
            }
            Error::Empty { what } => write!(f, "{what} is empty"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
