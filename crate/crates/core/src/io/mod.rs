//! Video file formats and atomic output.

pub mod raw;
pub mod y4m;

use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::pipeline::{PipelineError, VideoTensor};

pub use raw::{read_raw, write_raw, RawDims};
pub use y4m::{parse_y4m, read_y4m, write_y4m, Y4mFile};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("malformed Y4M at byte {position}: {reason}")]
    MalformedY4M { position: usize, reason: String },
    #[error("unsupported chroma {0:?}; only mono and 4:4:4 are accepted")]
    UnsupportedChroma(String),
    #[error("size mismatch: expected {expected} bytes, found {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("malformed dims sidecar: {0}")]
    BadSidecar(String),
    #[error("cannot infer a video format from {0}")]
    UnknownFormat(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Os { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Video(#[from] PipelineError),
}

impl IoError {
    pub fn os(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            IoError::FileNotFound(path.to_path_buf())
        } else {
            IoError::Os {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|e| IoError::os(path, e))
}

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::os(dir, e))?;
    tmp.write_all(bytes).map_err(|e| IoError::os(path, e))?;
    tmp.persist(path).map_err(|e| IoError::os(path, e.error))?;
    Ok(())
}

/// 8-bit sample from a `[0, 1]` value.
pub(crate) fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub(crate) fn from_u8(b: u8) -> f64 {
    b as f64 / 255.0
}

fn extension(path: &Path) -> Option<String> {
    path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}

/// Reads `.y4m` directly or `.raw`/`.yuv` with its `.dims` sidecar.
pub fn read_video(path: &Path) -> Result<VideoTensor, IoError> {
    match extension(path).as_deref() {
        Some("y4m") => read_y4m(path),
        Some("raw" | "yuv") => read_raw(path, &raw::sidecar_path(path)),
        _ => Err(IoError::UnknownFormat(path.to_path_buf())),
    }
}

/// Writes by extension; raw output gets a `.dims` sidecar.
pub fn write_video(path: &Path, video: &VideoTensor) -> Result<(), IoError> {
    match extension(path).as_deref() {
        Some("y4m") => write_atomic(path, &write_y4m(&Y4mFile::new(video.clone()))?),
        Some("raw" | "yuv") => write_raw(path, video),
        _ => Err(IoError::UnknownFormat(path.to_path_buf())),
    }
}
