//! Crate-level error with process exit codes.

use std::path::PathBuf;

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::bitstream::BitstreamError;
use crate::config::ConfigError;
use crate::io::IoError;
use crate::metrics::MetricsError;
use crate::pipeline::PipelineError;
use crate::qctrl::QctrlError;
use crate::rcc::RccError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Bitstream(#[from] BitstreamError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Control(#[from] QctrlError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("no sequences found in {0}")]
    EmptyCorpus(PathBuf),
}

/// `(code, meaning)` for every failure kind.
pub const EXIT_CODES: &[(i32, &str)] = &[
    (2, "usage error"),
    (3, "file not found"),
    (4, "other I/O failure"),
    (5, "malformed Y4M"),
    (6, "unsupported chroma format"),
    (7, "size mismatch between data and dimensions"),
    (8, "malformed dims sidecar or unknown file format"),
    (9, "invalid configuration"),
    (10, "malformed bitstream"),
    (11, "variance-profile sidecar missing or mismatched"),
    (12, "video too short for one GOP"),
    (13, "invalid codec parameters"),
    (14, "channel coding failure"),
    (15, "rate control failure"),
    (16, "metric computation failure"),
    (17, "theory analysis failure"),
    (18, "empty corpus"),
    (19, "internal model error"),
];

fn pipeline_code(e: &PipelineError) -> i32 {
    match e {
        PipelineError::VideoTooShort { .. } => 12,
        PipelineError::BadDims(_)
        | PipelineError::BadGopParams(_)
        | PipelineError::OverlapTooLarge { .. }
        | PipelineError::InvalidTStar { .. } => 13,
        PipelineError::MalformedBitstream { .. } => 10,
        PipelineError::Rcc(RccError::InvalidSeed(_) | RccError::MalformedCode { .. }) => 10,
        PipelineError::Rcc(_) => 14,
        PipelineError::Control(_) => 15,
        PipelineError::Metrics(_) => 16,
        PipelineError::Prior(_) | PipelineError::Schedule(_) | PipelineError::Latent(_) => 19,
    }
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Io(e) => match e {
                IoError::FileNotFound(_) => 3,
                IoError::Os { .. } => 4,
                IoError::MalformedY4M { .. } => 5,
                IoError::UnsupportedChroma(_) => 6,
                IoError::SizeMismatch { .. } => 7,
                IoError::BadSidecar(_) | IoError::UnknownFormat(_) => 8,
                IoError::Video(p) => pipeline_code(p),
            },
            Error::Config(_) => 9,
            Error::Bitstream(BitstreamError::MissingSidecar | BitstreamError::SidecarMismatch) => 11,
            Error::Bitstream(BitstreamError::Unrepresentable { .. }) => 13,
            Error::Bitstream(_) => 10,
            Error::Pipeline(p) => pipeline_code(p),
            Error::Control(_) => 15,
            Error::Metrics(_) => 16,
            Error::Analysis(_) => 17,
            Error::EmptyCorpus(_) => 18,
        }
    }
}
