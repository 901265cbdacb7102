//! End-to-end GOP codec: segmentation, block transform, trajectory coding,
//! decoder-side denoising and overlap fusion.

pub mod codec;
pub mod fusion;
pub mod gop;
pub mod transform;
pub mod video;

use thiserror::Error;

use crate::latent::LatentError;
use crate::metrics::MetricsError;
use crate::prior::PriorError;
use crate::qctrl::QctrlError;
use crate::rcc::RccError;
use crate::schedule::ScheduleError;

pub use codec::{
    decode_gop, decode_video, denoise, effective_bitrate, encode_trajectory, encode_video, replay_state, CodecParams,
    DecodeOptions, Denoise, EncodedVideo, GopRecord, GopReport, GopSession, PriorKind, PriorSource, PriorSpec,
    TStarPolicy, Trajectory, VideoInfo,
};
pub use fusion::{fuse_overlap, FusionWeight};
pub use gop::{distinct_frames, segment_gops, Gop};
pub use transform::{transform_forward, transform_inverse, TransformSpec};
pub use video::{Colorspace, FrameRate, VideoTensor};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("bad dimensions: {0}")]
    BadDims(String),
    #[error("video has {frames} frames, need at least {minimum}")]
    VideoTooShort { frames: usize, minimum: usize },
    #[error("bad GOP parameters: {0}")]
    BadGopParams(String),
    #[error("overlap of {overlap} latent frames exceeds GOP latent length {frames}")]
    OverlapTooLarge { overlap: usize, frames: usize },
    #[error("malformed bitstream in GOP {gop}: {reason}")]
    MalformedBitstream { gop: usize, reason: String },
    #[error("t* = {t} outside 1..{steps}")]
    InvalidTStar { t: usize, steps: usize },
    #[error(transparent)]
    Rcc(#[from] RccError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Latent(#[from] LatentError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("rate control failed: {0}")]
    Control(Box<QctrlError>),
}
