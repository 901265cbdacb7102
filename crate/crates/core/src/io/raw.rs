//! Headerless 8-bit planar frames with a `key=value` dims sidecar.

use std::path::{Path, PathBuf};

use super::{from_u8, read_file, to_u8, write_atomic, IoError};
use crate::pipeline::{Colorspace, FrameRate, VideoTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawDims {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub colorspace: Colorspace,
    pub fps: FrameRate,
}

/// `clip.raw` pairs with `clip.raw.dims`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".dims");
    PathBuf::from(s)
}

fn colorspace_name(cs: Colorspace) -> &'static str {
    match cs {
        Colorspace::Mono => "mono",
        Colorspace::Yuv444 => "yuv444",
        Colorspace::Rgb => "rgb",
    }
}

impl RawDims {
    pub fn of(video: &VideoTensor) -> Self {
        Self {
            width: video.width(),
            height: video.height(),
            frames: video.frames(),
            colorspace: video.colorspace(),
            fps: video.fps,
        }
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let bad = |m: String| IoError::BadSidecar(m);
        let (mut width, mut height, mut frames) = (None, None, None);
        let (mut colorspace, mut fps) = (Colorspace::Mono, FrameRate::default());
        for line in text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key=value, got {line:?}")))?;
            let (k, v) = (k.trim(), v.trim());
            let num = || v.parse::<usize>().map_err(|_| bad(format!("bad {k} {v:?}")));
            match k {
                "width" => width = Some(num()?),
                "height" => height = Some(num()?),
                "frames" => frames = Some(num()?),
                "colorspace" => {
                    colorspace = match v {
                        "mono" => Colorspace::Mono,
                        "yuv444" => Colorspace::Yuv444,
                        "rgb" => Colorspace::Rgb,
                        _ => return Err(bad(format!("unknown colorspace {v:?}"))),
                    }
                }
                "fps" => {
                    let parsed = v
                        .split_once('/')
                        .and_then(|(n, d)| Some((n.parse().ok()?, d.parse().ok()?)));
                    fps = match parsed {
                        Some((num, den)) if num > 0 && den > 0 => FrameRate { num, den },
                        _ => return Err(bad(format!("bad fps {v:?}"))),
                    };
                }
                _ => return Err(bad(format!("unknown key {k:?}"))),
            }
        }
        let need = |v: Option<usize>, k: &str| v.filter(|&n| n > 0).ok_or_else(|| bad(format!("missing or zero {k}")));
        Ok(Self {
            width: need(width, "width")?,
            height: need(height, "height")?,
            frames: need(frames, "frames")?,
            colorspace,
            fps,
        })
    }

    pub fn to_text(&self) -> String {
        format!(
            "width={}\nheight={}\nframes={}\ncolorspace={}\nfps={}/{}\n",
            self.width,
            self.height,
            self.frames,
            colorspace_name(self.colorspace),
            self.fps.num,
            self.fps.den
        )
    }
}

/// Decodes planar bytes laid out as frame, channel plane, row, column.
pub fn decode_raw(bytes: &[u8], dims: RawDims) -> Result<VideoTensor, IoError> {
    let plane = dims.width * dims.height;
    let channels = dims.colorspace.channels();
    let expected = plane * channels * dims.frames;
    if bytes.len() != expected {
        return Err(IoError::SizeMismatch {
            expected,
            actual: bytes.len(),
        });
    }
    let mut data = Vec::with_capacity(expected);
    for frame in bytes.chunks(plane * channels) {
        for i in 0..plane {
            data.extend((0..channels).map(|c| from_u8(frame[c * plane + i])));
        }
    }
    Ok(VideoTensor::new(dims.frames, dims.height, dims.width, dims.colorspace, data)?.with_fps(dims.fps))
}

pub fn encode_raw(video: &VideoTensor) -> Vec<u8> {
    let (plane, channels) = (video.width() * video.height(), video.channels());
    let mut out = Vec::with_capacity(video.as_slice().len());
    for f in 0..video.frames() {
        let frame = video.frame(f);
        for c in 0..channels {
            out.extend((0..plane).map(|i| to_u8(frame[i * channels + c])));
        }
    }
    out
}

pub fn read_raw(path: &Path, sidecar: &Path) -> Result<VideoTensor, IoError> {
    let text = String::from_utf8(read_file(sidecar)?).map_err(|_| IoError::BadSidecar("not UTF-8".into()))?;
    decode_raw(&read_file(path)?, RawDims::parse(&text)?)
}

/// Writes the frames and their sidecar.
pub fn write_raw(path: &Path, video: &VideoTensor) -> Result<(), IoError> {
    write_atomic(path, &encode_raw(video))?;
    write_atomic(&sidecar_path(path), RawDims::of(video).to_text().as_bytes())
}
