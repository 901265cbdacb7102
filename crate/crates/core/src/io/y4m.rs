//! YUV4MPEG2 with 8-bit mono or 4:4:4 planes.

use std::path::Path;

use super::{from_u8, read_file, to_u8, IoError};
use crate::pipeline::{Colorspace, FrameRate, VideoTensor};

const SIGNATURE: &str = "YUV4MPEG2";
const FRAME: &str = "FRAME";

/// A parsed stream plus the header tokens and frame parameters needed to
/// write it back byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct Y4mFile {
    pub video: VideoTensor,
    /// Header tokens in file order, without separators.
    pub tokens: Vec<String>,
    /// Text after `FRAME` on each frame line, including its leading space.
    pub frame_params: Vec<String>,
}

fn chroma_token(cs: Colorspace) -> Option<&'static str> {
    match cs {
        Colorspace::Mono => Some("Cmono"),
        Colorspace::Yuv444 => Some("C444"),
        Colorspace::Rgb => None,
    }
}

impl Y4mFile {
    pub fn new(video: VideoTensor) -> Self {
        let fps = video.fps;
        Self {
            tokens: vec![
                format!("W{}", video.width()),
                format!("H{}", video.height()),
                format!("F{}:{}", fps.num, fps.den),
                chroma_token(video.colorspace()).unwrap_or("C444").to_string(),
            ],
            frame_params: Vec::new(),
            video,
        }
    }
}

fn malformed(position: usize, reason: impl Into<String>) -> IoError {
    IoError::MalformedY4M {
        position,
        reason: reason.into(),
    }
}

fn number<T: std::str::FromStr>(s: &str, position: usize, what: &str) -> Result<T, IoError> {
    s.parse().map_err(|_| malformed(position, format!("bad {what} {s:?}")))
}

fn parse_rate(s: &str, position: usize) -> Result<FrameRate, IoError> {
    let (n, d) = s
        .split_once(':')
        .ok_or_else(|| malformed(position, "frame rate needs num:den"))?;
    let rate = FrameRate {
        num: number(n, position, "frame rate")?,
        den: number(d, position, "frame rate")?,
    };
    if rate.num == 0 || rate.den == 0 {
        return Err(malformed(position, "zero frame rate"));
    }
    Ok(rate)
}

fn line_end(bytes: &[u8], from: usize) -> Option<usize> {
    bytes[from..].iter().position(|&b| b == b'\n').map(|i| from + i)
}

pub fn parse_y4m(bytes: &[u8]) -> Result<Y4mFile, IoError> {
    let end = line_end(bytes, 0).ok_or_else(|| malformed(0, "no header line"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|e| malformed(e.valid_up_to(), "header is not ASCII"))?;
    let mut parts = header.split(' ');
    if parts.next() != Some(SIGNATURE) {
        return Err(malformed(0, "missing YUV4MPEG2 signature"));
    }
    let (mut width, mut height, mut fps, mut chroma) = (None, None, FrameRate::default(), "420jpeg".to_string());
    let mut tokens = Vec::new();
    let mut pos = SIGNATURE.len() + 1;
    for tok in parts {
        if tok.is_empty() {
            return Err(malformed(pos, "empty header token"));
        }
        let value = &tok[1..];
        match tok.as_bytes()[0] {
            b'W' => width = Some(number::<usize>(value, pos, "width")?),
            b'H' => height = Some(number::<usize>(value, pos, "height")?),
            b'F' => fps = parse_rate(value, pos)?,
            b'C' => chroma = value.to_string(),
            b'I' | b'A' | b'X' => {}
            _ => return Err(malformed(pos, format!("unknown header token {tok:?}"))),
        }
        tokens.push(tok.to_string());
        pos += tok.len() + 1;
    }
    let width = width
        .filter(|&w| w > 0)
        .ok_or_else(|| malformed(end, "missing or zero W"))?;
    let height = height
        .filter(|&h| h > 0)
        .ok_or_else(|| malformed(end, "missing or zero H"))?;
    let colorspace = match chroma.as_str() {
        "mono" => Colorspace::Mono,
        "444" => Colorspace::Yuv444,
        other => return Err(IoError::UnsupportedChroma(other.to_string())),
    };
    let channels = colorspace.channels();
    let plane = width * height;
    let frame_bytes = plane * channels;

    let mut data = Vec::new();
    let mut frame_params = Vec::new();
    let mut at = end + 1;
    while at < bytes.len() {
        let eol = line_end(bytes, at).ok_or_else(|| malformed(at, "unterminated frame header"))?;
        let line = &bytes[at..eol];
        if !line.starts_with(FRAME.as_bytes()) {
            return Err(malformed(at, "expected FRAME marker"));
        }
        let params =
            std::str::from_utf8(&line[FRAME.len()..]).map_err(|_| malformed(at, "frame header is not ASCII"))?;
        if !params.is_empty() && !params.starts_with(' ') {
            return Err(malformed(at, "expected FRAME marker"));
        }
        frame_params.push(params.to_string());
        let start = eol + 1;
        if bytes.len() - start < frame_bytes {
            return Err(IoError::SizeMismatch {
                expected: frame_bytes,
                actual: bytes.len() - start,
            });
        }
        let planes = &bytes[start..start + frame_bytes];
        for i in 0..plane {
            for c in 0..channels {
                data.push(from_u8(planes[c * plane + i]));
            }
        }
        at = start + frame_bytes;
    }
    if frame_params.is_empty() {
        return Err(malformed(at, "no frames"));
    }
    let video = VideoTensor::new(frame_params.len(), height, width, colorspace, data)?.with_fps(fps);
    Ok(Y4mFile {
        video,
        tokens,
        frame_params,
    })
}

pub fn read_y4m(path: &Path) -> Result<VideoTensor, IoError> {
    Ok(parse_y4m(&read_file(path)?)?.video)
}

/// Serializes `file`, keeping its extra tokens and frame parameters. `W`,
/// `H`, `F` and `C` tokens follow the video when they disagree with it.
pub fn write_y4m(file: &Y4mFile) -> Result<Vec<u8>, IoError> {
    let v = &file.video;
    let chroma = chroma_token(v.colorspace()).ok_or_else(|| IoError::UnsupportedChroma("rgb".into()))?;
    let mut out = String::from(SIGNATURE);
    let mut seen_c = false;
    for tok in &file.tokens {
        let current = match tok.as_bytes().first() {
            Some(b'W') => format!("W{}", v.width()),
            Some(b'H') => format!("H{}", v.height()),
            Some(b'F') => format!("F{}:{}", v.fps.num, v.fps.den),
            Some(b'C') => {
                seen_c = true;
                chroma.to_string()
            }
            _ => tok.clone(),
        };
        let same = match tok.as_bytes()[0] {
            b'W' => tok[1..].parse() == Ok(v.width()),
            b'H' => tok[1..].parse() == Ok(v.height()),
            b'F' => parse_rate(&tok[1..], 0).ok() == Some(v.fps),
            _ => *tok == current,
        };
        out.push(' ');
        out.push_str(if same { tok } else { &current });
    }
    if !seen_c {
        out.push(' ');
        out.push_str(chroma);
    }
    out.push('\n');
    let mut bytes = out.into_bytes();
    let (plane, channels) = (v.width() * v.height(), v.channels());
    for f in 0..v.frames() {
        bytes.extend_from_slice(FRAME.as_bytes());
        if let Some(p) = file.frame_params.get(f) {
            bytes.extend_from_slice(p.as_bytes());
        }
        bytes.push(b'\n');
        let frame = v.frame(f);
        for c in 0..channels {
            bytes.extend((0..plane).map(|i| to_u8(frame[i * channels + c])));
        }
    }
    Ok(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fixture() -> Vec<u8> {
        let mut b = b"YUV4MPEG2 W2 H2 F25:1 Ip A1:1 Cmono XYSCSS=MONO\n".to_vec();
        b.extend_from_slice(b"FRAME\n");
        b.extend_from_slice(&[0, 51, 102, 255]);
        b.extend_from_slice(b"FRAME Ixyz\n");
        b.extend_from_slice(&[10, 20, 30, 40]);
        b
    }

    #[test]
    fn handcrafted_mono_fixture() {
        let f = parse_y4m(&fixture()).unwrap();
        let v = &f.video;
        assert_eq!((v.frames(), v.height(), v.width()), (2, 2, 2));
        assert_eq!(v.fps, FrameRate { num: 25, den: 1 });
        assert_eq!(v.frame(0), &[0.0, 0.2, 0.4, 1.0]);
        assert_eq!(v.at(1, 1, 0, 0), 30.0 / 255.0);
        assert_eq!(write_y4m(&f).unwrap(), fixture());
    }

    #[test]
    fn planar_444_is_interleaved() {
        let mut b = b"YUV4MPEG2 W1 H2 F30:1 C444\nFRAME\n".to_vec();
        b.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let f = parse_y4m(&b).unwrap();
        assert_eq!(
            f.video.frame(0),
            &[1.0, 3.0, 5.0, 2.0, 4.0, 6.0].map(|x: f64| x / 255.0)
        );
        assert_eq!(write_y4m(&f).unwrap(), b);
    }

    #[test]
    fn rejects_other_chroma() {
        let b = b"YUV4MPEG2 W2 H2 F30:1 C420jpeg\nFRAME\n\0\0\0\0\0\0".to_vec();
        assert!(matches!(parse_y4m(&b), Err(IoError::UnsupportedChroma(c)) if c == "420jpeg"));
        let b = b"YUV4MPEG2 W2 H2 F30:1\nFRAME\n\0\0\0\0\0\0".to_vec();
        assert!(matches!(parse_y4m(&b), Err(IoError::UnsupportedChroma(_))));
    }

    #[test]
    fn errors_carry_positions() {
        let b = b"YUV4MPEG2 W2 Hx Cmono\n".to_vec();
        assert!(matches!(parse_y4m(&b), Err(IoError::MalformedY4M { position: 13, .. })));
        let mut b = fixture();
        b[49] = b'G';
        assert!(matches!(parse_y4m(&b), Err(IoError::MalformedY4M { position: 48, .. })));
        let b = fixture();
        assert!(matches!(
            parse_y4m(&b[..b.len() - 1]),
            Err(IoError::SizeMismatch { expected: 4, actual: 3 })
        ));
    }

    proptest! {
        #[test]
        fn write_read_identity(
            frames in 1usize..4, h in 1usize..5, w in 1usize..5, color in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let cs = if color { Colorspace::Yuv444 } else { Colorspace::Mono };
            let mut rng = crate::rng::KeyedRng::from_seed(seed);
            let n = frames * h * w * cs.channels();
            let data = (0..n).map(|_| from_u8((rng.uniform() * 256.0) as u8)).collect();
            let v = VideoTensor::new(frames, h, w, cs, data).unwrap();
            let bytes = write_y4m(&Y4mFile::new(v.clone())).unwrap();
            let parsed = parse_y4m(&bytes).unwrap();
            prop_assert_eq!(&parsed.video, &v);
            prop_assert_eq!(write_y4m(&parsed).unwrap(), bytes);
        }
    }
}
