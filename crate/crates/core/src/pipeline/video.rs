//! Frame-sequential video with samples in `[0, 1]`.

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Colorspace {
    #[default]
    Mono,
    /// Full-resolution Y, Cb, Cr planes.
    Yuv444,
    Rgb,
}

impl Colorspace {
    pub fn channels(self) -> usize {
        match self {
            Colorspace::Mono => 1,
            Colorspace::Yuv444 | Colorspace::Rgb => 3,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Colorspace::Mono => 0,
            Colorspace::Yuv444 => 1,
            Colorspace::Rgb => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Colorspace::Mono),
            1 => Some(Colorspace::Yuv444),
            2 => Some(Colorspace::Rgb),
            _ => None,
        }
    }
}

/// Frame rate as a rational `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FrameRate {
    pub num: u32,
    pub den: u32,
}

impl Default for FrameRate {
    fn default() -> Self {
        Self { num: 30, den: 1 }
    }
}

/// `frames x height x width x channels`, row-major with channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    frames: usize,
    height: usize,
    width: usize,
    colorspace: Colorspace,
    pub fps: FrameRate,
    data: Vec<f64>,
}

impl VideoTensor {
    pub fn new(
        frames: usize,
        height: usize,
        width: usize,
        colorspace: Colorspace,
        data: Vec<f64>,
    ) -> Result<Self, PipelineError> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(PipelineError::BadDims(format!("empty video {frames}x{height}x{width}")));
        }
        let expected = frames * height * width * colorspace.channels();
        if data.len() != expected {
            return Err(PipelineError::BadDims(format!(
                "{} samples for {frames}x{height}x{width}x{}",
                data.len(),
                colorspace.channels()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(PipelineError::BadDims(format!("non-finite sample at {i}")));
        }
        Ok(Self {
            frames,
            height,
            width,
            colorspace,
            fps: FrameRate::default(),
            data,
        })
    }

    pub fn filled(frames: usize, height: usize, width: usize, colorspace: Colorspace, value: f64) -> Self {
        Self::new(
            frames,
            height,
            width,
            colorspace,
            vec![value; frames * height * width * colorspace.channels()],
        )
        .expect("valid dimensions")
    }

    pub fn with_fps(mut self, fps: FrameRate) -> Self {
        self.fps = fps;
        self
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.colorspace.channels()
    }

    pub fn colorspace(&self) -> Colorspace {
        self.colorspace
    }

    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn frame(&self, f: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[f * n..(f + 1) * n]
    }

    pub fn frame_mut(&mut self, f: usize) -> &mut [f64] {
        let n = self.frame_len();
        &mut self.data[f * n..(f + 1) * n]
    }

    #[inline]
    pub fn at(&self, f: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[((f * self.height + y) * self.width + x) * self.channels() + c]
    }

    /// Pixel count `frames * height * width`.
    pub fn pixels(&self) -> usize {
        self.frames * self.height * self.width
    }

    /// Frames `range`, replicating the last requested frame up to
    /// `padded_frames` and edge pixels up to `(height, width)`.
    pub fn padded_slice(
        &self,
        start: usize,
        len: usize,
        padded_frames: usize,
        height: usize,
        width: usize,
    ) -> VideoTensor {
        let c = self.channels();
        let mut data = Vec::with_capacity(padded_frames * height * width * c);
        for f in 0..padded_frames {
            let src_f = start + f.min(len - 1);
            for y in 0..height {
                let sy = y.min(self.height - 1);
                for x in 0..width {
                    let sx = x.min(self.width - 1);
                    let base = ((src_f * self.height + sy) * self.width + sx) * c;
                    data.extend_from_slice(&self.data[base..base + c]);
                }
            }
        }
        VideoTensor {
            frames: padded_frames,
            height,
            width,
            colorspace: self.colorspace,
            fps: self.fps,
            data,
        }
    }

    /// Top-left `height x width` crop of the first `frames` frames.
    pub fn cropped(&self, frames: usize, height: usize, width: usize) -> VideoTensor {
        let c = self.channels();
        let mut data = Vec::with_capacity(frames * height * width * c);
        for f in 0..frames {
            for y in 0..height {
                let base = ((f * self.height + y) * self.width) * c;
                data.extend_from_slice(&self.data[base..base + width * c]);
            }
        }
        VideoTensor {
            frames,
            height,
            width,
            colorspace: self.colorspace,
            fps: self.fps,
            data,
        }
    }

    /// Values clamped to `[0, 1]`.
    pub fn clamped(mut self) -> Self {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
        self
    }

    /// Luma plane of frame `f`: channel 0 for mono and YUV, BT.601 for RGB.
    pub fn luma(&self, f: usize) -> Vec<f64> {
        let frame = self.frame(f);
        match self.colorspace {
            Colorspace::Mono => frame.to_vec(),
            Colorspace::Yuv444 => frame.chunks_exact(3).map(|p| p[0]).collect(),
            Colorspace::Rgb => frame
                .chunks_exact(3)
                .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
                .collect(),
        }
    }
}
