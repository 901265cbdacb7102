//! Orthonormal block transform between pixel GOPs and latents.
//!
//! Each `s x d x d` block of each video channel becomes one latent position;
//! its DCT coefficients are spread over latent channels
//! `((ch * s + bt) * d + by) * d + bx`.

use super::video::VideoTensor;
use super::PipelineError;
use crate::dct::{transform_axis, DctMatrix};
use crate::latent::{LatentShape, LatentTensor};
use crate::prior::FrequencyLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformSpec {
    pub temporal: usize,
    pub spatial: usize,
}

impl Default for TransformSpec {
    fn default() -> Self {
        Self {
            temporal: 4,
            spatial: 8,
        }
    }
}

impl TransformSpec {
    pub fn latent_shape(&self, frames: usize, height: usize, width: usize, channels: usize) -> LatentShape {
        let (s, d) = (self.temporal, self.spatial);
        LatentShape::new(frames / s, height / d, width / d, channels * s * d * d)
    }

    pub fn layout(&self, channels: usize) -> FrequencyLayout {
        FrequencyLayout {
            temporal: self.temporal,
            spatial: self.spatial,
            video_channels: channels,
        }
    }

    fn check(&self, frames: usize, height: usize, width: usize) -> Result<(), PipelineError> {
        let (s, d) = (self.temporal, self.spatial);
        if s == 0
            || d == 0
            || !frames.is_multiple_of(s)
            || !height.is_multiple_of(d)
            || !width.is_multiple_of(d)
            || frames == 0
        {
            return Err(PipelineError::BadDims(format!(
                "{frames}x{height}x{width} is not divisible by ({s}, {d}, {d})"
            )));
        }
        Ok(())
    }
}

struct Bases {
    t: DctMatrix,
    d: DctMatrix,
}

impl Bases {
    fn new(spec: &TransformSpec) -> Self {
        Self {
            t: DctMatrix::new(spec.temporal),
            d: DctMatrix::new(spec.spatial),
        }
    }

    fn apply(&self, block: &mut [f64], dims: [usize; 4], inverse: bool) {
        let order: [usize; 3] = if inverse { [2, 1, 0] } else { [0, 1, 2] };
        for axis in order {
            let m = if axis == 0 { &self.t } else { &self.d };
            transform_axis(block, dims, axis, m, inverse);
        }
    }
}

/// Maps pixels (shifted to zero mean) to a latent.
pub fn transform_forward(video: &VideoTensor, spec: TransformSpec) -> Result<LatentTensor, PipelineError> {
    let (frames, height, width, ch) = (video.frames(), video.height(), video.width(), video.channels());
    spec.check(frames, height, width)?;
    let (s, d) = (spec.temporal, spec.spatial);
    let shape = spec.latent_shape(frames, height, width, ch);
    let bases = Bases::new(&spec);
    let dims = [s, d, d, 1];
    let mut out = LatentTensor::zeros(shape);
    let mut block = vec![0.0; s * d * d];
    for lf in 0..shape.frames {
        for ly in 0..shape.height {
            for lx in 0..shape.width {
                for c in 0..ch {
                    for bt in 0..s {
                        for by in 0..d {
                            for bx in 0..d {
                                block[(bt * d + by) * d + bx] =
                                    video.at(lf * s + bt, ly * d + by, lx * d + bx, c) - 0.5;
                            }
                        }
                    }
                    bases.apply(&mut block, dims, false);
                    let base = shape.offset(lf, ly, lx, c * s * d * d);
                    out.as_mut_slice()[base..base + block.len()].copy_from_slice(&block);
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`transform_forward`]; samples are not clamped.
pub fn transform_inverse(
    latent: &LatentTensor,
    spec: TransformSpec,
    like: &VideoTensor,
) -> Result<VideoTensor, PipelineError> {
    let (s, d) = (spec.temporal, spec.spatial);
    let shape = latent.shape();
    let ch = like.channels();
    if shape.channels != ch * s * d * d {
        return Err(PipelineError::BadDims(format!(
            "latent {shape} does not carry {ch} channels of {s}x{d}x{d} blocks"
        )));
    }
    let (frames, height, width) = (shape.frames * s, shape.height * d, shape.width * d);
    let bases = Bases::new(&spec);
    let dims = [s, d, d, 1];
    let mut data = vec![0.0; frames * height * width * ch];
    let mut block = vec![0.0; s * d * d];
    for lf in 0..shape.frames {
        for ly in 0..shape.height {
            for lx in 0..shape.width {
                for c in 0..ch {
                    let base = shape.offset(lf, ly, lx, c * s * d * d);
                    let n = block.len();
                    block.copy_from_slice(&latent.as_slice()[base..base + n]);
                    bases.apply(&mut block, dims, true);
                    for bt in 0..s {
                        for by in 0..d {
                            for bx in 0..d {
                                let (f, y, x) = (lf * s + bt, ly * d + by, lx * d + bx);
                                data[((f * height + y) * width + x) * ch + c] = block[(bt * d + by) * d + bx] + 0.5;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(VideoTensor::new(frames, height, width, like.colorspace(), data)?.with_fps(like.fps))
}
