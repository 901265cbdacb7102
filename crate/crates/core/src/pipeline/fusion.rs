//! Blending of overlapped latent frames between consecutive GOPs.

use super::PipelineError;
use crate::latent::LatentTensor;

/// Weight `gamma(i)` given to the current GOP at overlap position `i`
/// (1-based, `i <= m'`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FusionWeight {
    Constant(f64),
    /// Rises from `1 / (m' + 1)` to `m' / (m' + 1)` across the overlap.
    Linear,
}

impl Default for FusionWeight {
    fn default() -> Self {
        FusionWeight::Constant(0.5)
    }
}

impl FusionWeight {
    pub fn at(&self, i: usize, overlap: usize) -> f64 {
        match *self {
            FusionWeight::Constant(g) => g,
            FusionWeight::Linear => i as f64 / (overlap + 1) as f64,
        }
    }
}

/// Blends the first `overlap` latent frames of `cur` with the time-aligned
/// last `overlap` frames of `prev`: current frame `j` pairs with previous
/// frame `l'_prev - overlap + j`.
pub fn fuse_overlap(
    prev: &LatentTensor,
    cur: &LatentTensor,
    overlap: usize,
    gamma: FusionWeight,
) -> Result<LatentTensor, PipelineError> {
    let (lp, lc) = (prev.shape().frames, cur.shape().frames);
    if overlap == 0 || overlap > lp || overlap > lc {
        return Err(PipelineError::OverlapTooLarge {
            overlap,
            frames: lp.min(lc),
        });
    }
    if prev.shape().frame_len() != cur.shape().frame_len() {
        return Err(PipelineError::BadDims(format!(
            "cannot fuse latents {} and {}",
            prev.shape(),
            cur.shape()
        )));
    }
    let mut out = cur.clone();
    for j in 0..overlap {
        let g = gamma.at(j + 1, overlap);
        let p = prev.frame(lp - overlap + j);
        for (o, pv) in out.frame_mut(j).iter_mut().zip(p) {
            *o = g * *o + (1.0 - g) * pv;
        }
    }
    Ok(out)
}
