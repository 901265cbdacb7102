//! Rate and quality measurement.

pub mod bd;
pub mod ssim;

use thiserror::Error;

use crate::pipeline::{Gop, VideoTensor};

pub use bd::{bd_metric, bd_rate, read_curve_csv, write_curve_csv, BdResult, Pchip, RateQualityCurve};
pub use ssim::{max_scales, ms_ssim, ms_ssim_auto};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("dimensions must be positive")]
    ZeroDims,
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("{height}x{width} is too small for {scales} MS-SSIM scales")]
    TooSmallForScales { height: usize, width: usize, scales: usize },
    #[error("curve needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("curve points must be positive with distinct abscissae")]
    NotMonotone,
    #[error("no boundary frames given")]
    NoBoundaries,
    #[error("boundary frame {frame} outside 1..{frames}")]
    BadBoundary { frame: usize, frames: usize },
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for MetricsError {
    fn from(e: csv::Error) -> Self {
        MetricsError::Csv(e.to_string())
    }
}

impl From<std::io::Error> for MetricsError {
    fn from(e: std::io::Error) -> Self {
        MetricsError::Csv(e.to_string())
    }
}

/// Bits per pixel over `frames x height x width`.
pub fn bpp(total_bits: f64, frames: usize, height: usize, width: usize) -> Result<f64, MetricsError> {
    if frames == 0 || height == 0 || width == 0 {
        return Err(MetricsError::ZeroDims);
    }
    Ok(total_bits / (frames * height * width) as f64)
}

fn check_same(a: &VideoTensor, b: &VideoTensor) -> Result<(), MetricsError> {
    if (a.frames(), a.height(), a.width(), a.channels()) != (b.frames(), b.height(), b.width(), b.channels()) {
        return Err(MetricsError::DimMismatch(format!(
            "{}x{}x{}x{} vs {}x{}x{}x{}",
            a.frames(),
            a.height(),
            a.width(),
            a.channels(),
            b.frames(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

pub fn mse(a: &VideoTensor, b: &VideoTensor) -> Result<f64, MetricsError> {
    check_same(a, b)?;
    let n = a.as_slice().len() as f64;
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        / n)
}

/// PSNR in dB for unit peak; infinite for identical inputs.
pub fn psnr(a: &VideoTensor, b: &VideoTensor) -> Result<f64, MetricsError> {
    Ok(-10.0 * mse(a, b)?.log10())
}

/// Mean per-frame luma MS-SSIM with scales fitted to the frame size.
pub fn ms_ssim_video(a: &VideoTensor, b: &VideoTensor) -> Result<f64, MetricsError> {
    check_same(a, b)?;
    let (h, w) = (a.height(), a.width());
    let mut total = 0.0;
    for f in 0..a.frames() {
        total += ms_ssim_auto(&a.luma(f), &b.luma(f), h, w)?;
    }
    Ok(total / a.frames() as f64)
}

fn mean_abs_diff(v: &VideoTensor, f: usize) -> f64 {
    let (p, q) = (v.frame(f - 1), v.frame(f));
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64
}

/// Mean absolute frame difference across boundary pairs `(b - 1, b)`
/// divided by the mean over all other adjacent pairs. A constant video
/// scores 1.
pub fn boundary_discontinuity(video: &VideoTensor, boundaries: &[usize]) -> Result<f64, MetricsError> {
    if boundaries.is_empty() {
        return Err(MetricsError::NoBoundaries);
    }
    let frames = video.frames();
    if let Some(&frame) = boundaries.iter().find(|&&b| b == 0 || b >= frames) {
        return Err(MetricsError::BadBoundary { frame, frames });
    }
    let (mut bsum, mut bn, mut isum, mut inn) = (0.0, 0usize, 0.0, 0usize);
    for f in 1..frames {
        let d = mean_abs_diff(video, f);
        if boundaries.contains(&f) {
            bsum += d;
            bn += 1;
        } else {
            isum += d;
            inn += 1;
        }
    }
    let boundary = bsum / bn as f64;
    let interior = if inn == 0 { 0.0 } else { isum / inn as f64 };
    Ok(match (boundary == 0.0, interior == 0.0) {
        (true, true) => 1.0,
        (false, true) => f64::INFINITY,
        _ => boundary / interior,
    })
}

/// Frames where the assembled output switches source: each GOP start after
/// the first and, for fused overlaps, the end of the blended run.
pub fn seam_frames(gops: &[Gop], fused: bool) -> Vec<usize> {
    let mut out = Vec::new();
    for g in gops.iter().skip(1) {
        out.push(g.start);
        if fused && g.overlap > 0 {
            out.push(g.start + g.overlap);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Colorspace;

    #[test]
    fn bpp_arithmetic() {
        assert_eq!(bpp(96.0, 2, 4, 4).unwrap(), 3.0);
        assert_eq!(bpp(0.0, 2, 4, 4).unwrap(), 0.0);
        assert!(matches!(bpp(1.0, 0, 4, 4), Err(MetricsError::ZeroDims)));
    }

    #[test]
    fn discontinuity_guards() {
        let flat = VideoTensor::filled(6, 2, 2, Colorspace::Mono, 0.3);
        assert_eq!(boundary_discontinuity(&flat, &[3]).unwrap(), 1.0);
        assert!(matches!(
            boundary_discontinuity(&flat, &[]),
            Err(MetricsError::NoBoundaries)
        ));
        assert!(boundary_discontinuity(&flat, &[6]).is_err());
    }

    #[test]
    fn jump_at_boundary_scores_high() {
        let data: Vec<f64> = (0..8)
            .flat_map(|f| {
                let v = 0.01 * f as f64 + if f >= 4 { 0.5 } else { 0.0 };
                [v; 4]
            })
            .collect();
        let v = VideoTensor::new(8, 2, 2, Colorspace::Mono, data).unwrap();
        assert!(boundary_discontinuity(&v, &[4]).unwrap() > 10.0);
    }
}
