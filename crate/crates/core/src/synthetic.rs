//! Deterministic synthetic clips built from random smooth fields.

use std::f64::consts::TAU;

use crate::pipeline::{Colorspace, VideoTensor};
use crate::rng::{Domain, KeyedRng, StreamKey};

/// Sum of random plane waves with amplitudes falling off as a power of
/// frequency, scaled to unit variance.
#[derive(Debug, Clone)]
pub struct SmoothField {
    waves: Vec<(f64, f64, f64, f64)>,
}

impl SmoothField {
    pub fn random(rng: &mut KeyedRng, components: usize, exponent: f64) -> Self {
        let mut waves = Vec::with_capacity(components);
        for _ in 0..components {
            let radius = 1.0 + 7.0 * rng.uniform();
            let angle = TAU * rng.uniform();
            let phase = TAU * rng.uniform();
            waves.push((
                radius * angle.cos(),
                radius * angle.sin(),
                phase,
                radius.powf(-exponent),
            ));
        }
        let power: f64 = waves.iter().map(|w| w.3 * w.3 / 2.0).sum();
        let norm = power.sqrt();
        for w in &mut waves {
            w.3 /= norm;
        }
        Self { waves }
    }

    /// Value at `(y, x)` over a `size`-periodic domain.
    pub fn at(&self, y: f64, x: f64, size: f64) -> f64 {
        self.waves
            .iter()
            .map(|&(fx, fy, phase, amp)| amp * (TAU * (fx * x + fy * y) / size + phase).cos())
            .sum()
    }
}

const COMPONENTS: usize = 24;
const EXPONENT: f64 = 1.0;

fn video_from(frames: usize, h: usize, w: usize, mut pixel: impl FnMut(usize, usize, usize) -> f64) -> VideoTensor {
    let mut data = Vec::with_capacity(frames * h * w);
    for f in 0..frames {
        for y in 0..h {
            for x in 0..w {
                data.push(pixel(f, y, x).clamp(0.0, 1.0));
            }
        }
    }
    VideoTensor::new(frames, h, w, Colorspace::Mono, data).expect("dimensions are consistent")
}

/// Smooth Gaussian fields evolving as AR(1) in time with correlation `rho`,
/// centred at 0.5 with standard deviation `sigma`.
pub fn gaussian_sequence(frames: usize, h: usize, w: usize, rho: f64, sigma: f64, seed: u64) -> VideoTensor {
    drifting_variance(frames, h, w, rho, sigma, sigma, seed)
}

/// As [`gaussian_sequence`] with the standard deviation moving linearly
/// from `sigma_start` to `sigma_end` over the clip.
pub fn drifting_variance(
    frames: usize,
    h: usize,
    w: usize,
    rho: f64,
    sigma_start: f64,
    sigma_end: f64,
    seed: u64,
) -> VideoTensor {
    let mut rng = StreamKey::new(seed, Domain::Synthetic).rng(0);
    let size = h.max(w) as f64;
    let mut state = vec![0.0; h * w];
    let mut fields = Vec::with_capacity(frames);
    let innovation = (1.0 - rho * rho).sqrt();
    for f in 0..frames {
        let field = SmoothField::random(&mut rng, COMPONENTS, EXPONENT);
        for (i, s) in state.iter_mut().enumerate() {
            let v = field.at((i / w) as f64, (i % w) as f64, size);
            *s = if f == 0 { v } else { rho * *s + innovation * v };
        }
        fields.push(state.clone());
    }
    let span = frames.saturating_sub(1).max(1) as f64;
    video_from(frames, h, w, |f, y, x| {
        let sigma = sigma_start + (sigma_end - sigma_start) * f as f64 / span;
        0.5 + sigma * fields[f][y * w + x]
    })
}

/// A fixed smooth texture translated by `velocity` pixels per frame, with
/// wrap-around.
pub fn moving_texture(frames: usize, h: usize, w: usize, velocity: (f64, f64), sigma: f64, seed: u64) -> VideoTensor {
    let mut rng = StreamKey::new(seed, Domain::Synthetic).rng(1);
    let field = SmoothField::random(&mut rng, COMPONENTS, EXPONENT);
    let size = h.max(w) as f64;
    video_from(frames, h, w, |f, y, x| {
        let (dy, dx) = (velocity.0 * f as f64, velocity.1 * f as f64);
        0.5 + sigma * field.at(y as f64 - dy, x as f64 - dx, size)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let a = gaussian_sequence(8, 16, 16, 0.9, 0.15, 3);
        assert_eq!(a, gaussian_sequence(8, 16, 16, 0.9, 0.15, 3));
        assert_ne!(a, gaussian_sequence(8, 16, 16, 0.9, 0.15, 4));
        assert!(a.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn correlation_controls_frame_differences() {
        let diff = |v: &VideoTensor| {
            (1..v.frames())
                .map(|f| {
                    v.frame(f)
                        .iter()
                        .zip(v.frame(f - 1))
                        .map(|(a, b)| (a - b).abs())
                        .sum::<f64>()
                })
                .sum::<f64>()
        };
        let smooth = gaussian_sequence(8, 16, 16, 0.95, 0.1, 1);
        let rough = gaussian_sequence(8, 16, 16, 0.0, 0.1, 1);
        assert!(diff(&smooth) < 0.5 * diff(&rough));
    }

    #[test]
    fn variance_drifts() {
        let v = drifting_variance(10, 16, 16, 0.8, 0.02, 0.2, 9);
        let spread = |f: usize| {
            let p = v.frame(f);
            let m = p.iter().sum::<f64>() / p.len() as f64;
            p.iter().map(|x| (x - m).powi(2)).sum::<f64>() / p.len() as f64
        };
        assert!(spread(9) > 10.0 * spread(0));
    }

    #[test]
    fn texture_moves_by_velocity() {
        let v = moving_texture(3, 16, 16, (0.0, 2.0), 0.1, 5);
        for y in 0..16 {
            for x in 2..16 {
                assert!((v.at(1, y, x, 0) - v.at(0, y, x - 2, 0)).abs() < 1e-12);
            }
        }
    }
}
