//! Multi-scale structural similarity on single planes.

use super::MetricsError;

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable "valid" filtering with the Gaussian window.
fn filter(src: &[f64], h: usize, w: usize, win: &[f64; WINDOW]) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h - WINDOW + 1, w - WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|k| win[k] * src[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|k| win[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean contrast-structure term and mean SSIM at one scale.
fn ssim_terms(a: &[f64], b: &[f64], h: usize, w: usize) -> (f64, f64) {
    let win = gaussian_window();
    let (c1, c2) = ((K1 * 1.0f64).powi(2), (K2 * 1.0f64).powi(2));
    let prod = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..a.len()).map(f).collect() };
    let (mu_a, oh, ow) = filter(a, h, w, &win);
    let (mu_b, _, _) = filter(b, h, w, &win);
    let (aa, _, _) = filter(&prod(&|i| a[i] * a[i]), h, w, &win);
    let (bb, _, _) = filter(&prod(&|i| b[i] * b[i]), h, w, &win);
    let (ab, _, _) = filter(&prod(&|i| a[i] * b[i]), h, w, &win);
    let n = (oh * ow) as f64;
    let (mut cs_sum, mut ssim_sum) = (0.0, 0.0);
    for i in 0..oh * ow {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        let cs = (2.0 * cov + c2) / (va + vb + c2);
        let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        cs_sum += cs;
        ssim_sum += l * cs;
    }
    (cs_sum / n, ssim_sum / n)
}

fn downsample(src: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        for x in 0..ow {
            let i = 2 * y * w + 2 * x;
            out.push(0.25 * (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]));
        }
    }
    (out, oh, ow)
}

/// Largest scale count (at most 5) that fits an `h x w` plane.
pub fn max_scales(h: usize, w: usize) -> usize {
    let m = h.min(w);
    (1..=MS_SSIM_WEIGHTS.len())
        .rev()
        .find(|&s| m >= (1 << (s - 1)) * WINDOW)
        .unwrap_or(0)
}

/// MS-SSIM of two `h x w` planes with values in `[0, 1]` over `scales`
/// scales, with the standard weights renormalized to the scales used.
pub fn ms_ssim(a: &[f64], b: &[f64], h: usize, w: usize, scales: usize) -> Result<f64, MetricsError> {
    if h == 0 || w == 0 {
        return Err(MetricsError::ZeroDims);
    }
    if a.len() != h * w || b.len() != h * w {
        return Err(MetricsError::DimMismatch(format!(
            "planes of {} and {} samples for {h}x{w}",
            a.len(),
            b.len()
        )));
    }
    if scales == 0 || scales > MS_SSIM_WEIGHTS.len() || scales > max_scales(h, w) {
        return Err(MetricsError::TooSmallForScales {
            height: h,
            width: w,
            scales,
        });
    }
    let weights = &MS_SSIM_WEIGHTS[..scales];
    let total: f64 = weights.iter().sum();
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    let (mut h, mut w) = (h, w);
    let mut value = 1.0;
    for (j, wt) in weights.iter().enumerate() {
        let (cs, ssim) = ssim_terms(&a, &b, h, w);
        let term = if j + 1 == scales { ssim } else { cs };
        value *= term.max(0.0).powf(wt / total);
        if j + 1 < scales {
            let (da, nh, nw) = downsample(&a, h, w);
            let (db, _, _) = downsample(&b, h, w);
            (a, b, h, w) = (da, db, nh, nw);
        }
    }
    Ok(value)
}

/// [`ms_ssim`] with as many scales as the plane supports.
pub fn ms_ssim_auto(a: &[f64], b: &[f64], h: usize, w: usize) -> Result<f64, MetricsError> {
    let scales = max_scales(h, w);
    if scales == 0 {
        return Err(MetricsError::TooSmallForScales {
            height: h,
            width: w,
            scales: 1,
        });
    }
    ms_ssim(a, b, h, w, scales)
}
