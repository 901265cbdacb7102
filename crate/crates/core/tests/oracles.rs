use fgvc::latent::{LatentShape, LatentTensor};
use fgvc::metrics::{bd_metric, bd_rate, ms_ssim, RateQualityCurve};
use fgvc::rng::KeyedRng;
use fgvc::schedule::{build_schedule, estimate_x0, posterior_params, reverse_mean};

mod common;
use common::{oracle_bd_rate, random_curve};

/// Error-free product `a * b = hi + lo`.
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let hi = a * b;
    (hi, a.mul_add(b, -hi))
}

/// Double-double running product of `1 - beta_s`.
fn alpha_bar_dd(betas: &[f64], t: usize) -> f64 {
    let (mut hi, mut lo) = (1.0f64, 0.0f64);
    for &b in &betas[..t] {
        let a = 1.0 - b;
        let (p, e) = two_prod(hi, a);
        let e = e + lo * a;
        hi = p + e;
        lo = e - (hi - p);
    }
    hi + lo
}

fn linear_betas(steps: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect()
}

#[test]
fn cumulative_product_matches_extended_precision() {
    let betas = linear_betas(1000, 1e-4, 0.02);
    let sched = build_schedule(1000, 1e-4, 0.02).unwrap();
    for t in [1, 2, 10, 100, 500, 999, 1000] {
        let oracle = alpha_bar_dd(&betas, t);
        let got = sched.alpha_bar(t);
        assert!(((got - oracle) / oracle).abs() < 1e-12, "t={t}: {got} vs {oracle}");
    }
    let last = alpha_bar_dd(&betas, 1000);
    assert!(last > 3.9e-5 && last < 4.1e-5);
}

fn scalar(v: f64) -> LatentTensor {
    LatentTensor::from_vec(LatentShape::new(1, 1, 1, 1), vec![v]).unwrap()
}

#[test]
fn schedule_formulas_match_direct_evaluation() {
    let betas = linear_betas(50, 1e-3, 0.1);
    let sched = build_schedule(50, 1e-3, 0.1).unwrap();
    let mut rng = KeyedRng::from_seed(17);
    for _ in 0..200 {
        let t = 2 + (rng.uniform() * 48.0) as usize;
        let (z, y, e) = (rng.normal(), rng.normal(), rng.normal());
        let ab_t = alpha_bar_dd(&betas, t);
        let ab_prev = alpha_bar_dd(&betas, t - 1);
        let (beta, alpha) = (betas[t - 1], 1.0 - betas[t - 1]);

        let x0 = (z - (1.0 - ab_t).sqrt() * e) / ab_t.sqrt();
        let got = estimate_x0(&sched, t, &scalar(z), &scalar(e)).unwrap().as_slice()[0];
        assert!((got - x0).abs() < 1e-9 * (1.0 + x0.abs()));

        let mu = (z - beta / (1.0 - ab_t).sqrt() * e) / alpha.sqrt();
        let var = (1.0 - ab_prev) / (1.0 - ab_t) * beta;
        let (m, v) = reverse_mean(&sched, t, &scalar(z), &scalar(e)).unwrap();
        assert!((m.as_slice()[0] - mu).abs() < 1e-9 * (1.0 + mu.abs()));
        assert!((v - var).abs() < 1e-12);

        let mu_post = ab_prev.sqrt() * beta / (1.0 - ab_t) * y + alpha.sqrt() * (1.0 - ab_prev) / (1.0 - ab_t) * z;
        let (m, v) = posterior_params(&sched, t, &scalar(z), &scalar(y)).unwrap();
        assert!((m.as_slice()[0] - mu_post).abs() < 1e-9 * (1.0 + mu_post.abs()));
        assert!((v - var).abs() < 1e-12);
    }
}

/// Straightforward MS-SSIM: full 2-D window sums at every valid position.
fn naive_ms_ssim(a: &[f64], b: &[f64], h: usize, w: usize, scales: usize) -> f64 {
    const WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / 4.5).exp()).collect();
    let gs: f64 = g.iter().sum();
    let kernel: Vec<Vec<f64>> = (0..11)
        .map(|i| (0..11).map(|j| g[i] * g[j] / (gs * gs)).collect())
        .collect();
    let (c1, c2) = (0.0001, 0.0009);
    let total: f64 = WEIGHTS[..scales].iter().sum();
    let (mut a, mut b, mut h, mut w) = (a.to_vec(), b.to_vec(), h, w);
    let mut result = 1.0;
    for (s, weight) in WEIGHTS[..scales].iter().enumerate() {
        let (mut cs_sum, mut ssim_sum, mut n) = (0.0, 0.0, 0.0);
        for y0 in 0..=h - 11 {
            for x0 in 0..=w - 11 {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (i, row) in kernel.iter().enumerate() {
                    for (j, k) in row.iter().enumerate() {
                        let p = (y0 + i) * w + x0 + j;
                        ma += k * a[p];
                        mb += k * b[p];
                        saa += k * a[p] * a[p];
                        sbb += k * b[p] * b[p];
                        sab += k * a[p] * b[p];
                    }
                }
                let cs = (2.0 * (sab - ma * mb) + c2) / ((saa - ma * ma) + (sbb - mb * mb) + c2);
                let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
                cs_sum += cs;
                ssim_sum += l * cs;
                n += 1.0;
            }
        }
        let term = if s + 1 == scales { ssim_sum / n } else { cs_sum / n };
        result *= term.max(0.0).powf(weight / total);
        let half = |v: &[f64]| -> Vec<f64> {
            let mut out = Vec::new();
            for y in 0..h / 2 {
                for x in 0..w / 2 {
                    out.push(
                        (v[2 * y * w + 2 * x]
                            + v[2 * y * w + 2 * x + 1]
                            + v[(2 * y + 1) * w + 2 * x]
                            + v[(2 * y + 1) * w + 2 * x + 1])
                            / 4.0,
                    );
                }
            }
            out
        };
        a = half(&a);
        b = half(&b);
        h /= 2;
        w /= 2;
    }
    result
}

#[test]
fn ms_ssim_matches_naive_reimplementation() {
    let mut rng = KeyedRng::from_seed(5);
    for (h, w, scales) in [(48, 48, 3), (24, 30, 1), (88, 96, 4)] {
        let a: Vec<f64> = (0..h * w).map(|_| rng.uniform()).collect();
        let b: Vec<f64> = a.iter().map(|v| (v + 0.2 * rng.normal()).clamp(0.0, 1.0)).collect();
        let got = ms_ssim(&a, &b, h, w, scales).unwrap();
        let want = naive_ms_ssim(&a, &b, h, w, scales);
        assert!((got - want).abs() < 1e-6, "{h}x{w}/{scales}: {got} vs {want}");
    }
}

#[test]
fn bd_rate_matches_dense_integration_oracle() {
    let mut rng = KeyedRng::from_seed(2024);
    let mut checked = 0;
    while checked < 100 {
        let n = 4 + (rng.uniform() * 3.0) as usize;
        let a = random_curve(&mut rng, n);
        let t = random_curve(&mut rng, 4);
        let (ca, ct) = (
            RateQualityCurve::new("q", a.clone()),
            RateQualityCurve::new("q", t.clone()),
        );
        let Some(got) = bd_rate(&ca, &ct).unwrap().value() else {
            continue;
        };
        let want = oracle_bd_rate(&a, &t);
        assert!((got - want).abs() <= 1e-3 * want.abs().max(1.0), "{got} vs {want}");
        checked += 1;
    }
}

#[test]
fn bd_identity_and_half_rate() {
    let mut rng = KeyedRng::from_seed(9);
    for _ in 0..20 {
        let a = random_curve(&mut rng, 5);
        let ca = RateQualityCurve::new("q", a.clone());
        assert_eq!(bd_rate(&ca, &ca).unwrap().value(), Some(0.0));
        assert_eq!(bd_metric(&ca, &ca).unwrap().value(), Some(0.0));
        let half = RateQualityCurve::new("q", a.iter().map(|&(r, q)| (r / 2.0, q)).collect());
        let v = bd_rate(&ca, &half).unwrap().value().unwrap();
        assert!((v + 50.0).abs() < 0.1, "{v}");
    }
}
