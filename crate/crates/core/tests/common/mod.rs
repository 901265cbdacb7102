//! Reference implementations shared by integration tests.

use fgvc::rng::KeyedRng;

/// Fritsch-Carlson monotone cubic evaluated in Hermite form.
struct HermiteOracle {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl HermiteOracle {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let h: Vec<f64> = (0..n - 1).map(|k| x[k + 1] - x[k]).collect();
        let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        for k in 1..n - 1 {
            if del[k - 1] > 0.0 && del[k] > 0.0 || del[k - 1] < 0.0 && del[k] < 0.0 {
                let (w1, w2) = (2.0 * h[k] + h[k - 1], h[k] + 2.0 * h[k - 1]);
                d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
            }
        }
        let edge = |h0: f64, h1: f64, d0: f64, d1: f64| {
            let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
            if s * d0 <= 0.0 {
                0.0
            } else if d0 * d1 < 0.0 && s.abs() > 3.0 * d0.abs() {
                3.0 * d0
            } else {
                s
            }
        };
        if n == 2 {
            d = vec![del[0], del[0]];
        } else {
            d[0] = edge(h[0], h[1], del[0], del[1]);
            d[n - 1] = edge(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        }
        Self { x, y, d }
    }

    fn eval(&self, v: f64) -> f64 {
        let k = (0..self.x.len() - 1).rfind(|&k| self.x[k] <= v).unwrap_or(0);
        let h = self.x[k + 1] - self.x[k];
        let s = (v - self.x[k]) / h;
        let (h00, h10) = (2.0 * s.powi(3) - 3.0 * s * s + 1.0, s.powi(3) - 2.0 * s * s + s);
        let (h01, h11) = (-2.0 * s.powi(3) + 3.0 * s * s, s.powi(3) - s * s);
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }
}

fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * f(a) + inner + 0.5 * f(b))
}

pub fn oracle_bd_rate(anchor: &[(f64, f64)], test: &[(f64, f64)]) -> f64 {
    let interp =
        |c: &[(f64, f64)]| HermiteOracle::new(c.iter().map(|p| p.1).collect(), c.iter().map(|p| p.0.ln()).collect());
    let (ia, it) = (interp(anchor), interp(test));
    let lo = anchor[0].1.max(test[0].1);
    let hi = anchor[anchor.len() - 1].1.min(test[test.len() - 1].1);
    let diff = trapezoid(|q| it.eval(q) - ia.eval(q), lo, hi, 200_000) / (hi - lo);
    (diff.exp() - 1.0) * 100.0
}

pub fn random_curve(rng: &mut KeyedRng, n: usize) -> Vec<(f64, f64)> {
    let (mut r, mut q) = (0.02 + 0.05 * rng.uniform(), 0.6 + 0.1 * rng.uniform());
    let mut pts = Vec::new();
    for _ in 0..n {
        pts.push((r, q));
        r *= 1.3 + rng.uniform();
        q += 0.01 + 0.08 * rng.uniform();
    }
    pts
}
