//! Bjøntegaard deltas with monotone piecewise-cubic interpolation.

use std::io::{Read, Write};

use super::MetricsError;

/// Rate-quality points `(bpp, metric)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateQualityCurve {
    pub metric: String,
    pub points: Vec<(f64, f64)>,
}

impl RateQualityCurve {
    pub fn new(metric: impl Into<String>, mut points: Vec<(f64, f64)>) -> Self {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self {
            metric: metric.into(),
            points,
        }
    }

    /// True when the metric strictly increases with rate.
    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1)
    }
}

/// A Bjøntegaard delta, or `NotAvailable` when the curves do not overlap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BdResult {
    Value(f64),
    NotAvailable,
}

impl BdResult {
    pub fn value(self) -> Option<f64> {
        match self {
            BdResult::Value(v) => Some(v),
            BdResult::NotAvailable => None,
        }
    }
}

impl std::fmt::Display for BdResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BdResult::Value(v) => write!(f, "{v:.4}"),
            BdResult::NotAvailable => f.write_str("N/A"),
        }
    }
}

/// Shape-preserving cubic Hermite interpolant (Fritsch-Carlson slopes).
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

impl Pchip {
    /// `x` must be strictly increasing with at least two knots.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, MetricsError> {
        if x.len() < 2 || x.len() != y.len() {
            return Err(MetricsError::TooFewPoints(x.len()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(MetricsError::NotMonotone);
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let m: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = m[0];
            d[1] = m[0];
        } else {
            for k in 1..n - 1 {
                if m[k - 1] * m[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k]);
                }
            }
            d[0] = end_slope(h[0], h[1], m[0], m[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
        }
        Ok(Self { x, y, d })
    }

    fn segment(&self, v: f64) -> usize {
        match self.x.partition_point(|&k| k <= v) {
            0 => 0,
            i => (i - 1).min(self.x.len() - 2),
        }
    }

    /// Power-basis coefficients of segment `k` in `s = x - x_k`.
    fn coeffs(&self, k: usize) -> [f64; 4] {
        let h = self.x[k + 1] - self.x[k];
        let delta = (self.y[k + 1] - self.y[k]) / h;
        let (d0, d1) = (self.d[k], self.d[k + 1]);
        [
            self.y[k],
            d0,
            (3.0 * delta - 2.0 * d0 - d1) / h,
            (d0 + d1 - 2.0 * delta) / (h * h),
        ]
    }

    pub fn eval(&self, v: f64) -> f64 {
        let k = self.segment(v);
        let c = self.coeffs(k);
        let s = v - self.x[k];
        c[0] + s * (c[1] + s * (c[2] + s * c[3]))
    }

    /// Exact integral over `[a, b]` within the knot range.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        let anti = |c: &[f64; 4], s: f64| s * (c[0] + s * (c[1] / 2.0 + s * (c[2] / 3.0 + s * c[3] / 4.0)));
        let mut total = 0.0;
        for k in 0..self.x.len() - 1 {
            let lo = a.max(self.x[k]);
            let hi = b.min(self.x[k + 1]);
            if hi > lo {
                let c = self.coeffs(k);
                total += anti(&c, hi - self.x[k]) - anti(&c, lo - self.x[k]);
            }
        }
        total
    }
}

fn sorted_by_first(points: impl Iterator<Item = (f64, f64)>) -> (Vec<f64>, Vec<f64>) {
    let mut pts: Vec<(f64, f64)> = points.collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.into_iter().unzip()
}

fn check(curve: &RateQualityCurve) -> Result<(), MetricsError> {
    if curve.points.len() < 2 {
        return Err(MetricsError::TooFewPoints(curve.points.len()));
    }
    if curve.points.iter().any(|p| !(p.0 > 0.0) || !p.1.is_finite()) {
        return Err(MetricsError::NotMonotone);
    }
    Ok(())
}

/// Average rate difference of `test` against `anchor` in percent over the
/// shared metric range; negative means `test` needs fewer bits.
pub fn bd_rate(anchor: &RateQualityCurve, test: &RateQualityCurve) -> Result<BdResult, MetricsError> {
    check(anchor)?;
    check(test)?;
    let (xa, ya) = sorted_by_first(anchor.points.iter().map(|&(r, q)| (q, r.ln())));
    let (xt, yt) = sorted_by_first(test.points.iter().map(|&(r, q)| (q, r.ln())));
    let lo = xa[0].max(xt[0]);
    let hi = xa[xa.len() - 1].min(xt[xt.len() - 1]);
    if !(hi > lo) {
        return Ok(BdResult::NotAvailable);
    }
    let (pa, pt) = (Pchip::new(xa, ya)?, Pchip::new(xt, yt)?);
    let avg = (pt.integrate(lo, hi) - pa.integrate(lo, hi)) / (hi - lo);
    Ok(BdResult::Value(avg.exp_m1() * 100.0))
}

/// Average metric difference of `test` against `anchor` over the shared
/// log-rate range.
pub fn bd_metric(anchor: &RateQualityCurve, test: &RateQualityCurve) -> Result<BdResult, MetricsError> {
    check(anchor)?;
    check(test)?;
    let (xa, ya) = sorted_by_first(anchor.points.iter().map(|&(r, q)| (r.ln(), q)));
    let (xt, yt) = sorted_by_first(test.points.iter().map(|&(r, q)| (r.ln(), q)));
    let lo = xa[0].max(xt[0]);
    let hi = xa[xa.len() - 1].min(xt[xt.len() - 1]);
    if !(hi > lo) {
        return Ok(BdResult::NotAvailable);
    }
    let (pa, pt) = (Pchip::new(xa, ya)?, Pchip::new(xt, yt)?);
    Ok(BdResult::Value(
        (pt.integrate(lo, hi) - pa.integrate(lo, hi)) / (hi - lo),
    ))
}

const NA: &str = "N/A";

/// Writes `bpp,metric` rows, or a single `N/A,N/A` row for `None`.
pub fn write_curve_csv<W: Write>(w: W, curve: Option<&RateQualityCurve>) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bpp", "metric"])?;
    match curve {
        Some(c) => {
            for (r, q) in &c.points {
                out.write_record([r.to_string(), q.to_string()])?;
            }
        }
        None => out.write_record([NA, NA])?,
    }
    out.flush()?;
    Ok(())
}

/// Reads a curve written by [`write_curve_csv`]; `None` for the sentinel.
pub fn read_curve_csv<R: Read>(r: R, metric: &str) -> Result<Option<RateQualityCurve>, MetricsError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(MetricsError::Csv(format!("row {} has {} fields", i + 1, rec.len())));
        }
        if &rec[0] == NA {
            return Ok(None);
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| MetricsError::Csv(format!("row {}: {e}", i + 1)))
        };
        points.push((parse(&rec[0])?, parse(&rec[1])?));
    }
    Ok(Some(RateQualityCurve::new(metric, points)))
}
