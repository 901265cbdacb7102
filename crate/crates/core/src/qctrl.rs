//! Adaptive quality control: sparse anchor decodes, an online power-law
//! rate-quality surrogate, and refinement decodes until the target quality
//! is met.

use std::collections::BTreeMap;
use std::error::Error as StdError;

use thiserror::Error;

pub type OracleError = Box<dyn StdError + Send + Sync>;

#[derive(Debug, Error)]
pub enum QctrlError {
    #[error("all sample rates are equal; the power law is undetermined")]
    DegenerateFit,
    #[error("surrogate exponent is zero and cannot be inverted")]
    NonInvertibleSurrogate,
    #[error("sample ({r}, {p}) is not strictly positive")]
    NonPositiveSample { r: f64, p: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("no history sample at alignment step {t}")]
    MissingAlignmentAnchor { t: usize },
    #[error("invalid control config: {0}")]
    InvalidConfig(String),
    #[error("no convergence; best t* = {} with quality {:.5}", .0.t_star, .0.quality)]
    NoConvergence(Box<RefineOutcome>),
    #[error("quality measurement failed: {0}")]
    Oracle(OracleError),
}

/// One rate-quality observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpSample {
    /// Bits per pixel.
    pub r: f64,
    pub p: f64,
    pub t: usize,
}

/// `P = alpha * R^beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateParams {
    pub alpha: f64,
    pub beta: f64,
    pub fit_r2: f64,
}

impl SurrogateParams {
    pub fn predict(&self, r: f64) -> f64 {
        self.alpha * r.powf(self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlConfig {
    /// Sparse anchor count.
    pub anchors: usize,
    pub eps: f64,
    pub max_iters: usize,
    pub target: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            anchors: 4,
            eps: 0.005,
            max_iters: 10,
            target: 0.9,
        }
    }
}

impl ControlConfig {
    fn validate(&self) -> Result<(), QctrlError> {
        if self.anchors < 2 || !(self.eps > 0.0) || self.max_iters == 0 {
            return Err(QctrlError::InvalidConfig(format!(
                "need M >= 2, eps > 0 and max_iters >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// A coded GOP that reports rate for free and quality by decoding.
pub trait RateQualityOracle {
    /// Schedule length `T`; selectable steps are `min_step()..T`.
    fn steps(&self) -> usize;

    fn min_step(&self) -> usize {
        1
    }

    /// Rate in bits per pixel when stopping at `t`.
    fn rate(&self, t: usize) -> f64;

    /// Quality of the decode stopping at `t`.
    fn quality(&mut self, t: usize) -> Result<f64, OracleError>;
}

/// Uniformly spaced anchor steps over the selectable range, ends included.
pub fn anchor_steps(min_step: usize, steps: usize, count: usize) -> Vec<usize> {
    let hi = steps - 1;
    let span = (hi - min_step) as f64;
    let mut out: Vec<usize> = (0..count)
        .map(|i| min_step + (span * i as f64 / (count - 1).max(1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

/// Measures `(R, P)` at `M` anchor steps.
pub fn sparse_sample<O: RateQualityOracle + ?Sized>(
    oracle: &mut O,
    anchors: usize,
) -> Result<Vec<RpSample>, QctrlError> {
    if anchors < 2 {
        return Err(QctrlError::TooFewSamples {
            needed: 2,
            got: anchors,
        });
    }
    anchor_steps(oracle.min_step(), oracle.steps(), anchors)
        .into_iter()
        .map(|t| {
            Ok(RpSample {
                r: oracle.rate(t),
                p: oracle.quality(t).map_err(QctrlError::Oracle)?,
                t,
            })
        })
        .collect()
}

fn r_squared(observed: &[f64], predicted: impl Iterator<Item = f64>) -> f64 {
    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
    let ss_tot: f64 = observed.iter().map(|p| (p - mean).powi(2)).sum();
    let ss_res: f64 = observed.iter().zip(predicted).map(|(p, q)| (p - q).powi(2)).sum();
    if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - ss_res / ss_tot
    }
}

/// Ordinary least squares `y = a + b x`.
fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

fn check_samples(phi: &[RpSample]) -> Result<(), QctrlError> {
    if phi.len() < 2 {
        return Err(QctrlError::TooFewSamples {
            needed: 2,
            got: phi.len(),
        });
    }
    if let Some(s) = phi.iter().find(|s| !(s.r > 0.0 && s.p > 0.0)) {
        return Err(QctrlError::NonPositiveSample { r: s.r, p: s.p });
    }
    let r0 = phi[0].r;
    if phi.iter().all(|s| s.r == r0) {
        return Err(QctrlError::DegenerateFit);
    }
    Ok(())
}

/// Least-squares power law. The scale is eliminated in closed form and the
/// exponent found by damped Newton from the log-log estimate.
pub fn fit_power_law(phi: &[RpSample]) -> Result<SurrogateParams, QctrlError> {
    check_samples(phi)?;
    let p: Vec<f64> = phi.iter().map(|s| s.p).collect();
    let ln_r: Vec<f64> = phi.iter().map(|s| s.r.ln()).collect();
    let ln_p: Vec<f64> = p.iter().map(|v| v.ln()).collect();

    // For fixed beta the best alpha is sum(P R^b) / sum(R^2b); working with
    // R / R_ref keeps the profile invariant under rescaling of R.
    let ln_ref = ln_r.iter().sum::<f64>() / ln_r.len() as f64;
    let u: Vec<f64> = ln_r.iter().map(|l| l - ln_ref).collect();
    let alpha_for = |beta: f64| -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (ui, pi) in u.iter().zip(&p) {
            let w = (beta * ui).exp();
            num += pi * w;
            den += w * w;
        }
        num / den
    };
    let cost = |beta: f64| -> f64 {
        let a = alpha_for(beta);
        u.iter()
            .zip(&p)
            .map(|(ui, pi)| (pi - a * (beta * ui).exp()).powi(2))
            .sum()
    };

    let (_, mut beta) = ols(&ln_r, &ln_p);
    let mut f = cost(beta);
    for _ in 0..200 {
        let h = 1e-4 * beta.abs().max(1e-2);
        let (fp, fm) = (cost(beta + h), cost(beta - h));
        let g = (fp - fm) / (2.0 * h);
        let curv = (fp - 2.0 * f + fm) / (h * h);
        let mut step = if curv > 0.0 { -g / curv } else { -g.signum() * h * 10.0 };
        let mut improved = false;
        for _ in 0..60 {
            let cand = cost(beta + step);
            if cand < f {
                beta += step;
                f = cand;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved || step.abs() < 1e-13 * beta.abs().max(1.0) {
            break;
        }
    }
    let alpha_ref = alpha_for(beta);
    let alpha = alpha_ref * (-beta * ln_ref).exp();
    let fit_r2 = r_squared(&p, u.iter().map(|ui| alpha_ref * (beta * ui).exp()));
    Ok(SurrogateParams { alpha, beta, fit_r2 })
}

/// R^2 of the least-squares line `P = a + b R`.
pub fn linear_fit_r2(phi: &[RpSample]) -> Result<f64, QctrlError> {
    check_samples(phi)?;
    let r: Vec<f64> = phi.iter().map(|s| s.r).collect();
    let p: Vec<f64> = phi.iter().map(|s| s.p).collect();
    let (a, b) = ols(&r, &p);
    Ok(r_squared(&p, r.iter().map(|x| a + b * x)))
}

/// R^2 of the least-squares fit `P = a + b ln R`.
pub fn log_fit_r2(phi: &[RpSample]) -> Result<f64, QctrlError> {
    check_samples(phi)?;
    let x: Vec<f64> = phi.iter().map(|s| s.r.ln()).collect();
    let p: Vec<f64> = phi.iter().map(|s| s.p).collect();
    let (a, b) = ols(&x, &p);
    Ok(r_squared(&p, x.iter().map(|v| a + b * v)))
}

/// `R* = (P_tar / alpha)^(1 / beta)`.
pub fn predict_target_rate(params: &SurrogateParams, target: f64) -> Result<f64, QctrlError> {
    if params.beta == 0.0 || !params.beta.is_finite() {
        return Err(QctrlError::NonInvertibleSurrogate);
    }
    if !(params.alpha > 0.0 && target > 0.0) {
        return Err(QctrlError::NonPositiveSample {
            r: params.alpha,
            p: target,
        });
    }
    Ok((target / params.alpha).powf(1.0 / params.beta))
}

/// Step whose rate is closest to `target_rate`; ties go to the larger step.
pub fn select_timestep(rate_table: &[(usize, f64)], target_rate: f64) -> Option<usize> {
    rate_table
        .iter()
        .map(|&(t, r)| (t, (r - target_rate).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(t, _)| t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub t: usize,
    pub r: f64,
    pub p: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub t_star: usize,
    pub quality: f64,
    pub rate: f64,
    pub converged: bool,
    /// Decodes spent after the initial sample set was formed, including any
    /// alignment decode.
    pub decodes: usize,
    pub phi: Vec<RpSample>,
    pub trace: Vec<TraceEntry>,
}

/// Iterative fit, predict, select and measure loop. The surrogate's pick
/// passes through `safeguarded_pick`.
///
/// `measured` holds the qualities already decoded on this GOP; they are
/// never decoded again and are candidates for the returned best step.
pub fn refine<O: RateQualityOracle + ?Sized>(
    oracle: &mut O,
    phi: Vec<RpSample>,
    measured: &mut BTreeMap<usize, f64>,
    config: &ControlConfig,
) -> Result<RefineOutcome, QctrlError> {
    config.validate()?;
    let target = config.target;
    let table: Vec<(usize, f64)> = (oracle.min_step()..oracle.steps())
        .rev()
        .map(|t| (t, oracle.rate(t)))
        .collect();
    let mut phi = phi;
    let mut trace = Vec::new();
    let mut decodes = 0;
    let best = |m: &BTreeMap<usize, f64>| {
        m.iter().map(|(&t, &p)| (t, p)).min_by(|a, b| {
            (a.1 - target)
                .abs()
                .total_cmp(&(b.1 - target).abs())
                .then(b.0.cmp(&a.0))
        })
    };
    let outcome = |m: &BTreeMap<usize, f64>, phi: Vec<RpSample>, trace, decodes, oracle: &O| {
        let (t, p) = best(m).expect("at least one measured sample");
        RefineOutcome {
            t_star: t,
            quality: p,
            rate: oracle.rate(t),
            converged: (p - target).abs() <= config.eps,
            decodes,
            phi,
            trace,
        }
    };
    if measured.is_empty() {
        return Err(QctrlError::TooFewSamples { needed: 1, got: 0 });
    }
    if let Some((_, p)) = best(measured) {
        if (p - target).abs() <= config.eps {
            return Ok(outcome(measured, phi, trace, decodes, oracle));
        }
    }
    for iteration in 1..=config.max_iters {
        let params = fit_power_law(&phi)?;
        let rate = predict_target_rate(&params, target)?;
        let picked = select_timestep(&table, rate).expect("nonempty rate table");
        let range = (oracle.min_step(), oracle.steps());
        let Some(t) = safeguarded_pick(picked, measured, &phi, target, range) else {
            break;
        };
        let p = oracle.quality(t).map_err(QctrlError::Oracle)?;
        decodes += 1;
        measured.insert(t, p);
        let sample = RpSample {
            r: oracle.rate(t),
            p,
            t,
        };
        trace.push(TraceEntry {
            iteration,
            t,
            r: sample.r,
            p,
            alpha: params.alpha,
            beta: params.beta,
        });
        phi.push(sample);
        let far = phi
            .iter()
            .enumerate()
            .max_by(|a, b| (a.1.p - target).abs().total_cmp(&(b.1.p - target).abs()))
            .map(|(i, _)| i)
            .expect("nonempty sample set");
        phi.remove(far);
        if (p - target).abs() <= config.eps {
            break;
        }
    }
    let out = outcome(measured, phi, trace, decodes, oracle);
    if out.converged {
        Ok(out)
    } else {
        Err(QctrlError::NoConvergence(Box::new(out)))
    }
}

/// Tightest measured bracket `(a, b)`, `a < b`, with `P(a) >= target > P(b)`.
fn bracket(measured: &BTreeMap<usize, f64>, target: f64) -> Option<(usize, usize)> {
    let a = measured.iter().filter(|(_, &p)| p >= target).map(|(&t, _)| t).max()?;
    let b = measured.range(a + 1..).find(|(_, &p)| p < target).map(|(&t, _)| t)?;
    Some((a, b))
}

/// Next step to measure, modelling distortion `1 - P` as a power of `t`.
///
/// With a measured bracket `(a, b)` around the target, interpolates between
/// its ends, bisecting in `ln t` when the interpolant lands on an end. Without one, extrapolates from the measured step nearest the
/// target with the exponent fitted over `phi` and the measurements. Falls back
/// to the surrogate's `picked` step when the model is unusable. `None` once
/// the bracket holds no unmeasured step.
fn safeguarded_pick(
    picked: usize,
    measured: &BTreeMap<usize, f64>,
    phi: &[RpSample],
    target: f64,
    (min_step, steps): (usize, usize),
) -> Option<usize> {
    let Some((a, b)) = bracket(measured, target) else {
        let model = distortion_exponent(phi, measured, target).and_then(|gamma| {
            let (&t0, &p0) = measured
                .iter()
                .min_by(|x, y| (x.1 - target).abs().total_cmp(&(y.1 - target).abs()))?;
            (p0 < 1.0 && target < 1.0).then(|| {
                let t = t0 as f64 * ((1.0 - target) / (1.0 - p0)).powf(1.0 / gamma);
                (t.round() as usize).clamp(min_step, steps - 1)
            })
        });
        return next_unmeasured(model.unwrap_or(picked), measured, target, min_step, steps);
    };
    if b - a < 2 {
        return None;
    }
    let inside = |t: usize| t > a && t < b && !measured.contains_key(&t);
    let (da, db) = (1.0 - measured[&a], 1.0 - measured[&b]);
    let (la, lb) = ((a as f64).ln(), (b as f64).ln());
    let secant = (da > 0.0 && db > da && target < 1.0).then(|| {
        let gamma = (db / da).ln() / (lb - la);
        (la + ((1.0 - target) / da).ln() / gamma).exp().round() as usize
    });
    match secant {
        Some(t) if inside(t) => Some(t),
        _ => {
            let mid = (0.5 * (la + lb)).exp();
            (a + 1..b)
                .filter(|&t| inside(t))
                .min_by(|x, y| (*x as f64 - mid).abs().total_cmp(&(*y as f64 - mid).abs()))
        }
    }
}

/// Slope of `ln(1 - P)` against `ln t`, through the two measured steps
/// nearest the target when there are two, else fitted over `phi` and the
/// measurements. Only points with `0 < P < 1` count; `None` unless positive.
fn distortion_exponent(phi: &[RpSample], measured: &BTreeMap<usize, f64>, target: f64) -> Option<f64> {
    let usable = |&(_, p): &(usize, f64)| p > 0.0 && p < 1.0;
    let mut own: Vec<(usize, f64)> = measured.iter().map(|(&t, &p)| (t, p)).filter(usable).collect();
    own.sort_by(|x, y| (x.1 - target).abs().total_cmp(&(y.1 - target).abs()));
    let points: BTreeMap<usize, f64> = if own.len() >= 2 {
        own.into_iter().take(2).collect()
    } else {
        phi.iter().map(|s| (s.t, s.p)).chain(own).filter(usable).collect()
    };
    if points.len() < 2 {
        return None;
    }
    let x: Vec<f64> = points.keys().map(|&t| (t as f64).ln()).collect();
    let y: Vec<f64> = points.values().map(|p| (1.0 - p).ln()).collect();
    let slope = ols(&x, &y).1;
    (slope.is_finite() && slope > 0.0).then_some(slope)
}

/// `picked` if unmeasured; otherwise the nearest unmeasured step on the
/// side of `picked` where the target quality lies.
fn next_unmeasured(
    picked: usize,
    measured: &BTreeMap<usize, f64>,
    target: f64,
    min_step: usize,
    steps: usize,
) -> Option<usize> {
    let Some(&p) = measured.get(&picked) else {
        return Some(picked);
    };
    // Quality rises as t falls.
    if p < target {
        (min_step..picked).rev().find(|t| !measured.contains_key(t))
    } else {
        (picked + 1..steps).find(|t| !measured.contains_key(t))
    }
}

/// Maps the previous GOP's samples onto the current GOP through one
/// alignment measurement, by multiplicative scaling of R and P.
pub fn reuse_history(phi_prev: &[RpSample], alignment: RpSample) -> Result<Vec<RpSample>, QctrlError> {
    let anchor = phi_prev
        .iter()
        .find(|s| s.t == alignment.t)
        .ok_or(QctrlError::MissingAlignmentAnchor { t: alignment.t })?;
    let c_r = alignment.r / anchor.r;
    let c_p = alignment.p / anchor.p;
    let mut out: Vec<RpSample> = phi_prev
        .iter()
        .filter(|s| s.t != alignment.t)
        .map(|s| RpSample {
            r: c_r * s.r,
            p: c_p * s.p,
            t: s.t,
        })
        .collect();
    out.push(alignment);
    Ok(out)
}

fn settle(result: Result<RefineOutcome, QctrlError>) -> Result<RefineOutcome, QctrlError> {
    match result {
        Err(QctrlError::NoConvergence(best)) => Ok(*best),
        other => other,
    }
}

/// Cold start: sparse anchors, then refinement. Non-convergence yields the
/// best-so-far outcome with `converged == false`.
pub fn control_cold<O: RateQualityOracle + ?Sized>(
    oracle: &mut O,
    config: &ControlConfig,
) -> Result<RefineOutcome, QctrlError> {
    config.validate()?;
    let phi = sparse_sample(oracle, config.anchors)?;
    let mut measured: BTreeMap<usize, f64> = phi.iter().map(|s| (s.t, s.p)).collect();
    settle(refine(oracle, phi, &mut measured, config))
}

/// Warm start from the previous GOP's samples, aligned at its chosen step.
/// Falls back to a cold start when the history lacks that step.
pub fn control_with_history<O: RateQualityOracle + ?Sized>(
    oracle: &mut O,
    phi_prev: &[RpSample],
    t_prev: usize,
    config: &ControlConfig,
) -> Result<RefineOutcome, QctrlError> {
    config.validate()?;
    if !phi_prev.iter().any(|s| s.t == t_prev) {
        return control_cold(oracle, config);
    }
    let alignment = RpSample {
        r: oracle.rate(t_prev),
        p: oracle.quality(t_prev).map_err(QctrlError::Oracle)?,
        t: t_prev,
    };
    let phi = reuse_history(phi_prev, alignment)?;
    let mut measured = BTreeMap::from([(t_prev, alignment.p)]);
    let mut out = settle(refine(oracle, phi, &mut measured, config))?;
    out.decodes += 1;
    Ok(out)
}
