//! DDPM noise schedule and the closed-form Gaussian conditionals shared by
//! the encoder and the decoder.
//!
//! Step indices are 1-based. Index 0 of every derived array holds the
//! boundary value (`alpha_bar(0) == 1`, `beta_tilde(0) == 0`).

use thiserror::Error;

use crate::latent::{LatentError, LatentTensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("step {t} outside 1..={steps}")]
    StepOutOfRange { t: usize, steps: usize },
    #[error(transparent)]
    Latent(#[from] LatentError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta_start: f64,
    beta_end: f64,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    one_minus_alpha_bar: Vec<f64>,
    beta_tilde: Vec<f64>,
}

/// Linear-in-`t` beta schedule between `beta_start` and `beta_end`.
pub fn build_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule, ScheduleError> {
    if steps == 0 {
        return Err(ScheduleError::InvalidSchedule("T must be at least 1".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(ScheduleError::InvalidSchedule(format!(
            "need 0 < beta_start <= beta_end < 1, got {beta_start} and {beta_end}"
        )));
    }
    let betas = if steps == 1 {
        vec![beta_start]
    } else {
        let span = beta_end - beta_start;
        (0..steps)
            .map(|i| beta_start + span * i as f64 / (steps - 1) as f64)
            .collect()
    };
    let mut sched = NoiseSchedule::from_betas(betas)?;
    sched.beta_start = beta_start;
    sched.beta_end = beta_end;
    Ok(sched)
}

impl NoiseSchedule {
    /// Builds a schedule from an explicit strictly increasing beta sequence.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self, ScheduleError> {
        if betas.is_empty() {
            return Err(ScheduleError::InvalidSchedule("empty beta sequence".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(ScheduleError::InvalidSchedule(format!("beta {b} outside (0, 1)")));
        }
        if betas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ScheduleError::InvalidSchedule(
                "betas must be strictly increasing".into(),
            ));
        }
        let steps = betas.len();
        let mut beta = Vec::with_capacity(steps + 1);
        let mut alpha = Vec::with_capacity(steps + 1);
        let mut alpha_bar = Vec::with_capacity(steps + 1);
        let mut one_minus_alpha_bar = Vec::with_capacity(steps + 1);
        let mut beta_tilde = Vec::with_capacity(steps + 1);
        beta.push(0.0);
        alpha.push(1.0);
        alpha_bar.push(1.0);
        one_minus_alpha_bar.push(0.0);
        beta_tilde.push(0.0);

        // log(alpha_bar) accumulated with Neumaier compensation over log1p terms.
        let mut log_sum = 0.0f64;
        let mut comp = 0.0f64;
        for (i, &b) in betas.iter().enumerate() {
            let term = (-b).ln_1p();
            let next = log_sum + term;
            if log_sum.abs() >= term.abs() {
                comp += (log_sum - next) + term;
            } else {
                comp += (term - next) + log_sum;
            }
            log_sum = next;
            let ab = (log_sum + comp).exp();
            // 1 - alpha_bar via expm1 keeps precision for tiny t.
            let one_minus = -(log_sum + comp).exp_m1();
            let bt = one_minus_alpha_bar[i] / one_minus * b;
            beta.push(b);
            alpha.push(1.0 - b);
            alpha_bar.push(ab);
            one_minus_alpha_bar.push(one_minus);
            beta_tilde.push(bt);
        }
        let last = alpha_bar[steps];
        if !(last > 0.0 && last < 1.0) {
            return Err(ScheduleError::InvalidSchedule(format!(
                "alpha_bar_T = {last} left (0, 1)"
            )));
        }
        Ok(Self {
            beta_start: beta[1],
            beta_end: beta[steps],
            beta,
            alpha,
            alpha_bar,
            one_minus_alpha_bar,
            beta_tilde,
        })
    }

    pub fn steps(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn beta_start(&self) -> f64 {
        self.beta_start
    }

    pub fn beta_end(&self) -> f64 {
        self.beta_end
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn beta_tilde(&self, t: usize) -> f64 {
        self.beta_tilde[t]
    }

    /// `1 - alpha_bar(t)` without cancellation for small `t`.
    pub fn one_minus_alpha_bar(&self, t: usize) -> f64 {
        self.one_minus_alpha_bar[t]
    }

    fn check_step(&self, t: usize) -> Result<(), ScheduleError> {
        if t == 0 || t > self.steps() {
            return Err(ScheduleError::StepOutOfRange { t, steps: self.steps() });
        }
        Ok(())
    }

    /// Coefficients of the forward posterior `q(z_{t-1} | z_t, y)`.
    pub fn posterior_coefs(&self, t: usize) -> Result<PosteriorCoefs, ScheduleError> {
        self.check_step(t)?;
        let denom = self.one_minus_alpha_bar(t);
        Ok(PosteriorCoefs {
            on_clean: self.alpha_bar[t - 1].sqrt() * self.beta[t] / denom,
            on_noisy: self.alpha[t].sqrt() * self.one_minus_alpha_bar(t - 1) / denom,
            var: self.beta_tilde[t],
        })
    }

    /// Coefficients of the learned reverse mean with the variance tied to
    /// the posterior.
    pub fn reverse_coefs(&self, t: usize) -> Result<ReverseCoefs, ScheduleError> {
        self.check_step(t)?;
        Ok(ReverseCoefs {
            scale: 1.0 / self.alpha[t].sqrt(),
            eps_scale: self.beta[t] / self.one_minus_alpha_bar(t).sqrt(),
            var: self.beta_tilde[t],
        })
    }
}

/// `mu = on_clean * y + on_noisy * z_t`, variance `var`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorCoefs {
    pub on_clean: f64,
    pub on_noisy: f64,
    pub var: f64,
}

/// `mu = scale * (z_t - eps_scale * eps)`, variance `var`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverseCoefs {
    pub scale: f64,
    pub eps_scale: f64,
    pub var: f64,
}

impl PosteriorCoefs {
    #[inline]
    pub fn mean(&self, clean: f64, noisy: f64) -> f64 {
        self.on_clean * clean + self.on_noisy * noisy
    }
}

impl ReverseCoefs {
    #[inline]
    pub fn mean(&self, noisy: f64, eps: f64) -> f64 {
        self.scale * (noisy - self.eps_scale * eps)
    }
}

pub fn posterior_params(
    sched: &NoiseSchedule,
    t: usize,
    z_t: &LatentTensor,
    y: &LatentTensor,
) -> Result<(LatentTensor, f64), ScheduleError> {
    z_t.ensure_same_shape(y)?;
    let c = sched.posterior_coefs(t)?;
    Ok((y.axpby(c.on_clean, z_t, c.on_noisy)?, c.var))
}

/// Clean-signal estimate `(z_t - sqrt(1 - abar_t) eps) / sqrt(abar_t)`.
pub fn estimate_x0(
    sched: &NoiseSchedule,
    t: usize,
    z_t: &LatentTensor,
    eps_hat: &LatentTensor,
) -> Result<LatentTensor, ScheduleError> {
    z_t.ensure_same_shape(eps_hat)?;
    sched.check_step(t)?;
    let inv = 1.0 / sched.alpha_bar(t).sqrt();
    let noise = sched.one_minus_alpha_bar(t).sqrt();
    Ok(z_t.axpby(inv, eps_hat, -noise * inv)?)
}

pub fn reverse_mean(
    sched: &NoiseSchedule,
    t: usize,
    z_t: &LatentTensor,
    eps_hat: &LatentTensor,
) -> Result<(LatentTensor, f64), ScheduleError> {
    z_t.ensure_same_shape(eps_hat)?;
    let c = sched.reverse_coefs(t)?;
    Ok((z_t.axpby(c.scale, eps_hat, -c.scale * c.eps_scale)?, c.var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::LatentShape;

    fn scalar(v: f64) -> LatentTensor {
        LatentTensor::from_vec(LatentShape::new(1, 1, 1, 1), vec![v]).unwrap()
    }

    #[test]
    fn single_step_schedule() {
        let s = NoiseSchedule::from_betas(vec![0.5]).unwrap();
        assert_eq!(s.alpha_bar(1), 0.5);
        assert_eq!(s.beta_tilde(1), 0.0);
    }

    #[test]
    fn two_step_product() {
        let s = NoiseSchedule::from_betas(vec![0.1, 0.2]).unwrap();
        assert!((s.alpha_bar(2) - 0.72).abs() < 1e-15);
        // (1 - 0.9) / (1 - 0.72) * 0.2
        assert!((s.beta_tilde(2) - 0.1 / 0.28 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(build_schedule(0, 1e-4, 0.02).is_err());
        assert!(build_schedule(10, 0.0, 0.02).is_err());
        assert!(build_schedule(10, 0.03, 0.02).is_err());
        assert!(build_schedule(10, 1e-4, 1.0).is_err());
        // Constant betas are not strictly increasing.
        assert!(build_schedule(10, 0.01, 0.01).is_err());
        assert!(build_schedule(1, 0.01, 0.01).is_ok());
    }

    #[test]
    fn invariants_hold_for_default_schedule() {
        let s = build_schedule(512, 1e-4, 0.02).unwrap();
        for t in 1..=s.steps() {
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            if t >= 2 {
                assert!(s.beta(t) > s.beta(t - 1));
                assert!(s.beta_tilde(t) >= 0.0 && s.beta_tilde(t) < s.beta(t));
            }
        }
        assert_eq!(s.beta_tilde(1), 0.0);
        assert!(s.alpha_bar(512) > 0.0 && s.alpha_bar(512) < 1.0);
    }

    #[test]
    fn first_step_posterior_is_clean_signal() {
        let s = build_schedule(8, 1e-3, 0.2).unwrap();
        let (mu, var) = posterior_params(&s, 1, &scalar(3.0), &scalar(-1.25)).unwrap();
        assert!((mu[0] + 1.25).abs() < 1e-12);
        assert_eq!(var, 0.0);
    }

    #[test]
    fn posterior_zero_inputs() {
        let s = build_schedule(8, 1e-3, 0.2).unwrap();
        let (mu, _) = posterior_params(&s, 5, &scalar(0.0), &scalar(0.0)).unwrap();
        assert_eq!(mu[0], 0.0);
    }

    #[test]
    fn posterior_hand_evaluated() {
        // abar_1 = 0.9, abar_2 = 0.72, beta_2 = 0.2, y = 1, z = 2.
        let s = NoiseSchedule::from_betas(vec![0.1, 0.2]).unwrap();
        let (mu, var) = posterior_params(&s, 2, &scalar(2.0), &scalar(1.0)).unwrap();
        let expected = 0.9f64.sqrt() * 0.2 / 0.28 * 1.0 + 0.8f64.sqrt() * 0.1 / 0.28 * 2.0;
        assert!((mu[0] - expected).abs() < 1e-14);
        assert!((var - 0.1 / 0.28 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn estimate_x0_substitution() {
        // abar_1 = 1/4 with a single step of beta 3/4.
        let s = NoiseSchedule::from_betas(vec![0.75]).unwrap();
        let x0 = estimate_x0(&s, 1, &scalar(1.0), &scalar(0.0)).unwrap();
        assert!((x0[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn estimate_x0_inverts_forward_noising() {
        let s = build_schedule(100, 1e-4, 0.05).unwrap();
        let (x, eps) = (0.37, -1.3);
        for t in [1, 17, 100] {
            let ab = s.alpha_bar(t);
            let z = ab.sqrt() * x + (1.0 - ab).sqrt() * eps;
            let x0 = estimate_x0(&s, t, &scalar(z), &scalar(eps)).unwrap();
            assert!((x0[0] - x).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn reverse_mean_without_noise_prediction() {
        let s = build_schedule(10, 1e-3, 0.1).unwrap();
        let (mu, var) = reverse_mean(&s, 4, &scalar(1.5), &scalar(0.0)).unwrap();
        assert!((mu[0] - 1.5 / s.alpha(4).sqrt()).abs() < 1e-14);
        assert_eq!(var, s.beta_tilde(4));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let s = build_schedule(4, 1e-3, 0.1).unwrap();
        let a = LatentTensor::zeros(LatentShape::new(1, 1, 1, 2));
        let b = LatentTensor::zeros(LatentShape::new(1, 1, 2, 1));
        assert!(matches!(
            posterior_params(&s, 2, &a, &b),
            Err(ScheduleError::Latent(LatentError::ShapeMismatch { .. }))
        ));
    }
}
