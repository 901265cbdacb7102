//! Joint versus frame-wise coding cost on small Gaussian sources.
//!
//! For a source `y ~ N(0, Sigma)` every quantity here is closed form: the
//! expected per-step KL between the forward posterior and a model's exact
//! reverse conditional, and the conditional mutual information that the
//! frame-wise model fails to exploit. The measured side runs the real
//! coder with Karhunen-Loeve priors and compares coded bits.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use thiserror::Error;

use crate::latent::{LatentShape, LatentTensor};
use crate::pipeline::{encode_trajectory, PipelineError};
use crate::prior::{Basis, FramewisePrior, PriorError, PriorModel, SpectralGaussianPrior};
use crate::rcc::ChunkRule;
use crate::rng::{Domain, StreamKey};
use crate::schedule::NoiseSchedule;

const LOG2_E: f64 = std::f64::consts::LOG2_E;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("covariance is {rows}x{cols}, expected {expected}x{expected}")]
    BadCovariance { rows: usize, cols: usize, expected: usize },
    #[error("{dims} dimensions exceed the limit of {limit}")]
    TooLarge { dims: usize, limit: usize },
    #[error("step {t} outside 1..{steps}")]
    StepOutOfRange { t: usize, steps: usize },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Prior(#[from] PriorError),
}

pub const MAX_DIMS: usize = 64;

/// Zero-mean Gaussian source over `frames` frames of `height x width`.
#[derive(Debug, Clone)]
pub struct GaussianSourceSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl GaussianSourceSpec {
    pub fn new(frames: usize, height: usize, width: usize, cov: DMatrix<f64>) -> Result<Self, AnalysisError> {
        let n = frames * height * width;
        if n > MAX_DIMS {
            return Err(AnalysisError::TooLarge {
                dims: n,
                limit: MAX_DIMS,
            });
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(AnalysisError::BadCovariance {
                rows: cov.nrows(),
                cols: cov.ncols(),
                expected: n,
            });
        }
        if (&cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1.0) {
            return Err(AnalysisError::NotPositiveDefinite);
        }
        let chol = Cholesky::new(cov.clone()).ok_or(AnalysisError::NotPositiveDefinite)?;
        Ok(Self {
            frames,
            height,
            width,
            cov,
            chol,
        })
    }

    /// Separable AR(1): `rho_time^|df| * rho_space^(|dy| + |dx|)`.
    pub fn ar1(
        frames: usize,
        height: usize,
        width: usize,
        rho_time: f64,
        rho_space: f64,
    ) -> Result<Self, AnalysisError> {
        let n = frames * height * width;
        let idx = |i: usize| (i / (height * width), (i / width) % height, i % width);
        let cov = DMatrix::from_fn(n, n, |i, j| {
            let (fi, yi, xi) = idx(i);
            let (fj, yj, xj) = idx(j);
            rho_time.powi(fi.abs_diff(fj) as i32) * rho_space.powi((yi.abs_diff(yj) + xi.abs_diff(xj)) as i32)
        });
        Self::new(frames, height, width, cov)
    }

    pub fn dims(&self) -> usize {
        self.frames * self.frame_dim()
    }

    pub fn frame_dim(&self) -> usize {
        self.height * self.width
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `Sigma` with every cross-frame block zeroed.
    pub fn block_diagonal(&self) -> DMatrix<f64> {
        let d = self.frame_dim();
        DMatrix::from_fn(self.dims(), self.dims(), |i, j| {
            if i / d == j / d {
                self.cov[(i, j)]
            } else {
                0.0
            }
        })
    }

    /// Average of the diagonal frame blocks.
    pub fn mean_frame_block(&self) -> DMatrix<f64> {
        let d = self.frame_dim();
        let mut out = DMatrix::zeros(d, d);
        for f in 0..self.frames {
            out += self.cov.view((f * d, f * d), (d, d));
        }
        out / self.frames as f64
    }

    pub fn sample(&self, key: StreamKey, index: u64) -> DVector<f64> {
        let mut rng = key.rng(index);
        let e = DVector::from_fn(self.dims(), |_, _| rng.normal());
        self.chol.l() * e
    }
}

fn check_step(sched: &NoiseSchedule, t: usize) -> Result<(), AnalysisError> {
    if t == 0 || t >= sched.steps() {
        return Err(AnalysisError::StepOutOfRange {
            t,
            steps: sched.steps(),
        });
    }
    Ok(())
}

fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

/// Exact reverse conditional `z_t | z_{t+1} ~ N(A z_{t+1}, S)` when the
/// source covariance is `model`.
pub(crate) fn reverse_conditional(
    model: &DMatrix<f64>,
    sched: &NoiseSchedule,
    t: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = model.nrows();
    let (ab_t, ab_n, a_n) = (sched.alpha_bar(t), sched.alpha_bar(t + 1), sched.alpha(t + 1));
    let k_t = model * ab_t + identity(n) * sched.one_minus_alpha_bar(t);
    let k_n = model * ab_n + identity(n) * sched.one_minus_alpha_bar(t + 1);
    let k_n_inv = Cholesky::new(k_n)
        .expect("noisy covariance is positive definite")
        .inverse();
    let a = &k_t * &k_n_inv * a_n.sqrt();
    let s = &k_t - &k_t * &k_n_inv * &k_t * a_n;
    let s = (&s + s.transpose()) * 0.5;
    (a, s)
}

/// Expected `KL(q || p_model)` in bits at coded step `t`, averaged over the
/// true source and forward noise.
fn expected_step_kl(
    truth: &DMatrix<f64>,
    model: &DMatrix<f64>,
    sched: &NoiseSchedule,
    t: usize,
) -> Result<f64, AnalysisError> {
    let n = truth.nrows();
    let coefs = sched.posterior_coefs(t + 1).expect("step was checked");
    let (c_y, c_z, v) = (coefs.on_clean, coefs.on_noisy, coefs.var);
    let (a, s) = reverse_conditional(model, sched, t);
    let b = identity(n) * c_z - a;
    let ab_n = sched.alpha_bar(t + 1);
    let k_true = truth * ab_n + identity(n) * sched.one_minus_alpha_bar(t + 1);
    let cross = truth * &b.transpose() * (c_y * ab_n.sqrt());
    let c_d = truth * (c_y * c_y) + &cross + cross.transpose() + &b * k_true * b.transpose();
    let chol = Cholesky::new(s).ok_or(AnalysisError::NotPositiveDefinite)?;
    let s_inv = chol.inverse();
    let log_det_s = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let nats = 0.5 * (v * s_inv.trace() + (&s_inv * c_d).trace() - n as f64 + log_det_s - n as f64 * v.ln());
    Ok(nats * LOG2_E)
}

/// Per-step coding cost of the joint model (full `Sigma`).
pub fn kl_joint_step(spec: &GaussianSourceSpec, sched: &NoiseSchedule, t: usize) -> Result<f64, AnalysisError> {
    check_step(sched, t)?;
    expected_step_kl(&spec.cov, &spec.cov, sched, t)
}

/// Per-step coding cost of the frame-wise model (block-diagonal `Sigma`).
pub fn kl_framewise_step(spec: &GaussianSourceSpec, sched: &NoiseSchedule, t: usize) -> Result<f64, AnalysisError> {
    check_step(sched, t)?;
    expected_step_kl(&spec.cov, &spec.block_diagonal(), sched, t)
}

fn log_det(m: DMatrix<f64>) -> Result<f64, AnalysisError> {
    let chol = Cholesky::new(m).ok_or(AnalysisError::NotPositiveDefinite)?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Total correlation of `z_t` across frames given `z_{t+1}`, from the joint
/// conditional covariance and the per-frame own-conditioning covariances.
pub fn conditional_mi_gap(spec: &GaussianSourceSpec, sched: &NoiseSchedule, t: usize) -> Result<f64, AnalysisError> {
    check_step(sched, t)?;
    let d = spec.frame_dim();
    let (_, joint) = reverse_conditional(&spec.cov, sched, t);
    let mut per_frame = 0.0;
    for f in 0..spec.frames {
        let block = spec.cov.view((f * d, f * d), (d, d)).into_owned();
        let (_, s) = reverse_conditional(&block, sched, t);
        per_frame += log_det(s)?;
    }
    Ok(0.5 * (per_frame - log_det(joint)?) * LOG2_E)
}

/// `sum_{t = t*}^{T-1} (L_fw - L_joint)` in bits.
pub fn accumulate_gap(spec: &GaussianSourceSpec, sched: &NoiseSchedule, t_star: usize) -> Result<f64, AnalysisError> {
    check_step(sched, t_star)?;
    (t_star..sched.steps())
        .map(|t| Ok(kl_framewise_step(spec, sched, t)? - kl_joint_step(spec, sched, t)?))
        .sum()
}

/// Eigen-decomposition as an analysis basis: rows are eigenvectors sorted
/// by descending eigenvalue.
fn klt(cov: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let eig = SymmetricEigen::new(cov.clone());
    let mut order: Vec<usize> = (0..cov.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let rows = DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| eig.eigenvectors[(j, order[i])]);
    (rows, order.iter().map(|&i| eig.eigenvalues[i]).collect())
}

/// Joint prior diagonal in the KLT of `Sigma`.
pub fn joint_klt_prior(spec: &GaussianSourceSpec) -> Result<SpectralGaussianPrior, AnalysisError> {
    let (rows, vars) = klt(&spec.cov);
    Ok(SpectralGaussianPrior::new(
        latent_shape(spec),
        Basis::Dense(Arc::new(rows)),
        vars,
    )?)
}

/// Frame-wise prior diagonal in the KLT of the mean frame block.
pub fn framewise_klt_prior(spec: &GaussianSourceSpec) -> Result<FramewisePrior, AnalysisError> {
    let (rows, vars) = klt(&spec.mean_frame_block());
    Ok(FramewisePrior::new(
        latent_shape(spec),
        Basis::DensePerFrame(Arc::new(rows)),
        vars,
    )?)
}

fn latent_shape(spec: &GaussianSourceSpec) -> LatentShape {
    LatentShape::new(spec.frames, spec.height, spec.width, 1)
}

/// Coded bits per step from repeated trajectory coding with both priors.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredGap {
    pub trials: usize,
    pub t_star: usize,
    /// Mean over trials of frame-wise minus joint coded bits, indexed by step.
    pub per_step_diff: Vec<f64>,
    pub mean_joint_bits: f64,
    pub mean_framewise_bits: f64,
    /// Mean coded-bit difference over the trajectory.
    pub mean_diff: f64,
    /// Standard error of `mean_diff`.
    pub std_err: f64,
    /// Mean difference of the realized analytic KLs.
    pub kl_diff: f64,
}

/// Codes `trials` independent source draws with both KLT priors from `z_T`
/// down to `t_star` and compares coded bits.
pub fn measure_coded_gap(
    spec: &GaussianSourceSpec,
    sched: &NoiseSchedule,
    t_star: usize,
    trials: usize,
    rule: ChunkRule,
    base_seed: u64,
) -> Result<MeasuredGap, AnalysisError> {
    check_step(sched, t_star)?;
    let joint = joint_klt_prior(spec)?;
    let framewise = framewise_klt_prior(spec)?;
    let shape = latent_shape(spec);
    let source_key = StreamKey::new(base_seed, Domain::Synthetic);
    let steps = sched.steps();
    let mut per_step = vec![0.0; steps + 1];
    let (mut sum_j, mut sum_f, mut diffs, mut kl_diff) = (0.0, 0.0, Vec::with_capacity(trials), 0.0);
    for trial in 0..trials {
        let y = spec.sample(source_key, trial as u64);
        let latent = LatentTensor::from_vec(shape, y.as_slice().to_vec()).expect("shape matches spec");
        let code = |prior: &dyn PriorModel| -> Result<_, AnalysisError> {
            let coeffs = prior.analyze(&latent)?;
            Ok(encode_trajectory(
                prior,
                sched,
                rule,
                coeffs.as_slice(),
                base_seed,
                trial as u32,
                t_star,
                &[],
            )?)
        };
        let tj = code(&joint)?;
        let tf = code(&framewise)?;
        for (t, slot) in per_step.iter_mut().enumerate().take(steps).skip(t_star) {
            let bj = tj.bits_to(t) - tj.bits_to(t + 1);
            let bf = tf.bits_to(t) - tf.bits_to(t + 1);
            *slot += (bf as f64 - bj as f64) / trials as f64;
        }
        let (bj, bf) = (tj.bits_to(t_star) as f64, tf.bits_to(t_star) as f64);
        sum_j += bj;
        sum_f += bf;
        diffs.push(bf - bj);
        kl_diff += (tf.kl_to(t_star) - tj.kl_to(t_star)) / trials as f64;
    }
    let n = trials as f64;
    let mean_diff = diffs.iter().sum::<f64>() / n;
    let var = if trials > 1 {
        diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(MeasuredGap {
        trials,
        t_star,
        per_step_diff: per_step,
        mean_joint_bits: sum_j / n,
        mean_framewise_bits: sum_f / n,
        mean_diff,
        std_err: (var / n).sqrt(),
        kl_diff,
    })
}

/// One row of the theory table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryRow {
    pub rho: f64,
    pub t: usize,
    pub l_fw: f64,
    pub l_joint: f64,
    pub gap: f64,
    pub mi: f64,
    /// Mean measured coded-bit difference at this step, when measured.
    pub measured_diff: Option<f64>,
}

/// Analytic rows for every step `t_star..T` of an AR(1) source with
/// temporal correlation `rho`, plus measured differences when `trials > 0`.
pub fn theory_rows(
    spec: &GaussianSourceSpec,
    rho: f64,
    sched: &NoiseSchedule,
    t_star: usize,
    trials: usize,
    rule: ChunkRule,
    base_seed: u64,
) -> Result<Vec<TheoryRow>, AnalysisError> {
    let measured = if trials > 0 {
        Some(measure_coded_gap(spec, sched, t_star, trials, rule, base_seed)?)
    } else {
        None
    };
    (t_star..sched.steps())
        .rev()
        .map(|t| {
            let l_fw = kl_framewise_step(spec, sched, t)?;
            let l_joint = kl_joint_step(spec, sched, t)?;
            Ok(TheoryRow {
                rho,
                t,
                l_fw,
                l_joint,
                gap: l_fw - l_joint,
                mi: conditional_mi_gap(spec, sched, t)?,
                measured_diff: measured.as_ref().map(|m| m.per_step_diff[t]),
            })
        })
        .collect()
}

/// Writes rows as CSV with columns `rho,t,L_fw,L_joint,gap,MI,measured_diff`.
pub fn write_theory_csv<W: std::io::Write>(w: W, rows: &[TheoryRow]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["rho", "t", "L_fw", "L_joint", "gap", "MI", "measured_diff"])?;
    for r in rows {
        out.write_record([
            r.rho.to_string(),
            r.t.to_string(),
            format!("{:.9}", r.l_fw),
            format!("{:.9}", r.l_joint),
            format!("{:.9}", r.gap),
            format!("{:.9}", r.mi),
            r.measured_diff.map_or_else(|| "N/A".to_string(), |v| format!("{v:.6}")),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::KeyedRng;
    use crate::schedule::build_schedule;

    fn sched() -> NoiseSchedule {
        build_schedule(40, 1e-3, 0.2).unwrap()
    }

    #[test]
    fn independent_frames_have_no_gap() {
        let spec = GaussianSourceSpec::ar1(4, 2, 2, 0.0, 0.7).unwrap();
        let s = sched();
        for t in [1, 10, 39] {
            let j = kl_joint_step(&spec, &s, t).unwrap();
            let f = kl_framewise_step(&spec, &s, t).unwrap();
            assert!((j - f).abs() < 1e-9, "t={t}: {j} vs {f}");
            assert!(conditional_mi_gap(&spec, &s, t).unwrap().abs() < 1e-9);
        }
        assert!(accumulate_gap(&spec, &s, 1).unwrap().abs() < 1e-8);
    }

    #[test]
    fn gap_equals_conditional_mi() {
        let s = sched();
        for rho in [0.3, 0.6, 0.9] {
            let spec = GaussianSourceSpec::ar1(4, 2, 2, rho, 0.5).unwrap();
            for t in 1..40 {
                let gap = kl_framewise_step(&spec, &s, t).unwrap() - kl_joint_step(&spec, &s, t).unwrap();
                let mi = conditional_mi_gap(&spec, &s, t).unwrap();
                assert!(gap >= -1e-12);
                assert!((gap - mi).abs() < 1e-9, "rho={rho} t={t}: {gap} vs {mi}");
            }
        }
    }

    #[test]
    fn monte_carlo_kl_oracle() {
        // 2 frames of 1 dimension; per-draw KL evaluated from explicit means.
        let spec = GaussianSourceSpec::ar1(2, 1, 1, 0.9, 0.0).unwrap();
        let s = sched();
        let t = 12;
        let c = s.posterior_coefs(t + 1).unwrap();
        let (ab, omab) = (s.alpha_bar(t + 1), s.one_minus_alpha_bar(t + 1));
        let block = spec.block_diagonal();
        let mut rng = KeyedRng::from_seed(17);
        for (model, analytic) in [
            (spec.covariance().clone(), kl_joint_step(&spec, &s, t).unwrap()),
            (block, kl_framewise_step(&spec, &s, t).unwrap()),
        ] {
            let (a, cov) = reverse_conditional(&model, &s, t);
            let cov_inv = cov.clone().try_inverse().unwrap();
            let n = 1_000_000;
            let (mut sum, mut sq) = (0.0, 0.0);
            for i in 0..n {
                let y = spec.sample(StreamKey::new(5, Domain::Synthetic), i);
                let e = DVector::from_fn(2, |_, _| rng.normal());
                let z = &y * ab.sqrt() + e * omab.sqrt();
                let d = &y * c.on_clean + &z * c.on_noisy - &a * &z;
                let quad = (d.transpose() * &cov_inv * &d)[(0, 0)];
                let kl =
                    0.5 * (c.var * cov_inv.trace() + quad - 2.0 + cov.determinant().ln() - 2.0 * c.var.ln()) * LOG2_E;
                sum += kl;
                sq += kl * kl;
            }
            let mean = sum / n as f64;
            let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
            assert!(
                (mean - analytic).abs() < 3.0 * se,
                "mc={mean} analytic={analytic} se={se}"
            );
        }
    }

    #[test]
    fn rejects_bad_covariances() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            GaussianSourceSpec::new(2, 1, 1, bad),
            Err(AnalysisError::NotPositiveDefinite)
        ));
        assert!(matches!(
            GaussianSourceSpec::ar1(5, 4, 4, 0.5, 0.5),
            Err(AnalysisError::TooLarge { .. })
        ));
    }

    #[test]
    fn klt_priors_match_source() {
        let spec = GaussianSourceSpec::ar1(4, 2, 2, 0.8, 0.4).unwrap();
        let j = joint_klt_prior(&spec).unwrap();
        let total: f64 = j.variances().iter().sum();
        assert!((total - spec.covariance().trace()).abs() < 1e-9);
        assert!(j.variances().windows(2).all(|w| w[0] >= w[1]));
        let f = framewise_klt_prior(&spec).unwrap();
        assert_eq!(f.frame_profile().len(), 4);
    }
}
