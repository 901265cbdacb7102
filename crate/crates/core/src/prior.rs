//! Analytic Gaussian denoisers standing in for a learned noise predictor.
//!
//! Both priors model the clean latent as independent zero-mean Gaussian
//! coefficients in an orthonormal analysis basis. Under that model the MMSE
//! noise prediction is a per-coefficient Wiener gain, so denoising, KLs and
//! expected coding costs are all closed form.
//!
//! [`SpectralGaussianPrior`] uses a basis spanning every latent frame, so it
//! captures temporal correlation. [`FramewisePrior`] transforms each latent
//! frame on its own and shares one per-frame variance profile, so its
//! prediction for frame `i` reads only frame `i`.

use std::io::{self, Read, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dct::{transform_axis, DctMatrix};
use crate::latent::{LatentError, LatentShape, LatentTensor};
use crate::schedule::NoiseSchedule;

pub const DEFAULT_EPS_VAR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PriorError {
    #[error("variance profile has {actual} coefficients, latent needs {expected}")]
    ProfileMismatch { expected: usize, actual: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("variance {value} at coefficient {index} is not positive")]
    NonPositiveVariance { index: usize, value: f64 },
    #[error("basis {basis} cannot act on shape {shape}")]
    BasisMismatch { basis: &'static str, shape: LatentShape },
    #[error("malformed profile sidecar: {0}")]
    MalformedSidecar(String),
    #[error(transparent)]
    Latent(#[from] LatentError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Orthonormal analysis basis of a prior.
#[derive(Debug, Clone)]
pub enum Basis {
    /// Separable DCT over latent frames, rows and columns of every channel.
    Dct3d,
    /// Separable DCT over rows and columns of every channel, per latent frame.
    Dct2dPerFrame,
    /// Rows are basis vectors over the flattened latent.
    Dense(Arc<DMatrix<f64>>),
    /// Rows are basis vectors over one flattened latent frame.
    DensePerFrame(Arc<DMatrix<f64>>),
}

impl Basis {
    pub fn id(&self) -> &'static str {
        match self {
            Basis::Dct3d => "dct3d",
            Basis::Dct2dPerFrame => "dct2d-per-frame",
            Basis::Dense(_) => "dense",
            Basis::DensePerFrame(_) => "dense-per-frame",
        }
    }

    pub fn is_per_frame(&self) -> bool {
        matches!(self, Basis::Dct2dPerFrame | Basis::DensePerFrame(_))
    }

    fn check(&self, shape: LatentShape) -> Result<(), PriorError> {
        let ok = match self {
            Basis::Dct3d | Basis::Dct2dPerFrame => true,
            Basis::Dense(m) => m.nrows() == shape.len() && m.ncols() == shape.len(),
            Basis::DensePerFrame(m) => m.nrows() == shape.frame_len() && m.ncols() == shape.frame_len(),
        };
        if ok {
            Ok(())
        } else {
            Err(PriorError::BasisMismatch {
                basis: self.id(),
                shape,
            })
        }
    }

    fn apply(&self, shape: LatentShape, data: &mut [f64], inverse: bool) {
        let dims = [shape.frames, shape.height, shape.width, shape.channels];
        match self {
            Basis::Dct3d | Basis::Dct2dPerFrame => {
                let first = if matches!(self, Basis::Dct3d) { 0 } else { 1 };
                let axes: Vec<usize> = (first..3).collect();
                let order: Vec<usize> = if inverse {
                    axes.into_iter().rev().collect()
                } else {
                    axes
                };
                for axis in order {
                    transform_axis(data, dims, axis, &DctMatrix::new(dims[axis]), inverse);
                }
            }
            Basis::Dense(m) => {
                let v = DVector::from_column_slice(data);
                let out = if inverse { m.tr_mul(&v) } else { &**m * v };
                data.copy_from_slice(out.as_slice());
            }
            Basis::DensePerFrame(m) => {
                let n = shape.frame_len();
                for frame in data.chunks_mut(n) {
                    let v = DVector::from_column_slice(frame);
                    let out = if inverse { m.tr_mul(&v) } else { &**m * v };
                    frame.copy_from_slice(out.as_slice());
                }
            }
        }
    }

    pub fn analyze(&self, latent: &LatentTensor) -> Result<LatentTensor, PriorError> {
        self.check(latent.shape())?;
        let mut out = latent.clone();
        self.apply(latent.shape(), out.as_mut_slice(), false);
        Ok(out)
    }

    pub fn synthesize(&self, coeffs: &LatentTensor) -> Result<LatentTensor, PriorError> {
        self.check(coeffs.shape())?;
        let mut out = coeffs.clone();
        self.apply(coeffs.shape(), out.as_mut_slice(), true);
        Ok(out)
    }
}

/// How latent channels map back to intra-block frequencies of the block
/// transform that produced them: channel `c` is `(video_channel, bt, by, bx)`
/// over extents `(video_channels, temporal, spatial, spatial)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrequencyLayout {
    pub temporal: usize,
    pub spatial: usize,
    pub video_channels: usize,
}

impl FrequencyLayout {
    /// Each latent channel is its own frequency-free component.
    pub const fn plain(channels: usize) -> Self {
        Self {
            temporal: 1,
            spatial: 1,
            video_channels: channels,
        }
    }

    fn block_freq(&self, c: usize) -> (f64, f64, f64) {
        let bx = c % self.spatial;
        let by = (c / self.spatial) % self.spatial;
        let bt = (c / (self.spatial * self.spatial)) % self.temporal;
        (bt as f64, by as f64, bx as f64)
    }
}

/// `sigma^2(f) = amplitude / (1 + |f|)^exponent` over a 3-D frequency index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawProfile {
    pub amplitude: f64,
    pub exponent: f64,
}

impl Default for PowerLawProfile {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            exponent: 2.0,
        }
    }
}

impl PowerLawProfile {
    #[inline]
    fn at(&self, norm: f64) -> f64 {
        self.amplitude / (1.0 + norm).powf(self.exponent)
    }

    /// Profile over the joint 3-D DCT basis. The frequency along each axis is
    /// the block frequency plus the fractional latent-grid frequency.
    pub fn joint(&self, shape: LatentShape, layout: FrequencyLayout, eps_var: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(shape.len());
        for kt in 0..shape.frames {
            for ky in 0..shape.height {
                for kx in 0..shape.width {
                    for c in 0..shape.channels {
                        let (bt, by, bx) = layout.block_freq(c);
                        let ft = bt + kt as f64 / shape.frames as f64;
                        let fy = by + ky as f64 / shape.height as f64;
                        let fx = bx + kx as f64 / shape.width as f64;
                        out.push(self.at((ft * ft + fy * fy + fx * fx).sqrt()).max(eps_var));
                    }
                }
            }
        }
        out
    }

    /// Per-frame profile over the 2-D DCT basis; temporal frequency comes
    /// from the block transform only.
    pub fn per_frame(&self, shape: LatentShape, layout: FrequencyLayout, eps_var: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(shape.frame_len());
        for ky in 0..shape.height {
            for kx in 0..shape.width {
                for c in 0..shape.channels {
                    let (bt, by, bx) = layout.block_freq(c);
                    let fy = by + ky as f64 / shape.height as f64;
                    let fx = bx + kx as f64 / shape.width as f64;
                    out.push(self.at((bt * bt + fy * fy + fx * fx).sqrt()).max(eps_var));
                }
            }
        }
        out
    }
}

/// Scalar Wiener noise prediction for a coefficient of variance `var`.
#[inline]
pub fn wiener_eps(z: f64, var: f64, alpha_bar: f64, one_minus_alpha_bar: f64) -> f64 {
    z * one_minus_alpha_bar.sqrt() / (alpha_bar * var + one_minus_alpha_bar)
}

/// Posterior variance of a coefficient of prior variance `var` given its
/// noisy observation at level `alpha_bar`.
#[inline]
pub fn wiener_error(var: f64, alpha_bar: f64, one_minus_alpha_bar: f64) -> f64 {
    var * one_minus_alpha_bar / (alpha_bar * var + one_minus_alpha_bar)
}

/// A denoiser for `z_t`. Implementations are pure and deterministic.
pub trait PriorModel: Send + Sync {
    fn name(&self) -> &'static str;

    fn shape(&self) -> LatentShape;

    fn basis(&self) -> &Basis;

    /// Source variance of every coefficient in the analysis basis.
    fn variances(&self) -> &[f64];

    fn analyze(&self, latent: &LatentTensor) -> Result<LatentTensor, PriorError> {
        self.check_shape(latent.shape())?;
        self.basis().analyze(latent)
    }

    fn synthesize(&self, coeffs: &LatentTensor) -> Result<LatentTensor, PriorError> {
        self.check_shape(coeffs.shape())?;
        self.basis().synthesize(coeffs)
    }

    fn check_shape(&self, shape: LatentShape) -> Result<(), PriorError> {
        if shape != self.shape() {
            return Err(LatentError::ShapeMismatch {
                expected: self.shape(),
                actual: shape,
            }
            .into());
        }
        Ok(())
    }

    /// Noise prediction on coefficients already in the analysis basis.
    fn predict_eps_coeffs(&self, z: &[f64], t: usize, sched: &NoiseSchedule, out: &mut [f64]) {
        let ab = sched.alpha_bar(t);
        let omab = sched.one_minus_alpha_bar(t);
        for ((o, &zi), &v) in out.iter_mut().zip(z).zip(self.variances()) {
            *o = wiener_eps(zi, v, ab, omab);
        }
    }

    /// Noise prediction in the latent domain.
    fn predict_eps(&self, z_t: &LatentTensor, t: usize, sched: &NoiseSchedule) -> Result<LatentTensor, PriorError> {
        let coeffs = self.analyze(z_t)?;
        let mut eps = LatentTensor::zeros(coeffs.shape());
        self.predict_eps_coeffs(coeffs.as_slice(), t, sched, eps.as_mut_slice());
        self.synthesize(&eps)
    }
}

fn validate_profile(profile: &[f64], expected: usize) -> Result<(), PriorError> {
    if profile.len() != expected {
        return Err(PriorError::ProfileMismatch {
            expected,
            actual: profile.len(),
        });
    }
    if let Some((index, &value)) = profile.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(PriorError::NonPositiveVariance { index, value });
    }
    Ok(())
}

/// Joint spatiotemporal Gaussian prior, diagonal in `basis`.
#[derive(Debug, Clone)]
pub struct SpectralGaussianPrior {
    shape: LatentShape,
    basis: Basis,
    var_profile: Vec<f64>,
}

impl SpectralGaussianPrior {
    pub fn new(shape: LatentShape, basis: Basis, var_profile: Vec<f64>) -> Result<Self, PriorError> {
        if basis.is_per_frame() {
            return Err(PriorError::BasisMismatch {
                basis: basis.id(),
                shape,
            });
        }
        basis.check(shape)?;
        validate_profile(&var_profile, shape.len())?;
        Ok(Self {
            shape,
            basis,
            var_profile,
        })
    }

    pub fn power_law(
        shape: LatentShape,
        layout: FrequencyLayout,
        profile: PowerLawProfile,
        eps_var: f64,
    ) -> Result<Self, PriorError> {
        Self::new(shape, Basis::Dct3d, profile.joint(shape, layout, eps_var))
    }

    /// Fits the profile to a corpus of latents (given in the latent domain).
    pub fn fit(basis: Basis, corpus: &[LatentTensor], eps_var: f64) -> Result<Self, PriorError> {
        let first = corpus.first().ok_or(PriorError::EmptyCorpus)?;
        let shape = first.shape();
        let coeffs = corpus
            .iter()
            .map(|l| {
                first.ensure_same_shape(l)?;
                basis.analyze(l)
            })
            .collect::<Result<Vec<_>, PriorError>>()?;
        let profile = fit_variance_profile(&coeffs, eps_var)?;
        Self::new(shape, basis, profile)
    }

    /// Draws a latent from the prior itself.
    pub fn sample(&self, rng: &mut crate::rng::KeyedRng) -> LatentTensor {
        let mut coeffs = LatentTensor::zeros(self.shape);
        for (c, v) in coeffs.as_mut_slice().iter_mut().zip(&self.var_profile) {
            *c = v.sqrt() * rng.normal();
        }
        self.basis
            .synthesize(&coeffs)
            .expect("basis was validated against shape")
    }
}

impl PriorModel for SpectralGaussianPrior {
    fn name(&self) -> &'static str {
        "spectral-gaussian"
    }

    fn shape(&self) -> LatentShape {
        self.shape
    }

    fn basis(&self) -> &Basis {
        &self.basis
    }

    fn variances(&self) -> &[f64] {
        &self.var_profile
    }
}

/// MMSE noise prediction of a spectral prior, on coefficients in its basis.
pub fn mmse_predict_eps(
    prior: &SpectralGaussianPrior,
    z_t: &LatentTensor,
    t: usize,
    sched: &NoiseSchedule,
) -> Result<LatentTensor, PriorError> {
    if z_t.len() != prior.var_profile.len() {
        return Err(PriorError::ProfileMismatch {
            expected: z_t.len(),
            actual: prior.var_profile.len(),
        });
    }
    let mut out = LatentTensor::zeros(z_t.shape());
    prior.predict_eps_coeffs(z_t.as_slice(), t, sched, out.as_mut_slice());
    Ok(out)
}

/// Frame-independent prior: a per-frame basis and one shared per-frame
/// variance profile.
#[derive(Debug, Clone)]
pub struct FramewisePrior {
    shape: LatentShape,
    basis: Basis,
    frame_profile: Vec<f64>,
    expanded: Vec<f64>,
}

impl FramewisePrior {
    pub fn new(shape: LatentShape, basis: Basis, frame_profile: Vec<f64>) -> Result<Self, PriorError> {
        if !basis.is_per_frame() {
            return Err(PriorError::BasisMismatch {
                basis: basis.id(),
                shape,
            });
        }
        basis.check(shape)?;
        validate_profile(&frame_profile, shape.frame_len())?;
        let expanded = frame_profile.iter().copied().cycle().take(shape.len()).collect();
        Ok(Self {
            shape,
            basis,
            frame_profile,
            expanded,
        })
    }

    pub fn power_law(
        shape: LatentShape,
        layout: FrequencyLayout,
        profile: PowerLawProfile,
        eps_var: f64,
    ) -> Result<Self, PriorError> {
        Self::new(shape, Basis::Dct2dPerFrame, profile.per_frame(shape, layout, eps_var))
    }

    /// Fits the shared per-frame profile, pooling every frame of every latent.
    pub fn fit(basis: Basis, corpus: &[LatentTensor], eps_var: f64) -> Result<Self, PriorError> {
        let first = corpus.first().ok_or(PriorError::EmptyCorpus)?;
        let shape = first.shape();
        let frame_shape = LatentShape::new(1, shape.height, shape.width, shape.channels);
        let mut frames = Vec::with_capacity(corpus.len() * shape.frames);
        for l in corpus {
            first.ensure_same_shape(l)?;
            let coeffs = basis.analyze(l)?;
            for f in 0..shape.frames {
                frames.push(LatentTensor::from_vec(frame_shape, coeffs.frame(f).to_vec())?);
            }
        }
        let profile = fit_variance_profile(&frames, eps_var)?;
        Self::new(shape, basis, profile)
    }

    pub fn frame_profile(&self) -> &[f64] {
        &self.frame_profile
    }
}

impl PriorModel for FramewisePrior {
    fn name(&self) -> &'static str {
        "framewise-gaussian"
    }

    fn shape(&self) -> LatentShape {
        self.shape
    }

    fn basis(&self) -> &Basis {
        &self.basis
    }

    fn variances(&self) -> &[f64] {
        &self.expanded
    }
}

/// Per-coefficient second moment over `corpus`, floored at `eps_var`.
pub fn fit_variance_profile(corpus: &[LatentTensor], eps_var: f64) -> Result<Vec<f64>, PriorError> {
    let first = corpus.first().ok_or(PriorError::EmptyCorpus)?;
    let mut acc = vec![0.0; first.len()];
    for l in corpus {
        first.ensure_same_shape(l)?;
        for (a, v) in acc.iter_mut().zip(l.as_slice()) {
            *a += v * v;
        }
    }
    let n = corpus.len() as f64;
    Ok(acc.into_iter().map(|s| (s / n).max(eps_var)).collect())
}

/// Writes a profile as `u64` count followed by `f64` values, little-endian.
pub fn write_profile<W: Write>(mut w: W, profile: &[f64]) -> io::Result<()> {
    w.write_all(&(profile.len() as u64).to_le_bytes())?;
    for v in profile {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_profile<R: Read>(mut r: R) -> Result<Vec<f64>, PriorError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| PriorError::MalformedSidecar("missing length prefix".into()))?;
    let n = u64::from_le_bytes(buf);
    if n > (1 << 32) {
        return Err(PriorError::MalformedSidecar(format!("implausible length {n}")));
    }
    let mut out = Vec::with_capacity(n as usize);
    for i in 0..n {
        r.read_exact(&mut buf)
            .map_err(|_| PriorError::MalformedSidecar(format!("truncated at value {i} of {n}")))?;
        out.push(f64::from_le_bytes(buf));
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(PriorError::MalformedSidecar(format!("{} trailing bytes", rest.len())));
    }
    Ok(out)
}

/// SHA-256 of the serialized profile; recorded in bitstream headers.
pub fn profile_digest(profile: &[f64]) -> [u8; 32] {
    let mut bytes = Vec::with_capacity(8 + 8 * profile.len());
    write_profile(&mut bytes, profile).expect("writing to a Vec cannot fail");
    Sha256::digest(&bytes).into()
}
