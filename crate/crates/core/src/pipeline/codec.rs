//! GOP trajectory coding and whole-video encode/decode.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::fusion::{fuse_overlap, FusionWeight};
use super::gop::{segment_gops, Gop};
use super::transform::{transform_forward, transform_inverse, TransformSpec};
use super::video::{Colorspace, FrameRate, VideoTensor};
use super::PipelineError;
use crate::latent::{LatentShape, LatentTensor};
use crate::metrics::ms_ssim_video;
use crate::prior::{
    FramewisePrior, FrequencyLayout, PowerLawProfile, PriorModel, SpectralGaussianPrior, DEFAULT_EPS_VAR,
};
use crate::qctrl::{self, ControlConfig, RateQualityOracle, RefineOutcome, RpSample};
use crate::rcc::step::reverse_mean_coeffs;
use crate::rcc::{decode_step, encode_step, initial_state, BitReader, BitWriter, ChunkRule, ChunkSpec, RccError};
use crate::rng::{Domain, StreamKey};
use crate::schedule::{build_schedule, NoiseSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    /// Joint spatiotemporal prior over each GOP latent.
    Joint,
    /// Per-frame prior with a shared frame profile.
    Framewise,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorSource {
    PowerLaw(PowerLawProfile),
    /// Explicit variance profile, typically loaded from a sidecar.
    Profile(Arc<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub source: PriorSource,
    pub eps_var: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            kind: PriorKind::Joint,
            source: PriorSource::PowerLaw(PowerLawProfile::default()),
            eps_var: DEFAULT_EPS_VAR,
        }
    }
}

impl PriorSpec {
    pub fn build(&self, shape: LatentShape, layout: FrequencyLayout) -> Result<Box<dyn PriorModel>, PipelineError> {
        Ok(match (&self.kind, &self.source) {
            (PriorKind::Joint, PriorSource::PowerLaw(p)) => {
                Box::new(SpectralGaussianPrior::power_law(shape, layout, *p, self.eps_var)?)
            }
            (PriorKind::Framewise, PriorSource::PowerLaw(p)) => {
                Box::new(FramewisePrior::power_law(shape, layout, *p, self.eps_var)?)
            }
            (PriorKind::Joint, PriorSource::Profile(v)) => Box::new(SpectralGaussianPrior::new(
                shape,
                crate::prior::Basis::Dct3d,
                v.to_vec(),
            )?),
            (PriorKind::Framewise, PriorSource::Profile(v)) => Box::new(FramewisePrior::new(
                shape,
                crate::prior::Basis::Dct2dPerFrame,
                v.to_vec(),
            )?),
        })
    }
}

/// Everything the decoder must share with the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecParams {
    pub gop_len: usize,
    pub overlap: usize,
    pub transform: TransformSpec,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub chunk_rule: ChunkRule,
    pub gamma: FusionWeight,
    pub prior: PriorSpec,
    pub base_seed: u64,
}

impl Default for CodecParams {
    fn default() -> Self {
        Self {
            gop_len: 48,
            overlap: 4,
            transform: TransformSpec::default(),
            steps: 512,
            beta_start: 1e-4,
            beta_end: 0.02,
            chunk_rule: ChunkRule::default(),
            gamma: FusionWeight::default(),
            prior: PriorSpec::default(),
            base_seed: 0,
        }
    }
}

impl CodecParams {
    pub fn schedule(&self) -> Result<NoiseSchedule, PipelineError> {
        Ok(build_schedule(self.steps, self.beta_start, self.beta_end)?)
    }

    fn check_t_star(&self, t: usize) -> Result<(), PipelineError> {
        if t == 0 || t >= self.steps {
            return Err(PipelineError::InvalidTStar { t, steps: self.steps });
        }
        Ok(())
    }
}

/// Coded trajectory of one GOP, kept down to its stop step so any
/// `t* >= stop` can be cut from it without re-encoding.
#[derive(Debug, Clone)]
pub struct Trajectory {
    gop: u32,
    steps: usize,
    stop: usize,
    bytes: Vec<u8>,
    /// Cumulative coded bits after step `t`, indexed by `t`.
    cum_bits: Vec<u64>,
    /// Cumulative analytic KL after step `t`, indexed by `t`.
    cum_kl: Vec<f64>,
    exhausted: usize,
    checkpoints: BTreeMap<usize, Vec<f64>>,
}

impl Trajectory {
    pub fn gop(&self) -> u32 {
        self.gop
    }

    pub fn stop(&self) -> usize {
        self.stop
    }

    /// Coded bits from `T - 1` down to and including step `t`.
    pub fn bits_to(&self, t: usize) -> u64 {
        self.cum_bits[t]
    }

    pub fn kl_to(&self, t: usize) -> f64 {
        self.cum_kl[t]
    }

    /// `(t, cumulative bits)` for every coded step, `t` descending.
    pub fn rate_table(&self) -> Vec<(usize, u64)> {
        (self.stop..self.steps).rev().map(|t| (t, self.cum_bits[t])).collect()
    }

    pub fn exhausted_chunks(&self) -> usize {
        self.exhausted
    }

    /// Encoder state `z_t` in the prior basis, for checkpointed `t`.
    pub fn checkpoint(&self, t: usize) -> Option<&[f64]> {
        self.checkpoints.get(&t).map(Vec::as_slice)
    }

    /// Byte-aligned payload for stopping at `t_star`.
    pub fn payload(&self, t_star: usize) -> Result<Vec<u8>, PipelineError> {
        if t_star < self.stop || t_star >= self.steps {
            return Err(PipelineError::InvalidTStar {
                t: t_star,
                steps: self.steps,
            });
        }
        let bits = self.cum_bits[t_star];
        let mut out = self.bytes[..bits.div_ceil(8) as usize].to_vec();
        if !bits.is_multiple_of(8) {
            *out.last_mut().unwrap() &= 0xFFu8 << (8 - bits % 8);
        }
        Ok(out)
    }
}

/// Codes `y` (prior-basis coefficients) from `z_T` down to step `stop`.
#[allow(clippy::too_many_arguments)]
pub fn encode_trajectory<P: PriorModel + ?Sized>(
    prior: &P,
    sched: &NoiseSchedule,
    rule: ChunkRule,
    y: &[f64],
    base_seed: u64,
    gop: u32,
    stop: usize,
    checkpoints: &[usize],
) -> Result<Trajectory, PipelineError> {
    let steps = sched.steps();
    if stop == 0 || stop >= steps {
        return Err(PipelineError::InvalidTStar { t: stop, steps });
    }
    let key = StreamKey::new(base_seed, Domain::Candidate).gop(gop);
    let mut z = initial_state(base_seed, gop, y.len());
    let mut writer = BitWriter::new();
    let mut cum_bits = vec![0u64; steps + 1];
    let mut cum_kl = vec![0.0; steps + 1];
    let mut exhausted = 0;
    let mut kept = BTreeMap::new();
    if checkpoints.contains(&steps) {
        kept.insert(steps, z.clone());
    }
    for t in (stop..steps).rev() {
        let chunks = ChunkSpec::for_step(rule, prior.variances(), sched, t)?;
        let out = encode_step(prior, sched, t, &z, y, &chunks, key, &mut writer)?;
        cum_bits[t] = cum_bits[t + 1] + out.bits;
        cum_kl[t] = cum_kl[t + 1] + out.kl_bits;
        exhausted += out.exhausted;
        z = out.z;
        if checkpoints.contains(&t) {
            kept.insert(t, z.clone());
        }
    }
    Ok(Trajectory {
        gop,
        steps,
        stop,
        bytes: writer.finish(),
        cum_bits,
        cum_kl,
        exhausted,
        checkpoints: kept,
    })
}

/// Rebuilds `z_{t*}` from a GOP payload.
pub fn replay_state<P: PriorModel + ?Sized>(
    prior: &P,
    sched: &NoiseSchedule,
    rule: ChunkRule,
    payload: &[u8],
    base_seed: u64,
    gop: u32,
    t_star: usize,
) -> Result<Vec<f64>, PipelineError> {
    let steps = sched.steps();
    if t_star == 0 || t_star >= steps {
        return Err(PipelineError::InvalidTStar { t: t_star, steps });
    }
    let n = prior.variances().len();
    let key = StreamKey::new(base_seed, Domain::Candidate).gop(gop);
    let mut reader = BitReader::new(payload);
    let mut z = initial_state(base_seed, gop, n);
    for t in (t_star..steps).rev() {
        let chunks = ChunkSpec::for_step(rule, prior.variances(), sched, t)?;
        z = decode_step(prior, sched, t, &z, &chunks, key, &mut reader).map_err(|e| match e {
            RccError::MalformedCode { bit_offset } => PipelineError::MalformedBitstream {
                gop: gop as usize,
                reason: format!("bad seed code at bit {bit_offset} (step {t})"),
            },
            other => other.into(),
        })?;
    }
    if reader.remaining() >= 8 {
        return Err(PipelineError::MalformedBitstream {
            gop: gop as usize,
            reason: format!("{} trailing bits", reader.remaining()),
        });
    }
    Ok(z)
}

/// Source of the decoder's ancestral sampling noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Denoise {
    /// Keyed by the header seed; decoding is reproducible.
    #[default]
    Seeded,
    /// Keyed by a caller-chosen nonce instead of the header seed.
    Fresh(u64),
}

/// Ancestral sampling from `z_{t*}` to the final mean `y_hat`.
pub fn denoise<P: PriorModel + ?Sized>(
    prior: &P,
    sched: &NoiseSchedule,
    z: Vec<f64>,
    t_star: usize,
    base_seed: u64,
    gop: u32,
    mode: Denoise,
) -> Result<Vec<f64>, PipelineError> {
    let seed = match mode {
        Denoise::Seeded => base_seed,
        Denoise::Fresh(nonce) => nonce,
    };
    let key = StreamKey::new(seed, Domain::Denoise).gop(gop);
    let mut z = z;
    for t in (1..t_star).rev() {
        let mean = reverse_mean_coeffs(prior, sched, t, &z)?;
        let sd = sched.beta_tilde(t + 1).sqrt();
        let mut rng = key.step(t as u32).rng(0);
        z = mean.into_iter().map(|m| m + sd * rng.normal()).collect();
    }
    // Final mean at index 1, where the posterior variance vanishes.
    let coefs = sched.reverse_coefs(1)?;
    let mut eps = vec![0.0; z.len()];
    prior.predict_eps_coeffs(&z, 1, sched, &mut eps);
    Ok(z.iter().zip(&eps).map(|(&z, &e)| coefs.mean(z, e)).collect())
}

/// Decodes one GOP payload to its latent `y_hat` (latent domain).
#[allow(clippy::too_many_arguments)]
pub fn decode_gop<P: PriorModel + ?Sized>(
    prior: &P,
    sched: &NoiseSchedule,
    rule: ChunkRule,
    payload: &[u8],
    base_seed: u64,
    gop: u32,
    t_star: usize,
    mode: Denoise,
) -> Result<LatentTensor, PipelineError> {
    let z = replay_state(prior, sched, rule, payload, base_seed, gop, t_star)?;
    let y_hat = denoise(prior, sched, z, t_star, base_seed, gop, mode)?;
    Ok(prior.synthesize(&LatentTensor::from_vec(prior.shape(), y_hat)?)?)
}

/// `R * l K / (l + (K - 1)(l - m))`.
pub fn effective_bitrate(rate: f64, l: usize, m: usize, gops: usize) -> Result<f64, PipelineError> {
    if l <= m || gops == 0 {
        return Err(PipelineError::BadGopParams(format!("l={l} m={m} K={gops}")));
    }
    let k = gops as f64;
    Ok(rate * l as f64 * k / (l as f64 + (k - 1.0) * (l - m) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VideoInfo {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub colorspace: Colorspace,
    pub fps: FrameRate,
}

impl VideoInfo {
    pub fn of(video: &VideoTensor) -> Self {
        Self {
            frames: video.frames(),
            height: video.height(),
            width: video.width(),
            colorspace: video.colorspace(),
            fps: video.fps,
        }
    }

    pub fn pixels(&self) -> usize {
        self.frames * self.height * self.width
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GopRecord {
    pub t_star: usize,
    pub coded_frames: usize,
    pub payload: Vec<u8>,
}

/// A complete coded video, before container serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedVideo {
    pub info: VideoInfo,
    pub params: CodecParams,
    pub gops: Vec<GopRecord>,
}

impl EncodedVideo {
    pub fn payload_bits(&self) -> u64 {
        self.gops.iter().map(|g| g.payload.len() as u64 * 8).sum()
    }
}

#[derive(Debug, Clone)]
pub enum TStarPolicy {
    Fixed(usize),
    /// Adaptive control towards a target quality, with history reuse
    /// across GOPs when `reuse_history` is set.
    Target {
        config: ControlConfig,
        reuse_history: bool,
    },
}

#[derive(Debug, Clone)]
pub struct GopReport {
    pub gop: Gop,
    pub t_star: usize,
    pub payload_bits: u64,
    /// Payload bits over the GOP's source pixels.
    pub bpp: f64,
    pub kl_bits: f64,
    /// Achieved quality when rate control measured it.
    pub quality: Option<f64>,
    pub control: Option<RefineOutcome>,
}

fn padded_dims(info: &VideoInfo, spec: TransformSpec) -> (usize, usize) {
    (
        info.height.next_multiple_of(spec.spatial),
        info.width.next_multiple_of(spec.spatial),
    )
}

/// Per-GOP encoder state: the source, the prior and the coded trajectory.
pub struct GopSession<'a> {
    pub gop: Gop,
    params: &'a CodecParams,
    sched: &'a NoiseSchedule,
    info: VideoInfo,
    source: VideoTensor,
    padded: VideoTensor,
    prior: Box<dyn PriorModel>,
    trajectory: Trajectory,
    decoded: BTreeMap<usize, f64>,
}

impl<'a> GopSession<'a> {
    /// Encodes the full trajectory of `gop` down to step `stop`.
    pub fn new(
        video: &VideoTensor,
        gop: Gop,
        params: &'a CodecParams,
        sched: &'a NoiseSchedule,
        stop: usize,
    ) -> Result<Self, PipelineError> {
        let info = VideoInfo::of(video);
        let (h, w) = padded_dims(&info, params.transform);
        let padded = video.padded_slice(gop.start, gop.len, gop.coded_len, h, w);
        let source = video.padded_slice(gop.start, gop.len, gop.len, info.height, info.width);
        let latent = transform_forward(&padded, params.transform)?;
        let prior = params
            .prior
            .build(latent.shape(), params.transform.layout(info.colorspace.channels()))?;
        let y = prior.analyze(&latent)?;
        let trajectory = encode_trajectory(
            prior.as_ref(),
            sched,
            params.chunk_rule,
            y.as_slice(),
            params.base_seed,
            gop.index as u32,
            stop,
            &[],
        )?;
        Ok(Self {
            gop,
            params,
            sched,
            info,
            source,
            padded,
            prior,
            trajectory,
            decoded: BTreeMap::new(),
        })
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.trajectory
    }

    pub fn prior(&self) -> &dyn PriorModel {
        self.prior.as_ref()
    }

    fn source_pixels(&self) -> f64 {
        (self.gop.len * self.info.height * self.info.width) as f64
    }

    /// Rate of stopping at `t` in bits per source pixel.
    pub fn bpp_at(&self, t: usize) -> f64 {
        self.trajectory.bits_to(t) as f64 / self.source_pixels()
    }

    /// Decoded source frames of this GOP when stopping at `t`, unfused.
    pub fn decode_frames(&self, t: usize) -> Result<VideoTensor, PipelineError> {
        let payload = self.trajectory.payload(t)?;
        let latent = decode_gop(
            self.prior.as_ref(),
            self.sched,
            self.params.chunk_rule,
            &payload,
            self.params.base_seed,
            self.gop.index as u32,
            t,
            Denoise::Seeded,
        )?;
        let frames = transform_inverse(&latent, self.params.transform, &self.padded)?;
        Ok(frames
            .cropped(self.gop.len, self.info.height, self.info.width)
            .clamped())
    }

    /// Mean MS-SSIM of the decode at `t` against the source, memoized.
    pub fn quality_at(&mut self, t: usize) -> Result<f64, PipelineError> {
        if let Some(&p) = self.decoded.get(&t) {
            return Ok(p);
        }
        let decoded = self.decode_frames(t)?;
        let p = ms_ssim_video(&self.source, &decoded)?;
        self.decoded.insert(t, p);
        Ok(p)
    }

    pub fn decode_count(&self) -> usize {
        self.decoded.len()
    }

    pub fn record(&self, t_star: usize) -> Result<GopRecord, PipelineError> {
        Ok(GopRecord {
            t_star,
            coded_frames: self.gop.coded_len,
            payload: self.trajectory.payload(t_star)?,
        })
    }
}

impl RateQualityOracle for GopSession<'_> {
    fn steps(&self) -> usize {
        self.sched.steps()
    }

    fn min_step(&self) -> usize {
        self.trajectory.stop()
    }

    fn rate(&self, t: usize) -> f64 {
        self.bpp_at(t)
    }

    fn quality(&mut self, t: usize) -> Result<f64, Box<dyn std::error::Error + Send + Sync>> {
        Ok(self.quality_at(t)?)
    }
}

/// Encodes every GOP of `video`.
pub fn encode_video(
    video: &VideoTensor,
    params: &CodecParams,
    policy: &TStarPolicy,
) -> Result<(EncodedVideo, Vec<GopReport>), PipelineError> {
    let sched = params.schedule()?;
    let gops = segment_gops(
        video.frames(),
        params.gop_len,
        params.overlap,
        params.transform.temporal,
    )?;
    let report =
        |session: &GopSession<'_>, t: usize, quality, control| -> Result<(GopRecord, GopReport), PipelineError> {
            let record = session.record(t)?;
            let payload_bits = record.payload.len() as u64 * 8;
            Ok((
                record,
                GopReport {
                    gop: session.gop,
                    t_star: t,
                    payload_bits,
                    bpp: payload_bits as f64 / session.source_pixels(),
                    kl_bits: session.trajectory.kl_to(t),
                    quality,
                    control,
                },
            ))
        };
    let results: Vec<(GopRecord, GopReport)> = match policy {
        TStarPolicy::Fixed(t) => {
            params.check_t_star(*t)?;
            gops.par_iter()
                .map(|&g| {
                    let session = GopSession::new(video, g, params, &sched, *t)?;
                    report(&session, *t, None, None)
                })
                .collect::<Result<_, _>>()?
        }
        TStarPolicy::Target { config, reuse_history } => {
            let mut out = Vec::with_capacity(gops.len());
            let mut history: Option<(Vec<RpSample>, usize)> = None;
            for &g in &gops {
                let mut session = GopSession::new(video, g, params, &sched, 1)?;
                let outcome = match (&history, reuse_history) {
                    (Some((phi_prev, t_prev)), true) => {
                        qctrl::control_with_history(&mut session, phi_prev, *t_prev, config)
                    }
                    _ => qctrl::control_cold(&mut session, config),
                }
                .map_err(|e| PipelineError::Control(Box::new(e)))?;
                if !outcome.converged {
                    log::warn!(
                        "GOP {}: quality {:.4} missed target {:.4} after {} decodes",
                        g.index,
                        outcome.quality,
                        config.target,
                        outcome.decodes
                    );
                }
                history = Some((outcome.phi.clone(), outcome.t_star));
                let (t, p) = (outcome.t_star, outcome.quality);
                out.push(report(&session, t, Some(p), Some(outcome))?);
            }
            out
        }
    };
    let (records, reports) = results.into_iter().unzip();
    Ok((
        EncodedVideo {
            info: VideoInfo::of(video),
            params: params.clone(),
            gops: records,
        },
        reports,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeOptions {
    pub fusion: bool,
    pub denoise: Denoise,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            fusion: true,
            denoise: Denoise::Seeded,
        }
    }
}

/// Decodes all GOPs, fuses overlaps and assembles the output video.
pub fn decode_video(encoded: &EncodedVideo, options: DecodeOptions) -> Result<VideoTensor, PipelineError> {
    let params = &encoded.params;
    let info = encoded.info;
    let sched = params.schedule()?;
    let spec = params.transform;
    let gops = segment_gops(info.frames, params.gop_len, params.overlap, spec.temporal)?;
    if gops.len() != encoded.gops.len() {
        return Err(PipelineError::MalformedBitstream {
            gop: gops.len().min(encoded.gops.len()),
            reason: format!("{} GOP records for {} GOPs", encoded.gops.len(), gops.len()),
        });
    }
    let (h, w) = padded_dims(&info, spec);
    let c = info.colorspace.channels();
    let latents = gops
        .par_iter()
        .zip(&encoded.gops)
        .map(|(g, rec)| {
            if rec.coded_frames != g.coded_len {
                return Err(PipelineError::MalformedBitstream {
                    gop: g.index,
                    reason: format!("coded frame count {} != {}", rec.coded_frames, g.coded_len),
                });
            }
            params
                .check_t_star(rec.t_star)
                .map_err(|_| PipelineError::MalformedBitstream {
                    gop: g.index,
                    reason: format!("t* = {} outside 1..{}", rec.t_star, params.steps),
                })?;
            let shape = spec.latent_shape(g.coded_len, h, w, c);
            let prior = params.prior.build(shape, spec.layout(c))?;
            decode_gop(
                prior.as_ref(),
                &sched,
                params.chunk_rule,
                &rec.payload,
                params.base_seed,
                g.index as u32,
                rec.t_star,
                options.denoise,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let overlap_latent = params.overlap / spec.temporal;
    let like = VideoTensor::filled(1, 1, 1, info.colorspace, 0.0).with_fps(info.fps);
    let mut out = vec![0.0; info.frames * h * w * c];
    let frame_len = h * w * c;
    let mut prev: Option<LatentTensor> = None;
    for (g, latent) in gops.iter().zip(latents) {
        let latent = match (&prev, options.fusion && overlap_latent > 0) {
            (Some(p), true) => fuse_overlap(p, &latent, overlap_latent, params.gamma)?,
            _ => latent,
        };
        let frames = transform_inverse(&latent, spec, &like)?;
        for f in 0..g.len {
            let dst = (g.start + f) * frame_len;
            out[dst..dst + frame_len].copy_from_slice(frames.frame(f));
        }
        prev = Some(latent);
    }
    let full = VideoTensor::new(info.frames, h, w, info.colorspace, out)?.with_fps(info.fps);
    Ok(full.cropped(info.frames, info.height, info.width).clamped())
}
