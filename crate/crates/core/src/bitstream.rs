//! Self-describing container: a little-endian header followed by the GOP
//! payloads in order.
//!
//! ```text
//! "FGVC" version:u8 flags:u8
//! frames:u32 height:u32 width:u32 colorspace:u8 fps_num:u32 fps_den:u32
//! l:u32 m:u32 s:u32 d:u32 T:u32 beta_start:f64 beta_end:f64
//! coeffs_per_chunk:u32 kl_cap:f64
//! gamma_kind:u8 gamma_param:f64
//! prior_kind:u8 eps_var:f64 (amplitude:f64 exponent:f64 | sha256:[u8; 32])
//! base_seed:u64 gop_count:u32 { t_star:u32 coded_frames:u32 payload_len:u32 }*
//! payload*
//! ```

use std::sync::Arc;

use thiserror::Error;

use crate::pipeline::{
    CodecParams, Colorspace, EncodedVideo, FrameRate, FusionWeight, GopRecord, PriorKind, PriorSource, PriorSpec,
    TransformSpec, VideoInfo,
};
use crate::prior::{profile_digest, PowerLawProfile};
use crate::rcc::ChunkRule;

pub const MAGIC: &[u8; 4] = b"FGVC";
pub const VERSION: u8 = 1;

const PRIOR_FRAMEWISE: u8 = 1;
const PRIOR_SIDECAR: u8 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum BitstreamError {
    #[error("bad magic at byte 0")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("malformed header at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("payload of GOP {gop} truncated at byte {offset}: need {need} bytes, {available} left")]
    TruncatedPayload {
        gop: usize,
        offset: usize,
        need: usize,
        available: usize,
    },
    #[error("{0} trailing bytes after the last payload")]
    TrailingBytes(usize),
    #[error("stream references a variance-profile sidecar that was not supplied")]
    MissingSidecar,
    #[error("supplied sidecar does not match the digest in the header")]
    SidecarMismatch,
    #[error("field {field} does not fit the header format")]
    Unrepresentable { field: &'static str },
}

/// How the decoder rebuilds the prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorRef {
    PowerLaw(PowerLawProfile),
    Sidecar([u8; 32]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GopEntry {
    pub t_star: u32,
    pub coded_frames: u32,
    pub payload_len: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitstreamHeader {
    pub version: u8,
    pub flags: u8,
    pub frames: u32,
    pub height: u32,
    pub width: u32,
    pub colorspace: Colorspace,
    pub fps: FrameRate,
    pub gop_len: u32,
    pub overlap: u32,
    pub temporal: u32,
    pub spatial: u32,
    pub steps: u32,
    pub beta_start: f64,
    pub beta_end: f64,
    pub coeffs_per_chunk: u32,
    pub kl_cap: f64,
    pub gamma: FusionWeight,
    pub prior_kind: PriorKind,
    pub eps_var: f64,
    pub prior: PriorRef,
    pub base_seed: u64,
    pub gops: Vec<GopEntry>,
}

fn u32_of(v: usize, field: &'static str) -> Result<u32, BitstreamError> {
    u32::try_from(v).map_err(|_| BitstreamError::Unrepresentable { field })
}

impl BitstreamHeader {
    pub fn of(encoded: &EncodedVideo) -> Result<Self, BitstreamError> {
        let (info, p) = (&encoded.info, &encoded.params);
        let prior = match &p.prior.source {
            PriorSource::PowerLaw(pl) => PriorRef::PowerLaw(*pl),
            PriorSource::Profile(v) => PriorRef::Sidecar(profile_digest(v)),
        };
        let gops = encoded
            .gops
            .iter()
            .map(|g| {
                Ok(GopEntry {
                    t_star: u32_of(g.t_star, "t_star")?,
                    coded_frames: u32_of(g.coded_frames, "coded_frames")?,
                    payload_len: u32_of(g.payload.len(), "payload_len")?,
                })
            })
            .collect::<Result<_, BitstreamError>>()?;
        Ok(Self {
            version: VERSION,
            flags: 0,
            frames: u32_of(info.frames, "frames")?,
            height: u32_of(info.height, "height")?,
            width: u32_of(info.width, "width")?,
            colorspace: info.colorspace,
            fps: info.fps,
            gop_len: u32_of(p.gop_len, "gop_len")?,
            overlap: u32_of(p.overlap, "overlap")?,
            temporal: u32_of(p.transform.temporal, "temporal")?,
            spatial: u32_of(p.transform.spatial, "spatial")?,
            steps: u32_of(p.steps, "steps")?,
            beta_start: p.beta_start,
            beta_end: p.beta_end,
            coeffs_per_chunk: u32_of(p.chunk_rule.coeffs_per_chunk, "coeffs_per_chunk")?,
            kl_cap: p.chunk_rule.kl_cap,
            gamma: p.gamma,
            prior_kind: p.prior.kind,
            eps_var: p.prior.eps_var,
            prior,
            base_seed: p.base_seed,
            gops,
        })
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.push(self.version);
        out.push(self.flags);
        for v in [self.frames, self.height, self.width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.push(self.colorspace.code());
        out.extend_from_slice(&self.fps.num.to_le_bytes());
        out.extend_from_slice(&self.fps.den.to_le_bytes());
        for v in [self.gop_len, self.overlap, self.temporal, self.spatial, self.steps] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.beta_start.to_le_bytes());
        out.extend_from_slice(&self.beta_end.to_le_bytes());
        out.extend_from_slice(&self.coeffs_per_chunk.to_le_bytes());
        out.extend_from_slice(&self.kl_cap.to_le_bytes());
        let (kind, param) = match self.gamma {
            FusionWeight::Constant(g) => (0u8, g),
            FusionWeight::Linear => (1, 0.0),
        };
        out.push(kind);
        out.extend_from_slice(&param.to_le_bytes());
        let mut kind = if self.prior_kind == PriorKind::Framewise {
            PRIOR_FRAMEWISE
        } else {
            0
        };
        if matches!(self.prior, PriorRef::Sidecar(_)) {
            kind |= PRIOR_SIDECAR;
        }
        out.push(kind);
        out.extend_from_slice(&self.eps_var.to_le_bytes());
        match self.prior {
            PriorRef::PowerLaw(p) => {
                out.extend_from_slice(&p.amplitude.to_le_bytes());
                out.extend_from_slice(&p.exponent.to_le_bytes());
            }
            PriorRef::Sidecar(d) => out.extend_from_slice(&d),
        }
        out.extend_from_slice(&self.base_seed.to_le_bytes());
        out.extend_from_slice(&(self.gops.len() as u32).to_le_bytes());
        for g in &self.gops {
            for v in [g.t_star, g.coded_frames, g.payload_len] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }

    /// Parses a header and returns it with the offset of the first payload.
    pub fn parse(bytes: &[u8]) -> Result<(Self, usize), BitstreamError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok() != Some(&MAGIC[..]) {
            return Err(BitstreamError::BadMagic);
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(BitstreamError::UnsupportedVersion(version));
        }
        let flags_at = r.pos;
        let flags = r.u8()?;
        if flags != 0 {
            return Err(r.malformed_at(flags_at, format!("unknown flags {flags:#04x}")));
        }
        let frames = r.nonzero_u32("frames")?;
        let height = r.nonzero_u32("height")?;
        let width = r.nonzero_u32("width")?;
        let cs_at = r.pos;
        let code = r.u8()?;
        let colorspace =
            Colorspace::from_code(code).ok_or_else(|| r.malformed_at(cs_at, format!("colorspace code {code}")))?;
        let fps = FrameRate {
            num: r.nonzero_u32("fps numerator")?,
            den: r.nonzero_u32("fps denominator")?,
        };
        let gop_len = r.nonzero_u32("gop length")?;
        let overlap = r.u32()?;
        let temporal = r.nonzero_u32("temporal factor")?;
        let spatial = r.nonzero_u32("spatial factor")?;
        let steps = r.nonzero_u32("steps")?;
        let beta_start = r.finite("beta_start")?;
        let beta_end = r.finite("beta_end")?;
        let coeffs_per_chunk = r.nonzero_u32("coeffs per chunk")?;
        let kl_cap = r.finite("kl cap")?;
        let gk_at = r.pos;
        let gamma_kind = r.u8()?;
        let gamma_param = r.finite("gamma")?;
        let gamma = match gamma_kind {
            0 => FusionWeight::Constant(gamma_param),
            1 => FusionWeight::Linear,
            k => return Err(r.malformed_at(gk_at, format!("gamma kind {k}"))),
        };
        let pk_at = r.pos;
        let pk = r.u8()?;
        if pk > (PRIOR_FRAMEWISE | PRIOR_SIDECAR) {
            return Err(r.malformed_at(pk_at, format!("prior kind {pk}")));
        }
        let prior_kind = if pk & PRIOR_FRAMEWISE != 0 {
            PriorKind::Framewise
        } else {
            PriorKind::Joint
        };
        let eps_var = r.finite("eps_var")?;
        let prior = if pk & PRIOR_SIDECAR != 0 {
            PriorRef::Sidecar(r.take(32)?.try_into().expect("32 bytes"))
        } else {
            PriorRef::PowerLaw(PowerLawProfile {
                amplitude: r.finite("amplitude")?,
                exponent: r.finite("exponent")?,
            })
        };
        let base_seed = r.u64()?;
        let count_at = r.pos;
        let count = r.u32()? as usize;
        if count.saturating_mul(12) > r.remaining() {
            return Err(r.malformed_at(count_at, format!("{count} GOP records exceed the stream")));
        }
        let mut gops = Vec::with_capacity(count);
        for _ in 0..count {
            gops.push(GopEntry {
                t_star: r.u32()?,
                coded_frames: r.u32()?,
                payload_len: r.u32()?,
            });
        }
        Ok((
            Self {
                version,
                flags,
                frames,
                height,
                width,
                colorspace,
                fps,
                gop_len,
                overlap,
                temporal,
                spatial,
                steps,
                beta_start,
                beta_end,
                coeffs_per_chunk,
                kl_cap,
                gamma,
                prior_kind,
                eps_var,
                prior,
                base_seed,
                gops,
            },
            r.pos,
        ))
    }

    pub fn encoded_len(&self) -> usize {
        let mut v = Vec::new();
        self.write(&mut v);
        v.len()
    }

    /// Rebuilds codec parameters; a sidecar-referenced prior needs its profile.
    pub fn params(&self, sidecar: Option<Arc<Vec<f64>>>) -> Result<CodecParams, BitstreamError> {
        let source = match self.prior {
            PriorRef::PowerLaw(p) => PriorSource::PowerLaw(p),
            PriorRef::Sidecar(digest) => {
                let profile = sidecar.ok_or(BitstreamError::MissingSidecar)?;
                if profile_digest(&profile) != digest {
                    return Err(BitstreamError::SidecarMismatch);
                }
                PriorSource::Profile(profile)
            }
        };
        Ok(CodecParams {
            gop_len: self.gop_len as usize,
            overlap: self.overlap as usize,
            transform: TransformSpec {
                temporal: self.temporal as usize,
                spatial: self.spatial as usize,
            },
            steps: self.steps as usize,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
            chunk_rule: ChunkRule {
                coeffs_per_chunk: self.coeffs_per_chunk as usize,
                kl_cap: self.kl_cap,
            },
            gamma: self.gamma,
            prior: PriorSpec {
                kind: self.prior_kind,
                source,
                eps_var: self.eps_var,
            },
            base_seed: self.base_seed,
        })
    }

    pub fn info(&self) -> VideoInfo {
        VideoInfo {
            frames: self.frames as usize,
            height: self.height as usize,
            width: self.width as usize,
            colorspace: self.colorspace,
            fps: self.fps,
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn malformed_at(&self, offset: usize, reason: String) -> BitstreamError {
        BitstreamError::Malformed { offset, reason }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], BitstreamError> {
        if self.remaining() < n {
            return Err(self.malformed_at(self.pos, format!("header truncated, need {n} more bytes")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, BitstreamError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, BitstreamError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, BitstreamError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn nonzero_u32(&mut self, field: &str) -> Result<u32, BitstreamError> {
        let at = self.pos;
        match self.u32()? {
            0 => Err(self.malformed_at(at, format!("{field} is zero"))),
            v => Ok(v),
        }
    }

    fn finite(&mut self, field: &str) -> Result<f64, BitstreamError> {
        let at = self.pos;
        let v = f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.malformed_at(at, format!("{field} is not finite")))
        }
    }
}

/// Serializes an encoded video into one byte stream.
pub fn write_container(encoded: &EncodedVideo) -> Result<Vec<u8>, BitstreamError> {
    let header = BitstreamHeader::of(encoded)?;
    let mut out =
        Vec::with_capacity(header.encoded_len() + encoded.gops.iter().map(|g| g.payload.len()).sum::<usize>());
    header.write(&mut out);
    for g in &encoded.gops {
        out.extend_from_slice(&g.payload);
    }
    Ok(out)
}

/// Parses a container written by [`write_container`].
pub fn read_container(bytes: &[u8], sidecar: Option<Arc<Vec<f64>>>) -> Result<EncodedVideo, BitstreamError> {
    let (header, mut pos) = BitstreamHeader::parse(bytes)?;
    let mut gops = Vec::with_capacity(header.gops.len());
    for (i, g) in header.gops.iter().enumerate() {
        let need = g.payload_len as usize;
        let available = bytes.len() - pos;
        if available < need {
            return Err(BitstreamError::TruncatedPayload {
                gop: i,
                offset: pos,
                need,
                available,
            });
        }
        gops.push(GopRecord {
            t_star: g.t_star as usize,
            coded_frames: g.coded_frames as usize,
            payload: bytes[pos..pos + need].to_vec(),
        });
        pos += need;
    }
    if pos != bytes.len() {
        return Err(BitstreamError::TrailingBytes(bytes.len() - pos));
    }
    Ok(EncodedVideo {
        info: header.info(),
        params: header.params(sidecar)?,
        gops,
    })
}
