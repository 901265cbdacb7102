//! One coded diffusion step in the prior's spectral basis.
//!
//! Coded step `t` moves the shared state from `z_{t+1}` to `z_t`, so it
//! uses the posterior and reverse conditionals at index `t + 1`. The state
//! after the step is the PFR-selected sample, which the decoder reproduces
//! exactly.

use rayon::prelude::*;

use super::chunk::ChunkSpec;
use super::elias::{code_seed_index, decode_seed_index, seed_code_len, BitReader, BitWriter};
use super::pfr::{budget_for_kl, kl_bits, pfr_encode, GaussianPair, GaussianProposal};
use super::{RccError, SeedRecord};
use crate::prior::PriorModel;
use crate::rng::{Domain, StreamKey};
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// `z_t` coefficients.
    pub z: Vec<f64>,
    pub records: Vec<SeedRecord>,
    /// Coded length of this step's seed indices.
    pub bits: u64,
    /// Analytic KL of this step in bits.
    pub kl_bits: f64,
    /// Chunks whose search stopped on the candidate budget.
    pub exhausted: usize,
}

/// `z_T` coefficients for GOP `gop`. The forward noise is isotropic, so the
/// draw is valid in any orthonormal basis.
pub fn initial_state(base_seed: u64, gop: u32, len: usize) -> Vec<f64> {
    let mut z = vec![0.0; len];
    StreamKey::new(base_seed, Domain::Init)
        .gop(gop)
        .rng(0)
        .fill_normal(&mut z);
    z
}

fn check_step(sched: &NoiseSchedule, t: usize) -> Result<(), RccError> {
    if t == 0 || t >= sched.steps() {
        return Err(RccError::StepOutOfRange {
            t,
            steps: sched.steps(),
        });
    }
    Ok(())
}

/// Mean of the reverse conditional `p(z_t | z_{t+1})`.
pub fn reverse_mean_coeffs<P: PriorModel + ?Sized>(
    prior: &P,
    sched: &NoiseSchedule,
    t: usize,
    z_next: &[f64],
) -> Result<Vec<f64>, RccError> {
    let coefs = sched.reverse_coefs(t + 1)?;
    let mut eps = vec![0.0; z_next.len()];
    prior.predict_eps_coeffs(z_next, t + 1, sched, &mut eps);
    Ok(z_next.iter().zip(&eps).map(|(&z, &e)| coefs.mean(z, e)).collect())
}

/// Mean of the forward posterior `q(z_t | z_{t+1}, y)`.
pub fn posterior_mean_coeffs(sched: &NoiseSchedule, t: usize, z_next: &[f64], y: &[f64]) -> Result<Vec<f64>, RccError> {
    let coefs = sched.posterior_coefs(t + 1)?;
    Ok(y.iter().zip(z_next).map(|(&y, &z)| coefs.mean(y, z)).collect())
}

fn check_lengths<P: PriorModel + ?Sized>(prior: &P, z_next: &[f64], chunks: &ChunkSpec) -> Result<(), RccError> {
    let n = prior.variances().len();
    let covered = chunks.ranges.last().map_or(0, |r| r.end);
    if z_next.len() != n || covered != n {
        return Err(RccError::LengthMismatch { q: z_next.len(), p: n });
    }
    Ok(())
}

/// Codes step `t` and appends the seed indices to `writer`. `key` carries
/// the base seed and GOP index.
#[allow(clippy::too_many_arguments)]
pub fn encode_step<P: PriorModel + ?Sized>(
    prior: &P,
    sched: &NoiseSchedule,
    t: usize,
    z_next: &[f64],
    y: &[f64],
    chunks: &ChunkSpec,
    key: StreamKey,
    writer: &mut BitWriter,
) -> Result<StepOutput, RccError> {
    check_step(sched, t)?;
    check_lengths(prior, z_next, chunks)?;
    if y.len() != z_next.len() {
        return Err(RccError::LengthMismatch {
            q: y.len(),
            p: z_next.len(),
        });
    }
    let mu_p = reverse_mean_coeffs(prior, sched, t, z_next)?;
    let mu_q = posterior_mean_coeffs(sched, t, z_next, y)?;
    let var = sched.beta_tilde(t + 1);
    let step_key = key.domain(Domain::Candidate).step(t as u32);

    let selections = chunks
        .ranges
        .par_iter()
        .enumerate()
        .map(|(j, r)| {
            let pair = GaussianPair::new(&mu_q[r.clone()], &mu_p[r.clone()], var)?;
            let kl = kl_bits(&pair)?;
            let out = pfr_encode(&pair.scorer(), step_key.chunk(j as u32), budget_for_kl(kl))?;
            Ok((out, kl))
        })
        .collect::<Result<Vec<_>, RccError>>()?;

    let mut z = vec![0.0; z_next.len()];
    let mut records = Vec::with_capacity(selections.len());
    let (mut bits, mut kl_total, mut exhausted) = (0u64, 0.0, 0usize);
    for (j, (r, (out, kl))) in chunks.ranges.iter().zip(selections).enumerate() {
        code_seed_index(writer, out.index)?;
        bits += u64::from(seed_code_len(out.index));
        kl_total += kl;
        exhausted += usize::from(out.exhausted);
        z[r.clone()].copy_from_slice(&out.sample);
        records.push(SeedRecord {
            gop: key.gop,
            step: t as u32,
            chunk: j as u32,
            seed: out.index,
        });
    }
    Ok(StepOutput {
        z,
        records,
        bits,
        kl_bits: kl_total,
        exhausted,
    })
}

/// Replays step `t` from the seed indices in `reader`.
pub fn decode_step<P: PriorModel + ?Sized>(
    prior: &P,
    sched: &NoiseSchedule,
    t: usize,
    z_next: &[f64],
    chunks: &ChunkSpec,
    key: StreamKey,
    reader: &mut BitReader<'_>,
) -> Result<Vec<f64>, RccError> {
    check_step(sched, t)?;
    check_lengths(prior, z_next, chunks)?;
    let seeds = chunks
        .ranges
        .iter()
        .map(|_| decode_seed_index(reader))
        .collect::<Result<Vec<_>, _>>()?;
    let mu_p = reverse_mean_coeffs(prior, sched, t, z_next)?;
    let var = sched.beta_tilde(t + 1);
    let step_key = key.domain(Domain::Candidate).step(t as u32);
    let mut z = vec![0.0; z_next.len()];
    let mut parts: Vec<(usize, &mut [f64])> = Vec::with_capacity(chunks.len());
    let mut rest = z.as_mut_slice();
    for (j, r) in chunks.ranges.iter().enumerate() {
        let (head, tail) = rest.split_at_mut(r.len());
        parts.push((j, head));
        rest = tail;
    }
    parts.into_par_iter().for_each(|(j, out)| {
        let r = chunks.ranges[j].clone();
        let proposal = GaussianProposal { mu_p: &mu_p[r], var };
        proposal.simulate_into(step_key.chunk(j as u32), seeds[j], out);
    });
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::LatentShape;
    use crate::prior::{FrequencyLayout, PowerLawProfile, SpectralGaussianPrior};
    use crate::rcc::chunk::ChunkRule;
    use crate::schedule::build_schedule;

    fn setup() -> (SpectralGaussianPrior, NoiseSchedule) {
        let shape = LatentShape::new(2, 4, 4, 2);
        let prior =
            SpectralGaussianPrior::power_law(shape, FrequencyLayout::plain(2), PowerLawProfile::default(), 1e-6)
                .unwrap();
        (prior, build_schedule(16, 1e-3, 0.2).unwrap())
    }

    #[test]
    fn encoder_and_decoder_states_agree() {
        let (prior, sched) = setup();
        let n = prior.variances().len();
        let key = StreamKey::new(9, Domain::Candidate).gop(3);
        let y: Vec<f64> = prior.variances().iter().map(|v| v.sqrt()).collect();
        let mut z_enc = initial_state(9, 3, n);
        let mut z_dec = z_enc.clone();
        let mut w = BitWriter::new();
        let mut specs = Vec::new();
        for t in (2..16).rev() {
            let spec = ChunkSpec::for_step(ChunkRule::default(), prior.variances(), &sched, t).unwrap();
            z_enc = encode_step(&prior, &sched, t, &z_enc, &y, &spec, key, &mut w)
                .unwrap()
                .z;
            specs.push((t, spec));
        }
        let bytes = w.finish();
        let mut r = BitReader::new(&bytes);
        for (t, spec) in &specs {
            z_dec = decode_step(&prior, &sched, *t, &z_dec, spec, key, &mut r).unwrap();
        }
        assert_eq!(z_enc, z_dec);
    }

    #[test]
    fn matching_means_code_seed_one() {
        let (prior, sched) = setup();
        let n = prior.variances().len();
        let t = 7;
        let z_next = initial_state(1, 0, n);
        // Choose y so the posterior mean equals the reverse mean.
        let mu_p = reverse_mean_coeffs(&prior, &sched, t, &z_next).unwrap();
        let c = sched.posterior_coefs(t + 1).unwrap();
        let y: Vec<f64> = mu_p
            .iter()
            .zip(&z_next)
            .map(|(m, z)| (m - c.on_noisy * z) / c.on_clean)
            .collect();
        let spec = ChunkSpec::for_step(ChunkRule::default(), prior.variances(), &sched, t).unwrap();
        let out = encode_step(
            &prior,
            &sched,
            t,
            &z_next,
            &y,
            &spec,
            StreamKey::new(1, Domain::Candidate),
            &mut BitWriter::new(),
        )
        .unwrap();
        assert!(out.records.iter().all(|r| r.seed == 1));
        assert_eq!(out.bits, spec.len() as u64);
        assert!(out.kl_bits < 1e-12);
    }

    #[test]
    fn step_range_is_checked() {
        let (prior, sched) = setup();
        let n = prior.variances().len();
        let spec = ChunkSpec::from_profile(ChunkRule::default(), &vec![0.0; n]).unwrap();
        let z = vec![0.0; n];
        let key = StreamKey::new(1, Domain::Candidate);
        for t in [0, 16] {
            assert!(matches!(
                encode_step(&prior, &sched, t, &z, &z, &spec, key, &mut BitWriter::new()),
                Err(RccError::StepOutOfRange { .. })
            ));
        }
    }
}
