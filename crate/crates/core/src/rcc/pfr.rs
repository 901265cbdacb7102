//! Poisson functional representation: transmit a sample of `q` by the index
//! of a shared `p`-distributed candidate.
//!
//! Candidate `n` is a pure function of `(key, n)`, so the decoder is a single
//! call to [`Proposal::simulate`].

use super::RccError;
use crate::rng::{Domain, StreamKey};

/// Shared candidate generator for `p`.
pub trait Proposal {
    type Sample;

    /// Candidate `index` (1-based) of the stream addressed by `key`.
    fn simulate(&self, key: StreamKey, index: u64) -> Self::Sample;
}

/// Encoder-side view of a `(q, p)` pair.
pub trait Target: Proposal {
    /// `ln p(z) - ln q(z)` at candidate `index`.
    fn log_ratio(&self, key: StreamKey, index: u64) -> Result<f64, RccError>;

    /// A known `inf p/q > 0`, enabling exact termination.
    fn min_ratio(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfrOutcome<S> {
    /// Selected 1-based seed index.
    pub index: u64,
    pub sample: S,
    /// True when the search stopped on the candidate budget rather than on
    /// the exact termination rule.
    pub exhausted: bool,
    pub candidates: u64,
}

/// Candidate budget `2^(kl + 5)` capped at `2^20`.
pub fn budget_for_kl(kl_bits: f64) -> u64 {
    let exp = (kl_bits.max(0.0) + 5.0).min(20.0);
    (exp.exp2().ceil() as u64).clamp(1, 1 << 20)
}

pub fn pfr_encode<T: Target>(target: &T, key: StreamKey, budget: u64) -> Result<PfrOutcome<T::Sample>, RccError> {
    let budget = budget.max(1);
    let mut arrivals = key.domain(Domain::Arrival).rng(0);
    let log_floor = target.min_ratio().map(f64::ln);
    let mut time = 0.0f64;
    let mut best_log_score = f64::INFINITY;
    let mut best = 0u64;
    let mut examined = 0u64;
    let mut exhausted = true;
    for n in 1..=budget {
        time += arrivals.exp1();
        examined = n;
        let log_score = time.ln() + target.log_ratio(key, n)?;
        if log_score <= best_log_score {
            best_log_score = log_score;
            best = n;
        }
        if let Some(floor) = log_floor {
            if best_log_score <= time.ln() + floor {
                exhausted = false;
                break;
            }
        }
    }
    Ok(PfrOutcome {
        index: best,
        sample: target.simulate(key, best),
        exhausted,
        candidates: examined,
    })
}

pub fn pfr_decode<P: Proposal>(index: u64, proposal: &P, key: StreamKey) -> Result<P::Sample, RccError> {
    if index == 0 {
        return Err(RccError::InvalidSeed(0));
    }
    Ok(proposal.simulate(key, index))
}

/// Isotropic Gaussian `N(mu_p, var I)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianProposal<'a> {
    pub mu_p: &'a [f64],
    pub var: f64,
}

impl Proposal for GaussianProposal<'_> {
    type Sample = Vec<f64>;

    fn simulate(&self, key: StreamKey, index: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.mu_p.len()];
        self.simulate_into(key, index, &mut out);
        out
    }
}

impl GaussianProposal<'_> {
    pub fn simulate_into(&self, key: StreamKey, index: u64, out: &mut [f64]) {
        let sd = self.var.sqrt();
        let mut rng = key.domain(Domain::Candidate).rng(index);
        for (o, m) in out.iter_mut().zip(self.mu_p) {
            *o = m + sd * rng.normal();
        }
    }
}

/// Equal-variance Gaussian pair `q = N(mu_q, var I)`, `p = N(mu_p, var I)`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianPair<'a> {
    pub mu_q: &'a [f64],
    pub mu_p: &'a [f64],
    pub var: f64,
}

impl<'a> GaussianPair<'a> {
    pub fn new(mu_q: &'a [f64], mu_p: &'a [f64], var: f64) -> Result<Self, RccError> {
        if !(var > 0.0) {
            return Err(RccError::NonpositiveVariance(var));
        }
        if mu_q.len() != mu_p.len() {
            return Err(RccError::LengthMismatch {
                q: mu_q.len(),
                p: mu_p.len(),
            });
        }
        Ok(Self { mu_q, mu_p, var })
    }

    pub fn proposal(&self) -> GaussianProposal<'a> {
        GaussianProposal {
            mu_p: self.mu_p,
            var: self.var,
        }
    }

    /// Pair scored in a reusable form so each candidate costs one pass.
    pub fn scorer(&self) -> GaussianScorer<'a> {
        let delta: Vec<f64> = self.mu_p.iter().zip(self.mu_q).map(|(p, q)| p - q).collect();
        let sq: f64 = delta.iter().map(|d| d * d).sum();
        GaussianScorer {
            pair: *self,
            offset: sq / (2.0 * self.var),
            weights: delta.iter().map(|d| d / self.var.sqrt()).collect(),
        }
    }
}

/// `ln p/q (mu_p + sd eps) = |delta|^2 / 2v + sum_j delta_j eps_j / sd` with
/// `delta = mu_p - mu_q`.
#[derive(Debug, Clone)]
pub struct GaussianScorer<'a> {
    pair: GaussianPair<'a>,
    offset: f64,
    weights: Vec<f64>,
}

impl Proposal for GaussianScorer<'_> {
    type Sample = Vec<f64>;

    fn simulate(&self, key: StreamKey, index: u64) -> Vec<f64> {
        self.pair.proposal().simulate(key, index)
    }
}

impl Target for GaussianScorer<'_> {
    fn log_ratio(&self, key: StreamKey, index: u64) -> Result<f64, RccError> {
        let mut rng = key.domain(Domain::Candidate).rng(index);
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w * rng.normal();
        }
        Ok(self.offset + acc)
    }
}

/// Equal-variance Gaussian KL in bits.
pub fn kl_bits(pair: &GaussianPair<'_>) -> Result<f64, RccError> {
    if !(pair.var > 0.0) {
        return Err(RccError::NonpositiveVariance(pair.var));
    }
    let sq: f64 = pair.mu_q.iter().zip(pair.mu_p).map(|(q, p)| (q - p) * (q - p)).sum();
    Ok(sq / (2.0 * pair.var) * std::f64::consts::LOG2_E)
}

/// Finite-outcome pair with exact termination (`inf p/q` is known).
#[derive(Debug, Clone)]
pub struct DiscretePair {
    p: Vec<f64>,
    q: Vec<f64>,
    cdf: Vec<f64>,
    min_ratio: f64,
}

impl DiscretePair {
    pub fn new(p: Vec<f64>, q: Vec<f64>) -> Result<Self, RccError> {
        if p.len() != q.len() || p.is_empty() {
            return Err(RccError::LengthMismatch { q: q.len(), p: p.len() });
        }
        let norm = |v: &[f64]| v.iter().sum::<f64>();
        let (sp, sq) = (norm(&p), norm(&q));
        if p.iter().chain(&q).any(|v| !(*v >= 0.0)) || (sp - 1.0).abs() > 1e-9 || (sq - 1.0).abs() > 1e-9 {
            return Err(RccError::InvalidDistribution);
        }
        let min_ratio = p
            .iter()
            .zip(&q)
            .filter(|(_, q)| **q > 0.0)
            .map(|(p, q)| p / q)
            .fold(f64::INFINITY, f64::min);
        let mut acc = 0.0;
        let cdf = p
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        Ok(Self { p, q, cdf, min_ratio })
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }
}

impl Proposal for DiscretePair {
    type Sample = usize;

    fn simulate(&self, key: StreamKey, index: u64) -> usize {
        let u = key.domain(Domain::Candidate).rng(index).uniform() * self.cdf[self.cdf.len() - 1];
        self.cdf.iter().position(|c| u < *c).unwrap_or(self.cdf.len() - 1)
    }
}

impl Target for DiscretePair {
    fn log_ratio(&self, key: StreamKey, index: u64) -> Result<f64, RccError> {
        let z = self.simulate(key, index);
        if self.q[z] == 0.0 {
            return Err(RccError::ZeroDensity { index });
        }
        Ok((self.p[z] / self.q[z]).ln())
    }

    fn min_ratio(&self) -> Option<f64> {
        (self.min_ratio > 0.0 && self.min_ratio.is_finite()).then_some(self.min_ratio)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::KeyedRng;

    fn key(i: u32) -> StreamKey {
        StreamKey::new(42, Domain::Candidate).chunk(i)
    }

    #[test]
    fn identical_distributions_pick_first_candidate() {
        let mu = [0.3, -1.0, 2.0];
        let pair = GaussianPair::new(&mu, &mu, 0.7).unwrap();
        for i in 0..50 {
            let out = pfr_encode(&pair.scorer(), key(i), 64).unwrap();
            assert_eq!(out.index, 1);
        }
        let d = DiscretePair::new(vec![0.25; 4], vec![0.25; 4]).unwrap();
        for i in 0..50 {
            let out = pfr_encode(&d, key(i), 1 << 10).unwrap();
            assert_eq!(out.index, 1);
            assert!(!out.exhausted);
        }
    }

    #[test]
    fn one_bit_kl() {
        let var = 0.3;
        let d = (2.0 * var * std::f64::consts::LN_2).sqrt();
        let (mu_q, mu_p) = ([d], [0.0]);
        let pair = GaussianPair::new(&mu_q, &mu_p, var).unwrap();
        assert!((kl_bits(&pair).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(kl_bits(&GaussianPair::new(&[1.0], &[1.0], var).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn kl_matches_quadrature() {
        let mut rng = KeyedRng::from_seed(77);
        let var: f64 = 0.4;
        let mu_q: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        let mu_p: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        // Diagonal Gaussians: KL is the sum of 1-D integrals, each done by
        // midpoint quadrature of q log2(q/p).
        let sd = var.sqrt();
        let mut total = 0.0;
        for (mq, mp) in mu_q.iter().zip(&mu_p) {
            let (lo, hi, n) = (mq - 12.0 * sd, mq + 12.0 * sd, 200_000);
            let h = (hi - lo) / n as f64;
            for i in 0..n {
                let x = lo + (i as f64 + 0.5) * h;
                let lq = -(x - mq).powi(2) / (2.0 * var);
                let lp = -(x - mp).powi(2) / (2.0 * var);
                let q = lq.exp() / (2.0 * std::f64::consts::PI * var).sqrt();
                total += q * (lq - lp) * std::f64::consts::LOG2_E * h;
            }
        }
        let pair = GaussianPair::new(&mu_q, &mu_p, var).unwrap();
        let kl = kl_bits(&pair).unwrap();
        assert!((kl - total).abs() < 1e-6 * kl.max(1.0), "{kl} vs {total}");
    }

    #[test]
    fn nonpositive_variance_is_rejected() {
        assert!(matches!(
            GaussianPair::new(&[0.0], &[0.0], 0.0),
            Err(RccError::NonpositiveVariance(_))
        ));
    }

    #[test]
    fn scorer_matches_direct_log_ratio() {
        let mu_q = [0.5, -0.25, 1.0];
        let mu_p = [0.0, 0.1, 0.7];
        let pair = GaussianPair::new(&mu_q, &mu_p, 0.2).unwrap();
        let scorer = pair.scorer();
        for n in 1..20 {
            let z = pair.proposal().simulate(key(0), n);
            let direct: f64 = z
                .iter()
                .zip(&mu_q)
                .zip(&mu_p)
                .map(|((z, q), p)| ((z - q).powi(2) - (z - p).powi(2)) / 0.4)
                .sum();
            assert!((scorer.log_ratio(key(0), n).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_reproduces_encoder_sample() {
        let mu_q = [1.0, 0.0, -0.5, 0.25];
        let mu_p = [0.0; 4];
        let pair = GaussianPair::new(&mu_q, &mu_p, 0.5).unwrap();
        let out = pfr_encode(&pair.scorer(), key(3), 256).unwrap();
        let z = pfr_decode(out.index, &pair.proposal(), key(3)).unwrap();
        assert_eq!(z, out.sample);
        assert_eq!(
            pfr_decode(1, &pair.proposal(), key(3)).unwrap(),
            pair.proposal().simulate(key(3), 1)
        );
    }

    #[test]
    fn zero_density_candidate_is_an_error() {
        let d = DiscretePair::new(vec![0.5, 0.5], vec![1.0, 0.0]).unwrap();
        let mut saw_error = false;
        for i in 0..20 {
            if let Err(RccError::ZeroDensity { .. }) = pfr_encode(&d, key(i), 16) {
                saw_error = true;
            }
        }
        assert!(saw_error);
    }

    #[test]
    fn budget_rule() {
        assert_eq!(budget_for_kl(0.0), 32);
        assert_eq!(budget_for_kl(4.0), 512);
        assert_eq!(budget_for_kl(40.0), 1 << 20);
    }
}
