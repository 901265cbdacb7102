//! Partition of spectral coefficients into PFR chunks.
//!
//! Boundaries depend only on the prior variances, the schedule and the step,
//! so the decoder re-derives them without side information.

use std::ops::Range;

use super::RccError;
use crate::prior::wiener_error;
use crate::schedule::NoiseSchedule;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkRule {
    pub coeffs_per_chunk: usize,
    /// Maximum expected bits per chunk.
    pub kl_cap: f64,
}

impl Default for ChunkRule {
    fn default() -> Self {
        Self {
            coeffs_per_chunk: 16,
            kl_cap: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkSpec {
    pub ranges: Vec<Range<usize>>,
    /// Expected KL in bits of each chunk.
    pub expected_kl: Vec<f64>,
    pub kl_cap: f64,
}

impl ChunkSpec {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Builds the partition for coded step `t` (which produces `z_t` from `z_{t+1}`).
    pub fn for_step(rule: ChunkRule, variances: &[f64], sched: &NoiseSchedule, t: usize) -> Result<Self, RccError> {
        let profile = expected_kl_profile(variances, sched, t)?;
        Self::from_profile(rule, &profile)
    }

    pub fn from_profile(rule: ChunkRule, profile: &[f64]) -> Result<Self, RccError> {
        let width = rule.coeffs_per_chunk.max(1);
        let mut ranges = Vec::with_capacity(profile.len().div_ceil(width));
        let mut expected_kl = Vec::with_capacity(ranges.capacity());
        let mut start = 0;
        while start < profile.len() {
            let end = (start + width).min(profile.len());
            split(profile, start..end, rule.kl_cap, &mut ranges, &mut expected_kl)?;
            start = end;
        }
        Ok(Self {
            ranges,
            expected_kl,
            kl_cap: rule.kl_cap,
        })
    }
}

fn split(
    profile: &[f64],
    range: Range<usize>,
    cap: f64,
    ranges: &mut Vec<Range<usize>>,
    kls: &mut Vec<f64>,
) -> Result<(), RccError> {
    let kl: f64 = profile[range.clone()].iter().sum();
    if kl <= cap {
        ranges.push(range);
        kls.push(kl);
        return Ok(());
    }
    if range.len() == 1 {
        return Err(RccError::ChunkTooHot {
            coeff: range.start,
            kl_bits: kl,
            cap,
        });
    }
    let mid = range.start + range.len() / 2;
    split(profile, range.start..mid, cap, ranges, kls)?;
    split(profile, mid..range.end, cap, ranges, kls)
}

/// Expected per-coefficient KL in bits of coded step `t` when the source
/// matches the prior: the posterior and reverse means differ by
/// `on_clean * (y - x0_hat)`, whose variance is the Wiener error at `t + 1`.
pub fn expected_kl_profile(variances: &[f64], sched: &NoiseSchedule, t: usize) -> Result<Vec<f64>, RccError> {
    if t == 0 || t >= sched.steps() {
        return Err(RccError::StepOutOfRange {
            t,
            steps: sched.steps(),
        });
    }
    let coefs = sched.posterior_coefs(t + 1)?;
    let (ab, omab) = (sched.alpha_bar(t + 1), sched.one_minus_alpha_bar(t + 1));
    let scale = coefs.on_clean * coefs.on_clean / (2.0 * coefs.var) * std::f64::consts::LOG2_E;
    Ok(variances.iter().map(|&v| scale * wiener_error(v, ab, omab)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::build_schedule;

    #[test]
    fn cold_profile_uses_fixed_width() {
        let spec = ChunkSpec::from_profile(ChunkRule::default(), &[0.01; 40]).unwrap();
        assert_eq!(spec.ranges, vec![0..16, 16..32, 32..40]);
    }

    #[test]
    fn hot_chunks_are_halved() {
        let mut p = vec![0.1; 32];
        p[3] = 3.0;
        let spec = ChunkSpec::from_profile(ChunkRule::default(), &p).unwrap();
        assert_eq!(spec.ranges, vec![0..8, 8..16, 16..32]);
        assert!(spec.expected_kl.iter().all(|k| *k <= 4.0));
    }

    #[test]
    fn single_hot_coefficient_fails() {
        let mut p = vec![0.0; 16];
        p[5] = 4.5;
        assert!(matches!(
            ChunkSpec::from_profile(ChunkRule::default(), &p),
            Err(RccError::ChunkTooHot { coeff: 5, .. })
        ));
    }

    #[test]
    fn profile_is_shared_knowledge() {
        let s = build_schedule(32, 1e-3, 0.1).unwrap();
        let vars = [1.0, 0.25, 1e-6];
        let a = expected_kl_profile(&vars, &s, 5).unwrap();
        let b = expected_kl_profile(&vars, &s, 5).unwrap();
        assert_eq!(a, b);
        assert!(a[0] > a[1] && a[1] > a[2]);
        assert!(expected_kl_profile(&vars, &s, 32).is_err());
        assert!(expected_kl_profile(&vars, &s, 0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn partition_is_disjoint_and_exhaustive(
            profile in proptest::collection::vec(0.0f64..1.5, 1..200),
            width in 1usize..40,
        ) {
            let rule = ChunkRule { coeffs_per_chunk: width, kl_cap: 4.0 };
            let spec = ChunkSpec::from_profile(rule, &profile).unwrap();
            let mut next = 0;
            for (r, kl) in spec.ranges.iter().zip(&spec.expected_kl) {
                proptest::prop_assert_eq!(r.start, next);
                proptest::prop_assert!(r.end > r.start);
                proptest::prop_assert!(*kl <= 4.0);
                next = r.end;
            }
            proptest::prop_assert_eq!(next, profile.len());
        }
    }
}
