//! Overlapping GOP segmentation.

use super::PipelineError;

/// A GOP covering source frames `start..start + len`. `coded_len` is the
/// frame count after tail padding; it equals `len` for full GOPs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gop {
    pub index: usize,
    pub start: usize,
    pub len: usize,
    pub coded_len: usize,
    /// Frames shared with the previous GOP.
    pub overlap: usize,
}

impl Gop {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

/// Splits `frames` into GOPs of length `l` starting every `l - m` frames.
/// The last GOP is shortened to end at the final frame, then padded by
/// repeating its last frame to a multiple of `s` of at least `max(2s, m + s)`.
pub fn segment_gops(frames: usize, l: usize, m: usize, s: usize) -> Result<Vec<Gop>, PipelineError> {
    check_gop_params(l, m, s)?;
    let min_len = (2 * s).max(m + s);
    if frames < 2 * s {
        return Err(PipelineError::VideoTooShort { frames, minimum: 2 * s });
    }
    let mut gops = Vec::new();
    let mut start = 0;
    loop {
        let len = l.min(frames - start);
        let coded_len = len.max(min_len).next_multiple_of(s);
        gops.push(Gop {
            index: gops.len(),
            start,
            len,
            coded_len,
            overlap: if gops.is_empty() { 0 } else { m },
        });
        if start + len >= frames {
            break;
        }
        start += l - m;
    }
    Ok(gops)
}

pub(crate) fn check_gop_params(l: usize, m: usize, s: usize) -> Result<(), PipelineError> {
    if s == 0 || l <= m || !l.is_multiple_of(s) || !m.is_multiple_of(s) {
        return Err(PipelineError::BadGopParams(format!(
            "need l > m >= 0 with l and m divisible by s, got l={l} m={m} s={s}"
        )));
    }
    Ok(())
}

/// Number of distinct source frames covered: `l + (K - 1)(l - m)` for full GOPs.
pub fn distinct_frames(gops: &[Gop]) -> usize {
    gops.iter().map(|g| g.len - g.overlap).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spans(gops: &[Gop]) -> Vec<(usize, usize)> {
        gops.iter().map(|g| (g.start, g.end())).collect()
    }

    #[test]
    fn single_gop() {
        assert_eq!(spans(&segment_gops(48, 48, 4, 4).unwrap()), vec![(0, 48)]);
    }

    #[test]
    fn two_gops_cover_92_frames() {
        let g = segment_gops(92, 48, 4, 4).unwrap();
        assert_eq!(spans(&g), vec![(0, 48), (44, 92)]);
        assert_eq!(distinct_frames(&g), 48 + 44);
    }

    #[test]
    fn tail_gop_is_shortened() {
        let g = segment_gops(96, 48, 4, 4).unwrap();
        assert_eq!(spans(&g), vec![(0, 48), (44, 92), (88, 96)]);
        assert_eq!(g[2].coded_len, 8);
        assert_eq!(distinct_frames(&g), 96);
    }

    #[test]
    fn ragged_tail_is_padded() {
        let g = segment_gops(93, 48, 4, 4).unwrap();
        assert_eq!(spans(&g), vec![(0, 48), (44, 92), (88, 93)]);
        assert_eq!(g[2].coded_len, 8);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            segment_gops(7, 48, 4, 4),
            Err(PipelineError::VideoTooShort { .. })
        ));
        assert!(matches!(
            segment_gops(96, 48, 48, 4),
            Err(PipelineError::BadGopParams(_))
        ));
        assert!(matches!(
            segment_gops(96, 48, 3, 4),
            Err(PipelineError::BadGopParams(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn distinct_frames_equal_length(frames in 8usize..400, lq in 2usize..16, mq in 0usize..4) {
            let (s, l) = (4, 4 * lq);
            let m = 4 * mq.min(lq - 1);
            let g = segment_gops(frames, l, m, s).unwrap();
            proptest::prop_assert_eq!(distinct_frames(&g), frames);
            proptest::prop_assert_eq!(g.last().unwrap().end(), frames);
            for w in g.windows(2) {
                proptest::prop_assert_eq!(w[1].start, w[0].start + l - m);
            }
            for gop in &g {
                proptest::prop_assert!(gop.coded_len % s == 0 && gop.coded_len >= gop.len);
            }
        }
    }
}
