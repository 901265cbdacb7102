//! Orthonormal DCT-II matrices and separable application along the axes of
//! a 4-D row-major array.

use std::sync::Arc;

/// Row `k` holds the `k`-th orthonormal DCT-II basis vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DctMatrix {
    n: usize,
    rows: Arc<Vec<f64>>,
}

impl DctMatrix {
    pub fn new(n: usize) -> Self {
        let mut rows = vec![0.0; n * n];
        for k in 0..n {
            let scale = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            for i in 0..n {
                rows[k * n + i] = scale * (std::f64::consts::PI * (i as f64 + 0.5) * k as f64 / n as f64).cos();
            }
        }
        Self {
            n,
            rows: Arc::new(rows),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.rows[k * self.n + i]
    }
}

/// Applies `m` (or its transpose when `inverse`) along `axis` of an array
/// with extents `dims`, in place.
pub fn transform_axis(data: &mut [f64], dims: [usize; 4], axis: usize, m: &DctMatrix, inverse: bool) {
    let n = dims[axis];
    debug_assert_eq!(n, m.size());
    debug_assert_eq!(data.len(), dims.iter().product::<usize>());
    if n <= 1 {
        return;
    }
    let stride: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let mut line = vec![0.0; n];
    let mut out = vec![0.0; n];
    for o in 0..outer {
        let base = o * n * stride;
        for s in 0..stride {
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[base + i * stride + s];
            }
            for (k, dst) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                if inverse {
                    for (i, v) in line.iter().enumerate() {
                        acc += m.get(i, k) * v;
                    }
                } else {
                    for (i, v) in line.iter().enumerate() {
                        acc += m.get(k, i) * v;
                    }
                }
                *dst = acc;
            }
            for (i, v) in out.iter().enumerate() {
                data[base + i * stride + s] = *v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_orthonormal() {
        for n in [1, 2, 4, 7, 8] {
            let m = DctMatrix::new(n);
            for a in 0..n {
                for b in 0..n {
                    let dot: f64 = (0..n).map(|i| m.get(a, i) * m.get(b, i)).sum();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-12, "n={n} a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn axis_round_trip() {
        let dims = [3, 4, 2, 5];
        let orig: Vec<f64> = (0..120).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut data = orig.clone();
        for axis in 0..4 {
            transform_axis(&mut data, dims, axis, &DctMatrix::new(dims[axis]), false);
        }
        for axis in (0..4).rev() {
            transform_axis(&mut data, dims, axis, &DctMatrix::new(dims[axis]), true);
        }
        for (a, b) in orig.iter().zip(&data) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
