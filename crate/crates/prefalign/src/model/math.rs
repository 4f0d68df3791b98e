//! Row-major f64 matrices with a deterministic matmul.
//!
//! The multiply iterates the inner dimension in a fixed ascending order per
//! output row, so a given row's result never depends on how many other rows
//! are in the batch. Sequence scoring relies on that: the logits for a
//! prefix are bit-identical whether the prefix is scored alone or as part
//! of a longer sequence.

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "shape/data mismatch");
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// `self @ other`, axpy over the inner dimension in ascending order.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let out_row = out.row_mut(r);
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self^T @ other` without materializing the transpose; used for weight
    /// gradients (X^T @ dY).
    pub fn transpose_matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "transpose_matmul shape mismatch");
        let mut out = Mat::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let b_row = other.row(r);
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = out.row_mut(k);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self @ other^T`; used for input gradients (dY @ W^T).
    pub fn matmul_transpose(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_transpose shape mismatch");
        let mut out = Mat::zeros(self.rows, other.rows);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let out_row = out.row_mut(r);
            for (j, o) in out_row.iter_mut().enumerate() {
                let b_row = other.row(j);
                let mut acc = [0.0f64; 4];
                let mut chunks_a = a_row.chunks_exact(4);
                let mut chunks_b = b_row.chunks_exact(4);
                for (ca, cb) in (&mut chunks_a).zip(&mut chunks_b) {
                    acc[0] += ca[0] * cb[0];
                    acc[1] += ca[1] * cb[1];
                    acc[2] += ca[2] * cb[2];
                    acc[3] += ca[3] * cb[3];
                }
                let mut tail = 0.0;
                for (&a, &b) in chunks_a.remainder().iter().zip(chunks_b.remainder()) {
                    tail += a * b;
                }
                *o = (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail;
            }
        }
        out
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &Mat, scale: f64) {
        assert_eq!(self.data.len(), other.data.len(), "add_scaled shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }
}

/// Dot product with fixed accumulation order.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small_known_values() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.as_slice(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transpose_variants_agree_with_plain_matmul() {
        let a = Mat::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 5.0, -6.0]);
        let b = Mat::from_vec(2, 4, (0..8).map(|i| i as f64 * 0.25 - 1.0).collect());
        // a^T @ b via transpose_matmul vs manual
        let atb = a.transpose_matmul(&b);
        for i in 0..3 {
            for j in 0..4 {
                let manual: f64 = (0..2).map(|k| a.at(k, i) * b.at(k, j)).sum();
                assert!((atb.at(i, j) - manual).abs() < 1e-12);
            }
        }
        // a @ c^T via matmul_transpose vs manual
        let c = Mat::from_vec(5, 3, (0..15).map(|i| (i as f64).sin()).collect());
        let act = a.matmul_transpose(&c);
        for i in 0..2 {
            for j in 0..5 {
                let manual: f64 = (0..3).map(|k| a.at(i, k) * c.at(j, k)).sum();
                assert!((act.at(i, j) - manual).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_row_results_do_not_depend_on_batch_size() {
        let w = Mat::from_vec(3, 3, (0..9).map(|i| ((i * 37) % 11) as f64 * 0.173).collect());
        let big = Mat::from_vec(4, 3, (0..12).map(|i| (i as f64 * 0.31).cos()).collect());
        let small = Mat::from_vec(2, 3, big.as_slice()[..6].to_vec());
        let big_out = big.matmul(&w);
        let small_out = small.matmul(&w);
        assert_eq!(big_out.row(0), small_out.row(0));
        assert_eq!(big_out.row(1), small_out.row(1));
    }
}
