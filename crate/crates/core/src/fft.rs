use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Smallest `m >= n` whose only prime factors are 2, 3, 5 and 7.
pub(crate) fn fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5, 7] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Row-major 2D complex FFT of a fixed shape.
pub(crate) struct Fft2d {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2d {
    pub(crate) fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub(crate) fn rows(&self) -> usize {
        self.rows
    }

    pub(crate) fn cols(&self) -> usize {
        self.cols
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform including the `1/(rows·cols)` normalization.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.row_inv, &self.col_inv);
        let s = 1.0 / (self.rows * self.cols) as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }

    fn run(&self, data: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.rows * self.cols);
        let scratch_len = row
            .get_inplace_scratch_len()
            .max(col.get_inplace_scratch_len());
        let mut scratch = vec![Complex64::default(); scratch_len];
        row.process_with_scratch(data, &mut scratch);
        let mut t = transpose(data, self.rows, self.cols);
        col.process_with_scratch(&mut t, &mut scratch);
        data.copy_from_slice(&transpose(&t, self.cols, self.rows));
    }
}

fn transpose(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::default(); data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_lengths() {
        assert_eq!(fast_len(1), 1);
        assert_eq!(fast_len(11), 12);
        assert_eq!(fast_len(356), 360);
        assert_eq!(fast_len(97), 98);
    }

    #[test]
    fn round_trip_matches_naive_dft() {
        let (rows, cols) = (3, 5);
        let data: Vec<Complex64> = (0..rows * cols)
            .map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let fft = Fft2d::new(rows, cols);
        let mut spec = data.clone();
        fft.forward(&mut spec);
        for (k, l) in [(0, 0), (1, 3), (2, 4)] {
            let mut acc = Complex64::default();
            for r in 0..rows {
                for c in 0..cols {
                    let ang = -std::f64::consts::TAU
                        * ((k * r) as f64 / rows as f64 + (l * c) as f64 / cols as f64);
                    acc += data[r * cols + c] * Complex64::from_polar(1.0, ang);
                }
            }
            assert!((acc - spec[k * cols + l]).norm() < 1e-12);
        }
        fft.inverse(&mut spec);
        for (a, b) in spec.iter().zip(&data) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
