//! Real and complex 2D grids.
//!
//! Samples are stored row-major and indexed `(row, col)`. Every public
//! constructor rejects non-finite samples so downstream code never has to
//! guard against NaN.

use std::f64::consts::{PI, TAU};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reduce an angle to the half-open interval `(-π, π]`.
pub fn wrap_to_pi(v: f64) -> f64 {
    let r = v.rem_euclid(TAU); // [0, 2π)
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Neumaier-compensated sum; deterministic for a given input order.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Invariant(format!(
            "field dimensions must be positive, got {width}x{height}"
        )));
    }
    let expected = width
        .checked_mul(height)
        .ok_or_else(|| Error::Size(format!("{width}x{height} overflows")))?;
    if expected != len {
        return Err(Error::Invariant(format!(
            "{width}x{height} field needs {expected} samples, got {len}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl ScalarField {
    pub fn new(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        check_dims(width, height, samples.len())?;
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!(
                "non-finite sample {} at index {i}",
                samples[i]
            )));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }

    /// Build a field by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut samples = Vec::with_capacity(width.saturating_mul(height));
        for r in 0..height {
            for c in 0..width {
                samples.push(f(r, c));
            }
        }
        Self::new(width, height, samples)
    }

    /// Internal constructor for results that are finite by construction.
    pub(crate) fn from_vec_unchecked(width: usize, height: usize, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), width * height);
        debug_assert!(samples.iter().all(|v| v.is_finite()));
        Self {
            width,
            height,
            samples,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.samples[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.samples[row * self.width..(row + 1) * self.width]
    }

    pub fn same_shape(&self, other: &ScalarField) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_same_shape(&self, other: &ScalarField) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Size(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    /// Apply `f` to every sample. Fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.samples.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Self::new(
            self.width,
            self.height,
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn offset(&self, c: f64) -> Result<Self> {
        self.map(|v| v + c)
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        self.map(|v| v * c)
    }

    /// Arithmetic mean of all samples.
    pub fn mean(&self) -> f64 {
        compensated_sum(self.samples.iter().copied()) / self.samples.len() as f64
    }

    pub fn stats(&self) -> FieldStats {
        let mean = self.mean();
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in &self.samples {
            min = min.min(v);
            max = max.max(v);
        }
        let var = compensated_sum(self.samples.iter().map(|&v| (v - mean) * (v - mean)))
            / self.samples.len() as f64;
        // Rounding can push the mean a hair outside [min, max] for
        // near-constant fields.
        FieldStats {
            mean: mean.clamp(min, max),
            min,
            max,
            stddev: var.sqrt(),
        }
    }

    /// Drop `border` pixels on every side.
    pub fn crop(&self, border: usize) -> Result<Self> {
        if 2 * border >= self.width || 2 * border >= self.height {
            return Err(Error::Size(format!(
                "border {border} leaves nothing of a {}x{} field",
                self.width, self.height
            )));
        }
        let w = self.width - 2 * border;
        let h = self.height - 2 * border;
        let mut samples = Vec::with_capacity(w * h);
        for r in border..border + h {
            samples.extend_from_slice(&self.row(r)[border..border + w]);
        }
        Ok(Self::from_vec_unchecked(w, h, samples))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    width: usize,
    height: usize,
    samples: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(width: usize, height: usize, samples: Vec<Complex64>) -> Result<Self> {
        check_dims(width, height, samples.len())?;
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.samples[row * self.width + col]
    }

    pub fn magnitude(&self) -> ScalarField {
        ScalarField::from_vec_unchecked(
            self.width,
            self.height,
            self.samples.iter().map(|z| z.norm()).collect(),
        )
    }

    /// Argument of each sample in `(-π, π]`.
    pub fn angle(&self) -> ScalarField {
        ScalarField::from_vec_unchecked(
            self.width,
            self.height,
            self.samples.iter().map(|z| wrap_to_pi(z.arg())).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mean_of_simple_fields() {
        assert_eq!(ScalarField::constant(4, 3, 0.5).unwrap().mean(), 0.5);
        assert_eq!(ScalarField::new(2, 1, vec![-1.0, 1.0]).unwrap().mean(), 0.0);
        let f = ScalarField::new(3, 3, (1..=9).map(f64::from).collect()).unwrap();
        assert_eq!(f.mean(), 5.0);
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_to_pi(0.0), 0.0);
        assert!((wrap_to_pi(1.5 * PI) + 0.5 * PI).abs() < 1e-15);
        assert_eq!(wrap_to_pi(-PI), PI);
        assert_eq!(wrap_to_pi(PI), PI);
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(matches!(
            ScalarField::new(2, 1, vec![0.0, f64::NAN]),
            Err(Error::Invariant(_))
        ));
        assert!(ScalarField::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ScalarField::new(0, 2, vec![]).is_err());
        let f = ScalarField::constant(2, 2, 1.0).unwrap();
        assert!(f.map(|v| v / 0.0).is_err());
    }

    #[test]
    fn stats_and_crop() {
        let f = ScalarField::from_fn(5, 4, |r, c| (r * 5 + c) as f64).unwrap();
        let s = f.stats();
        assert_eq!((s.min, s.max, s.mean), (0.0, 19.0, 9.5));
        let c = f.crop(1).unwrap();
        assert_eq!((c.width(), c.height()), (3, 2));
        assert_eq!(c.samples(), &[6.0, 7.0, 8.0, 11.0, 12.0, 13.0]);
        assert!(f.crop(2).is_err());
    }

    #[test]
    fn complex_angle_is_half_open() {
        let z = ComplexField::new(
            2,
            1,
            vec![Complex64::new(-1.0, -0.0), Complex64::new(0.0, 1.0)],
        )
        .unwrap();
        let a = z.angle();
        assert_eq!(a.get(0, 0), PI);
        assert!((a.get(0, 1) - PI / 2.0).abs() < 1e-15);
        assert_eq!(z.magnitude().samples(), &[1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn mean_shifts_with_offset(
            samples in prop::collection::vec(-1e3f64..1e3, 1..200),
            c in -1e3f64..1e3,
        ) {
            let n = samples.len();
            let f = ScalarField::new(n, 1, samples).unwrap();
            let shifted = f.offset(c).unwrap().mean();
            let expected = f.mean() + c;
            prop_assert!((shifted - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }

        #[test]
        fn wrap_is_periodic(v in -50.0f64..50.0, k in -10i32..=10) {
            let a = wrap_to_pi(v + TAU * f64::from(k));
            let b = wrap_to_pi(v);
            // Compare on the circle so values straddling ±π count as equal.
            prop_assert!(wrap_to_pi(a - b).abs() < 1e-12);
            prop_assert!(a > -PI && a <= PI);
        }
    }
}
