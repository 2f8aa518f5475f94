//! 2D convolution of real images with complex kernels.
//!
//! Both paths extend the image by half-sample symmetric mirroring
//! (`… c b a | a b c …`) and return an output the size of the input.

use rustfft::num_complex::Complex64;

use super::GaborKernel;
use crate::fft::{fast_len, Fft2d};
use crate::{ComplexField, Error, Result, ScalarField};

/// Kernels whose side exceeds this go through the FFT path under
/// [`ConvPath::Auto`].
pub const DIRECT_MAX_SIDE: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvPath {
    #[default]
    Auto,
    Direct,
    Fft,
}

/// Reflect an out-of-range index back into `0..n` (period `2n`).
pub(crate) fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let p = i.rem_euclid(2 * n);
    (if p < n { p } else { 2 * n - 1 - p }) as usize
}

fn check_fits(image: &ScalarField, kernel: &GaborKernel) -> Result<()> {
    let side = kernel.side();
    if side > image.width() || side > image.height() {
        return Err(Error::Size(format!(
            "{side}x{side} kernel does not fit a {}x{} image",
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

pub fn filter_image(image: &ScalarField, kernel: &GaborKernel) -> Result<ComplexField> {
    filter_image_with(image, kernel, ConvPath::Auto)
}

pub fn filter_image_with(
    image: &ScalarField,
    kernel: &GaborKernel,
    path: ConvPath,
) -> Result<ComplexField> {
    check_fits(image, kernel)?;
    let use_fft = match path {
        ConvPath::Auto => kernel.side() > DIRECT_MAX_SIDE,
        ConvPath::Direct => false,
        ConvPath::Fft => true,
    };
    let samples = if use_fft {
        let spectrum = ImageSpectrum::new(image, kernel.half());
        spectrum.convolve(&spectrum.kernel_spectrum(kernel))
    } else {
        convolve_direct(image, kernel)
    };
    ComplexField::new(image.width(), image.height(), samples)
}

pub(crate) fn convolve_direct(image: &ScalarField, kernel: &GaborKernel) -> Vec<Complex64> {
    let (w, h) = (image.width(), image.height());
    let k = kernel.half() as isize;
    let side = kernel.side();
    let taps = kernel.taps();
    let mut out = Vec::with_capacity(w * h);
    for r in 0..h as isize {
        for c in 0..w as isize {
            let mut acc = Complex64::default();
            for u in -k..=k {
                let rr = mirror_index(r - u, h);
                let trow = &taps[(u + k) as usize * side..][..side];
                let irow = image.row(rr);
                for v in -k..=k {
                    acc += trow[(v + k) as usize] * irow[mirror_index(c - v, w)];
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Spectrum of a mirror-padded image, reusable across kernels whose half
/// width does not exceed the padding.
pub(crate) struct ImageSpectrum {
    fft: Fft2d,
    pad: usize,
    width: usize,
    height: usize,
    spectrum: Vec<Complex64>,
}

/// Shape of the padded transform used for a `width × height` image.
pub(crate) fn padded_shape(width: usize, height: usize, pad: usize) -> (usize, usize) {
    (fast_len(height + 2 * pad), fast_len(width + 2 * pad))
}

impl ImageSpectrum {
    pub(crate) fn new(image: &ScalarField, pad: usize) -> Self {
        let (rows, cols) = padded_shape(image.width(), image.height(), pad);
        Self::with_fft(image, pad, Fft2d::new(rows, cols))
    }

    pub(crate) fn with_fft(image: &ScalarField, pad: usize, fft: Fft2d) -> Self {
        let (w, h) = (image.width(), image.height());
        let (rows, cols) = (fft.rows(), fft.cols());
        debug_assert!(rows >= h + 2 * pad && cols >= w + 2 * pad);
        let mut data = vec![Complex64::default(); rows * cols];
        let p = pad as isize;
        for pr in 0..h + 2 * pad {
            let src = image.row(mirror_index(pr as isize - p, h));
            let dst = &mut data[pr * cols..];
            for pc in 0..w + 2 * pad {
                dst[pc] = Complex64::new(src[mirror_index(pc as isize - p, w)], 0.0);
            }
        }
        fft.forward(&mut data);
        Self {
            fft,
            pad,
            width: w,
            height: h,
            spectrum: data,
        }
    }

    /// Kernel taps placed with their center at the origin, wrapped.
    pub(crate) fn kernel_spectrum(&self, kernel: &GaborKernel) -> Vec<Complex64> {
        kernel_spectrum(&self.fft, kernel)
    }

    pub(crate) fn convolve(&self, kernel_spectrum: &[Complex64]) -> Vec<Complex64> {
        let mut prod: Vec<Complex64> = self
            .spectrum
            .iter()
            .zip(kernel_spectrum)
            .map(|(a, b)| a * b)
            .collect();
        self.fft.inverse(&mut prod);
        let cols = self.fft.cols();
        let mut out = Vec::with_capacity(self.width * self.height);
        for r in 0..self.height {
            let start = (r + self.pad) * cols + self.pad;
            out.extend_from_slice(&prod[start..start + self.width]);
        }
        out
    }
}

pub(crate) fn kernel_spectrum(fft: &Fft2d, kernel: &GaborKernel) -> Vec<Complex64> {
    let (rows, cols) = (fft.rows(), fft.cols());
    let k = kernel.half() as isize;
    let side = kernel.side();
    let mut data = vec![Complex64::default(); rows * cols];
    for u in -k..=k {
        let r = u.rem_euclid(rows as isize) as usize;
        for v in -k..=k {
            let c = v.rem_euclid(cols as isize) as usize;
            data[r * cols + c] = kernel.taps()[(u + k) as usize * side + (v + k) as usize];
        }
    }
    fft.forward(&mut data);
    data
}

/// Separable Gaussian blur with mirror boundaries.
pub fn gaussian_blur(image: &ScalarField, sigma: f64) -> Result<ScalarField> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = taps.iter().sum();
    let taps: Vec<f64> = taps.iter().map(|t| t / norm).collect();
    let (w, h) = (image.width(), image.height());
    let mut tmp = vec![0.0; w * h];
    for r in 0..h {
        let row = image.row(r);
        for c in 0..w {
            tmp[r * w + c] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * row[mirror_index(c as isize + i as isize - radius, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = taps
                .iter()
                .enumerate()
                .map(|(i, t)| t * tmp[mirror_index(r as isize + i as isize - radius, h) * w + c])
                .sum();
        }
    }
    ScalarField::new(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gfb::{GaborKernel, GfbConfig};

    #[test]
    fn mirror_reflects_half_sample() {
        let idx: Vec<usize> = (-3..7).map(|i| mirror_index(i, 4)).collect();
        assert_eq!(idx, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
        assert_eq!(mirror_index(-9, 4), 0);
    }

    #[test]
    fn image_smaller_than_kernel_is_rejected() {
        let k = GaborKernel::new(10.0, 0.0, &GfbConfig::default()).unwrap();
        let img = ScalarField::constant(30, 30, 1.0).unwrap();
        assert!(matches!(filter_image(&img, &k), Err(Error::Size(_))));
    }

    #[test]
    fn blur_preserves_constants() {
        let img = ScalarField::constant(20, 10, 0.7).unwrap();
        let b = gaussian_blur(&img, 4.0).unwrap();
        assert!(b.samples().iter().all(|v| (v - 0.7).abs() < 1e-12));
        assert!(gaussian_blur(&img, 0.0).is_err());
    }
}
