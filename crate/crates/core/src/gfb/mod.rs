//! Gabor filter bank normalization of fringe patterns.
//!
//! Each kernel is a complex carrier `exp(-i ω·x)` under an isotropic
//! Gaussian window, tuned to one (period, orientation) pair. Filtering an
//! image with every kernel and keeping, per pixel, the response with the
//! largest magnitude (winner-take-all) gives a local magnitude `m(x)` and
//! phase `ψ(x)` with the response written as `m·exp(-iψ)`. The normalized
//! pattern is `cos ψ`: zero background, unit amplitude, band-limited.
//!
//! Kernels are made DC-free by subtracting their complex mean and then
//! scaled to unit L1 norm, so a constant background never reaches the
//! output and magnitudes are comparable across periods.

pub mod conv;

use std::f64::consts::{PI, TAU};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use conv::{filter_image, filter_image_with, gaussian_blur, ConvPath, DIRECT_MAX_SIDE};

use crate::fft::Fft2d;
use crate::{wrap_to_pi, Error, Result, ScalarField};

/// Pixels whose winning magnitude is at most this fraction of the largest
/// absolute input sample are treated as having no response (phase 0).
const DEGENERATE_REL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GfbConfig {
    /// Fringe periods in pixels.
    pub periods: Vec<f64>,
    /// Number of orientations uniformly covering `[0, π)`.
    pub orientations: usize,
    /// Gaussian standard deviation as a fraction of the period.
    pub sigma_ratio: f64,
    /// Kernel half-extent as a multiple of the period.
    pub window_ratio: f64,
    pub zero_dc: bool,
}

impl Default for GfbConfig {
    fn default() -> Self {
        Self {
            periods: vec![7.0, 10.0, 15.0, 25.0],
            orientations: 10,
            sigma_ratio: 0.5,
            window_ratio: 2.0,
            zero_dc: true,
        }
    }
}

impl GfbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.periods.is_empty() {
            return Err(Error::Config(
                "filter bank needs at least one period".into(),
            ));
        }
        if let Some(p) = self
            .periods
            .iter()
            .find(|&&p| !(p >= 3.0) || !p.is_finite())
        {
            return Err(Error::Config(format!("period {p} is below 3 pixels")));
        }
        if self.orientations == 0 {
            return Err(Error::Config("orientation count must be at least 1".into()));
        }
        if !(self.sigma_ratio > 0.0) || !(self.window_ratio > 0.0) {
            return Err(Error::Config(
                "sigma and window ratios must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Half width of the largest kernel in the bank.
    pub fn max_half_width(&self) -> usize {
        self.periods
            .iter()
            .map(|&p| half_width(p, self.window_ratio))
            .max()
            .unwrap_or(0)
    }

    pub fn max_period(&self) -> f64 {
        self.periods.iter().copied().fold(0.0, f64::max)
    }
}

fn half_width(period: f64, window_ratio: f64) -> usize {
    ((window_ratio * period).round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaborKernel {
    period: f64,
    orientation: f64,
    frequency: [f64; 2],
    sigma: f64,
    half: usize,
    taps: Vec<Complex64>,
}

impl GaborKernel {
    /// Kernel tuned to `period` pixels along `orientation` radians, measured
    /// from the column axis toward the row axis.
    pub fn new(period: f64, orientation: f64, config: &GfbConfig) -> Result<Self> {
        if !(period >= 3.0) {
            return Err(Error::Config(format!("period {period} is below 3 pixels")));
        }
        let sigma = config.sigma_ratio * period;
        let half = half_width(period, config.window_ratio);
        let side = 2 * half + 1;
        let omega = TAU / period;
        let frequency = [omega * orientation.cos(), omega * orientation.sin()];
        let k = half as isize;
        let mut taps = Vec::with_capacity(side * side);
        for dy in -k..=k {
            for dx in -k..=k {
                let (x, y) = (dx as f64, dy as f64);
                let g = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
                taps.push(Complex64::from_polar(
                    g,
                    -(frequency[0] * x + frequency[1] * y),
                ));
            }
        }
        if config.zero_dc {
            let mean = taps.iter().sum::<Complex64>() / taps.len() as f64;
            taps.iter_mut().for_each(|t| *t -= mean);
        }
        let l1: f64 = taps.iter().map(|t| t.norm()).sum();
        taps.iter_mut().for_each(|t| *t /= l1);
        Ok(Self {
            period,
            orientation,
            frequency,
            sigma,
            half,
            taps,
        })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    /// Tuned frequency vector `(ω_col, ω_row)` in radians per pixel.
    pub fn frequency(&self) -> [f64; 2] {
        self.frequency
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn half(&self) -> usize {
        self.half
    }

    pub fn side(&self) -> usize {
        2 * self.half + 1
    }

    /// Row-major `side × side` taps, center at `(half, half)`.
    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }
}

/// All `periods × orientations` kernels, period-major.
pub fn build_bank(config: &GfbConfig) -> Result<Vec<GaborKernel>> {
    config.validate()?;
    let mut bank = Vec::with_capacity(config.periods.len() * config.orientations);
    for &p in &config.periods {
        for j in 0..config.orientations {
            let theta = j as f64 * PI / config.orientations as f64;
            bank.push(GaborKernel::new(p, theta, config)?);
        }
    }
    Ok(bank)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GfbResponse {
    /// Winning magnitude `m(x)`.
    pub magnitude: ScalarField,
    /// Winning phase `ψ(x)` in `(-π, π]`.
    pub phase: ScalarField,
    /// Index into the bank of the winning kernel.
    pub winner: Vec<usize>,
    /// `cos ψ(x)`.
    pub normalized: ScalarField,
}

/// Filter bank precomputed for one image size.
///
/// Kernel spectra are cached, so normalizing many frames of the same size
/// costs one forward and `n_kernels` inverse transforms per frame.
pub struct GaborBank {
    config: GfbConfig,
    kernels: Vec<GaborKernel>,
    width: usize,
    height: usize,
    pad: usize,
    spectra: Vec<Option<Vec<Complex64>>>,
}

struct Winner {
    magnitude: Vec<f64>,
    response: Vec<Complex64>,
    index: Vec<usize>,
}

impl Winner {
    fn from_response(index: usize, response: Vec<Complex64>) -> Self {
        Self {
            magnitude: response.iter().map(|z| z.norm()).collect(),
            index: vec![index; response.len()],
            response,
        }
    }

    /// Larger magnitude wins; ties go to the lower bank index. The rule is
    /// associative and commutative, so any reduction order gives the same
    /// result.
    fn merge(mut self, other: Self) -> Self {
        for i in 0..self.magnitude.len() {
            let (ma, mb) = (self.magnitude[i], other.magnitude[i]);
            if mb > ma || (mb == ma && other.index[i] < self.index[i]) {
                self.magnitude[i] = mb;
                self.response[i] = other.response[i];
                self.index[i] = other.index[i];
            }
        }
        self
    }
}

impl GaborBank {
    pub fn new(config: &GfbConfig, width: usize, height: usize) -> Result<Self> {
        let kernels = build_bank(config)?;
        let pad = config.max_half_width();
        let side = 2 * pad + 1;
        if side > width || side > height {
            return Err(Error::Size(format!(
                "{side}x{side} kernel does not fit a {width}x{height} image"
            )));
        }
        let (rows, cols) = conv::padded_shape(width, height, pad);
        let fft = Fft2d::new(rows, cols);
        let spectra = kernels
            .iter()
            .map(|k| (k.side() > DIRECT_MAX_SIDE).then(|| conv::kernel_spectrum(&fft, k)))
            .collect();
        Ok(Self {
            config: config.clone(),
            kernels,
            width,
            height,
            pad,
            spectra,
        })
    }

    pub fn config(&self) -> &GfbConfig {
        &self.config
    }

    pub fn kernels(&self) -> &[GaborKernel] {
        &self.kernels
    }

    /// Raw complex response of every kernel, in bank order.
    pub fn responses(&self, image: &ScalarField) -> Result<Vec<crate::ComplexField>> {
        let spectrum = self.image_spectrum(image)?;
        (0..self.kernels.len())
            .map(|i| {
                crate::ComplexField::new(
                    self.width,
                    self.height,
                    self.response(i, image, &spectrum),
                )
            })
            .collect()
    }

    fn image_spectrum(&self, image: &ScalarField) -> Result<conv::ImageSpectrum> {
        if image.width() != self.width || image.height() != self.height {
            return Err(Error::Size(format!(
                "bank planned for {}x{}, got {}x{}",
                self.width,
                self.height,
                image.width(),
                image.height()
            )));
        }
        let (rows, cols) = conv::padded_shape(self.width, self.height, self.pad);
        Ok(conv::ImageSpectrum::with_fft(
            image,
            self.pad,
            Fft2d::new(rows, cols),
        ))
    }

    fn response(
        &self,
        i: usize,
        image: &ScalarField,
        spectrum: &conv::ImageSpectrum,
    ) -> Vec<Complex64> {
        match &self.spectra[i] {
            Some(s) => spectrum.convolve(s),
            None => conv::convolve_direct(image, &self.kernels[i]),
        }
    }

    /// Winner-take-all normalization of one frame.
    pub fn normalize(&self, image: &ScalarField) -> Result<GfbResponse> {
        let spectrum = self.image_spectrum(image)?;
        let map = |i: usize| Winner::from_response(i, self.response(i, image, &spectrum));
        #[cfg(feature = "parallel")]
        let best = {
            use rayon::prelude::*;
            (0..self.kernels.len())
                .into_par_iter()
                .map(map)
                .reduce_with(Winner::merge)
        };
        #[cfg(not(feature = "parallel"))]
        let best = (0..self.kernels.len()).map(map).reduce(Winner::merge);
        let best = best.expect("bank is never empty");

        let scale = image.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let floor = DEGENERATE_REL * scale;
        let phase: Vec<f64> = best
            .response
            .iter()
            .zip(&best.magnitude)
            .map(|(z, &m)| {
                if m <= floor {
                    0.0
                } else {
                    wrap_to_pi(-z.arg())
                }
            })
            .collect();
        let normalized = phase.iter().map(|p| p.cos()).collect();
        let (w, h) = (self.width, self.height);
        Ok(GfbResponse {
            magnitude: ScalarField::from_vec_unchecked(w, h, best.magnitude),
            phase: ScalarField::from_vec_unchecked(w, h, phase),
            winner: best.index,
            normalized: ScalarField::from_vec_unchecked(w, h, normalized),
        })
    }
}

/// One-shot normalization; plan a [`GaborBank`] when filtering many frames.
pub fn normalize(image: &ScalarField, config: &GfbConfig) -> Result<GfbResponse> {
    GaborBank::new(config, image.width(), image.height())?.normalize(image)
}

/// Recover low frequencies the bank misses by blending the normalized
/// pattern with a low-passed copy of the original:
/// `out = α·normalized + (1 − α)·lowpass`, with `α = m / max m` and the
/// low-passed original rescaled to `[-1, 1]`.
pub fn low_freq_blend(
    response: &GfbResponse,
    original: &ScalarField,
    lowpass_sigma: f64,
) -> Result<ScalarField> {
    response.normalized.ensure_same_shape(original)?;
    let max_mag = response.magnitude.stats().max;
    if !(max_mag > 0.0) {
        return Err(Error::DegenerateResponse);
    }
    let low = gaussian_blur(original, lowpass_sigma)?;
    let s = low.stats();
    let span = s.max - s.min;
    let low = if span > 0.0 {
        low.map(|v| 2.0 * (v - s.min) / span - 1.0)?
    } else {
        ScalarField::constant(low.width(), low.height(), 0.0)?
    };
    let out = response
        .normalized
        .samples()
        .iter()
        .zip(response.magnitude.samples())
        .zip(low.samples())
        .map(|((&n, &m), &l)| {
            let alpha = m / max_mag;
            alpha * n + (1.0 - alpha) * l
        })
        .collect();
    ScalarField::new(original.width(), original.height(), out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(w: usize, h: usize, period: f64, theta: f64, amp: f64, bg: f64) -> ScalarField {
        let (wx, wy) = (TAU / period * theta.cos(), TAU / period * theta.sin());
        ScalarField::from_fn(w, h, |r, c| {
            bg + amp * (wx * c as f64 + wy * r as f64).cos()
        })
        .unwrap()
    }

    #[test]
    fn bank_sizes() {
        assert_eq!(build_bank(&GfbConfig::default()).unwrap().len(), 40);
        let cfg = GfbConfig {
            periods: vec![20.0, 35.0, 45.0, 55.0],
            orientations: 8,
            ..GfbConfig::default()
        };
        assert_eq!(build_bank(&cfg).unwrap().len(), 32);
    }

    #[test]
    fn kernels_are_dc_free_and_odd() {
        let cfg = GfbConfig {
            periods: vec![9.0],
            orientations: 1,
            ..GfbConfig::default()
        };
        let bank = build_bank(&cfg).unwrap();
        assert_eq!(bank.len(), 1);
        for k in bank
            .iter()
            .chain(&build_bank(&GfbConfig::default()).unwrap())
        {
            assert_eq!(k.side() % 2, 1);
            let dc = k.taps().iter().sum::<Complex64>().norm();
            let l1: f64 = k.taps().iter().map(|t| t.norm()).sum();
            assert!(dc < 1e-10 * l1, "dc {dc} vs l1 {l1}");
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            GfbConfig {
                periods: vec![],
                ..GfbConfig::default()
            },
            GfbConfig {
                periods: vec![2.0],
                ..GfbConfig::default()
            },
            GfbConfig {
                orientations: 0,
                ..GfbConfig::default()
            },
            GfbConfig {
                sigma_ratio: 0.0,
                ..GfbConfig::default()
            },
        ];
        for cfg in bad {
            assert!(matches!(build_bank(&cfg), Err(Error::Config(_))));
        }
    }

    #[test]
    fn constant_image_has_no_response() {
        let img = ScalarField::constant(64, 64, 0.8).unwrap();
        let cfg = GfbConfig {
            periods: vec![7.0, 10.0],
            ..GfbConfig::default()
        };
        let bank = build_bank(&cfg).unwrap();
        for k in &bank {
            let resp = filter_image(&img, k).unwrap();
            assert!(resp.magnitude().stats().max <= 1e-8);
        }
        let out = normalize(&img, &cfg).unwrap();
        assert!(out.magnitude.stats().max <= 1e-8);
        // Degenerate pixels take phase 0, hence normalized 1.
        assert!(out.phase.samples().iter().all(|&p| p == 0.0));
        assert!(out.normalized.samples().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn tuned_cosine_phase_tracks_carrier() {
        let period = 10.0;
        let theta = 0.3 * PI;
        let img = cosine(96, 96, period, theta, 1.0, 0.0);
        let cfg = GfbConfig::default();
        let k = GaborKernel::new(period, theta, &cfg).unwrap();
        let fw = k.frequency();
        for path in [ConvPath::Direct, ConvPath::Fft] {
            let resp = filter_image_with(&img, &k, path).unwrap();
            let psi = resp.angle();
            let m = k.half();
            for r in m..96 - m {
                for c in m..96 - m {
                    let expected = fw[0] * c as f64 + fw[1] * r as f64;
                    let err = wrap_to_pi(-psi.get(r, c) - expected).abs();
                    assert!(err < 1e-3, "{path:?} ({r},{c}) err {err}");
                }
            }
        }
    }

    #[test]
    fn filtering_is_deterministic() {
        let img = ScalarField::from_fn(64, 64, |r, c| ((r * 31 + c * 17) % 13) as f64).unwrap();
        let k = GaborKernel::new(7.0, 1.0, &GfbConfig::default()).unwrap();
        assert_eq!(
            filter_image(&img, &k).unwrap(),
            filter_image(&img, &k).unwrap()
        );
    }

    #[test]
    fn winner_is_the_maximum_and_output_is_bounded() {
        let img = ScalarField::from_fn(80, 80, |r, c| {
            let (x, y) = (c as f64 - 40.0, r as f64 - 40.0);
            0.5 + 0.4 * (0.004 * (x * x + y * y) + 0.1 * x).cos()
        })
        .unwrap();
        let cfg = GfbConfig {
            periods: vec![7.0, 10.0, 15.0],
            orientations: 6,
            ..GfbConfig::default()
        };
        let bank = GaborBank::new(&cfg, 80, 80).unwrap();
        let out = bank.normalize(&img).unwrap();
        let responses = bank.responses(&img).unwrap();
        for i in 0..img.len() {
            let best = out.magnitude.samples()[i];
            assert_eq!(responses[out.winner[i]].samples()[i].norm(), best);
            for r in &responses {
                assert!(best >= r.samples()[i].norm());
            }
        }
        assert!(out
            .normalized
            .samples()
            .iter()
            .all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn in_band_cosine_picks_its_period() {
        let img = cosine(128, 128, 10.0, 0.0, 0.4, 0.5);
        let out = normalize(&img, &GfbConfig::default()).unwrap();
        let bank = build_bank(&GfbConfig::default()).unwrap();
        let m = GfbConfig::default().max_half_width();
        let (mut hits, mut total, mut abs_err) = (0, 0, 0.0);
        for r in m..128 - m {
            for c in m..128 - m {
                let i = r * 128 + c;
                total += 1;
                if bank[out.winner[i]].period() == 10.0 {
                    hits += 1;
                }
                abs_err += (out.normalized.samples()[i] - (TAU * c as f64 / 10.0).cos()).abs();
            }
        }
        assert!(hits as f64 >= 0.95 * total as f64);
        assert!(abs_err / (total as f64) < 0.05);
    }

    #[test]
    fn blend_extremes_and_convexity() {
        let img = cosine(64, 64, 10.0, 0.2, 1.0, 0.3);
        let cfg = GfbConfig {
            periods: vec![7.0, 10.0],
            orientations: 4,
            ..GfbConfig::default()
        };
        let resp = normalize(&img, &cfg).unwrap();

        let mut flat = resp.clone();
        flat.magnitude = ScalarField::constant(64, 64, 2.0).unwrap();
        let out = low_freq_blend(&flat, &img, 10.0).unwrap();
        assert_eq!(out, resp.normalized);

        let mut spike = resp.clone();
        let mut mags = vec![0.0; 64 * 64];
        mags[0] = 1.0;
        spike.magnitude = ScalarField::new(64, 64, mags).unwrap();
        let out = low_freq_blend(&spike, &img, 10.0).unwrap();
        let low = gaussian_blur(&img, 10.0).unwrap();
        let s = low.stats();
        for i in 1..out.len() {
            let expected = 2.0 * (low.samples()[i] - s.min) / (s.max - s.min) - 1.0;
            assert!((out.samples()[i] - expected).abs() < 1e-12);
        }

        let out = low_freq_blend(&resp, &img, 10.0).unwrap();
        for i in 0..out.len() {
            let a = resp.normalized.samples()[i];
            let b = 2.0 * (low.samples()[i] - s.min) / (s.max - s.min) - 1.0;
            let v = out.samples()[i];
            assert!(v >= a.min(b) - 1e-12 && v <= a.max(b) + 1e-12);
        }

        let mut dead = resp;
        dead.magnitude = ScalarField::constant(64, 64, 0.0).unwrap();
        assert!(matches!(
            low_freq_blend(&dead, &img, 10.0),
            Err(Error::DegenerateResponse)
        ));
    }
}
