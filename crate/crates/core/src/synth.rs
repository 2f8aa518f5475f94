//! Seeded synthetic interferogram pairs with ground truth.
//!
//! Frame `k ∈ {0, 1}` is `a_k(p) + b_k(p)·cos(φ(p) + δ_k) + η_k(p)` with
//! `δ_0 = 0` and `δ_1 = step`. Background `a` and amplitude `b` are
//! Gaussian envelopes over a constant base; between frames each envelope
//! is scaled by its drift factor and its center moves by `shift`.
//!
//! Noise is zero-mean Gaussian drawn from ChaCha8 seeded with
//! `NoiseSpec::seed`, using stream 0 for the first frame and stream 1 for
//! the second, so output is reproducible bit for bit on every platform.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, ScalarField};

pub const MIN_SIZE: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// `[col, row]` in pixels.
    pub center: [f64; 2],
    /// Radians.
    pub amplitude: f64,
    /// Standard deviation in pixels.
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PhaseSpec {
    /// `curvature·‖p − center‖²`: closed circular fringes.
    RadialQuadratic { center: [f64; 2], curvature: f64 },
    /// Sum of Gaussian bumps.
    GaussianPeaks { peaks: Vec<Peak> },
    /// `frequency · p` in radians per pixel along (col, row).
    LinearCarrier { frequency: [f64; 2] },
    /// Sum of several phase functions.
    Composite { terms: Vec<PhaseSpec> },
}

impl PhaseSpec {
    pub fn flat() -> Self {
        PhaseSpec::LinearCarrier {
            frequency: [0.0, 0.0],
        }
    }

    /// φ at column `x`, row `y`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            PhaseSpec::RadialQuadratic { center, curvature } => {
                let (dx, dy) = (x - center[0], y - center[1]);
                curvature * (dx * dx + dy * dy)
            }
            PhaseSpec::GaussianPeaks { peaks } => peaks
                .iter()
                .map(|p| {
                    let (dx, dy) = (x - p.center[0], y - p.center[1]);
                    p.amplitude * (-(dx * dx + dy * dy) / (2.0 * p.width * p.width)).exp()
                })
                .sum(),
            PhaseSpec::LinearCarrier { frequency } => frequency[0] * x + frequency[1] * y,
            PhaseSpec::Composite { terms } => terms.iter().map(|t| t.eval(x, y)).sum(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("phase spec: {what}")));
        match self {
            PhaseSpec::RadialQuadratic { center, curvature } => {
                if !curvature.is_finite() || center.iter().any(|c| !c.is_finite()) {
                    return bad("non-finite radial parameters");
                }
            }
            PhaseSpec::GaussianPeaks { peaks } => {
                if peaks
                    .iter()
                    .any(|p| !(p.width > 0.0) || !p.amplitude.is_finite())
                {
                    return bad("peak widths must be positive");
                }
            }
            PhaseSpec::LinearCarrier { frequency } => {
                if frequency.iter().any(|f| !f.is_finite()) {
                    return bad("non-finite carrier");
                }
            }
            PhaseSpec::Composite { terms } => {
                for t in terms {
                    t.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn render(&self, width: usize, height: usize) -> Result<ScalarField> {
        ScalarField::from_fn(width, height, |r, c| self.eval(c as f64, r as f64))
    }
}

/// `base + peak·exp(−‖p − center‖² / 2·width²)`, scaled by `drift` in the
/// second frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub base: f64,
    pub peak: f64,
    /// `[col, row]` in pixels.
    pub center: [f64; 2],
    pub width: f64,
    pub drift: f64,
}

impl Envelope {
    pub fn constant(value: f64) -> Self {
        Self {
            base: value,
            peak: 0.0,
            center: [0.0, 0.0],
            width: 1.0,
            drift: 1.0,
        }
    }

    fn eval(&self, x: f64, y: f64, frame: usize, shift: [f64; 2]) -> f64 {
        let f = frame as f64;
        let (dx, dy) = (
            x - self.center[0] - f * shift[0],
            y - self.center[1] - f * shift[1],
        );
        let g = (-(dx * dx + dy * dy) / (2.0 * self.width * self.width)).exp();
        self.drift.powi(frame as i32) * (self.base + self.peak * g)
    }

    fn validate(&self, name: &str, positive: bool) -> Result<()> {
        let ok = self.base >= 0.0
            && self.peak >= 0.0
            && self.width > 0.0
            && self.drift > 0.0
            && (!positive || self.base > 0.0)
            && self.center.iter().all(|c| c.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{name} envelope must have base ≥ 0{}, peak ≥ 0, width > 0, drift > 0",
                if positive { " (strictly > 0)" } else { "" }
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulationSpec {
    /// Background `a(p)`.
    pub background: Envelope,
    /// Fringe amplitude `b(p)`.
    pub amplitude: Envelope,
    /// Envelope center displacement of the second frame, `[col, row]`.
    #[serde(default)]
    pub shift: [f64; 2],
}

impl ModulationSpec {
    /// `a ≡ 0`, `b ≡ 1`.
    pub fn ideal() -> Self {
        Self {
            background: Envelope::constant(0.0),
            amplitude: Envelope::constant(1.0),
            shift: [0.0, 0.0],
        }
    }

    pub fn background_at(&self, x: f64, y: f64, frame: usize) -> f64 {
        self.background.eval(x, y, frame, self.shift)
    }

    pub fn amplitude_at(&self, x: f64, y: f64, frame: usize) -> f64 {
        self.amplitude.eval(x, y, frame, self.shift)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation relative to unit fringe amplitude.
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            sigma: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub width: usize,
    pub height: usize,
    /// Phase step of the second frame, radians in `(0, π)`.
    pub step: f64,
    pub phase: PhaseSpec,
    #[serde(default = "ModulationSpec::ideal")]
    pub modulation: ModulationSpec,
    #[serde(default = "NoiseSpec::none")]
    pub noise: NoiseSpec,
}

impl PairSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step < PI) {
            return Err(Error::Domain(format!(
                "phase step {} outside (0, π); the ellipse degenerates at 0 and π",
                self.step
            )));
        }
        if self.width < MIN_SIZE || self.height < MIN_SIZE {
            return Err(Error::Size(format!(
                "synthetic frames must be at least {MIN_SIZE}x{MIN_SIZE}, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.noise.sigma >= 0.0) || !self.noise.sigma.is_finite() {
            return Err(Error::Config(format!(
                "noise sigma {} < 0",
                self.noise.sigma
            )));
        }
        self.phase.validate()?;
        self.modulation.background.validate("background", false)?;
        self.modulation.amplitude.validate("amplitude", true)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferogramPair {
    pub frame1: ScalarField,
    pub frame2: ScalarField,
    /// Unwrapped ground-truth phase, radians.
    pub truth_phase: Option<ScalarField>,
    pub truth_step: Option<f64>,
}

impl InterferogramPair {
    pub fn new(frame1: ScalarField, frame2: ScalarField) -> Result<Self> {
        frame1.ensure_same_shape(&frame2)?;
        Ok(Self {
            frame1,
            frame2,
            truth_phase: None,
            truth_step: None,
        })
    }

    pub fn with_truth(mut self, phase: Option<ScalarField>, step: Option<f64>) -> Result<Self> {
        if let Some(p) = &phase {
            self.frame1.ensure_same_shape(p)?;
        }
        if let Some(s) = step {
            if !(s > 0.0 && s < PI) {
                return Err(Error::Domain(format!("truth step {s} outside (0, π)")));
            }
        }
        self.truth_phase = phase;
        self.truth_step = step;
        Ok(self)
    }
}

/// Noise-free ingredients of a pair, for checking the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct PairComponents {
    pub phase: ScalarField,
    pub background: [ScalarField; 2],
    pub amplitude: [ScalarField; 2],
}

pub fn components(spec: &PairSpec) -> Result<PairComponents> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let m = &spec.modulation;
    let field =
        |f: &dyn Fn(f64, f64) -> f64| ScalarField::from_fn(w, h, |r, c| f(c as f64, r as f64));
    Ok(PairComponents {
        phase: spec.phase.render(w, h)?,
        background: [
            field(&|x, y| m.background_at(x, y, 0))?,
            field(&|x, y| m.background_at(x, y, 1))?,
        ],
        amplitude: [
            field(&|x, y| m.amplitude_at(x, y, 0))?,
            field(&|x, y| m.amplitude_at(x, y, 1))?,
        ],
    })
}

pub fn generate_pair(spec: &PairSpec) -> Result<InterferogramPair> {
    let parts = components(spec)?;
    let mut frames = Vec::with_capacity(2);
    for k in 0..2 {
        let delta = if k == 0 { 0.0 } else { spec.step };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.noise.seed);
        rng.set_stream(k as u64);
        let samples = parts
            .phase
            .samples()
            .iter()
            .zip(parts.background[k].samples())
            .zip(parts.amplitude[k].samples())
            .map(|((&phi, &a), &b)| {
                let noise = if spec.noise.sigma > 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    spec.noise.sigma * z
                } else {
                    0.0
                };
                a + b * (phi + delta).cos() + noise
            })
            .collect();
        frames.push(ScalarField::new(spec.width, spec.height, samples)?);
    }
    let frame2 = frames.pop().unwrap();
    let frame1 = frames.pop().unwrap();
    InterferogramPair::new(frame1, frame2)?.with_truth(Some(parts.phase), Some(spec.step))
}

// ── Benchmark suite ────────────────────────────────────────────────────────

/// The five steps used by the reference experiments.
pub fn reference_steps() -> Vec<f64> {
    vec![PI / 10.0, PI / 6.0, PI / 4.0, PI / 3.0, PI / 2.0]
}

pub fn reference_noise_levels() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSpec {
    pub width: usize,
    pub height: usize,
    /// Number of pattern families; ids `0..families`.
    pub families: usize,
    pub noise_levels: Vec<f64>,
    pub steps: Vec<f64>,
    pub base_seed: u64,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            families: 10,
            noise_levels: reference_noise_levels(),
            steps: reference_steps(),
            base_seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub pattern_id: usize,
    pub noise_index: usize,
    pub step_index: usize,
    pub spec: PairSpec,
}

impl SuiteEntry {
    /// Stable directory-friendly name.
    pub fn name(&self) -> String {
        format!(
            "p{:02}_n{}_s{}",
            self.pattern_id, self.noise_index, self.step_index
        )
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SuiteSpec {
    /// Full factorial design: families × noise levels × steps.
    pub fn entries(&self) -> Result<Vec<SuiteEntry>> {
        let mut out =
            Vec::with_capacity(self.families * self.noise_levels.len() * self.steps.len());
        for pattern_id in 0..self.families {
            let (phase, modulation) = pattern_family(pattern_id, self.width, self.height);
            for (noise_index, &sigma) in self.noise_levels.iter().enumerate() {
                for (step_index, &step) in self.steps.iter().enumerate() {
                    let key = ((pattern_id as u64) << 32)
                        | ((noise_index as u64) << 16)
                        | step_index as u64;
                    let seed = splitmix64(self.base_seed ^ splitmix64(key));
                    let spec = PairSpec {
                        width: self.width,
                        height: self.height,
                        step,
                        phase: phase.clone(),
                        modulation: modulation.clone(),
                        noise: NoiseSpec { sigma, seed },
                    };
                    spec.validate()?;
                    out.push(SuiteEntry {
                        pattern_id,
                        noise_index,
                        step_index,
                        spec,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// The reference factorial suite (10 families × 5 noise levels × 5 steps).
pub fn reference_suite(width: usize, height: usize) -> Result<Vec<SuiteEntry>> {
    SuiteSpec {
        width,
        height,
        ..SuiteSpec::default()
    }
    .entries()
}

/// Deterministic phase and modulation for pattern family `id`.
///
/// Families cycle through three shapes: centered-ish closed circular
/// fringes, circular fringes on a tilt carrier, and a landscape of Gaussian
/// peaks. Parameters are drawn from a per-family stream and scaled to the
/// frame so that the densest fringes stay inside the default filter bank
/// (periods 7 to 25 px) while the neighbourhood of every extremum keeps
/// the low-frequency region that makes normalization imperfect.
pub fn pattern_family(id: usize, width: usize, height: usize) -> (PhaseSpec, ModulationSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(0xfa31_u64 ^ id as u64));
    let (w, h) = (width as f64, height as f64);
    let s = w.min(h);
    let mid = [w / 2.0, h / 2.0];
    let jitter = |rng: &mut ChaCha8Rng, frac: f64| -> [f64; 2] {
        [
            mid[0] + rng.random_range(-frac..frac) * s,
            mid[1] + rng.random_range(-frac..frac) * s,
        ]
    };

    // Radial terms reach `f_ref` rad/px at `0.45·s` from their center,
    // the typical extent of the scored interior.
    let r_ref = 0.45 * s;
    let phase = match id % 3 {
        0 => {
            let center = jitter(&mut rng, 0.1);
            let f_ref = rng.random_range(0.7..0.9);
            PhaseSpec::RadialQuadratic {
                center,
                curvature: f_ref / (2.0 * r_ref),
            }
        }
        1 => {
            let center = jitter(&mut rng, 0.15);
            let f_ref = rng.random_range(0.55..0.75);
            let tilt = rng.random_range(0.15..0.3);
            let angle = rng.random_range(0.0..TAU);
            PhaseSpec::Composite {
                terms: vec![
                    PhaseSpec::RadialQuadratic {
                        center,
                        curvature: f_ref / (2.0 * r_ref),
                    },
                    PhaseSpec::LinearCarrier {
                        frequency: [tilt * angle.cos(), tilt * angle.sin()],
                    },
                ],
            }
        }
        _ => {
            let n = rng.random_range(3..=4);
            let peaks = (0..n)
                .map(|_| {
                    let width = rng.random_range(0.1..0.16) * s;
                    // Peak slope A/(w·√e) kept within the bank's band.
                    let slope = rng.random_range(0.3..0.5);
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    Peak {
                        center: jitter(&mut rng, 0.25),
                        amplitude: sign * slope * width * std::f64::consts::E.sqrt(),
                        width,
                    }
                })
                .collect();
            let tilt = rng.random_range(0.35..0.5);
            let angle = rng.random_range(0.0..TAU);
            PhaseSpec::Composite {
                terms: vec![
                    PhaseSpec::GaussianPeaks { peaks },
                    PhaseSpec::LinearCarrier {
                        frequency: [tilt * angle.cos(), tilt * angle.sin()],
                    },
                ],
            }
        }
    };

    let background = Envelope {
        base: rng.random_range(0.5..1.5),
        peak: rng.random_range(0.5..1.5),
        center: jitter(&mut rng, 0.3),
        width: rng.random_range(0.3..0.6) * s,
        drift: rng.random_range(0.8..1.2),
    };
    let amplitude = Envelope {
        base: rng.random_range(0.7..0.9),
        peak: rng.random_range(0.2..0.4),
        center: jitter(&mut rng, 0.3),
        width: rng.random_range(0.3..0.5) * s,
        drift: rng.random_range(0.85..1.15),
    };
    let shift = [
        rng.random_range(-0.05..0.05) * s,
        rng.random_range(-0.05..0.05) * s,
    ];
    (
        phase,
        ModulationSpec {
            background,
            amplitude,
            shift,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_spec(step: f64) -> PairSpec {
        PairSpec {
            width: 16,
            height: 16,
            step,
            phase: PhaseSpec::flat(),
            modulation: ModulationSpec::ideal(),
            noise: NoiseSpec::none(),
        }
    }

    #[test]
    fn degenerate_steps_are_rejected() {
        for step in [0.0, PI, -0.1, 4.0] {
            assert!(matches!(
                generate_pair(&flat_spec(step)),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn too_small_is_rejected() {
        let mut s = flat_spec(1.0);
        s.width = 15;
        assert!(matches!(generate_pair(&s), Err(Error::Size(_))));
    }

    #[test]
    fn quadrature_of_flat_phase() {
        let pair = generate_pair(&flat_spec(PI / 2.0)).unwrap();
        assert!(pair.frame1.samples().iter().all(|&v| v == 1.0));
        assert!(pair.frame2.samples().iter().all(|&v| v.abs() < 1e-15));
        assert_eq!(pair.truth_step, Some(PI / 2.0));
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let (phase, modulation) = pattern_family(0, 64, 64);
        let spec = PairSpec {
            width: 64,
            height: 64,
            step: 1.0,
            phase,
            modulation,
            noise: NoiseSpec {
                sigma: 0.5,
                seed: 42,
            },
        };
        let a = generate_pair(&spec).unwrap();
        let b = generate_pair(&spec).unwrap();
        assert_eq!(a, b);
        let mut other = spec.clone();
        other.noise.seed = 43;
        assert_ne!(generate_pair(&other).unwrap().frame1, a.frame1);
    }

    #[test]
    fn ideal_frames_are_bounded() {
        let spec = PairSpec {
            width: 40,
            height: 30,
            step: 0.7,
            phase: PhaseSpec::RadialQuadratic {
                center: [20.0, 15.0],
                curvature: 0.02,
            },
            modulation: ModulationSpec::ideal(),
            noise: NoiseSpec::none(),
        };
        let pair = generate_pair(&spec).unwrap();
        for f in [&pair.frame1, &pair.frame2] {
            assert!(f.samples().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn radial_phase_has_circular_level_sets() {
        let p = PhaseSpec::RadialQuadratic {
            center: [10.0, 20.0],
            curvature: 0.01,
        };
        for t in 0..8 {
            let a = t as f64 * 0.7;
            assert!((p.eval(10.0 + 5.0 * a.cos(), 20.0 + 5.0 * a.sin()) - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_is_zero_mean() {
        let (phase, modulation) = pattern_family(4, 128, 128);
        let sigma = 0.75;
        let spec = PairSpec {
            width: 128,
            height: 128,
            step: 0.9,
            phase,
            modulation,
            noise: NoiseSpec { sigma, seed: 9 },
        };
        let pair = generate_pair(&spec).unwrap();
        let parts = components(&spec).unwrap();
        for (k, frame) in [&pair.frame1, &pair.frame2].into_iter().enumerate() {
            let delta = if k == 0 { 0.0 } else { spec.step };
            let n = frame.len() as f64;
            let resid: f64 = (0..frame.len())
                .map(|i| {
                    frame.samples()[i]
                        - parts.background[k].samples()[i]
                        - parts.amplitude[k].samples()[i] * (parts.phase.samples()[i] + delta).cos()
                })
                .sum::<f64>()
                / n;
            assert!(resid.abs() <= 4.0 * sigma / n.sqrt(), "frame {k}: {resid}");
        }
    }

    #[test]
    fn modulation_is_positive_and_drifts() {
        for id in 0..10 {
            let (_, m) = pattern_family(id, 256, 256);
            for (x, y) in [(0.0, 0.0), (128.0, 128.0), (255.0, 3.0)] {
                for k in 0..2 {
                    assert!(m.background_at(x, y, k) >= 0.0);
                    assert!(m.amplitude_at(x, y, k) > 0.0);
                }
            }
            assert_ne!(
                m.background_at(10.0, 10.0, 0),
                m.background_at(10.0, 10.0, 1)
            );
        }
    }

    #[test]
    fn suite_counts_and_determinism() {
        let suite = reference_suite(256, 256).unwrap();
        assert_eq!(suite.len(), 250);
        let seeds: std::collections::HashSet<u64> =
            suite.iter().map(|e| e.spec.noise.seed).collect();
        assert_eq!(seeds.len(), 250);
        assert_eq!(suite, reference_suite(256, 256).unwrap());

        let small = SuiteSpec {
            families: 3,
            noise_levels: vec![0.5],
            steps: vec![PI / 3.0],
            ..SuiteSpec::default()
        };
        assert_eq!(small.entries().unwrap().len(), 3);
    }

    #[test]
    fn spec_json_round_trips() {
        let (phase, modulation) = pattern_family(2, 64, 64);
        let spec = PairSpec {
            width: 64,
            height: 64,
            step: 1.2,
            phase,
            modulation,
            noise: NoiseSpec {
                sigma: 0.1,
                seed: 1,
            },
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert!(json.contains("\"kind\":\"composite\""));
        let back: PairSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
