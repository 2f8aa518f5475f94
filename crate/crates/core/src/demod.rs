//! Phase step from fitted coefficients, phase maps and wrapped-error
//! metrics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ellipse::{EllipseFit2, EllipseFit5};
use crate::field::compensated_sum;
use crate::{wrap_to_pi, Error, Result, ScalarField};

/// Pixels where both arctangent arguments fall below this are masked.
pub const MASK_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Two-term least squares.
    #[serde(rename = "SLEF-LS")]
    SlefLs,
    /// Two-term Leclerc IRLS.
    #[serde(rename = "SLEF-RE")]
    SlefRe,
    /// Five-term conic least squares.
    #[serde(rename = "LEF-5term")]
    Lef5,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::SlefLs, Method::SlefRe, Method::Lef5];

    pub fn name(self) -> &'static str {
        match self {
            Method::SlefLs => "SLEF-LS",
            Method::SlefRe => "SLEF-RE",
            Method::Lef5 => "LEF-5term",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "slef-ls" | "ls" => Ok(Method::SlefLs),
            "slef-re" | "re" | "robust" => Ok(Method::SlefRe),
            "lef-5term" | "lef5" | "lef" => Ok(Method::Lef5),
            _ => Err(Error::Config(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseStepEstimate {
    /// Step in `(0, π)` radians.
    pub delta: f64,
    pub method: Method,
    pub theta1: f64,
    pub theta2: f64,
    pub residual_rms: f64,
    pub iterations: usize,
}

/// `δ = 2·atan(√(θ1/θ2))`.
pub fn step_from_thetas(theta1: f64, theta2: f64) -> Result<f64> {
    if !(theta1 > 0.0 && theta2 > 0.0) || !theta1.is_finite() || !theta2.is_finite() {
        return Err(Error::DegenerateFit { theta1, theta2 });
    }
    let delta = 2.0 * (theta1 / theta2).sqrt().atan();
    if delta > 0.0 && delta < PI {
        Ok(delta)
    } else {
        Err(Error::DegenerateFit { theta1, theta2 })
    }
}

/// Fits accepted by [`step_from_fit`].
pub enum FitRef<'a> {
    Two(&'a EllipseFit2, Method),
    Five(&'a EllipseFit5),
}

pub fn step_from_fit(fit: FitRef<'_>) -> Result<PhaseStepEstimate> {
    let (t1, t2, rms, iterations, method) = match fit {
        FitRef::Two(f, m) => (f.theta[0], f.theta[1], f.residual_rms, f.iterations, m),
        FitRef::Five(f) => (
            f.theta[0],
            f.theta[1],
            f.residual_rms,
            f.iterations,
            Method::Lef5,
        ),
    };
    Ok(PhaseStepEstimate {
        delta: step_from_thetas(t1, t2)?,
        method,
        theta1: t1,
        theta2: t2,
        residual_rms: rms,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseFormula {
    /// `atan2(n1·cos δ − n2, n1·sin δ)`.
    #[serde(rename = "two-step")]
    TwoStep,
    /// Five-term LEF formula with its `−δ/2` term.
    #[serde(rename = "lef-piston")]
    LefPiston,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMapResult {
    /// Wrapped phase in `(-π, π]`; masked pixels hold 0.
    pub phase: ScalarField,
    pub formula: PhaseFormula,
    /// `true` where the pixel is numerically valid.
    pub mask: Vec<bool>,
}

impl PhaseMapResult {
    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < PI {
        Ok(())
    } else {
        Err(Error::Domain(format!("phase step {delta} outside (0, π)")))
    }
}

fn atan2_map(
    num: impl Iterator<Item = f64>,
    den: impl Iterator<Item = f64>,
    offset: f64,
) -> (Vec<f64>, Vec<bool>) {
    num.zip(den)
        .map(|(n, d)| {
            if n.abs() < MASK_EPS && d.abs() < MASK_EPS {
                (0.0, false)
            } else {
                (wrap_to_pi(n.atan2(d) + offset), true)
            }
        })
        .unzip()
}

/// Two-step demodulation of normalized frames.
pub fn phase_two_step(n1: &ScalarField, n2: &ScalarField, delta: f64) -> Result<PhaseMapResult> {
    check_delta(delta)?;
    n1.ensure_same_shape(n2)?;
    let (s, c) = delta.sin_cos();
    let (a, b) = (n1.samples(), n2.samples());
    let (phase, mask) = atan2_map(
        a.iter().zip(b).map(|(&a, &b)| a * c - b),
        a.iter().map(|&a| a * s),
        0.0,
    );
    Ok(PhaseMapResult {
        phase: ScalarField::new(n1.width(), n1.height(), phase)?,
        formula: PhaseFormula::TwoStep,
        mask,
    })
}

/// Baseline LEF demodulation from the sum and difference images:
/// `atan2(sub·√(θ2/θ1), add + θ3/(2θ1)) − δ/2`.
pub fn phase_lef(
    add: &ScalarField,
    sub: &ScalarField,
    fit: &EllipseFit5,
    delta: f64,
) -> Result<PhaseMapResult> {
    check_delta(delta)?;
    add.ensure_same_shape(sub)?;
    let [t1, t2, t3, ..] = fit.theta;
    if t1 == 0.0 || !(t2 / t1 > 0.0) {
        return Err(Error::DegenerateFit {
            theta1: t1,
            theta2: t2,
        });
    }
    let ratio = (t2 / t1).sqrt();
    let shift = t3 / (2.0 * t1);
    let (phase, mask) = atan2_map(
        sub.samples().iter().map(|&s| s * ratio),
        add.samples().iter().map(|&a| a + shift),
        -0.5 * delta,
    );
    Ok(PhaseMapResult {
        phase: ScalarField::new(add.width(), add.height(), phase)?,
        formula: PhaseFormula::LefPiston,
        mask,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub mae: f64,
    /// Wrapped pointwise error; excluded pixels hold 0.
    pub error_map: ScalarField,
    /// Constant removed before measuring (0 when piston removal is off).
    pub piston: f64,
    pub excluded_fraction: f64,
}

/// Serializable summary of an [`ErrorReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mae: f64,
    pub piston: f64,
    pub excluded_fraction: f64,
}

impl ErrorReport {
    pub fn summary(&self) -> ErrorSummary {
        ErrorSummary {
            mae: self.mae,
            piston: self.piston,
            excluded_fraction: self.excluded_fraction,
        }
    }
}

/// Angle of the mean unit phasor.
pub fn circular_mean(angles: impl Iterator<Item = f64> + Clone) -> f64 {
    let s = compensated_sum(angles.clone().map(f64::sin));
    let c = compensated_sum(angles.map(f64::cos));
    if s == 0.0 && c == 0.0 {
        0.0
    } else {
        s.atan2(c)
    }
}

pub fn wrapped_error(
    estimate: &PhaseMapResult,
    truth: &ScalarField,
    remove_piston: bool,
) -> Result<ErrorReport> {
    wrapped_error_region(estimate, truth, remove_piston, None)
}

/// Like [`wrapped_error`], additionally excluding pixels where `region`
/// is `false`.
pub fn wrapped_error_region(
    estimate: &PhaseMapResult,
    truth: &ScalarField,
    remove_piston: bool,
    region: Option<&[bool]>,
) -> Result<ErrorReport> {
    estimate.phase.ensure_same_shape(truth)?;
    if let Some(r) = region {
        if r.len() != truth.len() {
            return Err(Error::Size("region mask does not match the field".into()));
        }
    }
    let used: Vec<bool> = (0..truth.len())
        .map(|i| estimate.mask[i] && region.is_none_or(|r| r[i]))
        .collect();
    let count = used.iter().filter(|&&u| u).count();
    if count == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let raw: Vec<f64> = estimate
        .phase
        .samples()
        .iter()
        .zip(truth.samples())
        .map(|(e, t)| wrap_to_pi(e - t))
        .collect();
    let piston = if remove_piston {
        circular_mean(raw.iter().zip(&used).filter(|(_, &u)| u).map(|(&d, _)| d))
    } else {
        0.0
    };
    let error: Vec<f64> = raw
        .iter()
        .zip(&used)
        .map(|(&d, &u)| if u { wrap_to_pi(d - piston) } else { 0.0 })
        .collect();
    let mae = compensated_sum(
        error
            .iter()
            .zip(&used)
            .filter(|(_, &u)| u)
            .map(|(e, _)| e.abs()),
    ) / count as f64;
    Ok(ErrorReport {
        mae,
        error_map: ScalarField::new(truth.width(), truth.height(), error)?,
        piston,
        excluded_fraction: 1.0 - count as f64 / truth.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ideal_pair(phi: &ScalarField, delta: f64) -> (ScalarField, ScalarField) {
        (
            phi.map(f64::cos).unwrap(),
            phi.map(|p| (p + delta).cos()).unwrap(),
        )
    }

    fn dense_phase() -> ScalarField {
        ScalarField::from_fn(64, 64, |r, c| {
            wrap_to_pi(0.0031 * ((r * 64 + c) as f64) - 6.0)
        })
        .unwrap()
    }

    #[test]
    fn trig_ground_truth() {
        assert!((step_from_thetas(1.0, 1.0).unwrap() - PI / 2.0).abs() < 1e-12);
        assert!((step_from_thetas(1.0 / 3.0, 1.0).unwrap() - PI / 3.0).abs() < 1e-12);
        assert!((step_from_thetas(3.0, 1.0).unwrap() - 2.0 * PI / 3.0).abs() < 1e-12);
        assert!(matches!(
            step_from_thetas(-1.0, 1.0),
            Err(Error::DegenerateFit { .. })
        ));
        assert!(step_from_thetas(1.0, 0.0).is_err());
    }

    #[test]
    fn two_step_single_pixel() {
        let phi0: f64 = 0.7;
        let n1 = ScalarField::constant(1, 1, phi0.cos()).unwrap();
        let n2 = ScalarField::constant(1, 1, (phi0 + PI / 2.0).cos()).unwrap();
        let out = phase_two_step(&n1, &n2, PI / 2.0).unwrap();
        assert!((out.phase.get(0, 0) - phi0).abs() < 1e-12);
    }

    #[test]
    fn two_step_reproduces_truth() {
        let phi = dense_phase();
        let (n1, n2) = ideal_pair(&phi, PI / 3.0);
        let out = phase_two_step(&n1, &n2, PI / 3.0).unwrap();
        let rep = wrapped_error(&out, &phi, false).unwrap();
        assert!(rep.error_map.samples().iter().all(|e| e.abs() < 1e-9));
        assert!(out.phase.samples().iter().all(|&p| p > -PI && p <= PI));
    }

    #[test]
    fn zero_frames_are_fully_masked() {
        let z = ScalarField::constant(4, 4, 0.0).unwrap();
        let out = phase_two_step(&z, &z, 1.0).unwrap();
        assert_eq!(out.valid_count(), 0);
        assert!(wrapped_error(&out, &z, true).is_err());
        assert!(matches!(phase_two_step(&z, &z, 0.0), Err(Error::Domain(_))));
        assert!(phase_two_step(&z, &z, PI).is_err());
    }

    fn exact_fit5(delta: f64) -> EllipseFit5 {
        let ax = 2.0 * (delta / 2.0).cos();
        let ay = 2.0 * (delta / 2.0).sin();
        EllipseFit5 {
            theta: [1.0 / (ax * ax), 1.0 / (ay * ay), 0.0, 0.0, -1.0],
            center: [0.0, 0.0],
            axes: [ax, ay],
            residual_rms: 0.0,
            iterations: 1,
            degenerate: false,
        }
    }

    // Analytic evaluation of the LEF formula on ideal data:
    // add = 2cos(φ+δ/2)cos(δ/2), sub·√(θ2/θ1) = 2sin(φ+δ/2)cos(δ/2), so
    // the arctangent returns φ + δ/2 and the −δ/2 term cancels it exactly.
    #[test]
    fn lef_formula_matches_two_step_on_ideal_data() {
        let phi = dense_phase();
        for delta in [PI / 2.0, PI / 3.0, 0.4, 2.5] {
            let (n1, n2) = ideal_pair(&phi, delta);
            let add = n1.add(&n2).unwrap();
            let sub = n1.sub(&n2).unwrap();
            let lef = phase_lef(&add, &sub, &exact_fit5(delta), delta).unwrap();
            let two = phase_two_step(&n1, &n2, delta).unwrap();
            for i in 0..phi.len() {
                let d = wrap_to_pi(lef.phase.samples()[i] - two.phase.samples()[i]);
                assert!(d.abs() < 1e-9, "δ={delta} pixel {i}: {d}");
            }
            let rep = wrapped_error(&lef, &phi, false).unwrap();
            assert!(rep.mae < 1e-9);
        }
    }

    #[test]
    fn lef_centered_fit_has_no_shift() {
        let fit = exact_fit5(1.0);
        let add = ScalarField::constant(1, 1, 0.5).unwrap();
        let sub = ScalarField::constant(1, 1, 0.0).unwrap();
        let out = phase_lef(&add, &sub, &fit, 1.0).unwrap();
        // atan2(0, 0.5) = 0, leaving only the −δ/2 term.
        assert!((out.phase.get(0, 0) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn error_metric_examples() {
        let phi = dense_phase();
        let est = |offset: f64| PhaseMapResult {
            phase: phi.map(|p| wrap_to_pi(p + offset)).unwrap(),
            formula: PhaseFormula::TwoStep,
            mask: vec![true; phi.len()],
        };
        assert_eq!(wrapped_error(&est(0.0), &phi, false).unwrap().mae, 0.0);
        let rep = wrapped_error(&est(0.3), &phi, true).unwrap();
        assert!(rep.mae < 1e-10);
        assert!((rep.piston - 0.3).abs() < 1e-10);
        let rep = wrapped_error(&est(PI), &phi, false).unwrap();
        assert!((rep.mae - PI).abs() < 1e-12);
        assert!(rep.error_map.samples().iter().all(|&e| e > -PI && e <= PI));
    }

    #[test]
    fn region_mask_excludes_pixels() {
        let phi = dense_phase();
        let mut shifted = phi.samples().to_vec();
        shifted[0] += 1.0;
        let est = PhaseMapResult {
            phase: ScalarField::new(64, 64, shifted).unwrap(),
            formula: PhaseFormula::TwoStep,
            mask: vec![true; phi.len()],
        };
        let mut region = vec![true; phi.len()];
        region[0] = false;
        let rep = wrapped_error_region(&est, &phi, false, Some(&region)).unwrap();
        assert!(rep.mae < 1e-12);
        assert!((rep.excluded_fraction - 1.0 / 4096.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn step_is_scale_invariant(t1 in 1e-3f64..1e3, t2 in 1e-3f64..1e3, c in 1e-3f64..1e3) {
            let a = step_from_thetas(t1, t2).unwrap();
            let b = step_from_thetas(c * t1, c * t2).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn complementary_steps_sum_to_pi(t1 in 1e-3f64..1e3, t2 in 1e-3f64..1e3) {
            let s = step_from_thetas(t1, t2).unwrap() + step_from_thetas(t2, t1).unwrap();
            prop_assert!((s - PI).abs() < 1e-12);
        }

        #[test]
        fn two_step_exact_over_step_grid(delta in 0.1f64..(PI - 0.1)) {
            let phi = dense_phase();
            let (n1, n2) = ideal_pair(&phi, delta);
            let out = phase_two_step(&n1, &n2, delta).unwrap();
            let rep = wrapped_error(&out, &phi, false).unwrap();
            prop_assert!(rep.error_map.samples().iter().all(|e| e.abs() < 1e-9));
        }
    }
}
