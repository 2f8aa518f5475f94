//! Browser demo: synthesize a pair, normalize it, fit the Lissajous ellipse
//! and render the recovered phase.

use std::f64::consts::{PI, TAU};

use phasestep::bench::{
    demodulate, fit_method, prepare, step_error, Fit, PipelineConfig, Prepared,
};
use phasestep::demod::{wrapped_error_region, Method};
use phasestep::ellipse::RobustConfig;
use phasestep::synth::{generate_pair, pattern_family, InterferogramPair, NoiseSpec, PairSpec};
use phasestep::ScalarField;
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Res<T> = Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Grey RGBA bytes for a field, mapping `[lo, hi]` to black..white.
fn grey(field: &ScalarField, lo: f64, hi: f64) -> Vec<u8> {
    let mut out = Vec::with_capacity(field.len() * 4);
    for &v in field.samples() {
        let g = (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8;
        out.extend_from_slice(&[g, g, g, 255]);
    }
    out
}

/// Diverging blue-white-red map over `[-m, m]`; masked pixels are dark grey.
fn diverging(field: &ScalarField, m: f64, mask: &[bool]) -> Vec<u8> {
    let mut out = Vec::with_capacity(field.len() * 4);
    for (&v, &ok) in field.samples().iter().zip(mask) {
        if !ok {
            out.extend_from_slice(&[40, 40, 40, 255]);
            continue;
        }
        let t = (v / m).clamp(-1.0, 1.0);
        let fade = |a: f64| (255.0 * (1.0 - a)).round() as u8;
        let px = if t >= 0.0 {
            [255, fade(t), fade(t), 255]
        } else {
            [fade(-t), fade(-t), 255, 255]
        };
        out.extend_from_slice(&px);
    }
    out
}

fn range(field: &ScalarField) -> (f64, f64) {
    let s = field.stats();
    if s.max > s.min {
        (s.min, s.max)
    } else {
        (s.min - 1.0, s.max + 1.0)
    }
}

#[derive(Serialize)]
struct FitView {
    method: Method,
    delta: f64,
    delta_abs_error: f64,
    fit: Fit,
}

#[derive(Serialize)]
struct PhaseView {
    method: Method,
    delta: f64,
    delta_abs_error: f64,
    mae: f64,
    mae_piston_removed: f64,
}

struct PhaseMaps {
    phase: ScalarField,
    error: ScalarField,
    mask: Vec<bool>,
}

#[wasm_bindgen]
pub struct Demo {
    pair: InterferogramPair,
    cfg: PipelineConfig,
    prepared: Option<Prepared>,
    maps: Option<PhaseMaps>,
}

#[wasm_bindgen]
impl Demo {
    /// Square pair of side `size` from pattern family `pattern`.
    #[wasm_bindgen(constructor)]
    pub fn new(size: usize, pattern: usize, noise: f64, step: f64, seed: u64) -> Res<Demo> {
        let (phase, modulation) = pattern_family(pattern, size, size);
        let spec = PairSpec {
            width: size,
            height: size,
            step,
            phase,
            modulation,
            noise: NoiseSpec { sigma: noise, seed },
        };
        let pair = generate_pair(&spec).map_err(err)?;
        Ok(Demo {
            pair,
            cfg: PipelineConfig::default(),
            prepared: None,
            maps: None,
        })
    }

    pub fn size(&self) -> usize {
        self.pair.frame1.width()
    }

    /// Normalize both frames with a bank of the given periods, or use them
    /// as they are when `skip` is set. Returns the border excluded from fits.
    pub fn normalize(&mut self, periods: Vec<f64>, orientations: usize, skip: bool) -> Res<usize> {
        let mut cfg = PipelineConfig {
            skip_normalize: skip,
            ..PipelineConfig::default()
        };
        if !periods.is_empty() {
            cfg.gfb.periods = periods;
        }
        cfg.gfb.orientations = orientations;
        let max_border = self.size() / 4;
        cfg.border_crop = Some(cfg.border(cfg.preprocessor().as_ref()).min(max_border));
        cfg.validate().map_err(err)?;
        let pre = cfg.preprocessor();
        let prepared =
            prepare(&self.pair.frame1, &self.pair.frame2, &cfg, pre.as_ref()).map_err(err)?;
        let border = prepared.border;
        self.cfg = cfg;
        self.prepared = Some(prepared);
        self.maps = None;
        Ok(border)
    }

    /// RGBA bytes of `frame1`, `frame2`, `normalized1`, `normalized2`,
    /// `truth`, `phase` or `error`.
    pub fn image(&self, which: &str) -> Res<Vec<u8>> {
        let p = self.prepared.as_ref();
        let need = || p.ok_or_else(|| "normalize first".to_string());
        let maps = || {
            self.maps
                .as_ref()
                .ok_or_else(|| "demodulate first".to_string())
        };
        Ok(match which {
            "frame1" | "frame2" => {
                let f = if which == "frame1" {
                    &self.pair.frame1
                } else {
                    &self.pair.frame2
                };
                let (lo, hi) = range(f);
                grey(f, lo, hi)
            }
            "normalized1" => grey(&need()?.n1, -1.0, 1.0),
            "normalized2" => grey(&need()?.n2, -1.0, 1.0),
            "truth" => {
                let t = self.pair.truth_phase.as_ref().ok_or("no truth phase")?;
                grey(t, -PI, PI)
            }
            "phase" => grey(&maps()?.phase, -PI, PI),
            "error" => {
                let m = maps()?;
                diverging(&m.error, 0.5, &m.mask)
            }
            other => return Err(format!("unknown image {other:?}")),
        })
    }

    /// Up to `max_points` cloud points, interleaved `x, y`.
    pub fn cloud(&self, max_points: usize) -> Res<Vec<f32>> {
        let c = &self.prepared.as_ref().ok_or("normalize first")?.cloud;
        let step = c.len().div_ceil(max_points.max(1)).max(1);
        Ok(c.x()
            .iter()
            .zip(c.y())
            .step_by(step)
            .flat_map(|(&x, &y)| [x as f32, y as f32])
            .collect())
    }

    /// Fits every estimator; JSON array of `{method, delta, delta_abs_error, fit}`.
    pub fn fit(&self, kappa: f64, iterations: usize) -> Res<String> {
        let p = self.prepared.as_ref().ok_or("normalize first")?;
        let robust = RobustConfig {
            kappa,
            max_iterations: iterations,
            ..self.cfg.robust
        };
        let truth = self.pair.truth_step.unwrap_or(f64::NAN);
        let views = Method::ALL
            .iter()
            .map(|&m| {
                let (fit, est) = fit_method(&p.cloud, m, &robust).map_err(err)?;
                Ok(FitView {
                    method: m,
                    delta: est.delta,
                    delta_abs_error: step_error(est.delta, truth),
                    fit,
                })
            })
            .collect::<Res<Vec<_>>>()?;
        serde_json::to_string(&views).map_err(err)
    }

    /// `n` points on the fitted ellipse in centered cloud coordinates.
    pub fn ellipse(&self, method: &str, kappa: f64, iterations: usize, n: usize) -> Res<Vec<f32>> {
        let p = self.prepared.as_ref().ok_or("normalize first")?;
        let method: Method = method.parse().map_err(err)?;
        let robust = RobustConfig {
            kappa,
            max_iterations: iterations,
            ..self.cfg.robust
        };
        let (fit, _) = fit_method(&p.cloud, method, &robust).map_err(err)?;
        let ([cx, cy], [a, b]) = match fit {
            Fit::Two(f) => (
                [0.0, 0.0],
                [1.0 / f.theta1().sqrt(), 1.0 / f.theta2().sqrt()],
            ),
            Fit::Five(f) => {
                let m = p.cloud.mean();
                ([f.center[0] - m[0], f.center[1] - m[1]], f.axes)
            }
        };
        Ok((0..=n)
            .flat_map(|i| {
                let t = TAU * i as f64 / n.max(1) as f64;
                [(cx + a * t.cos()) as f32, (cy + b * t.sin()) as f32]
            })
            .collect())
    }

    /// Recovers the phase map with one estimator; JSON summary with the
    /// step and the phase MAE with and without piston removal.
    pub fn demodulate(&mut self, method: &str, kappa: f64, iterations: usize) -> Res<String> {
        let p = self.prepared.as_ref().ok_or("normalize first")?;
        let method: Method = method.parse().map_err(err)?;
        let mut cfg = self.cfg.clone();
        cfg.robust.kappa = kappa;
        cfg.robust.max_iterations = iterations;
        let d = demodulate(p, method, &cfg).map_err(err)?;
        let truth = self.pair.truth_phase.as_ref().ok_or("no truth phase")?;
        let region = p.region();
        let raw =
            wrapped_error_region(&d.phase, truth, false, Some(region.as_slice())).map_err(err)?;
        let removed =
            wrapped_error_region(&d.phase, truth, true, Some(region.as_slice())).map_err(err)?;
        let mask = d
            .phase
            .mask
            .iter()
            .zip(&region)
            .map(|(&a, &b)| a && b)
            .collect();
        let view = PhaseView {
            method,
            delta: d.estimate.delta,
            delta_abs_error: step_error(d.estimate.delta, self.pair.truth_step.unwrap_or(f64::NAN)),
            mae: raw.mae,
            mae_piston_removed: removed.mae,
        };
        self.maps = Some(PhaseMaps {
            phase: d.phase.phase,
            error: removed.error_map,
            mask,
        });
        serde_json::to_string(&view).map_err(err)
    }
}
