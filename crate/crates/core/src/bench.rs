//! End-to-end pipeline, estimator comparison and parameter sweeps.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::demod::{
    phase_lef, phase_two_step, step_from_fit, wrapped_error_region, FitRef, Method, PhaseFormula,
    PhaseMapResult, PhaseStepEstimate,
};
use crate::ellipse::{
    build_cloud_region, fit_ls2, fit_ls5, fit_robust, EllipseFit2, EllipseFit5, LissajousCloud,
    RobustConfig,
};
use crate::gfb::{GaborBank, GfbConfig};
use crate::synth::{generate_pair, InterferogramPair, SuiteEntry};
use crate::{wrap_to_pi, Error, Result, ScalarField};

/// First line of every sweep CSV.
pub const SWEEP_CSV_VERSION: &str = "# phasestep-sweep v1";

/// Turns raw frames into normalized fringe patterns.
pub trait Preprocessor: Sync {
    fn name(&self) -> &'static str;

    fn normalize_pair(
        &self,
        frame1: &ScalarField,
        frame2: &ScalarField,
    ) -> Result<(ScalarField, ScalarField)>;

    /// Border width (pixels) whose output is unreliable.
    fn default_border(&self) -> usize;
}

pub struct GfbPreprocessor {
    pub config: GfbConfig,
}

impl Preprocessor for GfbPreprocessor {
    fn name(&self) -> &'static str {
        "gfb"
    }

    fn normalize_pair(
        &self,
        frame1: &ScalarField,
        frame2: &ScalarField,
    ) -> Result<(ScalarField, ScalarField)> {
        frame1.ensure_same_shape(frame2)?;
        let bank = GaborBank::new(&self.config, frame1.width(), frame1.height())?;
        Ok((
            bank.normalize(frame1)?.normalized,
            bank.normalize(frame2)?.normalized,
        ))
    }

    fn default_border(&self) -> usize {
        self.config.max_half_width()
    }
}

/// Passes frames through unchanged, for inputs that are already
/// normalized.
pub struct Identity;

impl Preprocessor for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn normalize_pair(
        &self,
        frame1: &ScalarField,
        frame2: &ScalarField,
    ) -> Result<(ScalarField, ScalarField)> {
        frame1.ensure_same_shape(frame2)?;
        Ok((frame1.clone(), frame2.clone()))
    }

    fn default_border(&self) -> usize {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub gfb: GfbConfig,
    pub robust: RobustConfig,
    pub methods: Vec<Method>,
    pub stride: usize,
    /// Pixels dropped on every side before fitting and scoring; `None`
    /// uses the preprocessor's default.
    pub border_crop: Option<usize>,
    pub remove_piston: bool,
    pub skip_normalize: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gfb: GfbConfig::default(),
            robust: RobustConfig::default(),
            methods: Method::ALL.to_vec(),
            stride: 1,
            border_crop: None,
            remove_piston: false,
            skip_normalize: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("select at least one method".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        self.robust.validate()?;
        if !self.skip_normalize {
            self.gfb.validate()?;
        }
        Ok(())
    }

    pub fn preprocessor(&self) -> Box<dyn Preprocessor> {
        if self.skip_normalize {
            Box::new(Identity)
        } else {
            Box::new(GfbPreprocessor {
                config: self.gfb.clone(),
            })
        }
    }

    pub fn border(&self, pre: &dyn Preprocessor) -> usize {
        self.border_crop.unwrap_or_else(|| pre.default_border())
    }
}

/// Normalized frames and their Lissajous cloud.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub n1: ScalarField,
    pub n2: ScalarField,
    pub border: usize,
    pub cloud: LissajousCloud,
}

impl Prepared {
    /// `true` inside the border crop.
    pub fn region(&self) -> Vec<bool> {
        interior(self.n1.width(), self.n1.height(), self.border)
    }
}

fn interior(width: usize, height: usize, border: usize) -> Vec<bool> {
    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            out.push(r >= border && c >= border && r + border < height && c + border < width);
        }
    }
    out
}

pub fn prepare(
    frame1: &ScalarField,
    frame2: &ScalarField,
    cfg: &PipelineConfig,
    pre: &dyn Preprocessor,
) -> Result<Prepared> {
    cfg.validate()?;
    let (n1, n2) = pre
        .normalize_pair(frame1, frame2)
        .map_err(|e| e.in_stage(format!("normalize ({})", pre.name())))?;
    let border = cfg.border(pre);
    if 2 * border >= n1.width() || 2 * border >= n1.height() {
        return Err(Error::Config(format!(
            "border crop {border} leaves nothing of a {}x{} frame",
            n1.width(),
            n1.height()
        )));
    }
    let cloud =
        build_cloud_region(&n1, &n2, cfg.stride, border).map_err(|e| e.in_stage("cloud"))?;
    Ok(Prepared {
        n1,
        n2,
        border,
        cloud,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Fit {
    Two(EllipseFit2),
    Five(EllipseFit5),
}

pub fn fit_method(
    cloud: &LissajousCloud,
    method: Method,
    robust: &RobustConfig,
) -> Result<(Fit, PhaseStepEstimate)> {
    let stage = |e: Error| e.in_stage(format!("fit ({method})"));
    let fit = match method {
        Method::SlefLs => Fit::Two(fit_ls2(cloud).map_err(stage)?),
        Method::SlefRe => Fit::Two(fit_robust(cloud, robust).map_err(stage)?),
        Method::Lef5 => Fit::Five(fit_ls5(cloud).map_err(stage)?),
    };
    let fit_ref = match &fit {
        Fit::Two(f) => FitRef::Two(f, method),
        Fit::Five(f) => FitRef::Five(f),
    };
    let estimate = step_from_fit(fit_ref).map_err(|e| e.in_stage(format!("step ({method})")))?;
    Ok((fit, estimate))
}

#[derive(Debug, Clone)]
pub struct Demodulated {
    pub fit: Fit,
    pub estimate: PhaseStepEstimate,
    /// Two-step phase map at the estimated step.
    pub phase: PhaseMapResult,
}

pub fn demodulate(
    prepared: &Prepared,
    method: Method,
    cfg: &PipelineConfig,
) -> Result<Demodulated> {
    let (fit, estimate) = fit_method(&prepared.cloud, method, &cfg.robust)?;
    let phase = phase_two_step(&prepared.n1, &prepared.n2, estimate.delta)
        .map_err(|e| e.in_stage("demodulate"))?;
    Ok(Demodulated {
        fit,
        estimate,
        phase,
    })
}

/// `|wrap(estimate − truth)|`.
pub fn step_error(estimate: f64, truth: f64) -> f64 {
    wrap_to_pi(estimate - truth).abs()
}

/// Phase error of one estimator/formula combination.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseComparison {
    pub variant: String,
    pub method: Method,
    pub formula: PhaseFormula,
    pub delta: f64,
    /// MAE without piston removal.
    pub mae: f64,
    /// MAE after removing the circular-mean piston.
    pub mae_piston_removed: f64,
    pub piston: f64,
    pub excluded_fraction: f64,
    #[serde(skip)]
    pub error_map: ScalarField,
}

/// Phase MAE for the LEF formula and the two-step formula across
/// estimators: LEF-5term with both formulas, SLEF-LS and SLEF-RE with the
/// two-step formula. Error maps are taken with piston removal when
/// `cfg.remove_piston` is set.
pub fn compare_phase(
    pair: &InterferogramPair,
    cfg: &PipelineConfig,
    pre: &dyn Preprocessor,
) -> Result<Vec<PhaseComparison>> {
    let truth = pair
        .truth_phase
        .as_ref()
        .ok_or(Error::MissingTruth("phase"))?;
    let prepared = prepare(&pair.frame1, &pair.frame2, cfg, pre)?;
    let region = prepared.region();
    let score = |variant: String, method, delta, map: &PhaseMapResult| -> Result<PhaseComparison> {
        let raw = wrapped_error_region(map, truth, false, Some(&region))?;
        let removed = wrapped_error_region(map, truth, true, Some(&region))?;
        let shown = if cfg.remove_piston { &removed } else { &raw };
        Ok(PhaseComparison {
            variant,
            method,
            formula: map.formula,
            delta,
            mae: raw.mae,
            mae_piston_removed: removed.mae,
            piston: removed.piston,
            excluded_fraction: shown.excluded_fraction,
            error_map: shown.error_map.clone(),
        })
    };

    let mut out = Vec::with_capacity(4);
    let (fit5, est5) = fit_method(&prepared.cloud, Method::Lef5, &cfg.robust)?;
    let Fit::Five(fit5) = fit5 else {
        unreachable!("LEF-5term always yields a five-term fit")
    };
    let [mx, my] = prepared.cloud.mean();
    let add = prepared.n1.zip_map(&prepared.n2, |a, b| a + b - mx)?;
    let sub = prepared.n1.zip_map(&prepared.n2, |a, b| a - b - my)?;
    let lef = phase_lef(&add, &sub, &fit5, est5.delta)?;
    out.push(score(
        "LEF-5term/lef-piston".into(),
        Method::Lef5,
        est5.delta,
        &lef,
    )?);
    for method in [Method::Lef5, Method::SlefLs, Method::SlefRe] {
        let d = demodulate(&prepared, method, cfg)?;
        out.push(score(
            format!("{method}/two-step"),
            method,
            d.estimate.delta,
            &d.phase,
        )?);
    }
    Ok(out)
}

// ── Sweeps ─────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Degenerate,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub pattern_id: usize,
    pub noise_sigma: f64,
    pub true_delta: f64,
    pub method: Method,
    pub status: RowStatus,
    pub estimated_delta: Option<f64>,
    pub delta_abs_error: Option<f64>,
    pub phase_mae: Option<f64>,
    pub phase_mae_piston_removed: Option<f64>,
    pub iterations: Option<usize>,
    pub message: String,
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl SweepRow {
    fn key(&self) -> (usize, u64, u64, Method) {
        // σ and δ are non-negative, so bit patterns sort numerically.
        (
            self.pattern_id,
            self.noise_sigma.to_bits(),
            self.true_delta.to_bits(),
            self.method,
        )
    }

    fn failed(entry: &SuiteEntry, method: Method, err: &Error, wall: f64) -> Self {
        Self {
            pattern_id: entry.pattern_id,
            noise_sigma: entry.spec.noise.sigma,
            true_delta: entry.spec.step,
            method,
            status: if err.is_degeneracy() {
                RowStatus::Degenerate
            } else {
                RowStatus::Error
            },
            estimated_delta: None,
            delta_abs_error: None,
            phase_mae: None,
            phase_mae_piston_removed: None,
            iterations: None,
            message: err.to_string(),
            wall_time_s: wall,
        }
    }
}

/// One row per configured method for a single suite entry. Failures become
/// rows instead of errors.
pub fn run_entry(
    entry: &SuiteEntry,
    cfg: &PipelineConfig,
    pre: &dyn Preprocessor,
) -> Vec<SweepRow> {
    let start = Instant::now();
    let prepared = generate_pair(&entry.spec).and_then(|pair| {
        let p = prepare(&pair.frame1, &pair.frame2, cfg, pre)?;
        Ok((pair, p))
    });
    let (pair, prepared) = match prepared {
        Ok(v) => v,
        Err(e) => {
            let wall = start.elapsed().as_secs_f64();
            return cfg
                .methods
                .iter()
                .map(|&m| SweepRow::failed(entry, m, &e, wall))
                .collect();
        }
    };
    let shared = start.elapsed().as_secs_f64();
    let truth = pair
        .truth_phase
        .as_ref()
        .expect("generated pairs carry truth");
    let region = prepared.region();
    cfg.methods
        .iter()
        .map(|&method| {
            let t = Instant::now();
            let result = demodulate(&prepared, method, cfg).and_then(|d| {
                let raw = wrapped_error_region(&d.phase, truth, false, Some(&region))?;
                let removed = wrapped_error_region(&d.phase, truth, true, Some(&region))?;
                Ok((d, raw.mae, removed.mae))
            });
            let wall = shared + t.elapsed().as_secs_f64();
            match result {
                Ok((d, mae, mae_removed)) => SweepRow {
                    pattern_id: entry.pattern_id,
                    noise_sigma: entry.spec.noise.sigma,
                    true_delta: entry.spec.step,
                    method,
                    status: RowStatus::Ok,
                    estimated_delta: Some(d.estimate.delta),
                    delta_abs_error: Some(step_error(d.estimate.delta, entry.spec.step)),
                    phase_mae: Some(mae),
                    phase_mae_piston_removed: Some(mae_removed),
                    iterations: Some(d.estimate.iterations),
                    message: String::new(),
                    wall_time_s: wall,
                },
                Err(e) => SweepRow::failed(entry, method, &e, wall),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

/// Run every entry (in parallel when enabled); rows come back sorted by
/// pattern, noise, step and method regardless of scheduling.
pub fn run_sweep(entries: &[SuiteEntry], cfg: &PipelineConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let pre = cfg.preprocessor();
    let pre = pre.as_ref();
    #[cfg(feature = "parallel")]
    let nested: Vec<Vec<SweepRow>> = {
        use rayon::prelude::*;
        entries.par_iter().map(|e| run_entry(e, cfg, pre)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let nested: Vec<Vec<SweepRow>> = entries.iter().map(|e| run_entry(e, cfg, pre)).collect();
    let mut rows: Vec<SweepRow> = nested.into_iter().flatten().collect();
    rows.sort_by_key(SweepRow::key);
    Ok(SweepResult { rows })
}

impl SweepResult {
    /// Deterministic table; wall times go to [`SweepResult::write_timing_csv`].
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{SWEEP_CSV_VERSION}").map_err(|e| Error::io("<csv>", e))?;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(out);
        w.write_record([
            "pattern_id",
            "noise_sigma",
            "true_delta",
            "method",
            "status",
            "estimated_delta",
            "delta_abs_error",
            "phase_mae",
            "phase_mae_piston_removed",
            "iterations",
            "message",
        ])
        .map_err(csv_err)?;
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn write_timing_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "pattern_id",
            "noise_sigma",
            "true_delta",
            "method",
            "wall_time_s",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.pattern_id.to_string(),
                r.noise_sigma.to_string(),
                r.true_delta.to_string(),
                r.method.to_string(),
                format!("{:.6}", r.wall_time_s),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn summary(&self) -> SweepSummary {
        SweepSummary {
            by_noise: aggregate(&self.rows, |r| r.noise_sigma),
            by_step: aggregate(&self.rows, |r| r.true_delta),
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Invariant(format!("csv: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for fewer than two values.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = crate::field::compensated_sum(values.iter().copied()) / n;
        let std = if values.len() > 1 {
            (crate::field::compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / (n - 1.0))
                .sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCell {
    pub method: Method,
    /// Noise σ or true step, depending on the grouping.
    pub key: f64,
    pub count: usize,
    pub failures: usize,
    pub delta_mae: Option<MeanStd>,
    pub phase_mae: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepSummary {
    pub by_noise: Vec<AggregateCell>,
    pub by_step: Vec<AggregateCell>,
}

impl SweepSummary {
    pub fn cell(cells: &[AggregateCell], method: Method, key: f64) -> Option<&AggregateCell> {
        cells
            .iter()
            .find(|c| c.method == method && (c.key - key).abs() < 1e-12)
    }
}

fn aggregate(rows: &[SweepRow], key: impl Fn(&SweepRow) -> f64) -> Vec<AggregateCell> {
    let mut groups: BTreeMap<(Method, u64), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.method, key(r).to_bits()))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((method, bits), rs)| {
            let ok: Vec<&SweepRow> = rs
                .iter()
                .copied()
                .filter(|r| r.status == RowStatus::Ok)
                .collect();
            let deltas: Vec<f64> = ok.iter().filter_map(|r| r.delta_abs_error).collect();
            let phases: Vec<f64> = ok.iter().filter_map(|r| r.phase_mae).collect();
            AggregateCell {
                method,
                key: f64::from_bits(bits),
                count: rs.len(),
                failures: rs.len() - ok.len(),
                delta_mae: MeanStd::of(&deltas),
                phase_mae: MeanStd::of(&phases),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{ModulationSpec, NoiseSpec, PairSpec, PhaseSpec, SuiteSpec};
    use std::f64::consts::{PI, TAU};

    fn ideal_spec(step: f64) -> PairSpec {
        PairSpec {
            width: 64,
            height: 64,
            step,
            // Whole cycles along every row keep the cloud centroid at the
            // ellipse center, so centering introduces no bias.
            phase: PhaseSpec::LinearCarrier {
                frequency: [TAU * 5.0 / 64.0, 0.21],
            },
            modulation: ModulationSpec::ideal(),
            noise: NoiseSpec::none(),
        }
    }

    fn skip_cfg() -> PipelineConfig {
        PipelineConfig {
            skip_normalize: true,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn ideal_pair_recovers_step_without_normalization() {
        let pair = generate_pair(&ideal_spec(PI / 3.0)).unwrap();
        let cfg = skip_cfg();
        let p = prepare(&pair.frame1, &pair.frame2, &cfg, &Identity).unwrap();
        assert_eq!(p.border, 0);
        for m in Method::ALL {
            let d = demodulate(&p, m, &cfg).unwrap();
            assert!(step_error(d.estimate.delta, PI / 3.0) < 1e-6, "{m}");
        }
    }

    #[test]
    fn comparison_on_ideal_pair() {
        let pair = generate_pair(&ideal_spec(PI / 3.0)).unwrap();
        let rows = compare_phase(&pair, &skip_cfg(), &Identity).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert!(
                r.mae_piston_removed < 1e-6,
                "{}: {}",
                r.variant,
                r.mae_piston_removed
            );
        }
        let mut no_truth = pair.clone();
        no_truth.truth_phase = None;
        assert!(matches!(
            compare_phase(&no_truth, &skip_cfg(), &Identity),
            Err(Error::MissingTruth(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = PipelineConfig::default();
        cfg.methods.clear();
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig {
            stride: 0,
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
        let json = r#"{"methods": ["SLEF-RE"], "stride": 2}"#;
        let cfg: PipelineConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.methods, vec![Method::SlefRe]);
        assert_eq!(cfg.robust, RobustConfig::default());
    }

    #[test]
    fn failures_are_isolated_per_entry() {
        let good = SuiteEntry {
            pattern_id: 0,
            noise_index: 0,
            step_index: 0,
            spec: ideal_spec(1.0),
        };
        let mut bad = good.clone();
        bad.pattern_id = 1;
        bad.spec.step = 0.0;
        let res = run_sweep(&[bad, good], &skip_cfg()).unwrap();
        assert_eq!(res.rows.len(), 6);
        assert!(res.rows[..3].iter().all(|r| r.status == RowStatus::Ok));
        assert!(res.rows[3..].iter().all(|r| r.status == RowStatus::Error));
    }

    #[test]
    fn empty_sweep_writes_header_only() {
        let res = run_sweep(&[], &skip_cfg()).unwrap();
        let mut buf = Vec::new();
        res.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], SWEEP_CSV_VERSION);
        assert!(lines[1].starts_with("pattern_id,"));
    }

    #[test]
    fn rows_are_sorted_and_aggregated() {
        let suite = SuiteSpec {
            width: 64,
            height: 64,
            families: 2,
            noise_levels: vec![0.0, 0.1],
            steps: vec![PI / 2.0, PI / 4.0],
            base_seed: 1,
        };
        let res = run_sweep(&suite.entries().unwrap(), &skip_cfg()).unwrap();
        assert_eq!(res.rows.len(), 2 * 2 * 2 * 3);
        let keys: Vec<_> = res.rows.iter().map(SweepRow::key).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let s = res.summary();
        assert_eq!(s.by_noise.len(), 3 * 2);
        assert_eq!(s.by_step.len(), 3 * 2);
        let cell = SweepSummary::cell(&s.by_noise, Method::SlefLs, 0.1).unwrap();
        assert_eq!(cell.count, 4);
    }

    #[test]
    fn mean_std_matches_hand_values() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        assert!((m.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanStd::of(&[7.0]).unwrap().std, 0.0);
        assert!(MeanStd::of(&[]).is_none());
    }
}
