use std::fmt;
use std::fs;
use std::path::Path;

use phasestep::bench::{
    compare_phase, demodulate as run_demodulate, fit_method, prepare, run_sweep, step_error, Fit,
    PipelineConfig, Prepared,
};
use phasestep::demod::{wrapped_error_region, ErrorSummary, Method};
use phasestep::gfb::{low_freq_blend, GaborBank};
use phasestep::io;
use phasestep::synth::{generate_pair, PairSpec, SuiteSpec};
use phasestep::{Error, ScalarField};
use serde::Serialize;

use crate::pair::{io_err, read_json, read_pair, save_phase, write_json, write_pair};
use crate::{
    CompareArgs, DemodulateArgs, GenerateArgs, NormalizeArgs, PairCommand, PipelineArgs, SweepArgs,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Core(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Core(e) if e.is_degeneracy() => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn pipeline_config(args: &PipelineArgs) -> Result<PipelineConfig> {
    let mut cfg: PipelineConfig = match &args.config {
        Some(path) => read_json(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = args.stride {
        cfg.stride = s;
    }
    if let Some(b) = args.border_crop {
        cfg.border_crop = Some(b);
    }
    if let Some(k) = args.kappa {
        cfg.robust.kappa = k;
    }
    if let Some(n) = args.iterations {
        cfg.robust.max_iterations = n;
    }
    if !args.methods.is_empty() {
        cfg.methods = args
            .methods
            .iter()
            .map(|m| m.parse::<Method>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if !args.periods.is_empty() {
        cfg.gfb.periods = args.periods.clone();
    }
    if let Some(n) = args.orientations {
        cfg.gfb.orientations = n;
    }
    cfg.skip_normalize |= args.skip_normalize;
    cfg.remove_piston |= args.piston_removal;
    cfg.validate()?;
    Ok(cfg)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn generate(args: GenerateArgs) -> Result<()> {
    if let Some(path) = &args.spec {
        let mut spec: PairSpec = read_json(path)?;
        if let Some(seed) = args.seed {
            spec.noise.seed = seed;
        }
        let pair = generate_pair(&spec)?;
        write_pair(&args.out, &pair, Some(&spec))?;
        println!("wrote pair to {}", args.out.display());
        return Ok(());
    }
    let mut suite: SuiteSpec = match args.suite.as_deref() {
        None | Some("-") => SuiteSpec::default(),
        Some(path) => read_json(Path::new(path))?,
    };
    if let Some(seed) = args.seed {
        suite.base_seed = seed;
    }
    let entries = suite.entries()?;
    ensure_dir(&args.out)?;
    write_json(&args.out.join("suite.json"), &suite)?;
    for entry in &entries {
        let pair = generate_pair(&entry.spec)?;
        write_pair(&args.out.join(entry.name()), &pair, Some(&entry.spec))?;
    }
    println!("wrote {} pairs to {}", entries.len(), args.out.display());
    Ok(())
}

fn sibling(path: &Path, suffix: &str, ext: &str) -> std::path::PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}_{suffix}.{ext}"))
}

pub fn normalize(args: NormalizeArgs) -> Result<()> {
    let cfg = pipeline_config(&args.pipeline)?;
    let image = io::load(&args.input)?;
    let bank = GaborBank::new(&cfg.gfb, image.width(), image.height())?;
    let response = bank.normalize(&image)?;
    io::save(&response.normalized, &args.out)?;
    if let Some(sigma) = args.blend_sigma {
        let blended = low_freq_blend(&response, &image, sigma)?;
        io::save(&blended, &sibling(&args.out, "blend", "pfm"))?;
    }
    if args.pipeline.dump_intermediates {
        io::save(&response.magnitude, &sibling(&args.out, "magnitude", "pfm"))?;
        io::save(&response.phase, &sibling(&args.out, "phase", "pfm"))?;
        let winner = ScalarField::new(
            image.width(),
            image.height(),
            response.winner.iter().map(|&w| w as f64).collect(),
        )?;
        io::save(&winner, &sibling(&args.out, "winner", "pfm"))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct StepRow {
    method: Method,
    delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta_abs_error: Option<f64>,
    fit: Fit,
}

#[derive(Serialize)]
struct StepReport {
    truth_step: Option<f64>,
    cloud_points: usize,
    border_crop: usize,
    estimates: Vec<StepRow>,
}

fn dump_prepared(prepared: &Prepared, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    io::save(&prepared.n1, &dir.join("normalized1.pfm"))?;
    io::save(&prepared.n2, &dir.join("normalized2.pfm"))?;
    let mut text = String::from("x,y\n");
    for (x, y) in prepared.cloud.x().iter().zip(prepared.cloud.y()) {
        text.push_str(&format!("{x},{y}\n"));
    }
    let path = dir.join("cloud.csv");
    fs::write(&path, text).map_err(|e| io_err(&path, e))
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => write_json(path, value),
        None => {
            let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
            println!("{text}");
            Ok(())
        }
    }
}

pub fn estimate_step(args: PairCommand) -> Result<()> {
    let cfg = pipeline_config(&args.pipeline)?;
    let pair = read_pair(&args.input)?;
    let pre = cfg.preprocessor();
    let prepared = prepare(&pair.frame1, &pair.frame2, &cfg, pre.as_ref())?;
    if args.pipeline.dump_intermediates {
        let dir = args.out.as_deref().and_then(Path::parent).map_or_else(
            || Path::new("intermediates").to_path_buf(),
            |p| p.join("intermediates"),
        );
        dump_prepared(&prepared, &dir)?;
    }
    let estimates = cfg
        .methods
        .iter()
        .map(|&m| {
            let (fit, est) = fit_method(&prepared.cloud, m, &cfg.robust)?;
            Ok(StepRow {
                method: m,
                delta: est.delta,
                delta_abs_error: pair.truth_step.map(|t| step_error(est.delta, t)),
                fit,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = StepReport {
        truth_step: pair.truth_step,
        cloud_points: prepared.cloud.len(),
        border_crop: prepared.border,
        estimates,
    };
    emit_json(&report, args.out.as_deref())
}

#[derive(Serialize)]
struct DemodReport {
    method: Method,
    delta: f64,
    truth_step: Option<f64>,
    delta_abs_error: Option<f64>,
    fit: Fit,
    valid_fraction: f64,
    border_crop: usize,
    /// Against the truth phase, without piston removal.
    phase_error: Option<ErrorSummary>,
    phase_error_piston_removed: Option<ErrorSummary>,
}

pub fn demodulate(args: DemodulateArgs) -> Result<()> {
    let mut cfg = pipeline_config(&args.pipeline)?;
    let method: Method = args
        .method
        .parse()
        .map_err(|e: Error| CliError::Usage(e.to_string()))?;
    cfg.methods = vec![method];
    let pair = read_pair(&args.input)?;
    let pre = cfg.preprocessor();
    let prepared = prepare(&pair.frame1, &pair.frame2, &cfg, pre.as_ref())?;
    ensure_dir(&args.out)?;
    if args.pipeline.dump_intermediates {
        dump_prepared(&prepared, &args.out.join("intermediates"))?;
    }
    let d = run_demodulate(&prepared, method, &cfg)?;
    if args.pipeline.dump_intermediates {
        write_json(&args.out.join("intermediates").join("fit.json"), &d.fit)?;
    }
    save_phase(&d.phase.phase, &args.out, "phase")?;

    let (mut raw, mut removed) = (None, None);
    if let Some(truth) = &pair.truth_phase {
        let region = prepared.region();
        let r = wrapped_error_region(&d.phase, truth, false, Some(region.as_slice()))?;
        let p = wrapped_error_region(&d.phase, truth, true, Some(region.as_slice()))?;
        let shown = if cfg.remove_piston { &p } else { &r };
        save_phase(&shown.error_map, &args.out, "error")?;
        raw = Some(r.summary());
        removed = Some(p.summary());
    }
    let report = DemodReport {
        method,
        delta: d.estimate.delta,
        truth_step: pair.truth_step,
        delta_abs_error: pair.truth_step.map(|t| step_error(d.estimate.delta, t)),
        fit: d.fit,
        valid_fraction: d.phase.valid_count() as f64 / d.phase.mask.len() as f64,
        border_crop: prepared.border,
        phase_error: raw,
        phase_error_piston_removed: removed,
    };
    write_json(&args.out.join("report.json"), &report)?;
    println!(
        "{method}: δ = {:.6} rad{}",
        report.delta,
        report
            .delta_abs_error
            .map_or(String::new(), |e| format!(" (|error| {e:.6})"))
    );
    Ok(())
}

pub fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = pipeline_config(&args.pipeline)?;
    let mut suite: SuiteSpec = match &args.suite {
        Some(path) => read_json(path)?,
        None => SuiteSpec::default(),
    };
    if let Some(n) = args.families {
        suite.families = n;
    }
    if let Some(seed) = args.pipeline.seed {
        suite.base_seed = seed;
    }
    let entries = suite.entries()?;
    let result = run_sweep(&entries, &cfg)?;
    ensure_dir(&args.out)?;
    let csv_path = args.out.join("sweep.csv");
    let file = fs::File::create(&csv_path).map_err(|e| io_err(&csv_path, e))?;
    result.write_csv(std::io::BufWriter::new(file))?;
    let timing_path = args.out.join("timing.csv");
    let file = fs::File::create(&timing_path).map_err(|e| io_err(&timing_path, e))?;
    result.write_timing_csv(std::io::BufWriter::new(file))?;
    let summary = result.summary();
    write_json(&args.out.join("summary.json"), &summary)?;

    println!(
        "{:<10} {:>8} {:>10} {:>10} {:>5}",
        "method", "sigma", "mae", "std", "fail"
    );
    for c in &summary.by_noise {
        let (m, s) = c
            .delta_mae
            .map_or((f64::NAN, f64::NAN), |v| (v.mean, v.std));
        println!(
            "{:<10} {:>8.3} {:>10.5} {:>10.5} {:>5}",
            c.method.name(),
            c.key,
            m,
            s,
            c.failures
        );
    }
    println!(
        "{} rows written to {}",
        result.rows.len(),
        csv_path.display()
    );
    Ok(())
}

pub fn compare(args: CompareArgs) -> Result<()> {
    let cfg = pipeline_config(&args.pipeline)?;
    let pair = read_pair(&args.input)?;
    let pre = cfg.preprocessor();
    let rows = compare_phase(&pair, &cfg, pre.as_ref())?;
    ensure_dir(&args.out)?;
    for r in &rows {
        let stem = format!("error_{}", r.variant.replace('/', "_"));
        save_phase(&r.error_map, &args.out, &stem)?;
    }
    write_json(&args.out.join("compare.json"), &rows)?;
    println!(
        "{:<24} {:>10} {:>10} {:>14}",
        "variant", "delta", "mae", "mae (no piston)"
    );
    for r in &rows {
        println!(
            "{:<24} {:>10.5} {:>10.5} {:>14.5}",
            r.variant, r.delta, r.mae, r.mae_piston_removed
        );
    }
    Ok(())
}
