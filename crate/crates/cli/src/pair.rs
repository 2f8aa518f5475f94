//! Pair directories: `frame1.pfm`, `frame2.pfm`, `truth_phase.pfm` and a
//! `pair.json` sidecar holding the generating spec and the true step.

use std::fs;
use std::path::{Path, PathBuf};

use phasestep::io::{self, PngScaling};
use phasestep::synth::{InterferogramPair, PairSpec};
use phasestep::{Error, ScalarField};
use serde::{Deserialize, Serialize};

use crate::commands::CliError;
use crate::PairInput;

pub const FRAME1: &str = "frame1.pfm";
pub const FRAME2: &str = "frame2.pfm";
pub const TRUTH: &str = "truth_phase.pfm";
pub const SIDECAR: &str = "pair.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spec: Option<PairSpec>,
    pub truth_step: Option<f64>,
}

pub fn write_pair(
    dir: &Path,
    pair: &InterferogramPair,
    spec: Option<&PairSpec>,
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    io::save(&pair.frame1, &dir.join(FRAME1))?;
    io::save(&pair.frame2, &dir.join(FRAME2))?;
    if let Some(t) = &pair.truth_phase {
        io::save(t, &dir.join(TRUTH))?;
    }
    let sidecar = Sidecar {
        spec: spec.cloned(),
        truth_step: pair.truth_step,
    };
    write_json(&dir.join(SIDECAR), &sidecar)
}

pub fn read_pair(input: &PairInput) -> Result<InterferogramPair, CliError> {
    let (f1, f2, truth, sidecar) = match (&input.pair, &input.frame1, &input.frame2) {
        (Some(dir), _, _) => {
            let truth = dir.join(TRUTH);
            let side = dir.join(SIDECAR);
            let sidecar: Option<Sidecar> = if side.exists() {
                Some(read_json(&side)?)
            } else {
                None
            };
            (
                dir.join(FRAME1),
                dir.join(FRAME2),
                truth.exists().then_some(truth),
                sidecar,
            )
        }
        (None, Some(a), Some(b)) => (a.clone(), b.clone(), None, None),
        _ => {
            return Err(CliError::Usage(
                "give either --pair <dir> or both --frame1 and --frame2".into(),
            ))
        }
    };
    let truth = input.truth.clone().or(truth);
    let step = input
        .truth_step
        .or_else(|| sidecar.and_then(|s| s.truth_step));
    let frame1 = io::load(&f1)?;
    let frame2 = io::load(&f2)?;
    let truth = truth.map(|p| io::load(&p)).transpose()?;
    Ok(InterferogramPair::new(frame1, frame2)?.with_truth(truth, step)?)
}

/// PFM plus a PNG preview mapping `(-π, π]` onto the 8-bit range.
pub fn save_phase(field: &ScalarField, dir: &Path, stem: &str) -> Result<(), CliError> {
    io::save(field, &dir.join(format!("{stem}.pfm")))?;
    io::save_png(
        field,
        &dir.join(format!("{stem}.png")),
        PngScaling::Range(-std::f64::consts::PI, std::f64::consts::PI),
    )?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", PathBuf::from(path).display()))
}
