use std::fmt::Write as _;
use std::thread;

use serde::{Deserialize, Serialize};

use super::ssnr::{ssnr, SSNR_MAX_DB, SSNR_MIN_DB, SSNR_SEGMENT};
use super::stoi::stoi;
use crate::dsp::{load_wav, mix_at_snr};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::train::{enhance, Manifest, Split, TEST_SNRS};

/// Something that maps a noisy clip to an estimate of the clean one.
pub enum System {
    /// The unprocessed mixture.
    Passthrough,
    Model {
        name: String,
        model: Model,
    },
}

impl System {
    pub fn name(&self) -> &str {
        match self {
            System::Passthrough => "noisy",
            System::Model { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub system: String,
    pub snr_db: f64,
    pub n_clips: usize,
    pub ssnr_mean: f64,
    pub stoi_mean: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::Metric(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Metric(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<std::result::Result<Vec<EvalRow>, _>>()
            .map_err(|e| Error::Metric(format!("bad report csv: {e}")))?;
        Ok(Self { rows })
    }

    /// Aligned table preceded by a note on how SSNR was computed.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "# SSNR: {} ms non-overlapping segments, per-segment SNR clipped to [{SSNR_MIN_DB}, {SSNR_MAX_DB}] dB, \
             silent reference segments skipped\n",
            SSNR_SEGMENT / 16
        );
        let _ = writeln!(
            s,
            "{:<16} {:>7} {:>7} {:>10} {:>10}",
            "system", "snr_db", "n_clips", "ssnr", "stoi"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<16} {:>7} {:>7} {:>10.4} {:>10.4}",
                r.system, r.snr_db, r.n_clips, r.ssnr_mean, r.stoi_mean
            );
        }
        s
    }
}

struct ClipScores {
    snr_db: f64,
    /// (ssnr, stoi) per system
    scores: Vec<(f64, f64)>,
}

fn score_recipe(manifest: &Manifest, i: usize, systems: &[System]) -> Result<ClipScores> {
    let recipe = &manifest.recipes[i];
    let clean = load_wav(&recipe.clean_path)?;
    let noise = load_wav(&recipe.noise_path)?;
    let noisy = mix_at_snr(&clean, &noise, recipe.snr_db, recipe.offset_seed)?.noisy;
    let scores = systems
        .iter()
        .map(|sys| {
            let out = match sys {
                System::Passthrough => noisy.clone(),
                System::Model { model, .. } => enhance(model, &noisy)?,
            };
            let ctx = |e: Error| Error::Metric(format!("{}: {e}", recipe.clean_path.display()));
            Ok((
                ssnr(&clean, &out).map_err(ctx)?,
                stoi(&clean, &out).map_err(ctx)?,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(ClipScores {
        snr_db: recipe.snr_db,
        scores,
    })
}

/// Scores every system on every test mixture and averages per SNR
/// condition. Rows follow the condition order 2.5, 12.5, 22.5 dB, then the
/// order of `systems`; conditions absent from the manifest get no rows.
/// Clips are scored on worker threads but reduced in manifest order.
pub fn evaluate(manifest: &Manifest, systems: &[System]) -> Result<EvalReport> {
    manifest.validate()?;
    if manifest.split != Split::Test {
        return Err(Error::Manifest(
            "evaluation needs a test-split manifest".into(),
        ));
    }
    if systems.is_empty() {
        return Err(Error::InvalidArgument("no systems to evaluate".into()));
    }
    let n = manifest.recipes.len();
    let workers = thread::available_parallelism()
        .map_or(1, |p| p.get())
        .min(n);
    let per_worker = n.div_ceil(workers);
    let clips: Vec<ClipScores> = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w * per_worker..((w + 1) * per_worker).min(n))
                        .map(|i| score_recipe(manifest, i, systems))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect::<Result<Vec<_>>>()
    })?
    .into_iter()
    .flatten()
    .collect();

    let mut rows = Vec::new();
    for &snr in &TEST_SNRS {
        let group: Vec<&ClipScores> = clips.iter().filter(|c| c.snr_db == snr).collect();
        if group.is_empty() {
            continue;
        }
        for (s, sys) in systems.iter().enumerate() {
            let count = group.len() as f64;
            rows.push(EvalRow {
                system: sys.name().to_string(),
                snr_db: snr,
                n_clips: group.len(),
                ssnr_mean: group.iter().map(|c| c.scores[s].0).sum::<f64>() / count,
                stoi_mean: group.iter().map(|c| c.scores[s].1).sum::<f64>() / count,
            });
        }
    }
    Ok(EvalReport { rows })
}
