//! Objective quality measures and the batch evaluator.

mod eval;
mod ssnr;
mod stoi;

pub use eval::{evaluate, EvalReport, EvalRow, System};
pub use ssnr::{ssnr, ssnr_samples, SSNR_MAX_DB, SSNR_MIN_DB, SSNR_SEGMENT, SSNR_SILENCE_ENERGY};
pub use stoi::{resample_to_10k, stoi, stoi_samples, STOI_RATE, STOI_SEGMENT_FRAMES};
