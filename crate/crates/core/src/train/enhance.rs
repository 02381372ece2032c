use super::optim::LOG_POWER_CLAMP;
use crate::dsp::{AudioClip, Stft};
use crate::error::Result;
use crate::model::Model;

/// Denoises a clip: predicted clean log-power, combined with the noisy phase,
/// resynthesized to the input length.
pub fn enhance(model: &Model, noisy: &AudioClip) -> Result<AudioClip> {
    let stft = Stft::new();
    let frames = stft.analyze(noisy)?;
    let mut pred = model.predict(&frames.log_power)?;
    for v in pred.data_mut() {
        *v = v.clamp(-LOG_POWER_CLAMP, LOG_POWER_CLAMP);
    }
    let samples = stft.synthesize_samples(&pred, &frames.phase, noisy.len())?;
    Ok(AudioClip::clipped(samples)?.0)
}
