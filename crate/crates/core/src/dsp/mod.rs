//! Audio I/O and the log-power feature pipeline.

mod audio;
mod mix;
mod stft;

pub use audio::{decode_wav, encode_wav, load_wav, quantize, write_wav, AudioClip, SAMPLE_RATE};
pub use mix::{mix_at_snr, noise_segment, rms, Mixture};
pub use stft::{
    hann_window, istft_with_phase, num_frames, padded_len, stft, SpectroFrameSequence, Stft,
    FRAME_LEN, HOP, NUM_BINS, POWER_FLOOR,
};
