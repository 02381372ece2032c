use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::manifest::{Manifest, MixtureRecipe};
use super::optim::{loss_mse_magnitude, Adam};
use crate::dsp::{load_wav, mix_at_snr, AudioClip, Stft, NUM_BINS, POWER_FLOOR};
use crate::error::{shape_err, Error, Result};
use crate::model::{Checkpoint, Model, ModelSpec, RngState};
use crate::tensor::{Tape, Tensor};

/// Aligned network input and target for one utterance, both `[161, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub noisy_log_power: Tensor,
    pub clean_magnitude: Tensor,
}

impl TrainingPair {
    pub fn from_audio(clean: &AudioClip, noisy: &AudioClip) -> Result<Self> {
        if clean.len() != noisy.len() {
            return shape_err(
                "training pair",
                format!("{} vs {} samples", clean.len(), noisy.len()),
            );
        }
        let stft = Stft::new();
        Ok(Self {
            noisy_log_power: stft.analyze(noisy)?.log_power,
            clean_magnitude: stft.analyze(clean)?.magnitude(),
        })
    }

    pub fn from_recipe(recipe: &MixtureRecipe) -> Result<Self> {
        let clean = load_wav(&recipe.clean_path)?;
        let noise = load_wav(&recipe.noise_path)?;
        let mix = mix_at_snr(&clean, &noise, recipe.snr_db, recipe.offset_seed)?;
        Self::from_audio(&clean, &mix.noisy)
    }

    pub fn num_frames(&self) -> usize {
        self.noisy_log_power.shape()[1]
    }

    /// Frames `start..start + len` of input and target. Frames past the end
    /// are filled as silence: floor log-power and floor magnitude.
    pub fn segment(&self, start: usize, len: usize) -> (Tensor, Tensor) {
        let crop = |t: &Tensor, fill: f64| {
            let total = t.shape()[1];
            let mut out = vec![fill; NUM_BINS * len];
            for k in 0..NUM_BINS {
                for j in 0..len {
                    if start + j < total {
                        out[k * len + j] = t.data()[k * total + start + j];
                    }
                }
            }
            Tensor::from_parts(vec![NUM_BINS, len], out)
        };
        (
            crop(&self.noisy_log_power, POWER_FLOOR.ln()),
            crop(&self.clean_magnitude, POWER_FLOOR.sqrt()),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

impl LossRecord {
    /// `step\tlr\tloss`, floats in shortest round-trip form.
    pub fn to_line(&self) -> String {
        format!("{}\t{}\t{}", self.step, self.lr, self.loss)
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub checkpoint: Checkpoint,
    pub losses: Vec<LossRecord>,
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Continue from this state; its step counts toward `max_steps`.
    pub resume: Option<Checkpoint>,
    /// Where periodic and final checkpoints go.
    pub checkpoint_path: Option<PathBuf>,
    /// Receives one loss-log line per step.
    pub log: Option<&'a mut dyn Write>,
}

/// One optimization step on a single segment. Returns `(loss, lr)`.
pub fn train_step(
    model: &mut Model,
    adam: &mut Adam,
    input: &Tensor,
    target: &Tensor,
) -> Result<(f64, f64)> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let fwd = model.forward(&mut tape, &bound, input)?;
    let loss = loss_mse_magnitude(&mut tape, &fwd.output, target)?;
    tape.backward(&loss)?;
    let grads = bound.grads(&tape, model.params());
    let lr = adam.update(model.params_mut(), &grads)?;
    Ok((loss.data()[0], lr))
}

fn snapshot(model: &Model, adam: &Adam, seed: u64, rng: &ChaCha8Rng) -> Checkpoint {
    Checkpoint {
        spec: model.spec().clone(),
        params: model.params().clone(),
        moments: Some(adam.moments().clone()),
        step: adam.step_count(),
        rng: RngState {
            seed,
            word_pos: rng.get_word_pos(),
        },
    }
}

fn save(ck: &Checkpoint, path: Option<&Path>) -> Result<()> {
    if let Some(p) = path {
        ck.save(p)?;
        debug!("checkpoint at step {} -> {}", ck.step, p.display());
    }
    Ok(())
}

/// Trains on items drawn uniformly with replacement from `0..num_items`.
pub fn train_with_source(
    spec: &ModelSpec,
    config: &TrainConfig,
    num_items: usize,
    mut source: impl FnMut(usize) -> Result<Rc<TrainingPair>>,
    options: TrainOptions<'_>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if num_items == 0 {
        return Err(Error::InvalidArgument("nothing to train on".into()));
    }
    let TrainOptions {
        resume,
        checkpoint_path,
        mut log,
    } = options;
    let (mut model, mut adam, rng_seed) = match resume {
        Some(ck) => {
            if &ck.spec != spec {
                return Err(Error::Checkpoint(
                    "resume checkpoint was trained with a different model spec".into(),
                ));
            }
            let moments = ck.moments.clone().ok_or_else(|| {
                Error::Checkpoint("resume checkpoint has no optimizer state".into())
            })?;
            info!("resuming at step {}", ck.step);
            (ck.model()?, Adam::resume(config, moments, ck.step), ck.rng)
        }
        None => {
            let model = Model::init(spec.clone(), config.seed)?;
            let adam = Adam::new(config, model.params());
            // distinct stream from the one that initialized the weights
            (
                model,
                adam,
                RngState {
                    seed: config.seed ^ 0x5EED_DA7A,
                    word_pos: 0,
                },
            )
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed.seed);
    rng.set_word_pos(rng_seed.word_pos);
    let seed = rng_seed.seed;
    let frames = config.segment_frames;
    let mut losses = Vec::new();
    while adam.step_count() < config.max_steps {
        let step = adam.step_count();
        let item = rng.gen_range(0..num_items);
        let pair = source(item)?;
        let total = pair.num_frames();
        let start = if total >= frames {
            rng.gen_range(0..=total - frames)
        } else {
            0
        };
        let (input, target) = pair.segment(start, frames);
        let (loss, lr) = match train_step(&mut model, &mut adam, &input, &target) {
            Ok(v) => v,
            Err(e) => {
                warn!("step {step} failed: {e}; keeping the last good state");
                save(
                    &snapshot(&model, &adam, seed, &rng),
                    checkpoint_path.as_deref(),
                )?;
                return Err(e);
            }
        };
        let record = LossRecord { step, lr, loss };
        if let Some(w) = log.as_deref_mut() {
            writeln!(w, "{}", record.to_line())?;
        }
        debug!("{}", record.to_line());
        losses.push(record);
        if config.checkpoint_every > 0 && adam.step_count() % config.checkpoint_every == 0 {
            save(
                &snapshot(&model, &adam, seed, &rng),
                checkpoint_path.as_deref(),
            )?;
        }
    }
    let checkpoint = snapshot(&model, &adam, seed, &rng);
    save(&checkpoint, checkpoint_path.as_deref())?;
    Ok(TrainOutcome {
        model,
        checkpoint,
        losses,
    })
}

/// Full loop over a manifest: each step samples a recipe, synthesizes its
/// mixture (cached per recipe), crops an aligned segment, and takes one
/// Adam step on the magnitude loss.
pub fn train_loop(
    spec: &ModelSpec,
    config: &TrainConfig,
    manifest: &Manifest,
    options: TrainOptions<'_>,
) -> Result<TrainOutcome> {
    manifest.validate()?;
    let mut cache: HashMap<usize, Rc<TrainingPair>> = HashMap::new();
    let recipes = &manifest.recipes;
    train_with_source(
        spec,
        config,
        recipes.len(),
        |i| {
            if let Some(p) = cache.get(&i) {
                return Ok(p.clone());
            }
            let pair = Rc::new(TrainingPair::from_recipe(&recipes[i])?);
            cache.insert(i, pair.clone());
            Ok(pair)
        },
        options,
    )
}
