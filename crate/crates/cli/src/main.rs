use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use grucnn::dsp::{load_wav, write_wav};
use grucnn::metrics::{evaluate, System};
use grucnn::model::{count_params, Architecture, Checkpoint, ModelSpec};
use grucnn::train::{
    build_manifest, enhance, list_wavs, train_loop, Manifest, Split, SplitRules, TrainConfig,
    TrainOptions,
};
use log::info;

#[derive(Parser)]
#[command(
    name = "grucnn",
    version,
    about = "Single-channel speech enhancement with gruCNN and CNN baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a mixture manifest for one split of a clean/noise corpus.
    Synthesize {
        #[arg(long)]
        clean_dir: PathBuf,
        #[arg(long)]
        noise_dir: PathBuf,
        #[arg(long, default_value = "train")]
        split: Split,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a manifest and write a checkpoint.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// JSON training config; flags given here take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Total optimizer steps, counting steps already in a resumed checkpoint.
        #[arg(long)]
        max_steps: Option<u64>,
        #[arg(long)]
        checkpoint_every: Option<u64>,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Also write the `step lr loss` lines to this file.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Output checkpoint.
        #[arg(long)]
        out: PathBuf,
    },
    /// Enhance a 16 kHz WAV file.
    Enhance {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the noisy passthrough and any checkpoints on a test manifest.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        /// Write CSV here and print a table; without it the CSV goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Itemized parameter count.
    Params {
        #[command(flatten)]
        model: ModelArgs,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    arch: Option<Architecture>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    conv_layers: Option<usize>,
    #[arg(long)]
    lstm_hidden: Option<usize>,
}

impl ModelArgs {
    fn is_empty(&self) -> bool {
        self.arch.is_none()
            && self.channels.is_none()
            && self.conv_layers.is_none()
            && self.lstm_hidden.is_none()
    }

    fn spec(&self, default_arch: Architecture) -> Result<ModelSpec, CliError> {
        let mut spec = ModelSpec::table1(self.arch.unwrap_or(default_arch));
        if let Some(c) = self.channels {
            spec = spec.with_channels(c);
        }
        if let Some(n) = self.conv_layers {
            spec = spec.with_conv_layers(n);
        }
        if let Some(h) = self.lstm_hidden {
            spec = spec.with_lstm_hidden(h);
        }
        spec.validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(spec)
    }
}

enum CliError {
    /// Bad flags, missing inputs or inputs that break a precondition.
    Usage(String),
    Runtime(grucnn::Error),
}

impl From<grucnn::Error> for CliError {
    fn from(e: grucnn::Error) -> Self {
        use grucnn::Error as E;
        match e {
            E::InvalidArgument(_) | E::Manifest(_) | E::UnsupportedSampleRate(_) | E::Wav(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

fn require(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

/// Copies everything to stdout and, optionally, a file.
struct Tee {
    stdout: io::Stdout,
    file: Option<BufWriter<File>>,
}

impl Write for Tee {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.stdout.write_all(buf)?;
        if let Some(f) = &mut self.file {
            f.write_all(buf)?;
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.stdout.flush()?;
        if let Some(f) = &mut self.file {
            f.flush()?;
        }
        Ok(())
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synthesize {
            clean_dir,
            noise_dir,
            split,
            seed,
            out,
        } => {
            require(&clean_dir, "clean directory")?;
            require(&noise_dir, "noise directory")?;
            let rules = SplitRules::holdout(&list_wavs(&clean_dir)?, &list_wavs(&noise_dir)?)?;
            let manifest = build_manifest(&clean_dir, &noise_dir, &rules, split, seed)?;
            manifest.save(&out)?;
            print!("{}", manifest.summary());
        }
        Command::Train {
            manifest,
            model,
            config,
            seed,
            max_steps,
            checkpoint_every,
            resume,
            log,
            out,
        } => {
            require(&manifest, "manifest")?;
            let manifest = Manifest::load(&manifest)?;
            let mut cfg = match &config {
                Some(p) => {
                    require(p, "config")?;
                    TrainConfig::load(p)?
                }
                None => TrainConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = max_steps {
                cfg.max_steps = n;
            }
            if let Some(n) = checkpoint_every {
                cfg.checkpoint_every = n;
            }
            let resume = match &resume {
                Some(p) => {
                    require(p, "checkpoint")?;
                    Some(Checkpoint::load(p)?)
                }
                None => None,
            };
            let spec = match &resume {
                Some(ck) if model.is_empty() => ck.spec.clone(),
                _ => model.spec(Architecture::GruCnnFc)?,
            };
            info!(
                "training {} for {} steps",
                spec.architecture.model_name(),
                cfg.max_steps
            );
            let file = log
                .as_ref()
                .map(File::create)
                .transpose()?
                .map(BufWriter::new);
            let mut tee = Tee {
                stdout: io::stdout(),
                file,
            };
            let outcome = train_loop(
                &spec,
                &cfg,
                &manifest,
                TrainOptions {
                    resume,
                    checkpoint_path: Some(out.clone()),
                    log: Some(&mut tee),
                },
            );
            tee.flush()?;
            let outcome = outcome?;
            info!(
                "wrote {} at step {}",
                out.display(),
                outcome.checkpoint.step
            );
        }
        Command::Enhance {
            checkpoint,
            input,
            out,
        } => {
            require(&checkpoint, "checkpoint")?;
            require(&input, "input")?;
            let model = Checkpoint::load(&checkpoint)?.model()?;
            let noisy = load_wav(&input)?;
            write_wav(&out, &enhance(&model, &noisy)?)?;
        }
        Command::Evaluate {
            manifest,
            checkpoint,
            out,
        } => {
            require(&manifest, "manifest")?;
            let manifest = Manifest::load(&manifest)?;
            let mut systems = vec![System::Passthrough];
            for path in &checkpoint {
                require(path, "checkpoint")?;
                let name = path.file_stem().map_or_else(
                    || path.display().to_string(),
                    |s| s.to_string_lossy().into(),
                );
                systems.push(System::Model {
                    name,
                    model: Checkpoint::load(path)?.model()?,
                });
            }
            let report = evaluate(&manifest, &systems)?;
            match out {
                Some(p) => {
                    fs::write(&p, report.to_csv()?)?;
                    print!("{}", report.to_table());
                }
                None => print!("{}", report.to_csv()?),
            }
        }
        Command::Params { model } => {
            if model.arch.is_none() {
                return Err(CliError::Usage("params needs --arch".into()));
            }
            print!(
                "{}",
                count_params(&model.spec(Architecture::GruCnnFc)?).render()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRUCNN_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
