//! Mixture recipes and the tab-separated manifest format
//! (`clean_path`, `noise_path`, `snr_db`, `offset_seed` per line; `#` starts a
//! comment).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const TRAIN_SNRS: [f64; 5] = [0.0, 5.0, 10.0, 15.0, 20.0];
pub const TEST_SNRS: [f64; 3] = [2.5, 12.5, 22.5];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn snr_points(self) -> &'static [f64] {
        match self {
            Split::Train => &TRAIN_SNRS,
            Split::Test => &TEST_SNRS,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!(
                "unknown split {s:?} (train or test)"
            ))),
        }
    }
}

/// Everything needed to synthesize one noisy utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureRecipe {
    pub clean_path: PathBuf,
    pub noise_path: PathBuf,
    pub snr_db: f64,
    pub offset_seed: u64,
}

impl MixtureRecipe {
    pub fn validate(&self, split: Split) -> Result<()> {
        if !split.snr_points().contains(&self.snr_db) {
            return Err(Error::Manifest(format!(
                "snr {} dB is not a {split} point (allowed: {:?})",
                self.snr_db,
                split.snr_points()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub split: Split,
    pub recipes: Vec<MixtureRecipe>,
}

impl Manifest {
    pub fn new(split: Split, recipes: Vec<MixtureRecipe>) -> Result<Self> {
        let m = Self { split, recipes };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.recipes.is_empty() {
            return Err(Error::Manifest("manifest has no recipes".into()));
        }
        self.recipes.iter().try_for_each(|r| r.validate(self.split))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# split: {}\n", self.split);
        for r in &self.recipes {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.clean_path.display(),
                r.noise_path.display(),
                r.snr_db,
                r.offset_seed
            ));
        }
        s
    }

    /// Parses manifest text. The split comes from a `# split:` header or,
    /// failing that, from which SNR set the recipes belong to.
    pub fn parse(text: &str) -> Result<Self> {
        let mut split = None;
        let mut recipes = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("split:") {
                    split = Some(v.trim().parse::<Split>()?);
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |what: &str| Error::Manifest(format!("line {}: {what}", lineno + 1));
            if fields.len() != 4 {
                return Err(bad(&format!(
                    "expected 4 tab-separated fields, got {}",
                    fields.len()
                )));
            }
            recipes.push(MixtureRecipe {
                clean_path: fields[0].into(),
                noise_path: fields[1].into(),
                snr_db: fields[2].parse().map_err(|_| bad("bad snr_db"))?,
                offset_seed: fields[3].parse().map_err(|_| bad("bad offset_seed"))?,
            });
        }
        let split = match split {
            Some(s) => s,
            None if recipes.iter().all(|r| TEST_SNRS.contains(&r.snr_db)) => Split::Test,
            None => Split::Train,
        };
        Self::new(split, recipes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Recipe counts per SNR and per noise file.
    pub fn summary(&self) -> String {
        let mut per_snr: BTreeMap<String, usize> = BTreeMap::new();
        let mut per_noise: BTreeMap<String, usize> = BTreeMap::new();
        let mut snrs: Vec<f64> = self.recipes.iter().map(|r| r.snr_db).collect();
        snrs.sort_by(f64::total_cmp);
        snrs.dedup();
        for r in &self.recipes {
            *per_snr.entry(r.snr_db.to_string()).or_default() += 1;
            *per_noise
                .entry(r.noise_path.display().to_string())
                .or_default() += 1;
        }
        let mut s = format!("split {}: {} recipes\n", self.split, self.recipes.len());
        for snr in snrs {
            s.push_str(&format!(
                "  snr {snr:>5} dB: {}\n",
                per_snr[&snr.to_string()]
            ));
        }
        for (noise, n) in per_noise {
            s.push_str(&format!("  noise {noise}: {n}\n"));
        }
        s
    }
}

/// Which clean and noise files (by file name) belong to each split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitRules {
    pub train_clean: BTreeSet<String>,
    pub test_clean: BTreeSet<String>,
    pub train_noise: BTreeSet<String>,
    pub test_noise: BTreeSet<String>,
}

impl SplitRules {
    /// Holds out the last files in name order: 6 of every 20 noises and 2 of
    /// every 10 clean files, at least one of each.
    pub fn holdout(clean: &[String], noise: &[String]) -> Result<Self> {
        fn part(
            names: &[String],
            num: usize,
            den: usize,
            what: &str,
        ) -> Result<(BTreeSet<String>, BTreeSet<String>)> {
            let mut sorted = names.to_vec();
            sorted.sort();
            sorted.dedup();
            if sorted.len() < 2 {
                return Err(Error::Manifest(format!(
                    "need at least two {what} files to hold one out, found {}",
                    sorted.len()
                )));
            }
            let n_test = ((sorted.len() * num + den / 2) / den).clamp(1, sorted.len() - 1);
            let test = sorted.split_off(sorted.len() - n_test);
            Ok((sorted.into_iter().collect(), test.into_iter().collect()))
        }
        let (train_clean, test_clean) = part(clean, 2, 10, "clean")?;
        let (train_noise, test_noise) = part(noise, 6, 20, "noise")?;
        Ok(Self {
            train_clean,
            test_clean,
            train_noise,
            test_noise,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(n) = self.train_noise.intersection(&self.test_noise).next() {
            return Err(Error::Manifest(format!("noise {n} is in both splits")));
        }
        if let Some(c) = self.train_clean.intersection(&self.test_clean).next() {
            return Err(Error::Manifest(format!("clean file {c} is in both splits")));
        }
        Ok(())
    }

    fn files(&self, split: Split) -> (&BTreeSet<String>, &BTreeSet<String>) {
        match split {
            Split::Train => (&self.train_clean, &self.train_noise),
            Split::Test => (&self.test_clean, &self.test_noise),
        }
    }
}

/// Sorted `.wav` file names in `dir`.
pub fn list_wavs(dir: impl AsRef<Path>) -> Result<Vec<String>> {
    let dir = dir.as_ref();
    let mut names = Vec::new();
    for entry in
        fs::read_dir(dir).map_err(|e| Error::Manifest(format!("{}: {e}", dir.display())))?
    {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if entry.file_type()?.is_file() && name.to_ascii_lowercase().ends_with(".wav") {
            names.push(name);
        }
    }
    if names.is_empty() {
        return Err(Error::Manifest(format!(
            "{} contains no .wav files",
            dir.display()
        )));
    }
    names.sort();
    Ok(names)
}

/// Recipes for the clean files of a split. Training gets one recipe per
/// clean file at a random training SNR; the test split crosses every clean
/// file with every test SNR so each condition scores the same utterances.
/// Noise file and offset seed are drawn at random per recipe.
pub fn build_manifest(
    clean_dir: impl AsRef<Path>,
    noise_dir: impl AsRef<Path>,
    rules: &SplitRules,
    split: Split,
    seed: u64,
) -> Result<Manifest> {
    rules.validate()?;
    let (clean_dir, noise_dir) = (clean_dir.as_ref(), noise_dir.as_ref());
    let available_clean = list_wavs(clean_dir)?;
    let available_noise = list_wavs(noise_dir)?;
    let (clean_set, noise_set) = rules.files(split);
    let clean: Vec<&String> = available_clean
        .iter()
        .filter(|n| clean_set.contains(*n))
        .collect();
    let noise: Vec<&String> = available_noise
        .iter()
        .filter(|n| noise_set.contains(*n))
        .collect();
    if clean.is_empty() || noise.is_empty() {
        return Err(Error::Manifest(format!(
            "{split} split is empty ({} clean, {} noise files present)",
            clean.len(),
            noise.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut recipes = Vec::new();
    for c in clean {
        let snrs = match split {
            Split::Train => vec![*TRAIN_SNRS.choose(&mut rng).unwrap()],
            Split::Test => TEST_SNRS.to_vec(),
        };
        for snr_db in snrs {
            recipes.push(MixtureRecipe {
                clean_path: clean_dir.join(c),
                noise_path: noise_dir.join(noise.choose(&mut rng).unwrap()),
                snr_db,
                offset_seed: rng.gen(),
            });
        }
    }
    Manifest::new(split, recipes)
}
