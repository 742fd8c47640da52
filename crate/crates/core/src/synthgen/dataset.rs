use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image::{gen_image, ImageRecipe};
use super::report::{gen_report, DISTRACTORS};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::gradnet::Tensor;
use crate::rng::Stream;
use crate::textlab::Ruleset;

/// Severity image counts of the labeled clinical cohort, used as the default
/// class proportions.
pub const COHORT_CLASS_COUNTS: [f64; 4] = [2883.0, 1511.0, 1709.0, 640.0];

const EXAMPLE_STREAM: u64 = 0x5EED_0001;

/// One image/report pair.
///
/// `label` is the training label and is present only on labeled and test
/// examples. `latent_level` is the generator's ground truth; training code
/// never reads it.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedExample {
    pub id: u64,
    /// `[1, H, W]`, values in `[0, 1]`.
    pub image: Tensor,
    /// Token ids beginning with BOS and ending with EOS.
    pub tokens: Vec<usize>,
    label: Option<u8>,
    pub(crate) latent_level: u8,
}

impl PairedExample {
    pub fn new(id: u64, image: Tensor, tokens: Vec<usize>, label: Option<u8>, latent_level: u8) -> Self {
        PairedExample {
            id,
            image,
            tokens,
            label,
            latent_level,
        }
    }

    pub fn label(&self) -> Option<u8> {
        self.label
    }

    pub fn is_labeled(&self) -> bool {
        self.label.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    /// Held-out labeled examples generated from indices after the training
    /// pool.
    pub n_test: usize,
    pub image_size: usize,
    pub seed: u64,
    pub class_weights: [f64; 4],
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n_labeled: 400,
            n_unlabeled: 2000,
            n_test: 200,
            image_size: 32,
            seed: 1,
            class_weights: COHORT_CLASS_COUNTS,
        }
    }
}

impl DataConfig {
    fn positive_classes(&self) -> Vec<u8> {
        (0..4u8).filter(|&c| self.class_weights[c as usize] > 0.0).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("class_weights must be finite and non-negative".into()));
        }
        let classes = self.positive_classes().len();
        if classes == 0 {
            return Err(Error::Config("class_weights are all zero".into()));
        }
        if self.n_labeled < 4 || self.n_labeled < classes {
            return Err(Error::Config(format!(
                "n_labeled = {} cannot hold one example of each of {classes} classes (minimum 4)",
                self.n_labeled
            )));
        }
        if self.image_size < super::image::MIN_IMAGE_SIDE {
            return Err(Error::Config(format!("image_size {} below 16", self.image_size)));
        }
        Ok(())
    }
}

/// A generated corpus: the first `n_labeled` pairs carry labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub config: DataConfig,
    pub labeled: Vec<PairedExample>,
    pub unlabeled: Vec<PairedExample>,
    pub test: Vec<PairedExample>,
    pub vocabulary: Vocabulary,
}

impl DatasetSplit {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Labeled then unlabeled training pairs.
    pub fn training_pairs(&self) -> impl Iterator<Item = &PairedExample> {
        self.labeled.iter().chain(&self.unlabeled)
    }

    pub fn all(&self) -> impl Iterator<Item = &PairedExample> {
        self.labeled.iter().chain(&self.unlabeled).chain(&self.test)
    }
}

/// Builds one example from its own derived stream.
pub fn gen_example(
    config: &DataConfig,
    index: u64,
    forced_level: Option<u8>,
    labeled: bool,
    ruleset: &Ruleset,
    vocab: &Vocabulary,
) -> Result<PairedExample> {
    let mut rng = Stream::derived(config.seed, index, EXAMPLE_STREAM);
    let drawn = rng.weighted(&config.class_weights) as u8;
    let level = forced_level.unwrap_or(drawn);
    let size = config.image_size;
    let image = gen_image(level, size, size, &ImageRecipe::default(), &mut rng)?;
    let report = gen_report(level, &mut rng, ruleset, DISTRACTORS)?;
    Ok(PairedExample::new(
        index,
        image,
        vocab.encode(&report.words),
        labeled.then_some(level),
        level,
    ))
}

/// Generates the labeled, unlabeled and test pools. The first labeled
/// examples are pinned to one per positive-weight class so every such class
/// is represented.
pub fn gen_dataset(config: &DataConfig) -> Result<DatasetSplit> {
    gen_dataset_with(config, &Ruleset::default_rules())
}

pub fn gen_dataset_with(config: &DataConfig, ruleset: &Ruleset) -> Result<DatasetSplit> {
    config.validate()?;
    for level in config.positive_classes() {
        if ruleset.at_level(level).next().is_none() {
            return Err(Error::Config(format!("ruleset has no phrase for level {level}")));
        }
    }
    let vocab = Vocabulary::for_generator(ruleset, DISTRACTORS);
    let total = config.n_labeled + config.n_unlabeled + config.n_test;

    let examples: Vec<PairedExample> = (0..total)
        .into_par_iter()
        .map(|i| example_at(config, i, ruleset, &vocab))
        .collect::<Result<_>>()?;

    let mut examples = examples.into_iter();
    let labeled = examples.by_ref().take(config.n_labeled).collect();
    let unlabeled = examples.by_ref().take(config.n_unlabeled).collect();
    let test = examples.collect();
    Ok(DatasetSplit {
        config: config.clone(),
        labeled,
        unlabeled,
        test,
        vocabulary: vocab,
    })
}

/// The `index`-th example of the dataset `config` describes, in
/// labeled, unlabeled, test order.
pub fn example_at(config: &DataConfig, index: usize, ruleset: &Ruleset, vocab: &Vocabulary) -> Result<PairedExample> {
    let n_train = config.n_labeled + config.n_unlabeled;
    if index >= n_train + config.n_test {
        return Err(Error::Parameter(format!(
            "example {index} outside a dataset of {}",
            n_train + config.n_test
        )));
    }
    let forced = config.positive_classes().get(index).copied().filter(|_| index < config.n_labeled);
    let labeled = index < config.n_labeled || index >= n_train;
    gen_example(config, index as u64, forced, labeled, ruleset, vocab)
}

/// Partitions examples into (kept, held out). Labeled examples are split per
/// class so each class with two or more members lands on both sides; every
/// example ends up in exactly one part.
pub fn split_holdout(examples: Vec<PairedExample>, fraction: f64, seed: u64) -> Result<(Vec<PairedExample>, Vec<PairedExample>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("holdout fraction {fraction} outside [0, 1)")));
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); 5];
    for (i, ex) in examples.iter().enumerate() {
        groups[ex.label().map_or(4, usize::from)].push(i);
    }
    let mut rng = Stream::new(seed);
    let mut held = vec![false; examples.len()];
    for group in &mut groups {
        rng.shuffle(group);
        let mut n = (fraction * group.len() as f64).round() as usize;
        if fraction > 0.0 && n == 0 && group.len() >= 2 {
            n = 1;
        }
        for &i in group.iter().take(n) {
            held[i] = true;
        }
    }
    let (mut kept, mut out) = (Vec::new(), Vec::new());
    for (ex, h) in examples.into_iter().zip(held) {
        if h {
            out.push(ex);
        } else {
            kept.push(ex);
        }
    }
    Ok((kept, out))
}
