//! Seeded generator of paired synthetic images and reports with a known
//! severity level.

mod dataset;
mod image;
mod io;
mod report;
mod vocab;

pub use dataset::{example_at, gen_dataset, gen_dataset_with, gen_example, split_holdout, DataConfig, DatasetSplit, PairedExample, COHORT_CLASS_COUNTS};
pub use image::{gen_image, translate, ImageRecipe, MIN_IMAGE_SIDE};
pub use io::{load_dataset, save_dataset, DATASET_FORMAT_VERSION};
pub use report::{gen_report, report_text, GeneratedReport, BOS, DISTRACTORS, EOS, MAX_DISTRACTORS, MIN_DISTRACTORS, NEGATION_PREFIXES, UNK};
pub use vocab::Vocabulary;
