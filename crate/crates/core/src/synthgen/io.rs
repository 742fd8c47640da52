//! On-disk dataset layout.
//!
//! A dataset directory holds three files:
//!
//! * `manifest.json`: format version, generator config, vocabulary (tokens
//!   in id order), image height/width and pool sizes.
//! * `images.bin`: every image as row-major little-endian `f32`, one
//!   `H·W` block per record, in record order.
//! * `records.jsonl`: one JSON object per record, in order labeled,
//!   unlabeled, test: `{"id", "split", "tokens", "label", "latent_level"}`.
//!   `label` is `null` for unlabeled records.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{DataConfig, DatasetSplit, PairedExample};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::gradnet::Tensor;

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: DataConfig,
    vocabulary: Vec<String>,
    image_height: usize,
    image_width: usize,
    n_labeled: usize,
    n_unlabeled: usize,
    n_test: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    id: u64,
    split: Split,
    tokens: Vec<usize>,
    label: Option<u8>,
    latent_level: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Split {
    Labeled,
    Unlabeled,
    Test,
}

pub fn save_dataset(ds: &DatasetSplit, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let side = ds.config.image_size;
    let manifest = Manifest {
        format_version: DATASET_FORMAT_VERSION,
        config: ds.config.clone(),
        vocabulary: ds.vocabulary.tokens()[3..].to_vec(),
        image_height: side,
        image_width: side,
        n_labeled: ds.labeled.len(),
        n_unlabeled: ds.unlabeled.len(),
        n_test: ds.test.len(),
    };

    let mut images = Vec::with_capacity(4 * side * side * (manifest.n_labeled + manifest.n_unlabeled + manifest.n_test));
    let mut records = String::new();
    let pools = [(Split::Labeled, &ds.labeled), (Split::Unlabeled, &ds.unlabeled), (Split::Test, &ds.test)];
    for (split, pool) in pools {
        for ex in pool.iter() {
            for &v in ex.image.data() {
                images.extend_from_slice(&(v as f32).to_le_bytes());
            }
            let rec = Record {
                id: ex.id,
                split,
                tokens: ex.tokens.clone(),
                label: ex.label(),
                latent_level: ex.latent_level,
            };
            records.push_str(&serde_json::to_string(&rec)?);
            records.push('\n');
        }
    }
    write_atomic(&dir.join("images.bin"), &images)?;
    write_atomic(&dir.join("records.jsonl"), records.as_bytes())?;
    write_atomic(&dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<DatasetSplit> {
    let read = |name: &str| {
        let p = dir.join(name);
        std::fs::read(&p).map_err(|e| Error::file(p, e))
    };
    let manifest: Manifest = serde_json::from_slice(&read("manifest.json")?)?;
    if manifest.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Version {
            found: manifest.format_version,
            expected: DATASET_FORMAT_VERSION,
        });
    }
    let (h, w) = (manifest.image_height, manifest.image_width);
    let images = read("images.bin")?;
    let records_text = String::from_utf8(read("records.jsonl")?).map_err(|e| Error::Integrity(e.to_string()))?;
    let records: Vec<Record> = records_text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<std::result::Result<_, _>>()?;

    let block = 4 * h * w;
    if images.len() != block * records.len() {
        return Err(Error::Integrity(format!(
            "images.bin holds {} bytes, expected {} for {} records",
            images.len(),
            block * records.len(),
            records.len()
        )));
    }
    let vocabulary = Vocabulary::from_tokens(manifest.vocabulary.clone());

    let mut ds = DatasetSplit {
        config: manifest.config,
        labeled: Vec::new(),
        unlabeled: Vec::new(),
        test: Vec::new(),
        vocabulary,
    };
    for (rec, bytes) in records.into_iter().zip(images.chunks(block)) {
        let pixels = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let image = Tensor::new(vec![1, h, w], pixels)?;
        if rec.latent_level > 3 || rec.label.is_some_and(|l| l > 3) {
            return Err(Error::Integrity(format!("record {} has a level outside 0..=3", rec.id)));
        }
        let label = match rec.split {
            Split::Unlabeled => None,
            _ => rec.label,
        };
        let ex = PairedExample::new(rec.id, image, rec.tokens, label, rec.latent_level);
        match rec.split {
            Split::Labeled => ds.labeled.push(ex),
            Split::Unlabeled => ds.unlabeled.push(ex),
            Split::Test => ds.test.push(ex),
        }
    }
    if (ds.labeled.len(), ds.unlabeled.len(), ds.test.len()) != (manifest.n_labeled, manifest.n_unlabeled, manifest.n_test) {
        return Err(Error::Integrity("record counts disagree with manifest".into()));
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::gen_dataset;

    #[test]
    fn round_trip_is_exact() {
        let cfg = DataConfig {
            n_labeled: 6,
            n_unlabeled: 5,
            n_test: 4,
            image_size: 16,
            ..Default::default()
        };
        let ds = gen_dataset(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn truncated_images_rejected() {
        let cfg = DataConfig {
            n_labeled: 4,
            n_unlabeled: 0,
            n_test: 0,
            image_size: 16,
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&gen_dataset(&cfg).unwrap(), dir.path()).unwrap();
        let p = dir.path().join("images.bin");
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Integrity(_))));
    }
}
