//! Training config files: TOML with `[data]`, `[model]`, `[objective]` and
//! `[train]` tables. Missing keys take defaults; unknown keys are errors.

use serde::de::DeserializeOwned;
use toml::{Table, Value};

use crate::encoders::ModelConfig;
use crate::objective::ObjectiveConfig;
use crate::synthgen::DataConfig;
use crate::trainkit::{ExperimentConfig, TrainConfig};

/// Parses and checks `text`, reporting every problem rather than the first.
pub fn resolve_config(text: &str) -> Result<ExperimentConfig, Vec<String>> {
    let root: Table = toml::from_str(text).map_err(|e| vec![format!("syntax: {}", e.message())])?;
    let defaults = match Value::try_from(ExperimentConfig::default()).expect("serializable") {
        Value::Table(t) => t,
        _ => unreachable!("config serializes to a table"),
    };

    let mut errors = Vec::new();
    let mut merged = defaults.clone();
    for (section, value) in &root {
        let Some(Value::Table(base)) = defaults.get(section) else {
            errors.push(format!("unknown section [{section}]"));
            continue;
        };
        let Value::Table(given) = value else {
            errors.push(format!("{section}: expected a table"));
            continue;
        };
        for (key, v) in given {
            if !base.contains_key(key) {
                errors.push(format!("{section}.{key}: unknown key"));
                continue;
            }
            let mut candidate = base.clone();
            candidate.insert(key.clone(), v.clone());
            let checked = match section.as_str() {
                "data" => check::<DataConfig>(candidate),
                "model" => check::<ModelConfig>(candidate),
                "objective" => check::<ObjectiveConfig>(candidate),
                "train" => check::<TrainConfig>(candidate),
                _ => unreachable!("sections come from the defaults"),
            };
            match checked {
                Ok(()) => {
                    if let Some(Value::Table(t)) = merged.get_mut(section) {
                        t.insert(key.clone(), v.clone());
                    }
                }
                Err(msg) => errors.push(format!("{section}.{key}: {msg}")),
            }
        }
    }
    // `merged` only holds keys that parsed, so bounds are checked even when
    // other keys were rejected.
    let config: ExperimentConfig = match Value::Table(merged).try_into() {
        Ok(c) => c,
        Err(e) => {
            errors.push(e.to_string());
            return Err(errors);
        }
    };
    for (key, msg) in config.train.problems() {
        errors.push(format!("train.{key}: {msg}"));
    }
    for (section, result) in [
        ("data", config.data.validate()),
        ("model", config.model.validate()),
        ("objective", config.objective.validate()),
    ] {
        if let Err(e) = result {
            errors.push(format!("{section}: {e}"));
        }
    }
    if errors.is_empty() {
        Ok(config)
    } else {
        Err(errors)
    }
}

fn check<T: DeserializeOwned>(table: Table) -> Result<(), String> {
    Value::Table(table)
        .try_into::<T>()
        .map(|_| ())
        .map_err(|e| e.message().trim().to_string())
}

pub fn render_config(config: &ExperimentConfig) -> String {
    toml::to_string_pretty(config).expect("serializable")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = resolve_config("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(resolve_config(&render_config(&c)).unwrap(), c);
    }

    #[test]
    fn overrides_apply() {
        let c = resolve_config("[train]\nbatch_size = 8\nbase_lr = 1\n[objective]\nsimilarity = \"cosine\"\n").unwrap();
        assert_eq!(c.train.batch_size, 8);
        assert_eq!(c.train.base_lr, 1.0);
        assert_eq!(c.objective.similarity, crate::objective::Similarity::Cosine);
    }

    #[test]
    fn zero_batch_size_names_the_key() {
        let errs = resolve_config("[train]\nbatch_size = 0\n").unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].contains("train.batch_size"), "{errs:?}");
    }

    #[test]
    fn every_problem_is_reported() {
        let text = "[train]\nbatch_size = \"four\"\nwarmup = 0.2\n[model]\nembed_dim = -3\n[extra]\nx = 1\n";
        let errs = resolve_config(text).unwrap_err();
        assert_eq!(errs.len(), 4, "{errs:?}");
        for needle in ["train.batch_size", "train.warmup", "model.embed_dim", "[extra]"] {
            assert!(errs.iter().any(|e| e.contains(needle)), "{needle} missing from {errs:?}");
        }
        let errs = resolve_config("[train]\nbatch_size = 0\nwarmup_fraction = 1.5\n").unwrap_err();
        assert_eq!(errs.len(), 2, "{errs:?}");
    }

    #[test]
    fn syntax_error_is_reported() {
        assert!(resolve_config("[train\n").unwrap_err()[0].starts_with("syntax"));
    }
}
