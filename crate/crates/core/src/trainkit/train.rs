use std::fmt::Write as _;

use super::checkpoint::Checkpoint;
use super::config::ExperimentConfig;
use super::optim::{adamw_step, lr_at_step, AdamW, OptimizerState};
use crate::encoders::init_params;
use crate::error::{Error, Result};
use crate::evalkit::evaluate_params;
use crate::gradnet::{Owner, ParameterStore, Tensor};
use crate::objective::{loss_and_gradients, sample_impostor_map, Batch, BatchItem, Phase, Streams};
use crate::rng::Stream;
use crate::synthgen::{split_holdout, translate, DatasetSplit, PairedExample};

const INIT_STREAM: u64 = 0x7241_0001;
const ORDER_STREAM: u64 = 0x7241_0002;
const HOLDOUT_STREAM: u64 = 0x7241_0003;
const MAX_SHIFT: usize = 2;

/// One row of the metrics log. Validation columns are empty in phase 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub phase: u8,
    pub loss: f64,
    pub aucs: [Option<f64>; 3],
    pub macro_f1: Option<f64>,
}

impl EpochMetrics {
    pub fn mean_auc(&self) -> Option<f64> {
        let present: Vec<f64> = self.aucs.iter().flatten().copied().collect();
        (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
    }
}

pub const METRICS_HEADER: &str = "epoch,phase,loss,auc_0v123,auc_01v23,auc_012v3,macro_f1";

pub fn metrics_csv(log: &[EpochMetrics]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    let mut out = format!("{METRICS_HEADER}\n");
    for m in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            m.epoch,
            m.phase,
            m.loss,
            cell(m.aucs[0]),
            cell(m.aucs[1]),
            cell(m.aucs[2]),
            cell(m.macro_f1)
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Snapshot with the best mean validation AUC during phase 2, ties broken
    /// by macro-F1.
    pub best: Option<Checkpoint>,
    pub log: Vec<EpochMetrics>,
}

/// Trains with a no-op epoch callback.
pub fn train(config: &ExperimentConfig, data: &DatasetSplit) -> Result<TrainOutcome> {
    train_with(config, data, |_| {})
}

struct PhasePlan<'d> {
    phase: Phase,
    epochs: usize,
    pool: Vec<&'d PairedExample>,
}

fn active_owners(phase: Phase, streams: Streams) -> impl Fn(Owner) -> bool {
    move |owner| match (phase, streams) {
        (Phase::EmbeddingOnly, _) => matches!(owner, Owner::ImageEncoder | Owner::TextEncoder),
        (Phase::Joint, Streams::Joint) => true,
        (Phase::Joint, Streams::ImageOnly) => matches!(owner, Owner::ImageEncoder | Owner::ImageClassifier),
    }
}

/// Phase 1 minimizes the ranking term over every training pair; phase 2
/// minimizes the full objective over labeled pairs. Each phase has its own
/// warmup-linear schedule and fresh optimizer moments.
pub fn train_with(
    config: &ExperimentConfig,
    data: &DatasetSplit,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    let tc = &config.train;
    let mut config = config.clone();
    config.data = data.config.clone();
    config.model.vocab_size = data.vocabulary.len();
    let model = config.model.clone();
    if data.config.image_size != model.image_size {
        return Err(Error::Config(format!(
            "model.image_size {} does not match the dataset ({})",
            model.image_size, data.config.image_size
        )));
    }

    let holdout_seed = crate::rng::derive_seed(tc.seed, 0, HOLDOUT_STREAM);
    let (train_labeled, validation) = split_holdout(data.labeled.clone(), tc.validation_fraction, holdout_seed)?;
    let phase1_pool: Vec<&PairedExample> = train_labeled.iter().chain(&data.unlabeled).collect();
    let plans = [
        PhasePlan {
            phase: Phase::EmbeddingOnly,
            epochs: tc.phase1_epochs,
            pool: phase1_pool,
        },
        PhasePlan {
            phase: Phase::Joint,
            epochs: tc.phase2_epochs,
            pool: train_labeled.iter().collect(),
        },
    ];
    if tc.phase1_epochs > 0 && config.objective.streams == Streams::ImageOnly {
        return Err(Error::Config("the image-only stream has no embedding phase; set phase1_epochs = 0".into()));
    }
    if tc.phase2_epochs > 0 && plans[1].pool.len() < tc.batch_size {
        return Err(Error::Config(format!(
            "phase 2 needs at least batch_size = {} labeled training pairs, found {}",
            tc.batch_size,
            plans[1].pool.len()
        )));
    }
    if tc.phase1_epochs > 0 && plans[0].pool.is_empty() {
        return Err(Error::Config("phase 1 has no training pairs".into()));
    }

    let mut params = init_params(&model, crate::rng::derive_seed(tc.seed, 0, INIT_STREAM))?;
    let mut optimizer = OptimizerState::new(&params);
    let adamw = AdamW {
        beta1: tc.beta1,
        beta2: tc.beta2,
        epsilon: tc.epsilon,
        weight_decay: tc.weight_decay,
    };
    let mut rng = Stream::derived(tc.seed, 0, ORDER_STREAM);
    let mut log = Vec::new();
    let mut best: Option<((f64, f64), Checkpoint)> = None;
    let mut epoch_counter = 0;

    for (phase_no, plan) in plans.iter().enumerate() {
        if plan.epochs == 0 {
            continue;
        }
        let mut objective = config.objective;
        objective.phase = plan.phase;
        let active = active_owners(plan.phase, objective.streams);
        let n = plan.pool.len();
        let steps_per_epoch = n.div_ceil(tc.batch_size);
        let total = steps_per_epoch * plan.epochs;
        let warmup = ((tc.warmup_fraction * total as f64).floor() as usize).min(total - 1);
        optimizer = OptimizerState::new(&params);
        let mut step = 0;

        for epoch in 0..plan.epochs {
            let impostors = sample_impostor_map(n, epoch, &mut rng)?;
            let order = rng.permutation(n);
            let mut loss_sum = 0.0;
            for chunk in order.chunks(tc.batch_size) {
                let (members, shifted) = batch_members(chunk, &impostors.perm, &plan.pool, tc.translate_augment, &mut rng);
                let batch = build_batch(chunk, &impostors.perm, &plan.pool, &members, &shifted);
                let out = loss_and_gradients(&batch, &params, &model, &objective)?;
                let lr = lr_at_step(step, warmup, total, tc.learning_rate())?;
                adamw_step(&mut params, &out.gradients, &mut optimizer, lr, &adamw, &active)?;
                loss_sum += out.loss;
                step += 1;
            }
            epoch_counter += 1;
            let mut metrics = EpochMetrics {
                epoch: epoch_counter,
                phase: phase_no as u8 + 1,
                loss: loss_sum / n as f64,
                aucs: [None; 3],
                macro_f1: None,
            };
            if plan.phase == Phase::Joint && validation.iter().any(PairedExample::is_labeled) {
                let report = evaluate_params(&params, &model, &validation)?;
                metrics.aucs = report.aucs();
                metrics.macro_f1 = Some(report.macro_f1);
                if let Some(auc) = report.mean_auc() {
                    // Ties on AUC go to the better macro-F1, then to the earlier epoch.
                    let score = (auc, report.macro_f1);
                    if best.as_ref().is_none_or(|(s, _)| score > *s) {
                        best = Some((score, snapshot(&config, data, &params, &optimizer)));
                    }
                }
            }
            on_epoch(&metrics);
            log.push(metrics);
        }
    }

    Ok(TrainOutcome {
        checkpoint: snapshot(&config, data, &params, &optimizer),
        best: best.map(|(_, c)| c),
        log,
    })
}

fn snapshot(config: &ExperimentConfig, data: &DatasetSplit, params: &ParameterStore, optimizer: &OptimizerState) -> Checkpoint {
    Checkpoint {
        config: config.clone(),
        vocabulary: data.vocabulary.clone(),
        params: params.clone(),
        optimizer: optimizer.clone(),
    }
}

/// Distinct pool indices touched by a mini-batch, in first-use order, plus
/// shifted copies of their images when augmenting.
fn batch_members(
    chunk: &[usize],
    perm: &[usize],
    pool: &[&PairedExample],
    augment: bool,
    rng: &mut Stream,
) -> (Vec<usize>, Vec<Tensor>) {
    let mut members: Vec<usize> = Vec::with_capacity(2 * chunk.len());
    for &j in chunk {
        for i in [j, perm[j]] {
            if !members.contains(&i) {
                members.push(i);
            }
        }
    }
    let shifted = if augment {
        let span = 2 * MAX_SHIFT + 1;
        members
            .iter()
            .map(|&i| {
                let dy = rng.below(span) as isize - MAX_SHIFT as isize;
                let dx = rng.below(span) as isize - MAX_SHIFT as isize;
                translate(&pool[i].image, dy, dx)
            })
            .collect()
    } else {
        Vec::new()
    };
    (members, shifted)
}

fn build_batch<'a>(
    chunk: &[usize],
    perm: &[usize],
    pool: &[&'a PairedExample],
    members: &[usize],
    shifted: &'a [Tensor],
) -> Batch<'a> {
    let items = members
        .iter()
        .enumerate()
        .map(|(k, &i)| BatchItem {
            image: shifted.get(k).unwrap_or(&pool[i].image),
            tokens: &pool[i].tokens,
            label: pool[i].label(),
        })
        .collect();
    let slot = |i: usize| members.iter().position(|&m| m == i).expect("member");
    let pairs = chunk.iter().map(|&j| (slot(j), slot(perm[j]))).collect();
    Batch { items, pairs }
}
