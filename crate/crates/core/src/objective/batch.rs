use rayon::prelude::*;

use super::{margin, Mode, ObjectiveConfig, Phase, Similarity, Streams, PROB_FLOOR};
use crate::encoders::forward::{classifier, image_input, image_stream, text_stream};
use crate::encoders::{names, ModelConfig};
use crate::error::{Error, Result};
use crate::gradnet::{finite_diff_check_with, GradientSet, ParameterStore, Tape, Tensor, Var};

/// One example as seen by the loss.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub image: &'a Tensor,
    pub tokens: &'a [usize],
    pub label: Option<u8>,
}

/// Distinct examples plus `(member, impostor)` index pairs into them.
#[derive(Debug, Clone, Default)]
pub struct Batch<'a> {
    pub items: Vec<BatchItem<'a>>,
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub ranking: f64,
    pub classification: f64,
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub loss: f64,
    pub breakdown: LossBreakdown,
    pub gradients: GradientSet,
}

struct Encoded<'a> {
    image: Option<(Tape<'a>, Var)>,
    text: Option<(Tape<'a>, Var)>,
}

fn needs(batch: &Batch, cfg: &ObjectiveConfig) -> Result<Vec<(bool, bool)>> {
    let mut need = vec![(false, false); batch.items.len()];
    let joint_phase = cfg.phase == Phase::Joint;
    for &(j, s) in &batch.pairs {
        if j >= need.len() || s >= need.len() {
            return Err(Error::Parameter(format!("pair ({j}, {s}) outside the batch")));
        }
        let labeled = batch.items[j].label.is_some();
        match cfg.streams {
            Streams::ImageOnly => {
                if labeled {
                    need[j].0 = true;
                }
            }
            Streams::Joint => {
                need[j] = (true, true);
                if cfg.mode == Mode::Ranking {
                    need[s] = (true, true);
                }
            }
        }
    }
    if joint_phase && !batch.pairs.iter().any(|&(j, _)| batch.items[j].label.is_some()) {
        return Err(Error::EmptyClassification);
    }
    if cfg.streams == Streams::ImageOnly && cfg.phase == Phase::EmbeddingOnly {
        return Err(Error::Config("the image-only stream has no embedding-only phase".into()));
    }
    Ok(need)
}

fn encode_items<'a>(
    batch: &Batch<'a>,
    need: &[(bool, bool)],
    params: &'a ParameterStore,
    model: &ModelConfig,
) -> Result<Vec<Encoded<'a>>> {
    batch
        .items
        .par_iter()
        .zip(need.par_iter())
        .map(|(item, &(img, txt))| {
            let image = if img {
                let mut tape = Tape::new();
                let x = image_input(&mut tape, item.image);
                let nodes = image_stream(&mut tape, params, model, x)?;
                Some((tape, nodes.embedding))
            } else {
                None
            };
            let text = if txt {
                let mut tape = Tape::new();
                let nodes = text_stream(&mut tape, params, model, item.tokens)?;
                Some((tape, nodes.embedding))
            } else {
                None
            };
            Ok(Encoded { image, text })
        })
        .collect()
}

fn sim(tape: &mut Tape, a: Var, b: Var, measure: Similarity) -> Result<Var> {
    match measure {
        Similarity::Dot => tape.dot(a, b),
        Similarity::NegL2 => {
            let d = tape.sub(a, b)?;
            let n = tape.norm(d)?;
            tape.scale(n, -1.0)
        }
        Similarity::Cosine => tape.cosine(a, b),
    }
}

fn neg_log_prob<'a>(tape: &mut Tape<'a>, params: &'a ParameterStore, head: &str, emb: Var, y: u8) -> Result<Var> {
    let (_, probs) = classifier(tape, params, head, emb)?;
    let p = tape.pick(probs, y as usize)?;
    let p = tape.clamp_min(p, PROB_FLOOR)?;
    let l = tape.log(p)?;
    tape.scale(l, -1.0)
}

struct Head<'a> {
    tape: Tape<'a>,
    root: Var,
    breakdown: LossBreakdown,
    image_vars: Vec<Option<Var>>,
    text_vars: Vec<Option<Var>>,
}

fn head<'a>(
    batch: &Batch,
    encoded: &[Encoded],
    params: &'a ParameterStore,
    cfg: &ObjectiveConfig,
) -> Result<Head<'a>> {
    let mut tape = Tape::new();
    let image_vars: Vec<Option<Var>> = encoded
        .iter()
        .map(|e| e.image.as_ref().map(|(t, v)| tape.variable(t.value(*v).clone())))
        .collect();
    let text_vars: Vec<Option<Var>> = encoded
        .iter()
        .map(|e| e.text.as_ref().map(|(t, v)| tape.variable(t.value(*v).clone())))
        .collect();

    let mut ranking_terms = Vec::new();
    let mut ce_terms = Vec::new();
    for &(j, s) in &batch.pairs {
        let y = batch.items[j].label;
        if cfg.streams == Streams::Joint {
            let (ij, rj) = (image_vars[j].expect("encoded"), text_vars[j].expect("encoded"));
            let matched = sim(&mut tape, ij, rj, cfg.similarity)?;
            match cfg.mode {
                Mode::Direct => ranking_terms.push(tape.scale(matched, -1.0)?),
                Mode::Ranking => {
                    let (is, rs) = (image_vars[s].expect("encoded"), text_vars[s].expect("encoded"));
                    let eta = margin(y, batch.items[s].label, cfg);
                    for (a, b) in [(ij, rs), (is, rj)] {
                        let wrong = sim(&mut tape, a, b, cfg.similarity)?;
                        let gap = tape.sub(wrong, matched)?;
                        let gap = tape.add_scalar(gap, eta)?;
                        ranking_terms.push(tape.hinge(gap)?);
                    }
                }
            }
        }
        if cfg.phase == Phase::Joint {
            if let Some(y) = y {
                let ij = image_vars[j].expect("encoded");
                ce_terms.push(neg_log_prob(&mut tape, params, names::IMAGE_CLASSIFIER, ij, y)?);
                if cfg.streams == Streams::Joint {
                    let rj = text_vars[j].expect("encoded");
                    ce_terms.push(neg_log_prob(&mut tape, params, names::TEXT_CLASSIFIER, rj, y)?);
                }
            }
        }
    }
    let ranking = sum_or_zero(&mut tape, &ranking_terms)?;
    let ce = sum_or_zero(&mut tape, &ce_terms)?;
    let breakdown = LossBreakdown {
        ranking: tape.value(ranking).item(),
        classification: tape.value(ce).item(),
    };
    let root = tape.add(ranking, ce)?;
    Ok(Head {
        tape,
        root,
        breakdown,
        image_vars,
        text_vars,
    })
}

fn sum_or_zero(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    if terms.is_empty() {
        Ok(tape.constant(Tensor::scalar(0.0)))
    } else {
        tape.sum_scalars(terms)
    }
}

/// Batch loss: summed ranking terms, plus summed cross-entropy terms over
/// labeled members in the joint phase.
pub fn total_loss(batch: &Batch, params: &ParameterStore, model: &ModelConfig, cfg: &ObjectiveConfig) -> Result<f64> {
    let need = needs(batch, cfg)?;
    let encoded = encode_items(batch, &need, params, model)?;
    let h = head(batch, &encoded, params, cfg)?;
    Ok(h.tape.value(h.root).item())
}

/// Loss and its gradient with respect to every parameter in the store.
/// Parameters that do not take part receive zero gradient.
pub fn loss_and_gradients(
    batch: &Batch,
    params: &ParameterStore,
    model: &ModelConfig,
    cfg: &ObjectiveConfig,
) -> Result<LossOutput> {
    let need = needs(batch, cfg)?;
    let encoded = encode_items(batch, &need, params, model)?;
    let h = head(batch, &encoded, params, cfg)?;
    let loss = h.tape.value(h.root).item();
    let head_grads = h.tape.backward(h.root)?;

    let mut gradients = params.zeros_like();
    for (idx, g) in h.tape.param_grads(&head_grads) {
        gradients.add_at(idx, g);
    }

    let per_item: Vec<Vec<(usize, Tensor)>> = encoded
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let mut out = Vec::new();
            for (enc, var) in [(&e.image, h.image_vars[i]), (&e.text, h.text_vars[i])] {
                let (Some((tape, root)), Some(var)) = (enc, var) else { continue };
                let Some(seed) = head_grads.get(var) else { continue };
                let grads = tape.backward_with(*root, seed)?;
                out.extend(tape.param_grads(&grads).map(|(idx, g)| (idx, g.clone())));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    for item in &per_item {
        for (idx, g) in item {
            gradients.add_at(*idx, g);
        }
    }
    if !gradients.is_finite() {
        return Err(Error::NumericOverflow("loss gradient"));
    }
    Ok(LossOutput {
        loss,
        breakdown: h.breakdown,
        gradients,
    })
}

/// Worst relative error between [`loss_and_gradients`] and central
/// differences of [`total_loss`] on a sample of coordinates.
pub fn finite_diff_check(
    params: &ParameterStore,
    batch: &Batch,
    model: &ModelConfig,
    cfg: &ObjectiveConfig,
    epsilon: f64,
    seed: u64,
) -> Result<f64> {
    finite_diff_check_with(params, epsilon, seed, |p| {
        let out = loss_and_gradients(batch, p, model, cfg)?;
        Ok((out.loss, out.gradients))
    })
}
