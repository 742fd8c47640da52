use std::collections::HashMap;

use proptest::prelude::*;

use super::*;
use crate::encoders::{classify, encode_image, encode_text, init_params, names, ModelConfig};
use crate::gradnet::{Owner, ParameterStore, Tensor};

fn kind(measure: Similarity, mode: Mode) -> SimilarityKind {
    SimilarityKind { measure, mode }
}

#[test]
fn similarity_examples() {
    assert_eq!(similarity(&[1.0, 2.0], &[3.0, 4.0], Similarity::Dot).unwrap(), 11.0);
    assert_eq!(similarity(&[0.3, -2.0, 7.0], &[0.3, -2.0, 7.0], Similarity::NegL2).unwrap(), 0.0);
    assert_eq!(similarity(&[2.0, 0.0], &[5.0, 0.0], Similarity::Cosine).unwrap(), 1.0);
    assert!(matches!(
        similarity(&[0.0, 0.0], &[1.0, 0.0], Similarity::Cosine),
        Err(Error::DegenerateInput(_))
    ));
    assert!(matches!(similarity(&[1.0], &[1.0, 2.0], Similarity::Dot), Err(Error::Shape { .. })));
}

#[test]
fn margin_examples() {
    let c = ObjectiveConfig::default();
    assert_eq!(margin(Some(2), Some(0), &c), 2.0);
    assert_eq!(margin(Some(1), None, &c), 0.5);
    assert_eq!(margin(None, None, &c), 0.5);
    assert_eq!(margin(Some(3), Some(3), &c), 0.0);
}

#[test]
fn enumerated_ranking_cases() {
    use Mode::*;
    use Similarity::*;
    type V = [f64; 2];
    let cases: [(V, V, V, V, f64, Similarity, Mode, f64); 22] = [
        ([1., 0.], [1., 0.], [0., 1.], [0., 1.], 3.0, Dot, Ranking, 4.0),
        ([1., 0.], [1., 0.], [0., 1.], [0., 1.], 0.5, Dot, Ranking, 0.0),
        ([2., 1.], [1., 1.], [0., 3.], [1., -1.], 1.0, Dot, Ranking, 1.0),
        ([1., 2.], [1., 2.], [1., 2.], [1., 2.], 0.5, Dot, Ranking, 1.0),
        ([1., 1.], [-1., -1.], [1., 1.], [1., 1.], 0.0, Dot, Ranking, 4.0),
        ([0., 0.], [0., 0.], [0., 0.], [0., 0.], 2.0, Dot, Ranking, 4.0),
        ([3., 0.], [2., 0.], [1., 0.], [1., 0.], 2.0, Dot, Ranking, 0.0),
        ([0., 0.], [3., 4.], [0., 0.], [0., 0.], 1.0, NegL2, Ranking, 7.0),
        ([1., 1.], [1., 1.], [4., 5.], [1., 1.], 0.5, NegL2, Ranking, 0.5),
        ([2., 7.], [2., 7.], [2., 7.], [2., 7.], 2.0, NegL2, Ranking, 4.0),
        ([0., 0.], [0., 1.], [0., 3.], [0., 5.], 0.5, NegL2, Ranking, 0.0),
        ([0., 0.], [6., 8.], [6., 8.], [0., 0.], 0.0, NegL2, Ranking, 20.0),
        ([1., 0.], [1., 0.], [0., 1.], [0., 1.], 0.5, Cosine, Ranking, 0.0),
        ([1., 0.], [1., 0.], [0., 1.], [0., 1.], 2.0, Cosine, Ranking, 2.0),
        ([1., 0.], [0., 1.], [1., 0.], [1., 0.], 0.5, Cosine, Ranking, 2.0),
        ([1., 0.], [-1., 0.], [2., 0.], [5., 0.], 0.0, Cosine, Ranking, 2.0),
        ([3., 4.], [4., 3.], [1., 0.], [0., 1.], 0.5, Cosine, Ranking, 0.68),
        ([1., 0.], [0., 1.], [0., 1.], [1., 0.], 0.0, Dot, Ranking, 2.0),
        ([1., 2.], [3., 4.], [0., 0.], [0., 0.], 0.5, Dot, Direct, -11.0),
        ([0., 0.], [3., 4.], [0., 0.], [0., 0.], 0.5, NegL2, Direct, 5.0),
        ([2., 0.], [5., 0.], [1., 1.], [1., 1.], 0.5, Cosine, Direct, -1.0),
        ([1., 0.], [1., 0.], [9., 9.], [9., 9.], 3.0, Dot, Direct, -1.0),
    ];
    for (n, (ij, rj, is, rs, eta, m, mode, want)) in cases.iter().enumerate() {
        let got = ranking_loss(ij, rj, is, rs, *eta, kind(*m, *mode)).unwrap();
        assert!((got - want).abs() < 1e-12, "case {n}: got {got}, want {want}");
    }
}

#[test]
fn ranking_examples_from_similarities() {
    // matched similarity 5, impostor similarities 1
    let got = ranking_loss(&[5.0], &[1.0], &[1.0], &[0.2], 0.5, kind(Similarity::Dot, Mode::Ranking)).unwrap();
    assert_eq!(got, 0.0);
}

#[test]
fn cross_entropy_examples() {
    let u = [0.25; 4];
    assert!((cross_entropy_pair(&u, &u, 2).unwrap() - 2.0 * 4f64.ln()).abs() < 1e-12);
    let one_hot = [0.0, 1.0, 0.0, 0.0];
    assert_eq!(cross_entropy_pair(&one_hot, &one_hot, 1).unwrap(), 0.0);
    let got = cross_entropy_pair(&[0.5, 0.2, 0.2, 0.1], &[0.25, 0.25, 0.25, 0.25], 0).unwrap();
    assert!((got - (2f64.ln() + 4f64.ln())).abs() < 1e-12);
    let floored = cross_entropy_pair(&one_hot, &one_hot, 0).unwrap();
    assert!((floored - 2.0 * -PROB_FLOOR.ln()).abs() < 1e-9);
}

#[test]
fn impostor_map_is_bijection_and_deterministic() {
    let m = sample_impostor_map(5, 0, &mut Stream::new(4)).unwrap();
    let mut sorted = m.perm.clone();
    sorted.sort();
    assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    assert_eq!(m, sample_impostor_map(5, 0, &mut Stream::new(4)).unwrap());
    assert!(sample_impostor_map(0, 0, &mut Stream::new(4)).is_err());
}

#[test]
fn impostor_permutations_are_uniform() {
    let mut rng = Stream::new(2024);
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    let draws = 60_000;
    for e in 0..draws {
        *counts.entry(sample_impostor_map(3, e, &mut rng).unwrap().perm).or_default() += 1;
    }
    assert_eq!(counts.len(), 6);
    let expected = draws as f64 / 6.0;
    let mut chi2 = 0.0;
    for &c in counts.values() {
        let f = c as f64 / draws as f64;
        assert!((f - 1.0 / 6.0).abs() < 0.01, "frequency {f}");
        chi2 += (c as f64 - expected).powi(2) / expected;
    }
    // 0.999 quantile of chi-square with 5 degrees of freedom
    assert!(chi2 < 20.52, "chi2 {chi2}");
}

fn vec2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 3)
}

proptest! {
    #[test]
    fn ranking_loss_nonnegative_and_zero_iff_inactive(
        ij in vec2(), rj in vec2(), is in vec2(), rs in vec2(), eta in 0.0f64..3.0,
    ) {
        let k = kind(Similarity::Dot, Mode::Ranking);
        let l = ranking_loss(&ij, &rj, &is, &rs, eta, k).unwrap();
        prop_assert!(l >= 0.0);
        let m = similarity(&ij, &rj, Similarity::Dot).unwrap();
        let a = similarity(&ij, &rs, Similarity::Dot).unwrap() - m + eta;
        let b = similarity(&is, &rj, Similarity::Dot).unwrap() - m + eta;
        prop_assert_eq!(l == 0.0, a <= 0.0 && b <= 0.0);
    }

    #[test]
    fn cosine_ranking_ignores_positive_scale(
        ij in vec2(), rj in vec2(), is in vec2(), rs in vec2(), c in 0.1f64..10.0, which in 0usize..4,
    ) {
        let vs = [&ij, &rj, &is, &rs];
        prop_assume!(vs.iter().all(|v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6));
        let k = kind(Similarity::Cosine, Mode::Ranking);
        let base = ranking_loss(&ij, &rj, &is, &rs, 0.5, k).unwrap();
        let mut scaled: Vec<Vec<f64>> = vs.iter().map(|v| v.to_vec()).collect();
        scaled[which].iter_mut().for_each(|x| *x *= c);
        let again = ranking_loss(&scaled[0], &scaled[1], &scaled[2], &scaled[3], 0.5, k).unwrap();
        prop_assert!((base - again).abs() < 1e-9);
    }

    #[test]
    fn ranking_depends_only_on_similarities(ij in vec2(), rj in vec2(), rs in vec2()) {
        // Two impostor images with equal dot product against R_j.
        let k = kind(Similarity::Dot, Mode::Ranking);
        let target = similarity(&[1.0, 0.0, 0.0], &rj, Similarity::Dot).unwrap();
        prop_assume!(rj[1].abs() > 1e-3);
        let alt = [1.0 - 1.0, (target - 0.0) / rj[1], 0.0];
        let a = ranking_loss(&ij, &rj, &[1.0, 0.0, 0.0], &rs, 0.5, k).unwrap();
        let b = ranking_loss(&ij, &rj, &alt, &rs, 0.5, k).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn margin_is_symmetric(a in prop::option::of(0u8..4), b in prop::option::of(0u8..4)) {
        let c = ObjectiveConfig::default();
        prop_assert_eq!(margin(a, b, &c), margin(b, a, &c));
    }
}

fn tiny_model() -> ModelConfig {
    ModelConfig {
        image_size: 8,
        stem_channels: 2,
        stem_stride: 2,
        block_channels: vec![2, 3],
        embed_dim: 4,
        vocab_size: 6,
        text_dim: 4,
        text_heads: 2,
        text_layers: 1,
        text_ffn_dim: 4,
        max_seq_len: 8,
        ..ModelConfig::default()
    }
}

struct Fixture {
    images: Vec<Tensor>,
    tokens: Vec<Vec<usize>>,
    labels: Vec<Option<u8>>,
}

fn fixture(model: &ModelConfig, labels: &[Option<u8>]) -> Fixture {
    let mut rng = Stream::new(77);
    let s = model.image_size;
    let images = labels
        .iter()
        .map(|_| Tensor::new(vec![1, s, s], (0..s * s).map(|_| rng.uniform()).collect()).unwrap())
        .collect();
    let tokens = labels
        .iter()
        .map(|_| {
            let n = rng.range_inclusive(2, 6);
            (0..n).map(|_| rng.below(model.vocab_size)).collect()
        })
        .collect();
    Fixture {
        images,
        tokens,
        labels: labels.to_vec(),
    }
}

impl Fixture {
    fn batch(&self, pairs: &[(usize, usize)]) -> Batch<'_> {
        Batch {
            items: (0..self.images.len())
                .map(|i| BatchItem {
                    image: &self.images[i],
                    tokens: &self.tokens[i],
                    label: self.labels[i],
                })
                .collect(),
            pairs: pairs.to_vec(),
        }
    }
}

/// Sum of per-pair terms computed from standalone encoder calls.
fn oracle(f: &Fixture, pairs: &[(usize, usize)], p: &ParameterStore, m: &ModelConfig, c: &ObjectiveConfig) -> f64 {
    let img: Vec<Vec<f64>> = f.images.iter().map(|x| encode_image(x, p, m).unwrap()).collect();
    let txt: Vec<Vec<f64>> = f.tokens.iter().map(|t| encode_text(t, p, m).unwrap().0).collect();
    let mut total = 0.0;
    for &(j, s) in pairs {
        if c.streams == Streams::Joint {
            let eta = margin(f.labels[j], f.labels[s], c);
            total += ranking_loss(&img[j], &txt[j], &img[s], &txt[s], eta, c.kind()).unwrap();
        }
        if let (Phase::Joint, Some(y)) = (c.phase, f.labels[j]) {
            let pi = classify(&img[j], p, names::IMAGE_CLASSIFIER).unwrap();
            match c.streams {
                Streams::Joint => {
                    let pt = classify(&txt[j], p, names::TEXT_CLASSIFIER).unwrap();
                    total += cross_entropy_pair(&pi.0, &pt.0, y).unwrap();
                }
                Streams::ImageOnly => total += -pi.0[y as usize].max(PROB_FLOOR).ln(),
            }
        }
    }
    total
}

fn all_configs() -> Vec<ObjectiveConfig> {
    let mut out = Vec::new();
    for similarity in [Similarity::Dot, Similarity::NegL2, Similarity::Cosine] {
        for mode in [Mode::Ranking, Mode::Direct] {
            for phase in [Phase::EmbeddingOnly, Phase::Joint] {
                out.push(ObjectiveConfig {
                    similarity,
                    mode,
                    phase,
                    ..ObjectiveConfig::default()
                });
            }
        }
    }
    out.push(ObjectiveConfig {
        streams: Streams::ImageOnly,
        ..ObjectiveConfig::default()
    });
    out
}

#[test]
fn total_loss_decomposes() {
    let m = tiny_model();
    let p = init_params(&m, 3).unwrap();
    let f = fixture(&m, &[Some(0), Some(3), None, Some(2)]);
    let pairs = [(0, 2), (1, 1), (2, 0), (3, 1)];
    for c in all_configs() {
        let got = total_loss(&f.batch(&pairs), &p, &m, &c).unwrap();
        let want = oracle(&f, &pairs, &p, &m, &c);
        assert!((got - want).abs() < 1e-9, "{c:?}: {got} vs {want}");
        let out = loss_and_gradients(&f.batch(&pairs), &p, &m, &c).unwrap();
        assert!((out.loss - got).abs() < 1e-12);
        assert!((out.breakdown.ranking + out.breakdown.classification - got).abs() < 1e-9);
    }
}

#[test]
fn two_pair_batch_matches_hand_composition() {
    let m = tiny_model();
    let p = init_params(&m, 8).unwrap();
    let f = fixture(&m, &[Some(1), Some(3)]);
    let c = ObjectiveConfig::default();
    let img: Vec<Vec<f64>> = f.images.iter().map(|x| encode_image(x, &p, &m).unwrap()).collect();
    let txt: Vec<Vec<f64>> = f.tokens.iter().map(|t| encode_text(t, &p, &m).unwrap().0).collect();
    let probs = |j: usize| {
        (
            classify(&img[j], &p, names::IMAGE_CLASSIFIER).unwrap().0,
            classify(&txt[j], &p, names::TEXT_CLASSIFIER).unwrap().0,
        )
    };
    let k = c.kind();
    let r0 = ranking_loss(&img[0], &txt[0], &img[1], &txt[1], 2.0, k).unwrap();
    let r1 = ranking_loss(&img[1], &txt[1], &img[0], &txt[0], 2.0, k).unwrap();
    let (a0, b0) = probs(0);
    let (a1, b1) = probs(1);
    let want = r0 + r1 + cross_entropy_pair(&a0, &b0, 1).unwrap() + cross_entropy_pair(&a1, &b1, 3).unwrap();
    let got = total_loss(&f.batch(&[(0, 1), (1, 0)]), &p, &m, &c).unwrap();
    assert!((got - want).abs() < 1e-9);
}

#[test]
fn self_impostor_with_equal_labels_leaves_only_cross_entropy() {
    let m = tiny_model();
    let p = init_params(&m, 4).unwrap();
    let f = fixture(&m, &[Some(2)]);
    let out = loss_and_gradients(&f.batch(&[(0, 0)]), &p, &m, &ObjectiveConfig::default()).unwrap();
    assert_eq!(out.breakdown.ranking, 0.0);
    assert_eq!(out.loss, out.breakdown.classification);
    assert!(out.loss > 0.0);
}

#[test]
fn embedding_phase_leaves_classifiers_untouched() {
    let m = tiny_model();
    let p = init_params(&m, 5).unwrap();
    let f = fixture(&m, &[Some(0), None, Some(1)]);
    let c = ObjectiveConfig {
        phase: Phase::EmbeddingOnly,
        ..ObjectiveConfig::default()
    };
    let out = loss_and_gradients(&f.batch(&[(0, 1), (1, 2), (2, 0)]), &p, &m, &c).unwrap();
    let mut encoder_mass = 0.0;
    for (i, (_, param)) in p.iter().enumerate() {
        let g = out.gradients.by_index(i);
        let mass: f64 = g.data().iter().map(|v| v.abs()).sum();
        match param.owner {
            Owner::ImageClassifier | Owner::TextClassifier => assert_eq!(mass, 0.0),
            _ => encoder_mass += mass,
        }
    }
    assert!(encoder_mass > 0.0);
}

#[test]
fn image_only_touches_image_side_only() {
    let m = tiny_model();
    let p = init_params(&m, 5).unwrap();
    let f = fixture(&m, &[Some(0), Some(3)]);
    let c = ObjectiveConfig {
        streams: Streams::ImageOnly,
        ..ObjectiveConfig::default()
    };
    let out = loss_and_gradients(&f.batch(&[(0, 1), (1, 0)]), &p, &m, &c).unwrap();
    for (i, (_, param)) in p.iter().enumerate() {
        if matches!(param.owner, Owner::TextEncoder | Owner::TextClassifier) {
            assert!(out.gradients.by_index(i).data().iter().all(|v| *v == 0.0));
        }
    }
}

#[test]
fn joint_phase_without_labels_is_rejected() {
    let m = tiny_model();
    let p = init_params(&m, 5).unwrap();
    let f = fixture(&m, &[None, None]);
    let err = total_loss(&f.batch(&[(0, 1), (1, 0)]), &p, &m, &ObjectiveConfig::default()).unwrap_err();
    assert!(matches!(err, Error::EmptyClassification));
}

#[test]
fn gradients_match_finite_differences() {
    let m = tiny_model();
    let p = init_params(&m, 6).unwrap();
    let f = fixture(&m, &[Some(0), Some(3), None]);
    // Closed impostor cycles make the embedding-only loss invariant to a
    // shared shift of the image embeddings; the resulting exactly-zero
    // gradient directions only measure rounding noise.
    let pairs = [(0, 1), (1, 2)];
    for c in all_configs() {
        let worst = finite_diff_check(&p, &f.batch(&pairs), &m, &c, 1e-4, 1).unwrap();
        assert!(worst < 1e-4, "{c:?}: relative error {worst}");
    }
}

