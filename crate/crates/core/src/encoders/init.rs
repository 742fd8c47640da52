use super::config::{ModelConfig, NUM_CLASSES};
use super::names;
use crate::error::Result;
use crate::gradnet::{Owner, ParameterStore, Tensor};
use crate::rng::Stream;

/// Learned positions start this much smaller than token embeddings so early
/// attention scores depend mostly on content.
const POSITION_SCALE: f64 = 0.1;

fn uniform(shape: &[usize], bound: f64, rng: &mut Stream) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform_range(-bound, bound)).collect()).expect("shape")
}

struct Builder<'r> {
    store: ParameterStore,
    rng: &'r mut Stream,
}

impl Builder<'_> {
    fn add(&mut self, name: String, owner: Owner, shape: &[usize], bound: f64) -> Result<()> {
        let t = uniform(shape, bound, self.rng);
        self.store.insert(name, owner, t)?;
        Ok(())
    }

    fn weight(&mut self, name: String, owner: Owner, shape: &[usize], fan_in: usize) -> Result<()> {
        self.add(name, owner, shape, 1.0 / (fan_in as f64).sqrt())
    }

    fn bias(&mut self, name: String, owner: Owner, len: usize) -> Result<()> {
        self.store.insert(name, owner, Tensor::zeros(&[len]))?;
        Ok(())
    }

    fn conv(&mut self, prefix: &str, owner: Owner, out: usize, inp: usize, k: usize) -> Result<()> {
        let fan_in = inp * k * k;
        self.weight(format!("{prefix}.weight"), owner, &[out, inp, k, k], fan_in)?;
        self.bias(format!("{prefix}.bias"), owner, out)
    }

    fn linear(&mut self, prefix: &str, owner: Owner, inp: usize, out: usize) -> Result<()> {
        self.weight(format!("{prefix}.weight"), owner, &[inp, out], inp)?;
        self.bias(format!("{prefix}.bias"), owner, out)
    }

    fn layer_norm(&mut self, prefix: &str, owner: Owner, dim: usize) -> Result<()> {
        self.store.insert(format!("{prefix}.gamma"), owner, Tensor::full(&[dim], 1.0))?;
        self.store.insert(format!("{prefix}.beta"), owner, Tensor::zeros(&[dim]))?;
        Ok(())
    }
}

/// Weights uniform in `±1/√fan_in`, biases 0, token embeddings uniform in
/// `±1`, positions in `±0.1`; layer-norm gains 1 and offsets 0.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParameterStore> {
    cfg.validate()?;
    let mut rng = Stream::new(seed);
    let mut b = Builder {
        store: ParameterStore::new(),
        rng: &mut rng,
    };

    let img = Owner::ImageEncoder;
    b.conv(names::STEM, img, cfg.stem_channels, 1, 3)?;
    let mut in_ch = cfg.stem_channels;
    for (i, &out) in cfg.block_channels.iter().enumerate() {
        let stride = if i == 0 { 1 } else { 2 };
        b.conv(&names::block(i, "conv1"), img, out, in_ch, 3)?;
        b.conv(&names::block(i, "conv2"), img, out, out, 3)?;
        if in_ch != out || stride != 1 {
            b.conv(&names::block(i, "shortcut"), img, out, in_ch, 1)?;
        }
        in_ch = out;
    }
    b.linear(names::IMAGE_PROJ, img, in_ch, cfg.embed_dim)?;

    let txt = Owner::TextEncoder;
    let d = cfg.text_dim;
    b.add(names::TOKEN_EMBEDDING.into(), txt, &[cfg.vocab_size.max(1), d], 1.0)?;
    b.add(names::POSITION_EMBEDDING.into(), txt, &[cfg.max_seq_len, d], POSITION_SCALE)?;
    for l in 0..cfg.text_layers {
        for part in ["q", "k", "v", "out"] {
            b.linear(&names::layer(l, part), txt, d, d)?;
        }
        b.layer_norm(&names::layer(l, "ln1"), txt, d)?;
        b.linear(&names::layer(l, "ffn1"), txt, d, cfg.text_ffn_dim)?;
        b.linear(&names::layer(l, "ffn2"), txt, cfg.text_ffn_dim, d)?;
        b.layer_norm(&names::layer(l, "ln2"), txt, d)?;
    }
    b.linear(names::TEXT_PROJ, txt, d, cfg.embed_dim)?;

    b.linear(names::IMAGE_CLASSIFIER, Owner::ImageClassifier, cfg.embed_dim, NUM_CLASSES)?;
    b.linear(names::TEXT_CLASSIFIER, Owner::TextClassifier, cfg.embed_dim, NUM_CLASSES)?;
    Ok(b.store)
}
