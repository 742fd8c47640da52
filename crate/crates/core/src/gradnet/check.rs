use super::{GradientSet, ParameterStore};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// Upper bound on the number of coordinates probed per check.
pub const MAX_PROBED_COORDS: usize = 200;

/// Gradients smaller than this are compared on an absolute scale: central
/// differences carry roundoff near `|f| * 1e-16 / epsilon`, which swamps any
/// relative comparison of a gradient that is truly zero.
pub const GRADIENT_FLOOR: f64 = 1e-6;

/// Compares analytic gradients against central differences
/// `(f(θ+ε) − f(θ−ε)) / 2ε` on a sample of at most
/// [`MAX_PROBED_COORDS`] coordinates, drawn round-robin across parameter
/// tensors so that every tensor is probed. Returns the worst relative error
/// with denominator `max(|analytic|, |numeric|, GRADIENT_FLOOR)`.
pub fn finite_diff_check_with<F>(params: &ParameterStore, epsilon: f64, seed: u64, mut eval: F) -> Result<f64>
where
    F: FnMut(&ParameterStore) -> Result<(f64, GradientSet)>,
{
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Parameter(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    let (_, analytic) = eval(params)?;

    let mut stream = Stream::new(seed);
    let mut per_tensor: Vec<Vec<usize>> = (0..params.len())
        .map(|i| {
            let mut idx: Vec<usize> = (0..params.by_index(i).1.value.len()).collect();
            stream.shuffle(&mut idx);
            idx
        })
        .collect();
    let mut coords = Vec::new();
    'fill: for round in 0.. {
        let mut any = false;
        for (p, idx) in per_tensor.iter_mut().enumerate() {
            if let Some(&c) = idx.get(round) {
                any = true;
                coords.push((p, c));
                if coords.len() == MAX_PROBED_COORDS {
                    break 'fill;
                }
            }
        }
        if !any {
            break;
        }
    }
    per_tensor.clear();

    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for (p, c) in coords {
        let original = probe.value_mut(p).data()[c];
        probe.value_mut(p).data_mut()[c] = original + epsilon;
        let (plus, _) = eval(&probe)?;
        probe.value_mut(p).data_mut()[c] = original - epsilon;
        let (minus, _) = eval(&probe)?;
        probe.value_mut(p).data_mut()[c] = original;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let exact = analytic.by_index(p).data()[c];
        let denom = exact.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
        worst = worst.max((exact - numeric).abs() / denom);
    }
    Ok(worst)
}
