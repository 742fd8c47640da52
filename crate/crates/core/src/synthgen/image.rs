use crate::error::{Error, Result};
use crate::gradnet::Tensor;
use crate::rng::Stream;

pub const MIN_IMAGE_SIDE: usize = 16;

/// Parameters of the synthetic radiograph recipe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageRecipe {
    /// Intensity of the top row of the vertical gradient.
    pub gradient_top: f64,
    /// Intensity of the bottom row.
    pub gradient_bottom: f64,
    /// Peak added by each blob, per severity level.
    pub blob_amplitude_per_level: f64,
    /// Blob width as a fraction of the shorter side.
    pub blob_sigma_fraction: f64,
    pub noise_std: f64,
}

impl Default for ImageRecipe {
    fn default() -> Self {
        ImageRecipe {
            gradient_top: 0.1,
            gradient_bottom: 0.4,
            blob_amplitude_per_level: 0.15,
            blob_sigma_fraction: 0.08,
            noise_std: 0.02,
        }
    }
}

/// Vertical gradient plus `2·level` Gaussian blobs of amplitude
/// `0.15·level`, plus pixel noise; clamped to `[0, 1]` and rounded to `f32`
/// so the grid survives a 32-bit round trip unchanged. Shape `[1, H, W]`.
pub fn gen_image(level: u8, height: usize, width: usize, recipe: &ImageRecipe, rng: &mut Stream) -> Result<Tensor> {
    if height < MIN_IMAGE_SIDE || width < MIN_IMAGE_SIDE {
        return Err(Error::Config(format!(
            "image size {height}x{width} below minimum {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}"
        )));
    }
    if level > 3 {
        return Err(Error::Parameter(format!("severity level {level} outside 0..=3")));
    }

    let mut pixels = vec![0.0f64; height * width];
    for (y, row) in pixels.chunks_mut(width).enumerate() {
        let t = y as f64 / (height - 1) as f64;
        row.fill(recipe.gradient_top + (recipe.gradient_bottom - recipe.gradient_top) * t);
    }

    let amplitude = recipe.blob_amplitude_per_level * level as f64;
    let sigma = recipe.blob_sigma_fraction * height.min(width) as f64;
    for _ in 0..2 * level {
        let cy = rng.uniform_range(0.15, 0.85) * height as f64;
        let cx = rng.uniform_range(0.15, 0.85) * width as f64;
        for (y, row) in pixels.chunks_mut(width).enumerate() {
            let dy = y as f64 + 0.5 - cy;
            for (x, p) in row.iter_mut().enumerate() {
                let dx = x as f64 + 0.5 - cx;
                *p += amplitude * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            }
        }
    }

    if recipe.noise_std > 0.0 {
        for p in &mut pixels {
            *p += recipe.noise_std * rng.normal();
        }
    }
    for p in &mut pixels {
        *p = p.clamp(0.0, 1.0) as f32 as f64;
    }
    Tensor::new(vec![1, height, width], pixels)
}

/// Shifts an image by whole pixels, filling uncovered pixels from the edge.
pub fn translate(image: &Tensor, dy: isize, dx: isize) -> Tensor {
    let &[c, h, w] = image.shape() else {
        return image.clone();
    };
    let mut out = vec![0.0; c * h * w];
    let src = image.data();
    for ch in 0..c {
        for y in 0..h {
            let sy = (y as isize - dy).clamp(0, h as isize - 1) as usize;
            for x in 0..w {
                let sx = (x as isize - dx).clamp(0, w as isize - 1) as usize;
                out[(ch * h + y) * w + x] = src[(ch * h + sy) * w + sx];
            }
        }
    }
    Tensor::new(vec![c, h, w], out).expect("same shape")
}
