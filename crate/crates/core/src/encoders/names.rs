//! Parameter names.

pub const STEM: &str = "image.stem";
pub const IMAGE_PROJ: &str = "image.proj";
pub const TOKEN_EMBEDDING: &str = "text.token_embedding";
pub const POSITION_EMBEDDING: &str = "text.position_embedding";
pub const TEXT_PROJ: &str = "text.proj";
pub const IMAGE_CLASSIFIER: &str = "image_classifier";
pub const TEXT_CLASSIFIER: &str = "text_classifier";

pub fn block(i: usize, part: &str) -> String {
    format!("image.block{i}.{part}")
}

pub fn layer(i: usize, part: &str) -> String {
    format!("text.layer{i}.{part}")
}

pub fn weight(prefix: &str) -> String {
    format!("{prefix}.weight")
}

pub fn bias(prefix: &str) -> String {
    format!("{prefix}.bias")
}
