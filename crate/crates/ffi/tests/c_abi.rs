use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use edemajoint::encoders::{init_params, ModelConfig};
use edemajoint::gradnet::Tensor;
use edemajoint::synthgen::Vocabulary;
use edemajoint::trainkit::{infer_image, save_checkpoint, Checkpoint, ExperimentConfig, OptimizerState};
use edemajoint_ffi::*;

fn checkpoint() -> Checkpoint {
    let vocabulary = Vocabulary::default_generator();
    let model = ModelConfig {
        image_size: 8,
        stem_channels: 2,
        block_channels: vec![2, 3],
        embed_dim: 4,
        vocab_size: vocabulary.len(),
        text_dim: 4,
        text_ffn_dim: 4,
        max_seq_len: 16,
        ..ModelConfig::default()
    };
    let config = ExperimentConfig {
        model,
        ..ExperimentConfig::default()
    };
    let params = init_params(&config.model, 3).unwrap();
    let optimizer = OptimizerState::new(&params);
    Checkpoint {
        config,
        vocabulary,
        params,
        optimizer,
    }
}

fn saved(dir: &Path) -> (Checkpoint, CString) {
    let ck = checkpoint();
    let path = dir.join("model.ckpt");
    save_checkpoint(&path, &ck).unwrap();
    (ck, CString::new(path.to_str().unwrap()).unwrap())
}

fn last_error() -> Option<String> {
    let p = edj_last_error();
    (!p.is_null()).then(|| unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
}

fn image(side: usize) -> Vec<f64> {
    (0..side * side).map(|i| (i % 7) as f64 / 7.0).collect()
}

#[test]
fn inference_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (ck, path) = saved(dir.path());
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { edj_model_load(path.as_ptr(), &mut model) }, EdjStatus::Ok);
    assert_eq!(unsafe { edj_model_image_size(model) }, 8);

    let pixels = image(8);
    let mut probs = [0.0; EDJ_NUM_CLASSES];
    let status = unsafe { edj_model_infer(model, pixels.as_ptr(), 8, 8, probs.as_mut_ptr()) };
    assert_eq!(status, EdjStatus::Ok);
    let expected = infer_image(&ck, &Tensor::new(vec![1, 8, 8], pixels).unwrap()).unwrap();
    assert_eq!(probs, expected.0);
    assert!(last_error().is_none());
    unsafe { edj_model_free(model) };
}

#[test]
fn wrong_image_size_is_a_shape_error() {
    let dir = tempfile::tempdir().unwrap();
    let (_, path) = saved(dir.path());
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { edj_model_load(path.as_ptr(), &mut model) }, EdjStatus::Ok);
    let pixels = image(6);
    let mut probs = [-1.0; EDJ_NUM_CLASSES];
    let status = unsafe { edj_model_infer(model, pixels.as_ptr(), 6, 6, probs.as_mut_ptr()) };
    assert_eq!(status, EdjStatus::Shape);
    assert_eq!(probs, [-1.0; EDJ_NUM_CLASSES]);
    assert!(last_error().unwrap().contains("shape"));
    unsafe { edj_model_free(model) };
}

#[test]
fn load_failures_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = ptr::null_mut();

    let missing = CString::new(dir.path().join("nope.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { edj_model_load(missing.as_ptr(), &mut model) }, EdjStatus::Io);
    assert!(model.is_null());

    let (_, path) = saved(dir.path());
    let file = PathBuf::from(path.to_str().unwrap());
    let mut bytes = std::fs::read(&file).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&file, &bytes).unwrap();
    assert_eq!(unsafe { edj_model_load(path.as_ptr(), &mut model) }, EdjStatus::Integrity);

    bytes[mid] ^= 0x40;
    bytes[8] = 9;
    std::fs::write(&file, &bytes).unwrap();
    assert_eq!(unsafe { edj_model_load(path.as_ptr(), &mut model) }, EdjStatus::UnsupportedVersion);
    assert!(model.is_null());
}

#[test]
fn null_arguments_are_rejected() {
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { edj_model_load(ptr::null(), &mut model) }, EdjStatus::NullArgument);
    let mut probs = [0.0; 4];
    let px = [0.0; 4];
    let status = unsafe { edj_model_infer(ptr::null(), px.as_ptr(), 2, 2, probs.as_mut_ptr()) };
    assert_eq!(status, EdjStatus::NullArgument);
    assert_eq!(unsafe { edj_label_report(ptr::null(), &mut 0) }, EdjStatus::NullArgument);
    assert_eq!(unsafe { edj_model_image_size(ptr::null()) }, 0);
    unsafe { edj_model_free(ptr::null_mut()) };
    assert!(last_error().unwrap().contains("null"));
}

#[test]
fn labels_reports() {
    let cases = [
        ("FINDINGS: Mild cephalization.", 1),
        ("IMPRESSION: No pulmonary edema.", 0),
        ("FINDINGS: The lungs are clear.", EDJ_UNLABELED),
    ];
    for (text, want) in cases {
        let text = CString::new(text).unwrap();
        let mut level = 99;
        assert_eq!(unsafe { edj_label_report(text.as_ptr(), &mut level) }, EdjStatus::Ok);
        assert_eq!(level, want, "{text:?}");
    }
    let mut level = 99;
    let empty = CString::new("   ").unwrap();
    assert_eq!(unsafe { edj_label_report(empty.as_ptr(), &mut level) }, EdjStatus::EmptyDocument);
    assert_eq!(level, 99);
    let bad = [0xffu8, 0xfe, 0];
    assert_eq!(unsafe { edj_label_report(bad.as_ptr().cast(), &mut level) }, EdjStatus::InvalidUtf8);
}

#[test]
fn metrics() {
    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0u8, 0, 1, 1];
    let mut out = 0.0;
    assert_eq!(unsafe { edj_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut out) }, EdjStatus::Ok);
    assert_eq!(out, 0.75);

    let one_class = [1u8; 4];
    let status = unsafe { edj_auc(scores.as_ptr(), one_class.as_ptr(), 4, &mut out) };
    assert_eq!(status, EdjStatus::DegenerateInput);

    let gold = [0u8, 1, 2, 3];
    assert_eq!(unsafe { edj_macro_f1(gold.as_ptr(), gold.as_ptr(), 4, &mut out) }, EdjStatus::Ok);
    assert_eq!(out, 1.0);
    let status = unsafe { edj_macro_f1(ptr::null(), ptr::null(), 0, &mut out) };
    assert_eq!(status, EdjStatus::InvalidArgument);
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(edj_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "edemajoint.h"

int main(int argc, char **argv) {
    EdjModel *model = NULL;
    if (edj_model_load(argv[1], &model) != EDJ_STATUS_OK) {
        fprintf(stderr, "%s\n", edj_last_error());
        return 1;
    }
    size_t side = edj_model_image_size(model);
    double pixels[64] = {0};
    double probs[EDJ_NUM_CLASSES];
    if (side != 8 || edj_model_infer(model, pixels, side, side, probs) != EDJ_STATUS_OK) {
        return 2;
    }
    double total = 0;
    for (int i = 0; i < EDJ_NUM_CLASSES; i++) total += probs[i];
    int32_t level = 0;
    if (edj_label_report("FINDINGS: Severe pulmonary edema.", &level) != EDJ_STATUS_OK) return 3;
    if (edj_model_infer(model, pixels, 3, 3, probs) != EDJ_STATUS_SHAPE) return 4;
    edj_model_free(model);
    printf("%.6f %d\n", total, level);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // The test binary lives in <target>/<profile>/deps/.
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = target_dir().join("libedemajoint_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let (_, ckpt) = saved(dir.path());
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let cc = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .expect("a C compiler on PATH");
    assert!(cc.status.success(), "{}", String::from_utf8_lossy(&cc.stderr));
    let run = Command::new(&exe).arg(ckpt.to_str().unwrap()).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status, String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "1.000000 3");
}
