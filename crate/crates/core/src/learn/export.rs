//! SmallNet as an ONNX bundle the model runner can probe.

use std::path::{Path, PathBuf};

use super::net::{SmallNet, Widths};
use crate::error::Result;
use crate::model::onnx::{Attr, GraphBuilder};
use crate::model::{ModelBundle, ModelMeta, Normalization, ProbeKind, ProbeSpec};

/// Name accepted in experiment configs for the untrained reference net.
pub const BUILTIN_MODEL: &str = "builtin:smallnet";
pub const BUILTIN_INPUT_SIZE: usize = 64;
pub const BUILTIN_CLASSES: usize = 3;

const TOTAL_DEPTH: usize = 9;

/// Probed nodes with their layer index in
/// conv1, relu1, pool1, conv2, relu2, pool2, fc1, relu3, fc2.
const PROBES: [(&str, usize, ProbeKind); 5] = [
    ("relu1", 2, ProbeKind::Early),
    ("pool1", 3, ProbeKind::MiddleEarly),
    ("relu2", 5, ProbeKind::MiddleLate),
    ("pool2", 6, ProbeKind::LastConv),
    ("fc2", 9, ProbeKind::LastFc),
];

pub fn smallnet_meta(net: &SmallNet<f32>) -> ModelMeta {
    ModelMeta {
        input_size: net.input_size as u32,
        normalization: Normalization::IDENTITY,
        probes: PROBES
            .iter()
            .map(|&(name, depth, kind)| ProbeSpec {
                name: name.to_string(),
                depth_fraction: depth as f64 / TOTAL_DEPTH as f64,
                kind,
            })
            .collect(),
        total_depth: TOTAL_DEPTH,
    }
}

/// Serialize as an ONNX graph taking `[1, 3, S, S]`; the channel mean is
/// the single-channel network input.
pub fn to_onnx(net: &SmallNet<f32>) -> Vec<u8> {
    let s = net.input_size as i64;
    let Widths { conv1: c1, conv2: c2, hidden } = net.widths;
    let q = net.input_size / 4;
    let k = net.n_classes;

    // Internal conv weights are [(ky, kx, cin), cout]; ONNX wants [cout, cin, ky, kx].
    let conv_weight = |w: &ndarray::Array2<f32>, cin: usize, cout: usize| {
        let mut out = vec![0f32; cout * cin * 9];
        for o in 0..cout {
            for ci in 0..cin {
                for kk in 0..9 {
                    out[(o * cin + ci) * 9 + kk] = w[[kk * cin + ci, o]];
                }
            }
        }
        out
    };
    // Internal flatten order is (y, x, c); ONNX Flatten of NCHW is (c, y, x).
    // Gemm with transB takes [hidden, flat].
    let mut fc1 = vec![0f32; hidden * q * q * c2];
    for j in 0..hidden {
        for c in 0..c2 {
            for p in 0..q * q {
                fc1[j * q * q * c2 + c * q * q + p] = net.fc1_w[[p * c2 + c, j]];
            }
        }
    }
    let fc2: Vec<f32> = net.fc2_w.t().iter().copied().collect();

    let conv_attrs = || {
        vec![("kernel_shape", Attr::Ints(vec![3, 3])), ("pads", Attr::Ints(vec![1, 1, 1, 1]))]
    };
    let pool_attrs = || vec![("kernel_shape", Attr::Ints(vec![2, 2])), ("strides", Attr::Ints(vec![2, 2]))];
    let mut g = GraphBuilder::new("smallnet", "input", &[1, 3, s, s]);
    g.initializer("conv1.w", &[c1, 1, 3, 3], &conv_weight(&net.conv1_w, 1, c1))
        .initializer("conv1.b", &[c1], net.conv1_b.as_slice().expect("contiguous"))
        .initializer("conv2.w", &[c2, c1, 3, 3], &conv_weight(&net.conv2_w, c1, c2))
        .initializer("conv2.b", &[c2], net.conv2_b.as_slice().expect("contiguous"))
        .initializer("fc1.w", &[hidden, q * q * c2], &fc1)
        .initializer("fc1.b", &[hidden], net.fc1_b.as_slice().expect("contiguous"))
        .initializer("fc2.w", &[k, hidden], &fc2)
        .initializer("fc2.b", &[k], net.fc2_b.as_slice().expect("contiguous"))
        .node("ReduceMean", &["input"], "gray", vec![("axes", Attr::Ints(vec![1])), ("keepdims", Attr::Int(1))])
        .node("Conv", &["gray", "conv1.w", "conv1.b"], "conv1", conv_attrs())
        .node("Relu", &["conv1"], "relu1", vec![])
        .node("MaxPool", &["relu1"], "pool1", pool_attrs())
        .node("Conv", &["pool1", "conv2.w", "conv2.b"], "conv2", conv_attrs())
        .node("Relu", &["conv2"], "relu2", vec![])
        .node("MaxPool", &["relu2"], "pool2", pool_attrs())
        .node("Flatten", &["pool2"], "flat", vec![("axis", Attr::Int(1))])
        .node("Gemm", &["flat", "fc1.w", "fc1.b"], "fc1", vec![("transB", Attr::Int(1))])
        .node("Relu", &["fc1"], "relu3", vec![])
        .node("Gemm", &["relu3", "fc2.w", "fc2.b"], "fc2", vec![("transB", Attr::Int(1))])
        .output("fc2", &[1, k as i64]);
    g.to_bytes()
}

/// Write `<name>.onnx` and its sidecar into `dir`; returns the graph path.
pub fn export_bundle(net: &SmallNet<f32>, dir: &Path, name: &str) -> Result<PathBuf> {
    ModelBundle::write(dir, name, &to_onnx(net), &smallnet_meta(net))
}

/// The seeded, untrained reference network used by `builtin:smallnet`.
pub fn builtin_net(seed: u64) -> Result<SmallNet<f32>> {
    SmallNet::new(BUILTIN_INPUT_SIZE, BUILTIN_CLASSES, Widths::DEFAULT, seed)
}

pub fn write_builtin(dir: &Path, seed: u64) -> Result<PathBuf> {
    export_bundle(&builtin_net(seed)?, dir, "smallnet")
}
