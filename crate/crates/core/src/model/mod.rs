//! Model bundles: an ONNX graph plus a JSON sidecar describing input size,
//! normalization and the named layers ("probes") read out during inference.

pub mod onnx;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::imageops::{self, FilterType};
use serde::{Deserialize, Serialize};
use tract_onnx::prelude::*;

use crate::canvas::Canvas;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Early,
    MiddleEarly,
    MiddleLate,
    LastConv,
    LastFc,
}

impl ProbeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeKind::Early => "early",
            ProbeKind::MiddleEarly => "middle_early",
            ProbeKind::MiddleLate => "middle_late",
            ProbeKind::LastConv => "last_conv",
            ProbeKind::LastFc => "last_fc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub name: String,
    pub depth_fraction: f64,
    pub kind: ProbeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Normalization {
    pub const IDENTITY: Normalization = Normalization { mean: [0.0; 3], std: [1.0; 3] };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub input_size: u32,
    pub normalization: Normalization,
    pub probes: Vec<ProbeSpec>,
    pub total_depth: usize,
}

impl ModelMeta {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ModelLoad(m));
        if self.input_size == 0 {
            return bad("input_size must be > 0".into());
        }
        if self.probes.is_empty() {
            return bad("no probes declared".into());
        }
        let last_fc = self.probes.iter().filter(|p| p.kind == ProbeKind::LastFc).count();
        if last_fc != 1 {
            return bad(format!("exactly one last_fc probe required, found {last_fc}"));
        }
        if let Some(p) = self.probes.iter().find(|p| !(p.depth_fraction > 0.0 && p.depth_fraction <= 1.0)) {
            return bad(format!("probe {} depth_fraction {} outside (0, 1]", p.name, p.depth_fraction));
        }
        if self.probes.windows(2).any(|w| w[1].depth_fraction < w[0].depth_fraction) {
            return bad("probe depth fractions must be non-decreasing".into());
        }
        if self.normalization.std.iter().any(|s| !(*s > 0.0)) {
            return bad("normalization std must be > 0".into());
        }
        Ok(())
    }

    pub fn probe(&self, kind: ProbeKind) -> Option<&ProbeSpec> {
        self.probes.iter().find(|p| p.kind == kind)
    }
}

/// Contents of `<model>.meta.json`. `graph_path` is relative to the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub graph_path: PathBuf,
    pub meta: ModelMeta,
}

/// Sidecar path for a graph file: `dir/name.onnx` → `dir/name.meta.json`.
pub fn sidecar_path(graph: &Path) -> PathBuf {
    let stem = graph.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    graph.with_file_name(format!("{stem}.meta.json"))
}

impl ModelBundle {
    /// Read a bundle from either the sidecar or the graph path.
    pub fn read(path: impl AsRef<Path>) -> Result<(ModelBundle, PathBuf)> {
        let path = path.as_ref();
        let sidecar = if path.to_string_lossy().ends_with(".meta.json") {
            path.to_path_buf()
        } else {
            sidecar_path(path)
        };
        let text = std::fs::read_to_string(&sidecar)
            .map_err(|e| Error::ModelLoad(format!("{}: {e}", sidecar.display())))?;
        let bundle: ModelBundle = serde_json::from_str(&text)
            .map_err(|e| Error::ModelLoad(format!("{}: {e}", sidecar.display())))?;
        bundle.meta.validate()?;
        let graph = sidecar.parent().unwrap_or(Path::new(".")).join(&bundle.graph_path);
        Ok((bundle, graph))
    }

    /// Write `graph_bytes` to `dir/<name>.onnx` and the sidecar next to it.
    pub fn write(dir: impl AsRef<Path>, name: &str, graph_bytes: &[u8], meta: &ModelMeta) -> Result<PathBuf> {
        meta.validate()?;
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let graph = dir.join(format!("{name}.onnx"));
        std::fs::write(&graph, graph_bytes)?;
        let bundle = ModelBundle { graph_path: PathBuf::from(format!("{name}.onnx")), meta: meta.clone() };
        std::fs::write(sidecar_path(&graph), serde_json::to_string_pretty(&bundle)? + "\n")?;
        Ok(graph)
    }
}

/// An inference-ready model. Immutable and shareable across threads.
pub struct ModelHandle {
    name: String,
    meta: ModelMeta,
    plan: Arc<TypedSimplePlan>,
}

impl std::fmt::Debug for ModelHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelHandle").field("name", &self.name).field("meta", &self.meta).finish()
    }
}

/// Load a bundle, resolving every probe to a graph node.
pub fn load_model(bundle_path: impl AsRef<Path>) -> Result<ModelHandle> {
    let bundle_path = bundle_path.as_ref();
    let (bundle, graph) = ModelBundle::read(bundle_path)?;
    let name = graph.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    let load_err = |e: TractError| Error::ModelLoad(format!("{}: {e:#}", graph.display()));
    let mut model = tract_onnx::onnx().model_for_path(&graph).map_err(load_err)?;

    let labels: Vec<&str> = model.outlet_labels.values().map(String::as_str).collect();
    for probe in &bundle.meta.probes {
        if !(model.node_names().any(|n| n == probe.name) || labels.contains(&probe.name.as_str())) {
            let available = model.node_names().collect::<Vec<_>>().join(", ");
            return Err(Error::UnknownProbe { probe: probe.name.clone(), available });
        }
    }
    let s = bundle.meta.input_size as usize;
    model
        .set_input_fact(0, f32::fact([1, 3, s, s]).into())
        .and_then(|_| model.select_outputs_by_name(bundle.meta.probes.iter().map(|p| p.name.as_str())))
        .map_err(load_err)?;
    let plan = model.into_optimized().and_then(|m| m.into_runnable()).map_err(load_err)?;
    Ok(ModelHandle { name, meta: bundle.meta, plan })
}

/// Normalized `1×3×S×S` network input, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor {
    pub size: u32,
    pub data: Vec<f32>,
}

/// Resize (bilinear) to the model input size, scale to `[0, 1]` and apply
/// the per-channel normalization.
pub fn preprocess(canvas: &Canvas, meta: &ModelMeta) -> InputTensor {
    let size = meta.input_size;
    let mut rgb = image::Rgb32FImage::from_fn(canvas.width(), canvas.height(), |x, y| {
        let p = canvas.pixel(x, y);
        image::Rgb([p[0] as f32 / 255.0, p[1] as f32 / 255.0, p[2] as f32 / 255.0])
    });
    if canvas.width() != size || canvas.height() != size {
        rgb = imageops::resize(&rgb, size, size, FilterType::Triangle);
    }
    let plane = (size * size) as usize;
    let mut data = vec![0f32; 3 * plane];
    for (i, px) in rgb.pixels().enumerate() {
        for c in 0..3 {
            data[c * plane + i] = (px[c] - meta.normalization.mean[c]) / meta.normalization.std[c];
        }
    }
    InputTensor { size, data }
}

/// Flattened activation of one probe for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationVector {
    pub probe_name: String,
    pub values: Vec<f32>,
}

impl ActivationVector {
    pub fn new(probe_name: impl Into<String>, values: Vec<f32>) -> Result<Self> {
        let probe_name = probe_name.into();
        if values.is_empty() {
            return Err(Error::Inference(format!("probe {probe_name}: empty activation")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Inference(format!("probe {probe_name}: non-finite activation")));
        }
        Ok(ActivationVector { probe_name, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Activations for all probes of a model, in probe declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeActivations(pub Vec<ActivationVector>);

impl ProbeActivations {
    pub fn get(&self, probe: &str) -> Option<&ActivationVector> {
        self.0.iter().find(|a| a.probe_name == probe)
    }
}

impl ModelHandle {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn probes(&self) -> &[ProbeSpec] {
        &self.meta.probes
    }

    /// Run one image and read every probe. Tensors are flattened
    /// row-major from NCHW (channel-major within the sample).
    pub fn forward_with_probes(&self, input: &InputTensor) -> Result<ProbeActivations> {
        let s = self.meta.input_size as usize;
        if input.size != self.meta.input_size || input.data.len() != 3 * s * s {
            return Err(Error::Inference(format!(
                "input is {}×{} ({} values), model expects 3×{s}×{s}",
                input.size,
                input.size,
                input.data.len()
            )));
        }
        let tensor = Tensor::from_shape(&[1, 3, s, s], &input.data).map_err(|e| Error::Inference(format!("{e:#}")))?;
        let outputs = self.plan.run(tvec!(tensor.into())).map_err(|e| Error::Inference(format!("{e:#}")))?;
        self.meta
            .probes
            .iter()
            .zip(outputs.iter())
            .map(|(probe, t)| {
                let values = t
                    .to_plain_array_view::<f32>()
                    .map_err(|e| Error::Inference(format!("probe {}: {e:#}", probe.name)))?
                    .iter()
                    .copied()
                    .collect();
                ActivationVector::new(probe.name.clone(), values)
            })
            .collect::<Result<Vec<_>>>()
            .map(ProbeActivations)
    }

    pub fn forward_canvas(&self, canvas: &Canvas) -> Result<ProbeActivations> {
        self.forward_with_probes(&preprocess(canvas, &self.meta))
    }
}

/// Write activations as consecutive records: `u32` name length, UTF-8
/// name, `u32` value count, then the values as `f32`, all little-endian.
pub fn write_activations(mut w: impl Write, vectors: &[ActivationVector]) -> Result<()> {
    for v in vectors {
        w.write_all(&(v.probe_name.len() as u32).to_le_bytes())?;
        w.write_all(v.probe_name.as_bytes())?;
        w.write_all(&(v.values.len() as u32).to_le_bytes())?;
        for x in &v.values {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_activations(mut r: impl Read) -> Result<Vec<ActivationVector>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut out = Vec::new();
    let mut pos = 0usize;
    let truncated = || Error::Inference("truncated activation file".into());
    let take = |n: usize, pos: &mut usize| -> Result<&[u8]> {
        let s = bytes.get(*pos..*pos + n).ok_or_else(truncated)?;
        *pos += n;
        Ok(s)
    };
    while pos < bytes.len() {
        let name_len = u32::from_le_bytes(take(4, &mut pos)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(name_len, &mut pos)?.to_vec())
            .map_err(|_| Error::Inference("probe name is not UTF-8".into()))?;
        let n = u32::from_le_bytes(take(4, &mut pos)?.try_into().unwrap()) as usize;
        let values = take(4 * n, &mut pos)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push(ActivationVector { probe_name: name, values });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canvas::{self, Glyph, Polarity, Primitive, RenderStyle};
    use onnx::{Attr, GraphBuilder};

    fn meta(size: u32, probes: &[(&str, f64, ProbeKind)]) -> ModelMeta {
        ModelMeta {
            input_size: size,
            normalization: Normalization::IDENTITY,
            probes: probes
                .iter()
                .map(|&(n, f, k)| ProbeSpec { name: n.into(), depth_fraction: f, kind: k })
                .collect(),
            total_depth: 2,
        }
    }

    /// Conv(1 filter over 3 channels, 2×2 kernel) → Relu → Flatten → Gemm.
    fn tiny_net(dir: &Path, probe_names: &[(&str, f64, ProbeKind)]) -> PathBuf {
        let mut g = GraphBuilder::new("tiny", "input", &[1, 3, 2, 2]);
        // Weight layout [out, in, kh, kw].
        let w: Vec<f32> = vec![1.0, 2.0, 3.0, 4.0, 0.5, 0.0, 0.0, -0.5, 0.0, 1.0, -1.0, 0.0];
        g.initializer("conv.w", &[1, 3, 2, 2], &w)
            .initializer("conv.b", &[1], &[0.25])
            .initializer("fc.w", &[2, 1], &[2.0, -1.0])
            .initializer("fc.b", &[2], &[0.0, 1.0])
            .node("Conv", &["input", "conv.w", "conv.b"], "conv", vec![("kernel_shape", Attr::Ints(vec![2, 2]))])
            .node("Relu", &["conv"], "relu", vec![])
            .node("Flatten", &["relu"], "flat", vec![("axis", Attr::Int(1))])
            .node("Gemm", &["flat", "fc.w", "fc.b"], "fc", vec![("transB", Attr::Int(1))])
            .output("fc", &[1, 2]);
        ModelBundle::write(dir, "tiny", &g.to_bytes(), &meta(2, probe_names)).unwrap()
    }

    #[test]
    fn hand_computed_forward_pass() {
        let dir = tempfile::tempdir().unwrap();
        let path = tiny_net(dir.path(), &[("relu", 0.5, ProbeKind::LastConv), ("fc", 1.0, ProbeKind::LastFc)]);
        let model = load_model(&path).unwrap();
        // Channel planes: R = [1,2,3,4], G = [1,1,1,1], B = [2,0,0,1].
        let input = InputTensor { size: 2, data: vec![1., 2., 3., 4., 1., 1., 1., 1., 2., 0., 0., 1.] };
        let out = model.forward_with_probes(&input).unwrap();
        // conv = (1+4+9+16) + (0.5-0.5) + (0·2 + 1·0 - 1·0 + 0·1) + 0.25 = 30.25
        assert_eq!(out.get("relu").unwrap().values, vec![30.25]);
        // fc = [2·30.25, -30.25 + 1]
        assert_eq!(out.get("fc").unwrap().values, vec![60.5, -29.25]);
    }

    #[test]
    fn unknown_probe_lists_available_nodes() {
        let dir = tempfile::tempdir().unwrap();
        let path = tiny_net(dir.path(), &[("nope", 0.5, ProbeKind::LastConv), ("fc", 1.0, ProbeKind::LastFc)]);
        let err = load_model(&path).unwrap_err().to_string();
        assert!(err.contains("unknown probe node `nope`") && err.contains("relu"), "{err}");
    }

    #[test]
    fn malformed_graph_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = ModelBundle::write(dir.path(), "junk", b"not a protobuf", &meta(2, &[("fc", 1.0, ProbeKind::LastFc)]))
            .unwrap();
        assert!(matches!(load_model(&path), Err(Error::ModelLoad(_))));
    }

    #[test]
    fn meta_validation() {
        assert!(meta(2, &[]).validate().is_err());
        assert!(meta(2, &[("a", 0.5, ProbeKind::Early)]).validate().is_err());
        assert!(meta(2, &[("a", 0.8, ProbeKind::Early), ("b", 0.5, ProbeKind::LastFc)]).validate().is_err());
        assert!(meta(0, &[("b", 1.0, ProbeKind::LastFc)]).validate().is_err());
        assert!(meta(2, &[("a", 0.5, ProbeKind::Early), ("b", 1.0, ProbeKind::LastFc)]).validate().is_ok());
    }

    #[test]
    fn wrong_input_size_is_an_inference_error() {
        let dir = tempfile::tempdir().unwrap();
        let model = load_model(tiny_net(dir.path(), &[("fc", 1.0, ProbeKind::LastFc)])).unwrap();
        let input = InputTensor { size: 3, data: vec![0.0; 27] };
        assert!(matches!(model.forward_with_probes(&input), Err(Error::Inference(_))));
    }

    #[test]
    fn preprocess_identity_scaling() {
        let c = canvas::render(
            &Glyph::new(vec![Primitive::dot([0.5, 0.5])]).unwrap(),
            &RenderStyle::new(Polarity::BlackOnRandomPixels, 1),
            64,
        )
        .unwrap();
        let t = preprocess(&c, &meta(64, &[("fc", 1.0, ProbeKind::LastFc)]));
        let gray = c.gray();
        for (i, g) in gray.iter().enumerate() {
            assert_eq!(t.data[i], *g as f32 / 255.0);
            assert_eq!(t.data[2 * 64 * 64 + i], *g as f32 / 255.0);
        }
    }

    #[test]
    fn preprocess_black_canvas_normalizes_per_channel() {
        let mut m = meta(32, &[("fc", 1.0, ProbeKind::LastFc)]);
        m.normalization = Normalization { mean: [0.485, 0.456, 0.406], std: [0.229, 0.224, 0.225] };
        let t = preprocess(&Canvas::filled(32, 0), &m);
        let plane = 32 * 32;
        for c in 0..3 {
            let expected = (0.0 - m.normalization.mean[c]) / m.normalization.std[c];
            assert!(t.data[c * plane..(c + 1) * plane].iter().all(|&v| v == expected));
        }
    }

    #[test]
    fn downsampling_preserves_disc_area() {
        let g = Glyph::new(vec![Primitive::Dot { center: [0.5, 0.5], radius: 0.2 }]).unwrap();
        let big = canvas::render(&g, &RenderStyle::new(Polarity::WhiteOnBlack, 0), 448).unwrap();
        let area_big = big.gray().iter().filter(|&&v| v == 255).count() as f64;
        let t = preprocess(&big, &meta(224, &[("fc", 1.0, ProbeKind::LastFc)]));
        let area_small = t.data[..224 * 224].iter().filter(|&&v| v >= 0.5).count() as f64;
        let ratio = area_small * 4.0 / area_big;
        assert!((ratio - 1.0).abs() <= 0.05, "{ratio}");
    }

    #[test]
    fn activation_file_round_trip() {
        let vs = vec![
            ActivationVector::new("relu1", vec![0.0, 1.5, -2.0]).unwrap(),
            ActivationVector::new("fc", vec![3.25]).unwrap(),
        ];
        let mut buf = Vec::new();
        write_activations(&mut buf, &vs).unwrap();
        assert_eq!(&buf[..4], &5u32.to_le_bytes());
        assert_eq!(read_activations(buf.as_slice()).unwrap(), vs);
    }

    #[test]
    fn non_finite_activations_are_rejected() {
        assert!(ActivationVector::new("x", vec![f32::NAN]).is_err());
        assert!(ActivationVector::new("x", vec![]).is_err());
    }

    #[test]
    fn handle_is_shareable() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<ModelHandle>();
    }
}
