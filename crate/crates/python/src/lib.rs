//! Python bindings: stimulus rendering, model probing, CE metrics,
//! statistics and the learnability probe.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use gestalt_probe::canvas::{Canvas, Polarity, RenderStyle};
use gestalt_probe::dots::{self, EfKind, EfParams, Task};
use gestalt_probe::experiment::{self, ExperimentConfig};
use gestalt_probe::learn::{self, export, LearnabilityConfig, TrainConfig};
use gestalt_probe::metrics::{self, CEResult, CeProtocol};
use gestalt_probe::model::{self, ActivationVector, ModelHandle};
use gestalt_probe::pomerantz;
use gestalt_probe::stats;
use gestalt_probe::transform::{TransformKind, TransformSpec};
use gestalt_probe::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Config(_) | Error::UnknownSet(_) | Error::InvalidTransform(_) | Error::LengthMismatch { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// A rendered RGB image.
#[pyclass(name = "Image", frozen)]
struct PyImage {
    canvas: Canvas,
}

#[pymethods]
impl PyImage {
    #[getter]
    fn size(&self) -> u32 {
        self.canvas.size()
    }

    /// Row-major RGB bytes, `size * size * 3` long.
    fn rgb<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.canvas.as_bytes())
    }

    /// Row-major grayscale bytes.
    fn gray<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.canvas.gray())
    }

    fn save_png(&self, path: PathBuf) -> PyResult<()> {
        self.canvas.save_png(path).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Image({0}x{0})", self.canvas.size())
    }
}

fn image(canvas: Canvas) -> PyImage {
    PyImage { canvas }
}

/// The four images of one stimulus set: (base_a, base_b, composite_a, composite_b).
#[pyfunction]
#[pyo3(signature = (set_id, polarity="white_on_black", size=224, noise_seed=0))]
fn render_set(set_id: u32, polarity: &str, size: u32, noise_seed: u64) -> PyResult<(PyImage, PyImage, PyImage, PyImage)> {
    let set = pomerantz::build_set(set_id).map_err(to_py)?;
    let style = RenderStyle::new(parse(polarity)?, noise_seed);
    let base = set.base.render(&style, size).map_err(to_py)?;
    let comp = set.composite.render(&style, size).map_err(to_py)?;
    Ok((image(base.image_a), image(base.image_b), image(comp.image_a), image(comp.image_b)))
}

/// Dot layout of one generated sequence as a JSON string.
#[pyfunction]
fn ef_layout(kind: &str, seed: u64) -> PyResult<String> {
    let layout = dots::generate_layout(parse::<EfKind>(kind)?, seed, &EfParams::default()).map_err(to_py)?;
    serde_json::to_string(&layout).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Render one sequence: (base_a, base_b, composite_a, composite_b).
#[pyfunction]
#[pyo3(signature = (kind, seed, polarity="white_on_black", size=224))]
fn render_ef(kind: &str, seed: u64, polarity: &str, size: u32) -> PyResult<(PyImage, PyImage, PyImage, PyImage)> {
    let layout = dots::generate_layout(parse::<EfKind>(kind)?, seed, &EfParams::default()).map_err(to_py)?;
    let style = RenderStyle::new(parse(polarity)?, seed);
    let (base, comp) = layout.pairs();
    let base = base.render(&style, size).map_err(to_py)?;
    let comp = comp.render(&style, size).map_err(to_py)?;
    Ok((image(base.image_a), image(base.image_b), image(comp.image_a), image(comp.image_b)))
}

#[pyfunction]
fn human_ce() -> Vec<(u32, f64)> {
    pomerantz::bundled_human_ce().into_iter().map(|r| (r.set_id, r.human_ce)).collect()
}

#[pyfunction]
fn cosine(a: Vec<f32>, b: Vec<f32>) -> PyResult<f64> {
    metrics::cosine_slices(&a, &b).map_err(to_py)
}

/// `(rho, p_value, method)`; method is `exact` or `t_approximation`.
#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64, String)> {
    let s = stats::spearman(&x, &y).map_err(to_py)?;
    let method = match s.method {
        stats::PMethod::ExactPermutation => "exact",
        stats::PMethod::StudentT => "t_approximation",
    };
    Ok((s.rho, s.p_value, method.to_string()))
}

/// A loaded ONNX bundle.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    handle: ModelHandle,
}

fn ce_dict(py: Python<'_>, r: &CEResult) -> BTreeMap<&'static str, Py<PyAny>> {
    let mut d: BTreeMap<&'static str, Py<PyAny>> = BTreeMap::new();
    d.insert("label", r.label.clone().into_pyobject(py).expect("str").into_any().unbind());
    d.insert("probe", r.probe_name.clone().into_pyobject(py).expect("str").into_any().unbind());
    for (k, v) in [
        ("base_sim", r.base_similarity),
        ("composite_sim", r.composite_similarity),
        ("ce", r.network_ce),
        ("stderr", r.ce_std_err),
    ] {
        d.insert(k, v.into_pyobject(py).expect("float").into_any().unbind());
    }
    d.insert("n", r.n_repetitions.into_pyobject(py).expect("int").into_any().unbind());
    d
}

#[pymethods]
impl PyModel {
    /// Load `<name>.onnx` (or its `<name>.meta.json` sidecar).
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel { handle: model::load_model(path).map_err(to_py)? })
    }

    /// Write and load the seeded reference SmallNet.
    #[staticmethod]
    #[pyo3(signature = (dir, seed=0))]
    fn builtin(dir: PathBuf, seed: u64) -> PyResult<Self> {
        let path = export::write_builtin(&dir, seed).map_err(to_py)?;
        Self::new(path)
    }

    #[getter]
    fn name(&self) -> String {
        self.handle.name().to_string()
    }

    #[getter]
    fn input_size(&self) -> u32 {
        self.handle.meta().input_size
    }

    /// `[(name, kind, depth_fraction)]`, shallow to deep.
    #[getter]
    fn probes(&self) -> Vec<(String, String, f64)> {
        self.handle.probes().iter().map(|p| (p.name.clone(), p.kind.as_str().to_string(), p.depth_fraction)).collect()
    }

    /// Flattened activations per probe.
    fn activations(&self, image: &PyImage) -> PyResult<BTreeMap<String, Vec<f32>>> {
        let acts = self.handle.forward_canvas(&image.canvas).map_err(to_py)?;
        Ok(acts.0.into_iter().map(|a: ActivationVector| (a.probe_name, a.values)).collect())
    }

    /// Cosine similarity of two images at every probe.
    fn similarity(&self, a: &PyImage, b: &PyImage) -> PyResult<BTreeMap<String, f64>> {
        let (x, y) = (
            self.handle.forward_canvas(&a.canvas).map_err(to_py)?,
            self.handle.forward_canvas(&b.canvas).map_err(to_py)?,
        );
        x.0.iter()
            .zip(&y.0)
            .map(|(p, q)| Ok((p.probe_name.clone(), metrics::cosine(p, q).map_err(to_py)?)))
            .collect()
    }

    /// Network CEs of one stimulus set, one dict per probe.
    #[pyo3(signature = (set_id, repetitions=10, transform="translate", polarity="black_on_random_pixels", seed=0))]
    fn set_ce(
        &self,
        py: Python<'_>,
        set_id: u32,
        repetitions: usize,
        transform: &str,
        polarity: &str,
        seed: u64,
    ) -> PyResult<Vec<BTreeMap<&'static str, Py<PyAny>>>> {
        let protocol = CeProtocol {
            repetitions,
            transform: TransformSpec::of_kind(parse::<TransformKind>(transform)?),
            polarity: parse::<Polarity>(polarity)?,
            seed,
            canvas_size: None,
        };
        let handle = &self.handle;
        let rows = py.detach(|| experiment::run_exp1(handle, &[set_id], &protocol)).map_err(to_py)?;
        Ok(rows.iter().map(|r| ce_dict(py, r)).collect())
    }

    fn __repr__(&self) -> String {
        format!("Model({:?}, probes={})", self.handle.name(), self.handle.probes().len())
    }
}

/// Train SmallNet on a task; returns test accuracy, confusion matrix and
/// the per-epoch training loss.
#[pyfunction]
#[pyo3(signature = (task, n_train=6000, n_test=200, epochs=20, seed=0, shuffled_labels=false))]
fn learnability(
    py: Python<'_>,
    task: &str,
    n_train: usize,
    n_test: usize,
    epochs: usize,
    seed: u64,
    shuffled_labels: bool,
) -> PyResult<(f64, Vec<Vec<usize>>, Vec<f64>)> {
    let task: Task = parse(task)?;
    let cfg = LearnabilityConfig {
        n_train,
        n_test,
        train: TrainConfig { epochs, seed, ..TrainConfig::default() },
        ..LearnabilityConfig::default()
    };
    let r = py.detach(|| learn::run_learnability(task, &cfg, shuffled_labels)).map_err(to_py)?;
    Ok((r.evaluation.accuracy, r.evaluation.confusion, r.trained.curve.iter().map(|e| e.train_loss).collect()))
}

/// Finite-difference check of the small reference SmallNet; returns the
/// largest relative error over every parameter.
#[pyfunction]
#[pyo3(signature = (seed=0, zero_input=false))]
fn gradient_check(seed: u64, zero_input: bool) -> PyResult<f64> {
    Ok(learn::gradcheck::reference_check(seed, zero_input).map_err(to_py)?.max_rel_error)
}

/// Run an experiment config (JSON text); returns the manifest as JSON.
#[pyfunction]
fn run_config(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    let manifest = py.detach(|| experiment::run(&cfg)).map_err(to_py)?;
    serde_json::to_string(&manifest).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
pub fn gestalt_probe_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(render_set, m)?)?;
    m.add_function(wrap_pyfunction!(render_ef, m)?)?;
    m.add_function(wrap_pyfunction!(ef_layout, m)?)?;
    m.add_function(wrap_pyfunction!(human_ce, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(learnability, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_check, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("SET_COUNT", pomerantz::SET_COUNT)?;
    Ok(())
}
