//! Cosine similarity and network configural effects.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canvas::{Polarity, RenderStyle};
use crate::error::{Error, Result};
use crate::model::{ActivationVector, ModelHandle, ProbeActivations};
use crate::rng;
use crate::stimulus::{self, GlyphPair};
use crate::transform::TransformSpec;
use crate::canvas::Canvas;

/// Anything that maps a canvas to per-probe activations.
pub trait FeatureExtractor: Sync {
    fn input_size(&self) -> u32;
    fn probe_names(&self) -> Vec<String>;
    fn extract(&self, canvas: &Canvas) -> Result<ProbeActivations>;
}

impl FeatureExtractor for ModelHandle {
    fn input_size(&self) -> u32 {
        self.meta().input_size
    }

    fn probe_names(&self) -> Vec<String> {
        self.probes().iter().map(|p| p.name.clone()).collect()
    }

    fn extract(&self, canvas: &Canvas) -> Result<ProbeActivations> {
        self.forward_canvas(canvas)
    }
}

/// `a·b / (‖a‖‖b‖)`, accumulated in `f64`.
pub fn cosine_slices(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateActivation("zero-norm activation vector".into()));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub fn cosine(a: &ActivationVector, b: &ActivationVector) -> Result<f64> {
    cosine_slices(&a.values, &b.values).map_err(|e| match e {
        Error::DegenerateActivation(_) => Error::DegenerateActivation(format!("probe {}: zero-norm vector", a.probe_name)),
        other => other,
    })
}

/// Fixed-order running mean and variance (Welford). A constant sequence
/// keeps its mean exactly and has zero variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningStats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Standard error of the mean; zero for fewer than two samples.
    pub fn std_err(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::default();
        iter.into_iter().for_each(|x| s.push(x));
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CEResult {
    /// Set id (first experiment), EF kind, or `sanity`.
    pub label: String,
    pub probe_name: String,
    pub base_similarity: f64,
    pub composite_similarity: f64,
    /// Mean base similarity minus mean composite similarity. Positive
    /// values are superiority effects, negative values inferiority.
    pub network_ce: f64,
    pub n_repetitions: usize,
    pub ce_std_err: f64,
    pub base_std_err: f64,
    pub composite_std_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CeProtocol {
    pub repetitions: usize,
    pub transform: TransformSpec,
    pub polarity: Polarity,
    pub seed: u64,
    /// Canvas size; defaults to the extractor's input size.
    pub canvas_size: Option<u32>,
}

/// Per-repetition cosine similarities, one entry per probe.
#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionSims {
    pub base: Vec<f64>,
    pub composite: Vec<f64>,
}

fn pair_similarities(
    extractor: &dyn FeatureExtractor,
    probes: &[String],
    pair: &GlyphPair,
    style: &RenderStyle,
    size: u32,
) -> Result<Vec<f64>> {
    let rendered = pair.render(style, size)?;
    let a = extractor.extract(&rendered.image_a)?;
    let b = extractor.extract(&rendered.image_b)?;
    probes
        .iter()
        .map(|p| {
            let missing = || Error::Inference(format!("probe {p} missing from extractor output"));
            cosine(a.get(p).ok_or_else(missing)?, b.get(p).ok_or_else(missing)?)
        })
        .collect()
}

/// Run one repetition: draw a transform shared by the base and composite
/// pairs, render both with the same per-slot backgrounds, and compare.
pub fn repetition_similarities(
    extractor: &dyn FeatureExtractor,
    base: &GlyphPair,
    composite: &GlyphPair,
    protocol: &CeProtocol,
    repetition: usize,
) -> Result<RepetitionSims> {
    let probes = extractor.probe_names();
    let size = protocol.canvas_size.unwrap_or_else(|| extractor.input_size());
    let rep_seed = rng::derive_seed(protocol.seed, &[repetition as u64]);
    let (_, moved) = stimulus::sample_in_frame(
        &protocol.transform,
        rng::derive_seed(rep_seed, &[rng::tag("transform")]),
        &[base, composite],
    )?;
    let style = RenderStyle::new(protocol.polarity, rng::derive_seed(rep_seed, &[rng::tag("noise")]));
    Ok(RepetitionSims {
        base: pair_similarities(extractor, &probes, &moved[0], &style, size)?,
        composite: pair_similarities(extractor, &probes, &moved[1], &style, size)?,
    })
}

/// Aggregate repetitions in order into one result per probe.
pub fn aggregate(label: &str, probes: &[String], reps: &[RepetitionSims]) -> Vec<CEResult> {
    probes
        .iter()
        .enumerate()
        .map(|(i, probe)| {
            let base: RunningStats = reps.iter().map(|r| r.base[i]).collect();
            let composite: RunningStats = reps.iter().map(|r| r.composite[i]).collect();
            let diff: RunningStats = reps.iter().map(|r| r.base[i] - r.composite[i]).collect();
            CEResult {
                label: label.to_string(),
                probe_name: probe.clone(),
                base_similarity: base.mean(),
                composite_similarity: composite.mean(),
                network_ce: base.mean() - composite.mean(),
                n_repetitions: reps.len(),
                ce_std_err: diff.std_err(),
                base_std_err: base.std_err(),
                composite_std_err: composite.std_err(),
            }
        })
        .collect()
}

/// Configural effect of one stimulus source at every probe.
///
/// `source(r)` yields the `(base, composite)` glyph pairs for repetition
/// `r`; fixed sets return the same pairs every time, generated dot
/// sequences return a fresh draw. Repetitions may run in parallel; the
/// reduction is in repetition order.
pub fn network_ce<F>(
    extractor: &dyn FeatureExtractor,
    label: &str,
    source: F,
    protocol: &CeProtocol,
) -> Result<Vec<CEResult>>
where
    F: Fn(usize) -> Result<(GlyphPair, GlyphPair)> + Sync,
{
    if protocol.repetitions == 0 {
        return Err(Error::Config("repetitions must be >= 1".into()));
    }
    let reps = (0..protocol.repetitions)
        .into_par_iter()
        .map(|r| {
            let (base, composite) = source(r)?;
            repetition_similarities(extractor, &base, &composite, protocol, r)
        })
        .collect::<Vec<_>>();
    let reps = reps
        .into_iter()
        .enumerate()
        .map(|(repetition, r)| r.map_err(|e| Error::Repetition { repetition, source: Box::new(e) }))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(label, &extractor.probe_names(), &reps))
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Probes over raw pixel intensities: the full image, and its
    /// 4×4 block means. Stands in for a network in unit tests.
    pub struct PixelExtractor(pub u32);

    impl FeatureExtractor for PixelExtractor {
        fn input_size(&self) -> u32 {
            self.0
        }

        fn probe_names(&self) -> Vec<String> {
            vec!["pixels".into(), "blocks".into()]
        }

        fn extract(&self, canvas: &Canvas) -> Result<ProbeActivations> {
            let gray: Vec<f32> = canvas.gray().iter().map(|&v| v as f32 / 255.0 + 0.01).collect();
            let s = canvas.size() as usize;
            let mut blocks = vec![0f32; (s / 4) * (s / 4)];
            for y in 0..s {
                for x in 0..s {
                    blocks[(y / 4) * (s / 4) + x / 4] += gray[y * s + x] / 16.0;
                }
            }
            Ok(ProbeActivations(vec![
                ActivationVector::new("pixels", gray)?,
                ActivationVector::new("blocks", blocks)?,
            ]))
        }
    }
}
