//! Dot-pattern stimuli for the emergent features of proximity, orientation
//! and linearity, the empty-canvas sanity pairs, and the labelled datasets
//! used by the learnability probe.
//!
//! All geometry is generated in normalized coordinates. Pixel-valued
//! parameters are quoted at the 224 px reference size and scale with the
//! rendered canvas.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::canvas::{self, Canvas, Glyph, Point, Polarity, Primitive, RenderStyle, REFERENCE_SIZE};
use crate::error::{Error, Result};
use crate::rng;
use crate::stimulus::{GlyphPair, StimulusPair};

/// Maximum constraint-solver resamples per sequence.
pub const MAX_PLACEMENT_ATTEMPTS: u64 = 100;

/// Convert reference pixels (224 px canvas) to normalized units.
pub fn ref_px(px: f64) -> f64 {
    px / REFERENCE_SIZE as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EfKind {
    Base,
    Proximity,
    Orientation,
    Linearity,
    Sanity,
}

impl EfKind {
    pub const FEATURES: [EfKind; 3] = [EfKind::Proximity, EfKind::Orientation, EfKind::Linearity];

    pub fn as_str(self) -> &'static str {
        match self {
            EfKind::Base => "base",
            EfKind::Proximity => "proximity",
            EfKind::Orientation => "orientation",
            EfKind::Linearity => "linearity",
            EfKind::Sanity => "sanity",
        }
    }

    /// Dots in the composite image of this kind.
    pub fn dot_count(self) -> usize {
        match self {
            EfKind::Base => 1,
            EfKind::Proximity | EfKind::Orientation => 2,
            EfKind::Linearity => 3,
            EfKind::Sanity => 1,
        }
    }
}

impl std::str::FromStr for EfKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [EfKind::Base, EfKind::Proximity, EfKind::Orientation, EfKind::Linearity, EfKind::Sanity]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown EF kind `{s}`")))
    }
}

/// Placement parameters in reference pixels and degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EfParams {
    /// Dot centers keep this distance (normalized) from every edge.
    pub margin: f64,
    pub dot_radius: f64,
    /// Minimum center distance between any two dots.
    pub min_dot_distance_px: f64,
    pub base_min_separation_px: f64,
    pub proximity_near_px: f64,
    pub proximity_far_px: f64,
    pub orientation_min_difference_deg: f64,
    pub equidistance_tolerance_px: f64,
    pub linearity_epsilon_px: f64,
    pub linearity_delta_px: f64,
    /// Range of the distance from the middle dot to the added fourth dot.
    pub linearity_extension_px: (f64, f64),
}

impl Default for EfParams {
    fn default() -> Self {
        EfParams {
            margin: 0.2,
            dot_radius: canvas::DEFAULT_DOT_RADIUS,
            min_dot_distance_px: 12.0,
            base_min_separation_px: 60.0,
            proximity_near_px: 50.0,
            proximity_far_px: 120.0,
            orientation_min_difference_deg: 45.0,
            equidistance_tolerance_px: 1.0,
            linearity_epsilon_px: 1.0,
            linearity_delta_px: 15.0,
            linearity_extension_px: (30.0, 90.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfSetSpec {
    pub kind: EfKind,
    pub seed: u64,
    pub style: RenderStyle,
}

/// Dot locations of one generated sequence. `context` holds the dots added
/// to both images (none for `base`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfLayout {
    pub kind: EfKind,
    pub location_a: Option<Point>,
    pub location_b: Option<Point>,
    pub context: Vec<Point>,
    pub radius: f64,
}

impl EfLayout {
    fn glyph(&self, points: &[Point]) -> Glyph {
        Glyph {
            primitives: points.iter().map(|&c| Primitive::Dot { center: c, radius: self.radius }).collect(),
        }
    }

    pub fn base(&self) -> GlyphPair {
        let a: Vec<Point> = self.location_a.into_iter().collect();
        let b: Vec<Point> = self.location_b.into_iter().collect();
        GlyphPair::new(self.glyph(&a), self.glyph(&b))
    }

    pub fn context_glyph(&self) -> Glyph {
        self.glyph(&self.context)
    }

    pub fn composite(&self) -> GlyphPair {
        self.base().with_context(&self.context_glyph())
    }

    /// Sanity layouts: the base pair is two empty canvases and the
    /// "composite" is one empty canvas against a single dot.
    fn sanity_pairs(&self) -> (GlyphPair, GlyphPair) {
        let dot = self.glyph(&self.context);
        (GlyphPair::default(), GlyphPair::new(Glyph::empty(), dot))
    }

    pub fn pairs(&self) -> (GlyphPair, GlyphPair) {
        match self.kind {
            EfKind::Sanity => self.sanity_pairs(),
            _ => (self.base(), self.composite()),
        }
    }
}

pub fn distance(p: Point, q: Point) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// Orientation of the line through two points, degrees in `[0, 180)`.
pub fn line_orientation_deg(p: Point, q: Point) -> f64 {
    (q[1] - p[1]).atan2(q[0] - p[0]).to_degrees().rem_euclid(180.0)
}

/// Smallest angle between two line orientations, degrees in `[0, 90]`.
pub fn orientation_difference_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(180.0);
    d.min(180.0 - d)
}

/// Perpendicular distance of the middle point of a triple from the line
/// through the two outer points (the farthest-apart pair).
pub fn collinearity_deviation(points: [Point; 3]) -> f64 {
    let pairs = [(0, 1, 2), (0, 2, 1), (1, 2, 0)];
    let &(i, j, k) = pairs
        .iter()
        .max_by(|x, y| distance(points[x.0], points[x.1]).total_cmp(&distance(points[y.0], points[y.1])))
        .expect("three pairs");
    let (a, b, m) = (points[i], points[j], points[k]);
    let len = distance(a, b);
    ((b[0] - a[0]) * (a[1] - m[1]) - (a[0] - m[0]) * (b[1] - a[1])).abs() / len
}

fn in_box(p: Point, margin: f64) -> bool {
    (margin..=1.0 - margin).contains(&p[0]) && (margin..=1.0 - margin).contains(&p[1])
}

fn uniform_point(rng: &mut ChaCha8Rng, margin: f64) -> Point {
    [rng.random_range(margin..=1.0 - margin), rng.random_range(margin..=1.0 - margin)]
}

fn far_enough(p: Point, others: &[Point], min: f64) -> bool {
    others.iter().all(|&o| distance(p, o) >= min)
}

const PROXIMITY_FAR_DRAWS: usize = 64;

fn try_layout(kind: EfKind, params: &EfParams, rng: &mut ChaCha8Rng) -> Option<EfLayout> {
    let m = params.margin;
    let min_d = ref_px(params.min_dot_distance_px).max(2.0 * params.dot_radius);
    let layout = |a, b, context| EfLayout { kind, location_a: a, location_b: b, context, radius: params.dot_radius };

    if kind == EfKind::Sanity {
        return Some(layout(None, None, vec![uniform_point(rng, m)]));
    }

    let a = uniform_point(rng, m);
    if kind == EfKind::Proximity {
        // The far constraint leaves little room inside the margin box, so
        // place the context first and draw `b` against it.
        let rho = rng.random_range(min_d..=ref_px(params.proximity_near_px));
        let phi = rng.random_range(0.0..2.0 * PI);
        let c = [a[0] + rho * phi.cos(), a[1] + rho * phi.sin()];
        if !in_box(c, m) {
            return None;
        }
        return (0..PROXIMITY_FAR_DRAWS)
            .map(|_| uniform_point(rng, m))
            .find(|&b| {
                distance(a, b) >= ref_px(params.base_min_separation_px)
                    && distance(b, c) >= ref_px(params.proximity_far_px)
                    && far_enough(c, &[a, b], min_d)
            })
            .map(|b| layout(Some(a), Some(b), vec![c]));
    }
    let b = uniform_point(rng, m);
    if distance(a, b) < ref_px(params.base_min_separation_px) {
        return None;
    }
    match kind {
        EfKind::Base | EfKind::Sanity | EfKind::Proximity => Some(layout(Some(a), Some(b), vec![])),
        EfKind::Orientation | EfKind::Linearity => {
            let c = orientation_context(a, b, params, rng)?;
            if !(in_box(c, m) && far_enough(c, &[a, b], min_d)) {
                return None;
            }
            if kind == EfKind::Orientation {
                return Some(layout(Some(a), Some(b), vec![c]));
            }
            let (lo, hi) = params.linearity_extension_px;
            let t = rng.random_range(ref_px(lo)..=ref_px(hi));
            let ac = distance(a, c);
            let d = [c[0] + t * (c[0] - a[0]) / ac, c[1] + t * (c[1] - a[1]) / ac];
            let ok = in_box(d, m)
                && far_enough(d, &[a, b, c], min_d)
                && collinearity_deviation([a, c, d]) <= ref_px(params.linearity_epsilon_px)
                && collinearity_deviation([b, c, d]) >= ref_px(params.linearity_delta_px);
            ok.then(|| layout(Some(a), Some(b), vec![c, d]))
        }
    }
}

/// A point on the perpendicular bisector of `ab` seen from `a` and `b` at
/// orientations differing by at least the configured threshold.
fn orientation_context(a: Point, b: Point, params: &EfParams, rng: &mut ChaCha8Rng) -> Option<Point> {
    let half = distance(a, b) / 2.0;
    let min_diff = params.orientation_min_difference_deg.to_radians();
    // The angle subtended at the context dot is 2·atan(half / h); keep it in
    // [min_diff, π − min_diff] so the line orientations differ enough.
    let h_lo = half / (PI / 2.0 - min_diff / 2.0).tan();
    let h_hi = half / (min_diff / 2.0).tan();
    if !(h_lo < h_hi) {
        return None;
    }
    let h = rng.random_range(h_lo..=h_hi) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
    let (ux, uy) = (-(b[1] - a[1]) / (2.0 * half), (b[0] - a[0]) / (2.0 * half));
    let c = [mid[0] + h * ux, mid[1] + h * uy];
    let diff = orientation_difference_deg(line_orientation_deg(a, c), line_orientation_deg(b, c));
    let equidistant = (distance(a, c) - distance(b, c)).abs() <= ref_px(params.equidistance_tolerance_px);
    (diff >= params.orientation_min_difference_deg - 1e-9 && equidistant).then_some(c)
}

/// Solve the placement constraints for one sequence.
pub fn generate_layout(kind: EfKind, seed: u64, params: &EfParams) -> Result<EfLayout> {
    for attempt in 0..MAX_PLACEMENT_ATTEMPTS {
        let mut rng = rng::rng_from(seed, &[rng::tag("ef-layout"), attempt]);
        if let Some(layout) = try_layout(kind, params, &mut rng) {
            return Ok(layout);
        }
    }
    Err(Error::InfeasiblePlacement(format!("{} after {MAX_PLACEMENT_ATTEMPTS} resamples", kind.as_str())))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EfStimulus {
    pub base: StimulusPair,
    pub composite: StimulusPair,
}

/// Generate and rasterize one sequence.
pub fn gen_ef_sequence(spec: &EfSetSpec, params: &EfParams, size: u32) -> Result<EfStimulus> {
    let layout = generate_layout(spec.kind, spec.seed, params)?;
    let (base, composite) = layout.pairs();
    Ok(EfStimulus { base: base.render(&spec.style, size)?, composite: composite.render(&spec.style, size)? })
}

/// Write `n` rendered sequences of one kind as PNGs
/// (`<kind>_<i>_{base,composite}_{a,b}.png`) plus `<kind>_layouts.json`.
/// Returns the layouts.
pub fn export_ef_sequences(
    kind: EfKind,
    n: usize,
    seed: u64,
    polarity: Polarity,
    size: u32,
    dir: impl AsRef<Path>,
) -> Result<Vec<EfLayout>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let params = EfParams::default();
    let mut layouts = Vec::with_capacity(n);
    for i in 0..n {
        let spec = EfSetSpec {
            kind,
            seed: rng::derive_seed(seed, &[i as u64]),
            style: RenderStyle::new(polarity, rng::derive_seed(seed, &[rng::tag("noise"), i as u64])),
        };
        let layout = generate_layout(kind, spec.seed, &params)?;
        let (base, composite) = layout.pairs();
        for (which, pair) in [("base", base), ("composite", composite)] {
            let rendered = pair.render(&spec.style, size)?;
            rendered.image_a.save_png(dir.join(format!("{}_{i:03}_{which}_a.png", kind.as_str())))?;
            rendered.image_b.save_png(dir.join(format!("{}_{i:03}_{which}_b.png", kind.as_str())))?;
        }
        layouts.push(layout);
    }
    std::fs::write(dir.join(format!("{}_layouts.json", kind.as_str())), serde_json::to_string_pretty(&layouts)?)?;
    Ok(layouts)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SanityPairs {
    pub empty_pair: StimulusPair,
    pub empty_vs_dot: StimulusPair,
}

/// Two background-only canvases, and one background-only canvas against a
/// single-dot canvas. Random-pixel backgrounds are independent per image.
pub fn gen_sanity_pairs(style: &RenderStyle, seed: u64, size: u32) -> Result<SanityPairs> {
    let layout = generate_layout(EfKind::Sanity, seed, &EfParams::default())?;
    let (empty, with_dot) = layout.pairs();
    Ok(SanityPairs { empty_pair: empty.render(style, size)?, empty_vs_dot: with_dot.render(style, size)? })
}

// ---------------------------------------------------------------------------
// Training datasets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Proximity3,
    Orientation3,
    Linearity2,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Proximity3, Task::Orientation3, Task::Linearity2];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Proximity3 => "proximity3",
            Task::Orientation3 => "orientation3",
            Task::Linearity2 => "linearity2",
        }
    }

    pub fn labels(self) -> &'static [&'static str] {
        match self {
            Task::Proximity3 => &["close", "medium", "large"],
            Task::Orientation3 => &["low", "mid", "high"],
            Task::Linearity2 => &["collinear", "non_collinear"],
        }
    }

    pub fn class_count(self) -> usize {
        self.labels().len()
    }

    /// Class bands: reference pixels for proximity and linearity deviation,
    /// degrees for orientation.
    pub fn bands(self) -> &'static [(f64, f64)] {
        match self {
            Task::Proximity3 => &[(12.0, 50.0), (60.0, 110.0), (120.0, 170.0)],
            Task::Orientation3 => &[(0.0, 25.0), (35.0, 60.0), (75.0, 90.0)],
            Task::Linearity2 => &[(0.0, 0.0), (15.0, 30.0)],
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub canvas: Canvas,
    pub label: usize,
    /// Distance (reference px), orientation (degrees) or deviation
    /// (reference px) that placed the sample in its class.
    pub param_value: f64,
    pub dots: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDataset {
    pub task: Task,
    pub size: u32,
    pub samples: Vec<Sample>,
}

impl ClassDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.task.class_count()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Same images with labels permuted at random (no-signal control).
    pub fn with_shuffled_labels(&self, seed: u64) -> ClassDataset {
        let mut labels: Vec<usize> = self.samples.iter().map(|s| s.label).collect();
        labels.shuffle(&mut rng::rng_from(seed, &[rng::tag("shuffle-labels")]));
        let samples = self
            .samples
            .iter()
            .zip(labels)
            .map(|(s, label)| Sample { label, ..s.clone() })
            .collect();
        ClassDataset { task: self.task, size: self.size, samples }
    }

    /// Write `<prefix>_<index>.png` files and a `manifest.csv` with
    /// `filename,label,param_value`.
    pub fn export(&self, dir: impl AsRef<Path>, prefix: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut manifest = csv::Writer::from_path(dir.join(format!("{prefix}_manifest.csv")))?;
        manifest.write_record(["filename", "label", "param_value"])?;
        for (i, s) in self.samples.iter().enumerate() {
            let name = format!("{prefix}_{i:05}.png");
            s.canvas.save_png(dir.join(&name))?;
            manifest.write_record([name, self.task.labels()[s.label].to_string(), format!("{:.4}", s.param_value)])?;
        }
        manifest.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetOptions {
    pub size: u32,
    pub polarity: Polarity,
    pub margin: f64,
    pub dot_radius: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions { size: 64, polarity: Polarity::WhiteOnBlack, margin: 0.08, dot_radius: canvas::DEFAULT_DOT_RADIUS }
    }
}

/// Sample `offset` uniformly, then place the configuration so that every
/// point (given relative to the first) lies inside the margin box.
fn place(rel: &[Point], margin: f64, rng: &mut ChaCha8Rng) -> Option<Vec<Point>> {
    let min_x = rel.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let max_x = rel.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_y = rel.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let max_y = rel.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let (x_lo, x_hi) = (margin - min_x, 1.0 - margin - max_x);
    let (y_lo, y_hi) = (margin - min_y, 1.0 - margin - max_y);
    if x_lo > x_hi || y_lo > y_hi {
        return None;
    }
    let ox = rng.random_range(x_lo..=x_hi);
    let oy = rng.random_range(y_lo..=y_hi);
    Some(rel.iter().map(|p| [p[0] + ox, p[1] + oy]).collect())
}

fn sample_in_band(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo < hi {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

fn dataset_sample(task: Task, label: usize, opts: &DatasetOptions, rng: &mut ChaCha8Rng) -> Result<(Vec<Point>, f64)> {
    let band = task.bands()[label];
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let phi = rng.random_range(0.0..2.0 * PI);
        let (rel, value) = match task {
            Task::Proximity3 => {
                let d = sample_in_band(rng, band);
                (vec![[0.0, 0.0], [ref_px(d) * phi.cos(), ref_px(d) * phi.sin()]], d)
            }
            Task::Orientation3 => {
                let theta = sample_in_band(rng, band);
                let d = ref_px(rng.random_range(60.0..=110.0));
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let t = theta.to_radians();
                (vec![[0.0, 0.0], [d * t.cos(), sign * d * t.sin()]], theta)
            }
            Task::Linearity2 => {
                let len = ref_px(rng.random_range(40.0..=64.0));
                let u = rng.random_range(0.35..=0.65);
                let dev = sample_in_band(rng, band);
                let e = ref_px(dev) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let (dx, dy) = (phi.cos(), phi.sin());
                let middle = [u * len * dx - e * dy, u * len * dy + e * dx];
                (vec![[0.0, 0.0], middle, [len * dx, len * dy]], dev)
            }
        };
        if let Some(points) = place(&rel, opts.margin, rng) {
            return Ok((points, value));
        }
    }
    Err(Error::InfeasiblePlacement(format!("{} class {label}", task.as_str())))
}

/// One dataset split; the split name keeps train and test draws disjoint.
fn gen_split(task: Task, n: usize, seed: u64, split: &str, opts: &DatasetOptions) -> Result<ClassDataset> {
    let k = task.class_count();
    let style = RenderStyle::new(opts.polarity, 0);
    let samples = (0..n)
        .map(|i| {
            let label = i % k;
            let mut rng = rng::rng_from(seed, &[rng::tag(task.as_str()), rng::tag(split), i as u64]);
            let (dots, param_value) = dataset_sample(task, label, opts, &mut rng)?;
            let glyph = Glyph {
                primitives: dots.iter().map(|&c| Primitive::Dot { center: c, radius: opts.dot_radius }).collect(),
            };
            let style = RenderStyle { noise_seed: rng::derive_seed(seed, &[rng::tag(split), i as u64]), ..style };
            let canvas = canvas::render(&glyph, &style, opts.size)?;
            Ok(Sample { canvas, label, param_value, dots })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ClassDataset { task, size: opts.size, samples })
}

/// Train and test datasets for a task. Labels cycle through the classes,
/// so the training split must divide evenly; the test split may differ by
/// one sample between classes (200 held-out samples over 3 classes).
pub fn gen_training_dataset(
    task: Task,
    n_train: usize,
    n_test: usize,
    seed: u64,
    opts: &DatasetOptions,
) -> Result<(ClassDataset, ClassDataset)> {
    let k = task.class_count();
    if n_train % k != 0 || n_test == 0 {
        return Err(Error::InvalidDataset(format!(
            "n_train={n_train} must be divisible by {k} classes and n_test={n_test} positive"
        )));
    }
    Ok((gen_split(task, n_train, seed, "train", opts)?, gen_split(task, n_test, seed, "test", opts)?))
}
