//! Config-driven experiment grid: stimulus sets × models × styles ×
//! transforms, written out as CSV tables, a manifest and SVG figures.

pub mod plot;
pub mod svg;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::canvas::Polarity;
use crate::dots::{generate_layout, EfKind, EfParams, Task};
use crate::error::{Error, Result};
use crate::learn::{self, export, LearnabilityConfig};
use crate::metrics::{network_ce, CEResult, CeProtocol, FeatureExtractor};
use crate::model::{load_model, ModelHandle};
use crate::pomerantz::{self, HumanCERecord};
use crate::rng;
use crate::stats::{exclusion_analysis, CorrelationReport, DRIVING_SETS};
use crate::transform::{TransformKind, TransformSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Exp1,
    Exp2,
    Sanity,
    Learnability,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Exp1 => "exp1",
            ExperimentKind::Exp2 => "exp2",
            ExperimentKind::Sanity => "sanity",
            ExperimentKind::Learnability => "learnability",
        }
    }
}

fn default_styles() -> Vec<Polarity> {
    vec![Polarity::BlackOnRandomPixels]
}

fn default_transforms() -> Vec<TransformKind> {
    vec![TransformKind::Translate]
}

fn default_repetitions() -> usize {
    100
}

fn default_workers() -> usize {
    1
}

fn default_tasks() -> Vec<Task> {
    Task::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Bundle paths (`.onnx` or `.meta.json`), or `builtin:smallnet`.
    #[serde(default)]
    pub models: Vec<String>,
    pub experiments: Vec<ExperimentKind>,
    #[serde(default = "default_styles")]
    pub styles: Vec<Polarity>,
    #[serde(default = "default_transforms")]
    pub transforms: Vec<TransformKind>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Human CE table; the bundled one when absent.
    #[serde(default)]
    pub human_ce_path: Option<PathBuf>,
    /// Subset of the 17 sets for exp1; all when absent.
    #[serde(default)]
    pub sets: Option<Vec<u32>>,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub learnability: LearnabilityConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        // Relative paths in the file are taken relative to the file.
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        cfg.output_dir = rebase(&cfg.output_dir);
        cfg.human_ce_path = cfg.human_ce_path.as_deref().map(rebase);
        cfg.models = cfg
            .models
            .iter()
            .map(|m| if m.starts_with("builtin:") { m.clone() } else { rebase(Path::new(m)).to_string_lossy().into_owned() })
            .collect();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.experiments.is_empty() {
            return bad("experiments must not be empty");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be >= 1");
        }
        if self.workers == 0 {
            return bad("workers must be >= 1");
        }
        let needs_models = self.experiments.iter().any(|e| *e != ExperimentKind::Learnability);
        if needs_models && self.models.is_empty() {
            return bad("models must not be empty for exp1, exp2 or sanity");
        }
        if needs_models && (self.styles.is_empty() || self.transforms.is_empty()) {
            return bad("styles and transforms must not be empty");
        }
        if let Some(sets) = &self.sets {
            if let Some(&s) = sets.iter().find(|&&s| s == 0 || s > pomerantz::SET_COUNT) {
                return Err(Error::UnknownSet(s));
            }
        }
        if self.experiments.contains(&ExperimentKind::Learnability) {
            if self.tasks.is_empty() {
                return bad("tasks must not be empty for learnability");
            }
            self.learnability.train.validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn set_ids(&self) -> Vec<u32> {
        self.sets.clone().unwrap_or_else(|| (1..=pomerantz::SET_COUNT).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Done,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub id: String,
    pub experiment: ExperimentKind,
    pub model: Option<String>,
    pub style: Option<Polarity>,
    pub transform: Option<TransformKind>,
    pub task: Option<Task>,
    pub seed: u64,
    pub status: CellStatus,
    /// Files written by the cell, relative to the output directory.
    pub outputs: Vec<String>,
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub cells: Vec<CellRecord>,
    pub done: usize,
    pub skipped: usize,
    pub failed: usize,
    pub figures: Vec<String>,
    pub plot_error: Option<String>,
}

impl RunManifest {
    pub fn success(&self) -> bool {
        self.failed == 0
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub const RESULTS_HEADER: [&str; 8] = ["model", "probe", "set_or_ef", "base_sim", "composite_sim", "ce", "stderr", "n"];
pub const CORRELATION_HEADER: [&str; 6] = ["model", "probe", "rho", "p", "n", "excluded"];

pub fn write_results(path: &Path, model: &str, rows: &[CEResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            model.to_string(),
            r.probe_name.clone(),
            r.label.clone(),
            r.base_similarity.to_string(),
            r.composite_similarity.to_string(),
            r.network_ce.to_string(),
            r.ce_std_err.to_string(),
            r.n_repetitions.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_correlations(path: &Path, rows: &[(String, CorrelationReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CORRELATION_HEADER)?;
    for (model, r) in rows {
        let excluded = r.excluded_sets.iter().map(u32::to_string).collect::<Vec<_>>().join(";");
        w.write_record([
            model.clone(),
            r.probe_name.clone(),
            r.rho.to_string(),
            r.p_value.to_string(),
            r.n.to_string(),
            excluded,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Concatenate CSV files that share a header, keeping one header.
fn merge_csv(parts: &[PathBuf], out: &Path) -> Result<()> {
    let mut merged = String::new();
    for (i, part) in parts.iter().enumerate() {
        let text = fs::read_to_string(part)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if i == 0 {
            merged.push_str(header);
            merged.push('\n');
        }
        for l in lines {
            merged.push_str(l);
            merged.push('\n');
        }
    }
    fs::write(out, merged)?;
    Ok(())
}

/// Exp1 CEs for every requested set.
pub fn run_exp1(extractor: &dyn FeatureExtractor, sets: &[u32], protocol: &CeProtocol) -> Result<Vec<CEResult>> {
    let mut out = Vec::new();
    for &id in sets {
        let set = pomerantz::build_set(id)?;
        let p = CeProtocol { seed: rng::derive_seed(protocol.seed, &[id as u64]), ..*protocol };
        out.extend(network_ce(extractor, &id.to_string(), |_| Ok((set.base.clone(), set.composite.clone())), &p)?);
    }
    Ok(out)
}

/// Exp2 CEs: a fresh dot layout per repetition for each EF kind.
pub fn run_exp2(extractor: &dyn FeatureExtractor, protocol: &CeProtocol) -> Result<Vec<CEResult>> {
    run_dot_kinds(extractor, &EfKind::FEATURES, protocol)
}

/// Empty pair versus empty-vs-dot pair: `base_sim` is the similarity of
/// two background-only images, `composite_sim` of background against dot.
pub fn run_sanity(extractor: &dyn FeatureExtractor, protocol: &CeProtocol) -> Result<Vec<CEResult>> {
    run_dot_kinds(extractor, &[EfKind::Sanity], protocol)
}

fn run_dot_kinds(extractor: &dyn FeatureExtractor, kinds: &[EfKind], protocol: &CeProtocol) -> Result<Vec<CEResult>> {
    let params = EfParams::default();
    let mut out = Vec::new();
    for &kind in kinds {
        let seed = rng::derive_seed(protocol.seed, &[rng::tag(kind.as_str())]);
        let p = CeProtocol { seed, ..*protocol };
        let source = |r: usize| {
            let layout = generate_layout(kind, rng::derive_seed(seed, &[rng::tag("layout"), r as u64]), &params)?;
            Ok(layout.pairs())
        };
        out.extend(network_ce(extractor, kind.as_str(), source, &p)?);
    }
    Ok(out)
}

fn load_models(cfg: &ExperimentConfig) -> Vec<(String, Result<ModelHandle>)> {
    cfg.models
        .iter()
        .map(|spec| {
            if spec == export::BUILTIN_MODEL {
                let dir = cfg.output_dir.join("models");
                let handle = fs::create_dir_all(&dir)
                    .map_err(Error::from)
                    .and_then(|_| export::write_builtin(&dir, rng::derive_seed(cfg.seed, &[rng::tag("builtin")])))
                    .and_then(load_model)
                    .map(|m| m.with_name("smallnet"));
                ("smallnet".to_string(), handle)
            } else {
                let stem = Path::new(spec)
                    .file_name()
                    .map(|s| s.to_string_lossy().trim_end_matches(".meta.json").trim_end_matches(".onnx").to_string())
                    .unwrap_or_else(|| spec.clone());
                (stem, load_model(spec))
            }
        })
        .collect()
}

struct CellPlan {
    record: CellRecord,
    model_index: Option<usize>,
}

fn condition_name(exp: ExperimentKind, style: Polarity, transform: TransformKind) -> String {
    format!("{}_{}_{}", exp.as_str(), style.as_str(), transform.as_str())
}

fn plan_cells(cfg: &ExperimentConfig, model_names: &[String]) -> Vec<CellPlan> {
    let mut cells = Vec::new();
    let mut experiments = cfg.experiments.clone();
    experiments.sort();
    experiments.dedup();
    for &exp in &experiments {
        if exp == ExperimentKind::Learnability {
            for &task in &cfg.tasks {
                let seed = rng::derive_seed(cfg.seed, &[rng::tag("learnability"), rng::tag(task.as_str())]);
                cells.push(CellPlan {
                    record: CellRecord {
                        id: format!("learnability_{}", task.as_str()),
                        experiment: exp,
                        model: None,
                        style: None,
                        transform: None,
                        task: Some(task),
                        seed,
                        status: CellStatus::Skipped,
                        outputs: vec![],
                        error: None,
                        seconds: 0.0,
                    },
                    model_index: None,
                });
            }
            continue;
        }
        for &style in &cfg.styles {
            for &transform in &cfg.transforms {
                // Stimulus seeds do not depend on the model, so every model
                // sees the same stimuli within a condition.
                let seed = rng::derive_seed(
                    cfg.seed,
                    &[rng::tag(exp.as_str()), rng::tag(style.as_str()), rng::tag(transform.as_str())],
                );
                for (mi, model) in model_names.iter().enumerate() {
                    cells.push(CellPlan {
                        record: CellRecord {
                            id: format!("{}__{model}", condition_name(exp, style, transform)),
                            experiment: exp,
                            model: Some(model.clone()),
                            style: Some(style),
                            transform: Some(transform),
                            task: None,
                            seed,
                            status: CellStatus::Skipped,
                            outputs: vec![],
                            error: None,
                            seconds: 0.0,
                        },
                        model_index: Some(mi),
                    });
                }
            }
        }
    }
    cells
}

fn run_model_cell(
    cfg: &ExperimentConfig,
    record: &CellRecord,
    model: &ModelHandle,
    cell_dir: &Path,
) -> Result<Vec<String>> {
    let protocol = CeProtocol {
        repetitions: cfg.repetitions,
        transform: TransformSpec::of_kind(record.transform.expect("model cell")),
        polarity: record.style.expect("model cell"),
        seed: record.seed,
        canvas_size: None,
    };
    let rows = match record.experiment {
        ExperimentKind::Exp1 => run_exp1(model, &cfg.set_ids(), &protocol)?,
        ExperimentKind::Exp2 => run_exp2(model, &protocol)?,
        ExperimentKind::Sanity => run_sanity(model, &protocol)?,
        ExperimentKind::Learnability => unreachable!("learnability cells have no model"),
    };
    let path = cell_dir.join(format!("{}.csv", record.id));
    write_results(&path, model.name(), &rows)?;
    Ok(vec![format!("cells/{}.csv", record.id)])
}

fn run_learnability_cell(cfg: &ExperimentConfig, record: &CellRecord, out_dir: &Path) -> Result<Vec<String>> {
    let task = record.task.expect("learnability cell");
    let dir = out_dir.join("learnability");
    fs::create_dir_all(&dir)?;
    let lcfg = LearnabilityConfig { train: learn::TrainConfig { seed: record.seed, ..cfg.learnability.train }, ..cfg.learnability };
    let mut outputs = Vec::new();
    let mut summary = csv::Writer::from_path(dir.join(format!("{}_summary.csv", task.as_str())))?;
    summary.write_record(["task", "condition", "test_accuracy", "final_train_loss", "n_train", "n_test"])?;
    for shuffled in [false, true] {
        let condition = if shuffled { "shuffled_labels" } else { "trained" };
        let r = learn::run_learnability(task, &lcfg, shuffled)?;
        let stem = format!("{}_{condition}", task.as_str());
        learn::write_loss_curve(&dir.join(format!("{stem}_loss.csv")), &r.trained.curve)?;
        learn::write_confusion(&dir.join(format!("{stem}_confusion.csv")), task, &r.evaluation.confusion)?;
        outputs.push(format!("learnability/{stem}_loss.csv"));
        outputs.push(format!("learnability/{stem}_confusion.csv"));
        if !shuffled {
            export::export_bundle(&r.trained.net, &dir, &format!("smallnet_{}", task.as_str()))?;
            outputs.push(format!("learnability/smallnet_{}.onnx", task.as_str()));
        }
        summary.write_record([
            task.as_str().to_string(),
            condition.to_string(),
            r.evaluation.accuracy.to_string(),
            r.trained.curve.last().map(|e| e.train_loss).unwrap_or(f64::NAN).to_string(),
            lcfg.n_train.to_string(),
            lcfg.n_test.to_string(),
        ])?;
    }
    summary.flush()?;
    outputs.push(format!("learnability/{}_summary.csv", task.as_str()));
    Ok(outputs)
}

fn human_table(cfg: &ExperimentConfig) -> Result<Vec<HumanCERecord>> {
    match &cfg.human_ce_path {
        Some(p) => pomerantz::load_human_ce(p),
        None => Ok(pomerantz::bundled_human_ce()),
    }
}

/// Correlate each model's exp1 CEs at every probe with the human table,
/// with and without the driving sets.
fn correlations_for(rows_by_model: &[(String, Vec<CEResult>)], human: &[HumanCERecord]) -> Result<Vec<(String, CorrelationReport)>> {
    let mut out = Vec::new();
    for (model, rows) in rows_by_model {
        let mut probes: Vec<&str> = Vec::new();
        for r in rows {
            if !probes.contains(&r.probe_name.as_str()) {
                probes.push(&r.probe_name);
            }
        }
        for probe in probes {
            let ce: BTreeMap<u32, f64> = rows
                .iter()
                .filter(|r| r.probe_name == probe)
                .map(|r| (r.label.parse::<u32>().expect("exp1 labels are set ids"), r.network_ce))
                .collect();
            let (full, excluded) = exclusion_analysis(probe, &ce, human, &DRIVING_SETS)?;
            out.push((model.clone(), full));
            out.push((model.clone(), excluded));
        }
    }
    Ok(out)
}

fn read_results(path: &Path) -> Result<Vec<CEResult>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| rec.get(i).unwrap_or_default().parse::<f64>().unwrap_or(f64::NAN);
        out.push(CEResult {
            label: rec[2].to_string(),
            probe_name: rec[1].to_string(),
            base_similarity: f(3),
            composite_similarity: f(4),
            network_ce: f(5),
            n_repetitions: rec[7].parse().unwrap_or(0),
            ce_std_err: f(6),
            base_std_err: f64::NAN,
            composite_std_err: f64::NAN,
        });
    }
    Ok(out)
}

/// Execute the whole grid. Cell failures are recorded in the manifest and
/// do not stop the run; configuration and output-directory errors do.
pub fn run(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let started_unix = unix_now();
    let out_dir = &cfg.output_dir;
    let cell_dir = out_dir.join("cells");
    fs::create_dir_all(&cell_dir)?;

    let needs_models = cfg.experiments.iter().any(|e| *e != ExperimentKind::Learnability);
    let models = if needs_models { load_models(cfg) } else { vec![] };
    let model_names: Vec<String> = models.iter().map(|(n, _)| n.clone()).collect();
    let plans = plan_cells(cfg, &model_names);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let mut cells: Vec<CellRecord> = pool.install(|| {
        plans
            .par_iter()
            .map(|plan| {
                let t0 = Instant::now();
                let mut record = plan.record.clone();
                let result = match plan.model_index {
                    Some(mi) => match &models[mi].1 {
                        Ok(model) => run_model_cell(cfg, &record, model, &cell_dir),
                        Err(e) => Err(Error::ModelLoad(e.to_string())),
                    },
                    None => run_learnability_cell(cfg, &record, out_dir),
                };
                match result {
                    Ok(outputs) => {
                        record.status = CellStatus::Done;
                        record.outputs = outputs;
                    }
                    Err(e) => {
                        record.status = CellStatus::Failed;
                        record.error = Some(e.to_string());
                    }
                }
                record.seconds = t0.elapsed().as_secs_f64();
                record
            })
            .collect()
    });

    // Merge per-condition tables in grid order.
    let human = human_table(cfg);
    if needs_models {
        fs::write(
            out_dir.join("human_ce.csv"),
            match &cfg.human_ce_path {
                Some(p) => fs::read_to_string(p).unwrap_or_default(),
                None => pomerantz::bundled_human_ce_csv().to_string(),
            },
        )?;
    }
    let mut conditions: Vec<(ExperimentKind, Polarity, TransformKind)> = Vec::new();
    for c in &cells {
        if let (Some(s), Some(t)) = (c.style, c.transform) {
            if !conditions.contains(&(c.experiment, s, t)) {
                conditions.push((c.experiment, s, t));
            }
        }
    }
    let mut correlation_cells = Vec::new();
    for (exp, style, transform) in conditions {
        let name = condition_name(exp, style, transform);
        let done: Vec<&CellRecord> = cells
            .iter()
            .filter(|c| c.experiment == exp && c.style == Some(style) && c.transform == Some(transform))
            .filter(|c| c.status == CellStatus::Done)
            .collect();
        if done.is_empty() {
            continue;
        }
        let parts: Vec<PathBuf> = done.iter().map(|c| out_dir.join(&c.outputs[0])).collect();
        merge_csv(&parts, &out_dir.join(format!("{name}.csv")))?;
        if exp != ExperimentKind::Exp1 {
            continue;
        }
        let mut record = CellRecord {
            id: format!("correlations_{}_{}", style.as_str(), transform.as_str()),
            experiment: exp,
            model: None,
            style: Some(style),
            transform: Some(transform),
            task: None,
            seed: 0,
            status: CellStatus::Done,
            outputs: vec![],
            error: None,
            seconds: 0.0,
        };
        let result = human.as_ref().map_err(|e| Error::Config(e.to_string())).and_then(|human| {
            let by_model = done
                .iter()
                .map(|c| Ok((c.model.clone().unwrap_or_default(), read_results(&out_dir.join(&c.outputs[0]))?)))
                .collect::<Result<Vec<_>>>()?;
            let rows = correlations_for(&by_model, human)?;
            let file = format!("correlations_{}_{}.csv", style.as_str(), transform.as_str());
            write_correlations(&out_dir.join(&file), &rows)?;
            Ok(file)
        });
        match result {
            Ok(file) => record.outputs.push(file),
            Err(e) => {
                record.status = CellStatus::Failed;
                record.error = Some(e.to_string());
            }
        }
        correlation_cells.push(record);
    }
    cells.extend(correlation_cells);

    let (figures, plot_error) = match plot::plot(out_dir) {
        Ok(files) => (files, None),
        Err(e) => (vec![], Some(e.to_string())),
    };

    let count = |s: CellStatus| cells.iter().filter(|c| c.status == s).count();
    let seeds = cells.iter().filter(|c| c.seed != 0).map(|c| (c.id.clone(), c.seed)).collect();
    let manifest = RunManifest {
        tool: "gestalt-probe".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: cfg.hash(),
        config: cfg.clone(),
        seed: cfg.seed,
        seeds,
        started_unix,
        finished_unix: unix_now(),
        done: count(CellStatus::Done),
        skipped: count(CellStatus::Skipped),
        failed: count(CellStatus::Failed),
        cells,
        figures,
        plot_error,
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(json: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(json)
    }

    #[test]
    fn defaults_follow_headline_condition() {
        let c = cfg(r#"{"models": ["builtin:smallnet"], "experiments": ["sanity"], "output_dir": "out"}"#).unwrap();
        assert_eq!(c.styles, vec![Polarity::BlackOnRandomPixels]);
        assert_eq!(c.transforms, vec![TransformKind::Translate]);
        assert_eq!(c.repetitions, 100);
    }

    #[test]
    fn invalid_configs() {
        assert!(cfg(r#"{"models": ["m"], "experiments": [], "output_dir": "o"}"#).is_err());
        assert!(cfg(r#"{"models": ["m"], "experiments": ["exp1"], "repetitions": 0, "output_dir": "o"}"#).is_err());
        assert!(cfg(r#"{"models": [], "experiments": ["exp1"], "output_dir": "o"}"#).is_err());
        assert!(cfg(r#"{"models": ["m"], "experiments": ["exp3"], "output_dir": "o"}"#).is_err());
        assert!(cfg(r#"{"models": ["m"], "experiments": ["exp1"], "sets": [18], "output_dir": "o"}"#).is_err());
        assert!(cfg(r#"{"experiments": ["learnability"], "output_dir": "o", "bogus": 1}"#).is_err());
        assert!(cfg(r#"{"experiments": ["learnability"], "output_dir": "o"}"#).is_ok());
    }

    #[test]
    fn hash_tracks_content() {
        let a = cfg(r#"{"models": ["m"], "experiments": ["exp1"], "output_dir": "o"}"#).unwrap();
        let b = ExperimentConfig { seed: 1, ..a.clone() };
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn grid_accounts_for_every_cell() {
        let c = cfg(
            r#"{"models": ["a", "b"], "experiments": ["exp2", "exp1"], "styles": ["white_on_black", "black_on_white"],
                "transforms": ["none", "scale", "rotate"], "output_dir": "o"}"#,
        )
        .unwrap();
        let cells = plan_cells(&c, &["a".into(), "b".into()]);
        assert_eq!(cells.len(), 2 * 2 * 2 * 3);
        assert_eq!(cells[0].record.id, "exp1_white_on_black_none__a");
        let mut ids: Vec<_> = cells.iter().map(|c| c.record.id.clone()).collect();
        ids.dedup();
        assert_eq!(ids.len(), cells.len());
    }

    #[test]
    fn missing_model_fails_its_cells_only() {
        let dir = tempfile::tempdir().unwrap();
        let c = ExperimentConfig {
            models: vec!["builtin:smallnet".into(), dir.path().join("missing.onnx").to_string_lossy().into_owned()],
            experiments: vec![ExperimentKind::Sanity],
            styles: vec![Polarity::WhiteOnBlack],
            transforms: vec![TransformKind::None],
            repetitions: 2,
            seed: 1,
            output_dir: dir.path().join("out"),
            workers: 1,
            human_ce_path: None,
            sets: None,
            tasks: default_tasks(),
            learnability: LearnabilityConfig::default(),
        };
        let m = run(&c).unwrap();
        assert_eq!((m.done, m.failed), (1, 1));
        assert!(!m.success());
        let table = fs::read_to_string(dir.path().join("out/sanity_white_on_black_none.csv")).unwrap();
        assert_eq!(table.lines().count(), 1 + 5);
        assert!(table.lines().skip(1).all(|l| l.starts_with("smallnet,")));
    }
}
