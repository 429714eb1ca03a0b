//! Per-dataset experiment protocol: split, scale, then score the standard network and each
//! search method once per replicate.
//!
//! The test partition is read only by: the standard score, every random-search trial (the random
//! method keeps its best *test* score unless `strict_random` is set), and one post-hoc evaluation of
//! the best trial of each TPE/CMA-ES study. [`ScaledSplit::test_reads`] counts those reads.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::architecture::Architecture;
use crate::data::{self, DataFormat, Dataset, LabelColumn, Scaler};
use crate::error::{Error, Result};
use crate::nn::{init_network, predict_accuracy, train, Network, TrainConfig};
use crate::samplers::{study_run, Evaluation, Method, SearchSpace, StudyOptions};
use crate::seed::{derive_seed, rng_from_seed, stream};
use crate::stats::{summarize, SummaryRow};

/// The four contenders of one replicate, in report column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentMethod {
    Standard,
    Random,
    Tpe,
    Cmaes,
}

impl ExperimentMethod {
    pub const ALL: [ExperimentMethod; 4] = [Self::Standard, Self::Random, Self::Tpe, Self::Cmaes];

    pub fn name(self) -> &'static str {
        match self {
            Self::Standard => "standard",
            Self::Random => "random",
            Self::Tpe => "tpe",
            Self::Cmaes => "cmaes",
        }
    }

    pub fn sampler(self) -> Option<Method> {
        match self {
            Self::Standard => None,
            Self::Random => Some(Method::Random),
            Self::Tpe => Some(Method::Tpe),
            Self::Cmaes => Some(Method::Cmaes),
        }
    }
}

impl std::fmt::Display for ExperimentMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ExperimentMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (standard, random, tpe, cmaes)")))
    }
}

/// Built-in datasets usable in place of a file path.
pub const SYNTHETIC_LETTERS: &str = "synthetic:letters";
pub const SYNTHETIC_SEPARABLE: &str = "synthetic:separable";

/// 26-class, 16-feature Gaussian-cluster stand-in for the letter-recognition data.
pub fn letters_surrogate() -> Dataset {
    letters_surrogate_with(30, LETTERS_NOISE)
}

/// Within-class noise of [`letters_surrogate`], relative to unit-variance class centres.
pub const LETTERS_NOISE: f64 = 0.2;

pub fn letters_surrogate_with(n_per_class: usize, noise: f64) -> Dataset {
    let mut ds = data::synthetic::gaussian_clusters(n_per_class, 16, 26, noise, 0x1E77_E125);
    ds.name = "letters-surrogate".into();
    ds.class_names = (b'A'..=b'Z').map(|c| (c as char).to_string()).collect();
    ds
}

fn default_replicates() -> usize {
    30
}
fn default_trials() -> usize {
    1000
}
fn default_methods() -> Vec<ExperimentMethod> {
    ExperimentMethod::ALL.to_vec()
}
fn default_jobs() -> usize {
    1
}

/// Flat TOML configuration. Relative paths are resolved against the config file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// A CSV/ARFF path, or one of the `synthetic:` names.
    pub dataset: String,
    #[serde(default)]
    pub format: Option<DataFormat>,
    #[serde(default)]
    pub label_col: Option<String>,
    pub n_layers: usize,
    #[serde(default = "default_replicates")]
    pub n_replicates: usize,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<ExperimentMethod>,
    #[serde(default)]
    pub seed: u64,
    /// JSON-lines replicate log.
    pub output: PathBuf,
    /// Summary CSV; defaults to the log path with a `.summary.csv` extension.
    #[serde(default)]
    pub summary: Option<PathBuf>,
    /// Optional JSON-lines log of every trial.
    #[serde(default)]
    pub trial_log: Option<PathBuf>,
    /// Select the random method's architecture by training accuracy instead of test accuracy.
    #[serde(default)]
    pub strict_random: bool,
    /// Stop launching new trials in a replicate after this many seconds.
    #[serde(default)]
    pub max_seconds_per_replicate: Option<f64>,
    /// Include wall-clock seconds in the log (makes logs run-dependent).
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub max_epochs: Option<usize>,
    #[serde(default)]
    pub patience: Option<usize>,
    #[serde(default)]
    pub min_delta: Option<f64>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(dataset: impl Into<String>, n_layers: usize, output: impl Into<PathBuf>) -> Self {
        Self {
            dataset: dataset.into(),
            format: None,
            label_col: None,
            n_layers,
            n_replicates: default_replicates(),
            n_trials: default_trials(),
            methods: default_methods(),
            seed: 0,
            output: output.into(),
            summary: None,
            trial_log: None,
            strict_random: false,
            max_seconds_per_replicate: None,
            record_timing: false,
            jobs: 1,
            max_epochs: None,
            patience: None,
            min_delta: None,
            learning_rate: None,
        }
    }

    /// Parses a TOML file and resolves relative paths against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_path_buf() };
        if !cfg.dataset.starts_with("synthetic:") {
            cfg.dataset = resolve(Path::new(&cfg.dataset)).display().to_string();
        }
        cfg.output = resolve(&cfg.output);
        cfg.summary = cfg.summary.as_deref().map(resolve);
        cfg.trial_log = cfg.trial_log.as_deref().map(resolve);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers < 2 {
            return Err(Error::Config(format!("n_layers must be at least 2, got {}", self.n_layers)));
        }
        if self.n_replicates == 0 || self.n_trials == 0 {
            return Err(Error::Config("n_replicates and n_trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        self.train_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            max_epochs: self.max_epochs.unwrap_or(d.max_epochs),
            patience: self.patience.unwrap_or(d.patience),
            min_delta: self.min_delta.unwrap_or(d.min_delta),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
        }
    }

    /// Sorted, de-duplicated methods.
    pub fn method_set(&self) -> Vec<ExperimentMethod> {
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        m
    }

    pub fn summary_path(&self) -> PathBuf {
        self.summary.clone().unwrap_or_else(|| self.output.with_extension("summary.csv"))
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        load_named_dataset(&self.dataset, self.format, self.label_col.as_deref())
    }
}

/// Loads a file (format guessed from the extension unless given) or a `synthetic:` dataset.
pub fn load_named_dataset(name: &str, format: Option<DataFormat>, label_col: Option<&str>) -> Result<Dataset> {
    match name {
        SYNTHETIC_LETTERS => Ok(letters_surrogate()),
        SYNTHETIC_SEPARABLE => Ok(data::synthetic::linearly_separable(500, 2, 0.05, 0x5E9A)),
        other if other.starts_with("synthetic:") => Err(Error::Config(format!(
            "unknown synthetic dataset `{other}` ({SYNTHETIC_LETTERS}, {SYNTHETIC_SEPARABLE})"
        ))),
        path => {
            let path = Path::new(path);
            let format = format.unwrap_or_else(|| DataFormat::from_path(path));
            let label = label_col.map_or(LabelColumn::Last, |c| LabelColumn::Named(c.to_string()));
            data::load_dataset(path, format, &label)
        }
    }
}

/// `[ReLU] * (L - 1) + [Softmax]`.
pub fn standard_architecture(n_layers: usize) -> Result<Architecture> {
    Architecture::standard(n_layers)
}

/// Standardized train/test matrices; reads of the test side are counted.
#[derive(Debug)]
pub struct ScaledSplit {
    pub x_train: Array2<f64>,
    pub y_train: Vec<usize>,
    x_test: Array2<f64>,
    y_test: Vec<usize>,
    pub n_classes: usize,
    test_reads: AtomicUsize,
}

impl ScaledSplit {
    /// Fits the scaler on the training rows and applies it once to each side.
    pub fn new(ds: &Dataset, split: &data::Split) -> Result<Self> {
        let scaler = Scaler::fit(ds.x.view(), &split.train)?;
        let (x_train, y_train) = ds.select(&split.train);
        let (x_test, y_test) = ds.select(&split.test);
        Ok(Self::from_parts(
            scaler.transform(x_train.view()),
            y_train,
            scaler.transform(x_test.view()),
            y_test,
            ds.n_classes(),
        ))
    }

    /// Already-scaled parts.
    pub fn from_parts(
        x_train: Array2<f64>,
        y_train: Vec<usize>,
        x_test: Array2<f64>,
        y_test: Vec<usize>,
        n_classes: usize,
    ) -> Self {
        Self { x_train, y_train, x_test, y_test, n_classes, test_reads: AtomicUsize::new(0) }
    }

    pub fn n_features(&self) -> usize {
        self.x_train.ncols()
    }

    /// Test features and labels; every call is counted.
    pub fn test(&self) -> (ArrayView2<'_, f64>, &[usize]) {
        self.test_reads.fetch_add(1, Ordering::Relaxed);
        (self.x_test.view(), &self.y_test)
    }

    pub fn test_reads(&self) -> usize {
        self.test_reads.load(Ordering::Relaxed)
    }
}

/// A trained candidate; `train_accuracy` is the sampler objective.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub network: Network,
    pub train_accuracy: f64,
    pub failed: bool,
    pub seed: u64,
}

/// Fresh network from `seed`, trained on the training side only.
pub fn train_architecture(
    arch: &Architecture,
    data: &ScaledSplit,
    seed: u64,
    config: &TrainConfig,
) -> Result<TrainedModel> {
    let mut rng = rng_from_seed(seed);
    let mut network = init_network(data.n_features(), data.n_classes, arch.clone(), &mut rng)?;
    let history = train(&mut network, data.x_train.view(), &data.y_train, config, &mut rng)?;
    let mut eval_rng = rng_from_seed(derive_seed(seed, stream::EVAL, 0));
    let (acc, finite) = predict_accuracy(&mut network, data.x_train.view(), &data.y_train, &mut eval_rng)?;
    let failed = history.failed || !finite;
    Ok(TrainedModel {
        network,
        train_accuracy: if failed { 0.0 } else { acc },
        failed,
        seed,
    })
}

/// Scores a trained model on the test side (one counted read). Non-finite outputs score 0.
pub fn test_accuracy(model: &mut TrainedModel, data: &ScaledSplit) -> Result<f64> {
    if model.failed {
        return Ok(0.0);
    }
    let (x, y) = data.test();
    let mut rng = rng_from_seed(derive_seed(model.seed, stream::EVAL, 1));
    let (acc, finite) = predict_accuracy(&mut model.network, x, y, &mut rng)?;
    if !finite {
        model.failed = true;
        return Ok(0.0);
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureScores {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub failed: bool,
}

/// Train, then test once. Failed runs score 0 on both sides.
pub fn evaluate_architecture(
    arch: &Architecture,
    data: &ScaledSplit,
    seed: u64,
    config: &TrainConfig,
) -> Result<ArchitectureScores> {
    let mut model = train_architecture(arch, data, seed, config)?;
    let test = test_accuracy(&mut model, data)?;
    Ok(ArchitectureScores {
        train_accuracy: if model.failed { 0.0 } else { model.train_accuracy },
        test_accuracy: test,
        failed: model.failed,
    })
}

/// One method's outcome in one replicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    /// Test accuracy of the retained model.
    pub score: f64,
    pub architecture: Architecture,
    /// Training accuracy of the retained model.
    pub objective: f64,
    pub failed: bool,
    /// Training runs performed.
    pub evaluations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub dataset: String,
    pub n_layers: usize,
    pub replicate: usize,
    pub seed: u64,
    /// Classes absent from this replicate's training rows.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes_missing_from_train: Vec<usize>,
    pub methods: BTreeMap<ExperimentMethod, MethodOutcome>,
}

/// One line of the optional trial log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialLogEntry {
    pub replicate: usize,
    pub method: ExperimentMethod,
    pub trial_id: usize,
    pub architecture: Architecture,
    pub objective: f64,
    pub failed: bool,
    pub seed: u64,
}

/// Seed of replicate `index` under `master`.
pub fn replicate_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, stream::REPLICATE, index as u64)
}

/// Everything a replicate produced.
#[derive(Clone, Debug)]
pub struct ReplicateOutput {
    pub record: ReplicateRecord,
    pub trials: Vec<TrialLogEntry>,
    pub test_reads: usize,
}

/// Runs the standard network and every configured search method on one fresh split.
pub fn run_replicate(ds: &Dataset, cfg: &ExperimentConfig, index: usize, seed: u64) -> Result<ReplicateOutput> {
    let split = data::train_test_split(ds, &mut rng_from_seed(derive_seed(seed, stream::SPLIT, 0)))?;
    let scaled = ScaledSplit::new(ds, &split)?;
    let train_cfg = cfg.train_config();
    let space = SearchSpace::activations(cfg.n_layers)?;
    let started = Instant::now();
    let deadline = cfg
        .max_seconds_per_replicate
        .map(|s| started + Duration::from_secs_f64(s.max(0.0)));
    let mut methods = BTreeMap::new();
    let mut trials = Vec::new();

    for method in cfg.method_set() {
        let t0 = Instant::now();
        let method_seed = derive_seed(seed, stream::METHOD, method as u64);
        let mut outcome = match method.sampler() {
            None => {
                let arch = standard_architecture(cfg.n_layers)?;
                let s = evaluate_architecture(&arch, &scaled, method_seed, &train_cfg)?;
                MethodOutcome {
                    score: s.test_accuracy,
                    architecture: arch,
                    objective: s.train_accuracy,
                    failed: s.failed,
                    evaluations: 1,
                    wall_seconds: None,
                }
            }
            Some(sampler) => {
                let options = StudyOptions { deadline, ..StudyOptions::trials(cfg.n_trials) };
                run_search(sampler, &space, &options, method_seed, &scaled, &train_cfg, cfg.strict_random, |t| {
                    trials.push(TrialLogEntry { replicate: index, method, ..t });
                })?
            }
        };
        if cfg.record_timing {
            outcome.wall_seconds = Some(t0.elapsed().as_secs_f64());
        }
        methods.insert(method, outcome);
    }

    Ok(ReplicateOutput {
        record: ReplicateRecord {
            dataset: ds.name.clone(),
            n_layers: cfg.n_layers,
            replicate: index,
            seed,
            classes_missing_from_train: split.classes_missing_from_train,
            methods,
        },
        trials,
        test_reads: scaled.test_reads(),
    })
}

/// One study on one split, selecting by training accuracy for every method; the selected
/// model is tested once.
pub fn search_once(
    ds: &Dataset,
    n_layers: usize,
    method: Method,
    n_trials: usize,
    seed: u64,
    train_cfg: &TrainConfig,
) -> Result<(MethodOutcome, Vec<TrialLogEntry>)> {
    let split = data::train_test_split(ds, &mut rng_from_seed(derive_seed(seed, stream::SPLIT, 0)))?;
    let scaled = ScaledSplit::new(ds, &split)?;
    let space = SearchSpace::activations(n_layers)?;
    let method_seed = derive_seed(seed, stream::METHOD, method as u64);
    let tag = match method {
        Method::Random => ExperimentMethod::Random,
        Method::Tpe => ExperimentMethod::Tpe,
        Method::Cmaes => ExperimentMethod::Cmaes,
    };
    let mut trials = Vec::new();
    let outcome = run_search(method, &space, &StudyOptions::trials(n_trials), method_seed, &scaled, train_cfg, true, |t| {
        trials.push(TrialLogEntry { method: tag, ..t })
    })?;
    Ok((outcome, trials))
}

struct Cached {
    objective: f64,
    trial_id: usize,
    model: TrainedModel,
}

/// One study. Random keeps the best test score (or, when `strict`, the best training accuracy);
/// TPE and CMA-ES keep the trained model of their best trial and test it once.
#[allow(clippy::too_many_arguments)]
fn run_search(
    sampler: Method,
    space: &SearchSpace,
    options: &StudyOptions,
    seed: u64,
    data: &ScaledSplit,
    train_cfg: &TrainConfig,
    strict: bool,
    mut log: impl FnMut(TrialLogEntry),
) -> Result<MethodOutcome> {
    let select_on_test = sampler == Method::Random && !strict;
    let mut error: Option<Error> = None;
    let mut cached: Option<Cached> = None;
    // (test score, trial id, objective, failed) of the best random trial by test accuracy
    let mut best_test: Option<(f64, usize, f64, bool)> = None;
    let mut next_id = 0usize;

    let result = study_run(space, sampler, options, seed, |params, trial_seed| {
        let trial_id = next_id;
        next_id += 1;
        if error.is_some() {
            return Evaluation::failed();
        }
        let arch = Architecture::from_indices(params).expect("sampler stays in range");
        let model = match train_architecture(&arch, data, trial_seed, train_cfg) {
            Ok(m) => m,
            Err(e) => {
                error = Some(e);
                return Evaluation::failed();
            }
        };
        let eval = if model.failed { Evaluation::failed() } else { Evaluation::ok(model.train_accuracy) };
        if select_on_test {
            let mut model = model;
            match test_accuracy(&mut model, data) {
                Ok(score) => {
                    if best_test.is_none_or(|(b, ..)| score > b) {
                        best_test = Some((score, trial_id, eval.value, model.failed));
                    }
                }
                Err(e) => error = Some(e),
            }
        } else if !eval.failed && cached.as_ref().is_none_or(|c| eval.value > c.objective) {
            cached = Some(Cached { objective: eval.value, trial_id, model });
        }
        eval
    })?;
    if let Some(e) = error {
        return Err(e);
    }
    for t in &result.history {
        log(TrialLogEntry {
            replicate: 0,
            method: ExperimentMethod::Standard,
            trial_id: t.trial_id,
            architecture: Architecture::from_indices(&t.params)?,
            objective: t.objective,
            failed: t.failed,
            seed: t.seed,
        });
    }
    let evaluations = result.history.len();

    if select_on_test {
        let (score, id, objective, failed) = best_test.expect("at least one trial");
        return Ok(MethodOutcome {
            score,
            architecture: Architecture::from_indices(&result.history[id].params)?,
            objective,
            failed,
            evaluations,
            wall_seconds: None,
        });
    }
    match cached {
        Some(mut c) => {
            debug_assert_eq!(c.trial_id, result.best.trial_id);
            let score = test_accuracy(&mut c.model, data)?;
            Ok(MethodOutcome {
                score,
                architecture: Architecture::from_indices(&result.history[c.trial_id].params)?,
                objective: c.objective,
                failed: c.model.failed,
                evaluations,
                wall_seconds: None,
            })
        }
        None => Ok(MethodOutcome {
            score: 0.0,
            architecture: Architecture::from_indices(&result.best.params)?,
            objective: 0.0,
            failed: true,
            evaluations,
            wall_seconds: None,
        }),
    }
}

fn append_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(format!("appending to partial results {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(format!("writing partial results {}", path.display()), e))?;
    }
    w.flush().map_err(|e| Error::io(format!("writing partial results {}", path.display()), e))
}

fn truncate(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    }
    File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub records: Vec<ReplicateRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Runs every replicate, appending each finished batch of `jobs` replicates to the log in
/// replicate order, then writes the summary CSV. The log does not depend on `jobs`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let ds = cfg.load_dataset()?;
    truncate(&cfg.output)?;
    if let Some(t) = &cfg.trial_log {
        truncate(t)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let mut records = Vec::with_capacity(cfg.n_replicates);
    let indices: Vec<usize> = (0..cfg.n_replicates).collect();
    for batch in indices.chunks(cfg.jobs) {
        let outputs: Vec<Result<ReplicateOutput>> = pool.install(|| {
            batch
                .par_iter()
                .map(|&i| run_replicate(&ds, cfg, i, replicate_seed(cfg.seed, i)))
                .collect()
        });
        for out in outputs {
            let out = out?;
            append_lines(&cfg.output, std::slice::from_ref(&out.record))?;
            if let Some(t) = &cfg.trial_log {
                append_lines(t, &out.trials)?;
            }
            records.push(out.record);
        }
    }
    let summary = summarize(&records, crate::stats::DEFAULT_ROUNDS, cfg.seed)?;
    crate::stats::write_table1(&cfg.summary_path(), &summary)?;
    Ok(ExperimentOutput { records, summary })
}

/// Reads a JSON-lines replicate log; blank lines are skipped.
pub fn read_log(path: &Path) -> Result<Vec<ReplicateRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.into(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::ActivationKind;

    fn toy_split(seed: u64) -> (Dataset, ScaledSplit) {
        let ds = data::synthetic::linearly_separable(120, 2, 0.1, seed);
        let split = data::train_test_split(&ds, &mut rng_from_seed(seed)).unwrap();
        let scaled = ScaledSplit::new(&ds, &split).unwrap();
        (ds, scaled)
    }

    fn quick_config(methods: Vec<ExperimentMethod>, n_trials: usize, dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            n_replicates: 1,
            n_trials,
            methods,
            max_epochs: Some(20),
            ..ExperimentConfig::new(SYNTHETIC_SEPARABLE, 3, dir.join("log.jsonl"))
        }
    }

    #[test]
    fn standard_shapes() {
        assert_eq!(standard_architecture(2).unwrap().to_string(), "ReLU,Softmax");
        let a = standard_architecture(10).unwrap();
        assert_eq!(a.iter().filter(|&&k| k == ActivationKind::Relu).count(), 9);
        assert!(standard_architecture(1).is_err());
    }

    #[test]
    fn standard_learns_separable_toy() {
        let (_, scaled) = toy_split(3);
        let s = evaluate_architecture(&standard_architecture(5).unwrap(), &scaled, 7, &TrainConfig::default()).unwrap();
        assert!(!s.failed);
        assert!(s.test_accuracy >= 0.9, "{s:?}");
        assert_eq!(scaled.test_reads(), 1);
        let again = evaluate_architecture(&standard_architecture(5).unwrap(), &scaled, 7, &TrainConfig::default()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn log_on_negative_inputs_fails() {
        let (_, scaled) = toy_split(4);
        let arch: Architecture = "Log,Log,Log".parse().unwrap();
        let s = evaluate_architecture(&arch, &scaled, 1, &TrainConfig::default()).unwrap();
        assert!(s.failed);
        assert_eq!((s.train_accuracy, s.test_accuracy), (0.0, 0.0));
    }

    #[test]
    fn test_reads_and_evaluation_counts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_config(ExperimentMethod::ALL.to_vec(), 4, dir.path());
        let ds = cfg.load_dataset().unwrap();
        let out = run_replicate(&ds, &cfg, 0, 99).unwrap();
        // standard + every random trial + one per study; failed models never touch the test side
        let ok = |m: ExperimentMethod| usize::from(!out.record.methods[&m].failed);
        let random_ok = out.trials.iter().filter(|t| t.method == ExperimentMethod::Random && !t.failed).count();
        let expected = ok(ExperimentMethod::Standard) + random_ok + ok(ExperimentMethod::Tpe) + ok(ExperimentMethod::Cmaes);
        assert_eq!(out.test_reads, expected);
        assert!(out.test_reads <= 1 + 4 + 1 + 1);
        let evals: usize = out.record.methods.values().map(|m| m.evaluations).sum();
        assert_eq!(evals, 1 + 4 * 3);
        assert_eq!(out.trials.len(), 12);
        for m in out.record.methods.values() {
            assert_eq!(m.architecture.len(), 3);
            assert!((0.0..=1.0).contains(&m.score));
        }

        let strict = ExperimentConfig { strict_random: true, ..cfg };
        let out = run_replicate(&ds, &strict, 0, 99).unwrap();
        assert!(out.test_reads <= 4);
    }

    #[test]
    fn random_keeps_best_test_score() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_config(vec![ExperimentMethod::Random], 3, dir.path());
        let ds = cfg.load_dataset().unwrap();
        let out = run_replicate(&ds, &cfg, 0, 5).unwrap();
        // replay each trial independently and take the max test score
        let split = data::train_test_split(&ds, &mut rng_from_seed(derive_seed(5, stream::SPLIT, 0))).unwrap();
        let scaled = ScaledSplit::new(&ds, &split).unwrap();
        let best = out
            .trials
            .iter()
            .map(|t| evaluate_architecture(&t.architecture, &scaled, t.seed, &cfg.train_config()).unwrap().test_accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.record.methods[&ExperimentMethod::Random].score, best);
    }

    #[test]
    fn experiment_is_reproducible_and_jobs_invariant() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick_config(ExperimentMethod::ALL.to_vec(), 2, dir.path());
        cfg.n_replicates = 3;
        let a = run_experiment(&cfg).unwrap();
        let log_a = std::fs::read(&cfg.output).unwrap();
        cfg.jobs = 2;
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(log_a, std::fs::read(&cfg.output).unwrap());
        assert_eq!(a.records, b.records);
        assert_eq!(read_log(&cfg.output).unwrap(), a.records);
        assert!(cfg.summary_path().exists());
    }

    #[test]
    fn config_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exp.toml");
        std::fs::write(&p, "dataset = \"data/x.csv\"\nn_layers = 5\noutput = \"out/log.jsonl\"\nmethods = [\"tpe\", \"standard\"]\n").unwrap();
        let cfg = ExperimentConfig::from_file(&p).unwrap();
        assert_eq!(cfg.output, dir.path().join("out/log.jsonl"));
        assert_eq!(cfg.method_set(), vec![ExperimentMethod::Standard, ExperimentMethod::Tpe]);
        assert_eq!(cfg.n_replicates, 30);
        assert_eq!(cfg.summary_path(), dir.path().join("out/log.summary.csv"));

        std::fs::write(&p, "dataset = \"x\"\nn_layers = 5\noutput = \"o\"\nbogus = 1\n").unwrap();
        assert!(ExperimentConfig::from_file(&p).is_err());
        std::fs::write(&p, "dataset = \"x\"\nn_layers = 5\noutput = \"o\"\nmethods = []\n").unwrap();
        assert!(ExperimentConfig::from_file(&p).is_err());
    }
}
