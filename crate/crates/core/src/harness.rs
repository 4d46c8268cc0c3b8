//! Reproducible experiments: configuration, training runs, evaluation,
//! ablations, parameter sweeps and noisy-view studies.
//!
//! Everything here is deterministic given the configuration. Runs are
//! transductive: each partition seed splits the bags into a labelled
//! training part and a test part whose labels are withheld from the
//! network, and metrics are computed on the test part only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataio::{gen_synthetic, load_dataset, partition, SyntheticSpec};
use crate::error::{Error, Result};
use crate::metrics::{avg_f1, avg_recall, macro_auc, one_minus_rankloss};
use crate::network::{assemble_network, make_noisy_view};
use crate::predict::{binarize, predict_bag_labels, predict_instance_labels};
use crate::solver::{fit, SolveTrace, StopReason};
use crate::types::{
    Ablation, EvaluationReport, FactorModel, HeteroNetwork, Level, Metric, MetricSummary,
    MultiViewMimlDataset, NetworkConfig, RunMetadata, SolverConfig,
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// `10^-2, 10^-1, …, 10^6`.
pub fn default_lambda_grid() -> Vec<f64> {
    (-2..=6).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    /// When non-empty, sweep the rank instead of the regularizers.
    pub ranks: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambda1: default_lambda_grid(),
            lambda2: default_lambda_grid(),
            ranks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Number of row-shuffled bag-similarity matrices to append.
    pub n_noisy: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { n_noisy: 10, seed: 0 }
    }
}

/// A complete experiment description. Exactly one of `dataset` and
/// `synthetic` names the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Directory in the on-disk dataset layout.
    pub dataset: Option<PathBuf>,
    /// Planted generator parameters, used instead of `dataset`.
    pub synthetic: Option<SyntheticSpec>,
    pub network: NetworkConfig,
    pub solver: SolverConfig,
    pub train_fraction: f64,
    /// One transductive run per seed.
    pub partition_seeds: Vec<u64>,
    pub sweep: SweepConfig,
    pub noise: NoiseConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            synthetic: None,
            network: NetworkConfig::default(),
            solver: SolverConfig::default(),
            train_fraction: 0.7,
            partition_seeds: vec![0],
            sweep: SweepConfig::default(),
            noise: NoiseConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `key=value` overrides. Keys are dotted paths into the JSON
    /// form (`solver.rank`, `synthetic.noise`); values are parsed as JSON
    /// and fall back to plain strings.
    pub fn with_overrides<S: AsRef<str>>(self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut doc = serde_json::to_value(&self)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
            set_path(&mut doc, key, value)?;
        }
        serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.dataset, &self.synthetic) {
            (None, None) => {
                return Err(Error::Config(
                    "no data source: set `dataset` or `synthetic`".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "`dataset` and `synthetic` are mutually exclusive".into(),
                ))
            }
            _ => {}
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction = {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        if self.partition_seeds.is_empty() {
            return Err(Error::Config("partition_seeds is empty".into()));
        }
        self.solver.validate()?;
        self.network.validate()
    }

    /// Materializes the data source.
    pub fn load_data(&self) -> Result<MultiViewMimlDataset> {
        self.validate()?;
        match (&self.dataset, &self.synthetic) {
            (Some(dir), _) => load_dataset(dir),
            (_, Some(spec)) => Ok(gen_synthetic(spec)?.0),
            (None, None) => unreachable!("validated above"),
        }
    }

    fn metadata(&self) -> RunMetadata {
        RunMetadata {
            config: self.solver.clone(),
            network: self.network.clone(),
            partition_seeds: self.partition_seeds.clone(),
            train_fraction: self.train_fraction,
        }
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty());
    let Some(last) = last else {
        return Err(Error::Config(format!("empty override key `{key}`")));
    };
    let mut cur = doc;
    for p in parts {
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{key}`: `{p}` is not a section")))?;
        cur = obj.entry(p).or_insert(Value::Null);
    }
    if cur.is_null() {
        *cur = Value::Object(Default::default());
    }
    let obj = cur
        .as_object_mut()
        .ok_or_else(|| Error::Config(format!("`{key}` does not name a config field")))?;
    obj.insert(last.to_string(), value);
    Ok(())
}

// ---------------------------------------------------------------------------
// Serialization with validation
// ---------------------------------------------------------------------------

/// Pretty JSON of `value`, re-parsed as `T` first so that nothing is
/// emitted that would fail to load.
pub fn validated_json<T: Serialize + DeserializeOwned>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    serde_json::from_str::<T>(&text)?;
    text.push('\n');
    Ok(text)
}

/// Checks that every CSV record has as many fields as the header.
pub fn validate_csv(text: &str) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let width = rdr.headers()?.len();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::Shape(format!(
                "CSV record has {} fields, header has {width}",
                rec.len()
            )));
        }
    }
    Ok(())
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Training and evaluation
// ---------------------------------------------------------------------------

/// Everything needed to evaluate one transductive run later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub partition_seed: u64,
    pub train_bags: Vec<usize>,
    pub test_bags: Vec<usize>,
    /// Mean number of labels per training bag.
    pub bag_cardinality: f64,
    /// Mean number of labels per training instance, when known.
    pub instance_cardinality: Option<f64>,
    pub iterations: usize,
    pub stop: StopReason,
    pub objective: f64,
    pub model: FactorModel,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn check_dataset(&self, ds: &MultiViewMimlDataset) -> Result<()> {
        let m = &self.model;
        if (m.g1().nrows(), m.g2().nrows(), m.g3().nrows())
            != (ds.n_bags(), ds.n_instances(), ds.n_labels())
        {
            return Err(Error::Shape(format!(
                "checkpoint was trained on ({}, {}, {}) bags/instances/labels, dataset has ({}, {}, {})",
                m.g1().nrows(),
                m.g2().nrows(),
                m.g3().nrows(),
                ds.n_bags(),
                ds.n_instances(),
                ds.n_labels()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub checkpoint: Checkpoint,
    pub trace: SolveTrace,
    pub network: HeteroNetwork,
}

fn instance_cardinality(ds: &MultiViewMimlDataset, bags: &[usize]) -> Option<f64> {
    let labels = ds.instance_labels()?;
    let rows = ds.instances_of(bags);
    if rows.is_empty() {
        return None;
    }
    let total: f64 = rows.iter().map(|&k| labels.row(k).iter().map(|&v| f64::from(v)).sum::<f64>()).sum();
    Some(total / rows.len() as f64)
}

fn fit_network(
    ds: &MultiViewMimlDataset,
    cfg: &ExperimentConfig,
    solver: &SolverConfig,
    partition_seed: u64,
    net: HeteroNetwork,
    train: Vec<usize>,
    test: Vec<usize>,
) -> Result<TrainedRun> {
    let (model, trace) = fit(&net, solver)?;
    let mut config = cfg.clone();
    config.solver = solver.clone();
    let checkpoint = Checkpoint {
        config,
        partition_seed,
        bag_cardinality: ds.label_cardinality(&train),
        instance_cardinality: instance_cardinality(ds, &train),
        iterations: trace.iterations(),
        stop: trace.stop,
        objective: *trace.objective.last().expect("trace holds the initial point"),
        train_bags: train,
        test_bags: test,
        model,
    };
    Ok(TrainedRun {
        checkpoint,
        trace,
        network: net,
    })
}

/// One transductive run with an explicit solver configuration.
pub fn train_with(
    ds: &MultiViewMimlDataset,
    cfg: &ExperimentConfig,
    solver: &SolverConfig,
    partition_seed: u64,
) -> Result<TrainedRun> {
    let (train, test) = partition(ds, cfg.train_fraction, partition_seed)?;
    let net = assemble_network(ds, &train, &cfg.network)?;
    fit_network(ds, cfg, solver, partition_seed, net, train, test)
}

/// One transductive run per partition seed.
pub fn train(ds: &MultiViewMimlDataset, cfg: &ExperimentConfig) -> Result<Vec<TrainedRun>> {
    cfg.validate()?;
    cfg.partition_seeds
        .iter()
        .map(|&s| train_with(ds, cfg, &cfg.solver, s))
        .collect()
}

/// Test-row metrics of one run at `level`.
pub fn run_metrics(
    ckpt: &Checkpoint,
    net: &HeteroNetwork,
    ds: &MultiViewMimlDataset,
    level: Level,
) -> Result<BTreeMap<Metric, f64>> {
    ckpt.check_dataset(ds)?;
    let (scores, truth, cardinality) = match level {
        Level::Bag => {
            let all = predict_bag_labels(&ckpt.model, net, &ckpt.config.solver)?;
            (
                all.select(Axis(0), &ckpt.test_bags),
                ds.bag_labels().select(Axis(0), &ckpt.test_bags),
                ckpt.bag_cardinality,
            )
        }
        Level::Instance => {
            let labels = ds.instance_labels().ok_or_else(|| {
                Error::invalid("evaluation", "instance-level metrics need instance labels")
            })?;
            let cardinality = ckpt
                .instance_cardinality
                .or_else(|| instance_cardinality(ds, &ckpt.train_bags))
                .unwrap_or(ckpt.bag_cardinality);
            let rows = ds.instances_of(&ckpt.test_bags);
            (
                predict_instance_labels(&ckpt.model).select(Axis(0), &rows),
                labels.select(Axis(0), &rows),
                cardinality,
            )
        }
    };
    let pred = binarize(scores.view(), cardinality);
    let mut out = BTreeMap::new();
    for &m in level.metrics() {
        let v = match m {
            Metric::OneMinusRankloss => one_minus_rankloss(scores.view(), truth.view())?,
            Metric::MacroAuc => macro_auc(scores.view(), truth.view())?,
            Metric::AvgRecall => avg_recall(pred.view(), truth.view())?,
            Metric::AvgF1 => avg_f1(pred.view(), truth.view())?,
        };
        out.insert(m, v);
    }
    Ok(out)
}

/// Rebuilds the network a checkpoint was trained on.
pub fn checkpoint_network(ckpt: &Checkpoint, ds: &MultiViewMimlDataset) -> Result<HeteroNetwork> {
    ckpt.check_dataset(ds)?;
    assemble_network(ds, &ckpt.train_bags, &ckpt.config.network)
}

/// Mean ± std report over checkpoints from repeated partitions.
pub fn evaluate(
    checkpoints: &[Checkpoint],
    ds: &MultiViewMimlDataset,
    level: Level,
) -> Result<EvaluationReport> {
    let first = checkpoints
        .first()
        .ok_or_else(|| Error::Config("no checkpoints to evaluate".into()))?;
    let mut runs = Vec::with_capacity(checkpoints.len());
    for c in checkpoints {
        let net = checkpoint_network(c, ds)?;
        runs.push(run_metrics(c, &net, ds, level)?);
    }
    let mut meta = first.config.metadata();
    meta.partition_seeds = checkpoints.iter().map(|c| c.partition_seed).collect();
    EvaluationReport::from_runs(level, &runs, meta)
}

/// Trains and evaluates every partition seed of `cfg`.
pub fn train_and_evaluate(
    ds: &MultiViewMimlDataset,
    cfg: &ExperimentConfig,
    level: Level,
) -> Result<EvaluationReport> {
    let mut runs = Vec::new();
    for r in train(ds, cfg)? {
        runs.push(run_metrics(&r.checkpoint, &r.network, ds, level)?);
    }
    EvaluationReport::from_runs(level, &runs, cfg.metadata())
}

fn bag_rankloss(run: &TrainedRun, ds: &MultiViewMimlDataset) -> Result<f64> {
    let m = run_metrics(&run.checkpoint, &run.network, ds, Level::Bag)?;
    Ok(m[&Metric::OneMinusRankloss])
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

/// Column names of the ablation table, full model first.
pub const ABLATION_COLUMNS: [&str; 5] = ["full", "nR11", "nR22", "nR33", "nR23"];

/// Bag-level test 1-RankLoss of the full model and each single-relation
/// ablation, per partition seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationTable {
    pub partition_seeds: Vec<u64>,
    /// `rows[s][c]`: seed `s`, column `ABLATION_COLUMNS[c]`.
    pub rows: Vec<[f64; 5]>,
}

impl AblationTable {
    pub fn means(&self) -> [f64; 5] {
        let mut out = [0.0; 5];
        for r in &self.rows {
            for (o, v) in out.iter_mut().zip(r) {
                *o += v;
            }
        }
        out.map(|s| s / self.rows.len().max(1) as f64)
    }

    pub fn mean_of(&self, column: &str) -> Option<f64> {
        let i = ABLATION_COLUMNS.iter().position(|&c| c == column)?;
        Some(self.means()[i])
    }

    /// One row per seed followed by a `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = format!("partition_seed,{}\n", ABLATION_COLUMNS.join(","));
        let write_row = |out: &mut String, key: &str, row: &[f64; 5]| {
            out.push_str(key);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        };
        for (s, r) in self.partition_seeds.iter().zip(&self.rows) {
            write_row(&mut out, &s.to_string(), r);
        }
        write_row(&mut out, "mean", &self.means());
        out
    }
}

pub fn ablate(ds: &MultiViewMimlDataset, cfg: &ExperimentConfig) -> Result<AblationTable> {
    cfg.validate()?;
    let mut variants = vec![cfg.solver.clone()];
    variants.extend(Ablation::ALL.iter().map(|&a| cfg.solver.clone().with_ablation(a)));
    let mut rows = Vec::with_capacity(cfg.partition_seeds.len());
    for &seed in &cfg.partition_seeds {
        let (train, test) = partition(ds, cfg.train_fraction, seed)?;
        let net = assemble_network(ds, &train, &cfg.network)?;
        let mut row = [0.0; 5];
        for (slot, solver) in row.iter_mut().zip(&variants) {
            let run = fit_network(ds, cfg, solver, seed, net.clone(), train.clone(), test.clone())?;
            *slot = bag_rankloss(&run, ds)?;
        }
        rows.push(row);
    }
    Ok(AblationTable {
        partition_seeds: cfg.partition_seeds.clone(),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRow {
    pub lambda1: f64,
    pub lambda2: f64,
    pub rank: usize,
    pub one_minus_rankloss: MetricSummary,
}

/// Mean bag-level test 1-RankLoss over the partition seeds at every grid
/// point. With `sweep.ranks` set the rank is swept (ascending) at the
/// configured regularizers; otherwise the `lambda1 × lambda2` product is
/// swept in row-major order.
pub fn sweep(ds: &MultiViewMimlDataset, cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let base = &cfg.solver;
    let points: Vec<SolverConfig> = if cfg.sweep.ranks.is_empty() {
        let s = &cfg.sweep;
        if s.lambda1.is_empty() || s.lambda2.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        s.lambda1
            .iter()
            .flat_map(|&l1| {
                s.lambda2.iter().map(move |&l2| SolverConfig {
                    lambda1: l1,
                    lambda2: l2,
                    ..base.clone()
                })
            })
            .collect()
    } else {
        let mut ranks = cfg.sweep.ranks.clone();
        ranks.sort_unstable();
        ranks.dedup();
        ranks
            .into_iter()
            .map(|rank| SolverConfig { rank, ..base.clone() })
            .collect()
    };
    for p in &points {
        p.validate()?;
    }

    let mut splits = Vec::with_capacity(cfg.partition_seeds.len());
    for &seed in &cfg.partition_seeds {
        let (train, test) = partition(ds, cfg.train_fraction, seed)?;
        let net = assemble_network(ds, &train, &cfg.network)?;
        splits.push((seed, net, train, test));
    }
    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        let mut values = Vec::with_capacity(splits.len());
        for (seed, net, train, test) in &splits {
            let run = fit_network(ds, cfg, &p, *seed, net.clone(), train.clone(), test.clone())?;
            values.push(bag_rankloss(&run, ds)?);
        }
        rows.push(SweepRow {
            lambda1: p.lambda1,
            lambda2: p.lambda2,
            rank: p.rank,
            one_minus_rankloss: MetricSummary::from_runs(values),
        });
    }
    Ok(rows)
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("lambda1,lambda2,rank,one_minus_rankloss_mean,one_minus_rankloss_std\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.lambda1, r.lambda2, r.rank, r.one_minus_rankloss.mean, r.one_minus_rankloss.std
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Noisy views
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseRun {
    pub partition_seed: u64,
    /// Bag-view weights after fitting with the noisy views; the last
    /// `n_noisy` entries belong to the noisy matrices.
    pub alpha: Vec<f64>,
    pub noisy_alpha_mass: f64,
    pub clean_one_minus_rankloss: f64,
    pub noisy_one_minus_rankloss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseReport {
    pub n_valid: usize,
    pub n_noisy: usize,
    pub runs: Vec<NoiseRun>,
    pub noisy_alpha_mass: MetricSummary,
    pub clean: MetricSummary,
    pub noisy: MetricSummary,
}

/// Row-shuffled copies of the bag-similarity views, cycling through them.
pub fn noisy_bag_views(net: &HeteroNetwork, n_noisy: usize, seed: u64) -> Vec<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let views = net.bag_similarity();
    (0..n_noisy)
        .map(|k| make_noisy_view(&views[k % views.len()], rng.random()))
        .collect()
}

/// Fits each partition with and without `noise.n_noisy` extra shuffled
/// bag-similarity views and reports the weight they receive.
pub fn noise_study(ds: &MultiViewMimlDataset, cfg: &ExperimentConfig) -> Result<NoiseReport> {
    cfg.validate()?;
    let n_noisy = cfg.noise.n_noisy;
    let mut runs = Vec::with_capacity(cfg.partition_seeds.len());
    for &seed in &cfg.partition_seeds {
        let (train, test) = partition(ds, cfg.train_fraction, seed)?;
        let net = assemble_network(ds, &train, &cfg.network)?;
        let extra = noisy_bag_views(&net, n_noisy, cfg.noise.seed ^ seed.rotate_left(32));
        let noisy_net = net.clone().with_extra_bag_views(extra)?;

        let clean = fit_network(ds, cfg, &cfg.solver, seed, net, train.clone(), test.clone())?;
        let noisy = fit_network(ds, cfg, &cfg.solver, seed, noisy_net, train, test)?;
        let alpha = noisy.checkpoint.model.alpha().to_vec();
        let n_valid = alpha.len() - n_noisy;
        runs.push(NoiseRun {
            partition_seed: seed,
            noisy_alpha_mass: alpha[n_valid..].iter().sum(),
            alpha,
            clean_one_minus_rankloss: bag_rankloss(&clean, ds)?,
            noisy_one_minus_rankloss: bag_rankloss(&noisy, ds)?,
        });
    }
    let collect = |f: fn(&NoiseRun) -> f64| MetricSummary::from_runs(runs.iter().map(f).collect());
    Ok(NoiseReport {
        n_valid: ds.n_views(),
        n_noisy,
        noisy_alpha_mass: collect(|r| r.noisy_alpha_mass),
        clean: collect(|r| r.clean_one_minus_rankloss),
        noisy: collect(|r| r.noisy_one_minus_rankloss),
        runs,
    })
}
