//! On-disk dataset format, train/test partitioning, view splitting and the
//! planted synthetic generator.
//!
//! A dataset is a directory:
//!
//! ```text
//! meta.json             {"n_bags", "n_instances", "n_labels", "n_views", "label_names"}
//! view_<v>.csv          header of feature names, then m rows of d_v features (v = 0..V-1)
//! membership.csv        header "instance_id,bag_id", then m rows
//! bag_labels.csv        header of label names, then n rows of 0/1
//! instance_labels.csv   optional, header of label names, then m rows of 0/1
//! ```
//!
//! Instances must be numbered in canonical order (all instances of bag 0,
//! then bag 1, ...). CSV files are UTF-8 with `.` as decimal separator.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FactorModel, MultiViewMimlDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub n_bags: usize,
    pub n_instances: usize,
    pub n_labels: usize,
    pub n_views: usize,
    #[serde(default)]
    pub label_names: Vec<String>,
}

fn parse_err(file: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// Reads a CSV with a header row; returns the header and data rows tagged
/// with their 1-based line numbers.
fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<(usize, Vec<String>)>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec.iter().map(|s| s.trim().to_string()).collect()));
    }
    Ok((header, rows))
}

fn read_f64_matrix(path: &Path, rows_expected: usize) -> Result<Array2<f64>> {
    let (header, rows) = read_csv(path)?;
    let width = header.len();
    if rows.len() != rows_expected {
        return Err(parse_err(
            path,
            rows.last().map_or(1, |r| r.0),
            format!("expected {rows_expected} data rows, found {}", rows.len()),
        ));
    }
    let mut out = Array2::zeros((rows_expected, width));
    for (r, (line, fields)) in rows.iter().enumerate() {
        for (c, f) in fields.iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| parse_err(path, *line, format!("column {c}: `{f}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(path, *line, format!("column {c}: non-finite value `{f}`")));
            }
            out[[r, c]] = v;
        }
    }
    Ok(out)
}

fn read_label_matrix(path: &Path, rows_expected: usize) -> Result<(Vec<String>, Array2<u8>)> {
    let (header, rows) = read_csv(path)?;
    if rows.len() != rows_expected {
        return Err(parse_err(
            path,
            rows.last().map_or(1, |r| r.0),
            format!("expected {rows_expected} data rows, found {}", rows.len()),
        ));
    }
    let mut out = Array2::zeros((rows_expected, header.len()));
    for (r, (line, fields)) in rows.iter().enumerate() {
        for (c, f) in fields.iter().enumerate() {
            out[[r, c]] = match f.as_str() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(parse_err(
                        path,
                        *line,
                        format!("column {c}: label value `{other}` is not 0 or 1"),
                    ))
                }
            };
        }
    }
    Ok((header, out))
}

fn read_membership(path: &Path, n: usize, m: usize) -> Result<Vec<usize>> {
    let (header, rows) = read_csv(path)?;
    if header != ["instance_id", "bag_id"] {
        return Err(parse_err(path, 1, "header must be `instance_id,bag_id`"));
    }
    let mut owner: Vec<Option<(usize, usize)>> = vec![None; m];
    for (line, fields) in &rows {
        let parse = |s: &str, what: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| parse_err(path, *line, format!("{what} `{s}` is not a non-negative integer")))
        };
        let inst = parse(&fields[0], "instance_id")?;
        let bag = parse(&fields[1], "bag_id")?;
        if inst >= m {
            return Err(parse_err(path, *line, format!("instance {inst} out of range (m = {m})")));
        }
        if bag >= n {
            return Err(parse_err(path, *line, format!("bag {bag} out of range (n = {n})")));
        }
        if let Some((other, first_line)) = owner[inst] {
            return Err(parse_err(
                path,
                *line,
                format!("instance {inst} assigned to bag {bag} but already to bag {other} on line {first_line}"),
            ));
        }
        owner[inst] = Some((bag, *line));
    }
    let mut sizes = vec![0usize; n];
    let mut prev = 0;
    for (inst, o) in owner.iter().enumerate() {
        let (bag, line) =
            o.ok_or_else(|| parse_err(path, 0, format!("instance {inst} has no bag")))?;
        if bag < prev {
            return Err(parse_err(
                path,
                line,
                format!("instance {inst} of bag {bag} follows an instance of bag {prev}; instances must be grouped in bag order"),
            ));
        }
        prev = bag;
        sizes[bag] += 1;
    }
    if let Some(b) = sizes.iter().position(|&s| s == 0) {
        return Err(parse_err(path, 0, format!("bag {b} has no instances")));
    }
    Ok(sizes)
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<MultiViewMimlDataset> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&text)
        .map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;
    if meta.n_views == 0 {
        return Err(parse_err(&meta_path, 1, "n_views must be at least 1"));
    }

    let mut views = Vec::with_capacity(meta.n_views);
    for v in 0..meta.n_views {
        views.push(read_f64_matrix(&dir.join(format!("view_{v}.csv")), meta.n_instances)?);
    }
    let sizes = read_membership(&dir.join("membership.csv"), meta.n_bags, meta.n_instances)?;
    let bag_path = dir.join("bag_labels.csv");
    let (names, bag_labels) = read_label_matrix(&bag_path, meta.n_bags)?;
    if names.len() != meta.n_labels {
        return Err(parse_err(
            &bag_path,
            1,
            format!("{} label columns, meta.json declares {}", names.len(), meta.n_labels),
        ));
    }
    if !meta.label_names.is_empty() && meta.label_names != names {
        return Err(parse_err(&bag_path, 1, "label header differs from meta.json label_names"));
    }
    let inst_path = dir.join("instance_labels.csv");
    let instance_labels = if inst_path.exists() {
        let (inames, il) = read_label_matrix(&inst_path, meta.n_instances)?;
        if inames != names {
            return Err(parse_err(&inst_path, 1, "label header differs from bag_labels.csv"));
        }
        Some(il)
    } else {
        None
    };
    MultiViewMimlDataset::new(views, sizes, bag_labels, instance_labels)?.with_label_names(names)
}

fn write_file(path: PathBuf, contents: String) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

fn matrix_csv<T: std::fmt::Display>(header: &[String], m: &Array2<T>) -> String {
    crate::predict::scores_to_csv(m.view(), header)
}

/// Writes a dataset in the directory format read by [`load_dataset`].
pub fn save_dataset(ds: &MultiViewMimlDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = DatasetMeta {
        n_bags: ds.n_bags(),
        n_instances: ds.n_instances(),
        n_labels: ds.n_labels(),
        n_views: ds.n_views(),
        label_names: ds.label_names().to_vec(),
    };
    write_file(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    for (v, x) in ds.views().iter().enumerate() {
        let header: Vec<String> = (0..x.ncols()).map(|c| format!("f{c}")).collect();
        write_file(dir.join(format!("view_{v}.csv")), matrix_csv(&header, x))?;
    }
    let mut membership = String::from("instance_id,bag_id\n");
    for (k, b) in ds.bag_of_instance().iter().enumerate() {
        membership.push_str(&format!("{k},{b}\n"));
    }
    write_file(dir.join("membership.csv"), membership)?;
    write_file(dir.join("bag_labels.csv"), matrix_csv(ds.label_names(), ds.bag_labels()))?;
    if let Some(il) = ds.instance_labels() {
        write_file(dir.join("instance_labels.csv"), matrix_csv(ds.label_names(), il))?;
    }
    Ok(())
}

/// Splits the features of a single-view dataset into `n_views` disjoint
/// random column groups. The first `d mod n_views` groups get one extra
/// column. Returns the new dataset and the original column indices of each
/// view (ascending).
pub fn split_views(
    ds: &MultiViewMimlDataset,
    n_views: usize,
    seed: u64,
) -> Result<(MultiViewMimlDataset, Vec<Vec<usize>>)> {
    if ds.n_views() != 1 {
        return Err(Error::invalid(
            "view split",
            format!("expected a single-view dataset, found {} views", ds.n_views()),
        ));
    }
    let d = ds.view(0).ncols();
    if n_views < 2 || d < n_views {
        return Err(Error::invalid(
            "view split",
            format!("cannot split {d} features into {n_views} views"),
        ));
    }
    let mut cols: Vec<usize> = (0..d).collect();
    cols.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut groups = Vec::with_capacity(n_views);
    let mut start = 0;
    for v in 0..n_views {
        let size = d / n_views + usize::from(v < d % n_views);
        let mut g = cols[start..start + size].to_vec();
        g.sort_unstable();
        groups.push(g);
        start += size;
    }
    let views = groups
        .iter()
        .map(|g| ds.view(0).select(Axis(1), g))
        .collect();
    let out = MultiViewMimlDataset::new(
        views,
        ds.bag_sizes().to_vec(),
        ds.bag_labels().clone(),
        ds.instance_labels().cloned(),
    )?
    .with_label_names(ds.label_names().to_vec())?;
    Ok((out, groups))
}

/// Uniform random split of `n` bag indices into `round(train_fraction · n)`
/// training bags and the rest, both sorted ascending. Both sides are kept
/// non-empty.
pub fn partition_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::invalid("partition", format!("need at least 2 bags, got {n}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(
            "partition",
            format!("train fraction {train_fraction} must lie in (0, 1)"),
        ));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn partition(
    ds: &MultiViewMimlDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    partition_indices(ds.n_bags(), train_fraction, seed)
}

/// Parameters of the planted generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_bags: usize,
    pub min_instances: usize,
    pub max_instances: usize,
    pub n_labels: usize,
    pub n_views: usize,
    pub rank: usize,
    /// Feature width of every view.
    pub view_dim: usize,
    /// Standard deviation of the Gaussian feature noise; prototypes have
    /// unit-variance coordinates.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_bags: 60,
            min_instances: 2,
            max_instances: 4,
            n_labels: 8,
            n_views: 2,
            rank: 5,
            view_dim: 10,
            noise: 0.1,
            seed: 0,
        }
    }
}

/// Off-topic mass in the planted factors.
const BACKGROUND: f64 = 0.05;

/// Draws a planted multi-view MIML corpus.
///
/// Each instance belongs to one latent topic; each label is tied to one
/// topic (the first `rank` labels cover every topic once, the rest pick a
/// topic at random). Instance labels are the thresholded planted scores
/// `G2 G3ᵀ > 1/2` and a bag's labels are the union of its instances'
/// labels. In every view an instance's features are its factor row mixed
/// over per-topic Gaussian prototypes, plus noise. The returned model holds
/// the planted factors, with bag factors set to the mean of their member
/// instance factors.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(MultiViewMimlDataset, FactorModel)> {
    let bad = |m: String| Err(Error::invalid("synthetic spec", m));
    if spec.rank == 0 || spec.rank > spec.n_labels || spec.rank > spec.n_bags {
        return bad(format!(
            "rank {} must be in 1..=min(n_bags, n_labels) = {}",
            spec.rank,
            spec.n_bags.min(spec.n_labels)
        ));
    }
    if spec.min_instances == 0 || spec.min_instances > spec.max_instances {
        return bad(format!(
            "instance range {}..={} is empty or includes 0",
            spec.min_instances, spec.max_instances
        ));
    }
    if spec.n_views == 0 || spec.view_dim == 0 {
        return bad("need at least one view with at least one feature".into());
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return bad(format!("noise {} must be finite and >= 0", spec.noise));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, q, r) = (spec.n_bags, spec.n_labels, spec.rank);

    let sizes: Vec<usize> = (0..n)
        .map(|_| rng.random_range(spec.min_instances..=spec.max_instances))
        .collect();
    let m: usize = sizes.iter().sum();

    let mut g2 = Array2::zeros((m, r));
    for mut row in g2.rows_mut() {
        let topic = rng.random_range(0..r);
        for (t, x) in row.iter_mut().enumerate() {
            *x = if t == topic {
                rng.random_range(0.8..1.2)
            } else {
                rng.random_range(0.0..BACKGROUND)
            };
        }
    }
    let mut g3 = Array2::zeros((q, r));
    for c in 0..q {
        let topic = if c < r { c } else { rng.random_range(0..r) };
        for t in 0..r {
            g3[[c, t]] = if t == topic { 1.0 } else { rng.random_range(0.0..BACKGROUND) };
        }
    }
    let instance_labels = g2.dot(&g3.t()).mapv(|s| u8::from(s > 0.5));

    let mut bag_labels = Array2::zeros((n, q));
    let mut g1 = Array2::zeros((n, r));
    let mut start = 0;
    for (b, &s) in sizes.iter().enumerate() {
        for k in start..start + s {
            for c in 0..q {
                bag_labels[[b, c]] |= instance_labels[[k, c]];
            }
            let row = g2.row(k).to_owned() / s as f64;
            let mut dst = g1.row_mut(b);
            dst += &row;
        }
        start += s;
    }

    let mut views = Vec::with_capacity(spec.n_views);
    for _ in 0..spec.n_views {
        let protos = Array2::from_shape_simple_fn((r, spec.view_dim), || {
            rng.sample::<f64, _>(StandardNormal)
        });
        let mut x = g2.dot(&protos);
        x.mapv_inplace(|v| v + spec.noise * rng.sample::<f64, _>(StandardNormal));
        views.push(x);
    }

    let ds = MultiViewMimlDataset::new(views, sizes, bag_labels, Some(instance_labels))?;
    let uniform = ndarray::Array1::from_elem(spec.n_views, 1.0 / spec.n_views as f64);
    let planted = FactorModel::new(g1, g2, g3, uniform.clone(), uniform)?;
    Ok((ds, planted))
}
