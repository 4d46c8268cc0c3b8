//! Domain types shared by the network builder, the solver, prediction and
//! the experiment harness.
//!
//! Every type validates its invariants on construction and again on
//! deserialization, so a value that exists is a value that is well formed.
//! All matrices are dense `ndarray` arrays.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(weights) == 1` for simplex-constrained view weights.
pub const SIMPLEX_TOL: f64 = 1e-9;

fn check_binary(what: &'static str, m: ArrayView2<'_, u8>) -> Result<()> {
    if let Some(((r, c), v)) = m.indexed_iter().find(|(_, &v)| v > 1) {
        return Err(Error::invalid(
            what,
            format!("entry ({r},{c}) = {v}, labels must be 0 or 1"),
        ));
    }
    Ok(())
}

fn check_binary_f64(what: &'static str, m: ArrayView2<'_, f64>) -> Result<()> {
    if let Some(((r, c), v)) = m.indexed_iter().find(|(_, &v)| v != 0.0 && v != 1.0) {
        return Err(Error::invalid(
            what,
            format!("entry ({r},{c}) = {v}, expected 0 or 1"),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// Multi-view multi-instance multi-label corpus.
///
/// Instances are stored in canonical order: the instances of bag 0, then
/// those of bag 1, and so on. Every view indexes the same `m` instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetRepr", into = "DatasetRepr")]
pub struct MultiViewMimlDataset {
    views: Vec<Array2<f64>>,
    bag_sizes: Vec<usize>,
    bag_offsets: Vec<usize>,
    bag_of_instance: Vec<usize>,
    bag_labels: Array2<u8>,
    instance_labels: Option<Array2<u8>>,
    label_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetRepr {
    views: Vec<Array2<f64>>,
    bag_sizes: Vec<usize>,
    bag_labels: Array2<u8>,
    #[serde(default)]
    instance_labels: Option<Array2<u8>>,
    #[serde(default)]
    label_names: Vec<String>,
}

impl TryFrom<DatasetRepr> for MultiViewMimlDataset {
    type Error = Error;

    fn try_from(r: DatasetRepr) -> Result<Self> {
        let mut ds = Self::new(r.views, r.bag_sizes, r.bag_labels, r.instance_labels)?;
        if !r.label_names.is_empty() {
            ds = ds.with_label_names(r.label_names)?;
        }
        Ok(ds)
    }
}

impl From<MultiViewMimlDataset> for DatasetRepr {
    fn from(d: MultiViewMimlDataset) -> Self {
        DatasetRepr {
            views: d.views,
            bag_sizes: d.bag_sizes,
            bag_labels: d.bag_labels,
            instance_labels: d.instance_labels,
            label_names: d.label_names,
        }
    }
}

impl MultiViewMimlDataset {
    /// Builds a dataset from per-view instance features (`m × d_v` each),
    /// the number of instances of each bag in canonical order, and the
    /// `n × q` binary bag-label matrix.
    pub fn new(
        views: Vec<Array2<f64>>,
        bag_sizes: Vec<usize>,
        bag_labels: Array2<u8>,
        instance_labels: Option<Array2<u8>>,
    ) -> Result<Self> {
        const WHAT: &str = "dataset";
        if views.is_empty() {
            return Err(Error::invalid(WHAT, "at least one view is required"));
        }
        if bag_sizes.is_empty() {
            return Err(Error::invalid(WHAT, "at least one bag is required"));
        }
        if let Some(i) = bag_sizes.iter().position(|&s| s == 0) {
            return Err(Error::invalid(WHAT, format!("bag {i} has no instances")));
        }
        let m: usize = bag_sizes.iter().sum();
        for (v, x) in views.iter().enumerate() {
            if x.nrows() != m {
                return Err(Error::invalid(
                    WHAT,
                    format!(
                        "view {v} has {} rows but bags hold {m} instances",
                        x.nrows()
                    ),
                ));
            }
            if x.ncols() == 0 {
                return Err(Error::invalid(WHAT, format!("view {v} has no features")));
            }
            if let Some(((r, c), _)) = x.indexed_iter().find(|(_, f)| !f.is_finite()) {
                return Err(Error::invalid(
                    WHAT,
                    format!("view {v} has a non-finite feature at ({r},{c})"),
                ));
            }
        }
        let n = bag_sizes.len();
        if bag_labels.nrows() != n {
            return Err(Error::invalid(
                WHAT,
                format!("bag_labels has {} rows, expected {n}", bag_labels.nrows()),
            ));
        }
        let q = bag_labels.ncols();
        if q == 0 {
            return Err(Error::invalid(WHAT, "at least one label is required"));
        }
        check_binary("bag_labels", bag_labels.view())?;
        if let Some(il) = &instance_labels {
            if il.dim() != (m, q) {
                return Err(Error::invalid(
                    WHAT,
                    format!("instance_labels is {:?}, expected ({m}, {q})", il.dim()),
                ));
            }
            check_binary("instance_labels", il.view())?;
        }

        let mut bag_offsets = Vec::with_capacity(n + 1);
        let mut bag_of_instance = Vec::with_capacity(m);
        bag_offsets.push(0);
        for (b, &s) in bag_sizes.iter().enumerate() {
            bag_of_instance.extend(std::iter::repeat_n(b, s));
            bag_offsets.push(bag_of_instance.len());
        }
        let label_names = (0..q).map(|c| format!("label_{c}")).collect();
        Ok(Self {
            views,
            bag_sizes,
            bag_offsets,
            bag_of_instance,
            bag_labels,
            instance_labels,
            label_names,
        })
    }

    pub fn with_label_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_labels() {
            return Err(Error::invalid(
                "dataset",
                format!(
                    "{} label names given for {} labels",
                    names.len(),
                    self.n_labels()
                ),
            ));
        }
        self.label_names = names;
        Ok(self)
    }

    pub fn n_bags(&self) -> usize {
        self.bag_sizes.len()
    }

    pub fn n_instances(&self) -> usize {
        self.bag_of_instance.len()
    }

    pub fn n_labels(&self) -> usize {
        self.bag_labels.ncols()
    }

    pub fn n_views(&self) -> usize {
        self.views.len()
    }

    pub fn views(&self) -> &[Array2<f64>] {
        &self.views
    }

    pub fn view(&self, v: usize) -> &Array2<f64> {
        &self.views[v]
    }

    pub fn bag_sizes(&self) -> &[usize] {
        &self.bag_sizes
    }

    /// Instance index range of bag `i`.
    pub fn bag_range(&self, i: usize) -> Range<usize> {
        self.bag_offsets[i]..self.bag_offsets[i + 1]
    }

    pub fn bag_of_instance(&self) -> &[usize] {
        &self.bag_of_instance
    }

    pub fn bag_labels(&self) -> &Array2<u8> {
        &self.bag_labels
    }

    pub fn instance_labels(&self) -> Option<&Array2<u8>> {
        self.instance_labels.as_ref()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Instance indices belonging to the given bags, in canonical order.
    pub fn instances_of(&self, bags: &[usize]) -> Vec<usize> {
        bags.iter().flat_map(|&b| self.bag_range(b)).collect()
    }

    /// Mean number of labels per bag over `bags`.
    pub fn label_cardinality(&self, bags: &[usize]) -> f64 {
        if bags.is_empty() {
            return 0.0;
        }
        let total: usize = bags
            .iter()
            .map(|&b| self.bag_labels.row(b).iter().map(|&x| x as usize).sum::<usize>())
            .sum();
        total as f64 / bags.len() as f64
    }
}

// ---------------------------------------------------------------------------
// Heterogeneous network
// ---------------------------------------------------------------------------

/// Relation matrices of the bag/instance/label network.
///
/// Bag-bag similarities (one per view, `n × n`) regularize the bag factors
/// and are weighted by `alpha`; instance-instance similarities (`m × m`)
/// regularize the instance factors and are weighted by `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkParts", into = "NetworkParts")]
pub struct HeteroNetwork {
    parts: NetworkParts,
    bag_degree: Vec<Array1<f64>>,
    instance_degree: Vec<Array1<f64>>,
    label_degree: Array1<f64>,
    inv_bag_size: Array1<f64>,
}

/// Raw relation matrices from which a [`HeteroNetwork`] is validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkParts {
    pub bag_similarity: Vec<Array2<f64>>,
    pub instance_similarity: Vec<Array2<f64>>,
    pub label_similarity: Array2<f64>,
    pub bag_instance: Array2<f64>,
    pub bag_label: Array2<f64>,
    pub instance_label: Array2<f64>,
    /// Observation mask for `instance_label`; `None` when no instance
    /// labels are known.
    #[serde(default)]
    pub instance_label_mask: Option<Array2<f64>>,
    /// Per-bag observation flag for `bag_label` (1 = labels known). `None`
    /// treats every row, including all-zero test rows, as observed.
    #[serde(default)]
    pub bag_label_mask: Option<Array1<f64>>,
}

impl TryFrom<NetworkParts> for HeteroNetwork {
    type Error = Error;
    fn try_from(p: NetworkParts) -> Result<Self> {
        HeteroNetwork::new(p)
    }
}

impl From<HeteroNetwork> for NetworkParts {
    fn from(n: HeteroNetwork) -> Self {
        n.parts
    }
}

fn check_similarity(what: &'static str, idx: usize, s: &Array2<f64>, size: usize) -> Result<()> {
    if s.dim() != (size, size) {
        return Err(Error::invalid(
            what,
            format!("matrix {idx} is {:?}, expected ({size}, {size})", s.dim()),
        ));
    }
    for i in 0..size {
        for j in 0..size {
            let v = s[[i, j]];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(
                    what,
                    format!("matrix {idx} entry ({i},{j}) = {v} outside [0, 1]"),
                ));
            }
            if j > i && v != s[[j, i]] {
                return Err(Error::invalid(
                    what,
                    format!("matrix {idx} is not symmetric at ({i},{j})"),
                ));
            }
        }
    }
    Ok(())
}

fn degree(s: &Array2<f64>) -> Array1<f64> {
    s.sum_axis(Axis(1))
}

impl HeteroNetwork {
    pub fn new(parts: NetworkParts) -> Result<Self> {
        let (n, m) = parts.bag_instance.dim();
        let q = parts.label_similarity.nrows();
        if parts.bag_similarity.is_empty() || parts.instance_similarity.is_empty() {
            return Err(Error::invalid(
                "network",
                "at least one bag view and one instance view are required",
            ));
        }
        for (v, s) in parts.bag_similarity.iter().enumerate() {
            check_similarity("bag similarity", v, s, n)?;
        }
        for (v, s) in parts.instance_similarity.iter().enumerate() {
            check_similarity("instance similarity", v, s, m)?;
        }
        check_similarity("label similarity", 0, &parts.label_similarity, q)?;

        check_binary_f64("bag-instance relation", parts.bag_instance.view())?;
        for (k, col) in parts.bag_instance.columns().into_iter().enumerate() {
            let owners = col.sum();
            if owners != 1.0 {
                return Err(Error::invalid(
                    "bag-instance relation",
                    format!("instance {k} belongs to {owners} bags, expected exactly 1"),
                ));
            }
        }
        let sizes = parts.bag_instance.sum_axis(Axis(1));
        if let Some(i) = sizes.iter().position(|&s| s < 1.0) {
            return Err(Error::invalid(
                "bag-instance relation",
                format!("bag {i} has no instances"),
            ));
        }

        if parts.bag_label.dim() != (n, q) {
            return Err(Error::invalid(
                "bag-label relation",
                format!("shape {:?}, expected ({n}, {q})", parts.bag_label.dim()),
            ));
        }
        check_binary_f64("bag-label relation", parts.bag_label.view())?;
        if parts.instance_label.dim() != (m, q) {
            return Err(Error::invalid(
                "instance-label relation",
                format!("shape {:?}, expected ({m}, {q})", parts.instance_label.dim()),
            ));
        }
        check_binary_f64("instance-label relation", parts.instance_label.view())?;
        if let Some(mask) = &parts.instance_label_mask {
            if mask.dim() != (m, q) {
                return Err(Error::invalid(
                    "instance-label mask",
                    format!("shape {:?}, expected ({m}, {q})", mask.dim()),
                ));
            }
            check_binary_f64("instance-label mask", mask.view())?;
        }
        if let Some(mask) = &parts.bag_label_mask {
            if mask.len() != n {
                return Err(Error::invalid(
                    "bag-label mask",
                    format!("length {}, expected {n}", mask.len()),
                ));
            }
            if let Some(i) = mask.iter().position(|&x| x != 0.0 && x != 1.0) {
                return Err(Error::invalid(
                    "bag-label mask",
                    format!("entry {i} = {}, expected 0 or 1", mask[i]),
                ));
            }
            if let Some(i) = (0..n).find(|&i| mask[i] == 0.0 && parts.bag_label.row(i).sum() != 0.0) {
                return Err(Error::invalid(
                    "bag-label mask",
                    format!("bag {i} is unobserved but carries labels"),
                ));
            }
        }

        let bag_degree = parts.bag_similarity.iter().map(degree).collect();
        let instance_degree = parts.instance_similarity.iter().map(degree).collect();
        let label_degree = degree(&parts.label_similarity);
        let inv_bag_size = sizes.mapv(|s| 1.0 / s);
        Ok(Self {
            parts,
            bag_degree,
            instance_degree,
            label_degree,
            inv_bag_size,
        })
    }

    /// Appends extra bag-similarity views. Each matrix is symmetrized as
    /// `(W + Wᵀ) / 2` before validation, so row-shuffled noisy copies can be
    /// added directly.
    pub fn with_extra_bag_views(self, extra: Vec<Array2<f64>>) -> Result<Self> {
        let mut parts = self.parts;
        for w in extra {
            let sym = (&w + &w.t()) * 0.5;
            parts.bag_similarity.push(sym);
        }
        Self::new(parts)
    }

    /// Replaces the instance-label relation with known labels observed
    /// under `mask` (1 = observed).
    pub fn with_known_instance_labels(
        self,
        labels: Array2<f64>,
        mask: Array2<f64>,
    ) -> Result<Self> {
        let mut parts = self.parts;
        parts.instance_label = labels * &mask;
        parts.instance_label_mask = Some(mask);
        Self::new(parts)
    }

    pub fn parts(&self) -> &NetworkParts {
        &self.parts
    }

    pub fn n_bags(&self) -> usize {
        self.parts.bag_instance.nrows()
    }

    pub fn n_instances(&self) -> usize {
        self.parts.bag_instance.ncols()
    }

    pub fn n_labels(&self) -> usize {
        self.parts.label_similarity.nrows()
    }

    pub fn n_bag_views(&self) -> usize {
        self.parts.bag_similarity.len()
    }

    pub fn n_instance_views(&self) -> usize {
        self.parts.instance_similarity.len()
    }

    pub fn bag_similarity(&self) -> &[Array2<f64>] {
        &self.parts.bag_similarity
    }

    pub fn instance_similarity(&self) -> &[Array2<f64>] {
        &self.parts.instance_similarity
    }

    pub fn label_similarity(&self) -> &Array2<f64> {
        &self.parts.label_similarity
    }

    pub fn bag_instance(&self) -> &Array2<f64> {
        &self.parts.bag_instance
    }

    pub fn bag_label(&self) -> &Array2<f64> {
        &self.parts.bag_label
    }

    pub fn instance_label(&self) -> &Array2<f64> {
        &self.parts.instance_label
    }

    pub fn instance_label_mask(&self) -> Option<&Array2<f64>> {
        self.parts.instance_label_mask.as_ref()
    }

    pub fn bag_label_mask(&self) -> Option<&Array1<f64>> {
        self.parts.bag_label_mask.as_ref()
    }

    /// Row weights of the bag-label terms: the mask, or all ones.
    pub fn bag_label_weights(&self) -> Array1<f64> {
        self.parts
            .bag_label_mask
            .clone()
            .unwrap_or_else(|| Array1::ones(self.n_bags()))
    }

    /// Diagonal of the degree matrix of each bag view.
    pub fn bag_degree(&self) -> &[Array1<f64>] {
        &self.bag_degree
    }

    pub fn instance_degree(&self) -> &[Array1<f64>] {
        &self.instance_degree
    }

    pub fn label_degree(&self) -> &Array1<f64> {
        &self.label_degree
    }

    /// Diagonal of the bag-averaging matrix: entry `i` is `1 / n_i`.
    pub fn inv_bag_size(&self) -> &Array1<f64> {
        &self.inv_bag_size
    }

    /// `Λ · R12`: row `i` averages the member instances of bag `i`.
    pub fn bag_averaging(&self) -> Array2<f64> {
        let mut a = self.parts.bag_instance.clone();
        for (mut row, &w) in a.rows_mut().into_iter().zip(self.inv_bag_size.iter()) {
            row *= w;
        }
        a
    }
}

// ---------------------------------------------------------------------------
// Factor model
// ---------------------------------------------------------------------------

/// Nonnegative low-rank factors with simplex view weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FactorRepr", into = "FactorRepr")]
pub struct FactorModel {
    g1: Array2<f64>,
    g2: Array2<f64>,
    g3: Array2<f64>,
    alpha: Array1<f64>,
    beta: Array1<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorRepr {
    bag_factors: Array2<f64>,
    instance_factors: Array2<f64>,
    label_factors: Array2<f64>,
    alpha: Array1<f64>,
    beta: Array1<f64>,
}

impl TryFrom<FactorRepr> for FactorModel {
    type Error = Error;
    fn try_from(r: FactorRepr) -> Result<Self> {
        FactorModel::new(
            r.bag_factors,
            r.instance_factors,
            r.label_factors,
            r.alpha,
            r.beta,
        )
    }
}

impl From<FactorModel> for FactorRepr {
    fn from(f: FactorModel) -> Self {
        FactorRepr {
            bag_factors: f.g1,
            instance_factors: f.g2,
            label_factors: f.g3,
            alpha: f.alpha,
            beta: f.beta,
        }
    }
}

pub(crate) fn check_simplex(what: &'static str, w: &Array1<f64>) -> Result<()> {
    if w.is_empty() {
        return Err(Error::invalid(what, "weight vector is empty"));
    }
    if let Some(i) = w.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::invalid(what, format!("weight {i} = {} is negative", w[i])));
    }
    let s = w.sum();
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::invalid(what, format!("weights sum to {s}, expected 1")));
    }
    Ok(())
}

impl FactorModel {
    pub fn new(
        g1: Array2<f64>,
        g2: Array2<f64>,
        g3: Array2<f64>,
        alpha: Array1<f64>,
        beta: Array1<f64>,
    ) -> Result<Self> {
        let d = g1.ncols();
        if g2.ncols() != d || g3.ncols() != d {
            return Err(Error::invalid(
                "factor model",
                format!(
                    "factor ranks differ: {} / {} / {}",
                    d,
                    g2.ncols(),
                    g3.ncols()
                ),
            ));
        }
        for (name, g) in [("bag", &g1), ("instance", &g2), ("label", &g3)] {
            if let Some(((r, c), v)) = g.indexed_iter().find(|(_, &v)| !(v >= 0.0 && v.is_finite()))
            {
                return Err(Error::invalid(
                    "factor model",
                    format!("{name} factor entry ({r},{c}) = {v} is not a finite nonnegative value"),
                ));
            }
        }
        check_simplex("alpha", &alpha)?;
        check_simplex("beta", &beta)?;
        Ok(Self {
            g1,
            g2,
            g3,
            alpha,
            beta,
        })
    }

    /// Bag factors, `n × d`.
    pub fn g1(&self) -> &Array2<f64> {
        &self.g1
    }

    /// Instance factors, `m × d`.
    pub fn g2(&self) -> &Array2<f64> {
        &self.g2
    }

    /// Label factors, `q × d`.
    pub fn g3(&self) -> &Array2<f64> {
        &self.g3
    }

    pub fn alpha(&self) -> &Array1<f64> {
        &self.alpha
    }

    pub fn beta(&self) -> &Array1<f64> {
        &self.beta
    }

    pub fn rank(&self) -> usize {
        self.g1.ncols()
    }

    pub(crate) fn from_parts_unchecked(
        g1: Array2<f64>,
        g2: Array2<f64>,
        g3: Array2<f64>,
        alpha: Array1<f64>,
        beta: Array1<f64>,
    ) -> Self {
        Self {
            g1,
            g2,
            g3,
            alpha,
            beta,
        }
    }

    pub(crate) fn factors_mut(
        &mut self,
    ) -> (
        &mut Array2<f64>,
        &mut Array2<f64>,
        &mut Array2<f64>,
        &mut Array1<f64>,
        &mut Array1<f64>,
    ) {
        (
            &mut self.g1,
            &mut self.g2,
            &mut self.g3,
            &mut self.alpha,
            &mut self.beta,
        )
    }
}

// ---------------------------------------------------------------------------
// Solver configuration
// ---------------------------------------------------------------------------

/// A relation type removed from the model for ablation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Ablation {
    /// Drop the bag-bag similarities (`nR11`).
    #[serde(rename = "nR11")]
    BagRelation,
    /// Drop the instance-instance similarities (`nR22`).
    #[serde(rename = "nR22")]
    InstanceRelation,
    /// Drop the label correlations (`nR33`).
    #[serde(rename = "nR33")]
    LabelRelation,
    /// Drop the instance-to-bag aggregation term and predict bags from the
    /// bag factors directly (`nR23`).
    #[serde(rename = "nR23")]
    Aggregation,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::BagRelation,
        Ablation::InstanceRelation,
        Ablation::LabelRelation,
        Ablation::Aggregation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::BagRelation => "nR11",
            Ablation::InstanceRelation => "nR22",
            Ablation::LabelRelation => "nR33",
            Ablation::Aggregation => "nR23",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation `{s}` (expected nR11, nR22, nR33 or nR23)")))
    }
}

/// How the relation network is built from a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    /// Keep only the `k` strongest neighbours of each node in the bag and
    /// instance similarity graphs (union-symmetrized). `None` keeps the
    /// dense kernels.
    pub neighbors: Option<usize>,
    /// Treat the bag-label rows of non-training bags as unobserved rather
    /// than as observed all-zero rows.
    pub mask_unlabeled: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            neighbors: None,
            mask_unlabeled: false,
        }
    }
}

impl NetworkConfig {
    /// 15-nearest-neighbour graphs with unlabeled rows masked out: the
    /// setting under which planted structure is recovered reliably.
    pub fn sparse() -> Self {
        Self {
            neighbors: Some(15),
            mask_unlabeled: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.neighbors == Some(0) {
            return Err(Error::Config("neighbors must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Low-rank size `d` shared by all factors.
    pub rank: usize,
    /// Regularizer on the bag-view weights.
    pub lambda1: f64,
    /// Regularizer on the instance-view weights.
    pub lambda2: f64,
    pub max_iters: usize,
    /// Stop when the relative objective change falls below this.
    pub rel_tol: f64,
    /// Denominator floor for the multiplicative updates.
    pub epsilon: f64,
    pub ablation: BTreeSet<Ablation>,
    /// Include the masked known-instance-label term when the network
    /// carries an observation mask.
    pub instance_label_term: bool,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rank: 140,
            lambda1: 1000.0,
            lambda2: 1000.0,
            max_iters: 500,
            rel_tol: 1e-6,
            epsilon: 1e-12,
            ablation: BTreeSet::new(),
            instance_label_term: false,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rank == 0 {
            return bad("rank must be at least 1".into());
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return bad(format!("lambda1 = {} must be a finite value >= 0", self.lambda1));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return bad(format!("lambda2 = {} must be a finite value >= 0", self.lambda2));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.rel_tol >= 0.0) {
            return bad(format!("rel_tol = {} must be >= 0", self.rel_tol));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon = {} must be > 0", self.epsilon));
        }
        Ok(())
    }

    pub fn ablates(&self, a: Ablation) -> bool {
        self.ablation.contains(&a)
    }

    pub fn with_ablation(mut self, a: Ablation) -> Self {
        self.ablation.insert(a);
        self
    }
}

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    OneMinusRankloss,
    MacroAuc,
    AvgRecall,
    AvgF1,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::OneMinusRankloss => "1-RankLoss",
            Metric::MacroAuc => "macroAUC",
            Metric::AvgRecall => "AvgRecall",
            Metric::AvgF1 => "AvgF1",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Bag,
    Instance,
}

impl Level {
    /// Metrics reported at this level.
    pub fn metrics(self) -> &'static [Metric] {
        match self {
            Level::Bag => &[
                Metric::OneMinusRankloss,
                Metric::MacroAuc,
                Metric::AvgRecall,
                Metric::AvgF1,
            ],
            Level::Instance => &[Metric::OneMinusRankloss, Metric::AvgF1],
        }
    }
}

impl FromStr for Level {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bag" => Ok(Level::Bag),
            "instance" => Ok(Level::Instance),
            other => Err(Error::Config(format!("unknown level `{other}` (expected bag or instance)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
    pub runs: Vec<f64>,
}

impl MetricSummary {
    /// Mean and sample standard deviation of `runs`.
    pub fn from_runs(runs: Vec<f64>) -> Self {
        let k = runs.len() as f64;
        let mean = if runs.is_empty() { 0.0 } else { runs.iter().sum::<f64>() / k };
        let std = if runs.len() < 2 {
            0.0
        } else {
            (runs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        };
        Self { mean, std, runs }
    }
}

impl fmt::Display for MetricSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}±{:.3}", self.mean, self.std)
    }
}

/// Provenance of an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunMetadata {
    pub config: SolverConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    pub partition_seeds: Vec<u64>,
    pub train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ReportRepr", into = "ReportRepr")]
pub struct EvaluationReport {
    level: Level,
    metrics: BTreeMap<Metric, MetricSummary>,
    metadata: RunMetadata,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReportRepr {
    level: Level,
    metrics: BTreeMap<Metric, MetricSummary>,
    metadata: RunMetadata,
}

impl TryFrom<ReportRepr> for EvaluationReport {
    type Error = Error;
    fn try_from(r: ReportRepr) -> Result<Self> {
        EvaluationReport::new(r.level, r.metrics, r.metadata)
    }
}

impl From<EvaluationReport> for ReportRepr {
    fn from(r: EvaluationReport) -> Self {
        ReportRepr {
            level: r.level,
            metrics: r.metrics,
            metadata: r.metadata,
        }
    }
}

impl EvaluationReport {
    pub fn new(
        level: Level,
        metrics: BTreeMap<Metric, MetricSummary>,
        metadata: RunMetadata,
    ) -> Result<Self> {
        for (m, s) in &metrics {
            let in_unit = |x: f64| (0.0..=1.0).contains(&x);
            if !in_unit(s.mean) || s.runs.iter().any(|&x| !in_unit(x)) {
                return Err(Error::invalid(
                    "evaluation report",
                    format!("{} has a value outside [0, 1]", m.name()),
                ));
            }
            if !(s.std >= 0.0) {
                return Err(Error::invalid(
                    "evaluation report",
                    format!("{} has negative standard deviation", m.name()),
                ));
            }
        }
        Ok(Self {
            level,
            metrics,
            metadata,
        })
    }

    /// Aggregates per-run metric maps into mean ± std summaries.
    pub fn from_runs(
        level: Level,
        runs: &[BTreeMap<Metric, f64>],
        metadata: RunMetadata,
    ) -> Result<Self> {
        let mut metrics = BTreeMap::new();
        for &m in level.metrics() {
            let values: Vec<f64> = runs.iter().filter_map(|r| r.get(&m).copied()).collect();
            metrics.insert(m, MetricSummary::from_runs(values));
        }
        Self::new(level, metrics, metadata)
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn metrics(&self) -> &BTreeMap<Metric, MetricSummary> {
        &self.metrics
    }

    pub fn get(&self, m: Metric) -> Option<&MetricSummary> {
        self.metrics.get(&m)
    }

    pub fn metadata(&self) -> &RunMetadata {
        &self.metadata
    }

    /// Plain-text table, one metric per line.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for (m, s) in &self.metrics {
            out.push_str(&format!("{:<12} {}\n", m.name(), s));
        }
        out
    }
}
