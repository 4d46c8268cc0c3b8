//! Label scores at instance and bag level, and top-k binarization.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::types::{Ablation, FactorModel, HeteroNetwork, SolverConfig};

/// Instance-label scores `G2 G3ᵀ` (`m × q`).
pub fn predict_instance_labels(model: &FactorModel) -> Array2<f64> {
    model.g2().dot(&model.g3().t())
}

/// Bag-label scores: the average of each bag's instance scores, or `G1 G3ᵀ`
/// when the aggregation relation is ablated.
pub fn predict_bag_labels(
    model: &FactorModel,
    net: &HeteroNetwork,
    cfg: &SolverConfig,
) -> Result<Array2<f64>> {
    if model.g1().nrows() != net.n_bags() || model.g2().nrows() != net.n_instances() {
        return Err(Error::Shape(format!(
            "model has {} bags / {} instances, network has {} / {}",
            model.g1().nrows(),
            model.g2().nrows(),
            net.n_bags(),
            net.n_instances()
        )));
    }
    if cfg.ablates(Ablation::Aggregation) {
        return Ok(model.g1().dot(&model.g3().t()));
    }
    Ok(net.bag_averaging().dot(&predict_instance_labels(model)))
}

/// Number of labels to predict per row for a training label cardinality.
pub fn top_k_for(train_cardinality: f64, n_labels: usize) -> usize {
    (train_cardinality.round().max(0.0) as usize).min(n_labels)
}

/// Sets the `round(train_cardinality)` highest scores of each row to 1.
/// Ties go to the lower label index; an all-zero row stays all-zero.
pub fn binarize(scores: ArrayView2<'_, f64>, train_cardinality: f64) -> Array2<u8> {
    let k = top_k_for(train_cardinality, scores.ncols());
    let mut out = Array2::zeros(scores.raw_dim());
    let mut order: Vec<usize> = Vec::with_capacity(scores.ncols());
    for (row, mut dst) in scores.rows().into_iter().zip(out.rows_mut()) {
        if row.iter().all(|&s| s == 0.0) {
            continue;
        }
        order.clear();
        order.extend(0..row.len());
        // stable sort keeps lower indices first among equal scores
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
        for &c in order.iter().take(k) {
            dst[c] = 1;
        }
    }
    out
}

/// CSV with a header of label names and one row per bag or instance.
pub fn scores_to_csv<T: std::fmt::Display>(matrix: ArrayView2<'_, T>, label_names: &[String]) -> String {
    let mut out = label_names.join(",");
    out.push('\n');
    for row in matrix.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}
