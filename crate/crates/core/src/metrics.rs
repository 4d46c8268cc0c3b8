//! Example-based and label-based multi-label metrics.
//!
//! Ranking metrics count score ties as half a correctly ordered pair.
//! Rows (or label columns) on which a metric is undefined are skipped.

use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Error, Result};

fn check_shape<A, B>(a: &ArrayView2<'_, A>, b: &ArrayView2<'_, B>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "predictions are {:?} but truth is {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Fraction of (positive, negative) pairs ranked correctly, ties = 1/2.
/// `None` when either class is empty.
fn pairwise_order(scores: ArrayView1<'_, f64>, truth: ArrayView1<'_, u8>) -> Option<f64> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (&s, &t) in scores.iter().zip(truth.iter()) {
        if t != 0 {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut good = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                good += 1.0;
            } else if p == n {
                good += 0.5;
            }
        }
    }
    Some(good / (pos.len() * neg.len()) as f64)
}

/// One minus the ranking loss, averaged over rows that have at least one
/// relevant and one irrelevant label.
pub fn one_minus_rankloss(scores: ArrayView2<'_, f64>, truth: ArrayView2<'_, u8>) -> Result<f64> {
    check_shape(&scores, &truth)?;
    let per_row: Vec<f64> = scores
        .rows()
        .into_iter()
        .zip(truth.rows())
        .filter_map(|(s, t)| pairwise_order(s, t))
        .collect();
    if per_row.is_empty() {
        return Err(Error::Metric(
            "rankloss undefined: no row has both relevant and irrelevant labels".into(),
        ));
    }
    Ok(per_row.iter().sum::<f64>() / per_row.len() as f64)
}

/// Mean per-label AUC over labels with at least one positive and one
/// negative row.
pub fn macro_auc(scores: ArrayView2<'_, f64>, truth: ArrayView2<'_, u8>) -> Result<f64> {
    check_shape(&scores, &truth)?;
    let per_label: Vec<f64> = scores
        .columns()
        .into_iter()
        .zip(truth.columns())
        .filter_map(|(s, t)| pairwise_order(s, t))
        .collect();
    if per_label.is_empty() {
        return Err(Error::Metric(
            "macro AUC undefined: no label has both positive and negative rows".into(),
        ));
    }
    Ok(per_label.iter().sum::<f64>() / per_label.len() as f64)
}

fn counts(p: ArrayView1<'_, u8>, t: ArrayView1<'_, u8>) -> (usize, usize, usize) {
    let mut hit = 0;
    let mut np = 0;
    let mut nt = 0;
    for (&a, &b) in p.iter().zip(t.iter()) {
        let (a, b) = (a != 0, b != 0);
        np += a as usize;
        nt += b as usize;
        hit += (a && b) as usize;
    }
    (hit, np, nt)
}

/// Example-based recall, skipping rows with no true labels.
pub fn avg_recall(pred: ArrayView2<'_, u8>, truth: ArrayView2<'_, u8>) -> Result<f64> {
    check_shape(&pred, &truth)?;
    let per_row: Vec<f64> = pred
        .rows()
        .into_iter()
        .zip(truth.rows())
        .filter_map(|(p, t)| {
            let (hit, _, nt) = counts(p, t);
            (nt > 0).then(|| hit as f64 / nt as f64)
        })
        .collect();
    if per_row.is_empty() {
        return Err(Error::Metric("recall undefined: every row has an empty label set".into()));
    }
    Ok(per_row.iter().sum::<f64>() / per_row.len() as f64)
}

/// Example-based F1, skipping rows where both prediction and truth are
/// empty.
pub fn avg_f1(pred: ArrayView2<'_, u8>, truth: ArrayView2<'_, u8>) -> Result<f64> {
    check_shape(&pred, &truth)?;
    let per_row: Vec<f64> = pred
        .rows()
        .into_iter()
        .zip(truth.rows())
        .filter_map(|(p, t)| {
            let (hit, np, nt) = counts(p, t);
            (np + nt > 0).then(|| 2.0 * hit as f64 / (np + nt) as f64)
        })
        .collect();
    if per_row.is_empty() {
        return Err(Error::Metric(
            "F1 undefined: every row has empty prediction and truth".into(),
        ));
    }
    Ok(per_row.iter().sum::<f64>() / per_row.len() as f64)
}
