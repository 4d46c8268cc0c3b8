//! Construction of the bag/instance/label relation matrices.
//!
//! Instance similarities use a Gaussian heat kernel whose bandwidth is the
//! mean pairwise Euclidean distance of the view. Bag similarities apply a
//! kernel to the composite Hausdorff distance (mean of the average, maximal
//! and minimal Hausdorff distances). Label correlations are cosine
//! similarities of label columns over the training bags.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{HeteroNetwork, MultiViewMimlDataset, NetworkConfig, NetworkParts};

/// Euclidean distances between all rows of `x`.
pub fn pairwise_distances(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let m = x.nrows();
    let mut d = Array2::zeros((m, m));
    for i in 0..m {
        let xi = x.row(i);
        for j in (i + 1)..m {
            let dist = xi
                .iter()
                .zip(x.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[[i, j]] = dist;
            d[[j, i]] = dist;
        }
    }
    d
}

/// Mean of the strictly-upper-triangular entries.
fn mean_off_diagonal(d: &Array2<f64>) -> f64 {
    let n = d.nrows();
    let mut total = 0.0;
    for i in 0..n {
        total += d.slice(s![i, (i + 1)..]).sum();
    }
    total / (n * (n - 1) / 2) as f64
}

/// Fills a symmetric kernel matrix from a symmetric distance matrix, with
/// exactly unit diagonal and exact symmetry.
fn kernel_from(d: &Array2<f64>, f: impl Fn(f64) -> f64) -> Array2<f64> {
    let n = d.nrows();
    let mut k = Array2::ones((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = f(d[[i, j]]);
            k[[i, j]] = v;
            k[[j, i]] = v;
        }
    }
    k
}

fn instance_kernel(dist: &Array2<f64>, view: usize) -> Result<Array2<f64>> {
    if dist.nrows() < 2 {
        return Err(Error::DegenerateView {
            view,
            reason: "fewer than two instances",
        });
    }
    let sigma = mean_off_diagonal(dist);
    if sigma <= 0.0 {
        return Err(Error::DegenerateView {
            view,
            reason: "zero dispersion",
        });
    }
    let s2 = sigma * sigma;
    Ok(kernel_from(dist, |d| (-(d * d) / s2).exp()))
}

/// Heat-kernel similarity of the rows of an `m × d_v` feature matrix.
///
/// The bandwidth is the mean Euclidean distance over the `m(m-1)/2`
/// distinct instance pairs.
pub fn instance_similarity(features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    instance_kernel(&pairwise_distances(features), 0)
}

/// Composite Hausdorff distance from the cross-distance block
/// `block[a][b] = d(a, b)` for `a` in one bag and `b` in the other.
fn hausdorff_from_block(block: ArrayView2<'_, f64>) -> f64 {
    let row_min: Vec<f64> = block
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let col_min: Vec<f64> = block
        .columns()
        .into_iter()
        .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();

    let avg = (row_min.iter().sum::<f64>() + col_min.iter().sum::<f64>())
        / (row_min.len() + col_min.len()) as f64;
    let max = row_min
        .iter()
        .chain(col_min.iter())
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let min = row_min.iter().copied().fold(f64::INFINITY, f64::min);
    (avg + max + min) / 3.0
}

/// Composite Hausdorff distance between two bags whose rows are instance
/// feature vectors.
pub fn composite_hausdorff(bag_a: ArrayView2<'_, f64>, bag_b: ArrayView2<'_, f64>) -> Result<f64> {
    if bag_a.nrows() == 0 || bag_b.nrows() == 0 {
        return Err(Error::invalid("bag", "composite Hausdorff distance of an empty bag"));
    }
    if bag_a.ncols() != bag_b.ncols() {
        return Err(Error::Shape(format!(
            "bags have feature widths {} and {}",
            bag_a.ncols(),
            bag_b.ncols()
        )));
    }
    let mut block = Array2::zeros((bag_a.nrows(), bag_b.nrows()));
    for (i, a) in bag_a.rows().into_iter().enumerate() {
        for (j, b) in bag_b.rows().into_iter().enumerate() {
            block[[i, j]] = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
        }
    }
    Ok(hausdorff_from_block(block.view()))
}

fn bag_kernel(
    dataset: &MultiViewMimlDataset,
    dist: &Array2<f64>,
    view: usize,
) -> Result<Array2<f64>> {
    let n = dataset.n_bags();
    if n < 2 {
        return Err(Error::DegenerateView {
            view,
            reason: "fewer than two bags",
        });
    }
    let mut h = Array2::zeros((n, n));
    for i in 0..n {
        let ri = dataset.bag_range(i);
        for j in (i + 1)..n {
            let rj = dataset.bag_range(j);
            let v = hausdorff_from_block(dist.slice(s![ri.clone(), rj]));
            h[[i, j]] = v;
            h[[j, i]] = v;
        }
    }
    let sigma = mean_off_diagonal(&h);
    if sigma <= 0.0 {
        return Err(Error::DegenerateView {
            view,
            reason: "zero bag dispersion",
        });
    }
    // The exponent divides the distance itself, not its square, by sigma².
    let s2 = sigma * sigma;
    Ok(kernel_from(&h, |d| (-d / s2).exp()))
}

/// Bag-bag similarity of view `view`.
pub fn bag_similarity(dataset: &MultiViewMimlDataset, view: usize) -> Result<Array2<f64>> {
    if view >= dataset.n_views() {
        return Err(Error::Shape(format!(
            "view {view} requested from a dataset with {} views",
            dataset.n_views()
        )));
    }
    let dist = pairwise_distances(dataset.view(view).view());
    bag_kernel(dataset, &dist, view)
}

/// Cosine similarity between the label columns of a binary `rows × q`
/// matrix. A label that never occurs correlates 0 with every other label
/// and 1 with itself.
pub fn label_correlation(labels: ArrayView2<'_, u8>) -> Array2<f64> {
    let y = labels.mapv(f64::from);
    let gram = y.t().dot(&y);
    let q = gram.nrows();
    let mut r = Array2::zeros((q, q));
    for a in 0..q {
        r[[a, a]] = 1.0;
        for b in (a + 1)..q {
            let denom = (gram[[a, a]] * gram[[b, b]]).sqrt();
            let v = if denom > 0.0 {
                (gram[[a, b]] / denom).min(1.0)
            } else {
                0.0
            };
            r[[a, b]] = v;
            r[[b, a]] = v;
        }
    }
    r
}

/// Keeps, for every node, its `k` most similar other nodes and the
/// diagonal; an edge survives if either endpoint keeps it. Ties go to the
/// lower index.
pub fn sparsify_knn(w: &Array2<f64>, k: usize) -> Array2<f64> {
    let n = w.nrows();
    let mut out = Array2::zeros((n, n));
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i));
        order.sort_by(|&a, &b| w[[i, b]].total_cmp(&w[[i, a]]));
        for &j in order.iter().take(k) {
            out[[i, j]] = w[[i, j]];
            out[[j, i]] = w[[j, i]];
        }
        out[[i, i]] = w[[i, i]];
    }
    out
}

/// Builds the full relation network for a transductive split: every bag
/// and instance takes part, but only the rows of `train_bags` carry labels.
pub fn assemble_network(
    dataset: &MultiViewMimlDataset,
    train_bags: &[usize],
    config: &NetworkConfig,
) -> Result<HeteroNetwork> {
    config.validate()?;
    let n = dataset.n_bags();
    let m = dataset.n_instances();
    let q = dataset.n_labels();
    if let Some(&b) = train_bags.iter().find(|&&b| b >= n) {
        return Err(Error::Shape(format!(
            "training bag {b} out of range for {n} bags"
        )));
    }

    let mut bag_similarity = Vec::with_capacity(dataset.n_views());
    let mut instance_similarity = Vec::with_capacity(dataset.n_views());
    for (v, x) in dataset.views().iter().enumerate() {
        let dist = pairwise_distances(x.view());
        let mut inst = instance_kernel(&dist, v)?;
        let mut bag = bag_kernel(dataset, &dist, v)?;
        if let Some(k) = config.neighbors {
            inst = sparsify_knn(&inst, k);
            bag = sparsify_knn(&bag, k);
        }
        instance_similarity.push(inst);
        bag_similarity.push(bag);
    }

    let train_labels = dataset.bag_labels().select(Axis(0), train_bags);
    let label_similarity = label_correlation(train_labels.view());

    let mut bag_instance = Array2::zeros((n, m));
    for (k, &b) in dataset.bag_of_instance().iter().enumerate() {
        bag_instance[[b, k]] = 1.0;
    }

    let mut bag_label = Array2::zeros((n, q));
    let mut observed = Array1::zeros(n);
    for &b in train_bags {
        observed[b] = 1.0;
        bag_label
            .row_mut(b)
            .assign(&dataset.bag_labels().row(b).mapv(f64::from));
    }

    HeteroNetwork::new(NetworkParts {
        bag_similarity,
        instance_similarity,
        label_similarity,
        bag_instance,
        bag_label,
        instance_label: Array2::zeros((m, q)),
        instance_label_mask: None,
        bag_label_mask: config.mask_unlabeled.then_some(observed),
    })
}

/// Destroys the structure of a similarity matrix by permuting, within each
/// row, the nonzero values among that row's nonzero positions.
///
/// Zero pattern, row sums and per-row value multisets are preserved; the
/// result is generally not symmetric.
pub fn make_noisy_view(matrix: &Array2<f64>, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = matrix.clone();
    for mut row in out.rows_mut() {
        let positions: Vec<usize> = row
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(j, _)| j)
            .collect();
        let mut values: Vec<f64> = positions.iter().map(|&j| row[j]).collect();
        values.shuffle(&mut rng);
        for (&j, v) in positions.iter().zip(values) {
            row[j] = v;
        }
    }
    out
}
