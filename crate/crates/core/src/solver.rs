//! Collaborative nonnegative factorization of the relation network.
//!
//! The objective is
//!
//! ```text
//! Z = ‖R12 − G1 G2ᵀ‖² + ‖R13 − G1 G3ᵀ‖² + ‖R13 − Λ R12 G2 G3ᵀ‖²
//!   + Σ_v α_v tr(G1ᵀ L_bag^v G1) + Σ_v β_v tr(G2ᵀ L_inst^v G2) + tr(G3ᵀ L_label G3)
//!   + λ1 ‖α‖² + λ2 ‖β‖²,      α, β on the probability simplex
//! ```
//!
//! with graph Laplacians `L = D − W`. Factors are updated multiplicatively
//! from the positive/negative split of the gradient; the view weights are
//! the exact minimizers of their simplex-constrained quadratic subproblem.

use std::fmt::Write as _;

use ndarray::{Array1, Array2, Zip};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Ablation, FactorModel, HeteroNetwork, SolverConfig};

/// Value of each objective term at one point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    /// `‖R12 − G1 G2ᵀ‖²`
    pub bag_instance: f64,
    /// `‖R13 − G1 G3ᵀ‖²`
    pub bag_label: f64,
    /// `‖R13 − Λ R12 G2 G3ᵀ‖²`
    pub aggregation: f64,
    /// `‖M ⊙ (R23 − G2 G3ᵀ)‖²`, zero unless enabled.
    pub instance_label: f64,
    /// `Σ_v α_v tr(G1ᵀ L_bag^v G1)`
    pub bag_smoothness: f64,
    /// `Σ_v β_v tr(G2ᵀ L_inst^v G2)`
    pub instance_smoothness: f64,
    pub label_smoothness: f64,
    pub alpha_penalty: f64,
    pub beta_penalty: f64,
    /// Unweighted `tr(G1ᵀ L_bag^v G1)` per bag view.
    pub bag_view_losses: Vec<f64>,
    /// Unweighted `tr(G2ᵀ L_inst^v G2)` per instance view.
    pub instance_view_losses: Vec<f64>,
}

impl ObjectiveTerms {
    pub fn total(&self) -> f64 {
        self.bag_instance
            + self.bag_label
            + self.aggregation
            + self.instance_label
            + self.bag_smoothness
            + self.instance_smoothness
            + self.label_smoothness
            + self.alpha_penalty
            + self.beta_penalty
    }

    fn is_finite(&self) -> bool {
        self.total().is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
}

/// Per-iteration record of a fit. Entry 0 is the initial point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub objective: Vec<f64>,
    pub terms: Vec<ObjectiveTerms>,
    pub alpha: Vec<Array1<f64>>,
    pub beta: Vec<Array1<f64>>,
    pub stop: StopReason,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.objective.len().saturating_sub(1)
    }

    /// CSV with one row per recorded iteration: the total, every term, and
    /// the view weights.
    pub fn to_csv(&self) -> String {
        let n_alpha = self.alpha.first().map_or(0, |a| a.len());
        let n_beta = self.beta.first().map_or(0, |b| b.len());
        let mut out = String::from(
            "iteration,total,bag_instance,bag_label,aggregation,instance_label,\
             bag_smoothness,instance_smoothness,label_smoothness,alpha_penalty,beta_penalty",
        );
        for v in 0..n_alpha {
            let _ = write!(out, ",alpha_{v}");
        }
        for v in 0..n_beta {
            let _ = write!(out, ",beta_{v}");
        }
        out.push('\n');
        for (t, terms) in self.terms.iter().enumerate() {
            let _ = write!(
                out,
                "{t},{},{},{},{},{},{},{},{},{},{}",
                self.objective[t],
                terms.bag_instance,
                terms.bag_label,
                terms.aggregation,
                terms.instance_label,
                terms.bag_smoothness,
                terms.instance_smoothness,
                terms.label_smoothness,
                terms.alpha_penalty,
                terms.beta_penalty
            );
            for a in self.alpha[t].iter().chain(self.beta[t].iter()) {
                let _ = write!(out, ",{a}");
            }
            out.push('\n');
        }
        out
    }
}

fn check_shapes(model: &FactorModel, net: &HeteroNetwork) -> Result<()> {
    let (n, m, q) = (net.n_bags(), net.n_instances(), net.n_labels());
    let got = (model.g1().nrows(), model.g2().nrows(), model.g3().nrows());
    if got != (n, m, q) {
        return Err(Error::Shape(format!(
            "factors have {got:?} rows, network has (bags, instances, labels) = ({n}, {m}, {q})"
        )));
    }
    if model.alpha().len() != net.n_bag_views() || model.beta().len() != net.n_instance_views() {
        return Err(Error::Shape(format!(
            "model has {} bag / {} instance view weights, network has {} / {} views",
            model.alpha().len(),
            model.beta().len(),
            net.n_bag_views(),
            net.n_instance_views()
        )));
    }
    Ok(())
}

/// `tr(Gᵀ (D − W) G)` for a symmetric nonnegative `W`, evaluated as
/// `Σ_{i<j} W_ij ‖g_i − g_j‖²` so the result is never negative.
pub fn laplacian_trace(w: &Array2<f64>, g: &Array2<f64>) -> f64 {
    let n = g.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let gi = g.row(i);
        for j in (i + 1)..n {
            let wij = 0.5 * (w[[i, j]] + w[[j, i]]);
            if wij == 0.0 {
                continue;
            }
            let d2: f64 = gi
                .iter()
                .zip(g.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            total += wij * d2;
        }
    }
    total
}

fn sq_frobenius_diff(r: &Array2<f64>, approx: &Array2<f64>) -> f64 {
    Zip::from(r)
        .and(approx)
        .fold(0.0, |acc, &a, &b| acc + (a - b) * (a - b))
}

/// `Σ_i w_i ‖r_i − approx_i‖²` over rows.
fn row_weighted_sq_diff(w: &Array1<f64>, r: &Array2<f64>, approx: &Array2<f64>) -> f64 {
    r.rows()
        .into_iter()
        .zip(approx.rows())
        .zip(w.iter())
        .filter(|(_, &wi)| wi != 0.0)
        .map(|((a, b), &wi)| wi * a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
        .sum()
}

/// Objective value with its per-term breakdown.
pub fn objective(
    model: &FactorModel,
    net: &HeteroNetwork,
    cfg: &SolverConfig,
) -> Result<ObjectiveTerms> {
    check_shapes(model, net)?;
    let (g1, g2, g3) = (model.g1(), model.g2(), model.g3());
    let obs = net.bag_label_weights();
    let mut t = ObjectiveTerms {
        bag_instance: sq_frobenius_diff(net.bag_instance(), &g1.dot(&g2.t())),
        bag_label: row_weighted_sq_diff(&obs, net.bag_label(), &g1.dot(&g3.t())),
        ..ObjectiveTerms::default()
    };
    if !cfg.ablates(Ablation::Aggregation) {
        let ag2 = net.bag_averaging().dot(g2);
        t.aggregation = row_weighted_sq_diff(&obs, net.bag_label(), &ag2.dot(&g3.t()));
    }
    if cfg.instance_label_term {
        if let Some(mask) = net.instance_label_mask() {
            let approx = g2.dot(&g3.t()) * mask;
            t.instance_label = sq_frobenius_diff(net.instance_label(), &approx);
        }
    }
    if cfg.ablates(Ablation::BagRelation) {
        t.bag_view_losses = vec![0.0; net.n_bag_views()];
    } else {
        t.bag_view_losses = net
            .bag_similarity()
            .iter()
            .map(|w| laplacian_trace(w, g1))
            .collect();
        t.bag_smoothness = dot(&t.bag_view_losses, model.alpha());
    }
    if cfg.ablates(Ablation::InstanceRelation) {
        t.instance_view_losses = vec![0.0; net.n_instance_views()];
    } else {
        t.instance_view_losses = net
            .instance_similarity()
            .iter()
            .map(|w| laplacian_trace(w, g2))
            .collect();
        t.instance_smoothness = dot(&t.instance_view_losses, model.beta());
    }
    if !cfg.ablates(Ablation::LabelRelation) {
        t.label_smoothness = laplacian_trace(net.label_similarity(), g3);
    }
    t.alpha_penalty = cfg.lambda1 * model.alpha().dot(model.alpha());
    t.beta_penalty = cfg.lambda2 * model.beta().dot(model.beta());
    Ok(t)
}

fn dot(a: &[f64], b: &Array1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `Σ_v w_v S_v` and `Σ_v w_v D_v`.
fn weighted_graph(
    sims: &[Array2<f64>],
    degrees: &[Array1<f64>],
    weights: &Array1<f64>,
) -> (Array2<f64>, Array1<f64>) {
    let mut w = Array2::zeros(sims[0].raw_dim());
    let mut d = Array1::zeros(degrees[0].raw_dim());
    for ((s, deg), &a) in sims.iter().zip(degrees).zip(weights.iter()) {
        if a != 0.0 {
            w.scaled_add(a, s);
            d.scaled_add(a, deg);
        }
    }
    (w, d)
}

/// `diag(d) · g`
fn scale_rows(d: &Array1<f64>, g: &Array2<f64>) -> Array2<f64> {
    let mut out = g.clone();
    for (mut row, &s) in out.rows_mut().into_iter().zip(d.iter()) {
        row *= s;
    }
    out
}

fn multiplicative(g: &Array2<f64>, num: &Array2<f64>, den: &Array2<f64>, eps: f64) -> Array2<f64> {
    let mut out = g.clone();
    Zip::from(&mut out)
        .and(num)
        .and(den)
        .for_each(|x, &a, &b| *x *= a / (b + eps));
    out
}

/// Positive and negative parts of the half-gradient for the bag factors.
pub(crate) fn g1_parts(
    model: &FactorModel,
    net: &HeteroNetwork,
    cfg: &SolverConfig,
) -> (Array2<f64>, Array2<f64>) {
    let (g1, g2, g3) = (model.g1(), model.g2(), model.g3());
    let obs = net.bag_label_weights();
    let mut num = net.bag_instance().dot(g2) + scale_rows(&obs, net.bag_label()).dot(g3);
    let mut den = g1.dot(&g2.t().dot(g2)) + scale_rows(&obs, &g1.dot(&g3.t().dot(g3)));
    if !cfg.ablates(Ablation::BagRelation) {
        let (w, d) = weighted_graph(net.bag_similarity(), net.bag_degree(), model.alpha());
        num += &w.dot(g1);
        den += &scale_rows(&d, g1);
    }
    (num, den)
}

pub(crate) fn g2_parts(
    model: &FactorModel,
    net: &HeteroNetwork,
    cfg: &SolverConfig,
) -> (Array2<f64>, Array2<f64>) {
    let (g1, g2, g3) = (model.g1(), model.g2(), model.g3());
    let mut num = net.bag_instance().t().dot(g1);
    let mut den = g2.dot(&g1.t().dot(g1));
    if !cfg.ablates(Ablation::Aggregation) {
        // rows of unobserved bags drop out of the aggregation term
        let a = scale_rows(&net.bag_label_weights(), &net.bag_averaging());
        num += &a.t().dot(&net.bag_label().dot(g3));
        den += &a.t().dot(&a.dot(g2)).dot(&g3.t().dot(g3));
    }
    if !cfg.ablates(Ablation::InstanceRelation) {
        let (w, d) = weighted_graph(
            net.instance_similarity(),
            net.instance_degree(),
            model.beta(),
        );
        num += &w.dot(g2);
        den += &scale_rows(&d, g2);
    }
    if cfg.instance_label_term {
        if let Some(mask) = net.instance_label_mask() {
            num += &net.instance_label().dot(g3);
            den += &(g2.dot(&g3.t()) * mask).dot(g3);
        }
    }
    (num, den)
}

pub(crate) fn g3_parts(
    model: &FactorModel,
    net: &HeteroNetwork,
    cfg: &SolverConfig,
) -> (Array2<f64>, Array2<f64>) {
    let (g1, g2, g3) = (model.g1(), model.g2(), model.g3());
    let obs = net.bag_label_weights();
    let r13 = scale_rows(&obs, net.bag_label());
    let r13t = r13.t();
    let mut num = r13t.dot(g1);
    let mut gram = g1.t().dot(&scale_rows(&obs, g1));
    if !cfg.ablates(Ablation::Aggregation) {
        let ag2 = net.bag_averaging().dot(g2);
        num += &r13t.dot(&ag2);
        gram += &ag2.t().dot(&scale_rows(&obs, &ag2));
    }
    let mut den = g3.dot(&gram);
    if !cfg.ablates(Ablation::LabelRelation) {
        num += &net.label_similarity().dot(g3);
        den += &scale_rows(net.label_degree(), g3);
    }
    if cfg.instance_label_term {
        if let Some(mask) = net.instance_label_mask() {
            num += &net.instance_label().t().dot(g2);
            den += &(g2.dot(&g3.t()) * mask).t().dot(g2);
        }
    }
    (num, den)
}

/// One multiplicative step on the bag factors.
pub fn update_g1(model: &FactorModel, net: &HeteroNetwork, cfg: &SolverConfig) -> Array2<f64> {
    let (num, den) = g1_parts(model, net, cfg);
    multiplicative(model.g1(), &num, &den, cfg.epsilon)
}

/// One multiplicative step on the instance factors.
pub fn update_g2(model: &FactorModel, net: &HeteroNetwork, cfg: &SolverConfig) -> Array2<f64> {
    let (num, den) = g2_parts(model, net, cfg);
    multiplicative(model.g2(), &num, &den, cfg.epsilon)
}

/// One multiplicative step on the label factors.
pub fn update_g3(model: &FactorModel, net: &HeteroNetwork, cfg: &SolverConfig) -> Array2<f64> {
    let (num, den) = g3_parts(model, net, cfg);
    multiplicative(model.g3(), &num, &den, cfg.epsilon)
}

/// Exact minimizer of `Σ_v w_v loss_v + λ ‖w‖²` over the probability
/// simplex.
///
/// For `λ > 0` the solution is `w_v = max(0, μ − loss_v) / (2λ)` with the
/// threshold `μ` found by sorting the losses. For `λ = 0` all mass goes to
/// the smallest loss, split evenly among exact ties.
pub fn solve_view_weights(losses: &[f64], lambda: f64) -> Result<Array1<f64>> {
    if losses.is_empty() {
        return Err(Error::invalid("view weights", "no views"));
    }
    if let Some(l) = losses.iter().find(|l| !l.is_finite()) {
        return Err(Error::invalid("view weights", format!("non-finite view loss {l}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(
            "view weights",
            format!("lambda = {lambda} must be finite and >= 0"),
        ));
    }
    let v = losses.len();
    let vertex = || {
        let best = losses.iter().copied().fold(f64::INFINITY, f64::min);
        let ties = losses.iter().filter(|&&l| l == best).count() as f64;
        Array1::from_iter(losses.iter().map(|&l| if l == best { 1.0 / ties } else { 0.0 }))
    };
    if lambda == 0.0 {
        return Ok(vertex());
    }

    let mut sorted = losses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let two_lambda = 2.0 * lambda;
    let mut prefix = 0.0;
    let mut mu = sorted[0] + two_lambda;
    for (k, &l) in sorted.iter().enumerate() {
        prefix += l;
        let candidate = (two_lambda + prefix) / (k + 1) as f64;
        if candidate > l {
            mu = candidate;
        } else {
            break;
        }
    }
    let mut w = Array1::from_iter(losses.iter().map(|&l| (mu - l).max(0.0) / two_lambda));
    let s = w.sum();
    if !(s > 0.0) || !s.is_finite() {
        return Ok(vertex());
    }
    w /= s;
    debug_assert_eq!(w.len(), v);
    Ok(w)
}

/// Random strictly positive factors scaled to the mean of `R12`, with
/// uniform view weights.
pub fn init_factors(net: &HeteroNetwork, cfg: &SolverConfig) -> FactorModel {
    let d = cfg.rank;
    let mean = net.bag_instance().mean().unwrap_or(1.0);
    let scale = (mean / d as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = |rows: usize| {
        Array2::from_shape_simple_fn((rows, d), || {
            let u: f64 = rng.sample(Open01);
            u * scale
        })
    };
    let g1 = draw(net.n_bags());
    let g2 = draw(net.n_instances());
    let g3 = draw(net.n_labels());
    let uniform = |k: usize| Array1::from_elem(k, 1.0 / k as f64);
    FactorModel::from_parts_unchecked(
        g1,
        g2,
        g3,
        uniform(net.n_bag_views()),
        uniform(net.n_instance_views()),
    )
}

/// Fits the factor model from a random start.
pub fn fit(net: &HeteroNetwork, cfg: &SolverConfig) -> Result<(FactorModel, SolveTrace)> {
    cfg.validate()?;
    let init = init_factors(net, cfg);
    fit_from(net, cfg, init)
}

/// Alternating optimization from a given starting point: bag factors,
/// instance factors, label factors, then bag-view and instance-view weights.
pub fn fit_from(
    net: &HeteroNetwork,
    cfg: &SolverConfig,
    mut model: FactorModel,
) -> Result<(FactorModel, SolveTrace)> {
    cfg.validate()?;
    check_shapes(&model, net)?;

    let first = objective(&model, net, cfg)?;
    if !first.is_finite() {
        return Err(Error::Numerical {
            iteration: 0,
            reason: "initial objective is not finite".into(),
        });
    }
    let mut trace = SolveTrace {
        objective: vec![first.total()],
        terms: vec![first],
        alpha: vec![model.alpha().clone()],
        beta: vec![model.beta().clone()],
        stop: StopReason::MaxIters,
    };

    for iteration in 1..=cfg.max_iters {
        let g1 = update_g1(&model, net, cfg);
        *model.factors_mut().0 = g1;
        let g2 = update_g2(&model, net, cfg);
        *model.factors_mut().1 = g2;
        let g3 = update_g3(&model, net, cfg);
        *model.factors_mut().2 = g3;

        if !cfg.ablates(Ablation::BagRelation) {
            let losses: Vec<f64> = net
                .bag_similarity()
                .iter()
                .map(|w| laplacian_trace(w, model.g1()))
                .collect();
            *model.factors_mut().3 = solve_view_weights(&losses, cfg.lambda1).map_err(|e| {
                Error::Numerical {
                    iteration,
                    reason: e.to_string(),
                }
            })?;
        }
        if !cfg.ablates(Ablation::InstanceRelation) {
            let losses: Vec<f64> = net
                .instance_similarity()
                .iter()
                .map(|w| laplacian_trace(w, model.g2()))
                .collect();
            *model.factors_mut().4 = solve_view_weights(&losses, cfg.lambda2).map_err(|e| {
                Error::Numerical {
                    iteration,
                    reason: e.to_string(),
                }
            })?;
        }

        let terms = objective(&model, net, cfg)?;
        let z = terms.total();
        if !z.is_finite() {
            return Err(Error::Numerical {
                iteration,
                reason: format!("objective became {z}"),
            });
        }
        let prev = *trace.objective.last().unwrap();
        trace.objective.push(z);
        trace.terms.push(terms);
        trace.alpha.push(model.alpha().clone());
        trace.beta.push(model.beta().clone());
        if (z - prev).abs() / prev.max(1e-12) < cfg.rel_tol {
            trace.stop = StopReason::Converged;
            break;
        }
    }
    Ok((model, trace))
}
