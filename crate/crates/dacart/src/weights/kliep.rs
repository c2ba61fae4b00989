//! Direct density-ratio estimation with Gaussian kernels.
//!
//! Models the ratio of target to source covariate density as
//! `w(x) = sum_l alpha_l K_sigma(x, c_l)` with kernels centered at a random
//! subset of target points, maximizing the target log-likelihood
//! `sum_t log w(x_t)` subject to `alpha >= 0` and the source-mean constraint
//! `(1/n) sum_s w(x_s) = 1`.
//!
//! Reparameterizing `pi_l = alpha_l * b_l` with `b_l = (1/n) sum_s K(x_s, c_l)`
//! turns the problem into mixture-proportion maximum likelihood on the
//! simplex, which the classic EM multiplicative update solves monotonically —
//! no step size, both constraints maintained exactly at every iteration.
//! The kernel width is picked from a small grid around the median pairwise
//! distance by cross-validated target likelihood.

use rand::seq::index::sample;

use super::{WeightError, WeightSource, WeightVector};
use crate::data::Dataset;
use crate::seed::rng_for;

/// Kernel and optimizer settings for [`kliep_weights`].
#[derive(Debug, Clone)]
pub struct KliepParams {
    /// Kernel centers drawn uniformly from the target sample (at most this many).
    pub n_centers: usize,
    /// Fixed kernel width; `None` selects one by cross-validation.
    pub sigma: Option<f64>,
    /// Grid of multipliers applied to the median pairwise distance.
    pub sigma_factors: Vec<f64>,
    /// Folds for the width cross-validation.
    pub cv_folds: usize,
    /// Maximum EM iterations per fit.
    pub max_iter: usize,
    /// Stop when the relative objective improvement falls below this.
    pub tol: f64,
    /// Maximum tolerated source-mean constraint residual.
    pub constraint_tol: f64,
    pub seed: u64,
}

impl Default for KliepParams {
    fn default() -> Self {
        KliepParams {
            n_centers: 100,
            sigma: None,
            sigma_factors: vec![0.5, 0.75, 1.0, 1.5, 2.0],
            cv_folds: 5,
            max_iter: 500,
            tol: 1e-10,
            constraint_tol: 1e-6,
            seed: 0,
        }
    }
}

/// Estimated weights plus fit diagnostics.
#[derive(Debug, Clone)]
pub struct KliepResult {
    pub weights: WeightVector,
    /// Density-ratio values over source rows before normalization to sum n.
    pub raw_weights: Vec<f64>,
    pub sigma: f64,
    /// Final target log-likelihood.
    pub objective: f64,
    /// `|(1/n) sum_s w(x_s) - 1|` at the returned solution.
    pub constraint_residual: f64,
    pub n_centers: usize,
    pub iterations: usize,
}

struct Points {
    data: Vec<f64>,
    n: usize,
    p: usize,
}

impl Points {
    fn from_dataset(d: &Dataset) -> Points {
        let n = d.n_rows();
        let p = d.n_features();
        let mut data = vec![0.0; n * p];
        for j in 0..p {
            let col = d.column(j);
            for i in 0..n {
                data[i * p + j] = col[i];
            }
        }
        Points { data, n, p }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row-major kernel matrix `K[i][l] = exp(-||x_i - c_l||^2 / (2 sigma^2))`.
fn kernel_matrix(points: &Points, rows: &[usize], centers: &[usize], center_points: &Points, sigma: f64) -> Vec<f64> {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut k = vec![0.0; rows.len() * centers.len()];
    for (r, &i) in rows.iter().enumerate() {
        let xi = points.row(i);
        for (c, &l) in centers.iter().enumerate() {
            k[r * centers.len() + c] = (-sq_dist(xi, center_points.row(l)) * inv).exp();
        }
    }
    k
}

/// Mixture-proportion EM on `max sum_t log(sum_l pi_l g[t][l])` over the simplex.
/// Returns `(pi, objective, iterations)`.
fn em_fit(g: &[f64], n_rows: usize, n_cols: usize, max_iter: usize, tol: f64) -> (Vec<f64>, f64, usize) {
    let mut pi = vec![1.0 / n_cols as f64; n_cols];
    let mut obj = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut resp = vec![0.0; n_cols];
    for it in 0..max_iter {
        iterations = it + 1;
        let mut new_obj = 0.0;
        resp.iter_mut().for_each(|r| *r = 0.0);
        for t in 0..n_rows {
            let row = &g[t * n_cols..(t + 1) * n_cols];
            let mut w = 0.0;
            for (l, &gv) in row.iter().enumerate() {
                w += pi[l] * gv;
            }
            let w = w.max(f64::MIN_POSITIVE);
            new_obj += w.ln();
            for (l, &gv) in row.iter().enumerate() {
                resp[l] += pi[l] * gv / w;
            }
        }
        let inv_t = 1.0 / n_rows as f64;
        for l in 0..n_cols {
            pi[l] = resp[l] * inv_t;
        }
        // EM never decreases the objective; stop on relative stagnation.
        if new_obj - obj <= tol * new_obj.abs().max(1.0) && it > 0 {
            obj = new_obj;
            break;
        }
        obj = new_obj;
    }
    (pi, obj, iterations)
}

/// Fit `alpha` from a target kernel matrix and source column means `b`.
fn fit_alpha(k_target: &[f64], n_target: usize, b: &[f64], max_iter: usize, tol: f64) -> (Vec<f64>, f64, usize) {
    let c = b.len();
    // g[t][l] = K[t][l] / b_l
    let mut g = vec![0.0; n_target * c];
    for t in 0..n_target {
        for l in 0..c {
            g[t * c + l] = k_target[t * c + l] / b[l];
        }
    }
    let (pi, obj, iters) = em_fit(&g, n_target, c, max_iter, tol);
    let alpha: Vec<f64> = pi.iter().zip(b).map(|(&p, &bl)| p / bl).collect();
    (alpha, obj, iters)
}

/// Median pairwise Euclidean distance over a pooled subsample; the kernel
/// width heuristic the sigma grid is centered on.
fn median_pairwise_distance(source: &Points, target: &Points, seed: u64) -> f64 {
    let cap = 200usize;
    let total = source.n + target.n;
    let take = cap.min(total);
    let mut rng = rng_for(seed, 1);
    let picks = sample(&mut rng, total, take);
    let rows: Vec<&[f64]> = picks
        .iter()
        .map(|i| if i < source.n { source.row(i) } else { target.row(i - source.n) })
        .collect();
    let mut dists = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            let d = sq_dist(rows[i], rows[j]).sqrt();
            if d > 0.0 {
                dists.push(d);
            }
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dists[dists.len() / 2]
}

/// Estimate the density ratio `p_target / p_source` at every source row.
///
/// Both datasets must be nonempty and share one schema (binary columns are
/// treated as numeric 0/1). Deterministic given `params.seed`.
pub fn kliep_weights(
    z_source: &Dataset,
    z_target: &Dataset,
    params: &KliepParams,
) -> Result<KliepResult, WeightError> {
    if z_source.n_rows() == 0 || z_target.n_rows() == 0 {
        return Err(WeightError::EmptyInput);
    }
    if z_source.schema() != z_target.schema() {
        return Err(WeightError::SchemaMismatch);
    }
    if params.n_centers == 0 {
        return Err(WeightError::Optimizer("n_centers must be >= 1".into()));
    }
    let source = Points::from_dataset(z_source);
    let target = Points::from_dataset(z_target);
    let n = source.n;
    let m = target.n;

    let n_centers = params.n_centers.min(m);
    let mut rng = rng_for(params.seed, 0);
    let mut centers: Vec<usize> = sample(&mut rng, m, n_centers).into_iter().collect();
    centers.sort_unstable();

    let sigmas: Vec<f64> = match params.sigma {
        Some(s) => vec![s],
        None => {
            let med = median_pairwise_distance(&source, &target, params.seed);
            params.sigma_factors.iter().map(|f| f * med).collect()
        }
    };

    let source_rows: Vec<usize> = (0..n).collect();
    let target_rows: Vec<usize> = (0..m).collect();

    let sigma = if sigmas.len() == 1 {
        sigmas[0]
    } else {
        select_sigma(&sigmas, &source, &target, &source_rows, &target_rows, &centers, params)?
    };

    let k_source = kernel_matrix(&source, &source_rows, &centers, &target, sigma);
    let k_target = kernel_matrix(&target, &target_rows, &centers, &target, sigma);
    let b = column_means(&k_source, n, n_centers);
    let keep: Vec<usize> = (0..n_centers).filter(|&l| b[l] > 1e-300).collect();
    if keep.is_empty() {
        return Err(WeightError::Optimizer(format!(
            "all {n_centers} kernel centers have zero source mass at sigma {sigma}"
        )));
    }
    let (k_source, k_target, b) = if keep.len() == n_centers {
        (k_source, k_target, b)
    } else {
        (
            select_columns(&k_source, n, n_centers, &keep),
            select_columns(&k_target, m, n_centers, &keep),
            keep.iter().map(|&l| b[l]).collect(),
        )
    };
    let c = b.len();

    let (mut alpha, objective, iterations) = fit_alpha(&k_target, m, &b, params.max_iter, params.tol);
    // Exact projection onto the source-mean constraint along the alpha ray.
    let scale: f64 = alpha.iter().zip(&b).map(|(a, bl)| a * bl).sum();
    if !(scale > 0.0) {
        return Err(WeightError::Optimizer("optimizer collapsed to zero weights".into()));
    }
    for a in &mut alpha {
        *a /= scale;
    }

    let raw_weights: Vec<f64> = (0..n)
        .map(|i| {
            let row = &k_source[i * c..(i + 1) * c];
            row.iter().zip(&alpha).map(|(k, a)| k * a).sum()
        })
        .collect();
    let mean: f64 = raw_weights.iter().sum::<f64>() / n as f64;
    let residual = (mean - 1.0).abs();
    if residual > params.constraint_tol {
        return Err(WeightError::ConstraintViolation {
            residual,
            tolerance: params.constraint_tol,
            sigma,
            centers: c,
            iterations,
        });
    }

    let weights = WeightVector::from_raw(&raw_weights, WeightSource::Kliep, super::DEFAULT_TRUNC)?;
    Ok(KliepResult {
        weights,
        raw_weights,
        sigma,
        objective,
        constraint_residual: residual,
        n_centers: c,
        iterations,
    })
}

fn column_means(k: &[f64], n_rows: usize, n_cols: usize) -> Vec<f64> {
    let mut means = vec![0.0; n_cols];
    for i in 0..n_rows {
        for l in 0..n_cols {
            means[l] += k[i * n_cols + l];
        }
    }
    for m in &mut means {
        *m /= n_rows as f64;
    }
    means
}

fn select_columns(k: &[f64], n_rows: usize, n_cols: usize, keep: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; n_rows * keep.len()];
    for i in 0..n_rows {
        for (c_new, &c_old) in keep.iter().enumerate() {
            out[i * keep.len() + c_new] = k[i * n_cols + c_old];
        }
    }
    out
}

/// Pick the kernel width maximizing held-out target log-likelihood.
fn select_sigma(
    sigmas: &[f64],
    source: &Points,
    target: &Points,
    source_rows: &[usize],
    target_rows: &[usize],
    centers: &[usize],
    params: &KliepParams,
) -> Result<f64, WeightError> {
    let m = target.n;
    let folds = params.cv_folds.max(2).min(m);
    let mut rng = rng_for(params.seed, 2);
    let order: Vec<usize> = sample(&mut rng, m, m).into_iter().collect();
    let mut fold_of = vec![0usize; m];
    for (k, &row) in order.iter().enumerate() {
        fold_of[row] = k % folds;
    }

    let mut best: Option<(f64, f64)> = None; // (mean held-out loglik, sigma)
    for &sigma in sigmas {
        let k_source = kernel_matrix(source, source_rows, centers, target, sigma);
        let k_target = kernel_matrix(target, target_rows, centers, target, sigma);
        let b = column_means(&k_source, source.n, centers.len());
        let keep: Vec<usize> = (0..centers.len()).filter(|&l| b[l] > 1e-300).collect();
        if keep.is_empty() {
            continue;
        }
        let k_target = select_columns(&k_target, m, centers.len(), &keep);
        let b_kept: Vec<f64> = keep.iter().map(|&l| b[l]).collect();
        let c = keep.len();

        let mut total = 0.0;
        let mut counted = 0usize;
        for fold in 0..folds {
            let train: Vec<usize> = (0..m).filter(|&t| fold_of[t] != fold).collect();
            let test: Vec<usize> = (0..m).filter(|&t| fold_of[t] == fold).collect();
            if train.is_empty() || test.is_empty() {
                continue;
            }
            let mut k_train = vec![0.0; train.len() * c];
            for (r, &t) in train.iter().enumerate() {
                k_train[r * c..(r + 1) * c].copy_from_slice(&k_target[t * c..(t + 1) * c]);
            }
            let (alpha, _, _) = fit_alpha(&k_train, train.len(), &b_kept, params.max_iter, params.tol);
            for &t in &test {
                let row = &k_target[t * c..(t + 1) * c];
                let w: f64 = row.iter().zip(&alpha).map(|(k, a)| k * a).sum();
                total += w.max(f64::MIN_POSITIVE).ln();
                counted += 1;
            }
        }
        if counted == 0 {
            continue;
        }
        let mean = total / counted as f64;
        let better = match best {
            None => true,
            Some((best_mean, _)) => mean > best_mean,
        };
        if better {
            best = Some((mean, sigma));
        }
    }
    best.map(|(_, s)| s).ok_or_else(|| {
        WeightError::Optimizer("no kernel width produced a usable cross-validated fit".into())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_center_matches_closed_form() {
        // With one kernel center the constraint pins alpha = n / sum_i K(x_i, c).
        let source = Dataset::from_named_columns(
            &[("x", vec![-1.0, -0.5, 0.0, 0.5, 1.0, 2.0])],
            None,
        )
        .unwrap();
        let target = Dataset::from_named_columns(&[("x", vec![0.25])], None).unwrap();
        let params = KliepParams {
            n_centers: 1,
            sigma: Some(0.8),
            ..KliepParams::default()
        };
        let result = kliep_weights(&source, &target, &params).unwrap();

        let n = 6.0;
        let k: Vec<f64> = [-1.0, -0.5, 0.0, 0.5, 1.0, 2.0]
            .iter()
            .map(|&x: &f64| (-(x - 0.25f64).powi(2) / (2.0 * 0.8 * 0.8)).exp())
            .collect();
        let alpha = n / k.iter().sum::<f64>();
        for (raw, ki) in result.raw_weights.iter().zip(&k) {
            assert_relative_eq!(*raw, alpha * ki, max_relative = 1e-9);
        }
        assert!(result.constraint_residual <= 1e-6);
    }

    #[test]
    fn constraint_holds_on_any_successful_fit() {
        let xs: Vec<f64> = (0..80).map(|i| ((i * 37 % 80) as f64 / 10.0) - 4.0).collect();
        let xt: Vec<f64> = (0..60).map(|i| ((i * 23 % 60) as f64 / 10.0) - 3.0).collect();
        let source = Dataset::from_named_columns(&[("x", xs)], None).unwrap();
        let target = Dataset::from_named_columns(&[("x", xt)], None).unwrap();
        let params = KliepParams { n_centers: 20, seed: 5, ..KliepParams::default() };
        let result = kliep_weights(&source, &target, &params).unwrap();
        assert!(result.constraint_residual <= 1e-6);
        let sum: f64 = result.weights.values().iter().sum();
        assert_relative_eq!(sum, 80.0, max_relative = 1e-10);
    }

    #[test]
    fn empty_center_count_is_rejected() {
        let d = Dataset::from_named_columns(&[("x", vec![1.0, 2.0])], None).unwrap();
        let params = KliepParams { n_centers: 0, ..KliepParams::default() };
        assert!(kliep_weights(&d, &d, &params).is_err());
    }
}
