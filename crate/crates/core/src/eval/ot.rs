//! Entropic optimal transport between two token-state sequences.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// How predicted links are read off the transport plan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "rule", content = "value")]
pub enum Extraction {
    /// `(i, j)` when each is the other's row/column argmax.
    Mutual,
    /// `(i, j)` when `plan[i][j] * n >= threshold` (row-conditional mass).
    Threshold(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OtConfig {
    pub epsilon: f64,
    pub iterations: usize,
    pub tolerance: f64,
    pub extraction: Extraction,
}

impl Default for OtConfig {
    fn default() -> Self {
        OtConfig {
            epsilon: 0.1,
            iterations: 1000,
            tolerance: 1e-6,
            extraction: Extraction::Mutual,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OtResult {
    /// Transport plan `[n][m]` with row sums `1/n` and column sums `1/m`.
    pub plan: Vec<Vec<f64>>,
    pub links: Vec<(usize, usize)>,
    pub converged: bool,
    pub iterations: usize,
    /// Largest deviation of any row or column sum from its marginal.
    pub marginal_error: f64,
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// `1 - cos` for every token pair.
pub fn cosine_cost(e: &[Vec<f64>], f: &[Vec<f64>]) -> Vec<Vec<f64>> {
    e.iter().map(|x| f.iter().map(|y| 1.0 - cosine(x, y)).collect()).collect()
}

fn marginal_error(plan: &[Vec<f64>]) -> f64 {
    let (n, m) = (plan.len(), plan[0].len());
    let mut err: f64 = 0.0;
    for row in plan {
        err = err.max((row.iter().sum::<f64>() - 1.0 / n as f64).abs());
    }
    for j in 0..m {
        err = err.max((plan.iter().map(|r| r[j]).sum::<f64>() - 1.0 / m as f64).abs());
    }
    err
}

/// Sinkhorn scaling on a cost matrix with uniform marginals.
pub fn sinkhorn(cost: &[Vec<f64>], config: &OtConfig) -> Result<(Vec<Vec<f64>>, bool, usize, f64)> {
    let n = cost.len();
    let m = cost.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || cost.iter().any(|r| r.len() != m) {
        return Err(Error::Input("transport needs a non-empty rectangular cost".into()));
    }
    if !(config.epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {}", config.epsilon)));
    }
    // Shifting by the minimum cost leaves the plan unchanged and keeps the
    // kernel away from underflow.
    let cmin = cost.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let kernel: Vec<Vec<f64>> = cost
        .iter()
        .map(|r| r.iter().map(|c| (-(c - cmin) / config.epsilon).exp()).collect())
        .collect();
    let (a, b) = (1.0 / n as f64, 1.0 / m as f64);
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; m];
    let plan_of = |u: &[f64], v: &[f64]| -> Vec<Vec<f64>> {
        kernel
            .iter()
            .zip(u)
            .map(|(row, ui)| row.iter().zip(v).map(|(k, vj)| ui * k * vj).collect())
            .collect()
    };
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..config.iterations {
        iterations += 1;
        for i in 0..n {
            let s: f64 = kernel[i].iter().zip(&v).map(|(k, vj)| k * vj).sum();
            u[i] = if s > 0.0 { a / s } else { 0.0 };
        }
        for j in 0..m {
            let s: f64 = (0..n).map(|i| kernel[i][j] * u[i]).sum();
            v[j] = if s > 0.0 { b / s } else { 0.0 };
        }
        // Columns are exact after the v update; rows carry the residual.
        let row_err = (0..n)
            .map(|i| (u[i] * kernel[i].iter().zip(&v).map(|(k, vj)| k * vj).sum::<f64>() - a).abs())
            .fold(0.0, f64::max);
        if row_err < config.tolerance {
            converged = true;
            break;
        }
    }
    let plan = plan_of(&u, &v);
    let err = marginal_error(&plan);
    Ok((plan, converged, iterations, err))
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in values.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

pub fn extract_links(plan: &[Vec<f64>], extraction: Extraction) -> Vec<(usize, usize)> {
    let n = plan.len();
    let m = plan.first().map_or(0, Vec::len);
    match extraction {
        Extraction::Mutual => {
            let col_best: Vec<usize> = (0..m).map(|j| argmax(plan.iter().map(|r| r[j]))).collect();
            (0..n)
                .filter_map(|i| {
                    let j = argmax(plan[i].iter().copied());
                    (col_best[j] == i).then_some((i, j))
                })
                .collect()
        }
        Extraction::Threshold(t) => (0..n)
            .flat_map(|i| (0..m).map(move |j| (i, j)))
            .filter(|&(i, j)| plan[i][j] * n as f64 >= t)
            .collect(),
    }
}

/// Aligns two state sequences: cost `1 - cos`, Sinkhorn plan, link
/// extraction. A plan that misses the tolerance is still returned, with
/// `converged = false`.
pub fn ot_align(e: &[Vec<f64>], f: &[Vec<f64>], config: &OtConfig) -> Result<OtResult> {
    let cost = cosine_cost(e, f);
    let (plan, converged, iterations, marginal_error) = sinkhorn(&cost, config)?;
    let links = extract_links(&plan, config.extraction);
    Ok(OtResult {
        plan,
        links,
        converged,
        iterations,
        marginal_error,
    })
}

/// Exact assignment for square costs by enumerating permutations; the
/// optimal uniform-marginal plan of a square problem is a scaled
/// permutation matrix. Returns `perm[i] = j`.
pub fn exact_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (f64::INFINITY, perm.clone());
    permute(&mut perm, 0, &mut |p| {
        let c: f64 = p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        if c < best.0 {
            best = (c, p.to_vec());
        }
    });
    best.1
}

fn permute(p: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}
