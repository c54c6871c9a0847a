//! Batched score kernels shared by the graph ops and the plain-value paths.

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{dot, lse_unchecked, norm, Matrix, RidgeProjector, COSINE_EPS};

/// Guarded cosine and its partial derivatives, each scaled by `upstream`.
/// Gradients are zero when the raw value had to be clamped.
pub(crate) fn cosine_with_grads(u: &[f64], v: &[f64], upstream: f64) -> (Vec<f64>, Vec<f64>) {
    let nu = norm(u);
    let nv = norm(v);
    let du = nu.max(COSINE_EPS);
    let dv = nv.max(COSINE_EPS);
    let raw = dot(u, v) / (du * dv);
    if !(-1.0..=1.0).contains(&raw) {
        return (vec![0.0; u.len()], vec![0.0; v.len()]);
    }
    let inv = upstream / (du * dv);
    let cu = if nu > COSINE_EPS { upstream * raw / (nu * nu) } else { 0.0 };
    let cv = if nv > COSINE_EPS { upstream * raw / (nv * nv) } else { 0.0 };
    let gu = u.iter().zip(v).map(|(&a, &b)| inv * b - cu * a).collect();
    let gv = u.iter().zip(v).map(|(&a, &b)| inv * a - cv * b).collect();
    (gu, gv)
}

fn check_same_shape(context: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(dim_mismatch(context, format!("{:?}", a.shape()), format!("{:?}", b.shape())));
    }
    Ok(())
}

/// `S[n][k] = cos(a_n, b_k)` for row sets `a` (N x d) and `b` (K x d).
pub fn cosine_score_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(dim_mismatch("cosine_score_matrix", a.cols(), b.cols()));
    }
    let an: Vec<f64> = (0..a.rows()).map(|i| norm(a.row(i)).max(COSINE_EPS)).collect();
    let bn: Vec<f64> = (0..b.rows()).map(|i| norm(b.row(i)).max(COSINE_EPS)).collect();
    let mut s = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        for k in 0..b.rows() {
            s.set(i, k, (dot(a.row(i), b.row(k)) / (an[i] * bn[k])).clamp(-1.0, 1.0));
        }
    }
    Ok(s)
}

pub(crate) fn check_rest(anchor: &Matrix, rest: &[&Matrix]) -> Result<()> {
    if rest.is_empty() {
        return Err(Error::Empty("projection scores need at least one remaining modality"));
    }
    for r in rest {
        check_same_shape("projection scores", anchor, r)?;
    }
    Ok(())
}

/// One factored ridge system per candidate row `k`, spanned by the k-th row
/// of every matrix in `rest`.
pub(crate) fn projectors(rest: &[&Matrix], lambda: f64) -> Result<Vec<RidgeProjector>> {
    let n = rest[0].rows();
    (0..n)
        .map(|k| {
            let cols: Vec<&[f64]> = rest.iter().map(|r| r.row(k)).collect();
            RidgeProjector::from_columns(&cols, lambda)
        })
        .collect()
}

/// `S[n][k] = cos(z_n, P_k z_n)` where `P_k` is the ridge projection onto
/// the span of the k-th row of each `rest` matrix. The diagonal holds the
/// positive pairs.
pub fn projection_score_matrix(anchor: &Matrix, rest: &[&Matrix], lambda: f64) -> Result<Matrix> {
    check_rest(anchor, rest)?;
    let projs = projectors(rest, lambda)?;
    let n = anchor.rows();
    let mut s = Matrix::zeros(n, projs.len());
    for i in 0..n {
        let z = anchor.row(i);
        for (k, p) in projs.iter().enumerate() {
            let zbar = p.project(z);
            s.set(i, k, crate::linalg::cosine_slices(z, &zbar, COSINE_EPS));
        }
    }
    Ok(s)
}

/// Backward pass of [`projection_score_matrix`]. Returns gradients for the
/// anchor and for each `rest` matrix given the upstream `N x N` gradient.
pub(crate) fn projection_score_backward(
    anchor: &Matrix,
    rest: &[&Matrix],
    lambda: f64,
    upstream: &Matrix,
) -> Result<(Matrix, Vec<Matrix>)> {
    let projs = projectors(rest, lambda)?;
    let (n, d) = anchor.shape();
    let mut g_anchor = Matrix::zeros(n, d);
    let mut g_rest: Vec<Matrix> = rest.iter().map(|_| Matrix::zeros(n, d)).collect();
    for i in 0..n {
        let z = anchor.row(i);
        for (k, p) in projs.iter().enumerate() {
            let up = upstream.get(i, k);
            if up == 0.0 {
                continue;
            }
            let (w, zbar) = p.project_with_weights(z);
            let (gz, gzbar) = cosine_with_grads(z, &zbar, up);
            // z_bar = A w with (A^T A + lambda I) w = A^T z
            let mut u = p.at_times(&gzbar);
            p.solve_in_place(&mut u);
            let au = p.a_times(&u);
            let row = g_anchor.row_mut(i);
            for t in 0..d {
                row[t] += gz[t] + au[t];
            }
            for (j, gr) in g_rest.iter_mut().enumerate() {
                let row = gr.row_mut(k);
                let (wj, uj) = (w[j], u[j]);
                for t in 0..d {
                    row[t] += (gzbar[t] - au[t]) * wj + (z[t] - zbar[t]) * uj;
                }
            }
        }
    }
    Ok((g_anchor, g_rest))
}

/// Per-sample InfoNCE terms for a square score matrix whose diagonal holds
/// the positives: `-S_nn/tau + log sum_{k in D_n} exp(S_nk / tau)`, with
/// `D_n` all `k != n`, or all `k` when `include_positive` is set.
pub fn infonce_terms(scores: &Matrix, tau: f64, include_positive: bool) -> Result<Vec<f64>> {
    let (n, k) = scores.shape();
    if n != k {
        return Err(dim_mismatch("infonce_terms", "square score matrix", format!("{n}x{k}")));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("InfoNCE needs a batch of at least 2".into()));
    }
    Ok((0..n)
        .map(|i| {
            let row = scores.row(i);
            let denom = lse_unchecked(
                row.iter()
                    .enumerate()
                    .filter(move |(j, _)| include_positive || *j != i)
                    .map(move |(_, s)| s / tau),
            );
            -row[i] / tau + denom
        })
        .collect())
}

/// Gradient of `mean(infonce_terms)` with respect to the score matrix.
pub(crate) fn infonce_backward(scores: &Matrix, tau: f64, include_positive: bool, upstream: f64) -> Matrix {
    let n = scores.rows();
    let scale = upstream / (n as f64 * tau);
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        let row = scores.row(i);
        let active = |j: usize| include_positive || j != i;
        let max = (0..n).filter(|&j| active(j)).map(|j| row[j]).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = (0..n)
            .map(|j| if active(j) { ((row[j] - max) / tau).exp() } else { 0.0 })
            .collect();
        let total: f64 = weights.iter().sum();
        let grow = g.row_mut(i);
        for j in 0..n {
            grow[j] = scale * weights[j] / total;
        }
        grow[i] -= scale;
    }
    g
}
