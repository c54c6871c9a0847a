//! Downstream evaluation: single-relevant retrieval and linear probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::kernels;
use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::synth::Labels;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub average_precision: Vec<f64>,
    pub map: f64,
    pub pool_size: usize,
}

/// Retrieval with one relevant candidate per query: row `q` of `scores`
/// ranks the candidates for query `q`, and candidate `q` is the match.
/// Ties go to the lower candidate index.
pub fn retrieval_map(scores: &Matrix) -> Result<RetrievalResult> {
    let (q, k) = scores.shape();
    if q == 0 {
        return Err(Error::Empty("retrieval_map needs at least one query"));
    }
    if q > k {
        return Err(dim_mismatch("retrieval_map candidates", format!(">= {q}"), k));
    }
    if !scores.is_finite() {
        return Err(Error::NonFinite("retrieval scores"));
    }
    let average_precision: Vec<f64> = (0..q)
        .map(|i| {
            let row = scores.row(i);
            let target = row[i];
            let ahead = row
                .iter()
                .enumerate()
                .filter(|&(c, &s)| s > target || (s == target && c < i))
                .count();
            1.0 / (ahead + 1) as f64
        })
        .collect();
    let map = average_precision.iter().sum::<f64>() / q as f64;
    Ok(RetrievalResult {
        average_precision,
        map,
        pool_size: k,
    })
}

/// `S[q][c]`: cosine between candidate `c` and its ridge projection onto the
/// span of query `q`'s embeddings.
pub fn projection_retrieval_scores(queries: &[&Matrix], candidates: &Matrix, lambda: f64) -> Result<Matrix> {
    Ok(kernels::projection_score_matrix(candidates, queries, lambda)?.transpose())
}

/// `S[q][c]`: cosine of candidate `c` with each query modality, averaged.
pub fn averaged_cosine_scores(queries: &[&Matrix], candidates: &Matrix) -> Result<Matrix> {
    if queries.is_empty() {
        return Err(Error::Empty("averaged_cosine_scores needs a query modality"));
    }
    let mut acc = Matrix::zeros(queries[0].rows(), candidates.rows());
    for q in queries {
        let s = kernels::cosine_score_matrix(q, candidates)?;
        if s.shape() != acc.shape() {
            return Err(dim_mismatch("averaged_cosine_scores", format!("{:?}", acc.shape()), format!("{:?}", s.shape())));
        }
        for (a, v) in acc.as_mut_slice().iter_mut().zip(s.as_slice()) {
            *a += v / queries.len() as f64;
        }
    }
    Ok(acc)
}

/// Expected mAP of a uniformly random ranking over a pool of `k`: `H_k / k`.
pub fn random_baseline_map(k: usize) -> f64 {
    (1..=k).map(|r| 1.0 / r as f64).sum::<f64>() / k as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub mean: f64,
    /// Spread of a single trial's mAP.
    pub sd: f64,
    pub trials: usize,
}

impl NullDistribution {
    /// Standard error of `mean`.
    pub fn standard_error(&self) -> f64 {
        self.sd / (self.trials as f64).sqrt()
    }
}

/// Monte-Carlo null of the mAP a random scorer reaches with `queries`
/// queries over a pool of `k`. Under i.i.d. continuous scores the rank of
/// the match is uniform on `1..=k`, which is what each query draws.
pub fn simulate_random_map(queries: usize, k: usize, trials: usize, seed: u64) -> Result<NullDistribution> {
    if queries == 0 || k == 0 || trials < 2 {
        return Err(Error::InvalidArgument("need queries, pool and at least two trials".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let maps: Vec<f64> = (0..trials)
        .map(|_| (0..queries).map(|_| 1.0 / rng.random_range(1..=k) as f64).sum::<f64>() / queries as f64)
        .collect();
    let mean = maps.iter().sum::<f64>() / trials as f64;
    let var = maps.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    Ok(NullDistribution {
        mean,
        sd: var.sqrt(),
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    MeanSquaredError,
    RSquared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub subset: Vec<usize>,
    pub label: String,
    pub metric: MetricKind,
    pub value: f64,
    pub probe: String,
}

/// Letter label of a modality subset: `[0, 2]` is `"AC"`.
pub fn subset_label(subset: &[usize]) -> String {
    subset.iter().map(|&m| (b'A' + (m % 26) as u8) as char).collect()
}

/// Every non-empty subset of `0..m`, ordered by bitmask.
pub fn nonempty_subsets(m: usize) -> Vec<Vec<usize>> {
    (1u32..(1 << m)).map(|mask| (0..m).filter(|&i| mask & (1 << i) != 0).collect()).collect()
}

/// Per-column standardization fitted on a training matrix.
#[derive(Debug, Clone)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &Matrix) -> Self {
        let n = x.rows().max(1) as f64;
        let mean: Vec<f64> = (0..x.cols()).map(|j| x.col(j).iter().sum::<f64>() / n).collect();
        let scale = (0..x.cols())
            .map(|j| {
                let var = x.col(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (j, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        out
    }
}

/// L2-regularized least squares on standardized features with an
/// unpenalized intercept, one column of `y` per output.
#[derive(Debug, Clone)]
pub struct RidgeProbe {
    standardizer: Standardizer,
    weights: Matrix,
    intercept: Vec<f64>,
}

impl RidgeProbe {
    pub fn fit(x: &Matrix, y: &Matrix, alpha: f64) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(dim_mismatch("RidgeProbe::fit rows", x.rows(), y.rows()));
        }
        if x.rows() == 0 {
            return Err(Error::Empty("RidgeProbe::fit"));
        }
        let standardizer = Standardizer::fit(x);
        let xs = standardizer.apply(x);
        let n = y.rows() as f64;
        let intercept: Vec<f64> = (0..y.cols()).map(|j| y.col(j).iter().sum::<f64>() / n).collect();
        let mut gram = xs.transpose().matmul(&xs)?;
        for i in 0..gram.rows() {
            gram.set(i, i, gram.get(i, i) + alpha);
        }
        let chol = Cholesky::factor(&gram)?;
        let xty = xs.transpose().matmul(y)?;
        let mut weights = Matrix::zeros(x.cols(), y.cols());
        for j in 0..y.cols() {
            let w = chol.solve(&xty.col(j));
            for (i, v) in w.into_iter().enumerate() {
                weights.set(i, j, v);
            }
        }
        Ok(Self {
            standardizer,
            weights,
            intercept,
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = self.standardizer.apply(x).matmul(&self.weights)?;
        for r in 0..out.rows() {
            for (v, b) in out.row_mut(r).iter_mut().zip(&self.intercept) {
                *v += b;
            }
        }
        Ok(out)
    }
}

/// Pooled `1 - SSE/SST` over all output columns.
pub fn r_squared(truth: &Matrix, pred: &Matrix) -> Result<f64> {
    if truth.shape() != pred.shape() {
        return Err(dim_mismatch("r_squared", format!("{:?}", truth.shape()), format!("{:?}", pred.shape())));
    }
    let n = truth.rows() as f64;
    let (mut sse, mut sst) = (0.0, 0.0);
    for j in 0..truth.cols() {
        let col = truth.col(j);
        let mean = col.iter().sum::<f64>() / n;
        for (i, t) in col.iter().enumerate() {
            sse += (t - pred.get(i, j)).powi(2);
            sst += (t - mean).powi(2);
        }
    }
    Ok(if sst > 0.0 { 1.0 - sse / sst } else { 0.0 })
}

pub fn mean_squared_error(truth: &Matrix, pred: &Matrix) -> Result<f64> {
    if truth.shape() != pred.shape() {
        return Err(dim_mismatch("mean_squared_error", format!("{:?}", truth.shape()), format!("{:?}", pred.shape())));
    }
    let s: f64 = truth.as_slice().iter().zip(pred.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(s / truth.as_slice().len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub l2: f64,
    pub learning_rate: f64,
    pub iterations: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            learning_rate: 0.5,
            iterations: 300,
        }
    }
}

/// Multinomial logistic regression by full-batch gradient descent on
/// standardized features.
#[derive(Debug, Clone)]
pub struct LogisticProbe {
    standardizer: Standardizer,
    weights: Matrix,
    bias: Vec<f64>,
}

impl LogisticProbe {
    pub fn fit(x: &Matrix, labels: &[usize], num_classes: usize, cfg: &LogisticConfig) -> Result<Self> {
        if x.rows() != labels.len() {
            return Err(dim_mismatch("LogisticProbe::fit rows", x.rows(), labels.len()));
        }
        if x.rows() == 0 || num_classes == 0 {
            return Err(Error::Empty("LogisticProbe::fit"));
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= num_classes) {
            return Err(Error::InvalidIndex {
                context: "class label",
                index: bad,
                bound: num_classes,
            });
        }
        let standardizer = Standardizer::fit(x);
        let xs = standardizer.apply(x);
        let (n, d) = xs.shape();
        let mut weights = Matrix::zeros(d, num_classes);
        let mut bias = vec![0.0; num_classes];
        let mut probs = vec![0.0; num_classes];
        for _ in 0..cfg.iterations {
            let mut gw = Matrix::zeros(d, num_classes);
            let mut gb = vec![0.0; num_classes];
            for i in 0..n {
                let row = xs.row(i);
                for c in 0..num_classes {
                    probs[c] = bias[c] + row.iter().enumerate().map(|(j, v)| v * weights.get(j, c)).sum::<f64>();
                }
                let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = probs.iter_mut().map(|p| {
                    *p = (*p - max).exp();
                    *p
                }).sum();
                for c in 0..num_classes {
                    let err = probs[c] / z - if labels[i] == c { 1.0 } else { 0.0 };
                    gb[c] += err;
                    for (j, v) in row.iter().enumerate() {
                        gw.set(j, c, gw.get(j, c) + err * v);
                    }
                }
            }
            let inv = 1.0 / n as f64;
            for j in 0..d {
                for c in 0..num_classes {
                    let w = weights.get(j, c);
                    weights.set(j, c, w - cfg.learning_rate * (gw.get(j, c) * inv + cfg.l2 * w));
                }
            }
            for c in 0..num_classes {
                bias[c] -= cfg.learning_rate * gb[c] * inv;
            }
        }
        Ok(Self {
            standardizer,
            weights,
            bias,
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let logits = self.standardizer.apply(x).matmul(&self.weights)?;
        Ok((0..logits.rows())
            .map(|i| {
                let mut best = 0;
                for c in 0..logits.cols() {
                    if logits.get(i, c) + self.bias[c] > logits.get(i, best) + self.bias[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }
}

/// Ridge strength of the regression probes.
pub const PROBE_RIDGE: f64 = 1e-3;

fn concat_subset(embeddings: &[Matrix], subset: &[usize]) -> Result<Matrix> {
    if subset.is_empty() {
        return Err(Error::Empty("probe subset"));
    }
    let parts = subset
        .iter()
        .map(|&m| {
            embeddings.get(m).ok_or(Error::InvalidIndex {
                context: "probe subset",
                index: m,
                bound: embeddings.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Matrix::hconcat(&parts)
}

/// Fits a linear probe on the concatenated embeddings of `subset` and scores
/// it on the test split: accuracy for class labels, MSE for targets.
pub fn subset_probe(
    train: &[Matrix],
    train_labels: &Labels,
    test: &[Matrix],
    test_labels: &Labels,
    subset: &[usize],
) -> Result<ProbeResult> {
    let xtr = concat_subset(train, subset)?;
    let xte = concat_subset(test, subset)?;
    let (metric, value, probe) = match (train_labels, test_labels) {
        (Labels::Classes(ytr), Labels::Classes(yte)) => {
            let k = ytr.iter().chain(yte).max().map_or(1, |c| c + 1);
            let p = LogisticProbe::fit(&xtr, ytr, k, &LogisticConfig::default())?;
            let pred = p.predict(&xte)?;
            if pred.len() != yte.len() {
                return Err(dim_mismatch("subset_probe test rows", yte.len(), pred.len()));
            }
            let hits = pred.iter().zip(yte).filter(|(a, b)| a == b).count();
            (MetricKind::Accuracy, hits as f64 / yte.len().max(1) as f64, "multinomial logistic regression")
        }
        (Labels::Targets(ytr), Labels::Targets(yte)) => {
            let ytr = Matrix::new(ytr.len(), 1, ytr.clone())?;
            let yte = Matrix::new(yte.len(), 1, yte.clone())?;
            let p = RidgeProbe::fit(&xtr, &ytr, PROBE_RIDGE)?;
            (MetricKind::MeanSquaredError, mean_squared_error(&yte, &p.predict(&xte)?)?, "ridge regression")
        }
        _ => return Err(Error::InvalidArgument("train and test labels differ in kind".into())),
    };
    Ok(ProbeResult {
        subset: subset.to_vec(),
        label: subset_label(subset),
        metric,
        value,
        probe: probe.into(),
    })
}

/// Held-out R^2 of a ridge probe predicting the nuisance of modality `m`
/// from its embedding.
pub fn nuisance_probe(
    train_z: &Matrix,
    train_nuisance: &Matrix,
    test_z: &Matrix,
    test_nuisance: &Matrix,
    m: usize,
) -> Result<ProbeResult> {
    if train_nuisance.cols() == 0 {
        return Err(Error::InvalidArgument(format!("modality {m} has no stored nuisance")));
    }
    let p = RidgeProbe::fit(train_z, train_nuisance, PROBE_RIDGE)?;
    let value = r_squared(test_nuisance, &p.predict(test_z)?)?;
    Ok(ProbeResult {
        subset: vec![m],
        label: subset_label(&[m]),
        metric: MetricKind::RSquared,
        value,
        probe: "ridge regression onto nuisance".into(),
    })
}
