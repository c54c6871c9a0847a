//! Training objectives.
//!
//! Every objective is recorded on an [`autodiff::Graph`](crate::autodiff::Graph)
//! so that gradients flow into the encoders; [`evaluate`] and the score
//! helpers give plain values for inspection and tests.

use serde::{Deserialize, Serialize};

use crate::autodiff::kernels;
use crate::autodiff::{forward_mlp, BoundMlp, Graph, MlpParams, Var};
use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{cosine_slices, Matrix, RidgeProjector, Vector, COSINE_EPS, DEFAULT_RIDGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    /// Cosine between the anchor and its ridge projection onto the rest.
    Geometric,
    /// Cosine between the anchor and a learned map of the concatenated rest.
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub tau: f64,
    pub beta: f64,
    pub lambda: f64,
    pub scorer: ScorerKind,
    pub include_positive_in_denominator: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.01,
            beta: 1.0,
            lambda: DEFAULT_RIDGE,
            scorer: ScorerKind::Geometric,
            include_positive_in_denominator: false,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be nonnegative, got {}", self.beta)));
        }
        Ok(())
    }
}

/// One `N x d` embedding batch per modality, rows aligned by sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityBundle {
    batches: Vec<Matrix>,
}

impl ModalityBundle {
    pub fn new(batches: Vec<Matrix>) -> Result<Self> {
        if batches.len() < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 modalities, got {}", batches.len())));
        }
        let shape = batches[0].shape();
        if shape.0 < 2 {
            return Err(Error::InvalidArgument(format!("need a batch of at least 2, got {}", shape.0)));
        }
        for b in &batches[1..] {
            if b.shape() != shape {
                return Err(dim_mismatch("ModalityBundle", format!("{shape:?}"), format!("{:?}", b.shape())));
            }
        }
        Ok(Self { batches })
    }

    pub fn num_modalities(&self) -> usize {
        self.batches.len()
    }

    pub fn batch_size(&self) -> usize {
        self.batches[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.batches[0].cols()
    }

    pub fn batch(&self, m: usize) -> &Matrix {
        &self.batches[m]
    }

    pub fn batches(&self) -> &[Matrix] {
        &self.batches
    }

    pub fn into_batches(self) -> Vec<Matrix> {
        self.batches
    }

    /// Records every batch as a graph leaf.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.batches.iter().map(|b| g.leaf(b.clone())).collect()
    }
}

/// Cosine between `z` and its ridge projection onto `span(rest)`.
pub fn projection_score(z: &Vector, rest: &[Vector], lambda: f64) -> Result<f64> {
    if rest.is_empty() {
        return Err(Error::Empty("projection_score needs at least one remaining modality"));
    }
    for r in rest {
        if r.dim() != z.dim() {
            return Err(dim_mismatch("projection_score", z.dim(), r.dim()));
        }
    }
    let cols: Vec<&[f64]> = rest.iter().map(|r| r.as_slice()).collect();
    let p = RidgeProjector::from_columns(&cols, lambda)?;
    Ok(cosine_slices(z.as_slice(), &p.project(z.as_slice()), COSINE_EPS))
}

/// Cosine between `z` and `MLP(concat(rest))`.
pub fn mlp_score(z: &Vector, rest: &[Vector], params: &MlpParams) -> Result<f64> {
    let d = z.dim();
    if params.input_dim() != rest.len() * d || params.output_dim() != d {
        return Err(dim_mismatch(
            "mlp_score",
            format!("{}->{}", rest.len() * d, d),
            format!("{}->{}", params.input_dim(), params.output_dim()),
        ));
    }
    let concat: Vec<f64> = rest.iter().flat_map(|r| r.as_slice().iter().copied()).collect();
    let input = Matrix::new(1, concat.len(), concat)?;
    let out = params.forward(&input)?;
    Ok(cosine_slices(z.as_slice(), out.row(0), COSINE_EPS))
}

fn rest_of(z: &[Var], m: usize) -> Vec<Var> {
    z.iter()
        .enumerate()
        .filter(|&(i, _)| i != m)
        .map(|(_, &v)| v)
        .collect()
}

fn check_modality(z: &[Var], m: usize) -> Result<()> {
    if z.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 modalities, got {}", z.len())));
    }
    if m >= z.len() {
        return Err(Error::InvalidIndex {
            context: "modality",
            index: m,
            bound: z.len(),
        });
    }
    Ok(())
}

/// `N x N` score matrix for anchor modality `m`. `projectors[m]` is used only
/// by the MLP scorer.
pub fn score_matrix(g: &mut Graph, z: &[Var], m: usize, cfg: &LossConfig, projectors: &[BoundMlp]) -> Result<Var> {
    check_modality(z, m)?;
    let rest = rest_of(z, m);
    match cfg.scorer {
        ScorerKind::Geometric => g.projection_scores(z[m], &rest, cfg.lambda),
        ScorerKind::Mlp => {
            let t = projectors.get(m).ok_or(Error::InvalidIndex {
                context: "MLP projector",
                index: m,
                bound: projectors.len(),
            })?;
            let concat = g.concat_cols(&rest)?;
            let mapped = forward_mlp(g, t, concat)?;
            g.cosine_scores(z[m], mapped)
        }
    }
}

/// One-vs-All InfoNCE for modality `m`.
pub fn sufficiency_loss_m(g: &mut Graph, z: &[Var], m: usize, cfg: &LossConfig, projectors: &[BoundMlp]) -> Result<Var> {
    cfg.validate()?;
    let s = score_matrix(g, z, m, cfg, projectors)?;
    g.infonce(s, cfg.tau, cfg.include_positive_in_denominator)
}

fn mean_of(g: &mut Graph, terms: &[Var]) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(g.scale(acc, 1.0 / terms.len() as f64))
}

/// Mean of [`sufficiency_loss_m`] over modalities.
pub fn sufficiency_loss(g: &mut Graph, z: &[Var], cfg: &LossConfig, projectors: &[BoundMlp]) -> Result<Var> {
    check_modality(z, 0)?;
    let terms = (0..z.len())
        .map(|m| sufficiency_loss_m(g, z, m, cfg, projectors))
        .collect::<Result<Vec<_>>>()?;
    mean_of(g, &terms)
}

/// Batch mean of `||z^m - mean_{i != m} z^i||^2`.
pub fn minimality_loss_m(g: &mut Graph, z: &[Var], m: usize) -> Result<Var> {
    check_modality(z, m)?;
    // mean of (z_j - z_m) rather than mean(z_j) - z_m: exactly zero when
    // all modalities coincide
    let rest = rest_of(z, m);
    let mut acc = g.sub(rest[0], z[m])?;
    for &r in &rest[1..] {
        let d = g.sub(r, z[m])?;
        acc = g.add(acc, d)?;
    }
    let diff = g.scale(acc, 1.0 / rest.len() as f64);
    let sq = g.square(diff);
    let per_entry = g.mean(sq);
    let d = g.value(z[m]).cols() as f64;
    Ok(g.scale(per_entry, d))
}

/// Mean of [`minimality_loss_m`] over modalities.
pub fn minimality_loss(g: &mut Graph, z: &[Var]) -> Result<Var> {
    check_modality(z, 0)?;
    let terms = (0..z.len())
        .map(|m| minimality_loss_m(g, z, m))
        .collect::<Result<Vec<_>>>()?;
    mean_of(g, &terms)
}

/// Graph handles for the pieces of the full objective.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub sufficiency: Var,
    pub minimality: Var,
    pub total: Var,
}

/// `L_S + beta * L_M`.
pub fn total_loss(g: &mut Graph, z: &[Var], cfg: &LossConfig, projectors: &[BoundMlp]) -> Result<LossParts> {
    let sufficiency = sufficiency_loss(g, z, cfg, projectors)?;
    let minimality = minimality_loss(g, z)?;
    let weighted = g.scale(minimality, cfg.beta);
    let total = g.add(sufficiency, weighted)?;
    Ok(LossParts {
        sufficiency,
        minimality,
        total,
    })
}

/// Symmetric cosine InfoNCE summed over every unordered modality pair.
pub fn pairwise_clip_loss(g: &mut Graph, z: &[Var], tau: f64, include_positive: bool) -> Result<Var> {
    check_modality(z, 0)?;
    let mut pairs = Vec::new();
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            let sij = g.cosine_scores(z[i], z[j])?;
            let sji = g.cosine_scores(z[j], z[i])?;
            let lij = g.infonce(sij, tau, include_positive)?;
            let lji = g.infonce(sji, tau, include_positive)?;
            let both = g.add(lij, lji)?;
            pairs.push(g.scale(both, 0.5));
        }
    }
    let mut acc = pairs[0];
    for &p in &pairs[1..] {
        acc = g.add(acc, p)?;
    }
    Ok(acc)
}

/// Plain values of every objective on a bundle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossValues {
    pub sufficiency_per_modality: Vec<f64>,
    pub minimality_per_modality: Vec<f64>,
    pub sufficiency: f64,
    pub minimality: f64,
    pub total: f64,
}

pub fn evaluate(bundle: &ModalityBundle, cfg: &LossConfig, projectors: &[MlpParams]) -> Result<LossValues> {
    let mut g = Graph::new();
    let z = bundle.bind(&mut g);
    let bound: Vec<BoundMlp> = projectors.iter().map(|p| p.bind(&mut g)).collect();
    let m = bundle.num_modalities();
    let mut suff = Vec::with_capacity(m);
    let mut mini = Vec::with_capacity(m);
    for i in 0..m {
        let s = sufficiency_loss_m(&mut g, &z, i, cfg, &bound)?;
        suff.push(g.scalar(s));
        let l = minimality_loss_m(&mut g, &z, i)?;
        mini.push(g.scalar(l));
    }
    let parts = total_loss(&mut g, &z, cfg, &bound)?;
    Ok(LossValues {
        sufficiency_per_modality: suff,
        minimality_per_modality: mini,
        sufficiency: g.scalar(parts.sufficiency),
        minimality: g.scalar(parts.minimality),
        total: g.scalar(parts.total),
    })
}

/// Plain value of [`pairwise_clip_loss`].
pub fn evaluate_clip(bundle: &ModalityBundle, tau: f64, include_positive: bool) -> Result<f64> {
    let mut g = Graph::new();
    let z = bundle.bind(&mut g);
    let l = pairwise_clip_loss(&mut g, &z, tau, include_positive)?;
    Ok(g.scalar(l))
}

/// Per-sample One-vs-All InfoNCE terms for modality `m` under the geometric
/// scorer, in sample order.
pub fn sufficiency_terms(bundle: &ModalityBundle, m: usize, cfg: &LossConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if m >= bundle.num_modalities() {
        return Err(Error::InvalidIndex {
            context: "modality",
            index: m,
            bound: bundle.num_modalities(),
        });
    }
    let rest: Vec<&Matrix> = (0..bundle.num_modalities())
        .filter(|&i| i != m)
        .map(|i| bundle.batch(i))
        .collect();
    let s = kernels::projection_score_matrix(bundle.batch(m), &rest, cfg.lambda)?;
    kernels::infonce_terms(&s, cfg.tau, cfg.include_positive_in_denominator)
}
