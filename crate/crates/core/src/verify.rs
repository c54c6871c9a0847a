//! Seeded certification sweeps behind `ovaib verify` and `ovaib gradcheck`.
//!
//! Each check runs a batch of seeded cases and records the largest violation
//! of its inequality or identity together with the first failing seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{finite_diff_check, forward_mlp, Activation, BoundMlp, GradCheck, GradCheckReport, Graph, MlpParams, Stencil, Var, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::info_oracle::{self, gaussian_kl, gaussian_product, minimality_kl_constant, sandwich_from, DiscreteJoint, IsotropicGaussian};
use crate::linalg::{ridge_project, Cholesky, Matrix, Vector};
use crate::losses::{self, LossConfig, ModalityBundle, ScorerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Oracle,
    Losses,
    All,
}

/// Deliberate corruptions used to show that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    NegateDtc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub scope: Scope,
    /// Restricts the discrete sweeps to one modality count.
    pub m: Option<usize>,
    pub seed: u64,
    pub joints_per_m: usize,
    pub gaussian_configs: usize,
    pub infonce_configs: usize,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            scope: Scope::All,
            m: None,
            seed: 0,
            joints_per_m: 200,
            gaussian_configs: 100,
            infonce_configs: 20,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub passed: bool,
    pub max_violation: f64,
    pub tolerance: f64,
    pub first_seed: u64,
    pub last_seed: u64,
    pub failing_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub scope: Scope,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failing(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

/// Accumulates case violations for one named check.
struct Tally {
    name: &'static str,
    tolerance: f64,
    cases: usize,
    max_violation: f64,
    first_seed: Option<u64>,
    last_seed: u64,
    failing_seed: Option<u64>,
}

impl Tally {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            cases: 0,
            max_violation: 0.0,
            first_seed: None,
            last_seed: 0,
            failing_seed: None,
        }
    }

    /// `violation` is the amount by which the case misses; NaN counts as a
    /// failure.
    fn record(&mut self, seed: u64, violation: f64) {
        self.cases += 1;
        self.first_seed.get_or_insert(seed);
        self.last_seed = seed;
        let v = if violation.is_nan() { f64::INFINITY } else { violation.max(0.0) };
        self.max_violation = self.max_violation.max(v);
        if v > self.tolerance && self.failing_seed.is_none() {
            self.failing_seed = Some(seed);
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name.into(),
            cases: self.cases,
            passed: self.failing_seed.is_none() && self.cases > 0,
            max_violation: self.max_violation,
            tolerance: self.tolerance,
            first_seed: self.first_seed.unwrap_or(0),
            last_seed: self.last_seed,
            failing_seed: self.failing_seed,
        }
    }
}

fn random_alphabets(rng: &mut ChaCha8Rng, m: usize) -> Vec<usize> {
    (0..m).map(|_| rng.random_range(2..=4)).collect()
}

fn case_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(salt);
    rng
}

/// Mean entropy of the k-subsets divided by k, for k = 1..=M. Han's
/// inequalities say this sequence never increases.
pub fn han_profile(joint: &DiscreteJoint) -> Result<Vec<f64>> {
    let m = joint.num_vars();
    let mut sums = vec![0.0; m + 1];
    let mut counts = vec![0usize; m + 1];
    for mask in 1u32..(1 << m) {
        let subset: Vec<usize> = (0..m).filter(|&i| mask & (1 << i) != 0).collect();
        let k = subset.len();
        sums[k] += joint.entropy(&subset)?;
        counts[k] += 1;
    }
    Ok((1..=m).map(|k| sums[k] / counts[k] as f64 / k as f64).collect())
}

fn discrete_checks(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let ms: Vec<usize> = match opts.m {
        Some(m) => vec![m],
        None => vec![2, 3, 4],
    };
    let mut sandwich = Tally::new("sandwich", info_oracle::CHECK_TOL);
    let mut decomposition = Tally::new("decomposition", info_oracle::CHECK_TOL);
    let mut han = Tally::new("han", info_oracle::CHECK_TOL);
    let mut degeneracy = Tally::new("m2_degeneracy", info_oracle::CHECK_TOL);
    let mut dv = Tally::new("dv_optimal_critic", info_oracle::CHECK_TOL);
    for &m in &ms {
        for i in 0..opts.joints_per_m {
            let seed = opts.seed + i as u64;
            let mut rng = case_rng(seed, m as u64);
            let sizes = random_alphabets(&mut rng, m);
            let joint = DiscreteJoint::random(&mut rng, &sizes)?;
            let ova = joint.ova_mi_sum();
            let tc = joint.total_correlation_raw();
            let mut dtc = joint.dual_total_correlation_raw();
            if opts.fault == Some(Fault::NegateDtc) {
                dtc = -dtc;
            }
            sandwich.record(seed, sandwich_from(m, ova, dtc).violation());
            decomposition.record(seed, (ova - (tc + dtc)).abs());

            let profile = han_profile(&joint)?;
            let worst = profile.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            let r = joint.check_han();
            han.record(seed, worst.max(r.lhs - r.rhs));

            if m == 2 {
                let mi = joint.mutual_information(&[0], &[1])?;
                degeneracy.record(seed, (tc - dtc).abs().max((tc - mi).abs()));
            }

            let rest: Vec<usize> = (1..m).collect();
            let b = joint.bipartite(&[0], &rest)?;
            let bound = b.dv_bound(&b.optimal_critic())?;
            dv.record(seed, (bound - b.mutual_information()).abs());
        }
    }
    let mut out = vec![sandwich.finish(), decomposition.finish(), han.finish()];
    if ms.contains(&2) {
        out.push(degeneracy.finish());
    }
    out.push(dv.finish());
    Ok(out)
}

/// Mean and variance of the normalized product of 1-D Gaussian densities
/// by trapezoidal integration on a fine grid.
pub fn grid_product_moments(means: &[f64], variance: f64) -> (f64, f64) {
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min) - 12.0 * variance.sqrt();
    let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 12.0 * variance.sqrt();
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    let (mut z, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for i in 0..=n {
        let x = lo + i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        let log_p: f64 = means.iter().map(|m| -(x - m).powi(2) / (2.0 * variance)).sum();
        let p = w * log_p.exp();
        z += p;
        s1 += p * x;
        s2 += p * x * x;
    }
    let mean = s1 / z;
    (mean, s2 / z - mean * mean)
}

fn gaussian_checks(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let mut closed = Tally::new("gaussian_closed_form", 1e-10);
    let mut grid = Tally::new("gaussian_product_grid", 1e-6);
    let configs: Vec<(usize, usize)> = [2usize, 3, 5].iter().flat_map(|&m| [2usize, 16].map(|d| (m, d))).collect();
    for i in 0..opts.gaussian_configs {
        let seed = opts.seed + i as u64;
        let (m, d) = configs[i % configs.len()];
        let mut rng = case_rng(seed, 100 + m as u64 * 17 + d as u64);
        let variance = rng.random_range(0.25..2.0);
        let mean = |rng: &mut ChaCha8Rng| Vector::new((0..d).map(|_| rng.random_range(-2.0..2.0)).collect());
        let anchor = IsotropicGaussian::new(mean(&mut rng)?, variance)?;
        let rest = (0..m - 1)
            .map(|_| IsotropicGaussian::new(mean(&mut rng)?, variance))
            .collect::<Result<Vec<_>>>()?;
        let q = gaussian_product(&rest)?;
        let kl = gaussian_kl(&anchor, &q)?;
        let dist2: f64 = anchor
            .mean()
            .as_slice()
            .iter()
            .zip(q.mean().as_slice())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let want = (m - 1) as f64 / (2.0 * variance) * dist2;
        let got = kl - minimality_kl_constant(d, m);
        closed.record(seed, (got - want).abs() / want.abs().max(1.0));

        let coord: Vec<f64> = rest.iter().map(|g| g.mean().as_slice()[0]).collect();
        let (gm, gv) = grid_product_moments(&coord, variance);
        grid.record(seed, (gm - q.mean().as_slice()[0]).abs().max((gv - q.variance()).abs()));
    }
    Ok(vec![closed.finish(), grid.finish()])
}

/// A discrete embedding system: every value of every variable of a joint is
/// mapped to a fixed codebook vector.
#[derive(Debug, Clone)]
pub struct CodebookSystem {
    pub joint: DiscreteJoint,
    /// `codebook[v][a]` is the embedding of value `a` of variable `v`.
    pub codebook: Vec<Vec<Vec<f64>>>,
}

impl CodebookSystem {
    pub fn random(rng: &mut ChaCha8Rng, alphabets: &[usize], d: usize) -> Result<Self> {
        let joint = DiscreteJoint::random(rng, alphabets)?;
        let codebook = alphabets
            .iter()
            .map(|&k| (0..k).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
            .collect();
        Ok(Self { joint, codebook })
    }

    /// Exact expectation of the anchor-`m` InfoNCE loss over every batch of
    /// `n` i.i.d. draws from the joint.
    pub fn expected_infonce(&self, m: usize, n: usize, cfg: &LossConfig) -> Result<f64> {
        let support: Vec<(Vec<usize>, f64)> = self.joint.outcomes().filter(|(_, p)| *p > 0.0).collect();
        let s = support.len();
        let vars = self.joint.num_vars();
        let d = self.codebook[0][0].len();
        let mut idx = vec![0usize; n];
        let mut expected = 0.0;
        loop {
            let weight: f64 = idx.iter().map(|&i| support[i].1).product();
            let batches = (0..vars)
                .map(|v| {
                    let data = idx.iter().flat_map(|&i| self.codebook[v][support[i].0[v]].iter().copied()).collect();
                    Matrix::new(n, d, data)
                })
                .collect::<Result<Vec<_>>>()?;
            let terms = losses::sufficiency_terms(&ModalityBundle::new(batches)?, m, cfg)?;
            expected += weight * terms.iter().sum::<f64>() / n as f64;

            let mut k = 0;
            loop {
                if k == n {
                    return Ok(expected);
                }
                idx[k] += 1;
                if idx[k] < s {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    pub fn anchor_mutual_information(&self, m: usize) -> Result<f64> {
        let rest: Vec<usize> = (0..self.joint.num_vars()).filter(|&v| v != m).collect();
        self.joint.mutual_information(&[m], &rest)
    }
}

fn infonce_checks(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let mut excluded_form = Tally::new("infonce_bound", 1e-6);
    let mut standard = Tally::new("infonce_bound_standard", 1e-6);
    for i in 0..opts.infonce_configs {
        let seed = opts.seed + i as u64;
        let mut rng = case_rng(seed, 300);
        let m = if i % 2 == 0 { 2 } else { 3 };
        let alphabets: Vec<usize> = (0..m).map(|_| rng.random_range(2..=3)).collect();
        let d = rng.random_range(3..=4);
        let n = if i % 4 < 2 { 2 } else { 3 };
        let sys = CodebookSystem::random(&mut rng, &alphabets, d)?;
        let anchor = rng.random_range(0..m);
        let mi = sys.anchor_mutual_information(anchor)?;
        let base = LossConfig {
            tau: 1.0,
            ..LossConfig::default()
        };
        let excl = sys.expected_infonce(anchor, n, &base)?;
        excluded_form.record(seed, -excl - (n as f64).ln() - mi);
        let incl = sys.expected_infonce(
            anchor,
            n,
            &LossConfig {
                include_positive_in_denominator: true,
                ..base
            },
        )?;
        standard.record(seed, (n as f64).ln() - incl - mi);
    }
    Ok(vec![excluded_form.finish(), standard.finish()])
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::new(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("finite")
}

fn loss_invariant_checks(opts: &VerifyOptions) -> Result<Vec<CheckResult>> {
    let mut scale = Tally::new("projection_scale_invariance", 1e-6);
    let mut perm = Tally::new("modality_permutation", 1e-12);
    let mut quad = Tally::new("minimality_quadratic_scaling", 1e-9);
    let mut contraction = Tally::new("ridge_contraction", 1e-12);
    let mut idempotence = Tally::new("ridge_idempotence", 1e-12);
    for i in 0..100 {
        let seed = opts.seed + i as u64;
        let mut rng = case_rng(seed, 400);
        let m = rng.random_range(2..=4);
        let n = rng.random_range(2..=6);
        let d = rng.random_range(m..=8);
        let bundle = ModalityBundle::new((0..m).map(|_| random_matrix(&mut rng, n, d)).collect())?;
        let c: f64 = rng.random_range(0.1..10.0);
        let scaled = ModalityBundle::new(bundle.batches().iter().map(|b| b.scaled(c)).collect())?;
        let cfg = LossConfig {
            tau: 0.5,
            ..LossConfig::default()
        };
        let (v, vs) = (losses::evaluate(&bundle, &cfg, &[])?, losses::evaluate(&scaled, &cfg, &[])?);
        scale.record(seed, (v.sufficiency - vs.sufficiency).abs());
        quad.record(seed, (vs.minimality - c * c * v.minimality).abs() / v.minimality.max(1.0));

        let mut order: Vec<usize> = (0..m).collect();
        order.rotate_left(1);
        let permuted = ModalityBundle::new(order.iter().map(|&j| bundle.batch(j).clone()).collect())?;
        let vp = losses::evaluate(&permuted, &cfg, &[])?;
        perm.record(
            seed,
            (v.sufficiency - vp.sufficiency)
                .abs()
                .max((v.minimality - vp.minimality).abs())
                .max((v.total - vp.total).abs()),
        );

        let a = random_matrix(&mut rng, d, m - 1);
        let z = Vector::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let zbar = ridge_project(&a, &z, 1e-8)?;
        contraction.record(seed, zbar.norm() - z.norm());
        // well-conditioned spans only: smallest eigenvalue of A^T A at least 0.1
        let mut gram = a.transpose().matmul(&a)?;
        for j in 0..m - 1 {
            gram.set(j, j, gram.get(j, j) - 0.1);
        }
        if Cholesky::factor(&gram).is_err() {
            continue;
        }
        let twice = ridge_project(&a, &zbar, 1e-8)?;
        let drift: f64 = twice.as_slice().iter().zip(zbar.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        idempotence.record(seed, drift - 10.0 * 1e-8 * z.norm());
    }
    Ok(vec![scale.finish(), perm.finish(), quad.finish(), contraction.finish(), idempotence.finish()])
}

/// Runs the sweeps selected by `opts.scope`.
pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    if let Some(m) = opts.m {
        if !(2..=6).contains(&m) {
            return Err(Error::InvalidArgument(format!("--m must be between 2 and 6, got {m}")));
        }
    }
    let mut checks = Vec::new();
    if matches!(opts.scope, Scope::Oracle | Scope::All) {
        checks.extend(discrete_checks(opts)?);
        checks.extend(gaussian_checks(opts)?);
    }
    if matches!(opts.scope, Scope::Losses | Scope::All) {
        checks.extend(infonce_checks(opts)?);
        checks.extend(loss_invariant_checks(opts)?);
    }
    Ok(VerifyReport {
        scope: opts.scope,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    pub tau: f64,
    pub lambda: f64,
    pub step: f64,
    pub stencil: Stencil,
    pub tolerance: f64,
    pub seed: u64,
    /// `(M, N, d)` triples.
    pub shapes: Vec<(usize, usize, usize)>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            lambda: 1e-8,
            step: 3e-5,
            stencil: Stencil::FivePoint,
            tolerance: 1e-4,
            seed: 2,
            shapes: vec![(2, 3, 4), (2, 5, 8), (3, 3, 4), (3, 5, 8), (4, 3, 4), (4, 5, 8)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Sufficiency,
    Minimality,
    Total,
    PairwiseClip,
    /// The full objective differentiated through MLP encoders.
    TotalThroughEncoders,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckEntry {
    pub loss: LossKind,
    pub scorer: Option<ScorerKind>,
    pub include_positive: bool,
    pub shape: (usize, usize, usize),
    pub report: GradCheckReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckSuiteReport {
    pub passed: bool,
    pub entries: Vec<GradcheckEntry>,
}

impl PartialEq for GradCheckReport {
    fn eq(&self, other: &Self) -> bool {
        self.max_rel_err == other.max_rel_err && self.coordinates == other.coordinates && self.pass == other.pass
    }
}

fn gradcheck_one(
    kind: LossKind,
    scorer: ScorerKind,
    include_positive: bool,
    shape: (usize, usize, usize),
    cfg: &GradcheckConfig,
    inject_fault: bool,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheckReport> {
    let (m, n, d) = shape;
    let loss_cfg = LossConfig {
        tau: cfg.tau,
        beta: 0.7,
        lambda: cfg.lambda,
        scorer,
        include_positive_in_denominator: include_positive,
    };
    let check = GradCheck {
        inject_fault,
        stencil: cfg.stencil,
        ..GradCheck::new(cfg.step, cfg.tolerance)
    };
    let mut params: Vec<Matrix> = Vec::new();
    let d_obs = d + 1;
    let encoder_acts = [Activation::LeakyRelu { slope: LEAKY_SLOPE }, Activation::Identity];
    if kind == LossKind::TotalThroughEncoders {
        for _ in 0..m {
            params.push(random_matrix(rng, n, d_obs));
        }
        for _ in 0..m {
            let e = MlpParams::init(rng, &[d_obs, d + 2, d], encoder_acts[0])?;
            params.extend(e.tensors().into_iter().cloned());
        }
    } else {
        for _ in 0..m {
            params.push(random_matrix(rng, n, d));
        }
    }
    let uses_projectors = scorer == ScorerKind::Mlp && matches!(kind, LossKind::Sufficiency | LossKind::Total | LossKind::TotalThroughEncoders);
    let proj_start = params.len();
    if uses_projectors {
        for _ in 0..m {
            let p = MlpParams::init(rng, &[(m - 1) * d, d + 1, d], Activation::LeakyRelu { slope: LEAKY_SLOPE })?;
            params.extend(p.tensors().into_iter().cloned());
        }
    }
    let proj_acts = [Activation::LeakyRelu { slope: LEAKY_SLOPE }, Activation::Identity];
    check.run(&params, |g: &mut Graph, p: &[Var]| {
        let projectors = if uses_projectors {
            (0..m)
                .map(|i| BoundMlp::from_vars(&p[proj_start + 4 * i..proj_start + 4 * i + 4], &proj_acts))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let z: Vec<Var> = if kind == LossKind::TotalThroughEncoders {
            (0..m)
                .map(|i| {
                    let enc = BoundMlp::from_vars(&p[m + 4 * i..m + 4 * i + 4], &encoder_acts)?;
                    forward_mlp(g, &enc, p[i])
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            p[..m].to_vec()
        };
        match kind {
            LossKind::Sufficiency => losses::sufficiency_loss(g, &z, &loss_cfg, &projectors),
            LossKind::Minimality => losses::minimality_loss(g, &z),
            LossKind::Total | LossKind::TotalThroughEncoders => Ok(losses::total_loss(g, &z, &loss_cfg, &projectors)?.total),
            LossKind::PairwiseClip => losses::pairwise_clip_loss(g, &z, loss_cfg.tau, include_positive),
        }
    })
}

/// Finite-difference checks of every loss, scorer and denominator mode over
/// the configured shapes.
pub fn run_gradcheck(cfg: &GradcheckConfig, inject_fault: bool) -> Result<GradcheckSuiteReport> {
    if cfg.shapes.is_empty() {
        return Err(Error::Empty("gradcheck shapes"));
    }
    for &(m, n, d) in &cfg.shapes {
        if m < 2 || n < 2 || d < m - 1 {
            return Err(Error::InvalidArgument(format!("shape (M={m}, N={n}, d={d}) needs M >= 2, N >= 2, d >= M-1")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut entries = Vec::new();
    for &shape in &cfg.shapes {
        for include_positive in [false, true] {
            for scorer in [ScorerKind::Geometric, ScorerKind::Mlp] {
                for kind in [LossKind::Sufficiency, LossKind::Total, LossKind::TotalThroughEncoders] {
                    let report = gradcheck_one(kind, scorer, include_positive, shape, cfg, inject_fault, &mut rng)?;
                    entries.push(GradcheckEntry {
                        loss: kind,
                        scorer: Some(scorer),
                        include_positive,
                        shape,
                        report,
                    });
                }
            }
            let report = gradcheck_one(LossKind::PairwiseClip, ScorerKind::Geometric, include_positive, shape, cfg, inject_fault, &mut rng)?;
            entries.push(GradcheckEntry {
                loss: LossKind::PairwiseClip,
                scorer: None,
                include_positive,
                shape,
                report,
            });
        }
        let report = gradcheck_one(LossKind::Minimality, ScorerKind::Geometric, false, shape, cfg, inject_fault, &mut rng)?;
        entries.push(GradcheckEntry {
            loss: LossKind::Minimality,
            scorer: None,
            include_positive: false,
            shape,
            report,
        });
    }
    Ok(GradcheckSuiteReport {
        passed: entries.iter().all(|e| e.report.pass),
        entries,
    })
}

/// Convenience for a single ad-hoc check on the embeddings of a bundle.
pub fn gradcheck_total(bundle: &ModalityBundle, cfg: &LossConfig) -> Result<GradCheckReport> {
    finite_diff_check(bundle.batches(), 1e-5, 1e-4, |g, p| Ok(losses::total_loss(g, p, cfg, &[])?.total))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifyOptions {
        VerifyOptions {
            joints_per_m: 10,
            gaussian_configs: 12,
            infonce_configs: 4,
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn small_sweep_passes() {
        let r = run_verify(&small()).unwrap();
        assert!(r.passed, "{:#?}", r.failing());
        assert!(r.check("m2_degeneracy").is_some());
    }

    #[test]
    fn negated_dtc_fails_sandwich() {
        let r = run_verify(&VerifyOptions {
            fault: Some(Fault::NegateDtc),
            scope: Scope::Oracle,
            ..small()
        })
        .unwrap();
        assert!(!r.passed);
        let s = r.check("sandwich").unwrap();
        assert!(!s.passed);
        assert_eq!(s.failing_seed, Some(0));
    }

    #[test]
    fn m_filter_limits_sweep() {
        let r = run_verify(&VerifyOptions {
            m: Some(3),
            scope: Scope::Oracle,
            ..small()
        })
        .unwrap();
        assert!(r.check("m2_degeneracy").is_none());
        assert_eq!(r.check("sandwich").unwrap().cases, 10);
        assert!(run_verify(&VerifyOptions { m: Some(1), ..small() }).is_err());
    }

    #[test]
    fn grid_oracle_on_known_product() {
        let (m, v) = grid_product_moments(&[-1.0, 3.0], 0.5);
        assert!((m - 1.0).abs() < 1e-9);
        assert!((v - 0.25).abs() < 1e-9);
    }

    #[test]
    fn han_profile_of_copies_is_flat_then_falling() {
        let p = han_profile(&DiscreteJoint::copies(3, 2).unwrap()).unwrap();
        let ln2 = 2f64.ln();
        assert!((p[0] - ln2).abs() < 1e-12);
        assert!((p[1] - ln2 / 2.0).abs() < 1e-12);
        assert!((p[2] - ln2 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gradcheck_suite_small() {
        let cfg = GradcheckConfig {
            shapes: vec![(3, 3, 4)],
            ..GradcheckConfig::default()
        };
        let r = run_gradcheck(&cfg, false).unwrap();
        assert!(r.passed, "{:#?}", r.entries.iter().filter(|e| !e.report.pass).collect::<Vec<_>>());
        assert_eq!(r.entries.len(), 2 * (2 * 3 + 1) + 1);
        let bad = run_gradcheck(&cfg, true).unwrap();
        assert!(!bad.passed);
    }
}
