//! Exact information quantities on finite joint distributions and isotropic
//! Gaussians.
//!
//! Everything here is computed by enumeration, in nats. These functions are
//! the ground truth the contrastive objective is checked against: the
//! One-vs-All mutual-information sum, total correlation (TC), dual total
//! correlation (DTC), the sandwich `sum/M <= DTC <= (M-1) sum/M`, Han's
//! inequality, the Donsker-Varadhan bound, and the Gaussian product/KL closed
//! forms behind the minimality regulariser.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::Vector;

/// Probabilities at or below this are treated as exact zeros.
pub const ZERO_PROB: f64 = 1e-15;

const SUM_TOL: f64 = 1e-12;

/// Slack used by the inequality checks.
pub const CHECK_TOL: f64 = 1e-9;

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

#[inline]
fn plogp(p: f64) -> f64 {
    if p <= ZERO_PROB {
        0.0
    } else {
        p * p.ln()
    }
}

fn shannon(probs: &[f64]) -> f64 {
    (-probs.iter().map(|&p| plogp(p)).sum::<f64>()).max(0.0)
}

/// Dense probability tensor over `M >= 2` finite variables, row-major with
/// variable 0 varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJoint {
    alphabet_sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(alphabet_sizes: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if alphabet_sizes.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a joint needs at least 2 variables, got {}",
                alphabet_sizes.len()
            )));
        }
        if alphabet_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument("alphabet sizes must be positive".into()));
        }
        let len: usize = alphabet_sizes.iter().product();
        if probs.len() != len {
            return Err(dim_mismatch("DiscreteJoint::new", len, probs.len()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument("probabilities must be finite and non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self {
            alphabet_sizes,
            probs,
        })
    }

    /// Full-support joint from normalised i.i.d. Exp(1) entries.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, alphabet_sizes: &[usize]) -> Result<Self> {
        let len: usize = alphabet_sizes.iter().product();
        let raw: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = raw.iter().sum();
        Self::new(alphabet_sizes.to_vec(), raw.into_iter().map(|v| v / total).collect())
    }

    /// Independent uniform variables.
    pub fn uniform(alphabet_sizes: &[usize]) -> Result<Self> {
        let len: usize = alphabet_sizes.iter().product();
        Self::new(alphabet_sizes.to_vec(), vec![1.0 / len as f64; len])
    }

    /// `num_vars` exact copies of one uniform variable on `alphabet` symbols.
    pub fn copies(num_vars: usize, alphabet: usize) -> Result<Self> {
        let sizes = vec![alphabet; num_vars];
        let len: usize = sizes.iter().product();
        let mut probs = vec![0.0; len];
        for s in 0..alphabet {
            let flat = (0..num_vars).fold(0, |acc, _| acc * alphabet + s);
            probs[flat] = 1.0 / alphabet as f64;
        }
        Self::new(sizes, probs)
    }

    /// All mass on the given outcome.
    pub fn point_mass(alphabet_sizes: &[usize], outcome: &[usize]) -> Result<Self> {
        let len: usize = alphabet_sizes.iter().product();
        if outcome.len() != alphabet_sizes.len() {
            return Err(dim_mismatch("DiscreteJoint::point_mass", alphabet_sizes.len(), outcome.len()));
        }
        let mut flat = 0;
        for (&o, &s) in outcome.iter().zip(alphabet_sizes) {
            if o >= s {
                return Err(Error::InvalidIndex {
                    context: "DiscreteJoint::point_mass",
                    index: o,
                    bound: s,
                });
            }
            flat = flat * s + o;
        }
        let mut probs = vec![0.0; len];
        probs[flat] = 1.0;
        Self::new(alphabet_sizes.to_vec(), probs)
    }

    pub fn num_vars(&self) -> usize {
        self.alphabet_sizes.len()
    }

    pub fn alphabet_sizes(&self) -> &[usize] {
        &self.alphabet_sizes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Iterates `(outcome, probability)` over the full tensor.
    pub fn outcomes(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        let sizes = &self.alphabet_sizes;
        let mut idx = vec![0usize; sizes.len()];
        let mut first = true;
        self.probs.iter().map(move |&p| {
            if !first {
                for v in (0..sizes.len()).rev() {
                    idx[v] += 1;
                    if idx[v] < sizes[v] {
                        break;
                    }
                    idx[v] = 0;
                }
            }
            first = false;
            (idx.clone(), p)
        })
    }

    fn validate_subset(&self, subset: &[usize], context: &'static str) -> Result<()> {
        if subset.is_empty() {
            return Err(Error::Empty(context));
        }
        let m = self.num_vars();
        let mut seen = vec![false; m];
        for &i in subset {
            if i >= m {
                return Err(Error::InvalidIndex {
                    context,
                    index: i,
                    bound: m,
                });
            }
            if seen[i] {
                return Err(Error::Overlap(context));
            }
            seen[i] = true;
        }
        Ok(())
    }

    /// Marginal tensor over `subset`, laid out row-major in the given order.
    pub fn marginal(&self, subset: &[usize]) -> Result<Vec<f64>> {
        self.validate_subset(subset, "DiscreteJoint::marginal")?;
        let sizes: Vec<usize> = subset.iter().map(|&i| self.alphabet_sizes[i]).collect();
        let mut out = vec![0.0; sizes.iter().product()];
        for (outcome, p) in self.outcomes() {
            let flat = subset
                .iter()
                .zip(&sizes)
                .fold(0, |acc, (&v, &s)| acc * s + outcome[v]);
            out[flat] += p;
        }
        Ok(out)
    }

    pub fn entropy(&self, subset: &[usize]) -> Result<f64> {
        Ok(shannon(&self.marginal(subset)?))
    }

    pub fn joint_entropy(&self) -> f64 {
        shannon(&self.probs)
    }

    fn complement(&self, m: usize) -> Vec<usize> {
        (0..self.num_vars()).filter(|&i| i != m).collect()
    }

    /// `H(target | given) = H(target, given) - H(given)`. An empty `given`
    /// reduces to the marginal entropy.
    pub fn conditional_entropy(&self, target: usize, given: &[usize]) -> Result<f64> {
        if given.contains(&target) {
            return Err(Error::Overlap("conditional_entropy"));
        }
        if given.is_empty() {
            return self.entropy(&[target]);
        }
        let mut both = vec![target];
        both.extend_from_slice(given);
        Ok((self.entropy(&both)? - self.entropy(given)?).max(0.0))
    }

    /// `I(a; b) = H(a) + H(b) - H(a, b)`, clamped at zero.
    pub fn mutual_information(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        self.validate_subset(a, "mutual_information")?;
        self.validate_subset(b, "mutual_information")?;
        if a.iter().any(|i| b.contains(i)) {
            return Err(Error::Overlap("mutual_information"));
        }
        let mut ab = a.to_vec();
        ab.extend_from_slice(b);
        let mi = self.entropy(a)? + self.entropy(b)? - self.entropy(&ab)?;
        Ok(mi.max(0.0))
    }

    /// Raw (unclamped) TC, used by the sweeps to measure negativity.
    pub fn total_correlation_raw(&self) -> f64 {
        let marginals: f64 = (0..self.num_vars())
            .map(|m| shannon(&self.marginal(&[m]).expect("valid index")))
            .sum();
        marginals - self.joint_entropy()
    }

    /// `sum_m H(z_m) - H(z_all)`.
    pub fn total_correlation(&self) -> f64 {
        self.total_correlation_raw().max(0.0)
    }

    pub fn dual_total_correlation_raw(&self) -> f64 {
        let h_all = self.joint_entropy();
        let cond: f64 = (0..self.num_vars())
            .map(|m| h_all - shannon(&self.marginal(&self.complement(m)).expect("valid index")))
            .sum();
        h_all - cond
    }

    /// `H(z_all) - sum_m H(z_m | z_rest)`.
    pub fn dual_total_correlation(&self) -> f64 {
        self.dual_total_correlation_raw().max(0.0)
    }

    /// `I(z_m; z_rest)` for each m.
    pub fn ova_mi_terms(&self) -> Vec<f64> {
        (0..self.num_vars())
            .map(|m| {
                self.mutual_information(&[m], &self.complement(m))
                    .expect("disjoint by construction")
            })
            .collect()
    }

    /// `sum_m I(z_m; z_rest)`, equal to TC + DTC.
    pub fn ova_mi_sum(&self) -> f64 {
        self.ova_mi_terms().iter().sum()
    }

    pub fn check_sandwich(&self) -> SandwichReport {
        sandwich_from(self.num_vars(), self.ova_mi_sum(), self.dual_total_correlation())
    }

    pub fn check_han(&self) -> HanReport {
        let m = self.num_vars();
        let lhs = self.joint_entropy();
        let leave_one_out: f64 = (0..m)
            .map(|i| shannon(&self.marginal(&self.complement(i)).expect("valid index")))
            .sum();
        let rhs = leave_one_out / (m - 1) as f64;
        HanReport {
            lhs,
            rhs,
            holds: lhs <= rhs + CHECK_TOL,
        }
    }

    /// Two-block view `(a, b)` of this joint, for DV-style bounds.
    pub fn bipartite(&self, a: &[usize], b: &[usize]) -> Result<Bipartite> {
        if a.iter().any(|i| b.contains(i)) {
            return Err(Error::Overlap("bipartite"));
        }
        let mut ab = a.to_vec();
        ab.extend_from_slice(b);
        let probs = self.marginal(&ab)?;
        let na = a.iter().map(|&i| self.alphabet_sizes[i]).product();
        let nb = b.iter().map(|&i| self.alphabet_sizes[i]).product();
        Ok(Bipartite { na, nb, probs })
    }
}

/// Assembles a sandwich report given the OVA sum and a DTC value. Separate
/// so fault-injection tests can feed a corrupted DTC.
pub fn sandwich_from(m: usize, ova_sum: f64, dtc: f64) -> SandwichReport {
    let lower = ova_sum / m as f64;
    let upper = ova_sum * (m - 1) as f64 / m as f64;
    SandwichReport {
        lower,
        dtc,
        upper,
        holds: lower <= dtc + CHECK_TOL && dtc <= upper + CHECK_TOL,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SandwichReport {
    pub lower: f64,
    pub dtc: f64,
    pub upper: f64,
    pub holds: bool,
}

impl SandwichReport {
    /// Largest amount by which either side is violated (0 when it holds).
    pub fn violation(&self) -> f64 {
        (self.lower - self.dtc).max(self.dtc - self.upper).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HanReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Joint of two (possibly compound) variables `a` and `b` as an `na x nb`
/// row-major table.
#[derive(Debug, Clone)]
pub struct Bipartite {
    pub na: usize,
    pub nb: usize,
    pub probs: Vec<f64>,
}

impl Bipartite {
    pub fn new(na: usize, nb: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != na * nb {
            return Err(dim_mismatch("Bipartite::new", na * nb, probs.len()));
        }
        Ok(Self { na, nb, probs })
    }

    pub fn p(&self, a: usize, b: usize) -> f64 {
        self.probs[a * self.nb + b]
    }

    pub fn marginal_a(&self) -> Vec<f64> {
        (0..self.na).map(|a| (0..self.nb).map(|b| self.p(a, b)).sum()).collect()
    }

    pub fn marginal_b(&self) -> Vec<f64> {
        (0..self.nb).map(|b| (0..self.na).map(|a| self.p(a, b)).sum()).collect()
    }

    pub fn mutual_information(&self) -> f64 {
        let pa = self.marginal_a();
        let pb = self.marginal_b();
        let mut mi = 0.0;
        for a in 0..self.na {
            for b in 0..self.nb {
                let p = self.p(a, b);
                if p > ZERO_PROB {
                    mi += p * (p / (pa[a] * pb[b])).ln();
                }
            }
        }
        mi.max(0.0)
    }

    /// `E_P[T] - log E_Q[exp T]` with `Q = P(a) P(b)`; `critic` is `na x nb`.
    pub fn dv_bound(&self, critic: &[f64]) -> Result<f64> {
        self.check_critic(critic)?;
        let pa = self.marginal_a();
        let pb = self.marginal_b();
        let mut ep = 0.0;
        let mut terms = Vec::with_capacity(self.probs.len());
        for a in 0..self.na {
            for b in 0..self.nb {
                let t = critic[a * self.nb + b];
                let p = self.p(a, b);
                if p > ZERO_PROB {
                    ep += p * t;
                }
                let q = pa[a] * pb[b];
                if q > ZERO_PROB && t > f64::NEG_INFINITY {
                    terms.push(t + q.ln());
                }
            }
        }
        Ok(ep - crate::linalg::lse_unchecked(terms.iter().copied()))
    }

    /// Per-anchor form `E_P[T] - E_{P(a)} log E_{P(b)}[exp T(a, .)]`, the
    /// large-batch limit of InfoNCE. Also bounded above by `I(a; b)`.
    pub fn conditional_dv_bound(&self, critic: &[f64]) -> Result<f64> {
        self.check_critic(critic)?;
        let pa = self.marginal_a();
        let pb = self.marginal_b();
        let mut value = 0.0;
        for a in 0..self.na {
            if pa[a] <= ZERO_PROB {
                continue;
            }
            let row = &critic[a * self.nb..(a + 1) * self.nb];
            let ep: f64 = (0..self.nb)
                .filter(|&b| self.p(a, b) > ZERO_PROB)
                .map(|b| self.p(a, b) * row[b])
                .sum();
            let log_eq = crate::linalg::lse_unchecked(
                (0..self.nb)
                    .filter(|&b| pb[b] > ZERO_PROB && row[b] > f64::NEG_INFINITY)
                    .map(|b| row[b] + pb[b].ln()),
            );
            value += ep - pa[a] * log_eq;
        }
        Ok(value)
    }

    /// `log dP/dQ`, with `-inf` where `P` has no mass.
    pub fn optimal_critic(&self) -> Vec<f64> {
        let pa = self.marginal_a();
        let pb = self.marginal_b();
        let mut t = vec![f64::NEG_INFINITY; self.probs.len()];
        for a in 0..self.na {
            for b in 0..self.nb {
                let p = self.p(a, b);
                if p > ZERO_PROB {
                    t[a * self.nb + b] = (p / (pa[a] * pb[b])).ln();
                }
            }
        }
        t
    }

    fn check_critic(&self, critic: &[f64]) -> Result<()> {
        if critic.len() != self.probs.len() {
            return Err(dim_mismatch("critic", self.probs.len(), critic.len()));
        }
        if critic.iter().any(|t| t.is_nan() || *t == f64::INFINITY) {
            return Err(Error::NonFinite("critic"));
        }
        Ok(())
    }
}

/// `N(mean, variance * I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotropicGaussian {
    mean: Vector,
    variance: f64,
}

impl IsotropicGaussian {
    pub fn new(mean: Vector, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(Error::InvalidArgument(format!("variance must be positive, got {variance}")));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }
}

/// Normalised product of `k` isotropic Gaussians with a shared variance:
/// mean is the average of the means, variance is `sigma^2 / k`.
pub fn gaussian_product(components: &[IsotropicGaussian]) -> Result<IsotropicGaussian> {
    let first = components.first().ok_or(Error::Empty("gaussian_product"))?;
    let d = first.dim();
    let var = first.variance;
    let mut mean = vec![0.0; d];
    for c in components {
        if c.dim() != d {
            return Err(dim_mismatch("gaussian_product", d, c.dim()));
        }
        if c.variance != var {
            return Err(Error::InvalidArgument("gaussian_product requires a shared variance".into()));
        }
        for (m, x) in mean.iter_mut().zip(c.mean.as_slice()) {
            *m += x;
        }
    }
    let k = components.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    IsotropicGaussian::new(Vector::new(mean)?, var / k)
}

/// `KL(p || q)` for isotropic Gaussians.
pub fn gaussian_kl(p: &IsotropicGaussian, q: &IsotropicGaussian) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(dim_mismatch("gaussian_kl", p.dim(), q.dim()));
    }
    let d = p.dim() as f64;
    let sq: f64 = p
        .mean
        .as_slice()
        .iter()
        .zip(q.mean.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let kl = 0.5 * (d * p.variance / q.variance + sq / q.variance - d + d * (q.variance / p.variance).ln());
    Ok(kl.max(0.0))
}

/// Mean-independent constant in `KL(N(mu, s I) || product of the other M-1)`:
/// `(d/2) [(M-1) - 1 - log(M-1)]`.
pub fn minimality_kl_constant(d: usize, m: usize) -> f64 {
    let k = (m - 1) as f64;
    0.5 * d as f64 * (k - 1.0 - k.ln())
}
