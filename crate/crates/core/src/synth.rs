//! Linear-Gaussian essence/nuisance datasets.
//!
//! Modality `m` observes `x = A_m y + B_m n_m + sigma_m e` where the essence
//! `y` is shared and every nuisance `n_m` is independent, so all cross-modal
//! dependence flows through `y`. Mixing matrices, latents, nuisances and
//! observation noise come from separate ChaCha streams of the spec seed.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{dot, Matrix};

const STREAM_MIXING: u64 = 1;
const STREAM_ESSENCE: u64 = 2;
const STREAM_NUISANCE: u64 = 3;
const STREAM_NOISE: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mixing {
    /// Seeded Gaussian `[A | B]` with jointly orthonormalized columns.
    Random,
    /// `A = I`, no nuisance. Requires `d_obs == d_essence`.
    Identity,
    /// `A = 0`: modalities share nothing.
    NuisanceOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub num_modalities: usize,
    pub d_essence: usize,
    pub d_nuisance: Vec<usize>,
    pub d_obs: Vec<usize>,
    pub noise: Vec<f64>,
    /// Zero requests a scalar regression target.
    pub num_classes: usize,
    pub seed: u64,
    pub mixing: Mixing,
    /// Overrides the seed of the nuisance stream only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nuisance_seed: Option<u64>,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self::uniform(3, 8, 8, 32, 0.1, 4, 42)
    }
}

impl GeneratorSpec {
    /// The same nuisance width, observation width and noise for every modality.
    pub fn uniform(m: usize, d_essence: usize, d_nuisance: usize, d_obs: usize, noise: f64, num_classes: usize, seed: u64) -> Self {
        Self {
            num_modalities: m,
            d_essence,
            d_nuisance: vec![d_nuisance; m],
            d_obs: vec![d_obs; m],
            noise: vec![noise; m],
            num_classes,
            seed,
            mixing: Mixing::Random,
            nuisance_seed: None,
        }
    }

    /// Every modality an exact copy of `y`.
    pub fn fully_shared(m: usize, d: usize, seed: u64) -> Self {
        Self {
            mixing: Mixing::Identity,
            ..Self::uniform(m, d, 0, d, 0.0, 4, seed)
        }
    }

    /// Mutually independent modalities.
    pub fn independent(m: usize, d_nuisance: usize, d_obs: usize, seed: u64) -> Self {
        Self {
            mixing: Mixing::NuisanceOnly,
            ..Self::uniform(m, 1, d_nuisance, d_obs, 0.1, 4, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.num_modalities;
        if m < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 modalities, got {m}")));
        }
        if self.d_essence == 0 {
            return Err(Error::InvalidArgument("d_essence must be at least 1".into()));
        }
        for (name, len) in [("d_nuisance", self.d_nuisance.len()), ("d_obs", self.d_obs.len()), ("noise", self.noise.len())] {
            if len != m {
                return Err(dim_mismatch(name, m, len));
            }
        }
        for i in 0..m {
            let (dn, dx, s) = (self.d_nuisance[i], self.d_obs[i], self.noise[i]);
            if dx == 0 {
                return Err(Error::InvalidArgument(format!("modality {i}: d_obs must be at least 1")));
            }
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidArgument(format!("modality {i}: noise must be nonnegative, got {s}")));
            }
            match self.mixing {
                Mixing::Random if self.d_essence + dn > dx => {
                    return Err(Error::InvalidArgument(format!(
                        "modality {i}: d_essence + d_nuisance = {} exceeds d_obs = {dx}",
                        self.d_essence + dn
                    )));
                }
                Mixing::Identity if dx != self.d_essence || dn != 0 => {
                    return Err(Error::InvalidArgument(format!(
                        "modality {i}: identity mixing needs d_obs == d_essence and no nuisance"
                    )));
                }
                Mixing::NuisanceOnly if dn > dx => {
                    return Err(Error::InvalidArgument(format!("modality {i}: d_nuisance exceeds d_obs")));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum Labels {
    Classes(Vec<usize>),
    Targets(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(c) => c.len(),
            Labels::Targets(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Labels {
        match self {
            Labels::Classes(c) => Labels::Classes(idx.iter().map(|&i| c[i]).collect()),
            Labels::Targets(t) => Labels::Targets(idx.iter().map(|&i| t[i]).collect()),
        }
    }
}

/// Mixing matrices of one modality: `A` is `d_obs x d_essence`, `B` is
/// `d_obs x d_nuisance`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalityMixing {
    pub essence: Matrix,
    pub nuisance: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub spec: GeneratorSpec,
    /// `N x d_obs` per modality.
    pub observations: Vec<Matrix>,
    /// `N x d_essence`.
    pub essence: Matrix,
    /// `N x d_nuisance` per modality.
    pub nuisances: Vec<Matrix>,
    pub labels: Labels,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.essence.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_modalities(&self) -> usize {
        self.observations.len()
    }

    /// Rows `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> SyntheticDataset {
        SyntheticDataset {
            spec: self.spec.clone(),
            observations: self.observations.iter().map(|x| x.select_rows(idx)).collect(),
            essence: self.essence.select_rows(idx),
            nuisances: self.nuisances.iter().map(|x| x.select_rows(idx)).collect(),
            labels: self.labels.select(idx),
        }
    }

    /// Writes `x_<m>.csv`, `n_<m>.csv`, `y.csv`, `labels.csv` and
    /// `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (m, x) in self.observations.iter().enumerate() {
            write_csv(&dir.join(format!("x_{m}.csv")), x)?;
        }
        for (m, n) in self.nuisances.iter().enumerate() {
            write_csv(&dir.join(format!("n_{m}.csv")), n)?;
        }
        write_csv(&dir.join("y.csv"), &self.essence)?;
        let labels = match &self.labels {
            Labels::Classes(c) => c.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            Labels::Targets(t) => t.iter().map(|v| v.to_string()).collect(),
        };
        fs::write(dir.join("labels.csv"), labels.join("\n") + "\n")?;
        let manifest = Manifest {
            spec: self.spec.clone(),
            num_samples: self.len(),
            regression: matches!(self.labels, Labels::Targets(_)),
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<SyntheticDataset> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
        let m = manifest.spec.num_modalities;
        let observations = (0..m)
            .map(|i| read_csv(&dir.join(format!("x_{i}.csv")), manifest.num_samples, manifest.spec.d_obs[i]))
            .collect::<Result<Vec<_>>>()?;
        let nuisances = (0..m)
            .map(|i| read_csv(&dir.join(format!("n_{i}.csv")), manifest.num_samples, manifest.spec.d_nuisance[i]))
            .collect::<Result<Vec<_>>>()?;
        let essence = read_csv(&dir.join("y.csv"), manifest.num_samples, manifest.spec.d_essence)?;
        let text = fs::read_to_string(dir.join("labels.csv"))?;
        let lines = text.lines().filter(|l| !l.is_empty());
        let labels = if manifest.regression {
            Labels::Targets(lines.map(parse_f64).collect::<Result<_>>()?)
        } else {
            Labels::Classes(
                lines
                    .map(|l| l.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad label {l:?}"))))
                    .collect::<Result<_>>()?,
            )
        };
        let n = manifest.num_samples;
        let all_rows = observations.iter().chain(&nuisances).map(|x| x.rows()).chain([essence.rows(), labels.len()]);
        for rows in all_rows {
            if rows != n {
                return Err(dim_mismatch("SyntheticDataset::load rows", n, rows));
            }
        }
        Ok(SyntheticDataset {
            spec: manifest.spec,
            observations,
            essence,
            nuisances,
            labels,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    spec: GeneratorSpec,
    num_samples: usize,
    regression: bool,
}

fn write_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = String::new();
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad number {s:?}")))
}

fn read_csv(path: &Path, n: usize, cols: usize) -> Result<Matrix> {
    if cols == 0 {
        return Ok(Matrix::zeros(n, 0));
    }
    let text = fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut rows = 0;
    for line in text.lines().filter(|l| !l.is_empty()) {
        let before = data.len();
        for v in line.split(',') {
            data.push(parse_f64(v)?);
        }
        if data.len() - before != cols {
            return Err(dim_mismatch("CSV row width", cols, data.len() - before));
        }
        rows += 1;
    }
    Matrix::new(rows, cols, data)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
    Matrix::new(rows, cols, data).expect("finite normals")
}

/// Modified Gram-Schmidt on the columns of `a` (assumed full column rank).
fn orthonormalize_columns(a: &Matrix) -> Matrix {
    let mut cols: Vec<Vec<f64>> = (0..a.cols()).map(|j| a.col(j)).collect();
    for j in 0..cols.len() {
        for i in 0..j {
            let (done, rest) = cols.split_at_mut(j);
            let p = dot(&done[i], &rest[0]);
            for (c, q) in rest[0].iter_mut().zip(&done[i]) {
                *c -= p * q;
            }
        }
        let n = dot(&cols[j], &cols[j]).sqrt();
        for c in &mut cols[j] {
            *c /= n;
        }
    }
    let refs: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
    if refs.is_empty() {
        return Matrix::zeros(a.rows(), 0);
    }
    Matrix::from_columns(&refs).expect("consistent columns")
}

/// The mixing matrices a spec produces, independent of the sample count.
pub fn mixing_matrices(spec: &GeneratorSpec) -> Result<Vec<ModalityMixing>> {
    spec.validate()?;
    let mut rng = stream(spec.seed, STREAM_MIXING);
    let de = spec.d_essence;
    (0..spec.num_modalities)
        .map(|m| {
            let (dn, dx) = (spec.d_nuisance[m], spec.d_obs[m]);
            let mix = match spec.mixing {
                Mixing::Random => {
                    let q = orthonormalize_columns(&gaussian(&mut rng, dx, de + dn));
                    let idx_a: Vec<usize> = (0..de).collect();
                    let idx_b: Vec<usize> = (de..de + dn).collect();
                    let qt = q.transpose();
                    ModalityMixing {
                        essence: qt.select_rows(&idx_a).transpose(),
                        nuisance: qt.select_rows(&idx_b).transpose(),
                    }
                }
                Mixing::Identity => ModalityMixing {
                    essence: Matrix::identity(de),
                    nuisance: Matrix::zeros(dx, 0),
                },
                Mixing::NuisanceOnly => ModalityMixing {
                    essence: Matrix::zeros(dx, de),
                    nuisance: orthonormalize_columns(&gaussian(&mut rng, dx, dn)),
                },
            };
            Ok(mix)
        })
        .collect()
}

/// The fixed label readout: `num_classes x d_essence` for classification,
/// `1 x d_essence` for regression.
fn readout(spec: &GeneratorSpec) -> Matrix {
    let mut rng = stream(spec.seed, STREAM_MIXING + 100);
    gaussian(&mut rng, spec.num_classes.max(1), spec.d_essence)
}

pub fn generate(spec: &GeneratorSpec, n: usize) -> Result<SyntheticDataset> {
    if n == 0 {
        return Err(Error::Empty("generate needs at least one sample"));
    }
    let mixing = mixing_matrices(spec)?;
    let essence = gaussian(&mut stream(spec.seed, STREAM_ESSENCE), n, spec.d_essence);
    let mut nuisance_rng = stream(spec.nuisance_seed.unwrap_or(spec.seed), STREAM_NUISANCE);
    let mut noise_rng = stream(spec.seed, STREAM_NOISE);

    let mut observations = Vec::with_capacity(spec.num_modalities);
    let mut nuisances = Vec::with_capacity(spec.num_modalities);
    for (m, mix) in mixing.iter().enumerate() {
        let nu = gaussian(&mut nuisance_rng, n, spec.d_nuisance[m]);
        let mut x = essence.matmul(&mix.essence.transpose())?;
        if spec.d_nuisance[m] > 0 {
            let bn = nu.matmul(&mix.nuisance.transpose())?;
            for (a, b) in x.as_mut_slice().iter_mut().zip(bn.as_slice()) {
                *a += b;
            }
        }
        let sigma = spec.noise[m];
        for v in x.as_mut_slice() {
            let e: f64 = StandardNormal.sample(&mut noise_rng);
            *v += sigma * e;
        }
        observations.push(x);
        nuisances.push(nu);
    }

    let w = readout(spec);
    let scores = essence.matmul(&w.transpose())?;
    let labels = if spec.num_classes == 0 {
        Labels::Targets(scores.col(0))
    } else {
        Labels::Classes(
            (0..n)
                .map(|i| {
                    let row = scores.row(i);
                    let mut best = 0;
                    for (c, &v) in row.iter().enumerate() {
                        if v > row[best] {
                            best = c;
                        }
                    }
                    best
                })
                .collect(),
        )
    };

    Ok(SyntheticDataset {
        spec: spec.clone(),
        observations,
        essence,
        nuisances,
        labels,
    })
}

/// Train/validation/test split after a seeded shuffle. Train and validation
/// sizes are rounded; the test split takes the remainder.
pub fn holdout_split(ds: &SyntheticDataset, fractions: [f64; 3], seed: u64) -> Result<[SyntheticDataset; 3]> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("split fractions must be nonnegative and sum to 1, got {fractions:?}")));
    }
    let n = ds.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((fractions[0] * n as f64).round() as usize).min(n);
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let (train, rest) = idx.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    Ok([ds.select(train), ds.select(val), ds.select(test)])
}
