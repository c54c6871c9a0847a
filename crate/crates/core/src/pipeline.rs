//! Run configuration, training, checkpoints and evaluation runs.
//!
//! A run is a pure function of its [`RunConfig`] and seed: the dataset comes
//! from the generator spec, while the seed drives parameter initialization
//! and batch order. Metrics files carry no wall-clock values so that two runs
//! with the same seed produce byte-identical output; timings go to a
//! separate file.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{forward_mlp, Activation, AdamConfig, AdamState, BoundMlp, Graph, Layer, MlpParams, Var, LEAKY_SLOPE};
use crate::error::{dim_mismatch, Error, Result};
use crate::eval::{self, NullDistribution, ProbeResult, RetrievalResult};
use crate::linalg::{Matrix, Vector};
use crate::losses::{self, LossConfig, ScorerKind};
use crate::synth::{self, GeneratorSpec, SyntheticDataset};

pub const DEFAULT_SEEDS: [u64; 3] = [42, 0, 1];
const STREAM_INIT: u64 = 10;
const STREAM_BATCHES: u64 = 11;
const CHECKPOINT_MAGIC: &[u8; 8] = b"OVAIBCK1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    OvaIb,
    PairwiseClip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Hidden widths of each modality encoder.
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    /// Hidden widths of the learned projectors (MLP scorer only).
    pub projector_hidden: Vec<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            embed_dim: 32,
            projector_hidden: vec![64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 64,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationFlags {
    pub beta_zero: bool,
    pub mlp_projector: bool,
    pub include_positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub generator: GeneratorSpec,
    pub num_samples: usize,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub split_seed: u64,
    pub encoder: EncoderConfig,
    pub loss: LossConfig,
    pub objective: Objective,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub ablation: AblationFlags,
    /// Trials of the random-scorer null in evaluation.
    pub null_trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorSpec::default(),
            num_samples: 4096,
            split: [0.75, 0.125, 0.125],
            split_seed: 0,
            encoder: EncoderConfig::default(),
            loss: LossConfig::default(),
            objective: Objective::OvaIb,
            train: TrainConfig::default(),
            seeds: DEFAULT_SEEDS.to_vec(),
            output_dir: PathBuf::from("runs"),
            ablation: AblationFlags::default(),
            null_trials: 10_000,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The loss settings after applying the ablation flags.
    pub fn effective_loss(&self) -> LossConfig {
        let mut l = self.loss;
        if self.ablation.beta_zero {
            l.beta = 0.0;
        }
        if self.ablation.mlp_projector {
            l.scorer = ScorerKind::Mlp;
        }
        if self.ablation.include_positive {
            l.include_positive_in_denominator = true;
        }
        l
    }

    pub fn split_sizes(&self) -> [usize; 3] {
        let n = self.num_samples;
        let train = ((self.split[0] * n as f64).round() as usize).min(n);
        let val = ((self.split[1] * n as f64).round() as usize).min(n - train);
        [train, val, n - train - val]
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.effective_loss().validate()?;
        if self.train.steps == 0 {
            return Err(Error::InvalidArgument("steps must be at least 1".into()));
        }
        if self.encoder.embed_dim == 0 || self.encoder.hidden.contains(&0) || self.encoder.projector_hidden.contains(&0) {
            return Err(Error::InvalidArgument("encoder widths must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Empty("seeds"));
        }
        if self.split.iter().any(|f| !(*f >= 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("split must be nonnegative and sum to 1, got {:?}", self.split)));
        }
        let [train, _, test] = self.split_sizes();
        if self.train.batch_size < 2 || self.train.batch_size > train {
            return Err(Error::InvalidArgument(format!(
                "batch size {} must be in 2..={train} (training split)",
                self.train.batch_size
            )));
        }
        if test < 2 {
            return Err(Error::InvalidArgument("test split needs at least 2 samples".into()));
        }
        if self.null_trials < 2 {
            return Err(Error::InvalidArgument("null_trials must be at least 2".into()));
        }
        Ok(())
    }
}

/// Encoders, plus one learned projector per modality under the MLP scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub encoders: Vec<MlpParams>,
    pub projectors: Vec<MlpParams>,
}

impl Model {
    pub fn init(cfg: &RunConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_INIT);
        let leaky = Activation::LeakyRelu { slope: LEAKY_SLOPE };
        let d = cfg.encoder.embed_dim;
        let m = cfg.generator.num_modalities;
        let encoders = (0..m)
            .map(|i| {
                let mut widths = vec![cfg.generator.d_obs[i]];
                widths.extend(&cfg.encoder.hidden);
                widths.push(d);
                MlpParams::init(&mut rng, &widths, leaky)
            })
            .collect::<Result<Vec<_>>>()?;
        let projectors = if cfg.effective_loss().scorer == ScorerKind::Mlp {
            (0..m)
                .map(|_| {
                    let mut widths = vec![(m - 1) * d];
                    widths.extend(&cfg.encoder.projector_hidden);
                    widths.push(d);
                    MlpParams::init(&mut rng, &widths, leaky)
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Self { encoders, projectors })
    }

    pub fn num_modalities(&self) -> usize {
        self.encoders.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.encoders[0].output_dim()
    }

    fn networks(&self) -> impl Iterator<Item = &MlpParams> {
        self.encoders.iter().chain(&self.projectors)
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.networks().flat_map(|n| n.tensors()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.encoders
            .iter_mut()
            .chain(self.projectors.iter_mut())
            .flat_map(|n| n.tensors_mut())
            .collect()
    }

    /// Embeddings of every modality of `ds`.
    pub fn embed(&self, ds: &SyntheticDataset) -> Result<Vec<Matrix>> {
        if ds.num_modalities() != self.num_modalities() {
            return Err(dim_mismatch("Model::embed modalities", self.num_modalities(), ds.num_modalities()));
        }
        self.encoders.iter().zip(&ds.observations).map(|(e, x)| e.forward(x)).collect()
    }

    /// Checks that the model fits the dimensions a config describes.
    pub fn check_compatible(&self, cfg: &RunConfig) -> Result<()> {
        let g = &cfg.generator;
        if self.num_modalities() != g.num_modalities {
            return Err(dim_mismatch("checkpoint modalities", g.num_modalities, self.num_modalities()));
        }
        for (i, e) in self.encoders.iter().enumerate() {
            if e.input_dim() != g.d_obs[i] {
                return Err(dim_mismatch("checkpoint encoder input", g.d_obs[i], e.input_dim()));
            }
            if e.output_dim() != cfg.encoder.embed_dim {
                return Err(dim_mismatch("checkpoint embedding width", cfg.encoder.embed_dim, e.output_dim()));
            }
        }
        let want_proj = cfg.effective_loss().scorer == ScorerKind::Mlp;
        if want_proj != !self.projectors.is_empty() {
            return Err(Error::Checkpoint("checkpoint projectors do not match the configured scorer".into()));
        }
        Ok(())
    }
}

/// One line of a metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub phase: String,
    pub step: usize,
    pub seed: u64,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub records: Vec<MetricsRecord>,
    pub wall_seconds: f64,
}

impl TrainOutcome {
    /// The `metric` column of the training records.
    pub fn series(&self, metric: &str) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.metrics.get(metric).copied()).collect()
    }
}

/// Trailing moving average with the given window.
pub fn smoothed(series: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(series.len());
    let mut acc = 0.0;
    for i in 0..series.len() {
        acc += series[i];
        if i >= w {
            acc -= series[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

/// Builds the dataset splits a config describes.
pub fn prepare_data(cfg: &RunConfig) -> Result<[SyntheticDataset; 3]> {
    let ds = synth::generate(&cfg.generator, cfg.num_samples)?;
    synth::holdout_split(&ds, cfg.split, cfg.split_seed)
}

/// Records the configured objective on `g` from the batch observations.
/// Returns `(sufficiency, minimality, total, parameter leaves)`.
fn record_step(g: &mut Graph, model: &Model, batch: &[Matrix], cfg: &RunConfig) -> Result<(Var, Var, Var, Vec<Var>)> {
    let loss = cfg.effective_loss();
    let enc: Vec<BoundMlp> = model.encoders.iter().map(|e| e.bind(g)).collect();
    let proj: Vec<BoundMlp> = model.projectors.iter().map(|p| p.bind(g)).collect();
    let z = enc
        .iter()
        .zip(batch)
        .map(|(e, x)| {
            let xv = g.leaf(x.clone());
            forward_mlp(g, e, xv)
        })
        .collect::<Result<Vec<_>>>()?;
    let (s, m, t) = match cfg.objective {
        Objective::OvaIb => {
            let parts = losses::total_loss(g, &z, &loss, &proj)?;
            (parts.sufficiency, parts.minimality, parts.total)
        }
        Objective::PairwiseClip => {
            let clip = losses::pairwise_clip_loss(g, &z, loss.tau, loss.include_positive_in_denominator)?;
            let mini = losses::minimality_loss(g, &z)?;
            (clip, mini, clip)
        }
    };
    let vars = enc.iter().chain(&proj).flat_map(|b| b.vars()).collect();
    Ok((s, m, t, vars))
}

/// Trains on the training split; one metrics record per step.
pub fn train(cfg: &RunConfig, train_set: &SyntheticDataset, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let mut model = Model::init(cfg, seed)?;
    let mut adam = AdamState::new(cfg.train.adam, &model.params());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_BATCHES);
    let n = train_set.len();
    let bs = cfg.train.batch_size;
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut records = Vec::with_capacity(cfg.train.steps);

    for step in 1..=cfg.train.steps {
        if cursor + bs > n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + bs];
        cursor += bs;
        let batch: Vec<Matrix> = train_set.observations.iter().map(|x| x.select_rows(idx)).collect();

        let mut g = Graph::new();
        let (s, m, t, vars) = record_step(&mut g, &model, &batch, cfg).map_err(|e| match e {
            Error::NonFinite(what) => Error::Divergence {
                what: format!("non-finite values in {what}"),
                step,
            },
            e => e,
        })?;
        let (sv, mv, tv) = (g.scalar(s), g.scalar(m), g.scalar(t));
        if !(sv.is_finite() && mv.is_finite() && tv.is_finite()) {
            return Err(Error::Divergence {
                what: format!("loss became non-finite (sufficiency {sv}, minimality {mv}, total {tv})"),
                step,
            });
        }
        let grads = g.backward(t)?;
        let grad_mats: Vec<Matrix> = {
            let params = model.params();
            vars.iter().zip(&params).map(|(&v, p)| grads.get_or_zeros(v, p)).collect()
        };
        if grad_mats.iter().any(|gm| !gm.is_finite()) {
            return Err(Error::Divergence {
                what: "gradient became non-finite".into(),
                step,
            });
        }
        adam.step(&mut model.params_mut(), &grad_mats)?;

        let mut metrics = BTreeMap::new();
        metrics.insert("sufficiency".to_string(), sv);
        metrics.insert("minimality".to_string(), mv);
        metrics.insert("total".to_string(), tv);
        records.push(MetricsRecord {
            phase: "train".into(),
            step,
            seed,
            metrics,
        });
    }
    Ok(TrainOutcome {
        model,
        records,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Retrieval scores with the objective's own scorer: the last modality is the
/// candidate, the others form each query.
pub fn retrieval_scores(model: &Model, embeddings: &[Matrix], cfg: &RunConfig) -> Result<Matrix> {
    let m = embeddings.len();
    let target = m - 1;
    let queries: Vec<&Matrix> = embeddings[..target].iter().collect();
    let loss = cfg.effective_loss();
    match (cfg.objective, loss.scorer) {
        (Objective::PairwiseClip, _) => eval::averaged_cosine_scores(&queries, &embeddings[target]),
        (Objective::OvaIb, ScorerKind::Geometric) => eval::projection_retrieval_scores(&queries, &embeddings[target], loss.lambda),
        (Objective::OvaIb, ScorerKind::Mlp) => {
            let concat = Matrix::hconcat(&queries)?;
            let mapped = model.projectors[target].forward(&concat)?;
            crate::autodiff::kernels::cosine_score_matrix(&mapped, &embeddings[target])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub retrieval: RetrievalResult,
    pub random_baseline: f64,
    pub null: NullDistribution,
    pub probes: Vec<ProbeResult>,
    pub nuisance: Vec<ProbeResult>,
}

impl EvalReport {
    pub fn mean_nuisance_r2(&self) -> f64 {
        self.nuisance.iter().map(|p| p.value).sum::<f64>() / self.nuisance.len().max(1) as f64
    }

    /// JSON lines: one retrieval record, then every probe.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        let retrieval = serde_json::json!({
            "phase": "retrieval",
            "seed": self.seed,
            "map": self.retrieval.map,
            "pool_size": self.retrieval.pool_size,
            "random_baseline": self.random_baseline,
            "null_mean": self.null.mean,
            "null_sd": self.null.sd,
            "null_trials": self.null.trials,
        });
        out.push_str(&serde_json::to_string(&retrieval)?);
        out.push('\n');
        for (phase, list) in [("probe", &self.probes), ("nuisance_probe", &self.nuisance)] {
            for p in list {
                let mut v = serde_json::to_value(p)?;
                v["phase"] = phase.into();
                v["seed"] = self.seed.into();
                out.push_str(&serde_json::to_string(&v)?);
                out.push('\n');
            }
        }
        Ok(out)
    }
}

/// Retrieval on the test split, subset probes over every non-empty modality
/// subset, and a nuisance probe per modality.
pub fn evaluate(model: &Model, cfg: &RunConfig, train_set: &SyntheticDataset, test_set: &SyntheticDataset, seed: u64) -> Result<EvalReport> {
    model.check_compatible(cfg)?;
    let ztr = model.embed(train_set)?;
    let zte = model.embed(test_set)?;
    let scores = retrieval_scores(model, &zte, cfg)?;
    let retrieval = eval::retrieval_map(&scores)?;
    let k = retrieval.pool_size;
    let null = eval::simulate_random_map(scores.rows(), k, cfg.null_trials, seed)?;
    let probes = eval::nonempty_subsets(model.num_modalities())
        .iter()
        .map(|s| eval::subset_probe(&ztr, &train_set.labels, &zte, &test_set.labels, s))
        .collect::<Result<Vec<_>>>()?;
    let nuisance = (0..model.num_modalities())
        .filter(|&m| train_set.nuisances[m].cols() > 0)
        .map(|m| eval::nuisance_probe(&ztr[m], &train_set.nuisances[m], &zte[m], &test_set.nuisances[m], m))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        seed,
        retrieval,
        random_baseline: eval::random_baseline_map(k),
        null,
        probes,
        nuisance,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkEntry {
    name: String,
    activations: Vec<Activation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    format: u32,
    seed: u64,
    num_modalities: usize,
    embed_dim: usize,
    networks: Vec<NetworkEntry>,
    tensors: Vec<TensorEntry>,
}

/// Writes `OVAIBCK1`, the header length as a little-endian u64, the JSON
/// header, then every tensor as little-endian f64 in row-major order.
pub fn save_checkpoint(path: &Path, model: &Model, seed: u64) -> Result<()> {
    let mut networks = Vec::new();
    let mut tensors = Vec::new();
    let mut data: Vec<f64> = Vec::new();
    let named = model
        .encoders
        .iter()
        .enumerate()
        .map(|(i, e)| (format!("encoder.{i}"), e))
        .chain(model.projectors.iter().enumerate().map(|(i, p)| (format!("projector.{i}"), p)));
    for (name, net) in named {
        networks.push(NetworkEntry {
            name: name.clone(),
            activations: net.layers().iter().map(|l| l.activation).collect(),
        });
        for (l, layer) in net.layers().iter().enumerate() {
            for (part, t) in [("weight", &layer.weight), ("bias", &layer.bias)] {
                tensors.push(TensorEntry {
                    name: format!("{name}.layer{l}.{part}"),
                    rows: t.rows(),
                    cols: t.cols(),
                    offset: data.len(),
                });
                data.extend_from_slice(t.as_slice());
            }
        }
    }
    let header = CheckpointHeader {
        format: 1,
        seed,
        num_modalities: model.num_modalities(),
        embed_dim: model.embed_dim(),
        networks,
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let mut f = fs::File::create(path)?;
    f.write_all(CHECKPOINT_MAGIC)?;
    f.write_all(&(json.len() as u64).to_le_bytes())?;
    f.write_all(&json)?;
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
    f.write_all(&bytes)?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`]; returns the model and
/// the seed it was trained with.
pub fn load_checkpoint(path: &Path) -> Result<(Model, u64)> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |msg: &str| Error::Checkpoint(msg.to_string());
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing OVAIBCK1 magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..body])?;
    if header.format != 1 {
        return Err(bad("unsupported checkpoint format"));
    }
    let payload = &bytes[body..];
    if payload.len() % 8 != 0 {
        return Err(bad("payload is not a whole number of f64 values"));
    }
    let data: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let mut tensors = header.tensors.iter();
    let mut encoders = Vec::new();
    let mut projectors = Vec::new();
    for net in &header.networks {
        let mut layers = Vec::new();
        for (l, &activation) in net.activations.iter().enumerate() {
            let mut take = |part: &str| -> Result<Matrix> {
                let t = tensors.next().ok_or_else(|| bad("missing tensor"))?;
                if t.name != format!("{}.layer{l}.{part}", net.name) {
                    return Err(Error::Checkpoint(format!("unexpected tensor {}", t.name)));
                }
                let end = t.offset + t.rows * t.cols;
                let slice = data.get(t.offset..end).ok_or_else(|| bad("tensor extends past payload"))?;
                Matrix::new(t.rows, t.cols, slice.to_vec())
            };
            let weight = take("weight")?;
            let bias = take("bias")?;
            layers.push(Layer { weight, bias, activation });
        }
        let params = MlpParams::new(layers)?;
        if net.name.starts_with("encoder.") {
            encoders.push(params);
        } else if net.name.starts_with("projector.") {
            projectors.push(params);
        } else {
            return Err(Error::Checkpoint(format!("unknown network {}", net.name)));
        }
    }
    if encoders.len() != header.num_modalities || encoders.len() < 2 {
        return Err(bad("encoder count does not match header"));
    }
    let model = Model { encoders, projectors };
    if model.embed_dim() != header.embed_dim {
        return Err(bad("embedding width does not match header"));
    }
    Ok((model, header.seed))
}

fn write_lines(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Paths written by [`run_training`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub metrics: PathBuf,
    pub checkpoint: PathBuf,
    pub outcome: TrainOutcome,
}

/// Trains one seed and writes `config.json`, `metrics.jsonl`,
/// `timing.json` and `checkpoint.bin` into `dir`.
pub fn run_training(cfg: &RunConfig, seed: u64, dir: &Path) -> Result<RunArtifacts> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), cfg.to_json()?)?;
    let [train_set, _, _] = prepare_data(cfg)?;
    let outcome = train(cfg, &train_set, seed)?;
    let metrics = dir.join("metrics.jsonl");
    write_lines(&metrics, &outcome.records)?;
    let timing = serde_json::json!({ "seed": seed, "wall_seconds": outcome.wall_seconds, "steps": cfg.train.steps });
    fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing)?)?;
    let checkpoint = dir.join("checkpoint.bin");
    save_checkpoint(&checkpoint, &outcome.model, seed)?;
    Ok(RunArtifacts {
        dir: dir.to_path_buf(),
        metrics,
        checkpoint,
        outcome,
    })
}

/// Evaluates a checkpoint and writes `eval.jsonl` into `dir`.
pub fn run_evaluation(cfg: &RunConfig, checkpoint: &Path, dir: &Path) -> Result<EvalReport> {
    let (model, seed) = load_checkpoint(checkpoint)?;
    model.check_compatible(cfg)?;
    let [train_set, _, test_set] = prepare_data(cfg)?;
    let report = evaluate(&model, cfg, &train_set, &test_set, seed)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("eval.jsonl"), report.to_json_lines()?)?;
    Ok(report)
}

/// Mean wall time in nanoseconds of a single geometric and a single MLP
/// score call at embedding width `d` with `m` modalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorerTiming {
    pub d: usize,
    pub m: usize,
    pub geometric_ns: f64,
    pub mlp_ns: f64,
}

pub fn time_scorers(d: usize, m: usize, reps: usize, seed: u64) -> Result<ScorerTiming> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vec = |rng: &mut ChaCha8Rng| Vector::new((0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
    let z = vec(&mut rng)?;
    let rest = (0..m - 1).map(|_| vec(&mut rng)).collect::<Result<Vec<_>>>()?;
    let params = MlpParams::init(&mut rng, &[(m - 1) * d, d, d], Activation::LeakyRelu { slope: LEAKY_SLOPE })?;
    let reps = reps.max(1);
    let mut sink = 0.0;
    let t = Instant::now();
    for _ in 0..reps {
        sink += losses::projection_score(&z, &rest, crate::linalg::DEFAULT_RIDGE)?;
    }
    let geometric_ns = t.elapsed().as_nanos() as f64 / reps as f64;
    let t = Instant::now();
    for _ in 0..reps {
        sink += losses::mlp_score(&z, &rest, &params)?;
    }
    let mlp_ns = t.elapsed().as_nanos() as f64 / reps as f64;
    std::hint::black_box(sink);
    Ok(ScorerTiming { d, m, geometric_ns, mlp_ns })
}

/// One arm of the ablation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: String,
    pub seed: u64,
    pub map: f64,
    pub mean_nuisance_r2: f64,
    pub final_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub arms: Vec<ArmResult>,
    /// Seeds where the nuisance R^2 with beta = 1 is at most that with beta = 0.
    pub beta_reduces_leakage: Vec<u64>,
    pub beta_majority: bool,
    pub timing: ScorerTiming,
    pub geometric_faster: bool,
}

/// The configurations of the ablation grid: full objective, `beta = 0`, and
/// the learned projector.
pub fn ablation_arms(base: &RunConfig) -> Vec<(String, RunConfig)> {
    let mut full = base.clone();
    full.ablation = AblationFlags::default();
    let beta_zero = RunConfig {
        ablation: AblationFlags {
            beta_zero: true,
            ..full.ablation
        },
        ..full.clone()
    };
    let mlp = RunConfig {
        ablation: AblationFlags {
            mlp_projector: true,
            ..full.ablation
        },
        ..full.clone()
    };
    vec![("full".into(), full), ("beta_zero".into(), beta_zero), ("mlp_projector".into(), mlp)]
}

/// Trains and evaluates every arm for every seed, one thread per seed.
pub fn run_ablation(base: &RunConfig, arms: &[(String, RunConfig)]) -> Result<AblationReport> {
    let [train_set, _, test_set] = prepare_data(base)?;
    let per_seed: Vec<Result<Vec<ArmResult>>> = std::thread::scope(|s| {
        let handles: Vec<_> = base
            .seeds
            .iter()
            .map(|&seed| {
                let (train_set, test_set) = (&train_set, &test_set);
                s.spawn(move || {
                    arms.iter()
                        .map(|(name, cfg)| {
                            let out = train(cfg, train_set, seed)?;
                            let report = evaluate(&out.model, cfg, train_set, test_set, seed)?;
                            Ok(ArmResult {
                                arm: name.clone(),
                                seed,
                                map: report.retrieval.map,
                                mean_nuisance_r2: report.mean_nuisance_r2(),
                                final_total: out.records.last().map_or(f64::NAN, |r| r.metrics["total"]),
                            })
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("ablation worker panicked")).collect()
    });
    let mut results = Vec::new();
    for r in per_seed {
        results.extend(r?);
    }
    let find = |arm: &str, seed: u64| results.iter().find(|r| r.arm == arm && r.seed == seed);
    let beta_reduces_leakage: Vec<u64> = base
        .seeds
        .iter()
        .copied()
        .filter(|&s| match (find("full", s), find("beta_zero", s)) {
            (Some(a), Some(b)) => a.mean_nuisance_r2 <= b.mean_nuisance_r2,
            _ => false,
        })
        .collect();
    let beta_majority = 2 * beta_reduces_leakage.len() > base.seeds.len();
    let timing = time_scorers(512, 3, 200, base.seeds[0])?;
    Ok(AblationReport {
        arms: results,
        beta_reduces_leakage,
        beta_majority,
        geometric_faster: timing.geometric_ns < timing.mlp_ns,
        timing,
    })
}
