//! Small dense classifiers trained from scratch.
//!
//! Parameters live in one flat vector laid out layer by layer as
//! `[W0, b0, W1, b1, ..]`, each `W` row-major with shape `(out, in)`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::container::{read_container, write_container};
use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::rng::{derived_rng, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    Linear,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub kind: ArchKind,
    pub input_dim: usize,
    pub num_classes: usize,
    #[serde(default)]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

fn default_activation() -> Activation {
    Activation::Relu
}

impl ArchSpec {
    pub fn linear(input_dim: usize, num_classes: usize) -> Self {
        Self { kind: ArchKind::Linear, input_dim, num_classes, hidden: vec![], activation: Activation::Relu }
    }

    pub fn mlp(input_dim: usize, hidden: Vec<usize>, num_classes: usize, activation: Activation) -> Self {
        Self { kind: ArchKind::Mlp, input_dim, num_classes, hidden, activation }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidArch(format!("num_classes = {} < 2", self.num_classes)));
        }
        if self.input_dim == 0 {
            return Err(Error::InvalidArch("input_dim = 0".into()));
        }
        match (self.kind, self.hidden.is_empty()) {
            (ArchKind::Linear, false) => Err(Error::InvalidArch("linear model with hidden layers".into())),
            (ArchKind::Mlp, true) => Err(Error::InvalidArch("mlp without hidden layers".into())),
            _ if self.hidden.contains(&0) => Err(Error::InvalidArch("zero-width hidden layer".into())),
            _ => Ok(()),
        }
    }

    /// `(out, in)` per layer.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        dims.push(self.num_classes);
        dims.windows(2).map(|w| (w[1], w[0])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(o, i)| o * i + o).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs_seen: usize,
    pub final_lr: f64,
    pub seed: u64,
    /// Mean training loss of the first and last epoch of the latest run.
    pub first_epoch_loss: Option<f64>,
    pub last_epoch_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: ArchSpec,
    pub params: Vec<f64>,
    /// Initialization seed.
    pub seed: u64,
    pub train_meta: TrainMeta,
}

/// What `input_gradient` differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    LogitOf(usize),
    /// `f_k(x) - max_{j != k} f_j(x)`.
    MarginTo(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CrossEntropy,
    KlToTeacher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_loss")]
    pub loss: Loss,
    #[serde(default = "default_milestones")]
    pub milestones: Vec<f64>,
    #[serde(default = "default_decay")]
    pub decay_factor: f64,
}

fn default_batch() -> usize {
    64
}
fn default_momentum() -> f64 {
    0.9
}
fn default_loss() -> Loss {
    Loss::CrossEntropy
}
fn default_milestones() -> Vec<f64> {
    vec![0.3, 0.6, 0.8]
}
fn default_decay() -> f64 {
    0.2
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr0: 0.05,
            batch_size: default_batch(),
            momentum: default_momentum(),
            seed: 0,
            loss: default_loss(),
            milestones: default_milestones(),
            decay_factor: default_decay(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidParameter("epochs and batch_size must be positive".into()));
        }
        if !(self.lr0 > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter(format!("lr0 {} / momentum {}", self.lr0, self.momentum)));
        }
        let increasing = self.milestones.windows(2).all(|w| w[0] < w[1]);
        if !increasing || self.milestones.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::InvalidParameter(format!("milestones {:?}", self.milestones)));
        }
        Ok(())
    }

    /// First epoch (0-based) at which each milestone's decay is in force.
    pub fn milestone_epochs(&self) -> Vec<usize> {
        self.milestones
            .iter()
            .map(|f| (f * self.epochs as f64 - 1e-9).ceil() as usize)
            .collect()
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.milestone_epochs().iter().filter(|&&m| epoch >= m).count();
        self.lr0 * self.decay_factor.powi(passed as i32)
    }
}

/// Activations kept for backpropagation: `inputs[l]` feeds layer `l`.
struct Cache {
    inputs: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

impl Model {
    /// Weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn init(arch: ArchSpec, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = derived_rng(seed, stream::INIT, 0);
        let mut params = Vec::with_capacity(arch.param_count());
        for (out, inp) in arch.layer_shapes() {
            let bound = 1.0 / (inp as f64).sqrt();
            for _ in 0..out * inp + out {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Ok(Self { arch, params, seed, train_meta: TrainMeta { seed, ..TrainMeta::default() } })
    }

    pub fn zeros(arch: ArchSpec) -> Result<Self> {
        arch.validate()?;
        let params = vec![0.0; arch.param_count()];
        Ok(Self { arch, params, seed: 0, train_meta: TrainMeta::default() })
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.arch.num_classes
    }

    fn layers(&self) -> Vec<(ArrayView2<'_, f64>, ArrayView1<'_, f64>)> {
        let mut off = 0;
        self.arch
            .layer_shapes()
            .into_iter()
            .map(|(o, i)| {
                let w = ArrayView2::from_shape((o, i), &self.params[off..off + o * i]).expect("layer shape");
                off += o * i;
                let b = ArrayView1::from(&self.params[off..off + o]);
                off += o;
                (w, b)
            })
            .collect()
    }

    fn activate(&self, z: &mut Array2<f64>) {
        match self.arch.activation {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.arch.input_dim {
            return Err(Error::DimensionMismatch { expected: self.arch.input_dim, got });
        }
        Ok(())
    }

    fn forward_cache(&self, x: ArrayView2<'_, f64>) -> Cache {
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut inputs = Vec::with_capacity(layers.len());
        let mut a = x.to_owned();
        for (l, (w, b)) in layers.iter().enumerate() {
            let mut z = a.dot(&w.t());
            z += b;
            inputs.push(a);
            if l < last {
                self.activate(&mut z);
            }
            a = z;
        }
        Cache { inputs, logits: a }
    }

    /// Logits for a batch of row inputs.
    pub fn logits(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_dim(x.ncols())?;
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut a = x.to_owned();
        for (l, (w, b)) in layers.iter().enumerate() {
            let mut z = a.dot(&w.t());
            z += b;
            if l < last {
                self.activate(&mut z);
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        let layers = self.layers();
        let last = layers.len() - 1;
        let mut a = Array1::from(x.to_vec());
        for (l, (w, b)) in layers.iter().enumerate() {
            let mut z = w.dot(&a) + b;
            if l < last {
                match self.arch.activation {
                    Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
                    Activation::Tanh => z.mapv_inplace(f64::tanh),
                }
            }
            a = z;
        }
        Ok(a.to_vec())
    }

    pub fn forward_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let x = rows_to_array(xs, self.arch.input_dim)?;
        Ok(self.logits(x.view())?.outer_iter().map(|r| r.to_vec()).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    pub fn predict_batch(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.outer_iter().map(|r| argmax(r.as_slice().expect("contiguous"))).collect())
    }

    /// Backpropagates `grad_logits` (batch × classes). Returns the parameter
    /// gradient (summed over the batch) and the per-row input gradient.
    fn backward(&self, cache: &Cache, grad_logits: Array2<f64>, want_params: bool) -> (Vec<f64>, Array2<f64>) {
        let layers = self.layers();
        let shapes = self.arch.layer_shapes();
        let mut pgrad = if want_params { vec![0.0; self.params.len()] } else { Vec::new() };
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut off = 0;
        for (o, i) in &shapes {
            offsets.push(off);
            off += o * i + o;
        }
        let mut g = grad_logits;
        for l in (0..layers.len()).rev() {
            let (w, _) = layers[l];
            let a = &cache.inputs[l];
            if want_params {
                let (o, i) = shapes[l];
                let dw = g.t().dot(a);
                let db = g.sum_axis(Axis(0));
                let start = offsets[l];
                pgrad[start..start + o * i].copy_from_slice(dw.as_slice().expect("standard layout"));
                pgrad[start + o * i..start + o * i + o].copy_from_slice(db.as_slice().expect("contiguous"));
            }
            let mut gin = g.dot(&w);
            if l > 0 {
                // `a` is the activation output of layer l-1
                match self.arch.activation {
                    Activation::Relu => gin.zip_mut_with(a, |gv, &av| {
                        if av <= 0.0 {
                            *gv = 0.0
                        }
                    }),
                    Activation::Tanh => gin.zip_mut_with(a, |gv, &av| *gv *= 1.0 - av * av),
                }
            }
            g = gin;
        }
        (pgrad, g)
    }

    /// Row-wise vector-Jacobian products `v_i^T d logits(x_i) / d x_i`.
    pub fn input_vjp(&self, x: ArrayView2<'_, f64>, v: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_dim(x.ncols())?;
        if v.dim() != (x.nrows(), self.arch.num_classes) {
            return Err(Error::SizeMismatch(format!("cotangent shape {:?}", v.dim())));
        }
        let cache = self.forward_cache(x);
        Ok(self.backward(&cache, v.to_owned(), false).1)
    }

    /// Input gradient of an objective, plus the logits at `x`.
    pub fn input_gradient(&self, x: &[f64], objective: Objective) -> Result<Vec<f64>> {
        let x2 = ArrayView2::from_shape((1, x.len()), x).expect("row");
        self.check_dim(x.len())?;
        let cache = self.forward_cache(x2);
        let logits = cache.logits.row(0).to_vec();
        let v = objective_cotangent(&logits, objective)?;
        let v = Array2::from_shape_vec((1, v.len()), v).expect("row");
        Ok(self.backward(&cache, v, false).1.row(0).to_vec())
    }

    /// Mean loss over the batch and its parameter gradient. `targets` are
    /// probability rows (one-hot for hard labels).
    pub fn loss_and_grad(&self, x: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>, loss: Loss) -> Result<(f64, Vec<f64>)> {
        self.check_dim(x.ncols())?;
        if targets.dim() != (x.nrows(), self.arch.num_classes) {
            return Err(Error::SizeMismatch(format!("target shape {:?}", targets.dim())));
        }
        let n = x.nrows() as f64;
        let cache = self.forward_cache(x);
        let mut g = log_softmax_rows(&cache.logits);
        let mut total = 0.0;
        for (lp, t) in g.outer_iter().zip(targets.outer_iter()) {
            for (&l, &tv) in lp.iter().zip(t.iter()) {
                if tv > 0.0 {
                    total -= tv * l;
                    if loss == Loss::KlToTeacher {
                        total += tv * tv.ln();
                    }
                }
            }
        }
        // d/dz = softmax - target
        g.mapv_inplace(f64::exp);
        g -= &targets;
        g /= n;
        let (pgrad, _) = self.backward(&cache, g, true);
        Ok((total / n, pgrad))
    }

    pub fn loss(&self, x: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>, loss: Loss) -> Result<f64> {
        Ok(self.loss_and_grad(x, targets, loss)?.0)
    }

    /// Serialized checkpoint bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = CheckpointHeader {
            format: CKPT_FORMAT.into(),
            arch: self.arch.clone(),
            seed: self.seed,
            train_meta: self.train_meta.clone(),
            param_count: self.params.len(),
        };
        let mut buf = Vec::new();
        write_container(&mut buf, &header, &self.params)?;
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, params): (CheckpointHeader, Vec<f64>) = read_container(bytes)?;
        if h.format != CKPT_FORMAT {
            return Err(Error::Format(format!("not a model checkpoint: {}", h.format)));
        }
        h.arch.validate()?;
        if params.len() != h.arch.param_count() || h.param_count != params.len() {
            return Err(Error::Format(format!(
                "arch needs {} parameters, checkpoint has {}",
                h.arch.param_count(),
                params.len()
            )));
        }
        Ok(Self { arch: h.arch, params, seed: h.seed, train_meta: h.train_meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut w = BufWriter::new(File::create(path)?);
        std::io::Write::write_all(&mut w, &bytes)?;
        std::io::Write::flush(&mut w)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::io::Read::read_to_end(&mut BufReader::new(File::open(path)?), &mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the checkpoint bytes, hex encoded.
    pub fn checksum(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }
}

const CKPT_FORMAT: &str = "dinfer-model-v1";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    arch: ArchSpec,
    seed: u64,
    train_meta: TrainMeta,
    param_count: usize,
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Cotangent on the logits whose VJP is the objective's input gradient.
pub fn objective_cotangent(logits: &[f64], objective: Objective) -> Result<Vec<f64>> {
    let k = logits.len();
    let class = match objective {
        Objective::LogitOf(c) | Objective::MarginTo(c) => c,
    };
    if class >= k {
        return Err(Error::InvalidClass { class, num_classes: k });
    }
    let mut v = vec![0.0; k];
    v[class] = 1.0;
    if let Objective::MarginTo(_) = objective {
        let rival = (0..k)
            .filter(|&j| j != class)
            .fold(None, |best: Option<usize>, j| match best {
                Some(b) if logits[b] >= logits[j] => Some(b),
                _ => Some(j),
            })
            .expect("at least two classes");
        v[rival] = -1.0;
    }
    Ok(v)
}

pub fn log_softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.outer_iter_mut() {
        let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    log_softmax_rows(z).mapv(f64::exp)
}

pub fn rows_to_array(xs: &[Vec<f64>], dim: usize) -> Result<Array2<f64>> {
    let mut flat = Vec::with_capacity(xs.len() * dim);
    for x in xs {
        if x.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
        }
        flat.extend_from_slice(x);
    }
    Ok(Array2::from_shape_vec((xs.len(), dim), flat).expect("shape checked"))
}

pub fn one_hot(labels: &[usize], k: usize) -> Array2<f64> {
    let mut t = Array2::zeros((labels.len(), k));
    for (i, &y) in labels.iter().enumerate() {
        t[[i, y]] = 1.0;
    }
    t
}

/// Minibatch SGD with momentum and step decay. Cross-entropy uses the set's
/// labels; KL-to-teacher uses `teacher_logits` (one row per example) at
/// temperature 1.
pub fn train_sgd(
    model: &Model,
    data: &LabeledSet,
    cfg: &TrainConfig,
    teacher_logits: Option<&[Vec<f64>]>,
) -> Result<Model> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let k = model.num_classes();
    if data.num_classes > k {
        return Err(Error::InvalidClass { class: data.num_classes - 1, num_classes: k });
    }
    let x = rows_to_array(&data.inputs, model.input_dim())?;
    let targets = match (cfg.loss, teacher_logits) {
        (Loss::CrossEntropy, None) => one_hot(&data.labels, k),
        (Loss::KlToTeacher, Some(t)) => {
            if t.len() != data.len() {
                return Err(Error::SizeMismatch(format!("{} teacher rows for {} examples", t.len(), data.len())));
            }
            softmax_rows(&rows_to_array(t, k)?)
        }
        (Loss::KlToTeacher, None) => return Err(Error::MissingData("teacher logits for kl_to_teacher".into())),
        (Loss::CrossEntropy, Some(_)) => {
            return Err(Error::InvalidParameter("teacher logits given with cross_entropy loss".into()))
        }
    };
    let mut out = model.clone();
    let mut velocity = vec![0.0; out.params.len()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let (mut first, mut last) = (None, None);
    let mut lr = cfg.lr0;
    for epoch in 0..cfg.epochs {
        lr = cfg.lr_at(epoch);
        let mut rng = derived_rng(cfg.seed, stream::SHUFFLE, epoch as u64);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let tb = targets.select(Axis(0), batch);
            let (l, g) = out.loss_and_grad(xb.view(), tb.view(), cfg.loss)?;
            if !l.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            epoch_loss += l * batch.len() as f64;
            for ((p, v), gi) in out.params.iter_mut().zip(&mut velocity).zip(&g) {
                *v = cfg.momentum * *v + gi;
                *p -= lr * *v;
            }
        }
        let mean_loss = epoch_loss / data.len() as f64;
        if epoch == 0 {
            first = Some(mean_loss);
        }
        last = Some(mean_loss);
    }
    out.train_meta = TrainMeta {
        epochs_seen: model.train_meta.epochs_seen + cfg.epochs,
        final_lr: lr,
        seed: cfg.seed,
        first_epoch_loss: first,
        last_epoch_loss: last,
    };
    Ok(out)
}

pub fn evaluate_accuracy(model: &Model, data: &LabeledSet) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let x = rows_to_array(&data.inputs, model.input_dim())?;
    let mut correct = 0usize;
    for start in (0..data.len()).step_by(1024) {
        let end = (start + 1024).min(data.len());
        let pred = model.predict_batch(x.slice(s![start..end, ..]))?;
        correct += pred.iter().zip(&data.labels[start..end]).filter(|(p, y)| p == y).count();
    }
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{BlobTask, SplitTag};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn param_counts() {
        assert_eq!(ArchSpec::linear(4, 3).param_count(), 15);
        let m = Model::init(ArchSpec::mlp(4, vec![8], 3, Activation::Relu), 1).unwrap();
        assert_eq!(m.params.len(), 67);
        assert!(Model::init(ArchSpec::linear(4, 1), 0).is_err());
        assert!(Model::init(ArchSpec::mlp(4, vec![], 3, Activation::Relu), 0).is_err());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let arch = ArchSpec::mlp(16, vec![8], 3, Activation::Tanh);
        let a = Model::init(arch.clone(), 5).unwrap();
        assert_eq!(a, Model::init(arch.clone(), 5).unwrap());
        assert_ne!(a.params, Model::init(arch, 6).unwrap().params);
        assert!(a.params[..16 * 8].iter().all(|v| v.abs() <= 0.25));
    }

    #[test]
    fn linear_forward_is_affine_map() {
        let mut m = Model::zeros(ArchSpec::linear(2, 3)).unwrap();
        assert_eq!(m.forward(&[0.3, -1.0]).unwrap(), vec![0.0; 3]);
        m.params = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 0.1, 0.2, 0.3];
        let got = m.forward(&[1.0, -1.0]).unwrap();
        let want = [1.0 - 2.0 + 0.1, 3.0 - 4.0 + 0.2, 5.0 - 6.0 + 0.3];
        for (g, w) in got.iter().zip(want) {
            assert_abs_diff_eq!(*g, w, epsilon = 1e-12);
        }
        assert!(m.forward(&[1.0]).is_err());
    }

    #[test]
    fn batched_forward_matches_single() {
        let m = Model::init(ArchSpec::mlp(5, vec![7, 4], 3, Activation::Relu), 2).unwrap();
        let xs: Vec<Vec<f64>> = (0..6).map(|i| (0..5).map(|j| ((i * 5 + j) as f64).sin()).collect()).collect();
        let batch = m.forward_batch(&xs).unwrap();
        for (x, row) in xs.iter().zip(&batch) {
            let single = m.forward(x).unwrap();
            for (a, b) in single.iter().zip(row) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn linear_logit_gradient_is_weight_row() {
        let m = Model::init(ArchSpec::linear(3, 4), 9).unwrap();
        let g = m.input_gradient(&[0.2, 0.5, 0.9], Objective::LogitOf(2)).unwrap();
        assert_eq!(g, m.params[6..9].to_vec());
        assert!(m.input_gradient(&[0.2, 0.5, 0.9], Objective::LogitOf(4)).is_err());
    }

    #[test]
    fn schedule_matches_milestones() {
        let cfg = TrainConfig { epochs: 100, lr0: 0.1, ..TrainConfig::default() };
        assert_eq!(cfg.milestone_epochs(), vec![30, 60, 80]);
        assert_abs_diff_eq!(cfg.lr_at(29), 0.1);
        assert_abs_diff_eq!(cfg.lr_at(30), 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(cfg.lr_at(85), 8e-4, epsilon = 1e-15);
    }

    #[test]
    fn kl_is_zero_at_teacher_and_ce_nonnegative() {
        let m = Model::init(ArchSpec::linear(2, 3), 3).unwrap();
        let x = array![[0.1, 0.7], [0.4, 0.2]];
        let logits = m.logits(x.view()).unwrap();
        let t = softmax_rows(&logits);
        assert_abs_diff_eq!(m.loss(x.view(), t.view(), Loss::KlToTeacher).unwrap(), 0.0, epsilon = 1e-12);
        assert!(m.loss(x.view(), one_hot(&[0, 2], 3).view(), Loss::CrossEntropy).unwrap() >= 0.0);
    }

    #[test]
    fn training_requires_matching_teacher() {
        let data = BlobTask { dim: 4, signal_dims: 2, num_classes: 3, ..BlobTask::default() }.draw(0, 10, SplitTag::Synthetic);
        let m = Model::init(ArchSpec::linear(4, 3), 0).unwrap();
        let kl = TrainConfig { epochs: 1, loss: Loss::KlToTeacher, ..TrainConfig::default() };
        assert!(matches!(train_sgd(&m, &data, &kl, None), Err(Error::MissingData(_))));
        assert!(train_sgd(&m, &data, &kl, Some(&vec![vec![0.0; 3]; 9])).is_err());
    }

    #[test]
    fn training_is_deterministic_and_fits_separable_blobs() {
        let task = BlobTask { num_classes: 2, dim: 6, signal_dims: 6, spread: 0.4, noise: 0.05, seed: 3 };
        let data = task.draw(0, 200, SplitTag::PrivateTrain);
        let m = Model::init(ArchSpec::mlp(6, vec![16], 2, Activation::Relu), 1).unwrap();
        let cfg = TrainConfig { epochs: 30, lr0: 0.05, seed: 4, ..TrainConfig::default() };
        let a = train_sgd(&m, &data, &cfg, None).unwrap();
        let b = train_sgd(&m, &data, &cfg, None).unwrap();
        assert_eq!(a.params, b.params);
        assert!(evaluate_accuracy(&a, &data).unwrap() >= 0.99);
        assert!(a.train_meta.last_epoch_loss.unwrap() <= a.train_meta.first_epoch_loss.unwrap());
        assert_eq!(a.train_meta.epochs_seen, 30);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = Model::init(ArchSpec::mlp(3, vec![4], 2, Activation::Tanh), 8).unwrap();
        let bytes = m.to_bytes().unwrap();
        assert_eq!(Model::from_bytes(&bytes).unwrap(), m);
        assert_eq!(m.checksum().unwrap().len(), 64);
        let mut bad = bytes.clone();
        bad.truncate(bytes.len() - 8);
        assert!(Model::from_bytes(&bad).is_err());
    }

    #[test]
    fn accuracy_edge_cases() {
        let m = Model::zeros(ArchSpec::linear(2, 3)).unwrap();
        let empty = LabeledSet::from_parts(vec![], vec![], 3, SplitTag::Synthetic).unwrap();
        assert!(evaluate_accuracy(&m, &empty).is_err());
        // all-zero logits predict class 0
        let set = LabeledSet::from_parts(vec![vec![0.1, 0.2]; 5], vec![0; 5], 3, SplitTag::Synthetic).unwrap();
        assert_eq!(evaluate_accuracy(&m, &set).unwrap(), 1.0);
    }
}
