//! Distance-feature embeddings of individual examples: how far a point sits
//! from the decision boundaries of a model.
//!
//! Blind Walk (label-only): for each noise family and repeat, draw one random
//! direction `δ` and query `x + kδ` for `k = 1, 2, ..` until the label differs
//! from `y`. The traversed distance, in the family's matched norm, is the
//! feature. MinGD (white-box): for each target class and norm, take fixed-size
//! steepest-ascent steps on the target margin `f_t - max_{j != t} f_j` until
//! the iterate is classified as `t`.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::model::{argmax, rows_to_array, Objective};
use crate::oracle::{GradientOracle, LabelOracle};
use crate::rng::{derive_seed, rng_from, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMode {
    MinGd,
    BlindWalk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let d = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            Norm::L1 => d.sum(),
            Norm::L2 => d.map(|v| v * v).sum::<f64>().sqrt(),
            Norm::Linf => d.fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Uniform,
    Gaussian,
    Laplace,
}

impl NoiseFamily {
    pub fn matched_norm(self) -> Norm {
        match self {
            NoiseFamily::Uniform => Norm::Linf,
            NoiseFamily::Gaussian => Norm::L2,
            NoiseFamily::Laplace => Norm::L1,
        }
    }

    /// One coordinate: uniform on `[-s, s]`, normal with sd `s`, or Laplace
    /// with scale `s`.
    pub fn sample(self, rng: &mut crate::rng::Rng, s: f64) -> f64 {
        match self {
            NoiseFamily::Uniform => rng.random_range(-s..=s),
            NoiseFamily::Gaussian => s * rng.sample::<f64, _>(StandardNormal),
            NoiseFamily::Laplace => s * (rng.sample::<f64, _>(Exp1) - rng.sample::<f64, _>(Exp1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetClasses {
    All,
    TopK(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSizes {
    pub linf: f64,
    pub l2: f64,
    pub l1: f64,
}

impl Default for StepSizes {
    fn default() -> Self {
        Self { linf: 0.001, l2: 0.01, l1: 0.1 }
    }
}

impl StepSizes {
    pub fn get(&self, norm: Norm) -> f64 {
        match norm {
            Norm::Linf => self.linf,
            Norm::L2 => self.l2,
            Norm::L1 => self.l1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    pub mode: EmbedMode,
    pub norms: Vec<Norm>,
    pub step_sizes: StepSizes,
    pub max_steps_mingd: usize,
    pub max_steps_blindwalk: usize,
    pub repeats_per_family: usize,
    pub noise_families: Vec<NoiseFamily>,
    /// Per-coordinate scale of a Blind Walk step.
    pub noise_scale: f64,
    /// `None` means `max_steps_blindwalk * noise_scale * sqrt(dim)`.
    pub distance_cap: Option<f64>,
    pub target_classes: TargetClasses,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            mode: EmbedMode::BlindWalk,
            norms: vec![Norm::Linf, Norm::L2, Norm::L1],
            step_sizes: StepSizes::default(),
            max_steps_mingd: 500,
            max_steps_blindwalk: 50,
            repeats_per_family: 10,
            noise_families: vec![NoiseFamily::Uniform, NoiseFamily::Gaussian, NoiseFamily::Laplace],
            noise_scale: 0.05,
            distance_cap: None,
            target_classes: TargetClasses::All,
        }
    }
}

impl EmbeddingConfig {
    pub fn blind_walk() -> Self {
        Self::default()
    }

    pub fn min_gd() -> Self {
        Self { mode: EmbedMode::MinGd, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        match self.mode {
            EmbedMode::BlindWalk if self.noise_families.is_empty() || self.repeats_per_family == 0 => {
                bad("blind walk needs at least one family and repeat")
            }
            EmbedMode::MinGd if self.norms.is_empty() => bad("min_gd needs at least one norm"),
            _ if !(self.noise_scale > 0.0) => bad("noise_scale must be positive"),
            _ if self.distance_cap.is_some_and(|c| !(c > 0.0)) => bad("distance_cap must be positive"),
            _ if self.max_steps_blindwalk == 0 || self.max_steps_mingd == 0 => bad("step caps must be positive"),
            _ if matches!(self.target_classes, TargetClasses::TopK(0)) => bad("top_k must be positive"),
            _ => Ok(()),
        }
    }

    pub fn feature_len(&self, num_classes: usize) -> usize {
        match self.mode {
            EmbedMode::MinGd => num_classes * self.norms.len(),
            EmbedMode::BlindWalk => self.noise_families.len() * self.repeats_per_family,
        }
    }

    pub fn cap(&self, dim: usize) -> f64 {
        self.distance_cap
            .unwrap_or(self.max_steps_blindwalk as f64 * self.noise_scale * (dim as f64).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Private,
    Public,
}

impl Membership {
    pub fn sign(self) -> i8 {
        match self {
            Membership::Private => -1,
            Membership::Public => 1,
        }
    }

    pub fn from_sign(s: i64) -> Result<Self> {
        match s {
            -1 => Ok(Membership::Private),
            1 => Ok(Membership::Public),
            _ => Err(Error::Format(format!("membership must be -1 or 1, got {s}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub features: Vec<f64>,
    pub membership: Membership,
    pub source_index: u64,
    /// Set when a non-finite gradient forced a capped feature.
    pub flagged: bool,
}

/// Result of one walk: the step at which the label changed, and the distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkOutcome {
    pub steps: Option<usize>,
    pub distance: f64,
}

struct Walk {
    point: usize,
    delta: Vec<f64>,
    norm: Norm,
}

/// Steps every walk in lock-step so each round is one batched label query.
fn run_walks<O: LabelOracle + ?Sized>(
    oracle: &O,
    xs: &[Vec<f64>],
    ys: &[usize],
    walks: &[Walk],
    max_steps: usize,
    cap: f64,
) -> Result<Vec<WalkOutcome>> {
    let mut out = vec![WalkOutcome { steps: None, distance: cap }; walks.len()];
    let mut active: Vec<usize> = (0..walks.len()).collect();
    for k in 1..=max_steps {
        if active.is_empty() {
            break;
        }
        let probes: Vec<Vec<f64>> = active
            .iter()
            .map(|&w| {
                let walk = &walks[w];
                xs[walk.point]
                    .iter()
                    .zip(&walk.delta)
                    .map(|(x, d)| (x + k as f64 * d).clamp(0.0, 1.0))
                    .collect()
            })
            .collect();
        let labels = oracle.labels(&probes)?;
        let mut still = Vec::with_capacity(active.len());
        for ((&w, probe), label) in active.iter().zip(&probes).zip(labels) {
            let walk = &walks[w];
            if label != ys[walk.point] {
                let d = walk.norm.distance(&xs[walk.point], probe);
                out[w] = WalkOutcome { steps: Some(k), distance: d.min(cap) };
            } else {
                still.push(w);
            }
        }
        active = still;
    }
    Ok(out)
}

/// A single walk along a fixed direction.
pub fn walk_fixed_direction<O: LabelOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    y: usize,
    delta: &[f64],
    norm: Norm,
    max_steps: usize,
    cap: f64,
) -> Result<WalkOutcome> {
    let walk = Walk { point: 0, delta: delta.to_vec(), norm };
    Ok(run_walks(oracle, &[x.to_vec()], &[y], &[walk], max_steps, cap)?[0])
}

fn blind_walk_directions(cfg: &EmbeddingConfig, dim: usize, point: usize, seed: u64) -> Vec<Walk> {
    let mut rng = rng_from(seed);
    let mut walks = Vec::with_capacity(cfg.feature_len(0));
    for &family in &cfg.noise_families {
        for _ in 0..cfg.repeats_per_family {
            let delta = (0..dim).map(|_| family.sample(&mut rng, cfg.noise_scale)).collect();
            walks.push(Walk { point, delta, norm: family.matched_norm() });
        }
    }
    walks
}

/// Blind Walk features for several points at once; `seeds[i]` fixes the
/// directions of point `i`.
pub fn blind_walk_batch<O: LabelOracle + ?Sized>(
    oracle: &O,
    xs: &[Vec<f64>],
    ys: &[usize],
    cfg: &EmbeddingConfig,
    seeds: &[u64],
) -> Result<Vec<Vec<f64>>> {
    if cfg.mode != EmbedMode::BlindWalk {
        return Err(Error::InvalidParameter("blind walk called with mode min_gd".into()));
    }
    cfg.validate()?;
    let dim = oracle.input_dim();
    if let Some(x) = xs.iter().find(|x| x.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
    }
    let walks: Vec<Walk> = seeds
        .iter()
        .enumerate()
        .flat_map(|(i, &s)| blind_walk_directions(cfg, dim, i, s))
        .collect();
    let cap = cfg.cap(dim);
    let outcomes = run_walks(oracle, xs, ys, &walks, cfg.max_steps_blindwalk, cap)?;
    let f = cfg.feature_len(0);
    Ok(outcomes.chunks(f).map(|c| c.iter().map(|o| o.distance).collect()).collect())
}

pub fn blind_walk_point<O: LabelOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    y: usize,
    cfg: &EmbeddingConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(blind_walk_batch(oracle, &[x.to_vec()], &[y], cfg, &[seed])?.remove(0))
}

/// Features of one point plus whether any of them was forced by a
/// non-finite gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct MinGdFeatures {
    pub features: Vec<f64>,
    pub flagged: bool,
}

struct Descent {
    point: usize,
    target: usize,
    norm: Norm,
    slot: usize,
}

fn step(x: &mut [f64], g: &[f64], norm: Norm, alpha: f64) -> bool {
    let before = x.to_vec();
    match norm {
        Norm::Linf => {
            for (xi, gi) in x.iter_mut().zip(g) {
                *xi += alpha * gi.signum() * f64::from(u8::from(*gi != 0.0));
            }
        }
        Norm::L2 => {
            let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 {
                return false;
            }
            for (xi, gi) in x.iter_mut().zip(g) {
                *xi += alpha * gi / n;
            }
        }
        Norm::L1 => {
            // steepest single coordinate among those the box lets move
            let mut best: Option<usize> = None;
            for (i, (&xi, &gi)) in x.iter().zip(g).enumerate() {
                let room = (gi > 0.0 && xi < 1.0) || (gi < 0.0 && xi > 0.0);
                if room && best.is_none_or(|b| gi.abs() > g[b].abs()) {
                    best = Some(i);
                }
            }
            match best {
                Some(i) => x[i] += alpha * g[i].signum(),
                None => return false,
            }
        }
    }
    for xi in x.iter_mut() {
        *xi = xi.clamp(0.0, 1.0);
    }
    x != before.as_slice()
}

/// MinGD features for several points at once. Feature `c * |norms| + n` is
/// the distance to class `c` under norm `n`; the true class gets 0.
pub fn min_gd_batch<O: GradientOracle + ?Sized>(
    oracle: &O,
    xs: &[Vec<f64>],
    ys: &[usize],
    cfg: &EmbeddingConfig,
) -> Result<Vec<MinGdFeatures>> {
    if cfg.mode != EmbedMode::MinGd {
        return Err(Error::InvalidParameter("min_gd called with mode blind_walk".into()));
    }
    cfg.validate()?;
    let dim = oracle.input_dim();
    let k = oracle.num_classes();
    let nn = cfg.norms.len();
    let cap = cfg.cap(dim);
    if let Some(&bad) = ys.iter().find(|&&y| y >= k) {
        return Err(Error::InvalidClass { class: bad, num_classes: k });
    }
    let mut out: Vec<MinGdFeatures> = ys
        .iter()
        .map(|&y| {
            let mut features = vec![cap; k * nn];
            features[y * nn..(y + 1) * nn].iter_mut().for_each(|f| *f = 0.0);
            MinGdFeatures { features, flagged: false }
        })
        .collect();
    if xs.is_empty() {
        return Ok(out);
    }

    let targets: Vec<Vec<usize>> = match cfg.target_classes {
        TargetClasses::All => ys.iter().map(|&y| (0..k).filter(|&c| c != y).collect()).collect(),
        TargetClasses::TopK(top) => {
            let logits = oracle.logits_batch(xs)?;
            logits
                .iter()
                .zip(ys)
                .map(|(l, &y)| {
                    let mut order: Vec<usize> = (0..k).filter(|&c| c != y).collect();
                    order.sort_by(|&a, &b| l[b].total_cmp(&l[a]).then(a.cmp(&b)));
                    order.truncate(top);
                    order
                })
                .collect()
        }
    };
    let mut descents = Vec::new();
    let mut iterates: Vec<Vec<f64>> = Vec::new();
    for (p, ts) in targets.iter().enumerate() {
        for &t in ts {
            for (n, &norm) in cfg.norms.iter().enumerate() {
                descents.push(Descent { point: p, target: t, norm, slot: t * nn + n });
                iterates.push(xs[p].clone());
            }
        }
    }
    let mut active: Vec<usize> = (0..descents.len()).collect();
    for s in 0..=cfg.max_steps_mingd {
        if active.is_empty() {
            break;
        }
        let rows: Vec<Vec<f64>> = active.iter().map(|&a| iterates[a].clone()).collect();
        let x: Array2<f64> = rows_to_array(&rows, dim)?;
        let objectives: Vec<Objective> = active.iter().map(|&a| Objective::MarginTo(descents[a].target)).collect();
        let (logits, grads) = oracle.objective_gradients(x.view(), &objectives)?;
        let mut still = Vec::with_capacity(active.len());
        for (r, &a) in active.iter().enumerate() {
            let d = &descents[a];
            let pred = argmax(logits.row(r).as_slice().expect("contiguous"));
            if pred == d.target {
                let dist = d.norm.distance(&xs[d.point], &iterates[a]);
                out[d.point].features[d.slot] = dist.min(cap);
                continue;
            }
            if s == cfg.max_steps_mingd {
                continue;
            }
            let g = grads.row(r);
            let g = g.as_slice().expect("contiguous");
            if g.iter().any(|v| !v.is_finite()) {
                out[d.point].flagged = true;
                continue;
            }
            if step(&mut iterates[a], g, d.norm, cfg.step_sizes.get(d.norm)) {
                still.push(a);
            }
        }
        active = still;
    }
    Ok(out)
}

pub fn min_gd_point<O: GradientOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    y: usize,
    cfg: &EmbeddingConfig,
) -> Result<MinGdFeatures> {
    Ok(min_gd_batch(oracle, &[x.to_vec()], &[y], cfg)?.remove(0))
}

/// Per-point seed; keyed by the example id so results do not depend on order.
pub fn point_seed(seed: u64, source_index: u64) -> u64 {
    derive_seed(seed, stream::EMBED_POINT, source_index)
}

const CHUNK: usize = 64;

/// Label-only embedding of a whole set (Blind Walk).
pub fn embed_dataset_blind<O: LabelOracle + ?Sized>(
    oracle: &O,
    points: &LabeledSet,
    membership: Membership,
    cfg: &EmbeddingConfig,
    seed: u64,
) -> Result<Vec<Embedding>> {
    let idx: Vec<usize> = (0..points.len()).collect();
    let chunks: Vec<Vec<Vec<f64>>> = idx
        .par_chunks(CHUNK)
        .map(|c| {
            let xs: Vec<Vec<f64>> = c.iter().map(|&i| points.inputs[i].clone()).collect();
            let ys: Vec<usize> = c.iter().map(|&i| points.labels[i]).collect();
            let seeds: Vec<u64> = c.iter().map(|&i| point_seed(seed, points.ids[i])).collect();
            blind_walk_batch(oracle, &xs, &ys, cfg, &seeds)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();
    Ok(chunks
        .into_iter()
        .flatten()
        .zip(&points.ids)
        .map(|(features, &id)| Embedding { features, membership, source_index: id, flagged: false })
        .collect())
}

/// White-box embedding of a whole set (MinGD).
pub fn embed_dataset_mingd<O: GradientOracle + ?Sized>(
    oracle: &O,
    points: &LabeledSet,
    membership: Membership,
    cfg: &EmbeddingConfig,
) -> Result<Vec<Embedding>> {
    let idx: Vec<usize> = (0..points.len()).collect();
    let chunks = idx
        .par_chunks(CHUNK)
        .map(|c| {
            let xs: Vec<Vec<f64>> = c.iter().map(|&i| points.inputs[i].clone()).collect();
            let ys: Vec<usize> = c.iter().map(|&i| points.labels[i]).collect();
            min_gd_batch(oracle, &xs, &ys, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks
        .into_iter()
        .flatten()
        .zip(&points.ids)
        .map(|(f, &id)| Embedding { features: f.features, membership, source_index: id, flagged: f.flagged })
        .collect())
}

/// Dispatches on `cfg.mode`. MinGD needs `gradient`; Blind Walk uses `labels`.
pub fn embed_dataset(
    labels: &dyn LabelOracle,
    gradient: Option<&dyn GradientOracle>,
    points: &LabeledSet,
    membership: Membership,
    cfg: &EmbeddingConfig,
    seed: u64,
) -> Result<Vec<Embedding>> {
    match cfg.mode {
        EmbedMode::BlindWalk => embed_dataset_blind(labels, points, membership, cfg, seed),
        EmbedMode::MinGd => {
            let g = gradient.ok_or_else(|| Error::InvalidParameter("min_gd needs white-box access".into()))?;
            embed_dataset_mingd(g, points, membership, cfg)
        }
    }
}

/// Sidecar path for an embedding CSV: same stem, `.json` extension.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// CSV with header `source_index,membership,f0..f{F-1}`; membership is -1
/// (private) or +1 (public). `sidecar` is written next to it as JSON.
pub fn write_embeddings_csv<S: Serialize>(path: &Path, embeddings: &[Embedding], sidecar: &S) -> Result<()> {
    let f = embeddings.first().map_or(0, |e| e.features.len());
    if embeddings.iter().any(|e| e.features.len() != f) {
        return Err(Error::SizeMismatch("embeddings of different lengths".into()));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["source_index".to_string(), "membership".to_string()];
    header.extend((0..f).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for e in embeddings {
        let mut row = vec![e.source_index.to_string(), e.membership.sign().to_string()];
        row.extend(e.features.iter().map(|v| format!("{v:?}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(sidecar)?)?;
    Ok(())
}

pub fn read_embeddings_csv(path: &Path) -> Result<Vec<Embedding>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.get(0) != Some("source_index") || header.get(1) != Some("membership") {
        return Err(Error::Format("embedding CSV must start with source_index,membership".into()));
    }
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let err = |e: &dyn std::fmt::Display| Error::Format(format!("row {n}: {e}"));
        let source_index = rec[0].parse::<u64>().map_err(|e| err(&e))?;
        let membership = Membership::from_sign(rec[1].parse::<i64>().map_err(|e| err(&e))?)?;
        let features = rec.iter().skip(2).map(|s| s.parse::<f64>().map_err(|e| err(&e))).collect::<Result<Vec<_>>>()?;
        out.push(Embedding { features, membership, source_index, flagged: false });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArchSpec, Model};
    use crate::oracle::LocalOracle;
    use std::sync::Arc;

    struct Threshold;
    impl LabelOracle for Threshold {
        fn input_dim(&self) -> usize {
            1
        }
        fn num_classes(&self) -> usize {
            2
        }
        fn label(&self, x: &[f64]) -> Result<usize> {
            Ok(usize::from(x[0] > 0.5))
        }
        fn queries_used(&self) -> u64 {
            0
        }
    }

    struct Constant;
    impl LabelOracle for Constant {
        fn input_dim(&self) -> usize {
            4
        }
        fn num_classes(&self) -> usize {
            3
        }
        fn label(&self, _: &[f64]) -> Result<usize> {
            Ok(2)
        }
        fn queries_used(&self) -> u64 {
            0
        }
    }

    #[test]
    fn fixed_direction_walk_hand_example() {
        let o = walk_fixed_direction(&Threshold, &[0.0], 0, &[0.1], Norm::Linf, 50, 10.0).unwrap();
        assert_eq!(o.steps, Some(6));
        assert!((o.distance - 0.6).abs() < 1e-12);
    }

    #[test]
    fn constant_oracle_gives_capped_features() {
        let cfg = EmbeddingConfig::blind_walk();
        let f = blind_walk_point(&Constant, &[0.5; 4], 2, &cfg, 1).unwrap();
        assert_eq!(f.len(), 30);
        let cap = 50.0 * cfg.noise_scale * 2.0;
        assert!(f.iter().all(|&v| v == cap));
    }

    #[test]
    fn batch_equals_single_points() {
        let m = Model::init(ArchSpec::mlp(4, vec![8], 3, crate::model::Activation::Relu), 1).unwrap();
        let o = LocalOracle::new(Arc::new(m));
        let xs = vec![vec![0.2, 0.4, 0.6, 0.8], vec![0.9, 0.1, 0.5, 0.5]];
        let cfg = EmbeddingConfig { noise_scale: 0.1, ..EmbeddingConfig::blind_walk() };
        let ys = vec![0, 1];
        let batch = blind_walk_batch(&o, &xs, &ys, &cfg, &[5, 6]).unwrap();
        assert_eq!(batch[0], blind_walk_point(&o, &xs[0], 0, &cfg, 5).unwrap());
        assert_eq!(batch[1], blind_walk_point(&o, &xs[1], 1, &cfg, 6).unwrap());
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        assert!(blind_walk_point(&Constant, &[0.5; 4], 2, &EmbeddingConfig::min_gd(), 1).is_err());
    }

    #[test]
    fn linf_l1_steps_respect_box() {
        let mut x = vec![1.0, 0.5];
        assert!(step(&mut x, &[1.0, 0.5], Norm::L1, 0.1));
        assert_eq!(x, vec![1.0, 0.6]);
        let mut x = vec![1.0, 1.0];
        assert!(!step(&mut x, &[1.0, 0.5], Norm::L1, 0.1));
        let mut x = vec![0.0, 0.5];
        assert!(!step(&mut x, &[-1.0, 0.0], Norm::Linf, 0.001));
        assert_eq!(x, vec![0.0, 0.5]);
    }
}
