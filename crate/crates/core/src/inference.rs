//! Ownership testing: a confidence regressor scores embeddings, a one-sided
//! Welch test compares public against private scores, repeated tests are
//! combined by the harmonic mean of their p-values, and bootstrap replicas
//! give 99% intervals.
//!
//! The regressor is trained to minimize `mean(-s * g(e))` with `s = +1` for
//! public and `s = -1` for private embeddings, so private points (smaller
//! margins on a model that learned them) score low.

use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::LabeledSet;
use crate::embed::{embed_dataset, Embedding, EmbeddingConfig, Membership};
use crate::error::{Error, Result};
use crate::oracle::{GradientOracle, LabelOracle};
use crate::rng::{derived_rng, stream, Rng};
use crate::stats::{harmonic_mean_p, mean, percentile, welch_one_sided};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressorConfig {
    pub hidden_width: usize,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub feature_standardization: bool,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            hidden_width: 32,
            epochs: 200,
            lr: 0.001,
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 0,
            feature_standardization: true,
        }
    }
}

/// `g(e) = w2 . tanh(W1 z + b1) + b2` with `z` the (optionally standardized)
/// features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub input_width: usize,
    pub hidden_width: usize,
    /// Row-major `(hidden, input)`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    /// Feature mean and scale applied before the first layer.
    pub standardization: Option<(Vec<f64>, Vec<f64>)>,
    /// False when training did not separate the pools in the intended direction.
    pub converged: bool,
}

impl Regressor {
    fn init(input_width: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = derived_rng(seed, stream::REGRESSOR, 0);
        let mut uni = |fan_in: usize, n: usize| {
            let b = 1.0 / (fan_in as f64).sqrt();
            (0..n).map(|_| rng.random_range(-b..b)).collect::<Vec<f64>>()
        };
        let w1 = uni(input_width, hidden * input_width);
        let b1 = uni(input_width, hidden);
        let w2 = uni(hidden, hidden);
        let b2 = uni(hidden, 1)[0];
        Self { input_width, hidden_width: hidden, w1, b1, w2, b2, standardization: None, converged: true }
    }

    fn standardize(&self, e: &[f64]) -> Vec<f64> {
        match &self.standardization {
            None => e.to_vec(),
            Some((mu, sd)) => e.iter().zip(mu).zip(sd).map(|((v, m), s)| (v - m) / s).collect(),
        }
    }

    pub fn score_one(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.input_width {
            return Err(Error::DimensionMismatch { expected: self.input_width, got: features.len() });
        }
        let z = self.standardize(features);
        let mut out = self.b2;
        for h in 0..self.hidden_width {
            let row = &self.w1[h * self.input_width..(h + 1) * self.input_width];
            let a = row.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>() + self.b1[h];
            out += self.w2[h] * a.tanh();
        }
        Ok(out)
    }

    /// Standardization absorbed into the first layer; scores are unchanged.
    pub fn fold_standardization(&self) -> Self {
        let Some((mu, sd)) = &self.standardization else { return self.clone() };
        let mut out = self.clone();
        for h in 0..self.hidden_width {
            let row = &mut out.w1[h * self.input_width..(h + 1) * self.input_width];
            let mut shift = 0.0;
            for ((w, m), s) in row.iter_mut().zip(mu).zip(sd) {
                *w /= s;
                shift += *w * m;
            }
            out.b1[h] -= shift;
        }
        out.standardization = None;
        out
    }

    fn forward_batch(&self, z: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        let w1 = Array2::from_shape_vec((self.hidden_width, self.input_width), self.w1.clone()).expect("shape");
        let mut a = z.dot(&w1.t());
        a += &Array1::from(self.b1.clone());
        a.mapv_inplace(f64::tanh);
        let g = a.dot(&Array1::from(self.w2.clone())) + self.b2;
        (a, g)
    }
}

pub fn score(reg: &Regressor, embeddings: &[Embedding]) -> Result<Vec<f64>> {
    embeddings.iter().map(|e| reg.score_one(&e.features)).collect()
}

pub fn score_features(reg: &Regressor, features: &[Vec<f64>]) -> Result<Vec<f64>> {
    features.iter().map(|f| reg.score_one(f)).collect()
}

/// Full-batch gradient descent with momentum and weight decay.
pub fn train_regressor(embeddings: &[Embedding], cfg: &RegressorConfig) -> Result<Regressor> {
    let n = embeddings.len();
    let has = |m| embeddings.iter().any(|e| e.membership == m);
    if !has(Membership::Private) || !has(Membership::Public) {
        return Err(Error::SingleClass);
    }
    if cfg.hidden_width == 0 || cfg.epochs == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidParameter(format!("regressor config {cfg:?}")));
    }
    let f = embeddings[0].features.len();
    if let Some(e) = embeddings.iter().find(|e| e.features.len() != f) {
        return Err(Error::DimensionMismatch { expected: f, got: e.features.len() });
    }
    if embeddings.iter().any(|e| e.features.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("embedding feature".into()));
    }
    let mut reg = Regressor::init(f, cfg.hidden_width, cfg.seed);
    let raw = Array2::from_shape_fn((n, f), |(i, j)| embeddings[i].features[j]);
    if cfg.feature_standardization {
        let mu = raw.mean_axis(Axis(0)).expect("nonempty");
        let sd = raw.std_axis(Axis(0), 1.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
        reg.standardization = Some((mu.to_vec(), sd.to_vec()));
    }
    let z = Array2::from_shape_fn((n, f), |(i, j)| match &reg.standardization {
        Some((mu, sd)) => (raw[[i, j]] - mu[j]) / sd[j],
        None => raw[[i, j]],
    });
    let s = Array1::from_iter(embeddings.iter().map(|e| f64::from(e.membership.sign())));
    let h = cfg.hidden_width;
    let (mut v_w1, mut v_b1, mut v_w2, mut v_b2) = (vec![0.0; h * f], vec![0.0; h], vec![0.0; h], 0.0);
    for _ in 0..cfg.epochs {
        let (a, g) = reg.forward_batch(&z);
        let loss = -(&s * &g).sum() / n as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite("regressor loss".into()));
        }
        let dg = s.mapv(|v| -v / n as f64);
        let gw2 = a.t().dot(&dg);
        let gb2 = dg.sum();
        // through tanh: d a / d pre = 1 - a^2
        let w2 = Array1::from(reg.w2.clone());
        let mut dpre = Array2::from_shape_fn((n, h), |(i, j)| dg[i] * w2[j]);
        dpre.zip_mut_with(&a, |d, &av| *d *= 1.0 - av * av);
        let gw1 = dpre.t().dot(&z);
        let gb1 = dpre.sum_axis(Axis(0));
        let (lr, mo, wd) = (cfg.lr, cfg.momentum, cfg.weight_decay);
        let upd = |p: &mut f64, v: &mut f64, g: f64| {
            *v = mo * *v + g + wd * *p;
            *p -= lr * *v;
        };
        for (i, p) in reg.w1.iter_mut().enumerate() {
            upd(p, &mut v_w1[i], gw1.as_slice().expect("layout")[i]);
        }
        for (i, p) in reg.b1.iter_mut().enumerate() {
            upd(p, &mut v_b1[i], gb1[i]);
        }
        for (i, p) in reg.w2.iter_mut().enumerate() {
            upd(p, &mut v_w2[i], gw2[i]);
        }
        upd(&mut reg.b2, &mut v_b2, gb2);
    }
    let scores = score(&reg, embeddings)?;
    let side = |m| {
        let v: Vec<f64> = embeddings.iter().zip(&scores).filter(|(e, _)| e.membership == m).map(|(_, &c)| c).collect();
        mean(&v)
    };
    reg.converged = side(Membership::Private) < side(Membership::Public);
    Ok(reg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    /// Embed a revealed pool per side; each repetition draws `m` fresh
    /// points per side without replacement.
    PoolSubsample,
    /// Embed exactly `m` points per side; each repetition resamples them
    /// with replacement.
    RevealedBootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub m: usize,
    pub alpha: f64,
    pub repetitions: usize,
    pub bootstrap: usize,
    pub scheme: SamplingScheme,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { m: 50, alpha: 0.01, repetitions: 100, bootstrap: 40, scheme: SamplingScheme::PoolSubsample, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Stolen,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    pub aggregated_p: f64,
    /// Mean over repetitions of `mean(public) - mean(private)`.
    pub effect_size: f64,
    /// 99% bootstrap interval of the effect size.
    pub ci99: (f64, f64),
    /// 99% bootstrap interval of the aggregated p-value.
    pub p_ci99: (f64, f64),
    pub alpha: f64,
    /// Points per side in each test.
    pub m: usize,
    /// Private points exposed to the tester.
    pub m_revealed: usize,
    pub public_pool: usize,
    pub repetitions: usize,
    pub bootstrap: usize,
    pub scheme: SamplingScheme,
    pub seed: u64,
    pub threat_kind: Option<String>,
    pub replicate_p: Vec<f64>,
    pub replicate_effect: Vec<f64>,
}

impl Verdict {
    pub fn replicas_all_at_least(&self, level: f64) -> bool {
        self.replicate_p.iter().all(|&p| p >= level)
    }
}

/// Smallest p-value a single repetition can contribute.
pub const P_FLOOR: f64 = 1e-300;

fn draw(rng: &mut Rng, pool: &[f64], m: usize, scheme: SamplingScheme) -> Vec<f64> {
    match scheme {
        SamplingScheme::PoolSubsample => sample(rng, pool.len(), m).into_iter().map(|i| pool[i]).collect(),
        SamplingScheme::RevealedBootstrap => (0..m).map(|_| pool[rng.random_range(0..pool.len())]).collect(),
    }
}

fn one_round(c_private: &[f64], c_public: &[f64], cfg: &InferenceConfig, mut rng: Rng) -> Result<(f64, f64)> {
    let mut ps = Vec::with_capacity(cfg.repetitions);
    let mut effects = Vec::with_capacity(cfg.repetitions);
    for _ in 0..cfg.repetitions {
        let a = draw(&mut rng, c_public, cfg.m, cfg.scheme);
        let b = draw(&mut rng, c_private, cfg.m, cfg.scheme);
        let t = welch_one_sided(&a, &b)?;
        ps.push(t.p_value.max(P_FLOOR));
        effects.push(t.delta_mu);
    }
    Ok((harmonic_mean_p(&ps)?, mean(&effects)))
}

/// Verdict from already-computed scores. Under `RevealedBootstrap` only the
/// first `m` scores of each side are used.
pub fn verdict_from_scores(c_private: &[f64], c_public: &[f64], cfg: &InferenceConfig) -> Result<Verdict> {
    if cfg.m < 2 {
        return Err(Error::InvalidParameter(format!("m = {} < 2", cfg.m)));
    }
    if cfg.repetitions == 0 || !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("repetitions {} / alpha {}", cfg.repetitions, cfg.alpha)));
    }
    if c_private.len() < cfg.m || c_public.len() < cfg.m {
        return Err(Error::MissingData(format!(
            "m = {} exceeds pools of {} private / {} public",
            cfg.m,
            c_private.len(),
            c_public.len()
        )));
    }
    let (priv_pool, pub_pool) = match cfg.scheme {
        SamplingScheme::PoolSubsample => (c_private, c_public),
        SamplingScheme::RevealedBootstrap => (&c_private[..cfg.m], &c_public[..cfg.m]),
    };
    let (aggregated_p, effect_size) =
        one_round(priv_pool, pub_pool, cfg, derived_rng(cfg.seed, stream::INFER_MAIN, 0))?;
    let replicas: Vec<(f64, f64)> = (0..cfg.bootstrap as u64)
        .into_par_iter()
        .map(|b| one_round(priv_pool, pub_pool, cfg, derived_rng(cfg.seed, stream::INFER_REPLICA, b)))
        .collect::<Result<_>>()?;
    let replicate_p: Vec<f64> = replicas.iter().map(|r| r.0).collect();
    let replicate_effect: Vec<f64> = replicas.iter().map(|r| r.1).collect();
    let ci = |v: &[f64]| if v.is_empty() { (f64::NAN, f64::NAN) } else { (percentile(v, 0.5), percentile(v, 99.5)) };
    Ok(Verdict {
        decision: if aggregated_p < cfg.alpha { Decision::Stolen } else { Decision::Inconclusive },
        aggregated_p,
        effect_size,
        ci99: ci(&replicate_effect),
        p_ci99: ci(&replicate_p),
        alpha: cfg.alpha,
        m: cfg.m,
        m_revealed: priv_pool.len(),
        public_pool: pub_pool.len(),
        repetitions: cfg.repetitions,
        bootstrap: cfg.bootstrap,
        scheme: cfg.scheme,
        seed: cfg.seed,
        threat_kind: None,
        replicate_p,
        replicate_effect,
    })
}

/// Embeds the victim's private and public pools through the suspect, scores
/// them with the victim's regressor and tests. Under `RevealedBootstrap`
/// only the first `m` points of each pool are embedded.
#[allow(clippy::too_many_arguments)]
pub fn run_dataset_inference(
    suspect: &dyn LabelOracle,
    suspect_gradient: Option<&dyn GradientOracle>,
    private_pool: &LabeledSet,
    public_pool: &LabeledSet,
    embed_cfg: &EmbeddingConfig,
    embed_seed: u64,
    regressor: &Regressor,
    cfg: &InferenceConfig,
) -> Result<Verdict> {
    if private_pool.len() < cfg.m || public_pool.len() < cfg.m {
        return Err(Error::MissingData(format!("m = {} exceeds the available pools", cfg.m)));
    }
    let (priv_set, pub_set) = match cfg.scheme {
        SamplingScheme::PoolSubsample => (private_pool.clone(), public_pool.clone()),
        SamplingScheme::RevealedBootstrap => (private_pool.range(0, cfg.m), public_pool.range(0, cfg.m)),
    };
    let e_priv = embed_dataset(suspect, suspect_gradient, &priv_set, Membership::Private, embed_cfg, embed_seed)?;
    let e_pub = embed_dataset(suspect, suspect_gradient, &pub_set, Membership::Public, embed_cfg, embed_seed)?;
    verdict_from_scores(&score(regressor, &e_priv)?, &score(regressor, &e_pub)?, cfg)
}
