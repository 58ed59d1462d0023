//! The desk-scale experiment shared by the CLI and the acceptance tests:
//! one synthetic task, a victim, its confidence regressor, and verdicts for
//! suspects produced by the threat models.
//!
//! Pool layout. The victim's private set `S_V` and an equally sized public
//! set are each split in two: the first `regressor_pool` points train the
//! regressor on victim embeddings, the next `di_pool` points are the pools
//! the tester embeds through the suspect.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{BlobTask, LabeledSet, PoolSizes, TaskPools};
use crate::embed::{embed_dataset_blind, embed_dataset_mingd, EmbedMode, Embedding, EmbeddingConfig, Membership};
use crate::error::{Error, Result};
use crate::inference::{
    score_features, train_regressor, verdict_from_scores, InferenceConfig, Regressor, RegressorConfig, Verdict,
};
use crate::model::{evaluate_accuracy, train_sgd, Activation, ArchSpec, Model, TrainConfig};
use crate::oracle::{LabelOracle, LocalOracle};
use crate::rng::{derive_seed, stream};
use crate::stealing::{run_attack, AttackConfig, AttackData, AttackOutcome, ThreatModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub task: BlobTask,
    pub pools: PoolSizes,
    pub victim_arch: ArchSpec,
    pub victim_train: TrainConfig,
    pub attack: AttackConfig,
    pub embedding: EmbeddingConfig,
    pub regressor: RegressorConfig,
    /// Points per side used to train the regressor.
    pub regressor_pool: usize,
    /// Points per side the tester embeds through the suspect.
    pub di_pool: usize,
    pub inference: InferenceConfig,
    pub threats: Vec<ThreatModel>,
    pub m_grid: Vec<usize>,
    pub feature_grid: Vec<usize>,
    pub overlap_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let task = BlobTask::default();
        let victim_arch = ArchSpec::mlp(task.dim, vec![256], task.num_classes, Activation::Relu);
        Self {
            attack: AttackConfig {
                diff_arch: Some(ArchSpec::mlp(task.dim, vec![64, 64], task.num_classes, Activation::Tanh)),
                ..AttackConfig::default()
            },
            task,
            pools: PoolSizes::default(),
            victim_arch,
            victim_train: TrainConfig::default(),
            embedding: EmbeddingConfig::default(),
            regressor: RegressorConfig::default(),
            regressor_pool: 250,
            di_pool: 250,
            inference: InferenceConfig::default(),
            threats: ThreatModel::headline().into_iter().chain([ThreatModel::Independent]).collect(),
            m_grid: vec![2, 5, 10, 20, 30, 40, 50],
            feature_grid: vec![5, 10, 15, 20, 25, 30],
            overlap_grid: vec![0.0, 0.3, 0.5, 0.7, 1.0],
            seed: 0,
        }
        .with_seed(2021)
    }
}

impl ExperimentConfig {
    /// Reseeds both the task draw and everything derived from `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.task.seed = seed;
        self.inference.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.victim_arch.validate()?;
        self.victim_train.validate()?;
        self.embedding.validate()?;
        if self.victim_arch.input_dim != self.task.dim || self.victim_arch.num_classes != self.task.num_classes {
            return Err(Error::InvalidParameter("victim_arch does not match the task".into()));
        }
        for (name, a) in [("student_arch", &self.attack.student_arch), ("diff_arch", &self.attack.diff_arch)] {
            if let Some(a) = a {
                a.validate()?;
                if a.input_dim != self.task.dim || a.num_classes != self.task.num_classes {
                    return Err(Error::InvalidParameter(format!("{name} does not match the task")));
                }
            }
        }
        let need = self.regressor_pool + self.di_pool;
        if need > self.pools.victim || need > self.pools.public {
            return Err(Error::InvalidParameter(format!(
                "regressor_pool + di_pool = {need} exceeds the victim/public pools"
            )));
        }
        if self.regressor_pool < 2 || self.di_pool < 2 {
            return Err(Error::InvalidParameter("pools need at least 2 points per side".into()));
        }
        if let Some(&m) = self.m_grid.iter().find(|&&m| m < 2 || m > self.di_pool) {
            return Err(Error::InvalidParameter(format!("m = {m} outside [2, di_pool]")));
        }
        if self.inference.m > self.di_pool {
            return Err(Error::InvalidParameter("inference.m exceeds di_pool".into()));
        }
        if self.overlap_grid.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidParameter("overlap fractions must lie in [0, 1]".into()));
        }
        let full = self.embedding.feature_len(self.task.num_classes);
        if self.feature_grid.iter().any(|&f| f == 0 || f > full) {
            return Err(Error::InvalidParameter(format!("feature counts must lie in [1, {full}]")));
        }
        Ok(())
    }
}

/// Embeddings of the regressor pools and DI pools under one model.
#[derive(Debug, Clone)]
pub struct PoolEmbeddings {
    pub private: Vec<Embedding>,
    pub public: Vec<Embedding>,
}

pub struct World {
    pub cfg: ExperimentConfig,
    pub pools: TaskPools,
    pub victim: Arc<Model>,
    pub victim_test_accuracy: f64,
    pub victim_train_accuracy: f64,
    pub reg_private: LabeledSet,
    pub reg_public: LabeledSet,
    pub di_private: LabeledSet,
    pub di_public: LabeledSet,
    /// Victim embeddings of the regressor pools.
    pub victim_embeddings: PoolEmbeddings,
    pub regressor: Regressor,
}

/// Embeds a set through any label oracle (Blind Walk) or, for MinGD, a local model.
pub fn embed_with(
    oracle: &dyn LabelOracle,
    local: Option<&LocalOracle>,
    set: &LabeledSet,
    membership: Membership,
    cfg: &EmbeddingConfig,
    seed: u64,
) -> Result<Vec<Embedding>> {
    match cfg.mode {
        EmbedMode::BlindWalk => embed_dataset_blind(oracle, set, membership, cfg, seed),
        EmbedMode::MinGd => {
            let l = local.ok_or_else(|| Error::InvalidParameter("min_gd needs a local model".into()))?;
            embed_dataset_mingd(l, set, membership, cfg)
        }
    }
}

pub fn train_victim(cfg: &ExperimentConfig, data: &LabeledSet) -> Result<Model> {
    let init = Model::init(cfg.victim_arch.clone(), derive_seed(cfg.seed, stream::INIT, 1))?;
    let tc = TrainConfig { seed: derive_seed(cfg.seed, stream::SHUFFLE, 1), ..cfg.victim_train.clone() };
    train_sgd(&init, data, &tc, None)
}

/// Keeps `count` features, interleaving families so small counts still mix
/// all of them (Blind Walk), or keeping whole classes first (MinGD).
pub fn feature_subset(cfg: &EmbeddingConfig, num_classes: usize, count: usize) -> Vec<usize> {
    match cfg.mode {
        EmbedMode::BlindWalk => {
            let (fams, reps) = (cfg.noise_families.len(), cfg.repeats_per_family);
            (0..reps).flat_map(|r| (0..fams).map(move |f| f * reps + r)).take(count).collect()
        }
        EmbedMode::MinGd => (0..cfg.feature_len(num_classes)).take(count).collect(),
    }
}

fn select(e: &[Embedding], idx: &[usize]) -> Vec<Embedding> {
    e.iter()
        .map(|x| Embedding { features: idx.iter().map(|&i| x.features[i]).collect(), ..x.clone() })
        .collect()
}

impl World {
    pub fn build(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let pools = TaskPools::generate(&cfg.task, &cfg.pools)?;
        let victim = Arc::new(train_victim(&cfg, &pools.victim)?);
        Self::with_victim(cfg, pools, victim)
    }

    /// Uses an already trained victim (e.g. loaded from a checkpoint).
    pub fn with_victim(cfg: ExperimentConfig, pools: TaskPools, victim: Arc<Model>) -> Result<Self> {
        cfg.validate()?;
        let (r, d) = (cfg.regressor_pool, cfg.di_pool);
        let reg_private = pools.victim.range(0, r);
        let reg_public = pools.public.range(0, r);
        let di_private = pools.victim.range(r, r + d);
        let di_public = pools.public.range(r, r + d);
        let oracle = LocalOracle::new(victim.clone());
        let e = &cfg.embedding;
        let private = embed_with(&oracle, Some(&oracle), &reg_private, Membership::Private, e, cfg.seed)?;
        let public = embed_with(&oracle, Some(&oracle), &reg_public, Membership::Public, e, cfg.seed)?;
        let all: Vec<Embedding> = private.iter().chain(&public).cloned().collect();
        let rc = RegressorConfig { seed: derive_seed(cfg.seed, stream::REGRESSOR, 1), ..cfg.regressor.clone() };
        let regressor = train_regressor(&all, &rc)?;
        Ok(Self {
            victim_test_accuracy: evaluate_accuracy(&victim, &pools.test)?,
            victim_train_accuracy: evaluate_accuracy(&victim, &pools.victim)?,
            cfg,
            pools,
            victim,
            reg_private,
            reg_public,
            di_private,
            di_public,
            victim_embeddings: PoolEmbeddings { private, public },
            regressor,
        })
    }

    pub fn attack_data(&self) -> AttackData<'_> {
        AttackData {
            victim_train: Some(&self.pools.victim),
            surrogate: Some(&self.pools.surrogate),
            own_private: Some(&self.pools.independent),
            test: Some(&self.pools.test),
        }
    }

    pub fn attack(&self, threat: ThreatModel) -> Result<AttackOutcome> {
        let seed = attack_seed(self.cfg.seed, threat);
        run_attack(&self.victim, threat, &self.cfg.attack, self.attack_data(), seed)
    }

    /// DI pools embedded through a suspect.
    pub fn embed_suspect(&self, oracle: &dyn LabelOracle, local: Option<&LocalOracle>) -> Result<PoolEmbeddings> {
        let e = &self.cfg.embedding;
        Ok(PoolEmbeddings {
            private: embed_with(oracle, local, &self.di_private, Membership::Private, e, self.cfg.seed)?,
            public: embed_with(oracle, local, &self.di_public, Membership::Public, e, self.cfg.seed)?,
        })
    }

    pub fn embed_model(&self, model: &Model) -> Result<PoolEmbeddings> {
        let oracle = LocalOracle::new(Arc::new(model.clone()));
        self.embed_suspect(&oracle, Some(&oracle))
    }

    pub fn verdict(&self, suspect: &PoolEmbeddings, m: usize, threat: Option<&str>) -> Result<Verdict> {
        verdict_with(&self.regressor, suspect, &self.cfg.inference, m, threat)
    }

    /// Regressor retrained on a subset of the victim's features, for the
    /// embedding-size sweep.
    pub fn regressor_on(&self, idx: &[usize]) -> Result<Regressor> {
        let all: Vec<Embedding> = select(&self.victim_embeddings.private, idx)
            .into_iter()
            .chain(select(&self.victim_embeddings.public, idx))
            .collect();
        let rc = RegressorConfig { seed: derive_seed(self.cfg.seed, stream::REGRESSOR, 1), ..self.cfg.regressor.clone() };
        train_regressor(&all, &rc)
    }

    pub fn verdict_on_features(&self, suspect: &PoolEmbeddings, idx: &[usize], m: usize, threat: Option<&str>) -> Result<Verdict> {
        let reg = self.regressor_on(idx)?;
        let sub = PoolEmbeddings { private: select(&suspect.private, idx), public: select(&suspect.public, idx) };
        verdict_with(&reg, &sub, &self.cfg.inference, m, threat)
    }
}

pub fn verdict_with(
    reg: &Regressor,
    suspect: &PoolEmbeddings,
    inference: &InferenceConfig,
    m: usize,
    threat: Option<&str>,
) -> Result<Verdict> {
    let feats = |e: &[Embedding]| e.iter().map(|x| x.features.clone()).collect::<Vec<_>>();
    let cp = score_features(reg, &feats(&suspect.private))?;
    let cq = score_features(reg, &feats(&suspect.public))?;
    let cfg = InferenceConfig { m, ..inference.clone() };
    let mut v = verdict_from_scores(&cp, &cq, &cfg)?;
    v.threat_kind = threat.map(str::to_string);
    Ok(v)
}

/// Seed of the attack run for `threat` under experiment seed `seed`.
pub fn attack_seed(seed: u64, threat: ThreatModel) -> u64 {
    derive_seed(seed, stream::ATTACK, threat_index(threat))
}

fn threat_index(t: ThreatModel) -> u64 {
    match t {
        ThreatModel::Overlap { overlap_fraction } => 1000 + (overlap_fraction * 1000.0).round() as u64,
        other => ThreatModel::all_simple().iter().position(|x| *x == other).unwrap_or(0) as u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_serializes() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn feature_subsets_interleave_families() {
        let cfg = EmbeddingConfig::default();
        assert_eq!(feature_subset(&cfg, 10, 5), vec![0, 10, 20, 1, 11]);
        assert_eq!(feature_subset(&cfg, 10, 30).len(), 30);
    }

    #[test]
    fn rejects_oversized_pools() {
        let cfg = ExperimentConfig { di_pool: 400, ..ExperimentConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
