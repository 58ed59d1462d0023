//! Threat models: ways an adversary can end up with a model that carries the
//! victim's knowledge, plus the two controls (an independent model and one
//! trained on a fraction of the victim's private data).
//!
//! Query attacks see the victim only through an oracle, whose counter is
//! reported in the provenance. `disagreement_query` is a simplified stand-in
//! for data-free distillation: instead of a generator, random inputs are
//! pushed by a few signed-gradient ascent steps on the teacher-student KL
//! divergence before being queried.

use std::sync::Arc;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledSet, SplitTag};
use crate::error::{Error, Result};
use crate::model::{evaluate_accuracy, rows_to_array, softmax_rows, train_sgd, ArchSpec, Loss, Model, TrainConfig};
use crate::oracle::{LabelOracle, LocalOracle, LogitOracle};
use crate::rng::{derive_seed, derived_rng, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThreatModel {
    Source,
    Distillation,
    DiffArchitecture,
    FineTune,
    LabelQuery,
    LogitQuery,
    RandomQuery,
    DisagreementQuery,
    Independent,
    Overlap { overlap_fraction: f64 },
}

impl ThreatModel {
    pub fn name(&self) -> &'static str {
        match self {
            ThreatModel::Source => "source",
            ThreatModel::Distillation => "distillation",
            ThreatModel::DiffArchitecture => "diff_architecture",
            ThreatModel::FineTune => "fine_tune",
            ThreatModel::LabelQuery => "label_query",
            ThreatModel::LogitQuery => "logit_query",
            ThreatModel::RandomQuery => "random_query",
            ThreatModel::DisagreementQuery => "disagreement_query",
            ThreatModel::Independent => "independent",
            ThreatModel::Overlap { .. } => "overlap",
        }
    }

    /// Parses a kind name; `overlap:<fraction>` for the overlap control.
    pub fn parse(s: &str) -> Result<Self> {
        if let Some(f) = s.strip_prefix("overlap:") {
            let f: f64 = f.parse().map_err(|_| Error::InvalidParameter(format!("bad overlap fraction in {s}")))?;
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidParameter(format!("overlap fraction {f} outside [0, 1]")));
            }
            return Ok(ThreatModel::Overlap { overlap_fraction: f });
        }
        Self::all_simple()
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown threat model {s}")))
    }

    pub fn all_simple() -> Vec<Self> {
        use ThreatModel::*;
        vec![Source, Distillation, DiffArchitecture, FineTune, LabelQuery, LogitQuery, RandomQuery, DisagreementQuery, Independent]
    }

    /// The attacks whose verdicts the paper reports as stolen.
    pub fn headline() -> Vec<Self> {
        use ThreatModel::*;
        vec![Source, Distillation, DiffArchitecture, FineTune, LabelQuery, LogitQuery]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisagreementConfig {
    pub rounds: usize,
    pub batch_size: usize,
    pub ascent_steps: usize,
    pub step_size: f64,
}

impl Default for DisagreementConfig {
    fn default() -> Self {
        Self { rounds: 40, batch_size: 500, ascent_steps: 10, step_size: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    /// Student for distillation, query attacks and the controls; `None`
    /// reuses the victim's architecture.
    pub student_arch: Option<ArchSpec>,
    /// Student of the `diff_architecture` attack.
    pub diff_arch: Option<ArchSpec>,
    /// Training recipe for students trained on private-size data.
    pub train: TrainConfig,
    pub extraction_epochs: usize,
    pub fine_tune_epochs: usize,
    pub fine_tune_lr: f64,
    /// Scales extraction and fine-tune epochs.
    pub epoch_multiplier: f64,
    pub extraction_lr: f64,
    pub query_budget: Option<u64>,
    /// Inputs drawn for `random_query`; 0 means the surrogate size.
    pub random_queries: usize,
    pub disagreement: DisagreementConfig,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            student_arch: None,
            diff_arch: None,
            train: TrainConfig::default(),
            extraction_epochs: 20,
            fine_tune_epochs: 5,
            fine_tune_lr: 0.01,
            epoch_multiplier: 1.0,
            extraction_lr: 0.05,
            query_budget: None,
            random_queries: 0,
            disagreement: DisagreementConfig::default(),
        }
    }
}

impl AttackConfig {
    fn scaled(&self, epochs: usize) -> usize {
        ((epochs as f64 * self.epoch_multiplier).round() as usize).max(1)
    }
}

/// Data the adversary may hold, depending on the threat model.
#[derive(Debug, Clone, Copy, Default)]
pub struct AttackData<'a> {
    pub victim_train: Option<&'a LabeledSet>,
    pub surrogate: Option<&'a LabeledSet>,
    /// The adversary's own private data (independent and overlap).
    pub own_private: Option<&'a LabeledSet>,
    /// For `final_accuracy` in the provenance.
    pub test: Option<&'a LabeledSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub threat_kind: String,
    pub overlap_fraction: Option<f64>,
    pub seed: u64,
    pub query_count: u64,
    /// Direct reads of victim internals (gradients); zero for query attacks.
    pub param_reads: u64,
    pub epochs: usize,
    pub final_accuracy: Option<f64>,
    pub victim_checkpoint_hash: String,
    pub note: Option<String>,
}

#[derive(Debug, Clone)]
pub struct AttackOutcome {
    pub model: Model,
    pub provenance: Provenance,
}

fn need<'a>(d: Option<&'a LabeledSet>, what: &str) -> Result<&'a LabeledSet> {
    d.ok_or_else(|| Error::MissingData(what.to_string()))
}

/// `s_a` plus `ceil(fraction * |s_v|)` points of `s_v` drawn without replacement.
pub fn make_overlap_trainset(s_v: &LabeledSet, s_a: &LabeledSet, fraction: f64, seed: u64) -> Result<LabeledSet> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("overlap fraction {fraction} outside [0, 1]")));
    }
    let k = ((fraction * s_v.len() as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut rng = derived_rng(seed, stream::ATTACK, 1);
    let mut idx = sample(&mut rng, s_v.len(), k.min(s_v.len())).into_vec();
    idx.sort_unstable();
    s_a.concat(&s_v.subset(&idx), SplitTag::Surrogate)
}

fn relabeled(inputs: &[Vec<f64>], labels: Vec<usize>, k: usize) -> Result<LabeledSet> {
    LabeledSet::from_parts(inputs.to_vec(), labels, k, SplitTag::Synthetic)
}

fn train_fresh(
    arch: &ArchSpec,
    data: &LabeledSet,
    cfg: &TrainConfig,
    teacher: Option<&[Vec<f64>]>,
    seed: u64,
) -> Result<Model> {
    let init = Model::init(arch.clone(), derive_seed(seed, stream::ATTACK, 2))?;
    let cfg = TrainConfig { seed: derive_seed(seed, stream::ATTACK, 3), ..cfg.clone() };
    train_sgd(&init, data, &cfg, teacher)
}

pub fn run_attack(victim: &Model, threat: ThreatModel, cfg: &AttackConfig, data: AttackData<'_>, seed: u64) -> Result<AttackOutcome> {
    let victim_arc = Arc::new(victim.clone());
    let oracle = LocalOracle::new(victim_arc.clone()).with_budget(cfg.query_budget);
    let student_arch = cfg.student_arch.clone().unwrap_or_else(|| victim.arch.clone());
    let k = victim.num_classes();
    let extraction = TrainConfig {
        epochs: cfg.scaled(cfg.extraction_epochs),
        lr0: cfg.extraction_lr,
        ..cfg.train.clone()
    };
    let mut note = None;
    let (model, epochs) = match threat {
        ThreatModel::Source => (victim.clone(), 0),
        ThreatModel::Distillation => {
            let s_v = need(data.victim_train, "victim training set")?;
            let teacher = victim.forward_batch(&s_v.inputs)?;
            let cfg_kl = TrainConfig { loss: Loss::KlToTeacher, ..cfg.train.clone() };
            (train_fresh(&student_arch, s_v, &cfg_kl, Some(&teacher), seed)?, cfg.train.epochs)
        }
        ThreatModel::DiffArchitecture => {
            let s_v = need(data.victim_train, "victim training set")?;
            let arch = cfg
                .diff_arch
                .clone()
                .ok_or_else(|| Error::MissingData("diff_arch for diff_architecture".into()))?;
            if arch == victim.arch {
                return Err(Error::InvalidParameter("diff_arch equals the victim architecture".into()));
            }
            (train_fresh(&arch, s_v, &TrainConfig { loss: Loss::CrossEntropy, ..cfg.train.clone() }, None, seed)?, cfg.train.epochs)
        }
        ThreatModel::FineTune => {
            let sur = need(data.surrogate, "surrogate data")?;
            let labels = oracle.labels(&sur.inputs)?;
            let set = relabeled(&sur.inputs, labels, k)?;
            let start = victim.clone();
            debug_assert_eq!(start.params, victim.params);
            let ft = TrainConfig {
                epochs: cfg.scaled(cfg.fine_tune_epochs),
                lr0: cfg.fine_tune_lr,
                loss: Loss::CrossEntropy,
                seed: derive_seed(seed, stream::ATTACK, 3),
                ..cfg.train.clone()
            };
            (train_sgd(&start, &set, &ft, None)?, ft.epochs)
        }
        ThreatModel::LabelQuery => {
            let sur = need(data.surrogate, "surrogate data")?;
            let labels = oracle.labels(&sur.inputs)?;
            let set = relabeled(&sur.inputs, labels, k)?;
            let c = TrainConfig { loss: Loss::CrossEntropy, ..extraction.clone() };
            (train_fresh(&student_arch, &set, &c, None, seed)?, c.epochs)
        }
        ThreatModel::LogitQuery => {
            let sur = need(data.surrogate, "surrogate data")?;
            let logits = oracle.logits_batch(&sur.inputs)?;
            let set = relabeled(&sur.inputs, vec![0; sur.len()], k)?;
            let c = TrainConfig { loss: Loss::KlToTeacher, ..extraction.clone() };
            (train_fresh(&student_arch, &set, &c, Some(&logits), seed)?, c.epochs)
        }
        ThreatModel::RandomQuery => {
            let n = if cfg.random_queries > 0 { cfg.random_queries } else { need(data.surrogate, "surrogate data")?.len() };
            let mut rng = derived_rng(seed, stream::ATTACK, 4);
            let inputs: Vec<Vec<f64>> =
                (0..n).map(|_| (0..victim.input_dim()).map(|_| rng.sample(StandardNormal)).collect()).collect();
            let logits = oracle.logits_batch(&inputs)?;
            let set = relabeled(&inputs, vec![0; n], k)?;
            let c = TrainConfig { loss: Loss::KlToTeacher, ..extraction.clone() };
            (train_fresh(&student_arch, &set, &c, Some(&logits), seed)?, c.epochs)
        }
        ThreatModel::DisagreementQuery => {
            note = Some(
                "simplified zero-shot attack: signed-gradient ascent on teacher-student KL replaces the generator".into(),
            );
            let m = disagreement_attack(&oracle, &student_arch, cfg, seed)?;
            (m, cfg.disagreement.rounds)
        }
        ThreatModel::Independent => {
            let own = need(data.own_private, "independent private data")?;
            if let Some(s_v) = data.victim_train {
                if !own.is_disjoint_from(s_v) {
                    return Err(Error::InvalidParameter("independent data overlaps the victim's private set".into()));
                }
            }
            (train_fresh(&student_arch, own, &TrainConfig { loss: Loss::CrossEntropy, ..cfg.train.clone() }, None, seed)?, cfg.train.epochs)
        }
        ThreatModel::Overlap { overlap_fraction } => {
            let own = need(data.own_private, "adversary private data")?;
            let s_v = need(data.victim_train, "victim training set")?;
            let set = make_overlap_trainset(s_v, own, overlap_fraction, seed)?;
            (train_fresh(&student_arch, &set, &TrainConfig { loss: Loss::CrossEntropy, ..cfg.train.clone() }, None, seed)?, cfg.train.epochs)
        }
    };
    let final_accuracy = data.test.map(|t| evaluate_accuracy(&model, t)).transpose()?;
    let provenance = Provenance {
        threat_kind: threat.name().into(),
        overlap_fraction: match threat {
            ThreatModel::Overlap { overlap_fraction } => Some(overlap_fraction),
            _ => None,
        },
        seed,
        query_count: oracle.queries_used(),
        param_reads: oracle.param_reads(),
        epochs,
        final_accuracy,
        victim_checkpoint_hash: victim.checksum()?,
        note,
    };
    Ok(AttackOutcome { model, provenance })
}

/// Rounds of: random inputs, ascent on KL(victim || student) through the
/// student only, victim logit queries, one epoch of KL training over all
/// queries so far.
fn disagreement_attack<O: LogitOracle>(oracle: &O, arch: &ArchSpec, cfg: &AttackConfig, seed: u64) -> Result<Model> {
    let dc = &cfg.disagreement;
    let dim = oracle.input_dim();
    let mut student = Model::init(arch.clone(), derive_seed(seed, stream::ATTACK, 2))?;
    let mut inputs: Vec<Vec<f64>> = Vec::new();
    let mut teacher: Vec<Vec<f64>> = Vec::new();
    let mut rng = derived_rng(seed, stream::ATTACK, 5);
    for round in 0..dc.rounds {
        let mut x = Array2::from_shape_fn((dc.batch_size, dim), |_| rng.random_range(0.0..1.0));
        for _ in 0..dc.ascent_steps {
            let rows: Vec<Vec<f64>> = x.outer_iter().map(|r| r.to_vec()).collect();
            let zv = rows_to_array(&oracle.logits_batch(&rows)?, oracle.num_classes())?;
            let zs = student.logits(x.view())?;
            // victim logits are held fixed: d KL(pv || ps) / d zs = ps - pv
            let bs = &softmax_rows(&zs) - &softmax_rows(&zv);
            let g = student.input_vjp(x.view(), bs.view())?;
            x.zip_mut_with(&g, |xi, gi| *xi = (*xi + dc.step_size * gi.signum()).clamp(0.0, 1.0));
        }
        let rows: Vec<Vec<f64>> = x.outer_iter().map(|r| r.to_vec()).collect();
        teacher.extend(oracle.logits_batch(&rows)?);
        inputs.extend(rows);
        let set = relabeled(&inputs, vec![0; inputs.len()], oracle.num_classes())?;
        let c = TrainConfig {
            epochs: 1,
            lr0: cfg.extraction_lr,
            loss: Loss::KlToTeacher,
            milestones: vec![],
            seed: derive_seed(seed, stream::ATTACK, 100 + round as u64),
            ..cfg.train.clone()
        };
        student = train_sgd(&student, &set, &c, Some(&teacher))?;
    }
    Ok(student)
}
