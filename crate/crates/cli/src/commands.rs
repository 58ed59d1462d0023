//! Subcommand bodies. Each one opens a content-addressed run directory,
//! writes its artifacts once and returns the check outcome.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use dinfer_core::data::{LabeledSet, TaskPools};
use dinfer_core::embed::{read_embeddings_csv, write_embeddings_csv, Embedding, Membership};
use dinfer_core::experiment::{attack_seed, embed_with, feature_subset, train_victim, verdict_with, ExperimentConfig, PoolEmbeddings, World};
use dinfer_core::inference::{train_regressor, Decision, Regressor, RegressorConfig, Verdict};
use dinfer_core::model::{evaluate_accuracy, Model};
use dinfer_core::oracle::{LabelOracle, LocalOracle};
use dinfer_core::rng::{derive_seed, stream};
use dinfer_core::stealing::{run_attack, AttackOutcome, ThreatModel};
use dinfer_net::{serve_model, RemoteOracle, ServeMode, ServerConfig};

use crate::artifacts::{sha256_hex, CheckOutcome, Opened, RunDir};
use crate::checks::{self, SweepRow};
use crate::theory_suite;

/// Loads (or defaults) the config and applies flag overrides.
pub fn resolve_config(path: Option<&Path>, seed: Option<u64>, alpha: Option<f64>, m: Option<usize>) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str::<ExperimentConfig>(&text).with_context(|| format!("config {} does not match the schema", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    if let Some(a) = alpha {
        if !(a > 0.0 && a < 1.0) {
            bail!("--alpha must lie in (0, 1)");
        }
        cfg.inference.alpha = a;
    }
    if let Some(m) = m {
        cfg.inference.m = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
}

#[derive(Debug)]
pub struct RunReport {
    pub path: PathBuf,
    pub reused: bool,
    pub check: Option<CheckOutcome>,
}

/// Runs `body` in a fresh run directory, or returns the stored outcome when
/// the same command, config and inputs already ran.
fn in_run_dir(
    ctx: &Ctx,
    command: &str,
    args: &impl Serialize,
    body: impl FnOnce(&mut RunDir) -> Result<Option<CheckOutcome>>,
) -> Result<RunReport> {
    match RunDir::open(&ctx.out, command, &ctx.cfg, args)? {
        Opened::Existing(path, m) => Ok(RunReport { path, reused: true, check: m.check }),
        Opened::Fresh(mut dir) => {
            let check = body(&mut dir)?;
            let path = dir.path.clone();
            dir.finish(check.clone())?;
            Ok(RunReport { path, reused: false, check })
        }
    }
}

/// Digest of an input file, so a changed input gets a new run id.
fn file_digest(p: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(p).with_context(|| format!("reading {}", p.display()))?))
}

fn load_model(p: &Path) -> Result<Model> {
    Model::load(p).with_context(|| format!("loading checkpoint {}", p.display()))
}

fn check_model_matches(cfg: &ExperimentConfig, m: &Model, what: &str) -> Result<()> {
    if m.input_dim() != cfg.task.dim || m.num_classes() != cfg.task.num_classes {
        bail!(
            "{what} expects {}x{} but the task is {}x{}",
            m.input_dim(),
            m.num_classes(),
            cfg.task.dim,
            cfg.task.num_classes
        );
    }
    Ok(())
}

fn world(cfg: &ExperimentConfig, victim: Option<&Path>) -> Result<World> {
    Ok(match victim {
        None => World::build(cfg.clone())?,
        Some(p) => {
            let v = load_model(p)?;
            check_model_matches(cfg, &v, "victim")?;
            World::with_victim(cfg.clone(), TaskPools::generate(&cfg.task, &cfg.pools)?, Arc::new(v))?
        }
    })
}

pub fn parse_threats(s: &str, cfg: &ExperimentConfig) -> Result<Vec<ThreatModel>> {
    if s == "all" {
        return Ok(cfg.threats.clone());
    }
    s.split(',').map(|t| Ok(ThreatModel::parse(t.trim())?)).collect()
}

fn threat_label(t: &ThreatModel) -> String {
    match t {
        ThreatModel::Overlap { overlap_fraction } => format!("overlap-{overlap_fraction}"),
        other => other.name().to_string(),
    }
}

/// What a correct test should conclude for a threat, where that is known.
pub fn expected_decision(t: &ThreatModel) -> Option<Decision> {
    match t {
        ThreatModel::Independent => Some(Decision::Inconclusive),
        ThreatModel::Overlap { overlap_fraction } if *overlap_fraction == 0.0 => Some(Decision::Inconclusive),
        ThreatModel::Overlap { .. } => Some(Decision::Stolen),
        t if ThreatModel::headline().contains(t) => Some(Decision::Stolen),
        _ => None,
    }
}

fn write_attack(dir: &mut RunDir, out: &AttackOutcome, label: &str) -> Result<()> {
    dir.write(&format!("{label}.ckpt"), &out.model.to_bytes()?)?;
    dir.write_json(&format!("{label}.provenance.json"), &out.provenance)?;
    Ok(())
}

#[derive(Serialize)]
struct VictimSummary {
    victim_train_accuracy: f64,
    victim_test_accuracy: f64,
    independent_test_accuracy: Option<f64>,
    victim_checkpoint_hash: String,
}

pub fn train_victim_cmd(ctx: &Ctx) -> Result<RunReport> {
    in_run_dir(ctx, "train-victim", &(), |dir| {
        let cfg = &ctx.cfg;
        let pools = TaskPools::generate(&cfg.task, &cfg.pools)?;
        let victim = train_victim(cfg, &pools.victim)?;
        let data = dinfer_core::stealing::AttackData {
            victim_train: Some(&pools.victim),
            surrogate: Some(&pools.surrogate),
            own_private: Some(&pools.independent),
            test: Some(&pools.test),
        };
        let seed = attack_seed(cfg.seed, ThreatModel::Independent);
        let indep = run_attack(&victim, ThreatModel::Independent, &cfg.attack, data, seed)?;
        dir.write("victim.ckpt", &victim.to_bytes()?)?;
        write_attack(dir, &indep, "independent")?;
        dir.write_json(
            "summary.json",
            &VictimSummary {
                victim_train_accuracy: evaluate_accuracy(&victim, &pools.victim)?,
                victim_test_accuracy: evaluate_accuracy(&victim, &pools.test)?,
                independent_test_accuracy: indep.provenance.final_accuracy,
                victim_checkpoint_hash: victim.checksum()?,
            },
        )?;
        Ok(None)
    })
}

#[derive(Serialize)]
struct AttackArgs<'a> {
    threats: &'a [ThreatModel],
    victim: Option<String>,
}

pub fn attack_cmd(ctx: &Ctx, threat: &str, victim: Option<&Path>) -> Result<RunReport> {
    let threats = parse_threats(threat, &ctx.cfg)?;
    let args = AttackArgs { threats: &threats, victim: victim.map(file_digest).transpose()? };
    in_run_dir(ctx, "attack", &args, |dir| {
        let w = world(&ctx.cfg, victim)?;
        let outs: Vec<AttackOutcome> = threats.par_iter().map(|&t| w.attack(t)).collect::<dinfer_core::Result<_>>()?;
        for (t, o) in threats.iter().zip(&outs) {
            write_attack(dir, o, &threat_label(t))?;
        }
        Ok(None)
    })
}

/// Blocks serving `model` until the process is killed.
pub fn serve_cmd(model: &Path, bind: &str, logits: bool, budget: Option<u64>) -> Result<()> {
    let m = Arc::new(load_model(model)?);
    let cfg = ServerConfig {
        bind: bind.to_string(),
        mode: if logits { ServeMode::Logits } else { ServeMode::LabelOnly },
        max_queries_per_connection: budget,
        ..ServerConfig::default()
    };
    let h = serve_model(m, cfg)?;
    println!("listening on {}", h.addr());
    h.wait();
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// Pools the victim's regressor is trained on.
    Regressor,
    /// Pools the tester embeds through a suspect.
    Di,
}

fn split_sets(cfg: &ExperimentConfig, split: Split) -> Result<(LabeledSet, LabeledSet)> {
    let pools = TaskPools::generate(&cfg.task, &cfg.pools)?;
    let (r, d) = (cfg.regressor_pool, cfg.di_pool);
    Ok(match split {
        Split::Regressor => (pools.victim.range(0, r), pools.public.range(0, r)),
        Split::Di => (pools.victim.range(r, r + d), pools.public.range(r, r + d)),
    })
}

#[derive(Serialize)]
struct EmbedSidecar<'a> {
    config: &'a ExperimentConfig,
    split: Split,
    model: Option<String>,
    remote: Option<String>,
    queries: Option<u64>,
}

#[derive(Serialize)]
struct EmbedArgs {
    split: Split,
    model: Option<String>,
    remote: Option<String>,
}

pub fn embed_cmd(ctx: &Ctx, split: Split, model: Option<&Path>, remote: Option<&str>) -> Result<RunReport> {
    let model_hash = model.map(file_digest).transpose()?;
    let args = EmbedArgs { split, model: model_hash.clone(), remote: remote.map(str::to_string) };
    if model.is_some() == remote.is_some() {
        bail!("give exactly one of --model or --remote");
    }
    in_run_dir(ctx, "embed", &args, |dir| {
        let cfg = &ctx.cfg;
        let (private, public) = split_sets(cfg, split)?;
        let (emb, queries) = match (model, remote) {
            (Some(p), _) => {
                let m = load_model(p)?;
                check_model_matches(cfg, &m, "model")?;
                let o = LocalOracle::new(Arc::new(m));
                (embed_both(&o, Some(&o), &private, &public, cfg)?, Some(o.queries_used()))
            }
            (_, Some(addr)) => {
                let o = RemoteOracle::connect(addr, cfg.task.dim, cfg.task.num_classes)?;
                (embed_both(&o, None, &private, &public, cfg)?, Some(o.queries_used()))
            }
            _ => unreachable!(),
        };
        let path = dir.fresh_path("embeddings.csv")?;
        let sidecar = EmbedSidecar { config: cfg, split, model: model_hash.clone(), remote: remote.map(str::to_string), queries };
        write_embeddings_csv(&path, &emb, &sidecar)?;
        dir.adopt("embeddings.csv")?;
        dir.adopt("embeddings.json")?;
        Ok(None)
    })
}

fn embed_both(
    o: &dyn LabelOracle,
    local: Option<&LocalOracle>,
    private: &LabeledSet,
    public: &LabeledSet,
    cfg: &ExperimentConfig,
) -> Result<Vec<Embedding>> {
    let mut e = embed_with(o, local, private, Membership::Private, &cfg.embedding, cfg.seed)?;
    e.extend(embed_with(o, local, public, Membership::Public, &cfg.embedding, cfg.seed)?);
    Ok(e)
}

fn split_membership(e: Vec<Embedding>) -> Result<PoolEmbeddings> {
    let (private, public): (Vec<_>, Vec<_>) = e.into_iter().partition(|x| x.membership == Membership::Private);
    if private.is_empty() || public.is_empty() {
        bail!("embedding file needs both private and public rows");
    }
    Ok(PoolEmbeddings { private, public })
}

pub fn regress_cmd(ctx: &Ctx, embeddings: &Path) -> Result<RunReport> {
    let args = BTreeMap::from([("embeddings", file_digest(embeddings)?)]);
    in_run_dir(ctx, "regress", &args, |dir| {
        let e = read_embeddings_csv(embeddings)?;
        split_membership(e.clone())?;
        let rc = RegressorConfig { seed: derive_seed(ctx.cfg.seed, stream::REGRESSOR, 1), ..ctx.cfg.regressor.clone() };
        let reg = train_regressor(&e, &rc)?;
        if !reg.converged {
            eprintln!("warning: regressor does not score private points below public ones");
        }
        dir.write_json("regressor.json", &reg)?;
        Ok(None)
    })
}

fn verdict_check(v: &Verdict, threat: Option<&ThreatModel>) -> CheckOutcome {
    match threat.and_then(expected_decision) {
        Some(d) => checks::check_verdict(v, d),
        None => CheckOutcome { passed: true, failures: vec![] },
    }
}

#[derive(Serialize)]
struct InferArgs {
    regressor: Option<String>,
    embeddings: Option<String>,
    suspect: Option<String>,
    victim: Option<String>,
    threat: Option<ThreatModel>,
}

/// Either scores saved embeddings with a saved regressor, or embeds a
/// suspect checkpoint against a (trained or loaded) victim end to end.
pub fn infer_cmd(
    ctx: &Ctx,
    regressor: Option<&Path>,
    embeddings: Option<&Path>,
    suspect: Option<&Path>,
    victim: Option<&Path>,
    threat: Option<&str>,
) -> Result<RunReport> {
    let threat = threat.map(ThreatModel::parse).transpose()?;
    let args = InferArgs {
        regressor: regressor.map(file_digest).transpose()?,
        embeddings: embeddings.map(file_digest).transpose()?,
        suspect: suspect.map(file_digest).transpose()?,
        victim: victim.map(file_digest).transpose()?,
        threat,
    };
    let name = threat.as_ref().map(threat_label);
    in_run_dir(ctx, "infer", &args, |dir| {
        let cfg = &ctx.cfg;
        let v = match (regressor, embeddings, suspect) {
            (Some(r), Some(e), None) => {
                let reg: Regressor = serde_json::from_slice(&std::fs::read(r).with_context(|| format!("reading {}", r.display()))?)
                    .with_context(|| format!("{} is not a regressor", r.display()))?;
                let pools = split_membership(read_embeddings_csv(e)?)?;
                verdict_with(&reg, &pools, &cfg.inference, cfg.inference.m, name.as_deref())?
            }
            (None, None, Some(s)) => {
                let w = world(cfg, victim)?;
                let m = load_model(s)?;
                check_model_matches(cfg, &m, "suspect")?;
                let emb = w.embed_model(&m)?;
                w.verdict(&emb, cfg.inference.m, name.as_deref())?
            }
            _ => bail!("give --regressor with --embeddings, or --suspect"),
        };
        dir.write_json("verdict.json", &v)?;
        Ok(Some(verdict_check(&v, threat.as_ref())))
    })
}

fn write_rows(dir: &mut RunDir, name: &str, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    dir.write(name, &w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)?;
    Ok(())
}

#[derive(Serialize)]
struct SweepArgs {
    threat: ThreatModel,
    victim: Option<String>,
}

fn single_threat(s: &str) -> Result<ThreatModel> {
    Ok(ThreatModel::parse(s)?)
}

pub fn sweep_m_cmd(ctx: &Ctx, threat: &str, victim: Option<&Path>) -> Result<RunReport> {
    let t = single_threat(threat)?;
    let args = SweepArgs { threat: t, victim: victim.map(file_digest).transpose()? };
    in_run_dir(ctx, "sweep-m", &args, |dir| {
        let w = world(&ctx.cfg, victim)?;
        let suspect = w.attack(t)?;
        let emb = w.embed_model(&suspect.model)?;
        let label = threat_label(&t);
        let rows: Vec<SweepRow> = ctx
            .cfg
            .m_grid
            .par_iter()
            .map(|&m| Ok(SweepRow::new(t.name(), None, emb.private[0].features.len(), &w.verdict(&emb, m, Some(&label))?)))
            .collect::<Result<_>>()?;
        write_rows(dir, "sweep_m.csv", &rows)?;
        dir.write_json("provenance.json", &suspect.provenance)?;
        Ok(Some(match expected_decision(&t) {
            Some(Decision::Stolen) => checks::check_m_sweep(&rows, ctx.cfg.inference.alpha),
            Some(Decision::Inconclusive) => no_rejections(&rows, ctx.cfg.inference.alpha),
            None => CheckOutcome { passed: true, failures: vec![] },
        }))
    })
}

fn no_rejections(rows: &[SweepRow], alpha: f64) -> CheckOutcome {
    let failures: Vec<String> = rows
        .iter()
        .filter(|r| r.aggregated_p < alpha)
        .map(|r| format!("m={} rejected (p={:.3e})", r.m, r.aggregated_p))
        .collect();
    CheckOutcome { passed: failures.is_empty(), failures }
}

pub fn sweep_embed_cmd(ctx: &Ctx, threat: &str, victim: Option<&Path>) -> Result<RunReport> {
    let t = single_threat(threat)?;
    let args = SweepArgs { threat: t, victim: victim.map(file_digest).transpose()? };
    in_run_dir(ctx, "sweep-embed", &args, |dir| {
        let cfg = &ctx.cfg;
        let w = world(cfg, victim)?;
        let suspect = w.attack(t)?;
        let emb = w.embed_model(&suspect.model)?;
        let label = threat_label(&t);
        let rows: Vec<SweepRow> = cfg
            .feature_grid
            .par_iter()
            .map(|&f| {
                let idx = feature_subset(&cfg.embedding, cfg.task.num_classes, f);
                Ok(SweepRow::new(t.name(), None, f, &w.verdict_on_features(&emb, &idx, cfg.inference.m, Some(&label))?))
            })
            .collect::<Result<_>>()?;
        write_rows(dir, "sweep_embed.csv", &rows)?;
        dir.write_json("provenance.json", &suspect.provenance)?;
        Ok(Some(match expected_decision(&t) {
            Some(d) => checks::check_embed_sweep(&rows, d),
            None => CheckOutcome { passed: true, failures: vec![] },
        }))
    })
}

#[derive(Serialize)]
struct OverlapArgs {
    fractions: Vec<f64>,
    victim: Option<String>,
}

pub fn sweep_overlap_cmd(ctx: &Ctx, victim: Option<&Path>) -> Result<RunReport> {
    let cfg = &ctx.cfg;
    let args = OverlapArgs { fractions: cfg.overlap_grid.clone(), victim: victim.map(file_digest).transpose()? };
    in_run_dir(ctx, "sweep-overlap", &args, |dir| {
        let w = world(cfg, victim)?;
        let rows: Vec<(SweepRow, AttackOutcome)> = cfg
            .overlap_grid
            .par_iter()
            .map(|&f| {
                let t = ThreatModel::Overlap { overlap_fraction: f };
                let a = w.attack(t)?;
                let emb = w.embed_model(&a.model)?;
                let v = w.verdict(&emb, cfg.inference.m, Some(&threat_label(&t)))?;
                Ok((SweepRow::new("overlap", Some(f), emb.private[0].features.len(), &v), a))
            })
            .collect::<Result<_>>()?;
        let (rows, attacks): (Vec<SweepRow>, Vec<AttackOutcome>) = rows.into_iter().unzip();
        write_rows(dir, "sweep_overlap.csv", &rows)?;
        let prov: Vec<_> = attacks.iter().map(|a| &a.provenance).collect();
        dir.write_json("provenance.json", &prov)?;
        Ok(Some(checks::check_overlap_sweep(&rows, cfg.inference.alpha)))
    })
}

pub fn theory_cmd(ctx: &Ctx) -> Result<RunReport> {
    let seed = ctx.cfg.seed;
    in_run_dir(ctx, "theory", &(), |dir| {
        let suite = theory_suite::run(seed)?;
        dir.write_json("theory.json", &suite)?;
        Ok(Some(suite.outcome()))
    })
}
