use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use dinfer_cli::commands::{self, Ctx, RunReport, Split};

#[derive(Parser)]
#[command(name = "dinfer", version, about = "Dataset inference experiments at desk scale")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (JSON); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed (task draw, training, attacks, inference).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Root directory for run outputs.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Significance level.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Points per side in each test.
    #[arg(long, global = true)]
    m: Option<usize>,
    /// Exit with status 2 when the command's acceptance check fails.
    #[arg(long, global = true)]
    check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train the victim and its independent counterpart.
    TrainVictim,
    /// Run one threat model, a comma list, or `all` from the config.
    Attack {
        #[arg(long, default_value = "all")]
        threat: String,
        #[arg(long)]
        victim: Option<PathBuf>,
    },
    /// Serve a checkpoint over the line protocol.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        bind: String,
        /// Answer logit requests too.
        #[arg(long)]
        logits: bool,
        /// Queries allowed per connection.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Embed the private and public pools through a model.
    Embed {
        #[arg(long, value_enum, default_value = "di")]
        split: Split,
        #[arg(long, conflicts_with = "remote")]
        model: Option<PathBuf>,
        /// Address of a `dinfer serve` instance.
        #[arg(long)]
        remote: Option<String>,
    },
    /// Train the confidence regressor from an embedding CSV.
    Regress {
        #[arg(long)]
        embeddings: PathBuf,
    },
    /// Produce a verdict for a suspect.
    Infer {
        #[arg(long, requires = "embeddings")]
        regressor: Option<PathBuf>,
        #[arg(long, requires = "regressor")]
        embeddings: Option<PathBuf>,
        #[arg(long, conflicts_with_all = ["regressor", "embeddings"])]
        suspect: Option<PathBuf>,
        #[arg(long)]
        victim: Option<PathBuf>,
        /// Threat the suspect came from; sets the expected decision for --check.
        #[arg(long)]
        threat: Option<String>,
    },
    /// p-value against the number of revealed samples.
    SweepM {
        #[arg(long, default_value = "source")]
        threat: String,
        #[arg(long)]
        victim: Option<PathBuf>,
    },
    /// p-value against the number of embedding features.
    SweepEmbed {
        #[arg(long, default_value = "source")]
        threat: String,
        #[arg(long)]
        victim: Option<PathBuf>,
    },
    /// Verdicts for adversaries holding a fraction of the victim's data.
    SweepOverlap {
        #[arg(long)]
        victim: Option<PathBuf>,
    },
    /// Monte Carlo checks of the linear-model closed forms.
    Theory,
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PK_THREADS") {
        let n: usize = v.parse().map_err(|_| anyhow::anyhow!("PK_THREADS must be a positive integer"))?;
        if n == 0 {
            anyhow::bail!("PK_THREADS must be a positive integer");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<Option<RunReport>> {
    init_threads()?;
    let g = cli.global;
    if let Command::Serve { model, bind, logits, budget } = &cli.command {
        commands::serve_cmd(model, bind, *logits, *budget)?;
        return Ok(None);
    }
    let ctx = Ctx { cfg: commands::resolve_config(g.config.as_deref(), g.seed, g.alpha, g.m)?, out: g.out };
    let report = match &cli.command {
        Command::TrainVictim => commands::train_victim_cmd(&ctx)?,
        Command::Attack { threat, victim } => commands::attack_cmd(&ctx, threat, victim.as_deref())?,
        Command::Embed { split, model, remote } => commands::embed_cmd(&ctx, *split, model.as_deref(), remote.as_deref())?,
        Command::Regress { embeddings } => commands::regress_cmd(&ctx, embeddings)?,
        Command::Infer { regressor, embeddings, suspect, victim, threat } => commands::infer_cmd(
            &ctx,
            regressor.as_deref(),
            embeddings.as_deref(),
            suspect.as_deref(),
            victim.as_deref(),
            threat.as_deref(),
        )?,
        Command::SweepM { threat, victim } => commands::sweep_m_cmd(&ctx, threat, victim.as_deref())?,
        Command::SweepEmbed { threat, victim } => commands::sweep_embed_cmd(&ctx, threat, victim.as_deref())?,
        Command::SweepOverlap { victim } => commands::sweep_overlap_cmd(&ctx, victim.as_deref())?,
        Command::Theory => commands::theory_cmd(&ctx)?,
        Command::Serve { .. } => unreachable!(),
    };
    Ok(Some(report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let check = cli.global.check;
    let report = match run(cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let Some(r) = report else { return ExitCode::SUCCESS };
    println!("{}{}", r.path.display(), if r.reused { " (existing run)" } else { "" });
    if let Some(c) = &r.check {
        for f in &c.failures {
            eprintln!("check failed: {f}");
        }
        if check && !c.passed {
            return ExitCode::from(2);
        }
    }
    ExitCode::SUCCESS
}
