use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gwcond::analysis::{figure_data, MutationParams};
use gwcond::config::ModelConfig;
use gwcond::error::{Error, Result};
use gwcond::events::ClassId;
use gwcond::oracle::{run_grid, run_injected_fault, Preset};
use gwcond::probs::{build, closed_form_table, BuildOptions, ConditionedModel};
use gwcond::sampler::{sample_batch, sample_unconditioned_batch, Target};

/// Galton-Watson trees conditioned on recursive events.
#[derive(Parser)]
#[command(name = "gwcond", version)]
struct Cli {
    /// Model configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed; overrides the configuration's seed (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; probs and sample print to stdout without it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for sampling (0 = all cores). Output does not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Print the configuration in explicit canonical form and exit.
    #[arg(long)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Class probability table as CSV rows t,l,i,p.
    Probs {
        #[arg(long, value_enum, default_value_t = Engine::Auto)]
        engine: Engine,
    },
    /// Draw trees, one per line.
    Sample {
        #[arg(long, default_value_t = 1)]
        n: usize,
        /// Condition on this class of the root; unconditioned without it.
        #[arg(long)]
        class: Option<u32>,
        /// Draw from the class mixture instead (same law as unconditioned).
        #[arg(long, conflicts_with = "class")]
        mixture: bool,
        /// Annotate every node with its class.
        #[arg(long)]
        annotate: bool,
    },
    /// Check the construction against brute-force enumeration.
    Verify {
        #[arg(long, default_value = "default")]
        preset: String,
        /// Run one instance built from deliberately wrong predicates instead.
        #[arg(long)]
        inject_fault: bool,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
    },
    /// Series data for the mutation-model figures.
    Figures {
        /// 1, 2 or 3; all three without it.
        #[arg(long)]
        figure: Option<u32>,
        /// Mutation parameters; the checked-in set without it.
        #[arg(long)]
        params: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Engine {
    /// Closed form when the model admits it, enumeration otherwise.
    Auto,
    Enumerate,
    ClosedForm,
}

enum Failure {
    Error(Error),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => ExitCode::from(4),
        Err(Failure::Error(e)) => {
            eprintln!("gwcond: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Parse { .. } | Error::NotAPartition { .. } | Error::TreeSyntax { .. } => 2,
        Error::ImpossibleEvent { .. } => 3,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> Result<ModelConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config {
            line: None,
            message: "--config PATH is required".into(),
        })?;
    ModelConfig::load(path)
}

/// Writes to `dir/name`, or stdout without a directory.
fn emit(dir: Option<&Path>, name: &str, text: &str) -> Result<()> {
    match dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            let path = d.join(name);
            std::fs::write(&path, text)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: &Cli) -> std::result::Result<(), Failure> {
    if cli.dump_config {
        let cfg = load_config(cli)?;
        emit(cli.out.as_deref(), "config.toml", &cfg.to_toml())?;
        return Ok(());
    }
    let Some(command) = &cli.command else {
        return Err(Error::Config {
            line: None,
            message: "no subcommand given (probs, sample, verify, figures)".into(),
        }
        .into());
    };
    match command {
        Command::Probs { engine } => probs(cli, *engine)?,
        Command::Sample {
            n,
            class,
            mixture,
            annotate,
        } => sample(cli, *n, *class, *mixture, *annotate)?,
        Command::Verify {
            preset,
            inject_fault,
            tolerance,
        } => verify(preset, *inject_fault, *tolerance)?,
        Command::Figures { figure, params } => figures(cli, *figure, params.as_deref())?,
    }
    Ok(())
}

fn probs(cli: &Cli, engine: Engine) -> Result<()> {
    let cfg = load_config(cli)?;
    let closed = match engine {
        Engine::Enumerate => None,
        Engine::ClosedForm => Some(closed_form_table(&cfg.event, &cfg.params)?),
        Engine::Auto => closed_form_table(&cfg.event, &cfg.params).ok(),
    };
    let table = match closed {
        Some(t) => t,
        None => {
            let options = BuildOptions {
                conditional: false,
                ..BuildOptions::default()
            };
            let built = build::<f64>(&cfg.event, &cfg.params, &options)?;
            for w in &built.table.warnings {
                eprintln!("warning: {w}");
            }
            built.table
        }
    };
    emit(cli.out.as_deref(), "probs.csv", &table.to_csv())
}

fn sample(cli: &Cli, n: usize, class: Option<u32>, mixture: bool, annotate: bool) -> Result<()> {
    let cfg = load_config(cli)?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let root = cfg.root_type();
    let trees = if class.is_none() && !mixture {
        sample_unconditioned_batch(&cfg.params, root, n, seed, cli.threads)?
    } else {
        let target = match class {
            Some(c) if c >= 1 && c as usize <= cfg.event.partition.m() => Target::Class(ClassId::new(c)?),
            Some(c) => {
                return Err(Error::Config {
                    line: None,
                    message: format!("--class {c} not in 1..={}", cfg.event.partition.m()),
                })
            }
            None => Target::Mixture,
        };
        let model = ConditionedModel::build(cfg.event.clone(), cfg.params.clone())?;
        sample_batch(&model, root, target, n, seed, cli.threads)?
    };
    let partition = &cfg.event.partition;
    let mut out = String::new();
    for tree in &trees {
        if annotate {
            let classes = partition.classify_preorder(tree, cfg.event.height)?;
            out.push_str(&tree.to_annotated_string(&classes));
        } else {
            out.push_str(&tree.to_string());
        }
        out.push('\n');
    }
    emit(cli.out.as_deref(), "samples.txt", &out)
}

fn verify(preset: &str, inject_fault: bool, tolerance: f64) -> std::result::Result<(), Failure> {
    let reports = if inject_fault {
        run_injected_fault(tolerance)?
    } else {
        run_grid(Preset::parse(preset)?, tolerance)?
    };
    let mut worst = 0.0f64;
    let (mut passed, mut failed, mut skipped) = (0, 0, 0);
    for r in &reports {
        println!("{r}");
        if r.skipped.is_some() {
            skipped += 1;
            continue;
        }
        worst = worst.max(r.max_tv).max(r.mixture_gap);
        if r.passed {
            passed += 1;
        } else {
            failed += 1;
        }
    }
    let mut summary = String::new();
    let _ = write!(
        summary,
        "{} instances: {passed} passed, {failed} failed, {skipped} skipped; worst TV {worst:.3e}",
        reports.len()
    );
    println!("{summary}");
    if failed > 0 {
        Err(Failure::Verification)
    } else {
        Ok(())
    }
}

fn figures(cli: &Cli, figure: Option<u32>, params: Option<&Path>) -> Result<()> {
    let params = match params {
        Some(p) => MutationParams::from_toml(&std::fs::read_to_string(p)?)?,
        None => MutationParams::checked_in(),
    };
    let ids = match figure {
        Some(f @ 1..=3) => vec![f],
        Some(f) => return Err(Error::Config {
            line: None,
            message: format!("no figure {f}; choose 1, 2 or 3"),
        }),
        None => vec![1, 2, 3],
    };
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    for id in ids {
        for (name, csv) in figure_data(id, &params)? {
            emit(Some(&dir), &name, &csv)?;
        }
    }
    Ok(())
}
