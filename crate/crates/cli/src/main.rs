use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wiretap_cli::commands;
use wiretap_cli::config::{parse_bands, ExperimentConfig, Overrides};
use wiretap_cli::output::run_dir;
use wiretap_cli::CliError;

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Privacy weight; a comma-separated list for sweep and oracle.
    #[arg(long, global = true, value_delimiter = ',')]
    lambda: Vec<f64>,
    /// Bob's crossover probability on a single-band channel.
    #[arg(long = "eps-b", global = true)]
    eps_b: Option<f64>,
    /// Eve's crossover probability; a comma-separated list for sweep.
    #[arg(long = "eps-e", global = true, value_delimiter = ',')]
    eps_e: Vec<f64>,
    /// Bands as width:eps_b:eps_e, comma separated.
    #[arg(long, global = true)]
    bands: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the glyph dataset and a preview grid.
    GenData,
    /// Train one encoder/decoder pair against Eve.
    Train,
    /// Train and evaluate over a grid of lambda, eps_E and seeds.
    Sweep,
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train over parallel bands and report per-band leakage.
    Parallel,
    /// Exact frontier on a small discrete system.
    Oracle,
    /// Finite-difference checks of every gradient.
    Gradcheck {
        /// Deliberately corrupt one gradient; the checks must then fail.
        #[arg(long)]
        corrupt: bool,
    },
}

/// Privacy-aware source coding over a binary symmetric wiretap channel.
///
/// Outputs go under $WIRETAP_OUT (default ./runs), one directory per command.
#[derive(Parser)]
#[command(name = "wiretap", version)]
struct Full {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn resolve(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let overrides = Overrides {
        seed: common.seed,
        lambdas: common.lambda.clone(),
        eps_b: common.eps_b,
        eps_e: common.eps_e.clone(),
        bands: common.bands.as_deref().map(parse_bands).transpose()?,
    };
    cfg.apply_overrides(&overrides)?;
    Ok(cfg)
}

fn run(cli: Full) -> Result<(), CliError> {
    let cfg = resolve(&cli.common)?;
    let dir = |name: &str| run_dir(cfg.output.dir.as_deref(), name);
    match cli.command {
        Command::GenData => {
            let d = dir("gen-data")?;
            let (train, test) = commands::gen_data(&cfg, &d)?;
            println!("wrote {train} training and {test} test glyphs to {}", d.display());
        }
        Command::Train => {
            let d = dir("train")?;
            let history = commands::train_model(&cfg, &d)?;
            if let Some(r) = history.last() {
                println!(
                    "epoch {}: distortion {:.4}, eve bound {:.4}, total {:.4}",
                    r.epoch + 1,
                    r.distortion_per_image,
                    r.eve_bound,
                    r.total
                );
            }
            println!("outputs in {}", d.display());
        }
        Command::Sweep => {
            let d = dir("sweep")?;
            let rows = commands::sweep(&cfg, &d)?;
            let failed = rows.iter().filter(|r| r.metrics.is_none()).count();
            println!("{} cells, {failed} failed; outputs in {}", rows.len(), d.display());
        }
        Command::Eval { checkpoint } => {
            let d = dir("eval")?;
            let row = commands::eval(&cfg, &checkpoint, &d)?;
            println!(
                "distortion {:.4}, leakage {:.4} bits, adversary {:.3}, eve reconstructions {:.3}",
                row.cell.bob_distortion, row.cell.mine_leakage_bits, row.cell.adversary.t_accuracy, row.eve_recon_t_acc
            );
        }
        Command::Parallel => {
            let d = dir("parallel")?;
            for b in commands::parallel(&cfg, &d)? {
                println!(
                    "band {} [{}, {}) eps_b {} eps_e {}: leakage {:.4} bits, adversary {:.3}",
                    b.band, b.start, b.end, b.eps_b, b.eps_e, b.mine_leakage_bits, b.adversary.t_accuracy
                );
            }
        }
        Command::Oracle => {
            let d = dir("oracle")?;
            if cfg.oracle.eps_b == cfg.oracle.eps_e {
                println!("privacy-funnel regime: Bob and Eve see the same channel");
            }
            for p in commands::oracle(&cfg, &d)? {
                println!(
                    "lambda {:>6}: distortion {:.4}, I(S;Y_B) {:.4}, I(T;Y_E) {:.4}",
                    p.lambda, p.terms.distortion, p.terms.utility, p.terms.leakage
                );
            }
        }
        Command::Gradcheck { corrupt } => {
            let lines = commands::gradcheck(corrupt)?;
            for l in &lines {
                println!("{} {:<28} {}", if l.passed { "ok  " } else { "FAIL" }, l.name, l.detail);
            }
            let failed = lines.iter().filter(|l| !l.passed).count();
            if failed > 0 {
                return Err(CliError::Numeric(format!("{failed} gradient checks failed")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Full::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
