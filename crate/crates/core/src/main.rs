use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use marginmix::eval::{dump_mixture_embeddings, SnrRange, UttRef};
use marginmix::experiments::{ExperimentConfig, Lab, ResultTable, System, TestSet, EVAL_ID_OFFSET};
use marginmix::loss::Mixing;
use marginmix::mixup::BetaParams;
use marginmix::model::{load_checkpoint, save_checkpoint, train};
use marginmix::signal::{generate_pool, write_manifest};
use marginmix::{seed, Error, Result};

#[derive(Parser)]
#[command(name = "marginmix", version, about = "Margin-mixup speaker-verification experiments on synthetic speakers")]
struct Cli {
    /// Flat key = value configuration file; unset keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    Baseline,
    MarginMixup,
    A,
    B,
    C,
}

#[derive(Subcommand)]
enum Command {
    /// Writes the training and evaluation speaker manifests.
    GenPool,
    /// Trains one system; writes a checkpoint and the training log.
    Train {
        #[arg(long, value_enum, default_value = "margin-mixup")]
        system: SystemArg,
        /// Symmetric beta parameter; defaults to the configured one.
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Scores the configured trial set with a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Interferer SNR in dB; omit for the clean set, `range` for the
        /// configured overlap range.
        #[arg(long)]
        snr: Option<String>,
    },
    /// Baseline vs margin-mixup on clean and overlapped trials.
    Headline,
    /// Full margin-mixup against the A, B and C ablations.
    Ablation,
    /// One margin-mixup system per alpha (= beta).
    BetaSweep {
        /// Comma-separated; defaults to the configured grid.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Both systems at each fixed interferer SNR.
    SnrSweep {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Option<Vec<f64>>,
    },
    /// Embeddings of two evaluation utterances and their mixtures.
    DumpEmbeddings {
        /// Checkpoint to use; trains margin-mixup when omitted.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Target utterance as `speaker/index`; defaults to the first
        /// evaluation speaker.
        #[arg(long)]
        a: Option<UttRef>,
        /// Interferer utterance; defaults to the second evaluation speaker.
        #[arg(long)]
        b: Option<UttRef>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,2,5,10,20")]
        snrs: Vec<f64>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::parse(&fs::read_to_string(p)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    println!("wrote {}", dir.join(name).display());
    Ok(())
}

fn write_meta(dir: &Path, cfg: &ExperimentConfig, command: &str) -> Result<()> {
    write(dir, "meta.txt", &format!("command = {command}\nseed = {}\nconfig_hash = {}\n", cfg.seed, cfg.hash()))?;
    write(dir, "config.txt", &cfg.to_text())
}

fn write_table(dir: &Path, name: &str, t: &ResultTable) -> Result<()> {
    for r in t.rows() {
        println!("{:<16} {:<12} {:6.2}%", r.system, r.test_set, 100.0 * r.eer);
    }
    write(dir, name, &t.to_csv()?)
}

fn system_of(arg: SystemArg, beta: BetaParams) -> System {
    let mixing = match arg {
        SystemArg::Baseline => return System::Baseline,
        SystemArg::MarginMixup => Mixing::FULL,
        SystemArg::A => Mixing { margin: false, loss: true },
        SystemArg::B => Mixing { margin: true, loss: false },
        SystemArg::C => Mixing::NONE,
    };
    System::Mixup { beta, mixing }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = &cli.out;
    fs::create_dir_all(out)?;
    match &cli.command {
        Command::GenPool => {
            let sr = cfg.synth.sample_rate;
            let train_pool = generate_pool(cfg.n_speakers, 0, &cfg.pool, sr, cfg.seed)?;
            let eval_pool = generate_pool(
                cfg.eval_speakers,
                EVAL_ID_OFFSET,
                &cfg.pool,
                sr,
                seed::derive(cfg.seed, &[seed::tag::EVAL_POOL]),
            )?;
            write(out, "train_pool.txt", &write_manifest(&train_pool))?;
            write(out, "eval_pool.txt", &write_manifest(&eval_pool))?;
            write_meta(out, &cfg, "gen-pool")?;
        }
        Command::Train { system, alpha } => {
            let beta = match alpha {
                Some(a) => BetaParams::symmetric(*a)?,
                None => cfg.mixup,
            };
            let lab = Lab::new(&cfg, cfg.seed)?;
            let tc = system_of(*system, beta).train_config(&cfg.train);
            let outcome = train(lab.bank(), &tc, cfg.seed)?;
            if let Some(last) = outcome.log.last() {
                println!("final loss {:.4} after {} steps", last.loss, outcome.log.len());
            }
            write(out, "model.ckpt", &save_checkpoint(&outcome.model))?;
            write(out, "train_log.csv", &outcome.log_csv())?;
            write_meta(out, &cfg, "train")?;
        }
        Command::Eval { checkpoint, snr } => {
            let model = load_checkpoint(&fs::read_to_string(checkpoint)?)?;
            let set = match snr.as_deref() {
                None => TestSet::Clean,
                Some("range") => TestSet::Overlapped(cfg.overlap_snr),
                Some(v) => {
                    let db: f64 = v
                        .parse()
                        .map_err(|e| Error::InvalidArgument(format!("--snr {v:?}: {e}")))?;
                    TestSet::Overlapped(SnrRange::new(db, db)?)
                }
            };
            let lab = Lab::new(&cfg, cfg.seed)?;
            let ev = lab.evaluate_model(&model, set)?;
            println!("EER raw {:.2}%  s-norm {:.2}%", 100.0 * ev.eer_raw, 100.0 * ev.eer_norm);
            write(out, "scores.csv", &ev.scores.to_csv())?;
            write(out, "eer.txt", &format!("eer_raw = {}\neer_norm = {}\n", ev.eer_raw, ev.eer_norm))?;
            write_meta(out, &cfg, "eval")?;
        }
        Command::Headline => {
            let t = Lab::new(&cfg, cfg.seed)?.headline()?;
            write_table(out, "headline.csv", &t)?;
            write_meta(out, &cfg, "headline")?;
        }
        Command::Ablation => {
            let t = Lab::new(&cfg, cfg.seed)?.ablation()?;
            write_table(out, "ablation.csv", &t)?;
            write_meta(out, &cfg, "ablation")?;
        }
        Command::BetaSweep { alphas } => {
            let alphas = alphas.clone().unwrap_or_else(|| cfg.beta_alphas.clone());
            let t = Lab::new(&cfg, cfg.seed)?.beta_sweep(&alphas)?;
            write_table(out, "beta_sweep.csv", &t)?;
            write_meta(out, &cfg, "beta-sweep")?;
        }
        Command::SnrSweep { grid } => {
            let grid = grid.clone().unwrap_or_else(|| cfg.snr_grid.clone());
            let t = Lab::new(&cfg, cfg.seed)?.snr_sweep(&grid)?;
            write_table(out, "snr_sweep.csv", &t)?;
            write_meta(out, &cfg, "snr-sweep")?;
        }
        Command::DumpEmbeddings { checkpoint, a, b, snrs } => {
            let mut lab = Lab::new(&cfg, cfg.seed)?;
            let model = match checkpoint {
                Some(p) => load_checkpoint(&fs::read_to_string(p)?)?,
                None => lab.model(System::margin_mixup(cfg.mixup))?.clone(),
            };
            let a = a.unwrap_or(UttRef { speaker: EVAL_ID_OFFSET, index: 0 });
            let b = b.unwrap_or(UttRef { speaker: EVAL_ID_OFFSET + 1, index: 0 });
            let table = dump_mixture_embeddings(&model, lab.source(), a, b, snrs, &cfg.train.features)?;
            write(out, "embeddings.csv", &table.to_csv())?;
            write_meta(out, &cfg, "dump-embeddings")?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
