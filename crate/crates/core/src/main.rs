use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dagh::cli::{self, DataSource, LabelFiles};
use dagh::config::ExperimentConfig;
use dagh::datasets::Split;
use dagh::metrics::EvalSettings;
use dagh::{Error, Result};

/// Attention-guided deep hashing: training, encoding, retrieval and evaluation.
#[derive(Parser)]
#[command(name = "dagh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = true)]
struct Source {
    /// Dataset directory written by a training run (data/<split>).
    #[arg(long, conflicts_with_all = ["config", "split"])]
    dataset: Option<PathBuf>,
    /// Experiment file whose dataset section supplies the images.
    #[arg(long, requires = "split")]
    config: Option<PathBuf>,
    /// Split of the experiment dataset: train, query or gallery.
    #[arg(long, requires = "config")]
    split: Option<Split>,
}

impl Source {
    fn resolve(self) -> DataSource {
        match (self.dataset, self.config, self.split) {
            (Some(d), _, _) => DataSource::Dir(d),
            (None, Some(config), Some(split)) => DataSource::Config { config, split },
            _ => unreachable!("clap enforces a complete source"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train both stages and write a run directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides output_dir and DAGH_OUTPUT_DIR.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Encode a dataset into a packed code file.
    Encode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        source: Source,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank gallery codes for every query code and write a CSV.
    Retrieve {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep only the best N results per query.
        #[arg(long)]
        top: Option<usize>,
    },
    /// Compute mAP, P@H<=2, PR curve, P@N and bit correlation.
    Evaluate {
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        /// JSON list of label lists; defaults to the code file sidecar.
        #[arg(long)]
        query_labels: Option<PathBuf>,
        #[arg(long)]
        gallery_labels: Option<PathBuf>,
        /// Experiment file whose [eval] section sets cutoff and N values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        cutoff: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render charts from evaluation outputs.
    Plot {
        #[arg(long)]
        report: PathBuf,
        /// Defaults to the report directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render attention maps of a checkpoint for the first images of a dataset.
    PlotAttention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate once per value of one config parameter.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Dotted key, for example train.lambda or model.code_length.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train { config, output } => {
            let m = cli::train(&config, output.as_deref())?;
            println!(
                "trained on {} images: stage-1 loss {:.4} -> {:.4}, bit agreement {:.4}",
                m.train_images,
                m.stage1_first_loss.unwrap_or(f64::NAN),
                m.stage1_last_loss.unwrap_or(f64::NAN),
                m.bit_agreement
            );
        }
        Command::Encode { checkpoint, source, out } => {
            let meta = cli::encode(&checkpoint, &source.resolve(), &out)?;
            println!(
                "encoded {} images to {} bits, {:.1} us per image",
                meta.count, meta.code_length, meta.encode_us_per_image
            );
        }
        Command::Retrieve { queries, gallery, out, top } => {
            let rows = cli::retrieve(&queries, &gallery, &out, top)?;
            println!("wrote {rows} ranking rows to {}", out.display());
        }
        Command::Evaluate {
            queries,
            gallery,
            query_labels,
            gallery_labels,
            config,
            cutoff,
            out,
        } => {
            let mut settings = match config {
                Some(p) => ExperimentConfig::load(&p)?.eval,
                None => EvalSettings::default(),
            };
            if let Some(c) = cutoff {
                if c == 0 {
                    return Err(Error::Config("--cutoff must be at least 1".into()));
                }
                settings.cutoff = c;
            }
            let labels = LabelFiles {
                queries: query_labels,
                gallery: gallery_labels,
            };
            let r = cli::evaluate(&queries, &gallery, &labels, &settings, &out)?;
            println!(
                "K = {}: mAP {:.4}, P@H<=2 {:.4}, mean |bit corr| {:.4}",
                r.code_length, r.map, r.p_at_h2, r.bit_correlation.mean_abs_off_diagonal
            );
        }
        Command::Plot { report, out } => {
            let out = out.unwrap_or_else(|| report.clone());
            for p in cli::plot(&report, &out)? {
                println!("{}", p.display());
            }
        }
        Command::PlotAttention {
            checkpoint,
            source,
            count,
            out,
        } => {
            for p in cli::plot_attention(&checkpoint, &source.resolve(), count, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Sweep {
            config,
            param,
            values,
            output,
        } => {
            for r in cli::sweep(&config, &param, &values, output.as_deref())? {
                println!("{param} = {}: mAP {:.4}, P@H<=2 {:.4}", r.value, r.map, r.p_at_h2);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
