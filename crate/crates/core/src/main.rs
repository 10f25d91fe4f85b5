use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use malregion::classifier::Model;
use malregion::config::Config;
use malregion::features::{analyze, IdfFile, IdfTable};
use malregion::pipeline::{
    classify_snapshot, extract_corpus, idf_path_for, load_features, load_labels, read_corpus,
    render_report, train_model, write_features,
};
use malregion::snapshot::parse_snapshot;
use malregion::strings::ScoreOverrides;
use malregion::{Error, Result};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

#[derive(Parser)]
#[command(
    name = "malregion",
    version,
    about = "Static malware detection from suspicious control-flow regions"
)]
struct Cli {
    /// JSON object mapping string text to a score in [0, 10].
    #[arg(long, global = true, value_name = "PATH")]
    string_scores: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract feature vectors of every snapshot in a directory.
    Extract {
        #[arg(long)]
        corpus: PathBuf,
        /// CSV of `binary_id,label`.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Feature file; the IDF table is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier on a feature file.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Score one snapshot.
    Classify {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        idf: PathBuf,
    },
    /// Print the strings, seeds and regions found in one snapshot.
    Inspect {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Trigram weights use this table instead of an empty one.
        #[arg(long)]
        idf: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    path.map_or_else(|| Ok(Config::default()), Config::load)
}

fn load_overrides(path: Option<&Path>) -> Result<Option<ScoreOverrides>> {
    path.map(ScoreOverrides::load).transpose()
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    let overrides = load_overrides(cli.string_scores.as_deref())?;
    match cli.command {
        Command::Extract {
            corpus,
            labels,
            config,
            out,
        } => {
            let config = load_config(config.as_deref())?;
            let labels = load_labels(&labels)?;
            let corpus = read_corpus(&corpus)?;
            let result = extract_corpus(&corpus, &labels, &config.features, overrides.as_ref())?;
            write(&out, &write_features(&result.rows))?;
            let idf = IdfFile {
                table: result.idf,
                features: config.features,
            };
            idf.save(&idf_path_for(&out))?;
            let s = &result.summary;
            println!(
                "extracted {} binaries: {} ten-or-more, {} one-to-nine, {} no-malicious, {} failed, {} unlabeled",
                s.total, s.ten_or_more, s.one_to_nine, s.no_malicious, s.failed, s.unlabeled
            );
        }
        Command::Train {
            features,
            model_out,
            config,
            seed,
        } => {
            let mut config = load_config(config.as_deref())?;
            if let Some(seed) = seed {
                config.train.seed = seed;
            }
            let idf_path = idf_path_for(&features);
            if idf_path.exists() {
                config.features = IdfFile::load(&idf_path)?.features;
            }
            let rows = load_features(&features)?;
            let outcome = train_model(&rows, &config)?;
            outcome.model.save(&model_out)?;
            println!(
                "trained on {} samples, tested on {}",
                outcome.n_train, outcome.n_test
            );
            for (name, m) in [
                ("train", &outcome.train_metrics),
                ("test", &outcome.test_metrics),
            ] {
                println!(
                    "{name}: accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} auc {:.4} fpr {:.4} loss {:.4}",
                    m.accuracy, m.precision, m.recall, m.f1, m.auc, m.fpr, m.loss
                );
            }
        }
        Command::Classify {
            snapshot,
            model,
            idf,
        } => {
            let raw = std::fs::read(&snapshot).map_err(|e| Error::io(&snapshot, e))?;
            let snap = parse_snapshot(&raw)?;
            let model = Model::load(&model)?;
            let idf = IdfFile::load(&idf)?;
            let v = classify_snapshot(&snap, &model, &idf, overrides.as_ref())?;
            let verdict = if v.malware { "malware" } else { "benign" };
            println!("{} {verdict} {:.6}", v.binary_id, v.score);
        }
        Command::Inspect {
            snapshot,
            config,
            idf,
        } => {
            let raw = std::fs::read(&snapshot).map_err(|e| Error::io(&snapshot, e))?;
            let snap = parse_snapshot(&raw)?;
            let (features, table) = match idf {
                Some(p) => {
                    let f = IdfFile::load(&p)?;
                    (f.features, f.table)
                }
                None => (
                    load_config(config.as_deref())?.features,
                    IdfTable::default(),
                ),
            };
            let analysis = analyze(&snap, &features, &table, overrides.as_ref());
            print!("{}", render_report(&analysis));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
