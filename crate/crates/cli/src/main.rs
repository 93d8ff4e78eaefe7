use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use morphwing::harness::pipeline::{
    dataset_records, evaluate, loss_curve_csv, observe_records, phase_csv, predict_records, report_text, scored,
    train_records, MLP, OBSERVER,
};
use morphwing::harness::records::{read_records, write_records};
use morphwing::harness::{run_pipeline, Config, SampleRecord};
use morphwing::mlp::MlpModel;
use morphwing::testbed::{generate_condition, generate_dataset, DatasetSpec};
use morphwing::{Error, Result};

/// Force estimation on a synthetic tethered flapping-wing stand.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory that holds the run directories.
    #[arg(long, default_value = "runs")]
    runs: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every grid condition and write dataset.csv.
    GenData(Common),
    /// Write one condition at the full sample rate.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        condition: usize,
    },
    /// Run the momentum observer over a dataset file.
    Observe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Train the regressor on a dataset file, split by condition.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Apply a trained model to a dataset file.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Compare observer.csv and mlp.csv and write report.txt.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        observer: Option<PathBuf>,
        #[arg(long)]
        mlp: Option<PathBuf>,
    },
    /// All of the above in memory.
    Pipeline(Common),
}

struct Run {
    config: Config,
    dir: PathBuf,
}

impl Common {
    fn open(&self) -> Result<Run> {
        let mut config = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        let dir = config.run_dir(&self.runs);
        fs::create_dir_all(&dir)?;
        Ok(Run { config, dir })
    }
}

fn read_file(path: &Path) -> Result<Vec<SampleRecord>> {
    let f = File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_records(f)
}

fn write_file(path: &Path, records: &[SampleRecord]) -> Result<()> {
    write_records(BufWriter::new(File::create(path)?), records)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Test condition ids from a `split.txt` written by `train`.
fn read_split(dir: &Path) -> Result<Option<Vec<usize>>> {
    let Ok(text) = fs::read_to_string(dir.join("split.txt")) else {
        return Ok(None);
    };
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix("test:"))
        .ok_or_else(|| Error::Data("split.txt has no `test:` line".into()))?;
    let ids = line
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Data(format!("bad condition id `{t}` in split.txt"))))
        .collect::<Result<_>>()?;
    Ok(Some(ids))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(common) => {
            let run = common.open()?;
            let data = generate_dataset(&run.config.grid()?, &run.config.dataset_spec())?;
            write_file(&run.dir.join("dataset.csv"), &dataset_records(&data, run.config.output.stride))
        }
        Command::Simulate { common, condition } => {
            let run = common.open()?;
            let grid = run.config.grid()?;
            let c = grid.conditions().get(condition).ok_or_else(|| {
                Error::InvalidArgument(format!("condition {condition} is outside the grid of {}", grid.len()))
            })?;
            let spec: DatasetSpec = run.config.dataset_spec();
            let data = generate_condition(&spec, condition, c).map_err(|e| e.in_stage("simulate", Some(condition)))?;
            write_file(&run.dir.join(format!("simulate_{condition}.csv")), &dataset_records(&[data], 1))
        }
        Command::Observe { common, input } => {
            let run = common.open()?;
            let records = read_file(&input.unwrap_or_else(|| run.dir.join("dataset.csv")))?;
            write_file(&run.dir.join("observer.csv"), &observe_records(&run.config, &records)?)
        }
        Command::Train { common, input } => {
            let run = common.open()?;
            let records = read_file(&input.unwrap_or_else(|| run.dir.join("dataset.csv")))?;
            let trained = train_records(&run.config, &records)?;
            write_text(&run.dir.join("model.txt"), &trained.model.to_text())?;
            write_text(&run.dir.join("loss_curve.csv"), &loss_curve_csv(&trained.curve))?;
            let ids = |v: &[usize]| v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
            let split = format!("train: {}\ntest: {}\n", ids(&trained.train_conditions), ids(&trained.test_conditions));
            write_text(&run.dir.join("split.txt"), &split)
        }
        Command::Predict { common, input, model } => {
            let run = common.open()?;
            let records = read_file(&input.unwrap_or_else(|| run.dir.join("dataset.csv")))?;
            let model_path = model.unwrap_or_else(|| run.dir.join("model.txt"));
            let text = fs::read_to_string(&model_path)
                .map_err(|e| Error::Data(format!("cannot open {}: {e}", model_path.display())))?;
            let model = MlpModel::from_text(&text)?;
            let features = run.config.mlp.train_config()?.features;
            write_file(&run.dir.join("mlp.csv"), &predict_records(&model, features, &records)?)
        }
        Command::Eval { common, observer, mlp } => {
            let run = common.open()?;
            let obs = read_file(&observer.unwrap_or_else(|| run.dir.join("observer.csv")))?;
            let net = read_file(&mlp.unwrap_or_else(|| run.dir.join("mlp.csv")))?;
            let split = read_split(&run.dir)?;
            let keep = |r: &SampleRecord| split.as_ref().is_none_or(|ids| ids.contains(&r.condition));
            let tagged = |rows: Vec<SampleRecord>, tag: &str| -> Result<Vec<SampleRecord>> {
                if let Some(r) = rows.iter().find(|r| r.estimator != tag) {
                    return Err(Error::Data(format!("expected `{tag}` rows, found `{}`", r.estimator)));
                }
                Ok(scored(&run.config, &rows.into_iter().filter(keep).collect::<Vec<_>>()))
            };
            let estimates: Vec<SampleRecord> = tagged(obs, OBSERVER)?.into_iter().chain(tagged(net, MLP)?).collect();
            let evaluation = evaluate(&run.config, &estimates)?;
            for c in &evaluation.curves {
                write_text(&run.dir.join(format!("phase_{}.csv", c.condition)), &phase_csv(c))?;
            }
            let report = report_text(&run.config, &evaluation, None);
            print!("{report}");
            write_text(&run.dir.join("report.txt"), &report)
        }
        Command::Pipeline(common) => {
            let run = common.open()?;
            let outcome = run_pipeline(&run.config, &common.runs)?;
            print!("{}", outcome.report);
            println!("run directory {}", outcome.run_dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
