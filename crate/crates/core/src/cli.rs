//! Command-line front end. `main.rs` only parses arguments and maps
//! [`CliError`] to an exit code.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::data::{self, DataError, DatasetSplit};
use crate::lstm::{self, NetError};
use crate::metrics::{self, MetricReport, MetricsError, METRICS_CSV_HEADER};
use crate::quantizer::{quantize_model, QuantError};
use crate::store::{self, StoreError, StoredModel};
use crate::synthetic::{self, SyntheticSpec};
use crate::trainer::{self, TrainError};

pub const TRAIN_FILE: &str = "train.eidd";
pub const VAL_FILE: &str = "val.eidd";
pub const TEST_FILE: &str = "test.eidd";
pub const SIDECAR_FILE: &str = "sidecar.json";
pub const MODEL_FILE: &str = "model.eidm";
pub const PRUNED_FILE: &str = "pruned.eidm";
pub const RUN_CSV_FILE: &str = "run.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SIZE_REPORT_FILE: &str = "size_report.csv";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Data { path: PathBuf, source: DataError },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Train(TrainError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Store(s) => CliError::Store(s),
            other => CliError::Train(other),
        }
    }
}

pub mod exit_code {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const DATA: i32 = 4;
    pub const IO: i32 = 5;
    pub const MODEL: i32 = 6;
    pub const NON_FINITE: i32 = 7;
    pub const TRAIN: i32 = 8;
    pub const EVAL: i32 = 9;
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use exit_code::*;
        match self {
            CliError::Usage(_) => USAGE,
            CliError::Config(ConfigError::Io(_)) => IO,
            CliError::Config(_) => CONFIG,
            CliError::Data { source: DataError::Io(_), .. } => IO,
            CliError::Data { .. } => DATA,
            CliError::Store(StoreError::Io(_)) => IO,
            CliError::Store(_) => MODEL,
            CliError::Train(TrainError::NonFiniteLoss { .. }) => NON_FINITE,
            CliError::Train(TrainError::DataShape { .. } | TrainError::EmptySplit(_)) => DATA,
            CliError::Train(TrainError::BadConfig(_)) => CONFIG,
            CliError::Train(_) => TRAIN,
            CliError::Quant(_) => MODEL,
            CliError::Net(_) => DATA,
            CliError::Metrics(_) => EVAL,
            CliError::Io { .. } => IO,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "edgenet", version, about = "Compressed LSTM intrusion detector: train, prune, quantize, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration; defaults apply to every missing key.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured decision threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split, encode and normalize a CSV into train/val/test dataset files.
    Preprocess {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dense / sparse / re-dense training.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory written by `preprocess`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Int8 quantization of a dense or sparse model file.
    Quantize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics and ROC points of one or more models on a dataset file.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// File sizes against a baseline model, optionally with accuracy.
    SizeReport {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long = "model")]
        models: Vec<PathBuf>,
        /// Dataset file used to fill in the accuracy column.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output CSV; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scores for single records or a whole dataset file.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated normalized feature values of one record.
        #[arg(long, conflicts_with = "data", required_unless_present = "data")]
        values: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Human-readable listing of a model file.
    Dump {
        #[arg(long)]
        model: PathBuf,
    },
    /// Writes the seeded synthetic benchmark: train/val/test dataset files,
    /// the raw CSV and a config whose schema matches it.
    Synthetic {
        #[arg(long, default_value_t = SyntheticSpec::default().rows)]
        rows: usize,
        #[arg(long, default_value_t = SyntheticSpec::default().features)]
        features: usize,
        #[arg(long, default_value_t = SyntheticSpec::default().noise)]
        noise: f64,
        #[arg(long, default_value_t = SyntheticSpec::default().seed)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.threshold {
        cfg.threshold = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn data_err(path: &Path) -> impl FnOnce(DataError) -> CliError + '_ {
    move |source| CliError::Data {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    store::write_atomic(path, text.as_bytes()).map_err(io_err(path))
}

fn read_split(path: &Path) -> Result<DatasetSplit, CliError> {
    data::read_dataset(path).map_err(data_err(path))
}

fn model_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

/// Probabilities of `model` for every row of `data`.
pub fn model_scores(model: &StoredModel, data: &DatasetSplit) -> Result<Vec<f64>, CliError> {
    let arch = model.architecture();
    if data.n_features != arch.record_len() {
        return Err(NetError::DimensionMismatch {
            expected: arch.record_len(),
            got: data.n_features,
        }
        .into());
    }
    let net = model.inference_params()?;
    Ok(trainer::predict_split(&net, data)?)
}

/// Metrics at `threshold` plus the ROC curve when both classes are present.
pub fn evaluate_model(
    model: &StoredModel,
    data: &DatasetSplit,
    threshold: f64,
) -> Result<(MetricReport, Option<metrics::RocCurve>), CliError> {
    let scores = model_scores(model, data)?;
    let preds: Vec<u8> = scores.iter().map(|&p| lstm::classify(p, threshold)).collect();
    let cm = metrics::confusion(&data.labels, &preds)?;
    let roc = match metrics::roc_curve(&scores, &data.labels) {
        Ok(r) => Some(r),
        Err(MetricsError::SingleClassInput) => None,
        Err(e) => return Err(e.into()),
    };
    Ok((metrics::metrics_from_confusion(&cm), roc))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Preprocess { common, input, out } => {
            let cfg = load_config(&common)?;
            let schema = cfg
                .schema
                .clone()
                .ok_or_else(|| CliError::Usage("preprocess needs a `schema` in the config".into()))?;
            let table = data::load_csv(&input, &schema).map_err(data_err(&input))?;
            let pre = data::preprocess(&table, &schema, cfg.split, cfg.seed).map_err(data_err(&input))?;
            fs::create_dir_all(&out).map_err(io_err(&out))?;
            for (name, split) in [(TRAIN_FILE, &pre.train), (VAL_FILE, &pre.val), (TEST_FILE, &pre.test)] {
                let p = out.join(name);
                data::write_dataset(&p, split).map_err(data_err(&p))?;
            }
            let p = out.join(SIDECAR_FILE);
            data::write_sidecar(&p, &pre.sidecar).map_err(data_err(&p))?;
            println!(
                "rows: train {} / val {} / test {}",
                pre.train.n_rows(),
                pre.val.n_rows(),
                pre.test.n_rows()
            );
        }
        Command::Train { common, data, out } => {
            let cfg = load_config(&common)?;
            let train = read_split(&data.join(TRAIN_FILE))?;
            let val = read_split(&data.join(VAL_FILE))?;
            let seq_len = cfg.architecture.seq_len;
            if train.n_features % seq_len != 0 {
                return Err(CliError::Usage(format!(
                    "{} values per record do not divide into {seq_len} timesteps",
                    train.n_features
                )));
            }
            let tc = cfg.train_config(train.n_features / seq_len);
            let ckpt = out.join("checkpoints");
            fs::create_dir_all(&ckpt).map_err(io_err(&ckpt))?;
            let run = trainer::train_dsd_with_checkpoints(&tc, &train, &val, cfg.seed, Some(&ckpt))?;
            store::save_dense(&run.final_params, &out.join(MODEL_FILE))?;
            store::save_sparse(&run.sparse_params, &run.final_mask, &out.join(PRUNED_FILE))?;
            write_file(&out.join(RUN_CSV_FILE), &run.to_csv())?;
            if let Some(last) = run.epochs.last() {
                println!(
                    "epochs {}, final val acc {:.4}, sparsity {:.4}, mask violations {}",
                    run.epochs.len(),
                    last.val_acc,
                    run.final_mask.achieved_sparsity(),
                    run.mask_violations
                );
            }
        }
        Command::Quantize { common, model, out } => {
            let cfg = load_config(&common)?;
            let qm = match store::load_model(&model)? {
                StoredModel::Dense(net) => quantize_model(&net, &cfg.quantization, None)?,
                StoredModel::Sparse { net, mask } => quantize_model(&net, &cfg.quantization, Some(&mask))?,
                // Already int8: re-quantizing the dequantized weights
                // reproduces the same codes.
                StoredModel::Quantized(q) => {
                    let net = q.dequantize()?;
                    quantize_model(&net, &q.config, q.mask.as_ref())?
                }
            };
            store::save_quantized(&qm, &out)?;
        }
        Command::Evaluate {
            common,
            models,
            data,
            out,
        } => {
            let cfg = load_config(&common)?;
            let split = read_split(&data)?;
            fs::create_dir_all(&out).map_err(io_err(&out))?;
            let mut csv = format!("{METRICS_CSV_HEADER}\n");
            for path in &models {
                let model = store::load_model(path)?;
                let (report, roc) = evaluate_model(&model, &split, cfg.threshold)?;
                let name = model_stem(path);
                let row = report.csv_row(&name, roc.as_ref().map(|r| r.auc));
                println!("{row}");
                csv.push_str(&row);
                csv.push('\n');
                match roc {
                    Some(r) => write_file(&out.join(format!("roc_{name}.csv")), &r.to_csv())?,
                    None => eprintln!("{name}: {}", MetricsError::SingleClassInput),
                }
            }
            write_file(&out.join(METRICS_FILE), &csv)?;
        }
        Command::SizeReport {
            common,
            baseline,
            models,
            data,
            out,
        } => {
            let cfg = load_config(&common)?;
            let mut report = store::size_report(&baseline, &models)?;
            if let Some(dp) = data {
                let split = read_split(&dp)?;
                for row in &mut report.rows {
                    let model = store::load_model(&row.path)?;
                    let (m, _) = evaluate_model(&model, &split, cfg.threshold)?;
                    row.accuracy = Some(m.accuracy);
                }
            }
            let csv = report.to_csv();
            match out {
                Some(p) => write_file(&p, &csv)?,
                None => print!("{csv}"),
            }
        }
        Command::Predict {
            common,
            model,
            values,
            data,
        } => {
            let cfg = load_config(&common)?;
            let model = store::load_model(&model)?;
            let split = match (values, data) {
                (Some(v), _) => {
                    let row = v
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| CliError::Usage(format!("--values: {e}")))?;
                    DatasetSplit::new(row.len(), row, vec![0])
                }
                (None, Some(p)) => read_split(&p)?,
                (None, None) => return Err(CliError::Usage("give --values or --data".into())),
            };
            println!("probability,label");
            for p in model_scores(&model, &split)? {
                println!("{p:.6},{}", lstm::classify(p, cfg.threshold));
            }
        }
        Command::Dump { model } => print!("{}", store::dump(&model)?),
        Command::Synthetic {
            rows,
            features,
            noise,
            seed,
            out,
        } => {
            if features < synthetic::MIN_FEATURES || rows == 0 || !(0.0..=0.5).contains(&noise) {
                return Err(CliError::Usage(format!(
                    "need rows >= 1, features >= {} and noise in [0, 0.5]",
                    synthetic::MIN_FEATURES
                )));
            }
            let spec = SyntheticSpec {
                rows,
                features,
                noise,
                seed,
            };
            fs::create_dir_all(&out).map_err(io_err(&out))?;
            let cfg = RunConfig {
                schema: Some(synthetic::schema(features)),
                ..RunConfig::default()
            };
            // Ready-made splits: noise on training rows only.
            let (train, val, test) = synthetic::noisy_train_splits(&spec, cfg.split).map_err(data_err(&out))?;
            for (name, split) in [(TRAIN_FILE, &train), (VAL_FILE, &val), (TEST_FILE, &test)] {
                let p = out.join(name);
                data::write_dataset(&p, split).map_err(data_err(&p))?;
            }
            // Raw table for `preprocess`, noise on every row.
            write_file(&out.join("synthetic.csv"), &synthetic::to_csv(&synthetic::generate(&spec)))?;
            let text = serde_json::to_string_pretty(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
            write_file(&out.join("config.json"), &text)?;
        }
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit_code::USAGE } else { exit_code::OK };
        }
    };
    match run(cli) {
        Ok(()) => exit_code::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
