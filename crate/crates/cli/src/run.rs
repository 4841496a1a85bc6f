//! Experiment orchestration: data, partitions, the round loop and artifacts.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use flsim_core::data::{mnist, partition_iid, partition_label_shards, synth_train_test, SynthParams};
use flsim_core::fl::{initialize, run_round, RoundContext, RoundReport};
use flsim_core::metrics::{emit_csv, emit_histogram_csv, payload_norm_stats};
use flsim_core::{AttackPlan, ClientState, Dataset, ModelSpec, Partition, Precision, Real, RoundRecord, ServerState};
use log::info;

use crate::config::{to_json, DatasetChoice, ExperimentConfig, ModelChoice, PartitionChoice};
use crate::error::CliError;

/// Process-level switches that do not belong in the resolved config.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    /// Zero `wallclock_ms` so that metrics files can be diffed byte for byte.
    pub no_timing: bool,
    /// Write per-round coordinate histograms of the uploads.
    pub hist: bool,
}

/// Train and test sets for a config, truncated to the configured limits.
pub fn load_data(cfg: &ExperimentConfig) -> Result<(Dataset, Dataset), CliError> {
    let (train, test) = match cfg.dataset {
        DatasetChoice::Mnist => {
            let dir = cfg.resolved_data_dir();
            let train = mnist::load(&dir, mnist::Split::Train).map_err(CliError::data)?;
            let test = mnist::load(&dir, mnist::Split::Test).map_err(CliError::data)?;
            (train, test)
        }
        DatasetChoice::Synth => {
            let s = &cfg.synth;
            let params =
                SynthParams { num_classes: s.classes, per_class: s.per_class, dim: s.dim, separation: s.separation };
            synth_train_test(&params, s.test_per_class, cfg.seed).map_err(CliError::data)?
        }
    };
    let limit = |d: Dataset, n: Option<usize>| match n {
        Some(n) if n < d.len() => d.prefix(n),
        _ => d,
    };
    Ok((limit(train, cfg.train_limit), limit(test, cfg.test_limit)))
}

pub fn model_spec(cfg: &ExperimentConfig, train: &Dataset) -> Result<ModelSpec, CliError> {
    match cfg.model {
        ModelChoice::Mlp => ModelSpec::mlp(train.sample_len(), &[cfg.hidden], train.num_classes())
            .map_err(|e| CliError::Config(format!("model: {e}"))),
        ModelChoice::Cnn => {
            let spec = ModelSpec::mnist_cnn();
            if spec.input_shape() != train.shape() || spec.num_classes() != train.num_classes() {
                return Err(CliError::Config("model: cnn needs 1x28x28 input with 10 classes".into()));
            }
            Ok(spec)
        }
    }
}

pub fn make_partitions(cfg: &ExperimentConfig, train: &Dataset) -> Result<Vec<Partition>, CliError> {
    let parts = match cfg.partition {
        PartitionChoice::Iid => partition_iid(train, cfg.clients, cfg.seed),
        PartitionChoice::LabelShard => partition_label_shards(train, cfg.clients, cfg.shards_per_client, cfg.seed),
    };
    let parts = parts.map_err(CliError::data)?;
    if let Some(p) = parts.iter().find(|p| p.is_empty()) {
        return Err(CliError::Data(format!("client {} received no samples", p.client_id)));
    }
    Ok(parts)
}

/// Runs the configured rounds on already-loaded data, calling `observe` after
/// each round with the report and the post-round server and client state.
pub fn simulate<T, F>(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    timing: bool,
    mut observe: F,
) -> Result<Vec<RoundRecord>, CliError>
where
    T: Real,
    F: FnMut(&RoundReport<T>, &ServerState<T>, &[ClientState<T>]) -> Result<(), CliError>,
{
    let spec = Arc::new(model_spec(cfg, train)?);
    let partitions = make_partitions(cfg, train)?;
    let hyper = cfg.hyper();
    hyper.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let attack = AttackPlan::new(cfg.attack.kind, cfg.attack.fraction, cfg.attack.sigma, cfg.clients, cfg.seed)
        .map_err(|e| CliError::Config(format!("attack: {e}")))?;
    let (mut server, mut clients) = initialize::<T>(&spec, cfg.scheme, cfg.init_mode, partitions, &attack, cfg.seed)?;
    let ctx =
        RoundContext { spec: &spec, train, test, hyper: &hyper, seed: cfg.seed, eval_batch: cfg.eval_batch, timing };
    let mut records = Vec::with_capacity(cfg.rounds as usize);
    for _ in 0..cfg.rounds {
        let report = run_round(&mut server, &mut clients, &ctx, &attack)?;
        let r = &report.record;
        info!(
            "round {} acc={:.4} loss={:.4} |u|={:.4} |w|={:.4} {}ms",
            r.round, r.test_accuracy, r.test_loss, r.mean_update_norm, r.mean_model_norm, r.wallclock_ms
        );
        observe(&report, &server, &clients)?;
        records.push(report.record);
    }
    Ok(records)
}

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub records: Vec<RoundRecord>,
    pub out_dir: PathBuf,
}

/// Runs an experiment and writes `metrics.csv`, `config.json` and, with
/// `hist`, `hist_round_<t>.csv`. On failure the files written so far are
/// removed, and the output directory too if this run created it.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let mut resolved = cfg.clone();
    if resolved.dataset == DatasetChoice::Mnist {
        resolved.data_dir = Some(cfg.resolved_data_dir());
    }
    let out = resolved.out_dir.clone();
    let created = !out.exists();
    let mut written = Vec::new();
    let result = with_threads(opts.threads, || execute(&resolved, opts, &mut written));
    if result.is_err() {
        if created {
            let _ = fs::remove_dir_all(&out);
        } else {
            for f in &written {
                let _ = fs::remove_file(f);
            }
        }
    }
    result.map(|records| RunSummary { records, out_dir: out })
}

fn with_threads<R: Send>(
    threads: Option<usize>,
    job: impl FnOnce() -> Result<R, CliError> + Send,
) -> Result<R, CliError> {
    match threads {
        None => job(),
        Some(0) => Err(CliError::Config("threads: must be at least 1".into())),
        Some(n) => {
            rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| CliError::Other(e.into()))?.install(job)
        }
    }
}

fn execute(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    written: &mut Vec<PathBuf>,
) -> Result<Vec<RoundRecord>, CliError> {
    let (train, test) = load_data(cfg)?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| CliError::Other(anyhow::anyhow!("creating {}: {e}", out.display())))?;
    let config_path = out.join("config.json");
    written.push(config_path.clone());
    fs::write(&config_path, to_json(cfg))?;
    let records = match cfg.precision {
        Precision::Single => {
            simulate::<f32, _>(cfg, &train, &test, !opts.no_timing, |r, _, _| hist(cfg, opts, out, r, written))?
        }
        Precision::Double => {
            simulate::<f64, _>(cfg, &train, &test, !opts.no_timing, |r, _, _| hist(cfg, opts, out, r, written))?
        }
    };
    let metrics_path = out.join("metrics.csv");
    written.push(metrics_path.clone());
    let mut sink = BufWriter::new(fs::File::create(&metrics_path)?);
    emit_csv(&records, &mut sink)?;
    std::io::Write::flush(&mut sink)?;
    Ok(records)
}

fn hist<T: Real>(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    out: &Path,
    report: &RoundReport<T>,
    written: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let h = &cfg.histogram;
    let t = report.record.round;
    if !opts.hist || !(h.rounds.is_empty() || h.rounds.contains(&t)) {
        return Ok(());
    }
    let stats = payload_norm_stats(&report.uploads, h.bins, (h.lo, h.hi))?;
    let path = out.join(format!("hist_round_{t}.csv"));
    written.push(path.clone());
    let mut sink = BufWriter::new(fs::File::create(&path)?);
    emit_histogram_csv(&stats.histogram, &mut sink)?;
    std::io::Write::flush(&mut sink)?;
    Ok(())
}
