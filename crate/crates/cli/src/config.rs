//! Experiment configuration: JSON file plus `--dotted.path value` overrides.

use std::path::{Path, PathBuf};

use flsim_core::{AttackKind, InitMode, Precision, Scheme};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// Environment variable consulted when `data_dir` is not set.
pub const DATA_DIR_ENV: &str = "FLSIM_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data/mnist";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    #[default]
    Mlp,
    Cnn,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetChoice {
    #[default]
    Mnist,
    Synth,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionChoice {
    Iid,
    #[default]
    LabelShard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// Share of the K clients that are malicious.
    pub fraction: f64,
    /// Noise standard deviation for `additive_noise`.
    pub sigma: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig { kind: AttackKind::None, fraction: 0.0, sigma: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub dim: usize,
    pub separation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { classes: 10, per_class: 60, test_per_class: 20, dim: 16, separation: 6.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramConfig {
    pub bins: usize,
    pub lo: f64,
    pub hi: f64,
    /// Rounds that get a `hist_round_<t>.csv`; empty means every round.
    pub rounds: Vec<u64>,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        HistogramConfig { bins: 100, lo: -0.25, hi: 0.25, rounds: Vec::new() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub init_mode: InitMode,
    pub model: ModelChoice,
    pub dataset: DatasetChoice,
    pub partition: PartitionChoice,
    /// K
    pub clients: usize,
    /// C
    pub participation: f64,
    /// T
    pub rounds: u64,
    /// η
    pub lr: f64,
    /// B
    pub batch_size: usize,
    /// N
    pub local_iters: usize,
    pub attack: AttackConfig,
    pub seed: u64,
    pub precision: Precision,
    /// MNIST directory; falls back to `$FLSIM_DATA_DIR`, then `data/mnist`.
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Hidden width of the MLP.
    pub hidden: usize,
    pub shards_per_client: usize,
    /// Use only the first n training samples.
    pub train_limit: Option<usize>,
    /// Use only the first n test samples.
    pub test_limit: Option<usize>,
    pub eval_batch: usize,
    pub synth: SynthConfig,
    pub histogram: HistogramConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scheme: Scheme::Mb,
            init_mode: InitMode::Server,
            model: ModelChoice::Mlp,
            dataset: DatasetChoice::Mnist,
            partition: PartitionChoice::LabelShard,
            clients: 100,
            participation: 1.0,
            rounds: 200,
            lr: 0.01,
            batch_size: 5,
            local_iters: 2,
            attack: AttackConfig::default(),
            seed: 1,
            precision: Precision::Single,
            data_dir: None,
            out_dir: PathBuf::from("out"),
            hidden: 200,
            shards_per_client: 2,
            train_limit: None,
            test_limit: None,
            eval_batch: 500,
            synth: SynthConfig::default(),
            histogram: HistogramConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn hyper(&self) -> flsim_core::Hyper {
        flsim_core::Hyper {
            eta: self.lr,
            batch_size: self.batch_size,
            local_iters: self.local_iters,
            participation: self.participation,
            num_clients: self.clients,
        }
    }

    /// `data_dir`, else `$FLSIM_DATA_DIR`, else `data/mnist`.
    pub fn resolved_data_dir(&self) -> PathBuf {
        resolve_data_dir(self.data_dir.as_deref())
    }

    /// Checks constraints serde cannot express. The error names the key.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, why: &str| Err(CliError::Config(format!("{key}: {why}")));
        if self.clients == 0 {
            return bad("clients", "must be at least 1");
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return bad("participation", "must be in (0, 1]");
        }
        if self.rounds == 0 {
            return bad("rounds", "must be at least 1");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr", "must be a positive number");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if self.local_iters == 0 {
            return bad("local_iters", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.attack.fraction) {
            return bad("attack.fraction", "must be in [0, 1]");
        }
        if !(self.attack.sigma.is_finite() && self.attack.sigma >= 0.0) {
            return bad("attack.sigma", "must be a non-negative number");
        }
        if self.hidden == 0 {
            return bad("hidden", "must be at least 1");
        }
        if self.shards_per_client == 0 {
            return bad("shards_per_client", "must be at least 1");
        }
        if self.train_limit == Some(0) {
            return bad("train_limit", "must be at least 1");
        }
        if self.test_limit == Some(0) {
            return bad("test_limit", "must be at least 1");
        }
        if self.eval_batch == 0 {
            return bad("eval_batch", "must be at least 1");
        }
        if self.dataset == DatasetChoice::Synth {
            if self.model == ModelChoice::Cnn {
                return bad("model", "cnn needs 28x28 mnist input");
            }
            let s = &self.synth;
            if s.classes < 2 || s.per_class == 0 || s.test_per_class == 0 || s.dim == 0 {
                return bad("synth", "needs classes >= 2 and nonzero sizes");
            }
        }
        if self.histogram.bins == 0
            || self.histogram.lo.partial_cmp(&self.histogram.hi) != Some(std::cmp::Ordering::Less)
        {
            return bad("histogram", "needs bins >= 1 and lo < hi");
        }
        Ok(())
    }
}

pub fn resolve_data_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}

/// Parses a JSON config, applies `(dotted.key, value)` overrides in order and
/// validates the result. Override values are read as JSON when they parse as
/// JSON and as plain strings otherwise, so `--scheme mub` and `--rounds 50`
/// both work.
pub fn parse_config(json: &str, overrides: &[(String, String)]) -> Result<ExperimentConfig, CliError> {
    let mut doc: Value = if json.trim().is_empty() {
        Value::Object(Default::default())
    } else {
        serde_json::from_str(json).map_err(|e| CliError::Config(format!("config is not valid JSON: {e}")))?
    };
    if !doc.is_object() {
        return Err(CliError::Config("config must be a JSON object".into()));
    }
    for (key, raw) in overrides {
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
        set_path(&mut doc, key, value)?;
    }
    let cfg = deserialize_named(doc)?;
    cfg.validate()?;
    Ok(cfg)
}

fn set_path(doc: &mut Value, dotted: &str, value: Value) -> Result<(), CliError> {
    let mut node = doc;
    let parts: Vec<&str> = dotted.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("malformed key `{dotted}`")));
    }
    for part in &parts[..parts.len() - 1] {
        let obj =
            node.as_object_mut().ok_or_else(|| CliError::Config(format!("`{dotted}`: `{part}` is not a section")))?;
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node.as_object_mut().ok_or_else(|| CliError::Config(format!("`{dotted}` is not inside a section")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Deserializes, prefixing errors with the dotted path of the offending key.
fn deserialize_named(doc: Value) -> Result<ExperimentConfig, CliError> {
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            CliError::Config(e.inner().to_string())
        } else {
            CliError::Config(format!("{path}: {}", e.inner()))
        }
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json(cfg: &ExperimentConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = parse_config("{}", &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!((cfg.lr, cfg.batch_size, cfg.local_iters), (0.01, 5, 2));
        assert_eq!((cfg.clients, cfg.participation, cfg.rounds), (100, 1.0, 200));
        assert_eq!(cfg.attack.kind, AttackKind::None);
        assert_eq!(cfg.precision, Precision::Single);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config(r#"{"learningrate": 0.1}"#, &[]).unwrap_err();
        assert!(err.to_string().contains("learningrate"), "{err}");
        let err = parse_config("{}", &ov(&[("attack.strength", "3")])).unwrap_err();
        assert!(err.to_string().contains("strength"), "{err}");
    }

    #[test]
    fn flags_override_file() {
        let cfg = parse_config(r#"{"rounds": 200}"#, &ov(&[("rounds", "50")])).unwrap();
        assert_eq!(cfg.rounds, 50);
        let cfg =
            parse_config("{}", &ov(&[("scheme", "mub"), ("attack.kind", "sign_flip"), ("attack.fraction", "0.4")]))
                .unwrap();
        assert_eq!(cfg.scheme, Scheme::Mub);
        assert_eq!(cfg.attack.kind, AttackKind::SignFlip);
        assert_eq!(cfg.attack.fraction, 0.4);
    }

    #[test]
    fn type_and_range_errors_name_the_key() {
        let err = parse_config(r#"{"rounds": "many"}"#, &[]).unwrap_err();
        assert!(err.to_string().contains("rounds"), "{err}");
        let err = parse_config(r#"{"participation": 0}"#, &[]).unwrap_err();
        assert!(err.to_string().contains("participation"), "{err}");
        let err = parse_config(r#"{"attack": {"fraction": 1.5}}"#, &[]).unwrap_err();
        assert!(err.to_string().contains("attack.fraction"), "{err}");
        let err = parse_config(r#"{"scheme": "krum"}"#, &[]).unwrap_err();
        assert!(err.to_string().contains("scheme"), "{err}");
        assert!(parse_config("[1]", &[]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let cfg = parse_config(
            r#"{"scheme": "mub", "init_mode": "icmi", "seed": 18446744073709551615, "data_dir": "/x",
                "train_limit": 6000, "attack": {"kind": "additive_noise", "fraction": 0.3}}"#,
            &[],
        )
        .unwrap();
        let again = parse_config(&to_json(&cfg), &[]).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn explicit_data_dir_wins() {
        let cfg = parse_config(r#"{"data_dir": "/somewhere"}"#, &[]).unwrap();
        assert_eq!(cfg.resolved_data_dir(), PathBuf::from("/somewhere"));
    }
}
