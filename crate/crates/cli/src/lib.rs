//! Configuration, orchestration and artifact output for the `flsim` binary.

pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod run;

pub use config::{parse_config, ExperimentConfig};
pub use error::CliError;
pub use run::{run_experiment, simulate, RunOptions, RunSummary};

/// Splits `--key value` / `--key=value` pairs into `(key, value)`. A flag
/// followed by another flag or by nothing is read as `true`.
pub fn parse_flag_pairs(args: &[String]) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        let key = arg
            .strip_prefix("--")
            .filter(|k| !k.is_empty())
            .ok_or_else(|| CliError::Config(format!("unexpected argument `{arg}`")))?;
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
            i += 1;
        } else if let Some(v) = args.get(i + 1).filter(|v| !v.starts_with("--")) {
            out.push((key.to_string(), v.clone()));
            i += 2;
        } else {
            out.push((key.to_string(), "true".to_string()));
            i += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn flag_pairs() {
        let got =
            parse_flag_pairs(&s(&["--rounds", "5", "--attack.kind=sign_flip", "--no-timing", "--lr", "-0.5"])).unwrap();
        assert_eq!(
            got,
            vec![
                ("rounds".into(), "5".into()),
                ("attack.kind".into(), "sign_flip".into()),
                ("no-timing".into(), "true".into()),
                ("lr".into(), "-0.5".into()),
            ]
        );
        assert!(parse_flag_pairs(&s(&["rounds"])).is_err());
    }
}
