//! Settings resolution: command-line flag, then config file, then default.
//!
//! The config file is TOML with flat `key = value` pairs:
//!
//! ```toml
//! seed = 7
//! gateway = "stub:majority-echo"   # or "remote"
//! jobs = 4
//! out = "results"
//! parse_retries = 2
//! model = "gpt-4o"
//! endpoint = "https://api.openai.com/v1/chat/completions"
//! max_retries = 3
//! request_timeout_secs = 60
//! max_concurrent_requests = 4
//! learning_rate = 0.05
//! l2_strength = 0.001
//! max_epochs = 5000
//! convergence_tolerance = 1e-7
//! init_scale = 0.0
//! oracle_exclusive = false
//! ```

use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use readlab_core::classifier::Hyperparams;
use readlab_core::llm_gateway::{Backend, GatewayConfig};
use serde::Deserialize;

use crate::{CommonArgs, Failure};

pub const DEFAULT_GATEWAY: &str = "stub:majority-echo";
pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const DEFAULT_OUT: &str = "readlab-out";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub gateway: Option<String>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub parse_retries: Option<u32>,
    pub model: Option<String>,
    pub endpoint: Option<String>,
    pub max_retries: Option<u32>,
    pub request_timeout_secs: Option<f64>,
    pub max_concurrent_requests: Option<usize>,
    pub learning_rate: Option<f64>,
    pub l2_strength: Option<f64>,
    pub max_epochs: Option<usize>,
    pub convergence_tolerance: Option<f64>,
    pub init_scale: Option<f64>,
    pub oracle_exclusive: Option<bool>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::usage(format!("invalid config: {e}")))
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
    pub parse_retries: u32,
    pub gateway: GatewayConfig,
    pub hyperparams: Hyperparams,
    pub oracle_exclusive: bool,
}

impl Settings {
    pub fn resolve(flags: &CommonArgs) -> Result<Self, Failure> {
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
                FileConfig::parse(&text)?
            }
            None => FileConfig::default(),
        };
        Self::merge(flags, &file)
    }

    pub fn merge(flags: &CommonArgs, file: &FileConfig) -> Result<Self, Failure> {
        let spec = flags
            .gateway
            .clone()
            .or_else(|| file.gateway.clone())
            .unwrap_or_else(|| DEFAULT_GATEWAY.to_string());
        let mut gateway: GatewayConfig = spec
            .parse()
            .map_err(|e: readlab_core::llm_gateway::GatewayError| Failure::usage(e.to_string()))?;
        if gateway.backend == Backend::RemoteHttp {
            gateway.model_name = flags
                .model
                .clone()
                .or_else(|| file.model.clone())
                .unwrap_or_else(|| DEFAULT_MODEL.to_string());
            gateway.endpoint = flags.endpoint.clone().or_else(|| file.endpoint.clone());
        }
        if let Some(r) = file.max_retries {
            gateway.max_retries = r;
        }
        if let Some(t) = file.request_timeout_secs {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Failure::usage("request_timeout_secs must be > 0"));
            }
            gateway.request_timeout = Duration::from_secs_f64(t);
        }
        if let Some(c) = file.max_concurrent_requests {
            gateway.max_concurrent_requests = c;
        }
        gateway.validate()?;

        let d = Hyperparams::default();
        let hyperparams = Hyperparams {
            learning_rate: file.learning_rate.unwrap_or(d.learning_rate),
            l2_strength: file.l2_strength.unwrap_or(d.l2_strength),
            max_epochs: file.max_epochs.unwrap_or(d.max_epochs),
            convergence_tolerance: file.convergence_tolerance.unwrap_or(d.convergence_tolerance),
            init_scale: file.init_scale.unwrap_or(d.init_scale),
        };
        hyperparams.validate().map_err(|e| Failure::usage(e.to_string()))?;

        let jobs = flags.jobs.or(file.jobs).unwrap_or(1);
        if jobs == 0 {
            return Err(Failure::usage("jobs must be >= 1"));
        }
        Ok(Settings {
            seed: flags.seed.or(file.seed).unwrap_or(0),
            jobs,
            out: flags
                .out
                .clone()
                .or_else(|| file.out.clone())
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            parse_retries: flags.parse_retries.or(file.parse_retries).unwrap_or(2),
            gateway,
            hyperparams,
            oracle_exclusive: file.oracle_exclusive.unwrap_or(false),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_defaults_fill_in() {
        let file =
            FileConfig::parse("seed = 3\njobs = 2\nmax_epochs = 10\ngateway = \"stub:constant-neutral\"\n").unwrap();
        let flags = CommonArgs {
            seed: Some(9),
            ..CommonArgs::default()
        };
        let s = Settings::merge(&flags, &file).unwrap();
        assert_eq!((s.seed, s.jobs, s.hyperparams.max_epochs), (9, 2, 10));
        assert_eq!(s.gateway.model_name, "stub:constant-neutral");
        assert_eq!(s.out, PathBuf::from(DEFAULT_OUT));
        let s = Settings::merge(&CommonArgs::default(), &FileConfig::default()).unwrap();
        assert_eq!(s.gateway.model_name, "stub:majority-echo");
    }

    #[test]
    fn invalid_settings_are_usage_errors() {
        assert!(FileConfig::parse("colour = 1").is_err());
        let bad = FileConfig::parse("learning_rate = -1.0").unwrap();
        assert_eq!(Settings::merge(&CommonArgs::default(), &bad).unwrap_err().code, 1);
        let remote = CommonArgs {
            gateway: Some("remote".into()),
            ..CommonArgs::default()
        };
        assert_eq!(Settings::merge(&remote, &FileConfig::default()).unwrap_err().code, 1);
        let with_url = CommonArgs {
            endpoint: Some("http://127.0.0.1:9/v1".into()),
            ..remote
        };
        let s = Settings::merge(&with_url, &FileConfig::default()).unwrap();
        assert_eq!(s.gateway.model_name, DEFAULT_MODEL);
    }
}
