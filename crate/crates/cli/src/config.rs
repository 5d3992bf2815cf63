//! Run settings from defaults, a flat `key = value` file, and flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use indukt::executor::{Backend, ExecutorConfig};
use indukt::pipeline::{BudgetAccounting, Mode, PipelineConfig};
use indukt::providers::{SamplingProfile, SyntheticConfig};

/// Every recognized key with its default. An empty default means unset.
pub const KEYS: &[(&str, &str)] = &[
    ("mode", "hypothesis-search"),
    ("provider", "synthetic"),
    ("corpus", "mini"),
    ("runs", "5"),
    ("out", "out"),
    ("seed", "0"),
    ("model", "gpt-4o"),
    ("endpoint", "https://api.openai.com/v1/chat/completions"),
    ("requests_per_minute", ""),
    ("multi_sample", "true"),
    ("budget_accounting", "standard"),
    ("executor", "builtin-dsl"),
    ("step_budget", "10000"),
    ("timeout_ms", "2000"),
    ("memory_limit_mib", "256"),
    ("sandbox_command", "python3 -m indukt_sandbox"),
    ("max_workers", ""),
    ("concurrency", "0"),
    ("record", "false"),
    ("transcript", ""),
    ("prompts", ""),
    ("wall_time", "false"),
    ("p_gen", "1.0"),
    ("p_retain", "1.0"),
    ("p_impl", "1.0"),
    ("p_rescue", ""),
    ("generator_temperature", ""),
    ("summarizer_temperature", ""),
    ("implementor_temperature", ""),
    ("direct_temperature", ""),
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config file {path}: {message}")]
    File { path: String, message: String },
    #[error("unknown setting `{0}`")]
    UnknownKey(String),
    #[error("setting `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn canonical_key(key: &str) -> String {
    key.trim().replace('-', "_")
}

/// Parses `key = value` lines; `#` starts a comment line.
pub fn parse_file(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        out.push((canonical_key(k), v.trim().to_string()));
    }
    Ok(out)
}

/// Final key/value settings after layering.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Settings(pub BTreeMap<String, String>);

impl Settings {
    pub fn layer(file: Option<&Path>, flags: &[(String, String)]) -> Result<Settings, ConfigError> {
        let mut map: BTreeMap<String, String> = KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let mut apply = |pairs: Vec<(String, String)>| -> Result<(), ConfigError> {
            for (k, v) in pairs {
                let k = canonical_key(&k);
                if !map.contains_key(&k) {
                    return Err(ConfigError::UnknownKey(k));
                }
                map.insert(k, v);
            }
            Ok(())
        };
        if let Some(path) = file {
            let file_err = |message: String| ConfigError::File {
                path: path.display().to_string(),
                message,
            };
            let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
            apply(parse_file(&text).map_err(file_err)?)?;
        }
        apply(flags.to_vec())?;
        Ok(Settings(map))
    }

    fn raw(&self, key: &str) -> &str {
        self.0.get(key).map(String::as_str).unwrap_or_default()
    }

    fn opt(&self, key: &str) -> Option<&str> {
        Some(self.raw(key)).filter(|v| !v.is_empty())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key).parse().map_err(|e: T::Err| ConfigError::Invalid {
            key: key.into(),
            message: format!("`{}`: {e}", self.raw(key)),
        })
    }

    fn parse_opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.opt(key) {
            None => Ok(None),
            Some(_) => self.parse(key).map(Some),
        }
    }

    /// The settings as a config file that reproduces them.
    pub fn to_file(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProviderKind {
    Synthetic,
    Live,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub mode: Mode,
    pub provider: ProviderKind,
    pub corpus: String,
    pub runs: u32,
    pub out: PathBuf,
    pub seed: u64,
    pub endpoint: String,
    pub requests_per_minute: Option<u32>,
    pub multi_sample: bool,
    pub pipeline: PipelineConfig,
    pub executor: ExecutorConfig,
    pub concurrency: usize,
    pub record: bool,
    pub transcript: PathBuf,
    pub prompts: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn from_settings(s: &Settings) -> Result<RunConfig, ConfigError> {
        let mode: Mode = s.parse("mode")?;
        let provider = match s.raw("provider") {
            "synthetic" => ProviderKind::Synthetic,
            "live" => ProviderKind::Live,
            other => return Err(invalid("provider", format!("`{other}` (expected synthetic or live)"))),
        };
        let runs: u32 = s.parse("runs")?;
        if runs == 0 {
            return Err(invalid("runs", "must be at least 1"));
        }
        let budget_accounting: BudgetAccounting = s.parse("budget_accounting")?;

        let mut sampling = SamplingProfile::default();
        for (key, slot) in [
            ("generator_temperature", &mut sampling.generator),
            ("summarizer_temperature", &mut sampling.summarizer),
            ("implementor_temperature", &mut sampling.implementor),
            ("direct_temperature", &mut sampling.direct),
        ] {
            if let Some(t) = s.parse_opt::<f64>(key)? {
                if !(0.0..=2.0).contains(&t) {
                    return Err(invalid(key, "must lie in [0, 2]"));
                }
                slot.temperature = t;
            }
        }
        let pipeline = PipelineConfig {
            model_name: s.raw("model").to_string(),
            sampling,
            budget_accounting,
            record_wall_time: s.parse("wall_time")?,
            ..Default::default()
        };

        let backend = match s.raw("executor") {
            "builtin-dsl" | "builtin_dsl" => Backend::BuiltinDsl,
            "external-sandbox" | "external_sandbox" => Backend::ExternalSandbox,
            other => {
                return Err(invalid(
                    "executor",
                    format!("`{other}` (expected builtin-dsl or external-sandbox)"),
                ))
            }
        };
        let defaults = ExecutorConfig::default();
        let executor = ExecutorConfig {
            backend,
            step_budget: s.parse("step_budget")?,
            timeout_ms: s.parse("timeout_ms")?,
            memory_limit_mib: s.parse("memory_limit_mib")?,
            sandbox_command: s.raw("sandbox_command").split_whitespace().map(String::from).collect(),
            max_workers: s.parse_opt("max_workers")?.unwrap_or(defaults.max_workers),
        };
        executor.validate().map_err(|e| invalid("executor", e.to_string()))?;

        let prob = |key: &str| -> Result<f64, ConfigError> {
            let p: f64 = s.parse(key)?;
            if (0.0..=1.0).contains(&p) {
                Ok(p)
            } else {
                Err(invalid(key, "must lie in [0, 1]"))
            }
        };
        let synthetic = SyntheticConfig {
            seed: 0,
            p_gen: prob("p_gen")?,
            p_retain: prob("p_retain")?,
            p_impl: prob("p_impl")?,
            p_rescue: match s.opt("p_rescue") {
                Some(_) => Some(prob("p_rescue")?),
                None => None,
            },
        };
        let out = PathBuf::from(s.raw("out"));
        let transcript = s
            .opt("transcript")
            .map(PathBuf::from)
            .unwrap_or_else(|| out.join("transcript.ndjson"));
        let requests_per_minute = s.parse_opt::<u32>("requests_per_minute")?;
        if requests_per_minute == Some(0) {
            return Err(invalid("requests_per_minute", "must be positive"));
        }
        Ok(RunConfig {
            mode,
            provider,
            corpus: s.raw("corpus").to_string(),
            runs,
            seed: s.parse("seed")?,
            endpoint: s.raw("endpoint").to_string(),
            requests_per_minute,
            multi_sample: s.parse("multi_sample")?,
            pipeline,
            executor,
            concurrency: s.parse("concurrency")?,
            record: s.parse("record")?,
            transcript,
            prompts: s.opt("prompts").map(PathBuf::from),
            synthetic,
            out,
        })
    }
}
