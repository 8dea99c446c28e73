//! TOML configuration. Precedence, lowest first: built-in defaults, the
//! config file, command-line flags. The API key environment variable wins
//! over a key in the file.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use gesturegen_core::eval::DEFAULT_TOLERANCE;
use gesturegen_core::lexicon::{replica_corpus, Corpus, GestureLexicon};
use gesturegen_core::pipeline::{Pipeline, PipelineOptions};
use gesturegen_core::scheduler::{ScheduleParams, DEFAULT_MIN_DURATION, DEFAULT_PREP_LEAD};
use gesturegen_core::selector::{
    Approach, Backend, BoundedBackend, MockBackend, PromptConfig, PromptContext, PromptTemplates, RemoteBackend,
    RemoteConfig, ReplayBackend, API_KEY_ENV,
};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: f64,
    /// Backend calls in flight, shared by everything in the process.
    pub parallelism: usize,
    pub api_key: Option<String>,
    /// Recorded exchanges for the replay backend. The bundled set is used
    /// when absent.
    pub recorded: Option<PathBuf>,
}

impl Default for BackendSettings {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4".into(),
            timeout_secs: 30.0,
            parallelism: 4,
            api_key: None,
            recorded: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSettings {
    pub lexicon: Option<PathBuf>,
    /// Annotated corpus; the bundled replica corpus when absent.
    pub corpus: Option<PathBuf>,
    /// Directory of template overrides.
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerSettings {
    pub seconds_per_word: f64,
    pub prep_lead: f64,
    pub min_duration: f64,
}

impl Default for SchedulerSettings {
    fn default() -> Self {
        Self {
            seconds_per_word: 0.3,
            prep_lead: DEFAULT_PREP_LEAD,
            min_duration: DEFAULT_MIN_DURATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub backend: BackendSettings,
    pub prompt: PromptConfig,
    pub paths: PathSettings,
    pub scheduler: SchedulerSettings,
    /// Word gap allowed when aligning model and speaker spans.
    pub tolerance: usize,
    pub discourse_retries: u32,
    pub bind: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            backend: BackendSettings::default(),
            prompt: PromptConfig::default(),
            paths: PathSettings::default(),
            scheduler: SchedulerSettings::default(),
            tolerance: DEFAULT_TOLERANCE,
            discourse_retries: 1,
            bind: "127.0.0.1:8080".into(),
        }
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub approach: Option<Approach>,
    pub backend: Option<BackendKind>,
    pub tolerance: Option<usize>,
    pub recorded: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub bind: Option<String>,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut config = Self::from_toml(&text).map_err(|message| ConfigError::Parse {
            path: path.to_owned(),
            message,
        })?;
        if let Some(dir) = path.parent() {
            config.rebase(dir);
        }
        Ok(config)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.paths.lexicon);
        fix(&mut self.paths.corpus);
        fix(&mut self.paths.templates);
        fix(&mut self.backend.recorded);
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(a) = o.approach {
            self.prompt.approach = a;
        }
        if let Some(k) = o.backend {
            self.backend.kind = k;
        }
        if let Some(t) = o.tolerance {
            self.tolerance = t;
        }
        if o.recorded.is_some() {
            self.backend.recorded = o.recorded;
        }
        if o.corpus.is_some() {
            self.paths.corpus = o.corpus;
        }
        if let Some(b) = o.bind {
            self.bind = b;
        }
    }

    /// Takes the API key from the environment when set.
    pub fn apply_env(&mut self) {
        if let Some(key) = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()) {
            self.backend.api_key = Some(key);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive("backend.timeout_secs", self.backend.timeout_secs)?;
        positive("scheduler.seconds_per_word", self.scheduler.seconds_per_word)?;
        positive("scheduler.min_duration", self.scheduler.min_duration)?;
        if !(self.scheduler.prep_lead.is_finite() && self.scheduler.prep_lead >= 0.0) {
            return Err(ConfigError::Invalid(format!(
                "scheduler.prep_lead must be non-negative, got {}",
                self.scheduler.prep_lead
            )));
        }
        if self.backend.parallelism == 0 {
            return Err(ConfigError::Invalid("backend.parallelism must be at least 1".into()));
        }
        if !(0.0..=2.0).contains(&self.prompt.temperature) {
            return Err(ConfigError::Invalid(format!(
                "prompt.temperature must be in [0, 2], got {}",
                self.prompt.temperature
            )));
        }
        if self.backend.kind == BackendKind::Remote && self.backend.endpoint.trim().is_empty() {
            return Err(ConfigError::Invalid("backend.endpoint is empty".into()));
        }
        Ok(())
    }

    pub fn backend(&self) -> Result<Arc<dyn Backend>, ConfigError> {
        let limit = self.backend.parallelism;
        Ok(match self.backend.kind {
            BackendKind::Mock => Arc::new(BoundedBackend::new(MockBackend::new(), limit)),
            BackendKind::Remote => {
                let remote = RemoteBackend::new(RemoteConfig {
                    endpoint: self.backend.endpoint.clone(),
                    model: self.backend.model.clone(),
                    timeout: Duration::from_secs_f64(self.backend.timeout_secs),
                    api_key: self.backend.api_key.clone(),
                })
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Arc::new(BoundedBackend::new(remote, limit))
            }
            BackendKind::Replay => {
                let replay = match &self.backend.recorded {
                    Some(path) => ReplayBackend::load(BufReader::new(open(path)?))
                        .map_err(|message| ConfigError::Parse { path: path.clone(), message })?,
                    None => ReplayBackend::bundled(),
                };
                Arc::new(BoundedBackend::new(replay, limit))
            }
        })
    }

    pub fn corpus(&self) -> Result<Corpus, ConfigError> {
        match &self.paths.corpus {
            Some(path) => Corpus::load(BufReader::new(open(path)?)).map_err(|e| ConfigError::Parse {
                path: path.clone(),
                message: e.to_string(),
            }),
            None => Ok(replica_corpus()),
        }
    }

    pub fn context(&self) -> Result<PromptContext, ConfigError> {
        let lexicon = match &self.paths.lexicon {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                GestureLexicon::from_json(&text).map_err(|e| ConfigError::Parse {
                    path: path.clone(),
                    message: e.to_string(),
                })?
            }
            None => GestureLexicon::builtin(),
        };
        let templates = match &self.paths.templates {
            Some(dir) => PromptTemplates::load_dir(dir).map_err(|e| ConfigError::Parse {
                path: dir.clone(),
                message: e.to_string(),
            })?,
            None => PromptTemplates::builtin(),
        };
        Ok(PromptContext {
            templates,
            lexicon,
            corpus: Some(self.corpus()?),
        })
    }

    pub fn pipeline_options(&self) -> PipelineOptions {
        PipelineOptions {
            prompt: self.prompt.clone(),
            schedule: ScheduleParams {
                prep_lead: self.scheduler.prep_lead,
                min_duration: self.scheduler.min_duration,
            },
            seconds_per_word: self.scheduler.seconds_per_word,
            discourse_retries: self.discourse_retries,
            parallelism: self.backend.parallelism,
            ..PipelineOptions::default()
        }
    }

    pub fn pipeline(&self) -> Result<Pipeline, ConfigError> {
        Ok(Pipeline::new(self.backend()?, self.context()?, self.pipeline_options()))
    }
}

fn open(path: &Path) -> Result<File, ConfigError> {
    File::open(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })
}
