use std::path::PathBuf;

use autoskill::oracle::{FaultConfig, Oracle, RemoteBackend, RemoteConfig, ReplayBackend, RuleBased, Transcript};
use autoskill::sim::scenario::load_named;
use autoskill::sim::{NoiseConfig, Scene};
use autoskill::skilldsl::SkillLibrary;
use clap::{Args, ValueEnum};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Rule,
    Replay,
    Remote,
}

/// Oracle selection shared by every command that talks to a model.
/// Flags win over environment variables, which win over the config file.
#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "rule", env = "AUTOSKILL_BACKEND")]
    pub backend: BackendKind,
    /// Recorded transcript to answer from (replay backend).
    #[arg(long, env = "AUTOSKILL_TRANSCRIPT")]
    pub transcript: Option<PathBuf>,
    /// TOML file with endpoint settings (remote backend).
    #[arg(long, env = "AUTOSKILL_REMOTE_CONFIG")]
    pub remote_config: Option<PathBuf>,
    #[arg(long, env = "AUTOSKILL_ENDPOINT")]
    pub endpoint: Option<String>,
    #[arg(long, env = "AUTOSKILL_MODEL")]
    pub model: Option<String>,
}

impl BackendArgs {
    pub fn remote_config(&self) -> CliResult<RemoteConfig> {
        let mut cfg = match &self.remote_config {
            Some(p) => RemoteConfig::load(p).map_err(CliError::config)?,
            None => RemoteConfig::new("", ""),
        };
        if let Some(e) = &self.endpoint {
            cfg.endpoint = e.clone();
        }
        if let Some(m) = &self.model {
            cfg.model = m.clone();
        }
        if cfg.endpoint.is_empty() || cfg.model.is_empty() {
            return Err(CliError::config("the remote backend needs an endpoint and a model"));
        }
        Ok(cfg)
    }

    pub fn build(&self, faults: FaultConfig) -> CliResult<Oracle> {
        match self.backend {
            BackendKind::Rule => Ok(Oracle::new(RuleBased::new(faults))),
            BackendKind::Replay => {
                let path = self.transcript.as_ref().ok_or_else(|| CliError::config("--transcript is required with --backend replay"))?;
                let t = Transcript::load(path).map_err(CliError::config)?;
                Ok(Oracle::new(ReplayBackend::new(&t)))
            }
            BackendKind::Remote => {
                let cfg = self.remote_config()?;
                let reasks = cfg.max_reasks;
                let backend = RemoteBackend::new(cfg).map_err(CliError::config)?;
                Ok(Oracle::new(backend).with_max_reasks(reasks))
            }
        }
    }
}

pub fn probability(s: &str) -> Result<f64, String> {
    let p: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(format!("{p} is not in [0, 1]"))
    }
}

#[derive(Debug, Clone, Args)]
pub struct NoiseArgs {
    /// Chance a grasp slips during the next carry.
    #[arg(long, default_value_t = 0.0, value_parser = probability)]
    pub slip: f64,
    /// Chance an executed step is undone by the world.
    #[arg(long, default_value_t = 0.0, value_parser = probability)]
    pub step_fail: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl NoiseArgs {
    pub fn noise(&self) -> NoiseConfig {
        NoiseConfig { grasp_slip_prob: self.slip, step_fail_prob: self.step_fail }
    }
}

pub fn load_scene(name: &str) -> CliResult<Scene> {
    load_named(name).map_err(|e| CliError::config(format!("scenario '{name}': {e}")))
}

/// The given library file, or the bundled templates when none is named.
pub fn load_library(path: Option<&PathBuf>) -> CliResult<SkillLibrary> {
    match path {
        Some(p) => SkillLibrary::load(p).map_err(CliError::config),
        None => Ok(autoskill::harness::default_deploy_library()),
    }
}
