//! Versioned JSON checkpoints and demonstration files.

use std::path::Path;

use anyhow::{bail, Context, Result};
use griddispatch_core::env::Transition;
use griddispatch_core::learn::CsacAgent;
use serde::{Deserialize, Serialize};

use crate::output::write_atomic;

pub const CHECKPOINT_FORMAT: &str = "griddispatch-checkpoint";
pub const DEMOS_FORMAT: &str = "griddispatch-demos";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// [`crate::config::RunConfig::hash`] of the producing run.
    pub config_hash: String,
    pub mode: String,
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Episode after which these parameters were evaluated.
    pub episode: Option<usize>,
    pub agent: CsacAgent,
}

impl Checkpoint {
    pub fn new(agent: CsacAgent, config_hash: String, mode: &str, episode: Option<usize>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: VERSION,
            config_hash,
            mode: mode.into(),
            obs_dim: agent.obs_dim(),
            action_dim: agent.action_dim(),
            episode,
            agent,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec(self)?)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let text = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let ck: Checkpoint = serde_json::from_slice(&text).with_context(|| format!("parsing checkpoint {}", path.display()))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != VERSION {
            bail!(
                "{}: unsupported checkpoint {} version {}",
                path.display(),
                ck.format,
                ck.version
            );
        }
        if ck.agent.obs_dim() != ck.obs_dim || ck.agent.action_dim() != ck.action_dim {
            bail!("{}: declared shapes disagree with the stored networks", path.display());
        }
        Ok(ck)
    }

    /// Errors unless the networks fit an environment of the given shape.
    pub fn check_shape(&self, obs_dim: usize, action_dim: usize) -> Result<()> {
        if self.obs_dim != obs_dim || self.action_dim != action_dim {
            bail!(
                "checkpoint expects {} observations and {} actions, the configured environment has {obs_dim} and {action_dim}",
                self.obs_dim,
                self.action_dim
            );
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoFile {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub transitions: Vec<Transition>,
}

impl DemoFile {
    pub fn new(transitions: Vec<Transition>, config_hash: String) -> Self {
        DemoFile {
            format: DEMOS_FORMAT.into(),
            version: VERSION,
            config_hash,
            transitions,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec(self)?)
    }

    pub fn load(path: &Path) -> Result<DemoFile> {
        let text = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let d: DemoFile = serde_json::from_slice(&text).with_context(|| format!("parsing demonstrations {}", path.display()))?;
        if d.format != DEMOS_FORMAT || d.version != VERSION {
            bail!("{}: unsupported demonstration file {} version {}", path.display(), d.format, d.version);
        }
        Ok(d)
    }
}
