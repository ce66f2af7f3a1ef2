//! Run configuration: one TOML document with a section per module.
//!
//! ```toml
//! [run]
//! mode = "csac-sqil"      # csac | csac-sqil | milp
//! seed = 0
//! output_dir = "runs/sqil"
//!
//! [grid]
//! feeder = "feeder.json"  # omitted: the bundled thirteen-node feeder
//!
//! [fleet]
//! count = 5               # used when no [[fleet.batteries]] are listed
//!
//! [train]
//! episodes = 400
//! ```
//!
//! Every key may be overridden from the environment as
//! `GRIDDISPATCH_<SECTION>_<KEY>`, e.g. `GRIDDISPATCH_TRAIN_EPISODES=10`. Values
//! are read as TOML literals and fall back to plain strings.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use griddispatch_core::bess::BatterySpec;
use griddispatch_core::learn::{CsacConfig, TrainConfig};
use griddispatch_core::market::{MarketParams, DEFAULT_STEP_SECONDS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const ENV_PREFIX: &str = "GRIDDISPATCH_";

const SECTIONS: [&str; 8] = ["run", "grid", "scenario", "fleet", "market", "env", "agent", "train"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Csac,
    CsacSqil,
    Milp,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Csac => "csac",
            Mode::CsacSqil => "csac-sqil",
            Mode::Milp => "milp",
        }
    }

    pub fn is_learning(self) -> bool {
        self != Mode::Milp
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub mode: Mode,
    /// At most `i64::MAX`, the largest TOML integer.
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            mode: Mode::Csac,
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Feeder JSON; the bundled thirteen-node feeder when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feeder: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    /// Training scenario CSV; synthesized from `train_seed` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    pub train_seed: u64,
    /// Held-out scenario CSV; synthesized from `eval_seed` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<PathBuf>,
    pub eval_seed: u64,
    /// Length of synthesized scenarios.
    pub steps: usize,
    pub step_seconds: f64,
    /// Evenly spaced evaluation windows in the held-out scenario.
    pub eval_episodes: usize,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            train: None,
            train_seed: 1001,
            eval: None,
            eval_seed: 2002,
            steps: 20_000,
            step_seconds: DEFAULT_STEP_SECONDS,
            eval_episodes: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetSection {
    /// Number of batteries taken from the bundled placements.
    pub count: usize,
    /// Explicit fleet; overrides `count` when non-empty.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub batteries: Vec<BatterySpec>,
}

impl Default for FleetSection {
    fn default() -> Self {
        FleetSection {
            count: 5,
            batteries: Vec::new(),
        }
    }
}

/// Market terms; capacities default to 8 kW and 10 kW per battery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity_kw: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub capacity_cap_kw: Option<f64>,
    pub rho_min: f64,
    /// Dispatch tolerance; 2% of the capacity when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance_kw: Option<f64>,
    pub aging_cost_per_kwh: f64,
    pub initial_performance: f64,
    pub performance_window: usize,
}

impl Default for MarketSection {
    fn default() -> Self {
        let m = MarketParams::with_capacity(0.0, 0.0);
        MarketSection {
            capacity_kw: None,
            capacity_cap_kw: None,
            rho_min: m.rho_min,
            tolerance_kw: None,
            aging_cost_per_kwh: m.aging_cost_per_kwh,
            initial_performance: m.initial_performance,
            performance_window: m.performance_window,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub episode_steps: usize,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection { episode_steps: 48 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentSection {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub lambda_lr: f64,
    pub tau: f64,
    pub alpha: f64,
    pub auto_alpha: bool,
    pub alpha_lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_entropy: Option<f64>,
    pub batch_size: usize,
    pub cost_limit: f64,
    pub initial_lambda: f64,
}

impl Default for AgentSection {
    fn default() -> Self {
        let c = CsacConfig::default();
        AgentSection {
            hidden: c.hidden,
            gamma: c.gamma,
            actor_lr: c.actor_lr,
            critic_lr: c.critic_lr,
            lambda_lr: c.lambda_lr,
            tau: c.tau,
            alpha: c.alpha,
            auto_alpha: c.auto_alpha,
            alpha_lr: c.alpha_lr,
            target_entropy: c.target_entropy,
            batch_size: c.batch_size,
            cost_limit: c.cost_limit,
            initial_lambda: c.initial_lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub episodes: usize,
    pub warmup_steps: usize,
    pub updates_per_step: usize,
    pub buffer_capacity: usize,
    pub reward_scale: f64,
    pub param_noise: f64,
    pub eval_every: usize,
    /// Expert episodes generated for imitation when no demo file is given.
    pub demo_episodes: usize,
    /// Cached demonstrations written by `gen-demos`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demos: Option<PathBuf>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            episodes: t.episodes,
            warmup_steps: t.warmup_steps,
            updates_per_step: t.updates_per_step,
            buffer_capacity: t.buffer_capacity,
            reward_scale: t.reward_scale,
            param_noise: t.param_noise,
            eval_every: t.eval_every,
            demo_episodes: 20,
            demos: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub grid: GridSection,
    pub scenario: ScenarioSection,
    pub fleet: FleetSection,
    pub market: MarketSection,
    pub env: EnvSection,
    pub agent: AgentSection,
    pub train: TrainSection,
}

/// Where a configuration problem was found.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    File { path: PathBuf, line: Option<usize> },
    Env(String),
    Default,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{origin}: {key}: {message}")]
pub struct ConfigError {
    pub origin: Origin,
    pub key: String,
    pub message: String,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line: Some(l) } => write!(f, "{}:{l}", path.display()),
            Origin::File { path, line: None } => write!(f, "{}", path.display()),
            Origin::Env(var) => write!(f, "environment variable {var}"),
            Origin::Default => f.write_str("default configuration"),
        }
    }
}

/// Source text of a configuration plus the overrides applied to it, used to
/// point validation errors at a line or variable.
#[derive(Clone, Debug, Default)]
pub struct Provenance {
    path: PathBuf,
    text: String,
    overrides: BTreeMap<(String, String), String>,
}

impl Provenance {
    pub fn origin(&self, section: &str, key: &str) -> Origin {
        if let Some(var) = self.overrides.get(&(section.to_string(), key.to_string())) {
            return Origin::Env(var.clone());
        }
        if self.text.is_empty() && self.path.as_os_str().is_empty() {
            return Origin::Default;
        }
        Origin::File {
            path: self.path.clone(),
            line: locate_key(&self.text, section, key),
        }
    }

    fn error(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            origin: self.origin(section, key),
            key: format!("{section}.{key}"),
            message: message.into(),
        }
    }
}

/// 1-based line of `key = ...` inside `[section]` (or a `[section.*]` table).
pub fn locate_key(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == section && header_line.is_none() {
                header_line = Some(i + 1);
            }
            continue;
        }
        let in_section = current == section || current.starts_with(&format!("{section}."));
        if !in_section {
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            if k.trim().trim_matches('"') == key {
                return Some(i + 1);
            }
        }
    }
    header_line
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset].matches('\n').count() + 1
}

fn span_line(text: &str, err: &toml::de::Error) -> Option<usize> {
    let span = err.span()?;
    let start = span.start.min(text.len());
    let end = span.end.clamp(start, text.len());
    // unknown keys are reported against their whole table
    let unknown = err
        .message()
        .strip_prefix("unknown field `")
        .and_then(|m| m.split('`').next());
    if let Some(name) = unknown {
        let mut offset = start;
        for l in text[start..end].split_inclusive('\n') {
            if l.split_once('=').is_some_and(|(k, _)| k.trim().trim_matches('"') == name) {
                return Some(line_of(text, offset));
            }
            offset += l.len();
        }
    }
    Some(line_of(text, start))
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl RunConfig {
    /// Parses a document; errors carry the file and line.
    pub fn parse(text: &str, path: &Path) -> Result<RunConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError {
            origin: Origin::File {
                path: path.to_path_buf(),
                line: span_line(text, &e),
            },
            key: String::from("document"),
            message: e.message().to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Applies `GRIDDISPATCH_<SECTION>_<KEY>` overrides from `vars`.
    pub fn apply_overrides<I>(&mut self, vars: I, prov: &mut Provenance) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (var, raw) in vars {
            let rest = var[ENV_PREFIX.len()..].to_ascii_lowercase();
            let Some((section, key)) = SECTIONS.iter().find_map(|s| {
                rest.strip_prefix(s)
                    .and_then(|k| k.strip_prefix('_'))
                    .map(|k| (s.to_string(), k.to_string()))
            }) else {
                // variables like GRIDDISPATCH_LOG belong to other tools
                log::debug!("ignoring {var}: no configuration section");
                continue;
            };
            let err = |message: String| ConfigError {
                origin: Origin::Env(var.clone()),
                key: format!("{section}.{key}"),
                message,
            };
            let mut doc = toml::Table::try_from(&*self).map_err(|e| err(e.to_string()))?;
            let table = doc
                .entry(section.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| err("section is not a table".into()))?;
            table.insert(key.clone(), parse_literal(&raw));
            *self = toml::Value::Table(doc)
                .try_into()
                .map_err(|e: toml::de::Error| err(e.message().to_string()))?;
            prov.overrides.insert((section, key), var);
        }
        Ok(())
    }

    /// Reads `path`, applies overrides from the process environment and validates.
    pub fn load(path: &Path) -> Result<(RunConfig, Provenance), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            origin: Origin::File {
                path: path.to_path_buf(),
                line: None,
            },
            key: String::from("document"),
            message: e.to_string(),
        })?;
        Self::load_from(&text, path, std::env::vars())
    }

    pub fn load_from<I>(text: &str, path: &Path, vars: I) -> Result<(RunConfig, Provenance), ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut cfg = Self::parse(text, path)?;
        let mut prov = Provenance {
            path: path.to_path_buf(),
            text: text.to_string(),
            overrides: BTreeMap::new(),
        };
        cfg.apply_overrides(vars, &mut prov)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new("")));
        cfg.validate(&prov)?;
        Ok((cfg, prov))
    }

    /// Makes relative file references relative to the configuration's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.grid.feeder);
        fix(&mut self.scenario.train);
        fix(&mut self.scenario.eval);
        fix(&mut self.train.demos);
    }

    /// Field checks that do not need the feeder or scenario files loaded.
    pub fn validate(&self, prov: &Provenance) -> Result<(), ConfigError> {
        let check = |ok: bool, section: &str, key: &str, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(prov.error(section, key, msg))
            }
        };
        for (section, key, path) in [
            ("grid", "feeder", &self.grid.feeder),
            ("scenario", "train", &self.scenario.train),
            ("scenario", "eval", &self.scenario.eval),
            ("train", "demos", &self.train.demos),
        ] {
            if let Some(p) = path {
                check(p.is_file(), section, key, &format!("file {} does not exist", p.display()))?;
            }
        }
        check(self.scenario.step_seconds > 0.0, "scenario", "step_seconds", "must be positive")?;
        check(self.scenario.eval_episodes > 0, "scenario", "eval_episodes", "at least one evaluation episode is needed")?;
        check(
            self.scenario.steps >= self.env.episode_steps,
            "scenario",
            "steps",
            "synthesized scenarios must hold at least one episode",
        )?;
        check(
            self.fleet.count > 0 || !self.fleet.batteries.is_empty(),
            "fleet",
            "count",
            "the fleet is empty",
        )?;
        check(self.env.episode_steps > 0, "env", "episode_steps", "must be positive")?;
        self.market_params()
            .validate()
            .map_err(|e| prov.error("market", "capacity_kw", e.to_string()))?;
        let t = self.train_config();
        if let Err(e) = t.agent.validate() {
            return Err(prov.error("agent", agent_key(&e.to_string()), e.to_string()));
        }
        if let Err(e) = t.validate() {
            return Err(prov.error("train", train_key(&e.to_string()), e.to_string()));
        }
        if self.run.mode == Mode::CsacSqil {
            check(
                self.train.demo_episodes > 0 || self.train.demos.is_some(),
                "train",
                "demo_episodes",
                "csac-sqil needs demonstrations: set demo_episodes or demos",
            )?;
            check(self.agent.batch_size % 2 == 0, "agent", "batch_size", "imitation batches must be even")?;
        }
        Ok(())
    }

    /// Rejects modes that cannot train.
    pub fn require_learning(&self, prov: &Provenance) -> Result<(), ConfigError> {
        if self.run.mode.is_learning() {
            Ok(())
        } else {
            Err(prov.error("run", "mode", "train applies only to csac and csac-sqil"))
        }
    }

    pub fn fleet_specs(&self) -> Vec<BatterySpec> {
        if self.fleet.batteries.is_empty() {
            crate::bench::fleet(self.fleet.count)
        } else {
            self.fleet.batteries.clone()
        }
    }

    pub fn market_params(&self) -> MarketParams {
        let n = self.fleet_specs().len() as f64;
        let capacity = self.market.capacity_kw.unwrap_or(8.0 * n);
        let cap = self.market.capacity_cap_kw.unwrap_or(10.0 * n).max(capacity);
        let mut m = MarketParams::with_capacity(capacity, cap);
        m.rho_min = self.market.rho_min;
        if let Some(t) = self.market.tolerance_kw {
            m.tolerance_kw = t;
        }
        m.aging_cost_per_kwh = self.market.aging_cost_per_kwh;
        m.initial_performance = self.market.initial_performance;
        m.performance_window = self.market.performance_window;
        m
    }

    /// Training parameters; evaluation windows come from [`crate::experiment::Experiment`].
    pub fn train_config(&self) -> TrainConfig {
        let a = &self.agent;
        TrainConfig {
            agent: CsacConfig {
                hidden: a.hidden.clone(),
                gamma: a.gamma,
                actor_lr: a.actor_lr,
                critic_lr: a.critic_lr,
                lambda_lr: a.lambda_lr,
                tau: a.tau,
                alpha: a.alpha,
                auto_alpha: a.auto_alpha,
                alpha_lr: a.alpha_lr,
                target_entropy: a.target_entropy,
                batch_size: a.batch_size,
                cost_limit: a.cost_limit,
                horizon: self.env.episode_steps,
                initial_lambda: a.initial_lambda,
            },
            episodes: self.train.episodes,
            seed: self.run.seed,
            warmup_steps: self.train.warmup_steps,
            updates_per_step: self.train.updates_per_step,
            buffer_capacity: self.train.buffer_capacity,
            reward_scale: self.train.reward_scale,
            param_noise: self.train.param_noise,
            eval_every: self.train.eval_every,
            // replaced by the experiment's validation windows
            eval_offsets: vec![0],
        }
    }

    /// Digest of everything that determines network shapes and training.
    pub fn hash(&self) -> String {
        let mut shaped = self.clone();
        shaped.run.output_dir = PathBuf::new();
        shaped.run.mode = Mode::Csac;
        shaped.train.demos = None;
        let digest = Sha256::digest(shaped.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

fn agent_key(message: &str) -> &'static str {
    match message {
        m if m.contains("discount") => "gamma",
        m if m.contains("soft-target") => "tau",
        m if m.contains("learning rate") => "actor_lr",
        m if m.contains("temperature") => "alpha",
        m if m.contains("batch") => "batch_size",
        m if m.contains("hidden") => "hidden",
        m if m.contains("cost limit") => "cost_limit",
        m if m.contains("multiplier") => "initial_lambda",
        _ => "hidden",
    }
}

fn train_key(message: &str) -> &'static str {
    match message {
        m if m.contains("updates") => "updates_per_step",
        m if m.contains("interval") => "eval_every",
        m if m.contains("noise") => "param_noise",
        _ => "episodes",
    }
}
