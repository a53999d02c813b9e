//! Flat `section.key = value` configuration.
//!
//! Precedence, lowest first: built-in defaults, the config file, environment
//! variables (`PAIR_GRPO_` + key with dots as underscores, upper-cased, e.g.
//! `PAIR_GRPO_HP_BETA`), then command-line flags.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pair_grpo::envs::EnvSpec;
use pair_grpo::objectives::{ClipMode, HyperParams};
use pair_grpo::rewards::SigmaScope;
use pair_grpo::trainer::{HardUpdate, Method, TrainConfig};

pub const ENV_PREFIX: &str = "PAIR_GRPO_";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Invalid(#[from] pair_grpo::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub method: Method,
    pub epochs: usize,
    pub pairs_per_epoch: usize,
    pub n_inner: usize,
    pub sync_every: usize,
    pub seed: u64,
    pub fixed_delta: bool,
    pub hard_update: HardUpdate,
    /// Write a checkpoint every this many epochs; 0 writes only the final policy.
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSection {
    pub seed: u64,
    pub n_samples: usize,
    pub replicates: usize,
    pub equivalence_pairs: usize,
    pub sigma_scope: SigmaScope,
    pub fd_points: usize,
    pub fd_step: f64,
    pub target_cases: usize,
    pub directionality_cases: usize,
    pub monotonic_runs: usize,
    /// Epochs run past the first one with `delta_t < 1e-5` in the convergence suite.
    pub tail_epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblateSection {
    pub seeds: usize,
    pub epochs: usize,
    pub include_fixed: bool,
    /// Additional `(delta0, gamma_decay)` configurations.
    pub extra: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub env: EnvSpec,
    pub hp: HyperParams,
    pub train: TrainSection,
    pub analysis: AnalysisSection,
    pub compare_seeds: usize,
    pub ablate: AblateSection,
    /// Suites run by `verify`: `all` or a comma-separated list.
    pub verify_suites: String,
    pub wall_clock: bool,
}

impl Default for Config {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            env: EnvSpec::default(),
            hp: HyperParams::default(),
            train: TrainSection {
                method: t.method,
                epochs: t.epochs,
                pairs_per_epoch: t.pairs_per_epoch,
                n_inner: t.n_inner,
                sync_every: t.sync_every,
                seed: t.seed,
                fixed_delta: t.fixed_delta,
                hard_update: t.hard_update,
                checkpoint_every: 0,
            },
            analysis: AnalysisSection {
                seed: 0,
                n_samples: 10_000,
                replicates: 20,
                equivalence_pairs: 1000,
                sigma_scope: SigmaScope::PerGroup,
                fd_points: 100,
                fd_step: pair_grpo::policy::DEFAULT_FD_STEP,
                target_cases: 100_000,
                directionality_cases: 10_000,
                monotonic_runs: 100,
                tail_epochs: 50,
            },
            compare_seeds: 10,
            ablate: AblateSection {
                seeds: 10,
                epochs: 200,
                include_fixed: false,
                extra: Vec::new(),
            },
            verify_suites: "all".into(),
            wall_clock: false,
        }
    }
}

fn parse<T>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T: FromStr,
    T::Err: Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_extra(key: &str, value: &str) -> Result<Vec<(f64, f64)>, ConfigError> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (d, g) = item.split_once(':').ok_or_else(|| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: format!("expected delta0:gamma_decay, got {item:?}"),
        })?;
        out.push((parse(key, d.trim())?, parse(key, g.trim())?));
    }
    Ok(out)
}

impl Config {
    /// Sets one key. `run.*` keys are manifest metadata and are ignored.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value;
        match key {
            "env.S" => self.env.states = parse(key, v)?,
            "env.A" => self.env.actions = parse(key, v)?,
            "env.seed" => self.env.seed = parse(key, v)?,
            "env.noise_std" => self.env.noise_std = parse(key, v)?,
            "env.reward_scale" => self.env.reward_scale = parse(key, v)?,
            "env.reward_offset" => self.env.reward_offset = parse(key, v)?,
            "env.label_temperature" => self.env.label_temperature = parse(key, v)?,

            "hp.eps_clip" => self.hp.eps_clip = parse(key, v)?,
            "hp.beta" => self.hp.beta = parse(key, v)?,
            "hp.alpha" => self.hp.alpha = parse(key, v)?,
            "hp.delta0" => self.hp.delta0 = parse(key, v)?,
            "hp.gamma_decay" => self.hp.gamma_decay = parse(key, v)?,
            "hp.eta" => self.hp.eta = parse(key, v)?,
            "hp.K" => self.hp.group_size = parse(key, v)?,
            "hp.p_min" => self.hp.p_min = parse(key, v)?,
            "hp.eps_sigma" => self.hp.eps_sigma = parse(key, v)?,
            "hp.gamma_discount" => self.hp.gamma_discount = parse(key, v)?,
            "hp.clip_mode" => self.hp.clip_mode = parse::<ClipMode>(key, v)?,

            "train.method" => self.train.method = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.pairs_per_epoch" => self.train.pairs_per_epoch = parse(key, v)?,
            "train.n_inner" => self.train.n_inner = parse(key, v)?,
            "train.sync_every" => self.train.sync_every = parse(key, v)?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "train.fixed_delta" => self.train.fixed_delta = parse(key, v)?,
            "train.hard_update" => self.train.hard_update = parse(key, v)?,
            "train.checkpoint_every" => self.train.checkpoint_every = parse(key, v)?,

            "analysis.seed" => self.analysis.seed = parse(key, v)?,
            "analysis.n_samples" => self.analysis.n_samples = parse(key, v)?,
            "analysis.replicates" => self.analysis.replicates = parse(key, v)?,
            "analysis.equivalence_pairs" => self.analysis.equivalence_pairs = parse(key, v)?,
            "analysis.sigma_scope" => self.analysis.sigma_scope = parse(key, v)?,
            "analysis.fd_points" => self.analysis.fd_points = parse(key, v)?,
            "analysis.fd_step" => self.analysis.fd_step = parse(key, v)?,
            "analysis.target_cases" => self.analysis.target_cases = parse(key, v)?,
            "analysis.directionality_cases" => self.analysis.directionality_cases = parse(key, v)?,
            "analysis.monotonic_runs" => self.analysis.monotonic_runs = parse(key, v)?,
            "analysis.tail_epochs" => self.analysis.tail_epochs = parse(key, v)?,

            "compare.seeds" => self.compare_seeds = parse(key, v)?,

            "ablate.seeds" => self.ablate.seeds = parse(key, v)?,
            "ablate.epochs" => self.ablate.epochs = parse(key, v)?,
            "ablate.include_fixed" => self.ablate.include_fixed = parse(key, v)?,
            "ablate.extra" => self.ablate.extra = parse_extra(key, v)?,

            "verify.suites" => self.verify_suites = v.to_string(),
            "output.wall_clock" => self.wall_clock = parse(key, v)?,

            k if k.starts_with("run.") => {}
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Every key with its current value, in manifest order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let extra = self
            .ablate
            .extra
            .iter()
            .map(|(d, g)| format!("{d}:{g}"))
            .collect::<Vec<_>>()
            .join(",");
        vec![
            ("env.S", self.env.states.to_string()),
            ("env.A", self.env.actions.to_string()),
            ("env.seed", self.env.seed.to_string()),
            ("env.noise_std", self.env.noise_std.to_string()),
            ("env.reward_scale", self.env.reward_scale.to_string()),
            ("env.reward_offset", self.env.reward_offset.to_string()),
            ("env.label_temperature", self.env.label_temperature.to_string()),
            ("hp.eps_clip", self.hp.eps_clip.to_string()),
            ("hp.beta", self.hp.beta.to_string()),
            ("hp.alpha", self.hp.alpha.to_string()),
            ("hp.delta0", self.hp.delta0.to_string()),
            ("hp.gamma_decay", self.hp.gamma_decay.to_string()),
            ("hp.eta", self.hp.eta.to_string()),
            ("hp.K", self.hp.group_size.to_string()),
            ("hp.p_min", self.hp.p_min.to_string()),
            ("hp.eps_sigma", self.hp.eps_sigma.to_string()),
            ("hp.gamma_discount", self.hp.gamma_discount.to_string()),
            ("hp.clip_mode", self.hp.clip_mode.to_string()),
            ("train.method", self.train.method.to_string()),
            ("train.epochs", self.train.epochs.to_string()),
            ("train.pairs_per_epoch", self.train.pairs_per_epoch.to_string()),
            ("train.n_inner", self.train.n_inner.to_string()),
            ("train.sync_every", self.train.sync_every.to_string()),
            ("train.seed", self.train.seed.to_string()),
            ("train.fixed_delta", self.train.fixed_delta.to_string()),
            ("train.hard_update", self.train.hard_update.to_string()),
            ("train.checkpoint_every", self.train.checkpoint_every.to_string()),
            ("analysis.seed", self.analysis.seed.to_string()),
            ("analysis.n_samples", self.analysis.n_samples.to_string()),
            ("analysis.replicates", self.analysis.replicates.to_string()),
            ("analysis.equivalence_pairs", self.analysis.equivalence_pairs.to_string()),
            ("analysis.sigma_scope", self.analysis.sigma_scope.to_string()),
            ("analysis.fd_points", self.analysis.fd_points.to_string()),
            ("analysis.fd_step", self.analysis.fd_step.to_string()),
            ("analysis.target_cases", self.analysis.target_cases.to_string()),
            ("analysis.directionality_cases", self.analysis.directionality_cases.to_string()),
            ("analysis.monotonic_runs", self.analysis.monotonic_runs.to_string()),
            ("analysis.tail_epochs", self.analysis.tail_epochs.to_string()),
            ("compare.seeds", self.compare_seeds.to_string()),
            ("ablate.seeds", self.ablate.seeds.to_string()),
            ("ablate.epochs", self.ablate.epochs.to_string()),
            ("ablate.include_fixed", self.ablate.include_fixed.to_string()),
            ("ablate.extra", extra),
            ("verify.suites", self.verify_suites.clone()),
            ("output.wall_clock", self.wall_clock.to_string()),
        ]
    }

    /// Applies `key = value` lines. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let value = value.trim().trim_matches('"');
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_text(&text)
    }

    /// Applies overrides from `vars` (normally `std::env::vars()`).
    pub fn apply_env<I>(&mut self, vars: I) -> Result<(), ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let keys: Vec<(&'static str, String)> = self
            .entries()
            .into_iter()
            .map(|(k, _)| (k, env_var_name(k)))
            .collect();
        let mut found: Vec<(&'static str, String)> = Vec::new();
        for (name, value) in vars {
            if let Some((key, _)) = keys.iter().find(|(_, n)| *n == name) {
                found.push((key, value));
            }
        }
        // Stable order so the outcome never depends on the environment's iteration order.
        found.sort_by_key(|(k, _)| *k);
        for (key, value) in found {
            self.set(key, value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train_config(self.train.method, self.train.seed).validate()?;
        let positive = |key: &str, v: usize, min: usize| {
            if v >= min {
                Ok(())
            } else {
                Err(ConfigError::BadValue {
                    key: key.to_string(),
                    value: v.to_string(),
                    reason: format!("must be >= {min}"),
                })
            }
        };
        positive("analysis.n_samples", self.analysis.n_samples, 2)?;
        positive("analysis.replicates", self.analysis.replicates, 1)?;
        positive("analysis.equivalence_pairs", self.analysis.equivalence_pairs, 1)?;
        positive("analysis.monotonic_runs", self.analysis.monotonic_runs, 1)?;
        positive("compare.seeds", self.compare_seeds, 1)?;
        positive("ablate.seeds", self.ablate.seeds, 1)?;
        positive("ablate.epochs", self.ablate.epochs, 2)?;
        if self.analysis.fd_step.is_nan() || self.analysis.fd_step <= 0.0 {
            return Err(ConfigError::BadValue {
                key: "analysis.fd_step".into(),
                value: self.analysis.fd_step.to_string(),
                reason: "must be > 0".into(),
            });
        }
        for &(d, g) in &self.ablate.extra {
            HyperParams {
                delta0: d,
                gamma_decay: g,
                ..self.hp.clone()
            }
            .validate()?;
        }
        Ok(())
    }

    pub fn train_config(&self, method: Method, seed: u64) -> TrainConfig {
        TrainConfig {
            method,
            epochs: self.train.epochs,
            pairs_per_epoch: self.train.pairs_per_epoch,
            n_inner: self.train.n_inner,
            sync_every: self.train.sync_every,
            hp: self.hp.clone(),
            env: self.env.clone(),
            seed,
            fixed_delta: self.train.fixed_delta,
            hard_update: self.train.hard_update,
            record_wall_clock: self.wall_clock,
        }
    }

    /// Manifest text: metadata as `run.*` keys, then every resolved setting.
    pub fn manifest(&self, command: &str, artifacts: &[&str]) -> String {
        let mut out = String::new();
        out.push_str("# pair-grpo run manifest\n");
        out.push_str(&format!(
            "# rerun: pair-grpo {command} --config manifest.cfg --out <dir>\n"
        ));
        out.push_str(&format!("run.command = {command}\n"));
        out.push_str(&format!("run.version = {}\n", env!("CARGO_PKG_VERSION")));
        out.push_str(&format!("run.artifacts = {}\n", artifacts.join(",")));
        for (k, v) in self.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

pub fn env_var_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.replace('.', "_").to_uppercase())
}
