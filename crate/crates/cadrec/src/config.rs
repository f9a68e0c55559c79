//! Flat key=value run configuration with documented defaults, CLI overrides,
//! and named ablation switches.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cadrec_core::encoders::HyperParams;
use cadrec_core::hgc::SaNormMode;
use cadrec_core::interactions::SplitOptions;
use cadrec_core::objective::{OptimizerKind, RegForm};
use cadrec_core::synth::SynthConfig;

use crate::{AppError, AppResult};

/// Named model ablations, matching the experiment-table switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Ablation {
    /// Drop the attention perturbation (delta forced to zero).
    NoSa,
    /// Drop disentanglement: no popularity branch, no individual bias.
    NoDis,
    /// Drop embedding regularization (beta2 forced to zero).
    NoEr,
    /// Drop weighted supervision (both lambdas forced to one).
    NoWs,
}

impl FromStr for Ablation {
    type Err = AppError;

    fn from_str(s: &str) -> AppResult<Self> {
        match s {
            "no_sa" => Ok(Ablation::NoSa),
            "no_dis" => Ok(Ablation::NoDis),
            "no_er" => Ok(Ablation::NoEr),
            "no_ws" => Ok(Ablation::NoWs),
            other => Err(AppError::config(format!(
                "unknown ablation `{other}`; expected one of no_sa, no_dis, no_er, no_ws"
            ))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Ablation::NoSa => "no_sa",
            Ablation::NoDis => "no_dis",
            Ablation::NoEr => "no_er",
            Ablation::NoWs => "no_ws",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptChoice {
    Sgd,
    Momentum,
    Adam,
}

/// One run's full configuration. Every field has a default; a config file
/// and CLI flags only override.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub delimiter: char,
    pub out_dir: PathBuf,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    pub min_interactions: usize,
    pub max_seq_len: usize,
    pub ia_fraction: f64,
    pub hp: HyperParams,
    pub batch_size: usize,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    pub eval_ks: Vec<usize>,
    pub reg_form: RegForm,
    pub optimizer: OptChoice,
    pub momentum: f64,
    pub adam_decay1: f64,
    pub adam_decay2: f64,
    pub adam_epsilon: f64,
    pub ablations: BTreeSet<Ablation>,
    pub synth_users: usize,
    pub synth_items: usize,
    pub synth_d_true: usize,
    pub synth_alpha_pop: f64,
    pub synth_sigma_indi: f64,
    pub synth_events_per_user: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            delimiter: '\t',
            out_dir: PathBuf::from("out"),
            train_ratio: 0.7,
            val_ratio: 0.1,
            test_ratio: 0.2,
            min_interactions: 5,
            max_seq_len: 200,
            ia_fraction: 0.8,
            hp: HyperParams::default(),
            batch_size: 64,
            epochs: 30,
            patience: 10,
            seed: 42,
            eval_ks: vec![5, 10, 20],
            reg_form: RegForm::Squared,
            optimizer: OptChoice::Sgd,
            momentum: 0.9,
            adam_decay1: 0.9,
            adam_decay2: 0.999,
            adam_epsilon: 1e-8,
            ablations: BTreeSet::new(),
            synth_users: 500,
            synth_items: 1000,
            synth_d_true: 8,
            synth_alpha_pop: 1.0,
            synth_sigma_indi: 1.0,
            synth_events_per_user: 60,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> AppResult<T> {
    value
        .parse::<T>()
        .map_err(|_| AppError::config(format!("key `{key}`: cannot parse `{value}`")))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> AppResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            AppError::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_str_contents(&text)
    }

    pub fn from_str_contents(text: &str) -> AppResult<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                AppError::config(format!("line {}: expected key=value, got `{line}`", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Apply one key=value pair; unknown keys are rejected so typos fail fast.
    pub fn set(&mut self, key: &str, value: &str) -> AppResult<()> {
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "delimiter" => {
                self.delimiter = match value {
                    "tab" => '\t',
                    "space" => ' ',
                    "comma" => ',',
                    other => {
                        return Err(AppError::config(format!(
                            "key `delimiter`: expected tab|space|comma, got `{other}`"
                        )))
                    }
                }
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            "train_ratio" => self.train_ratio = parse_num(key, value)?,
            "val_ratio" => self.val_ratio = parse_num(key, value)?,
            "test_ratio" => self.test_ratio = parse_num(key, value)?,
            "min_interactions" => self.min_interactions = parse_num(key, value)?,
            "max_seq_len" => self.max_seq_len = parse_num(key, value)?,
            "ia_fraction" => self.ia_fraction = parse_num(key, value)?,
            "d_m" => self.hp.d_m = parse_num(key, value)?,
            "z_h" => self.hp.z_h = parse_num(key, value)?,
            "z_l" => self.hp.z_l = parse_num(key, value)?,
            "delta" => self.hp.delta = parse_num(key, value)?,
            "beta1" => self.hp.beta1 = parse_num(key, value)?,
            "beta2" => self.hp.beta2 = parse_num(key, value)?,
            "lambda1" => self.hp.lambda1 = parse_num(key, value)?,
            "lambda2" => self.hp.lambda2 = parse_num(key, value)?,
            "eta" => self.hp.eta = parse_num(key, value)?,
            "sa_norm" => {
                self.hp.sa_norm = match value {
                    "row" => SaNormMode::Row,
                    "frobenius" => SaNormMode::Frobenius,
                    "col" => SaNormMode::Col,
                    other => {
                        return Err(AppError::config(format!(
                            "key `sa_norm`: expected row|frobenius|col, got `{other}`"
                        )))
                    }
                }
            }
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "patience" => self.patience = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "eval_ks" => {
                let ks: AppResult<Vec<usize>> =
                    value.split(',').map(|t| parse_num(key, t.trim())).collect();
                self.eval_ks = ks?;
            }
            "reg_form" => {
                self.reg_form = match value {
                    "squared" => RegForm::Squared,
                    "norm" => RegForm::Norm,
                    other => {
                        return Err(AppError::config(format!(
                            "key `reg_form`: expected squared|norm, got `{other}`"
                        )))
                    }
                }
            }
            "optimizer" => {
                self.optimizer = match value {
                    "sgd" => OptChoice::Sgd,
                    "momentum" => OptChoice::Momentum,
                    "adam" => OptChoice::Adam,
                    other => {
                        return Err(AppError::config(format!(
                            "key `optimizer`: expected sgd|momentum|adam, got `{other}`"
                        )))
                    }
                }
            }
            "momentum" => self.momentum = parse_num(key, value)?,
            "adam_decay1" => self.adam_decay1 = parse_num(key, value)?,
            "adam_decay2" => self.adam_decay2 = parse_num(key, value)?,
            "adam_epsilon" => self.adam_epsilon = parse_num(key, value)?,
            "ablate" => {
                for token in value.split(',') {
                    let token = token.trim();
                    if !token.is_empty() {
                        self.ablations.insert(token.parse()?);
                    }
                }
            }
            "synth_users" => self.synth_users = parse_num(key, value)?,
            "synth_items" => self.synth_items = parse_num(key, value)?,
            "synth_d_true" => self.synth_d_true = parse_num(key, value)?,
            "synth_alpha_pop" => self.synth_alpha_pop = parse_num(key, value)?,
            "synth_sigma_indi" => self.synth_sigma_indi = parse_num(key, value)?,
            "synth_events_per_user" => self.synth_events_per_user = parse_num(key, value)?,
            other => {
                return Err(AppError::config(format!("unknown config key `{other}`")));
            }
        }
        Ok(())
    }

    /// Fold the selected ablations into the hyperparameters.
    pub fn apply_ablations(&mut self) {
        for a in self.ablations.clone() {
            match a {
                Ablation::NoSa => {
                    self.hp.delta = 0.0;
                    self.hp.sa_enabled = false;
                }
                Ablation::NoDis => {
                    self.hp.beta1 = 0.0;
                    self.hp.pop_enabled = false;
                    self.hp.bias_enabled = false;
                }
                Ablation::NoEr => self.hp.beta2 = 0.0,
                Ablation::NoWs => {
                    self.hp.lambda1 = 1.0;
                    self.hp.lambda2 = 1.0;
                }
            }
        }
    }

    pub fn split_options(&self) -> SplitOptions {
        SplitOptions {
            ratios: (self.train_ratio, self.val_ratio, self.test_ratio),
            min_interactions: self.min_interactions,
            max_seq_len: self.max_seq_len,
            ia_fraction: self.ia_fraction,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            num_users: self.synth_users,
            num_items: self.synth_items,
            d_true: self.synth_d_true,
            alpha_pop: self.synth_alpha_pop,
            sigma_indi: self.synth_sigma_indi,
            events_per_user: self.synth_events_per_user,
            seed: self.seed,
        }
    }

    pub fn optimizer_kind(&self) -> OptimizerKind {
        match self.optimizer {
            OptChoice::Sgd => OptimizerKind::Sgd,
            OptChoice::Momentum => OptimizerKind::Momentum { momentum: self.momentum },
            OptChoice::Adam => OptimizerKind::Adam {
                decay1: self.adam_decay1,
                decay2: self.adam_decay2,
                epsilon: self.adam_epsilon,
            },
        }
    }

    pub fn validate(&self) -> AppResult<()> {
        self.hp.validate()?;
        self.split_options().validate()?;
        if self.batch_size == 0 {
            return Err(AppError::config("batch_size must be positive"));
        }
        if self.epochs == 0 {
            return Err(AppError::config("epochs must be positive"));
        }
        if self.eval_ks.is_empty() || self.eval_ks.iter().any(|&k| k == 0) {
            return Err(AppError::config("eval_ks must be a non-empty list of positive K"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(AppError::config("momentum must be in [0, 1)"));
        }
        self.synth_config().validate()?;
        Ok(())
    }

    /// Serialize every setting; parses back to an identical config.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        if let Some(data) = &self.data {
            s.push_str(&format!("data = {}\n", data.display()));
        }
        let delim = match self.delimiter {
            '\t' => "tab",
            ' ' => "space",
            _ => "comma",
        };
        s.push_str(&format!("delimiter = {delim}\n"));
        s.push_str(&format!("out_dir = {}\n", self.out_dir.display()));
        s.push_str(&format!("train_ratio = {}\n", self.train_ratio));
        s.push_str(&format!("val_ratio = {}\n", self.val_ratio));
        s.push_str(&format!("test_ratio = {}\n", self.test_ratio));
        s.push_str(&format!("min_interactions = {}\n", self.min_interactions));
        s.push_str(&format!("max_seq_len = {}\n", self.max_seq_len));
        s.push_str(&format!("ia_fraction = {}\n", self.ia_fraction));
        s.push_str(&format!("d_m = {}\n", self.hp.d_m));
        s.push_str(&format!("z_h = {}\n", self.hp.z_h));
        s.push_str(&format!("z_l = {}\n", self.hp.z_l));
        s.push_str(&format!("delta = {}\n", self.hp.delta));
        s.push_str(&format!("beta1 = {}\n", self.hp.beta1));
        s.push_str(&format!("beta2 = {}\n", self.hp.beta2));
        s.push_str(&format!("lambda1 = {}\n", self.hp.lambda1));
        s.push_str(&format!("lambda2 = {}\n", self.hp.lambda2));
        s.push_str(&format!("eta = {}\n", self.hp.eta));
        let sa_norm = match self.hp.sa_norm {
            SaNormMode::Row => "row",
            SaNormMode::Frobenius => "frobenius",
            SaNormMode::Col => "col",
        };
        s.push_str(&format!("sa_norm = {sa_norm}\n"));
        s.push_str(&format!("batch_size = {}\n", self.batch_size));
        s.push_str(&format!("epochs = {}\n", self.epochs));
        s.push_str(&format!("patience = {}\n", self.patience));
        s.push_str(&format!("seed = {}\n", self.seed));
        let ks: Vec<String> = self.eval_ks.iter().map(|k| k.to_string()).collect();
        s.push_str(&format!("eval_ks = {}\n", ks.join(",")));
        let reg = match self.reg_form {
            RegForm::Squared => "squared",
            RegForm::Norm => "norm",
        };
        s.push_str(&format!("reg_form = {reg}\n"));
        let opt = match self.optimizer {
            OptChoice::Sgd => "sgd",
            OptChoice::Momentum => "momentum",
            OptChoice::Adam => "adam",
        };
        s.push_str(&format!("optimizer = {opt}\n"));
        s.push_str(&format!("momentum = {}\n", self.momentum));
        s.push_str(&format!("adam_decay1 = {}\n", self.adam_decay1));
        s.push_str(&format!("adam_decay2 = {}\n", self.adam_decay2));
        s.push_str(&format!("adam_epsilon = {}\n", self.adam_epsilon));
        if !self.ablations.is_empty() {
            let parts: Vec<String> = self.ablations.iter().map(|a| a.to_string()).collect();
            s.push_str(&format!("ablate = {}\n", parts.join(",")));
        }
        s.push_str(&format!("synth_users = {}\n", self.synth_users));
        s.push_str(&format!("synth_items = {}\n", self.synth_items));
        s.push_str(&format!("synth_d_true = {}\n", self.synth_d_true));
        s.push_str(&format!("synth_alpha_pop = {}\n", self.synth_alpha_pop));
        s.push_str(&format!("synth_sigma_indi = {}\n", self.synth_sigma_indi));
        s.push_str(&format!("synth_events_per_user = {}\n", self.synth_events_per_user));
        s
    }
}
