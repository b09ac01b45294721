//! Flat `section.key = value` run configuration.
//!
//! One assignment per line; `#` starts a comment. Keys are strict: unknown
//! or repeated keys are errors reported with their line number. Every key
//! can be rendered back, so a resolved configuration round-trips.

use std::path::Path;

use fioc_env::{CollectionPolicy, EnvConfig, MixingKind, TaskSpec};
use fioc_model::interaction::cit::{CitConfig, CitLoss, CitScoring};
use fioc_model::{GraphSource, Regime, TrainConfig, WmConfig};
use fioc_policy::low_level::LowLevelMode;
use fioc_policy::targets::InverseConfig;
use fioc_policy::{MpcConfig, PgConfig, PpoConfig, RunConfig as EpisodeConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` set twice (first on line {first})")]
    Duplicate { line: usize, key: String, first: usize },
    #[error("line {line}: bad value for `{key}`: {msg}")]
    Value { line: usize, key: String, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ConfigError>;

/// Which dynamics the low-level planner rolls forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicsKind {
    Oracle,
    Learned,
}

/// Where subgoals come from during evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HighLevelKind {
    Task,
    Learned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub episodes: usize,
    pub horizon: usize,
    pub policy: CollectionPolicy,
    /// Trailing episodes of the dataset held out for evaluation.
    pub heldout: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            episodes: 100,
            horizon: 50,
            policy: CollectionPolicy::ContactSeeking,
            heldout: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySection {
    pub dynamics: DynamicsKind,
    pub low_level: LowLevelMode,
    pub high_level: HighLevelKind,
    pub tasks: Vec<TaskSpec>,
    pub episodes: usize,
    /// PPO batches for the learned subgoal policy; 0 skips training.
    pub train_batches: usize,
    pub hidden: usize,
    pub graph_source: GraphSource,
    /// Steps before each contact change used to fit the inverse model.
    pub lookback: usize,
    pub bc_subgoals: usize,
    pub run: EpisodeConfig,
    pub mpc: MpcConfig,
    pub ppo: PpoConfig,
    pub inverse: InverseConfig,
    pub pg: PgConfig,
    pub eval_n_objects: Option<usize>,
    pub eval_masses: Option<Vec<f64>>,
    pub eval_radii: Option<Vec<f64>>,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            dynamics: DynamicsKind::Oracle,
            low_level: LowLevelMode::Mpc,
            high_level: HighLevelKind::Task,
            tasks: vec![TaskSpec::Reach { target: 1 }],
            episodes: 20,
            train_batches: 0,
            hidden: 64,
            graph_source: GraphSource::Inferred,
            lookback: 5,
            bc_subgoals: 500,
            run: EpisodeConfig::default(),
            mpc: MpcConfig::default(),
            ppo: PpoConfig::default(),
            inverse: InverseConfig::default(),
            pg: PgConfig::default(),
            eval_n_objects: None,
            eval_masses: None,
            eval_radii: None,
        }
    }
}

impl PolicySection {
    /// Attribute-generalization mode is on when any evaluation pool is set.
    pub fn generalization(&self) -> bool {
        self.eval_n_objects.is_some() || self.eval_masses.is_some() || self.eval_radii.is_some()
    }

    /// Evaluation environment: `env` with the evaluation pools applied.
    pub fn eval_env(&self, env: &EnvConfig) -> EnvConfig {
        let mut e = env.clone();
        if let Some(n) = self.eval_n_objects {
            e.n_objects = n;
        }
        if let Some(m) = &self.eval_masses {
            e.masses = m.clone();
        }
        if let Some(r) = &self.eval_radii {
            e.radii = r.clone();
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IoSection {
    /// Empty means `<out>/dataset.jsonl`.
    pub dataset: String,
    /// Empty means `<out>/model.ckpt`.
    pub checkpoint: String,
    pub out_dir: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub env: EnvConfig,
    pub data: DataSection,
    pub model: WmConfig,
    pub train: TrainConfig,
    pub cit: CitConfig,
    pub policy: PolicySection,
    pub io: IoSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            env: EnvConfig::default(),
            data: DataSection::default(),
            model: WmConfig::default(),
            train: TrainConfig::default(),
            cit: CitConfig::default(),
            policy: PolicySection::default(),
            io: IoSection {
                out_dir: "out".into(),
                ..IoSection::default()
            },
        }
    }
}

/// Parse and render one value type.
pub trait ConfigValue: Sized {
    fn parse(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse(s: &str) -> std::result::Result<Self, String> {
                s.parse::<$t>().map_err(|e| e.to_string())
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

from_str_value!(usize, u64, f64, bool);

impl ConfigValue for String {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        Ok(s.to_string())
    }
    fn render(&self) -> String {
        self.clone()
    }
}

fn split_list(s: &str, sep: char) -> impl Iterator<Item = &str> {
    s.split(sep).map(str::trim).filter(|p| !p.is_empty())
}

impl<T: ConfigValue> ConfigValue for Vec<T> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        split_list(s, ',').map(T::parse).collect()
    }
    fn render(&self) -> String {
        self.iter().map(T::render).collect::<Vec<_>>().join(", ")
    }
}

impl<T: ConfigValue> ConfigValue for Option<T> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        if s == "none" {
            Ok(None)
        } else {
            T::parse(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.as_ref().map_or_else(|| "none".to_string(), T::render)
    }
}

impl ConfigValue for TaskSpec {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        s.parse().map_err(|e: fioc_env::EnvError| e.to_string())
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

/// Task lists are `;`-separated since tasks contain commas.
#[derive(Debug, Clone, PartialEq)]
struct TaskList;

impl TaskList {
    fn parse(s: &str) -> std::result::Result<Vec<TaskSpec>, String> {
        let v: Vec<TaskSpec> = split_list(s, ';').map(TaskSpec::parse).collect::<std::result::Result<_, _>>()?;
        if v.is_empty() {
            return Err("at least one task is required".into());
        }
        Ok(v)
    }
    fn render(v: &[TaskSpec]) -> String {
        v.iter().map(TaskSpec::render).collect::<Vec<_>>().join("; ")
    }
}

macro_rules! enum_value {
    ($t:ty { $($s:literal => $v:expr),* $(,)? }) => {
        impl ConfigValue for $t {
            fn parse(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($s => Ok($v),)*
                    _ => Err(format!("expected one of: {}", [$($s),*].join(", "))),
                }
            }
            fn render(&self) -> String {
                $(if *self == $v { return $s.to_string(); })*
                unreachable!("every variant has a name")
            }
        }
    };
}

enum_value!(MixingKind { "orthogonal" => MixingKind::Orthogonal, "identity" => MixingKind::Identity });
enum_value!(CollectionPolicy { "random" => CollectionPolicy::Random, "contact-seeking" => CollectionPolicy::ContactSeeking });
enum_value!(GraphSource {
    "inferred" => GraphSource::Inferred,
    "full" => GraphSource::Full,
    "empty" => GraphSource::Empty,
    "ground-truth" => GraphSource::GroundTruth,
});
enum_value!(LowLevelMode { "mpc" => LowLevelMode::Mpc, "policy-gradient" => LowLevelMode::PolicyGradient });
enum_value!(DynamicsKind { "oracle" => DynamicsKind::Oracle, "learned" => DynamicsKind::Learned });
enum_value!(HighLevelKind { "task" => HighLevelKind::Task, "learned" => HighLevelKind::Learned });

impl ConfigValue for Regime {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        let tags: Vec<&str> = split_list(s, ',').collect();
        if tags.len() != 1 {
            return Err(format!("exactly one regime tag is required, got {}", tags.len()));
        }
        tags[0].parse().map_err(|e: fioc_model::ModelError| e.to_string())
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

/// `gaussian` or `student-t(nu)`.
impl ConfigValue for CitLoss {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        if s == "gaussian" {
            return Ok(CitLoss::Gaussian);
        }
        let nu = s
            .strip_prefix("student-t(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or("expected `gaussian` or `student-t(nu)`")?;
        let nu: f64 = nu.trim().parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
        Ok(CitLoss::StudentT { nu })
    }
    fn render(&self) -> String {
        match self {
            CitLoss::Gaussian => "gaussian".into(),
            CitLoss::StudentT { nu } => format!("student-t({nu})"),
        }
    }
}

/// `pointwise` or `window(len)`.
impl ConfigValue for CitScoring {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        if s == "pointwise" {
            return Ok(CitScoring::Pointwise);
        }
        let w = s
            .strip_prefix("window(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or("expected `pointwise` or `window(len)`")?;
        Ok(CitScoring::Window(w.trim().parse().map_err(|e: std::num::ParseIntError| e.to_string())?))
    }
    fn render(&self) -> String {
        match self {
            CitScoring::Pointwise => "pointwise".into(),
            CitScoring::Window(w) => format!("window({w})"),
        }
    }
}

type Setter = fn(&mut RunConfig, &str) -> std::result::Result<(), String>;
type Getter = fn(&RunConfig) -> String;

/// One configurable key.
pub struct Key {
    pub name: &'static str,
    set: Setter,
    get: Getter,
}

macro_rules! keys {
    ($($name:literal => $($field:ident).+ ;)*) => {
        vec![$(
            Key {
                name: $name,
                set: |c, v| {
                    c.$($field).+ = ConfigValue::parse(v)?;
                    Ok(())
                },
                get: |c| ConfigValue::render(&c.$($field).+),
            },
        )*]
    };
}

/// Every key, in rendering order. Not keys: `model.obs_dim` and
/// `model.n_objects` follow the env section; per-stage seeds derive from
/// the root seed.
pub fn keys() -> Vec<Key> {
    let mut k = vec![
        Key {
            name: "seed",
            set: |c, v| {
                c.seed = Some(u64::parse(v)?);
                Ok(())
            },
            get: |c| c.seed.render(),
        },
        Key {
            name: "policy.tasks",
            set: |c, v| {
                c.policy.tasks = TaskList::parse(v)?;
                Ok(())
            },
            get: |c| TaskList::render(&c.policy.tasks),
        },
    ];
    k.extend(keys! {
        "env.n_objects" => env.n_objects;
        "env.dt" => env.dt;
        "env.drag" => env.drag;
        "env.action_bound" => env.action_bound;
        "env.obs_noise" => env.obs_noise;
        "env.dyn_noise" => env.dyn_noise;
        "env.masses" => env.masses;
        "env.radii" => env.radii;
        "env.types" => env.types;
        "env.n_types" => env.n_types;
        "env.init_speed" => env.init_speed;
        "env.task" => env.task;
        "env.mixing" => env.mixing;
        "data.episodes" => data.episodes;
        "data.horizon" => data.horizon;
        "data.policy" => data.policy;
        "data.heldout" => data.heldout;
        "model.regime" => model.regime;
        "model.s_static" => model.s_static;
        "model.s_dynamic" => model.s_dynamic;
        "model.c_dim" => model.c_dim;
        "model.d_dim" => model.d_dim;
        "model.gru_hidden" => model.gru_hidden;
        "model.enc_hidden" => model.enc_hidden;
        "model.dec_hidden" => model.dec_hidden;
        "model.factor_hidden" => model.factor_hidden;
        "model.trans_hidden" => model.trans_hidden;
        "model.reward_hidden" => model.reward_hidden;
        "model.pair_hidden" => model.pair_hidden;
        "model.u_dim" => model.u_dim;
        "model.codebook_size" => model.codebook_size;
        "model.code_hidden" => model.code_hidden;
        "model.temperature" => model.temperature;
        "model.p_edge" => model.p_edge;
        "model.commitment" => model.commitment;
        "model.contrastive_temperature" => model.contrastive_temperature;
        "model.sigma_min" => model.sigma_min;
        "model.static_prior_std" => model.static_prior_std;
        "model.alpha" => model.weights.alpha;
        "model.beta" => model.weights.beta;
        "model.gamma" => model.weights.gamma;
        "model.eta" => model.weights.eta;
        "model.reward_weight" => model.weights.reward;
        "train.epochs" => train.epochs;
        "train.batch_size" => train.batch_size;
        "train.lr" => train.lr;
        "train.window" => train.window;
        "train.source" => train.source;
        "train.clip_norm" => train.clip_norm;
        "cit.hidden" => cit.hidden;
        "cit.epochs" => cit.epochs;
        "cit.batch" => cit.batch;
        "cit.lr" => cit.lr;
        "cit.loss" => cit.loss;
        "cit.threshold" => cit.threshold;
        "cit.scoring" => cit.scoring;
        "cit.sigma_min" => cit.sigma_min;
        "policy.dynamics" => policy.dynamics;
        "policy.low_level" => policy.low_level;
        "policy.high_level" => policy.high_level;
        "policy.episodes" => policy.episodes;
        "policy.train_batches" => policy.train_batches;
        "policy.hidden" => policy.hidden;
        "policy.graph_source" => policy.graph_source;
        "policy.lookback" => policy.lookback;
        "policy.bc_subgoals" => policy.bc_subgoals;
        "policy.k" => policy.run.k;
        "policy.max_steps" => policy.run.max_steps;
        "policy.lambda_div" => policy.run.lambda_div;
        "policy.batch_episodes" => policy.run.batch_episodes;
        "policy.cem_population" => policy.mpc.population;
        "policy.cem_elites" => policy.mpc.elites;
        "policy.cem_iterations" => policy.mpc.iterations;
        "policy.cem_horizon" => policy.mpc.horizon;
        "policy.cem_init_std" => policy.mpc.init_std;
        "policy.refine_rate" => policy.mpc.refine_rate;
        "policy.ppo_clip" => policy.ppo.clip;
        "policy.ppo_gamma" => policy.ppo.gamma;
        "policy.ppo_gae_lambda" => policy.ppo.gae_lambda;
        "policy.ppo_entropy_coef" => policy.ppo.entropy_coef;
        "policy.ppo_value_coef" => policy.ppo.value_coef;
        "policy.ppo_lr" => policy.ppo.lr;
        "policy.ppo_epochs" => policy.ppo.epochs;
        "policy.ppo_minibatch" => policy.ppo.minibatch;
        "policy.inverse_hidden" => policy.inverse.hidden;
        "policy.inverse_epochs" => policy.inverse.epochs;
        "policy.inverse_lr" => policy.inverse.lr;
        "policy.pg_hidden" => policy.pg.hidden;
        "policy.pg_lr" => policy.pg.lr;
        "policy.pg_bc_epochs" => policy.pg.bc_epochs;
        "policy.eval_n_objects" => policy.eval_n_objects;
        "policy.eval_masses" => policy.eval_masses;
        "policy.eval_radii" => policy.eval_radii;
        "io.dataset" => io.dataset;
        "io.checkpoint" => io.checkpoint;
        "io.out_dir" => io.out_dir;
    });
    k
}

/// Parse config text; absent keys keep their defaults.
pub fn parse_str(text: &str) -> Result<RunConfig> {
    let table = keys();
    let mut cfg = RunConfig::default();
    let mut seen: Vec<(&'static str, usize)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            msg: format!("expected `key = value`, got `{body}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ConfigError::Syntax {
                line,
                msg: format!("malformed key `{key}`"),
            });
        }
        let entry = table.iter().find(|k| k.name == key).ok_or_else(|| ConfigError::UnknownKey {
            line,
            key: key.to_string(),
        })?;
        if let Some(&(_, first)) = seen.iter().find(|(k, _)| *k == entry.name) {
            return Err(ConfigError::Duplicate {
                line,
                key: key.to_string(),
                first,
            });
        }
        seen.push((entry.name, line));
        (entry.set)(&mut cfg, value).map_err(|msg| ConfigError::Value {
            line,
            key: key.to_string(),
            msg,
        })?;
    }
    sync_derived(&mut cfg);
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_str(&text)
}

/// Fields that follow from other sections.
pub fn sync_derived(cfg: &mut RunConfig) {
    cfg.model.obs_dim = cfg.env.obs_dim();
    cfg.model.n_objects = cfg.env.n_objects;
    cfg.policy.mpc.action_bound = cfg.env.action_bound;
}

/// Every key with its current value, one `key = value` line each.
pub fn render(cfg: &RunConfig) -> String {
    keys()
        .iter()
        .map(|k| format!("{} = {}\n", k.name, (k.get)(cfg)))
        .collect()
}

/// The env keys only.
pub fn render_env(env: &EnvConfig) -> String {
    let cfg = RunConfig {
        env: env.clone(),
        ..RunConfig::default()
    };
    keys()
        .iter()
        .filter(|k| k.name.starts_with("env."))
        .map(|k| format!("{} = {}\n", k.name, (k.get)(&cfg)))
        .collect()
}

/// Cross-field invariants, checked once the seed is final.
pub fn validate(cfg: &RunConfig) -> Result<()> {
    let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
    if cfg.seed.is_none() {
        return Err(ConfigError::Invalid("a root `seed` is required (config key or --seed)".into()));
    }
    cfg.env.validate().map_err(|e| invalid(&e))?;
    cfg.model.validate().map_err(|e| invalid(&e))?;
    cfg.train.validate().map_err(|e| invalid(&e))?;
    cfg.policy.run.validate().map_err(|e| invalid(&e))?;
    cfg.policy.mpc.cem().validate().map_err(|e| invalid(&e))?;
    if cfg.data.episodes == 0 || cfg.data.horizon < 2 {
        return Err(ConfigError::Invalid("data.episodes must be >= 1 and data.horizon >= 2".into()));
    }
    if cfg.data.heldout >= cfg.data.episodes {
        return Err(ConfigError::Invalid(format!(
            "data.heldout ({}) must be smaller than data.episodes ({})",
            cfg.data.heldout, cfg.data.episodes
        )));
    }
    if !(cfg.cit.threshold.is_finite() && cfg.cit.sigma_min > 0.0) {
        return Err(ConfigError::Invalid("cit.threshold must be finite and cit.sigma_min positive".into()));
    }
    let eval = cfg.policy.eval_env(&cfg.env);
    eval.validate().map_err(|e| invalid(&e))?;
    for t in &cfg.policy.tasks {
        t.validate(eval.n_objects).map_err(|e| invalid(&e))?;
    }
    if cfg.policy.episodes == 0 {
        return Err(ConfigError::Invalid("policy.episodes must be >= 1".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = parse_str("env.n_objects = 3\nseed = 1\n").unwrap();
        assert_eq!(c.seed, Some(1));
        assert_eq!(c.env.n_objects, 3);
        let w = c.model.weights;
        assert_eq!((w.alpha, w.beta, w.gamma, w.eta), (1.0, 0.05, 0.1, 0.2));
        assert_eq!(c.model.obs_dim, c.env.obs_dim());
        validate(&c).unwrap();
    }

    #[test]
    fn unknown_key_names_the_key() {
        let e = parse_str("seed = 1\nenv.gravity = 9.8\n").unwrap_err();
        match &e {
            ConfigError::UnknownKey { line, key } => assert_eq!((*line, key.as_str()), (2, "env.gravity")),
            other => panic!("{other:?}"),
        }
        assert!(e.to_string().contains("env.gravity"));
    }

    #[test]
    fn two_regime_tags_rejected() {
        assert!(matches!(
            parse_str("model.regime = variational, cit").unwrap_err(),
            ConfigError::Value { line: 1, .. }
        ));
        assert!(matches!(
            parse_str("model.regime = cit\nmodel.regime = codebook").unwrap_err(),
            ConfigError::Duplicate { line: 2, first: 1, .. }
        ));
    }

    #[test]
    fn syntax_and_value_errors_carry_lines() {
        assert!(matches!(parse_str("# c\n\nseed 1").unwrap_err(), ConfigError::Syntax { line: 3, .. }));
        assert!(matches!(parse_str("env.dt = fast").unwrap_err(), ConfigError::Value { line: 1, .. }));
        assert!(matches!(parse_str("env.task = push(1)").unwrap_err(), ConfigError::Value { .. }));
    }

    #[test]
    fn missing_seed_and_bad_split_are_invalid() {
        assert!(validate(&parse_str("").unwrap()).is_err());
        assert!(validate(&parse_str("seed = 0\ndata.episodes = 5\ndata.heldout = 5").unwrap()).is_err());
        assert!(validate(&parse_str("seed = 0\npolicy.tasks = reach(5)").unwrap()).is_err());
    }

    #[test]
    fn comments_and_lists() {
        let c = parse_str("seed = 2 # root\nenv.masses = 1, 4\npolicy.tasks = reach(1); chain(1,2)\npolicy.refine_rate = none\ncit.loss = gaussian\ncit.scoring = window(5)").unwrap();
        assert_eq!(c.env.masses, vec![1.0, 4.0]);
        assert_eq!(c.policy.tasks.len(), 2);
        assert_eq!(c.policy.mpc.refine_rate, None);
        assert_eq!(c.cit.loss, CitLoss::Gaussian);
        assert_eq!(c.cit.scoring, CitScoring::Window(5));
    }

    #[test]
    fn rendered_config_round_trips() {
        let mut c = parse_str("seed = 9\nenv.radii = 0.06\nmodel.regime = codebook\npolicy.eval_masses = 5, 6\ncit.loss = student-t(4.5)").unwrap();
        c.train.lr = 0.1 + 0.2;
        let back = parse_str(&render(&c)).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn eval_env_changes_pools_only() {
        let c = parse_str("seed = 1\npolicy.eval_masses = 4, 5\npolicy.eval_n_objects = 4").unwrap();
        let e = c.policy.eval_env(&c.env);
        assert_eq!(e.masses, vec![4.0, 5.0]);
        assert_eq!(e.n_objects, 4);
        assert_eq!(e.radii, c.env.radii);
        assert_eq!(e.dt, c.env.dt);
        assert!(c.policy.generalization());
    }
}
