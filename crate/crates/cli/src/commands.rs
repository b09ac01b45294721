//! The five pipeline commands. Each is a function of the resolved
//! configuration, its input files and the root seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fioc_env::{contact_summary, generate_dataset, read_jsonl_file, write_jsonl_file, Env, EpisodeRecord, InteractionGraph};
use fioc_model::interaction::cit::{CitModels, TransitionSample};
use fioc_model::interaction::infer_graph_cit;
use fioc_model::wm::{loss_total, rollout_mse, windows_from_episode};
use fioc_model::{
    nshd, probe::probe_samples, probe_table, train_world_model, GraphSource, ModelError, Regime, WindowNoise,
    WorldModel,
};
use fioc_numkit::{load_tensors, read_checkpoint, tensors, write_checkpoint, Tensor};
use fioc_policy::low_level::LowLevelMode;
use fioc_policy::run::{pretrain_low_level, LowLevel};
use fioc_policy::targets::{contact_events, InverseConfig};
use fioc_policy::{
    policy_input, run_task, train_high_level, Controller, HighLevelMode, HighLevelPolicy, InverseModel, LearnedController,
    LearnedDynamics, OracleController,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{self, DynamicsKind, HighLevelKind, RunConfig};
use crate::error::{CliError, Result};
use crate::report::{self, Metric};
use crate::seeds::derive_seed;

/// Resolved configuration plus where outputs go.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
    pub root: u64,
    pub out: PathBuf,
}

impl Context {
    /// Load `config` (or defaults), apply overrides, derive per-stage
    /// seeds, validate, and create the output directory.
    pub fn prepare(config: Option<&Path>, seed: Option<u64>, out: Option<&Path>) -> Result<Self> {
        let mut cfg = match config {
            Some(p) => config::parse_config(p)?,
            None => RunConfig::default(),
        };
        if seed.is_some() {
            cfg.seed = seed;
        }
        if let Some(o) = out {
            cfg.io.out_dir = o.display().to_string();
        }
        config::sync_derived(&mut cfg);
        config::validate(&cfg)?;
        let root = cfg.seed.expect("validated");
        cfg.env.seed = derive_seed(root, "env");
        cfg.train.seed = derive_seed(root, "train");
        cfg.cit.seed = derive_seed(root, "cit");
        cfg.policy.inverse.seed = derive_seed(root, "policy.inverse");
        let out = PathBuf::from(&cfg.io.out_dir);
        std::fs::create_dir_all(&out).map_err(|e| CliError::Setup(format!("cannot create {}: {e}", out.display())))?;
        let ctx = Self { cfg, root, out };
        ctx.write_text("resolved.cfg", &config::render(&ctx.cfg))?;
        Ok(ctx)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn dataset_path(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf).unwrap_or_else(|| {
            if self.cfg.io.dataset.is_empty() {
                self.path("dataset.jsonl")
            } else {
                PathBuf::from(&self.cfg.io.dataset)
            }
        })
    }

    pub fn checkpoint_path(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf).unwrap_or_else(|| {
            if self.cfg.io.checkpoint.is_empty() {
                self.path("model.ckpt")
            } else {
                PathBuf::from(&self.cfg.io.checkpoint)
            }
        })
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display())))
    }

    fn seed(&self, label: &str) -> u64 {
        derive_seed(self.root, label)
    }
}

fn model_err(e: ModelError) -> CliError {
    match e {
        ModelError::Divergence { .. } => CliError::Divergence(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn read_dataset(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let eps = read_jsonl_file(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if eps.is_empty() {
        return Err(CliError::Data(format!("{} holds no episodes", path.display())));
    }
    Ok(eps)
}

/// Train and held-out parts of a dataset; the last `heldout` episodes are
/// held out.
pub fn split(eps: &[EpisodeRecord], heldout: usize) -> Result<(&[EpisodeRecord], &[EpisodeRecord])> {
    if heldout == 0 || heldout >= eps.len() {
        return Err(CliError::Data(format!(
            "cannot hold out {heldout} of {} episodes",
            eps.len()
        )));
    }
    Ok(eps.split_at(eps.len() - heldout))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenSummary {
    pub episodes: usize,
    pub transitions: usize,
    pub contact_steps: usize,
    pub contact_rate: f64,
}

pub fn gen_data(ctx: &Context) -> Result<GenSummary> {
    let d = &ctx.cfg.data;
    let eps = generate_dataset(&ctx.cfg.env, d.policy, d.episodes, d.horizon).map_err(CliError::data)?;
    let path = ctx.dataset_path(None);
    write_jsonl_file(&path, &eps).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    let s = contact_summary(&eps);
    Ok(GenSummary {
        episodes: s.episodes,
        transitions: s.transitions,
        contact_steps: s.contact_steps,
        contact_rate: s.contact_rate,
    })
}

// ---------------------------------------------------------------- checkpoints

/// A trained world model and, for the CIT regime, its test models.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: WorldModel,
    pub cit: Option<CitModels>,
}

fn meta(name: &str, data: Vec<f64>) -> Tensor {
    Tensor {
        name: name.into(),
        dims: vec![data.len()],
        data,
    }
}

pub fn save_checkpoint(path: &Path, t: &Trained) -> Result<()> {
    let mut all = vec![meta("meta.regime", vec![t.model.config.regime.code()])];
    all.extend(tensors(&t.model, "wm"));
    if let Some(c) = &t.cit {
        let hidden = c.nets.first().map_or(0, |r| r.net.sizes[1]);
        all.push(meta(
            "meta.cit",
            vec![c.n as f64, c.d_dim as f64, c.action_dim as f64, hidden as f64, c.sigma_min],
        ));
        all.extend(tensors(c, "cit"));
    }
    let f = File::create(path).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    write_checkpoint(BufWriter::new(f), &all).map_err(CliError::data)
}

/// Load a checkpoint written for the configured model. A regime other than
/// the configured one is a configuration error.
pub fn load_checkpoint(path: &Path, cfg: &RunConfig) -> Result<Trained> {
    let f = File::open(path).map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))?;
    let all = read_checkpoint(std::io::BufReader::new(f)).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let find = |name: &str| all.iter().find(|t| t.name == name);
    let code = find("meta.regime")
        .and_then(|t| t.data.first().copied())
        .ok_or_else(|| CliError::Data("checkpoint has no regime tag".into()))?;
    let regime = Regime::from_code(code).ok_or_else(|| CliError::Data(format!("unknown regime code {code}")))?;
    if regime != cfg.model.regime {
        return Err(CliError::Setup(format!(
            "checkpoint regime `{regime}` does not match configured regime `{}`",
            cfg.model.regime
        )));
    }
    let mut model = WorldModel::zeros(cfg.model.clone());
    load_tensors(&mut model, "wm", &all).map_err(|e| CliError::Data(format!("checkpoint does not fit the configured model: {e}")))?;
    let cit = match find("meta.cit") {
        Some(m) if m.data.len() == 5 => {
            let dim = |k: usize| m.data[k] as usize;
            let mut c = CitModels::empty(dim(0), dim(1), dim(2), dim(3));
            c.sigma_min = m.data[4];
            load_tensors(&mut c, "cit", &all).map_err(CliError::data)?;
            c.trained = true;
            Some(c)
        }
        Some(_) => return Err(CliError::Data("malformed cit metadata".into())),
        None if regime == Regime::Cit => return Err(CliError::Data("cit checkpoint lacks test models".into())),
        None => None,
    };
    Ok(Trained { model, cit })
}

// ------------------------------------------------------------------ training

#[derive(Debug, Clone, PartialEq, Serialize)]
struct LossRow {
    epoch: usize,
    recon: f64,
    pred: f64,
    kl: f64,
    #[serde(rename = "static")]
    static_: f64,
    contrastive: f64,
    reward: f64,
    total: f64,
}

/// Mean loss per window on `eps` with all sampling noise at zero.
pub fn heldout_loss(model: &WorldModel, eps: &[EpisodeRecord], window: usize, source: GraphSource) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for ep in eps {
        for w in windows_from_episode(ep, window) {
            let noise = WindowNoise::zeros(w.len(), w.n_objects(), model.config.s_dim());
            sum += loss_total(model, &w, &noise, source).map_err(model_err)?.total;
            count += 1;
        }
    }
    if count == 0 {
        return Err(CliError::Data("held-out split has no complete window".into()));
    }
    Ok(sum / count as f64)
}

fn cit_transitions(model: &WorldModel, eps: &[EpisodeRecord]) -> Result<Vec<TransitionSample>> {
    let mut out = Vec::new();
    for ep in eps {
        out.extend(model.transitions(ep).map_err(model_err)?);
    }
    Ok(out)
}

/// Train the world model (and the regime's graph estimator) on `train`.
pub fn train_regime(cfg: &RunConfig, train: &[EpisodeRecord], seed: u64) -> std::result::Result<(Trained, Vec<fioc_model::LossBreakdown>), ModelError> {
    let tc = fioc_model::TrainConfig { seed, ..cfg.train.clone() };
    let out = train_world_model(train, cfg.model.clone(), &tc)?;
    let cit = if cfg.model.regime == Regime::Cit {
        let mut trans = Vec::new();
        for ep in train {
            trans.extend(out.model.transitions(ep)?);
        }
        Some(CitModels::fit(&trans, &cfg.cit)?)
    } else {
        None
    };
    Ok((Trained { model: out.model, cit }, out.curve))
}

pub fn train_wm(ctx: &Context, dataset: Option<&Path>) -> Result<PathBuf> {
    let cfg = &ctx.cfg;
    let eps = read_dataset(&ctx.dataset_path(dataset))?;
    let (train, held) = split(&eps, cfg.data.heldout)?;
    let ckpt = ctx.checkpoint_path(None);
    let (trained, curve) = match train_regime(cfg, train, cfg.train.seed) {
        Ok(v) => v,
        Err(ModelError::Divergence { epoch, reason, last_good }) => {
            save_checkpoint(&ckpt, &Trained { model: *last_good, cit: None })?;
            return Err(CliError::Divergence(format!(
                "epoch {epoch}: {reason}; last finite parameters kept in {}",
                ckpt.display()
            )));
        }
        Err(e) => return Err(model_err(e)),
    };
    let rows: Vec<LossRow> = curve
        .iter()
        .enumerate()
        .map(|(k, l)| LossRow {
            epoch: k + 1,
            recon: l.recon,
            pred: l.pred,
            kl: l.kl,
            static_: l.static_,
            contrastive: l.contrastive,
            reward: l.reward,
            total: l.total,
        })
        .collect();
    report::write_csv(&ctx.path("loss.csv"), &report::LOSS, &rows)?;
    save_checkpoint(&ckpt, &trained)?;

    let m = &trained.model;
    let mut metrics = Vec::new();
    if let Some(last) = curve.last() {
        metrics.push(Metric::new("train", "loss", last.total));
    }
    let w = cfg.train.window;
    metrics.push(Metric::new("train", "loss_eval", heldout_loss(m, train, w, cfg.train.source)?));
    metrics.push(Metric::new("heldout", "loss_eval", heldout_loss(m, held, w, cfg.train.source)?));
    for (name, src) in [("rollout5_inferred", GraphSource::Inferred), ("rollout5_full", GraphSource::Full)] {
        metrics.push(Metric::new("heldout", name, rollout_mse(m, held, 5, src, true).map_err(model_err)?));
    }
    report::write_csv(&ctx.path("metrics.csv"), &report::METRICS, &metrics)?;
    Ok(ckpt)
}

// ---------------------------------------------------------------- graphs

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphRow {
    pub regime: String,
    pub episode: usize,
    pub seed: u64,
    pub steps: usize,
    pub nshd: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Directed edge counts between estimate and truth.
pub fn confusion(est: &[InteractionGraph], truth: &[InteractionGraph]) -> (usize, usize, usize) {
    let (mut tp, mut fp, mut fneg) = (0, 0, 0);
    for (e, t) in est.iter().zip(truth) {
        for i in 0..t.n() {
            for j in 0..t.n() {
                if i == j {
                    continue;
                }
                match (e.get(i, j), t.get(i, j)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fneg += 1,
                    _ => {}
                }
            }
        }
    }
    (tp, fp, fneg)
}

/// Graph estimates for each step of `ep`. The CIT regime scores transitions,
/// so its sequence is one step shorter.
pub fn estimate_graphs(t: &Trained, ep: &EpisodeRecord, threshold: f64, scoring: fioc_model::interaction::CitScoring) -> Result<Vec<InteractionGraph>> {
    match (&t.cit, t.model.config.regime) {
        (Some(c), Regime::Cit) => {
            let trans = cit_transitions(&t.model, std::slice::from_ref(ep))?;
            Ok(infer_graph_cit(c, &trans, threshold, scoring)
                .map_err(model_err)?
                .into_iter()
                .map(|g| g.hard)
                .collect())
        }
        _ => {
            let f = t.model.filter_episode(ep).map_err(model_err)?;
            f.s.iter()
                .map(|s| t.model.infer_graph(s).map(|g| g.hard).map_err(model_err))
                .collect()
        }
    }
}

pub fn graph_row(regime: &str, episode: usize, ep: &EpisodeRecord, est: &[InteractionGraph]) -> Result<GraphRow> {
    let truth: Vec<InteractionGraph> = ep.steps.iter().take(est.len()).map(|s| s.graph.clone()).collect();
    let (tp, fp, fn_) = confusion(est, &truth);
    Ok(GraphRow {
        regime: regime.into(),
        episode,
        seed: ep.seed,
        steps: est.len(),
        nshd: nshd(est, &truth).map_err(model_err)?,
        tp,
        fp,
        fn_,
    })
}

fn summarize(rows: &[GraphRow]) -> Vec<Metric> {
    let mut regimes: Vec<&str> = Vec::new();
    for r in rows {
        if !regimes.contains(&r.regime.as_str()) {
            regimes.push(&r.regime);
        }
    }
    let mut out = Vec::new();
    for g in regimes {
        let rs: Vec<&GraphRow> = rows.iter().filter(|r| r.regime == g).collect();
        let mean = rs.iter().map(|r| r.nshd).sum::<f64>() / rs.len() as f64;
        out.push(Metric::new("heldout", format!("nshd.{g}"), mean));
        for (name, v) in [
            ("tp", rs.iter().map(|r| r.tp).sum::<usize>()),
            ("fp", rs.iter().map(|r| r.fp).sum()),
            ("fn", rs.iter().map(|r| r.fn_).sum()),
        ] {
            out.push(Metric::new("heldout", format!("{name}.{g}"), v as f64));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalGraphsMode {
    /// Score the true graphs against themselves.
    pub ground_truth: bool,
    /// Train every regime on the training split and score each.
    pub compare: bool,
}

pub fn eval_graphs(ctx: &Context, checkpoint: Option<&Path>, dataset: Option<&Path>, mode: EvalGraphsMode) -> Result<Vec<GraphRow>> {
    let cfg = &ctx.cfg;
    let eps = read_dataset(&ctx.dataset_path(dataset))?;
    let (train, held) = split(&eps, cfg.data.heldout)?;
    let mut rows = Vec::new();
    let (th, sc) = (cfg.cit.threshold, cfg.cit.scoring);
    if mode.ground_truth {
        for (k, ep) in held.iter().enumerate() {
            let truth: Vec<InteractionGraph> = ep.steps.iter().map(|s| s.graph.clone()).collect();
            rows.push(graph_row("ground-truth", k, ep, &truth)?);
        }
    } else if mode.compare {
        for (k, ep) in held.iter().enumerate() {
            let empty = vec![InteractionGraph::empty(ep.config.n_objects); ep.len()];
            rows.push(graph_row("empty", k, ep, &empty)?);
        }
        for regime in [Regime::Variational, Regime::Codebook, Regime::Cit] {
            let mut c = cfg.clone();
            c.model.regime = regime;
            let seed = ctx.seed(&format!("train.{regime}"));
            let (t, _) = train_regime(&c, train, seed).map_err(model_err)?;
            for (k, ep) in held.iter().enumerate() {
                let est = estimate_graphs(&t, ep, th, sc)?;
                rows.push(graph_row(&regime.to_string(), k, ep, &est)?);
            }
        }
    } else {
        let t = load_checkpoint(&ctx.checkpoint_path(checkpoint), cfg)?;
        for (k, ep) in held.iter().enumerate() {
            let est = estimate_graphs(&t, ep, th, sc)?;
            rows.push(graph_row(&cfg.model.regime.to_string(), k, ep, &est)?);
        }
    }
    report::write_csv(&ctx.path("graphs.csv"), &report::GRAPHS, &rows)?;
    report::write_csv(&ctx.path("graphs_summary.csv"), &report::METRICS, &summarize(&rows))?;
    Ok(rows)
}

// ------------------------------------------------------------------ probe

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeRow {
    pub features: String,
    pub target: String,
    pub mse: f64,
}

pub fn probe(ctx: &Context, checkpoint: Option<&Path>, dataset: Option<&Path>) -> Result<Vec<ProbeRow>> {
    let cfg = &ctx.cfg;
    let eps = read_dataset(&ctx.dataset_path(dataset))?;
    let (train, held) = split(&eps, cfg.data.heldout)?;
    let t = load_checkpoint(&ctx.checkpoint_path(checkpoint), cfg)?;
    let tr = probe_samples(&t.model, train).map_err(model_err)?;
    let te = probe_samples(&t.model, held).map_err(model_err)?;
    let cells = probe_table(&tr, &te, cfg.env.n_types).map_err(model_err)?;
    let rows: Vec<ProbeRow> = cells
        .iter()
        .map(|c| ProbeRow {
            features: label(&c.features),
            target: label(&c.target),
            mse: c.mse,
        })
        .collect();
    report::write_csv(&ctx.path("probe.csv"), &report::PROBE, &rows)?;
    Ok(rows)
}

/// Serde name of a unit enum variant.
fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

// ----------------------------------------------------------------- policy

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub task: String,
    pub seed: u64,
    pub success: bool,
    pub steps: usize,
    pub subgoals_used: usize,
    pub unique_graphs_visited: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct PpoRow {
    task: String,
    batch: usize,
    unique_graphs: usize,
    success_rate: f64,
}

#[derive(Serialize)]
struct TraceLine<'a> {
    task: String,
    #[serde(flatten)]
    result: &'a fioc_policy::EpisodeResult,
}

/// Fit the inverse (goal-state) model on contact changes in `train`.
pub fn fit_inverse(model: &WorldModel, train: &[EpisodeRecord], lookback: usize, cfg: &InverseConfig) -> Result<InverseModel> {
    let mut samples = Vec::new();
    for ep in train {
        let f = model.filter_episode(ep).map_err(model_err)?;
        let graphs: Vec<InteractionGraph> = ep.steps.iter().map(|s| s.graph.clone()).collect();
        samples.extend(contact_events(&f.s, &f.d, &graphs, lookback));
    }
    InverseModel::fit(&samples, cfg).map_err(CliError::data)
}

struct PolicyOut {
    results: Vec<ResultRow>,
    traces: Vec<String>,
    ppo: Vec<PpoRow>,
}

fn evaluate<C: Controller>(ctx: &Context, env: &Env, ctrl: &mut C, out: &mut PolicyOut) -> Result<()> {
    let p = &ctx.cfg.policy;
    let n = env.config.n_objects;
    for (ti, &task) in p.tasks.iter().enumerate() {
        let task_env = Env::new(fioc_env::EnvConfig { task, ..env.config.clone() }).map_err(CliError::setup)?;
        let hl = match p.high_level {
            HighLevelKind::Task => None,
            HighLevelKind::Learned => {
                let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed(&format!("policy.hl.{ti}")));
                let s0 = task_env.reset(&mut rng).map_err(CliError::data)?;
                ctrl.reset(&s0, &task_env.observe(&s0, &mut rng)).map_err(CliError::data)?;
                let dim = policy_input(&ctrl.summary(), &ctrl.graph(&fioc_env::ground_truth_graph(&s0))).len();
                let mut pol = HighLevelPolicy::new(n, dim, p.hidden, &mut rng).map_err(CliError::setup)?;
                let rep = train_high_level(
                    &task_env,
                    task,
                    ctrl,
                    &mut pol,
                    &p.ppo,
                    &p.run,
                    p.train_batches,
                    ctx.seed(&format!("policy.train.{ti}")),
                )
                .map_err(CliError::data)?;
                for (b, (u, s)) in rep.unique_per_batch.iter().zip(&rep.success_per_batch).enumerate() {
                    out.ppo.push(PpoRow {
                        task: task.to_string(),
                        batch: b + 1,
                        unique_graphs: *u,
                        success_rate: *s,
                    });
                }
                Some(pol)
            }
        };
        let high = match &hl {
            None => HighLevelMode::TaskOracle,
            Some(policy) => HighLevelMode::Learned { policy, greedy: true },
        };
        let base = ctx.seed(&format!("policy.eval.{task}"));
        for k in 0..p.episodes {
            let r = run_task(&task_env, task, ctrl, high, &p.run, base.wrapping_add(k as u64)).map_err(CliError::data)?;
            out.results.push(ResultRow {
                task: task.to_string(),
                seed: r.seed,
                success: r.success,
                steps: r.steps,
                subgoals_used: r.subgoals_used,
                unique_graphs_visited: r.unique_graphs_visited,
            });
            let line = TraceLine { task: task.to_string(), result: &r };
            out.traces.push(serde_json::to_string(&line).map_err(CliError::data)?);
        }
    }
    Ok(())
}

fn with_low_level<C: Controller>(
    ctx: &Context,
    env: &Env,
    make: impl Fn(LowLevel) -> C,
) -> Result<C> {
    let p = &ctx.cfg.policy;
    let low = LowLevel::mpc(p.mpc.clone());
    match p.low_level {
        LowLevelMode::Mpc => Ok(make(low)),
        LowLevelMode::PolicyGradient => {
            let mut teacher = make(low.clone());
            let pg = pretrain_low_level(env, &mut teacher, &p.pg, p.bc_subgoals, p.run.k, ctx.seed("policy.bc"))
                .map_err(CliError::data)?;
            Ok(make(low.with_policy(pg)))
        }
    }
}

/// Per-task success rates.
pub fn run_policy(ctx: &Context, checkpoint: Option<&Path>, dataset: Option<&Path>) -> Result<Vec<Metric>> {
    let cfg = &ctx.cfg;
    let eval_cfg = cfg.policy.eval_env(&cfg.env);
    ctx.write_text("eval_env.cfg", &config::render_env(&eval_cfg))?;
    let env = Env::new(eval_cfg).map_err(CliError::setup)?;
    let mut out = PolicyOut {
        results: Vec::new(),
        traces: Vec::new(),
        ppo: Vec::new(),
    };
    match cfg.policy.dynamics {
        DynamicsKind::Oracle => {
            let mut ctrl = with_low_level(ctx, &env, |low| OracleController::new(env.clone(), low))?;
            evaluate(ctx, &env, &mut ctrl, &mut out)?;
        }
        DynamicsKind::Learned => {
            let t = load_checkpoint(&ctx.checkpoint_path(checkpoint), cfg)?;
            let eps = read_dataset(&ctx.dataset_path(dataset))?;
            let (train, _) = split(&eps, cfg.data.heldout)?;
            let inv = fit_inverse(&t.model, train, cfg.policy.lookback, &cfg.policy.inverse)?;
            let dynamics = LearnedDynamics {
                model: t.model,
                source: cfg.policy.graph_source,
            };
            let mut ctrl = with_low_level(ctx, &env, |low| LearnedController::new(dynamics.clone(), inv.clone(), low))?;
            evaluate(ctx, &env, &mut ctrl, &mut out)?;
        }
    }
    report::write_csv(&ctx.path("results.csv"), &report::RESULTS, &out.results)?;
    if !out.ppo.is_empty() {
        report::write_csv(&ctx.path("ppo.csv"), &report::PPO, &out.ppo)?;
    }
    let mut traces = BufWriter::new(File::create(ctx.path("traces.jsonl")).map_err(CliError::data)?);
    for l in &out.traces {
        writeln!(traces, "{l}").map_err(CliError::data)?;
    }
    traces.flush().map_err(CliError::data)?;
    let mut summary = Vec::new();
    for task in &cfg.policy.tasks {
        let name = task.to_string();
        let rs: Vec<&ResultRow> = out.results.iter().filter(|r| r.task == name).collect();
        let rate = rs.iter().filter(|r| r.success).count() as f64 / rs.len().max(1) as f64;
        summary.push(Metric::new("eval", format!("success.{name}"), rate));
    }
    report::write_csv(&ctx.path("policy_summary.csv"), &report::METRICS, &summary)?;
    Ok(summary)
}
