//! Joint loss over one episode window, with a hand-written backward pass.

use fioc_env::{EpisodeRecord, InteractionGraph};
use fioc_numkit::prob::{gaussian_kl_1d, gaussian_kl_1d_grad, gumbel_noise, sigmoid};
use fioc_numkit::{sq_dist, DenseCache, GruCache};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::losses::{contrastive_loss_grad, static_loss_grad};
use super::{Carry, WorldModel};
use crate::interaction::variational::{mask_kl, EdgeSample, PairCaches};
use crate::interaction::{quantize_codebook, Quantized, Regime, SoftGraph};
use crate::transition::{add, Gaussian, TransitionCache};
use crate::{check_dim, ModelError, Result};

/// A contiguous slice of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// `[t][object][feature]`
    pub obs: Vec<Vec<Vec<f64>>>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// Ground-truth graphs, used only by [`GraphSource::GroundTruth`].
    pub graphs: Vec<InteractionGraph>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn n_objects(&self) -> usize {
        self.obs.first().map_or(0, Vec::len)
    }

    pub fn from_steps(ep: &EpisodeRecord, start: usize, len: usize) -> Self {
        let steps = &ep.steps[start..start + len];
        Self {
            obs: steps.iter().map(|s| s.obs.clone()).collect(),
            actions: steps.iter().map(|s| s.action.to_vec()).collect(),
            rewards: steps.iter().map(|s| s.reward).collect(),
            graphs: steps.iter().map(|s| s.graph.clone()).collect(),
        }
    }
}

/// Non-overlapping windows of `len` steps; a trailing remainder of at least
/// two steps is kept as a shorter window.
pub fn windows_from_episode(ep: &EpisodeRecord, len: usize) -> Vec<Window> {
    let len = len.max(2);
    let mut out = Vec::new();
    let mut start = 0;
    while start + 2 <= ep.len() {
        let l = len.min(ep.len() - start);
        out.push(Window::from_steps(ep, start, l));
        start += l;
    }
    out
}

/// Where the graph gating the prior comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphSource {
    /// The model's own regime. The CIT regime has no differentiable graph
    /// and trains with the dense graph.
    Inferred,
    Full,
    Empty,
    GroundTruth,
}

impl std::str::FromStr for GraphSource {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inferred" => Ok(Self::Inferred),
            "full" => Ok(Self::Full),
            "empty" => Ok(Self::Empty),
            "ground-truth" => Ok(Self::GroundTruth),
            other => Err(ModelError::InvalidArgument(format!("unknown graph source `{other}`"))),
        }
    }
}

/// All randomness used by one window evaluation, drawn up front.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowNoise {
    /// `[t][object][latent]` reparameterization noise.
    pub eps: Vec<Vec<Vec<f64>>>,
    /// `[t][src * n + dst]` Gumbel noise for the two edge classes.
    pub gumbel: Vec<Vec<[f64; 2]>>,
    pub pairing: Vec<usize>,
}

impl WindowNoise {
    pub fn draw<R: Rng + ?Sized>(t_len: usize, n: usize, s_dim: usize, rng: &mut R) -> Self {
        let eps = (0..t_len)
            .map(|_| {
                (0..n)
                    .map(|_| (0..s_dim).map(|_| StandardNormal.sample(rng)).collect())
                    .collect()
            })
            .collect();
        let gumbel = (0..t_len)
            .map(|_| {
                (0..n * n)
                    .map(|_| {
                        let g = gumbel_noise(2, rng);
                        [g[0], g[1]]
                    })
                    .collect()
            })
            .collect();
        let pairing = super::losses::draw_pairing(t_len, rng);
        Self { eps, gumbel, pairing }
    }

    /// No noise: posterior means, noise-free edge logits, and `t' = t + 1`
    /// (cyclic) pairing.
    pub fn zeros(t_len: usize, n: usize, s_dim: usize) -> Self {
        Self {
            eps: vec![vec![vec![0.0; s_dim]; n]; t_len],
            gumbel: vec![vec![[0.0; 2]; n * n]; t_len],
            pairing: (0..t_len).map(|t| (t + 1) % t_len.max(1)).collect(),
        }
    }
}

/// Loss terms summed over a window (or averaged over windows).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub pred: f64,
    pub kl: f64,
    #[serde(rename = "static")]
    pub static_: f64,
    pub contrastive: f64,
    pub reward: f64,
    pub total: f64,
    /// Zero-norm static vectors met by the contrastive term.
    pub degenerate: usize,
}

impl LossBreakdown {
    pub fn accumulate(&mut self, o: &LossBreakdown) {
        self.recon += o.recon;
        self.pred += o.pred;
        self.kl += o.kl;
        self.static_ += o.static_;
        self.contrastive += o.contrastive;
        self.reward += o.reward;
        self.total += o.total;
        self.degenerate += o.degenerate;
    }

    pub fn scaled(mut self, k: f64) -> Self {
        self.recon *= k;
        self.pred *= k;
        self.kl *= k;
        self.static_ *= k;
        self.contrastive *= k;
        self.reward *= k;
        self.total *= k;
        self
    }

    pub fn is_finite(&self) -> bool {
        [self.recon, self.pred, self.kl, self.static_, self.contrastive, self.reward, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

struct SlotFwd {
    gru: GruCache,
    enc: DenseCache,
    post: Gaussian,
    fc: DenseCache,
    fd: DenseCache,
    dec: DenseCache,
    xhat: Vec<f64>,
}

enum GraphFwd {
    Fixed,
    Variational {
        sample: EdgeSample,
        kl_grad: Vec<f64>,
    },
    Codebook {
        caches: PairCaches,
        ubar: Vec<f64>,
        quant: Quantized,
        probs: SoftGraph,
        dec: DenseCache,
    },
}

struct PriorFwd {
    graph: GraphFwd,
    trans: TransitionCache,
    pred: Vec<(DenseCache, DenseCache, Vec<f64>)>,
}

/// Loss of one window without gradients.
pub fn loss_total(model: &WorldModel, window: &Window, noise: &WindowNoise, source: GraphSource) -> Result<LossBreakdown> {
    run(model, window, noise, source, None)
}

/// Loss of one window, accumulating parameter gradients into `grads`.
pub fn loss_and_grad(
    model: &WorldModel,
    window: &Window,
    noise: &WindowNoise,
    source: GraphSource,
    grads: &mut WorldModel,
) -> Result<LossBreakdown> {
    run(model, window, noise, source, Some(grads))
}

fn validate(model: &WorldModel, w: &Window, noise: &WindowNoise, source: GraphSource) -> Result<()> {
    let cfg = &model.config;
    let t_len = w.len();
    if t_len < 2 {
        return Err(ModelError::InvalidArgument(format!("window length must be >= 2, got {t_len}")));
    }
    let n = w.n_objects();
    if n < 2 {
        return Err(ModelError::InvalidArgument("window needs at least 2 objects".into()));
    }
    check_dim("window actions", t_len, w.actions.len())?;
    check_dim("window rewards", t_len, w.rewards.len())?;
    for t in 0..t_len {
        check_dim("window slots", n, w.obs[t].len())?;
        for o in &w.obs[t] {
            check_dim("observation", cfg.obs_dim, o.len())?;
        }
        check_dim("action", cfg.action_dim, w.actions[t].len())?;
    }
    check_dim("noise steps", t_len, noise.eps.len())?;
    check_dim("gumbel steps", t_len, noise.gumbel.len())?;
    check_dim("pairing", t_len, noise.pairing.len())?;
    for t in 0..t_len {
        check_dim("noise slots", n, noise.eps[t].len())?;
        check_dim("gumbel pairs", n * n, noise.gumbel[t].len())?;
    }
    if source == GraphSource::GroundTruth {
        check_dim("window graphs", t_len, w.graphs.len())?;
        for g in &w.graphs {
            check_dim("graph size", n, g.n())?;
        }
    }
    if source == GraphSource::Inferred && cfg.regime == Regime::Codebook {
        check_dim("codebook graph size", model.codebook.n_objects, n)?;
    }
    Ok(())
}

fn run(
    model: &WorldModel,
    w: &Window,
    noise: &WindowNoise,
    source: GraphSource,
    mut grads: Option<&mut WorldModel>,
) -> Result<LossBreakdown> {
    validate(model, w, noise, source)?;
    let cfg = &model.config;
    let lw = cfg.weights;
    let t_len = w.len();
    let n = w.n_objects();
    let s_dim = cfg.s_dim();
    let ks = cfg.s_static;
    let cd = cfg.c_dim;
    let dd = cfg.d_dim;

    // Posterior, factorization and reconstruction.
    let mut carry = Carry::zeros(n, s_dim, cfg.gru_hidden);
    let mut slots: Vec<Vec<SlotFwd>> = Vec::with_capacity(t_len);
    let mut s = Vec::with_capacity(t_len);
    let mut c = Vec::with_capacity(t_len);
    let mut d = Vec::with_capacity(t_len);
    let mut out = LossBreakdown::default();
    for t in 0..t_len {
        let mut row = Vec::with_capacity(n);
        let (mut st, mut ct, mut dt) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        let mut next = Carry { s: Vec::with_capacity(n), h: Vec::with_capacity(n) };
        for i in 0..n {
            let (h, gru) = model.gru.forward_cached(&carry.s[i], &carry.h[i]);
            let mut x = w.obs[t][i].clone();
            x.extend_from_slice(&h);
            let (eo, enc) = model.encoder.forward_cached(&x);
            let post = Gaussian::from_raw(eo[..s_dim].to_vec(), eo[s_dim..].to_vec(), cfg.sigma_min);
            let si: Vec<f64> = (0..s_dim).map(|k| post.mean[k] + post.std[k] * noise.eps[t][i][k]).collect();
            let (ci, fc) = model.f_c.forward_cached(&si[..ks]);
            let (di, fd) = model.f_d.forward_cached(&si[ks..]);
            let mut z = ci.clone();
            z.extend_from_slice(&di);
            let (xhat, dec) = model.decoder.forward_cached(&z);
            out.recon += sq_dist(&xhat, &w.obs[t][i]);
            next.h.push(h);
            next.s.push(si.clone());
            st.push(si);
            ct.push(ci);
            dt.push(di);
            row.push(SlotFwd { gru, enc, post, fc, fd, dec, xhat });
        }
        carry = next;
        slots.push(row);
        s.push(st);
        c.push(ct);
        d.push(dt);
    }

    // The first posterior is regularized towards N(0, 1); later static
    // parts towards N(previous sample, static_prior_std).
    let sp = cfg.static_prior_std;
    for slot in &slots[0] {
        for k in 0..s_dim {
            out.kl += gaussian_kl_1d(slot.post.mean[k], slot.post.std[k], 0.0, 1.0);
        }
    }
    for t in 1..t_len {
        for (i, slot) in slots[t].iter().enumerate() {
            for k in 0..ks {
                out.kl += gaussian_kl_1d(slot.post.mean[k], slot.post.std[k], s[t - 1][i][k], sp);
            }
        }
    }

    // Graph-conditioned prior and one-step prediction.
    let mut priors = Vec::with_capacity(t_len - 1);
    for t in 0..t_len - 1 {
        let (weights, graph) = match (source, cfg.regime) {
            (GraphSource::Full, _) | (GraphSource::Inferred, Regime::Cit) => (SoftGraph::full(n), GraphFwd::Fixed),
            (GraphSource::Empty, _) => (SoftGraph::empty(n), GraphFwd::Fixed),
            (GraphSource::GroundTruth, _) => (SoftGraph::from_graph(&w.graphs[t]), GraphFwd::Fixed),
            (GraphSource::Inferred, Regime::Variational) => {
                let sample = model.pair.sample_edges(&s[t], cfg.temperature, &noise.gumbel[t])?;
                let (kl, kl_grad) = mask_kl(&sample.probs, cfg.p_edge);
                out.kl += kl;
                (sample.weights.clone(), GraphFwd::Variational { sample, kl_grad })
            }
            (GraphSource::Inferred, Regime::Codebook) => {
                let caches = model.pair.embed_for_pooling(&s[t]);
                let ubar = caches.embedding.mean();
                let quant = quantize_codebook(&ubar, &model.codebook)?;
                out.kl += quant.codebook_loss + quant.commitment_loss;
                let (probs, dec) = model.codebook.decode_cached(&quant.code);
                (probs.clone(), GraphFwd::Codebook { caches, ubar, quant, probs, dec })
            }
        };
        let base: Vec<Vec<f64>> = s[t].iter().map(|v| v[ks..].to_vec()).collect();
        let trans = model.transition.forward(&base, &d[t], &c[t], &w.actions[t], &weights);
        let mut pred = Vec::with_capacity(n);
        for i in 0..n {
            let p = &trans.prior[i];
            let q = &slots[t + 1][i].post;
            for k in ks..s_dim {
                out.kl += gaussian_kl_1d(q.mean[k], q.std[k], p.mean[k - ks], p.std[k - ks]);
            }
            let (dhat, pfd) = model.f_d.forward_cached(&p.mean);
            let mut z = c[t][i].clone();
            z.extend_from_slice(&dhat);
            let (ohat, pdec) = model.decoder.forward_cached(&z);
            out.pred += sq_dist(&ohat, &w.obs[t + 1][i]);
            pred.push((pfd, pdec, ohat));
        }
        priors.push(PriorFwd { graph, trans, pred });
    }

    let (static_value, static_grad) = static_loss_grad(&c);
    out.static_ = static_value;
    let (con, con_grad) = contrastive_loss_grad(&c, &noise.pairing, cfg.contrastive_temperature)?;
    out.contrastive = con.value;
    out.degenerate = con.degenerate;

    let mut reward_caches = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut caches = Vec::with_capacity(n - 1);
        let mut rhat = 0.0;
        for i in 1..n {
            let (r, cache) = model.reward.forward_cached(&model.reward_input(&c[t], &d[t], i, &w.actions[t]));
            rhat += r[0];
            caches.push(cache);
        }
        rhat /= (n - 1) as f64;
        out.reward += (rhat - w.rewards[t]).powi(2);
        reward_caches.push((caches, rhat));
    }

    out.total = out.recon
        + lw.alpha * out.pred
        + lw.beta * out.kl
        + lw.gamma * out.static_
        + lw.eta * out.contrastive
        + lw.reward * out.reward;

    let Some(g) = grads.as_deref_mut() else {
        return Ok(out);
    };

    let zeros3 = |k: usize| vec![vec![vec![0.0; k]; n]; t_len];
    let mut g_s = zeros3(s_dim);
    let mut g_c = zeros3(cd);
    let mut g_d = zeros3(dd);
    let mut g_mu = zeros3(s_dim);
    let mut g_sig = zeros3(s_dim);
    let mut g_h = zeros3(cfg.gru_hidden);

    // Reconstruction.
    for t in 0..t_len {
        for i in 0..n {
            let slot = &slots[t][i];
            let dx: Vec<f64> = slot.xhat.iter().zip(&w.obs[t][i]).map(|(a, b)| 2.0 * (a - b)).collect();
            let din = model.decoder.backward(&slot.dec, &dx, &mut g.decoder);
            add(&mut g_c[t][i], &din[..cd]);
            add(&mut g_d[t][i], &din[cd..]);
        }
    }

    // KL of the first step and of later static parts.
    for i in 0..n {
        let q = &slots[0][i].post;
        for k in 0..s_dim {
            let gk = gaussian_kl_1d_grad(q.mean[k], q.std[k], 0.0, 1.0);
            g_mu[0][i][k] += lw.beta * gk[0];
            g_sig[0][i][k] += lw.beta * gk[1];
        }
    }
    for t in 1..t_len {
        for i in 0..n {
            let q = &slots[t][i].post;
            for k in 0..ks {
                let gk = gaussian_kl_1d_grad(q.mean[k], q.std[k], s[t - 1][i][k], sp);
                g_mu[t][i][k] += lw.beta * gk[0];
                g_sig[t][i][k] += lw.beta * gk[1];
                g_s[t - 1][i][k] += lw.beta * gk[2];
            }
        }
    }

    // Prior, prediction and graph inference.
    for t in 0..t_len - 1 {
        let pf = &priors[t];
        let mut gm = vec![vec![0.0; cfg.s_dynamic]; n];
        let mut gsd = vec![vec![0.0; cfg.s_dynamic]; n];
        for i in 0..n {
            let (pfd, pdec, ohat) = &pf.pred[i];
            let dout: Vec<f64> = ohat.iter().zip(&w.obs[t + 1][i]).map(|(a, b)| lw.alpha * 2.0 * (a - b)).collect();
            let din = model.decoder.backward(pdec, &dout, &mut g.decoder);
            add(&mut g_c[t][i], &din[..cd]);
            let dmu = model.f_d.backward(pfd, &din[cd..], &mut g.f_d);
            add(&mut gm[i], &dmu);
            let p = &pf.trans.prior[i];
            let q = &slots[t + 1][i].post;
            for k in ks..s_dim {
                let kk = k - ks;
                let gk = gaussian_kl_1d_grad(q.mean[k], q.std[k], p.mean[kk], p.std[kk]);
                g_mu[t + 1][i][k] += lw.beta * gk[0];
                g_sig[t + 1][i][k] += lw.beta * gk[1];
                gm[i][kk] += lw.beta * gk[2];
                gsd[i][kk] += lw.beta * gk[3];
            }
        }
        let tg = model.transition.backward(&pf.trans, &gm, &gsd, &mut g.transition);
        for i in 0..n {
            add(&mut g_s[t][i][ks..], &tg.base[i]);
            add(&mut g_d[t][i], &tg.d[i]);
            add(&mut g_c[t][i], &tg.c[i]);
        }
        match &pf.graph {
            GraphFwd::Fixed => {}
            GraphFwd::Variational { sample, kl_grad } => {
                let dp: Vec<f64> = kl_grad.iter().map(|v| lw.beta * v).collect();
                let ds = model.pair.backward_edges(&sample.cache, cfg.temperature, &tg.weights, &dp, &mut g.pair);
                for i in 0..n {
                    add(&mut g_s[t][i], &ds[i]);
                }
            }
            GraphFwd::Codebook { caches, ubar, quant, probs, dec } => {
                let d_code = model.codebook.decode_backward(probs, dec, &tg.weights, &mut g.codebook);
                let commit = model.codebook.commitment;
                let dim = model.codebook.dim;
                let proto = &mut g.codebook.prototypes.data[quant.index * dim..(quant.index + 1) * dim];
                let mut gu = d_code;
                for k in 0..dim {
                    let diff = ubar[k] - quant.code[k];
                    proto[k] -= lw.beta * 2.0 * diff;
                    gu[k] += lw.beta * commit * 2.0 * diff;
                }
                let pairs = (n * (n - 1)) as f64;
                let du: Vec<f64> = gu.iter().map(|v| v / pairs).collect();
                let mut ds = vec![vec![0.0; s_dim]; n];
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            model.pair.backward_pair(caches, i, j, &du, &mut g.pair, &mut ds);
                        }
                    }
                }
                for i in 0..n {
                    add(&mut g_s[t][i], &ds[i]);
                }
            }
        }
    }

    // Static consistency and contrastive terms.
    for t in 0..t_len {
        for i in 0..n {
            for k in 0..cd {
                g_c[t][i][k] += lw.gamma * static_grad[t][i][k] + lw.eta * con_grad[t][i][k];
            }
        }
    }

    // Reward head.
    for t in 0..t_len {
        let (caches, rhat) = &reward_caches[t];
        let dr = lw.reward * 2.0 * (rhat - w.rewards[t]) / (n - 1) as f64;
        for i in 1..n {
            let din = model.reward.backward(&caches[i - 1], &[dr], &mut g.reward);
            add(&mut g_c[t][0], &din[..cd]);
            add(&mut g_d[t][0], &din[cd..cd + dd]);
            add(&mut g_c[t][i], &din[cd + dd..2 * cd + dd]);
            add(&mut g_d[t][i], &din[2 * cd + dd..2 * (cd + dd)]);
        }
    }

    // Factorizers.
    for t in 0..t_len {
        for i in 0..n {
            let slot = &slots[t][i];
            let dsc = model.f_c.backward(&slot.fc, &g_c[t][i], &mut g.f_c);
            add(&mut g_s[t][i][..ks], &dsc);
            let dsd = model.f_d.backward(&slot.fd, &g_d[t][i], &mut g.f_d);
            add(&mut g_s[t][i][ks..], &dsd);
        }
    }

    // Reverse sweep through the reparameterization, encoder and GRU.
    for t in (0..t_len).rev() {
        for i in 0..n {
            let slot = &slots[t][i];
            let gs = std::mem::take(&mut g_s[t][i]);
            add(&mut g_mu[t][i], &gs);
            for k in 0..s_dim {
                g_sig[t][i][k] += gs[k] * noise.eps[t][i][k];
            }
            let mut dout = g_mu[t][i].clone();
            dout.extend((0..s_dim).map(|k| g_sig[t][i][k] * sigmoid(slot.post.raw[k])));
            let dx = model.encoder.backward(&slot.enc, &dout, &mut g.encoder);
            add(&mut g_h[t][i], &dx[cfg.obs_dim..]);
            let (dxs, dhp) = model.gru.backward(&slot.gru, &g_h[t][i], &mut g.gru);
            if t > 0 {
                add(&mut g_s[t - 1][i], &dxs);
                add(&mut g_h[t - 1][i], &dhp);
            }
        }
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wm::WmConfig;
    use fioc_numkit::{flatten, unflatten, zeros_like};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_config(regime: Regime) -> WmConfig {
        WmConfig {
            obs_dim: 3,
            n_objects: 3,
            s_static: 2,
            s_dynamic: 3,
            c_dim: 2,
            d_dim: 3,
            gru_hidden: 3,
            enc_hidden: 4,
            dec_hidden: 4,
            factor_hidden: 3,
            trans_hidden: 4,
            reward_hidden: 3,
            pair_hidden: 4,
            u_dim: 3,
            codebook_size: 3,
            code_hidden: 3,
            regime,
            ..WmConfig::default()
        }
    }

    fn random_window(cfg: &WmConfig, t_len: usize, seed: u64) -> Window {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = cfg.n_objects;
        let mut graphs = Vec::new();
        for _ in 0..t_len {
            let mut g = InteractionGraph::empty(n);
            g.set_pair(0, 1, rng.random_bool(0.5));
            graphs.push(g);
        }
        Window {
            obs: (0..t_len)
                .map(|_| (0..n).map(|_| (0..cfg.obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
                .collect(),
            actions: (0..t_len).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect(),
            rewards: (0..t_len).map(|_| rng.random_range(-1.0..0.0)).collect(),
            graphs,
        }
    }

    fn check_gradients(regime: Regime, source: GraphSource) {
        let cfg = tiny_config(regime);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = WorldModel::new(cfg.clone(), &mut rng).unwrap();
        let win = random_window(&cfg, 4, 5);
        let noise = WindowNoise::draw(4, 3, cfg.s_dim(), &mut rng);
        let mut grads = zeros_like(&model);
        loss_and_grad(&model, &win, &noise, source, &mut grads).unwrap();
        let analytic = flatten(&grads);
        let theta = flatten(&model);
        let h = 1e-5;
        let mut probe = model.clone();
        let mut worst: f64 = 0.0;
        for k in 0..theta.len() {
            let mut p = theta.clone();
            p[k] += h;
            unflatten(&mut probe, &p).unwrap();
            let up = loss_total(&probe, &win, &noise, source).unwrap().total;
            p[k] -= 2.0 * h;
            unflatten(&mut probe, &p).unwrap();
            let down = loss_total(&probe, &win, &noise, source).unwrap().total;
            let fd = (up - down) / (2.0 * h);
            let err = (fd - analytic[k]).abs() / (fd.abs() + analytic[k].abs()).max(1e-3);
            worst = worst.max(err);
            assert!(err < 1e-5, "param {k}: fd {fd} analytic {}", analytic[k]);
        }
        assert!(worst < 1e-5);
    }

    #[test]
    fn gradient_check_variational() {
        check_gradients(Regime::Variational, GraphSource::Inferred);
    }

    #[test]
    fn gradient_check_full_graph() {
        check_gradients(Regime::Cit, GraphSource::Inferred);
    }

    #[test]
    fn gradient_check_ground_truth_graph() {
        check_gradients(Regime::Variational, GraphSource::GroundTruth);
    }

    #[test]
    fn weighted_total_matches_parts() {
        let cfg = tiny_config(Regime::Variational);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = WorldModel::new(cfg.clone(), &mut rng).unwrap();
        let win = random_window(&cfg, 5, 2);
        let noise = WindowNoise::draw(5, 3, cfg.s_dim(), &mut rng);
        let l = loss_total(&model, &win, &noise, GraphSource::Inferred).unwrap();
        let expected = l.recon + 1.0 * l.pred + 0.05 * l.kl + 0.1 * l.static_ + 0.2 * l.contrastive + l.reward;
        assert!((l.total - expected).abs() < 1e-12);
        for v in [l.recon, l.pred, l.kl, l.static_, l.contrastive, l.reward] {
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn recon_matches_independent_loop() {
        let cfg = tiny_config(Regime::Cit);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = WorldModel::new(cfg.clone(), &mut rng).unwrap();
        let win = random_window(&cfg, 3, 9);
        let noise = WindowNoise::zeros(3, 3, cfg.s_dim());
        let l = loss_total(&model, &win, &noise, GraphSource::Full).unwrap();
        let mut carry = Carry::zeros(3, cfg.s_dim(), cfg.gru_hidden);
        let mut brute = 0.0;
        for t in 0..3 {
            let e = model.encode_mean(&win.obs[t], &carry).unwrap();
            for i in 0..3 {
                let xhat = model.decode_obs(&e.c[i], &e.d[i]);
                for k in 0..cfg.obs_dim {
                    brute += (xhat[k] - win.obs[t][i][k]).powi(2);
                }
            }
            carry = e.carry;
        }
        assert!((l.recon - brute).abs() < 1e-9);
    }

    #[test]
    fn rejects_short_window() {
        let cfg = tiny_config(Regime::Variational);
        let model = WorldModel::zeros(cfg.clone());
        let win = random_window(&cfg, 1, 0);
        let noise = WindowNoise::zeros(1, 3, cfg.s_dim());
        assert!(loss_total(&model, &win, &noise, GraphSource::Inferred).is_err());
    }

    #[test]
    fn codebook_forward_runs_and_moves_prototype() {
        let cfg = tiny_config(Regime::Codebook);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = WorldModel::new(cfg.clone(), &mut rng).unwrap();
        let win = random_window(&cfg, 4, 1);
        let noise = WindowNoise::draw(4, 3, cfg.s_dim(), &mut rng);
        let mut grads = zeros_like(&model);
        let l = loss_and_grad(&model, &win, &noise, GraphSource::Inferred, &mut grads).unwrap();
        assert!(l.is_finite() && l.kl > 0.0);
        assert!(grads.codebook.prototypes.data.iter().any(|v| *v != 0.0));
    }
}
