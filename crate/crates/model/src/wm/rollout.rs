//! Filtering, graph inference and open-loop rollouts with a trained model.

use fioc_env::{EpisodeRecord, InteractionGraph};

use super::window::GraphSource;
use super::{Carry, WorldModel};
use crate::interaction::cit::TransitionSample;
use crate::interaction::{quantize_codebook, GraphEstimate, Regime, SoftGraph};
use crate::{ModelError, Result};

/// Posterior-mean latents along an episode, `[t][object]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub s: Vec<Vec<Vec<f64>>>,
    pub c: Vec<Vec<Vec<f64>>>,
    pub d: Vec<Vec<Vec<f64>>>,
}

impl Filtered {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

impl WorldModel {
    /// Run the encoder over an observation sequence using posterior means.
    pub fn filter(&self, obs: &[Vec<Vec<f64>>]) -> Result<Filtered> {
        let n = obs.first().map_or(0, Vec::len);
        let mut carry = Carry::zeros(n, self.config.s_dim(), self.config.gru_hidden);
        let mut f = Filtered {
            s: Vec::with_capacity(obs.len()),
            c: Vec::with_capacity(obs.len()),
            d: Vec::with_capacity(obs.len()),
        };
        for o in obs {
            let e = self.encode_mean(o, &carry)?;
            f.s.push(e.s);
            f.c.push(e.c);
            f.d.push(e.d);
            carry = e.carry;
        }
        Ok(f)
    }

    pub fn filter_episode(&self, ep: &EpisodeRecord) -> Result<Filtered> {
        let obs: Vec<Vec<Vec<f64>>> = ep.steps.iter().map(|s| s.obs.clone()).collect();
        self.filter(&obs)
    }

    /// Noise-free graph estimate from latents under the model's regime. The
    /// CIT regime has no amortized estimator and reports the dense graph.
    pub fn infer_graph(&self, s: &[Vec<f64>]) -> Result<GraphEstimate> {
        let n = s.len();
        let soft = match self.config.regime {
            Regime::Variational => self.pair.edge_probs(s),
            Regime::Codebook => {
                let pooled = self.pair.embed_for_pooling(s).embedding.mean();
                let q = quantize_codebook(&pooled, &self.codebook)?;
                self.codebook.decode_cached(&q.code).0
            }
            Regime::Cit => SoftGraph::full(n),
        };
        Ok(GraphEstimate::new(soft))
    }

    fn rollout_graph(&self, source: GraphSource, s: &[Vec<f64>], truth: Option<&InteractionGraph>) -> Result<SoftGraph> {
        let n = s.len();
        Ok(match source {
            GraphSource::Inferred => self.infer_graph(s)?.soft,
            GraphSource::Full => SoftGraph::full(n),
            GraphSource::Empty => SoftGraph::empty(n),
            GraphSource::GroundTruth => SoftGraph::from_graph(
                truth.ok_or_else(|| ModelError::InvalidArgument("ground-truth rollout needs graphs".into()))?,
            ),
        })
    }

    /// Advance latents one step with the prior mean; static parts are held.
    pub fn prior_step(&self, s: &[Vec<f64>], c: &[Vec<f64>], d: &[Vec<f64>], action: &[f64], graph: &SoftGraph) -> Vec<Vec<f64>> {
        let ks = self.config.s_static;
        let base: Vec<Vec<f64>> = s.iter().map(|v| v[ks..].to_vec()).collect();
        let prior = self.transition.predict_next(&base, d, c, action, graph);
        s.iter()
            .zip(prior)
            .map(|(si, p)| {
                let mut next = si[..ks].to_vec();
                next.extend(p.mean);
                next
            })
            .collect()
    }

    /// Open-loop predicted observations for each action, starting from
    /// latents `s0`. `truth[k]` is only read for ground-truth graphs.
    pub fn rollout(
        &self,
        s0: &[Vec<f64>],
        actions: &[Vec<f64>],
        source: GraphSource,
        truth: Option<&[InteractionGraph]>,
    ) -> Result<Vec<Vec<Vec<f64>>>> {
        let mut s = s0.to_vec();
        let mut out = Vec::with_capacity(actions.len());
        for (k, a) in actions.iter().enumerate() {
            let (c, d): (Vec<_>, Vec<_>) = s.iter().map(|v| self.factor(v)).unzip();
            let g = self.rollout_graph(source, &s, truth.and_then(|t| t.get(k)))?;
            s = self.prior_step(&s, &c, &d, a, &g);
            out.push(
                s.iter()
                    .map(|v| {
                        let (c, d) = self.factor(v);
                        self.decode_obs(&c, &d)
                    })
                    .collect(),
            );
        }
        Ok(out)
    }

    /// `(d_t, a_t, d_{t+1})` triples of filtered dynamic parts.
    pub fn transitions(&self, ep: &EpisodeRecord) -> Result<Vec<TransitionSample>> {
        let f = self.filter_episode(ep)?;
        Ok((0..f.len().saturating_sub(1))
            .map(|t| TransitionSample {
                d: f.d[t].clone(),
                action: ep.steps[t].action.to_vec(),
                d_next: f.d[t + 1].clone(),
            })
            .collect())
    }
}

/// Mean squared error per observation entry of `horizon`-step open-loop
/// rollouts started from every filtered step. With `contact_only`, only
/// starts whose horizon contains a ground-truth interaction are scored.
pub fn rollout_mse(
    model: &WorldModel,
    episodes: &[EpisodeRecord],
    horizon: usize,
    source: GraphSource,
    contact_only: bool,
) -> Result<f64> {
    if horizon == 0 {
        return Err(ModelError::InvalidArgument("rollout horizon must be positive".into()));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for ep in episodes {
        let f = model.filter_episode(ep)?;
        for t0 in 0..ep.len().saturating_sub(horizon) {
            let span = &ep.steps[t0..t0 + horizon];
            if contact_only && span.iter().all(|s| s.graph.is_empty()) {
                continue;
            }
            let actions: Vec<Vec<f64>> = span.iter().map(|s| s.action.to_vec()).collect();
            let truth: Vec<InteractionGraph> = span.iter().map(|s| s.graph.clone()).collect();
            let pred = model.rollout(&f.s[t0], &actions, source, Some(&truth))?;
            for (k, step) in pred.iter().enumerate() {
                for (p, o) in step.iter().zip(&ep.steps[t0 + k + 1].obs) {
                    sum += fioc_numkit::sq_dist(p, o);
                    count += o.len();
                }
            }
        }
    }
    if count == 0 {
        return Err(ModelError::InvalidArgument("no rollout start satisfies the selection".into()));
    }
    Ok(sum / count as f64)
}
