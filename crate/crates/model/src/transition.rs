//! Graph-conditioned per-object Gaussian transition: a residual self term
//! plus weighted messages from every other object.

use fioc_numkit::prob::{sigmoid, softplus};
use fioc_numkit::{join, Activation, DenseCache, DenseNet, Parameters};
use rand::Rng;

use crate::interaction::SoftGraph;

/// Diagonal Gaussian with the pre-softplus std parameter kept for backward.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub raw: Vec<f64>,
}

impl Gaussian {
    pub fn from_raw(mean: Vec<f64>, raw: Vec<f64>, sigma_min: f64) -> Self {
        let std = raw.iter().map(|&r| sigma_min + softplus(r)).collect();
        Self { mean, std, raw }
    }

    /// `d std / d raw`
    pub fn std_grad_factor(&self) -> Vec<f64> {
        self.raw.iter().map(|&r| sigmoid(r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub d_dim: usize,
    pub c_dim: usize,
    pub out_dim: usize,
    pub action_dim: usize,
    pub sigma_min: f64,
    /// `[d_i, c_i, action (agent only), agent flag] -> [mean delta, raw std]`
    pub self_net: DenseNet,
    /// `[d_dst, d_src, d_src - d_dst, c_src] -> message`
    pub msg_net: DenseNet,
}

#[derive(Debug, Clone)]
pub struct TransitionCache {
    n: usize,
    self_caches: Vec<DenseCache>,
    /// Message `src -> dst` at `src * n + dst`, absent for zero weight.
    msgs: Vec<Option<(DenseCache, Vec<f64>)>>,
    weights: Vec<f64>,
    pub prior: Vec<Gaussian>,
}

/// Gradients with respect to the inputs of [`Transition::forward`].
#[derive(Debug, Clone)]
pub struct TransitionInputGrads {
    pub base: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    /// Indexed like the graph weights, `src * n + dst`.
    pub weights: Vec<f64>,
}

impl Transition {
    pub fn new<R: Rng + ?Sized>(
        d_dim: usize,
        c_dim: usize,
        out_dim: usize,
        action_dim: usize,
        hidden: usize,
        sigma_min: f64,
        rng: &mut R,
    ) -> Self {
        let mut self_net = DenseNet::new(&[d_dim + c_dim + action_dim + 1, hidden, 2 * out_dim], Activation::Silu, rng);
        self_net.scale_output(0.1);
        let mut msg_net = DenseNet::new(&[3 * d_dim + c_dim, hidden, out_dim], Activation::Silu, rng);
        msg_net.scale_output(0.1);
        Self {
            d_dim,
            c_dim,
            out_dim,
            action_dim,
            sigma_min,
            self_net,
            msg_net,
        }
    }

    fn self_input(&self, d: &[f64], c: &[f64], action: &[f64], agent: bool) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.self_net.input_dim());
        x.extend_from_slice(d);
        x.extend_from_slice(c);
        if agent {
            x.extend_from_slice(action);
            x.push(1.0);
        } else {
            x.extend(std::iter::repeat_n(0.0, self.action_dim));
            x.push(0.0);
        }
        x
    }

    fn msg_input(&self, d_dst: &[f64], d_src: &[f64], c_src: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.msg_net.input_dim());
        x.extend_from_slice(d_dst);
        x.extend_from_slice(d_src);
        x.extend(d_src.iter().zip(d_dst).map(|(a, b)| a - b));
        x.extend_from_slice(c_src);
        x
    }

    /// Message from `src` into `dst` for unit weight.
    pub fn message(&self, d: &[Vec<f64>], c: &[Vec<f64>], src: usize, dst: usize) -> Vec<f64> {
        self.msg_net.forward(&self.msg_input(&d[dst], &d[src], &c[src]))
    }

    /// Self term only: `(mean delta, raw std)` for object `i`.
    pub fn self_term(&self, d: &[f64], c: &[f64], action: &[f64], agent: bool) -> (Vec<f64>, Vec<f64>) {
        let out = self.self_net.forward(&self.self_input(d, c, action, agent));
        (out[..self.out_dim].to_vec(), out[self.out_dim..].to_vec())
    }

    /// Prior over the next state of every object. Object 0 receives the action.
    pub fn predict_next(
        &self,
        base: &[Vec<f64>],
        d: &[Vec<f64>],
        c: &[Vec<f64>],
        action: &[f64],
        graph: &SoftGraph,
    ) -> Vec<Gaussian> {
        self.forward(base, d, c, action, graph).prior
    }

    pub fn forward(
        &self,
        base: &[Vec<f64>],
        d: &[Vec<f64>],
        c: &[Vec<f64>],
        action: &[f64],
        graph: &SoftGraph,
    ) -> TransitionCache {
        let n = d.len();
        debug_assert_eq!(graph.n(), n);
        let mut self_caches = Vec::with_capacity(n);
        let mut msgs: Vec<Option<(DenseCache, Vec<f64>)>> = vec![None; n * n];
        let mut prior = Vec::with_capacity(n);
        for i in 0..n {
            let (out, cache) = self.self_net.forward_cached(&self.self_input(&d[i], &c[i], action, i == 0));
            self_caches.push(cache);
            let mut mean: Vec<f64> = base[i].iter().zip(&out[..self.out_dim]).map(|(b, o)| b + o).collect();
            for j in 0..n {
                let w = graph.get(j, i);
                if j == i || w == 0.0 {
                    continue;
                }
                let (m, mc) = self.msg_net.forward_cached(&self.msg_input(&d[i], &d[j], &c[j]));
                for (a, b) in mean.iter_mut().zip(&m) {
                    *a += w * b;
                }
                msgs[j * n + i] = Some((mc, m));
            }
            prior.push(Gaussian::from_raw(mean, out[self.out_dim..].to_vec(), self.sigma_min));
        }
        TransitionCache {
            n,
            self_caches,
            msgs,
            weights: graph.weights().to_vec(),
            prior,
        }
    }

    /// Backpropagate gradients on prior means and stds.
    pub fn backward(
        &self,
        cache: &TransitionCache,
        d_mean: &[Vec<f64>],
        d_std: &[Vec<f64>],
        grads: &mut Transition,
    ) -> TransitionInputGrads {
        let n = cache.n;
        let (dd, cd) = (self.d_dim, self.c_dim);
        let mut out = TransitionInputGrads {
            base: d_mean.to_vec(),
            d: vec![vec![0.0; dd]; n],
            c: vec![vec![0.0; cd]; n],
            weights: vec![0.0; n * n],
        };
        for i in 0..n {
            let g = &cache.prior[i];
            let mut dout = d_mean[i].clone();
            dout.extend(g.std_grad_factor().iter().zip(&d_std[i]).map(|(f, s)| f * s));
            let dx = self.self_net.backward(&cache.self_caches[i], &dout, &mut grads.self_net);
            add(&mut out.d[i], &dx[..dd]);
            add(&mut out.c[i], &dx[dd..dd + cd]);
            for j in 0..n {
                if let Some((mc, m)) = &cache.msgs[j * n + i] {
                    let w = cache.weights[j * n + i];
                    out.weights[j * n + i] = m.iter().zip(&d_mean[i]).map(|(a, b)| a * b).sum();
                    let dm: Vec<f64> = d_mean[i].iter().map(|v| w * v).collect();
                    let dx = self.msg_net.backward(mc, &dm, &mut grads.msg_net);
                    let rel = &dx[2 * dd..3 * dd];
                    add(&mut out.d[i], &dx[..dd]);
                    add(&mut out.d[j], &dx[dd..2 * dd]);
                    add(&mut out.d[j], rel);
                    out.d[i].iter_mut().zip(rel).for_each(|(a, r)| *a -= r);
                    add(&mut out.c[j], &dx[3 * dd..]);
                }
            }
        }
        out
    }
}

pub(crate) fn add(dst: &mut [f64], src: &[f64]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

impl Parameters for Transition {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.self_net.visit(&join(prefix, "self"), f);
        self.msg_net.visit(&join(prefix, "msg"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.self_net.visit_mut(&join(prefix, "self"), f);
        self.msg_net.visit_mut(&join(prefix, "msg"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fioc_numkit::{flatten, unflatten, zeros_like};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Transition, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = Transition::new(3, 2, 3, 2, 5, 1e-3, &mut rng);
        let mut t = t;
        t.msg_net.scale_output(10.0);
        let d: Vec<Vec<f64>> = (0..3).map(|i| vec![0.1 * i as f64, -0.2, 0.3]).collect();
        let c: Vec<Vec<f64>> = (0..3).map(|i| vec![1.0, 0.5 * i as f64]).collect();
        let base = d.clone();
        (t, d, c, base)
    }

    #[test]
    fn empty_graph_is_self_term_only() {
        let (t, d, c, base) = setup();
        let prior = t.predict_next(&base, &d, &c, &[0.3, -0.1], &SoftGraph::empty(3));
        for i in 0..3 {
            let (m, _) = t.self_term(&d[i], &c[i], &[0.3, -0.1], i == 0);
            for k in 0..3 {
                assert_eq!(prior[i].mean[k], base[i][k] + m[k]);
            }
        }
    }

    #[test]
    fn half_weight_halves_message() {
        let (t, d, c, base) = setup();
        let mut g1 = SoftGraph::empty(3);
        g1.set(2, 0, 1.0);
        let mut gh = SoftGraph::empty(3);
        gh.set(2, 0, 0.5);
        let p0 = t.predict_next(&base, &d, &c, &[0.0; 2], &SoftGraph::empty(3));
        let p1 = t.predict_next(&base, &d, &c, &[0.0; 2], &g1);
        let ph = t.predict_next(&base, &d, &c, &[0.0; 2], &gh);
        let msg = t.message(&d, &c, 2, 0);
        for k in 0..3 {
            let full = p1[0].mean[k] - p0[0].mean[k];
            let half = ph[0].mean[k] - p0[0].mean[k];
            assert!((full - msg[k]).abs() < 1e-14);
            assert!((half - 0.5 * full).abs() < 1e-14);
        }
        assert_eq!(p1[1], p0[1]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (t, d, c, base) = setup();
        let mut g = SoftGraph::empty(3);
        g.set(0, 1, 0.3);
        g.set(2, 1, 0.8);
        g.set(1, 0, 0.6);
        let a = [0.4, -0.7];
        let wm: Vec<Vec<f64>> = (0..3).map(|i| vec![0.5, -1.0 + i as f64, 0.25]).collect();
        let ws: Vec<Vec<f64>> = (0..3).map(|i| vec![1.0, 0.3 * i as f64, -0.5]).collect();
        let objective = |t: &Transition, base: &[Vec<f64>], d: &[Vec<f64>], c: &[Vec<f64>], g: &SoftGraph| -> f64 {
            let p = t.predict_next(base, d, c, &a, g);
            (0..3)
                .map(|i| {
                    (0..3).map(|k| wm[i][k] * p[i].mean[k] + ws[i][k] * p[i].std[k]).sum::<f64>()
                })
                .sum()
        };
        let cache = t.forward(&base, &d, &c, &a, &g);
        let mut grads = zeros_like(&t);
        let gi = t.backward(&cache, &wm, &ws, &mut grads);
        let h = 1e-6;
        let flat = flatten(&t);
        let gflat = flatten(&grads);
        for k in 0..flat.len() {
            let mut tp = t.clone();
            let mut p = flat.clone();
            p[k] += h;
            unflatten(&mut tp, &p).unwrap();
            let mut tm = t.clone();
            p[k] -= 2.0 * h;
            unflatten(&mut tm, &p).unwrap();
            let fd = (objective(&tp, &base, &d, &c, &g) - objective(&tm, &base, &d, &c, &g)) / (2.0 * h);
            assert!((fd - gflat[k]).abs() < 1e-6 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", gflat[k]);
        }
        for i in 0..3 {
            for k in 0..3 {
                let mut dp = d.clone();
                dp[i][k] += h;
                let mut dm = d.clone();
                dm[i][k] -= h;
                let fd = (objective(&t, &base, &dp, &c, &g) - objective(&t, &base, &dm, &c, &g)) / (2.0 * h);
                assert!((fd - gi.d[i][k]).abs() < 1e-6, "d[{i}][{k}]");
            }
            for k in 0..2 {
                let mut cp = c.clone();
                cp[i][k] += h;
                let mut cm = c.clone();
                cm[i][k] -= h;
                let fd = (objective(&t, &base, &d, &cp, &g) - objective(&t, &base, &d, &cm, &g)) / (2.0 * h);
                assert!((fd - gi.c[i][k]).abs() < 1e-6, "c[{i}][{k}]");
            }
        }
        for (s, dd) in [(0usize, 1usize), (2, 1), (1, 0)] {
            let mut gp = g.clone();
            gp.set(s, dd, g.get(s, dd) + h);
            let mut gm = g.clone();
            gm.set(s, dd, g.get(s, dd) - h);
            let fd = (objective(&t, &base, &d, &c, &gp) - objective(&t, &base, &d, &c, &gm)) / (2.0 * h);
            assert!((fd - gi.weights[s * 3 + dd]).abs() < 1e-6);
        }
    }
}
