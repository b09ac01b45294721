//! Subgoal policy over ordered (anchor, target) pairs.

use fioc_env::InteractionGraph;
use fioc_numkit::{join, Activation, DenseNet, Parameters};
use rand::Rng;

use crate::subgoal::SubgoalGraph;
use crate::{PolicyError, Result};

/// Number of ordered pairs of `n` objects.
pub fn num_pairs(n: usize) -> usize {
    n * n.saturating_sub(1)
}

/// Index of ordered pair `(i, j)`, `i != j`, in row-major order with the
/// diagonal skipped.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i != j && i < n && j < n);
    i * (n - 1) + if j < i { j } else { j - 1 }
}

pub fn pair_at(n: usize, k: usize) -> (usize, usize) {
    let i = k / (n - 1);
    let r = k % (n - 1);
    (i, if r < i { r } else { r + 1 })
}

/// Pairs whose anchor is in `anchors`.
pub fn anchor_mask(n: usize, anchors: &[usize]) -> Vec<bool> {
    (0..num_pairs(n)).map(|k| anchors.contains(&pair_at(n, k).0)).collect()
}

/// Log-softmax over unmasked entries; masked entries get `-inf`.
pub fn masked_log_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(PolicyError::InvalidArgument(format!(
            "mask has {} entries for {} logits",
            mask.len(),
            logits.len()
        )));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(PolicyError::InvalidArgument("every subgoal pair is masked".into()));
    }
    let lse = max
        + logits
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(l, _)| (l - max).exp())
            .sum::<f64>()
            .ln();
    Ok(logits
        .iter()
        .zip(mask)
        .map(|(l, &m)| if m { l - lse } else { f64::NEG_INFINITY })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighLevelPolicy {
    pub n: usize,
    pub net: DenseNet,
    pub value: DenseNet,
}

impl Parameters for HighLevelPolicy {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.net.visit(&join(prefix, "net"), f);
        self.value.visit(&join(prefix, "value"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.net.visit_mut(&join(prefix, "net"), f);
        self.value.visit_mut(&join(prefix, "value"), f);
    }
}

/// Policy input: per-object features concatenated, then the off-diagonal
/// entries of the current graph.
pub fn policy_input(features: &[Vec<f64>], graph: &InteractionGraph) -> Vec<f64> {
    let mut x: Vec<f64> = features.iter().flatten().copied().collect();
    let n = graph.n();
    for k in 0..num_pairs(n) {
        let (i, j) = pair_at(n, k);
        x.push(if graph.get(i, j) { 1.0 } else { 0.0 });
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub subgoal: SubgoalGraph,
    pub pair: usize,
    pub log_prob: f64,
    pub value: f64,
}

impl HighLevelPolicy {
    pub fn new<R: Rng + ?Sized>(n: usize, input_dim: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        if n < 2 {
            return Err(PolicyError::InvalidArgument("subgoal policy needs at least 2 objects".into()));
        }
        let mut net = DenseNet::new(&[input_dim, hidden, num_pairs(n)], Activation::Silu, rng);
        net.scale_output(0.01);
        Ok(Self {
            n,
            net,
            value: DenseNet::new(&[input_dim, hidden, 1], Activation::Silu, rng),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn logits(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.net.try_forward(input)?)
    }

    pub fn value_of(&self, input: &[f64]) -> Result<f64> {
        Ok(self.value.try_forward(input)?[0])
    }

    pub fn probs(&self, input: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
        Ok(masked_log_softmax(&self.logits(input)?, mask)?.iter().map(|l| l.exp()).collect())
    }
}

/// Sample (or with `greedy`, take the argmax of) the masked softmax over
/// pairs; the subgoal toggles that pair in `current`.
pub fn high_level_select<R: Rng + ?Sized>(
    policy: &HighLevelPolicy,
    input: &[f64],
    current: &InteractionGraph,
    mask: &[bool],
    greedy: bool,
    rng: &mut R,
) -> Result<Selection> {
    let logp = masked_log_softmax(&policy.logits(input)?, mask)?;
    let pair = if greedy {
        (0..logp.len()).fold(None, |best: Option<usize>, k| match best {
            Some(b) if logp[b] >= logp[k] => Some(b),
            _ if logp[k].is_finite() => Some(k),
            _ => best,
        })
    } else {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = None;
        for (k, l) in logp.iter().enumerate() {
            if l.is_finite() {
                acc += l.exp();
                pick = Some(k);
                if u < acc {
                    break;
                }
            }
        }
        pick
    }
    .expect("at least one unmasked pair");
    let (i, j) = pair_at(policy.n, pair);
    Ok(Selection {
        subgoal: SubgoalGraph::toggle(current, i, j)?,
        pair,
        log_prob: logp[pair],
        value: policy.value_of(input)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_policy(n: usize, dim: usize) -> HighLevelPolicy {
        HighLevelPolicy {
            n,
            net: DenseNet::zeros(&[dim, 4, num_pairs(n)], Activation::Silu),
            value: DenseNet::zeros(&[dim, 4, 1], Activation::Silu),
        }
    }

    #[test]
    fn pair_indexing_round_trips() {
        for n in 2..6 {
            for k in 0..num_pairs(n) {
                let (i, j) = pair_at(n, k);
                assert_ne!(i, j);
                assert_eq!(pair_index(n, i, j), k);
            }
        }
    }

    #[test]
    fn uniform_logits_give_one_sixth() {
        let p = zero_policy(3, 2);
        let probs = p.probs(&[0.3, -0.2], &[true; 6]).unwrap();
        for q in probs {
            assert!((q - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_unmasked_pair_is_certain() {
        let p = zero_policy(3, 2);
        let mut mask = vec![false; 6];
        mask[4] = true;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = InteractionGraph::empty(3);
        for _ in 0..50 {
            let s = high_level_select(&p, &[0.0, 0.0], &g, &mask, false, &mut rng).unwrap();
            assert_eq!(s.pair, 4);
            assert_eq!(s.log_prob, 0.0);
        }
        assert!(high_level_select(&p, &[0.0, 0.0], &g, &[false; 6], false, &mut rng).is_err());
    }

    #[test]
    fn sampled_frequencies_match_probabilities() {
        let mut p = zero_policy(3, 1);
        let b = &mut p.net.layers[1].b;
        b.copy_from_slice(&[0.5, -1.0, 0.0, 1.2, -0.3, 0.1]);
        let probs = p.probs(&[0.0], &[true; 6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = InteractionGraph::empty(3);
        let draws = 10_000;
        let mut counts = [0usize; 6];
        for _ in 0..draws {
            counts[high_level_select(&p, &[0.0], &g, &[true; 6], false, &mut rng).unwrap().pair] += 1;
        }
        for k in 0..6 {
            let f = counts[k] as f64 / draws as f64;
            let se = (probs[k] * (1.0 - probs[k]) / draws as f64).sqrt();
            assert!((f - probs[k]).abs() < 3.0 * se, "pair {k}: {f} vs {}", probs[k]);
        }
    }

    #[test]
    fn greedy_picks_argmax_among_unmasked() {
        let mut p = zero_policy(3, 1);
        p.net.layers[1].b.copy_from_slice(&[5.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let mut mask = vec![true; 6];
        mask[0] = false;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = high_level_select(&p, &[0.0], &InteractionGraph::empty(3), &mask, true, &mut rng).unwrap();
        assert_eq!(s.pair, 2);
        assert_eq!((s.subgoal.anchor, s.subgoal.target), pair_at(3, 2));
    }

    #[test]
    fn input_layout() {
        let mut g = InteractionGraph::empty(2);
        g.set_pair(0, 1, true);
        assert_eq!(policy_input(&[vec![1.0], vec![2.0]], &g), vec![1.0, 2.0, 1.0, 1.0]);
        assert_eq!(anchor_mask(3, &[0]), vec![true, true, false, false, false, false]);
    }
}
