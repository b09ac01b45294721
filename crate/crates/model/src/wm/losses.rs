//! Temporal-consistency and cross-slot contrastive losses on static parts.
//! Latents are indexed `[t][object][k]`.

use rand::Rng;

use crate::{ModelError, Result};

type Seq = [Vec<Vec<f64>>];

/// `sum_t sum_i |c_{t+1}^i - c_t^i|^2`
pub fn static_loss(c: &Seq) -> f64 {
    c.windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| fioc_numkit::sq_dist(a, b))
                .sum::<f64>()
        })
        .sum()
}

/// Value and gradient of [`static_loss`].
pub fn static_loss_grad(c: &Seq) -> (f64, Vec<Vec<Vec<f64>>>) {
    let mut g: Vec<Vec<Vec<f64>>> = c.iter().map(|s| s.iter().map(|v| vec![0.0; v.len()]).collect()).collect();
    for t in 0..c.len().saturating_sub(1) {
        for i in 0..c[t].len() {
            for k in 0..c[t][i].len() {
                let diff = c[t + 1][i][k] - c[t][i][k];
                g[t + 1][i][k] += 2.0 * diff;
                g[t][i][k] -= 2.0 * diff;
            }
        }
    }
    (static_loss(c), g)
}

/// For each `t`, a partner timestep drawn uniformly from the others.
pub fn draw_pairing<R: Rng + ?Sized>(t_len: usize, rng: &mut R) -> Vec<usize> {
    (0..t_len)
        .map(|t| {
            if t_len < 2 {
                return t;
            }
            let k = rng.random_range(0..t_len - 1);
            if k >= t {
                k + 1
            } else {
                k
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastiveOut {
    pub value: f64,
    /// Similarities involving a zero-norm vector, which were set to 0.
    pub degenerate: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

fn check(c: &Seq, pairing: &[usize], temperature: f64) -> Result<()> {
    if c.len() < 2 || c[0].len() < 2 {
        return Err(ModelError::InvalidArgument("contrastive loss needs T >= 2 and N >= 2".into()));
    }
    if pairing.len() != c.len() || pairing.iter().enumerate().any(|(t, &p)| p == t || p >= c.len()) {
        return Err(ModelError::InvalidArgument("contrastive pairing must map each t to a different valid t'".into()));
    }
    if !(temperature > 0.0) {
        return Err(ModelError::InvalidArgument("contrastive temperature must be positive".into()));
    }
    Ok(())
}

/// InfoNCE over slots: the anchor `c_t^i` is scored against `c_{t'}^j` for
/// every `j`, with `c_{t'}^i` as the positive. Summed over `t` and `i`.
pub fn contrastive_loss(c: &Seq, pairing: &[usize], temperature: f64) -> Result<ContrastiveOut> {
    contrastive_impl(c, pairing, temperature, None)
}

pub fn contrastive_loss_grad(
    c: &Seq,
    pairing: &[usize],
    temperature: f64,
) -> Result<(ContrastiveOut, Vec<Vec<Vec<f64>>>)> {
    let mut g: Vec<Vec<Vec<f64>>> = c.iter().map(|s| s.iter().map(|v| vec![0.0; v.len()]).collect()).collect();
    let out = contrastive_impl(c, pairing, temperature, Some(&mut g))?;
    Ok((out, g))
}

fn contrastive_impl(
    c: &Seq,
    pairing: &[usize],
    temperature: f64,
    mut grad: Option<&mut Vec<Vec<Vec<f64>>>>,
) -> Result<ContrastiveOut> {
    check(c, pairing, temperature)?;
    let n = c[0].len();
    let mut value = 0.0;
    let mut degenerate = 0;
    for (t, &tp) in pairing.iter().enumerate() {
        for i in 0..n {
            let a = &c[t][i];
            let sims: Vec<Option<f64>> = (0..n).map(|j| cosine(a, &c[tp][j])).collect();
            degenerate += sims.iter().filter(|s| s.is_none()).count();
            let logits: Vec<f64> = sims.iter().map(|s| s.unwrap_or(0.0) / temperature).collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
            value += lse - logits[i];
            let Some(g) = grad.as_deref_mut() else { continue };
            for j in 0..n {
                let Some(cos) = sims[j] else { continue };
                let p = (logits[j] - lse).exp();
                let dl = (p - if j == i { 1.0 } else { 0.0 }) / temperature;
                let b = &c[tp][j];
                let (na, nb) = (norm(a), norm(b));
                for k in 0..a.len() {
                    g[t][i][k] += dl * (b[k] / (na * nb) - cos * a[k] / (na * na));
                    g[tp][j][k] += dl * (a[k] / (na * nb) - cos * b[k] / (nb * nb));
                }
            }
        }
    }
    Ok(ContrastiveOut { value, degenerate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_seq(t: usize, n: usize, k: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..t)
            .map(|_| (0..n).map(|_| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
            .collect()
    }

    #[test]
    fn static_examples() {
        let constant = vec![vec![vec![0.3, -1.0]; 2]; 4];
        assert_eq!(static_loss(&constant), 0.0);
        let step = vec![vec![vec![0.0]], vec![vec![1.0]]];
        assert_eq!(static_loss(&step), 1.0);
    }

    #[test]
    fn static_matches_double_loop() {
        let c = random_seq(6, 3, 4, 1);
        let mut brute = 0.0;
        for t in 0..5 {
            for i in 0..3 {
                for k in 0..4 {
                    brute += (c[t + 1][i][k] - c[t][i][k]).powi(2);
                }
            }
        }
        assert!((static_loss(&c) - brute).abs() < 1e-12);
    }

    #[test]
    fn identical_slots_give_log_n() {
        let n = 4;
        let c = vec![vec![vec![0.5, 0.2, -0.1]; n]; 3];
        let pairing = vec![1, 2, 0];
        let out = contrastive_loss(&c, &pairing, 0.1).unwrap();
        let expected = 3.0 * n as f64 * (n as f64).ln();
        assert!((out.value - expected).abs() < 1e-10);
        assert_eq!(out.degenerate, 0);
    }

    #[test]
    fn separated_slots_low_temperature_vanish() {
        // slot 0 along +x, slot 1 along -x: positive cosine 1, negative -1
        let c = vec![vec![vec![1.0, 0.0], vec![-1.0, 0.0]]; 2];
        let out = contrastive_loss(&c, &[1, 0], 0.01).unwrap();
        assert!(out.value < 1e-50);
    }

    #[test]
    fn matches_per_term_evaluation() {
        let c = random_seq(5, 3, 4, 2);
        let pairing = vec![3, 0, 4, 1, 2];
        let tau = 0.3;
        let cos = |a: &[f64], b: &[f64]| {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
        };
        let mut brute = 0.0;
        for t in 0..5 {
            for i in 0..3 {
                let pos = (cos(&c[t][i], &c[pairing[t]][i]) / tau).exp();
                let neg: f64 = (0..3).filter(|&j| j != i).map(|j| (cos(&c[t][i], &c[pairing[t]][j]) / tau).exp()).sum();
                brute -= (pos / (pos + neg)).ln();
            }
        }
        let v = contrastive_loss(&c, &pairing, tau).unwrap().value;
        assert!((v - brute).abs() < 1e-9 * brute.abs().max(1.0));
    }

    #[test]
    fn zero_norm_flagged() {
        let c = vec![vec![vec![0.0, 0.0], vec![1.0, 0.0]], vec![vec![1.0, 1.0], vec![0.0, 1.0]]];
        let out = contrastive_loss(&c, &[1, 0], 0.1).unwrap();
        assert!(out.value.is_finite());
        assert_eq!(out.degenerate, 4);
    }

    #[test]
    fn rejects_bad_pairing() {
        let c = random_seq(3, 2, 2, 0);
        assert!(contrastive_loss(&c, &[0, 2, 1], 0.1).is_err());
        assert!(contrastive_loss(&c, &[1, 2], 0.1).is_err());
        assert!(contrastive_loss(&random_seq(3, 1, 2, 0), &[1, 2, 0], 0.1).is_err());
    }

    #[test]
    fn pairing_never_self() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = draw_pairing(7, &mut rng);
            assert!(p.iter().enumerate().all(|(t, &q)| q != t && q < 7));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let c = random_seq(4, 3, 3, 5);
        let pairing = vec![2, 3, 0, 1];
        let (_, g) = contrastive_loss_grad(&c, &pairing, 0.2).unwrap();
        let (_, gs) = static_loss_grad(&c);
        let h = 1e-6;
        for t in 0..4 {
            for i in 0..3 {
                for k in 0..3 {
                    let mut p = c.clone();
                    p[t][i][k] += h;
                    let mut m = c.clone();
                    m[t][i][k] -= h;
                    let fd = (contrastive_loss(&p, &pairing, 0.2).unwrap().value
                        - contrastive_loss(&m, &pairing, 0.2).unwrap().value)
                        / (2.0 * h);
                    assert!((fd - g[t][i][k]).abs() < 1e-6 * (1.0 + fd.abs()));
                    let fds = (static_loss(&p) - static_loss(&m)) / (2.0 * h);
                    assert!((fds - gs[t][i][k]).abs() < 1e-6);
                }
            }
        }
    }
}
