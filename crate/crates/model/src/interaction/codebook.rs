use fioc_numkit::prob::sigmoid;
use fioc_numkit::{join, sq_dist, Activation, DenseCache, DenseNet, ParamVec, Parameters};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::SoftGraph;
use crate::{ModelError, Result};

/// `K` prototype vectors and a decoder from a prototype to `N x N` edge
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub k: usize,
    pub dim: usize,
    pub n_objects: usize,
    /// Row-major `k x dim`.
    pub prototypes: ParamVec,
    pub decoder: DenseNet,
    pub commitment: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub index: usize,
    pub code: Vec<f64>,
    /// `|sg(u) - e|^2`, moves the prototype.
    pub codebook_loss: f64,
    /// `commitment * |u - sg(e)|^2`, moves the encoder.
    pub commitment_loss: f64,
}

impl Codebook {
    pub fn new<R: Rng + ?Sized>(k: usize, dim: usize, n_objects: usize, hidden: usize, rng: &mut R) -> Self {
        let data = (0..k * dim)
            .map(|_| {
                let e: f64 = StandardNormal.sample(rng);
                0.1 * e
            })
            .collect();
        Self {
            k,
            dim,
            n_objects,
            prototypes: ParamVec::new(vec![k, dim], data),
            decoder: DenseNet::new(&[dim, hidden, n_objects * n_objects], Activation::Silu, rng),
            commitment: 0.25,
        }
    }

    pub fn zeros(k: usize, dim: usize, n_objects: usize, hidden: usize) -> Self {
        Self {
            k,
            dim,
            n_objects,
            prototypes: ParamVec::new(vec![k, dim], vec![0.0; k * dim]),
            decoder: DenseNet::zeros(&[dim, hidden, n_objects * n_objects], Activation::Silu),
            commitment: 0.25,
        }
    }

    pub fn prototype(&self, z: usize) -> &[f64] {
        &self.prototypes.data[z * self.dim..(z + 1) * self.dim]
    }

    pub fn prototype_mut(&mut self, z: usize) -> &mut [f64] {
        &mut self.prototypes.data[z * self.dim..(z + 1) * self.dim]
    }

    /// Decoder pass with its cache; returns the probabilities (diagonal zero).
    pub fn decode_cached(&self, code: &[f64]) -> (SoftGraph, DenseCache) {
        let (logits, cache) = self.decoder.forward_cached(code);
        let probs = logits.iter().map(|&l| sigmoid(l)).collect();
        (SoftGraph::from_weights(self.n_objects, probs), cache)
    }

    /// Backward of [`decode_cached`] given gradients on the probabilities;
    /// returns the gradient on the code.
    pub fn decode_backward(&self, probs: &SoftGraph, cache: &DenseCache, d_probs: &[f64], grads: &mut Codebook) -> Vec<f64> {
        let n = self.n_objects;
        let dl: Vec<f64> = (0..n * n)
            .map(|k| {
                if k / n == k % n {
                    0.0
                } else {
                    let p = probs.weights()[k];
                    d_probs[k] * p * (1.0 - p)
                }
            })
            .collect();
        self.decoder.backward(cache, &dl, &mut grads.decoder)
    }
}

impl Parameters for Codebook {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.prototypes.visit(&join(prefix, "prototypes"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.prototypes.visit_mut(&join(prefix, "prototypes"), f);
        self.decoder.visit_mut(&join(prefix, "decoder"), f);
    }
}

/// Nearest prototype by Euclidean distance; ties go to the lowest index.
pub fn quantize_codebook(u: &[f64], codebook: &Codebook) -> Result<Quantized> {
    if u.len() != codebook.dim {
        return Err(ModelError::Dimension {
            what: "codebook input",
            expected: codebook.dim,
            got: u.len(),
        });
    }
    let mut best = (0, f64::INFINITY);
    for z in 0..codebook.k {
        let d = sq_dist(u, codebook.prototype(z));
        if d < best.1 {
            best = (z, d);
        }
    }
    let (index, dist) = best;
    Ok(Quantized {
        index,
        code: codebook.prototype(index).to_vec(),
        codebook_loss: dist,
        commitment_loss: codebook.commitment * dist,
    })
}

pub fn decode_code_to_graph(code: &[f64], codebook: &Codebook) -> Result<SoftGraph> {
    if code.len() != codebook.dim {
        return Err(ModelError::Dimension {
            what: "codebook code",
            expected: codebook.dim,
            got: code.len(),
        });
    }
    Ok(codebook.decode_cached(code).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn book(seed: u64) -> Codebook {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Codebook::new(16, 4, 3, 8, &mut rng)
    }

    #[test]
    fn exact_prototype_selected() {
        let cb = book(1);
        let u = cb.prototype(3).to_vec();
        let q = quantize_codebook(&u, &cb).unwrap();
        assert_eq!(q.index, 3);
        assert_eq!(q.codebook_loss, 0.0);
        assert_eq!(q.code, u);
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let mut cb = Codebook::zeros(3, 2, 2, 4);
        cb.prototype_mut(0).copy_from_slice(&[5.0, 5.0]);
        cb.prototype_mut(1).copy_from_slice(&[1.0, 0.0]);
        cb.prototype_mut(2).copy_from_slice(&[-1.0, 0.0]);
        let q = quantize_codebook(&[0.0, 0.0], &cb).unwrap();
        assert_eq!(q.index, 1);
        assert_eq!(q.codebook_loss, 1.0);
        assert_eq!(q.commitment_loss, 0.25);
    }

    #[test]
    fn zero_decoder_half_probabilities_zero_diagonal() {
        let cb = Codebook::zeros(4, 3, 3, 5);
        let g = decode_code_to_graph(&[0.3, -1.0, 2.0], &cb).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.get(i, j), if i == j { 0.0 } else { 0.5 });
            }
        }
        assert!(decode_code_to_graph(&[0.0], &cb).is_err());
    }

    proptest! {
        #[test]
        fn nearest_by_scan(seed in 0u64..200, u in prop::collection::vec(-1.0f64..1.0, 4)) {
            let cb = book(seed);
            let q = quantize_codebook(&u, &cb).unwrap();
            let scan = (0..16)
                .map(|z| sq_dist(&u, cb.prototype(z)))
                .enumerate()
                .fold((0, f64::INFINITY), |b, (z, d)| if d < b.1 { (z, d) } else { b });
            prop_assert_eq!(q.index, scan.0);
            for z in 0..16 {
                prop_assert!(q.codebook_loss <= sq_dist(&u, cb.prototype(z)));
            }
        }

        #[test]
        fn diagonal_always_zero(seed in 0u64..200, code in prop::collection::vec(-3.0f64..3.0, 4)) {
            let cb = book(seed);
            let g = decode_code_to_graph(&code, &cb).unwrap();
            for i in 0..3 {
                prop_assert_eq!(g.get(i, i), 0.0);
            }
        }
    }
}
