use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{EnvConfig, MixingKind};
use crate::physics::{ObjectState, WorldState};

/// Unmixed per-object features: position, velocity, mass, radius, one-hot type.
pub fn raw_features(obj: &ObjectState, n_types: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(6 + n_types);
    v.extend_from_slice(&obj.pos);
    v.extend_from_slice(&obj.vel);
    v.push(obj.mass);
    v.push(obj.radius);
    v.extend((0..n_types).map(|t| if t == obj.type_id { 1.0 } else { 0.0 }));
    v
}

/// Fixed invertible linear map applied to raw features, shared by all
/// objects and constant for a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixing {
    matrix: DMatrix<f64>,
}

impl Mixing {
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    /// Orthogonal factor of a seeded Gaussian matrix, with column signs
    /// fixed so the result is unique.
    pub fn orthogonal(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d69_7869_6e67);
        let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for k in 0..dim {
            if r[(k, k)] < 0.0 {
                q.column_mut(k).neg_mut();
            }
        }
        Self { matrix: q }
    }

    pub fn for_config(config: &EnvConfig) -> Self {
        match config.mixing {
            MixingKind::Identity => Self::identity(config.obs_dim()),
            MixingKind::Orthogonal => Self::orthogonal(config.obs_dim(), config.seed),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        (&self.matrix * DVector::from_column_slice(raw)).as_slice().to_vec()
    }

    /// Inverse map; the matrix is orthogonal so this is the transpose.
    pub fn unapply(&self, obs: &[f64]) -> Vec<f64> {
        (self.matrix.transpose() * DVector::from_column_slice(obs)).as_slice().to_vec()
    }

    /// Mixed features plus isotropic Gaussian noise of std `noise`.
    pub fn observe<R: Rng + ?Sized>(&self, state: &WorldState, n_types: usize, noise: f64, rng: &mut R) -> Vec<Vec<f64>> {
        state
            .objects
            .iter()
            .map(|o| {
                let mut y = self.apply(&raw_features(o, n_types));
                if noise > 0.0 {
                    for v in &mut y {
                        let e: f64 = StandardNormal.sample(rng);
                        *v += noise * e;
                    }
                }
                y
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_state() -> WorldState {
        WorldState {
            objects: vec![
                ObjectState { pos: [0.2, 0.3], vel: [0.1, -0.2], mass: 2.0, radius: 0.05, type_id: 1 },
                ObjectState { pos: [0.7, 0.6], vel: [0.0, 0.4], mass: 1.0, radius: 0.07, type_id: 2 },
            ],
            step: 0,
        }
    }

    #[test]
    fn identity_noiseless_is_raw() {
        let s = sample_state();
        let m = Mixing::identity(9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o = m.observe(&s, 3, 0.0, &mut rng);
        assert_eq!(o[0], vec![0.2, 0.3, 0.1, -0.2, 2.0, 0.05, 0.0, 1.0, 0.0]);
        assert_eq!(o[1], raw_features(&s.objects[1], 3));
    }

    #[test]
    fn seeded_map_is_deterministic_and_orthogonal() {
        let a = Mixing::orthogonal(9, 42);
        let b = Mixing::orthogonal(9, 42);
        assert_eq!(a, b);
        assert_ne!(a, Mixing::orthogonal(9, 43));
        let qtq = a.matrix().transpose() * a.matrix();
        assert!((qtq - DMatrix::<f64>::identity(9, 9)).abs().max() < 1e-12);
        let s = sample_state();
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(99);
        assert_eq!(a.observe(&s, 3, 0.0, &mut r1), a.observe(&s, 3, 0.0, &mut r2));
        let raw = raw_features(&s.objects[0], 3);
        let back = a.unapply(&a.apply(&raw));
        assert!(back.iter().zip(&raw).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn noise_std_matches() {
        let s = sample_state();
        let m = Mixing::identity(9);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let raw = raw_features(&s.objects[0], 3);
        let mut sum = [0.0; 9];
        let mut sq = [0.0; 9];
        for _ in 0..n {
            let o = m.observe(&s, 3, 0.01, &mut rng);
            for k in 0..9 {
                let e = o[0][k] - raw[k];
                sum[k] += e;
                sq[k] += e * e;
            }
        }
        for k in 0..9 {
            let mean = sum[k] / n as f64;
            let sd = (sq[k] / n as f64 - mean * mean).sqrt();
            assert!((sd - 0.01).abs() < 0.001, "coord {k}: {sd}");
        }
    }
}
