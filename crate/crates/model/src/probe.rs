//! Closed-form ridge probes from latent parts to ground-truth attributes.

use fioc_env::{EpisodeRecord, ObjectState};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::wm::WorldModel;
use crate::{ModelError, Result};

pub const RIDGE_LAMBDA: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Held-out MSE per target column.
    pub per_column: Vec<f64>,
    /// Mean over columns.
    pub mse: f64,
    /// The regularized normal matrix was numerically singular before the
    /// ridge term.
    pub rank_deficient: bool,
}

/// Fit `y ~ W x + b` on the train split by ridge regression and report the
/// held-out MSE.
pub fn linear_probe(train_x: &[Vec<f64>], train_y: &[Vec<f64>], test_x: &[Vec<f64>], test_y: &[Vec<f64>]) -> Result<ProbeReport> {
    let n = train_x.len();
    let p = train_x.first().map_or(0, Vec::len);
    let q = train_y.first().map_or(0, Vec::len);
    if n != train_y.len() || test_x.len() != test_y.len() || test_x.is_empty() {
        return Err(ModelError::InvalidArgument("probe splits must be non-empty and aligned".into()));
    }
    if n < 2 * (p + 1) {
        return Err(ModelError::InvalidArgument(format!(
            "probe needs at least {} training samples for {p} features, got {n}",
            2 * (p + 1)
        )));
    }
    let rows_ok = |xs: &[Vec<f64>], k: usize| xs.iter().all(|r| r.len() == k);
    if !rows_ok(train_x, p) || !rows_ok(test_x, p) || !rows_ok(train_y, q) || !rows_ok(test_y, q) {
        return Err(ModelError::InvalidArgument("probe rows have inconsistent widths".into()));
    }
    let design = |xs: &[Vec<f64>]| DMatrix::from_fn(xs.len(), p + 1, |r, c| if c < p { xs[r][c] } else { 1.0 });
    let x = design(train_x);
    let y = DMatrix::from_fn(n, q, |r, c| train_y[r][c]);
    let xtx = x.transpose() * &x;
    let eig = xtx.clone().symmetric_eigenvalues();
    let max_eig = eig.iter().cloned().fold(0.0, f64::max);
    let min_eig = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let rank_deficient = min_eig <= 1e-12 * max_eig.max(1e-300);
    let reg = xtx + DMatrix::identity(p + 1, p + 1) * RIDGE_LAMBDA;
    let chol = reg
        .cholesky()
        .ok_or_else(|| ModelError::InvalidArgument("ridge system is not positive definite".into()))?;
    let w = chol.solve(&(x.transpose() * y));
    let xt = design(test_x);
    let pred = xt * w;
    let per_column: Vec<f64> = (0..q)
        .map(|c| {
            let col = DVector::from_fn(test_y.len(), |r, _| test_y[r][c]);
            (pred.column(c) - col).norm_squared() / test_y.len() as f64
        })
        .collect();
    let mse = per_column.iter().sum::<f64>() / q.max(1) as f64;
    Ok(ProbeReport { per_column, mse, rank_deficient })
}

/// Ground-truth attribute groups probed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Attribute {
    Position,
    Velocity,
    MassRadius,
    Type,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [Attribute::Position, Attribute::Velocity, Attribute::MassRadius, Attribute::Type];

    pub fn is_dynamic(self) -> bool {
        matches!(self, Attribute::Position | Attribute::Velocity)
    }

    pub fn values(self, o: &ObjectState, n_types: usize) -> Vec<f64> {
        match self {
            Attribute::Position => o.pos.to_vec(),
            Attribute::Velocity => o.vel.to_vec(),
            Attribute::MassRadius => vec![o.mass, o.radius],
            Attribute::Type => (0..n_types).map(|k| if k == o.type_id { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Per-object samples of filtered latents and the matching true state.
#[derive(Debug, Clone)]
pub struct ProbeSample {
    pub s: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub object: ObjectState,
}

pub fn probe_samples(model: &WorldModel, episodes: &[EpisodeRecord]) -> Result<Vec<ProbeSample>> {
    let mut out = Vec::new();
    for ep in episodes {
        let f = model.filter_episode(ep)?;
        for (t, step) in ep.steps.iter().enumerate() {
            for (i, o) in step.gt_state.iter().enumerate() {
                out.push(ProbeSample {
                    s: f.s[t][i].clone(),
                    c: f.c[t][i].clone(),
                    d: f.d[t][i].clone(),
                    object: o.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Held-out MSE of probes from `c` and from `d` onto z-scored dynamic
/// (position, velocity) and static (mass, radius, type) targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorizationReport {
    pub c_to_dynamic: f64,
    pub d_to_dynamic: f64,
    pub c_to_static: f64,
    pub d_to_static: f64,
}

impl FactorizationReport {
    /// `d` explains dynamics better than `c`, and `c` explains statics
    /// better than `d`.
    pub fn ordered(&self) -> bool {
        self.d_to_dynamic < self.c_to_dynamic && self.c_to_static < self.d_to_static
    }
}

fn targets(samples: &[ProbeSample], dynamic: bool, n_types: usize) -> Vec<Vec<f64>> {
    samples
        .iter()
        .map(|s| {
            Attribute::ALL
                .iter()
                .filter(|a| a.is_dynamic() == dynamic)
                .flat_map(|a| a.values(&s.object, n_types))
                .collect()
        })
        .collect()
}

/// Standardize columns with the statistics of `train`; constant columns are
/// only centred.
fn zscore(train: &[Vec<f64>], test: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let q = train[0].len();
    let n = train.len() as f64;
    let mean: Vec<f64> = (0..q).map(|c| train.iter().map(|r| r[c]).sum::<f64>() / n).collect();
    let std: Vec<f64> = (0..q)
        .map(|c| {
            let v = train.iter().map(|r| (r[c] - mean[c]).powi(2)).sum::<f64>() / n;
            if v > 1e-24 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let apply = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| r.iter().enumerate().map(|(c, v)| (v - mean[c]) / std[c]).collect())
            .collect()
    };
    (apply(train), apply(test))
}

pub fn factorization_probe(train: &[ProbeSample], test: &[ProbeSample], n_types: usize) -> Result<FactorizationReport> {
    if train.is_empty() || test.is_empty() {
        return Err(ModelError::InvalidArgument("probe needs non-empty splits".into()));
    }
    let feats = |s: &[ProbeSample], use_c: bool| -> Vec<Vec<f64>> {
        s.iter().map(|x| if use_c { x.c.clone() } else { x.d.clone() }).collect()
    };
    let (dyn_tr, dyn_te) = zscore(&targets(train, true, n_types), &targets(test, true, n_types));
    let (st_tr, st_te) = zscore(&targets(train, false, n_types), &targets(test, false, n_types));
    let (c_tr, c_te) = (feats(train, true), feats(test, true));
    let (d_tr, d_te) = (feats(train, false), feats(test, false));
    Ok(FactorizationReport {
        c_to_dynamic: linear_probe(&c_tr, &dyn_tr, &c_te, &dyn_te)?.mse,
        d_to_dynamic: linear_probe(&d_tr, &dyn_tr, &d_te, &dyn_te)?.mse,
        c_to_static: linear_probe(&c_tr, &st_tr, &c_te, &st_te)?.mse,
        d_to_static: linear_probe(&d_tr, &st_tr, &d_te, &st_te)?.mse,
    })
}

/// Latent part used as probe input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeFeatures {
    C,
    D,
    S,
}

/// Target group of a probe-table cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeTarget {
    Position,
    Velocity,
    Static,
}

impl ProbeTarget {
    fn values(self, o: &ObjectState, n_types: usize) -> Vec<f64> {
        match self {
            ProbeTarget::Position => Attribute::Position.values(o, n_types),
            ProbeTarget::Velocity => Attribute::Velocity.values(o, n_types),
            ProbeTarget::Static => {
                let mut v = Attribute::MassRadius.values(o, n_types);
                v.extend(Attribute::Type.values(o, n_types));
                v
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeCell {
    pub features: ProbeFeatures,
    pub target: ProbeTarget,
    pub mse: f64,
}

/// Held-out MSE for every pairing of {c, d, s} with {position, velocity,
/// static}, targets z-scored with train statistics.
pub fn probe_table(train: &[ProbeSample], test: &[ProbeSample], n_types: usize) -> Result<Vec<ProbeCell>> {
    if train.is_empty() || test.is_empty() {
        return Err(ModelError::InvalidArgument("probe needs non-empty splits".into()));
    }
    let mut out = Vec::with_capacity(9);
    for features in [ProbeFeatures::C, ProbeFeatures::D, ProbeFeatures::S] {
        let feats = |v: &[ProbeSample]| -> Vec<Vec<f64>> {
            v.iter()
                .map(|x| match features {
                    ProbeFeatures::C => x.c.clone(),
                    ProbeFeatures::D => x.d.clone(),
                    ProbeFeatures::S => x.s.clone(),
                })
                .collect()
        };
        for target in [ProbeTarget::Position, ProbeTarget::Velocity, ProbeTarget::Static] {
            let ys = |v: &[ProbeSample]| -> Vec<Vec<f64>> { v.iter().map(|x| target.values(&x.object, n_types)).collect() };
            let (ytr, yte) = zscore(&ys(train), &ys(test));
            let mse = linear_probe(&feats(train), &ytr, &feats(test), &yte)?.mse;
            out.push(ProbeCell { features, target, mse });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_rows(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..k).map(|_| StandardNormal.sample(rng)).collect()).collect()
    }

    #[test]
    fn identity_features_give_zero_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = gaussian_rows(200, 3, &mut rng);
        let xt = gaussian_rows(50, 3, &mut rng);
        let r = linear_probe(&x, &x, &xt, &xt).unwrap();
        assert!(r.mse < 1e-12, "{}", r.mse);
        assert!(!r.rank_deficient);
    }

    #[test]
    fn noise_features_give_target_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian_rows(4000, 4, &mut rng);
        let xt = gaussian_rows(4000, 4, &mut rng);
        let y: Vec<Vec<f64>> = (0..4000).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); vec![2.0 * z] }).collect();
        let yt: Vec<Vec<f64>> = (0..4000).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); vec![2.0 * z] }).collect();
        let r = linear_probe(&x, &y, &xt, &yt).unwrap();
        assert!((r.mse - 4.0).abs() < 0.3, "{}", r.mse);
    }

    #[test]
    fn duplicate_columns_flagged_but_solved() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                let v: f64 = rng.random_range(-1.0..1.0);
                vec![v, v]
            })
            .collect();
        let y: Vec<Vec<f64>> = x.iter().map(|r| vec![3.0 * r[0]]).collect();
        let r = linear_probe(&x, &y, &x, &y).unwrap();
        assert!(r.rank_deficient);
        assert!(r.mse < 1e-8);
    }

    #[test]
    fn too_few_samples_rejected() {
        let x = vec![vec![0.0; 5]; 6];
        assert!(linear_probe(&x, &x, &x, &x).is_err());
    }

    #[test]
    fn zscore_uses_train_statistics() {
        let (a, b) = zscore(&[vec![1.0, 5.0], vec![3.0, 5.0]], &[vec![5.0, 6.0]]);
        assert_eq!(a, vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(b, vec![vec![3.0, 1.0]]);
    }

    fn sample(rng: &mut ChaCha8Rng) -> ProbeSample {
        let object = ObjectState {
            pos: [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)],
            vel: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            mass: [1.0, 2.0, 3.0][rng.random_range(0..3)],
            radius: [0.05, 0.07][rng.random_range(0..2)],
            type_id: rng.random_range(0..3),
        };
        let statics = ProbeTarget::Static.values(&object, 3);
        let d = [object.pos.to_vec(), object.vel.to_vec()].concat();
        ProbeSample { s: [statics.clone(), d.clone()].concat(), c: statics, d, object }
    }

    #[test]
    fn table_has_nine_cells_and_exact_features_score_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let train: Vec<ProbeSample> = (0..300).map(|_| sample(&mut rng)).collect();
        let test: Vec<ProbeSample> = (0..100).map(|_| sample(&mut rng)).collect();
        let t = probe_table(&train, &test, 3).unwrap();
        assert_eq!(t.len(), 9);
        let get = |f, g| t.iter().find(|c| c.features == f && c.target == g).unwrap().mse;
        assert!(get(ProbeFeatures::C, ProbeTarget::Static) < 1e-8);
        assert!(get(ProbeFeatures::D, ProbeTarget::Position) < 1e-12);
        assert!(get(ProbeFeatures::S, ProbeTarget::Velocity) < 1e-12);
        // independent draws: d carries nothing about statics
        assert!(get(ProbeFeatures::D, ProbeTarget::Static) > 0.5);
    }
}
