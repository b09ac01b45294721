use fioc_numkit::prob::{gaussian_kl, gumbel_softmax};
use fioc_numkit::{cem_optimize, flatten, unflatten, zeros_like, Activation, CemConfig, DenseNet, GruCell};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-4)
}

/// Layer shapes of the nets in the workspace, scaled down: encoder and
/// decoder MLPs, pair encoder, transition heads, policy heads.
const SHAPES: &[&[usize]] = &[&[9, 8, 8], &[6, 8, 9], &[15, 8, 4], &[12, 8, 8, 4], &[8, 6, 6], &[4, 8, 1], &[3, 5, 2]];

fn dense_check(shape: &[usize], seed: u64) -> Result<(), TestCaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = DenseNet::new(shape, Activation::Silu, &mut rng);
    let x: Vec<f64> = (0..shape[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
    let r: Vec<f64> = (0..*shape.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |n: &DenseNet, x: &[f64]| n.forward(x).iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
    let (_, cache) = net.forward_cached(&x);
    let mut g = zeros_like(&net);
    let dx = net.backward(&cache, &r, &mut g);
    let theta = flatten(&net);
    let analytic = flatten(&g);
    let h = 1e-6;
    let mut probe = net.clone();
    // a random subset of parameters keeps 100 draws cheap
    for _ in 0..20 {
        let k = rng.random_range(0..theta.len());
        let mut p = theta.clone();
        p[k] += h;
        unflatten(&mut probe, &p).unwrap();
        let up = loss(&probe, &x);
        p[k] -= 2.0 * h;
        unflatten(&mut probe, &p).unwrap();
        let down = loss(&probe, &x);
        let fd = (up - down) / (2.0 * h);
        prop_assert!(rel_err(fd, analytic[k]) < 1e-5, "param {k}: fd {fd} vs {}", analytic[k]);
    }
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += h;
        let up = loss(&net, &xp);
        xp[i] -= 2.0 * h;
        let down = loss(&net, &xp);
        let fd = (up - down) / (2.0 * h);
        prop_assert!(rel_err(fd, dx[i]) < 1e-5, "input {i}: fd {fd} vs {}", dx[i]);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn dense_gradients_match_differences(shape in 0..SHAPES.len(), seed in any::<u64>()) {
        dense_check(SHAPES[shape], seed)?;
    }

    #[test]
    fn gru_gradients_match_differences(seed in any::<u64>(), input in 2usize..7, hidden in 2usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cell = GruCell::new(input, hidden, &mut rng);
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h0: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |c: &GruCell, x: &[f64], h: &[f64]| c.forward(x, h).iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        let (_, cache) = cell.forward_cached(&x, &h0);
        let mut g = zeros_like(&cell);
        let (dx, dh) = cell.backward(&cache, &r, &mut g);
        let theta = flatten(&cell);
        let analytic = flatten(&g);
        let eps = 1e-6;
        let mut probe = cell.clone();
        for _ in 0..20 {
            let k = rng.random_range(0..theta.len());
            let mut p = theta.clone();
            p[k] += eps;
            unflatten(&mut probe, &p).unwrap();
            let up = loss(&probe, &x, &h0);
            p[k] -= 2.0 * eps;
            unflatten(&mut probe, &p).unwrap();
            let down = loss(&probe, &x, &h0);
            let fd = (up - down) / (2.0 * eps);
            prop_assert!(rel_err(fd, analytic[k]) < 1e-5);
        }
        for i in 0..input {
            let mut xp = x.clone();
            xp[i] += eps;
            let up = loss(&cell, &xp, &h0);
            xp[i] -= 2.0 * eps;
            let fd = (up - loss(&cell, &xp, &h0)) / (2.0 * eps);
            prop_assert!(rel_err(fd, dx[i]) < 1e-5);
        }
        for i in 0..hidden {
            let mut hp = h0.clone();
            hp[i] += eps;
            let up = loss(&cell, &x, &hp);
            hp[i] -= 2.0 * eps;
            let fd = (up - loss(&cell, &x, &hp)) / (2.0 * eps);
            prop_assert!(rel_err(fd, dh[i]) < 1e-5);
        }
    }

    #[test]
    fn cem_best_value_never_increases(
        seed in any::<u64>(),
        center in prop::collection::vec(-3.0f64..3.0, 3),
        iters in 1usize..12,
    ) {
        let cfg = CemConfig { population: 24, elites: 4, iterations: iters, ..CemConfig::default() };
        let f = |x: &[f64]| x.iter().zip(&center).map(|(a, b)| (a - b).powi(2) + (3.0 * a).sin()).sum::<f64>();
        let out = cem_optimize(f, 3, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(out.history.len(), iters);
        prop_assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(out.best_value, *out.history.last().unwrap());
    }

    #[test]
    fn gaussian_kl_zero_only_at_equal_moments(
        m in prop::collection::vec(-2.0f64..2.0, 3),
        s in prop::collection::vec(0.1f64..2.0, 3),
        dm in -1.0f64..1.0,
    ) {
        prop_assert!(gaussian_kl(&m, &s, &m, &s).unwrap().abs() < 1e-12);
        let mut m2 = m.clone();
        m2[0] += dm;
        let kl = gaussian_kl(&m2, &s, &m, &s).unwrap();
        prop_assert!(kl >= 0.0);
        if dm.abs() > 1e-6 {
            prop_assert!(kl > 0.0);
        }
    }

    #[test]
    fn gumbel_softmax_sums_to_one_for_extreme_logits(
        logits in prop::collection::vec(-1e6f64..1e6, 1..6),
        t in 1e-3f64..10.0,
    ) {
        let g = vec![0.0; logits.len()];
        let y = gumbel_softmax(&logits, t, &g).unwrap();
        prop_assert!(y.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
