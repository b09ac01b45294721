//! Closed-form probability helpers and their derivatives.

use rand::Rng;

use crate::{check_len, NumError, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub fn sigmoid(x: f64) -> f64 {
    crate::dense::sigmoid(x)
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// Backward of `y = softmax(z)`: returns `dz` for upstream `dy`.
pub fn softmax_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    y.iter().zip(dy).map(|(yk, dyk)| yk * (dyk - dot)).collect()
}

/// Standard Gumbel draws by inverse CDF, `g = -ln(-ln u)`.
pub fn gumbel_noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            -(-u.ln()).ln()
        })
        .collect()
}

/// `softmax((logits + noise) / temperature)`.
pub fn gumbel_softmax(logits: &[f64], temperature: f64, noise: &[f64]) -> Result<Vec<f64>> {
    if !(temperature > 0.0) {
        return Err(NumError::InvalidArgument(format!(
            "gumbel-softmax temperature must be positive, got {temperature}"
        )));
    }
    check_len("gumbel noise", logits.len(), noise.len())?;
    let z: Vec<f64> = logits
        .iter()
        .zip(noise)
        .map(|(l, g)| (l + g) / temperature)
        .collect();
    Ok(softmax(&z))
}

/// Gradient of a gumbel-softmax output with respect to its logits.
pub fn gumbel_softmax_backward(y: &[f64], temperature: f64, dy: &[f64]) -> Vec<f64> {
    softmax_backward(y, dy)
        .into_iter()
        .map(|v| v / temperature)
        .collect()
}

fn check_std(what: &str, s: &[f64]) -> Result<()> {
    if let Some(k) = s.iter().position(|v| !(*v > 0.0)) {
        return Err(NumError::InvalidArgument(format!(
            "{what} std entry {k} must be positive, got {}",
            s[k]
        )));
    }
    Ok(())
}

/// `KL(N(mean1, std1^2) || N(mean2, std2^2))` for diagonal Gaussians, summed
/// over dimensions.
pub fn gaussian_kl(mean1: &[f64], std1: &[f64], mean2: &[f64], std2: &[f64]) -> Result<f64> {
    let n = mean1.len();
    check_len("kl std1", n, std1.len())?;
    check_len("kl mean2", n, mean2.len())?;
    check_len("kl std2", n, std2.len())?;
    check_std("kl first", std1)?;
    check_std("kl second", std2)?;
    Ok((0..n)
        .map(|k| gaussian_kl_1d(mean1[k], std1[k], mean2[k], std2[k]))
        .sum())
}

#[inline]
pub fn gaussian_kl_1d(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    let d = m1 - m2;
    (s2 / s1).ln() + (s1 * s1 + d * d) / (2.0 * s2 * s2) - 0.5
}

/// Partial derivatives of the 1-D KL with respect to `(m1, s1, m2, s2)`.
#[inline]
pub fn gaussian_kl_1d_grad(m1: f64, s1: f64, m2: f64, s2: f64) -> [f64; 4] {
    let d = m1 - m2;
    let v2 = s2 * s2;
    [
        d / v2,
        -1.0 / s1 + s1 / v2,
        -d / v2,
        1.0 / s2 - (s1 * s1 + d * d) / (v2 * s2),
    ]
}

/// Log-density of a diagonal Gaussian.
pub fn gaussian_log_density(x: &[f64], mean: &[f64], std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(std)
        .map(|((x, m), s)| {
            let z = (x - m) / s;
            -0.5 * z * z - s.ln() - 0.5 * LN_2PI
        })
        .sum()
}

/// `KL(Bernoulli(q) || Bernoulli(p))` with the `0 ln 0 = 0` convention.
pub fn bernoulli_kl(q: f64, p: f64) -> f64 {
    let term = |a: f64, b: f64| if a <= 0.0 { 0.0 } else { a * (a / b).ln() };
    term(q, p) + term(1.0 - q, 1.0 - p)
}

/// Derivative of [`bernoulli_kl`] with respect to `q`, for `q` in (0, 1).
pub fn bernoulli_kl_grad(q: f64, p: f64) -> f64 {
    (q / p).ln() - ((1.0 - q) / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gumbel_softmax_closed_forms() {
        for tau in [0.1, 1.0, 5.0] {
            let y = gumbel_softmax(&[0.0, 0.0], tau, &[0.0, 0.0]).unwrap();
            assert_eq!(y, vec![0.5, 0.5]);
        }
        let y = gumbel_softmax(&[3f64.ln(), 0.0], 1.0, &[0.0, 0.0]).unwrap();
        assert!((y[0] - 0.75).abs() < 1e-12 && (y[1] - 0.25).abs() < 1e-12);
        let y = gumbel_softmax(&[1.0, 0.0], 0.01, &[0.0, 0.0]).unwrap();
        assert!(y[0] >= 0.99);
    }

    #[test]
    fn gumbel_softmax_rejects_bad_temperature() {
        assert!(gumbel_softmax(&[0.0, 1.0], 0.0, &[0.0, 0.0]).is_err());
        assert!(gumbel_softmax(&[0.0, 1.0], -1.0, &[0.0, 0.0]).is_err());
        assert!(gumbel_softmax(&[0.0, 1.0], 1.0, &[0.0]).is_err());
    }

    #[test]
    fn gumbel_softmax_gradient_matches_differences() {
        let logits = [0.3, -1.2, 0.7];
        let noise = [0.1, 0.5, -0.4];
        let dy = [1.0, -2.0, 0.5];
        let tau = 0.7;
        let y = gumbel_softmax(&logits, tau, &noise).unwrap();
        let g = gumbel_softmax_backward(&y, tau, &dy);
        let f = |l: &[f64]| -> f64 {
            gumbel_softmax(l, tau, &noise)
                .unwrap()
                .iter()
                .zip(&dy)
                .map(|(a, b)| a * b)
                .sum()
        };
        for k in 0..3 {
            let mut p = logits;
            p[k] += 1e-6;
            let mut m = logits;
            m[k] -= 1e-6;
            let fd = (f(&p) - f(&m)) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn gaussian_kl_closed_forms() {
        assert_eq!(gaussian_kl(&[0.3], &[1.7], &[0.3], &[1.7]).unwrap(), 0.0);
        assert!((gaussian_kl(&[1.0], &[1.0], &[0.0], &[1.0]).unwrap() - 0.5).abs() < 1e-15);
        let expected = (0.5f64).ln() + 4.0 / 2.0 - 0.5;
        assert!((gaussian_kl(&[0.0], &[2.0], &[0.0], &[1.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.8069).abs() < 1e-4);
    }

    #[test]
    fn gaussian_kl_rejects_non_positive_std() {
        assert!(gaussian_kl(&[0.0], &[0.0], &[0.0], &[1.0]).is_err());
        assert!(gaussian_kl(&[0.0], &[1.0], &[0.0], &[-1.0]).is_err());
    }

    #[test]
    fn gaussian_kl_gradient() {
        let (m1, s1, m2, s2) = (0.4, 0.7, -0.2, 1.3);
        let g = gaussian_kl_1d_grad(m1, s1, m2, s2);
        let h = 1e-6;
        let args = [m1, s1, m2, s2];
        for k in 0..4 {
            let mut p = args;
            p[k] += h;
            let mut m = args;
            m[k] -= h;
            let fd = (gaussian_kl_1d(p[0], p[1], p[2], p[3]) - gaussian_kl_1d(m[0], m[1], m[2], m[3])) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn bernoulli_kl_values() {
        assert_eq!(bernoulli_kl(0.1, 0.1), 0.0);
        assert!((bernoulli_kl(1.0, 0.1) - 10f64.ln()).abs() < 1e-12);
        assert!((bernoulli_kl(1.0, 0.1) - std::f64::consts::LN_10).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn gumbel_softmax_is_distribution(
            logits in proptest::collection::vec(-50.0f64..50.0, 2..6),
            tau in 0.01f64..10.0,
            seed in 0u64..1000,
        ) {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let noise = gumbel_noise(logits.len(), &mut rng);
            let y = gumbel_softmax(&logits, tau, &noise).unwrap();
            let s: f64 = y.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(y.iter().all(|v| *v >= 0.0 && *v <= 1.0));
        }

        #[test]
        fn gaussian_kl_non_negative(
            m1 in -5.0f64..5.0, s1 in 0.05f64..5.0, m2 in -5.0f64..5.0, s2 in 0.05f64..5.0,
        ) {
            let kl = gaussian_kl(&[m1], &[s1], &[m2], &[s2]).unwrap();
            prop_assert!(kl >= -1e-12);
            if (m1 - m2).abs() > 1e-3 || (s1 / s2).ln().abs() > 1e-3 {
                prop_assert!(kl > 0.0);
            }
        }
    }
}
