use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::dense::sigmoid;
use crate::params::{join, Parameters};

/// Gated recurrent unit:
///
/// ```text
/// z  = sigmoid(Wz x + Uz h + bz)
/// r  = sigmoid(Wr x + Ur h + br)
/// n  = tanh(Wn x + bn + r * (Un h + bun))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub input: usize,
    pub hidden: usize,
    /// `[Wz; Wr; Wn]`, row-major `3H x I`.
    pub w: Vec<f64>,
    /// `[Uz; Ur; Un]`, row-major `3H x H`.
    pub u: Vec<f64>,
    /// `[bz; br; bn]`.
    pub b: Vec<f64>,
    pub bun: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GruCache {
    x: Vec<f64>,
    h: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    uh_n: Vec<f64>,
}

impl GruCell {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w: vec![0.0; 3 * hidden * input],
            u: vec![0.0; 3 * hidden * hidden],
            b: vec![0.0; 3 * hidden],
            bun: vec![0.0; hidden],
        }
    }

    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let mut cell = Self::zeros(input, hidden);
        let limit = 1.0 / (hidden as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        cell.w.iter_mut().for_each(|v| *v = dist.sample(rng));
        cell.u.iter_mut().for_each(|v| *v = dist.sample(rng));
        cell
    }

    fn matvec(m: &[f64], cols: usize, row0: usize, rows: usize, v: &[f64], out: &mut [f64]) {
        for r in 0..rows {
            let row = &m[(row0 + r) * cols..(row0 + r + 1) * cols];
            out[r] += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn forward(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        self.forward_cached(x, h).0
    }

    pub fn forward_cached(&self, x: &[f64], h: &[f64]) -> (Vec<f64>, GruCache) {
        let hd = self.hidden;
        debug_assert_eq!(x.len(), self.input);
        debug_assert_eq!(h.len(), hd);
        let mut z = self.b[..hd].to_vec();
        let mut r = self.b[hd..2 * hd].to_vec();
        let mut n = self.b[2 * hd..].to_vec();
        let mut uh_n = self.bun.clone();
        Self::matvec(&self.w, self.input, 0, hd, x, &mut z);
        Self::matvec(&self.u, hd, 0, hd, h, &mut z);
        Self::matvec(&self.w, self.input, hd, hd, x, &mut r);
        Self::matvec(&self.u, hd, hd, hd, h, &mut r);
        Self::matvec(&self.w, self.input, 2 * hd, hd, x, &mut n);
        Self::matvec(&self.u, hd, 2 * hd, hd, h, &mut uh_n);
        z.iter_mut().for_each(|v| *v = sigmoid(*v));
        r.iter_mut().for_each(|v| *v = sigmoid(*v));
        for k in 0..hd {
            n[k] = (n[k] + r[k] * uh_n[k]).tanh();
        }
        let out = (0..hd).map(|k| (1.0 - z[k]) * n[k] + z[k] * h[k]).collect();
        (
            out,
            GruCache {
                x: x.to_vec(),
                h: h.to_vec(),
                z,
                r,
                n,
                uh_n,
            },
        )
    }

    /// Returns `(dx, dh)`; parameter gradients accumulate into `grads`.
    pub fn backward(&self, cache: &GruCache, dout: &[f64], grads: &mut GruCell) -> (Vec<f64>, Vec<f64>) {
        let hd = self.hidden;
        let ni = self.input;
        let mut dx = vec![0.0; ni];
        let mut dh = vec![0.0; hd];
        // pre-activation gradients for the three gate blocks
        let mut dpre = vec![0.0; 3 * hd];
        let mut duh_n = vec![0.0; hd];
        for k in 0..hd {
            let (z, r, n) = (cache.z[k], cache.r[k], cache.n[k]);
            let g = dout[k];
            dh[k] += g * z;
            let dz = g * (cache.h[k] - n);
            let dn = g * (1.0 - z);
            let dn_pre = dn * (1.0 - n * n);
            let dr = dn_pre * cache.uh_n[k];
            duh_n[k] = dn_pre * r;
            dpre[k] = dz * z * (1.0 - z);
            dpre[hd + k] = dr * r * (1.0 - r);
            dpre[2 * hd + k] = dn_pre;
        }
        for row in 0..3 * hd {
            let d = dpre[row];
            grads.b[row] += d;
            if d == 0.0 {
                continue;
            }
            let wr = &self.w[row * ni..(row + 1) * ni];
            let gw = &mut grads.w[row * ni..(row + 1) * ni];
            for c in 0..ni {
                gw[c] += d * cache.x[c];
                dx[c] += d * wr[c];
            }
        }
        // hidden-side rows: z and r use dpre, n uses duh_n
        for row in 0..3 * hd {
            let d = if row < 2 * hd { dpre[row] } else { duh_n[row - 2 * hd] };
            if row >= 2 * hd {
                grads.bun[row - 2 * hd] += d;
            }
            if d == 0.0 {
                continue;
            }
            let ur = &self.u[row * hd..(row + 1) * hd];
            let gu = &mut grads.u[row * hd..(row + 1) * hd];
            for c in 0..hd {
                gu[c] += d * cache.h[c];
                dh[c] += d * ur[c];
            }
        }
        (dx, dh)
    }
}

impl Parameters for GruCell {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f(&join(prefix, "w"), &[3 * self.hidden, self.input], &self.w);
        f(&join(prefix, "u"), &[3 * self.hidden, self.hidden], &self.u);
        f(&join(prefix, "b"), &[3 * self.hidden], &self.b);
        f(&join(prefix, "bun"), &[self.hidden], &self.bun);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        f(&join(prefix, "w"), &[3 * self.hidden, self.input], &mut self.w);
        f(&join(prefix, "u"), &[3 * self.hidden, self.hidden], &mut self.u);
        f(&join(prefix, "b"), &[3 * self.hidden], &mut self.b);
        f(&join(prefix, "bun"), &[self.hidden], &mut self.bun);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{flatten, unflatten, zeros_like};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_everything_gives_zero_hidden() {
        let cell = GruCell::zeros(3, 4);
        assert_eq!(cell.forward(&[0.0; 3], &[0.0; 4]), vec![0.0; 4]);
    }

    #[test]
    fn hidden_dimension_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cell = GruCell::new(2, 5, &mut rng);
        let mut h = vec![0.0; 5];
        for t in 0..10 {
            h = cell.forward(&[t as f64 * 0.1, -0.3], &h);
            assert_eq!(h.len(), 5);
        }
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let mut cell = GruCell::new(3, 4, &mut rng);
            cell.b.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            cell.bun.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let loss = |c: &GruCell, x: &[f64], h: &[f64]| -> f64 {
                c.forward(x, h).iter().zip(&w).map(|(a, b)| a * b).sum()
            };
            let (_, cache) = cell.forward_cached(&x, &h);
            let mut grads = zeros_like(&cell);
            let (dx, dh) = cell.backward(&cache, &w, &mut grads);
            let analytic = flatten(&grads);
            let base = flatten(&cell);
            let eps = 1e-5;
            for k in 0..base.len() {
                let mut p = base.clone();
                p[k] += eps;
                let mut plus = cell.clone();
                unflatten(&mut plus, &p).unwrap();
                p[k] -= 2.0 * eps;
                let mut minus = cell.clone();
                unflatten(&mut minus, &p).unwrap();
                let fd = (loss(&plus, &x, &h) - loss(&minus, &x, &h)) / (2.0 * eps);
                let err = (fd - analytic[k]).abs() / fd.abs().max(analytic[k].abs()).max(1e-3);
                assert!(err < 1e-6, "param {k}: {fd} vs {}", analytic[k]);
            }
            for k in 0..3 {
                let mut xp = x.clone();
                xp[k] += eps;
                let mut xm = x.clone();
                xm[k] -= eps;
                let fd = (loss(&cell, &xp, &h) - loss(&cell, &xm, &h)) / (2.0 * eps);
                assert!((fd - dx[k]).abs() < 1e-8);
            }
            for k in 0..4 {
                let mut hp = h.clone();
                hp[k] += eps;
                let mut hm = h.clone();
                hm[k] -= eps;
                let fd = (loss(&cell, &x, &hp) - loss(&cell, &x, &hm)) / (2.0 * eps);
                assert!((fd - dh[k]).abs() < 1e-8);
            }
        }
    }
}
