//! Test-only oracles, written independently of the library's numeric paths.
#![allow(dead_code)]

use deahes::{Activation, Batch, Mlp, ModelSpec, Objective, ParamVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straight-line per-sample forward pass and mean cross-entropy. Offsets are
/// recomputed here from the layer sizes: for each layer the `(out, in)`
/// weight block, then the `out` biases.
pub fn reference_loss(sizes: &[usize], act: Activation, theta: &[f64], xs: &[Vec<f64>], ys: &[usize]) -> f64 {
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let mut a = x.clone();
        let mut off = 0;
        for l in 0..sizes.len() - 1 {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let mut z = vec![0.0; n_out];
            for o in 0..n_out {
                let mut s = theta[off + n_in * n_out + o];
                for i in 0..n_in {
                    s += theta[off + o * n_in + i] * a[i];
                }
                z[o] = s;
            }
            off += n_in * n_out + n_out;
            a = if l + 2 < sizes.len() {
                z.iter()
                    .map(|&v| match act {
                        Activation::Relu => if v > 0.0 { v } else { 0.0 },
                        Activation::Tanh => v.tanh(),
                    })
                    .collect()
            } else {
                z
            };
        }
        let mx = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = a.iter().map(|v| (v - mx).exp()).sum::<f64>().ln() + mx;
        total += lse - a[y];
    }
    total / xs.len() as f64
}

pub fn random_batch(rng: &mut ChaCha8Rng, m: usize, dim: usize, classes: usize) -> (Batch<f64>, Vec<Vec<f64>>, Vec<usize>) {
    let xs: Vec<Vec<f64>> = (0..m).map(|_| (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    let ys: Vec<usize> = (0..m).map(|_| rng.random_range(0..classes)).collect();
    let batch = Batch::new(xs.concat(), dim, ys.clone()).unwrap();
    (batch, xs, ys)
}

pub fn random_params(mlp: &Mlp, rng: &mut ChaCha8Rng, scale: f64) -> ParamVector<f64> {
    let mut p: ParamVector<f64> = mlp.init_params();
    for v in p.values_mut() {
        *v = rng.random_range(-scale..scale);
    }
    p
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mlp(sizes: &[usize], act: Activation) -> Mlp {
    Mlp::new(ModelSpec::new(sizes.to_vec(), act, 1).unwrap()).unwrap()
}

/// Central difference of the loss along each coordinate.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = t[i];
            t[i] = orig + h;
            let up = f(&t);
            t[i] = orig - h;
            let down = f(&t);
            t[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Dense Hessian, column `j` = central difference of the gradient along `e_j`.
pub fn fd_hessian<O: Objective<f64>>(obj: &O, params: &ParamVector<f64>, batch: &Batch<f64>, h: f64) -> Vec<Vec<f64>> {
    let n = params.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut plus = params.clone();
        plus.values_mut()[j] += h;
        let mut minus = params.clone();
        minus.values_mut()[j] -= h;
        let gp = obj.gradient(&plus, batch).unwrap();
        let gm = obj.gradient(&minus, batch).unwrap();
        cols.push(gp.values().iter().zip(gm.values()).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    // cols[j][i] = H[i][j]
    (0..n).map(|i| (0..n).map(|j| cols[j][i]).collect()).collect()
}

pub fn mat_vec(h: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
    h.iter().map(|row| row.iter().zip(z).map(|(a, b)| a * b).sum()).collect()
}

pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

/// Per-coordinate relative error with an absolute floor in the denominator,
/// so coordinates whose true value is ~0 are compared absolutely.
pub fn max_coord_rel(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
