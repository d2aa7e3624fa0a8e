//! Reference implementations shared by the integration tests. They follow the
//! textbook definitions directly and share no code with the library.

#![allow(dead_code)]

use gaitasym::tfa::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mean SSIM with an explicit 2-D Gaussian window, two-term form
/// `((2 mx my + C1)(2 sxy + C2)) / ((mx^2 + my^2 + C1)(sx^2 + sy^2 + C2))`
/// with window moments computed about the local means.
pub fn mssim_reference(x: &GrayImage, y: &GrayImage, window: usize, sigma: f64) -> f64 {
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let c = (window as f64 - 1.0) / 2.0;
    let mut w = vec![vec![0.0; window]; window];
    let mut total = 0.0;
    for (i, row) in w.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let r2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            *v = (-r2 / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    let (width, height) = x.dims();
    let mut sum = 0.0;
    let mut count = 0;
    for x0 in 0..=width - window {
        for y0 in 0..=height - window {
            let cells = || {
                (0..window).flat_map(move |i| (0..window).map(move |j| (i, j)))
            };
            let wt = |i: usize, j: usize| w[i][j] / total;
            let mx: f64 = cells().map(|(i, j)| wt(i, j) * x.get(x0 + i, y0 + j)).sum();
            let my: f64 = cells().map(|(i, j)| wt(i, j) * y.get(x0 + i, y0 + j)).sum();
            let sxx: f64 = cells().map(|(i, j)| wt(i, j) * (x.get(x0 + i, y0 + j) - mx).powi(2)).sum();
            let syy: f64 = cells().map(|(i, j)| wt(i, j) * (y.get(x0 + i, y0 + j) - my).powi(2)).sum();
            let sxy: f64 = cells()
                .map(|(i, j)| wt(i, j) * (x.get(x0 + i, y0 + j) - mx) * (y.get(x0 + i, y0 + j) - my))
                .sum();
            sum += ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
            count += 1;
        }
    }
    sum / count as f64
}

/// Bernoulli log-likelihood of `b` (intercept first) on raw features.
pub fn logistic_loglik(x: &[Vec<f64>], y: &[bool], b: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let eta = b[0] + xi.iter().zip(&b[1..]).map(|(a, c)| a * c).sum::<f64>();
            let log1pexp = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
            if yi { eta - log1pexp } else { -log1pexp }
        })
        .sum()
}

/// Maximizes the logistic likelihood by plain gradient ascent with a fixed
/// step below the curvature bound, run until the gradient vanishes.
pub fn logistic_gradient_ascent(x: &[Vec<f64>], y: &[bool]) -> Vec<f64> {
    let d = x[0].len();
    // ||X^T X|| / 4 bounds the Hessian; Frobenius norm is a safe overestimate
    let mut frob = 0.0;
    for a in 0..=d {
        for c in 0..=d {
            let s: f64 = x
                .iter()
                .map(|xi| {
                    let va = if a == 0 { 1.0 } else { xi[a - 1] };
                    let vc = if c == 0 { 1.0 } else { xi[c - 1] };
                    va * vc
                })
                .sum();
            frob += s * s;
        }
    }
    let step = 4.0 / frob.sqrt();
    let mut b = vec![0.0; d + 1];
    for _ in 0..5_000_000 {
        let mut g = vec![0.0; d + 1];
        for (xi, &yi) in x.iter().zip(y) {
            let eta = b[0] + xi.iter().zip(&b[1..]).map(|(a, c)| a * c).sum::<f64>();
            let p = 1.0 / (1.0 + (-eta).exp());
            let r = if yi { 1.0 } else { 0.0 } - p;
            g[0] += r;
            for k in 0..d {
                g[k + 1] += r * xi[k];
            }
        }
        if g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-11 {
            break;
        }
        for k in 0..=d {
            b[k] += step * g[k];
        }
    }
    b
}

/// Smooth random image: a sum of Gaussian blobs plus a small offset.
pub fn blob_image(width: usize, height: usize, blobs: usize, rng: &mut impl Rng) -> GrayImage {
    let centres: Vec<(f64, f64, f64, f64)> = (0..blobs)
        .map(|_| {
            (
                rng.random_range(0.0..width as f64),
                rng.random_range(0.0..height as f64),
                rng.random_range(1.5..6.0),
                rng.random_range(0.2..0.8),
            )
        })
        .collect();
    GrayImage::from_fn(width, height, |x, y| {
        0.05 + centres
            .iter()
            .map(|&(cx, cy, s, a)| {
                a * (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (2.0 * s * s)).exp()
            })
            .sum::<f64>()
    })
}

pub fn uniform_image(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GrayImage::from_fn(width, height, |_, _| rng.random::<f64>())
}

/// 20 samples, 2 predictors, overlapping classes.
pub fn mle_fixture() -> (Vec<Vec<f64>>, Vec<bool>) {
    let data: [(f64, f64, bool); 20] = [
        (0.12, 1.40, false),
        (0.25, -0.30, false),
        (0.31, 0.85, false),
        (0.44, -1.10, true),
        (0.18, 0.20, false),
        (0.52, 0.65, false),
        (0.63, -0.45, true),
        (0.71, 1.05, true),
        (0.39, -0.95, false),
        (0.85, 0.10, true),
        (0.92, -1.60, true),
        (0.28, -1.25, true),
        (0.57, 1.70, false),
        (0.66, -0.05, false),
        (0.77, -0.80, true),
        (0.09, 0.55, false),
        (0.48, 0.30, true),
        (0.81, 1.35, false),
        (0.35, -0.15, false),
        (0.95, 0.75, true),
    ];
    let x = data.iter().map(|&(a, b, _)| vec![a, b]).collect();
    let y = data.iter().map(|&(_, _, l)| l).collect();
    (x, y)
}

/// `n` samples of eight independent N(0, 1) features where only `R_M` and
/// `MSSIM` (indices 2 and 6) drive the label, with log-odds `x_2 - x_6`.
pub fn planted_sample(n: usize, seed: u64) -> (Vec<[f64; 8]>, Vec<bool>) {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: [f64; 8] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let p = 1.0 / (1.0 + (-(x[2] - x[6])).exp());
        labels.push(rng.random::<f64>() < p);
        rows.push(x);
    }
    (rows, labels)
}
