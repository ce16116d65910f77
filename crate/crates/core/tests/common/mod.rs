//! Reference implementations shared by the integration tests and the
//! acceptance harness. Deliberately written with plain loops and `Vec`s so
//! they share no code with the library.

#![allow(dead_code)]

use marginmix::loss::{margin_mixup_loss, ClassCenters, MarginConfig};
use marginmix::model::EmbeddingModel;
use marginmix::signal::{FeatureMatrix, Waveform};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Textbook single-target AAM-softmax: `-log softmax_y(s·cos(θ + m·[j=y]))`.
pub fn aam_reference(e: &[f64], centers: &[Vec<f64>], y: usize, m: f64, s: f64) -> f64 {
    let en = dot(e, e).sqrt();
    let logits: Vec<f64> = centers
        .iter()
        .enumerate()
        .map(|(j, w)| {
            let c = dot(e, w) / (en * dot(w, w).sqrt());
            let theta = c.acos();
            if j == y {
                s * (theta + m).cos()
            } else {
                s * c
            }
        })
        .collect();
    log_sum_exp(&logits) - logits[y]
}

/// Columns of a `D x N` matrix as vectors.
pub fn columns(w: &Array2<f64>) -> Vec<Vec<f64>> {
    w.columns().into_iter().map(|c| c.to_vec()).collect()
}

/// EER by explicit counting: FAR = share of nontargets `>= t`, FRR = share of
/// targets `< t`, evaluated at every distinct score and at `+inf`, with the
/// EER linearly interpolated at the first sign change of `FRR − FAR`.
pub fn brute_force_eer(tar: &[f64], non: &[f64]) -> f64 {
    let mut thr: Vec<f64> = tar.iter().chain(non).cloned().collect();
    thr.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thr.dedup();
    thr.push(f64::INFINITY);
    let point = |t: f64| {
        let far = non.iter().filter(|&&s| s >= t).count() as f64 / non.len() as f64;
        let frr = tar.iter().filter(|&&s| s < t).count() as f64 / tar.len() as f64;
        (far, frr)
    };
    let pts: Vec<(f64, f64)> = thr.iter().map(|&t| point(t)).collect();
    for k in 0..pts.len() {
        let (far, frr) = pts[k];
        if frr - far >= 0.0 {
            if k == 0 {
                return far;
            }
            let (pfar, pfrr) = pts[k - 1];
            let d0 = pfrr - pfar;
            let d1 = frr - far;
            let a = d0 / (d0 - d1);
            return pfar + a * (far - pfar);
        }
    }
    unreachable!("FRR reaches 1 at +inf")
}

/// Embedding by explicit loops over frames and units, with libm `tanh`.
pub fn naive_forward(m: &EmbeddingModel, f: &FeatureMatrix) -> Vec<f64> {
    let x = f.frames();
    let (t, nf) = x.dim();
    let h = m.frame_b.len();
    let mut act = vec![vec![0.0; h]; t];
    for i in 0..t {
        for k in 0..h {
            let mut z = m.frame_b[k];
            for j in 0..nf {
                z += x[[i, j]] * m.frame_w[[j, k]];
            }
            act[i][k] = z.tanh();
        }
    }
    let mut pooled = vec![0.0; 2 * h];
    for k in 0..h {
        let mean = act.iter().map(|r| r[k]).sum::<f64>() / t as f64;
        let var = act.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / t as f64;
        pooled[k] = mean;
        pooled[h + k] = (var + 1e-8).sqrt() - 1e-8f64.sqrt();
    }
    let d = m.proj_b.len();
    (0..d)
        .map(|c| m.proj_b[c] + (0..2 * h).map(|r| pooled[r] * m.proj_w[[r, c]]).sum::<f64>())
        .collect()
}

/// Central difference `(f(x+h) − f(x−h)) / 2h` along coordinate `i`.
pub fn central_diff(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let x0 = x[i];
    x[i] = x0 + h;
    let up = f(x);
    x[i] = x0 - h;
    let down = f(x);
    x[i] = x0;
    (up - down) / (2.0 * h)
}

/// Step used by every finite-difference check.
pub const FD_STEP: f64 = 1e-6;

/// Gradients smaller than this are compared in absolute terms: with
/// `s = 30` a saturated softmax leaves losses near 1e-8 whose difference
/// quotients carry ~1e-8 of rounding noise.
pub const GRAD_FLOOR: f64 = 1e-2;

/// Relative error of a whole gradient: largest entry-wise deviation over
/// the largest analytic magnitude (floored at [`GRAD_FLOOR`]).
pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = analytic.iter().fold(GRAD_FLOOR, |m, v| m.max(v.abs()));
    let dev = analytic.iter().zip(numeric).fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    dev / scale
}

pub fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.gen_range(-1.0..1.0))
}

pub fn random_vector(r: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(n, || r.gen_range(-1.0..1.0))
}

/// One random mixed-loss instance: embedding, centers, labels, weight.
pub struct LossCase {
    pub e: Array1<f64>,
    pub w: Array2<f64>,
    pub a: usize,
    pub b: usize,
    pub lambda: f64,
}

pub fn loss_case(seed: u64, d: usize, n: usize) -> LossCase {
    let mut r = rng(seed);
    let e = random_vector(&mut r, d);
    let w = random_matrix(&mut r, d, n);
    let a = r.gen_range(0..n);
    let b = (a + r.gen_range(1..n)) % n;
    let lambda = r.gen_range(0.0..1.0);
    LossCase { e, w, a, b, lambda }
}

/// Instance `i` of the gradient-check grid: sizes up to `D = 8`, `N = 10`,
/// λ cycling over {0, 0.3, 1} and the margin over {0, 0.2}.
pub fn gradient_case(i: u64) -> (LossCase, MarginConfig) {
    let mut r = rng(0xC0DE + i);
    let d = r.gen_range(2..=8);
    let n = r.gen_range(2..=10);
    let mut c = loss_case(i, d, n);
    c.lambda = [0.0, 0.3, 1.0][(i % 3) as usize];
    let m = [0.0, 0.2][((i / 3) % 2) as usize];
    (c, MarginConfig::new(m, 30.0).unwrap())
}

/// Relative error between the analytic loss gradients and finite
/// differences, the worse of the `e` and `W` parts.
pub fn loss_gradient_error(c: &LossCase, cfg: MarginConfig) -> f64 {
    let centers = ClassCenters::new(c.w.clone()).unwrap();
    let out = margin_mixup_loss(c.e.view(), &centers, c.a, c.b, c.lambda, cfg).unwrap();

    let mut e = c.e.to_vec();
    let num_e: Vec<f64> = (0..e.len())
        .map(|i| {
            central_diff(&mut e, i, FD_STEP, |x| {
                margin_mixup_loss(Array1::from(x.to_vec()).view(), &centers, c.a, c.b, c.lambda, cfg)
                    .unwrap()
                    .value
            })
        })
        .collect();
    let shape = c.w.raw_dim();
    let mut w: Vec<f64> = c.w.iter().copied().collect();
    let num_w: Vec<f64> = (0..w.len())
        .map(|i| {
            central_diff(&mut w, i, FD_STEP, |x| {
                let cw = ClassCenters::new(Array2::from_shape_vec(shape, x.to_vec()).unwrap()).unwrap();
                margin_mixup_loss(c.e.view(), &cw, c.a, c.b, c.lambda, cfg).unwrap().value
            })
        })
        .collect();
    let ge: Vec<f64> = out.grad_e.to_vec();
    let gw: Vec<f64> = out.grad_w.iter().copied().collect();
    rel_err(&ge, &num_e).max(rel_err(&gw, &num_w))
}

/// Relative error of the end-to-end gradient (features → extractor → loss)
/// for a random model and input, worst over the five parameter groups.
pub fn model_gradient_error(seed: u64) -> f64 {
    use marginmix::model::ModelDims;
    let dims = ModelDims { n_bins: 6, hidden: 8, embed_dim: 4, n_classes: 5 };
    let mut r = rng(seed);
    let mut model = EmbeddingModel::init(dims, seed).unwrap();
    model.frame_b = random_vector(&mut r, 8) * 0.5;
    model.proj_b = random_vector(&mut r, 4) * 0.5;
    let frames = random_matrix(&mut r, 10, 6);
    let f = FeatureMatrix::new(frames, 25.0, 10.0).unwrap();
    let a = r.gen_range(0..5);
    let b = (a + r.gen_range(1..5)) % 5;
    let lambda = r.gen_range(0.0..1.0);
    let cfg = MarginConfig::new(0.2, 30.0).unwrap();

    let (e, cache) = model.forward_cached(&f).unwrap();
    let out = margin_mixup_loss(e.view(), &model.centers, a, b, lambda, cfg).unwrap();
    let g = model.backward(&cache, out.grad_e.view());
    let analytic: [Vec<f64>; 5] = [
        g.frame_w.iter().copied().collect(),
        g.frame_b.to_vec(),
        g.proj_w.iter().copied().collect(),
        g.proj_b.to_vec(),
        out.grad_w.iter().copied().collect(),
    ];

    let loss_of = |m: &EmbeddingModel| {
        let e = m.forward(&f).unwrap();
        margin_mixup_loss(e.view(), &m.centers, a, b, lambda, cfg).unwrap().value
    };
    let mut worst: f64 = 0.0;
    for (group, grads) in analytic.iter().enumerate() {
        let numeric: Vec<f64> = (0..grads.len())
            .map(|i| {
                let mut probe = [0.0];
                central_diff(&mut probe, 0, FD_STEP, |d| {
                    let mut m = model.clone();
                    let p = match group {
                        0 => m.frame_w.iter_mut().nth(i),
                        1 => m.frame_b.iter_mut().nth(i),
                        2 => m.proj_w.iter_mut().nth(i),
                        3 => m.proj_b.iter_mut().nth(i),
                        _ => m.centers.matrix_mut().iter_mut().nth(i),
                    };
                    *p.unwrap() += d[0];
                    loss_of(&m)
                })
            })
            .collect();
        worst = worst.max(rel_err(grads, &numeric));
    }
    worst
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// SNR of `mixture` taking `target` as the signal and the difference as
/// the interference.
pub fn measured_snr_db(target: &Waveform, mixture: &Waveform) -> f64 {
    let residual: Vec<f64> = mixture.samples().iter().zip(target.samples()).map(|(m, t)| m - t).collect();
    10.0 * (power(target.samples()) / power(&residual)).log10()
}

/// Two-sided Kolmogorov-Smirnov statistic of `draws` against `cdf`.
pub fn ks_statistic(mut draws: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    draws.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

/// Asymptotic KS critical value at significance 0.01.
pub fn ks_critical_001(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}
