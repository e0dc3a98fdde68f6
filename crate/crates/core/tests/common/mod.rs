//! Shared oracles for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use bnn_core::analysis::LinearGaussianPosterior;
use bnn_core::data::{self, Dataset};
use bnn_core::model::{self, Activation, Architecture, LikelihoodSpec, PriorSpec, Workspace};
use bnn_core::numerics::{norm2, Matrix, RngStream};

/// Central finite-difference gradient.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm2(a).max(norm2(b));
    if scale == 0.0 {
        0.0
    } else {
        norm2(&diff) / scale
    }
}

/// Small random architecture: `D ∈ 1..=3`, one or two hidden layers of
/// width `2..=6`, `K ∈ 1..=2`.
pub fn random_arch(rng: &mut RngStream, activation: Activation) -> Architecture {
    let d = rng.int_inclusive(1, 3);
    let layers = rng.int_inclusive(1, 2);
    let widths = (0..layers).map(|_| rng.int_inclusive(2, 6)).collect();
    let k = rng.int_inclusive(1, 2);
    Architecture::new(d, widths, k, activation).unwrap()
}

pub fn random_dataset(rng: &mut RngStream, arch: &Architecture, n: usize) -> Dataset {
    let xs: Vec<Vec<f64>> = (0..n).map(|_| rng.normal_vec(arch.input_dim)).collect();
    let ys: Vec<f64> = (0..n * arch.output_dim).map(|_| rng.normal()).collect();
    let x = Matrix::from_rows(&xs);
    let y = Matrix::from_vec(n, arch.output_dim, ys).unwrap();
    Dataset::new("random", x, y).unwrap()
}

/// Smallest `|pre-activation|` over all hidden units and inputs.
pub fn kink_margin(arch: &Architecture, theta: &[f64], xs: &Matrix) -> f64 {
    let layout = arch.layout();
    let mut ws = Workspace::new(arch);
    let mut m = f64::INFINITY;
    for r in 0..xs.rows() {
        model::forward_ws(arch, &layout, theta, xs.row(r), &mut ws);
        for l in 0..arch.hidden_widths.len() {
            m = ws.pre_activation(l).iter().fold(m, |m, a| m.min(a.abs()));
        }
    }
    m
}

/// Linear-Gaussian regression problem: `y = 0.7x₁ − 0.4x₂ + 0.3 + ε`,
/// `σ = 0.5`, unit prior precision, 40 points.
pub struct Conjugate {
    pub arch: Architecture,
    pub data: Dataset,
    pub prior: PriorSpec,
    pub lik: LikelihoodSpec,
    pub features: Matrix,
    pub exact: LinearGaussianPosterior,
}

pub fn features(x: &Matrix) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..x.rows())
        .map(|r| {
            let mut v = x.row(r).to_vec();
            v.push(1.0);
            v
        })
        .collect();
    Matrix::from_rows(&rows)
}

pub fn conjugate(seed: u64) -> Conjugate {
    let mut rng = RngStream::new(seed);
    let n = 40;
    let xs: Vec<Vec<f64>> = (0..n).map(|_| rng.normal_vec(2)).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 0.7 * x[0] - 0.4 * x[1] + 0.3 + 0.5 * rng.normal()).collect();
    let data = Dataset::from_xy("conjugate", &xs, &ys).unwrap();
    let arch = Architecture::linear(2);
    let prior = PriorSpec::uniform(&arch, 1.0);
    let lik = LikelihoodSpec::fixed_std(0.5);
    let features = features(&data.x);
    let exact = LinearGaussianPosterior::fit(&features, &ys, &prior.precision, lik.noise_var()).unwrap();
    Conjugate { arch, data, prior, lik, features, exact }
}

/// Dataset directory: `BNN_DATA_DIR` or the repository's `data/`.
pub fn data_dir() -> PathBuf {
    data::data_dir_from_env().unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data")))
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/splits"))
}
