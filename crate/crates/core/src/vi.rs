//! Gaussian variational inference over network parameters.
//!
//! Two families are supported: a fully factorised (mean-field) Gaussian and
//! a full-covariance Gaussian with a lower-triangular scale whose diagonal is
//! stored in log space. The ELBO's expected log likelihood is estimated by
//! reparameterised Monte Carlo; the KL to the diagonal prior is always
//! computed in closed form.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{self, Architecture, LikelihoodSpec, PriorSpec};
use crate::numerics::{norm2, Matrix, RngStream};
use crate::par;

/// Fully factorised Gaussian `q(θ) = Πᵢ N(μᵢ, exp(log_varᵢ))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldPosterior {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

/// Lower-triangular matrix packed row by row, diagonal held as logs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackedLower {
    dim: usize,
    data: Vec<f64>,
}

impl PackedLower {
    pub fn packed_len(dim: usize) -> usize {
        dim * (dim + 1) / 2
    }

    #[inline]
    pub fn index(i: usize, j: usize) -> usize {
        debug_assert!(j <= i);
        i * (i + 1) / 2 + j
    }

    /// Diagonal scale `exp(log_diag)` and zero off-diagonals.
    pub fn diagonal(dim: usize, log_diag: f64) -> Self {
        let mut data = vec![0.0; Self::packed_len(dim)];
        for i in 0..dim {
            data[Self::index(i, i)] = log_diag;
        }
        Self { dim, data }
    }

    pub fn from_packed(dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != Self::packed_len(dim) {
            return Err(Error::DimensionMismatch {
                context: "PackedLower",
                expected: Self::packed_len(dim),
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    /// Packs a lower-triangular matrix with positive diagonal.
    pub fn from_matrix(l: &Matrix) -> Result<Self> {
        let dim = l.rows();
        let mut data = vec![0.0; Self::packed_len(dim)];
        for i in 0..dim {
            for j in 0..i {
                data[Self::index(i, j)] = l[(i, j)];
            }
            if !(l[(i, i)] > 0.0) {
                return Err(Error::NotPositiveDefinite { dim });
            }
            data[Self::index(i, i)] = l[(i, i)].ln();
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Raw packed storage (log diagonal).
    pub fn packed(&self) -> &[f64] {
        &self.data
    }

    pub fn packed_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else if i == j {
            self.data[Self::index(i, i)].exp()
        } else {
            self.data[Self::index(i, j)]
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in 0..=i {
                m[(i, j)] = self.get(i, j);
            }
        }
        m
    }

    /// `L z`.
    pub fn mul_vec(&self, z: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                let row = &self.data[Self::index(i, 0)..Self::index(i, i)];
                crate::numerics::dot(row, &z[..i]) + self.data[Self::index(i, i)].exp() * z[i]
            })
            .collect()
    }

    pub fn sum_log_diag(&self) -> f64 {
        (0..self.dim).map(|i| self.data[Self::index(i, i)]).sum()
    }
}

/// Full-covariance Gaussian `q(θ) = N(μ, L Lᵀ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullCovPosterior {
    pub mean: Vec<f64>,
    pub scale: PackedLower,
}

impl FullCovPosterior {
    pub fn covariance(&self) -> Matrix {
        let l = self.scale.to_matrix();
        l.matmul(&l.transpose()).expect("square")
    }
}

/// Operations shared by both Gaussian families.
pub trait GaussianFamily: Sync {
    fn dim(&self) -> usize;
    fn mean(&self) -> &[f64];
    /// Number of scale parameters (`P` or `P(P+1)/2`).
    fn scale_len(&self) -> usize;
    /// `θ = μ + S z` for standard-normal `z`.
    fn transform(&self, z: &[f64]) -> Vec<f64>;
    /// Accumulates `∂θ/∂scale · dθ` for the sample produced from `z`.
    fn backprop_scale(&self, z: &[f64], d_theta: &[f64], grad_scale: &mut [f64]);
    /// Closed-form KL to the prior with gradients.
    fn kl(&self, prior: &PriorSpec) -> Result<KlTerm>;
    /// Marginal variances.
    fn marginal_variances(&self) -> Vec<f64>;

    fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        let z = rng.normal_vec(self.dim());
        self.transform(&z)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KlTerm {
    pub value: f64,
    pub grad_mean: Vec<f64>,
    pub grad_scale: Vec<f64>,
}

fn check_prior(dim: usize, prior: &PriorSpec) -> Result<()> {
    if prior.len() != dim {
        return Err(Error::DimensionMismatch { context: "KL prior", expected: dim, got: prior.len() });
    }
    if !prior.is_proper() {
        return Err(Error::Config("KL needs a proper prior (all precisions positive)".into()));
    }
    Ok(())
}

impl MeanFieldPosterior {
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mean.len() != log_var.len() {
            return Err(Error::DimensionMismatch { context: "MeanFieldPosterior", expected: mean.len(), got: log_var.len() });
        }
        Ok(Self { mean, log_var })
    }

    pub fn variances(&self) -> Vec<f64> {
        self.log_var.iter().map(|v| v.exp()).collect()
    }

    /// Initialisation for training: weight means `N(0, (1/√(4·fan_out))²)`,
    /// bias means zero, every variance `init_var`.
    pub fn init_for(arch: &Architecture, init_var: f64, rng: &mut RngStream) -> Self {
        let p = arch.num_params();
        let mut mean = vec![0.0; p];
        for l in arch.layout().layers {
            let std = 1.0 / (4.0 * l.fan_out as f64).sqrt();
            for m in &mut mean[l.weight_offset..l.bias_offset] {
                *m = std * rng.normal();
            }
        }
        Self { mean, log_var: vec![init_var.ln(); p] }
    }
}

impl GaussianFamily for MeanFieldPosterior {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn mean(&self) -> &[f64] {
        &self.mean
    }

    fn scale_len(&self) -> usize {
        self.mean.len()
    }

    fn transform(&self, z: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_var)
            .zip(z)
            .map(|((m, lv), z)| m + (0.5 * lv).exp() * z)
            .collect()
    }

    fn backprop_scale(&self, z: &[f64], d_theta: &[f64], grad_scale: &mut [f64]) {
        for (((g, lv), z), d) in grad_scale.iter_mut().zip(&self.log_var).zip(z).zip(d_theta) {
            *g += d * 0.5 * (0.5 * lv).exp() * z;
        }
    }

    fn kl(&self, prior: &PriorSpec) -> Result<KlTerm> {
        check_prior(self.dim(), prior)?;
        let mut value = 0.0;
        let mut grad_mean = Vec::with_capacity(self.dim());
        let mut grad_scale = Vec::with_capacity(self.dim());
        for ((m, lv), p) in self.mean.iter().zip(&self.log_var).zip(&prior.precision) {
            let var = lv.exp();
            value += 0.5 * (var * p + m * m * p - 1.0 - lv - p.ln());
            grad_mean.push(p * m);
            grad_scale.push(0.5 * (var * p - 1.0));
        }
        Ok(KlTerm { value, grad_mean, grad_scale })
    }

    fn marginal_variances(&self) -> Vec<f64> {
        self.variances()
    }
}

impl FullCovPosterior {
    pub fn new(mean: Vec<f64>, scale: PackedLower) -> Result<Self> {
        if scale.dim() != mean.len() {
            return Err(Error::DimensionMismatch { context: "FullCovPosterior", expected: mean.len(), got: scale.dim() });
        }
        Ok(Self { mean, scale })
    }

    /// Means `N(0, mean_std²)`, diagonal scale `exp(log_diag)`, zero off-diagonals.
    pub fn init_for(arch: &Architecture, mean_std: f64, log_diag: f64, rng: &mut RngStream) -> Self {
        let p = arch.num_params();
        let mean = (0..p).map(|_| mean_std * rng.normal()).collect();
        Self { mean, scale: PackedLower::diagonal(p, log_diag) }
    }
}

impl GaussianFamily for FullCovPosterior {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn mean(&self) -> &[f64] {
        &self.mean
    }

    fn scale_len(&self) -> usize {
        PackedLower::packed_len(self.dim())
    }

    fn transform(&self, z: &[f64]) -> Vec<f64> {
        let lz = self.scale.mul_vec(z);
        self.mean.iter().zip(lz).map(|(m, v)| m + v).collect()
    }

    fn backprop_scale(&self, z: &[f64], d_theta: &[f64], grad_scale: &mut [f64]) {
        let data = self.scale.packed();
        for i in 0..self.dim() {
            let d = d_theta[i];
            if d == 0.0 {
                continue;
            }
            let base = PackedLower::index(i, 0);
            for (g, zj) in grad_scale[base..base + i].iter_mut().zip(&z[..i]) {
                *g += d * zj;
            }
            let di = PackedLower::index(i, i);
            grad_scale[di] += d * z[i] * data[di].exp();
        }
    }

    fn kl(&self, prior: &PriorSpec) -> Result<KlTerm> {
        check_prior(self.dim(), prior)?;
        let p = self.dim();
        let data = self.scale.packed();
        let mut grad_scale = vec![0.0; data.len()];
        let mut trace = 0.0;
        for i in 0..p {
            let pi = prior.precision[i];
            let base = PackedLower::index(i, 0);
            for j in 0..i {
                let l = data[base + j];
                trace += pi * l * l;
                grad_scale[base + j] = pi * l;
            }
            let lii = data[base + i].exp();
            trace += pi * lii * lii;
            grad_scale[base + i] = pi * lii * lii - 1.0;
        }
        let quad: f64 = self.mean.iter().zip(&prior.precision).map(|(m, pr)| pr * m * m).sum();
        let log_det_prior: f64 = -prior.precision.iter().map(|v| v.ln()).sum::<f64>();
        let value = 0.5 * (trace + quad - p as f64 + log_det_prior - 2.0 * self.scale.sum_log_diag());
        let grad_mean = self.mean.iter().zip(&prior.precision).map(|(m, pr)| pr * m).collect();
        Ok(KlTerm { value, grad_mean, grad_scale })
    }

    fn marginal_variances(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| (0..=i).map(|j| self.scale.get(i, j).powi(2)).sum()).collect()
    }
}

/// Draws `θ ~ q` with the reparameterisation `θ = μ + S z`.
pub fn sample_posterior<F: GaussianFamily + ?Sized>(q: &F, rng: &mut RngStream) -> Vec<f64> {
    q.sample(rng)
}

pub fn kl_meanfield_to_diag_prior(q: &MeanFieldPosterior, prior: &PriorSpec) -> Result<f64> {
    Ok(q.kl(prior)?.value)
}

pub fn kl_fullcov_to_diag_prior(q: &FullCovPosterior, prior: &PriorSpec) -> Result<f64> {
    Ok(q.kl(prior)?.value)
}

/// ELBO value with gradients with respect to the variational parameters and
/// `log σ_o²`.
#[derive(Clone, Debug, PartialEq)]
pub struct ElboEstimate {
    pub value: f64,
    /// Monte Carlo average of the (rescaled) log likelihood term.
    pub expected_log_lik: f64,
    pub kl: f64,
    pub grad_mean: Vec<f64>,
    pub grad_scale: Vec<f64>,
    pub grad_log_noise: f64,
}

/// ELBO with the Monte Carlo noise supplied explicitly (one `z` per sample).
///
/// The likelihood term sums over `rows` and is multiplied by `scale`.
#[allow(clippy::too_many_arguments)]
pub fn elbo_with_noise<F: GaussianFamily + ?Sized>(
    arch: &Architecture,
    q: &F,
    data: &Dataset,
    rows: &[usize],
    scale: f64,
    prior: &PriorSpec,
    lik: &LikelihoodSpec,
    noise: &[Vec<f64>],
) -> Result<ElboEstimate> {
    if noise.is_empty() {
        return Err(Error::Config("ELBO needs at least one Monte Carlo sample".into()));
    }
    arch.check_params(q.mean())?;
    let m = noise.len() as f64;
    let mut grad_mean = vec![0.0; q.dim()];
    let mut grad_scale = vec![0.0; q.scale_len()];
    let mut ell = 0.0;
    let mut grad_log_noise = 0.0;
    for z in noise {
        let theta = q.transform(z);
        let ll = model::log_likelihood_rows(arch, &theta, data, rows, scale, lik)?;
        ell += ll.value / m;
        grad_log_noise += ll.grad_log_noise / m;
        let d: Vec<f64> = ll.grad.iter().map(|g| g / m).collect();
        grad_mean.iter_mut().zip(&d).for_each(|(a, b)| *a += b);
        q.backprop_scale(z, &d, &mut grad_scale);
    }
    let kl = q.kl(prior)?;
    grad_mean.iter_mut().zip(&kl.grad_mean).for_each(|(a, b)| *a -= b);
    grad_scale.iter_mut().zip(&kl.grad_scale).for_each(|(a, b)| *a -= b);
    Ok(ElboEstimate {
        value: ell - kl.value,
        expected_log_lik: ell,
        kl: kl.value,
        grad_mean,
        grad_scale,
        grad_log_noise,
    })
}

/// Monte Carlo ELBO over the full dataset with weight-space sampling.
pub fn elbo_estimate<F: GaussianFamily + ?Sized>(
    arch: &Architecture,
    q: &F,
    data: &Dataset,
    prior: &PriorSpec,
    lik: &LikelihoodSpec,
    samples: usize,
    rng: &mut RngStream,
) -> Result<ElboEstimate> {
    let noise: Vec<Vec<f64>> = (0..samples).map(|_| rng.normal_vec(q.dim())).collect();
    let rows: Vec<usize> = (0..data.len()).collect();
    elbo_with_noise(arch, q, data, &rows, 1.0, prior, lik, &noise)
}

/// Minibatch ELBO: the likelihood over `rows` is rescaled by `N / |rows|`.
pub fn elbo_estimate_batch<F: GaussianFamily + ?Sized>(
    arch: &Architecture,
    q: &F,
    data: &Dataset,
    rows: &[usize],
    prior: &PriorSpec,
    lik: &LikelihoodSpec,
    samples: usize,
    rng: &mut RngStream,
) -> Result<ElboEstimate> {
    let noise: Vec<Vec<f64>> = (0..samples).map(|_| rng.normal_vec(q.dim())).collect();
    let scale = data.len() as f64 / rows.len() as f64;
    elbo_with_noise(arch, q, data, rows, scale, prior, lik, &noise)
}

/// Total number of units whose pre-activations are sampled per datapoint.
fn sampled_units(arch: &Architecture) -> usize {
    arch.hidden_widths.iter().sum::<usize>() + arch.output_dim
}

/// Buffers for one locally reparameterised pass.
struct LocalWs {
    /// Input to each layer.
    acts: Vec<Vec<f64>>,
    /// Sampled pre-activations of each layer.
    pre: Vec<Vec<f64>>,
    /// `sqrt(v)` per unit per layer.
    sd: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    /// First-layer pre-activation mean, fixed per datapoint.
    first_mean: Vec<f64>,
    /// First-layer gradients w.r.t. pre-activation mean and variance,
    /// summed over samples until [`flush_first_layer`].
    first_dm: Vec<f64>,
    first_dv: Vec<f64>,
}

impl LocalWs {
    fn new(arch: &Architecture) -> Self {
        let shapes = arch.layer_shapes();
        let mut acts = vec![vec![0.0; arch.input_dim]];
        acts.extend(shapes.iter().take(shapes.len() - 1).map(|&(_, o)| vec![0.0; o]));
        let pre = shapes.iter().map(|&(_, o)| vec![0.0; o]).collect();
        let sd = shapes.iter().map(|&(_, o)| vec![0.0; o]).collect();
        let h0 = shapes[0].1;
        Self {
            acts,
            pre,
            sd,
            delta: Vec::new(),
            delta_prev: Vec::new(),
            first_mean: vec![0.0; h0],
            first_dm: vec![0.0; h0],
            first_dv: vec![0.0; h0],
        }
    }
}

/// Mean and std of the first layer's pre-activations for input `x`; these do
/// not depend on the noise, so they are shared by every sample of a row.
fn first_layer_moments(layout: &model::Layout, mean: &[f64], var: &[f64], x: &[f64], ws: &mut LocalWs) {
    ws.acts[0].copy_from_slice(x);
    let l = &layout.layers[0];
    for j in 0..l.fan_out {
        let w0 = l.weight_offset + j * l.fan_in;
        let mut m = mean[l.bias_offset + j];
        let mut v = var[l.bias_offset + j];
        for (i, &a) in x.iter().enumerate() {
            m += mean[w0 + i] * a;
            v += var[w0 + i] * a * a;
        }
        ws.first_mean[j] = m;
        ws.sd[0][j] = v.sqrt();
    }
}

/// Sampled pass given the first-layer moments already in `ws`.
fn local_forward(arch: &Architecture, layout: &model::Layout, mean: &[f64], var: &[f64], eps: &[f64], ws: &mut LocalWs) {
    let last = layout.layers.len() - 1;
    let mut e = 0;
    for (li, l) in layout.layers.iter().enumerate() {
        if li == 0 {
            for j in 0..l.fan_out {
                ws.pre[0][j] = ws.first_mean[j] + ws.sd[0][j] * eps[j];
            }
        } else {
            let a = &ws.acts[li];
            for j in 0..l.fan_out {
                let w0 = l.weight_offset + j * l.fan_in;
                let (wm, wv) = (&mean[w0..w0 + l.fan_in], &var[w0..w0 + l.fan_in]);
                let mut m = mean[l.bias_offset + j];
                let mut v = var[l.bias_offset + j];
                for ((&ai, &mi), &vi) in a.iter().zip(wm).zip(wv) {
                    m += mi * ai;
                    v += vi * ai * ai;
                }
                let s = v.sqrt();
                ws.sd[li][j] = s;
                ws.pre[li][j] = m + s * eps[e + j];
            }
        }
        e += l.fan_out;
        if li < last {
            for j in 0..l.fan_out {
                ws.acts[li + 1][j] = arch.activation.apply(ws.pre[li][j]);
            }
        }
    }
}

/// Backward pass for one sample. Gradients of layers above the first go to
/// `grad_mean`/`grad_var`; first-layer terms accumulate in `ws`.
#[allow(clippy::too_many_arguments)]
fn local_backward(
    arch: &Architecture,
    layout: &model::Layout,
    mean: &[f64],
    var: &[f64],
    eps: &[f64],
    d_out: &[f64],
    ws: &mut LocalWs,
    grad_mean: &mut [f64],
    grad_var: &mut [f64],
) {
    ws.delta.clear();
    ws.delta.extend_from_slice(d_out);
    let mut e_end: usize = layout.layers.iter().map(|l| l.fan_out).sum();
    for li in (0..layout.layers.len()).rev() {
        let l = &layout.layers[li];
        let e0 = e_end - l.fan_out;
        if li == 0 {
            for j in 0..l.fan_out {
                let dm = ws.delta[j];
                ws.first_dm[j] += dm;
                ws.first_dv[j] += dm * eps[j] / (2.0 * ws.sd[0][j]);
            }
            break;
        }
        ws.delta_prev.clear();
        ws.delta_prev.resize(l.fan_in, 0.0);
        for j in 0..l.fan_out {
            let dm = ws.delta[j];
            if dm == 0.0 {
                continue;
            }
            let dv = dm * eps[e0 + j] / (2.0 * ws.sd[li][j]);
            let w0 = l.weight_offset + j * l.fan_in;
            let a = &ws.acts[li];
            grad_mean[l.bias_offset + j] += dm;
            grad_var[l.bias_offset + j] += dv;
            let w = w0..w0 + l.fan_in;
            for ((((&ai, gm), gv), dp), (&mi, &vi)) in a
                .iter()
                .zip(&mut grad_mean[w.clone()])
                .zip(&mut grad_var[w.clone()])
                .zip(ws.delta_prev.iter_mut())
                .zip(mean[w.clone()].iter().zip(&var[w]))
            {
                *gm += dm * ai;
                *gv += dv * ai * ai;
                *dp += mi * dm + 2.0 * ai * vi * dv;
            }
        }
        for ((dp, &z), &phi) in ws.delta_prev.iter_mut().zip(&ws.pre[li - 1]).zip(&ws.acts[li]) {
            *dp *= arch.activation.derivative_given(z, phi);
        }
        std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
        e_end = e0;
    }
}

/// Moves the accumulated first-layer terms for the current row into the
/// parameter gradients and clears them.
fn flush_first_layer(layout: &model::Layout, ws: &mut LocalWs, grad_mean: &mut [f64], grad_var: &mut [f64]) {
    let l = &layout.layers[0];
    let x = &ws.acts[0];
    for j in 0..l.fan_out {
        let (dm, dv) = (ws.first_dm[j], ws.first_dv[j]);
        let w0 = l.weight_offset + j * l.fan_in;
        grad_mean[l.bias_offset + j] += dm;
        grad_var[l.bias_offset + j] += dv;
        for (i, &a) in x.iter().enumerate() {
            grad_mean[w0 + i] += dm * a;
            grad_var[w0 + i] += dv * a * a;
        }
        ws.first_dm[j] = 0.0;
        ws.first_dv[j] = 0.0;
    }
}

/// Outputs sampled with the local reparameterisation trick: each layer's
/// pre-activations are drawn from their induced Gaussian with fresh noise
/// for every datapoint. Returns a `B × K` matrix.
pub fn local_reparam_forward(
    arch: &Architecture,
    q: &MeanFieldPosterior,
    x_batch: &Matrix,
    rng: &mut RngStream,
) -> Result<Matrix> {
    arch.check_params(&q.mean)?;
    if x_batch.cols() != arch.input_dim {
        return Err(Error::DimensionMismatch { context: "local_reparam_forward", expected: arch.input_dim, got: x_batch.cols() });
    }
    let layout = arch.layout();
    let var = q.variances();
    let units = sampled_units(arch);
    let mut ws = LocalWs::new(arch);
    let mut eps = vec![0.0; units];
    let mut out = Matrix::zeros(x_batch.rows(), arch.output_dim);
    for r in 0..x_batch.rows() {
        rng.fill_normal(&mut eps);
        first_layer_moments(&layout, &q.mean, &var, x_batch.row(r), &mut ws);
        local_forward(arch, &layout, &q.mean, &var, &eps, &mut ws);
        out.row_mut(r).copy_from_slice(ws.pre.last().expect("output layer"));
    }
    Ok(out)
}

/// Expected log likelihood under `q` by local reparameterisation, averaged
/// over `samples` noise draws, with gradients for mean, log-variance and
/// `log σ_o²`. The sum over `rows` is multiplied by `scale`.
#[allow(clippy::too_many_arguments)]
pub fn local_reparam_log_lik(
    arch: &Architecture,
    q: &MeanFieldPosterior,
    data: &Dataset,
    rows: &[usize],
    scale: f64,
    lik: &LikelihoodSpec,
    samples: usize,
    rng: &mut RngStream,
) -> Result<ElboEstimate> {
    arch.check_params(&q.mean)?;
    let units = sampled_units(arch);
    let mut eps = vec![0.0; samples * rows.len() * units];
    rng.fill_normal(&mut eps);
    local_reparam_log_lik_with_noise(arch, q, data, rows, scale, lik, samples, &eps)
}

/// As [`local_reparam_log_lik`] with the noise buffer given explicitly
/// (`samples × |rows| × units`, sample-major).
#[allow(clippy::too_many_arguments)]
pub fn local_reparam_log_lik_with_noise(
    arch: &Architecture,
    q: &MeanFieldPosterior,
    data: &Dataset,
    rows: &[usize],
    scale: f64,
    lik: &LikelihoodSpec,
    samples: usize,
    eps: &[f64],
) -> Result<ElboEstimate> {
    let units = sampled_units(arch);
    if eps.len() != samples * rows.len() * units {
        return Err(Error::DimensionMismatch { context: "local reparam noise", expected: samples * rows.len() * units, got: eps.len() });
    }
    let layout = arch.layout();
    let var = q.variances();
    let noise = lik.noise_var();
    let p = q.mean.len();
    let n_rows = rows.len();
    let rows_per_chunk = (128 / samples).max(1);
    let parts = par::map(&par::chunks(n_rows, rows_per_chunk), |&(s, e)| {
        let mut ws = LocalWs::new(arch);
        let mut gm = vec![0.0; p];
        let mut gv = vec![0.0; p];
        let mut sq = 0.0;
        let mut d_out = vec![0.0; arch.output_dim];
        for (r, &n) in rows.iter().enumerate().take(e).skip(s) {
            first_layer_moments(&layout, &q.mean, &var, data.x.row(n), &mut ws);
            for smp in 0..samples {
                let job = smp * n_rows + r;
                let eps_j = &eps[job * units..(job + 1) * units];
                local_forward(arch, &layout, &q.mean, &var, eps_j, &mut ws);
                let out = ws.pre.last().expect("output layer");
                for (k, (&f, &y)) in out.iter().zip(data.y.row(n)).enumerate() {
                    let r = y - f;
                    sq += r * r;
                    d_out[k] = r / noise;
                }
                local_backward(arch, &layout, &q.mean, &var, eps_j, &d_out, &mut ws, &mut gm, &mut gv);
            }
            flush_first_layer(&layout, &mut ws, &mut gm, &mut gv);
        }
        (sq, gm, gv)
    });
    let mut grad_mean = vec![0.0; p];
    let mut grad_scale = vec![0.0; p];
    let mut sq = 0.0;
    for (s, gm, gv) in parts {
        sq += s;
        grad_mean.iter_mut().zip(&gm).for_each(|(a, b)| *a += b);
        grad_scale.iter_mut().zip(&gv).for_each(|(a, b)| *a += b);
    }
    let w = scale / samples as f64;
    grad_mean.iter_mut().for_each(|g| *g *= w);
    // chain rule to log-variance
    grad_scale.iter_mut().zip(&var).for_each(|(g, v)| *g *= w * v);
    let nk = (rows.len() * arch.output_dim) as f64;
    let value = scale * (-0.5 * nk * (model::LN_2PI + lik.log_noise_var)) - 0.5 * w * sq / noise;
    let grad_log_noise = -0.5 * scale * nk + 0.5 * w * sq / noise;
    Ok(ElboEstimate { value, expected_log_lik: value, kl: 0.0, grad_mean, grad_scale, grad_log_noise })
}

/// Adam optimiser (ascent form) with the usual defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        Self { step: 0, m: vec![0.0; len], v: vec![0.0; len], learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// One step that increases the objective whose gradient is `grad`.
    pub fn ascend(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p += self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

/// Optimisation settings shared by MAP, MFVI and FCVI training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// `None` means full-batch gradient steps.
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    /// Monte Carlo samples per ELBO estimate (ignored by MAP).
    pub mc_samples: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.mc_samples == 0 || self.batch_size == Some(0) || !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("invalid training config {self:?}")));
        }
        Ok(())
    }

    /// Gradient steps per epoch: `⌈N / batch⌉`, or 1 for full batch.
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        match self.batch_size {
            Some(b) if b < n => n.div_ceil(b),
            _ => 1,
        }
    }
}

/// Draws a minibatch with replacement, or returns every row for full batch.
pub fn draw_batch(n: usize, batch: Option<usize>, rng: &mut RngStream) -> Vec<usize> {
    match batch {
        Some(b) if b < n => (0..b).map(|_| rng.index(n)).collect(),
        _ => (0..n).collect(),
    }
}

/// Snapshot handed to training observers after every step.
pub struct TrainEvent<'a, Q> {
    pub step: usize,
    /// Set when this step completed an epoch (1-based epoch count).
    pub epoch_done: Option<usize>,
    pub posterior: &'a Q,
    pub likelihood: &'a LikelihoodSpec,
    /// Stochastic objective estimate at this step (before the update).
    pub objective: f64,
}

fn non_finite(step: usize, params: &[f64]) -> Error {
    Error::NonFiniteLoss { iteration: step, param_norm: norm2(params) }
}

/// Mean-field VI with local reparameterisation and Adam.
pub fn train_mfvi(
    arch: &Architecture,
    data: &Dataset,
    prior: &PriorSpec,
    lik: &LikelihoodSpec,
    config: &TrainConfig,
) -> Result<(MeanFieldPosterior, LikelihoodSpec)> {
    let mut rng = RngStream::new(config.seed);
    let q0 = MeanFieldPosterior::init_for(arch, 1e-5, &mut rng);
    train_mfvi_from(arch, data, prior, lik, config, q0, &mut |_| {})
}

/// [`train_mfvi`] from a given starting posterior, reporting every step.
pub fn train_mfvi_from(
    arch: &Architecture,
    data: &Dataset,
    prior: &PriorSpec,
    lik: &LikelihoodSpec,
    config: &TrainConfig,
    init: MeanFieldPosterior,
    observer: &mut dyn FnMut(&TrainEvent<'_, MeanFieldPosterior>),
) -> Result<(MeanFieldPosterior, LikelihoodSpec)> {
    config.validate()?;
    arch.check_params(&init.mean)?;
    let p = init.mean.len();
    let n = data.len();
    // distinct stream from the one used for initialisation
    let mut rng = RngStream::substream(config.seed, 1);
    let mut q = init;
    let mut lik = *lik;
    let mut params: Vec<f64> = q.mean.iter().chain(&q.log_var).copied().collect();
    params.push(lik.log_noise_var);
    let mut adam = AdamState::new(params.len(), config.learning_rate);
    let per_epoch = config.steps_per_epoch(n);
    let mut grad = vec![0.0; params.len()];
    let mut step = 0;
    for epoch in 1..=config.epochs {
        for s in 0..per_epoch {
            let rows = draw_batch(n, config.batch_size, &mut rng);
            let scale = n as f64 / rows.len() as f64;
            let ell = local_reparam_log_lik(arch, &q, data, &rows, scale, &lik, config.mc_samples, &mut rng)?;
            let kl = q.kl(prior)?;
            let objective = ell.value - kl.value;
            if !objective.is_finite() {
                return Err(non_finite(step, &params));
            }
            for i in 0..p {
                grad[i] = ell.grad_mean[i] - kl.grad_mean[i];
                grad[p + i] = ell.grad_scale[i] - kl.grad_scale[i];
            }
            grad[2 * p] = if lik.trainable { ell.grad_log_noise } else { 0.0 };
            adam.ascend(&mut params, &grad);
            q.mean.copy_from_slice(&params[..p]);
            q.log_var.copy_from_slice(&params[p..2 * p]);
            if lik.trainable {
                lik.log_noise_var = params[2 * p];
            }
            step += 1;
            let epoch_done = (s + 1 == per_epoch).then_some(epoch);
            observer(&TrainEvent { step, epoch_done, posterior: &q, likelihood: &lik, objective });
        }
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(non_finite(step, &params));
    }
    Ok((q, lik))
}

/// Initial settings for full-covariance VI.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcviInit {
    pub mean_std: f64,
    pub log_diag: f64,
}

impl FcviInit {
    /// Settings used on the 1D synthetic task.
    pub fn synthetic() -> Self {
        Self { mean_std: 0.1, log_diag: 0.05f64.ln() }
    }

    /// Settings used on the UCI benchmark.
    pub fn uci() -> Self {
        Self { mean_std: 0.1, log_diag: 1e-5f64.ln() }
    }
}

/// Full-covariance VI with weight-space reparameterisation and Adam.
pub fn train_fcvi(
    arch: &Architecture,
    data: &Dataset,
    prior: &PriorSpec,
    lik: &LikelihoodSpec,
    config: &TrainConfig,
    init: FcviInit,
) -> Result<(FullCovPosterior, LikelihoodSpec)> {
    let mut rng = RngStream::new(config.seed);
    let q0 = FullCovPosterior::init_for(arch, init.mean_std, init.log_diag, &mut rng);
    train_fcvi_from(arch, data, prior, lik, config, q0, &mut |_| {})
}

/// [`train_fcvi`] from a given starting posterior, reporting every step.
pub fn train_fcvi_from(
    arch: &Architecture,
    data: &Dataset,
    prior: &PriorSpec,
    lik: &LikelihoodSpec,
    config: &TrainConfig,
    init: FullCovPosterior,
    observer: &mut dyn FnMut(&TrainEvent<'_, FullCovPosterior>),
) -> Result<(FullCovPosterior, LikelihoodSpec)> {
    config.validate()?;
    arch.check_params(&init.mean)?;
    let p = init.mean.len();
    let s_len = PackedLower::packed_len(p);
    let n = data.len();
    let mut rng = RngStream::substream(config.seed, 1);
    let mut q = init;
    let mut lik = *lik;
    let mut params: Vec<f64> = q.mean.iter().chain(q.scale.packed()).copied().collect();
    params.push(lik.log_noise_var);
    let mut adam = AdamState::new(params.len(), config.learning_rate);
    let per_epoch = config.steps_per_epoch(n);
    let mut grad = vec![0.0; params.len()];
    let mut step = 0;
    for epoch in 1..=config.epochs {
        for s in 0..per_epoch {
            let rows = draw_batch(n, config.batch_size, &mut rng);
            let scale = n as f64 / rows.len() as f64;
            let noise: Vec<Vec<f64>> = (0..config.mc_samples).map(|_| rng.normal_vec(p)).collect();
            let est = elbo_with_noise(arch, &q, data, &rows, scale, prior, &lik, &noise)?;
            if !est.value.is_finite() {
                return Err(non_finite(step, &params));
            }
            grad[..p].copy_from_slice(&est.grad_mean);
            grad[p..p + s_len].copy_from_slice(&est.grad_scale);
            grad[p + s_len] = if lik.trainable { est.grad_log_noise } else { 0.0 };
            adam.ascend(&mut params, &grad);
            q.mean.copy_from_slice(&params[..p]);
            q.scale.packed_mut().copy_from_slice(&params[p..p + s_len]);
            if lik.trainable {
                lik.log_noise_var = params[p + s_len];
            }
            step += 1;
            let epoch_done = (s + 1 == per_epoch).then_some(epoch);
            observer(&TrainEvent { step, epoch_done, posterior: &q, likelihood: &lik, objective: est.value });
        }
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(non_finite(step, &params));
    }
    Ok((q, lik))
}

/// Either variational family, as stored in checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum VariationalPosterior {
    MeanField(MeanFieldPosterior),
    FullCov(FullCovPosterior),
}

impl VariationalPosterior {
    pub fn family(&self) -> &dyn GaussianFamily {
        match self {
            Self::MeanField(q) => q,
            Self::FullCov(q) => q,
        }
    }

    /// Local reparameterisation is only defined for the mean-field family.
    pub fn local_reparam_forward(&self, arch: &Architecture, x_batch: &Matrix, rng: &mut RngStream) -> Result<Matrix> {
        match self {
            Self::MeanField(q) => local_reparam_forward(arch, q, x_batch, rng),
            Self::FullCov(_) => Err(Error::UnsupportedPosterior),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(arch: &Architecture, n: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed);
        let x = Matrix::from_vec(n, arch.input_dim, rng.normal_vec(n * arch.input_dim)).unwrap();
        let y = Matrix::from_vec(n, 1, rng.normal_vec(n)).unwrap();
        Dataset::new("toy", x, y).unwrap()
    }

    #[test]
    fn degenerate_mean_field_sample_is_the_mean() {
        let q = MeanFieldPosterior::new(vec![1.0, -2.0, 0.5], vec![(1e-20f64).ln(); 3]).unwrap();
        let s = sample_posterior(&q, &mut RngStream::new(1));
        for (a, b) in s.iter().zip(&q.mean) {
            assert!((a - b).abs() < 1e-9);
        }
        let a = sample_posterior(&q, &mut RngStream::new(4));
        let b = sample_posterior(&q, &mut RngStream::new(4));
        assert_eq!(a, b);
    }

    #[test]
    fn kl_examples_by_hand() {
        let prior = PriorSpec::from_variances(&[1.0]).unwrap();
        let q = MeanFieldPosterior::new(vec![0.0], vec![0.0]).unwrap();
        assert!(kl_meanfield_to_diag_prior(&q, &prior).unwrap().abs() < 1e-15);
        let q = MeanFieldPosterior::new(vec![1.0], vec![0.0]).unwrap();
        assert!((kl_meanfield_to_diag_prior(&q, &prior).unwrap() - 0.5).abs() < 1e-15);

        let prior3 = PriorSpec::from_variances(&[1.0; 3]).unwrap();
        let fc = FullCovPosterior::new(vec![0.0; 3], PackedLower::diagonal(3, 0.0)).unwrap();
        assert!(kl_fullcov_to_diag_prior(&fc, &prior3).unwrap().abs() < 1e-15);
    }

    #[test]
    fn diagonal_full_cov_kl_equals_mean_field_kl() {
        let mut rng = RngStream::new(2);
        let p = 5;
        let mean = rng.normal_vec(p);
        let log_sd: Vec<f64> = rng.normal_vec(p).iter().map(|v| 0.3 * v).collect();
        let mut scale = PackedLower::diagonal(p, 0.0);
        for i in 0..p {
            scale.packed_mut()[PackedLower::index(i, i)] = log_sd[i];
        }
        let fc = FullCovPosterior::new(mean.clone(), scale).unwrap();
        let mf = MeanFieldPosterior::new(mean, log_sd.iter().map(|s| 2.0 * s).collect()).unwrap();
        let prior = PriorSpec::from_variances(&[0.5, 1.0, 2.0, 3.0, 0.7]).unwrap();
        let a = kl_fullcov_to_diag_prior(&fc, &prior).unwrap();
        let b = kl_meanfield_to_diag_prior(&mf, &prior).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn kl_gradients_match_finite_differences() {
        let mut rng = RngStream::new(3);
        let p = 4;
        let prior = PriorSpec::from_variances(&[0.5, 1.0, 2.0, 3.0]).unwrap();
        let mut data = rng.normal_vec(PackedLower::packed_len(p));
        data.iter_mut().for_each(|v| *v *= 0.3);
        let q = FullCovPosterior::new(rng.normal_vec(p), PackedLower::from_packed(p, data).unwrap()).unwrap();
        let kl = q.kl(&prior).unwrap();
        let h = 1e-6;
        for k in 0..q.scale_len() {
            let mut a = q.clone();
            a.scale.packed_mut()[k] += h;
            let mut b = q.clone();
            b.scale.packed_mut()[k] -= h;
            let fd = (a.kl(&prior).unwrap().value - b.kl(&prior).unwrap().value) / (2.0 * h);
            assert!((fd - kl.grad_scale[k]).abs() < 1e-6, "k={k}");
        }
    }

    #[test]
    fn full_cov_identity_scale_moments() {
        let p = 3;
        let q = FullCovPosterior::new(vec![1.0, -1.0, 0.5], PackedLower::diagonal(p, 0.0)).unwrap();
        let mut rng = RngStream::new(6);
        let n = 100_000;
        let mut sum = vec![0.0; p];
        for _ in 0..n {
            let s = sample_posterior(&q, &mut rng);
            sum.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        }
        let se = 1.0 / (n as f64).sqrt();
        for (i, m) in q.mean.iter().enumerate() {
            assert!((sum[i] / n as f64 - m).abs() < 3.0 * se);
        }
    }

    #[test]
    fn local_reparam_zero_variance_matches_forward() {
        let arch = Architecture::new(2, vec![4, 3], 1, crate::model::Activation::Tanh).unwrap();
        let mut rng = RngStream::new(1);
        let mean = rng.normal_vec(arch.num_params());
        let q = MeanFieldPosterior::new(mean.clone(), vec![(1e-30f64).ln(); arch.num_params()]).unwrap();
        let x = Matrix::from_vec(5, 2, rng.normal_vec(10)).unwrap();
        let out = local_reparam_forward(&arch, &q, &x, &mut rng).unwrap();
        for r in 0..5 {
            let f = model::forward(&arch, &mean, x.row(r)).unwrap()[0];
            assert!((out[(r, 0)] - f).abs() < 1e-12);
        }
        let a = local_reparam_forward(&arch, &q, &x, &mut RngStream::new(9)).unwrap();
        let b = local_reparam_forward(&arch, &q, &x, &mut RngStream::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn local_reparam_linear_layer_moments() {
        let arch = Architecture::linear(3);
        let q = MeanFieldPosterior::new(vec![0.5, -1.0, 2.0, 0.3], vec![0.2f64.ln(), 0.5f64.ln(), 0.1f64.ln(), 0.05f64.ln()])
            .unwrap();
        let xrow = [1.0, 2.0, -0.5];
        let n = 100_000;
        let x = Matrix::from_vec(n, 3, xrow.repeat(n)).unwrap();
        let out = local_reparam_forward(&arch, &q, &x, &mut RngStream::new(5)).unwrap();
        let mean_exact = 0.5 - 2.0 - 1.0 + 0.3;
        let var_exact = 0.2 + 0.5 * 4.0 + 0.1 * 0.25 + 0.05;
        let ys = out.as_slice();
        let m = ys.iter().sum::<f64>() / n as f64;
        let v = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!((m - mean_exact).abs() < 3.0 * (var_exact / n as f64).sqrt());
        assert!((v - var_exact).abs() < 3.0 * var_exact * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn local_reparam_rejects_full_cov() {
        let arch = Architecture::linear(2);
        let q = VariationalPosterior::FullCov(FullCovPosterior::new(vec![0.0; 3], PackedLower::diagonal(3, 0.0)).unwrap());
        let x = Matrix::zeros(1, 2);
        let r = q.local_reparam_forward(&arch, &x, &mut RngStream::new(0));
        assert!(matches!(r, Err(Error::UnsupportedPosterior)));
    }

    #[test]
    fn local_reparam_gradients_match_finite_differences() {
        let arch = Architecture::new(2, vec![3], 1, crate::model::Activation::Tanh).unwrap();
        let data = toy(&arch, 6, 2);
        let mut rng = RngStream::new(3);
        let p = arch.num_params();
        let q = MeanFieldPosterior::new(rng.normal_vec(p), rng.normal_vec(p).iter().map(|v| 0.3 * v - 2.0).collect())
            .unwrap();
        let lik = LikelihoodSpec::trainable(-0.5);
        let rows: Vec<usize> = (0..6).collect();
        let samples = 2;
        let eps = rng.normal_vec(samples * 6 * 4);
        let base = local_reparam_log_lik_with_noise(&arch, &q, &data, &rows, 1.5, &lik, samples, &eps).unwrap();
        let h = 1e-5;
        let eval = |qq: &MeanFieldPosterior, l: &LikelihoodSpec| {
            local_reparam_log_lik_with_noise(&arch, qq, &data, &rows, 1.5, l, samples, &eps).unwrap().value
        };
        for i in 0..p {
            let (mut a, mut b) = (q.clone(), q.clone());
            a.mean[i] += h;
            b.mean[i] -= h;
            let fd = (eval(&a, &lik) - eval(&b, &lik)) / (2.0 * h);
            assert!((fd - base.grad_mean[i]).abs() <= 1e-5 * fd.abs().max(1.0), "mean {i}");
            let (mut a, mut b) = (q.clone(), q.clone());
            a.log_var[i] += h;
            b.log_var[i] -= h;
            let fd = (eval(&a, &lik) - eval(&b, &lik)) / (2.0 * h);
            assert!((fd - base.grad_scale[i]).abs() <= 1e-5 * fd.abs().max(1.0), "logvar {i}");
        }
        let (mut la, mut lb) = (lik, lik);
        la.log_noise_var += h;
        lb.log_noise_var -= h;
        let fd = (eval(&q, &la) - eval(&q, &lb)) / (2.0 * h);
        assert!((fd - base.grad_log_noise).abs() <= 1e-5 * fd.abs().max(1.0));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut adam = AdamState::new(2, 0.1);
        let mut p = vec![0.0, 0.0];
        adam.ascend(&mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.1).abs() < 1e-6);
        assert!((p[1] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn batching_rules() {
        let cfg = TrainConfig { epochs: 1, batch_size: Some(32), learning_rate: 0.01, mc_samples: 1, seed: 0 };
        assert_eq!(cfg.steps_per_epoch(100), 4);
        assert_eq!(cfg.steps_per_epoch(20), 1);
        let mut rng = RngStream::new(0);
        assert_eq!(draw_batch(5, None, &mut rng), vec![0, 1, 2, 3, 4]);
        let b = draw_batch(100, Some(32), &mut rng);
        assert_eq!(b.len(), 32);
        assert!(b.iter().all(|&i| i < 100));
        assert!(TrainConfig { epochs: 0, ..cfg }.validate().is_err());
    }

    #[test]
    fn tiny_variance_mfvi_tracks_deterministic_likelihood() {
        let arch = Architecture::one_hidden(1, 5, crate::model::Activation::Tanh);
        let data = toy(&arch, 8, 4);
        let mut rng = RngStream::new(5);
        let mean = rng.normal_vec(arch.num_params());
        let q = MeanFieldPosterior::new(mean.clone(), vec![(1e-18f64).ln(); arch.num_params()]).unwrap();
        let lik = LikelihoodSpec::fixed_std(0.5);
        let rows: Vec<usize> = (0..8).collect();
        let lr = local_reparam_log_lik(&arch, &q, &data, &rows, 1.0, &lik, 4, &mut rng).unwrap();
        let det = model::log_likelihood(&arch, &mean, &data, &lik).unwrap();
        assert!((lr.value - det.value).abs() < 1e-6);
        for (a, b) in lr.grad_mean.iter().zip(&det.grad) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
