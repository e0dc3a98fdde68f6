//! Predictive evaluation and the variance-geometry toolkit.
//!
//! Covers the Gaussian and Monte Carlo mixture predictives used for test
//! log-likelihoods, the closed-form output variance of a one-hidden-layer
//! network whose input layer is deterministic and whose output layer is
//! mean-field, its Hessian in input space, a midpoint-convexity probe, exact
//! Bayesian linear regression on last-layer features, and the two-unit ReLU
//! construction used to show that such networks can still fit data either
//! side of a gap.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{self, Activation, Architecture, Workspace};
use crate::numerics::{cholesky, CholeskyFactor, Matrix};
use crate::par;

/// Closed-form Gaussian predictive over `y*`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPredictive {
    pub mean: f64,
    /// Total variance including observation noise.
    pub var: f64,
    pub noise_var: f64,
}

impl GaussianPredictive {
    /// Standard deviation of the function value (noise excluded).
    pub fn function_std(&self) -> f64 {
        (self.var - self.noise_var).max(0.0).sqrt()
    }
}

/// Equal-weight mixture of Gaussians sharing the noise variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixturePredictive {
    pub means: Vec<f64>,
    pub noise_var: f64,
}

impl MixturePredictive {
    pub fn mean(&self) -> f64 {
        self.means.iter().sum::<f64>() / self.means.len() as f64
    }

    /// Spread of the component means (noise excluded).
    pub fn function_var(&self) -> f64 {
        let m = self.mean();
        self.means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.means.len() as f64
    }

    pub fn function_std(&self) -> f64 {
        self.function_var().sqrt()
    }
}

pub fn test_ll_gaussian(pred: &GaussianPredictive, y: f64) -> f64 {
    model::gaussian_log_density(y, pred.mean, pred.var)
}

/// `log[(1/M) Σₘ N(y; fₘ, σ_o²)]` by log-sum-exp.
pub fn test_ll_mixture(pred: &MixturePredictive, y: f64) -> f64 {
    assert!(!pred.means.is_empty(), "mixture needs at least one component");
    if pred.means.len() == 1 {
        return model::gaussian_log_density(y, pred.means[0], pred.noise_var);
    }
    let logs: Vec<f64> = pred.means.iter().map(|&m| model::gaussian_log_density(y, m, pred.noise_var)).collect();
    log_mean_exp(&logs)
}

pub fn log_mean_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    max + (s / logs.len() as f64).ln()
}

/// Mixture predictive at every row of `x` from a set of parameter samples.
pub fn mc_predictive(arch: &Architecture, samples: &[Vec<f64>], noise_var: f64, x: &Matrix) -> Result<Vec<MixturePredictive>> {
    if samples.is_empty() {
        return Err(Error::Config("mixture predictive needs at least one sample".into()));
    }
    if arch.output_dim != 1 {
        return Err(Error::ArchitectureUnsupported("mixture predictive is for scalar outputs".into()));
    }
    for s in samples {
        arch.check_params(s)?;
    }
    let layout = arch.layout();
    let per_sample = par::map(samples, |theta| {
        let mut ws = Workspace::new(arch);
        (0..x.rows()).map(|r| model::forward_ws(arch, &layout, theta, x.row(r), &mut ws)[0]).collect::<Vec<f64>>()
    });
    Ok((0..x.rows())
        .map(|r| MixturePredictive { means: per_sample.iter().map(|s| s[r]).collect(), noise_var })
        .collect())
}

/// One-hidden-layer network with a deterministic input layer and a
/// mean-field Gaussian output layer (single output).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfOutputNet {
    pub activation: Activation,
    /// Input weights, `H × D`.
    pub u: Matrix,
    /// Input biases.
    pub v: Vec<f64>,
    pub w_mean: Vec<f64>,
    pub w_var: Vec<f64>,
    pub b_mean: f64,
    pub b_var: f64,
}

/// Distance from a ReLU kink below which probes are nudged.
pub const KINK_TOL: f64 = 1e-8;
/// Nudge applied to pre-activations at a kink.
pub const KINK_SHIFT: f64 = 1e-6;

impl MfOutputNet {
    /// Builds from a flat parameter vector (input layer used as-is, output
    /// layer means) and output-layer variances `[Var W₁..W_H, Var b]`.
    pub fn from_params(arch: &Architecture, theta: &[f64], output_var: &[f64]) -> Result<Self> {
        if arch.hidden_widths.len() != 1 || arch.output_dim != 1 {
            return Err(Error::ArchitectureUnsupported(format!(
                "output-variance formula needs one hidden layer and one output, got {}",
                arch.tag()
            )));
        }
        arch.check_params(theta)?;
        let h = arch.hidden_widths[0];
        if output_var.len() != h + 1 {
            return Err(Error::DimensionMismatch { context: "output-layer variances", expected: h + 1, got: output_var.len() });
        }
        let layout = arch.layout();
        let (l0, l1) = (layout.layers[0], layout.layers[1]);
        let u = Matrix::from_vec(h, arch.input_dim, theta[l0.weight_offset..l0.bias_offset].to_vec())?;
        Ok(Self {
            activation: arch.activation,
            u,
            v: theta[l0.bias_offset..l0.end()].to_vec(),
            w_mean: theta[l1.weight_offset..l1.bias_offset].to_vec(),
            w_var: output_var[..h].to_vec(),
            b_mean: theta[l1.bias_offset],
            b_var: output_var[h],
        })
    }

    pub fn hidden(&self) -> usize {
        self.v.len()
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.u.cols() {
            return Err(Error::DimensionMismatch { context: "MfOutputNet input", expected: self.u.cols(), got: x.len() });
        }
        Ok(())
    }

    pub fn pre_activations(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden()).map(|i| self.v[i] + crate::numerics::dot(self.u.row(i), x)).collect()
    }

    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        let a = self.pre_activations(x);
        Ok(self.b_mean + a.iter().zip(&self.w_mean).map(|(&a, w)| w * self.activation.apply(a)).sum::<f64>())
    }

    /// `Σᵢ Var[Wᵢ] φ(aᵢ)² + Var[b]`.
    pub fn output_variance(&self, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        let a = self.pre_activations(x);
        Ok(self.b_var + a.iter().zip(&self.w_var).map(|(&a, wv)| wv * self.activation.apply(a).powi(2)).sum::<f64>())
    }

    /// `H = Σᵢ 2 Var[Wᵢ] (φφ'' + φ'²)(aᵢ) uᵢ uᵢᵀ`, the input-space Hessian of
    /// [`Self::output_variance`]. ReLU pre-activations within [`KINK_TOL`] of
    /// zero are shifted by [`KINK_SHIFT`].
    pub fn variance_hessian(&self, x: &[f64]) -> Result<Matrix> {
        self.check_x(x)?;
        let d = self.u.cols();
        let mut h = Matrix::zeros(d, d);
        for (i, mut a) in self.pre_activations(x).into_iter().enumerate() {
            if self.activation == Activation::Relu && a.abs() < KINK_TOL {
                log::warn!("probe within {KINK_TOL:e} of a ReLU kink (unit {i}); shifting");
                a += KINK_SHIFT;
            }
            let phi = self.activation.apply(a);
            let d1 = self.activation.derivative(a);
            let d2 = self.activation.second_derivative(a);
            let c = 2.0 * self.w_var[i] * (phi * d2 + d1 * d1);
            if c != 0.0 {
                h.add_outer(c, self.u.row(i));
            }
        }
        Ok(h)
    }
}

pub fn mf_output_variance(net: &MfOutputNet, x: &[f64]) -> Result<f64> {
    net.output_variance(x)
}

pub fn variance_hessian(net: &MfOutputNet, x: &[f64]) -> Result<Matrix> {
    net.variance_hessian(x)
}

/// Outcome of a midpoint-convexity scan along a segment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub pairs_checked: usize,
    pub violations: usize,
    /// Largest `f(mid) − ½(f(a) + f(b))` seen; positive means non-convex.
    pub worst_excess: f64,
    /// Segment parameters `(t_a, t_b)` of the worst pair.
    pub worst_pair: (f64, f64),
}

/// Slack allowed before a midpoint counts as a violation.
pub const CONVEXITY_TOL: f64 = 1e-9;

/// Checks `f((x₁+x₂)/2) ≤ ½(f(x₁)+f(x₂)) + tol` for every pair of grid points
/// on the segment `[x_a, x_b]` whose midpoint is also on the grid.
pub fn convexity_probe(f: &(dyn Fn(&[f64]) -> f64 + Sync), x_a: &[f64], x_b: &[f64], n_points: usize) -> Result<ConvexityReport> {
    if x_a.len() != x_b.len() {
        return Err(Error::DimensionMismatch { context: "convexity_probe", expected: x_a.len(), got: x_b.len() });
    }
    if x_a == x_b || n_points < 3 {
        return Err(Error::Config("convexity probe needs distinct endpoints and at least 3 points".into()));
    }
    let ts: Vec<f64> = (0..n_points).map(|i| i as f64 / (n_points - 1) as f64).collect();
    let vals = par::map(&ts, |&t| {
        let x: Vec<f64> = x_a.iter().zip(x_b).map(|(a, b)| a + t * (b - a)).collect();
        f(&x)
    });
    let mut report = ConvexityReport { pairs_checked: 0, violations: 0, worst_excess: f64::NEG_INFINITY, worst_pair: (0.0, 0.0) };
    for i in 0..n_points {
        for j in (i + 2..n_points).step_by(2) {
            let excess = vals[(i + j) / 2] - 0.5 * (vals[i] + vals[j]);
            report.pairs_checked += 1;
            if excess > CONVEXITY_TOL {
                report.violations += 1;
            }
            if excess > report.worst_excess {
                report.worst_excess = excess;
                report.worst_pair = (ts[i], ts[j]);
            }
        }
    }
    Ok(report)
}

/// Exact Gaussian posterior of a linear-in-features model
/// `y = wᵀφ + ε`, `w ~ N(0, diag(p)⁻¹)`, `ε ~ N(0, σ²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianPosterior {
    pub mean: Vec<f64>,
    pub precision_chol: CholeskyFactor,
    pub noise_var: f64,
}

impl LinearGaussianPosterior {
    /// Conditions on features `Φ` (one row per datapoint) and targets `y`.
    /// Zero prior precisions are allowed when `ΦᵀΦ` is full rank.
    pub fn fit(features: &Matrix, y: &[f64], prior_precision: &[f64], noise_var: f64) -> Result<Self> {
        let f = features.cols();
        if prior_precision.len() != f {
            return Err(Error::DimensionMismatch { context: "BLR prior", expected: f, got: prior_precision.len() });
        }
        if y.len() != features.rows() {
            return Err(Error::DimensionMismatch { context: "BLR targets", expected: features.rows(), got: y.len() });
        }
        let mut a = Matrix::zeros(f, f);
        let mut b = vec![0.0; f];
        for n in 0..features.rows() {
            let phi = features.row(n);
            a.add_outer(1.0 / noise_var, phi);
            b.iter_mut().zip(phi).for_each(|(bi, p)| *bi += p * y[n] / noise_var);
        }
        for i in 0..f {
            a[(i, i)] += prior_precision[i];
        }
        let precision_chol = cholesky(&a)?;
        let mean = crate::numerics::solve_cholesky(&precision_chol, &b)?;
        Ok(Self { mean, precision_chol, noise_var })
    }

    pub fn predict(&self, phi: &[f64]) -> Result<GaussianPredictive> {
        let v = self.precision_chol.solve_lower(phi)?;
        let fvar: f64 = v.iter().map(|x| x * x).sum();
        Ok(GaussianPredictive { mean: crate::numerics::dot(&self.mean, phi), var: self.noise_var + fvar, noise_var: self.noise_var })
    }

    pub fn covariance(&self) -> Matrix {
        self.precision_chol.inverse()
    }
}

/// Log marginal likelihood `log N(y; 0, Φ diag(p)⁻¹ Φᵀ + σ² I)` (proper prior).
pub fn linear_log_evidence(features: &Matrix, y: &[f64], prior_precision: &[f64], noise_var: f64) -> Result<f64> {
    if prior_precision.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::Config("evidence needs a proper prior".into()));
    }
    let post = LinearGaussianPosterior::fit(features, y, prior_precision, noise_var)?;
    let n = y.len() as f64;
    let mut sq = 0.0;
    for (r, &yn) in y.iter().enumerate() {
        let res = yn - crate::numerics::dot(features.row(r), &post.mean);
        sq += res * res;
    }
    let prior_quad: f64 = post.mean.iter().zip(prior_precision).map(|(m, p)| p * m * m).sum();
    let log_det_prior: f64 = prior_precision.iter().map(|p| p.ln()).sum();
    Ok(-0.5 * n * (model::LN_2PI + noise_var.ln()) - 0.5 * (sq / noise_var + prior_quad) - 0.5 * post.precision_chol.log_det()
        + 0.5 * log_det_prior)
}

/// Last-layer features `[φ(a₁(x)), …, φ(a_H(x)), 1]` of a one-hidden-layer net.
pub fn last_layer_features(arch: &Architecture, theta: &[f64], x: &Matrix) -> Result<Matrix> {
    if arch.hidden_widths.len() != 1 {
        return Err(Error::ArchitectureUnsupported(format!("last-layer features need one hidden layer, got {}", arch.tag())));
    }
    arch.check_params(theta)?;
    if x.cols() != arch.input_dim {
        return Err(Error::DimensionMismatch { context: "last_layer_features", expected: arch.input_dim, got: x.cols() });
    }
    let h = arch.hidden_widths[0];
    let layout = arch.layout();
    let mut ws = Workspace::new(arch);
    let mut out = Matrix::zeros(x.rows(), h + 1);
    for r in 0..x.rows() {
        model::forward_ws(arch, &layout, theta, x.row(r), &mut ws);
        let row = out.row_mut(r);
        row[..h].copy_from_slice(ws.layer_input(1));
        row[h] = 1.0;
    }
    Ok(out)
}

/// Bayesian linear regression on the output layer of a trained network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlrLastLayer {
    pub arch: Architecture,
    pub theta: Vec<f64>,
    pub posterior: LinearGaussianPosterior,
}

impl BlrLastLayer {
    pub fn predict(&self, x: &[f64]) -> Result<GaussianPredictive> {
        let xm = Matrix::from_vec(1, x.len(), x.to_vec())?;
        let phi = last_layer_features(&self.arch, &self.theta, &xm)?;
        self.posterior.predict(phi.row(0))
    }

    /// Function variance only.
    pub fn function_variance(&self, x: &[f64]) -> Result<f64> {
        let p = self.predict(x)?;
        Ok(p.var - p.noise_var)
    }
}

/// Exact conjugate posterior over `(W, b)` of the output layer given the
/// input layer in `theta`. `output_prior_precision` has `H + 1` entries.
pub fn blr_last_layer(
    arch: &Architecture,
    theta: &[f64],
    data: &Dataset,
    output_prior_precision: &[f64],
    noise_var: f64,
) -> Result<BlrLastLayer> {
    if arch.output_dim != 1 {
        return Err(Error::ArchitectureUnsupported("BLR is for scalar outputs".into()));
    }
    let phi = last_layer_features(arch, theta, &data.x)?;
    let posterior = LinearGaussianPosterior::fit(&phi, data.y.as_slice(), output_prior_precision, noise_var)?;
    Ok(BlrLastLayer { arch: arch.clone(), theta: theta.to_vec(), posterior })
}

/// The two-unit ReLU network `y = W₁φ(U₁x+v₁) + W₂φ(U₂x+v₂) + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoUnitRelu {
    pub w: [f64; 2],
    pub u: [f64; 2],
    pub v: [f64; 2],
    pub b: f64,
}

impl TwoUnitRelu {
    pub fn architecture() -> Architecture {
        Architecture::one_hidden(1, 2, Activation::Relu)
    }

    /// Flat parameters for [`Self::architecture`].
    pub fn to_params(&self) -> Vec<f64> {
        vec![self.u[0], self.u[1], self.v[0], self.v[1], self.w[0], self.w[1], self.b]
    }

    /// Input at which unit `i` switches on.
    pub fn kink(&self, i: usize) -> f64 {
        -self.v[i] / self.u[i]
    }

    fn check_monotone(&self) -> Result<()> {
        if self.w.iter().chain(&self.u).any(|&c| !(c > 0.0)) {
            return Err(Error::RegionAssumptionViolated("W and U must be positive".into()));
        }
        Ok(())
    }
}

/// Piecewise-linear evaluation by region. Arithmetic mirrors the generic
/// forward pass so the results agree bit for bit.
pub fn two_unit_piecewise(p: &TwoUnitRelu, x: f64) -> f64 {
    let a = [p.v[0] + p.u[0] * x, p.v[1] + p.u[1] * x];
    let on = [a[0] > 0.0, a[1] > 0.0];
    let term = |i: usize| if on[i] { p.w[i] * a[i] } else { 0.0 };
    match on {
        // region with both units off: y = b
        [false, false] => p.b + 0.0,
        _ => p.b + (term(0) + term(1)),
    }
}

/// `(|b − y₁|, |(W₁U₁ + W₂U₂)x₂ + W₁v₁ + W₂v₂ + b − y₂|)` for a point `x₁`
/// left of both kinks and a point `x₂` right of both.
pub fn fit_residual(p: &TwoUnitRelu, first: (f64, f64), second: (f64, f64)) -> Result<(f64, f64)> {
    p.check_monotone()?;
    let lo = p.kink(0).min(p.kink(1));
    let hi = p.kink(0).max(p.kink(1));
    if !(first.0 < lo) {
        return Err(Error::RegionAssumptionViolated(format!("x₁ = {} is not left of both kinks ({lo})", first.0)));
    }
    if !(second.0 > hi) {
        return Err(Error::RegionAssumptionViolated(format!("x₂ = {} is not right of both kinks ({hi})", second.0)));
    }
    let lhs = (p.w[0] * p.u[0] + p.w[1] * p.u[1]) * second.0 + p.w[0] * p.v[0] + p.w[1] * p.v[1] + p.b;
    Ok(((p.b - first.1).abs(), (lhs - second.1).abs()))
}

/// Mean function std over grid points inside `gap`, divided by the mean over
/// points inside any of `data_regions`. Both region kinds are closed intervals.
pub fn uncertainty_ratio(grid: &[f64], function_std: &[f64], data_regions: &[(f64, f64)], gap: (f64, f64)) -> Result<f64> {
    if grid.len() != function_std.len() {
        return Err(Error::DimensionMismatch { context: "uncertainty_ratio", expected: grid.len(), got: function_std.len() });
    }
    for &(lo, hi) in data_regions {
        if lo.max(gap.0) < hi.min(gap.1) {
            return Err(Error::RegionAssumptionViolated(format!("data region [{lo}, {hi}] overlaps the gap")));
        }
    }
    let mean_in = |pred: &dyn Fn(f64) -> bool| {
        let v: Vec<f64> = grid.iter().zip(function_std).filter(|(x, _)| pred(**x)).map(|(_, s)| *s).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let data = mean_in(&|x| data_regions.iter().any(|&(lo, hi)| x >= lo && x <= hi)).ok_or(Error::EmptyRegion("data region"))?;
    let gap_m = mean_in(&|x| x > gap.0 && x < gap.1).ok_or(Error::EmptyRegion("gap region"))?;
    Ok(gap_m / data)
}

/// Variances along a probe grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceProfile {
    pub source: String,
    pub inputs: Vec<Vec<f64>>,
    pub variances: Vec<f64>,
}

impl VarianceProfile {
    pub fn from_fn(source: impl Into<String>, inputs: Vec<Vec<f64>>, f: impl Fn(&[f64]) -> Result<f64> + Sync) -> Result<Self> {
        let variances = par::map(&inputs, |x| f(x)).into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Self { source: source.into(), inputs, variances })
    }
}

/// Evenly spaced 1D grid including both ends.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}
