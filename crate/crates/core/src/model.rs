//! Multilayer perceptron regression model, diagonal Gaussian prior and
//! homoscedastic Gaussian likelihood, with exact reverse-mode gradients.
//!
//! Parameters live in one flat vector. Layer `l` occupies a weight block of
//! `fan_out × fan_in` entries (row-major, output unit major) followed by a
//! bias block of `fan_out` entries.

use std::f64::consts::PI;
use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::par;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => a.tanh(),
            Activation::Relu => a.max(0.0),
        }
    }

    /// First derivative. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = a.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// First derivative at `a` given `phi = apply(a)`; saves a `tanh`.
    #[inline]
    pub fn derivative_given(self, a: f64, phi: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - phi * phi,
            Activation::Relu => self.derivative(a),
        }
    }

    /// Second derivative; zero for ReLU away from the kink.
    #[inline]
    pub fn second_derivative(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = a.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Activation::Relu => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// Network shape. An empty `hidden_widths` gives a linear model.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

/// Offsets of one layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerLayout {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerLayout {
    #[inline]
    pub fn weight_index(&self, out: usize, inp: usize) -> usize {
        self.weight_offset + out * self.fan_in + inp
    }

    pub fn end(&self) -> usize {
        self.bias_offset + self.fan_out
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub layers: Vec<LayerLayout>,
    pub len: usize,
}

impl Architecture {
    pub fn new(
        input_dim: usize,
        hidden_widths: Vec<usize>,
        output_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden_widths.contains(&0) {
            return Err(Error::Config("all layer widths must be at least 1".into()));
        }
        Ok(Self { input_dim, hidden_widths, output_dim, activation })
    }

    /// Single hidden layer network with scalar output.
    pub fn one_hidden(input_dim: usize, width: usize, activation: Activation) -> Self {
        Self::new(input_dim, vec![width], 1, activation).expect("positive widths")
    }

    /// Linear model `y = wᵀx + b` with scalar output.
    pub fn linear(input_dim: usize) -> Self {
        Self::new(input_dim, Vec::new(), 1, Activation::Tanh).expect("positive widths")
    }

    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_widths);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| (i + 1) * o).sum()
    }

    pub fn num_layers(&self) -> usize {
        self.hidden_widths.len() + 1
    }

    pub fn layout(&self) -> Layout {
        let mut off = 0;
        let layers = self
            .layer_shapes()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let l = LayerLayout {
                    fan_in,
                    fan_out,
                    weight_offset: off,
                    bias_offset: off + fan_in * fan_out,
                };
                off = l.end();
                l
            })
            .collect();
        Layout { layers, len: off }
    }

    pub fn check_params(&self, theta: &[f64]) -> Result<()> {
        let p = self.num_params();
        if theta.len() != p {
            return Err(Error::DimensionMismatch { context: "parameter vector", expected: p, got: theta.len() });
        }
        Ok(())
    }

    /// Short human-readable tag such as `1HL-50-tanh`.
    pub fn tag(&self) -> String {
        if self.hidden_widths.is_empty() {
            return "linear".to_string();
        }
        let widths: Vec<String> = self.hidden_widths.iter().map(ToString::to_string).collect();
        format!("{}HL-{}-{}", self.hidden_widths.len(), widths.join("x"), self.activation.name())
    }
}

/// Weights and bias of one layer in matrix form.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    /// `fan_out × fan_in`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Flat vector of every weight and bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn zeros(arch: &Architecture) -> Self {
        Self(vec![0.0; arch.num_params()])
    }

    pub fn unflatten(&self, arch: &Architecture) -> Result<Vec<LayerParams>> {
        arch.check_params(&self.0)?;
        Ok(arch
            .layout()
            .layers
            .iter()
            .map(|l| LayerParams {
                weights: Matrix::from_vec(
                    l.fan_out,
                    l.fan_in,
                    self.0[l.weight_offset..l.bias_offset].to_vec(),
                )
                .expect("layout sizes agree"),
                bias: self.0[l.bias_offset..l.end()].to_vec(),
            })
            .collect())
    }

    pub fn flatten(layers: &[LayerParams]) -> Self {
        let mut v = Vec::new();
        for l in layers {
            v.extend_from_slice(l.weights.as_slice());
            v.extend_from_slice(&l.bias);
        }
        Self(v)
    }
}

impl Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParameterVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Scratch buffers for one forward/backward pass.
#[derive(Clone, Debug)]
pub struct Workspace {
    /// `acts[l]` is the input to layer `l`; the last entry is the output.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Workspace {
    pub fn new(arch: &Architecture) -> Self {
        let shapes = arch.layer_shapes();
        let mut acts = vec![vec![0.0; arch.input_dim]];
        acts.extend(shapes.iter().map(|&(_, o)| vec![0.0; o]));
        let pre = arch.hidden_widths.iter().map(|&w| vec![0.0; w]).collect();
        let widest = shapes.iter().map(|&(i, o)| i.max(o)).max().unwrap_or(1);
        Self { acts, pre, delta: Vec::with_capacity(widest), delta_prev: Vec::with_capacity(widest) }
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least one layer")
    }

    /// Hidden pre-activations of layer `l` from the last forward pass.
    pub fn pre_activation(&self, l: usize) -> &[f64] {
        &self.pre[l]
    }

    /// Input to layer `l` from the last forward pass.
    pub fn layer_input(&self, l: usize) -> &[f64] {
        &self.acts[l]
    }
}

/// Evaluates the network, leaving intermediates in `ws`.
pub fn forward_ws<'w>(
    arch: &Architecture,
    layout: &Layout,
    theta: &[f64],
    x: &[f64],
    ws: &'w mut Workspace,
) -> &'w [f64] {
    ws.acts[0].copy_from_slice(x);
    let last = layout.layers.len() - 1;
    for (li, l) in layout.layers.iter().enumerate() {
        let (before, after) = ws.acts.split_at_mut(li + 1);
        let input = &before[li];
        let out = &mut after[0];
        for j in 0..l.fan_out {
            let w = &theta[l.weight_offset + j * l.fan_in..l.weight_offset + (j + 1) * l.fan_in];
            out[j] = theta[l.bias_offset + j] + crate::numerics::dot(w, input);
        }
        if li < last {
            ws.pre[li].copy_from_slice(out);
            for v in out.iter_mut() {
                *v = arch.activation.apply(*v);
            }
        }
    }
    ws.output()
}

/// Accumulates `grad += Jᵀ d_out` using intermediates from the last
/// [`forward_ws`] call.
pub fn backward_ws(
    arch: &Architecture,
    layout: &Layout,
    theta: &[f64],
    ws: &mut Workspace,
    d_out: &[f64],
    grad: &mut [f64],
) {
    ws.delta.clear();
    ws.delta.extend_from_slice(d_out);
    for li in (0..layout.layers.len()).rev() {
        let l = &layout.layers[li];
        let input = &ws.acts[li];
        for j in 0..l.fan_out {
            let d = ws.delta[j];
            if d == 0.0 {
                continue;
            }
            grad[l.bias_offset + j] += d;
            let g = &mut grad[l.weight_offset + j * l.fan_in..l.weight_offset + (j + 1) * l.fan_in];
            for (gi, &ai) in g.iter_mut().zip(input) {
                *gi += d * ai;
            }
        }
        if li == 0 {
            break;
        }
        ws.delta_prev.clear();
        ws.delta_prev.resize(l.fan_in, 0.0);
        for j in 0..l.fan_out {
            let d = ws.delta[j];
            if d == 0.0 {
                continue;
            }
            let w = &theta[l.weight_offset + j * l.fan_in..l.weight_offset + (j + 1) * l.fan_in];
            for (dp, &wi) in ws.delta_prev.iter_mut().zip(w) {
                *dp += d * wi;
            }
        }
        let pre = &ws.pre[li - 1];
        for ((dp, &a), &phi) in ws.delta_prev.iter_mut().zip(pre).zip(&ws.acts[li]) {
            *dp *= arch.activation.derivative_given(a, phi);
        }
        std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
    }
}

/// Network output `f_θ(x)`.
pub fn forward(arch: &Architecture, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    arch.check_params(theta)?;
    if x.len() != arch.input_dim {
        return Err(Error::DimensionMismatch { context: "forward input", expected: arch.input_dim, got: x.len() });
    }
    let layout = arch.layout();
    let mut ws = Workspace::new(arch);
    Ok(forward_ws(arch, &layout, theta, x, &mut ws).to_vec())
}

/// Jacobian of the outputs with respect to θ: one row of length P per output.
pub fn param_gradient(arch: &Architecture, theta: &[f64], x: &[f64]) -> Result<Vec<Vec<f64>>> {
    arch.check_params(theta)?;
    if x.len() != arch.input_dim {
        return Err(Error::DimensionMismatch { context: "param_gradient input", expected: arch.input_dim, got: x.len() });
    }
    let layout = arch.layout();
    let mut ws = Workspace::new(arch);
    forward_ws(arch, &layout, theta, x, &mut ws);
    let k = arch.output_dim;
    let mut rows = Vec::with_capacity(k);
    for out in 0..k {
        let mut d_out = vec![0.0; k];
        d_out[out] = 1.0;
        let mut g = vec![0.0; theta.len()];
        backward_ws(arch, &layout, theta, &mut ws, &d_out, &mut g);
        rows.push(g);
    }
    Ok(rows)
}

/// Diagonal Gaussian prior stored as per-parameter precisions.
///
/// A precision of exactly zero marks an improper flat prior on that
/// coordinate; it contributes nothing to the log density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub precision: Vec<f64>,
}

impl PriorSpec {
    pub fn from_variances(variances: &[f64]) -> Result<Self> {
        if variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Config("prior variances must be positive and finite".into()));
        }
        Ok(Self { precision: variances.iter().map(|v| 1.0 / v).collect() })
    }

    pub fn from_precisions(precision: Vec<f64>) -> Result<Self> {
        if precision.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Config("prior precisions must be finite and non-negative".into()));
        }
        Ok(Self { precision })
    }

    /// `N(0, ω²)` on every parameter.
    pub fn uniform(arch: &Architecture, omega: f64) -> Self {
        Self { precision: vec![1.0 / (omega * omega); arch.num_params()] }
    }

    /// `N(0, 1)` on biases and `N(0, ω²/fan_in)` on weights.
    pub fn fan_in_scaled(arch: &Architecture, omega: f64) -> Self {
        let mut precision = vec![1.0; arch.num_params()];
        for l in arch.layout().layers {
            let p = l.fan_in as f64 / (omega * omega);
            precision[l.weight_offset..l.bias_offset].iter_mut().for_each(|v| *v = p);
        }
        Self { precision }
    }

    /// Copy with a flat (zero-precision) prior on every parameter of layer `layer`.
    pub fn with_flat_layer(&self, arch: &Architecture, layer: usize) -> Self {
        let mut out = self.clone();
        let l = arch.layout().layers[layer];
        out.precision[l.weight_offset..l.end()].iter_mut().for_each(|v| *v = 0.0);
        out
    }

    /// Prior restricted to the parameter range `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self { precision: self.precision[start..end].to_vec() }
    }

    pub fn len(&self) -> usize {
        self.precision.len()
    }

    pub fn is_empty(&self) -> bool {
        self.precision.is_empty()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.precision.iter().map(|p| 1.0 / p).collect()
    }

    pub fn is_proper(&self) -> bool {
        self.precision.iter().all(|&p| p > 0.0)
    }
}

pub fn log_prior(theta: &[f64], prior: &PriorSpec) -> Result<f64> {
    check_prior(theta, prior)?;
    Ok(theta
        .iter()
        .zip(&prior.precision)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&t, &p)| -0.5 * (LN_2PI - p.ln()) - 0.5 * p * t * t)
        .sum())
}

pub fn grad_log_prior(theta: &[f64], prior: &PriorSpec) -> Result<Vec<f64>> {
    check_prior(theta, prior)?;
    Ok(theta.iter().zip(&prior.precision).map(|(&t, &p)| -p * t).collect())
}

fn check_prior(theta: &[f64], prior: &PriorSpec) -> Result<()> {
    if theta.len() != prior.len() {
        return Err(Error::DimensionMismatch { context: "prior", expected: prior.len(), got: theta.len() });
    }
    Ok(())
}

/// Homoscedastic Gaussian observation noise, parameterised by `log σ_o²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodSpec {
    pub log_noise_var: f64,
    pub trainable: bool,
}

impl LikelihoodSpec {
    pub fn trainable(log_noise_var: f64) -> Self {
        Self { log_noise_var, trainable: true }
    }

    /// Fixed noise standard deviation.
    pub fn fixed_std(sigma: f64) -> Self {
        Self { log_noise_var: (sigma * sigma).ln(), trainable: false }
    }

    pub fn noise_var(&self) -> f64 {
        self.log_noise_var.exp()
    }
}

/// A log density with its gradient with respect to θ and `log σ_o²`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogDensity {
    pub value: f64,
    pub grad: Vec<f64>,
    pub grad_log_noise: f64,
}

/// Datapoints per parallel chunk for likelihood sums.
const LIK_CHUNK: usize = 64;

/// Log likelihood summed over `rows` of `data`, multiplied by `scale`
/// (use `N / |batch|` for an unbiased minibatch estimate).
pub fn log_likelihood_rows(
    arch: &Architecture,
    theta: &[f64],
    data: &Dataset,
    rows: &[usize],
    scale: f64,
    lik: &LikelihoodSpec,
) -> Result<LogDensity> {
    arch.check_params(theta)?;
    check_data(arch, data)?;
    let layout = arch.layout();
    let noise = lik.noise_var();
    let k = arch.output_dim as f64;
    let parts = par::map(&par::chunks(rows.len(), LIK_CHUNK), |&(s, e)| {
        let mut ws = Workspace::new(arch);
        let mut grad = vec![0.0; theta.len()];
        let mut sq = 0.0;
        let mut d_out = vec![0.0; arch.output_dim];
        for &n in &rows[s..e] {
            let out = forward_ws(arch, &layout, theta, data.x.row(n), &mut ws);
            for (kk, (&f, &y)) in out.iter().zip(data.y.row(n)).enumerate() {
                let r = y - f;
                sq += r * r;
                d_out[kk] = scale * r / noise;
            }
            backward_ws(arch, &layout, theta, &mut ws, &d_out, &mut grad);
        }
        (sq, grad)
    });
    let mut grad = vec![0.0; theta.len()];
    let mut sq = 0.0;
    for (s, g) in parts {
        sq += s;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let n = rows.len() as f64;
    let value = scale * (-0.5 * n * k * (LN_2PI + lik.log_noise_var) - 0.5 * sq / noise);
    let grad_log_noise = scale * (-0.5 * n * k + 0.5 * sq / noise);
    Ok(LogDensity { value, grad, grad_log_noise })
}

/// `Σₙ log N(yₙ; f_θ(xₙ), σ_o² I)` and its gradients.
pub fn log_likelihood(arch: &Architecture, theta: &[f64], data: &Dataset, lik: &LikelihoodSpec) -> Result<LogDensity> {
    if data.is_empty() {
        return Err(Error::Config("log_likelihood needs a nonempty dataset".into()));
    }
    let rows: Vec<usize> = (0..data.len()).collect();
    log_likelihood_rows(arch, theta, data, &rows, 1.0, lik)
}

/// Unnormalised log posterior: likelihood plus prior.
pub fn log_joint(
    arch: &Architecture,
    theta: &[f64],
    data: &Dataset,
    prior: &PriorSpec,
    lik: &LikelihoodSpec,
) -> Result<LogDensity> {
    let mut ll = log_likelihood(arch, theta, data, lik)?;
    ll.value += log_prior(theta, prior)?;
    for ((g, &t), &p) in ll.grad.iter_mut().zip(theta).zip(&prior.precision) {
        *g -= p * t;
    }
    Ok(ll)
}

fn check_data(arch: &Architecture, data: &Dataset) -> Result<()> {
    if data.x.cols() != arch.input_dim {
        return Err(Error::DimensionMismatch { context: "dataset inputs", expected: arch.input_dim, got: data.x.cols() });
    }
    if data.y.cols() != arch.output_dim {
        return Err(Error::DimensionMismatch { context: "dataset targets", expected: arch.output_dim, got: data.y.cols() });
    }
    Ok(())
}

/// Gaussian log density `log N(y; mean, var)`.
#[inline]
pub fn gaussian_log_density(y: f64, mean: f64, var: f64) -> f64 {
    let r = y - mean;
    -0.5 * (2.0 * PI * var).ln() - 0.5 * r * r / var
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn tiny_data(arch: &Architecture, n: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed);
        let x = Matrix::from_vec(n, arch.input_dim, rng.normal_vec(n * arch.input_dim)).unwrap();
        let y = Matrix::from_vec(n, arch.output_dim, rng.normal_vec(n * arch.output_dim)).unwrap();
        Dataset::new("tiny", x, y).unwrap()
    }

    /// Straight-line evaluation of a 1HL scalar-input network, written
    /// without the layout machinery.
    fn naive_1hl(theta: &[f64], h: usize, act: Activation, x: f64) -> f64 {
        let u = &theta[0..h];
        let v = &theta[h..2 * h];
        let w = &theta[2 * h..3 * h];
        let b = theta[3 * h];
        let mut y = b;
        for i in 0..h {
            y += w[i] * act.apply(u[i] * x + v[i]);
        }
        y
    }

    #[test]
    fn zero_params_give_zero_output() {
        let arch = Architecture::new(3, vec![4, 5], 2, Activation::Tanh).unwrap();
        let out = forward(&arch, &vec![0.0; arch.num_params()], &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn one_unit_tanh_is_odd_at_zero() {
        let arch = Architecture::one_hidden(1, 1, Activation::Tanh);
        // U=1, v=0, W=1, b=0
        assert_eq!(forward(&arch, &[1.0, 0.0, 1.0, 0.0], &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn matches_straight_line_evaluation() {
        let h = 7;
        for act in [Activation::Tanh, Activation::Relu] {
            let arch = Architecture::one_hidden(1, h, act);
            let mut rng = RngStream::new(11);
            for _ in 0..20 {
                let theta = rng.normal_vec(arch.num_params());
                let x = rng.normal();
                let a = forward(&arch, &theta, &[x]).unwrap()[0];
                let b = naive_1hl(&theta, h, act, x);
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parameter_count_and_layout() {
        let arch = Architecture::new(13, vec![50, 50], 1, Activation::Relu).unwrap();
        assert_eq!(arch.num_params(), 14 * 50 + 51 * 50 + 51);
        assert_eq!(arch.layout().len, arch.num_params());
        assert!(Architecture::new(1, vec![0], 1, Activation::Relu).is_err());
    }

    #[test]
    fn unflatten_round_trip() {
        let arch = Architecture::new(3, vec![4], 2, Activation::Relu).unwrap();
        let theta = ParameterVector(RngStream::new(5).normal_vec(arch.num_params()));
        let layers = theta.unflatten(&arch).unwrap();
        assert_eq!(layers[0].weights.rows(), 4);
        assert_eq!(layers[0].weights.cols(), 3);
        assert_eq!(ParameterVector::flatten(&layers), theta);
    }

    #[test]
    fn output_bias_gradient_is_one() {
        let arch = Architecture::one_hidden(2, 3, Activation::Tanh);
        let theta = RngStream::new(1).normal_vec(arch.num_params());
        let g = param_gradient(&arch, &theta, &[0.3, -0.7]).unwrap();
        let last = arch.layout().layers[1];
        assert_eq!(g[0][last.bias_offset], 1.0);

        let zero = vec![0.0; arch.num_params()];
        let g0 = param_gradient(&arch, &zero, &[0.3, -0.7]).unwrap();
        for j in 0..3 {
            assert_eq!(g0[0][last.weight_index(0, j)], 0.0);
        }
        assert_eq!(g0[0][last.bias_offset], 1.0);
    }

    #[test]
    fn prior_values_by_hand() {
        let p = PriorSpec::from_variances(&[1.0, 1.0]).unwrap();
        assert!((log_prior(&[0.0, 0.0], &p).unwrap() + (2.0 * PI).ln()).abs() < 1e-14);
        let p1 = PriorSpec::from_variances(&[1.0]).unwrap();
        assert!((log_prior(&[2.0], &p1).unwrap() - (-0.5 * (2.0 * PI).ln() - 2.0)).abs() < 1e-14);
        assert_eq!(grad_log_prior(&[2.0], &p1).unwrap(), vec![-2.0]);
    }

    #[test]
    fn fan_in_prior_scaling() {
        let arch = Architecture::one_hidden(1, 50, Activation::Tanh);
        let p = PriorSpec::fan_in_scaled(&arch, 4.0);
        let l = arch.layout().layers;
        assert!((p.precision[l[0].weight_offset] - 1.0 / 16.0).abs() < 1e-15);
        assert!((p.precision[l[1].weight_offset] - 50.0 / 16.0).abs() < 1e-15);
        assert_eq!(p.precision[l[0].bias_offset], 1.0);
        assert_eq!(p.precision[l[1].bias_offset], 1.0);
    }

    #[test]
    fn single_point_likelihood_by_hand() {
        let arch = Architecture::linear(1);
        // f(x) = 2x + 1, x = 1 → 3
        let theta = [2.0, 1.0];
        let data = Dataset::new("one", Matrix::from_rows(&[vec![1.0]]), Matrix::from_rows(&[vec![3.0]])).unwrap();
        let ll = log_likelihood(&arch, &theta, &data, &LikelihoodSpec::fixed_std(1.0)).unwrap();
        assert!((ll.value + 0.5 * (2.0 * PI).ln()).abs() < 1e-14);

        let data2 = Dataset::new("one", Matrix::from_rows(&[vec![1.0]]), Matrix::from_rows(&[vec![3.5]])).unwrap();
        let lik = LikelihoodSpec::fixed_std(0.3);
        let ll2 = log_likelihood(&arch, &theta, &data2, &lik).unwrap();
        let expect = -0.5 * (2.0 * PI * 0.09).ln() - 0.25 / (2.0 * 0.09);
        assert!((ll2.value - expect).abs() < 1e-12);
    }

    #[test]
    fn joint_is_additive_and_flat_prior_limit() {
        let arch = Architecture::one_hidden(2, 3, Activation::Tanh);
        let data = tiny_data(&arch, 1, 2);
        let theta = RngStream::new(3).normal_vec(arch.num_params());
        let prior = PriorSpec::uniform(&arch, 1.5);
        let lik = LikelihoodSpec::trainable(-0.7);
        let j = log_joint(&arch, &theta, &data, &prior, &lik).unwrap();
        let l = log_likelihood(&arch, &theta, &data, &lik).unwrap();
        let p = log_prior(&theta, &prior).unwrap();
        assert!((j.value - l.value - p).abs() < 1e-12);

        let weak = PriorSpec::from_precisions(vec![1e-12; arch.num_params()]).unwrap();
        let jw = log_joint(&arch, &theta, &data, &weak, &lik).unwrap();
        for (a, b) in jw.grad.iter().zip(&l.grad) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn tanh_sign_flip_symmetry() {
        // negating input weights, input biases and output weights of a 1HL
        // tanh net with zero output bias leaves the output unchanged
        let h = 6;
        let arch = Architecture::one_hidden(2, h, Activation::Tanh);
        let mut rng = RngStream::new(21);
        let mut theta = rng.normal_vec(arch.num_params());
        let out = arch.layout().layers[1];
        theta[out.bias_offset] = 0.0;
        let flipped: Vec<f64> = theta
            .iter()
            .enumerate()
            .map(|(i, &t)| if i < out.bias_offset { -t } else { t })
            .collect();
        for _ in 0..10 {
            let x = rng.normal_vec(2);
            let a = forward(&arch, &theta, &x).unwrap()[0];
            let b = forward(&arch, &flipped, &x).unwrap()[0];
            assert_eq!(a.abs(), b.abs());
        }
    }

    #[test]
    fn dimension_errors() {
        let arch = Architecture::one_hidden(2, 3, Activation::Tanh);
        assert!(forward(&arch, &[0.0; 3], &[0.0, 0.0]).is_err());
        assert!(forward(&arch, &vec![0.0; arch.num_params()], &[0.0]).is_err());
    }
}
