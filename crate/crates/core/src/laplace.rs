//! MAP training and the Gauss-Newton Laplace approximation.
//!
//! The posterior covariance is `A⁻¹` with
//! `A = (1/σ_o²) Σₙ g(xₙ) g(xₙ)ᵀ + diag(p)`, where `g` is the gradient of the
//! network output with respect to the parameters. `A` is kept only through
//! its Cholesky factor; predictive variances use triangular solves.

use serde::{Deserialize, Serialize};

use crate::analysis::GaussianPredictive;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{self, Architecture, LikelihoodSpec, ParameterVector, PriorSpec, Workspace};
use crate::numerics::{cholesky, norm2, CholeskyFactor, Matrix, RngStream};
use crate::par;
use crate::vi::{draw_batch, AdamState, MeanFieldPosterior, TrainConfig};

/// Gaussian posterior centred at `θ_MAP` with Gauss-Newton precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplacePosterior {
    pub theta_map: ParameterVector,
    pub precision: Matrix,
    pub precision_chol: CholeskyFactor,
    pub noise_var: f64,
}

/// Per-step snapshot for MAP observers.
pub struct MapEvent<'a> {
    pub step: usize,
    pub epoch_done: Option<usize>,
    pub theta: &'a [f64],
    pub likelihood: &'a LikelihoodSpec,
    pub objective: f64,
}

/// Starting point for MAP: weights `N(0, 1/(4·fan_out))`, biases zero.
pub fn map_init(arch: &Architecture, seed: u64) -> Vec<f64> {
    MeanFieldPosterior::init_for(arch, 1.0, &mut RngStream::new(seed)).mean
}

/// Adam ascent on the (minibatch-rescaled) log joint.
pub fn train_map(
    arch: &Architecture,
    data: &Dataset,
    prior: &PriorSpec,
    lik: &LikelihoodSpec,
    config: &TrainConfig,
) -> Result<(ParameterVector, LikelihoodSpec)> {
    let init = map_init(arch, config.seed);
    train_map_from(arch, data, prior, lik, config, init, &mut |_| {})
}

pub fn train_map_from(
    arch: &Architecture,
    data: &Dataset,
    prior: &PriorSpec,
    lik: &LikelihoodSpec,
    config: &TrainConfig,
    init: Vec<f64>,
    observer: &mut dyn FnMut(&MapEvent<'_>),
) -> Result<(ParameterVector, LikelihoodSpec)> {
    config.validate()?;
    arch.check_params(&init)?;
    if prior.len() != init.len() {
        return Err(Error::DimensionMismatch { context: "train_map prior", expected: init.len(), got: prior.len() });
    }
    let p = init.len();
    let n = data.len();
    let mut rng = RngStream::substream(config.seed, 1);
    let mut lik = *lik;
    let mut params = init;
    params.push(lik.log_noise_var);
    let mut adam = AdamState::new(p + 1, config.learning_rate);
    let per_epoch = config.steps_per_epoch(n);
    let mut step = 0;
    for epoch in 1..=config.epochs {
        for s in 0..per_epoch {
            let rows = draw_batch(n, config.batch_size, &mut rng);
            let scale = n as f64 / rows.len() as f64;
            let theta = &params[..p];
            let mut ll = model::log_likelihood_rows(arch, theta, data, &rows, scale, &lik)?;
            let objective = ll.value + model::log_prior(theta, prior)?;
            if !objective.is_finite() {
                return Err(Error::NonFiniteLoss { iteration: step, param_norm: norm2(&params) });
            }
            for ((g, &t), &pr) in ll.grad.iter_mut().zip(theta).zip(&prior.precision) {
                *g -= pr * t;
            }
            ll.grad.push(if lik.trainable { ll.grad_log_noise } else { 0.0 });
            adam.ascend(&mut params, &ll.grad);
            if lik.trainable {
                lik.log_noise_var = params[p];
            }
            step += 1;
            let epoch_done = (s + 1 == per_epoch).then_some(epoch);
            observer(&MapEvent { step, epoch_done, theta: &params[..p], likelihood: &lik, objective });
        }
    }
    if params.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss { iteration: step, param_norm: norm2(&params) });
    }
    params.truncate(p);
    Ok((ParameterVector(params), lik))
}

fn require_scalar_output(arch: &Architecture) -> Result<()> {
    if arch.output_dim != 1 {
        return Err(Error::ArchitectureUnsupported(format!(
            "Laplace needs a single output, got {}",
            arch.output_dim
        )));
    }
    Ok(())
}

/// Rows per partial curvature matrix.
const CURVATURE_CHUNK: usize = 64;

/// Assembles and factorises the Gauss-Newton precision over all of `data`.
pub fn gauss_newton_precision(
    arch: &Architecture,
    theta_map: &[f64],
    data: &Dataset,
    prior: &PriorSpec,
    noise_var: f64,
) -> Result<LaplacePosterior> {
    require_scalar_output(arch)?;
    arch.check_params(theta_map)?;
    if prior.len() != theta_map.len() {
        return Err(Error::DimensionMismatch { context: "Laplace prior", expected: theta_map.len(), got: prior.len() });
    }
    if data.is_empty() {
        return Err(Error::Config("Laplace curvature needs a nonempty dataset".into()));
    }
    let p = theta_map.len();
    let layout = arch.layout();
    let parts = par::map(&par::chunks(data.len(), CURVATURE_CHUNK), |&(s, e)| {
        let mut ws = Workspace::new(arch);
        let mut g = vec![0.0; p];
        // upper triangle only, mirrored after the sum
        let mut acc = vec![0.0; p * p];
        for n in s..e {
            model::forward_ws(arch, &layout, theta_map, data.x.row(n), &mut ws);
            g.iter_mut().for_each(|v| *v = 0.0);
            model::backward_ws(arch, &layout, theta_map, &mut ws, &[1.0], &mut g);
            for i in 0..p {
                let gi = g[i];
                if gi == 0.0 {
                    continue;
                }
                let row = &mut acc[i * p..(i + 1) * p];
                for j in i..p {
                    row[j] += gi * g[j];
                }
            }
        }
        acc
    });
    let mut a = Matrix::zeros(p, p);
    let buf = a.as_mut_slice();
    for part in parts {
        buf.iter_mut().zip(&part).for_each(|(x, y)| *x += y);
    }
    let inv_noise = 1.0 / noise_var;
    for i in 0..p {
        for j in i..p {
            let v = buf[i * p + j] * inv_noise;
            buf[i * p + j] = v;
            buf[j * p + i] = v;
        }
        buf[i * p + i] += prior.precision[i];
    }
    let precision_chol = cholesky(&a)?;
    if precision_chol.jitter() > 0.0 {
        log::info!("Laplace precision needed jitter {:.3e}", precision_chol.jitter());
    }
    Ok(LaplacePosterior { theta_map: ParameterVector(theta_map.to_vec()), precision: a, precision_chol, noise_var })
}

impl LaplacePosterior {
    pub fn dim(&self) -> usize {
        self.theta_map.len()
    }

    /// `θ_MAP + L⁻ᵀ z` for a given standard-normal `z`.
    pub fn transform(&self, z: &[f64]) -> Result<Vec<f64>> {
        let d = self.precision_chol.solve_upper(z)?;
        Ok(self.theta_map.iter().zip(d).map(|(m, v)| m + v).collect())
    }

    /// `g(x)ᵀ A⁻¹ g(x)`: predictive variance of the linearised function.
    pub fn function_variance(&self, g: &[f64]) -> Result<f64> {
        let v = self.precision_chol.solve_lower(g)?;
        Ok(v.iter().map(|x| x * x).sum())
    }
}

/// Draws `θ ~ N(θ_MAP, A⁻¹)`.
pub fn laplace_sample(post: &LaplacePosterior, rng: &mut RngStream) -> ParameterVector {
    let z = rng.normal_vec(post.dim());
    ParameterVector(post.transform(&z).expect("dimensions fixed at construction"))
}

/// Linearised predictive `N(f_MAP(x), σ_o² + gᵀ A⁻¹ g)`.
pub fn linearised_predictive(post: &LaplacePosterior, arch: &Architecture, x: &[f64]) -> Result<GaussianPredictive> {
    require_scalar_output(arch)?;
    arch.check_params(&post.theta_map)?;
    if x.len() != arch.input_dim {
        return Err(Error::DimensionMismatch { context: "linearised_predictive", expected: arch.input_dim, got: x.len() });
    }
    let layout = arch.layout();
    let mut ws = Workspace::new(arch);
    let mean = model::forward_ws(arch, &layout, &post.theta_map, x, &mut ws)[0];
    let mut g = vec![0.0; post.dim()];
    model::backward_ws(arch, &layout, &post.theta_map, &mut ws, &[1.0], &mut g);
    let fvar = post.function_variance(&g)?;
    Ok(GaussianPredictive { mean, var: post.noise_var + fvar, noise_var: post.noise_var })
}

/// [`linearised_predictive`] at every row of `x`, in parallel.
pub fn linearised_predictive_batch(
    post: &LaplacePosterior,
    arch: &Architecture,
    x: &Matrix,
) -> Result<Vec<GaussianPredictive>> {
    par::map_range(x.rows(), |r| linearised_predictive(post, arch, x.row(r))).into_iter().collect()
}
