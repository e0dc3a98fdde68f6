//! The one-dimensional two-cluster study.
//!
//! Every method is fitted to the same noisy sine data and its predictive
//! mean and function standard deviation (observation noise excluded) are
//! read off a probe grid. The ratio of the mean standard deviation inside
//! the gap to that over the clusters summarises uncertainty between the clusters.

use serde::{Deserialize, Serialize};

use crate::analysis::{self, linspace, uncertainty_ratio, BlrLastLayer};
use crate::bench::{Fitted, Method};
use crate::data::{synth_sine, Dataset, SineTask};
use crate::error::{Error, Result};
use crate::hmc::{self, HmcConfig};
use crate::laplace;
use crate::model::{Activation, Architecture, LikelihoodSpec, PriorSpec};
use crate::numerics::{Matrix, RngStream};
use crate::vi::{self, FcviInit, GaussianFamily, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Synth1dConfig {
    pub task: SineTask,
    pub data_seed: u64,
    pub seed: u64,
    pub width: usize,
    pub activation: Activation,
    pub omega: f64,
    pub noise_std: f64,
    pub learning_rate: f64,
    pub fcvi_learning_rate: f64,
    pub epochs: usize,
    pub mc_train: usize,
    pub eval_samples: usize,
    pub hmc: HmcConfig,
    /// Probe grid `(lo, hi, points)`.
    pub grid: (f64, f64, usize),
}

impl Default for Synth1dConfig {
    fn default() -> Self {
        Self {
            task: SineTask::default(),
            data_seed: 0,
            seed: 0,
            width: 50,
            activation: Activation::Tanh,
            omega: 4.0,
            noise_std: 0.1,
            learning_rate: 0.001,
            fcvi_learning_rate: 0.001,
            epochs: 20_000,
            mc_train: 32,
            eval_samples: 100,
            hmc: HmcConfig::default(),
            grid: (-4.0, 4.0, 161),
        }
    }
}

impl Synth1dConfig {
    pub fn architecture(&self) -> Architecture {
        Architecture::one_hidden(1, self.width, self.activation)
    }

    pub fn prior(&self) -> PriorSpec {
        PriorSpec::fan_in_scaled(&self.architecture(), self.omega)
    }

    pub fn likelihood(&self) -> LikelihoodSpec {
        LikelihoodSpec::fixed_std(self.noise_std)
    }

    fn train_config(&self, lr: f64) -> TrainConfig {
        TrainConfig { epochs: self.epochs, batch_size: None, learning_rate: lr, mc_samples: self.mc_train, seed: self.seed }
    }

    pub fn dataset(&self) -> Result<Dataset> {
        synth_sine(&self.task, self.data_seed)
    }
}

/// Predictive summary of one method on the probe grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Synth1dResult {
    pub method: Method,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub function_std: Vec<f64>,
    pub uncertainty_ratio: f64,
    /// Method-specific scalars (acceptance rate, final objective, …).
    pub diagnostics: Vec<(String, f64)>,
}

fn grid_matrix(grid: &[f64]) -> Matrix {
    Matrix::from_vec(grid.len(), 1, grid.to_vec()).expect("column vector")
}

/// A fitted 1D model: one of the shared posterior kinds, or last-layer BLR.
#[derive(Clone, Debug)]
pub enum Synth1dFit {
    Model(Fitted),
    Blr(BlrLastLayer),
}

/// Fits `method` on the 1D task. `eval_rng` feeds diagnostics that need
/// Monte Carlo estimates.
pub fn fit_method(method: Method, cfg: &Synth1dConfig, eval_rng: &mut RngStream) -> Result<(Synth1dFit, Vec<(String, f64)>)> {
    let data = cfg.dataset()?;
    let arch = cfg.architecture();
    let prior = cfg.prior();
    let lik = cfg.likelihood();
    let mut diagnostics = Vec::new();
    let fitted = match method {
        Method::Map | Method::LaplaceLinearised | Method::LaplaceSampled => {
            let (theta, lik) = laplace::train_map(&arch, &data, &prior, &lik, &cfg.train_config(cfg.learning_rate))?;
            if method == Method::Map {
                Fitted::Point { theta: theta.0, lik }
            } else {
                let post = laplace::gauss_newton_precision(&arch, &theta, &data, &prior, lik.noise_var())?;
                diagnostics.push(("jitter".into(), post.precision_chol.jitter()));
                Fitted::Laplace { post, linearised: method == Method::LaplaceLinearised }
            }
        }
        Method::Mfvi => {
            let (q, lik) = vi::train_mfvi(&arch, &data, &prior, &lik, &cfg.train_config(cfg.learning_rate))?;
            let elbo = vi::elbo_estimate(&arch, &q, &data, &prior, &lik, cfg.eval_samples, eval_rng)?;
            diagnostics.push(("elbo".into(), elbo.value));
            Fitted::MeanField { q, lik }
        }
        Method::Fcvi => {
            let (q, lik) =
                vi::train_fcvi(&arch, &data, &prior, &lik, &cfg.train_config(cfg.fcvi_learning_rate), FcviInit::synthetic())?;
            let elbo = vi::elbo_estimate(&arch, &q, &data, &prior, &lik, cfg.eval_samples, eval_rng)?;
            diagnostics.push(("elbo".into(), elbo.value));
            Fitted::FullCov { q, lik }
        }
        Method::Hmc => {
            let init = laplace::map_init(&arch, cfg.seed);
            let hcfg = HmcConfig { seed: cfg.hmc.seed ^ cfg.seed, ..cfg.hmc.clone() };
            let out = hmc::run_bnn_chain(&arch, &data, &prior, &lik, init, &hcfg)?;
            diagnostics.push(("acceptance_rate".into(), out.acceptance_rate));
            diagnostics.push(("divergences".into(), out.divergences as f64));
            diagnostics.push(("log_density_ess".into(), hmc::effective_sample_size(&out.log_density_trace)));
            Fitted::Samples { samples: out.samples, lik }
        }
        Method::Blr => {
            let flat = prior.with_flat_layer(&arch, 0);
            let (theta, lik) = laplace::train_map(&arch, &data, &flat, &lik, &cfg.train_config(cfg.learning_rate))?;
            let l1 = arch.layout().layers[1];
            let blr = analysis::blr_last_layer(&arch, &theta, &data, &prior.precision[l1.weight_offset..l1.end()], lik.noise_var())?;
            return Ok((Synth1dFit::Blr(blr), diagnostics));
        }
    };
    Ok((Synth1dFit::Model(fitted), diagnostics))
}

/// Predictive mean and function std (noise excluded) at each row of `x`.
pub fn predict_grid(fit: &Synth1dFit, arch: &Architecture, x: &Matrix, eval_samples: usize, rng: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>)> {
    let samples = match fit {
        Synth1dFit::Blr(blr) => {
            let preds: Vec<_> = (0..x.rows()).map(|r| blr.predict(x.row(r))).collect::<Result<_>>()?;
            return Ok((preds.iter().map(|p| p.mean).collect(), preds.iter().map(|p| p.function_std()).collect()));
        }
        Synth1dFit::Model(Fitted::Laplace { post, linearised: true }) => {
            let preds = laplace::linearised_predictive_batch(post, arch, x)?;
            return Ok((preds.iter().map(|p| p.mean).collect(), preds.iter().map(|p| p.function_std()).collect()));
        }
        Synth1dFit::Model(Fitted::Point { theta, .. }) => vec![theta.clone()],
        Synth1dFit::Model(Fitted::Samples { samples, .. }) => samples.clone(),
        Synth1dFit::Model(Fitted::MeanField { q, .. }) => (0..eval_samples).map(|_| q.sample(rng)).collect(),
        Synth1dFit::Model(Fitted::FullCov { q, .. }) => (0..eval_samples).map(|_| q.sample(rng)).collect(),
        Synth1dFit::Model(Fitted::Laplace { post, .. }) => {
            (0..eval_samples).map(|_| laplace::laplace_sample(post, rng).0).collect()
        }
    };
    let preds = analysis::mc_predictive(arch, &samples, 1.0, x)?;
    Ok((preds.iter().map(|p| p.mean()).collect(), preds.iter().map(|p| p.function_std()).collect()))
}

/// Fits `method` and evaluates it on the probe grid.
pub fn run_method(method: Method, cfg: &Synth1dConfig) -> Result<Synth1dResult> {
    Ok(run_method_fitted(method, cfg)?.0)
}

/// As [`run_method`], also returning the fitted model.
pub fn run_method_fitted(method: Method, cfg: &Synth1dConfig) -> Result<(Synth1dResult, Synth1dFit)> {
    let arch = cfg.architecture();
    let grid = linspace(cfg.grid.0, cfg.grid.1, cfg.grid.2);
    let x = grid_matrix(&grid);
    let mut eval_rng = RngStream::substream(cfg.seed, 7);
    let (fit, diagnostics) = fit_method(method, cfg, &mut eval_rng)?;
    let (mean, function_std) = predict_grid(&fit, &arch, &x, cfg.eval_samples, &mut eval_rng)?;
    if mean.iter().chain(&function_std).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteLoss { iteration: 0, param_norm: f64::NAN });
    }
    let gap = cfg.task.gap();
    let uncertainty_ratio = if method == Method::Map {
        f64::NAN
    } else {
        uncertainty_ratio(&grid, &function_std, &cfg.task.clusters, gap)?
    };
    Ok((Synth1dResult { method, grid, mean, function_std, uncertainty_ratio, diagnostics }, fit))
}
