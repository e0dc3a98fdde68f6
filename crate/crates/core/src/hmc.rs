//! Hamiltonian Monte Carlo with an identity mass matrix.
//!
//! Step size and trajectory length are redrawn uniformly every iteration.
//! Divergent trajectories (non-finite energy) count as rejections.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{self, Architecture, LikelihoodSpec, PriorSpec};
use crate::numerics::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    /// Inclusive range for the number of leapfrog steps.
    pub leapfrog_steps: (usize, usize),
    /// Interval for the step size.
    pub step_size: (f64, f64),
    pub burn_in: usize,
    /// Iterations run after burn-in.
    pub n_samples: usize,
    /// Evenly spaced draws retained from the post-burn-in iterations.
    pub keep: usize,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self { leapfrog_steps: (5, 10), step_size: (0.001, 0.0015), burn_in: 10_000, n_samples: 20_000, keep: 100, seed: 0 }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        let (l0, l1) = self.leapfrog_steps;
        let (e0, e1) = self.step_size;
        if l0 == 0 || l0 > l1 || !(e0 > 0.0) || e0 > e1 || self.n_samples == 0 || self.keep == 0 || self.keep > self.n_samples
        {
            return Err(Error::Config(format!("invalid HMC config {self:?}")));
        }
        Ok(())
    }
}

/// Unnormalised log density with gradient.
pub trait Target: Sync {
    fn dim(&self) -> usize;
    fn log_density(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Posterior of a network under a fixed likelihood.
pub struct BnnTarget<'a> {
    pub arch: &'a Architecture,
    pub data: &'a Dataset,
    pub prior: &'a PriorSpec,
    pub lik: LikelihoodSpec,
}

impl Target for BnnTarget<'_> {
    fn dim(&self) -> usize {
        self.arch.num_params()
    }

    fn log_density(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let d = model::log_joint(self.arch, theta, self.data, self.prior, &self.lik)?;
        Ok((d.value, d.grad))
    }
}

/// Zero-mean Gaussian with diagonal precision; handy for tests.
pub struct GaussianTarget {
    pub mean: Vec<f64>,
    pub precision: Vec<f64>,
}

impl Target for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut v = 0.0;
        let mut g = Vec::with_capacity(theta.len());
        for ((t, m), p) in theta.iter().zip(&self.mean).zip(&self.precision) {
            let d = t - m;
            v -= 0.5 * p * d * d;
            g.push(-p * d);
        }
        Ok((v, g))
    }
}

/// Position, momentum and cached density after a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub theta: Vec<f64>,
    pub momentum: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
}

/// Leapfrog integration: half kick, `steps` alternating drifts and kicks,
/// final half kick. Returns `None` if the state becomes non-finite.
pub fn leapfrog(
    target: &dyn Target,
    theta: &[f64],
    grad: &[f64],
    momentum: &[f64],
    eps: f64,
    steps: usize,
) -> Result<Option<Trajectory>> {
    let mut th = theta.to_vec();
    let mut r: Vec<f64> = momentum.iter().zip(grad).map(|(r, g)| r + 0.5 * eps * g).collect();
    let mut lp = 0.0;
    let mut g = Vec::new();
    for s in 0..steps {
        th.iter_mut().zip(&r).for_each(|(t, r)| *t += eps * r);
        let (v, gg) = target.log_density(&th)?;
        if !v.is_finite() || gg.iter().any(|x| !x.is_finite()) {
            return Ok(None);
        }
        lp = v;
        g = gg;
        let w = if s + 1 == steps { 0.5 * eps } else { eps };
        r.iter_mut().zip(&g).for_each(|(r, g)| *r += w * g);
    }
    Ok(Some(Trajectory { theta: th, momentum: r, log_density: lp, grad: g }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub theta: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
    pub accepted: usize,
    pub proposed: usize,
    pub divergent: usize,
}

impl ChainState {
    pub fn new(target: &dyn Target, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != target.dim() {
            return Err(Error::DimensionMismatch { context: "ChainState", expected: target.dim(), got: theta.len() });
        }
        let (log_density, grad) = target.log_density(&theta)?;
        Ok(Self { theta, log_density, grad, accepted: 0, proposed: 0, divergent: 0 })
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

fn kinetic(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

/// One HMC iteration.
pub fn hmc_step(target: &dyn Target, state: &mut ChainState, config: &HmcConfig, rng: &mut RngStream) -> Result<bool> {
    let r0 = rng.normal_vec(state.theta.len());
    let eps = rng.uniform_range(config.step_size.0, config.step_size.1);
    let steps = rng.int_inclusive(config.leapfrog_steps.0, config.leapfrog_steps.1);
    let u = rng.uniform();
    state.proposed += 1;
    let Some(end) = leapfrog(target, &state.theta, &state.grad, &r0, eps, steps)? else {
        state.divergent += 1;
        return Ok(false);
    };
    let h0 = -state.log_density + kinetic(&r0);
    let h1 = -end.log_density + kinetic(&end.momentum);
    let dh = h1 - h0;
    if !dh.is_finite() {
        state.divergent += 1;
        return Ok(false);
    }
    let accept = dh <= 0.0 || u < (-dh).exp();
    if accept {
        state.theta = end.theta;
        state.log_density = end.log_density;
        state.grad = end.grad;
        state.accepted += 1;
    }
    Ok(accept)
}

/// Output of [`run_chain`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub samples: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
    pub divergences: usize,
    /// Log density at every post-burn-in iteration.
    pub log_density_trace: Vec<f64>,
}

/// Indices of `keep` evenly spaced draws out of `n`.
pub fn thin_indices(n: usize, keep: usize) -> Vec<usize> {
    (0..keep).map(|i| (i * n) / keep + n / (2 * keep)).map(|i| i.min(n - 1)).collect()
}

/// Runs burn-in then `n_samples` iterations, keeping `keep` evenly spaced draws.
pub fn run_chain(target: &dyn Target, init: Vec<f64>, config: &HmcConfig) -> Result<ChainOutput> {
    config.validate()?;
    let mut rng = RngStream::new(config.seed);
    let mut state = ChainState::new(target, init)?;
    for _ in 0..config.burn_in {
        hmc_step(target, &mut state, config, &mut rng)?;
    }
    let burn_acc = state.acceptance_rate();
    state.accepted = 0;
    state.proposed = 0;
    let keep = thin_indices(config.n_samples, config.keep);
    let mut next = 0;
    let mut samples = Vec::with_capacity(config.keep);
    let mut trace = Vec::with_capacity(config.n_samples);
    for it in 0..config.n_samples {
        hmc_step(target, &mut state, config, &mut rng)?;
        trace.push(state.log_density);
        while next < keep.len() && keep[next] == it {
            samples.push(state.theta.clone());
            next += 1;
        }
    }
    let acceptance_rate = state.acceptance_rate();
    log::info!("hmc: burn-in acceptance {burn_acc:.3}, sampling acceptance {acceptance_rate:.3}");
    if acceptance_rate < 0.01 {
        log::warn!("hmc acceptance collapsed to {acceptance_rate:.4}");
    }
    Ok(ChainOutput { samples, acceptance_rate, divergences: state.divergent, log_density_trace: trace })
}

/// HMC over a network posterior with the likelihood held fixed.
pub fn run_bnn_chain(
    arch: &Architecture,
    data: &Dataset,
    prior: &PriorSpec,
    lik: &LikelihoodSpec,
    init: Vec<f64>,
    config: &HmcConfig,
) -> Result<ChainOutput> {
    let target = BnnTarget { arch, data, prior, lik: *lik };
    run_chain(&target, init, config)
}

/// Effective sample size by Geyer's initial positive sequence.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let var = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * var);
    let mut sum = 0.0;
    let mut t = 0;
    let mut prev = f64::INFINITY;
    while t + 1 < n {
        let pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        // initial monotone sequence
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        t += 2;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64 * (n as f64).log10().max(1.0))
}

/// Split R-hat over chains of equal length.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let mut halves: Vec<&[f64]> = Vec::new();
    for c in chains {
        let h = c.len() / 2;
        halves.push(&c[..h]);
        halves.push(&c[h..2 * h]);
    }
    let m = halves.len() as f64;
    let n = halves.iter().map(|h| h.len()).min().unwrap_or(0) as f64;
    if n < 2.0 {
        return f64::NAN;
    }
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / h.len() as f64).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|v| (v - grand).powi(2)).sum::<f64>();
    let w = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}
