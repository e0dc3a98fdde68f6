//! JSON container for fitted posteriors.
//!
//! Layout of a file:
//!
//! ```json
//! {
//!   "format": "bnn-posterior/1",
//!   "architecture": { "input_dim": 1, "hidden_widths": [50], "output_dim": 1, "activation": "tanh" },
//!   "layout": [{ "fan_in": 1, "fan_out": 50, "weight_offset": 0, "bias_offset": 50 }, ...],
//!   "log_noise_var": -4.6,
//!   "seed": 0,
//!   "config_hash": "…",
//!   "normalizer": null,
//!   "posterior": { "kind": "mean-field", "mean": [...], "log_var": [...] }
//! }
//! ```
//!
//! `posterior.kind` is one of `point`, `mean-field`, `full-cov` (packed
//! row-major lower triangle, log diagonal), `laplace` (packed lower triangle
//! of the precision's Cholesky factor) or `samples`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::Fitted;
use crate::data::Normalizer;
use crate::error::{Error, Result};
use crate::laplace::LaplacePosterior;
use crate::model::{Architecture, LayerLayout, LikelihoodSpec, ParameterVector};
use crate::numerics::{CholeskyFactor, Matrix};
use crate::vi::{FullCovPosterior, MeanFieldPosterior, PackedLower};

pub const FORMAT: &str = "bnn-posterior/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PosteriorPayload {
    Point { theta: Vec<f64> },
    MeanField { mean: Vec<f64>, log_var: Vec<f64> },
    FullCov { mean: Vec<f64>, packed_scale: Vec<f64> },
    Laplace { theta_map: Vec<f64>, packed_precision_chol: Vec<f64>, jitter: f64, linearised: bool },
    Samples { samples: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub architecture: Architecture,
    pub layout: Vec<LayerLayout>,
    pub log_noise_var: f64,
    pub seed: u64,
    pub config_hash: String,
    pub normalizer: Option<Normalizer>,
    pub posterior: PosteriorPayload,
}

fn pack_lower(m: &Matrix) -> Vec<f64> {
    (0..m.rows()).flat_map(|i| (0..=i).map(move |j| m[(i, j)])).collect()
}

fn unpack_lower(dim: usize, packed: &[f64]) -> Result<Matrix> {
    if packed.len() != PackedLower::packed_len(dim) {
        return Err(Error::DimensionMismatch { context: "packed lower triangle", expected: PackedLower::packed_len(dim), got: packed.len() });
    }
    let mut m = Matrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..=i {
            m[(i, j)] = packed[PackedLower::index(i, j)];
        }
    }
    Ok(m)
}

impl Checkpoint {
    pub fn from_fitted(arch: &Architecture, fitted: &Fitted, seed: u64, config_hash: &str, normalizer: Option<Normalizer>) -> Self {
        let (posterior, log_noise_var) = match fitted {
            Fitted::Point { theta, lik } => (PosteriorPayload::Point { theta: theta.clone() }, lik.log_noise_var),
            Fitted::MeanField { q, lik } => {
                (PosteriorPayload::MeanField { mean: q.mean.clone(), log_var: q.log_var.clone() }, lik.log_noise_var)
            }
            Fitted::FullCov { q, lik } => (
                PosteriorPayload::FullCov { mean: q.mean.clone(), packed_scale: q.scale.packed().to_vec() },
                lik.log_noise_var,
            ),
            Fitted::Laplace { post, linearised } => (
                PosteriorPayload::Laplace {
                    theta_map: post.theta_map.0.clone(),
                    packed_precision_chol: pack_lower(post.precision_chol.lower()),
                    jitter: post.precision_chol.jitter(),
                    linearised: *linearised,
                },
                post.noise_var.ln(),
            ),
            Fitted::Samples { samples, lik } => (PosteriorPayload::Samples { samples: samples.clone() }, lik.log_noise_var),
        };
        Self {
            format: FORMAT.into(),
            architecture: arch.clone(),
            layout: arch.layout().layers,
            log_noise_var,
            seed,
            config_hash: config_hash.into(),
            normalizer,
            posterior,
        }
    }

    pub fn to_fitted(&self) -> Result<Fitted> {
        if self.format != FORMAT {
            return Err(Error::Config(format!("unsupported checkpoint format {:?}", self.format)));
        }
        if self.layout != self.architecture.layout().layers {
            return Err(Error::Config("checkpoint layout does not match its architecture".into()));
        }
        let arch = &self.architecture;
        let lik = LikelihoodSpec { log_noise_var: self.log_noise_var, trainable: false };
        Ok(match &self.posterior {
            PosteriorPayload::Point { theta } => {
                arch.check_params(theta)?;
                Fitted::Point { theta: theta.clone(), lik }
            }
            PosteriorPayload::MeanField { mean, log_var } => {
                arch.check_params(mean)?;
                Fitted::MeanField { q: MeanFieldPosterior::new(mean.clone(), log_var.clone())?, lik }
            }
            PosteriorPayload::FullCov { mean, packed_scale } => {
                arch.check_params(mean)?;
                let scale = PackedLower::from_packed(mean.len(), packed_scale.clone())?;
                Fitted::FullCov { q: FullCovPosterior::new(mean.clone(), scale)?, lik }
            }
            PosteriorPayload::Laplace { theta_map, packed_precision_chol, jitter, linearised } => {
                arch.check_params(theta_map)?;
                let l = unpack_lower(theta_map.len(), packed_precision_chol)?;
                let chol = CholeskyFactor::from_lower(l)?.with_jitter(*jitter);
                let precision = chol.reconstruct();
                let post = LaplacePosterior {
                    theta_map: ParameterVector(theta_map.clone()),
                    precision,
                    precision_chol: chol,
                    noise_var: lik.noise_var(),
                };
                Fitted::Laplace { post, linearised: *linearised }
            }
            PosteriorPayload::Samples { samples } => {
                for s in samples {
                    arch.check_params(s)?;
                }
                Fitted::Samples { samples: samples.clone(), lik }
            }
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
