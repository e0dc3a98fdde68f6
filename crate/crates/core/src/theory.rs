//! Empirical checks of the output-variance results.
//!
//! Three suites:
//! * random one-hidden-layer ReLU nets with a deterministic input layer and
//!   a mean-field output layer: the input Hessian of the output variance is
//!   PSD, matches finite differences, and the variance passes the midpoint
//!   convexity probe;
//! * on the 1D task, last-layer Bayesian linear regression versus its
//!   mean-field counterpart over the same features;
//! * the two-unit ReLU construction.

use serde::{Deserialize, Serialize};

use crate::analysis::{self, convexity_probe, linspace, ConvexityReport, MfOutputNet, TwoUnitRelu};
use crate::error::{Error, Result};
use crate::laplace;
use crate::model::{self, Activation, Architecture};
use crate::numerics::{min_eigenvalue_symmetric, Matrix, RngStream};
use crate::par;
use crate::synth::Synth1dConfig;

pub const PSD_TOL: f64 = -1e-10;
pub const FD_REL_TOL: f64 = 1e-4;
pub const BLR_MIN_RATIO: f64 = 1.5;
pub const MF_MAX_RATIO: f64 = 1.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoryConfig {
    pub seed: u64,
    pub n_nets: usize,
    pub probes_per_net: usize,
    pub segment_points: usize,
    pub two_unit_points: usize,
    /// Settings for the 1D contrast; the activation is forced to ReLU.
    pub contrast: Synth1dConfig,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_nets: 200,
            probes_per_net: 20,
            segment_points: 41,
            two_unit_points: 1000,
            contrast: Synth1dConfig { activation: Activation::Relu, ..Synth1dConfig::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexSuite {
    pub nets: usize,
    pub probes: usize,
    pub min_eigenvalue: f64,
    pub fd_probes: usize,
    pub max_fd_rel_err: f64,
    pub pairs_checked: usize,
    pub violations: usize,
    pub worst_excess: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastSuite {
    pub grid: Vec<f64>,
    pub blr_std: Vec<f64>,
    pub mf_output_std: Vec<f64>,
    pub blr_ratio: f64,
    pub mf_output_ratio: f64,
    pub blr_convexity: ConvexityReport,
    pub mf_output_convexity: ConvexityReport,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoUnitSuite {
    pub points: usize,
    pub mismatches: usize,
    pub max_abs_diff: f64,
    pub flat_region_ok: bool,
    pub fit_residual: (f64, f64),
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub convex: ConvexSuite,
    pub contrast: ContrastSuite,
    pub two_unit: TwoUnitSuite,
    pub passed: bool,
}

/// Random ReLU net with `D ∈ 1..=3` inputs and `H ∈ 2..=20` hidden units.
pub fn random_mf_output_net(rng: &mut RngStream) -> MfOutputNet {
    let d = rng.int_inclusive(1, 3);
    let h = rng.int_inclusive(2, 20);
    let u = Matrix::from_vec(h, d, rng.normal_vec(h * d)).expect("shape");
    MfOutputNet {
        activation: Activation::Relu,
        u,
        v: rng.normal_vec(h),
        w_mean: rng.normal_vec(h),
        w_var: (0..h).map(|_| rng.uniform_range(0.01, 1.0)).collect(),
        b_mean: rng.normal(),
        b_var: rng.uniform_range(0.0, 0.5),
    }
}

/// Central-difference Hessian of the output variance.
fn fd_hessian(net: &MfOutputNet, x: &[f64], h: f64) -> Result<Matrix> {
    let d = x.len();
    let f = |dx: &[(usize, f64)]| {
        let mut p = x.to_vec();
        for &(i, s) in dx {
            p[i] += s;
        }
        net.output_variance(&p)
    };
    let mut out = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            out[(i, j)] = (f(&[(i, h), (j, h)])? - f(&[(i, h), (j, -h)])? - f(&[(i, -h), (j, h)])? + f(&[(i, -h), (j, -h)])?)
                / (4.0 * h * h);
        }
    }
    Ok(out)
}

/// Smallest distance in input space from `x` to any unit's kink hyperplane.
fn kink_distance(net: &MfOutputNet, x: &[f64]) -> f64 {
    net.pre_activations(x)
        .iter()
        .enumerate()
        .map(|(i, a)| a.abs() / model_norm(net.u.row(i)))
        .fold(f64::INFINITY, f64::min)
}

fn model_norm(u: &[f64]) -> f64 {
    crate::numerics::norm2(u).max(f64::MIN_POSITIVE)
}

struct NetOutcome {
    probes: usize,
    min_eig: f64,
    fd_probes: usize,
    max_fd: f64,
    convexity: ConvexityReport,
}

fn check_net(net: &MfOutputNet, rng: &mut RngStream, probes: usize, segment_points: usize) -> Result<NetOutcome> {
    const FD_STEP: f64 = 1e-3;
    let d = net.u.cols();
    let mut out = NetOutcome {
        probes: 0,
        min_eig: f64::INFINITY,
        fd_probes: 0,
        max_fd: 0.0,
        convexity: ConvexityReport { pairs_checked: 0, violations: 0, worst_excess: f64::NEG_INFINITY, worst_pair: (0.0, 0.0) },
    };
    for _ in 0..probes {
        let x: Vec<f64> = (0..d).map(|_| 2.0 * rng.normal()).collect();
        let h = net.variance_hessian(&x)?;
        out.min_eig = out.min_eig.min(min_eigenvalue_symmetric(&h)?);
        out.probes += 1;
        if kink_distance(net, &x) > 10.0 * FD_STEP * d as f64 {
            let fd = fd_hessian(net, &x, FD_STEP)?;
            let rel = fd.max_abs_diff(&h) / h.max_abs().max(1e-8);
            out.max_fd = out.max_fd.max(rel);
            out.fd_probes += 1;
        }
    }
    let x_a: Vec<f64> = (0..d).map(|_| 3.0 * rng.normal()).collect();
    let x_b: Vec<f64> = (0..d).map(|_| 3.0 * rng.normal()).collect();
    let f = |x: &[f64]| net.output_variance(x).unwrap_or(f64::NAN);
    out.convexity = convexity_probe(&f, &x_a, &x_b, segment_points)?;
    Ok(out)
}

pub fn convex_suite(cfg: &TheoryConfig) -> Result<ConvexSuite> {
    let ids: Vec<u64> = (0..cfg.n_nets as u64).collect();
    let outcomes = par::map(&ids, |&i| {
        let mut rng = RngStream::substream(cfg.seed, 1000 + i);
        let net = random_mf_output_net(&mut rng);
        check_net(&net, &mut rng, cfg.probes_per_net, cfg.segment_points)
    });
    let mut s = ConvexSuite {
        nets: 0,
        probes: 0,
        min_eigenvalue: f64::INFINITY,
        fd_probes: 0,
        max_fd_rel_err: 0.0,
        pairs_checked: 0,
        violations: 0,
        worst_excess: f64::NEG_INFINITY,
        passed: false,
    };
    for o in outcomes {
        let o = o?;
        s.nets += 1;
        s.probes += o.probes;
        s.min_eigenvalue = s.min_eigenvalue.min(o.min_eig);
        s.fd_probes += o.fd_probes;
        s.max_fd_rel_err = s.max_fd_rel_err.max(o.max_fd);
        s.pairs_checked += o.convexity.pairs_checked;
        s.violations += o.convexity.violations;
        s.worst_excess = s.worst_excess.max(o.convexity.worst_excess);
    }
    s.passed = s.min_eigenvalue >= PSD_TOL && s.max_fd_rel_err < FD_REL_TOL && s.violations == 0 && s.fd_probes > 0;
    Ok(s)
}

/// MAP fit with a flat input-layer prior, then the exact last-layer
/// posterior and its mean-field optimum (same means, variances `1/Λᵢᵢ`).
pub fn fit_contrast(cfg: &Synth1dConfig) -> Result<(Architecture, analysis::BlrLastLayer, MfOutputNet)> {
    let arch = cfg.architecture();
    if arch.activation != Activation::Relu {
        return Err(Error::ArchitectureUnsupported("the contrast needs a ReLU network".into()));
    }
    let data = cfg.dataset()?;
    let prior = cfg.prior();
    let flat = prior.with_flat_layer(&arch, 0);
    let tc = crate::vi::TrainConfig {
        epochs: cfg.epochs,
        batch_size: None,
        learning_rate: cfg.learning_rate,
        mc_samples: 1,
        seed: cfg.seed,
    };
    let (theta, lik) = laplace::train_map(&arch, &data, &flat, &cfg.likelihood(), &tc)?;
    let l1 = arch.layout().layers[1];
    let blr = analysis::blr_last_layer(&arch, &theta, &data, &prior.precision[l1.weight_offset..l1.end()], lik.noise_var())?;
    let lambda = blr.posterior.precision_chol.reconstruct();
    let mut theta_mf = theta.0.clone();
    theta_mf[l1.weight_offset..l1.end()].copy_from_slice(&blr.posterior.mean);
    let var: Vec<f64> = (0..lambda.rows()).map(|i| 1.0 / lambda[(i, i)]).collect();
    let net = MfOutputNet::from_params(&arch, &theta_mf, &var)?;
    Ok((arch, blr, net))
}

pub fn contrast_suite(cfg: &Synth1dConfig) -> Result<ContrastSuite> {
    let (_, blr, net) = fit_contrast(cfg)?;
    let grid = linspace(cfg.grid.0, cfg.grid.1, cfg.grid.2);
    let blr_var: Vec<f64> = grid.iter().map(|&g| blr.function_variance(&[g])).collect::<Result<_>>()?;
    let mf_var: Vec<f64> = grid.iter().map(|&g| net.output_variance(&[g])).collect::<Result<_>>()?;
    let blr_std: Vec<f64> = blr_var.iter().map(|v| v.max(0.0).sqrt()).collect();
    let mf_output_std: Vec<f64> = mf_var.iter().map(|v| v.sqrt()).collect();
    let gap = cfg.task.gap();
    let blr_ratio = analysis::uncertainty_ratio(&grid, &blr_std, &cfg.task.clusters, gap)?;
    let mf_output_ratio = analysis::uncertainty_ratio(&grid, &mf_output_std, &cfg.task.clusters, gap)?;
    let fb = |x: &[f64]| blr.function_variance(x).unwrap_or(f64::NAN);
    let fm = |x: &[f64]| net.output_variance(x).unwrap_or(f64::NAN);
    let blr_convexity = convexity_probe(&fb, &[cfg.grid.0], &[cfg.grid.1], cfg.grid.2)?;
    let mf_output_convexity = convexity_probe(&fm, &[cfg.grid.0], &[cfg.grid.1], cfg.grid.2)?;
    let passed = blr_convexity.violations >= 1
        && blr_ratio > BLR_MIN_RATIO
        && mf_output_convexity.violations == 0
        && mf_output_ratio <= MF_MAX_RATIO;
    Ok(ContrastSuite { grid, blr_std, mf_output_std, blr_ratio, mf_output_ratio, blr_convexity, mf_output_convexity, passed })
}

pub fn two_unit_suite(cfg: &TheoryConfig) -> Result<TwoUnitSuite> {
    let mut rng = RngStream::substream(cfg.seed, 3);
    let arch = TwoUnitRelu::architecture();
    let mut mismatches = 0;
    let mut max_abs_diff: f64 = 0.0;
    let mut flat_region_ok = true;
    for _ in 0..cfg.two_unit_points {
        let p = TwoUnitRelu {
            w: [rng.uniform_range(0.1, 2.0), rng.uniform_range(0.1, 2.0)],
            u: [rng.uniform_range(0.1, 2.0), rng.uniform_range(0.1, 2.0)],
            v: [rng.normal(), rng.normal()],
            b: rng.normal(),
        };
        let x = 3.0 * rng.normal();
        let pw = analysis::two_unit_piecewise(&p, x);
        let fw = model::forward(&arch, &p.to_params(), &[x])?[0];
        if pw.to_bits() != fw.to_bits() {
            mismatches += 1;
        }
        max_abs_diff = max_abs_diff.max((pw - fw).abs());
        if x < p.kink(0).min(p.kink(1)) && pw != p.b {
            flat_region_ok = false;
        }
    }
    // Kinks at −0.5 and 0.25; b = y₁ and 3W + b = y₂ hold exactly.
    let (x1, y1, x2, y2) = (-1.0, 0.5, 1.0, 2.0);
    let p = TwoUnitRelu { w: [0.5, 0.5], u: [1.0, 2.0], v: [0.5, -0.5], b: y1 };
    let residual = match analysis::fit_residual(&p, (x1, y1), (x2, y2)) {
        Ok(r) => r,
        Err(Error::RegionAssumptionViolated(_)) => (f64::INFINITY, f64::INFINITY),
        Err(e) => return Err(e),
    };
    let passed = mismatches == 0 && flat_region_ok && residual.0 <= 1e-12 && residual.1 <= 1e-12;
    Ok(TwoUnitSuite { points: cfg.two_unit_points, mismatches, max_abs_diff, flat_region_ok, fit_residual: residual, passed })
}

pub fn check_theory(cfg: &TheoryConfig) -> Result<TheoryReport> {
    let convex = convex_suite(cfg)?;
    let contrast = contrast_suite(&cfg.contrast)?;
    let two_unit = two_unit_suite(cfg)?;
    let passed = convex.passed && contrast.passed && two_unit.passed;
    Ok(TheoryReport { convex, contrast, two_unit, passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_hessian_matches_on_one_unit() {
        let net = MfOutputNet {
            activation: Activation::Relu,
            u: Matrix::from_rows(&[vec![1.0, -2.0]]),
            v: vec![0.3],
            w_mean: vec![1.0],
            w_var: vec![0.5],
            b_mean: 0.0,
            b_var: 0.1,
        };
        let x = [1.0, 0.2];
        let h = net.variance_hessian(&x).unwrap();
        let fd = fd_hessian(&net, &x, 1e-3).unwrap();
        assert!(fd.max_abs_diff(&h) < 1e-6);
        assert!((h[(0, 1)] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn small_convex_suite_passes() {
        let cfg = TheoryConfig { n_nets: 10, probes_per_net: 5, ..TheoryConfig::default() };
        let s = convex_suite(&cfg).unwrap();
        assert!(s.passed, "{s:?}");
        assert_eq!(s.nets, 10);
    }

    #[test]
    fn two_unit_suite_passes() {
        let cfg = TheoryConfig { two_unit_points: 200, ..TheoryConfig::default() };
        let s = two_unit_suite(&cfg).unwrap();
        assert!(s.passed, "{s:?}");
    }

    #[test]
    fn contrast_rejects_tanh() {
        let cfg = Synth1dConfig { epochs: 1, ..Synth1dConfig::default() };
        assert!(matches!(fit_contrast(&cfg), Err(Error::ArchitectureUnsupported(_))));
    }
}
