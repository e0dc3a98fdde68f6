//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any selected criterion fails.
//!
//! `cargo test -p bnn-core --test run_acceptance -- 1 3 9` runs a subset.
//! `BNN_DATA_DIR` points at the UCI CSV files (default: `data/`).

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use bnn_core::analysis::{self, MixturePredictive};
use bnn_core::bench::{self, BenchOptions, Method, MethodSpec, Preset};
use bnn_core::data::{self, SplitManifest, UCI_DATASETS};
use bnn_core::hmc::{self, BnnTarget, HmcConfig};
use bnn_core::laplace;
use bnn_core::model::{self, Activation, LikelihoodSpec, PriorSpec};
use bnn_core::numerics::{Matrix, RngStream};
use bnn_core::synth::{self, Synth1dConfig};
use bnn_core::theory::{self, TheoryConfig};
use bnn_core::vi::{self, FcviInit, FullCovPosterior, GaussianFamily, MeanFieldPosterior, PackedLower, TrainConfig};

use common::*;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

const SEED: u64 = 20_240_601;

// ---------------------------------------------------------------- 1

fn criterion_gradients() -> Verdict {
    const H: f64 = 1e-5;
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut bump = |k: &'static str, v: f64| {
        let e = worst.entry(k).or_insert(0.0);
        *e = e.max(v);
    };
    for i in 0..100u64 {
        let mut rng = RngStream::substream(SEED, i);
        let act = if i % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let arch = random_arch(&mut rng, act);
        let p = arch.num_params();
        let data = random_dataset(&mut rng, &arch, 5);
        let prior = PriorSpec::from_variances(&(0..p).map(|_| rng.uniform_range(0.2, 2.0)).collect::<Vec<_>>()).unwrap();
        let lik = LikelihoodSpec::trainable(rng.uniform_range(-2.0, 0.5));
        // redraw until every sampled network is well away from ReLU kinks
        let (theta, log_var, noise) = loop {
            let theta = rng.normal_vec(p);
            let log_var: Vec<f64> = (0..p).map(|_| rng.uniform_range(-7.0, -4.0)).collect();
            let noise: Vec<Vec<f64>> = (0..3).map(|_| rng.normal_vec(p)).collect();
            let q = MeanFieldPosterior::new(theta.clone(), log_var.clone()).unwrap();
            let ok = act == Activation::Tanh
                || std::iter::once(theta.clone())
                    .chain(noise.iter().map(|z| q.transform(z)))
                    .all(|t| kink_margin(&arch, &t, &data.x) > 1e-3);
            if ok {
                break (theta, log_var, noise);
            }
        };

        let x = data.x.row(0).to_vec();
        let jac = model::param_gradient(&arch, &theta, &x).unwrap();
        for (k, row) in jac.iter().enumerate() {
            let fd = fd_grad(|t| model::forward(&arch, t, &x).unwrap()[k], &theta, H);
            bump("forward", rel_err(row, &fd));
        }
        let g = model::grad_log_prior(&theta, &prior).unwrap();
        bump("log_prior", rel_err(&g, &fd_grad(|t| model::log_prior(t, &prior).unwrap(), &theta, H)));

        let ll = model::log_likelihood(&arch, &theta, &data, &lik).unwrap();
        let fd = fd_grad(|t| model::log_likelihood(&arch, t, &data, &lik).unwrap().value, &theta, H);
        bump("log_likelihood", rel_err(&ll.grad, &fd));
        let fd_noise = fd_grad(
            |s| model::log_likelihood(&arch, &theta, &data, &LikelihoodSpec::trainable(s[0])).unwrap().value,
            &[lik.log_noise_var],
            H,
        );
        bump("log_likelihood", rel_err(&[ll.grad_log_noise], &fd_noise));

        let lj = model::log_joint(&arch, &theta, &data, &prior, &lik).unwrap();
        let fd = fd_grad(|t| model::log_joint(&arch, t, &data, &prior, &lik).unwrap().value, &theta, H);
        bump("log_joint", rel_err(&lj.grad, &fd));

        let rows: Vec<usize> = (0..data.len()).collect();
        // mean-field ELBO, weight-space noise
        let elbo_mf = |m: &[f64], lv: &[f64]| {
            let q = MeanFieldPosterior::new(m.to_vec(), lv.to_vec()).unwrap();
            vi::elbo_with_noise(&arch, &q, &data, &rows, 1.0, &prior, &lik, &noise).unwrap()
        };
        let e = elbo_mf(&theta, &log_var);
        bump("elbo", rel_err(&e.grad_mean, &fd_grad(|m| elbo_mf(m, &log_var).value, &theta, H)));
        bump("elbo", rel_err(&e.grad_scale, &fd_grad(|lv| elbo_mf(&theta, lv).value, &log_var, H)));

        // full-covariance ELBO
        let mut packed = vec![0.0; PackedLower::packed_len(p)];
        for r in 0..p {
            for c in 0..=r {
                packed[PackedLower::index(r, c)] = if r == c { log_var[r] / 2.0 } else { 1e-3 * rng.normal() };
            }
        }
        let elbo_fc = |m: &[f64], s: &[f64]| {
            let q = FullCovPosterior::new(m.to_vec(), PackedLower::from_packed(p, s.to_vec()).unwrap()).unwrap();
            vi::elbo_with_noise(&arch, &q, &data, &rows, 1.0, &prior, &lik, &noise).unwrap()
        };
        let margin_ok = act == Activation::Tanh || {
            let q = FullCovPosterior::new(theta.clone(), PackedLower::from_packed(p, packed.clone()).unwrap()).unwrap();
            noise.iter().all(|z| kink_margin(&arch, &q.transform(z), &data.x) > 1e-3)
        };
        if margin_ok {
            let e = elbo_fc(&theta, &packed);
            bump("elbo", rel_err(&e.grad_mean, &fd_grad(|m| elbo_fc(m, &packed).value, &theta, H)));
            bump("elbo", rel_err(&e.grad_scale, &fd_grad(|s| elbo_fc(&theta, s).value, &packed, H)));
        }

        // locally reparameterised likelihood with frozen noise
        let units: usize = arch.hidden_widths.iter().sum::<usize>() + arch.output_dim;
        let eps = rng.normal_vec(2 * rows.len() * units);
        let lrt = |m: &[f64], lv: &[f64]| {
            let q = MeanFieldPosterior::new(m.to_vec(), lv.to_vec()).unwrap();
            vi::local_reparam_log_lik_with_noise(&arch, &q, &data, &rows, 1.0, &lik, 2, &eps).unwrap()
        };
        if act == Activation::Tanh {
            let e = lrt(&theta, &log_var);
            bump("elbo", rel_err(&e.grad_mean, &fd_grad(|m| lrt(m, &log_var).value, &theta, H)));
            bump("elbo", rel_err(&e.grad_scale, &fd_grad(|lv| lrt(&theta, lv).value, &log_var, H)));
        }
    }
    let passed = ["forward", "log_prior", "log_likelihood", "log_joint"].iter().all(|k| worst[k] < 1e-5) && worst["elbo"] < 1e-4;
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    verdict(passed, format!("max rel err over 100 instances: {detail}"))
}

// ---------------------------------------------------------------- 2

/// Running average of a parameter vector over the second half of training.
struct TailMean {
    from: usize,
    n: usize,
    sum: Vec<f64>,
}

impl TailMean {
    fn new(from: usize) -> Self {
        Self { from, n: 0, sum: Vec::new() }
    }

    fn push(&mut self, step: usize, v: impl Iterator<Item = f64>) {
        if step <= self.from {
            return;
        }
        let v: Vec<f64> = v.collect();
        if self.sum.is_empty() {
            self.sum = vec![0.0; v.len()];
        }
        self.sum.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
        self.n += 1;
    }

    fn mean(&self) -> Vec<f64> {
        self.sum.iter().map(|s| s / self.n as f64).collect()
    }
}

fn criterion_conjugate() -> Verdict {
    let c = conjugate(SEED);
    let p = c.arch.num_params();
    let cov = c.exact.covariance();
    let lambda = c.exact.precision_chol.reconstruct();
    let mut notes = Vec::new();

    // (a) linearised Laplace at the exact mode
    let theta: Vec<f64> = c.exact.mean.clone();
    let post = laplace::gauss_newton_precision(&c.arch, &theta, &c.data, &c.prior, c.lik.noise_var()).unwrap();
    let mut rng = RngStream::substream(SEED, 1);
    let mut worst_a: f64 = 0.0;
    for _ in 0..20 {
        let x = rng.normal_vec(2);
        let lp = laplace::linearised_predictive(&post, &c.arch, &x).unwrap();
        let ex = c.exact.predict(&[x[0], x[1], 1.0]).unwrap();
        worst_a = worst_a.max((lp.mean - ex.mean).abs()).max((lp.var - ex.var).abs());
    }
    let pass_a = worst_a < 1e-8;
    notes.push(format!("(a) max |Δ| {worst_a:.1e}"));

    // (b) converged VI, averaged over the last half of the iterates
    let epochs = 20_000;
    let cfg = TrainConfig { epochs, batch_size: None, learning_rate: 0.01, mc_samples: 16, seed: SEED };
    let mut tail = TailMean::new(epochs / 2);
    let q0 = MeanFieldPosterior::init_for(&c.arch, 1e-5, &mut RngStream::new(SEED));
    vi::train_mfvi_from(&c.arch, &c.data, &c.prior, &c.lik, &cfg, q0, &mut |e| {
        tail.push(e.step, e.posterior.mean.iter().chain(&e.posterior.log_var).copied())
    })
    .unwrap();
    let avg = tail.mean();
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for i in 0..p {
        worst_mean = worst_mean.max((avg[i] - c.exact.mean[i]).abs());
        worst_var = worst_var.max((avg[p + i].exp() * lambda[(i, i)] - 1.0).abs());
    }
    notes.push(format!("(b) mfvi mean err {worst_mean:.1e}, var rel err {worst_var:.3} (target 1/Λᵢᵢ)"));
    let mut pass_b = worst_mean < 1e-2 && worst_var < 0.1;

    let cfg = TrainConfig { learning_rate: 0.005, ..cfg };
    let mut tail = TailMean::new(epochs / 2);
    let q0 = FullCovPosterior::init_for(&c.arch, FcviInit::uci().mean_std, FcviInit::uci().log_diag, &mut RngStream::new(SEED));
    vi::train_fcvi_from(&c.arch, &c.data, &c.prior, &c.lik, &cfg, q0, &mut |e| {
        tail.push(e.step, e.posterior.mean.iter().chain(e.posterior.scale.packed()).copied())
    })
    .unwrap();
    let avg = tail.mean();
    let q = FullCovPosterior::new(avg[..p].to_vec(), PackedLower::from_packed(p, avg[p..].to_vec()).unwrap()).unwrap();
    let s = q.covariance();
    let mut worst_mean: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    for i in 0..p {
        worst_mean = worst_mean.max((q.mean[i] - c.exact.mean[i]).abs());
        worst_var = worst_var.max((s[(i, i)] / cov[(i, i)] - 1.0).abs());
    }
    notes.push(format!("fcvi mean err {worst_mean:.1e}, var rel err {worst_var:.3}"));
    pass_b &= worst_mean < 1e-2 && worst_var < 0.1;

    // (c) HMC moments against the exact posterior
    let target = BnnTarget { arch: &c.arch, data: &c.data, prior: &c.prior, lik: c.lik };
    let hcfg = HmcConfig {
        leapfrog_steps: (10, 20),
        step_size: (0.02, 0.04),
        burn_in: 1000,
        n_samples: 40_000,
        keep: 40_000,
        seed: SEED,
    };
    let out = hmc::run_chain(&target, c.exact.mean.clone(), &hcfg).unwrap();
    let mut worst_z: f64 = 0.0;
    for i in 0..p {
        let trace: Vec<f64> = out.samples.iter().map(|s| s[i]).collect();
        let ess = hmc::effective_sample_size(&trace);
        let n = trace.len() as f64;
        let m = trace.iter().sum::<f64>() / n;
        let v = trace.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (n - 1.0);
        let z_mean = (m - c.exact.mean[i]).abs() / (cov[(i, i)] / ess).sqrt();
        let sq: Vec<f64> = trace.iter().map(|t| (t - m).powi(2)).collect();
        let ess_sq = hmc::effective_sample_size(&sq);
        let z_var = (v - cov[(i, i)]).abs() / (cov[(i, i)] * (2.0 / ess_sq).sqrt());
        worst_z = worst_z.max(z_mean).max(z_var);
    }
    let pass_c = worst_z <= 3.0;
    notes.push(format!("(c) hmc worst |z| {worst_z:.2} (acceptance {:.2})", out.acceptance_rate));
    verdict(pass_a && pass_b && pass_c, notes.join("; "))
}

// ---------------------------------------------------------------- 3

fn criterion_convexity() -> Verdict {
    let cfg = TheoryConfig::default();
    let s = match theory::convex_suite(&cfg) {
        Ok(s) => s,
        Err(e) => return verdict(false, format!("convexity suite error: {e}")),
    };
    let c = match theory::contrast_suite(&cfg.contrast) {
        Ok(c) => c,
        Err(e) => return verdict(false, format!("contrast error: {e}")),
    };
    let passed = s.nets == 200 && s.min_eigenvalue >= -1e-10 && s.violations == 0 && c.blr_convexity.violations >= 1;
    verdict(
        passed,
        format!(
            "{} nets, {} probes: min eigenvalue {:.2e}, fd Hessian rel err {:.1e}, {} midpoint violations; BLR {} violations (ratio {:.2}), mfvi-output {} (ratio {:.2})",
            s.nets,
            s.probes,
            s.min_eigenvalue,
            s.max_fd_rel_err,
            s.violations,
            c.blr_convexity.violations,
            c.blr_ratio,
            c.mf_output_convexity.violations,
            c.mf_output_ratio
        ),
    )
}

// ---------------------------------------------------------------- 4

/// Monte Carlo `E_q[log q − log p]` and its standard error.
fn kl_mc<F: GaussianFamily>(q: &F, prior: &PriorSpec, n: usize, seed: u64) -> (f64, f64) {
    let d = q.dim();
    let mut rng = RngStream::new(seed);
    // log q(μ + Sz) = −½|z|² − log|det S| − d/2·log 2π, with S lower triangular
    let log_det: f64 = (0..d)
        .map(|i| {
            let mut z = vec![0.0; d];
            z[i] = 1.0;
            (q.transform(&z)[i] - q.mean()[i]).abs().ln()
        })
        .sum();
    let half_log_2pi = 0.5 * model::LN_2PI;
    let (mut sum, mut sum2) = (0.0, 0.0);
    let mut z = vec![0.0; d];
    for _ in 0..n {
        rng.fill_normal(&mut z);
        let t = q.transform(&z);
        let log_q = -0.5 * z.iter().map(|v| v * v).sum::<f64>() - log_det - d as f64 * half_log_2pi;
        let log_p: f64 = t
            .iter()
            .zip(&prior.precision)
            .map(|(&x, &p)| 0.5 * p.ln() - half_log_2pi - 0.5 * p * x * x)
            .sum();
        let v = log_q - log_p;
        sum += v;
        sum2 += v * v;
    }
    let m = sum / n as f64;
    let var = (sum2 / n as f64 - m * m) * n as f64 / (n as f64 - 1.0);
    (m, (var / n as f64).sqrt())
}

/// Closed-form ELBO of a linear-Gaussian model under a Gaussian `q`.
fn exact_linear_elbo(c: &Conjugate, mean: &[f64], cov: &Matrix, kl: f64) -> f64 {
    let s2 = c.lik.noise_var();
    let ys = c.data.y.as_slice();
    let mut ell = 0.0;
    for (r, &y) in ys.iter().enumerate() {
        let phi = c.features.row(r);
        let f: f64 = phi.iter().zip(mean).map(|(a, b)| a * b).sum();
        let sv = cov.matvec(phi).unwrap();
        let quad: f64 = phi.iter().zip(&sv).map(|(a, b)| a * b).sum();
        ell += -0.5 * (model::LN_2PI + s2.ln()) - ((y - f).powi(2) + quad) / (2.0 * s2);
    }
    ell - kl
}

fn criterion_kl_elbo() -> Verdict {
    const N: usize = 1_000_000;
    let ids: Vec<u64> = (0..100).collect();
    let zs = bnn_core::par::map(&ids, |&i| {
        let mut rng = RngStream::substream(SEED, 400 + i);
        let d = rng.int_inclusive(1, 4);
        let prior = PriorSpec::from_variances(&(0..d).map(|_| rng.uniform_range(0.3, 3.0)).collect::<Vec<_>>()).unwrap();
        let mean = rng.normal_vec(d);
        if i % 2 == 0 {
            let lv: Vec<f64> = (0..d).map(|_| rng.uniform_range(-3.0, 1.0)).collect();
            let q = MeanFieldPosterior::new(mean, lv).unwrap();
            let exact = vi::kl_meanfield_to_diag_prior(&q, &prior).unwrap();
            let (m, se) = kl_mc(&q, &prior, N, SEED + i);
            (exact - m).abs() / se
        } else {
            let mut packed = vec![0.0; PackedLower::packed_len(d)];
            for r in 0..d {
                for c in 0..=r {
                    packed[PackedLower::index(r, c)] = if r == c { rng.uniform_range(-1.5, 0.5) } else { 0.5 * rng.normal() };
                }
            }
            let q = FullCovPosterior::new(mean, PackedLower::from_packed(d, packed).unwrap()).unwrap();
            let exact = vi::kl_fullcov_to_diag_prior(&q, &prior).unwrap();
            let (m, se) = kl_mc(&q, &prior, N, SEED + i);
            (exact - m).abs() / se
        }
    });
    let worst_z = zs.iter().cloned().fold(0.0, f64::max);
    let over = zs.iter().filter(|&&z| z > 3.0).count();

    let c = conjugate(SEED);
    let evidence = analysis::linear_log_evidence(&c.features, c.data.y.as_slice(), &c.prior.precision, c.lik.noise_var()).unwrap();
    let cfg = TrainConfig { epochs: 3000, batch_size: None, learning_rate: 0.01, mc_samples: 8, seed: SEED };
    let mut max_excess = f64::NEG_INFINITY;
    let mut last_mf = f64::NAN;
    let q0 = MeanFieldPosterior::init_for(&c.arch, 1e-5, &mut RngStream::new(SEED));
    vi::train_mfvi_from(&c.arch, &c.data, &c.prior, &c.lik, &cfg, q0, &mut |e| {
        let q = e.posterior;
        let elbo = exact_linear_elbo(&c, &q.mean, &Matrix::from_diag(&q.variances()), q.kl(&c.prior).unwrap().value);
        max_excess = max_excess.max(elbo - evidence);
        last_mf = elbo;
    })
    .unwrap();
    let mut last_fc = f64::NAN;
    let q0 = FullCovPosterior::init_for(&c.arch, 0.1, FcviInit::uci().log_diag, &mut RngStream::new(SEED));
    vi::train_fcvi_from(&c.arch, &c.data, &c.prior, &c.lik, &cfg, q0, &mut |e| {
        let q = e.posterior;
        let elbo = exact_linear_elbo(&c, &q.mean, &q.covariance(), q.kl(&c.prior).unwrap().value);
        max_excess = max_excess.max(elbo - evidence);
        last_fc = elbo;
    })
    .unwrap();
    let passed = over == 0 && max_excess <= 1e-9 * evidence.abs();
    verdict(
        passed,
        format!(
            "KL vs MC (10⁶ draws, 100 instances): worst |z| {worst_z:.2}, {over} beyond 3 SE; ELBO − evidence max {max_excess:.2e} over 6000 iterates (final gaps: mfvi {:.3}, fcvi {:.4})",
            evidence - last_mf,
            evidence - last_fc
        ),
    )
}

// ---------------------------------------------------------------- 5

fn criterion_in_between() -> Verdict {
    let cfg = Synth1dConfig::default();
    let mut ratios = BTreeMap::new();
    for m in [Method::Hmc, Method::LaplaceLinearised, Method::Mfvi] {
        match synth::run_method(m, &cfg) {
            Ok(r) => {
                ratios.insert(m, r.uncertainty_ratio);
            }
            Err(e) => return verdict(false, format!("{m} failed: {e}")),
        }
    }
    let (h, l, v) = (ratios[&Method::Hmc], ratios[&Method::LaplaceLinearised], ratios[&Method::Mfvi]);
    verdict(h >= 2.0 && l >= 2.0 && v < 1.5, format!("gap/data std ratio: hmc {h:.2} (≥ 2), laplace-linearised {l:.2} (≥ 2), mfvi {v:.2} (< 1.5)"))
}

// ---------------------------------------------------------------- 6

fn load_splits(name: &str, ds: &data::Dataset) -> Vec<SplitManifest> {
    let dir = golden_dir().join(name);
    let mut v: Vec<SplitManifest> = (0..ds.input_dim())
        .filter_map(|d| SplitManifest::load_for(&dir.join(format!("gap-{d}.json")), ds).ok())
        .collect();
    if v.len() != ds.input_dim() {
        v = data::make_gap_splits(ds, 0).unwrap();
    }
    v
}

fn criterion_gap_catastrophe() -> Verdict {
    let ds = match data::load_named(&data_dir(), "energy") {
        Ok(d) => d,
        Err(e) => return verdict(false, format!("energy unavailable: {e}")),
    };
    let splits: Vec<SplitManifest> = load_splits("energy", &ds).into_iter().take(2).collect();
    let specs: Vec<MethodSpec> =
        ["laplace-linearised-1hl-tanh", "map-1hl-relu", "mfvi-1hl-relu"].iter().map(|s| s.parse().unwrap()).collect();
    let opts = BenchOptions { preset: Preset::builtin("mini").unwrap(), seed: 0, record_time: false };
    let rows = bench::summarise(&bench::run_bench(&[(ds, splits)], &specs, &opts));
    let get = |m: &str| rows.iter().find(|r| r.method == m).map_or(f64::NAN, |r| r.ll_mean);
    let (ll, map, mfvi) = (get("laplace-linearised-1hl-tanh"), get("map-1hl-relu"), get("mfvi-1hl-relu"));
    verdict(ll > map + 5.0 && ll > mfvi + 5.0, format!("energy gap d∈{{0,1}} mean test LL: laplace-linearised {ll:.2}, map-relu {map:.2}, mfvi-relu {mfvi:.2}"))
}

// ---------------------------------------------------------------- 7

fn criterion_standard_boston() -> Verdict {
    let ds = match data::load_named(&data_dir(), "boston") {
        Ok(d) => d,
        Err(e) => return verdict(false, format!("boston unavailable: {e}")),
    };
    let preset = Preset::builtin("full").unwrap();
    let n = std::env::var("BNN_ACCEPT_SPLITS").ok().and_then(|v| v.parse().ok()).unwrap_or(preset.n_splits);
    let splits = data::make_standard_splits(&ds, n, 0.9, 0).unwrap();
    let n_splits = splits.len();
    let specs: Vec<MethodSpec> = ["map-1hl-tanh", "mfvi-1hl-tanh", "laplace-linearised-1hl-tanh"].iter().map(|s| s.parse().unwrap()).collect();
    let opts = BenchOptions { preset, seed: 0, record_time: false };
    let records = bench::run_bench(&[(ds, splits)], &specs, &opts);
    let rows = bench::summarise(&records);
    let targets = [("map-1hl-tanh", -2.69), ("mfvi-1hl-tanh", -2.61), ("laplace-linearised-1hl-tanh", -2.57)];
    let mut passed = true;
    let mut parts = Vec::new();
    for (m, t) in targets {
        let r = rows.iter().find(|r| r.method == m);
        let (mean, se, ok) = r.map_or((f64::NAN, f64::NAN, 0), |r| (r.ll_mean, r.ll_se, r.n_ok));
        passed &= (mean - t).abs() <= 0.3 && ok == n_splits;
        parts.push(format!("{m} {mean:.2} ± {se:.2} (target {t}, {ok}/{n_splits} ok)"));
    }
    verdict(passed, format!("boston, {n_splits} standard splits: {}", parts.join(", ")))
}

// ---------------------------------------------------------------- 8

fn criterion_golden() -> Verdict {
    let mut missing = Vec::new();
    let mut unstable = Vec::new();
    let mut counts = Vec::new();
    for name in UCI_DATASETS {
        let ds = match data::load_named(&data_dir(), name) {
            Ok(d) => d,
            Err(_) => {
                missing.push(name);
                continue;
            }
        };
        let fresh = data::make_gap_splits(&ds, 0).unwrap();
        let dir = golden_dir().join(name);
        let golden_files = std::fs::read_dir(&dir).map(|it| it.count()).unwrap_or(0);
        let mut stable = golden_files == fresh.len();
        for m in &fresh {
            let on_disk = std::fs::read(dir.join(format!("{}.json", m.id()))).unwrap_or_default();
            stable &= on_disk == m.to_json().into_bytes();
        }
        if !stable {
            unstable.push(name);
        }
        counts.push(format!("{name} {}", fresh.len()));
        if name == "energy" && fresh.len() != 8 {
            unstable.push("energy (count)");
        }
    }
    let passed = missing.is_empty() && unstable.is_empty();
    verdict(
        passed,
        format!(
            "manifests: [{}]; byte-unstable: {:?}; missing datasets: {:?}",
            counts.join(", "),
            unstable,
            missing
        ),
    )
}

// ---------------------------------------------------------------- 9

fn criterion_stability() -> Verdict {
    let mut rng = RngStream::substream(SEED, 9);
    let mut checked = 0;
    let mut worst_m1: f64 = 0.0;
    let mut all_finite = true;
    let mut most_negative = 0.0_f64;
    for &sigma in &[0.01, 0.1, 1.0, 10.0] {
        for &m in &[1usize, 10, 100, 1000] {
            for k in 0..=100 {
                let resid = 0.5 * k as f64;
                let means: Vec<f64> = (0..m).map(|_| sigma * rng.normal()).collect();
                let centre = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let y = centre + resid * sigma;
                let pred = MixturePredictive { means: means.clone(), noise_var: sigma * sigma };
                let v = analysis::test_ll_mixture(&pred, y);
                all_finite &= v.is_finite();
                most_negative = most_negative.min(v);
                if m == 1 {
                    let exact = -0.5 * model::LN_2PI - sigma.ln() - 0.5 * resid * resid;
                    worst_m1 = worst_m1.max((v - exact).abs() / exact.abs().max(1.0));
                }
                checked += 1;
            }
        }
    }
    verdict(
        all_finite && worst_m1 < 1e-12,
        format!("{checked} mixtures up to 50σ: all finite = {all_finite}, lowest {most_negative:.1} nats, M=1 rel err {worst_m1:.1e}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Verdict); 9] = [
        (1, "gradient correctness", criterion_gradients),
        (2, "conjugate oracle equivalence", criterion_conjugate),
        (3, "convex-variance theorem", criterion_convexity),
        (4, "KL/ELBO identities", criterion_kl_elbo),
        (5, "1D gap uncertainty", criterion_in_between),
        (6, "gap-split catastrophe direction (energy)", criterion_gap_catastrophe),
        (7, "standard-split ballpark (boston)", criterion_standard_boston),
        (8, "protocol golden files", criterion_golden),
        (9, "numerical stability", criterion_stability),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let v = run();
        let tag = if v.passed { "PASS" } else { "FAIL" };
        println!("{tag} [{id}] {name}: {} ({:.1}s)", v.detail, t.elapsed().as_secs_f64());
        if !v.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
