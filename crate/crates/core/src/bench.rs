//! Benchmark orchestration: methods, presets, grid search and records.
//!
//! One job is a (dataset, split, method) triple. Hyperparameters are chosen
//! by validation log-likelihood over the preset grid; the winner is refitted
//! on train+validation and scored on the test rows. Epoch counts in a grid
//! are evaluated from snapshots of a single run, which is equivalent to
//! separate runs because the random stream consumed per step does not
//! depend on the total number of epochs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{self, test_ll_gaussian, test_ll_mixture};
use crate::data::{sha256_hex, Dataset, Normalizer, SplitManifest};
use crate::error::{Error, Result};
use crate::laplace::{self, LaplacePosterior};
use crate::model::{Activation, Architecture, LikelihoodSpec, PriorSpec};
use crate::numerics::RngStream;
use crate::par;
use crate::vi::{self, FcviInit, FullCovPosterior, GaussianFamily, MeanFieldPosterior, TrainConfig};

/// Inference method under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Map,
    Mfvi,
    Fcvi,
    LaplaceSampled,
    LaplaceLinearised,
    Hmc,
    Blr,
}

impl Method {
    pub const ALL: [Method; 7] =
        [Method::Map, Method::Mfvi, Method::Fcvi, Method::LaplaceSampled, Method::LaplaceLinearised, Method::Hmc, Method::Blr];

    pub fn name(self) -> &'static str {
        match self {
            Method::Map => "map",
            Method::Mfvi => "mfvi",
            Method::Fcvi => "fcvi",
            Method::LaplaceSampled => "laplace-sampled",
            Method::LaplaceLinearised => "laplace-linearised",
            Method::Hmc => "hmc",
            Method::Blr => "blr",
        }
    }

    /// Key of the preset grid this method uses.
    pub fn grid_key(self) -> &'static str {
        match self {
            Method::LaplaceSampled | Method::LaplaceLinearised => "laplace",
            m => m.name(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.to_ascii_lowercase();
        let alias = match s.as_str() {
            "ll" => "laplace-linearised",
            "sl" => "laplace-sampled",
            other => other,
        };
        Method::ALL
            .into_iter()
            .find(|m| m.name() == alias)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// A method together with its network shape, e.g. `mfvi-1hl-relu`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    pub hidden_layers: usize,
    pub activation: Activation,
}

impl MethodSpec {
    pub fn label(&self) -> String {
        format!("{}-{}hl-{}", self.method, self.hidden_layers, self.activation.name())
    }

    pub fn architecture(&self, input_dim: usize, width: usize) -> Architecture {
        Architecture::new(input_dim, vec![width; self.hidden_layers], 1, self.activation).expect("positive widths")
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("method spec {s:?} is not of the form <method>-<n>hl-<tanh|relu>"));
        let mut parts: Vec<&str> = s.rsplitn(3, '-').collect();
        parts.reverse();
        let [m, hl, act] = parts[..] else { return Err(bad()) };
        let hidden_layers = hl.strip_suffix("hl").and_then(|n| n.parse().ok()).ok_or_else(bad)?;
        Ok(Self { method: m.parse()?, hidden_layers, activation: act.parse()? })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    /// `N(0, ω²)` on every parameter.
    Uniform,
    /// `N(0, 1)` biases, `N(0, ω²/fan_in)` weights.
    FanIn,
}

impl PriorKind {
    pub fn build(self, arch: &Architecture, omega: f64) -> PriorSpec {
        match self {
            PriorKind::Uniform => PriorSpec::uniform(arch, omega),
            PriorKind::FanIn => PriorSpec::fan_in_scaled(arch, omega),
        }
    }
}

/// Hyperparameter grid for one method family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub prior: PriorKind,
    pub omega: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub epochs: Vec<usize>,
    /// Epoch grid for the large datasets, if different.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs_large: Option<Vec<usize>>,
    pub batch_size: Vec<usize>,
}

/// Named benchmark settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub width: usize,
    pub n_splits: usize,
    pub eval_samples: usize,
    pub mc_train: usize,
    pub init_log_noise: f64,
    pub large_datasets: Vec<String>,
    pub grids: BTreeMap<String, GridSpec>,
}

const FULL_PRESET: &str = include_str!("../presets/full.json");
const MINI_PRESET: &str = include_str!("../presets/mini.json");

impl Preset {
    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "full" => FULL_PRESET,
            "mini" => MINI_PRESET,
            other => return Err(Error::Config(format!("unknown preset {other:?} (expected full or mini)"))),
        };
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn grid(&self, method: Method) -> Result<&GridSpec> {
        self.grids
            .get(method.grid_key())
            .ok_or_else(|| Error::Config(format!("preset {} has no grid for {method}", self.name)))
    }

    /// Grid points for `method` on `dataset` in the fixed enumeration order.
    pub fn grid_points(&self, method: Method, dataset: &str) -> Result<Vec<HyperParams>> {
        let g = self.grid(method)?;
        let epochs = match (&g.epochs_large, self.large_datasets.iter().any(|d| d == dataset)) {
            (Some(large), true) => large,
            _ => &g.epochs,
        };
        let mut out = Vec::new();
        for &omega in &g.omega {
            for &learning_rate in &g.learning_rate {
                for &e in epochs {
                    for &batch_size in &g.batch_size {
                        out.push(HyperParams { omega, learning_rate, epochs: e, batch_size });
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config(format!("empty grid for {method}")));
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub omega: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

/// Everything needed to reproduce one fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: MethodSpec,
    pub width: usize,
    pub prior: PriorKind,
    pub hyper: HyperParams,
    pub mc_train: usize,
    pub eval_samples: usize,
    pub init_log_noise: f64,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        match self.method.method {
            Method::Hmc | Method::Blr => {
                return Err(Error::Config(format!("{} is only available on the 1D task", self.method.method)))
            }
            Method::LaplaceSampled | Method::LaplaceLinearised if self.method.activation == Activation::Relu => {
                log::warn!("Laplace with ReLU activations linearises a non-smooth network");
            }
            _ => {}
        }
        if self.width == 0 || self.eval_samples == 0 || self.mc_train == 0 {
            return Err(Error::Config("width, eval_samples and mc_train must be positive".into()));
        }
        Ok(())
    }

    /// Short content hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        sha256_hex(json.as_bytes())[..16].to_string()
    }

    fn train_config(&self, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: Some(self.hyper.batch_size),
            learning_rate: self.hyper.learning_rate,
            mc_samples: self.mc_train,
            seed: self.seed,
        }
    }
}

/// A trained model ready for prediction (in normalised units).
#[derive(Clone, Debug)]
pub enum Fitted {
    Point { theta: Vec<f64>, lik: LikelihoodSpec },
    MeanField { q: MeanFieldPosterior, lik: LikelihoodSpec },
    FullCov { q: FullCovPosterior, lik: LikelihoodSpec },
    Laplace { post: LaplacePosterior, linearised: bool },
    Samples { samples: Vec<Vec<f64>>, lik: LikelihoodSpec },
}

/// Mean per-point log-likelihood and RMSE.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub ll: f64,
    pub rmse: f64,
}

/// Scores a fitted model on every row of `data` (scalar targets).
pub fn evaluate(fitted: &Fitted, arch: &Architecture, data: &Dataset, eval_samples: usize, rng: &mut RngStream) -> Result<Metrics> {
    let ys = data.y.as_slice();
    let (lls, means): (Vec<f64>, Vec<f64>) = match fitted {
        Fitted::Laplace { post, linearised: true } => {
            let preds = laplace::linearised_predictive_batch(post, arch, &data.x)?;
            preds.iter().zip(ys).map(|(p, &y)| (test_ll_gaussian(p, y), p.mean)).unzip()
        }
        _ => {
            let (samples, noise_var): (Vec<Vec<f64>>, f64) = match fitted {
                Fitted::Point { theta, lik } => (vec![theta.clone()], lik.noise_var()),
                Fitted::Samples { samples, lik } => (samples.clone(), lik.noise_var()),
                Fitted::MeanField { q, lik } => ((0..eval_samples).map(|_| q.sample(rng)).collect(), lik.noise_var()),
                Fitted::FullCov { q, lik } => ((0..eval_samples).map(|_| q.sample(rng)).collect(), lik.noise_var()),
                Fitted::Laplace { post, .. } => {
                    ((0..eval_samples).map(|_| laplace::laplace_sample(post, rng).0).collect(), post.noise_var)
                }
            };
            let preds = analysis::mc_predictive(arch, &samples, noise_var, &data.x)?;
            preds.iter().zip(ys).map(|(p, &y)| (test_ll_mixture(p, y), p.mean())).unzip()
        }
    };
    let n = ys.len() as f64;
    let ll = lls.iter().sum::<f64>() / n;
    let rmse = (means.iter().zip(ys).map(|(m, y)| (m - y).powi(2)).sum::<f64>() / n).sqrt();
    Ok(Metrics { ll, rmse })
}

/// Trains `cfg` on `train` for the largest of `epochs`, returning a fitted
/// model at each requested epoch count (ascending).
pub fn train_snapshots(cfg: &ExperimentConfig, train: &Dataset, epochs: &[usize]) -> Result<Vec<(usize, Fitted)>> {
    cfg.validate()?;
    let mut wanted: Vec<usize> = epochs.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    let max = *wanted.last().ok_or_else(|| Error::Config("no epoch counts".into()))?;
    let arch = cfg.method.architecture(train.input_dim(), cfg.width);
    let prior = cfg.prior.build(&arch, cfg.hyper.omega);
    let lik = LikelihoodSpec::trainable(cfg.init_log_noise);
    let tc = cfg.train_config(max);
    let mut out = Vec::new();
    match cfg.method.method {
        Method::Map | Method::LaplaceSampled | Method::LaplaceLinearised => {
            let mut snaps = Vec::new();
            laplace::train_map_from(&arch, train, &prior, &lik, &tc, laplace::map_init(&arch, cfg.seed), &mut |ev| {
                if let Some(e) = ev.epoch_done.filter(|e| wanted.contains(e)) {
                    snaps.push((e, ev.theta.to_vec(), *ev.likelihood));
                }
            })?;
            for (e, theta, lik) in snaps {
                let fitted = if cfg.method.method == Method::Map {
                    Fitted::Point { theta, lik }
                } else {
                    let post = laplace::gauss_newton_precision(&arch, &theta, train, &prior, lik.noise_var())?;
                    Fitted::Laplace { post, linearised: cfg.method.method == Method::LaplaceLinearised }
                };
                out.push((e, fitted));
            }
        }
        Method::Mfvi => {
            let q0 = MeanFieldPosterior::init_for(&arch, 1e-5, &mut RngStream::new(cfg.seed));
            vi::train_mfvi_from(&arch, train, &prior, &lik, &tc, q0, &mut |ev| {
                if let Some(e) = ev.epoch_done.filter(|e| wanted.contains(e)) {
                    out.push((e, Fitted::MeanField { q: ev.posterior.clone(), lik: *ev.likelihood }));
                }
            })?;
        }
        Method::Fcvi => {
            let init = FcviInit::uci();
            let q0 = FullCovPosterior::init_for(&arch, init.mean_std, init.log_diag, &mut RngStream::new(cfg.seed));
            vi::train_fcvi_from(&arch, train, &prior, &lik, &tc, q0, &mut |ev| {
                if let Some(e) = ev.epoch_done.filter(|e| wanted.contains(e)) {
                    out.push((e, Fitted::FullCov { q: ev.posterior.clone(), lik: *ev.likelihood }));
                }
            })?;
        }
        Method::Hmc | Method::Blr => unreachable!("rejected by validate"),
    }
    Ok(out)
}

/// Tolerance within which validation scores count as tied.
pub const TIE_TOL: f64 = 1e-9;

/// Index of the best score; ties go to the earliest grid point.
pub fn select_winner(scores: &[f64]) -> Option<usize> {
    let best = scores.iter().copied().filter(|s| s.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return None;
    }
    scores.iter().position(|&s| s.is_finite() && s >= best - TIE_TOL)
}

/// One benchmark row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub dataset_hash: String,
    pub split: String,
    pub method: String,
    pub config_hash: String,
    pub seed: u64,
    pub hyper: Option<HyperParams>,
    pub val_ll: Option<f64>,
    /// Mean test log-likelihood in original target units.
    pub test_ll: Option<f64>,
    /// Test RMSE in original target units.
    pub test_rmse: Option<f64>,
    pub diagnostics: BTreeMap<String, f64>,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl RunRecord {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Deterministic job seed from its identity.
pub fn job_seed(base: u64, dataset: &str, split: &str, label: &str) -> u64 {
    let h = sha256_hex(format!("{base}/{dataset}/{split}/{label}").as_bytes());
    u64::from_str_radix(&h[..16], 16).expect("hex")
}

/// Options shared by all jobs of a benchmark run.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchOptions {
    pub preset: Preset,
    pub seed: u64,
    pub record_time: bool,
}

fn base_config(spec: MethodSpec, preset: &Preset, hyper: HyperParams, seed: u64) -> Result<ExperimentConfig> {
    Ok(ExperimentConfig {
        method: spec,
        width: preset.width,
        prior: preset.grid(spec.method)?.prior,
        hyper,
        mc_train: preset.mc_train,
        eval_samples: preset.eval_samples,
        init_log_noise: preset.init_log_noise,
        seed,
    })
}

/// Grid search, refit and test evaluation for one split.
pub fn run_split(data: &Dataset, split: &SplitManifest, spec: MethodSpec, opts: &BenchOptions) -> RunRecord {
    let started = Instant::now();
    let split_id = split.id();
    let label = spec.label();
    let seed = job_seed(opts.seed, &data.name, &split_id, &label);
    let mut record = RunRecord {
        dataset: data.name.clone(),
        dataset_hash: data.hash(),
        split: split_id,
        method: label,
        config_hash: String::new(),
        seed,
        hyper: None,
        val_ll: None,
        test_ll: None,
        test_rmse: None,
        diagnostics: BTreeMap::new(),
        status: "ok".into(),
        wall_time_s: None,
    };
    if let Err(e) = run_split_inner(data, split, spec, opts, seed, &mut record) {
        log::warn!("{} {} {} failed: {e}", record.dataset, record.split, record.method);
        record.status = format!("failed: {e}");
    }
    if opts.record_time {
        record.wall_time_s = Some(started.elapsed().as_secs_f64());
    }
    record
}

fn run_split_inner(
    data: &Dataset,
    split: &SplitManifest,
    spec: MethodSpec,
    opts: &BenchOptions,
    seed: u64,
    record: &mut RunRecord,
) -> Result<()> {
    if data.output_dim() != 1 {
        return Err(Error::ArchitectureUnsupported("benchmark expects a single target".into()));
    }
    split.validate(data.len())?;
    let train_val = split.train_val();
    let norm = Normalizer::fit(data, &train_val)?;
    let train = norm.apply(data, &split.train);
    let val = norm.apply(data, &split.val);
    let full = norm.apply(data, &train_val);
    let test = norm.apply(data, &split.test);
    let arch = spec.architecture(data.input_dim(), opts.preset.width);
    let points = opts.preset.grid_points(spec.method, &data.name)?;

    let winner = if points.len() == 1 || split.val.is_empty() {
        points[0]
    } else {
        // group by everything except epochs, which come from snapshots
        let mut groups: Vec<(HyperParams, Vec<usize>)> = Vec::new();
        for p in &points {
            let key = HyperParams { epochs: 0, ..*p };
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, e)) => e.push(p.epochs),
                None => groups.push((key, vec![p.epochs])),
            }
        }
        let results = par::map(&groups, |(key, epochs)| -> Result<Vec<(usize, f64)>> {
            let cfg = base_config(spec, &opts.preset, *key, seed)?;
            let snaps = train_snapshots(&cfg, &train, epochs)?;
            let mut rng = RngStream::substream(seed, 2);
            snaps.iter().map(|(e, f)| Ok((*e, evaluate(f, &arch, &val, cfg.eval_samples, &mut rng)?.ll))).collect()
        });
        let scores: Vec<f64> = points
            .iter()
            .map(|p| {
                let key = HyperParams { epochs: 0, ..*p };
                let gi = groups.iter().position(|(k, _)| *k == key).expect("grouped");
                match &results[gi] {
                    Ok(v) => v.iter().find(|(e, _)| *e == p.epochs).map_or(f64::NEG_INFINITY, |(_, s)| *s),
                    Err(_) => f64::NEG_INFINITY,
                }
            })
            .collect();
        let w = select_winner(&scores).ok_or_else(|| match results.into_iter().find_map(|r| r.err()) {
            Some(e) => e,
            None => Error::Config("every grid point produced a non-finite validation score".into()),
        })?;
        record.val_ll = Some(scores[w]);
        points[w]
    };

    let cfg = base_config(spec, &opts.preset, winner, seed)?;
    record.config_hash = cfg.hash();
    record.hyper = Some(winner);
    let (_, fitted) = train_snapshots(&cfg, &full, &[winner.epochs])?.pop().expect("one snapshot");
    match &fitted {
        Fitted::Point { lik, .. }
        | Fitted::MeanField { lik, .. }
        | Fitted::FullCov { lik, .. }
        | Fitted::Samples { lik, .. } => {
            record.diagnostics.insert("log_noise_var".into(), lik.log_noise_var);
        }
        Fitted::Laplace { post, .. } => {
            record.diagnostics.insert("log_noise_var".into(), post.noise_var.ln());
            record.diagnostics.insert("jitter".into(), post.precision_chol.jitter());
        }
    }
    let mut rng = RngStream::substream(seed, 3);
    let m = evaluate(&fitted, &arch, &test, cfg.eval_samples, &mut rng)?;
    if !m.ll.is_finite() {
        return Err(Error::NonFiniteLoss { iteration: winner.epochs, param_norm: f64::NAN });
    }
    record.test_ll = Some(m.ll + norm.ll_unit_correction());
    record.test_rmse = Some(m.rmse * norm.y_std[0]);
    Ok(())
}

/// Runs every (dataset, split, method) job and returns records sorted by
/// (dataset, method, split).
pub fn run_bench(jobs: &[(Dataset, Vec<SplitManifest>)], specs: &[MethodSpec], opts: &BenchOptions) -> Vec<RunRecord> {
    let mut list = Vec::new();
    for (di, (_, splits)) in jobs.iter().enumerate() {
        for si in 0..splits.len() {
            for spec in specs {
                list.push((di, si, *spec));
            }
        }
    }
    let mut records = par::map(&list, |&(di, si, spec)| {
        let (data, splits) = &jobs[di];
        let r = run_split(data, &splits[si], spec, opts);
        log::info!("{} {} {}: test ll {:?}", r.dataset, r.split, r.method, r.test_ll);
        r
    });
    records.sort_by(|a, b| (&a.dataset, &a.method, split_order(&a.split)).cmp(&(&b.dataset, &b.method, split_order(&b.split))));
    records
}

fn split_order(id: &str) -> (String, u64) {
    match id.rsplit_once('-') {
        Some((k, n)) => (k.to_string(), n.parse().unwrap_or(u64::MAX)),
        None => (id.to_string(), 0),
    }
}

/// Mean and standard error over the successful splits of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub dataset: String,
    pub n_ok: usize,
    pub n_failed: usize,
    pub ll_mean: f64,
    pub ll_se: f64,
    pub rmse_mean: f64,
    pub rmse_se: f64,
}

pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

pub fn summarise(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(String, String), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.method.clone(), r.dataset.clone())).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((method, dataset), rs)| {
            let ok: Vec<&&RunRecord> = rs.iter().filter(|r| r.ok()).collect();
            let lls: Vec<f64> = ok.iter().filter_map(|r| r.test_ll).collect();
            let rmses: Vec<f64> = ok.iter().filter_map(|r| r.test_rmse).collect();
            let (ll_mean, ll_se) = mean_se(&lls);
            let (rmse_mean, rmse_se) = mean_se(&rmses);
            SummaryRow { method, dataset, n_ok: ok.len(), n_failed: rs.len() - ok.len(), ll_mean, ll_se, rmse_mean, rmse_se }
        })
        .collect()
}

/// Table layout: one row per method, one column per dataset, `mean ± se` cells.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut datasets: Vec<&str> = rows.iter().map(|r| r.dataset.as_str()).collect();
    datasets.sort_unstable();
    datasets.dedup();
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["method"];
    header.extend(&datasets);
    w.write_record(&header).expect("in-memory write");
    for m in methods {
        let mut line = vec![m.to_string()];
        for d in &datasets {
            let cell = rows
                .iter()
                .find(|r| r.method == m && r.dataset == *d)
                .filter(|r| r.n_ok > 0)
                .map(|r| format!("{:.2} ± {:.2}", r.ll_mean, r.ll_se))
                .unwrap_or_else(|| "failed".into());
            line.push(cell);
        }
        w.write_record(&line).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn write_jsonl(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RunRecord>> {
    std::fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
