//! `bnn`: experiment runner for the 1D study, the UCI benchmark, the theory
//! checks and the figures.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bnn_core::bench::{self, BenchOptions, Method, MethodSpec, Preset, RunRecord};
use bnn_core::checkpoint::Checkpoint;
use bnn_core::data::{self, Dataset, Normalizer, SplitManifest};
use bnn_core::numerics::RngStream;
use bnn_core::synth::{self, Synth1dConfig, Synth1dFit};
use bnn_core::theory::{self, TheoryConfig};
use bnn_core::{par, plot, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "bnn", version, about = "Approximate inference for small Bayesian neural networks")]
struct Cli {
    /// JSON configuration for the subcommand (1D config, theory config or preset file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Kind {
    Gap,
    Standard,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit methods on the two-cluster sine task and plot their predictive bands.
    Synth1d {
        /// Methods to run (default: all).
        #[arg(long = "method", value_delimiter = ',')]
        methods: Vec<Method>,
    },
    /// Write split manifests for a dataset.
    Splits {
        #[arg(long)]
        dataset: String,
        #[arg(long, value_enum, default_value = "gap")]
        kind: Kind,
        #[arg(long, default_value_t = 20)]
        n_splits: usize,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Grid search, refit and test scoring over splits.
    Bench {
        #[arg(long, value_delimiter = ',', required = true)]
        datasets: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<MethodSpec>,
        #[arg(long, value_enum, default_value = "gap")]
        kind: Kind,
        #[arg(long, default_value = "mini")]
        preset: String,
        /// Only the first N splits of each dataset.
        #[arg(long)]
        max_splits: Option<usize>,
        /// Only gap splits along these input dimensions.
        #[arg(long, value_delimiter = ',')]
        dims: Vec<usize>,
        /// Directory of `<dataset>/<split>.json` manifests; generated when absent.
        #[arg(long)]
        splits_dir: Option<PathBuf>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Record wall time (makes records machine-dependent).
        #[arg(long)]
        time: bool,
    },
    /// Output-variance convexity suite, BLR contrast and two-unit checks.
    CheckTheory,
    /// Bar chart and pairwise plots from benchmark records.
    Plot {
        #[arg(long, required = true)]
        records: Vec<PathBuf>,
        /// Method pairs `a:b` to compare (default: every pair).
        #[arg(long, value_delimiter = ',')]
        pairs: Vec<String>,
    },
    /// Score a saved posterior on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset name (looked up in the data directory) or CSV path.
        #[arg(long)]
        data: String,
        /// Score only the test rows of this manifest.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        par::init_threads(n);
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Synth1d { methods } => cmd_synth1d(cli, methods),
        Command::Splits { dataset, kind, n_splits, data_dir } => {
            let ds = load_dataset(dataset, data_dir.as_deref())?;
            let dir = cli.out_dir.join(&ds.name);
            for m in make_splits(&ds, *kind, *n_splits, cli.seed.unwrap_or(0))? {
                let path = dir.join(format!("{}.json", m.id()));
                m.save(&path)?;
                println!("{}", path.display());
            }
            Ok(true)
        }
        Command::Bench { datasets, methods, kind, preset, max_splits, dims, splits_dir, data_dir, time } => {
            let preset = match &cli.config {
                Some(p) => Preset::load(p)?,
                None => Preset::builtin(preset)?,
            };
            let seed = cli.seed.unwrap_or(0);
            let mut jobs = Vec::new();
            for name in datasets {
                let ds = load_dataset(name, data_dir.as_deref())?;
                let mut splits = match splits_dir {
                    Some(dir) if dir.join(&ds.name).is_dir() => load_splits(&dir.join(&ds.name), &ds)?,
                    _ => make_splits(&ds, *kind, preset.n_splits, seed)?,
                };
                if !dims.is_empty() {
                    splits.retain(|s| matches!(s.kind, data::SplitKind::Gap { d, .. } if dims.contains(&d)));
                }
                if let Some(k) = max_splits {
                    splits.truncate(*k);
                }
                jobs.push((ds, splits));
            }
            let opts = BenchOptions { preset, seed, record_time: *time };
            let records = bench::run_bench(&jobs, methods, &opts);
            fs::create_dir_all(&cli.out_dir)?;
            bench::write_jsonl(&cli.out_dir.join("records.jsonl"), &records)?;
            let csv = bench::summary_csv(&bench::summarise(&records));
            fs::write(cli.out_dir.join("summary.csv"), &csv)?;
            print!("{csv}");
            Ok(true)
        }
        Command::CheckTheory => {
            let mut cfg: TheoryConfig = read_config(cli.config.as_deref())?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let report = theory::check_theory(&cfg)?;
            fs::create_dir_all(&cli.out_dir)?;
            write_json(&cli.out_dir.join("theory.json"), &report)?;
            let c = &report.contrast;
            let data = cfg.contrast.dataset()?;
            for (name, std) in [("blr", &c.blr_std), ("mfvi-output", &c.mf_output_std)] {
                let mean = vec![0.0; c.grid.len()];
                let zeros = vec![0.0; data.len()];
                let svg = plot::band_plot(&format!("{name}: function std"), &c.grid, &mean, std, (data.x.as_slice(), &zeros));
                fs::write(cli.out_dir.join(format!("theory_{name}.svg")), svg)?;
            }
            let line = |ok: bool| if ok { "PASS" } else { "FAIL" };
            println!(
                "{} convexity: {} nets, {} probes, min eigenvalue {:.3e}, max fd rel err {:.3e}, {} violations",
                line(report.convex.passed),
                report.convex.nets,
                report.convex.probes,
                report.convex.min_eigenvalue,
                report.convex.max_fd_rel_err,
                report.convex.violations
            );
            println!(
                "{} contrast: blr ratio {:.3} ({} violations), mfvi-output ratio {:.3} ({} violations)",
                line(c.passed),
                c.blr_ratio,
                c.blr_convexity.violations,
                c.mf_output_ratio,
                c.mf_output_convexity.violations
            );
            println!(
                "{} two-unit: {} mismatches over {} points, fit residual {:?}",
                line(report.two_unit.passed),
                report.two_unit.mismatches,
                report.two_unit.points,
                report.two_unit.fit_residual
            );
            Ok(report.passed)
        }
        Command::Plot { records, pairs } => cmd_plot(cli, records, pairs),
        Command::Eval { checkpoint, data: name, split, samples, data_dir } => {
            let ck = Checkpoint::load(checkpoint)?;
            let fitted = ck.to_fitted()?;
            let ds = load_dataset(name, data_dir.as_deref())?;
            let rows: Vec<usize> = match split {
                Some(p) => SplitManifest::load_for(p, &ds)?.test,
                None => (0..ds.len()).collect(),
            };
            let norm = ck.normalizer.clone().unwrap_or_else(|| Normalizer::identity(ds.input_dim(), ds.output_dim()));
            let sub = norm.apply(&ds, &rows);
            let mut rng = RngStream::substream(cli.seed.unwrap_or(ck.seed), 3);
            let m = bench::evaluate(&fitted, &ck.architecture, &sub, *samples, &mut rng)?;
            let out = serde_json::json!({
                "dataset": ds.name,
                "rows": rows.len(),
                "test_ll": m.ll + norm.ll_unit_correction(),
                "test_rmse": m.rmse * norm.y_std[0],
            });
            println!("{out}");
            Ok(true)
        }
    }
}

fn read_config<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn data_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf).or_else(data::data_dir_from_env).unwrap_or_else(|| PathBuf::from("data"))
}

fn load_dataset(name: &str, dir: Option<&Path>) -> Result<Dataset> {
    let p = Path::new(name);
    if p.extension().is_some_and(|e| e == "csv") {
        return data::load_csv(p, &data::CsvSchema::for_csv(p)?);
    }
    let dir = data_dir(dir);
    if !dir.join(format!("{name}.csv")).exists() {
        return Err(Error::Config(format!("dataset not found: {name} (looked in {})", dir.display())));
    }
    data::load_named(&dir, name)
}

fn make_splits(ds: &Dataset, kind: Kind, n_splits: usize, seed: u64) -> Result<Vec<SplitManifest>> {
    match kind {
        Kind::Gap => data::make_gap_splits(ds, seed),
        Kind::Standard => data::make_standard_splits(ds, n_splits, 0.9, seed),
    }
}

fn load_splits(dir: &Path, ds: &Dataset) -> Result<Vec<SplitManifest>> {
    let mut paths: Vec<PathBuf> =
        fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|e| e == "json")).collect();
    paths.sort();
    let mut splits = paths.iter().map(|p| SplitManifest::load_for(p, ds)).collect::<Result<Vec<_>>>()?;
    splits.sort_by_key(|s| match s.kind {
        data::SplitKind::Gap { d, .. } => d as u64,
        data::SplitKind::Standard { seed, .. } => seed,
    });
    Ok(splits)
}

fn cmd_synth1d(cli: &Cli, methods: &[Method]) -> Result<bool> {
    let mut cfg: Synth1dConfig = read_config(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let methods: Vec<Method> = if methods.is_empty() { Method::ALL.to_vec() } else { methods.to_vec() };
    let dir = cli.out_dir.join("synth1d");
    fs::create_dir_all(&dir)?;
    let data = cfg.dataset()?;
    let arch = cfg.architecture();
    let mut summary = BTreeMap::new();
    let mut all_ok = true;
    for method in methods {
        match synth::run_method_fitted(method, &cfg) {
            Ok((res, fit)) => {
                let title = if res.uncertainty_ratio.is_nan() {
                    method.to_string()
                } else {
                    format!("{method} (gap/data std ratio {:.2})", res.uncertainty_ratio)
                };
                let svg = plot::band_plot(&title, &res.grid, &res.mean, &res.function_std, (data.x.as_slice(), data.y.as_slice()));
                fs::write(dir.join(format!("{method}.svg")), svg)?;
                write_json(&dir.join(format!("{method}.json")), &res)?;
                if let Synth1dFit::Model(f) = &fit {
                    Checkpoint::from_fitted(&arch, f, cfg.seed, &method.to_string(), None).save(&dir.join(format!("posterior_{method}.json")))?;
                }
                println!("{method}: ratio {:.3} {:?}", res.uncertainty_ratio, res.diagnostics);
                summary.insert(method.to_string(), serde_json::json!({ "uncertainty_ratio": res.uncertainty_ratio, "diagnostics": res.diagnostics }));
            }
            Err(e) => {
                eprintln!("{method}: {e}");
                all_ok = false;
                summary.insert(method.to_string(), serde_json::json!({ "error": e.to_string() }));
            }
        }
    }
    write_json(&dir.join("report.json"), &serde_json::json!({ "config": cfg, "methods": summary }))?;
    Ok(all_ok)
}

fn cmd_plot(cli: &Cli, paths: &[PathBuf], pairs: &[String]) -> Result<bool> {
    let mut records: Vec<RunRecord> = Vec::new();
    for p in paths {
        records.extend(bench::read_jsonl(p)?);
    }
    fs::create_dir_all(&cli.out_dir)?;
    let rows = bench::summarise(&records);
    let mut datasets: Vec<String> = rows.iter().map(|r| r.dataset.clone()).collect();
    datasets.dedup();
    datasets.sort();
    datasets.dedup();
    let mut methods: Vec<String> = rows.iter().map(|r| r.method.clone()).collect();
    methods.sort();
    methods.dedup();
    let series: Vec<plot::BarSeries> = methods
        .iter()
        .map(|m| plot::BarSeries {
            label: m.clone(),
            values: datasets
                .iter()
                .map(|d| {
                    rows.iter().find(|r| &r.method == m && &r.dataset == d).map_or((f64::NAN, f64::NAN), |r| (r.ll_mean, r.ll_se))
                })
                .collect(),
        })
        .collect();
    fs::write(cli.out_dir.join("test_ll.svg"), plot::bar_chart("Average test log-likelihood", &datasets, &series, "test LL"))?;

    let wanted: Vec<(String, String)> = if pairs.is_empty() {
        methods.iter().enumerate().flat_map(|(i, a)| methods[i + 1..].iter().map(move |b| (a.clone(), b.clone()))).collect()
    } else {
        pairs
            .iter()
            .map(|p| {
                p.split_once(':').map(|(a, b)| (a.to_string(), b.to_string())).ok_or_else(|| Error::Config(format!("pair {p:?} is not a:b")))
            })
            .collect::<Result<_>>()?
    };
    let by_key: BTreeMap<(&str, &str, &str), f64> = records
        .iter()
        .filter_map(|r| r.test_ll.filter(|_| r.ok()).map(|ll| ((r.method.as_str(), r.dataset.as_str(), r.split.as_str()), ll)))
        .collect();
    for (a, b) in wanted {
        for d in &datasets {
            let (mut xa, mut xb) = (Vec::new(), Vec::new());
            for ((m, ds, split), &ll) in &by_key {
                if *m == a && ds == d {
                    if let Some(&other) = by_key.get(&(b.as_str(), d.as_str(), *split)) {
                        xa.push(ll);
                        xb.push(other);
                    }
                }
            }
            if xa.is_empty() {
                continue;
            }
            let svg = plot::pairwise_plot(&format!("{d}: {a} vs {b}"), &a, &b, &xa, &xb, 10);
            let path = cli.out_dir.join(format!("pair_{d}_{a}_vs_{b}.svg"));
            fs::write(&path, svg)?;
            println!("{}", path.display());
        }
    }
    Ok(true)
}
