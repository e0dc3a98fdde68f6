use bnn_core::data::{self, SineTask};
use bnn_core::laplace;
use bnn_core::model::{Activation, Architecture, LikelihoodSpec, PriorSpec};
use bnn_core::numerics::RngStream;
use bnn_core::par;
use bnn_core::theory::{self, TheoryConfig};
use bnn_core::vi::{self, MeanFieldPosterior};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn paths(c: &mut Criterion, name: &str, mut f: impl FnMut()) {
    let mut g = c.benchmark_group(name);
    g.sample_size(10);
    for (label, seq) in [("parallel", false), ("sequential", true)] {
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            par::force_sequential(seq);
            b.iter(&mut f);
        });
    }
    par::force_sequential(false);
    g.finish();
}

fn setup() -> (Architecture, data::Dataset, MeanFieldPosterior) {
    let task = SineTask { n_per_cluster: 250, ..SineTask::default() };
    let ds = data::synth_sine(&task, 0).unwrap();
    let arch = Architecture::new(1, vec![50], 1, Activation::Tanh).unwrap();
    let q = MeanFieldPosterior::init_for(&arch, 1e-3, &mut RngStream::new(0));
    (arch, ds, q)
}

fn bench_local_reparam(c: &mut Criterion) {
    let (arch, ds, q) = setup();
    let rows: Vec<usize> = (0..ds.len()).collect();
    let lik = LikelihoodSpec::trainable(-2.0);
    let mut rng = RngStream::new(1);
    paths(c, "local_reparam_log_lik", || {
        vi::local_reparam_log_lik(&arch, &q, &ds, &rows, 1.0, &lik, 8, &mut rng).unwrap();
    });
}

fn bench_gauss_newton(c: &mut Criterion) {
    let (arch, ds, q) = setup();
    let prior = PriorSpec::uniform(&arch, 1.0);
    paths(c, "gauss_newton_precision", || {
        laplace::gauss_newton_precision(&arch, &q.mean, &ds, &prior, 0.01).unwrap();
    });
}

fn bench_convex_suite(c: &mut Criterion) {
    let cfg = TheoryConfig { n_nets: 40, ..TheoryConfig::default() };
    paths(c, "convex_suite", || {
        theory::convex_suite(&cfg).unwrap();
    });
}

criterion_group!(benches, bench_local_reparam, bench_gauss_newton, bench_convex_suite);
criterion_main!(benches);
