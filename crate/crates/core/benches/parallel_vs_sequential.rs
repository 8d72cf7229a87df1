//! Throughput of the data-parallel hot paths: threshold sweeps, grid search,
//! and single-point evaluation.
//!
//! With the default `parallel` feature the same benchmarks also run inside a
//! single-threaded rayon pool, so one report compares multi-core against
//! single-core scheduling. Build with `--no-default-features` to measure the
//! plain sequential fallback (no rayon in the binary at all).

use adaptive_cascade::baselines::grid_search;
use adaptive_cascade::bo::OptimizationProblem;
use adaptive_cascade::cascade::{
    evaluate_cascade, theta_sweep, CascadeConfig, DeploymentModel, ProblemKind, TraceCache,
};
use adaptive_cascade::profile::{ImageSet, ProfileDataset};
use adaptive_cascade::space::{DesignSpace, HyperParams, LayerRanges, ParamRange, SlotSpec};
use adaptive_cascade::synthetic::{generate_synthetic, CapacityModel, SyntheticSpec};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn bench_dataset() -> ProfileDataset {
    let space = DesignSpace::new(
        vec![
            SlotSpec::Search(vec![
                LayerRanges::Conv {
                    feature_maps: ParamRange::new(32, 448, 64),
                    kernel_size: ParamRange::new(2, 5, 1),
                },
                LayerRanges::FullyConnected { units: ParamRange::new(500, 4000, 500) },
            ]),
            SlotSpec::Fixed(
                HyperParams::parse_canonical("conv1-448_k5_conv2-448_k5_fc-4000").unwrap(),
            ),
        ],
        101,
    );
    let spec = SyntheticSpec {
        class_count: 10,
        image_count: 500,
        capacity: vec![
            CapacityModel::Affine { base: 0.5, weights: vec![0.25, 0.05, 0.18] },
            CapacityModel::Constant(0.93),
        ],
        energy_per_mac_mj: 50.0,
        energy_offset_mj: 5.0,
        noise_scale: 0.25,
        seed: 99,
        platform_tag: "bench".into(),
        split_fraction: 0.8,
    };
    generate_synthetic(&spec, &space).unwrap()
}

fn workloads(c: &mut Criterion, label: &str) {
    let dataset = bench_dataset();
    let problem = ProblemKind::EnergyMin { max_degradation: 0.03 };
    let opt_problem = OptimizationProblem::new(problem, DeploymentModel::Local);
    let small = dataset.design_space.materialize(0, &[160, 3, 2000]).unwrap();
    let big = HyperParams::parse_canonical("conv1-448_k5_conv2-448_k5_fc-4000").unwrap();
    let slots = [small.clone(), big.clone()];
    let cache =
        TraceCache::build(&slots, &DeploymentModel::Local, &dataset, ImageSet::Validation)
            .unwrap();
    let config =
        CascadeConfig::new(slots.to_vec(), vec![0.42], DeploymentModel::Local);

    let mut group = c.benchmark_group(label);
    group.bench_function("evaluate_cascade_500_images", |b| {
        b.iter(|| {
            evaluate_cascade(
                black_box(&config),
                black_box(&dataset),
                ImageSet::Validation,
                &problem,
            )
            .unwrap()
        })
    });
    group.bench_function("theta_sweep_101", |b| {
        b.iter(|| theta_sweep(black_box(&cache), 101, &problem).unwrap())
    });
    group.sample_size(10);
    group.bench_function("grid_search_224_arch_x_101_theta", |b| {
        b.iter(|| grid_search(black_box(&opt_problem), black_box(&dataset), 101).unwrap())
    });
    group.finish();
}

fn benches(c: &mut Criterion) {
    #[cfg(feature = "parallel")]
    {
        workloads(c, "rayon_default_pool");
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        single.install(|| workloads(c, "rayon_single_thread"));
    }
    #[cfg(not(feature = "parallel"))]
    workloads(c, "sequential_fallback");
}

criterion_group!(parallel_vs_sequential, benches);
criterion_main!(parallel_vs_sequential);
