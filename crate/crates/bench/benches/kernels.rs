use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use fermikac_core::rng::replica_rng;
use fermikac_core::uu::{fermi_dirac_normalized, CollisionContext, SphereQuadrature, VelocityGrid};
use fermikac_core::{
    collide, sample_conditioned_product, sample_omega, CrossSectionSpec, OneParticleDensity,
    SimConfig, Vec3,
};

fn bench_collide(c: &mut Criterion) {
    let mut rng = replica_rng(1, 0);
    let omegas: Vec<Vec3> = (0..1024).map(|_| sample_omega(&mut rng)).collect();
    let (a, b) = (Vec3::new(0.3, -0.2, 0.1), Vec3::new(-0.5, 0.4, 0.9));
    c.bench_function("collide", |bench| {
        let mut k = 0;
        bench.iter(|| {
            k = (k + 1) & 1023;
            collide(std::hint::black_box(a), std::hint::black_box(b), omegas[k])
        })
    });
}

fn bench_advance(c: &mut Criterion) {
    let f_in = OneParticleDensity::truncated_maxwellian(1.0, 4.0).unwrap();
    let cfg = SimConfig {
        n_particles: 2000,
        alpha: 0.2,
        t_final: 0.1,
        seed: 1,
        snapshot_times: vec![],
        kernel: CrossSectionSpec::smooth_ramp(4.0, 1.0),
    };
    let mut rng = replica_rng(1, 1);
    let start = sample_conditioned_product(&f_in, &cfg, &mut rng, None).unwrap();
    c.bench_function("advance N=2000 t=0.1", |bench| {
        bench.iter_batched(
            || start.clone(),
            |mut e| {
                e.advance(&cfg.kernel, cfg.t_final, &mut rng);
                e
            },
            BatchSize::SmallInput,
        )
    });
}

fn bench_collision_operator(c: &mut Criterion) {
    let mut group = c.benchmark_group("collision_operator");
    group.sample_size(10);
    for n in [11, 21] {
        let grid = VelocityGrid::new(n, 5.0).unwrap();
        let ctx = CollisionContext::new(
            grid,
            CrossSectionSpec::smooth_ramp(4.0, 1.0),
            SphereQuadrature::with_nodes(32).unwrap(),
        )
        .unwrap();
        let (f, _) = fermi_dirac_normalized(0.2, 1.0, grid).unwrap();
        group.bench_function(format!("n={n}"), |bench| {
            bench.iter(|| ctx.collision_operator(&f).unwrap())
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_collide,
    bench_advance,
    bench_collision_operator
);
criterion_main!(benches);
