use criterion::{black_box, criterion_group, criterion_main, Criterion};
use hrrp_bench::{batch, condition, ddpm_trainer, model_space, profile, ship, wgan};
use hrrp_core::ddpm::ddpm_sample_batch;
use hrrp_core::metrics::{mse_f, neighborhood_best_match, Reference, ReferenceSet};
use hrrp_core::nn::layers::Conv1d;
use hrrp_core::nn::{ParamStore, Tape, Tensor};
use hrrp_core::rng::rng_from_seed;
use hrrp_core::simulator::{add_noise, simulate_profile};
use hrrp_core::{activation_mask, lrp_meters, AcquisitionCondition, GridSpec, LrpParams};
use rand::Rng;

fn analysis(c: &mut Criterion) {
    let params = LrpParams::default();
    let p = profile(13.0, 1);
    let q = profile(13.0, 2);
    c.bench_function("activation_mask", |b| b.iter(|| activation_mask(black_box(&p), &params).unwrap()));
    c.bench_function("lrp_meters", |b| b.iter(|| lrp_meters(black_box(&p), &params).unwrap()));
    c.bench_function("mse_f", |b| b.iter(|| mse_f(black_box(&p), &q, &params).unwrap()));
}

fn simulator(c: &mut Criterion) {
    let params = LrpParams::default();
    let hull = ship();
    let spec = GridSpec::default();
    let clean = profile(f64::INFINITY, 0);
    let cond = AcquisitionCondition::from_aspect(30.0, 13.0).unwrap();
    c.bench_function("simulate_profile", |b| b.iter(|| simulate_profile(&hull, black_box(&cond), &spec, 3, &params).unwrap()));
    c.bench_function("add_noise", |b| b.iter(|| add_noise(black_box(&clean), 13.0, 5, &params).unwrap()));
}

fn metrics(c: &mut Criterion) {
    let params = LrpParams::default();
    let pool = ReferenceSet::new((0..400u64).map(|k| Reference::new("s", condition(k), profile(13.0, k), &params).unwrap()));
    let g = profile(13.0, 1000);
    let cond = condition(17);
    c.bench_function("neighborhood_best_match", |b| {
        b.iter(|| neighborhood_best_match(black_box(&g), "s", &cond, &pool, 2.0, &params).unwrap())
    });
}

fn autodiff(c: &mut Criterion) {
    let mut store = ParamStore::default();
    let mut rng = rng_from_seed(1);
    let conv = Conv1d::same(&mut store, "c", 16, 16, 3, &mut rng);
    let x = Tensor::new(vec![32, 16, 256], (0..32 * 16 * 256).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    c.bench_function("conv1d_k3_fwd_bwd_32x16x256", |b| {
        b.iter(|| {
            let mut tape = Tape::new(&store);
            let xv = tape.constant(x.clone());
            let y = conv.forward(&mut tape, xv);
            let loss = tape.sum(y);
            black_box(tape.backward(loss));
        })
    });
}

fn models(c: &mut Criterion) {
    let data = batch(32);
    let ddpm_batch = model_space(&data);
    let mut trainer = ddpm_trainer(800);
    let mut step = 0;
    let mut group = c.benchmark_group("models");
    group.sample_size(10);
    group.bench_function("ddpm_train_step_b32", |b| {
        b.iter(|| {
            step += 1;
            trainer.train_step(&ddpm_batch, step).unwrap()
        })
    });
    let short = ddpm_trainer(50);
    let requests: Vec<_> = (0..8u64).map(|k| (condition(k), k)).collect();
    group.bench_function("ddpm_sample_8_profiles_50_steps", |b| {
        b.iter(|| ddpm_sample_batch(&short.model, &requests, 256, 1.5, &short.schedule, 1.0).unwrap())
    });
    let mut gan = wgan();
    group.bench_function("wgan_train_step_b32", |b| {
        b.iter(|| {
            step += 1;
            gan.train_step(&data, step).unwrap()
        })
    });
    let requests: Vec<_> = (0..64u64).map(|k| (condition(k), k)).collect();
    group.bench_function("wgan_sample_64_profiles", |b| b.iter(|| gan.sample_batch(&requests, 1.5).unwrap()));
    group.finish();
}

criterion_group!(benches, analysis, simulator, metrics, autodiff, models);
criterion_main!(benches);
