use std::hint::black_box;

use chanfit::baseline::{ls_estimate, robust_lmmse_estimate, CorrelationModel, LmmseFilter, PilotSet};
use chanfit::channel::{
    apply_channel, genie_taps, generate_realization, kmh_to_ms, max_doppler, noise_variance, TdlProfile,
    DEFAULT_RMS_DELAY_SPREAD,
};
use chanfit::grid::{normalize_coordinates, random_slot, SlotConfig};
use chanfit::net::{FourierMapping, Matrix, SirenNetwork};
use chanfit::seed;
use chanfit::sirius::{estimate_slot, SiriusConfig};
use criterion::{criterion_group, criterion_main, Criterion};

fn fixture() -> (SlotConfig, TdlProfile, f64) {
    let cfg = SlotConfig::default();
    let fd = max_doppler(kmh_to_ms(100.0), cfg.carrier_frequency);
    (cfg, TdlProfile::tdl_c(DEFAULT_RMS_DELAY_SPREAD), fd)
}

fn channel(c: &mut Criterion) {
    let (cfg, profile, fd) = fixture();
    let real = generate_realization(&profile, fd, &cfg, 1).unwrap();
    let (tx, _) = random_slot(&cfg, &mut seed::rng(2)).unwrap();
    c.bench_function("generate_realization", |b| b.iter(|| generate_realization(&profile, fd, &cfg, black_box(1))));
    c.bench_function("apply_channel", |b| b.iter(|| apply_channel(&tx, &real, 20.0, &cfg, black_box(3))));
    c.bench_function("genie_taps", |b| b.iter(|| genie_taps(black_box(&real), &cfg)));
}

fn baselines(c: &mut Criterion) {
    let (cfg, profile, fd) = fixture();
    let real = generate_realization(&profile, fd, &cfg, 1).unwrap();
    let (tx, _) = random_slot(&cfg, &mut seed::rng(2)).unwrap();
    let rx = apply_channel(&tx, &real, 20.0, &cfg, 3).unwrap();
    let pilots = PilotSet::from_grid(&tx);
    let nv = noise_variance(20.0);
    c.bench_function("ls_estimate", |b| b.iter(|| ls_estimate(black_box(&rx), &pilots)));
    c.bench_function("robust_lmmse_estimate", |b| b.iter(|| robust_lmmse_estimate(black_box(&rx), &pilots, nv, &cfg)));
    let corr = CorrelationModel::genie(&profile, fd, &cfg).unwrap();
    c.bench_function("lmmse_filter_build", |b| b.iter(|| LmmseFilter::new(black_box(&corr), nv, &pilots)));
}

fn network(c: &mut Criterion) {
    let cfg = SlotConfig::default();
    let sirius = SiriusConfig::default();
    let mapping = FourierMapping::new(sirius.mapping_size, sirius.rff_scale, &mut seed::rng(0));
    let coords: Vec<_> = normalize_coordinates(&cfg).unwrap().iter().copied().collect();
    let x = mapping.map_batch(&coords);
    let mut net = SirenNetwork::new(&sirius.layer_dims(), sirius.omega_first, sirius.omega_hidden).unwrap();
    net.siren_init(0);
    let fwd = net.forward_batch(&x).unwrap();
    let upstream = Matrix::from_fn(x.rows(), 6, |r, c| ((r + c) % 7) as f64 * 1e-3);
    let mut group = c.benchmark_group("network_full_grid");
    group.sample_size(20);
    group.bench_function("forward", |b| b.iter(|| net.forward_batch(black_box(&x))));
    group.bench_function("backward", |b| b.iter(|| net.backward(&x, &fwd, black_box(&upstream))));
    group.finish();
}

fn sirius_slot(c: &mut Criterion) {
    let (cfg, profile, fd) = fixture();
    let real = generate_realization(&profile, fd, &cfg, 1).unwrap();
    let (tx, _) = random_slot(&cfg, &mut seed::rng(2)).unwrap();
    let rx = apply_channel(&tx, &real, 20.0, &cfg, 3).unwrap();
    let pilots = PilotSet::from_grid(&tx);
    // shortened schedule; full cost scales linearly with the step count
    let short = SiriusConfig { steps_per_iter: vec![15, 5], ..SiriusConfig::default() };
    let mut group = c.benchmark_group("sirius");
    group.sample_size(10);
    group.bench_function("slot_20_steps", |b| b.iter(|| estimate_slot(black_box(&rx), &pilots, &short)));
    group.finish();
}

criterion_group!(benches, channel, baselines, network, sirius_slot);
criterion_main!(benches);
