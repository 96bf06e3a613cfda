//! Each kernel timed on a single worker and on the default pool.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ffsv_core::audio::MultichannelWaveform;
use ffsv_core::beamform::{cgmm_mvdr, CgmmConfig};
use ffsv_core::dsp::{stft, StftConfig};
use ffsv_core::nn::{BlockConfig, MicroNet, MicroNetConfig, Tensor4};
use ffsv_core::par::{current_num_threads, with_workers};
use ffsv_core::roomsim::{convolve_rir, simulate_rir};
use ffsv_core::synth::{scene_room, utterance, white_noise, Voice};
use ffsv_core::wpe::{wpe, WpeConfig};

fn pools() -> Vec<(&'static str, usize)> {
    vec![("sequential", 1), ("parallel", current_num_threads())]
}

fn voice() -> Voice {
    Voice { f0: 130.0, tract: 1.0, tilt: 1.0, breath: 0.03 }
}

fn four_channel(seconds: f64) -> MultichannelWaveform {
    let src = utterance(&voice(), seconds, 16000, 1).unwrap();
    let mut room = scene_room([6.0, 5.0, 3.0], 0.8, 1.5, 0.05, 4, 16000);
    room.max_order = 12;
    let rir = simulate_rir(&room).unwrap();
    let wet = convolve_rir(&MultichannelWaveform::mono(src, 16000).unwrap(), &rir).unwrap();
    let noise = white_noise(4, wet.len(), 0.01, 2);
    let chans = (0..4)
        .map(|c| wet.channel(c).iter().zip(&noise[c]).map(|(a, b)| a + b).collect())
        .collect();
    MultichannelWaveform::new(chans, 16000).unwrap()
}

fn bench_wpe(c: &mut Criterion) {
    let spec = stft(&four_channel(1.0), &StftConfig::default()).unwrap();
    let cfg = WpeConfig::default();
    let mut g = c.benchmark_group("wpe");
    g.sample_size(10);
    for (name, n) in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &n, |b, &n| {
            b.iter(|| with_workers(n, || black_box(wpe(&spec, &cfg).unwrap())))
        });
    }
    g.finish();
}

fn bench_cgmm(c: &mut Criterion) {
    let spec = stft(&four_channel(1.0), &StftConfig::default()).unwrap();
    let cfg = CgmmConfig::default();
    let mut g = c.benchmark_group("cgmm_mvdr");
    g.sample_size(10);
    for (name, n) in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &n, |b, &n| {
            b.iter(|| with_workers(n, || black_box(cgmm_mvdr(&spec, &cfg).unwrap())))
        });
    }
    g.finish();
}

fn bench_rir(c: &mut Criterion) {
    let mut room = scene_room([6.0, 5.0, 3.0], 0.8, 1.5, 0.05, 4, 16000);
    room.max_order = 15;
    let src = MultichannelWaveform::mono(utterance(&voice(), 2.0, 16000, 3).unwrap(), 16000).unwrap();
    let rir = simulate_rir(&room).unwrap();
    let mut g = c.benchmark_group("room");
    g.sample_size(10);
    for (name, n) in pools() {
        g.bench_with_input(BenchmarkId::new("simulate", name), &n, |b, &n| {
            b.iter(|| with_workers(n, || black_box(simulate_rir(&room).unwrap())))
        });
        g.bench_with_input(BenchmarkId::new("convolve", name), &n, |b, &n| {
            b.iter(|| with_workers(n, || black_box(convolve_rir(&src, &rir).unwrap())))
        });
    }
    g.finish();
}

fn bench_net(c: &mut Criterion) {
    let net = MicroNet::new(MicroNetConfig {
        input_frames: 200,
        input_bins: 30,
        stem_channels: 8,
        blocks: vec![
            BlockConfig { mid: 8, out: 16, stride: 1, bam: true },
            BlockConfig { mid: 16, out: 32, stride: 2, bam: true },
        ],
        bam_reduction: 4,
        embedding_dim: 64,
        num_speakers: 10,
        domain_hidden: 32,
        seed: 1,
    })
    .unwrap();
    let data = (0..8 * 200 * 30).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
    let x = Tensor4::from_vec(8, 1, 200, 30, data).unwrap();
    let mut g = c.benchmark_group("embed_forward");
    g.sample_size(10);
    for (name, n) in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(name), &n, |b, &n| {
            b.iter(|| with_workers(n, || black_box(net.embed_batch(&x).unwrap())))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_wpe, bench_cgmm, bench_rir, bench_net);
criterion_main!(benches);
