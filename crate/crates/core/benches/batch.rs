use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use broncholoc::imaging::KMeansParams;
use broncholoc::par::Execution;
use broncholoc::pipeline::{ablation_batch, detect_all, quantize_all, SequenceInput};
use broncholoc::synth::{generate_sequence, random_walk, SynthConfig};
use broncholoc::{DetectorParams, TransitionModel, TreeModel, PROBABILITY_FLOOR};

fn sequences(count: usize) -> Vec<SequenceInput> {
    let tree = TreeModel::bundled();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = SynthConfig {
        noise: 0.5,
        ..SynthConfig::default()
    };
    (0..count)
        .map(|i| {
            let walk = random_walk(&tree, 4, &mut rng).unwrap();
            let seq = generate_sequence(&tree, &walk, &cfg, i as u64).unwrap();
            SequenceInput {
                id: format!("seq{i}"),
                frames: seq.frames,
                likelihoods: seq.likelihoods,
                truth: seq.truth,
            }
        })
        .collect()
}

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn frame_batch(c: &mut Criterion) {
    let frames: Vec<_> = sequences(8).into_iter().flat_map(|s| s.frames).collect();
    let detector = DetectorParams::default();
    let kmeans = KMeansParams::default();
    let mut group = c.benchmark_group("frames");
    group.sample_size(20);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("detect", name), &exec, |b, &exec| {
            b.iter(|| detect_all(&frames, &detector, exec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("quantize", name), &exec, |b, &exec| {
            b.iter(|| quantize_all(&frames, &kmeans, exec).unwrap())
        });
    }
    group.finish();
}

fn sequence_batch(c: &mut Criterion) {
    let tree = TreeModel::bundled();
    let tm = TransitionModel::new(&tree, 1e-9, 1).unwrap();
    let inputs = sequences(32);
    let detector = DetectorParams::default();
    let mut group = c.benchmark_group("ablation");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| ablation_batch(&tree, &tm, &inputs, &detector, PROBABILITY_FLOOR, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, frame_batch, sequence_batch);
criterion_main!(benches);
