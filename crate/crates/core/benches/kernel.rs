use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use vcec::datagen::{generate, GenSpec};
use vcec::engine::{image_vcec, ChunkPlan};
use vcec::exec::{available_workers, Workers};
use vcec::grid::{extract_padded_chunk, Dims, Image, ValueKind};
use vcec::kernel;

fn noise(dims: Dims, kind: ValueKind) -> Image {
    let mut spec = GenSpec::uniform(dims, 7);
    spec.value_kind = kind;
    generate(&spec).unwrap()
}

fn workers() -> Vec<(&'static str, Workers)> {
    let mut out = vec![("sequential", Workers::sequential())];
    if cfg!(feature = "parallel") && available_workers() > 1 {
        out.push(("parallel", Workers::new(available_workers()).unwrap()));
    }
    out
}

fn stencil(c: &mut Criterion) {
    let dims = Dims::new(64, 128, 128).unwrap();
    let img = noise(dims, ValueKind::F32);
    let chunk = extract_padded_chunk::<f32>(&img, 0..dims.w0()).unwrap().unwrap();
    let mut g = c.benchmark_group("stencil");
    g.throughput(Throughput::Elements(dims.voxel_count() as u64));
    g.bench_function("sequential", |b| b.iter(|| kernel::chunk_changes_sequential(black_box(&chunk))));
    #[cfg(feature = "parallel")]
    if available_workers() > 1 {
        let pool = Workers::new(available_workers()).unwrap();
        g.bench_function("parallel", |b| {
            b.iter(|| pool.run(|_| kernel::chunk_changes_parallel(black_box(&chunk))))
        });
    }
    g.finish();
}

fn accumulate(c: &mut Criterion) {
    let dims = Dims::new(64, 128, 128).unwrap();
    let mut g = c.benchmark_group("accumulate");
    g.throughput(Throughput::Elements(dims.voxel_count() as u64));
    for kind in [ValueKind::U8, ValueKind::F32] {
        let img = noise(dims, kind);
        for (name, w) in workers() {
            let id = BenchmarkId::new(name, kind);
            match kind {
                ValueKind::U8 => {
                    let chunk = extract_padded_chunk::<u8>(&img, 0..dims.w0()).unwrap().unwrap();
                    let index = kernel::chunk_index(&chunk).unwrap();
                    g.bench_function(id, |b| b.iter(|| w.run(|_| kernel::accumulate_chunk(&chunk, &index))));
                }
                ValueKind::F32 => {
                    let chunk = extract_padded_chunk::<f32>(&img, 0..dims.w0()).unwrap().unwrap();
                    let index = kernel::chunk_index(&chunk).unwrap();
                    g.bench_function(id, |b| b.iter(|| w.run(|_| kernel::accumulate_chunk(&chunk, &index))));
                }
            }
        }
    }
    g.finish();
}

fn engine(c: &mut Criterion) {
    let dims = Dims::new(128, 128, 128).unwrap();
    let img = noise(dims, ValueKind::F32);
    let mut g = c.benchmark_group("engine");
    g.sample_size(10);
    g.throughput(Throughput::Elements(dims.voxel_count() as u64));
    for (name, w) in workers() {
        let plan = vcec::engine::plan_chunks(dims, ValueKind::F32, vcec::engine::ChunkTarget::Count(w.count().max(2))).unwrap();
        g.bench_function(name, |b| b.iter(|| image_vcec(&img, &plan, &w).unwrap()));
    }
    let single = ChunkPlan::single(dims);
    g.bench_function("single-chunk", |b| b.iter(|| image_vcec(&img, &single, &Workers::sequential()).unwrap()));
    g.finish();
}

criterion_group!(benches, stencil, accumulate, engine);
criterion_main!(benches);
