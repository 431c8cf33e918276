use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ultron_bench::{bending_sphere, whole_segment};
use ultron_core::codec::connectivity::{decode_connectivity, encode_connectivity};
use ultron_core::codec::stream::{decode_symbols, encode_symbols};
use ultron_core::synth::icosphere;
use ultron_core::{decode_container, encode_container, QuantizationParams};

fn containers(c: &mut Criterion) {
    let mut group = c.benchmark_group("container");
    group.sample_size(10);
    for subdivisions in [3, 5] {
        let seg = whole_segment(&bending_sphere(10, subdivisions));
        let params = QuantizationParams::default();
        let bytes = encode_container(std::slice::from_ref(&seg), &params).unwrap();
        group.throughput(Throughput::Elements((seg.vertex_count() * seg.frame_count()) as u64));
        group.bench_with_input(BenchmarkId::new("encode", subdivisions), &seg, |b, seg| {
            b.iter(|| encode_container(std::slice::from_ref(seg), &params).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("decode", subdivisions), &bytes, |b, bytes| {
            b.iter(|| decode_container(bytes).unwrap())
        });
    }
    group.finish();
}

fn connectivity(c: &mut Criterion) {
    let mesh = icosphere(5);
    let encoded = encode_connectivity(&mesh.triangles, mesh.vertex_count());
    let mut group = c.benchmark_group("connectivity");
    group.throughput(Throughput::Elements(mesh.triangle_count() as u64));
    group.bench_function("encode", |b| b.iter(|| encode_connectivity(&mesh.triangles, mesh.vertex_count())));
    group.bench_function("decode", |b| {
        b.iter(|| decode_connectivity(encoded.mode, &encoded.bytes, mesh.vertex_count()).unwrap())
    });
    group.finish();
}

fn symbols(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let symbols: Vec<u32> = (0..1_000_000)
        .map(|_| {
            let mut s = 0;
            while s < 255 && rng.gen_bool(0.8) {
                s += 1;
            }
            s
        })
        .collect();
    let bytes = encode_symbols(&symbols, 256).unwrap();
    let mut group = c.benchmark_group("rans");
    group.throughput(Throughput::Elements(symbols.len() as u64));
    group.bench_function("encode", |b| b.iter(|| encode_symbols(&symbols, 256).unwrap()));
    group.bench_function("decode", |b| b.iter(|| decode_symbols(&bytes, symbols.len(), 256).unwrap()));
    group.finish();
}

criterion_group!(benches, containers, connectivity, symbols);
criterion_main!(benches);
