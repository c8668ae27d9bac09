use std::time::Instant;
use retroseq::model::tensor::{gemm_nn, gemm_tn};

fn bench_nn(m: usize, k: usize, n: usize) {
    let a: Vec<f64> = (0..m*k).map(|i| (i as f64 * 0.001).sin()).collect();
    let b: Vec<f64> = (0..k*n).map(|i| (i as f64 * 0.002).cos()).collect();
    let mut out = vec![0.0f64; m*n];
    let reps = 100_000;
    let t = Instant::now();
    for _ in 0..reps {
        out.iter_mut().for_each(|x| *x = 0.0);
        gemm_nn(m, k, n, &a, &b, &mut out);
        std::hint::black_box(&out);
    }
    let dt = t.elapsed().as_secs_f64();
    println!("gemm_nn {m}x{k}x{n}: {:.2} GFLOP/s", 2.0*(m*k*n*reps) as f64/dt/1e9);
}

fn bench_tn(m: usize, k: usize, n: usize) {
    // out[k,n] += a[m,k]^T b[m,n]
    let a: Vec<f64> = (0..m*k).map(|i| (i as f64 * 0.001).sin()).collect();
    let b: Vec<f64> = (0..m*n).map(|i| (i as f64 * 0.002).cos()).collect();
    let mut out = vec![0.0f64; k*n];
    let reps = 100_000;
    let t = Instant::now();
    for _ in 0..reps {
        out.iter_mut().for_each(|x| *x = 0.0);
        gemm_tn(m, k, n, &a, &b, &mut out);
        std::hint::black_box(&out);
    }
    let dt = t.elapsed().as_secs_f64();
    println!("gemm_tn {m}x{k}x{n}: {:.2} GFLOP/s", 2.0*(m*k*n*reps) as f64/dt/1e9);
}

fn main() {
    bench_nn(25, 64, 64);
    bench_nn(25, 64, 128);
    bench_nn(25, 128, 64);
    bench_nn(25, 64, 27);
    bench_nn(1, 64, 64);
    bench_tn(25, 64, 128);
    bench_tn(25, 128, 64);
}
