use std::time::Instant;
use retroseq::model::tensor::gemm_nn;

fn main() {
    let (m, k, n) = (25usize, 64usize, 64usize);
    let a: Vec<f64> = (0..m*k).map(|i| (i as f64 * 0.001).sin()).collect();
    let b: Vec<f64> = (0..k*n).map(|i| (i as f64 * 0.002).cos()).collect();
    let mut out = vec![0.0f64; m*n];
    let reps = 200_000;
    let t = Instant::now();
    for _ in 0..reps {
        out.iter_mut().for_each(|x| *x = 0.0);
        gemm_nn(m, k, n, &a, &b, &mut out);
        std::hint::black_box(&out);
    }
    let dt = t.elapsed().as_secs_f64();
    let flops = 2.0 * (m*k*n) as f64 * reps as f64;
    println!("gemm {}x{}x{}: {:.2} GFLOP/s single-thread", m, k, n, flops / dt / 1e9);
}
