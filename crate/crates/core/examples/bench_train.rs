use std::time::Instant;
use retroseq::dataset::{synth_generate, SynthConfig};
use retroseq::trainer::{train_single, Strategy, TrainRunConfig};

fn main() {
    let synth = SynthConfig::default();
    let t0 = Instant::now();
    let (target, augment) = synth_generate(&synth).unwrap();
    println!("synth: {:?} target={} augment={}", t0.elapsed(), target.total_len(), augment.total_len());

    let dir = std::env::temp_dir().join("retroseq_bench");
    let mut run = TrainRunConfig::new(Strategy::Single, &dir);
    run.total_iters = 60;
    run.val_interval = 30;
    run.seed = 1;
    let t1 = Instant::now();
    let out = train_single(&run, &target).unwrap();
    let dt = t1.elapsed();
    println!("60 iters in {:?} -> {:.1} ms/iter, best ppl {:.3}", dt, dt.as_secs_f64()*1000.0/60.0, out.best_val_perplexity);
}
