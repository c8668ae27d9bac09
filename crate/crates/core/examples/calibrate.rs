use retroseq::dataset::{synth_generate, SynthConfig};
use retroseq::trainer::{train_single, ScheduleSpec, Strategy, TrainRunConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let out: String = args[1].clone();
    let iters: u64 = args[2].parse().unwrap();
    let peak: f64 = args[3].parse().unwrap();
    let pool: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(96);

    let mut synth = SynthConfig::default();
    synth.fragment_pool_size = pool;
    let (target, _) = synth_generate(&synth).unwrap();

    let mut run = TrainRunConfig::new(Strategy::Single, std::path::Path::new(&out));
    run.total_iters = iters;
    run.val_interval = 200;
    run.test_eval_interval = Some(1000);
    run.test_eval_beam = 20;
    run.seed = 1;
    run.schedule = ScheduleSpec { peak_lr: peak, min_lr: 1e-5, warmup_steps: None, cycle_period: None };
    let t = std::time::Instant::now();
    let outcome = train_single(&run, &target).unwrap();
    println!("done {:?} best_iter={} best_ppl={:.4}", t.elapsed(), outcome.best_iteration, outcome.best_val_perplexity);
    for r in &outcome.curves.rows {
        if r.acc1.is_some() {
            println!("iter {:>5} ppl {:>8.4} acc1 {:.3} acc20 {:.3}", r.iteration, r.train_ppl, r.acc1.unwrap(), r.acc20.unwrap());
        }
    }
}
