use std::time::Instant;
use retroseq::dataset::{synth_generate, SynthConfig};
use retroseq::model::{init_params, loss_and_grad, ModelConfig, SamplePair, Vocabulary};
use retroseq::trainer::{encode_samples, plan_batches, DataRole};

fn bench(cfg: &ModelConfig, batch: &[SamplePair], label: &str) {
    let params = init_params(cfg, 1).unwrap();
    let reps = 40;
    let t = Instant::now();
    for _ in 0..reps { std::hint::black_box(loss_and_grad(&params, cfg, batch, None).unwrap()); }
    println!("{label:<28} {:.1} ms", t.elapsed().as_secs_f64()*1000.0/reps as f64);
}

fn main() {
    let synth = SynthConfig::default();
    let (target, _) = synth_generate(&synth).unwrap();
    let mut pairs: Vec<(&str, &str)> = vec![];
    for s in &target.train { pairs.push((s.product.as_str(), s.reactants.as_str())); }
    let vocab = Vocabulary::from_text_pairs(pairs).unwrap();
    let base = ModelConfig::desk_scale(vocab.size());
    let tagged: Vec<_> = target.train.iter().map(|s| (DataRole::Target, s.clone())).collect();
    let encoded = encode_samples(&tagged, &vocab, base.max_seq_len).unwrap();
    let batches = plan_batches(&encoded.pairs, 1024);
    let batch: Vec<SamplePair> = batches[batches.len()/2].iter().map(|&i| encoded.pairs[i].1.clone()).collect();

    bench(&base, &batch, "base (2L d64 h4 f128)");
    let mut c = base.clone(); c.ffn_dim = 64;
    bench(&c, &batch, "ffn 64");
    let mut c = base.clone(); c.num_layers = 1;
    bench(&c, &batch, "1 layer");
    let mut c = base.clone(); c.num_heads = 1;
    bench(&c, &batch, "1 head");
    let mut c = base.clone(); c.model_dim = 32; c.ffn_dim = 64;
    bench(&c, &batch, "d32 f64");
}
