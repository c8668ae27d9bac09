use std::time::Instant;
use retroseq::dataset::{synth_generate, SynthConfig};
use retroseq::model::{init_params, loss_and_grad, batch_loss, ModelConfig, SamplePair, Vocabulary};
use retroseq::trainer::{encode_samples, plan_batches, DataRole};

fn main() {
    let synth = SynthConfig::default();
    let (target, _) = synth_generate(&synth).unwrap();
    let mut pairs: Vec<(&str, &str)> = vec![];
    for s in &target.train { pairs.push((s.product.as_str(), s.reactants.as_str())); }
    let vocab = Vocabulary::from_text_pairs(pairs).unwrap();
    let mut cfg = ModelConfig::desk_scale(vocab.size());
    cfg.vocab_size = vocab.size();
    let tagged: Vec<_> = target.train.iter().map(|s| (DataRole::Target, s.clone())).collect();
    let encoded = encode_samples(&tagged, &vocab, cfg.max_seq_len).unwrap();
    let batches = plan_batches(&encoded.pairs, 1024);
    let batch: Vec<SamplePair> = batches[batches.len()/2].iter().map(|&i| encoded.pairs[i].1.clone()).collect();
    println!("batch samples: {}, tokens: {}", batch.len(),
        batch.iter().map(|p| p.src.len()+p.tgt.len()+2).sum::<usize>());
    let params = init_params(&cfg, 1).unwrap();

    let t = Instant::now();
    let reps = 50;
    for _ in 0..reps { std::hint::black_box(loss_and_grad(&params, &cfg, &batch, None).unwrap()); }
    println!("loss_and_grad: {:.1} ms", t.elapsed().as_secs_f64()*1000.0/reps as f64);

    let t = Instant::now();
    for _ in 0..reps { std::hint::black_box(batch_loss(&params, &cfg, &batch).unwrap()); }
    println!("batch_loss (fwd only): {:.1} ms", t.elapsed().as_secs_f64()*1000.0/reps as f64);
}
