use euslm_core::corpus::{Corpus, Document};
use euslm_core::pretrain_data::{pack, MaskingPolicy, PackingSchedule};
use euslm_core::subword::{train_unigram, UnigramTrainerConfig};
use euslm_nn::encoder::{load_checkpoint, pretrain, save_checkpoint, Encoder, EncoderConfig, PretrainBatch, PretrainConfig};
use euslm_nn::optim::OptimizerConfig;
use euslm_nn::Graph;

fn corpus() -> Corpus {
    let docs = (0..4)
        .map(|d| Document {
            id: format!("d{d}"),
            source: "test".into(),
            paragraphs: (0..6).map(|p| format!("etxe{d} handia da eta mendi{p} txikia ere bai")).collect(),
        })
        .collect();
    Corpus::from_documents(docs).unwrap()
}

#[test]
fn checkpoint_roundtrip_is_bit_exact() {
    let c = corpus();
    let (vocab, _) = train_unigram(&c, &UnigramTrainerConfig { target_size: 60, ..Default::default() }).unwrap();
    let data = pack(&c, &vocab, &PackingSchedule::parse("32").unwrap(), &MaskingPolicy::default(), 48).unwrap();
    let examples = data.phases[0].examples.clone();
    let config = EncoderConfig { layers: 1, hidden: 16, heads: 2, intermediate: 32, max_positions: 32, ..EncoderConfig::toy(vocab.len()) };
    let mut enc = Encoder::init(config, 3).unwrap();
    let pc = PretrainConfig {
        optimizer: OptimizerConfig { learning_rate: 1e-3, warmup_steps: 2, total_steps: 12, batch_size: 8, ..Default::default() },
        seed: 3,
        checkpoint_every: 6,
    };
    let dir = tempfile::tempdir().unwrap();
    let mut saved = Vec::new();
    pretrain(&mut enc, &[examples.clone()], &pc, |e, opt, step| {
        let path = dir.path().join(format!("step{step}.ckpt"));
        save_checkpoint(&path, e, Some(opt), step, 3)?;
        saved.push((path, e.clone(), opt.clone()));
        Ok(())
    })
    .unwrap();
    assert_eq!(saved.len(), 2);

    let batch = PretrainBatch::from_examples(&examples[..8]);
    for (path, e, opt) in &saved {
        let ck = load_checkpoint(path).unwrap();
        assert_eq!(ck.encoder.config, e.config);
        assert_eq!(ck.seed, 3);
        let outputs = |enc: &Encoder| {
            let mut g = Graph::new(&enc.store);
            let out = enc.forward_pretrain(&mut g, &batch, None).unwrap();
            let bits = |n| g.value(n).data().iter().map(|x: &f64| x.to_bits()).collect::<Vec<_>>();
            (bits(out.encoder.hidden), bits(out.mlm_logits), bits(out.nsp_logits))
        };
        assert_eq!(outputs(&ck.encoder), outputs(e));
        let restored = ck.optimizer.unwrap();
        assert_eq!(restored.step, opt.step);
        for (a, b) in restored.m.iter().zip(&opt.m).chain(restored.v.iter().zip(&opt.v)) {
            assert_eq!(a, b);
        }
    }
    let final_ck = load_checkpoint(&saved[1].0).unwrap();
    assert_eq!(final_ck.step, 12);
    for (id, p) in enc.store.iter() {
        assert_eq!(final_ck.encoder.store.get(final_ck.encoder.store.id(&p.name).unwrap()), enc.store.get(id));
    }
}

#[test]
fn rejects_foreign_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk");
    std::fs::write(&path, b"not a tensor file").unwrap();
    assert!(load_checkpoint(&path).is_err());
}
