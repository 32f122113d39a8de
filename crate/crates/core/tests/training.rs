use dpe_core::pipeline::{build, Artifacts, BuildConfig};
use dpe_core::seeds::SplitConfig;
use dpe_core::synthetic::{generate, SynthConfig};
use dpe_core::trainer::{ObjectiveProbe, StepReport, TrainConfig, Trainer};

fn artifacts(seed: u64) -> Artifacts {
    let mut c = generate(&SynthConfig { seed, context_sentences: 1500, ..Default::default() });
    let cfg = BuildConfig { split: SplitConfig { warm_frac: 0.2, cold_frac: 0.2 }, split_seed: seed, ..Default::default() };
    build(&mut c.sentences, &c.kb, &cfg).unwrap()
}

/// The summed objective on a fixed sample trends upward: the last of ten
/// checkpoints beats the first, and the later half beats the earlier half on average.
#[test]
fn fixed_sample_objective_trends_upward() {
    for seed in 0..3 {
        let art = artifacts(seed);
        let cfg = TrainConfig { iterations: 100_000, dim: 32, hash_bits: 12, rng_seed: seed, log_every: 0, ..Default::default() };
        let patterns = art.training_patterns(&cfg).unwrap();
        let trainer = Trainer::new(&art.graph, &art.split.train, &patterns, &cfg).unwrap();
        let model = trainer.init_model(art.vocab.content_hash());
        let probe = ObjectiveProbe::new(&trainer, 2000, 99);
        let mut values = vec![probe.evaluate(&model)];
        let every = cfg.iterations / 10;
        {
            let m = &model;
            let values = &mut values;
            let mut obs = |r: &StepReport| {
                if (r.iteration + 1).is_multiple_of(every) {
                    values.push(probe.evaluate(m));
                }
            };
            trainer.run(&model, Some(&mut obs)).unwrap();
        }
        assert_eq!(values.len(), 11);
        let first = values[0];
        let last = values[10];
        assert!(last > first, "seed {seed}: {values:?}");
        let early: f64 = values[1..6].iter().sum::<f64>() / 5.0;
        let late: f64 = values[6..].iter().sum::<f64>() / 5.0;
        assert!(late > early, "seed {seed}: {values:?}");
    }
}

#[test]
fn disabling_patterns_drops_the_classifier() {
    let art = artifacts(1);
    let cfg = TrainConfig { iterations: 1000, dim: 8, use_patterns: false, log_every: 0, ..Default::default() };
    let model = art.train(&cfg).unwrap();
    assert!(model.classifier.is_none());
    assert!(model.all_finite());
}
