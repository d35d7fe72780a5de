//! Trains the early self-attention model on the synthetic corpus with and
//! without coreference supervision and prints dev accuracy and the
//! supervised head's target mass per seed.
//!
//! cargo run --release --example synthetic_experiment -- [epochs] [seeds]

use std::time::Instant;

use bidaf_sa::data::{synth_generate, SynthConfig, Vocabulary};
use bidaf_sa::model::{Model, ModelConfig, Variant};
use bidaf_sa::supervision::{NarrativeConfig, SupervisionKind};
use bidaf_sa::train::{supervised_target_mass, train_loop, ScheduleKind, TrainConfig};

fn main() -> bidaf_sa::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let epochs = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let seeds = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(3u64);
    let train = synth_generate(2000, 11, &SynthConfig::default());
    let dev = synth_generate(400, 12, &SynthConfig::default());
    let vocab = Vocabulary::build(&train, 1);
    let base = ModelConfig {
        variant: Variant::Early,
        early_layers: 2,
        heads: 4,
        d_model: 64,
        hidden: 32,
        word_dim: 32,
        char_filters: 32,
        word_vocab: vocab.num_words(),
        char_vocab: vocab.num_chars(),
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        epochs,
        batch_size: 32,
        schedule: ScheduleKind::Noam,
        warmup: 400,
        ema_decay: 0.99,
        patience: epochs,
        ..TrainConfig::default()
    };
    let assignment = base.default_assignment(SupervisionKind::CorefAll);
    for supervised in [false, true] {
        let mut config = base.clone();
        if supervised {
            config.supervision = vec![assignment];
        }
        for seed in 1..=seeds {
            let t = Instant::now();
            let (model, store) = Model::assemble(&config, seed)?;
            let before =
                supervised_target_mass(&model, &store, &dev, &vocab, &assignment, &NarrativeConfig::default())?;
            let out = train_loop(&model, store, &train, &dev, &vocab, &tc, seed, None)?;
            let after = supervised_target_mass(
                &model,
                &out.best,
                &dev,
                &vocab,
                &assignment,
                &NarrativeConfig::default(),
            )?;
            println!(
                "supervised={supervised} seed={seed} dev={:.4} best_epoch={} mass {:.3} -> {:.3} ({:.0}s)",
                out.best_dev_accuracy,
                out.best_epoch,
                before.unwrap_or(f64::NAN),
                after.unwrap_or(f64::NAN),
                t.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
