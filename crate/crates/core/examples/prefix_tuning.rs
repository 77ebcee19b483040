//! Gradient checks in every tuning mode, then prefix tuning with frozen weights.

use voxelenc::lm::{grad_check, topic_task, tune, LmConfig, OptimizerConfig, ToyLm, ToyLmParams, TuneConfig, TuneMode};

fn main() -> voxelenc::Result<()> {
    let config = LmConfig { vocab: 64, context: 32, ..LmConfig::default() };
    let params = ToyLmParams::init(config, 0)?;
    let task = topic_task(config.vocab, 64, 7, 1)?;

    for mode in [TuneMode::Full, TuneMode::Partial { proportion: 0.5 }, TuneMode::Prefix { prefix_len: 4 }] {
        let mut model = ToyLm::untuned(params.clone());
        if let TuneMode::Prefix { prefix_len } = mode {
            model.prefix = Some(voxelenc::lm::PrefixBank::random(&config, prefix_len, 9)?);
        }
        let rep = grad_check(&model, &mode, &task.examples[..2], 6, 3)?;
        println!(
            "{:<18} max rel error {:.2e} over {} entries (worst {}), frozen grad max {:.1e}",
            mode.to_string(),
            rep.max_rel_error,
            rep.n_checked, rep.worst, rep.frozen_max_abs
        );
    }

    let opt = OptimizerConfig { steps: 60, batch_size: 8, ..OptimizerConfig::default() };
    let cfg = TuneConfig::new(TuneMode::Prefix { prefix_len: 4 }, opt, 2)?;
    let out = tune(&params, &task, &cfg)?;
    let frozen = out.model.params.data.iter().zip(&params.data).all(|(a, b)| a.to_bits() == b.to_bits());
    println!(
        "prefix tuning: loss {:.4} -> {:.4}, {} trainable values, weights bit-identical: {frozen}",
        out.losses[0],
        out.losses[out.losses.len() - 1],
        out.trainable
    );
    Ok(())
}
