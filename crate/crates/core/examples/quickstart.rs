//! Minimal end-to-end run: generate a synthetic series, fit the ensemble on
//! an ordered split, and compare flagged validation points against the
//! generator's ground truth.

use lafad::{default_config, generate, ordered_split, run_pipeline, PipelineConfig, SplitSpec};

fn main() -> lafad::Result<()> {
    let mut synth_cfg = default_config(10.0);
    synth_cfg.seed = 7;
    synth_cfg.len = 4032;
    synth_cfg.normal_prob = 0.97;
    synth_cfg.anomaly_shift = 30.0;
    let synth = generate(&synth_cfg)?;

    let split = SplitSpec::new(0.8, 1, 7)?.fixed();
    let (train, val) = ordered_split(&synth.series, &split)?.remove(0);
    let truth = &synth.labels[train.len()..];

    let out = run_pipeline(&train, &val, &PipelineConfig::default().with_seed(7))?;
    let mut hits = 0;
    let mut misses = 0;
    let mut false_alarms = 0;
    for (verdict, &label) in out.verdicts.iter().zip(truth) {
        match (verdict.decision, label) {
            (1, 1) => hits += 1,
            (0, 1) => misses += 1,
            (1, 0) => false_alarms += 1,
            _ => {}
        }
    }
    println!(
        "{} validation points: {hits} hits, {misses} misses, {false_alarms} false alarms",
        out.verdicts.len()
    );
    Ok(())
}
