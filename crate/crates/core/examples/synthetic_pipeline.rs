//! End-to-end run on generated data: synthesize, split 60/20/20, train both
//! detectors on the first piece and report fragment metrics on the last.
//!
//! `cargo run --release --example synthetic_pipeline -- [seed] [severity]`

use std::time::Instant;

use waveletae::data::{make_fragments, split_chronological, synth_generate, FragmentSpec, SynthConfig};
use waveletae::metrics::compute_metrics;
use waveletae::model::ModelConfig;
use waveletae::training::{predict_all, train_semi_supervised, train_supervised, TrainConfig};

fn main() -> waveletae::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed"));
    let severity: f64 = args.next().map_or(SynthConfig::default().severity, |s| s.parse().expect("severity"));
    let synth = SynthConfig {
        severity,
        ..SynthConfig::default()
    };
    let (series, ranges) = synth_generate(&synth, seed)?;
    let parts = split_chronological(&series, &ranges, &[0.6, 0.2, 0.2])?;
    let spec = FragmentSpec::default();
    let train = make_fragments(&parts[0].series, &parts[0].ranges, spec)?;
    let test = make_fragments(&parts[2].series, &parts[2].ranges, spec)?;
    let count = |f: &[waveletae::data::Fragment]| f.iter().filter(|x| x.label == 1).count();
    println!(
        "train {} fragments ({} positive), test {} ({} positive)",
        train.len(),
        count(&train),
        test.len(),
        count(&test)
    );
    let labels: Vec<u8> = test.iter().map(|f| f.label).collect();

    let model = ModelConfig {
        seed,
        ..ModelConfig::new(synth.channels)
    };
    let t0 = Instant::now();
    let (sup, _) = train_supervised(&train, &TrainConfig::supervised(model.clone()))?;
    let (preds, _) = predict_all(&sup, &test)?;
    println!("supervised ({:.1?})\n{}", t0.elapsed(), compute_metrics(&preds, &labels)?);

    let normal: Vec<_> = train.iter().filter(|f| f.label == 0).cloned().collect();
    let t0 = Instant::now();
    let (semi, _) = train_semi_supervised(&normal, &TrainConfig::semi_supervised(model))?;
    let (preds, scores) = predict_all(&semi, &test)?;
    println!(
        "semi-supervised ({:.1?}), threshold {:.5}\n{}",
        t0.elapsed(),
        semi.threshold.unwrap_or(f64::NAN),
        compute_metrics(&preds, &labels)?
    );
    for (f, s) in test.iter().zip(&scores) {
        log::debug!("offset {} label {} score {s:.5}", f.origin_offset, f.label);
    }
    Ok(())
}
