use std::path::Path;

use waveletae::data::{Fragment, MultiSeries};
use waveletae::model::{ConvSpec, ModelConfig};
use waveletae::training::{train_semi_supervised, TrainConfig};

pub const CHANNELS: usize = 2;
pub const WINDOW: usize = 32;

/// Smooth two-channel signal sampled at `len` points starting at `offset`.
pub fn signal(offset: usize, len: usize) -> Vec<f64> {
    let mut data = Vec::with_capacity(CHANNELS * len);
    for c in 0..CHANNELS {
        for t in offset..offset + len {
            data.push((t as f64 * 0.2 + c as f64).sin());
        }
    }
    data
}

/// Trains a tiny semi-supervised detector for two epochs and saves it.
pub fn write_detector(path: &Path) {
    let fragments: Vec<Fragment> = (0..6)
        .map(|i| Fragment {
            values: MultiSeries::anonymous(CHANNELS, signal(i * 8, WINDOW), WINDOW).unwrap(),
            label: 0,
            origin_offset: i * 8,
        })
        .collect();
    let model = ModelConfig {
        fragment_length: WINDOW,
        levels: 1,
        conv: "3:4:2".parse::<ConvSpec>().unwrap(),
        lstm_hidden: 4,
        ..ModelConfig::new(CHANNELS)
    };
    let cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::semi_supervised(model)
    };
    let (state, _) = train_semi_supervised(&fragments, &cfg).unwrap();
    state.save(path).unwrap();
}
