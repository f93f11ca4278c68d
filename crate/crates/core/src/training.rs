//! Training loops, threshold calibration and fragment-level prediction.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Fragment, MultiSeries};
use crate::error::{ensure, Error, Result};
use crate::model::{self, container, DecodeMode, ModelConfig, WaveletAEModel};
use crate::numerics::{AdamState, Tape, Tensor};

/// Decision threshold on the classifier probability.
pub const SUPERVISED_THRESHOLD: f64 = 0.5;
/// Channels whose training standard deviation falls below this are only
/// centred, not scaled.
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    SemiSupervised,
    Supervised,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::SemiSupervised => "semi",
            TrainMode::Supervised => "supervised",
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semi" | "semi-supervised" => Ok(TrainMode::SemiSupervised),
            "supervised" | "sup" => Ok(TrainMode::Supervised),
            _ => Err(Error::Config(format!("unknown training mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    pub lr: f64,
    /// Weight of the reconstruction term in supervised training.
    pub alpha: f64,
    /// Threshold multiplier for semi-supervised detection.
    pub beta: f64,
    pub model: ModelConfig,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
}

impl TrainConfig {
    /// 16 epochs, `lr = 0.001`, `β = 1.5`.
    pub fn semi_supervised(model: ModelConfig) -> Self {
        Self {
            mode: TrainMode::SemiSupervised,
            epochs: 16,
            lr: 0.001,
            alpha: 0.5,
            beta: 1.5,
            seed: model.seed,
            model,
        }
    }

    /// 11 epochs, `lr = 0.001`, `α = 0.5`; enables the classifier head.
    pub fn supervised(model: ModelConfig) -> Self {
        Self {
            mode: TrainMode::Supervised,
            epochs: 11,
            lr: 0.001,
            alpha: 0.5,
            beta: 1.5,
            seed: model.seed,
            model: ModelConfig {
                classifier: true,
                ..model
            },
        }
    }

    pub fn for_mode(mode: TrainMode, model: ModelConfig) -> Self {
        match mode {
            TrainMode::SemiSupervised => Self::semi_supervised(model),
            TrainMode::Supervised => Self::supervised(model),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs >= 1, Config, "epochs must be at least 1");
        ensure!(
            self.lr.is_finite() && self.lr > 0.0,
            Config,
            "learning rate must be positive, got {}",
            self.lr
        );
        ensure!((0.0..=1.0).contains(&self.alpha), Config, "alpha {} outside [0, 1]", self.alpha);
        ensure!((1.0..=2.0).contains(&self.beta), Config, "beta {} outside [1, 2]", self.beta);
        if self.mode == TrainMode::Supervised {
            ensure!(
                self.model.classifier,
                Config,
                "supervised training needs the classifier head enabled"
            );
        }
        self.model.validate()
    }
}

/// `τ = β · mean(losses)`.
pub fn compute_threshold(losses: &[f64], beta: f64) -> Result<f64> {
    ensure!(!losses.is_empty(), Data, "threshold needs at least one training loss");
    ensure!((1.0..=2.0).contains(&beta), Config, "beta {beta} outside [1, 2]");
    Ok(beta * mean(losses))
}

/// Arithmetic mean with a compensated (Neumaier) sum, so short lists of
/// decimal values average without accumulated rounding.
fn mean(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &x in xs {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    (sum + comp) / xs.len() as f64
}

/// `α · loss_re + (1 − α) · loss_c`.
pub fn combined_loss(alpha: f64, loss_re: f64, loss_c: f64) -> f64 {
    alpha * loss_re + (1.0 - alpha) * loss_c
}

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Leaves data unchanged.
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    /// Fits on every sample of every fragment.
    pub fn fit(fragments: &[Fragment]) -> Result<Self> {
        ensure!(!fragments.is_empty(), Data, "cannot fit normalization on no fragments");
        let channels = fragments[0].values.channels();
        let mut sum = vec![0.0; channels];
        let mut sq = vec![0.0; channels];
        let mut n = 0usize;
        for f in fragments {
            ensure!(
                f.values.channels() == channels,
                Dimension,
                "fragments have {} and {} channels",
                channels,
                f.values.channels()
            );
            for c in 0..channels {
                for &v in f.values.channel(c) {
                    sum[c] += v;
                    sq[c] += v * v;
                }
            }
            n += f.values.len();
        }
        let n = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n - m * m).max(0.0);
                let s = var.sqrt();
                if s < STD_FLOOR {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, series: &MultiSeries) -> Result<MultiSeries> {
        ensure!(
            series.channels() == self.channels(),
            Dimension,
            "series has {} channels, normalization expects {}",
            series.channels(),
            self.channels()
        );
        let len = series.len();
        let data = series
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let c = i / len;
                (v - self.mean[c]) / self.std[c]
            })
            .collect();
        MultiSeries::new(series.channel_names().to_vec(), data, len, series.sample_period())
    }
}

/// A trained detector ready for prediction.
#[derive(Debug, Clone)]
pub struct DetectorState {
    pub mode: TrainMode,
    pub model: WaveletAEModel,
    /// `τ_anom`, present in semi-supervised mode.
    pub threshold: Option<f64>,
    pub train_loss_mean: f64,
    pub beta: f64,
    pub alpha: f64,
    pub norm: NormStats,
}

/// Mean training loss of one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
}

fn parse_f64(s: &str, key: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Format(format!("bad number `{s}` in field `{key}`")))
}

fn parse_list(s: &str, key: &str) -> Result<Vec<f64>> {
    s.split(',').map(|v| parse_f64(v, key)).collect()
}

impl DetectorState {
    pub fn channels(&self) -> usize {
        self.model.config().channels
    }

    pub fn fragment_length(&self) -> usize {
        self.model.config().fragment_length
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut fields = vec![
            ("mode".to_string(), self.mode.name().to_string()),
            ("alpha".to_string(), format!("{:?}", self.alpha)),
            ("beta".to_string(), format!("{:?}", self.beta)),
            (
                "threshold".to_string(),
                self.threshold.map_or_else(|| "none".to_string(), |t| format!("{t:?}")),
            ),
            ("train_loss_mean".to_string(), format!("{:?}", self.train_loss_mean)),
        ];
        fields.push(("norm_mean".to_string(), fmt_list(&self.norm.mean)));
        fields.push(("norm_std".to_string(), fmt_list(&self.norm.std)));
        container::encode(&self.model, &fields)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (model, fields) = container::decode(bytes)?;
        let get = |key: &str| -> Result<&str> {
            fields
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Format(format!("detector field `{key}` missing")))
        };
        let mode: TrainMode = get("mode")?.parse().map_err(|e: Error| Error::Format(e.to_string()))?;
        let threshold = match get("threshold")? {
            "none" => None,
            s => Some(parse_f64(s, "threshold")?),
        };
        let state = DetectorState {
            mode,
            threshold,
            alpha: parse_f64(get("alpha")?, "alpha")?,
            beta: parse_f64(get("beta")?, "beta")?,
            train_loss_mean: parse_f64(get("train_loss_mean")?, "train_loss_mean")?,
            norm: NormStats {
                mean: parse_list(get("norm_mean")?, "norm_mean")?,
                std: parse_list(get("norm_std")?, "norm_std")?,
            },
            model,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        ensure!(
            self.norm.mean.len() == c && self.norm.std.len() == c,
            Format,
            "normalization stats do not cover {c} channels"
        );
        ensure!(
            self.norm.std.iter().all(|s| s.is_finite() && *s > 0.0),
            Format,
            "normalization scales must be positive"
        );
        match self.mode {
            TrainMode::SemiSupervised => {
                let t = self
                    .threshold
                    .ok_or_else(|| Error::Format("semi-supervised detector without a threshold".into()))?;
                ensure!(
                    t == self.beta * self.train_loss_mean,
                    Format,
                    "threshold {t} is not beta × mean training loss"
                );
            }
            TrainMode::Supervised => ensure!(
                self.model.has_classifier(),
                Format,
                "supervised detector without a classifier head"
            ),
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Score of an already-normalized fragment: reconstruction loss in
    /// semi-supervised mode, anomaly probability in supervised mode.
    pub fn score_normalized(&self, fragment: &MultiSeries) -> Result<f64> {
        let inputs = self.model.scale_inputs(fragment, None)?;
        match self.mode {
            TrainMode::SemiSupervised => self.model.loss(&inputs, DecodeMode::Inference),
            TrainMode::Supervised => {
                let (code, _) = self.model.encode_inputs(&inputs)?;
                self.model.classify(&code)
            }
        }
    }

    /// Label for a score under this detector's decision rule.
    pub fn label_for(&self, score: f64) -> u8 {
        let cut = match self.mode {
            TrainMode::SemiSupervised => self.threshold.unwrap_or(f64::INFINITY),
            TrainMode::Supervised => SUPERVISED_THRESHOLD,
        };
        u8::from(score >= cut)
    }

    /// Normalizes a raw fragment with the stored statistics, then scores and
    /// labels it.
    pub fn predict_fragment(&self, fragment: &MultiSeries) -> Result<(u8, f64)> {
        ensure!(
            fragment.len() == self.fragment_length(),
            Dimension,
            "fragment has length {}, detector expects {}",
            fragment.len(),
            self.fragment_length()
        );
        let score = self.score_normalized(&self.norm.apply(fragment)?)?;
        Ok((self.label_for(score), score))
    }
}

fn scale_inputs(model: &WaveletAEModel, norm: &NormStats, fragments: &[Fragment]) -> Result<Vec<Vec<Tensor>>> {
    fragments
        .iter()
        .map(|f| model.scale_inputs(&norm.apply(&f.values)?, None))
        .collect()
}

fn apply_gradients(model: &mut WaveletAEModel, adam: &mut AdamState, grads: &[Vec<f64>]) -> Result<()> {
    model.zero_grad();
    for (t, g) in model.params_mut().iter_mut().zip(grads) {
        t.accumulate_grad(g)?;
    }
    adam.step(model.params_mut())
}

fn check_fragments(fragments: &[Fragment], cfg: &TrainConfig) -> Result<()> {
    ensure!(!fragments.is_empty(), Data, "training set is empty");
    for (i, f) in fragments.iter().enumerate() {
        ensure!(f.label <= 1, Data, "fragment {i} has label {}", f.label);
        ensure!(
            f.values.len() == cfg.model.fragment_length,
            Data,
            "fragment {i} has length {}, model expects {}",
            f.values.len(),
            cfg.model.fragment_length
        );
        ensure!(
            f.values.channels() == cfg.model.channels,
            Data,
            "fragment {i} has {} channels, model expects {}",
            f.values.channels(),
            cfg.model.channels
        );
    }
    Ok(())
}

fn run_epochs(
    cfg: &TrainConfig,
    n: usize,
    mut step: impl FnMut(usize, &mut AdamState) -> Result<f64>,
) -> Result<Vec<EpochRecord>> {
    let mut adam = AdamState::new(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            total += step(i, &mut adam)?;
        }
        let rec = EpochRecord {
            epoch: epoch + 1,
            mean_loss: total / n as f64,
        };
        log::info!("epoch {}/{}: mean loss {:.6}", rec.epoch, cfg.epochs, rec.mean_loss);
        log.push(rec);
    }
    Ok(log)
}

/// Trains on normal fragments only and calibrates `τ_anom` from the
/// per-fragment reconstruction losses of a final frozen pass.
pub fn train_semi_supervised(fragments: &[Fragment], cfg: &TrainConfig) -> Result<(DetectorState, Vec<EpochRecord>)> {
    ensure!(
        cfg.mode == TrainMode::SemiSupervised,
        Config,
        "config is for {} training",
        cfg.mode
    );
    cfg.validate()?;
    check_fragments(fragments, cfg)?;
    if let Some(i) = fragments.iter().position(|f| f.label != 0) {
        return Err(Error::Data(format!(
            "semi-supervised training takes normal fragments only; fragment {i} (offset {}) is anomalous",
            fragments[i].origin_offset
        )));
    }
    let mut model = model::build_model(&cfg.model)?;
    let norm = NormStats::fit(fragments)?;
    let inputs = scale_inputs(&model, &norm, fragments)?;
    let log = run_epochs(cfg, inputs.len(), |i, adam| {
        let (loss, grads) = model.loss_and_gradients(&inputs[i], DecodeMode::Training)?;
        apply_gradients(&mut model, adam, &grads)?;
        Ok(loss)
    })?;
    model.round_to_f32();
    let losses = inputs
        .iter()
        .map(|x| model.loss(x, DecodeMode::Inference))
        .collect::<Result<Vec<_>>>()?;
    let threshold = compute_threshold(&losses, cfg.beta)?;
    let state = DetectorState {
        mode: TrainMode::SemiSupervised,
        model,
        threshold: Some(threshold),
        train_loss_mean: mean(&losses),
        beta: cfg.beta,
        alpha: cfg.alpha,
        norm,
    };
    Ok((state, log))
}

/// Loss and gradients of the supervised objective for one fragment.
pub fn supervised_loss_and_gradients(
    model: &WaveletAEModel,
    inputs: &[Tensor],
    label: u8,
    alpha: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let p = model.bind(&mut tape, true);
    let vars = inputs
        .iter()
        .map(|t| tape.constant(t.shape(), t.data().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let enc = model.encode_tape(&mut tape, &p, &vars)?;
    let dec = model.decode_tape(&mut tape, &p, enc.code, Some(&enc.columns))?;
    let re = model.loss_tape(&mut tape, &vars, &dec.outputs)?;
    let prob = model.classify_tape(&mut tape, &p, enc.code)?;
    let cls = tape.bce(prob, f64::from(label))?;
    let a = tape.scale(re, alpha);
    let b = tape.scale(cls, 1.0 - alpha);
    let loss = tape.add(a, b)?;
    let grads = tape.backward(loss)?;
    let per_param = p
        .0
        .iter()
        .zip(model.params())
        .map(|(v, t)| grads.get(*v).map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    Ok((tape.scalar(loss), per_param))
}

/// Trains reconstruction and classification jointly on labeled fragments.
pub fn train_supervised(fragments: &[Fragment], cfg: &TrainConfig) -> Result<(DetectorState, Vec<EpochRecord>)> {
    ensure!(cfg.mode == TrainMode::Supervised, Config, "config is for {} training", cfg.mode);
    cfg.validate()?;
    check_fragments(fragments, cfg)?;
    ensure!(
        fragments.iter().any(|f| f.label == 1) && fragments.iter().any(|f| f.label == 0),
        Data,
        "supervised training needs both normal and anomalous fragments"
    );
    let mut model = model::build_model(&cfg.model)?;
    let norm = NormStats::fit(fragments)?;
    let inputs = scale_inputs(&model, &norm, fragments)?;
    let log = run_epochs(cfg, inputs.len(), |i, adam| {
        let (loss, grads) = supervised_loss_and_gradients(&model, &inputs[i], fragments[i].label, cfg.alpha)?;
        apply_gradients(&mut model, adam, &grads)?;
        Ok(loss)
    })?;
    model.round_to_f32();
    let losses = inputs
        .iter()
        .map(|x| model.loss(x, DecodeMode::Inference))
        .collect::<Result<Vec<_>>>()?;
    let state = DetectorState {
        mode: TrainMode::Supervised,
        model,
        threshold: None,
        train_loss_mean: mean(&losses),
        beta: cfg.beta,
        alpha: cfg.alpha,
        norm,
    };
    Ok((state, log))
}

/// Trains in whichever mode `cfg` selects.
pub fn train(fragments: &[Fragment], cfg: &TrainConfig) -> Result<(DetectorState, Vec<EpochRecord>)> {
    match cfg.mode {
        TrainMode::SemiSupervised => train_semi_supervised(fragments, cfg),
        TrainMode::Supervised => train_supervised(fragments, cfg),
    }
}

/// Predicts every fragment; returns labels and scores.
pub fn predict_all(state: &DetectorState, fragments: &[Fragment]) -> Result<(Vec<u8>, Vec<f64>)> {
    ensure!(!fragments.is_empty(), Data, "no fragments to evaluate");
    let mut labels = Vec::with_capacity(fragments.len());
    let mut scores = Vec::with_capacity(fragments.len());
    for f in fragments {
        ensure!(
            f.values.channels() == state.channels(),
            Dimension,
            "fragment has {} channels, detector expects {}",
            f.values.channels(),
            state.channels()
        );
        let (l, s) = state.predict_fragment(&f.values)?;
        labels.push(l);
        scores.push(s);
    }
    Ok((labels, scores))
}
